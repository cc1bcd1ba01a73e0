import pytest

from rfgan.archspec import ChannelPlan
from rfgan.harness import DataConfig, EvalConfig, TrainConfig


def tiny_config(name="tiny", arch="A,B,C", **kw):
    """Smallest configuration that still exercises every code path."""
    base = dict(image_size=32, steps=3, checkpoint_every=2, latent_dims=8, n_downsample=1,
                channel_plan=ChannelPlan(4, 2, 8), data=DataConfig(count=6, seed=1),
                eval=EvalConfig(count=4, seed=500, eval_size=32, n_samples=2))
    base.update(kw)
    return TrainConfig(name=name, arch_spec=arch, **base)


@pytest.fixture
def tiny():
    return tiny_config


# acceptance bookkeeping: one summary line per criterion at the end of the run
_CRITERIA: dict[int, tuple[str, str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number and title")


def pytest_runtest_logreport(report):
    marker = dict(report.user_properties).get("criterion")
    if marker is None:
        return
    n, title = marker
    detail = dict(report.user_properties).get("detail", "")
    if report.when == "call" or (report.when == "setup" and not report.passed):
        status = "PASS" if report.passed else ("SKIP" if report.skipped else "FAIL")
        if report.failed and not detail:
            crash = getattr(report.longrepr, "reprcrash", None)
            detail = crash.message.splitlines()[0][:200] if crash is not None else ""
        _CRITERIA[n] = (status, title, detail)


@pytest.fixture(autouse=True)
def _criterion_properties(request):
    marker = request.node.get_closest_marker("criterion")
    if marker is not None:
        request.node.user_properties.append(("criterion", tuple(marker.args)))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        status, title, detail = _CRITERIA[n]
        terminalreporter.write_line(f"[{status}] criterion {n}: {title}" + (f" | {detail}" if detail else ""))
