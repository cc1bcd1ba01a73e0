import itertools

import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from rfgan.archspec import (REFERENCE_MODELS, ChannelPlan, DegenerateResponse, EmptySpec, MissingFinalC,
                            NonPositiveIntermediateSize, UnknownLayerCode, empirical_receptive_field,
                            enumerate_archs, output_grid_size, parameter_count, parse_arch,
                            receptive_field)

KS = {"A": (4, 2), "B": (4, 1), "C": (1, 1), "D": (4, 3)}


def rf_backward(codes):
    """Independent oracle: grow one output pixel back through the stack."""
    size = 1
    for code in reversed(codes):
        k, s = KS[code]
        size = (size - 1) * s + k
    return size


def brute_force_archs(max_conv, lo, hi):
    out = set()

    def extend(prefix):
        if prefix:
            codes = prefix + ["C"]
            if lo <= rf_backward(codes) <= hi:
                out.add(",".join(codes))
        if len(prefix) < max_conv:
            for c in "ABD":
                extend(prefix + [c])

    extend([])
    return out


codes_strategy = st.lists(st.sampled_from("ABD"), min_size=0, max_size=6).map(lambda l: l + ["C"])


class TestParse:
    def test_unit_baseline(self):
        arch = parse_arch("A,A,A,A,C")
        assert [l.kernel for l in arch.layers] == [4, 4, 4, 4, 1]
        assert [l.stride for l in arch.layers] == [2, 2, 2, 2, 1]
        assert [l.padding for l in arch.layers] == [1, 1, 1, 1, 0]

    def test_arrow_form(self):
        assert parse_arch("A->B -> C").spec == "A,B,C"
        assert parse_arch("A → A → C").spec == "A,A,C"

    def test_single_c(self):
        arch = parse_arch("C")
        assert (arch.layers[0].kernel, arch.layers[0].stride) == (1, 1)

    @pytest.mark.parametrize("spec, err", [
        ("A,X,C", UnknownLayerCode),
        ("", EmptySpec),
        ("  ", EmptySpec),
        ("A,,C", EmptySpec),
        ("A,B", MissingFinalC),
    ])
    def test_errors(self, spec, err):
        with pytest.raises(err):
            parse_arch(spec)

    def test_default_widths(self):
        arch = parse_arch("A,A,A,A,C")
        assert [l.out_channels for l in arch.layers] == [64, 128, 256, 512, 1]
        assert [l.out_channels for l in parse_arch("B,B,C").layers] == [64, 64, 1]


class TestReceptiveField:
    @pytest.mark.parametrize("name", list(REFERENCE_MODELS))
    def test_table(self, name):
        spec, rf = REFERENCE_MODELS[name]
        assert receptive_field(parse_arch(spec)) == rf
        assert rf_backward(spec.split(",")) == rf

    def test_single_pixel(self):
        assert receptive_field("C") == 1

    @given(codes_strategy)
    def test_matches_backward_oracle(self, codes):
        assert receptive_field(",".join(codes)) == rf_backward(codes)


class TestOutputGrid:
    def test_baseline_256(self):
        assert output_grid_size("A,A,A,A,C", 256) == 16

    def test_pointwise(self):
        assert output_grid_size("C", 64) == 64

    def test_too_small(self):
        # 8 -> 4 -> 2 -> 1 -> floor((1 + 2 - 4) / 2) + 1 = 0
        with pytest.raises(NonPositiveIntermediateSize):
            output_grid_size("A,A,A,A,C", 8)

    @given(codes_strategy, st.integers(1, 300))
    def test_layerwise_recurrence(self, codes, size):
        arch = parse_arch(",".join(codes))
        expected = size
        for code in codes:
            k, s = KS[code]
            expected = (expected + 2 * (1 if k == 4 else 0) - k) // s + 1
            if expected < 1:
                with pytest.raises(NonPositiveIntermediateSize):
                    output_grid_size(arch, size)
                return
        assert output_grid_size(arch, size) == expected

    @given(st.lists(st.sampled_from("B"), max_size=5).map(lambda l: l + ["C"]), st.integers(8, 200))
    def test_stride_one_never_grows(self, codes, size):
        arch = parse_arch(",".join(codes))
        out = output_grid_size(arch, size)
        assert out <= size
        assert (out == size) == (codes == ["C"])


class TestEnumerate:
    def test_rf10_includes_models_5_to_7(self):
        specs = [a.spec for a in enumerate_archs(4, 10, 10)]
        assert {"A,A,C", "A,B,C", "B,B,B,C"} <= set(specs)
        assert set(specs) == brute_force_archs(4, 10, 10)

    def test_nothing_reaches_46_with_three_conv_layers(self):
        assert enumerate_archs(3, 46, 46) == []
        best = max(enumerate_archs(3, 1, 10_000), key=lambda a: a.receptive_field)
        assert best.receptive_field == 40
        assert "D,D,D,C" in [a.spec for a in enumerate_archs(3, 40, 40)]

    def test_single_conv_layer(self):
        assert {a.spec for a in enumerate_archs(1, 1, 100)} == {"A,C", "B,C", "D,C"}
        assert all(a.receptive_field == 4 for a in enumerate_archs(1, 1, 100))

    def test_bad_range(self):
        with pytest.raises(ValueError):
            enumerate_archs(3, 10, 5)

    def test_sorted(self):
        found = enumerate_archs(4, 1, 200)
        keys = [(a.receptive_field, a.depth, a.spec) for a in found]
        assert keys == sorted(keys)

    @pytest.mark.parametrize("k, lo, hi", [(1, 1, 5), (3, 7, 22), (4, 30, 80), (5, 46, 46)])
    def test_matches_recursive_oracle(self, k, lo, hi):
        assert {a.spec for a in enumerate_archs(k, lo, hi)} == brute_force_archs(k, lo, hi)


class TestParameterCount:
    def test_single_c(self):
        assert parameter_count("C", ChannelPlan(8, 2, 64), 3) == 4

    def test_hand_count(self):
        assert parameter_count("A,C", ChannelPlan(8, 2, 64), 3) == 392 + 9

    def test_superset_is_larger(self):
        assert parameter_count("A,A,A,A,C") > parameter_count("A,A,A,C")

    def test_matches_torch(self):
        from rfgan.nets import PatchDiscriminator

        plan = ChannelPlan(16, 2, 64)
        for spec, _ in REFERENCE_MODELS.values():
            d = PatchDiscriminator(parse_arch(spec, plan))
            assert sum(p.numel() for p in d.parameters()) == parameter_count(spec, plan, 3)

    @given(st.lists(st.sampled_from("ABD"), max_size=5), st.sampled_from("ABD"), st.integers(1, 32))
    def test_appending_a_layer_increases(self, prefix, extra, base):
        plan = ChannelPlan(base, 2, 4 * base)
        short = ",".join(prefix + ["C"])
        long = ",".join(prefix + [extra, "C"])
        assert parameter_count(long, plan) > parameter_count(short, plan)

    @given(st.lists(st.sampled_from("ABD"), min_size=1, max_size=5), st.integers(1, 32))
    def test_monotone_in_base(self, codes, base):
        spec = ",".join(codes + ["C"])
        assert (parameter_count(spec, ChannelPlan(base + 1, 2, 1024))
                >= parameter_count(spec, ChannelPlan(base, 2, 1024)))


def linear_positive_net(spec):
    layers = []
    c_in = 2
    for code in spec.split(","):
        k, s = KS[code]
        conv = torch.nn.Conv2d(c_in, 2, k, s, 1 if k == 4 else 0).double()
        torch.nn.init.constant_(conv.weight, 0.1)
        layers.append(conv)
    return torch.nn.Sequential(*layers)


class TestEmpiricalRF:
    def test_identity(self):
        assert empirical_receptive_field(lambda x: x, 16) == 1

    @pytest.mark.parametrize("name", list(REFERENCE_MODELS))
    def test_linear_positive_matches(self, name):
        spec, rf = REFERENCE_MODELS[name]
        assert empirical_receptive_field(linear_positive_net(spec), 128, channels=2) == rf

    def test_degenerate(self):
        with pytest.raises(DegenerateResponse):
            empirical_receptive_field(lambda x: torch.zeros_like(x) * x, 8)
