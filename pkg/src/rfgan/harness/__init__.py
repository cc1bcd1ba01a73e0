from .config import DataConfig, EvalConfig, TrainConfig, load_config, load_config_dir
from .evaluation import evaluate
from .plotting import emit_grid, emit_plot
from .report import ReportRow, SweepReport, load_report
from .sweep import sweep
from .training import train

__all__ = [
    "DataConfig", "EvalConfig", "TrainConfig", "load_config", "load_config_dir", "evaluate",
    "emit_grid", "emit_plot", "ReportRow", "SweepReport", "load_report", "sweep", "train",
]
