"""Objective, optimization loop, telemetry and ablations."""
from .ablation import AblationReport, AblationRun, read_grid, run_ablation
from .losses import LossBreakdown, detailed_kl_gain, kl_total, recon_loss, total_loss
from .schedule import lr_schedule
from .telemetry import TelemetryRecord, TelemetryWriter, read_telemetry
from .trainer import Batch, Trainer, apply_scheduled_step, build_optimizer, clip_gradients, compute_loss, make_batch

__all__ = [
    "AblationReport",
    "AblationRun",
    "Batch",
    "LossBreakdown",
    "TelemetryRecord",
    "TelemetryWriter",
    "Trainer",
    "apply_scheduled_step",
    "build_optimizer",
    "clip_gradients",
    "compute_loss",
    "detailed_kl_gain",
    "kl_total",
    "lr_schedule",
    "make_batch",
    "read_grid",
    "read_telemetry",
    "recon_loss",
    "run_ablation",
    "total_loss",
]
