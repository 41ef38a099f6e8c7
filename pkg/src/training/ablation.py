"""
Ablation harness: train a grid of named config deltas with shared seeds and
write side-by-side telemetry, heatmaps and a comparison summary.

Grid file (YAML):

    seeds: [0, 1, 2]          # optional; defaults to ablation.seeds
    runs:
      - name: no_gain
        overrides: {loss.lam: 0}
      - name: full
        overrides: {}
"""
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import pandas as pd
import yaml
from pydantic import BaseModel, Field, ValidationError

from ..data.schemas import Corpus
from ..errors import ConfigurationError, UsageError
from ..utils.config import TrainConfig, merge_config
from ..utils.logging import log_trace_event, setup_logger
from .trainer import Trainer

logger = setup_logger(__name__)

PathLike = Union[str, Path]

SUMMARY_NAME = "summary.csv"
MEDIAN_NAME = "summary_median.csv"
METRICS = ["recon", "kl_total", "neg_elbo", "speed_mse", "gain", "total"]


class AblationRun(BaseModel):
    """One named configuration delta."""
    name: str = Field(description="Directory-safe run name")
    overrides: Dict[str, Any] = Field(default_factory=dict, description="Dotted config keys")


class AblationGrid(BaseModel):
    runs: List[AblationRun] = Field(default_factory=list)
    seeds: Optional[List[int]] = None


@dataclass
class AblationReport:
    """Per-seed rows, per-run medians and where they were written."""
    rows: pd.DataFrame
    medians: pd.DataFrame
    seeds: List[int]
    summary_path: Optional[Path] = None
    median_path: Optional[Path] = None


def read_grid(path: PathLike) -> AblationGrid:
    """Parse a grid file; a bare mapping of name → overrides is accepted too."""
    path = Path(path)
    if not path.exists():
        raise UsageError(f"grid file not found: {path}")
    try:
        doc = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except yaml.YAMLError as e:
        raise ConfigurationError(f"{path}: invalid YAML: {e}")
    if isinstance(doc, dict) and "runs" not in doc and "seeds" not in doc:
        doc = {"runs": [{"name": k, "overrides": v or {}} for k, v in doc.items()]}
    try:
        return AblationGrid.model_validate(doc)
    except ValidationError as e:
        raise ConfigurationError(f"{path}: malformed grid: {e}")


def expand_beta_sweep(runs: List[AblationRun], beta_sweep: List[float]) -> List[AblationRun]:
    """Append one run per β value when no run already sets loss.beta."""
    if not beta_sweep or any("loss.beta" in r.overrides for r in runs):
        return list(runs)
    return list(runs) + [AblationRun(name=f"beta_{b:g}", overrides={"loss.beta": b}) for b in beta_sweep]


def run_ablation(
    base: TrainConfig,
    runs: List[AblationRun],
    corpus: Corpus,
    out_dir: Optional[PathLike] = None,
    seeds: Optional[List[int]] = None,
    total_steps: Optional[int] = None,
) -> AblationReport:
    """
    Train every run once per shared seed and compare final validation metrics.

    Args:
        base: Configuration every delta is applied to
        runs: Named deltas (>= 2)
        corpus: Training corpus shared by all runs
        out_dir: Root for <run>/seed_<s>/ directories and the summaries
        seeds: Shared seeds (default base.ablation.seeds)
        total_steps: Step budget per run (default base.train.total_steps)

    Returns:
        AblationReport with one row per (run, seed)
    """
    runs = expand_beta_sweep(runs, base.ablation.beta_sweep)
    if len(runs) < 2:
        raise UsageError(f"an ablation needs at least 2 configs, got {len(runs)}")
    names = [r.name for r in runs]
    if len(set(names)) != len(names):
        raise UsageError(f"run names must be unique: {names}")
    seeds = list(seeds if seeds is not None else base.ablation.seeds)
    if not seeds:
        raise UsageError("no seeds given")

    root = Path(out_dir) if out_dir else None
    rows: List[Dict[str, Any]] = []
    for run in runs:
        for seed in seeds:
            cfg = merge_config(base, {**run.overrides, "train.seed": seed})
            run_dir = root / run.name / f"seed_{seed}" if root else None
            trainer = Trainer(cfg, corpus, run_dir)
            trainer.fit(total_steps)
            final = trainer.evaluate()
            row = {"run": run.name, "seed": seed, "steps": trainer.step}
            row.update({m: getattr(final, m) for m in METRICS})
            for i, kl in enumerate(final.kl_per_layer):
                row[f"kl_{i}"] = kl
            rows.append(row)
            log_trace_event(
                logger, "ablation", "run_finished",
                f"{run.name} seed {seed}: neg_elbo={final.neg_elbo:.4f} speed_mse={final.speed_mse:.4f}",
                {"run": run.name, "seed": seed},
            )

    frame = pd.DataFrame(rows)
    metric_cols = [c for c in frame.columns if c not in ("run", "seed", "steps")]
    medians = frame.groupby("run", sort=False)[metric_cols].median().reset_index()

    report = AblationReport(rows=frame, medians=medians, seeds=seeds)
    if root:
        root.mkdir(parents=True, exist_ok=True)
        report.summary_path = write_summary(frame, root / SUMMARY_NAME, seeds)
        report.median_path = write_summary(medians, root / MEDIAN_NAME, seeds)
    return report


def write_summary(frame: pd.DataFrame, path: Path, seeds: List[int]) -> Path:
    """CSV with a leading comment line stating the shared seeds."""
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(f"# shared seeds: {','.join(str(s) for s in seeds)} (every run trained with each seed)\n")
        frame.to_csv(f, index=False)
    return path


def read_summary(path: PathLike) -> pd.DataFrame:
    return pd.read_csv(path, comment="#", float_precision="round_trip")
