"""
Telemetry records and their CSV files.

One row per logged step. Per-layer vectors are flattened into numbered columns
(kl_0 … kl_N, cum_kl_0 … cum_kl_N) so the files stay plain tables.
"""
import math
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import pandas as pd
from pydantic import BaseModel, Field

from ..errors import FormatError, InternalConsistencyError
from ..utils.logging import setup_logger

logger = setup_logger(__name__)

PathLike = Union[str, Path]

SCALAR_COLUMNS = [
    "step", "speed", "recon", "kl_total", "gain", "total",
    "speed_mse", "neg_elbo", "lr", "grad_norm", "wall_time",
]


class TelemetryRecord(BaseModel):
    """Training or validation metrics at one step."""
    step: int
    speed: float = Field(description="Speaking-speed loss")
    recon: float
    kl_total: float
    gain: float = 0.0
    total: float
    kl_per_layer: List[float] = Field(default_factory=list, description="Per-frame KL per layer, z0 first")
    cumulative_kl: List[float] = Field(default_factory=list, description="Prefix sums of kl_per_layer")
    speed_mse: Optional[float] = Field(default=None, description="Validation speed error")
    neg_elbo: Optional[float] = Field(default=None, description="recon + kl_total on validation")
    lr: Optional[float] = None
    grad_norm: Optional[float] = None
    wall_time: float = 0.0

    def to_row(self) -> Dict[str, Any]:
        row: Dict[str, Any] = {name: getattr(self, name) for name in SCALAR_COLUMNS}
        for i, v in enumerate(self.kl_per_layer):
            row[f"kl_{i}"] = v
        for i, v in enumerate(self.cumulative_kl):
            row[f"cum_kl_{i}"] = v
        return row

    @classmethod
    def from_row(cls, row: Dict[str, Any]) -> "TelemetryRecord":
        def _opt(value: Any) -> Optional[float]:
            if value is None or (isinstance(value, float) and math.isnan(value)):
                return None
            return float(value)

        def _vector(prefix: str) -> List[float]:
            keys = sorted(
                (k for k in row if k.startswith(prefix) and k[len(prefix):].isdigit()),
                key=lambda k: int(k[len(prefix):]),
            )
            return [float(row[k]) for k in keys if _opt(row[k]) is not None]

        return cls(
            step=int(row["step"]),
            speed=float(row["speed"]),
            recon=float(row["recon"]),
            kl_total=float(row["kl_total"]),
            gain=float(row.get("gain", 0.0)),
            total=float(row["total"]),
            kl_per_layer=_vector("kl_"),
            cumulative_kl=_vector("cum_kl_"),
            speed_mse=_opt(row.get("speed_mse")),
            neg_elbo=_opt(row.get("neg_elbo")),
            lr=_opt(row.get("lr")),
            grad_norm=_opt(row.get("grad_norm")),
            wall_time=float(row.get("wall_time", 0.0)),
        )


def cumulative(values: List[float]) -> List[float]:
    """Prefix sums in layer order."""
    out, acc = [], 0.0
    for v in values:
        acc += v
        out.append(acc)
    return out


class TelemetryWriter:
    """Append-only CSV writer that enforces increasing steps."""

    def __init__(self, path: PathLike, resume: bool = False):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.last_step: Optional[int] = None
        if resume and self.path.exists():
            records = read_telemetry(self.path)
            self.last_step = records[-1].step if records else None
        elif self.path.exists():
            self.path.unlink()

    def append(self, record: TelemetryRecord) -> None:
        if self.last_step is not None and record.step <= self.last_step:
            raise InternalConsistencyError(
                f"telemetry step {record.step} not after {self.last_step} in {self.path}"
            )
        frame = pd.DataFrame([record.to_row()])
        frame.to_csv(self.path, mode="a", header=not self.path.exists(), index=False)
        self.last_step = record.step

    def truncate_after(self, step: int) -> None:
        """Drop rows past `step` (used when resuming from an earlier checkpoint)."""
        if not self.path.exists():
            return
        frame = pd.read_csv(self.path, float_precision="round_trip")
        frame = frame[frame["step"] <= step]
        frame.to_csv(self.path, index=False)
        self.last_step = int(frame["step"].iloc[-1]) if len(frame) else None


def read_telemetry(path: PathLike) -> List[TelemetryRecord]:
    """Read a telemetry CSV back into records (floats round-trip exactly)."""
    path = Path(path)
    if not path.exists():
        raise FormatError("telemetry file not found", path)
    try:
        frame = pd.read_csv(path, float_precision="round_trip", comment="#")
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise FormatError(f"unreadable telemetry CSV: {e}", path)
    missing = {"step", "speed", "recon", "kl_total", "total"} - set(frame.columns)
    if missing:
        raise FormatError(f"telemetry CSV lacks columns {sorted(missing)}", path)
    return [TelemetryRecord.from_row(row) for row in frame.to_dict(orient="records")]
