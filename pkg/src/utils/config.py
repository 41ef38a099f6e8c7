"""
Central configuration for vara-tts.

This module provides a single point of configuration for data extraction,
architecture, objective, optimizer and training-loop settings. All sections are
pydantic models; values are layered in the same order everywhere:

1. Built-in defaults (the desk-scale homomorph of the full model)
2. A YAML settings file (src/configs/default.yaml or a preset)
3. Environment variables (.env is honoured)
4. Dotted command-line overrides, e.g. ``model.n_stacks=3``

Usage:
    from src.utils.config import load_config

    cfg = load_config(Path("src/configs/default.yaml"), {"loss.lam": "0"})
"""
import hashlib
import json
import os
from pathlib import Path
from typing import Any, Dict, Iterator, List, Literal, Optional, Tuple

import yaml
from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from ..errors import ConfigurationError
from .logging import setup_logger

logger = setup_logger(__name__)

DEFAULT_CONFIG_PATH = Path(__file__).resolve().parent.parent / "configs" / "default.yaml"
PRESET_DIR = DEFAULT_CONFIG_PATH.parent / "presets"

# Environment variables mapped onto dotted config keys
ENV_OVERRIDES = {
    "VARA_SEED": "train.seed",
    "VARA_PRECISION": "train.precision",
}


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


class MelConfig(_Section):
    """Feature extraction settings."""
    sample_rate: int = Field(default=24000, description="Sample rate in Hz")
    n_fft: int = Field(default=1024, description="STFT window length")
    hop: int = Field(default=256, description="Frame shift in samples")
    n_mels: int = Field(default=80, description="Number of mel banks")
    fmin: float = 0.0
    fmax: Optional[float] = None
    floor: float = Field(default=1e-5, description="Magnitude clamp before any log")


class ModelConfig(_Section):
    """Architecture hyperparameters."""
    vocab_size: int = 32
    n_speakers: int = 1
    speaker_dim: int = 16

    text_dim: int = Field(default=64, description="Text embedding dimension")
    text_conv_channels: List[int] = Field(default_factory=lambda: [64, 16, 16, 64])
    text_kernel: int = 5
    pe_scale: float = Field(default=1.0, description="Positional encoding gain (1 = unscaled)")

    pre_conv_kernel: int = 11
    channels: int = 64
    bottleneck: int = 16
    n_stacks: int = 3
    blocks_per_stack: List[int] = Field(default_factory=lambda: [2, 2, 2])
    reduction_per_stack: List[int] = Field(default_factory=lambda: [1, 2, 2])
    prior_kernel: int = 3

    latent_dim: int = 8
    attn_dim: int = 64
    n_heads: int = 4
    g_list: List[float] = Field(default_factory=lambda: [0.01, 0.05, 0.1, 0.2])
    a_prev_gain: float = Field(default=1.0, description="Scalar applied to A_prev before it is added to the scores")
    refine_kernel: int = 3

    predictor_hidden: int = 256
    predictor_dropout: float = 0.1
    separate_speed_predictor: bool = Field(
        default=False,
        description="Feed the predictor the stop-gradient pooled text instead of z0",
    )
    tied_posterior_layers: List[int] = Field(
        default_factory=list,
        description="Latent layers whose posterior is replaced by the prior (0 = z0)",
    )
    gelu_approximate: bool = Field(default=False, description="tanh GELU (train mode only)")

    @model_validator(mode="after")
    def _check_plan(self) -> "ModelConfig":
        if len(self.blocks_per_stack) != self.n_stacks or len(self.reduction_per_stack) != self.n_stacks:
            raise ValueError(
                f"blocks_per_stack ({len(self.blocks_per_stack)}) and reduction_per_stack "
                f"({len(self.reduction_per_stack)}) must both have n_stacks={self.n_stacks} entries"
            )
        if any(r < 1 for r in self.reduction_per_stack):
            raise ValueError("reductions must be >= 1")
        if any(b < 1 for b in self.blocks_per_stack):
            raise ValueError("every stack needs at least one block")
        if self.attn_dim % self.n_heads:
            raise ValueError("attn_dim must be divisible by n_heads")
        if self.attn_dim % 2:
            raise ValueError("attn_dim must be even for the positional encoding")
        if not self.text_conv_channels or self.text_conv_channels[-1] != self.attn_dim:
            raise ValueError("text_conv_channels must end at attn_dim")
        for k in (self.text_kernel, self.pre_conv_kernel, self.prior_kernel, self.refine_kernel):
            if k % 2 == 0:
                raise ValueError("kernel sizes must be odd")
        if not self.g_list or any(g <= 0 for g in self.g_list):
            raise ValueError("g_list must be non-empty and positive")
        if not 0.0 <= self.predictor_dropout < 1.0:
            raise ValueError("predictor_dropout must be in [0, 1)")
        if any(i < 0 or i > self.n_stacks for i in self.tied_posterior_layers):
            raise ValueError(f"tied_posterior_layers entries must be in [0, {self.n_stacks}]")
        return self

    @property
    def max_reduction(self) -> int:
        """Product of all stack reduction factors."""
        out = 1
        for r in self.reduction_per_stack:
            out *= r
        return out


class LossConfig(_Section):
    """Objective weights and the KL gain factor."""
    alpha: float = Field(default=1.0, ge=0.0)
    beta: float = Field(default=1.8, ge=0.0)
    lam: float = Field(default=1.0, ge=0.0, description="Detailed KL gain weight")
    c: float = Field(default=0.5, gt=0.0, description="KL gain factor")
    gain_form: Literal["shortfall", "printed"] = "shortfall"
    collapse_threshold: float = 1e-3


class OptimConfig(_Section):
    """Adam and learning-rate schedule."""
    max_lr: float = 1.5e-4
    warmup_steps: int = Field(default=10000, ge=1)
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    grad_clip: float = Field(default=5.0, description="Global-norm clip; <= 0 disables")


class TrainSection(_Section):
    """Training-loop settings."""
    batch_size: int = Field(default=32, ge=1)
    total_steps: int = Field(default=1000, ge=1)
    seed: int = 0
    precision: Literal["float32", "float64"] = "float32"
    log_interval: int = Field(default=10, ge=1)
    eval_interval: int = Field(default=100, ge=1)
    checkpoint_interval: int = Field(default=500, ge=1)


class AblationSection(_Section):
    """Defaults for the ablation harness."""
    beta_sweep: List[float] = Field(default_factory=list)
    seeds: List[int] = Field(default_factory=lambda: [0])


class TrainConfig(_Section):
    """Root configuration document."""
    mel: MelConfig = Field(default_factory=MelConfig)
    model: ModelConfig = Field(default_factory=ModelConfig)
    loss: LossConfig = Field(default_factory=LossConfig)
    optim: OptimConfig = Field(default_factory=OptimConfig)
    train: TrainSection = Field(default_factory=TrainSection)
    ablation: AblationSection = Field(default_factory=AblationSection)


def iter_config_keys(model_cls: type = TrainConfig, prefix: str = "") -> Iterator[Tuple[str, Any]]:
    """
    Yield every dotted leaf key of a config model with its field info.

    Args:
        model_cls: Pydantic model class to walk
        prefix: Dotted prefix for nested sections

    Yields:
        (dotted_key, FieldInfo) pairs
    """
    for name, field in model_cls.model_fields.items():
        key = f"{prefix}{name}"
        annotation = field.annotation
        if isinstance(annotation, type) and issubclass(annotation, BaseModel):
            yield from iter_config_keys(annotation, f"{key}.")
        else:
            yield key, field


def _set_dotted(doc: Dict[str, Any], key: str, value: Any) -> None:
    parts = key.split(".")
    node = doc
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigurationError(f"Cannot set {key}: {part} is not a section")
    node[parts[-1]] = value


def _deep_update(base: Dict[str, Any], update: Dict[str, Any]) -> Dict[str, Any]:
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(base.get(key), dict):
            _deep_update(base[key], value)
        else:
            base[key] = value
    return base


def parse_override_value(raw: Any) -> Any:
    """Parse a command-line override value as a YAML scalar or list."""
    if not isinstance(raw, str):
        return raw
    try:
        return yaml.safe_load(raw)
    except yaml.YAMLError as e:
        raise ConfigurationError(f"Cannot parse override value {raw!r}: {e}")


def apply_overrides(doc: Dict[str, Any], overrides: Optional[Dict[str, Any]]) -> Dict[str, Any]:
    """
    Apply dotted-key overrides to a raw config document.

    Args:
        doc: Raw nested config dictionary
        overrides: Mapping of dotted key to raw value

    Returns:
        The updated document
    """
    known = {key for key, _ in iter_config_keys()}
    for key, raw in (overrides or {}).items():
        if key not in known:
            raise ConfigurationError(f"Unknown config key: {key}")
        _set_dotted(doc, key, parse_override_value(raw))
    return doc


def _env_overrides() -> Dict[str, Any]:
    return {key: os.environ[env] for env, key in ENV_OVERRIDES.items() if os.getenv(env)}


def read_config_file(path: Path) -> Dict[str, Any]:
    """Read a YAML settings file into a raw document."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            doc = yaml.safe_load(f) or {}
    except yaml.YAMLError as e:
        raise ConfigurationError(f"{path}: invalid YAML: {e}")
    if not isinstance(doc, dict):
        raise ConfigurationError(f"{path}: top level must be a mapping")
    return doc


def build_config(doc: Dict[str, Any]) -> TrainConfig:
    """Validate a raw document into a TrainConfig."""
    try:
        return TrainConfig.model_validate(doc)
    except ValidationError as e:
        raise ConfigurationError(f"Invalid configuration: {e}")


def load_config(
    config_path: Optional[Path] = None,
    overrides: Optional[Dict[str, Any]] = None,
) -> TrainConfig:
    """
    Load configuration from defaults, a YAML file, environment and overrides.

    Priority order (highest last):
    1. Built-in defaults
    2. settings YAML (config_path, else src/configs/default.yaml if present)
    3. Environment variables (.env)
    4. Dotted overrides

    Args:
        config_path: Optional path to a YAML settings file
        overrides: Optional mapping of dotted keys to raw values

    Returns:
        Validated TrainConfig
    """
    load_dotenv()

    doc: Dict[str, Any] = {}
    path = Path(config_path) if config_path else DEFAULT_CONFIG_PATH
    if path.exists():
        logger.info(f"Loading config from {path}")
        doc = read_config_file(path)
    elif config_path:
        raise ConfigurationError(f"Config file not found: {path}")
    else:
        logger.warning(f"Config file not found at {path}, using defaults")

    apply_overrides(doc, _env_overrides())
    apply_overrides(doc, overrides)
    return build_config(doc)


def load_preset(name: str, overrides: Optional[Dict[str, Any]] = None) -> TrainConfig:
    """Load a named preset from src/configs/presets/."""
    path = PRESET_DIR / f"{name}.yaml"
    if not path.exists():
        available = sorted(p.stem for p in PRESET_DIR.glob("*.yaml"))
        raise ConfigurationError(f"Unknown preset {name!r}; available: {available}")
    return load_config(path, overrides)


def merge_config(cfg: TrainConfig, delta: Dict[str, Any]) -> TrainConfig:
    """
    Return a copy of cfg with dotted-key (or nested) deltas applied.

    Args:
        cfg: Base configuration
        delta: Either {"loss.lam": 0} or {"loss": {"lam": 0}}

    Returns:
        New validated TrainConfig
    """
    doc = cfg.model_dump()
    flat = {k: v for k, v in delta.items() if "." in k}
    nested = {k: v for k, v in delta.items() if "." not in k}
    _deep_update(doc, nested)
    apply_overrides(doc, flat)
    return build_config(doc)


def config_digest(cfg: TrainConfig) -> str:
    """Digest of the architecture-defining sections (model + mel)."""
    payload = {"mel": cfg.mel.model_dump(), "model": cfg.model.model_dump()}
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def dump_config(cfg: TrainConfig, path: Path) -> None:
    """Write the resolved configuration as YAML."""
    with open(path, "w", encoding="utf-8") as f:
        yaml.safe_dump(cfg.model_dump(), f, sort_keys=False)
