"""
Speaking-speed targets: min-max normalized frames-per-token ratio.
"""
from typing import Iterable

from ..errors import ConfigurationError, InvalidArgumentError
from .schemas import SpeedStats, Utterance


def check_stats(stats: SpeedStats) -> None:
    """Raise ConfigurationError for degenerate or non-positive stats."""
    if not (stats.min_ratio > 0 and stats.max_ratio > 0):
        raise ConfigurationError(f"speed ratios must be positive: {stats}")
    if not stats.min_ratio < stats.max_ratio:
        raise ConfigurationError(
            f"degenerate speed stats: min_ratio={stats.min_ratio} max_ratio={stats.max_ratio}"
        )


def speaking_speed_target(t_mel: int, l_text: int, stats: SpeedStats) -> float:
    """
    Normalized speaking speed d in [0, 1].

    d = clamp((T_mel/L_text − min_ratio) / (max_ratio − min_ratio), 0, 1)
    """
    if l_text < 1:
        raise InvalidArgumentError(f"L_text must be >= 1, got {l_text}")
    check_stats(stats)
    ratio = t_mel / l_text
    d = (ratio - stats.min_ratio) / (stats.max_ratio - stats.min_ratio)
    return min(1.0, max(0.0, d))


def denormalize_speed(d: float, stats: SpeedStats) -> float:
    """Inverse of the normalization: frames-per-token ratio for d."""
    check_stats(stats)
    return stats.min_ratio + d * (stats.max_ratio - stats.min_ratio)


def fit_speed_stats(utterances: Iterable[Utterance]) -> SpeedStats:
    """
    Min/max T_mel/L_text over a (train) split.

    Raises:
        ConfigurationError: fewer than two utterances or all ratios equal
    """
    ratios = [u.speed_ratio for u in utterances]
    if len(ratios) < 2:
        raise ConfigurationError(f"need at least 2 utterances to fit speed stats, got {len(ratios)}")
    lo, hi = min(ratios), max(ratios)
    if lo == hi:
        raise ConfigurationError(f"all speed ratios equal ({lo}); stats are degenerate")
    return SpeedStats(min_ratio=lo, max_ratio=hi)
