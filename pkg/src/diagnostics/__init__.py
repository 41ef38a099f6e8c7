"""Diagnostics that sit outside training: timing of the parallel prior path."""
from .timing import TimingResult, growth_ratios, timing_probe

__all__ = ["TimingResult", "growth_ratios", "timing_probe"]
