"""
Non-autoregressive timing probe.

Times the prior path at several frame counts and compares it with a baseline that
decodes one frame per call, the cost profile an autoregressive decoder would have.
"""
import time
from typing import Dict, List, Sequence

import torch
from pydantic import BaseModel

from ..data.schemas import SpeedStats
from ..model.vara import VaraModel
from ..numerics import Rng
from ..utils.logging import setup_logger

logger = setup_logger(__name__)


class TimingResult(BaseModel):
    n_frames: int
    parallel_seconds: float
    sequential_seconds: float

    @property
    def speedup(self) -> float:
        return self.sequential_seconds / max(self.parallel_seconds, 1e-12)


def _time(fn, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def sequential_baseline(model: VaraModel, tokens: Sequence[int], stats: SpeedStats, n_frames: int, seed: int) -> None:
    """Run the prior path once per output frame, growing the frame budget by one each call."""
    text = model.encode_text(tokens)
    with torch.no_grad():
        for t in range(1, n_frames + 1):
            model.forward_infer(text, stats, Rng(seed), override_frames=t)


def timing_probe(
    model: VaraModel,
    tokens: Sequence[int],
    stats: SpeedStats,
    frame_counts: Sequence[int] = (64, 256),
    seed: int = 0,
    repeats: int = 3,
) -> List[TimingResult]:
    """
    Wall time of one prior pass vs the per-frame baseline at each frame count.

    Returns:
        One TimingResult per frame count
    """
    text = model.encode_text(tokens)
    results: List[TimingResult] = []
    for n in frame_counts:
        def parallel() -> None:
            with torch.no_grad():
                model.forward_infer(text, stats, Rng(seed), override_frames=n)

        par = _time(parallel, repeats)
        seq = _time(lambda: sequential_baseline(model, tokens, stats, n, seed), 1)
        results.append(TimingResult(n_frames=n, parallel_seconds=par, sequential_seconds=seq))
        logger.info(f"T={n}: parallel {par * 1e3:.2f} ms, per-frame baseline {seq * 1e3:.1f} ms")
    return results


def growth_ratios(results: List[TimingResult]) -> Dict[str, float]:
    """Time growth between the smallest and largest frame counts for both paths."""
    first, last = results[0], results[-1]
    return {
        "frames": last.n_frames / first.n_frames,
        "parallel": last.parallel_seconds / max(first.parallel_seconds, 1e-12),
        "sequential": last.sequential_seconds / max(first.sequential_seconds, 1e-12),
    }
