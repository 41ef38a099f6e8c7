"""
Finite-difference oracle for reverse-mode gradients.
"""
import math
from typing import Callable, Optional, Sequence

import torch

from ..errors import EvaluationError, InvalidArgumentError
from ..utils.logging import setup_logger
from .rng import Rng

logger = setup_logger(__name__)


def _evaluate(f: Callable[[], torch.Tensor]) -> float:
    value = f()
    if value.numel() != 1:
        raise InvalidArgumentError(f"grad_check needs a scalar function, got shape {tuple(value.shape)}")
    out = float(value.detach())
    if not math.isfinite(out):
        raise EvaluationError(f"function value is not finite: {out}")
    return out


def grad_check(
    f: Callable[[], torch.Tensor],
    params: Sequence[torch.Tensor],
    eps: float = 1e-6,
    floor: float = 1e-8,
    atol: float = 0.0,
    max_coords: Optional[int] = None,
    rng: Optional[Rng] = None,
) -> float:
    """
    Compare autograd gradients against central finite differences.

    `f` is re-evaluated for every perturbation and must be a pure function of
    `params` (re-seed any Rng inside it).

    Args:
        f: Zero-argument callable returning a scalar tensor
        params: float64 leaf tensors with requires_grad
        eps: Perturbation, in [1e-7, 1e-3]
        floor: Denominator floor for the relative error; magnitudes at or below it carry no sign
        atol: Coordinates whose absolute discrepancy is <= atol count as exact, unless
            the two gradients disagree in sign
        max_coords: Check at most this many coordinates per tensor (sampled by rng)
        rng: Sampler for coordinate subsets; required with max_coords

    Returns:
        Maximum relative error |a − b| / max(|a|, |b|, floor) over checked coordinates
    """
    if not 1e-7 <= eps <= 1e-3:
        raise InvalidArgumentError(f"eps must be in [1e-7, 1e-3], got {eps}")
    for p in params:
        if p.dtype != torch.float64:
            raise InvalidArgumentError("grad_check runs in 64-bit mode only")

    value = f()
    if not torch.isfinite(value).all():
        raise EvaluationError("function value is not finite at the check point")
    analytic = torch.autograd.grad(value, list(params), allow_unused=True)

    worst = 0.0
    for p, grad in zip(params, analytic):
        grad = torch.zeros_like(p) if grad is None else grad.detach()
        flat = p.data.view(-1)
        gflat = grad.reshape(-1)
        n = flat.numel()
        if max_coords is not None and n > max_coords:
            if rng is None:
                raise InvalidArgumentError("max_coords requires an rng")
            coords = rng.permutation(n)[:max_coords].tolist()
        else:
            coords = range(n)

        for i in coords:
            original = flat[i].item()
            with torch.no_grad():
                flat[i] = original + eps
                plus = _evaluate(f)
                flat[i] = original - eps
                minus = _evaluate(f)
                flat[i] = original
            numeric = (plus - minus) / (2.0 * eps)
            a = gflat[i].item()
            diff = abs(a - numeric)
            flipped = a * numeric < 0 and min(abs(a), abs(numeric)) > floor
            if diff <= atol and not flipped:
                continue
            worst = max(worst, diff / max(abs(a), abs(numeric), floor))

    logger.debug(f"grad_check max relative error {worst:.3e}")
    return worst
