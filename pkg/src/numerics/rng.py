"""
Explicit random number generator threaded through every stochastic operation.
"""
from typing import Any, Dict, Sequence

import torch


class Rng:
    """
    Seeded generator with a draw counter.

    Identical seed plus identical call sequence gives identical draws. The
    generator never touches torch's global RNG.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self.counter = 0
        self._gen = torch.Generator(device="cpu")
        self._gen.manual_seed(self.seed)

    @property
    def generator(self) -> torch.Generator:
        return self._gen

    def normal(self, shape: Sequence[int], dtype: torch.dtype = torch.float64) -> torch.Tensor:
        """Standard normal draws of the given shape."""
        self.counter += 1
        return torch.randn(tuple(shape), generator=self._gen, dtype=dtype)

    def uniform(self, shape: Sequence[int], dtype: torch.dtype = torch.float64) -> torch.Tensor:
        """Uniform draws on [0, 1)."""
        self.counter += 1
        return torch.rand(tuple(shape), generator=self._gen, dtype=dtype)

    def integers(self, low: int, high: int, shape: Sequence[int] = ()) -> torch.Tensor:
        """Integers in [low, high)."""
        self.counter += 1
        return torch.randint(low, high, tuple(shape), generator=self._gen)

    def permutation(self, n: int) -> torch.Tensor:
        self.counter += 1
        return torch.randperm(n, generator=self._gen)

    def spawn(self, offset: int) -> "Rng":
        """Independent generator derived from this seed (does not consume draws)."""
        return Rng(self.seed * 1_000_003 + offset)

    def get_state(self) -> Dict[str, Any]:
        return {"seed": self.seed, "counter": self.counter, "state": self._gen.get_state().clone()}

    def set_state(self, state: Dict[str, Any]) -> None:
        self.seed = int(state["seed"])
        self.counter = int(state["counter"])
        self._gen.set_state(state["state"])

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed}, counter={self.counter})"
