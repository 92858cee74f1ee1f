"""Multi-index helpers for multivariate monomials and Taylor tables."""
from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product

import numpy as np

# Degrees beyond this make factorials / budget formulas meaningless at desk
# scale; treat as a usage error rather than silently producing huge networks.
MAX_ORDER = 20


@dataclass(frozen=True)
class MultiIndex:
    """A d-tuple of nonnegative integers with |alpha|, alpha!, x**alpha."""

    components: tuple[int, ...]

    def __post_init__(self):
        if not all(isinstance(a, int) and a >= 0 for a in self.components):
            raise ValueError(f"multi-index must be nonnegative integers, got {self.components}")
        if self.order > MAX_ORDER:
            raise ValueError(f"|alpha| = {self.order} exceeds supported maximum {MAX_ORDER}")

    @classmethod
    def of(cls, *components: int) -> "MultiIndex":
        return cls(tuple(int(c) for c in components))

    @property
    def dim(self) -> int:
        return len(self.components)

    @property
    def order(self) -> int:
        return sum(self.components)

    def factorial(self) -> int:
        out = 1
        for a in self.components:
            out *= math.factorial(a)
        return out

    def power(self, x: np.ndarray) -> np.ndarray:
        """Evaluate x**alpha for points x of shape (d,) or (n, d)."""
        x = np.asarray(x, dtype=float)
        pts = np.atleast_2d(x)
        out = np.ones(pts.shape[0])
        for j, a in enumerate(self.components):
            if a:
                out = out * pts[:, j] ** a
        return out[0] if x.ndim == 1 else out

    def __iter__(self):
        return iter(self.components)

    def __len__(self):
        return len(self.components)

    def __getitem__(self, j):
        return self.components[j]


def multi_indices(d: int, max_order: int) -> list[MultiIndex]:
    """All alpha in N^d with |alpha| <= max_order, ordered by (|alpha|, lex)."""
    out = []
    for total in range(max_order + 1):
        for combo in product(range(total + 1), repeat=d):
            if sum(combo) == total:
                out.append(MultiIndex(combo))
    return out
