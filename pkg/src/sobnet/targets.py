"""Smooth test functions with analytic derivatives and certified sup bounds.

Every catalog entry certifies max_{|alpha| <= s} ||d^alpha f||_inf < 1 through
an analytic bound (coefficient sums, factor bounds), never a grid maximum;
the grid check in the tests is a secondary guard.  Entries therefore feed the
network compilers without voiding their hypotheses.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .indices import MultiIndex, multi_indices
from .network import ParameterError

# max |H_k(t)| e^{-t^2} on |t| <= 1/2 (physicists' Hermite), k = 0..5
_HERMITE_BOUNDS = [1.0, 1.0, 2.0, 5.0, 12.0, 41.0]


@dataclass
class TargetFunction:
    """Oracle for f and its partial derivatives up to order s on [0,1]^d."""

    name: str
    d: int
    s: int
    certified_bound: float
    _f: Callable[[np.ndarray], np.ndarray]
    _deriv: Callable[[tuple, np.ndarray], np.ndarray]
    note: str = ""

    def f(self, x) -> np.ndarray:
        return self._f(np.atleast_2d(np.asarray(x, dtype=float)))

    def deriv(self, alpha, x) -> np.ndarray:
        """Evaluate d^alpha f; |alpha| <= s."""
        alpha = tuple(int(v) for v in alpha)
        if len(alpha) != self.d:
            raise ParameterError(f"alpha has dim {len(alpha)}, function has d={self.d}")
        if sum(alpha) > self.s:
            raise ParameterError(f"|alpha| = {sum(alpha)} exceeds smoothness s={self.s}")
        pts = np.atleast_2d(np.asarray(x, dtype=float))
        if sum(alpha) == 0:
            return self._f(pts)
        return self._deriv(alpha, pts)


def rescale_to_unit_ball(name, f, deriv, raw_bound, d, s, note="") -> TargetFunction:
    """Scale by c so that c * max_alpha bound <= 0.95; c is capped at 1."""
    c = min(1.0, 0.95 / raw_bound)
    return TargetFunction(
        name=name,
        d=d,
        s=s,
        certified_bound=c * raw_bound,
        _f=lambda x: c * f(x),
        _deriv=lambda a, x: c * deriv(a, x),
        note=note + f" (scaled by {c:.6g}; raw bound {raw_bound:g})",
    )


def _constant(d, s, value=0.3):
    return TargetFunction(
        name="const",
        d=d,
        s=s,
        certified_bound=value,
        _f=lambda x: np.full(x.shape[0], value),
        _deriv=lambda a, x: np.zeros(x.shape[0]),
        note=f"constant {value}",
    )


def _sin_prod(d, s):
    shifts = 0.4 + 0.3 * np.arange(d)

    def f(x):
        return 0.9 * np.prod(np.sin(x + shifts), axis=1)

    def deriv(alpha, x):
        out = np.full(x.shape[0], 0.9)
        for j, a in enumerate(alpha):
            out = out * np.sin(x[:, j] + shifts[j] + a * math.pi / 2)
        return out

    return TargetFunction(
        name="sinprod",
        d=d,
        s=s,
        certified_bound=0.9,
        _f=f,
        _deriv=deriv,
        note="0.9 * prod sin(x_i + a_i); every factor derivative bounded by 1",
    )


def _hermite(k, t):
    """Physicists' Hermite polynomial H_k(t)."""
    h0 = np.ones_like(t)
    if k == 0:
        return h0
    h1 = 2.0 * t
    for j in range(1, k):
        h0, h1 = h1, 2.0 * t * h1 - 2.0 * j * h0
    return h1


def _gaussian(d, s):
    raw = max(_HERMITE_BOUNDS[: s + 1])

    def f(x):
        t = x - 0.5
        return np.exp(-np.sum(t * t, axis=1))

    def deriv(alpha, x):
        t = x - 0.5
        out = np.exp(-np.sum(t * t, axis=1))
        for j, a in enumerate(alpha):
            if a:
                out = out * (-1.0) ** a * _hermite(a, t[:, j])
        return out

    return rescale_to_unit_ball(
        "gauss", f, deriv, raw, d, s, note="exp(-|x - 1/2|^2), Hermite-factor bounds"
    )


def polynomial_target(name, d, s, terms, note="") -> TargetFunction:
    """Target from terms [(coeff, alpha)]; derivatives and bounds are exact."""
    terms = [(float(c), MultiIndex(tuple(a))) for c, a in terms]

    def f(x):
        out = np.zeros(x.shape[0])
        for c, al in terms:
            out += c * al.power(x)
        return out

    def deriv(alpha, x):
        out = np.zeros(x.shape[0])
        for c, al in terms:
            coeff = c
            new = []
            for aj, dj in zip(al, alpha):
                if dj > aj:
                    coeff = 0.0
                    break
                coeff *= math.perm(aj, dj)
                new.append(aj - dj)
            if coeff:
                out += coeff * MultiIndex(tuple(new)).power(x)
        return out

    # analytic sup bound on [0,1]^d per derivative order: sum of |coeff| after
    # differentiation (monomials are <= 1 on the cube)
    bound = 0.0
    for alpha in multi_indices(d, s):
        total = 0.0
        for c, al in terms:
            coeff = abs(c)
            for aj, dj in zip(al, alpha):
                if dj > aj:
                    coeff = 0.0
                    break
                coeff *= math.perm(aj, dj)
            total += coeff
        bound = max(bound, total)
    return TargetFunction(name, d, s, bound, f, deriv, note or "polynomial, coefficient-sum bounds")


def _poly(d, s):
    if d == 1:
        terms = [(0.2, (0,)), (0.3, (1,)), (0.25, (2,))]
    elif d == 2:
        terms = [(0.1, (0, 0)), (0.2, (1, 0)), (0.15, (0, 2)), (0.2, (1, 1))]
    else:
        terms = [(0.1, (0,) * d), (0.2, (1,) + (0,) * (d - 1)), (0.15, (0, 1) + (0,) * (d - 2))]
    t = polynomial_target("poly", d, s, terms)
    if t.certified_bound >= 1.0:
        raise AssertionError("catalog polynomial must satisfy the unit-ball hypothesis")
    return t


def _sin_ratio(s):
    # f = sin(x)/(1+x); |f^(k)| <= B_k = sum_j C(k,j) (k-j)! on [0,1]
    raw = max(
        sum(math.comb(k, j) * math.factorial(k - j) for j in range(k + 1))
        for k in range(s + 1)
    )

    def f(x):
        t = x[:, 0]
        return np.sin(t) / (1.0 + t)

    def deriv(alpha, x):
        k = alpha[0]
        t = x[:, 0]
        out = np.zeros_like(t)
        for j in range(k + 1):
            out += (
                math.comb(k, j)
                * np.sin(t + j * math.pi / 2)
                * (-1.0) ** (k - j)
                * math.factorial(k - j)
                / (1.0 + t) ** (k - j + 1)
            )
        return out

    return rescale_to_unit_ball(
        "sinratio", f, deriv, raw, 1, s, note="sin(x)/(1+x), Leibniz-series bounds"
    )


def catalog(d: int = 1, s: int = 3) -> list[TargetFunction]:
    """Certified targets for dimension d and smoothness s."""
    if d < 1 or s < 1:
        raise ParameterError("d and s must be positive")
    entries = [_constant(d, s), _poly(d, s), _sin_prod(d, s), _gaussian(d, s)]
    if d == 1:
        entries.append(_sin_ratio(s))
    return entries


def get_target(name: str, d: int = 1, s: int = 3) -> TargetFunction:
    for t in catalog(d, s):
        if t.name == name:
            return t
    names = [t.name for t in catalog(d, s)]
    raise ParameterError(f"unknown target {name!r} for d={d}; catalog has {names}")
