"""Characteristic-time solver for a single LRU cache under renewal input.

Under Che's approximation an item stays cached for a fixed time ``t_c``
after its last request.  Renewal-reward gives the item's occupancy
``rate * int_0^t_c (1 - F(u)) du``; ``t_c`` is the root of
``sum(occupancy) - C``.  A request hits iff its gap is at most ``t_c``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .distributions import RenewalDistribution
from .popularity import ItemCatalog

__all__ = [
    "CacheConfig",
    "CharacteristicTime",
    "SolverError",
    "occupancy",
    "occupancies",
    "solve_tc",
    "solve_tc_laws",
    "hit_probability",
    "hit_probabilities",
    "aggregate_hit",
]

log = logging.getLogger(__name__)

MAX_DOUBLINGS = 200


class SolverError(RuntimeError):
    """The fixed point could not be bracketed or did not converge."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


@dataclass(frozen=True)
class CacheConfig:
    """LRU cache holding ``capacity`` equally sized items."""

    capacity: int

    def __post_init__(self):
        if int(self.capacity) != self.capacity or self.capacity < 1:
            raise ValueError(f"cache capacity must be a positive integer, got {self.capacity!r}")


@dataclass(frozen=True)
class CharacteristicTime:
    """Solved characteristic time with solver diagnostics.

    ``degenerate`` marks a cache at least as large as the item set: nothing
    is ever evicted, ``t_c`` is infinite and every request (after the first)
    hits.
    """

    t_c: float
    residual: float
    iterations: int
    capacity: int
    degenerate: bool = False

    def to_dict(self):
        return {
            "t_c": None if self.degenerate else self.t_c,
            "residual": self.residual,
            "iterations": self.iterations,
            "capacity": self.capacity,
            "degenerate": self.degenerate,
        }


def occupancy(d: RenewalDistribution, rate, t_c):
    """Long-run fraction of time an item spends in the cache.

    Examples
    --------
    >>> from cachecascade.distributions import ExponentialLaw
    >>> round(occupancy(ExponentialLaw(1.0), 1.0, 1.0), 5)
    0.63212
    """
    if np.any(np.asarray(t_c) < 0):
        raise ValueError("t_c must be >= 0")
    val = np.clip(np.asarray(rate) * np.asarray(d.survival_integral(t_c)), 0.0, 1.0)
    return float(val) if val.ndim == 0 else val


def occupancies(laws, rates, t_c) -> np.ndarray:
    """Per-item occupancy for a batched law or a sequence of laws."""
    rates = np.asarray(rates, dtype=float)
    if isinstance(laws, RenewalDistribution):
        return np.broadcast_to(occupancy(laws, rates, t_c), rates.shape).astype(float)
    return np.array([occupancy(d, r, t_c) for d, r in zip(laws, rates)], dtype=float)


def _stable_sum(values) -> float:
    return math.fsum(np.sort(values))


def solve_tc_laws(laws, rates, capacity: int, tol: float = 1e-9) -> CharacteristicTime:
    """Solve ``sum_x occupancy_x(t) = capacity`` for ``t``.

    Parameters
    ----------
    laws : RenewalDistribution or sequence
        Batched law of shape ``(N,)`` or N scalar laws.
    rates : array_like
        Per-item request rates.
    capacity : int
    tol : float
        Residual tolerance relative to ``capacity``.
    """
    rates = np.asarray(rates, dtype=float)
    n = rates.size
    if capacity >= n:
        return CharacteristicTime(math.inf, 0.0, 0, int(capacity), degenerate=True)

    evals = 0

    def g(t):
        nonlocal evals
        evals += 1
        return _stable_sum(occupancies(laws, rates, t)) - capacity

    lo, hi = 0.0, capacity / rates.sum()
    g_hi = g(hi)
    doublings = 0
    while g_hi < 0:
        if doublings >= MAX_DOUBLINGS:
            raise SolverError(
                "could not bracket the characteristic time",
                {"t_last": hi, "residual": g_hi, "doublings": doublings},
            )
        lo, hi = hi, 2 * hi
        g_hi = g(hi)
        doublings += 1
    if doublings == 0:
        # shrink the lower end towards the root; g(0) = -capacity
        while True:
            half = hi / 2
            g_half = g(half)
            if g_half >= 0:
                hi, g_hi = half, g_half
                if hi < 1e-300:
                    break
            else:
                lo = half
                break
    abs_tol = tol * capacity
    if g_hi == 0:
        root, iters = hi, 0
    else:
        root, info = optimize.brentq(g, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps,
                                     maxiter=500, full_output=True, disp=False)
        iters = info.iterations
    residual = abs(g(root))
    if residual > abs_tol:
        raise SolverError(
            f"characteristic time residual {residual:.3e} exceeds tolerance {abs_tol:.3e}",
            {"t_c": root, "residual": residual, "iterations": iters + doublings},
        )
    log.debug("t_c=%.12g residual=%.3e after %d evaluations", root, residual, evals)
    return CharacteristicTime(float(root), float(residual), int(iters + doublings), int(capacity))


def solve_tc(catalog: ItemCatalog, cache, tol: float = 1e-9) -> CharacteristicTime:
    """Characteristic time of an LRU cache fed by ``catalog``.

    ``cache`` may be a :class:`CacheConfig` or a plain capacity.
    """
    capacity = cache.capacity if isinstance(cache, CacheConfig) else CacheConfig(cache).capacity
    return solve_tc_laws(catalog.laws, catalog.rates, capacity, tol)


def hit_probability(d: RenewalDistribution, t_c):
    """Probability that a request finds its item cached, ``F(t_c)``."""
    if np.isscalar(t_c) and math.isinf(t_c):
        shape = d.batch_shape
        return 1.0 if not shape else np.ones(shape)
    return d.cdf(t_c)


def hit_probabilities(laws, n: int, t_c) -> np.ndarray:
    """Per-item hit probabilities for a batched law or a sequence of laws."""
    if math.isinf(t_c):
        return np.ones(n)
    if isinstance(laws, RenewalDistribution):
        return np.broadcast_to(np.asarray(laws.cdf(t_c), dtype=float), (n,)).copy()
    return np.array([d.cdf(t_c) for d in laws], dtype=float)


def aggregate_hit(catalog, per_item_H) -> float:
    """Request-weighted hit ratio ``sum_x q_x H_x``.

    ``catalog`` is an :class:`ItemCatalog` or an array of per-item weights
    (rates or popularities; they are normalised).
    """
    weights = catalog.rates if isinstance(catalog, ItemCatalog) else np.asarray(catalog, dtype=float)
    per_item_H = np.asarray(per_item_H, dtype=float)
    if per_item_H.shape != weights.shape:
        raise ValueError(f"expected {weights.size} hit probabilities, got {per_item_H.size}")
    return float(np.clip(math.fsum(weights * per_item_H) / math.fsum(weights), 0.0, 1.0))
