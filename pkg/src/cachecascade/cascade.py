"""Tandem of LRU caches: each level is fed by the previous level's misses.

A level sees, per item, a renewal stream whose gaps follow the previous
level's inter-miss density.  The same fixed-point solve applies with those
tabulated laws; rates carry over exactly as ``rate * (1 - H)``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .che import CacheConfig, CharacteristicTime, hit_probabilities, solve_tc_laws
from .distributions import RenewalDistribution, TabulatedDensity, iter_laws
from .miss_stream import (DEFAULT_EPS, DEFAULT_GRID_FACTOR, MissStreamStats, NoMissStream,
                          miss_pdf, miss_stream_stats)
from .popularity import ItemCatalog

__all__ = [
    "EmptyStream",
    "Numerics",
    "TandemScenario",
    "LevelReport",
    "evaluate_level",
    "evaluate_tandem",
    "remesh",
]

log = logging.getLogger(__name__)


class EmptyStream(ValueError):
    """No item reaches this cache level."""


@dataclass(frozen=True)
class Numerics:
    """Knobs shared by every level of a tandem evaluation."""

    eps: float = DEFAULT_EPS
    grid_factor: int = DEFAULT_GRID_FACTOR
    solver_tol: float = 1e-9
    rate_floor: float = 1e-12
    remesh_ratio: float = 0.02
    remesh_span: float = 2.0


@dataclass(frozen=True)
class TandemScenario:
    """Catalog feeding level 1 and the ordered cache capacities."""

    catalog: ItemCatalog
    caches: tuple

    def __post_init__(self):
        caches = tuple(c if isinstance(c, CacheConfig) else CacheConfig(c) for c in self.caches)
        if not caches:
            raise ValueError("a tandem needs at least one cache")
        object.__setattr__(self, "caches", caches)

    @property
    def levels(self) -> int:
        return len(self.caches)


@dataclass(eq=False)
class LevelReport:
    """Model output for one cache level.

    ``hit_ratio`` weights items by the stream this cache actually receives
    (its normalised miss-stream popularity from upstream); ``hit_ratio_origin``
    weights the same per-item values by the original catalog popularity.
    """

    level: int
    characteristic: CharacteristicTime
    ids: np.ndarray
    rates: np.ndarray
    hit: np.ndarray
    hit_ratio: float
    hit_ratio_origin: float
    stats: list
    laws: object = field(repr=False, default=None)
    pruned: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    empty: bool = False
    numerics: Numerics = field(default_factory=Numerics, repr=False)
    _densities: dict = field(default_factory=dict, repr=False)

    @property
    def t_c(self) -> float:
        return self.characteristic.t_c

    @property
    def miss_rates(self) -> np.ndarray:
        return np.array([s.miss_rate for s in self.stats])

    def index_of(self, item_id: int) -> int:
        hits = np.nonzero(self.ids == item_id)[0]
        if hits.size == 0:
            raise KeyError(f"item {item_id} does not reach level {self.level}")
        return int(hits[0])

    def miss_density(self, item_id: int) -> TabulatedDensity:
        """Inter-miss density of ``item_id`` leaving this level (computed on demand)."""
        if item_id not in self._densities:
            k = self.index_of(item_id)
            law = self.laws[k] if not isinstance(self.laws, RenewalDistribution) or self.laws.batch_shape \
                else self.laws
            if self.characteristic.degenerate:
                raise NoMissStream(f"level {self.level} never misses")
            n = self.numerics
            self._densities[item_id] = miss_pdf(law, self.t_c, eps=n.eps, grid_factor=n.grid_factor)
        return self._densities[item_id]

    def to_dict(self):
        return {
            "level": self.level,
            **self.characteristic.to_dict(),
            "items": int(self.ids.size),
            "input_rate": float(self.rates.sum()) if self.rates.size else 0.0,
            "hit_ratio": self.hit_ratio,
            "hit_ratio_origin": self.hit_ratio_origin,
            "miss_rate": float(self.miss_rates.sum()) if self.stats else 0.0,
            "pruned": int(self.pruned.size),
            "empty": self.empty,
        }


def remesh(density: TabulatedDensity, ratio: float = 0.02, span: float = 2.0) -> TabulatedDensity:
    """Coarsen the far tail of a grid density.

    Keeps every node in ``[t0, t0 * (1 + span)]`` and beyond that a subset
    whose spacing grows geometrically by ``ratio``.  The coarse part is
    rescaled so the total mass is unchanged.
    """
    x, f = density.nodes, density.values
    t0 = density.t0
    keep_to = t0 + span * max(t0, density.step)
    n_keep = int(np.searchsorted(x, keep_to, side="right"))
    if n_keep >= x.size - 2:
        return density
    base = x[n_keep - 1] - t0
    k = np.arange(1, int(math.log((x[-1] - t0) / base) / math.log1p(ratio)) + 2)
    targets = t0 + base * (1 + ratio) ** k
    picks = np.unique(np.clip(np.searchsorted(x, targets), n_keep, x.size - 1))
    if picks.size + n_keep >= x.size:
        return density
    idx = np.concatenate([np.arange(n_keep), picks])
    if idx[-1] != x.size - 1:
        idx = np.append(idx, x.size - 1)
    xs, fs = x[idx], f[idx].copy()
    seg = lambda a, b: np.sum(np.diff(a) * (b[:-1] + b[1:]) / 2)
    old_tail = float(seg(x[n_keep - 1:], f[n_keep - 1:]))
    joint = (xs[n_keep] - xs[n_keep - 1]) * fs[n_keep - 1] / 2
    new_tail = float(seg(xs[n_keep - 1:], fs[n_keep - 1:]))
    if new_tail - joint > 0:
        fs[n_keep:] *= (old_tail - joint) / (new_tail - joint)
    return TabulatedDensity(xs, fs, step=density.step, terms=density.terms,
                            series_residual=density.series_residual)


def evaluate_level(input_laws, rates, cache, level: int = 1, ids=None, origin_rates=None,
                   numerics: Numerics | None = None) -> LevelReport:
    """Solve one cache level and characterise its miss stream.

    Parameters
    ----------
    input_laws : RenewalDistribution or sequence
        Per-item inter-arrival laws offered to this cache (batched or a list,
        e.g. the upstream level's inter-miss densities).
    rates : array_like
        Per-item request rates at this level.
    cache : CacheConfig or int
    ids : array_like, optional
        Item ids (default ``1..N``).
    origin_rates : array_like, optional
        Rates of the same items at the origin, for ``hit_ratio_origin``.

    Raises
    ------
    EmptyStream
        If no item is offered.
    """
    numerics = numerics or Numerics()
    cache = cache if isinstance(cache, CacheConfig) else CacheConfig(cache)
    rates = np.asarray(rates, dtype=float)
    if rates.size == 0:
        raise EmptyStream(f"no traffic reaches level {level}")
    if np.any(~(rates > 0)):
        raise ValueError("rates must be > 0 for every item present at a level")
    ids = np.arange(1, rates.size + 1) if ids is None else np.asarray(ids)
    origin_rates = rates if origin_rates is None else np.asarray(origin_rates, dtype=float)

    ct = solve_tc_laws(input_laws, rates, cache.capacity, numerics.solver_tol)
    H = hit_probabilities(input_laws, rates.size, ct.t_c)
    stats = miss_stream_stats(input_laws, rates, ct.t_c, ids)
    hit_ratio = math.fsum(rates * H) / math.fsum(rates)
    hit_ratio_origin = math.fsum(origin_rates * H) / math.fsum(origin_rates)
    miss_rates = np.array([s.miss_rate for s in stats])
    pruned = ids[miss_rates < numerics.rate_floor]
    if pruned.size and not ct.degenerate:
        log.info("level %d: %d items below miss-rate floor %.1e dropped downstream",
                 level, pruned.size, numerics.rate_floor)
    return LevelReport(level, ct, ids, rates, H, float(hit_ratio), float(hit_ratio_origin),
                       stats, laws=input_laws, pruned=pruned, numerics=numerics)


def _empty_report(level, cache, numerics):
    ct = CharacteristicTime(math.nan, 0.0, 0, cache.capacity, degenerate=False)
    return LevelReport(level, ct, np.zeros(0, dtype=int), np.zeros(0), np.zeros(0), math.nan, math.nan,
                       [], pruned=np.zeros(0, dtype=int), empty=True, numerics=numerics)


def evaluate_tandem(scenario: TandemScenario, numerics: Numerics | None = None) -> list:
    """Evaluate every level of a tandem, feeding each one the previous misses.

    Levels that receive no traffic are reported with ``empty=True``.
    """
    numerics = numerics or Numerics()
    cat = scenario.catalog
    laws, rates, ids = cat.laws, cat.rates, cat.ids
    origin = cat.rates
    reports = []
    for k, cache in enumerate(scenario.caches, start=1):
        try:
            rep = evaluate_level(laws, rates, cache, level=k, ids=ids, origin_rates=origin,
                                 numerics=numerics)
        except EmptyStream:
            log.info("level %d receives no traffic", k)
            reports.append(_empty_report(k, cache, numerics))
            continue
        reports.append(rep)
        if k == scenario.levels:
            break
        if rep.characteristic.degenerate:
            laws, rates, ids, origin = [], np.zeros(0), np.zeros(0, dtype=int), np.zeros(0)
            continue
        keep = np.nonzero(rep.miss_rates >= numerics.rate_floor)[0]
        nxt = []
        scalar_laws = list(iter_laws(rep.laws, rep.ids.size)) if isinstance(rep.laws, RenewalDistribution) \
            else rep.laws
        for i in keep:
            dens = miss_pdf(scalar_laws[i], rep.t_c, eps=numerics.eps, grid_factor=numerics.grid_factor)
            rep._densities[int(rep.ids[i])] = dens
            nxt.append(remesh(dens, numerics.remesh_ratio, numerics.remesh_span))
        laws, rates, ids, origin = nxt, rep.miss_rates[keep], rep.ids[keep], origin[keep]
    return reports
