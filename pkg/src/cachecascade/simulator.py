"""Discrete-event simulation of a tandem of LRU caches.

Every item issues requests as an independent renewal process started in
equilibrium (the first arrival is a forward-recurrence time).  The per-item
processes are merged in time order, and each request walks down the tandem
until some level holds the item, or it reaches the origin.  On the way back
the item is inserted at every level that missed (leave-a-copy-everywhere).
There is no latency between levels.
"""
from __future__ import annotations

import json
import logging
import math
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sps

from .cascade import TandemScenario
from .distributions import RenewalDistribution, iter_laws

try:
    from numba import njit
except ImportError:  # pragma: no cover - pure-Python fallback, same semantics
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f

__all__ = [
    "LRUCache",
    "SimConfig",
    "SimReport",
    "SimConfigError",
    "EmptyTrace",
    "default_warmup",
    "TandemLRU",
    "replay",
    "run_sim",
    "miss_trace_histogram",
    "ks_against_density",
    "lag1_autocorrelation",
]

log = logging.getLogger(__name__)

SEGMENT = 2_000_000


class SimConfigError(ValueError):
    """Invalid simulation configuration."""


class EmptyTrace(ValueError):
    """A traced item produced no miss inter-arrival gaps."""


class LRUCache:
    """LRU set of item keys.

    ``OrderedDict`` is a hash table threaded by a doubly linked list, so
    lookup, promotion, insertion and eviction are all O(1).
    """

    def __init__(self, capacity: int):
        if int(capacity) != capacity or capacity < 1:
            raise SimConfigError(f"cache capacity must be a positive integer, got {capacity!r}")
        self.capacity = int(capacity)
        self._d = OrderedDict()

    def __len__(self):
        return len(self._d)

    def __contains__(self, key):
        return key in self._d

    def lookup(self, key) -> bool:
        """Return True on a hit and promote ``key`` to most recent."""
        d = self._d
        if key in d:
            d.move_to_end(key)
            return True
        return False

    def insert(self, key):
        """Insert ``key`` as most recent, evicting the least recent if full.

        Returns the evicted key or None.
        """
        d = self._d
        d[key] = None
        if len(d) > self.capacity:
            return d.popitem(last=False)[0]
        return None

    def access(self, key) -> bool:
        """Lookup followed by insertion on a miss."""
        if self.lookup(key):
            return True
        self.insert(key)
        return False

    def keys(self):
        """Keys from least to most recently used."""
        return list(self._d)


def default_warmup(capacities) -> int:
    return int(max(10 * sum(capacities), 100_000))


@dataclass(frozen=True)
class SimConfig:
    """What to simulate and for how long.

    ``warmup`` and ``measured`` count level-1 requests.  ``warmup=None``
    picks ``max(10 * sum(C), 1e5)``.  ``trace`` lists item ids whose miss
    gaps are recorded at every level (``"all"`` traces every item).
    """

    scenario: TandemScenario
    measured: int = 1_000_000
    warmup: int | None = None
    seed: int = 0
    trace: tuple = ()

    def __post_init__(self):
        if not isinstance(self.scenario, TandemScenario):
            raise SimConfigError("scenario must be a TandemScenario")
        if int(self.measured) != self.measured or self.measured < 1:
            raise SimConfigError("measured must be an integer >= 1")
        if self.warmup is not None and (int(self.warmup) != self.warmup or self.warmup < 0):
            raise SimConfigError("warmup must be an integer >= 0")
        if self.trace != "all":
            ids = set(int(i) for i in self.scenario.catalog.ids)
            bad = [i for i in self.trace if int(i) not in ids]
            if bad:
                raise SimConfigError(f"traced items not in the catalog: {bad}")
            object.__setattr__(self, "trace", tuple(int(i) for i in self.trace))

    @property
    def capacities(self):
        return [c.capacity for c in self.scenario.caches]

    @property
    def warmup_requests(self) -> int:
        return default_warmup(self.capacities) if self.warmup is None else int(self.warmup)


@dataclass(eq=False)
class SimReport:
    """Counts and traces from one simulation run.

    ``requests[k]``, ``hits[k]`` and ``misses[k]`` are per-item arrays for
    level ``k`` (0-based) in catalog order; the misses of level k are the
    requests of level k+1.  ``gaps[(level, item_id)]`` holds consecutive
    miss inter-arrival times at a 1-based level.
    """

    ids: np.ndarray
    requests: list
    hits: list
    misses: list
    gaps: dict
    elapsed: float
    seed: int
    warmup: int
    measured: int
    traced: tuple = ()
    autocorrelation: dict = field(default_factory=dict)

    @property
    def levels(self) -> int:
        return len(self.hits)

    def hit_ratio(self, level: int = 1) -> float:
        """Aggregate hit ratio of a 1-based level over the requests it saw."""
        req = int(self.requests[level - 1].sum())
        return float(self.hits[level - 1].sum() / req) if req else math.nan

    def item_hit_ratio(self, level: int = 1) -> np.ndarray:
        req = self.requests[level - 1]
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(req > 0, self.hits[level - 1] / np.maximum(req, 1), np.nan)

    def miss_frequency(self, level: int = 1) -> np.ndarray:
        """Per-item share of all level-1 requests that miss at ``level``."""
        return self.misses[level - 1] / self.requests[0].sum()

    def to_dict(self):
        def r12(v):
            return float(f"{v:.12g}")

        levels = []
        for k in range(self.levels):
            levels.append({
                "level": k + 1,
                "requests": int(self.requests[k].sum()),
                "hits": int(self.hits[k].sum()),
                "misses": int(self.misses[k].sum()),
                "hit_ratio": None if math.isnan(self.hit_ratio(k + 1)) else r12(self.hit_ratio(k + 1)),
                "items": {
                    "id": [int(i) for i in self.ids],
                    "hits": [int(h) for h in self.hits[k]],
                    "misses": [int(m) for m in self.misses[k]],
                },
            })
        traces = []
        for (lvl, item), g in sorted(self.gaps.items()):
            rho = self.autocorrelation.get((lvl, item))
            traces.append({"level": lvl, "item": item, "samples": int(g.size),
                           "lag1_autocorrelation": None if rho is None or math.isnan(rho) else r12(rho)})
        return {
            "seed": self.seed,
            "warmup": self.warmup,
            "measured": self.measured,
            "elapsed": r12(self.elapsed),
            "levels": levels,
            "traces": traces,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)


class TandemLRU:
    """Array-backed LRU tandem used by the simulator.

    Items are small integers, so each level keeps its recency list as
    ``prev``/``nxt`` index arrays with a membership flag: hit, promotion,
    insertion and eviction are O(1).  The state persists across calls to
    :meth:`replay`, which lets long runs be fed in segments.
    """

    def __init__(self, capacities, n_items: int):
        caps = np.asarray([int(c) for c in capacities], dtype=np.int64)
        if caps.size == 0 or np.any(caps < 1):
            raise SimConfigError("every cache capacity must be >= 1")
        depth = caps.size
        self.caps = caps
        self.prev = np.full((depth, n_items), -1, dtype=np.int64)
        self.nxt = np.full((depth, n_items), -1, dtype=np.int64)
        self.inside = np.zeros((depth, n_items), dtype=np.bool_)
        self.head = np.full(depth, -1, dtype=np.int64)
        self.tail = np.full(depth, -1, dtype=np.int64)
        self.size = np.zeros(depth, dtype=np.int64)

    def replay(self, items) -> np.ndarray:
        """Serve ``items`` in order; returns the 0-based serving level per request.

        ``len(capacities)`` means the request went to the origin.
        """
        items = np.ascontiguousarray(items, dtype=np.int64)
        served = np.empty(items.size, dtype=np.int8)
        _replay_kernel(items, self.caps, self.prev, self.nxt, self.inside,
                       self.head, self.tail, self.size, served)
        return served

    def contents(self, level: int = 0):
        """Items at a 0-based level from most to least recently used."""
        out, x = [], int(self.head[level])
        while x >= 0:
            out.append(x)
            x = int(self.nxt[level, x])
        return out


@njit(cache=True)
def _replay_kernel(items, caps, prev, nxt, inside, head, tail, size, served):  # pragma: no cover
    depth = caps.size
    for i in range(items.size):
        x = items[i]
        k = 0
        while k < depth:
            if inside[k, x]:
                if head[k] != x:
                    p = prev[k, x]
                    n = nxt[k, x]
                    nxt[k, p] = n
                    if n >= 0:
                        prev[k, n] = p
                    else:
                        tail[k] = p
                    prev[k, x] = -1
                    nxt[k, x] = head[k]
                    prev[k, head[k]] = x
                    head[k] = x
                break
            k += 1
        # leave a copy at every level that missed
        for j in range(k):
            nxt[j, x] = head[j]
            prev[j, x] = -1
            if head[j] >= 0:
                prev[j, head[j]] = x
            else:
                tail[j] = x
            head[j] = x
            inside[j, x] = True
            size[j] += 1
            if size[j] > caps[j]:
                t = tail[j]
                p = prev[j, t]
                inside[j, t] = False
                prev[j, t] = -1
                tail[j] = p
                nxt[j, p] = -1
                size[j] -= 1
        served[i] = k


def replay(items, capacities, n_items: int | None = None) -> np.ndarray:
    """Run a request sequence through a fresh tandem.

    Returns ``served`` with ``served[i]`` the 0-based level that hit request
    ``i``, or ``len(capacities)`` for an origin fetch.
    """
    items = np.asarray(items, dtype=np.int64)
    n = int(items.max()) + 1 if n_items is None else int(n_items)
    return TandemLRU(capacities, n).replay(items)


class _ArrivalStream:
    """Merged request stream of independent per-item renewal processes.

    Each item keeps a buffer of its own future arrivals; :meth:`until`
    releases everything before a time bound in time order.  The first
    arrival of every item is a forward-recurrence time, so the superposition
    is stationary from time 0.
    """

    def __init__(self, laws, n, rng):
        self.rng = rng
        self.laws = list(iter_laws(laws, n))
        self.means = np.array([d.mean for d in self.laws], dtype=float)
        self.pending = [np.atleast_1d(np.asarray(d.sample_residual(rng), dtype=float))
                        for d in self.laws]

    def until(self, t_end: float):
        rng = self.rng
        emitted, counts = [], np.zeros(len(self.laws), dtype=np.int64)
        for k, d in enumerate(self.laws):
            buf = self.pending[k]
            while buf[-1] < t_end:
                m = int(1.1 * (t_end - buf[-1]) / self.means[k]) + 8
                m = min(m, 1 << 22)
                buf = np.concatenate([buf, buf[-1] + np.cumsum(np.asarray(d.sample(rng, m), dtype=float))])
            cut = int(np.searchsorted(buf, t_end, side="left"))
            emitted.append(buf[:cut])
            counts[k] = cut
            self.pending[k] = buf[cut:]
        times = np.concatenate(emitted)
        items = np.repeat(np.arange(len(self.laws), dtype=np.int64), counts)
        order = np.argsort(times)  # continuous times: ties have probability 0
        return times[order], items[order]


def lag1_autocorrelation(gaps) -> float:
    gaps = np.asarray(gaps, dtype=float)
    if gaps.size < 3:
        return math.nan
    a, b = gaps[:-1] - gaps.mean(), gaps[1:] - gaps.mean()
    den = float(np.sum((gaps - gaps.mean()) ** 2))
    return float(np.sum(a * b) / den) if den > 0 else math.nan


def run_sim(config: SimConfig) -> SimReport:
    """Simulate the tandem and collect per-level, per-item statistics.

    Requests are generated and served in time segments; the caches persist
    across segments.  Deterministic for a fixed config: all randomness comes
    from ``numpy.random.default_rng(config.seed)``, consumed in a fixed order.
    """
    cat = config.scenario.catalog
    caps = config.capacities
    depth = len(caps)
    warmup = config.warmup_requests
    total = warmup + int(config.measured)
    rng = np.random.default_rng(config.seed)
    stream = _ArrivalStream(cat.laws, cat.n, rng)
    tandem = TandemLRU(caps, cat.n)

    traced = tuple(int(i) for i in cat.ids) if config.trace == "all" else config.trace
    pos = {int(i): k for k, i in enumerate(cat.ids)}
    traced_mask = np.zeros(cat.n, dtype=bool)
    traced_mask[[pos[i] for i in traced]] = True

    requests = [np.zeros(cat.n, dtype=np.int64) for _ in range(depth)]
    hits = [np.zeros(cat.n, dtype=np.int64) for _ in range(depth)]
    trace_t, trace_x, trace_s = [], [], []
    seen, t_now, t_first, t_last = 0, 0.0, math.nan, math.nan
    seg_len = SEGMENT / cat.total_rate
    while seen < total:
        t_now += seg_len
        times, items = stream.until(t_now)
        if times.size > total - seen:
            times, items = times[:total - seen], items[:total - seen]
        served = tandem.replay(items)
        lo = max(0, warmup - seen)
        seen += times.size
        if lo >= times.size:
            continue
        it_m, sv_m, t_m = items[lo:], served[lo:].astype(np.int64), times[lo:]
        if math.isnan(t_first):
            t_first = float(t_m[0])
        t_last = float(t_m[-1])
        for k in range(depth):
            requests[k] += np.bincount(it_m[sv_m >= k], minlength=cat.n)
            hits[k] += np.bincount(it_m[sv_m == k], minlength=cat.n)
        if traced:
            sel = traced_mask[it_m] & (sv_m > 0)
            trace_t.append(t_m[sel])
            trace_x.append(it_m[sel])
            trace_s.append(sv_m[sel])
    misses = [r - h for r, h in zip(requests, hits)]

    gaps, rho = {}, {}
    if traced:
        tt, tx, ts = (np.concatenate(a) if a else np.zeros(0) for a in (trace_t, trace_x, trace_s))
        order = np.argsort(tx, kind="stable")
        tt, tx, ts = tt[order], tx[order].astype(np.int64), ts[order]
        bounds = np.searchsorted(tx, np.arange(cat.n + 1))
        for item in traced:
            k0 = pos[item]
            t_i, s_i = tt[bounds[k0]:bounds[k0 + 1]], ts[bounds[k0]:bounds[k0 + 1]]
            for k in range(depth):
                g = np.diff(t_i[s_i > k])
                gaps[(k + 1, item)] = g
                rho[(k + 1, item)] = lag1_autocorrelation(g)
    elapsed = t_last - t_first if config.measured > 1 else 0.0
    return SimReport(np.asarray(cat.ids), requests, hits, misses, gaps, float(elapsed),
                     config.seed, warmup, int(config.measured), traced, rho)


def miss_trace_histogram(report: SimReport, level: int, item: int, bin_width: float):
    """Normalised histogram of the traced miss gaps of ``item`` at ``level``.

    Returns ``(edges, density)`` with ``sum(density * diff(edges)) == 1``.

    Raises
    ------
    KeyError
        If the item was not traced.
    EmptyTrace
        If the trace holds no gaps.
    """
    key = (int(level), int(item))
    if key not in report.gaps:
        raise KeyError(f"item {item} was not traced at level {level}")
    g = report.gaps[key]
    if g.size == 0:
        raise EmptyTrace(f"item {item} has no miss gaps at level {level}")
    if not bin_width > 0:
        raise ValueError("bin_width must be > 0")
    nbins = max(1, int(math.ceil(g.max() / bin_width)))
    edges = np.arange(nbins + 1) * bin_width
    dens, edges = np.histogram(g, bins=edges, density=True)
    return edges, dens


def ks_against_density(samples, density: RenewalDistribution, rng, n_model: int | None = None):
    """Two-sample KS test of ``samples`` against draws from ``density``.

    Returns the scipy result (``statistic``, ``pvalue``).
    """
    samples = np.asarray(samples, dtype=float)
    draws = density.sample(rng, n_model or samples.size)
    return sps.ks_2samp(samples, draws)


def simulate_many(configs):
    """Run independent configurations one after another (each is deterministic)."""
    return [run_sim(c) for c in configs]
