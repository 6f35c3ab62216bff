"""Per-item statistics of an LRU cache's miss stream.

A miss is caused by one gap longer than ``t_c`` preceded by a geometric
number ``K`` of gaps no longer than ``t_c`` (the hits in between).  The
inter-miss time is therefore ``T_h + S`` with ``S`` the sum of ``K`` low
gaps, and its density is ``f_h * sum_k f_l^{*k}``.

The density is computed on a lattice of step ``t_c / grid_factor`` so that
``t_c`` is a grid point.  Both truncated input densities are binned onto the
lattice by linear (mass and mean preserving) assignment, convolution powers
are then exact lattice convolutions.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import fft as sfft
from scipy import signal

from .distributions import RenewalDistribution, TabulatedDensity

__all__ = [
    "NoMissStream",
    "MissStreamStats",
    "series_terms",
    "miss_pdf",
    "miss_mean",
    "miss_variance",
    "miss_cv2",
    "miss_popularity",
    "miss_stream_stats",
    "write_stats_csv",
    "write_pdf_csv",
]

log = logging.getLogger(__name__)

DEFAULT_EPS = 1e-6
DEFAULT_GRID_FACTOR = 200
# lattice sums with at most this many terms are accumulated one convolution at a time
DIRECT_TERMS = 40
TAIL_TOL = 1e-12
MAX_NODES = 1 << 20


class NoMissStream(ValueError):
    """The item always hits (``H == 1``), so it has no miss stream."""


@dataclass(frozen=True)
class MissStreamStats:
    """Closed-form miss-stream statistics of one item.

    ``q_miss`` is the unnormalised miss popularity ``q_x (1 - H_x)``.
    """

    item: int
    hit: float
    mean: float
    variance: float
    cv2: float
    miss_rate: float
    q_miss: float

    def to_dict(self):
        return asdict(self)


def series_terms(H: float, eps: float = DEFAULT_EPS) -> int:
    """Smallest ``K >= 0`` with ``H**(K + 1) < eps``."""
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    if H <= 0:
        return 0
    if H >= 1:
        raise NoMissStream("H == 1: the series never terminates")
    K = max(0, math.ceil(math.log(eps) / math.log(H)) - 1)
    while H ** (K + 1) >= eps:
        K += 1
    while K > 0 and H**K < eps:
        K -= 1
    return K


def miss_mean(mean_in, H):
    """Mean inter-miss time ``mean_in / (1 - H)``."""
    H = np.asarray(H, dtype=float)
    if np.any(H >= 1):
        raise NoMissStream("H == 1: no miss stream")
    out = np.asarray(mean_in, dtype=float) / (1.0 - H)
    return float(out) if out.ndim == 0 else out


def _pieces(d, t_c):
    t_c = np.asarray(t_c, dtype=float)
    if np.any(t_c <= 0):
        raise ValueError("t_c must be > 0")
    H = np.asarray(d.cdf(t_c), dtype=float)
    miss = np.asarray(d.sf(t_c), dtype=float)
    if np.any(miss <= 0):
        raise NoMissStream("H == 1: no miss stream")
    return H, miss, np.asarray(d.mean), np.asarray(d.partial_mean(t_c))


def miss_variance(d: RenewalDistribution, t_c):
    """Variance of the inter-miss time.

    ``Var/(1-H) - H (E^2 - 2 E E_low) / (1-H)^2`` with ``E_low`` the mean of
    gaps no longer than ``t_c``; ``H E_low`` is the partial mean, so ``H = 0``
    needs no special case.
    """
    H, miss, E, pm = _pieces(d, t_c)
    out = np.asarray(d.variance) / miss - (H * E * E - 2 * E * pm) / miss**2
    return float(out) if out.ndim == 0 else out


def miss_cv2(d: RenewalDistribution, t_c):
    """Squared CV of the inter-miss time, ``C^2 (1-H) + H (2 E_low / E - 1)``."""
    H, miss, E, pm = _pieces(d, t_c)
    out = np.asarray(d.cv2) * miss + 2 * pm / E - H
    return float(out) if out.ndim == 0 else out


def miss_popularity(catalog, per_item_H):
    """Miss-stream popularity.

    Returns
    -------
    q_miss : ndarray
        ``q_x (1 - H_x)``; sums to the aggregate miss ratio.
    q_miss_normalized : ndarray
        ``q_miss / sum(q_miss)``.

    Raises
    ------
    NoMissStream
        If the aggregate hit ratio is exactly one.
    """
    weights = getattr(catalog, "rates", catalog)
    q = np.asarray(weights, dtype=float)
    q = q / q.sum()
    per_item_H = np.asarray(per_item_H, dtype=float)
    if per_item_H.shape != q.shape:
        raise ValueError(f"expected {q.size} hit probabilities, got {per_item_H.size}")
    q_miss = q * (1.0 - per_item_H)
    total = math.fsum(q_miss)
    if total <= 0:
        raise NoMissStream("aggregate hit ratio is 1: normalised miss popularity undefined")
    return q_miss, q_miss / total


def miss_stream_stats(laws, rates, t_c, ids=None) -> list:
    """Closed-form :class:`MissStreamStats` for every item of one cache level.

    Items that never miss get an infinite mean and NaN variance.
    """
    rates = np.asarray(rates, dtype=float)
    n = rates.size
    ids = np.arange(1, n + 1) if ids is None else np.asarray(ids)
    q = rates / rates.sum()
    if math.isinf(t_c):
        return [MissStreamStats(int(i), 1.0, math.inf, math.nan, math.nan, 0.0, 0.0) for i in ids]
    if isinstance(laws, RenewalDistribution):
        H = np.broadcast_to(np.asarray(laws.cdf(t_c), dtype=float), (n,))
        miss = np.broadcast_to(np.asarray(laws.sf(t_c), dtype=float), (n,))
        E = np.broadcast_to(np.asarray(laws.mean, dtype=float), (n,))
        pm = np.broadcast_to(np.asarray(laws.partial_mean(t_c), dtype=float), (n,))
        V = np.broadcast_to(np.asarray(laws.variance, dtype=float), (n,))
    else:
        laws = list(laws)
        H = np.array([d.cdf(t_c) for d in laws])
        miss = np.array([d.sf(t_c) for d in laws])
        E = np.array([d.mean for d in laws])
        pm = np.array([d.partial_mean(t_c) for d in laws])
        V = np.array([d.variance for d in laws])
    out = []
    with np.errstate(divide="ignore", invalid="ignore"):
        mean = np.where(miss > 0, E / miss, math.inf)
        var = np.where(miss > 0, V / miss - (H * E * E - 2 * E * pm) / miss**2, math.nan)
        cv2 = np.where(miss > 0, (V / E**2) * miss + 2 * pm / E - H, math.nan)
    for k in range(n):
        out.append(MissStreamStats(int(ids[k]), float(H[k]), float(mean[k]), float(var[k]),
                                   float(cv2[k]), float(rates[k] * miss[k]), float(q[k] * miss[k])))
    return out


# lattice construction ---------------------------------------------------------------


def _linear_bin(mass, first, edges, step):
    """Split cell masses onto cell end points, preserving mass and mean."""
    right = np.clip((first - edges[:-1] * mass) / step, 0.0, mass)
    w = np.zeros(edges.size)
    w[:-1] += mass - right
    w[1:] += right
    return w


def _low_lattice(d, t_c, m):
    step = t_c / m
    edges = step * np.arange(m + 1)
    edges[-1] = t_c
    F = np.asarray(d.cdf(edges))
    P = np.asarray(d.partial_mean(edges))
    return _linear_bin(np.diff(F), np.diff(P), edges, step)


def _high_lattice(d, t_c, step, n_cells):
    edges = t_c + step * np.arange(n_cells + 1)
    S = np.asarray(d.sf(edges))
    P = np.asarray(d.partial_mean(edges))
    mass = np.maximum(S[:-1] - S[1:], 0.0)
    first = np.maximum(np.diff(P), 0.0)
    return _linear_bin(mass, first, edges, step)


def _chernoff_window(l, H, step, delta):
    """Length ``s`` with ``(1 - H) * sum_k l^{*k}[> s] <= delta``."""
    idx = np.arange(l.size, dtype=float)
    best = math.inf
    for theta in np.geomspace(1e-6, 50.0, 400) / l.size:
        with np.errstate(over="ignore"):
            mgf = float(np.dot(l, np.exp(theta * idx)))
        if not mgf < 1:
            break
        s = (math.log((1 - H) / (1 - mgf)) - math.log(delta)) / theta
        best = min(best, s)
    return max(best, 1.0) * step


def _excess_sum_direct(l, K):
    """``sum_{k=1..K} l^{*k}`` accumulated one convolution at a time."""
    acc = np.zeros(K * (l.size - 1) + 1)
    term = l.copy()
    acc[: term.size] += term
    for _ in range(1, K):
        term = np.maximum(signal.fftconvolve(term, l), 0.0)
        acc[: term.size] += term
    return acc


def _excess_sum_fourier(l, K, n_out):
    """``sum_{k=1..K} l^{*k}`` via ``L (1 - L^K) / (1 - L)`` on a padded DFT."""
    n_fft = sfft.next_fast_len(max(n_out, l.size), real=True)
    L = sfft.rfft(l, n_fft)
    A = L * (1 - L**K) / (1 - L)
    return np.maximum(sfft.irfft(A, n_fft)[:n_out], 0.0)


def _far_levels(t_far, t_c, step, r):
    """Coarsening level of the excess lattice used at each far node."""
    spacing = r * (t_far - t_c)
    return np.maximum(np.floor(np.log2(np.maximum(spacing / step, 1.0))), 0).astype(int)


def _plan(d, t_c, H, K, m, tail_tol, budget):
    """Grid layout: uniform part plus, when it pays off, a geometric far tail."""
    step = t_c / m
    r = 1.0 / m
    low = _low_lattice(d, t_c, m) if K > 0 else None
    if K == 0:
        n_S = 1
    else:
        n_S = K * m + 1
        if K > DIRECT_TERMS:
            n_S = min(n_S, int(math.ceil(_chernoff_window(low, H, step, tail_tol) / step)) + 1)
    t_end = max(float(d.tail_extent(tail_tol)), t_c) + n_S * step
    n_total = int(math.ceil((t_end - t_c) / step))
    n_fine = min(n_total, n_S + 2 * m)
    t_far0 = t_c + n_fine * step
    n_far = int(math.ceil(math.log(max((t_end - t_c) / (t_far0 - t_c), 1.0)) / math.log1p(r)))
    use_far = False
    if n_fine < n_total and n_fine + n_far <= budget:
        far = t_c + (t_far0 - t_c) * (1 + r) ** np.arange(1, n_far + 1)
        far_cost = n_fine + 0.2 * float(np.sum(n_S / 2.0 ** _far_levels(far, t_c, step, r) + 1))
        use_far = far_cost < n_total or n_total > budget
    if not use_far:
        n_fine = n_total
    return dict(step=step, low=low, n_S=n_S, n_fine=n_fine, n_far=n_far, use_far=use_far,
                t_far0=t_far0, n_grid=n_fine + (n_far if use_far else 0))


def _coarsen(A):
    """Linear binning of a lattice onto every other point."""
    if A.size % 2 == 0:
        A = np.append(A, 0.0)
    out = A[0::2].copy()
    half = A[1::2] / 2
    out[:-1] += half
    out[1:] += half
    return out


def _far_values(d, A, t_c, step, far, r):
    """Density ``f_h(t) + sum_i A_i f_h(t - u_i)`` at far nodes.

    The excess lattice is rebinned to a step no larger than the local node
    spacing; the induced error is of the same order as linear interpolation
    between far nodes.
    """
    levels = _far_levels(far, t_c, step, r)
    vals = np.empty(far.size)
    Aj, j = A, 0
    for level in range(int(levels.max()) + 1):
        while j < level:
            Aj, j = _coarsen(Aj), j + 1
        idx = np.nonzero(levels == level)[0]
        if idx.size == 0:
            continue
        u = step * 2.0**level * np.arange(Aj.size)
        chunk = max(1, 4_000_000 // Aj.size)
        for s in range(0, idx.size, chunk):
            t = far[idx[s:s + chunk]]
            x = t[:, None] - u[None, :]
            fx = np.where(x >= t_c, np.asarray(d.pdf(np.maximum(x, 0.0))), 0.0)
            vals[idx[s:s + chunk]] = np.asarray(d.pdf(t)) + fx @ Aj
    return np.maximum(vals, 0.0)


def miss_pdf(d: RenewalDistribution, t_c: float, eps: float = DEFAULT_EPS,
             grid_factor: int = DEFAULT_GRID_FACTOR, tail_tol: float = TAIL_TOL,
             direct_terms: int = DIRECT_TERMS, max_nodes: int = MAX_NODES) -> TabulatedDensity:
    """Tabulate the inter-miss density of one item behind a cache with ``t_c``.

    Parameters
    ----------
    d : RenewalDistribution
        Scalar inter-arrival law offered to the cache.
    t_c : float
        Characteristic time; becomes the support offset of the result.
    eps : float
        The series stops at the smallest ``K`` with ``H**(K+1) < eps``.
    grid_factor : int
        ``t_c / step``.  The geometric tail (used when cheaper than the
        uniform one) grows node spacing by ``1 / grid_factor`` relative.
    max_nodes : int
        Node budget; a grid that would exceed it is built with a coarser
        step instead (``t_c`` remains a grid point).
    tail_tol : float
        Tail probability (and relative second moment) left outside the grid.

    Returns
    -------
    TabulatedDensity
        ``terms`` records ``K`` and ``series_residual`` records ``H**(K+1)``.

    Raises
    ------
    NoMissStream
        If ``H == 1``.
    """
    if not t_c > 0 or math.isinf(t_c):
        raise ValueError("t_c must be positive and finite")
    if not 0 < eps <= 1e-3:
        raise ValueError("eps must lie in (0, 1e-3]")
    if d.batch_shape:
        raise ValueError("miss_pdf needs a scalar law")
    m = int(grid_factor)
    if m < 2:
        raise ValueError("grid_factor must be >= 2")
    H = float(d.cdf(t_c))
    miss = float(d.sf(t_c))
    if miss <= 0:
        raise NoMissStream("H == 1: no miss stream")
    K = series_terms(H, eps)
    budget = int(max_nodes)
    plan = _plan(d, t_c, H, K, m, tail_tol, budget)
    if plan["n_grid"] > budget:
        # coarsen the step (t_c stays a grid point) so the grid fits the node budget
        m = max(2, int(m * budget / plan["n_grid"]))
        log.info("miss_pdf: H=%.6g needs %d nodes; grid factor lowered to %d", H, plan["n_grid"], m)
        plan = _plan(d, t_c, H, K, m, tail_tol, budget)
    step, n_fine, n_far, use_far, t_far0 = (plan[k] for k in ("step", "n_fine", "n_far", "use_far", "t_far0"))
    r = 1.0 / m

    # excess lattice A = sum_{k=1..K} l^{*k}, supported on [0, K t_c]
    if K == 0:
        A = np.zeros(1)
    elif K <= direct_terms:
        A = _excess_sum_direct(plan["low"], K)
    else:
        A = _excess_sum_fourier(plan["low"], K, plan["n_S"])
    nz = np.nonzero(A)[0]
    A = A[: nz[-1] + 1] if nz.size else np.zeros(1)
    n_S = A.size

    hl = _high_lattice(d, t_c, step, n_fine + 1)
    p = hl[: n_fine + 1].copy()
    if n_S > 1 or A[0] > 0:
        p += signal.oaconvolve(hl, A)[: n_fine + 1] if n_S > 1 else hl[: n_fine + 1] * A[0]
    p = np.maximum(p, 0.0)
    fine = p / step
    fine[0] *= 2.0
    nodes = t_c + step * np.arange(n_fine + 1)

    if use_far:
        far = t_c + (t_far0 - t_c) * (1 + r) ** np.arange(1, n_far + 1)
        u = step * np.arange(n_S)
        tail_mass = float(d.sf(t_far0)) + float(np.dot(A, np.asarray(d.sf(np.maximum(t_far0 - u, t_c)))))
        vals = _far_values(d, A, t_c, step, far, r)
        # PL integral of the far part against its exact mass (drop what lies past the grid)
        beyond = float(d.sf(far[-1])) + float(np.dot(A, np.asarray(d.sf(np.maximum(far[-1] - u, t_c)))))
        x = np.concatenate([[t_far0], far])
        y = np.concatenate([[fine[-1]], vals])
        pl = float(np.sum(np.diff(x) * (y[:-1] + y[1:]) / 2))
        joint = (x[1] - x[0]) * y[0] / 2
        target = tail_mass - beyond
        if pl - joint > 0 and target > joint:
            vals *= (target - joint) / (pl - joint)
        nodes = np.concatenate([nodes, far])
        fine = np.concatenate([fine, vals])

    log.debug("miss_pdf: H=%.6g K=%d lattice=%d nodes=%d", H, K, n_S, nodes.size)
    return TabulatedDensity(nodes, fine, step=step, terms=K, series_residual=H ** (K + 1) if H > 0 else 0.0)


# CSV emitters ----------------------------------------------------------------------


def write_stats_csv(path, stats, digits: int = 6):
    """Per-item table: ``x, H, miss_mean, miss_var, miss_cv2, q_miss``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "H", "miss_mean", "miss_var", "miss_cv2", "q_miss"])
        for s in stats:
            w.writerow([s.item] + [f"{v:.{digits}g}" for v in (s.hit, s.mean, s.variance, s.cv2, s.q_miss)])


def write_pdf_csv(path, density: TabulatedDensity, digits: int = 6):
    """Grid density as ``t, pdf`` rows."""
    density.to_csv(path, digits=digits)
