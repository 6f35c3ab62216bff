"""Renewal inter-arrival laws.

Every law exposes the quantities the cache model needs: CDF, PDF, moments,
the partial first moment ``int_0^t u f(u) du`` and the survival integral
``int_0^t (1 - F(u)) du``.  The closed-form families accept array-valued
parameters, in which case one object stands for a batch of independent laws
(one per item) and every method broadcasts over the batch.
"""
from __future__ import annotations

import csv
import math
from typing import Iterable

import numpy as np
from scipy import special

__all__ = [
    "RenewalDistribution",
    "ExponentialLaw",
    "HyperExp2Law",
    "LogNormalLaw",
    "TabulatedDensity",
    "fit_hyperexp2",
    "fit_lognormal",
    "make_law",
    "FAMILIES",
]

FAMILIES = ("exponential", "hyperexp", "lognormal")


def _check_time(t):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("time argument must be nonnegative")
    return t


def _out(x):
    x = np.asarray(x, dtype=float)
    return float(x) if x.ndim == 0 else x


def _erlang2_partial_mean(rate, t):
    """int_0^t u * rate * exp(-rate u) du, accurate for small rate*t."""
    x = rate * t
    with np.errstate(over="ignore", invalid="ignore"):
        direct = -np.expm1(-x) - x * np.exp(-x)
    series = x * x * (0.5 - x * (1.0 / 3.0 - x * (0.125 - x / 30.0)))
    return np.where(x < 1e-3, series, direct) / rate


class RenewalDistribution:
    """Base class for inter-arrival laws.

    Subclasses provide ``cdf``, ``pdf``, ``partial_mean``, ``mean``,
    ``second_moment``, ``sample``, ``sample_residual`` and ``tail_extent``.
    """

    family = "abstract"

    @property
    def batch_shape(self) -> tuple:
        return ()

    def __len__(self):
        if not self.batch_shape:
            raise TypeError(f"scalar {type(self).__name__} has no len()")
        return self.batch_shape[0]

    def sf(self, t):
        return _out(1.0 - np.asarray(self.cdf(t)))

    @property
    def variance(self):
        return _out(np.asarray(self.second_moment) - np.asarray(self.mean) ** 2)

    @property
    def cv2(self):
        return _out(np.asarray(self.variance) / np.asarray(self.mean) ** 2)

    def survival_integral(self, t):
        """Return ``int_0^t (1 - F(u)) du``.

        Integration by parts gives ``t (1 - F(t)) + int_0^t u f(u) du``.
        """
        t = _check_time(t)
        return _out(t * (1.0 - np.asarray(self.cdf(t))) + np.asarray(self.partial_mean(t)))

    def truncated_mean(self, t_c):
        """Conditional mean ``E[T | T <= t_c]``.

        Raises
        ------
        ValueError
            If ``cdf(t_c) == 0`` for any element, the conditional mean is
            undefined.
        """
        t_c = _check_time(t_c)
        mass = np.asarray(self.cdf(t_c))
        if np.any(mass <= 0):
            raise ValueError("conditional mean undefined: cdf(t_c) == 0")
        return _out(np.asarray(self.partial_mean(t_c)) / mass)


class ExponentialLaw(RenewalDistribution):
    """Exponential inter-arrival times with rate ``rate`` (1/time)."""

    family = "exponential"

    def __init__(self, rate):
        self.rate = np.asarray(rate, dtype=float)
        if np.any(~(self.rate > 0)):
            raise ValueError("exponential rate must be > 0")

    def __repr__(self):
        return f"ExponentialLaw(rate={self.rate!r})"

    @property
    def batch_shape(self):
        return self.rate.shape

    def __getitem__(self, i):
        return ExponentialLaw(self.rate[i])

    def cdf(self, t):
        t = _check_time(t)
        return _out(-np.expm1(-self.rate * t))

    def sf(self, t):
        t = _check_time(t)
        return _out(np.exp(-self.rate * t))

    def pdf(self, t):
        t = _check_time(t)
        return _out(self.rate * np.exp(-self.rate * t))

    def partial_mean(self, t):
        t = _check_time(t)
        return _out(_erlang2_partial_mean(self.rate, t))

    def survival_integral(self, t):
        t = _check_time(t)
        return _out(-np.expm1(-self.rate * t) / self.rate)

    def partial_second_moment(self, t):
        t = _check_time(t)
        x = self.rate * t
        return _out((2.0 - np.exp(-x) * (x * x + 2 * x + 2)) / self.rate**2)

    @property
    def mean(self):
        return _out(1.0 / self.rate)

    @property
    def second_moment(self):
        return _out(2.0 / self.rate**2)

    def sample(self, rng, size=None):
        return rng.exponential(1.0 / self.rate, size=size)

    def sample_residual(self, rng, size=None):
        return rng.exponential(1.0 / self.rate, size=size)

    def tail_extent(self, tol=1e-12):
        # second-moment tail fraction e^-x (x^2/2 + x + 1) dominates the mass tail
        x = np.maximum(-np.log(tol), 1.0)
        for _ in range(50):
            x = -np.log(tol) + np.log(x * x / 2 + x + 1)
        return _out(x / self.rate)


class HyperExp2Law(RenewalDistribution):
    """Two-phase hyper-exponential law.

    With probability ``p`` the gap is exponential with rate ``rate1``,
    otherwise exponential with rate ``rate2``.
    """

    family = "hyperexp"

    def __init__(self, p, rate1, rate2):
        self.p, self.rate1, self.rate2 = np.broadcast_arrays(
            np.asarray(p, dtype=float), np.asarray(rate1, dtype=float), np.asarray(rate2, dtype=float)
        )
        if np.any(~((self.p > 0) & (self.p < 1))):
            raise ValueError("branch probability must lie in (0, 1)")
        if np.any(~(self.rate1 > 0)) or np.any(~(self.rate2 > 0)):
            raise ValueError("branch rates must be > 0")

    def __repr__(self):
        return f"HyperExp2Law(p={self.p!r}, rate1={self.rate1!r}, rate2={self.rate2!r})"

    @property
    def batch_shape(self):
        return self.p.shape

    def __getitem__(self, i):
        return HyperExp2Law(self.p[i], self.rate1[i], self.rate2[i])

    def _mix(self, f, t):
        return self.p * f(self.rate1, t) + (1 - self.p) * f(self.rate2, t)

    def cdf(self, t):
        t = _check_time(t)
        return _out(self._mix(lambda r, t: -np.expm1(-r * t), t))

    def sf(self, t):
        t = _check_time(t)
        return _out(self._mix(lambda r, t: np.exp(-r * t), t))

    def pdf(self, t):
        t = _check_time(t)
        return _out(self._mix(lambda r, t: r * np.exp(-r * t), t))

    def partial_mean(self, t):
        t = _check_time(t)
        return _out(self._mix(_erlang2_partial_mean, t))

    def survival_integral(self, t):
        t = _check_time(t)
        return _out(self._mix(lambda r, t: -np.expm1(-r * t) / r, t))

    def partial_second_moment(self, t):
        t = _check_time(t)

        def branch(r, t):
            x = r * t
            return (2.0 - np.exp(-x) * (x * x + 2 * x + 2)) / r**2

        return _out(self._mix(branch, t))

    @property
    def mean(self):
        return _out(self.p / self.rate1 + (1 - self.p) / self.rate2)

    @property
    def second_moment(self):
        return _out(2 * self.p / self.rate1**2 + 2 * (1 - self.p) / self.rate2**2)

    def _branch_sample(self, rng, size, w1):
        if self.batch_shape and size is None:
            size = self.batch_shape
        first = rng.random(size) < w1
        scale = np.where(first, 1.0 / self.rate1, 1.0 / self.rate2)
        return rng.exponential(1.0, size=size) * scale

    def sample(self, rng, size=None):
        return self._branch_sample(rng, size, self.p)

    def sample_residual(self, rng, size=None):
        # forward recurrence time picks a branch with probability p_i / rate_i / mean
        w1 = (self.p / self.rate1) / np.asarray(self.mean)
        return self._branch_sample(rng, size, w1)

    def tail_extent(self, tol=1e-12):
        slow = np.minimum(self.rate1, self.rate2)
        return ExponentialLaw(slow).tail_extent(tol)


class LogNormalLaw(RenewalDistribution):
    """Lognormal inter-arrival times: ``log T ~ Normal(mu, sigma**2)``."""

    family = "lognormal"

    def __init__(self, mu, sigma):
        self.mu, self.sigma = np.broadcast_arrays(np.asarray(mu, dtype=float), np.asarray(sigma, dtype=float))
        if np.any(~(self.sigma > 0)):
            raise ValueError("lognormal sigma must be > 0")

    def __repr__(self):
        return f"LogNormalLaw(mu={self.mu!r}, sigma={self.sigma!r})"

    @property
    def batch_shape(self):
        return self.mu.shape

    def __getitem__(self, i):
        return LogNormalLaw(self.mu[i], self.sigma[i])

    def _z(self, t, shift=0.0):
        with np.errstate(divide="ignore"):
            return (np.log(t) - self.mu - shift * self.sigma**2) / self.sigma

    def cdf(self, t):
        t = _check_time(t)
        return _out(special.ndtr(self._z(t)))

    def sf(self, t):
        t = _check_time(t)
        return _out(special.ndtr(-self._z(t)))

    def pdf(self, t):
        t = _check_time(t)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            z = self._z(t)
            # log space: t * sigma underflows for subnormal t
            val = np.exp(-0.5 * z * z - np.log(t) - np.log(self.sigma * math.sqrt(2 * math.pi)))
        return _out(np.where(t > 0, val, 0.0))

    def partial_mean(self, t):
        t = _check_time(t)
        return _out(np.exp(self.mu + self.sigma**2 / 2) * special.ndtr(self._z(t, 1.0)))

    def partial_second_moment(self, t):
        t = _check_time(t)
        return _out(np.exp(2 * self.mu + 2 * self.sigma**2) * special.ndtr(self._z(t, 2.0)))

    @property
    def mean(self):
        return _out(np.exp(self.mu + self.sigma**2 / 2))

    @property
    def second_moment(self):
        return _out(np.exp(2 * self.mu + 2 * self.sigma**2))

    def sample(self, rng, size=None):
        if self.batch_shape and size is None:
            size = self.batch_shape
        return rng.lognormal(self.mu, self.sigma, size=size)

    def sample_residual(self, rng, size=None):
        # length-biased lognormal is lognormal(mu + sigma^2, sigma); residual = U * length
        if self.batch_shape and size is None:
            size = self.batch_shape
        length = rng.lognormal(self.mu + self.sigma**2, self.sigma, size=size)
        return rng.random(size) * length

    def tail_extent(self, tol=1e-12):
        # second-moment tail Phi(-(z - 2 sigma)) is the binding one
        z = -special.ndtri(tol)
        return _out(np.exp(self.mu + self.sigma * (z + 2 * self.sigma)))


def fit_hyperexp2(mean, cv) -> RenewalDistribution:
    """Two-phase hyper-exponential law with the given mean and CV.

    Uses balanced means, ``p / rate1 == (1 - p) / rate2``.  At ``cv == 1``
    the two phases coincide and an :class:`ExponentialLaw` is returned.

    Examples
    --------
    >>> law = fit_hyperexp2(1.0, 4.0)
    >>> round(law.second_moment, 9)
    17.0
    """
    mean = np.asarray(mean, dtype=float)
    if np.any(~(mean > 0)):
        raise ValueError("mean must be > 0")
    if not cv >= 1:
        raise ValueError(f"cv={cv} is infeasible for a hyper-exponential law (needs cv >= 1)")
    if cv == 1:
        return ExponentialLaw(1.0 / mean)
    c2 = cv * cv
    p = 0.5 * (1 + math.sqrt((c2 - 1) / (c2 + 1)))
    return HyperExp2Law(np.full(mean.shape, p), 2 * p / mean, 2 * (1 - p) / mean)


def fit_lognormal(mean, cv) -> LogNormalLaw:
    """Lognormal law with the given mean and CV."""
    mean = np.asarray(mean, dtype=float)
    if np.any(~(mean > 0)):
        raise ValueError("mean must be > 0")
    if not cv > 0:
        raise ValueError("lognormal cv must be > 0")
    s2 = math.log1p(cv * cv)
    return LogNormalLaw(np.log(mean) - s2 / 2, np.full(mean.shape, math.sqrt(s2)))


def make_law(family: str, mean, cv: float = 1.0) -> RenewalDistribution:
    """Build a (possibly batched) law of ``family`` with the given mean and CV."""
    if family == "exponential":
        if cv != 1:
            raise ValueError("the exponential family has cv == 1")
        mean = np.asarray(mean, dtype=float)
        if np.any(~(mean > 0)):
            raise ValueError("mean must be > 0")
        return ExponentialLaw(1.0 / mean)
    if family == "hyperexp":
        return fit_hyperexp2(mean, cv)
    if family == "lognormal":
        return fit_lognormal(mean, cv)
    raise ValueError(f"unknown family {family!r}; expected one of {FAMILIES}")


class TabulatedDensity(RenewalDistribution):
    """A numerical density, linear between nodes and zero below ``nodes[0]``.

    The density need not integrate to one: ``mass`` is the captured
    probability, and the law's ``mean``/``variance``/sampling refer to the
    renormalised density.  Nodes are usually a uniform grid of step ``step``
    starting at the support offset, optionally followed by a coarser tail.

    Parameters
    ----------
    nodes : array_like
        Strictly increasing abscissae, ``nodes[0] >= 0``.
    values : array_like
        Nonnegative density values at ``nodes``.  ``values[0]`` is the right
        limit at the support offset.
    step : float, optional
        Step of the uniform part of the grid (informational).
    terms : int, optional
        Number of convolution terms used to build the density, if any.
    series_residual : float
        Probability mass dropped by truncating that series.
    """

    family = "tabulated"

    def __init__(self, nodes, values, step=None, terms=None, series_residual=0.0):
        x = np.ascontiguousarray(nodes, dtype=float)
        f = np.ascontiguousarray(values, dtype=float)
        if x.ndim != 1 or x.shape != f.shape or x.size < 2:
            raise ValueError("nodes and values must be 1-D arrays of equal length >= 2")
        if x[0] < 0 or np.any(np.diff(x) <= 0):
            raise ValueError("nodes must be nonnegative and strictly increasing")
        if np.any(f < 0) or not np.all(np.isfinite(f)):
            raise ValueError("density values must be finite and nonnegative")
        self.nodes, self.values = x, f
        self.step = float(step) if step is not None else float(x[1] - x[0])
        self.terms = terms
        self.series_residual = float(series_residual)
        h = np.diff(x)
        a, b = f[:-1], f[1:]
        m0 = h * (a + b) / 2
        m1 = x[:-1] * m0 + h * h * (a + 2 * b) / 6
        m2 = x[:-1] ** 2 * m0 + 2 * x[:-1] * h * h * (a + 2 * b) / 6 + h**3 * (a + 3 * b) / 12
        self._c0 = np.concatenate([[0.0], np.cumsum(m0)])
        self._c1 = np.concatenate([[0.0], np.cumsum(m1)])
        self._c2 = np.concatenate([[0.0], np.cumsum(m2)])
        if self._c0[-1] <= 0:
            raise ValueError("density carries no mass")

    @classmethod
    def uniform(cls, t0, step, values, **kw):
        """Density on the uniform grid ``t0 + step * arange(len(values))``."""
        values = np.asarray(values, dtype=float)
        return cls(t0 + step * np.arange(values.size), values, step=step, **kw)

    @classmethod
    def from_pdf(cls, pdf, t0, step, n):
        """Tabulate a callable ``pdf`` on ``n`` uniform nodes from ``t0``."""
        nodes = t0 + step * np.arange(n)
        return cls(nodes, np.asarray(pdf(nodes), dtype=float), step=step)

    def __repr__(self):
        return (
            f"TabulatedDensity(t0={self.t0:.6g}, step={self.step:.6g}, "
            f"nodes={self.nodes.size}, mass={self.mass:.12g})"
        )

    @property
    def t0(self) -> float:
        return float(self.nodes[0])

    @property
    def end(self) -> float:
        return float(self.nodes[-1])

    @property
    def mass(self) -> float:
        return float(self._c0[-1])

    def _locate(self, t):
        t = np.asarray(t, dtype=float)
        j = np.clip(np.searchsorted(self.nodes, t, side="right") - 1, 0, self.nodes.size - 2)
        x0 = self.nodes[j]
        h = self.nodes[j + 1] - x0
        s = np.clip(t - x0, 0.0, h)
        a = self.values[j]
        c = (self.values[j + 1] - a) / h
        return t, j, x0, s, a, c

    def pdf(self, t):
        t, j, x0, s, a, c = self._locate(_check_time(t))
        inside = (t >= self.nodes[0]) & (t <= self.nodes[-1])
        return _out(np.where(inside, a + c * s, 0.0))

    def cdf(self, t):
        t, j, x0, s, a, c = self._locate(_check_time(t))
        val = self._c0[j] + a * s + c * s * s / 2
        return _out(np.where(t < self.nodes[0], 0.0, val))

    def partial_mean(self, t):
        t, j, x0, s, a, c = self._locate(_check_time(t))
        m0 = a * s + c * s * s / 2
        val = self._c1[j] + x0 * m0 + a * s * s / 2 + c * s**3 / 3
        return _out(np.where(t < self.nodes[0], 0.0, val))

    def partial_second_moment(self, t):
        t, j, x0, s, a, c = self._locate(_check_time(t))
        m0 = a * s + c * s * s / 2
        m1 = a * s * s / 2 + c * s**3 / 3
        m2 = a * s**3 / 3 + c * s**4 / 4
        val = self._c2[j] + x0 * x0 * m0 + 2 * x0 * m1 + m2
        return _out(np.where(t < self.nodes[0], 0.0, val))

    @property
    def mean(self) -> float:
        return float(self._c1[-1] / self._c0[-1])

    @property
    def second_moment(self) -> float:
        return float(self._c2[-1] / self._c0[-1])

    def _invert_cdf(self, target):
        j = np.clip(np.searchsorted(self._c0, target, side="right") - 1, 0, self.nodes.size - 2)
        r = np.maximum(target - self._c0[j], 0.0)
        h = self.nodes[j + 1] - self.nodes[j]
        a = self.values[j]
        c = (self.values[j + 1] - a) / h
        disc = np.sqrt(np.maximum(a * a + 2 * c * r, 0.0))
        with np.errstate(divide="ignore", invalid="ignore"):
            s = np.where(a + disc > 0, 2 * r / (a + disc), h)
        return self.nodes[j] + np.clip(s, 0.0, h)

    def sample(self, rng, size=None):
        u = rng.random(size)
        return _out(self._invert_cdf(u * self.mass))

    def sample_residual(self, rng, size=None):
        # invert the equilibrium CDF survival_integral(t) / survival_integral(end) by bisection
        u = rng.random(size) * self.survival_integral(self.end)
        lo = np.zeros_like(np.asarray(u, dtype=float))
        hi = np.full_like(lo, self.end)
        for _ in range(64):
            mid = (lo + hi) / 2
            below = np.asarray(self.survival_integral(mid)) < u
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        return _out((lo + hi) / 2)

    def tail_extent(self, tol=1e-12):
        return self.end

    def to_csv(self, path, digits: int = 6):
        """Write the grid as a two-column CSV (``t``, ``pdf``)."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "pdf"])
            for t, f in zip(self.nodes, self.values):
                w.writerow([f"{t:.{digits}g}", f"{f:.{digits}g}"])

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        return cls([float(r["t"]) for r in rows], [float(r["pdf"]) for r in rows])


def iter_laws(laws, n: int) -> Iterable[RenewalDistribution]:
    """Yield ``n`` scalar laws from a batched law or a sequence of laws."""
    if isinstance(laws, RenewalDistribution):
        if laws.batch_shape:
            for i in range(n):
                yield laws[i]
        else:
            for _ in range(n):
                yield laws
    else:
        yield from laws
