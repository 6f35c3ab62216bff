"""Item universe: per-item request rates and inter-arrival laws."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .distributions import RenewalDistribution, iter_laws, make_law

__all__ = ["ItemCatalog", "build_zipf_catalog", "catalog_from_rates", "read_rates_csv"]


@dataclass(frozen=True, eq=False)
class ItemCatalog:
    """N items with rates ``rates[x]`` and inter-arrival laws of mean ``1/rates[x]``.

    ``laws`` is either a batched closed-form law with batch shape ``(N,)`` or
    a sequence of N scalar laws.  Items are indexed ``0 .. N-1`` in Python;
    files and reports use 1-based item ids.
    """

    rates: np.ndarray
    laws: object
    family: str = "custom"
    cv: float = float("nan")
    ids: np.ndarray = field(default=None)

    def __post_init__(self):
        rates = np.asarray(self.rates, dtype=float)
        if rates.ndim != 1 or rates.size < 1:
            raise ValueError("rates must be a non-empty 1-D array")
        if np.any(~(rates > 0)):
            raise ValueError("every item rate must be > 0 (zero-rate items are rejected)")
        object.__setattr__(self, "rates", rates)
        if isinstance(self.laws, RenewalDistribution):
            if self.laws.batch_shape not in ((), rates.shape):
                raise ValueError("batched law shape does not match the number of items")
        elif len(self.laws) != rates.size:
            raise ValueError("need exactly one law per item")
        ids = np.arange(1, rates.size + 1) if self.ids is None else np.asarray(self.ids)
        object.__setattr__(self, "ids", ids)

    @property
    def n(self) -> int:
        return self.rates.size

    def __len__(self):
        return self.rates.size

    @property
    def total_rate(self) -> float:
        return float(self.rates.sum())

    @property
    def popularity(self) -> np.ndarray:
        """q_x = rate_x / total_rate."""
        return self.rates / self.rates.sum()

    def law(self, x: int) -> RenewalDistribution:
        if isinstance(self.laws, RenewalDistribution):
            return self.laws[x] if self.laws.batch_shape else self.laws
        return self.laws[x]

    def iter_laws(self):
        return iter_laws(self.laws, self.n)


def build_zipf_catalog(n: int, alpha: float = 0.8, total_rate: float = 1000.0,
                       family: str = "exponential", cv: float = 1.0) -> ItemCatalog:
    """Zipf popularity ``q_x ~ x**-alpha`` with one shared law family and CV.

    Parameters
    ----------
    n : int
        Universe size.
    alpha : float
        Zipf exponent (``0`` gives uniform popularity).
    total_rate : float
        Aggregate request rate (1/time).
    family : {"exponential", "hyperexp", "lognormal"}
    cv : float
        Coefficient of variation of every item's inter-arrival time.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not total_rate > 0:
        raise ValueError("total_rate must be > 0")
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    weights = np.arange(1, n + 1, dtype=float) ** -alpha
    rates = total_rate * weights / weights.sum()
    return ItemCatalog(rates, make_law(family, 1.0 / rates, cv), family=family, cv=cv)


def catalog_from_rates(rates, family: str = "exponential", cv: float = 1.0, ids=None) -> ItemCatalog:
    """Catalog from an explicit rate list."""
    rates = np.asarray(rates, dtype=float)
    if np.any(~(rates > 0)):
        raise ValueError("every item rate must be > 0 (zero-rate items are rejected)")
    return ItemCatalog(rates, make_law(family, 1.0 / rates, cv), family=family, cv=cv, ids=ids)


def read_rates_csv(path):
    """Read ``item_id, rate`` rows; returns ``(ids, rates)`` sorted by id."""
    ids, rates = [], []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or {"item_id", "rate"} - set(reader.fieldnames):
            raise ValueError(f"{path}: expected columns item_id, rate")
        for line, row in enumerate(reader, start=2):
            try:
                ids.append(int(row["item_id"]))
                rates.append(float(row["rate"]))
            except ValueError as exc:
                raise ValueError(f"{path}:{line}: {exc}") from None
    order = np.argsort(ids, kind="stable")
    ids = np.asarray(ids)[order]
    if np.unique(ids).size != ids.size:
        raise ValueError(f"{path}: duplicate item_id")
    return ids, np.asarray(rates, dtype=float)[order]
