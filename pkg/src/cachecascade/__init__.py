"""Hit ratios and miss streams of LRU cache tandems under renewal traffic.

The model side solves the characteristic-time fixed point of each cache,
derives per-item hit probabilities and characterises the miss stream that
feeds the next cache.  The simulator side replays the same scenario through
exact LRU caches so every model number can be checked.
"""
from .cascade import EmptyStream, LevelReport, Numerics, TandemScenario, evaluate_level, evaluate_tandem, remesh
from .che import (CacheConfig, CharacteristicTime, SolverError, aggregate_hit, hit_probabilities,
                  hit_probability, occupancy, solve_tc, solve_tc_laws)
from .distributions import (ExponentialLaw, HyperExp2Law, LogNormalLaw, RenewalDistribution, TabulatedDensity,
                            fit_hyperexp2, fit_lognormal, make_law)
from .miss_stream import (MissStreamStats, NoMissStream, miss_cv2, miss_mean, miss_pdf, miss_popularity,
                          miss_stream_stats, miss_variance, series_terms)
from .popularity import ItemCatalog, build_zipf_catalog, catalog_from_rates, read_rates_csv
from .simulator import (EmptyTrace, LRUCache, SimConfig, SimConfigError, SimReport, TandemLRU,
                        miss_trace_histogram, replay, run_sim)

__version__ = "0.1.0"

__all__ = [
    "CacheConfig", "CharacteristicTime", "EmptyStream", "EmptyTrace", "ExponentialLaw", "HyperExp2Law",
    "ItemCatalog", "LRUCache", "LevelReport", "LogNormalLaw", "MissStreamStats", "NoMissStream", "Numerics",
    "RenewalDistribution", "SimConfig", "SimConfigError", "SimReport", "SolverError", "TabulatedDensity",
    "TandemLRU", "TandemScenario", "aggregate_hit", "build_zipf_catalog", "catalog_from_rates", "evaluate_level",
    "evaluate_tandem", "fit_hyperexp2", "fit_lognormal", "hit_probabilities", "hit_probability", "make_law",
    "miss_cv2", "miss_mean", "miss_pdf", "miss_popularity", "miss_stream_stats", "miss_trace_histogram",
    "miss_variance", "occupancy", "read_rates_csv", "remesh", "replay", "run_sim", "series_terms",
    "solve_tc", "solve_tc_laws",
]
