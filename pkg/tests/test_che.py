import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from cachecascade.che import (CacheConfig, SolverError, aggregate_hit, hit_probabilities, hit_probability,
                              occupancy, solve_tc, solve_tc_laws)
from cachecascade.distributions import ExponentialLaw, fit_lognormal
from cachecascade.popularity import build_zipf_catalog, catalog_from_rates

# frozen from tests/oracles.py: lognormal mean 1, CV 2, int_0^1 (1 - F)
LN_CV2_SURVIVAL_AT_1 = 0.5258732330822787


def test_occupancy_exponential_closed_form():
    for lam, t in [(0.5, 0.3), (2.0, 1.7), (10.0, 0.01)]:
        assert occupancy(ExponentialLaw(lam), lam, t) == pytest.approx(-math.expm1(-lam * t), rel=1e-14)


def test_occupancy_zero_time():
    assert occupancy(fit_lognormal(1.0, 2.0), 1.0, 0.0) == 0.0


def test_occupancy_lognormal_quadrature_oracle():
    assert occupancy(fit_lognormal(1.0, 2.0), 1.0, 1.0) == pytest.approx(LN_CV2_SURVIVAL_AT_1, rel=1e-7)


def test_occupancy_rejects_negative_time():
    with pytest.raises(ValueError):
        occupancy(ExponentialLaw(1.0), 1.0, -1.0)


def test_two_item_closed_form():
    cat = catalog_from_rates([2.0, 1.0])
    ct = solve_tc(cat, CacheConfig(1))
    assert ct.t_c == pytest.approx(oracles.TWO_ITEM_TC, abs=1e-8)
    H = hit_probabilities(cat.laws, 2, ct.t_c)
    assert H == pytest.approx(oracles.TWO_ITEM_H, abs=1e-8)
    assert aggregate_hit(cat, H) == pytest.approx(oracles.TWO_ITEM_AGG, abs=1e-8)
    assert hit_probability(ExponentialLaw(2.0), ct.t_c) == pytest.approx(1 - oracles.GOLDEN_U**2, abs=1e-8)
    assert ct.residual <= 1e-9


@pytest.mark.parametrize("C", [1, 10, 100, 500, 999])
def test_symmetric_closed_form(C):
    cat = catalog_from_rates(np.full(1000, 0.7))
    assert solve_tc(cat, C).t_c == pytest.approx(oracles.symmetric_tc(0.7, C, 1000), rel=1e-7)


def test_symmetric_half_occupancy():
    cat = catalog_from_rates([1.0, 1.0])
    ct = solve_tc(cat, 1)
    occ = [occupancy(ExponentialLaw(1.0), 1.0, ct.t_c)] * 2
    assert occ == pytest.approx([0.5, 0.5], abs=1e-9)


def test_degenerate_cache():
    cat = catalog_from_rates([1.0, 1.0])
    ct = solve_tc(cat, 2)
    assert ct.degenerate and math.isinf(ct.t_c)
    assert hit_probabilities(cat.laws, 2, ct.t_c).tolist() == [1.0, 1.0]
    assert hit_probability(ExponentialLaw(1.0), ct.t_c) == 1.0
    assert ct.to_dict()["t_c"] is None


def test_hit_probability_zero_time():
    assert hit_probability(ExponentialLaw(3.0), 0.0) == 0.0


def test_aggregate_hit_examples():
    cat = build_zipf_catalog(5, 0.8)
    assert aggregate_hit(cat, np.ones(5)) == 1.0
    assert aggregate_hit(cat, np.full(5, 0.37)) == pytest.approx(0.37, rel=1e-14)
    with pytest.raises(ValueError, match="expected 5"):
        aggregate_hit(cat, np.ones(4))


def test_capacity_validation():
    for bad in (0, -1, 1.5):
        with pytest.raises(ValueError):
            CacheConfig(bad)


def test_unbracketable_root_reports_diagnostics():
    # a law whose survival integral stops growing below C can never reach it
    class Stuck(ExponentialLaw):
        def survival_integral(self, t):
            return np.minimum(super().survival_integral(t), 0.1 / self.rate)

    with pytest.raises(SolverError) as info:
        solve_tc_laws(Stuck(np.ones(10)), np.ones(10), 5)
    assert info.value.diagnostics["doublings"] == 200


@settings(max_examples=30, deadline=None)
@given(st.integers(20, 2000), st.floats(0.0, 1.5),
       st.sampled_from([("exponential", 1.0), ("hyperexp", 4.0), ("lognormal", 2.0)]))
def test_conservation_and_monotonicity(n, alpha, law):
    fam, cv = law
    cat = build_zipf_catalog(n, alpha, 100.0, fam, cv)
    prev = 0.0
    for C in (1, 2, 4, 8, 16):
        if C >= n:
            break
        ct = solve_tc(cat, C)
        occ = np.asarray(cat.rates * cat.laws.survival_integral(ct.t_c))
        assert abs(math.fsum(occ) - C) <= 1e-9 * C
        assert ct.t_c > prev
        prev = ct.t_c


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 300), st.floats(0.0, 1.2), st.integers(1, 299))
def test_exponential_occupancy_equals_hit(n, alpha, C):
    if C >= n:
        return
    cat = build_zipf_catalog(n, alpha, 50.0)
    ct = solve_tc(cat, C)
    occ = occupancy(cat.laws, cat.rates, ct.t_c)
    H = hit_probabilities(cat.laws, n, ct.t_c)
    assert np.allclose(occ, H, rtol=1e-12, atol=1e-15)


def test_large_catalog_is_fast():
    import time

    cat = build_zipf_catalog(10**6, 0.8, 1000.0, "lognormal", 4.0)
    t = time.perf_counter()
    ct = solve_tc(cat, 1000)
    assert time.perf_counter() - t < 30
    assert ct.residual <= 1e-9 * 1000
