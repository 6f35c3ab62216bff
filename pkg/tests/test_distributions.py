import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

import oracles
from cachecascade.distributions import (ExponentialLaw, HyperExp2Law, LogNormalLaw, TabulatedDensity,
                                        fit_hyperexp2, fit_lognormal, make_law)

FAMILY_CASES = [
    ExponentialLaw(1.3),
    fit_hyperexp2(0.7, 2.0),
    fit_hyperexp2(1.0, 8.0),
    fit_lognormal(1.0, 0.5),
    fit_lognormal(2.0, 4.0),
]

# frozen from tests/oracles.py (mpmath, 30 digits)
LN01_TRUNC_MEAN_AT_1 = 0.5231565837302468


def quad(f, a, b):
    return integrate.quad(f, a, b, epsabs=1e-13, epsrel=1e-12, limit=400)[0]


def test_exponential_median():
    assert ExponentialLaw(1.0).cdf(math.log(2)) == pytest.approx(0.5, abs=1e-15)


@pytest.mark.parametrize("d", FAMILY_CASES)
def test_cdf_zero_at_origin(d):
    assert d.cdf(0.0) == 0.0


def test_lognormal_median():
    assert LogNormalLaw(0.0, 1.0).cdf(1.0) == pytest.approx(0.5, abs=1e-15)


def test_negative_time_rejected():
    for d in FAMILY_CASES:
        with pytest.raises(ValueError):
            d.cdf(-1e-9)


@pytest.mark.parametrize("d", FAMILY_CASES)
def test_pdf_integrates_to_one(d):
    m = d.mean
    total = sum(quad(d.pdf, a, b) for a, b in [(0, m * 1e-3), (m * 1e-3, m), (m, 10 * m), (10 * m, np.inf)])
    assert total == pytest.approx(1.0, abs=1e-9)


@pytest.mark.parametrize("d", FAMILY_CASES)
def test_mean_equals_survival_quadrature(d):
    m = d.mean
    sf = d.sf  # 1 - cdf without cancellation in the far tail
    cuts = [0.0] + [m * 10.0**k for k in range(-3, 7)] + [np.inf]
    val = sum(quad(sf, a, b) for a, b in zip(cuts[:-1], cuts[1:]))
    assert val == pytest.approx(m, rel=1e-7)


@pytest.mark.parametrize("d", FAMILY_CASES)
def test_survival_integral_limit_is_mean(d):
    assert d.survival_integral(d.tail_extent(1e-15)) == pytest.approx(d.mean, rel=1e-6)


@pytest.mark.parametrize("d", FAMILY_CASES)
def test_partial_moments_match_quadrature(d):
    t = 0.8 * d.mean
    assert d.partial_mean(t) == pytest.approx(quad(lambda u: u * d.pdf(u), 0, t), rel=1e-9)
    assert d.partial_second_moment(t) == pytest.approx(quad(lambda u: u * u * d.pdf(u), 0, t), rel=1e-9)
    assert d.survival_integral(t) == pytest.approx(quad(d.sf, 0, t), rel=1e-10)


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(range(len(FAMILY_CASES))), st.floats(0.01, 20.0))
def test_cdf_finite_difference_matches_pdf(k, x):
    d = FAMILY_CASES[k]
    t = x * d.mean
    h = 1e-6 * d.mean
    f = d.pdf(t)
    assert abs((d.cdf(t + h) - d.cdf(t)) / h - f) <= 1e-5 * max(1.0, f)


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(range(len(FAMILY_CASES))), st.lists(st.floats(0.0, 50.0), min_size=2, max_size=20))
def test_cdf_monotone_and_bounded(k, ts):
    d = FAMILY_CASES[k]
    ts = np.sort(np.asarray(ts)) * d.mean
    F = d.cdf(ts)
    assert np.all(np.diff(F) >= 0)
    assert np.all((F >= 0) & (F <= 1))
    assert np.all(d.pdf(ts) >= 0)


def test_cdf_tends_to_one():
    for d in FAMILY_CASES:
        assert d.cdf(d.tail_extent(1e-12)) > 1 - 1e-11


def test_truncated_mean_examples():
    assert ExponentialLaw(1.0).truncated_mean(60.0) == pytest.approx(1.0, rel=1e-12)
    assert ExponentialLaw(1.0).survival_integral(1.0) == pytest.approx(1 - math.exp(-1), abs=1e-15)
    assert LogNormalLaw(0.0, 1.0).truncated_mean(1.0) == pytest.approx(LN01_TRUNC_MEAN_AT_1, rel=1e-7)


def test_truncated_mean_undefined_at_zero():
    with pytest.raises(ValueError, match="undefined"):
        ExponentialLaw(1.0).truncated_mean(0.0)


def test_lognormal_invariants():
    d = LogNormalLaw(0.3, 0.9)
    assert d.mean == pytest.approx(math.exp(0.3 + 0.81 / 2))
    assert d.cv2 == pytest.approx(math.exp(0.81) - 1)


def test_fit_hyperexp2_boundary_is_exponential():
    d = fit_hyperexp2(1.0, 1.0)
    assert isinstance(d, ExponentialLaw)
    assert d.rate == pytest.approx(1.0)


@pytest.mark.parametrize("mean,cv,m2", [(1.0, 4.0, 17.0), (2.0, 8.0, 260.0)])
def test_fit_hyperexp2_moments(mean, cv, m2):
    d = fit_hyperexp2(mean, cv)
    assert d.mean == pytest.approx(mean, rel=1e-12, abs=1e-9)
    assert d.second_moment == pytest.approx(m2, rel=1e-12, abs=1e-9)
    # balanced means
    assert d.p / d.rate1 == pytest.approx((1 - d.p) / d.rate2, rel=1e-12)
    p, r1, r2 = oracles.balanced_hyper(mean, cv)
    assert (float(d.p), float(d.rate1), float(d.rate2)) == pytest.approx((p, r1, r2), rel=1e-14)


def test_fit_hyperexp2_rejects_low_cv():
    with pytest.raises(ValueError, match="infeasible"):
        fit_hyperexp2(1.0, 0.9)


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-3, 1e3), st.floats(1.0, 10.0))
def test_fit_hyperexp2_hits_requested_moments(mean, cv):
    d = fit_hyperexp2(mean, cv)
    assert d.mean == pytest.approx(mean, rel=1e-12)
    assert math.sqrt(d.cv2) == pytest.approx(cv, rel=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-3, 1e3), st.floats(0.05, 10.0))
def test_fit_lognormal_hits_requested_moments(mean, cv):
    d = fit_lognormal(mean, cv)
    assert d.mean == pytest.approx(mean, rel=1e-12)
    assert math.sqrt(d.cv2) == pytest.approx(cv, rel=1e-9)


def test_make_law_rejects_bad_inputs():
    with pytest.raises(ValueError):
        make_law("gamma", 1.0, 1.0)
    with pytest.raises(ValueError):
        make_law("exponential", 1.0, 2.0)
    with pytest.raises(ValueError):
        HyperExp2Law(1.0, 1.0, 2.0)
    with pytest.raises(ValueError):
        LogNormalLaw(0.0, 0.0)
    with pytest.raises(ValueError):
        ExponentialLaw(0.0)


def test_batched_law_matches_scalars():
    means = np.array([0.5, 1.0, 3.0])
    batch = make_law("lognormal", means, 2.0)
    assert batch.batch_shape == (3,)
    for k in range(3):
        assert batch[k].cdf(0.7) == pytest.approx(batch.cdf(0.7)[k], rel=1e-15)
        assert batch[k].mean == pytest.approx(means[k], rel=1e-12)


# sampling -----------------------------------------------------------------------------


def test_exponential_sample_mean():
    x = ExponentialLaw(2.0).sample(np.random.default_rng(1), 10**6)
    assert abs(x.mean() - 0.5) < 0.002


def test_hyperexp_sample_cv():
    x = fit_hyperexp2(1.0, 4.0).sample(np.random.default_rng(2), 10**6)
    assert abs(x.std() / x.mean() - 4.0) < 0.05 * 4.0


@pytest.mark.parametrize("d", FAMILY_CASES)
def test_sample_ks(d):
    x = d.sample(np.random.default_rng(3), 20000)
    assert np.all(x >= 0)
    assert stats.kstest(x, d.cdf).pvalue > 1e-3


@pytest.mark.parametrize("d", FAMILY_CASES)
def test_residual_sample_is_equilibrium(d):
    # forward-recurrence density (1 - F(t)) / mean
    x = d.sample_residual(np.random.default_rng(4), 20000)
    assert stats.kstest(x, lambda t: d.survival_integral(t) / d.mean).pvalue > 1e-3


# tabulated densities -----------------------------------------------------------------


def test_tabulated_round_trip_cdf():
    d = ExponentialLaw(1.0)
    step = 0.01
    tab = TabulatedDensity.from_pdf(d.pdf, 0.0, step, 4001)
    grid = tab.nodes
    assert np.max(np.abs(tab.cdf(grid) - d.cdf(grid))) <= 2 * step * d.pdf(0.0)


def test_tabulated_exact_piecewise_linear_moments():
    tab = TabulatedDensity([1.0, 2.0, 4.0], [0.0, 0.5, 0.25])
    # mass = 0.25 + 0.75
    assert tab.mass == pytest.approx(1.0)
    assert tab.mean == pytest.approx(quad(lambda t: t * tab.pdf(t), 1, 4), rel=1e-12)
    assert tab.second_moment == pytest.approx(quad(lambda t: t * t * tab.pdf(t), 1, 4), rel=1e-12)
    assert tab.cdf(0.5) == 0.0 and tab.pdf(0.5) == 0.0
    assert tab.cdf(3.0) == pytest.approx(quad(tab.pdf, 1, 3), rel=1e-12)


def test_tabulated_trapezoid_equals_mass():
    tab = TabulatedDensity.uniform(0.5, 0.1, np.linspace(2, 0, 21))
    assert np.trapezoid(tab.values, tab.nodes) == pytest.approx(tab.mass, rel=1e-14)


def test_tabulated_sampling_support_and_ks():
    tab = TabulatedDensity.uniform(1.0, 0.05, np.exp(-np.arange(200) * 0.05))
    x = tab.sample(np.random.default_rng(5), 50000)
    assert x.min() >= tab.t0
    assert stats.kstest(x, lambda t: tab.cdf(t) / tab.mass).pvalue > 1e-3


def test_tabulated_rejects_bad_grids():
    with pytest.raises(ValueError):
        TabulatedDensity([0.0, 0.0, 1.0], [1, 1, 1])
    with pytest.raises(ValueError):
        TabulatedDensity([0.0, 1.0], [1.0, -0.1])
    with pytest.raises(ValueError):
        TabulatedDensity([0.0, 1.0], [0.0, 0.0])


def test_tabulated_csv_round_trip(tmp_path):
    tab = TabulatedDensity.uniform(0.25, 0.125, [1.0, 0.75, 0.5, 0.25])
    path = tmp_path / "pdf.csv"
    tab.to_csv(path)
    assert path.read_text().splitlines()[0] == "t,pdf"
    back = TabulatedDensity.from_csv(path)
    assert np.allclose(back.nodes, tab.nodes) and np.allclose(back.values, tab.values)
