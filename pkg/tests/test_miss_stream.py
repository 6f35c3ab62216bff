import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

import oracles
from cachecascade.che import hit_probabilities, solve_tc
from cachecascade.distributions import ExponentialLaw, fit_hyperexp2, fit_lognormal, make_law
from cachecascade.miss_stream import (NoMissStream, miss_cv2, miss_mean, miss_pdf, miss_popularity,
                                      miss_stream_stats, miss_variance, series_terms, write_stats_csv)
from cachecascade.popularity import build_zipf_catalog, catalog_from_rates

# frozen from tests/oracles.py
EXP1_TC1_VARIANCE = 1.9524924420125598
SQRT_1_MINUS_2_OVER_E = 0.5140438868979139

LAWS = {
    "exponential": lambda: ExponentialLaw(1.0),
    "hyperexp": lambda: fit_hyperexp2(1.0, 3.0),
    "lognormal": lambda: fit_lognormal(1.0, 2.0),
}


# series termination ------------------------------------------------------------------


def test_series_terms_definition():
    H = 1 - math.exp(-1)
    K = series_terms(H, 1e-6)
    assert H ** (K + 1) < 1e-6 <= H**K
    assert K == math.ceil(math.log(1e-6) / math.log(H)) - 1
    assert series_terms(0.0) == 0
    with pytest.raises(NoMissStream):
        series_terms(1.0)


@settings(max_examples=200, deadline=None)
@given(st.floats(1e-9, 1 - 1e-9), st.floats(1e-12, 1e-3))
def test_series_terms_is_minimal(H, eps):
    K = series_terms(H, eps)
    assert H ** (K + 1) < eps
    assert K == 0 or H**K >= eps


# closed forms ------------------------------------------------------------------------


def test_miss_mean_examples():
    assert miss_mean(1.0, 0.5) == 2.0
    assert miss_mean(1.7, 0.0) == 1.7
    with pytest.raises(NoMissStream):
        miss_mean(1.0, 1.0)


def test_miss_mean_grid_at_ln2():
    d = ExponentialLaw(1.0)
    t_c = math.log(2)
    assert d.cdf(t_c) == pytest.approx(0.5, abs=1e-15)
    tab = miss_pdf(d, t_c)
    assert tab.mean == pytest.approx(2.0, rel=1e-4)


def test_transparent_cache_limits():
    # lognormal puts no mass near zero, so a tiny t_c gives H ~ 0
    d = fit_lognormal(1.0, 0.5)
    t_c = 1e-3
    assert d.cdf(t_c) < 1e-40
    assert miss_variance(d, t_c) == pytest.approx(float(d.variance), rel=1e-12)
    assert miss_cv2(d, t_c) == pytest.approx(float(d.cv2), rel=1e-12)
    tab = miss_pdf(d, t_c)
    t = np.linspace(0.05, 4.0, 200)
    assert np.max(np.abs(tab.pdf(t) - d.pdf(t))) <= 1e-3 * np.max(d.pdf(t))


def test_exponential_cv2_closed_form():
    for x in np.linspace(0.05, 6.0, 60):
        d = ExponentialLaw(2.0)
        assert miss_cv2(d, x / 2.0) == pytest.approx(1 - 2 * x * math.exp(-x), abs=1e-12)


def test_exponential_smoothing_minimum():
    x = np.arange(1, 1001) * 0.005
    cv2 = np.array([miss_cv2(ExponentialLaw(1.0), v) for v in x])
    assert abs(x[np.argmin(cv2)] - 1.0) <= 0.005
    assert math.sqrt(miss_cv2(ExponentialLaw(1.0), 1.0)) == pytest.approx(math.sqrt(1 - 2 / math.e), abs=1e-12)
    assert math.sqrt(1 - 2 / math.e) == pytest.approx(SQRT_1_MINUS_2_OVER_E, abs=1e-15)


def test_appendix_oracle_exponential():
    assert miss_variance(ExponentialLaw(1.0), 1.0) == pytest.approx(EXP1_TC1_VARIANCE, rel=1e-12)
    assert miss_mean(1.0, 1 - math.exp(-1)) == pytest.approx(math.e, rel=1e-14)


@pytest.mark.parametrize("name", list(LAWS))
def test_appendix_oracle_families(name):
    d = LAWS[name]()
    if name == "exponential":
        pdf = oracles.exp_pdf(1.0)
    elif name == "hyperexp":
        pdf = oracles.hyper_pdf(float(d.p), float(d.rate1), float(d.rate2))
    else:
        pdf = oracles.lognormal_pdf(*oracles.lognormal_params(1.0, 2.0))
    for t_c in (0.2, 1.0, 3.0):
        assert miss_variance(d, t_c) == pytest.approx(oracles.appendix_variance(pdf, t_c), rel=1e-7)
        H = float(d.cdf(t_c))
        assert miss_mean(d.mean, H) == pytest.approx(oracles.appendix_mean(pdf, t_c), rel=1e-7)


def test_monte_carlo_variance():
    rng = np.random.default_rng(11)
    gaps = oracles.sample_miss_gaps(lambda r, m: r.exponential(1.0, m), 1.0, 10**6, rng)
    n = gaps.size
    s2 = gaps.var(ddof=1)
    m4 = np.mean((gaps - gaps.mean()) ** 4)
    se = math.sqrt((m4 - s2 * s2) / n)
    assert abs(s2 - miss_variance(ExponentialLaw(1.0), 1.0)) <= 3 * se


@settings(max_examples=80, deadline=None)
@given(st.sampled_from(["exponential", "hyperexp", "lognormal"]), st.floats(0.3, 6.0), st.floats(0.01, 20.0))
def test_mean_variance_invariants(fam, cv, x):
    cv = 1.0 if fam == "exponential" else max(cv, 1.0) if fam == "hyperexp" else cv
    d = make_law(fam, 1.0, cv)
    t_c = x
    H = float(d.cdf(t_c))
    if H >= 1 - 1e-12:
        return
    m, v, c2 = miss_mean(d.mean, H), miss_variance(d, t_c), miss_cv2(d, t_c)
    assert m >= d.mean
    assert v >= 0
    # 1 - cdf cancels near H = 1; the survival function keeps the mean exact
    m = d.mean / float(d.sf(t_c))
    assert c2 == pytest.approx(v / m**2, rel=1e-9)


def test_no_miss_stream_signals():
    d = ExponentialLaw(1.0)
    with pytest.raises(NoMissStream):
        miss_variance(d, 1e6)
    with pytest.raises(NoMissStream):
        miss_cv2(d, 1e6)
    with pytest.raises(NoMissStream):
        miss_pdf(d, 1e6)


# popularity of the miss stream -------------------------------------------------------


def test_miss_popularity_two_items():
    cat = catalog_from_rates([2.0, 1.0])
    H = hit_probabilities(cat.laws, 2, solve_tc(cat, 1).t_c)
    q_miss, norm = miss_popularity(cat, H)
    u = oracles.GOLDEN_U
    assert q_miss == pytest.approx([(2 / 3) * u * u, (1 / 3) * u], abs=1e-8)
    assert norm.sum() == pytest.approx(1.0, rel=1e-15)


def test_miss_popularity_transparent_and_full():
    cat = build_zipf_catalog(10, 0.8)
    q_miss, norm = miss_popularity(cat, np.zeros(10))
    assert np.allclose(q_miss, cat.popularity, rtol=1e-15) and np.allclose(norm, cat.popularity, rtol=1e-15)
    with pytest.raises(NoMissStream):
        miss_popularity(cat, np.ones(10))
    with pytest.raises(ValueError):
        miss_popularity(cat, np.ones(9))


@settings(max_examples=30, deadline=None)
@given(st.integers(3, 400), st.floats(0.0, 1.3), st.floats(0.05, 0.9))
def test_miss_popularity_sums_to_miss_ratio(n, alpha, frac):
    cat = build_zipf_catalog(n, alpha, 10.0)
    C = max(1, int(frac * n))
    if C >= n:
        return
    H = hit_probabilities(cat.laws, n, solve_tc(cat, C).t_c)
    q_miss, _ = miss_popularity(cat, H)
    assert math.fsum(q_miss) == pytest.approx(1 - math.fsum(cat.popularity * H), abs=1e-14)


def test_miss_stream_stats_fields(tmp_path):
    cat = build_zipf_catalog(50, 0.8, 20.0)
    t_c = solve_tc(cat, 5).t_c
    st_ = miss_stream_stats(cat.laws, cat.rates, t_c, cat.ids)
    assert [s.item for s in st_] == list(range(1, 51))
    for k, s in enumerate(st_):
        assert s.miss_rate == pytest.approx(cat.rates[k] * (1 - s.hit), rel=1e-12)
        assert s.mean == pytest.approx(1 / s.miss_rate, rel=1e-12)
    assert math.fsum(s.q_miss for s in st_) == pytest.approx(1 - math.fsum(cat.popularity * [s.hit for s in st_]))
    path = tmp_path / "level1.csv"
    write_stats_csv(path, st_)
    assert path.read_text().splitlines()[0] == "x,H,miss_mean,miss_var,miss_cv2,q_miss"
    full = miss_stream_stats(cat.laws, cat.rates, math.inf)
    assert all(s.hit == 1.0 and math.isinf(s.mean) for s in full)


# tabulated miss density ----------------------------------------------------------------


@pytest.mark.parametrize("name", list(LAWS))
@pytest.mark.parametrize("t_c", [0.1, 1.0, 4.0])
def test_miss_pdf_support_and_mass(name, t_c):
    d = LAWS[name]()
    tab = miss_pdf(d, t_c)
    assert tab.t0 == t_c
    below = np.linspace(0, t_c, 50, endpoint=False)
    assert np.all(tab.pdf(below) == 0) and np.all(tab.cdf(below) == 0)
    assert 1 - 1e-6 <= tab.mass <= 1 + 1e-9
    assert np.all(tab.values >= 0)
    H = float(d.cdf(t_c))
    assert tab.terms == series_terms(H, 1e-6)
    assert tab.series_residual < 1e-6


def test_miss_pdf_exponential_example():
    d = ExponentialLaw(1.0)
    tab = miss_pdf(d, 1.0, eps=1e-6)
    H = 1 - math.exp(-1)
    assert tab.terms == math.ceil(math.log(1e-6) / math.log(H)) - 1
    assert tab.mean == pytest.approx(math.e, rel=1e-3)
    assert tab.step == pytest.approx(1.0 / 200)


@pytest.mark.parametrize("name", list(LAWS))
def test_miss_pdf_moments_and_refinement(name):
    d = LAWS[name]()
    t_c = 1.3
    m, v = miss_mean(d.mean, float(d.cdf(t_c))), miss_variance(d, t_c)
    coarse = miss_pdf(d, t_c, eps=1e-12)
    fine = miss_pdf(d, t_c, eps=1e-12, grid_factor=800)
    e_c = max(abs(coarse.mean / m - 1), abs(coarse.variance / v - 1))
    e_f = max(abs(fine.mean / m - 1), abs(fine.variance / v - 1))
    assert e_c < 1e-3
    assert e_f * 4 <= e_c


@pytest.mark.parametrize("name", list(LAWS))
def test_miss_pdf_matches_definition_by_monte_carlo(name):
    d = LAWS[name]()
    t_c = 0.8
    rng = np.random.default_rng(21)
    gaps = oracles.sample_miss_gaps(lambda r, m: d.sample(r, m), t_c, 50000, rng)
    assert gaps.min() > t_c
    tab = miss_pdf(d, t_c)
    assert stats.kstest(gaps, lambda t: tab.cdf(t) / tab.mass).pvalue > 1e-3


def test_miss_pdf_high_hit_uses_fourier_route():
    d = fit_lognormal(1.0, 0.5)
    t_c = 3.0
    H = float(d.cdf(t_c))
    tab = miss_pdf(d, t_c)
    assert tab.terms > 40
    assert tab.mean == pytest.approx(miss_mean(d.mean, H), rel=1e-3)
    assert tab.variance == pytest.approx(miss_variance(d, t_c), rel=1e-3)


def test_miss_pdf_node_budget():
    d = ExponentialLaw(1.0)
    tab = miss_pdf(d, 1.0, max_nodes=2000)
    assert tab.nodes.size <= 2000
    assert tab.mean == pytest.approx(math.e, rel=1e-2)


def test_miss_pdf_argument_checks():
    d = ExponentialLaw(1.0)
    with pytest.raises(ValueError):
        miss_pdf(d, 0.0)
    with pytest.raises(ValueError):
        miss_pdf(d, 1.0, eps=0.01)
    with pytest.raises(ValueError):
        miss_pdf(ExponentialLaw([1.0, 2.0]), 1.0)
