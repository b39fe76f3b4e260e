import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from herit import estimators as est
from herit import experiments as ex
from herit import generators as gen
from herit import summary as sm
from herit.estimators import EstimatorSpec


def stats_ld(u, ell, n, kind=sm.BIAS_CORRECTED):
    return sm.SummaryStats(np.asarray(u, float), n), sm.LdScores(np.asarray(ell, float), n, kind)


u_and_ell = st.integers(2, 40).flatmap(lambda m: st.tuples(
    arrays(np.float64, m, elements=st.floats(-6, 6)),
    arrays(np.float64, m, elements=st.floats(0.05, 30)),
    st.integers(5, 5000)))


# --- spec ----------------------------------------------------------------------

def test_free_gwash_is_invalid():
    with pytest.raises(ValueError):
        EstimatorSpec(family=est.GWASH, intercept=est.FREE)
    with pytest.raises(ValueError):
        EstimatorSpec(family=est.LDSC, truncate_denominator=True)
    with pytest.raises(ValueError):
        EstimatorSpec(family="other")


@pytest.mark.parametrize("label", ["gwash", "ldsc", "ldsc-free", "gwash-trunc", "gwash-w", "ldsc-w-std",
                                   "ldsc-free-w-std", "gwash-trunc-w-std"])
def test_label_round_trip(label):
    assert EstimatorSpec.from_label(label).label == label


def test_label_parse_errors():
    with pytest.raises(ValueError):
        EstimatorSpec.from_label("gwash-bogus")
    with pytest.raises(ValueError):
        EstimatorSpec.from_label("gwash-free")
    assert EstimatorSpec.from_label("gwash-clip").clip


# --- fixed intercept -------------------------------------------------------------

def test_unit_chi_square_gives_zero(rng):
    s, ld = stats_ld(np.ones(10) * np.where(rng.random(10) < 0.5, -1, 1), rng.uniform(1, 3, 10), 50)
    assert est.gwash_fixed(s, ld).h2_hat == 0.0
    assert est.ldsc_fixed(s, ld).h2_hat == 0.0


def test_gwash_arithmetic_example():
    r = est.gwash_fixed(*stats_ld([math.sqrt(2), 0.0], [1.0, 1.0], 4))
    assert r.numerator == pytest.approx(0.0, abs=1e-15)
    assert r.denominator == 2.0
    assert r.h2_hat == pytest.approx(0.0, abs=1e-15)


def test_toy_negative_estimate_not_clipped():
    r = est.gwash_fixed(*stats_ld([0.0], [0.5], 2))
    assert r.h2_hat == -1.0
    clipped = est.estimate(EstimatorSpec(clip=True), *stats_ld([0.0], [0.5], 2))
    assert clipped.h2_hat == 0.0


def test_degenerate_denominator():
    with pytest.raises(est.DegenerateDenominatorError):
        est.gwash_fixed(*stats_ld([1.0, 2.0], [0.0, 0.0], 10))
    with pytest.raises(est.DegenerateDenominatorError):
        est.ldsc_fixed(*stats_ld([1.0, 2.0], [0.0, 0.0], 10))


def test_m_mismatch_and_raw_kind_rejected():
    with pytest.raises(ValueError):
        est.gwash_fixed(sm.SummaryStats(np.ones(3), 5), sm.LdScores(np.ones(2), 5))
    with pytest.raises(ValueError):
        est.gwash_fixed(*stats_ld([1.0], [1.0], 5, sm.RAW))
    with pytest.raises(ValueError):
        est.ldsc_fixed(*stats_ld([1.0], [1.0], 5, sm.RAW))


@given(data=u_and_ell, c=st.floats(0.1, 20))
@settings(max_examples=80, deadline=None)
def test_constant_ld_ldsc_equals_gwash(data, c):
    u, _, n = data
    s, ld = stats_ld(u, np.full(u.size, c), n)
    g, l = est.gwash_fixed(s, ld).h2_hat, est.ldsc_fixed(s, ld).h2_hat
    assert l == pytest.approx(g, rel=1e-12, abs=1e-12)


@given(data=u_and_ell)
@settings(max_examples=80, deadline=None)
def test_two_form_gwash_identity(data):
    u, ell, n = data
    s, ld = stats_ld(u, ell, n)
    a = est.gwash_fixed(s, ld).h2_hat
    b = est.gwash_from_mu2(s, sm.mu2_hat(ld))
    assert b == pytest.approx(a, rel=1e-12, abs=1e-12)


@given(data=u_and_ell, seed=st.integers(0, 1000))
@settings(max_examples=60, deadline=None)
def test_joint_permutation_invariance(data, seed):
    u, ell, n = data
    perm = np.random.default_rng(seed).permutation(u.size)
    assume(np.var(ell) > 1e-6)
    for label in ("gwash", "ldsc", "ldsc-free", "gwash-trunc", "gwash-w", "ldsc-w"):
        spec = EstimatorSpec.from_label(label)
        a = est.estimate(spec, *stats_ld(u, ell, n)).h2_hat
        b = est.estimate(spec, *stats_ld(u[perm], ell[perm], n)).h2_hat
        assert b == pytest.approx(a, rel=1e-9, abs=1e-12)


@given(data=u_and_ell, c=st.floats(0.01, 10))
@settings(max_examples=60, deadline=None)
def test_ratio_linearity(data, c):
    u, ell, n = data
    chi = u ** 2 - 1
    assume(np.all(1 + c * chi >= 0))
    u2 = np.sqrt(1 + c * chi)
    for f in (est.gwash_fixed, est.ldsc_fixed):
        a = f(*stats_ld(u, ell, n)).h2_hat
        b = f(*stats_ld(u2, ell, n)).h2_hat
        assert b == pytest.approx(c * a, rel=1e-9, abs=1e-10)


@given(data=u_and_ell)
@settings(max_examples=60, deadline=None)
def test_truncated_denominator_bound(data):
    u, ell, n = data
    s, ld = stats_ld(u, ell - 1.0, n)
    r = est.estimate(EstimatorSpec(truncate_denominator=True), s, ld)
    assert r.denominator >= n / u.size * (1 - 1e-12)


# --- free intercept ----------------------------------------------------------------

def test_free_intercept_recovers_exact_line(rng):
    n, m = 300, 50
    ell = rng.uniform(0.5, 8, m)
    a, b = 1.3, 0.25
    u = np.sqrt(a + b * n / m * ell)
    r = est.ldsc_free(*stats_ld(u, ell, n))
    assert r.h2_hat == pytest.approx(b, rel=1e-12)
    assert r.intercept_hat == pytest.approx(a, rel=1e-12)


def test_free_intercept_constant_ld_is_degenerate():
    with pytest.raises(est.DegenerateDesignError):
        est.ldsc_free(*stats_ld([1.0, 2.0, 3.0], [2.0, 2.0, 2.0], 10))


@given(data=u_and_ell, shift=st.floats(0, 5))
@settings(max_examples=60, deadline=None)
def test_free_intercept_shift_invariance(data, shift):
    u, ell, n = data
    assume(np.var(ell) > 1e-3)
    a = est.ldsc_free(*stats_ld(u, ell, n))
    b = est.ldsc_free(*stats_ld(np.sqrt(u ** 2 + shift), ell, n))
    assert b.h2_hat == pytest.approx(a.h2_hat, rel=1e-8, abs=1e-9)
    assert b.intercept_hat == pytest.approx(a.intercept_hat + shift, rel=1e-8, abs=1e-8)


# --- weights ------------------------------------------------------------------------

def test_weights_at_zero_preliminary():
    lt = sm.LdScores(np.array([1.0, 2.0, 4.0]), 10, sm.TRUNCATED)
    assert np.array_equal(est.compute_weights(est.GWASH, 0.0, lt, 10, 20), [1, 1, 1])
    assert np.allclose(est.compute_weights(est.LDSC, 0.0, lt, 10, 20), [1, 0.5, 0.25])


def test_weights_unit_ld():
    lt = sm.LdScores(np.ones(4), 10, sm.TRUNCATED)
    expected = (1 + 0.3 * 0.5) ** -2
    assert np.allclose(est.compute_weights(est.GWASH, 0.3, lt, 10, 20), expected)
    assert np.allclose(est.compute_weights(est.LDSC, 0.3, lt, 10, 20), expected)


def test_weights_arithmetic():
    lt = sm.LdScores(np.array([2.0]), 10, sm.TRUNCATED)
    assert est.compute_weights(est.GWASH, 0.2, lt, 10, 20)[0] == pytest.approx(0.694444444444, rel=1e-11)
    assert est.compute_weights(est.LDSC, 0.2, lt, 10, 20)[0] == pytest.approx(0.347222222222, rel=1e-11)


def test_weights_clamp_preliminary():
    lt = sm.LdScores(np.array([1.0, 3.0]), 10, sm.TRUNCATED)
    assert np.array_equal(est.compute_weights(est.GWASH, -4.0, lt, 10, 20),
                          est.compute_weights(est.GWASH, 0.0, lt, 10, 20))
    assert np.array_equal(est.compute_weights(est.LDSC, 7.0, lt, 10, 20),
                          est.compute_weights(est.LDSC, 1.0, lt, 10, 20))
    with pytest.raises(ValueError):
        est.compute_weights(est.GWASH, 0.2, sm.LdScores(np.ones(2), 10), 10, 20)


@given(data=u_and_ell, prelim=st.floats(-1, 2))
@settings(max_examples=60, deadline=None)
def test_weights_positive(data, prelim):
    _, ell, n = data
    lt = sm.truncate_ld_scores(sm.LdScores(ell, n))
    for fam in (est.GWASH, est.LDSC):
        assert np.all(est.compute_weights(fam, prelim, lt, n, ell.size) > 0)


@given(data=u_and_ell)
@settings(max_examples=100, deadline=None)
def test_weighted_ldsc_equals_weighted_gwash_without_truncation(data):
    u, ell, n = data
    s, ld = stats_ld(u, ell + 1.0, n)
    g = est.weighted_estimate(est.GWASH, s, ld)
    l = est.weighted_estimate(est.LDSC, s, ld)
    assert l.h2_hat == pytest.approx(g.h2_hat, rel=1e-12, abs=1e-12)
    assert l.preliminary_h2 == g.preliminary_h2


def test_uniform_weights_reduce_to_unweighted(rng):
    u = rng.standard_normal(30) * 1.1
    s, ld = stats_ld(u, np.ones(30), 100)
    for fam, plain in ((est.GWASH, est.gwash_fixed), (est.LDSC, est.ldsc_fixed)):
        w = est.weighted_estimate(fam, s, ld, h2_prelim=0.0)
        assert w.h2_hat == pytest.approx(plain(s, ld).h2_hat, rel=1e-12)


def test_weighted_records_preliminary(rng):
    s, ld = stats_ld(rng.standard_normal(20) * 1.2, rng.uniform(0.2, 4, 20), 100)
    r = est.estimate(EstimatorSpec.from_label("ldsc-w"), s, ld)
    assert r.preliminary_h2 == pytest.approx(est.gwash_fixed(s, ld).h2_hat)
    assert r.weights is not None and np.all(r.weights > 0)
    same = est.weighted_estimate(est.LDSC, s, ld, prelim_family=est.LDSC)
    assert same.preliminary_h2 == pytest.approx(est.ldsc_fixed(s, ld).h2_hat)


def test_weighted_free_intercept_runs(rng):
    s, ld = stats_ld(rng.standard_normal(40) * 1.2, rng.uniform(0.2, 4, 40), 100)
    r = est.estimate(EstimatorSpec.from_label("ldsc-free-w"), s, ld)
    assert r.intercept_hat is not None and r.preliminary_h2 is not None


# --- dispatch -------------------------------------------------------------------------

def test_estimate_records_spec_and_rejects_truncated_input(rng):
    s, ld = stats_ld(rng.standard_normal(10), rng.uniform(1, 2, 10), 30)
    spec = EstimatorSpec.from_label("ldsc")
    assert est.estimate(spec, s, ld).spec == spec
    with pytest.raises(ValueError):
        est.estimate(spec, s, sm.truncate_ld_scores(ld))
    with pytest.raises(TypeError):
        est.estimate(spec, s, np.ones((3, 10)))


def test_estimate_from_individual_data(rng):
    law = gen.PredictorLaw(gen.Gaussian(), gen.Ar1(0.3))
    d = gen.simulate_dataset(law, gen.CoeffLaw(gen.GaussianEffects(), 0.2, 80), 40, rng)
    panel = gen.gen_predictors(law, 40, 80, rng)
    r1 = est.estimate(EstimatorSpec(standardized_inputs=True), d, panel)
    s, ld = est.summaries_from_data(d.x, d.y, panel, standardized=True)
    assert ld.kind == sm.STANDARDIZED and s.standardized
    assert r1.h2_hat == est.gwash_fixed(s, ld).h2_hat
    r2 = est.estimate(EstimatorSpec(), (d.x, d.y), panel)
    assert r2.h2_hat == est.gwash_fixed(*est.summaries_from_data(d.x, d.y, panel)).h2_hat


def test_as_dict():
    r = est.estimate(EstimatorSpec.from_label("ldsc-free"), *stats_ld([1.0, 2.0, 0.5], [1.0, 2.0, 3.0], 6))
    d = r.as_dict()
    assert set(d) == {"h2_hat", "numerator", "denominator", "intercept", "estimator"}


def _run(cells, estimators, n_grid, reps, seed, m_rule=ex.TWICE_N):
    cfg = ex.ExperimentConfig(scenario=ex.CUSTOM, n_grid=n_grid, cells=cells, estimators=estimators,
                              replicates=reps, seed=seed, m_rule=m_rule)
    return {(a.scenario, a.estimator, a.n): a for a in ex.summarize(ex.run_experiment(cfg))}


def test_null_data_mean_near_zero():
    cfg = ex.ExperimentConfig(scenario=ex.CUSTOM, n_grid=(100,), cells=[{"correlation": {"type": "ar1", "rho": 0.3}}],
                              estimators=("gwash",), replicates=300, seed=31, h2=0.0)
    null = ex.summarize(ex.run_experiment(cfg))[0]
    assert abs(null.mean) <= 3 * null.mc_se


def test_basic_estimators_unbiased_under_ar1():
    aggs = _run([{"correlation": {"type": "ar1", "rho": 0.3}}], ("gwash", "ldsc"), (500,), 500, 32)
    for e in ("gwash", "ldsc"):
        assert abs(aggs[("ar1(0.3)", e, 500)].mean - 0.2) <= 0.02


def test_standardized_ldsc_biased_down_under_strong_dependence():
    aggs = _run([{"correlation": {"type": "equicorr", "rho": 0.5}}], ("ldsc-std",), (100, 200), 600, 13)
    for n in (100, 200):
        a = aggs[("equicorr(0.5)", "ldsc-std", n)]
        assert a.bias < -2 * a.mc_se


def test_free_intercept_under_stratification():
    cells = [{"correlation": {"type": "ar1", "rho": 0.3}, "stratification": {"var_f": 0.3, "sigma_xi": 0.3}}]
    cfg = ex.ExperimentConfig(scenario=ex.CUSTOM, n_grid=(500,), cells=cells, estimators=("ldsc-free",),
                              replicates=60, seed=33)
    table = ex.run_experiment(cfg)
    a = ex.summarize(table)[0]
    theory = table.cell_info[0]["theoretical_bias"]
    assert abs(a.bias - theory) <= 0.15
