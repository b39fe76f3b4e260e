"""Acceptance criteria 1-11, each at its stated tolerance.

Every test records one PASS/FAIL line (printed in the terminal summary) before
asserting, so a failing criterion is reported rather than hidden.
"""
import itertools
import json
import math
import os
import subprocess
import sys
import time

import numpy as np
import pytest

from conftest import record
from herit import diagnostics as dg
from herit import estimators as est
from herit import experiments as ex
from herit import generators as gen
from herit import summary as sm

AR03 = {"type": "ar1", "rho": 0.3}
EQ02 = {"type": "equicorr", "rho": 0.2}


def agg_map(table):
    return {(a.scenario, a.estimator, a.n): a for a in ex.summarize(table)}


@pytest.fixture(scope="module")
def weak_vs_strong():
    cfg = ex.ExperimentConfig(ex.WEAK_VS_STRONG, n_grid=(250, 500, 1000),
                              cells=[{"correlation": AR03}, {"correlation": EQ02}],
                              estimators=("gwash", "ldsc"), replicates=300, seed=1)
    t0 = time.perf_counter()
    table = ex.run_experiment(cfg)
    return agg_map(table), time.perf_counter() - t0


def test_criterion_1_consistency_under_weak_dependence(weak_vs_strong):
    aggs, secs = weak_vs_strong
    devs = {(e, n): abs(aggs[("ar1(0.3)", e, n)].mean - 0.2) for e in ("gwash", "ldsc") for n in (250, 500)}
    ok = max(devs.values()) <= 0.02
    record("1", ok, "max |mean - 0.2| = %.4f over gwash/ldsc at n=250,500 (limit 0.02); "
                    "whole n-grid ran in %.0f s" % (max(devs.values()), secs))
    assert ok, devs


def test_criterion_2_se_scaling(weak_vs_strong):
    aggs, _ = weak_vs_strong
    ratio = {(c, e): aggs[(c, e, 1000)].se / aggs[(c, e, 250)].se
             for c in ("ar1(0.3)", "equicorr(0.2)") for e in ("gwash", "ldsc")}
    weak = max(ratio[("ar1(0.3)", e)] for e in ("gwash", "ldsc"))
    strong = min(ratio[("equicorr(0.2)", e)] for e in ("gwash", "ldsc"))
    ok = weak <= 0.65 and strong >= 0.7
    record("2", ok, "SE(1000)/SE(250): AR(1) max %.3f (<= 0.65), equicorr min %.3f (>= 0.7)" % (weak, strong))
    assert ok, ratio


def test_criterion_3_conditional_variance_oracle():
    rng = np.random.default_rng(3)
    x = gen.gen_predictors(gen.PredictorLaw(gen.Gaussian(), gen.Ar1(0.5)), 50, 100, rng)
    draws = dg.gwash_numerator_draws(x, 0.2, 20_000, rng)
    formula = dg.conditional_variance_gwash(x, 0.2)
    rel = draws.var(ddof=1) / formula - 1
    ok = abs(rel) <= 0.05
    record("3", ok, "empirical/formula - 1 = %+.4f (limit 5%%)" % rel)
    assert ok


def test_criterion_4_expected_reference_ld():
    rng = np.random.default_rng(4)
    law = gen.PredictorLaw(gen.Gaussian(), gen.Ar1(0.5))
    mc = dg.expected_reference_ld_mc(law, 100, 200, 2000, rng)
    target = gen.population_ld_scores(gen.Ar1(0.5), 100) * (1 + 1 / 200)
    dev = float(np.max(np.abs(mc / target - 1)))
    ok = dev <= 0.02
    record("4", ok, "max per-column relative deviation %.4f (limit 0.02)" % dev)
    assert ok


def test_criterion_5_algebraic_identities():
    rng = np.random.default_rng(5)
    worst = {"a": 0.0, "b": 0.0, "c": 0.0}

    def rel(a, b):
        return abs(a - b) / max(abs(a), abs(b), 1e-300)

    for n, m in itertools.product((20, 200), (30, 300)):
        u = rng.standard_normal(m) * rng.uniform(0.5, 2.0)
        ell = rng.uniform(0.2, 40.0, m)
        s = sm.SummaryStats(u, n)
        ld = sm.LdScores(ell, n)
        worst["a"] = max(worst["a"], rel(est.gwash_fixed(s, ld).h2_hat, est.gwash_from_mu2(s, sm.mu2_hat(ld))))
        ld1 = sm.LdScores(ell + 1.0, n)
        worst["b"] = max(worst["b"], rel(est.weighted_estimate(est.LDSC, s, ld1).h2_hat,
                                         est.weighted_estimate(est.GWASH, s, ld1).h2_hat))
        ldc = sm.LdScores(np.full(m, ell[0]), n)
        worst["c"] = max(worst["c"], rel(est.ldsc_fixed(s, ldc).h2_hat, est.gwash_fixed(s, ldc).h2_hat))
    ok = max(worst.values()) <= 1e-12
    record("5", ok, "worst relative gaps (a) %.1e (b) %.1e (c) %.1e (limit 1e-12)"
           % (worst["a"], worst["b"], worst["c"]))
    assert ok


def sum_sq_error(variant, m, h2, k, rng):
    law = gen.CoeffLaw(variant(m), h2, m)
    return float(np.mean([(np.sum(gen.gen_coefficients(law, rng) ** 2) - h2) ** 2 for _ in range(k)]))


def test_criterion_6_effect_concentration():
    rng = np.random.default_rng(6)
    h2, k = 0.2, 20_000
    g100 = sum_sq_error(lambda m: gen.GaussianEffects(), 100, h2, k, rng)
    g1000 = sum_sq_error(lambda m: gen.GaussianEffects(), 1000, h2, k, rng)
    mix100 = sum_sq_error(lambda m: gen.Mixture(0.5, 1 / m), 100, h2, k, rng)
    mix1000 = sum_sq_error(lambda m: gen.Mixture(0.5, 1 / m), 1000, h2, k, rng)
    ratio, mix_ratio = g100 / g1000, mix100 / mix1000
    ok = 7 <= ratio <= 13 and mix_ratio <= 2
    record("6", ok, "Gaussian m=100/m=1000 ratio %.2f (in [7, 13]; exact 2h^4/m gives 10), "
                    "mixture ratio %.2f (<= 2)" % (ratio, mix_ratio))
    assert ok


def test_criterion_7_population_stratification():
    cfg = ex.scenario_config(ex.POP_STRAT, n_grid=(400,), replicates=200, seed=7)
    table = ex.run_experiment(cfg)
    aggs = agg_map(table)
    worst_theory, worst_pair, parts = 0.0, 0.0, []
    for info in table.cell_info:
        name, theory = info["scenario"], info["theoretical_bias"]
        biases = [aggs[(name, e, 400)].bias for e in cfg.estimators]
        worst_theory = max(worst_theory, max(abs(b - theory) for b in biases))
        worst_pair = max(worst_pair, max(biases) - min(biases))
        parts.append("%s theory %.3f got %s" % (name.split("/")[-1], theory,
                                                "/".join("%.3f" % b for b in biases)))
    ok = worst_theory <= 0.15 and worst_pair <= 0.1
    record("7", ok, "max |bias - theory| %.3f (<= 0.15), max spread %.3f (<= 0.1); %s"
           % (worst_theory, worst_pair, "; ".join(parts)))
    assert ok


def test_criterion_8_standardization_bias_sign():
    cfg = ex.ExperimentConfig(ex.NON_GAUSS_BETA, n_grid=(500,),
                              cells=[{"correlation": AR03, "effects": {"type": "t", "nu": 2}},
                                     {"correlation": AR03}],
                              estimators=("gwash-std",), replicates=300, seed=8)
    aggs = agg_map(ex.run_experiment(cfg))
    heavy, gauss = aggs[("ar1(0.3)/t(2)", "gwash-std", 500)], aggs[("ar1(0.3)", "gwash-std", 500)]
    ok_heavy = heavy.mean <= 0.2 - 0.02
    ok_gauss = abs(gauss.bias) <= 0.02
    record("8", ok_heavy and ok_gauss,
           "t(2) mean %.4f (needs <= 0.18; se %.3f, mc_se %.4f), Gaussian bias %+.4f (needs |.| <= 0.02)"
           % (heavy.mean, heavy.se, heavy.mc_se, gauss.bias))
    assert ok_gauss
    assert ok_heavy


def test_criterion_9_weighting_benefit():
    cfg = ex.scenario_config(ex.WEIGHTING, n_grid=(500,), replicates=300, seed=9,
                             estimators=("gwash-std", "gwash-w-std", "ldsc-std", "ldsc-w-std"))
    aggs = agg_map(ex.run_experiment(cfg))
    name = cfg.cells[0].name
    se = {e: aggs[(name, e, 500)].se for e in cfg.estimators}
    ok = se["gwash-w-std"] <= se["gwash-std"] and se["ldsc-w-std"] <= se["ldsc-std"]
    record("9", ok, "SE gwash %.4f -> weighted %.4f; ldsc %.4f -> weighted %.4f"
           % (se["gwash-std"], se["gwash-w-std"], se["ldsc-std"], se["ldsc-w-std"]))
    assert ok


def test_criterion_10_binomial_generator():
    rng = np.random.default_rng(10)
    parts, ok = [], True
    for spec in (gen.Ar1(0.3), gen.EquiCorr(0.3)):
        g = gen.binomial_genotypes(rng, 100_000, 2, 0.5, spec)
        p1 = float(np.mean(g[:, 0] == 1))
        r = float(np.corrcoef(g[:, 0], g[:, 1])[0, 1])
        ok &= abs(p1 - 0.5) <= 0.01 and abs(r - 0.3) <= 0.02
        parts.append("%s P(1)=%.4f corr=%.4f" % (type(spec).__name__, p1, r))
    record("10", ok, "; ".join(parts) + " (limits 0.5 +- 0.01, 0.3 +- 0.02)")
    assert ok


def test_criterion_11_cli_determinism_across_threads(tmp_path):
    cfg = {"scenario": "Custom", "n_grid": [40, 60], "replicates": 6, "seed": 11,
           "estimators": ["gwash", "ldsc", "ldsc-free", "gwash-w-std"],
           "cells": [{"correlation": AR03}, {"correlation": EQ02, "effects": {"type": "t", "nu": 3}}]}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    outputs = []
    for i, threads in enumerate(("1", "4", "1")):
        out = tmp_path / f"run{i}"
        env = dict(os.environ, HERIT_THREADS=threads)
        res = subprocess.run([sys.executable, "-m", "herit.cli", "simulate", str(path), "--out", str(out)],
                             env=env, capture_output=True, text=True)
        assert res.returncode == 0, res.stderr
        outputs.append(tuple((out / f).read_bytes() for f in ("rows.csv", "aggregates.csv")))
    ok = outputs[0] == outputs[1] == outputs[2]
    record("11", ok, "rows.csv and aggregates.csv byte-identical for HERIT_THREADS=1,4,1")
    assert ok
