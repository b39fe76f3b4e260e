"""Estimate h2 from correlation scores and reference-panel LD scores.

Run with ``python3 demos/estimate_from_summary_stats.py``.
"""
import numpy as np

from herit import diagnostics as dg
from herit import estimators as est
from herit import generators as gen
from herit import summary as sm

rng = np.random.default_rng(1)
n, m, h2 = 500, 1000, 0.2

# AR(1) predictors, Gaussian effects, and an independent reference panel of the same size
law = gen.PredictorLaw(gen.Gaussian(), gen.Ar1(0.3))
data = gen.simulate_dataset(law, gen.CoeffLaw(gen.GaussianEffects(), h2, m), n, rng)
panel = gen.gen_predictors(law, n, m, rng)
sigma = gen.correlation_matrix(gen.Ar1(0.3), m)
beta = data.truth.beta
print("realised h2 (beta' Sigma beta):", round(float(beta @ sigma @ beta), 4))

stats = sm.correlation_scores(data.x, data.y)  # u_j = x_j'y / sqrt(n)
ld = sm.ld_scores_reference(panel)              # bias-corrected LD scores
print("mean chi2:", round(float(np.mean(stats.u ** 2)), 4), " mean LD score:", round(float(ld.values.mean()), 3))

for label in ("gwash", "gwash-trunc", "ldsc", "ldsc-free", "gwash-w", "ldsc-w"):
    res = est.estimate(est.EstimatorSpec.from_label(label), stats, ld)
    print(f"{label:12s} h2_hat = {res.h2_hat:.4f}")

# the same numbers computed with standardized scores and standardized LD scores
for label in ("gwash-std", "ldsc-std"):
    res = est.estimate(est.EstimatorSpec.from_label(label), data, panel)
    print(f"{label:12s} h2_hat = {res.h2_hat:.4f}")

# how weak is the dependence?  mu2 stays O(1) for AR(1)
print(dg.condition_report(gen.Ar1(0.3), m=m).to_json())
print(dg.condition_report(ld).to_json())
