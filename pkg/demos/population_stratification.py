"""Population stratification shifts every estimator by sigma_xi^2 / C_f.

Run with ``python3 demos/population_stratification.py``.
"""
import numpy as np

from herit import diagnostics as dg
from herit import estimators as est
from herit import generators as gen
from herit import summary as sm

rng = np.random.default_rng(7)
n, m, h2, sigma_xi = 400, 800, 0.2, 0.3

for var_f in (0.2, 0.3, 0.5):
    f = np.sqrt(var_f) * rng.standard_normal(m)   # genotype mean shift between the two groups
    spec = gen.Stratified(gen.Ar1(0.3), f, sigma_xi)
    law = gen.PredictorLaw(gen.Gaussian(), spec)
    theory = dg.popstrat_theoretical_bias(f, sigma_xi)
    est_vals = {"gwash": [], "ldsc": [], "ldsc-free": []}
    for _ in range(40):
        data = gen.gen_stratified_dataset(spec, h2, n, rng)
        ld = sm.ld_scores_reference(gen.gen_predictors(law, n, m, rng))
        stats = sm.correlation_scores(data.x, data.y)
        for label in est_vals:
            est_vals[label].append(est.estimate(est.EstimatorSpec.from_label(label), stats, ld).h2_hat)
    means = {k: np.mean(v) - h2 for k, v in est_vals.items()}
    print(f"Var(f)={var_f}: theory {theory:.3f}  " + "  ".join(f"{k} {b:.3f}" for k, b in means.items()))
