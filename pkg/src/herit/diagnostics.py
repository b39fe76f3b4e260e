"""Analytic companions to the estimators: conditional variance, dependence and
kurtosis conditions, second-order standardization bias and the
population-stratification bias."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Callable, Iterable, Optional, Union

import numpy as np

from . import generators as gen
from . import summary as sm
from .generators import CoeffLaw, CorrelationSpec
from .summary import LdScores

POPULATION = "population"
REFERENCE_PANEL = "reference_panel"


def _sample_gram(x):
    """Smaller of X'X/n and XX'/n; both share the nonzero spectrum of S."""
    n, m = x.shape
    return (x @ x.T) / n if n < m else (x.T @ x) / n


def _trace_powers(a):
    a2 = a @ a
    return {1: float(np.trace(a)), 2: float(np.einsum("ij,ij->", a, a)),
            3: float(np.einsum("ij,ji->", a2, a)), 4: float(np.einsum("ij,ij->", a2, a2))}


def sample_trace_moments(x: np.ndarray) -> dict:
    """tr(S^k), k = 1..4, for the sample covariance S = X'X / n."""
    return _trace_powers(_sample_gram(np.asarray(x, dtype=float)))


# ---------------------------------------------------------------------------
# Conditional variance of the GWASH numerator
# ---------------------------------------------------------------------------

def conditional_variance_gwash(x: np.ndarray, h2: float, kurt_beta: float = 3.0,
                               kurt_eps: float = 3.0) -> float:
    """Var(N_GWASH | X) for N_GWASH = mean(u_j^2 - 1) under random beta and epsilon.

    ``kurt_beta`` and ``kurt_eps`` are the (non-excess) kurtoses.
    """
    x = np.asarray(x, dtype=float)
    n, m = x.shape
    h4 = h2 * h2
    s2 = 1.0 - h2
    ell = sm.raw_ld_scores(x)
    kurt_term = (kurt_beta - 3.0) / m * h4 * n * n / (m * m) * float(np.mean(ell ** 2))
    row_sq = np.einsum("ij,ij->i", x, x) / m
    noise_term = (kurt_eps - 3.0) * s2 * s2 / n * float(np.mean(row_sq ** 2))
    t = sample_trace_moments(x)
    a, b = h2 * n / m, s2
    # ||a S^2 + b S||_F^2 expanded in trace powers
    frob = a * a * t[4] + 2.0 * a * b * t[3] + b * b * t[2]
    return kurt_term + noise_term + 2.0 / (m * m) * frob


def gwash_numerator_draws(x: np.ndarray, h2: float, reps: int, rng: np.random.Generator,
                          beta_sampler: Optional[Callable] = None,
                          eps_sampler: Optional[Callable] = None, batch: int = 2000) -> np.ndarray:
    """Monte Carlo draws of N_GWASH with X held fixed (beta and epsilon redrawn)."""
    n, m = x.shape
    out = np.empty(reps)
    done = 0
    while done < reps:
        k = min(batch, reps - done)
        if beta_sampler is None:
            beta = math.sqrt(h2 / m) * rng.standard_normal((m, k))
        else:
            beta = beta_sampler(rng, (m, k))
        if eps_sampler is None:
            eps = math.sqrt(1.0 - h2) * rng.standard_normal((n, k))
        else:
            eps = eps_sampler(rng, (n, k))
        y = x @ beta + eps
        u = x.T @ y / math.sqrt(n)
        out[done:done + k] = np.mean(u * u, axis=0) - 1.0
        done += k
    return out


# ---------------------------------------------------------------------------
# Kurtosis
# ---------------------------------------------------------------------------

def mixture_excess_kurtosis(theta: float, p: float, m: int) -> float:
    """(1/m)(Kurt(beta) - 3) for the two-component normal mixture of effects."""
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie strictly between 0 and 1")
    if not 0.0 <= theta <= 1.0:
        raise ValueError("theta must lie in [0, 1]")
    return 3.0 / m * (theta ** 2 / p + (1.0 - theta) ** 2 / (1.0 - p) - 1.0)


def effect_kurtosis(coeff: CoeffLaw) -> float:
    """Kurt(beta_j) of a coefficient law; +inf when the fourth moment is infinite."""
    v = coeff.variant
    if isinstance(v, gen.GaussianEffects):
        return 3.0
    if isinstance(v, gen.StudentT):
        return 3.0 + 6.0 / (v.nu - 4.0) if v.nu > 4 else math.inf
    if isinstance(v, gen.Mixture):
        return 3.0 + coeff.m * mixture_excess_kurtosis(v.theta, v.p, coeff.m)
    raise TypeError(f"unsupported coefficient law {v!r}")


def bke_statistic(coeff: CoeffLaw) -> float:
    """(Kurt(beta) - 3) / m."""
    v = coeff.variant
    if isinstance(v, gen.Mixture):
        return mixture_excess_kurtosis(v.theta, v.p, coeff.m)
    k = effect_kurtosis(coeff)
    return math.inf if math.isinf(k) else (k - 3.0) / coeff.m


# ---------------------------------------------------------------------------
# Dependence conditions
# ---------------------------------------------------------------------------

@dataclass
class ConditionReport:
    wd0: float
    mu2: float
    mean_lsq: float
    wd1_tr4: Optional[float]
    bke: Optional[float]
    source: str
    m: int

    def to_dict(self) -> dict:
        """Field dict with an infinite bke written as the string "inf"."""
        d = asdict(self)
        if d["bke"] is not None and math.isinf(d["bke"]):
            d["bke"] = "inf"
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ConditionReport":
        d = json.loads(text)
        if d.get("bke") == "inf":
            d["bke"] = math.inf
        return cls(**d)


def _trace_sigma4(spec, m):
    if isinstance(spec, gen.Identity):
        return float(m)
    if isinstance(spec, gen.EquiCorr):
        r = spec.rho
        return (1.0 + (m - 1) * r) ** 4 + (m - 1) * (1.0 - r) ** 4
    s = gen.correlation_matrix(spec, m)
    s2 = s @ s
    return float(np.einsum("ij,ij->", s2, s2))


def condition_report(source: Union[CorrelationSpec, LdScores], m: Optional[int] = None,
                     coeff_law: Optional[CoeffLaw] = None) -> ConditionReport:
    """Dependence statistics tr(S^2)/m^2, tr(S^2)/m, mean ell^2, tr(S^4)/m^2 and
    the effect-kurtosis statistic, from a population spec or a reference panel."""
    bke = bke_statistic(coeff_law) if coeff_law is not None else None
    if isinstance(source, LdScores):
        if source.kind not in (sm.BIAS_CORRECTED, sm.STANDARDIZED):
            raise ValueError("panel diagnostics need bias-corrected LD scores")
        ell = source.values
        mm = ell.size
        mu2 = float(np.mean(ell))
        return ConditionReport(mu2 / mm, mu2, float(np.mean(ell ** 2)), None, bke, REFERENCE_PANEL, mm)
    if m is None:
        raise ValueError("m is required for a population spec")
    ell = gen.population_ld_scores(source, m)
    mu2 = float(np.mean(ell))
    return ConditionReport(mu2 / m, mu2, float(np.mean(ell ** 2)),
                           _trace_sigma4(source, m) / (m * m), bke, POPULATION, m)


@dataclass(frozen=True)
class RateFunction:
    """r(m) = m ** exponent with 1 <= exponent <= 2."""

    exponent: float

    def __post_init__(self):
        if not 1.0 <= self.exponent <= 2.0:
            raise ValueError(f"rate exponent must lie in [1, 2], got {self.exponent}")

    def __call__(self, m) -> float:
        return float(m) ** self.exponent


def fit_rate_function(spec: CorrelationSpec, m_grid: Iterable[int]) -> RateFunction:
    """Slope of log tr(Sigma^2) on log m, clipped into [1, 2]."""
    m_grid = np.asarray(list(m_grid), dtype=float)
    tr = [np.sum(gen.population_ld_scores(spec, int(m))) for m in m_grid]
    slope = np.polyfit(np.log(m_grid), np.log(tr), 1)[0]
    return RateFunction(float(np.clip(slope, 1.0, 2.0)))


def expected_reference_ld(spec: CorrelationSpec, m: int, n_ref: int) -> np.ndarray:
    """E(bias-corrected reference LD score) for Gaussian predictors: ell_j (1 + 1/n)."""
    return gen.population_ld_scores(spec, m) * (1.0 + 1.0 / n_ref)


def expected_reference_ld_mc(law: gen.PredictorLaw, m: int, n_ref: int, k: int,
                             rng: np.random.Generator) -> np.ndarray:
    """Monte Carlo estimate of E(bias-corrected reference LD score) over k panels."""
    acc = np.zeros(m)
    for _ in range(k):
        acc += sm.ld_scores_reference(gen.gen_predictors(law, n_ref, m, rng)).values
    return acc / k


# ---------------------------------------------------------------------------
# Population stratification
# ---------------------------------------------------------------------------

def stratification_constant(f: np.ndarray) -> float:
    """(1/m) sum f_j^2 / (1 + f_j^2)."""
    f = np.asarray(f, dtype=float)
    return float(np.mean(f * f / (1.0 + f * f)))


def popstrat_theoretical_bias(f: np.ndarray, sigma_xi: float) -> float:
    """Asymptotic bias sigma_xi^2 / C_f of GWASH and both LDSC variants."""
    if sigma_xi < 0:
        raise ValueError("sigma_xi must be non-negative")
    c = stratification_constant(f)
    if c == 0.0:
        raise ZeroDivisionError("all f_j are zero: the stratification bias diverges")
    return sigma_xi ** 2 / c


# ---------------------------------------------------------------------------
# Standardization bias
# ---------------------------------------------------------------------------

def _kurt_term(kurt_beta, h2, m):
    if math.isinf(kurt_beta):
        return -math.inf if 0 < h2 < 1 else 0.0
    return (kurt_beta - 3.0) / m * h2 * h2 * (h2 - 1.0)


def taylor_bias_gwash(tr_s2: float, tr_s3: float, mu2_under: float, lam: float, h2: float,
                      kurt_beta: float, m: int, rate: RateFunction) -> float:
    """Second-order bias of standardized GWASH (remainder omitted).

    ``lam`` is m / n; ``mu2_under`` is sum_j E(ell_j,R) / r(m).
    """
    if mu2_under <= 0 or lam <= 0:
        raise ValueError("mu2_under and lam must be positive")
    n = m / lam
    r = rate(m)
    h4 = h2 * h2
    second = 2.0 * h4 / (m * m * mu2_under / lam) * (
        (h2 * mu2_under / lam + m / r) * tr_s2 - n / r * tr_s3)
    return _kurt_term(kurt_beta, h2, m) + second


def taylor_bias_ldsc(ell_under: np.ndarray, s3_diag: np.ndarray, tr_s2: float,
                     mu2_star_under: float, lam: float, h2: float, kurt_beta: float, m: int,
                     rate_tilde: RateFunction) -> float:
    """Second-order bias of standardized LDSC (remainder omitted)."""
    if mu2_star_under <= 0 or lam <= 0:
        raise ValueError("mu2_star_under and lam must be positive")
    n = m / lam
    ell = np.asarray(ell_under, dtype=float)
    h4 = h2 * h2
    inner = ell * (tr_s2 * (h2 / lam * ell + 1.0) - n * np.asarray(s3_diag, dtype=float))
    second = 2.0 * h4 / (m * m * mu2_star_under / lam) / rate_tilde(m) * float(np.sum(inner))
    return _kurt_term(kurt_beta, h2, m) + second


@dataclass
class TaylorMoments:
    """Conditional moments of N_j = (x_j'y)^2 / n and D_j = d_j^2 y'y / n given X."""

    mean_n: np.ndarray
    mean_d: np.ndarray
    cov_nd: np.ndarray
    var_d: np.ndarray

    @property
    def first_order(self) -> np.ndarray:
        return self.mean_n / self.mean_d

    @property
    def e_j(self) -> np.ndarray:
        return (self.mean_n / self.mean_d - self.cov_nd / self.mean_d ** 2
                + self.var_d * self.mean_n / self.mean_d ** 3)


def taylor_moments(x: np.ndarray, h2: float, kurt_beta: float = 3.0,
                   kurt_eps: float = 3.0) -> TaylorMoments:
    x = np.asarray(x, dtype=float)
    n, m = x.shape
    h4 = h2 * h2
    s2e = 1.0 - h2
    d2 = np.einsum("ij,ij->j", x, x) / n
    sx = x.T @ x / n                         # m x m; only used at simulation scale
    ell = np.einsum("ij,ij->i", sx, sx)       # in-sample, uncorrected
    s3_diag = np.einsum("ij,ji->i", sx, sx @ sx)
    tr_s, tr_s2 = float(d2.sum()), float(ell.sum())
    ex_beta4 = (kurt_beta - 3.0) * h4 / (m * m)   # E beta^4 - 3 (E beta^2)^2
    ex_eps4 = (kurt_eps - 3.0) * s2e * s2e

    mean_n = h2 * (n / m * ell - d2) + d2
    mean_d = d2 * (1.0 - h2 + h2 * tr_s / m)
    # (1/n^2) sum_i x_ij^2 = d_j^2 / n
    cov_over_d2 = (n * ((sx ** 2) @ d2) * ex_beta4
                   + 2.0 * n * s3_diag * h4 / (m * m)
                   + d2 / n * ex_eps4
                   + 2.0 / n * d2 * s2e * s2e
                   + 4.0 * s2e * h2 / m * ell)
    var_over_d4 = (float(d2 @ d2) * ex_beta4 + 2.0 * tr_s2 * h4 / (m * m)
                   + ex_eps4 / n + 2.0 / n * s2e * s2e + 4.0 * s2e * h2 / (n * m) * tr_s)
    return TaylorMoments(mean_n, mean_d, cov_over_d2 * d2, var_over_d4 * d2 * d2)


def taylor_ej(x: np.ndarray, h2: float, kurt_beta: float = 3.0, kurt_eps: float = 3.0) -> np.ndarray:
    """Second-order approximation of E(u~_j^2 | X) for standardized scores."""
    return taylor_moments(x, h2, kurt_beta, kurt_eps).e_j


# ---------------------------------------------------------------------------
# Weight-function validity
# ---------------------------------------------------------------------------

def weight_function_ok(g: Callable[[float, float], float], c: float,
                       a_grid: Optional[np.ndarray] = None, b_grid: Optional[np.ndarray] = None,
                       step: float = 1e-6) -> bool:
    """Check |dg/da| <= C b^2 and |dg/db| <= C b on a grid by central differences."""
    a_grid = np.linspace(step, 1.0 - step, 21) if a_grid is None else np.asarray(a_grid)
    b_grid = np.geomspace(1.0 + step, 1e3, 31) if b_grid is None else np.asarray(b_grid)
    for a in a_grid:
        for b in b_grid:
            da = (g(a + step, b) - g(a - step, b)) / (2 * step)
            db = (g(a, b + step) - g(a, b - step)) / (2 * step)
            if abs(da) > c * b * b * (1 + 1e-6) or abs(db) > c * b * (1 + 1e-6):
                return False
    return True


def ldsc_weight_function(n_over_m: float) -> Callable[[float, float], float]:
    return lambda a, b: (1.0 + n_over_m * a * b) ** -2 / b
