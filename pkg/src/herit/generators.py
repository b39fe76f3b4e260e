"""Synthetic genotype/phenotype generators for the polygenic random-effects model.

Every generator takes an explicit ``numpy.random.Generator`` and is a pure
function of its arguments and that stream, so identical seeds give
bit-identical output.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np
from scipy import optimize, stats


# ---------------------------------------------------------------------------
# Correlation structures
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Identity:
    """Independent predictors, Sigma = I."""


@dataclass(frozen=True)
class Ar1:
    """Stationary AR(1) correlation, Sigma_jk = rho ** |j - k|."""

    rho: float

    def __post_init__(self):
        if not -1.0 < self.rho < 1.0:
            raise ValueError(f"AR(1) rho must lie in (-1, 1), got {self.rho}")


@dataclass(frozen=True)
class EquiCorr:
    """Exchangeable correlation, Sigma_jk = rho for j != k."""

    rho: float

    def __post_init__(self):
        if not 0.0 <= self.rho < 1.0:
            raise ValueError(f"equi-correlation rho must lie in [0, 1), got {self.rho}")


@dataclass(frozen=True)
class MixedAr1:
    """Two independent AR(1) blocks: the first m // 2 columns use ``rho_first``,
    the remaining columns ``rho_second``."""

    rho_first: float
    rho_second: float

    def __post_init__(self):
        for r in (self.rho_first, self.rho_second):
            if not -1.0 < r < 1.0:
                raise ValueError(f"AR(1) rho must lie in (-1, 1), got {r}")

    def split(self, m: int) -> int:
        return m // 2


@dataclass(frozen=True, eq=False)
class Stratified:
    """Two-subpopulation mixture on top of a base within-group correlation.

    Subjects in subpopulation k have genotype mean (-1)**k * f; the phenotype
    carries a shift (-1)**k * sigma_xi.
    """

    base: "CorrelationSpec"
    f: np.ndarray
    sigma_xi: float = 0.0

    def __post_init__(self):
        f = np.asarray(self.f, dtype=float)
        if f.ndim != 1:
            raise ValueError("f must be a vector")
        if not np.all(np.isfinite(f)):
            raise ValueError("f must have finite entries")
        if isinstance(self.base, Stratified):
            raise ValueError("the base of a Stratified spec cannot itself be Stratified")
        if self.sigma_xi < 0:
            raise ValueError("sigma_xi must be non-negative")
        object.__setattr__(self, "f", f)


CorrelationSpec = Union[Identity, Ar1, EquiCorr, MixedAr1, Stratified]


# ---------------------------------------------------------------------------
# Predictor and coefficient laws
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Gaussian:
    pass


@dataclass(frozen=True)
class Binomial:
    """Binomial(2, p) genotypes, centred and scaled by their population moments."""

    p: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.p < 1.0:
            raise ValueError(f"allele frequency must lie in (0, 1), got {self.p}")


@dataclass(frozen=True)
class PredictorLaw:
    distribution: Union[Gaussian, Binomial]
    spec: CorrelationSpec


@dataclass(frozen=True)
class GaussianEffects:
    pass


@dataclass(frozen=True)
class StudentT:
    nu: float

    def __post_init__(self):
        if self.nu <= 0:
            raise ValueError("degrees of freedom must be positive")

    @property
    def finite_variance(self) -> bool:
        return self.nu > 2


@dataclass(frozen=True)
class Mixture:
    """Two-component normal mixture: with probability p the effect has variance
    theta / p * h2 / m, otherwise (1 - theta) / (1 - p) * h2 / m."""

    theta: float
    p: float

    def __post_init__(self):
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError("theta must lie in [0, 1]")
        if not 0.0 < self.p < 1.0:
            raise ValueError("p must lie in (0, 1)")


@dataclass(frozen=True)
class CoeffLaw:
    variant: Union[GaussianEffects, StudentT, Mixture]
    h2: float
    m: int

    def __post_init__(self):
        if not 0.0 <= self.h2 <= 1.0:
            raise ValueError(f"h2 must lie in [0, 1], got {self.h2}")
        if self.m < 1:
            raise ValueError("m must be positive")


@dataclass
class Truth:
    beta: np.ndarray
    epsilon: np.ndarray
    h2: float
    xi: Optional[np.ndarray] = None
    f: Optional[np.ndarray] = None
    labels: Optional[np.ndarray] = None


@dataclass
class Dataset:
    x: np.ndarray
    y: np.ndarray
    truth: Optional[Truth] = None
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def m(self) -> int:
        return self.x.shape[1]


# ---------------------------------------------------------------------------
# Gaussian kernels
# ---------------------------------------------------------------------------

def _ar1_gaussian(rng, n, m, rho):
    x = np.empty((n, m))
    z = rng.standard_normal((n, m))
    x[:, 0] = z[:, 0]
    c = math.sqrt(1.0 - rho * rho)
    for j in range(1, m):
        x[:, j] = rho * x[:, j - 1] + c * z[:, j]
    return x


def _equicorr_gaussian(rng, n, m, rho):
    shared = rng.standard_normal((n, 1))
    z = rng.standard_normal((n, m))
    return math.sqrt(rho) * shared + math.sqrt(1.0 - rho) * z


def _gaussian(rng, n, m, spec):
    if isinstance(spec, Identity):
        return rng.standard_normal((n, m))
    if isinstance(spec, Ar1):
        return _ar1_gaussian(rng, n, m, spec.rho)
    if isinstance(spec, EquiCorr):
        return _equicorr_gaussian(rng, n, m, spec.rho)
    if isinstance(spec, MixedAr1):
        k = spec.split(m)
        return np.hstack([_ar1_gaussian(rng, n, k, spec.rho_first),
                          _ar1_gaussian(rng, n, m - k, spec.rho_second)])
    raise TypeError(f"unsupported correlation spec {spec!r}")


# ---------------------------------------------------------------------------
# Binomial kernels
# ---------------------------------------------------------------------------

def _bernoulli_ar1_chain(rng, n, m, p, rho):
    """Two-state Markov chain with Bernoulli(p) marginals and lag-one correlation rho."""
    p1 = p + rho * (1.0 - p)
    p0 = (1.0 - p1) * p / (1.0 - p)
    if not (0.0 <= p0 <= 1.0 and 0.0 <= p1 <= 1.0):
        raise ValueError(f"rho={rho} is not attainable for a Bernoulli({p}) chain")
    u = rng.random((n, m))
    chi = np.empty((n, m), dtype=np.int8)
    chi[:, 0] = u[:, 0] < p
    for j in range(1, m):
        pj = np.where(chi[:, j - 1] == 1, p1, p0)
        chi[:, j] = u[:, j] < pj
    return chi


def latent_equicorr_rho(rho: float, p: float = 0.5) -> float:
    """Latent Gaussian correlation whose thresholded indicators have correlation rho.

    For p = 0.5 the orthant identity gives sin(pi * rho / 2); otherwise the
    bivariate normal CDF is inverted numerically.
    """
    if rho == 0.0:
        return 0.0
    if p == 0.5:
        return math.sin(math.pi * rho / 2.0)
    t = stats.norm.ppf(1.0 - p)

    def indicator_corr(r):
        joint = stats.multivariate_normal(mean=[0.0, 0.0], cov=[[1.0, r], [r, 1.0]]).cdf([-t, -t])
        return (joint - p * p) / (p * (1.0 - p)) - rho

    return optimize.brentq(indicator_corr, 0.0, 0.999999, xtol=1e-12)


def _bernoulli_equicorr(rng, n, m, p, rho):
    r = latent_equicorr_rho(rho, p)
    latent = _equicorr_gaussian(rng, n, m, r)
    return (latent > stats.norm.ppf(1.0 - p)).astype(np.int8)


def _bernoulli_indicators(rng, n, m, p, spec):
    if isinstance(spec, Identity):
        return (rng.random((n, m)) < p).astype(np.int8)
    if isinstance(spec, Ar1):
        return _bernoulli_ar1_chain(rng, n, m, p, spec.rho)
    if isinstance(spec, EquiCorr):
        return _bernoulli_equicorr(rng, n, m, p, spec.rho)
    if isinstance(spec, MixedAr1):
        k = spec.split(m)
        return np.hstack([_bernoulli_ar1_chain(rng, n, k, p, spec.rho_first),
                          _bernoulli_ar1_chain(rng, n, m - k, p, spec.rho_second)])
    raise TypeError(f"unsupported correlation spec {spec!r} for binomial predictors")


def binomial_genotypes(rng: np.random.Generator, n: int, m: int, p: float,
                       spec: CorrelationSpec) -> np.ndarray:
    """Raw {0, 1, 2} allele counts: the sum of two independent indicator processes."""
    a = _bernoulli_indicators(rng, n, m, p, spec)
    b = _bernoulli_indicators(rng, n, m, p, spec)
    return a + b


# ---------------------------------------------------------------------------
# Public generators
# ---------------------------------------------------------------------------

def _stratified_predictors(rng, n, spec: Stratified):
    f = spec.f
    m = f.size
    # label 1 -> P1 (mean -f), label 2 -> P2 (mean +f)
    labels = np.where(rng.random(n) < 0.5, 1, 2)
    within = _gaussian(rng, n, m, spec.base)
    sign = np.where(labels == 1, -1.0, 1.0)[:, None]
    chi = within + sign * f[None, :]
    return chi / np.sqrt(1.0 + f * f)[None, :], labels


def gen_predictors(law: PredictorLaw, n: int, m: int, rng: np.random.Generator) -> np.ndarray:
    """Draw an n x m predictor matrix standardized in the population."""
    if n < 1 or m < 1:
        raise ValueError("n and m must be positive")
    spec = law.spec
    if isinstance(spec, Stratified):
        if spec.f.size != m:
            raise ValueError(f"f has length {spec.f.size}, expected m={m}")
        if not isinstance(law.distribution, Gaussian):
            raise ValueError("stratified predictors are only generated as Gaussian within group")
        x, _ = _stratified_predictors(rng, n, spec)
        return x
    if isinstance(law.distribution, Gaussian):
        return _gaussian(rng, n, m, spec)
    p = law.distribution.p
    g = binomial_genotypes(rng, n, m, p, spec).astype(float)
    return (g - 2.0 * p) / math.sqrt(2.0 * p * (1.0 - p))


def t_scale(nu: float) -> float:
    """Divisor that gives t_nu unit variance; 1 when the variance is infinite."""
    return math.sqrt(nu / (nu - 2.0)) if nu > 2 else 1.0


def gen_coefficients(law: CoeffLaw, rng: np.random.Generator) -> np.ndarray:
    """Draw i.i.d. effects with E(beta_j^2) = h2 / m (where that moment exists)."""
    m, h2 = law.m, law.h2
    sd = math.sqrt(h2 / m)
    v = law.variant
    if isinstance(v, GaussianEffects):
        return sd * rng.standard_normal(m)
    if isinstance(v, StudentT):
        return sd * rng.standard_t(v.nu, size=m) / t_scale(v.nu)
    if isinstance(v, Mixture):
        big = rng.random(m) < v.p
        scale = np.where(big, math.sqrt(v.theta / v.p), math.sqrt((1.0 - v.theta) / (1.0 - v.p)))
        return sd * scale * rng.standard_normal(m)
    raise TypeError(f"unsupported coefficient law {v!r}")


def gen_outcome(x: np.ndarray, beta: np.ndarray, h2: float, rng: np.random.Generator,
                noise_var: Optional[float] = None):
    """Return ``(y, epsilon)`` with y = x beta + epsilon, epsilon ~ N(0, 1 - h2).

    ``noise_var`` overrides the residual variance (used when a stratification
    shift takes part of the unit phenotypic variance).
    """
    if x.shape[1] != beta.shape[0]:
        raise ValueError("x and beta have incompatible shapes")
    if not 0.0 <= h2 <= 1.0:
        raise ValueError(f"h2 must lie in [0, 1], got {h2}")
    var = 1.0 - h2 if noise_var is None else noise_var
    eps = math.sqrt(var) * rng.standard_normal(x.shape[0])
    return x @ beta + eps, eps


def simulate_dataset(law: PredictorLaw, coeff: CoeffLaw, n: int,
                     rng: np.random.Generator) -> Dataset:
    """Draw (X, beta, epsilon) from the polygenic model and assemble a Dataset."""
    if isinstance(law.spec, Stratified):
        return gen_stratified_dataset(law.spec, coeff, n, rng)
    x = gen_predictors(law, n, coeff.m, rng)
    beta = gen_coefficients(coeff, rng)
    y, eps = gen_outcome(x, beta, coeff.h2, rng)
    meta = {}
    if isinstance(coeff.variant, StudentT) and not coeff.variant.finite_variance:
        meta["infinite_variance_effects"] = True
    return Dataset(x, y, Truth(beta=beta, epsilon=eps, h2=coeff.h2), meta)


def gen_stratified_dataset(spec: Stratified, coeff: Union[CoeffLaw, float], n: int,
                           rng: np.random.Generator) -> Dataset:
    """Population-stratified data: y = X beta + xi + epsilon.

    ``coeff`` may be a CoeffLaw or just h2 (Gaussian effects, m = len(f)).
    """
    m = spec.f.size
    if not isinstance(coeff, CoeffLaw):
        coeff = CoeffLaw(GaussianEffects(), float(coeff), m)
    if coeff.m != m:
        raise ValueError(f"coefficient law has m={coeff.m} but f has length {m}")
    h2, s = coeff.h2, spec.sigma_xi
    if not s * s + h2 < 1.0:
        raise ValueError(f"need sigma_xi^2 + h2 < 1, got {s * s + h2}")
    x, labels = _stratified_predictors(rng, n, spec)
    xi = np.where(labels == 1, -s, s).astype(float)
    beta = gen_coefficients(coeff, rng)
    eps = math.sqrt(1.0 - h2 - s * s) * rng.standard_normal(n)
    y = x @ beta + xi + eps
    truth = Truth(beta=beta, epsilon=eps, h2=h2, xi=xi, f=spec.f.copy(), labels=labels)
    return Dataset(x, y, truth)


# ---------------------------------------------------------------------------
# Population quantities
# ---------------------------------------------------------------------------

def _ar1_ld(m, rho):
    r2 = rho * rho
    j = np.arange(m)
    left, right = j, m - 1 - j
    if r2 == 0.0:
        return np.ones(m)
    return 1.0 + r2 * (1.0 - r2 ** left) / (1.0 - r2) + r2 * (1.0 - r2 ** right) / (1.0 - r2)


def population_ld_scores(spec: CorrelationSpec, m: int) -> np.ndarray:
    """Exact ell_j = sum_p Sigma_jp^2 for the analytic correlation structures."""
    if isinstance(spec, Identity):
        return np.ones(m)
    if isinstance(spec, Ar1):
        return _ar1_ld(m, spec.rho)
    if isinstance(spec, EquiCorr):
        return np.full(m, 1.0 + (m - 1) * spec.rho ** 2)
    if isinstance(spec, MixedAr1):
        k = spec.split(m)
        return np.concatenate([_ar1_ld(k, spec.rho_first), _ar1_ld(m - k, spec.rho_second)])
    raise TypeError(f"no closed-form LD scores for {type(spec).__name__}")


def correlation_matrix(spec: CorrelationSpec, m: int) -> np.ndarray:
    """Dense population correlation matrix (intended for moderate m)."""
    if isinstance(spec, Identity):
        return np.eye(m)
    if isinstance(spec, Ar1):
        idx = np.arange(m)
        return spec.rho ** np.abs(idx[:, None] - idx[None, :])
    if isinstance(spec, EquiCorr):
        s = np.full((m, m), spec.rho)
        np.fill_diagonal(s, 1.0)
        return s
    if isinstance(spec, MixedAr1):
        k = spec.split(m)
        out = np.zeros((m, m))
        out[:k, :k] = correlation_matrix(Ar1(spec.rho_first), k)
        out[k:, k:] = correlation_matrix(Ar1(spec.rho_second), m - k)
        return out
    if isinstance(spec, Stratified):
        f = spec.f
        s0 = correlation_matrix(spec.base, f.size)
        scale = np.sqrt(1.0 + f * f)
        return (s0 + np.outer(f, f)) / np.outer(scale, scale)
    raise TypeError(f"unsupported correlation spec {spec!r}")


# ---------------------------------------------------------------------------
# Dataset dump
# ---------------------------------------------------------------------------

def _spec_to_dict(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if hasattr(obj, "__dataclass_fields__"):
        d = {"type": type(obj).__name__}
        for k in obj.__dataclass_fields__:
            d[k] = _spec_to_dict(getattr(obj, k))
        return d
    return obj


def describe(obj) -> dict:
    """JSON-friendly description of a law or correlation spec."""
    return _spec_to_dict(obj)


def write_dataset(dataset: Dataset, path, seed: Optional[int] = None, law=None) -> Path:
    """Write ``id y x1 .. xm`` as TSV plus a ``.json`` sidecar with metadata."""
    path = Path(path)
    n, m = dataset.x.shape
    header = "\t".join(["id", "y"] + [f"x{j + 1}" for j in range(m)])
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(header + "\n")
        for i in range(n):
            vals = [repr(float(dataset.y[i]))] + [repr(float(v)) for v in dataset.x[i]]
            fh.write(f"{i + 1}\t" + "\t".join(vals) + "\n")
    meta = {"n": n, "m": m, "seed": seed, "law": describe(law) if law is not None else None}
    if dataset.truth is not None:
        t = dataset.truth
        meta["truth"] = {
            "h2": t.h2,
            "beta_sum_sq": float(t.beta @ t.beta),
            "epsilon_var": float(np.var(t.epsilon)),
            "stratified": t.xi is not None,
        }
    meta.update(dataset.meta)
    sidecar = path.with_name(path.name + ".json")
    sidecar.write_text(json.dumps(meta, indent=2, sort_keys=True), encoding="utf-8")
    return sidecar
