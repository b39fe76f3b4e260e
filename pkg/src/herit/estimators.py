"""GWASH and LD score regression estimators of heritability.

All estimators work on squared correlation scores u_j^2 and reference LD
scores ell_j. With ``r = n / m``:

* GWASH:       mean(u^2 - 1) / (r * mean(ell))
* LDSC:        mean(ell * (u^2 - 1)) / (r * mean(ell^2))
* LDSC-free:   centred least-squares slope of u^2 on r * ell
* weighted:    the same ratios with per-SNP weights computed from a
               preliminary estimate and truncated LD scores max(ell, 1).
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Union

import numpy as np

from . import summary as sm
from .summary import LdScores, SummaryStats

GWASH = "gwash"
LDSC = "ldsc"
FIXED = "fixed"
FREE = "free"

DENOMINATOR_TOL = 1e-9
DESIGN_VAR_TOL = 1e-12


class DegenerateDenominatorError(ArithmeticError):
    pass


class DegenerateDesignError(ArithmeticError):
    pass


@dataclass(frozen=True)
class EstimatorSpec:
    family: str = GWASH
    intercept: str = FIXED
    weighted: bool = False
    standardized_inputs: bool = False
    truncate_denominator: bool = False
    clip: bool = False

    def __post_init__(self):
        if self.family not in (GWASH, LDSC):
            raise ValueError(f"unknown family {self.family!r}")
        if self.intercept not in (FIXED, FREE):
            raise ValueError(f"unknown intercept {self.intercept!r}")
        if self.intercept == FREE and self.family != LDSC:
            raise ValueError("a free intercept is only defined for LDSC")
        if self.truncate_denominator and self.family != GWASH:
            raise ValueError("denominator truncation is only defined for GWASH")

    @property
    def label(self) -> str:
        parts = [self.family]
        if self.intercept == FREE:
            parts.append("free")
        if self.truncate_denominator:
            parts.append("trunc")
        if self.weighted:
            parts.append("w")
        if self.standardized_inputs:
            parts.append("std")
        return "-".join(parts)

    @classmethod
    def from_label(cls, label: str) -> "EstimatorSpec":
        parts = label.lower().split("-")
        kw = dict(family=parts[0])
        for p in parts[1:]:
            if p == "free":
                kw["intercept"] = FREE
            elif p == "trunc":
                kw["truncate_denominator"] = True
            elif p == "w":
                kw["weighted"] = True
            elif p == "std":
                kw["standardized_inputs"] = True
            elif p == "clip":
                kw["clip"] = True
            else:
                raise ValueError(f"unknown estimator label component {p!r} in {label!r}")
        return cls(**kw)


@dataclass
class EstimateResult:
    h2_hat: float
    numerator: float
    denominator: float
    weights: Optional[np.ndarray] = None
    preliminary_h2: Optional[float] = None
    intercept_hat: Optional[float] = None
    spec: Optional[EstimatorSpec] = None

    def as_dict(self) -> dict:
        d = {"h2_hat": self.h2_hat, "numerator": self.numerator, "denominator": self.denominator}
        if self.intercept_hat is not None:
            d["intercept"] = self.intercept_hat
        if self.preliminary_h2 is not None:
            d["preliminary_h2"] = self.preliminary_h2
        if self.spec is not None:
            d["estimator"] = self.spec.label
        return d


def _check(stats: SummaryStats, ld: LdScores):
    if stats.m != ld.m:
        raise ValueError(f"summary statistics have m={stats.m} but LD scores have m={ld.m}")


def _ratio(num, den):
    if abs(den) < DENOMINATOR_TOL:
        raise DegenerateDenominatorError(f"denominator {den:.3g} is numerically zero")
    return num / den


def gwash_fixed(stats: SummaryStats, ld: LdScores) -> EstimateResult:
    """mean(u^2 - 1) / ((n/m) mean(ell)); pass truncated LD scores for the
    truncated-denominator variant."""
    _check(stats, ld)
    if ld.kind == sm.RAW:
        raise ValueError("GWASH needs bias-corrected LD scores")
    m = stats.m
    num = float(np.mean(stats.u ** 2) - 1.0)
    den = float(stats.n / m * np.mean(ld.values))
    return EstimateResult(_ratio(num, den), num, den)


def gwash_from_mu2(stats: SummaryStats, mu2: float) -> float:
    """The m / (n mu2) * (s^2 - 1) form of GWASH."""
    s2 = float(np.sum(stats.u ** 2) / stats.m)
    return stats.m / (stats.n * mu2) * (s2 - 1.0)


def ldsc_fixed(stats: SummaryStats, ld: LdScores) -> EstimateResult:
    _check(stats, ld)
    if ld.kind == sm.RAW:
        raise ValueError("LDSC needs bias-corrected LD scores")
    ell = ld.values
    num = float(np.mean(ell * (stats.u ** 2 - 1.0)))
    den = float(stats.n / stats.m * np.mean(ell ** 2))
    return EstimateResult(_ratio(num, den), num, den)


def ldsc_free(stats: SummaryStats, ld: LdScores, weights: Optional[np.ndarray] = None) -> EstimateResult:
    """Least-squares slope of u^2 on (n/m) ell with an intercept.

    With ``weights`` the regression is weighted (experimental).
    """
    _check(stats, ld)
    ell = ld.values
    w = np.ones_like(ell) if weights is None else np.asarray(weights, dtype=float)
    wsum = w.sum()
    ell_bar = float(w @ ell / wsum)
    c = ell - ell_bar
    if float(w @ c ** 2 / wsum) <= DESIGN_VAR_TOL:
        raise DegenerateDesignError("LD scores are constant; the slope is not identifiable")
    r = stats.n / stats.m
    chi2 = stats.u ** 2
    num = float(w @ (c * (chi2 - 1.0)) / wsum)
    den = float(r * (w @ c ** 2) / wsum)
    h2 = _ratio(num, den)
    intercept = float(w @ chi2 / wsum) - h2 * r * ell_bar
    return EstimateResult(h2, num, den, weights=None if weights is None else w, intercept_hat=intercept)


def compute_weights(family: str, h2_prelim: float, ld_trunc: LdScores, n: int, m: int) -> np.ndarray:
    """Inverse-variance weights (1 + h2 (n/m) ell)^-2, times 1/ell for LDSC."""
    if ld_trunc.kind != sm.TRUNCATED:
        raise ValueError("weights need truncated LD scores")
    a = float(np.clip(h2_prelim, 0.0, 1.0))
    ell = ld_trunc.values
    w = (1.0 + a * n / m * ell) ** -2
    if family == LDSC:
        w = w / ell
    elif family != GWASH:
        raise ValueError(f"unknown family {family!r}")
    return w


def weighted_estimate(family: str, stats: SummaryStats, ld: LdScores,
                      ld_trunc: Optional[LdScores] = None,
                      h2_prelim: Optional[float] = None,
                      prelim_family: str = GWASH) -> EstimateResult:
    """Two-step weighted estimator.

    The preliminary estimate is the unweighted fixed-intercept estimate of
    ``prelim_family`` (GWASH by default). Sharing it across families makes
    weighted LDSC and weighted GWASH agree exactly whenever no LD score needs
    truncating.
    """
    _check(stats, ld)
    if ld_trunc is None:
        ld_trunc = sm.truncate_ld_scores(ld)
    _check(stats, ld_trunc)
    if h2_prelim is None:
        unweighted = {GWASH: gwash_fixed, LDSC: ldsc_fixed}[prelim_family]
        h2_prelim = unweighted(stats, ld).h2_hat
    n, m = stats.n, stats.m
    w = compute_weights(family, h2_prelim, ld_trunc, n, m)
    chi2m1 = stats.u ** 2 - 1.0
    if family == LDSC:
        num = float(np.mean(w * ld.values * chi2m1))
        den = float(n / m * np.mean(w * ld.values ** 2))
    else:
        num = float(np.mean(w * chi2m1))
        den = float(n / m * np.mean(w * ld_trunc.values))
    return EstimateResult(_ratio(num, den), num, den, weights=w, preliminary_h2=float(h2_prelim))


def summaries_from_data(x: np.ndarray, y: np.ndarray, x_ref: np.ndarray, standardized: bool = False):
    """Build ``(SummaryStats, LdScores)`` from individual-level data and a panel."""
    stats = sm.correlation_scores(x, y, standardized=standardized)
    ld = sm.standardized_ld_scores(x_ref) if standardized else sm.ld_scores_reference(x_ref)
    return stats, ld


def estimate(spec: EstimatorSpec, data, ld_or_panel: Union[LdScores, np.ndarray]) -> EstimateResult:
    """Run the estimator described by ``spec``.

    ``data`` is either a SummaryStats (then ``ld_or_panel`` must be LdScores)
    or anything with ``x``/``y`` attributes, or an ``(x, y)`` pair, together
    with a reference panel matrix.
    """
    if isinstance(data, SummaryStats):
        if not isinstance(ld_or_panel, LdScores):
            raise TypeError("summary statistics must be paired with LdScores")
        stats, ld = data, ld_or_panel
        if spec.standardized_inputs and not stats.standardized and stats.d2 is not None:
            raise ValueError("spec requests standardized inputs but the scores are unstandardized")
    else:
        x, y = (data.x, data.y) if hasattr(data, "x") else data
        stats, ld = summaries_from_data(x, y, np.asarray(ld_or_panel), spec.standardized_inputs)

    if ld.kind == sm.TRUNCATED:
        raise ValueError("pass bias-corrected LD scores; truncation is applied per spec")

    if spec.intercept == FREE:
        if spec.weighted:
            ld_trunc = sm.truncate_ld_scores(ld)
            prelim = gwash_fixed(stats, ld).h2_hat
            w = compute_weights(LDSC, prelim, ld_trunc, stats.n, stats.m)
            res = ldsc_free(stats, ld, weights=w)
            res.preliminary_h2 = float(prelim)
        else:
            res = ldsc_free(stats, ld)
    elif spec.weighted:
        res = weighted_estimate(spec.family, stats, ld)
    elif spec.family == GWASH:
        res = gwash_fixed(stats, sm.truncate_ld_scores(ld) if spec.truncate_denominator else ld)
    else:
        res = ldsc_fixed(stats, ld)

    if spec.clip:
        res = replace(res, h2_hat=float(np.clip(res.h2_hat, 0.0, 1.0)))
    res.spec = spec
    return res
