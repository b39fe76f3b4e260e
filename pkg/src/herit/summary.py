"""Correlation scores, reference-panel LD scores and their file formats."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

RAW = "raw"
BIAS_CORRECTED = "bias_corrected"
TRUNCATED = "truncated"
STANDARDIZED = "standardized"
LD_KINDS = (RAW, BIAS_CORRECTED, TRUNCATED, STANDARDIZED)

SCALE_ONLY = "scale"
CENTER_SCALE = "center"


class FormatError(ValueError):
    """Malformed summary-statistics or LD-score file."""

    def __init__(self, path, lineno, msg):
        self.path, self.lineno = str(path), lineno
        super().__init__(f"{path}:{lineno}: {msg}")


@dataclass
class SummaryStats:
    """Per-SNP correlation scores u_j = x_j'y / sqrt(n).

    ``d2`` holds the column second moments ||x_j||^2 / n when the scores were
    computed from data; it is ``None`` for scores read from a file.
    """

    u: np.ndarray
    n: int
    d2: Optional[np.ndarray] = None
    standardized: bool = False

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float)
        if not np.all(np.isfinite(self.u)):
            raise ValueError("correlation scores must be finite")
        if self.d2 is not None and np.any(self.d2 <= 0):
            raise ValueError("column norms must be positive")
        if self.n < 1:
            raise ValueError("n must be positive")

    @property
    def m(self) -> int:
        return self.u.size


@dataclass
class LdScores:
    values: np.ndarray
    n_ref: int
    kind: str = BIAS_CORRECTED

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.kind not in LD_KINDS:
            raise ValueError(f"unknown LD score kind {self.kind!r}")
        if self.n_ref < 1 or self.values.size < 1:
            raise ValueError("n_ref and m must be positive")
        if self.kind == TRUNCATED and np.any(self.values < 1.0):
            raise ValueError("truncated LD scores must all be >= 1")
        if self.kind == RAW and np.any(self.values < 0.0):
            raise ValueError("raw LD scores must be non-negative")

    @property
    def m(self) -> int:
        return self.values.size


def _column_d2(x):
    return np.einsum("ij,ij->j", x, x) / x.shape[0]


def standardize_columns(x: np.ndarray, mode: str = SCALE_ONLY):
    """Scale each column to unit second moment; returns ``(x_std, d2)``.

    ``mode="center"`` subtracts column means first, and ``d2`` is then the
    centred second moment.
    """
    x = np.asarray(x, dtype=float)
    if mode == CENTER_SCALE:
        x = x - x.mean(axis=0)
    elif mode != SCALE_ONLY:
        raise ValueError(f"unknown standardization mode {mode!r}")
    d2 = _column_d2(x)
    if np.any(d2 <= 0):
        bad = np.flatnonzero(d2 <= 0)
        raise ValueError(f"zero-norm column(s) at index {bad[:5].tolist()}")
    return x / np.sqrt(d2), d2


def correlation_scores(x: np.ndarray, y: np.ndarray, standardized: bool = False) -> SummaryStats:
    """u_j = x_j'y / sqrt(n); with ``standardized`` both x_j and y are first
    scaled to unit sample second moment."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.shape[0]
    if y.shape != (n,):
        raise ValueError("x and y have incompatible shapes")
    d2 = _column_d2(x)
    u = (x.T @ y) / np.sqrt(n)
    if standardized:
        if np.any(d2 <= 0):
            raise ValueError("zero-norm column in standardized mode")
        yy = y @ y / n
        if yy <= 0:
            raise ValueError("y has zero norm")
        u = u / (np.sqrt(d2) * np.sqrt(yy))
    return SummaryStats(u=u, n=n, d2=d2, standardized=standardized)


def raw_ld_scores(x: np.ndarray, method: str = "auto") -> np.ndarray:
    """sum_p S_jp^2 with S = X'X / n, via the smaller Gram matrix."""
    n, m = x.shape
    if method == "auto":
        method = "gram" if n < m else "cov"
    if method == "gram":
        g = x @ x.T
        return np.einsum("ij,ij->j", g @ x, x) / (n * n)
    if method == "cov":
        s = x.T @ x / n
        return np.einsum("ij,ij->i", s, s)
    raise ValueError(f"unknown method {method!r}")


def ld_scores_reference(x_ref: np.ndarray, bias_correct: bool = True) -> LdScores:
    """Reference-panel LD scores, optionally corrected by m / n_ref."""
    x_ref = np.asarray(x_ref, dtype=float)
    if not np.all(np.isfinite(x_ref)):
        raise ValueError("reference panel contains non-finite values")
    n, m = x_ref.shape
    values = raw_ld_scores(x_ref)
    if bias_correct:
        return LdScores(values - m / n, n, BIAS_CORRECTED)
    return LdScores(values, n, RAW)


def standardized_ld_scores(x_ref: np.ndarray) -> LdScores:
    """Bias-corrected LD scores of the column-scaled panel."""
    x_std, _ = standardize_columns(x_ref, SCALE_ONLY)
    ld = ld_scores_reference(x_std, bias_correct=True)
    return LdScores(ld.values, ld.n_ref, STANDARDIZED)


def truncate_ld_scores(ld: LdScores) -> LdScores:
    """max(ell, 1) elementwise."""
    if ld.kind not in (BIAS_CORRECTED, STANDARDIZED):
        raise ValueError(f"can only truncate bias-corrected LD scores, got {ld.kind}")
    return LdScores(np.maximum(ld.values, 1.0), ld.n_ref, TRUNCATED)


def mu2_hat(ld: LdScores) -> float:
    """Second spectral moment estimate: the mean bias-corrected LD score."""
    if ld.kind not in (BIAS_CORRECTED, STANDARDIZED):
        raise ValueError(f"mu2_hat needs bias-corrected LD scores, got {ld.kind}")
    return float(np.mean(ld.values))


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------

def _snp_ids(m, snps):
    if snps is None:
        return [f"snp{j + 1}" for j in range(m)]
    if len(snps) != m:
        raise ValueError("wrong number of SNP identifiers")
    return list(snps)


def write_sumstats(path, stats: SummaryStats, snps: Optional[Sequence[str]] = None) -> None:
    ids = _snp_ids(stats.m, snps)
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        fh.write("SNP\tZ\tN\n")
        for snp, z in zip(ids, stats.u):
            fh.write(f"{snp}\t{float(z)!r}\t{stats.n}\n")


def _read_table(path, header):
    path = Path(path)
    rows = []
    with path.open("r", encoding="utf-8") as fh:
        first = fh.readline().rstrip("\r\n")
        if first.split("\t") != header:
            raise FormatError(path, 1, f"expected header {header}, got {first!r}")
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\r\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != len(header):
                raise FormatError(path, lineno, f"expected {len(header)} fields, got {len(parts)}")
            rows.append((lineno, parts))
    if not rows:
        raise FormatError(path, 2, "no data rows")
    return path, rows


def read_sumstats(path):
    """Read a ``SNP Z N`` table; returns ``(SummaryStats, snp_ids)``."""
    path, rows = _read_table(path, ["SNP", "Z", "N"])
    snps, z, ns = [], [], set()
    for lineno, (snp, zs, nstr) in rows:
        try:
            z.append(float(zs))
            ns.add(int(nstr))
        except ValueError as exc:
            raise FormatError(path, lineno, str(exc)) from None
        if not np.isfinite(z[-1]):
            raise FormatError(path, lineno, "non-finite Z")
        snps.append(snp)
    if len(ns) != 1:
        raise FormatError(path, rows[0][0], f"N must be constant across SNPs, got {sorted(ns)}")
    return SummaryStats(u=np.array(z), n=ns.pop()), snps


def write_ldscores(path, ld: LdScores, snps: Optional[Sequence[str]] = None) -> Path:
    """``SNP L2`` table plus a ``.json`` sidecar carrying n_ref, m and kind."""
    path = Path(path)
    ids = _snp_ids(ld.m, snps)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write("SNP\tL2\n")
        for snp, v in zip(ids, ld.values):
            fh.write(f"{snp}\t{float(v)!r}\n")
    sidecar = path.with_name(path.name + ".json")
    sidecar.write_text(json.dumps({"n_ref": ld.n_ref, "m": ld.m, "kind": ld.kind}), encoding="utf-8")
    return sidecar


def read_ldscores(path):
    """Read an ``SNP L2`` table and its sidecar; returns ``(LdScores, snp_ids)``."""
    path, rows = _read_table(path, ["SNP", "L2"])
    snps, vals = [], []
    for lineno, (snp, v) in rows:
        try:
            vals.append(float(v))
        except ValueError as exc:
            raise FormatError(path, lineno, str(exc)) from None
        snps.append(snp)
    sidecar = path.with_name(path.name + ".json")
    try:
        meta = json.loads(sidecar.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(sidecar, exc.lineno, exc.msg) from None
    if meta.get("m", len(vals)) != len(vals):
        raise FormatError(path, rows[-1][0], f"sidecar says m={meta['m']} but file has {len(vals)} rows")
    return LdScores(np.array(vals), int(meta["n_ref"]), meta.get("kind", BIAS_CORRECTED)), snps
