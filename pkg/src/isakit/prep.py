"""Feature preprocessing: outlier bounding, Box-Cox, z-scoring and Spearman filtering."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

log = logging.getLogger(__name__)

IQR_FACTOR = 5.0
LAMBDA_GRID = np.round(np.arange(-500, 501) * 0.01, 2)
LOG_LAMBDA_TOL = 1e-8


class PrepError(ValueError):
    pass


@dataclass
class FeaturePrep:
    """Everything needed to replay the preprocessing of one feature."""

    name: str
    clamp_lo: float = float("-inf")
    clamp_hi: float = float("inf")
    iqr_zero: bool = False
    shift: float = 0.0  # x' = x + shift
    lam: float | None = None  # None: not transformed (constant feature)
    mean: float = 0.0
    std: float = 1.0
    retained: bool = True
    reason: str = ""
    max_abs_rho: float = float("nan")

    def apply(self, x):
        x = np.clip(np.asarray(x, dtype=float), self.clamp_lo, self.clamp_hi)
        if self.lam is not None:
            x = boxcox_transform(np.maximum(x + self.shift, 1e-12), self.lam)
        return (x - self.mean) / self.std


@dataclass
class PrepReport:
    features: list[FeaturePrep]
    technique_names: list[str] = field(default_factory=list)
    rho: np.ndarray | None = None  # features x techniques

    def by_name(self) -> dict[str, FeaturePrep]:
        return {f.name: f for f in self.features}

    @property
    def retained(self) -> list[str]:
        return [f.name for f in self.features if f.retained]

    def to_csv(self, header_lines=()) -> str:
        buf = io.StringIO()
        for line in header_lines:
            buf.write(f"# {line}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["feature", "lambda", "clamp_lo", "clamp_hi", "retained", "reason", "max_abs_rho"])
        for f in self.features:
            w.writerow([f.name, "" if f.lam is None else repr(f.lam), repr(f.clamp_lo), repr(f.clamp_hi),
                        int(f.retained), f.reason, repr(round(f.max_abs_rho, 12))])
        return buf.getvalue()

    def to_json(self) -> dict:
        return {
            "technique_names": self.technique_names,
            "features": [
                {"name": f.name, "clamp_lo": f.clamp_lo, "clamp_hi": f.clamp_hi, "iqr_zero": f.iqr_zero,
                 "shift": f.shift, "lambda": f.lam, "mean": f.mean, "std": f.std,
                 "retained": f.retained, "reason": f.reason, "max_abs_rho": f.max_abs_rho}
                for f in self.features
            ],
            "rho": None if self.rho is None else self.rho.tolist(),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "PrepReport":
        feats = [FeaturePrep(name=d["name"], clamp_lo=d["clamp_lo"], clamp_hi=d["clamp_hi"],
                             iqr_zero=d["iqr_zero"], shift=d["shift"], lam=d["lambda"], mean=d["mean"],
                             std=d["std"], retained=d["retained"], reason=d["reason"],
                             max_abs_rho=d["max_abs_rho"])
                 for d in doc["features"]]
        rho = None if doc.get("rho") is None else np.array(doc["rho"], dtype=float)
        return cls(features=feats, technique_names=list(doc.get("technique_names", [])), rho=rho)


def quartiles(x):
    """Q1, median, Q3 by linear interpolation between order statistics."""
    q1, med, q3 = np.percentile(np.asarray(x, dtype=float), [25, 50, 75], method="linear")
    return float(q1), float(med), float(q3)


def bound_outliers(F, names=None):
    """Clamp each feature row to median +/- 5 IQR.

    Rows with zero IQR are passed through untouched and flagged.
    """
    F = np.asarray(F, dtype=float)
    names = names or [f"f{j}" for j in range(F.shape[0])]
    out = F.copy()
    preps = []
    for j, row in enumerate(F):
        q1, med, q3 = quartiles(row)
        iqr = q3 - q1
        p = FeaturePrep(name=names[j])
        if iqr <= 0:
            p.iqr_zero = True
            log.warning("feature %s has zero IQR; left unclamped", names[j])
        else:
            p.clamp_lo = med - IQR_FACTOR * iqr
            p.clamp_hi = med + IQR_FACTOR * iqr
            out[j] = np.clip(row, p.clamp_lo, p.clamp_hi)
        preps.append(p)
    return out, preps


def boxcox_transform(x, lam: float):
    x = np.asarray(x, dtype=float)
    if abs(lam) < LOG_LAMBDA_TOL:
        return np.log(x)
    return np.expm1(lam * np.log(x)) / lam


def boxcox_loglik(x, lam: float) -> float:
    """Profile log-likelihood of the Box-Cox model (up to a constant)."""
    x = np.asarray(x, dtype=float)
    y = boxcox_transform(x, lam)
    var = y.var()
    if not np.isfinite(var) or var <= 0:
        return -np.inf
    return (lam - 1.0) * np.log(x).sum() - 0.5 * x.size * np.log(var)


def fit_boxcox_lambda(x, grid=LAMBDA_GRID) -> float:
    """Grid-search maximum-likelihood lambda (first maximiser on ties)."""
    with np.errstate(over="ignore", invalid="ignore"):
        ll = np.array([boxcox_loglik(x, lam) for lam in grid])
    if not np.any(np.isfinite(ll)):
        raise PrepError("no finite Box-Cox likelihood on the lambda grid")
    return float(grid[int(np.nanargmax(np.where(np.isfinite(ll), ll, -np.inf)))])


def boxcox_normalize(F, names=None, preps=None):
    """Shift to positive, Box-Cox with fitted lambda, then z-score each feature row."""
    F = np.asarray(F, dtype=float)
    names = names or [f"f{j}" for j in range(F.shape[0])]
    preps = preps or [FeaturePrep(name=n) for n in names]
    out = np.empty_like(F)
    for j, row in enumerate(F):
        p = preps[j]
        lo = row.min()
        if row.max() == lo:
            log.warning("feature %s is constant; Box-Cox skipped", names[j])
            p.lam, p.shift, p.mean, p.std = None, 0.0, float(lo), 1.0
            out[j] = row - lo
            continue
        p.shift = float(1.0 - lo)
        xs = row + p.shift
        if np.ptp(xs) == 0:
            # spread below float resolution once shifted onto [1, ...)
            log.warning("feature %s is numerically constant after shifting; Box-Cox skipped", names[j])
            p.lam, p.shift, p.mean, p.std = None, 0.0, float(lo), 1.0
            out[j] = row - lo
            continue
        try:
            p.lam = fit_boxcox_lambda(xs)
        except PrepError as exc:
            raise PrepError(f"feature {names[j]}: {exc}") from None
        with np.errstate(over="ignore", invalid="ignore"):
            t = boxcox_transform(xs, p.lam)
            p.mean = float(t.mean())
            p.std = float(t.std())
        if not (np.all(np.isfinite(t)) and np.isfinite(p.std)) or p.std <= 0:
            raise PrepError(f"feature {names[j]}: non-finite value after Box-Cox (lambda={p.lam})")
        out[j] = (t - p.mean) / p.std
    return out, preps


def spearman_matrix(A, B=None) -> np.ndarray:
    """Spearman rho between rows of A and rows of B (average ranks for ties).

    Pairs involving a constant row get rho = 0.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = A if B is None else np.atleast_2d(np.asarray(B, dtype=float))
    ra = _centered_ranks(A)
    rb = ra if B is A else _centered_ranks(B)
    na = np.linalg.norm(ra, axis=1)
    nb = np.linalg.norm(rb, axis=1)
    num = ra @ rb.T
    den = np.outer(na, nb)
    with np.errstate(invalid="ignore", divide="ignore"):
        rho = np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)
    return np.clip(rho, -1.0, 1.0)


def _centered_ranks(M):
    r = rankdata(M, axis=1, method="average")
    return r - r.mean(axis=1, keepdims=True)


def spearman_filter(F, Y, names, floor: float = 0.3, duplicate_rho: float = 0.95):
    """Pick features with |rho| >= floor to some technique, minus near-duplicates.

    Returns (sorted retained indices, feature x technique rho, per-feature drop reasons).
    Among a near-duplicate pair the feature with larger max |rho| to performance
    survives; ties keep the lexicographically smaller name.
    """
    F = np.asarray(F, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if F.shape[1] < 3:
        raise PrepError("Spearman filtering needs at least 3 instances")
    rho = spearman_matrix(F, Y)
    max_abs = np.abs(rho).max(axis=1)
    reasons = {}
    candidates = []
    for j in range(F.shape[0]):
        if max_abs[j] + 1e-12 < floor:
            reasons[j] = "low_rho"
        else:
            candidates.append(j)
    ff = spearman_matrix(F)
    order = sorted(candidates, key=lambda j: (-round(max_abs[j], 12), names[j]))
    kept = []
    for j in order:
        dup_of = next((k for k in kept if abs(ff[j, k]) >= duplicate_rho), None)
        if dup_of is None:
            kept.append(j)
        else:
            reasons[j] = f"duplicate_of:{names[dup_of]}"
    return sorted(kept), rho, reasons


def preprocess(F, Y, names, technique_names=(), floor: float = 0.3, duplicate_rho: float = 0.95):
    """Run the whole chain; returns (transformed F, PrepReport)."""
    Fb, preps = bound_outliers(F, list(names))
    Ft, preps = boxcox_normalize(Fb, list(names), preps)
    kept, rho, reasons = spearman_filter(Ft, Y, list(names), floor, duplicate_rho)
    max_abs = np.abs(rho).max(axis=1)
    for j, p in enumerate(preps):
        p.max_abs_rho = float(max_abs[j])
        p.retained = j in kept
        p.reason = "" if p.retained else reasons[j]
    return Ft, PrepReport(features=preps, technique_names=list(technique_names), rho=rho)
