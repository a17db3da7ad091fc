"""PILOT projection: linear 2-D embedding with linearly observable feature and performance trends.

Minimises ``||F - B Z||_F^2 + ||Y - C Z||_F^2`` with ``Z = A F`` over A (2 x n),
B (n x 2) and C (t x 2), and keeps the restart whose 2-D distances correlate
best with the feature-space distances.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.spatial.distance import pdist

log = logging.getLogger(__name__)

TOPO_SUBSAMPLE = 5000


class PilotError(ValueError):
    pass


@dataclass(frozen=True)
class Projection:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    F: np.ndarray  # training features (n x i) the projection was fitted on
    objective: float
    topo_preservation: float
    restart_id: int
    seed: int
    feature_names: tuple[str, ...] = ()
    technique_names: tuple[str, ...] = ()
    restart_topo: tuple[float, ...] = ()
    restart_objective: tuple[float, ...] = ()
    trace: tuple[float, ...] = field(default=(), repr=False)

    @property
    def Z(self) -> np.ndarray:
        return self.A @ self.F

    def to_json(self) -> dict:
        return {
            "feature_names": list(self.feature_names),
            "technique_names": list(self.technique_names),
            "A": self.A.tolist(),
            "B": self.B.tolist(),
            "C": self.C.tolist(),
            "objective": self.objective,
            "topo_preservation": self.topo_preservation,
            "restart_id": self.restart_id,
            "seed": self.seed,
            "restart_topo": list(self.restart_topo),
            "restart_objective": list(self.restart_objective),
        }

    @classmethod
    def from_json(cls, doc: dict, F) -> "Projection":
        return cls(A=np.array(doc["A"], dtype=float), B=np.array(doc["B"], dtype=float),
                   C=np.array(doc["C"], dtype=float), F=np.asarray(F, dtype=float),
                   objective=doc["objective"], topo_preservation=doc["topo_preservation"],
                   restart_id=doc["restart_id"], seed=doc["seed"],
                   feature_names=tuple(doc.get("feature_names", ())),
                   technique_names=tuple(doc.get("technique_names", ())),
                   restart_topo=tuple(doc.get("restart_topo", ())),
                   restart_objective=tuple(doc.get("restart_objective", ())))


def _unpack(x, n, t):
    A = x[: 2 * n].reshape(2, n)
    B = x[2 * n: 4 * n].reshape(n, 2)
    C = x[4 * n: 4 * n + 2 * t].reshape(t, 2)
    return A, B, C


def pack(A, B, C) -> np.ndarray:
    return np.concatenate([np.ravel(A), np.ravel(B), np.ravel(C)])


def objective(A, B, C, F, Y) -> float:
    Z = A @ F
    return float(np.sum((F - B @ Z) ** 2) + np.sum((Y - C @ Z) ** 2))


def gradient(A, B, C, F, Y):
    """Analytic gradients (dA, dB, dC) of the objective."""
    Z = A @ F
    Rf = F - B @ Z
    Ry = Y - C @ Z
    dB = -2.0 * Rf @ Z.T
    dC = -2.0 * Ry @ Z.T
    dA = -2.0 * (B.T @ Rf + C.T @ Ry) @ F.T
    return dA, dB, dC


def _fun_and_grad(x, F, Y):
    n, t = F.shape[0], Y.shape[0]
    A, B, C = _unpack(x, n, t)
    Z = A @ F
    Rf = F - B @ Z
    Ry = Y - C @ Z
    f = np.sum(Rf * Rf) + np.sum(Ry * Ry)
    dB = -2.0 * Rf @ Z.T
    dC = -2.0 * Ry @ Z.T
    dA = -2.0 * (B.T @ Rf + C.T @ Ry) @ F.T
    return f, pack(dA, dB, dC)


def topo_preservation(F, Z, seed: int = 0, max_points: int = TOPO_SUBSAMPLE) -> float:
    """Pearson correlation of pairwise distances in feature space and in 2-D."""
    F = np.asarray(F, dtype=float)
    Z = np.asarray(Z, dtype=float)
    i = F.shape[1]
    cols = np.arange(i)
    if i > max_points:
        cols = np.sort(np.random.default_rng(seed).choice(i, size=max_points, replace=False))
    dh = pdist(F[:, cols].T)
    dl = pdist(Z[:, cols].T)
    if dh.std() == 0 or dl.std() == 0:
        return -1.0
    return float(np.clip(np.corrcoef(dh, dl)[0, 1], -1.0, 1.0))


def restart_seed(seed: int, restart: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([seed, restart])


def fit_restart(F, Y, rng, max_iter: int = 1000, gtol: float = 1e-6, x0=None):
    """One BFGS run from a N(0,1) start. Returns (A, B, C, objective, trace)."""
    n, t = F.shape[0], Y.shape[0]
    if x0 is None:
        x0 = rng.standard_normal(4 * n + 2 * t)
    trace = [float(_fun_and_grad(x0, F, Y)[0])]

    def record(xk):
        trace.append(float(_fun_and_grad(xk, F, Y)[0]))

    res = minimize(_fun_and_grad, x0, args=(F, Y), jac=True, method="BFGS", callback=record,
                   options={"gtol": gtol, "norm": np.inf, "maxiter": max_iter})
    A, B, C = _unpack(res.x, n, t)
    return A.copy(), B.copy(), C.copy(), float(res.fun), trace


def fit_projection(F, Y, restarts: int = 30, seed: int = 0, feature_names=(), technique_names=(),
                   max_iter: int = 1000, gtol: float = 1e-6) -> Projection:
    """Best-of-`restarts` projection by topological preservation.

    Ties on preservation fall back to the lower objective, then the lower restart id.
    """
    F = np.asarray(F, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if F.ndim != 2 or Y.ndim != 2 or F.shape[1] != Y.shape[1]:
        raise PilotError("F and Y must be 2-D with the same number of instances")
    n, i = F.shape
    if n < 2:
        raise PilotError("need at least 2 features")
    if i < 3:
        raise PilotError("need at least 3 instances for the distance correlation")
    if restarts < 1:
        raise PilotError("restarts must be >= 1")

    results = []
    for r in range(restarts):
        rng = np.random.default_rng(restart_seed(seed, r))
        with np.errstate(over="ignore", invalid="ignore"):
            A, B, C, obj, trace = fit_restart(F, Y, rng, max_iter=max_iter, gtol=gtol)
        if not np.isfinite(obj) or not np.all(np.isfinite(A)):
            log.warning("restart %d produced a non-finite objective; discarded", r)
            continue
        increases = [k for k in range(1, len(trace)) if trace[k] > trace[k - 1] * (1 + 1e-12) + 1e-15]
        if increases:
            log.warning("restart %d: objective increased at iterations %s", r, increases)
        topo = topo_preservation(F, A @ F, seed=seed)
        results.append((r, A, B, C, obj, topo, tuple(trace)))

    if not results:
        raise PilotError("every restart failed")
    best = max(results, key=lambda rec: (rec[5], -rec[4], -rec[0]))
    r, A, B, C, obj, topo, trace = best
    return Projection(A=A, B=B, C=C, F=F, objective=obj, topo_preservation=topo, restart_id=r, seed=seed,
                      feature_names=tuple(feature_names), technique_names=tuple(technique_names),
                      restart_topo=tuple(rec[5] for rec in results),
                      restart_objective=tuple(rec[4] for rec in results), trace=trace)


def project_point(p: Projection, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[0] != p.A.shape[1]:
        raise PilotError(f"expected a {p.A.shape[1]}-vector, got shape {x.shape}")
    return p.A @ x
