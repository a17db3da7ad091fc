"""Theoretical boundary of the instance space from the feature-bound hypercube."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.spatial import ConvexHull, QhullError
from shapely.geometry import MultiPoint, Polygon

log = logging.getLogger(__name__)

MAX_FEATURES = 20


class BoundaryError(ValueError):
    pass


@dataclass(frozen=True)
class BoundarySpec:
    f_upper: np.ndarray
    f_lower: np.ndarray
    upper_mask: np.ndarray  # n x q, True where the vertex takes the upper bound
    pruned_count: int
    hull: np.ndarray  # k x 2, counter-clockwise
    degenerate: tuple[int, ...] = ()

    @property
    def V(self) -> np.ndarray:
        return np.where(self.upper_mask, self.f_upper[:, None], self.f_lower[:, None])

    @property
    def q(self) -> int:
        return self.upper_mask.shape[1]

    @property
    def polygon(self) -> Polygon:
        return Polygon(self.hull)


def feature_bounds(F_sel):
    """Per-feature (upper, lower) bounds over instances; also the indices of constant features."""
    F = np.asarray(F_sel, dtype=float)
    if F.size == 0:
        raise BoundaryError("empty feature matrix")
    hi, lo = F.max(axis=1), F.min(axis=1)
    degenerate = tuple(int(j) for j in np.flatnonzero(hi == lo))
    if degenerate:
        log.warning("features %s are constant; their hypercube axis is degenerate", degenerate)
    return hi, lo, degenerate


def vertex_masks(n: int) -> np.ndarray:
    """All 2^n upper/lower choices, column b has feature j at its upper bound iff bit (n-1-j) of b is set."""
    if n > MAX_FEATURES:
        raise BoundaryError(f"{n} features give 2^{n} vertices; refusing to enumerate more than 2^{MAX_FEATURES}")
    b = np.arange(2 ** n)
    shifts = np.arange(n - 1, -1, -1)
    return ((b[None, :] >> shifts[:, None]) & 1).astype(bool)


def prune_vertices(upper_mask, rho, threshold: float = 0.7) -> np.ndarray:
    """Drop vertices that combine bounds of strongly correlated features the wrong way.

    For |rho(a, b)| >= threshold: positive rho removes (U_a, L_b) and (L_a, U_b),
    negative rho removes (U_a, U_b) and (L_a, L_b). A vertex goes as soon as
    any pair offends. Survivors keep their canonical order.
    """
    if not 0 < threshold <= 1:
        raise BoundaryError(f"threshold must be in (0, 1], got {threshold}")
    S = np.asarray(upper_mask, dtype=bool)
    rho = np.asarray(rho, dtype=float)
    n = S.shape[0]
    if rho.shape != (n, n):
        raise BoundaryError(f"rho must be {n}x{n}")
    keep = np.ones(S.shape[1], dtype=bool)
    for a in range(n):
        for b in range(a + 1, n):
            r = rho[a, b]
            if abs(r) < threshold:
                continue
            same = S[a] == S[b]
            keep &= same if r > 0 else ~same
    return S[:, keep]


def boundary_polygon(V, A) -> np.ndarray:
    """Convex hull of the projected vertices, CCW from the lexicographically smallest point."""
    V = np.asarray(V, dtype=float)
    if V.shape[1] < 3:
        raise BoundaryError(f"only {V.shape[1]} vertices survive pruning; try a higher pruning threshold")
    P = (np.asarray(A, dtype=float) @ V).T
    try:
        hull = ConvexHull(P)
    except QhullError:
        raise BoundaryError("projected vertices are collinear; try a higher pruning threshold") from None
    pts = P[hull.vertices]
    start = min(range(len(pts)), key=lambda j: (pts[j, 0], pts[j, 1]))
    return np.roll(pts, -start, axis=0)


def compute_boundary(F_sel, A, rho, threshold: float = 0.7, prune: bool = True) -> BoundarySpec:
    hi, lo, degenerate = feature_bounds(F_sel)
    S = vertex_masks(len(hi))
    survivors = prune_vertices(S, rho, threshold) if prune else S
    V = np.where(survivors, hi[:, None], lo[:, None])
    hull = boundary_polygon(V, A)
    return BoundarySpec(f_upper=hi, f_lower=lo, upper_mask=survivors,
                        pruned_count=S.shape[1] - survivors.shape[1], hull=hull, degenerate=degenerate)


def occupancy(bspec: BoundarySpec, Z) -> float:
    """Fraction of the boundary hull's area covered by the instances' own convex hull."""
    inst = MultiPoint([tuple(p) for p in np.asarray(Z, dtype=float).T]).convex_hull
    area = bspec.polygon.area
    return float(inst.intersection(bspec.polygon).area / area) if area > 0 else 0.0
