"""Footprints: regions of the instance space where a technique is good or best."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np
import shapely
from scipy.spatial import Delaunay, QhullError, cKDTree
from shapely.geometry import MultiPoint, MultiPolygon, Polygon, mapping, shape

log = logging.getLogger(__name__)

EMPTY = Polygon()
PURITY_TIE = 1e-9
TABLE_COLUMNS = ("technique", "alpha_N_G", "d_N_G", "p_N_G", "alpha_N_B", "d_N_B", "p_N_B")


class FootprintError(RuntimeError):
    pass


@dataclass(frozen=True)
class SpaceBaseline:
    hull: Polygon
    area: float
    density: float
    n_instances: int


@dataclass(frozen=True)
class Footprint:
    technique: str
    kind: str  # "good" or "best"
    geometry: Polygon | MultiPolygon
    area: float = 0.0
    density: float = 0.0
    purity: float = 0.0
    alpha_n: float = 0.0
    d_n: float = 0.0
    p_n: float = 0.0
    n_enclosed: int = 0
    n_positive: int = 0
    flags: tuple[str, ...] = ()
    dbscan: dict = field(default_factory=dict)

    @property
    def polygons(self) -> list[Polygon]:
        g = self.geometry
        if g.is_empty:
            return []
        return list(g.geoms) if isinstance(g, MultiPolygon) else [g]


def space_baseline(Z) -> SpaceBaseline:
    """Convex hull of all instances with its area and instance density."""
    pts = np.asarray(Z, dtype=float).T
    hull = MultiPoint([tuple(p) for p in pts]).convex_hull
    if not isinstance(hull, Polygon) or hull.area <= 0:
        raise FootprintError("instances are collinear; the instance space has zero area")
    return SpaceBaseline(hull=hull, area=float(hull.area), density=len(pts) / hull.area, n_instances=len(pts))


def dbscan_params(r: int, range_z1: float, range_z2: float, epsilon_scale: str = "area"):
    """Neighbour count k and radius eps from the number of unique good instances.

    ``epsilon_scale="area"`` multiplies by the product of the coordinate ranges;
    ``"length"`` uses the square root of that product instead.
    """
    if r < 1:
        raise ValueError("r must be >= 1")
    k = max(min(math.ceil(r / 20), 50), 3)
    spread = range_z1 * range_z2
    if epsilon_scale == "length":
        spread = math.sqrt(spread)
    elif epsilon_scale != "area":
        raise ValueError(f"unknown epsilon_scale {epsilon_scale!r}")
    eps = k * math.gamma(2) / math.sqrt(r * math.pi) * spread
    return k, eps


def dbscan(points, k: int, eps: float) -> np.ndarray:
    """Density clustering; returns labels in {-1, 1..Nc}.

    Core points have at least k neighbours within eps (self included). Points
    are scanned in index order, so a border point reachable from two clusters
    joins the one discovered first.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    m = len(pts)
    labels = np.zeros(m, dtype=int)
    if m == 0:
        return labels
    neigh = cKDTree(pts).query_ball_point(pts, eps)
    core = np.array([len(nb) >= k for nb in neigh])
    cid = 0
    for p in range(m):
        if labels[p] or not core[p]:
            continue
        cid += 1
        labels[p] = cid
        queue = deque([p])
        while queue:
            q = queue.popleft()
            if not core[q]:
                continue
            for nb in sorted(neigh[q]):
                if labels[nb] == 0:
                    labels[nb] = cid
                    queue.append(nb)
    labels[labels == 0] = -1
    return labels


def circumradii(pts, simplices) -> np.ndarray:
    a = pts[simplices[:, 0]]
    b = pts[simplices[:, 1]]
    c = pts[simplices[:, 2]]
    la = np.linalg.norm(b - c, axis=1)
    lb = np.linalg.norm(c - a, axis=1)
    lc = np.linalg.norm(a - b, axis=1)
    cross = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
    area2 = np.abs(cross)
    with np.errstate(divide="ignore", invalid="ignore"):
        R = la * lb * lc / (2.0 * area2)
    return np.where(area2 > 0, R, np.inf)


def _union(pts, simplices):
    if len(simplices) == 0:
        return EMPTY
    tris = shapely.polygons(pts[simplices])
    return shapely.union_all(tris)


def alpha_shape(points, radius: float | None = None):
    """Concave hull of a point cloud as a union of Delaunay triangles.

    Triangles with circumradius above ``radius`` are dropped. Without a radius
    the smallest candidate circumradius is used for which the triangles touch
    every point and form one connected polygon.
    """
    pts = np.unique(np.asarray(points, dtype=float).reshape(-1, 2), axis=0)
    if len(pts) < 3:
        log.info("alpha shape of %d point(s) is empty", len(pts))
        return EMPTY
    try:
        tri = Delaunay(pts)
    except QhullError:
        log.warning("alpha shape skipped: points are collinear")
        return EMPTY
    simp = tri.simplices
    R = circumradii(pts, simp)
    finite = np.isfinite(R)
    if not finite.any():
        log.warning("alpha shape skipped: points are collinear")
        return EMPTY
    if radius is not None:
        return _clean(_union(pts, simp[finite & (R <= radius)]))

    cand = np.unique(R[finite])

    def shape_at(j):
        keep = finite & (R <= cand[j])
        covered = np.zeros(len(pts), dtype=bool)
        covered[simp[keep].ravel()] = True
        if not covered.all():
            return None
        g = _union(pts, simp[keep])
        return g if isinstance(g, Polygon) and not g.is_empty else None

    lo, hi = 0, len(cand) - 1
    best = shape_at(hi)
    while lo < hi:
        mid = (lo + hi) // 2
        g = shape_at(mid)
        if g is not None:
            hi, best = mid, g
        else:
            lo = mid + 1
    if best is None:
        best = _union(pts, simp[finite])
    return _clean(best)


def _clean(g):
    if g.is_empty:
        return EMPTY
    g = shapely.make_valid(g) if not g.is_valid else g
    polys = [p for p in _polys(g) if p.area > 0]
    if not polys:
        return EMPTY
    return polys[0] if len(polys) == 1 else MultiPolygon(polys)


def _polys(g):
    if isinstance(g, Polygon):
        return [g]
    if hasattr(g, "geoms"):
        out = []
        for sub in g.geoms:
            out.extend(_polys(sub))
        return out
    return []


def enclosed_mask(geometry, Z) -> np.ndarray:
    """Instances inside or on the boundary of `geometry`."""
    pts = np.asarray(Z, dtype=float)
    if geometry.is_empty:
        return np.zeros(pts.shape[1], dtype=bool)
    return shapely.covers(geometry, shapely.points(pts.T))


def footprint_metrics(technique, kind, geometry, Z, labels, baseline: SpaceBaseline, **extra) -> Footprint:
    """Area, density and purity of a footprint, raw and as percent of the baseline."""
    labels = np.asarray(labels, dtype=bool)
    area = float(geometry.area) if not geometry.is_empty else 0.0
    if area <= 0:
        extra["flags"] = tuple(sorted(set(extra.get("flags", ())) | {"zero_area"}))
        return Footprint(technique, kind, EMPTY, **extra)
    inside = enclosed_mask(geometry, Z)
    n_in = int(inside.sum())
    n_pos = int((inside & labels).sum())
    density = n_in / area
    purity = n_pos / n_in if n_in else 0.0
    return Footprint(technique, kind, geometry, area=area, density=density, purity=purity,
                     alpha_n=100.0 * area / baseline.area, d_n=100.0 * density / baseline.density,
                     p_n=100.0 * purity, n_enclosed=n_in, n_positive=n_pos, **extra)


def build_footprint(technique, kind, Z, labels, baseline: SpaceBaseline, alpha_radius=None,
                    epsilon_scale: str = "area") -> Footprint:
    """DBSCAN the flagged instances, alpha-shape each cluster, union and measure."""
    Z = np.asarray(Z, dtype=float)
    labels = np.asarray(labels, dtype=bool)
    pts = Z[:, labels].T
    if len(pts) == 0:
        return Footprint(technique, kind, EMPTY, flags=("no_instances",))
    r = len(np.unique(pts, axis=0))
    rng = np.ptp(Z, axis=1)
    k, eps = dbscan_params(r, float(rng[0]), float(rng[1]), epsilon_scale)
    if eps <= 0:
        return Footprint(technique, kind, EMPTY, flags=("zero_epsilon",))
    c = dbscan(pts, k, eps)
    shapes = []
    for cid in range(1, int(c.max(initial=0)) + 1):
        g = alpha_shape(pts[c == cid], alpha_radius)
        if not g.is_empty:
            shapes.append(g)
    geom = _clean(shapely.union_all(shapes)) if shapes else EMPTY
    if not geom.is_empty:
        geom = _clean(geom.intersection(baseline.hull))
    info = {"k": k, "epsilon": eps, "r": r, "n_clusters": int(c.max(initial=0)),
            "n_outliers": int(np.count_nonzero(c == -1))}
    return footprint_metrics(technique, kind, geom, Z, labels, baseline, dbscan=info)


def overlap_purity(region, Z, labels) -> float:
    inside = enclosed_mask(region, Z)
    n = int(inside.sum())
    return float((inside & np.asarray(labels, dtype=bool)).sum() / n) if n else 0.0


def resolve_conflicts(footprints, Z, labels, baseline: SpaceBaseline, max_passes: int = 100):
    """Trim overlaps between footprints in favour of the purer one.

    `labels[j]` is the instance flag vector for footprints[j]. In each
    overlapping pair the footprint with lower purity inside the overlap loses
    the overlap; equal purities (within 1e-9) keep it in both. Pairs are
    revisited in index order until nothing changes.
    """
    fps = list(footprints)
    geoms = [f.geometry for f in fps]
    min_area = 1e-9 * baseline.area
    for _ in range(max_passes):
        changed = False
        for a in range(len(fps)):
            for b in range(a + 1, len(fps)):
                if geoms[a].is_empty or geoms[b].is_empty:
                    continue
                try:
                    inter = geoms[a].intersection(geoms[b])
                    if inter.area <= min_area:
                        continue
                    pa = overlap_purity(inter, Z, labels[a])
                    pb = overlap_purity(inter, Z, labels[b])
                    if abs(pa - pb) <= PURITY_TIE:
                        continue
                    loser = b if pa > pb else a
                    geoms[loser] = _clean(geoms[loser].difference(inter))
                except shapely.errors.GEOSException as exc:
                    raise FootprintError(
                        f"polygon operation failed for {fps[a].technique}/{fps[a].kind} and "
                        f"{fps[b].technique}/{fps[b].kind}: {exc}") from exc
                changed = True
        if not changed:
            break
    out = []
    for f, g, lab in zip(fps, geoms, labels):
        if g is f.geometry:
            out.append(f)
        else:
            out.append(footprint_metrics(f.technique, f.kind, g, Z, lab, baseline,
                                         flags=tuple(sorted(set(f.flags) | {"trimmed"})), dbscan=f.dbscan))
    return out


def table_rows(good_fps, best_fps, decimals: int = 1):
    """Table rows (technique, alpha_N_G, d_N_G, p_N_G, alpha_N_B, d_N_B, p_N_B) plus an Average row.

    The Average row is the plain mean of the displayed (rounded) values.
    """
    rows = []
    for g, b in zip(good_fps, best_fps):
        vals = [g.alpha_n, g.d_n, g.p_n, b.alpha_n, b.d_n, b.p_n]
        rows.append([g.technique] + [round(v, decimals) for v in vals])
    if rows:
        means = [round(float(np.mean([r[c] for r in rows])), decimals) for c in range(1, 7)]
        rows.append(["Average"] + means)
    return rows


def summary_csv(rows, header_lines=(), decimals: int = 1) -> str:
    buf = io.StringIO()
    for line in header_lines:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TABLE_COLUMNS)
    for r in rows:
        w.writerow([r[0]] + [f"{v:.{decimals}f}" for v in r[1:]])
    return buf.getvalue()


def parse_summary_csv(text: str):
    lines = [line for line in io.StringIO(text) if not line.startswith("#")]
    reader = csv.reader(lines)
    header = tuple(next(reader))
    if header != TABLE_COLUMNS:
        raise FootprintError(f"unexpected summary header {header}")
    return [[r[0]] + [float(v) for v in r[1:]] for r in reader if r]


def to_geojson(fp: Footprint, fingerprint: str | None = None) -> dict:
    props = {"technique": fp.technique, "kind": fp.kind, "area": fp.area, "density": fp.density,
             "purity": fp.purity, "alpha_N": fp.alpha_n, "d_N": fp.d_n, "p_N": fp.p_n,
             "n_enclosed": fp.n_enclosed, "n_positive": fp.n_positive, "flags": list(fp.flags),
             "dbscan": fp.dbscan}
    if fingerprint:
        props["config_fingerprint"] = fingerprint
    geom = mapping(fp.geometry) if not fp.geometry.is_empty else None
    return {"type": "FeatureCollection", "features": [{"type": "Feature", "properties": props, "geometry": geom}]}


def from_geojson(doc: dict) -> Footprint:
    feat = doc["features"][0]
    p = feat["properties"]
    geom = shape(feat["geometry"]) if feat["geometry"] else EMPTY
    return Footprint(p["technique"], p["kind"], geom, area=p["area"], density=p["density"],
                     purity=p["purity"], alpha_n=p["alpha_N"], d_n=p["d_N"], p_n=p["p_N"],
                     n_enclosed=p["n_enclosed"], n_positive=p["n_positive"], flags=tuple(p["flags"]),
                     dbscan=p.get("dbscan", {}))


def dumps_geojson(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, indent=1) + "\n"

