"""Pipeline stages.

Each stage reads its inputs from the artifact directory, writes its outputs
there and stamps them with the configuration fingerprint. A stage refuses to
consume files stamped by a different configuration.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from pathlib import Path

import numpy as np

from . import boundary as bnd
from . import featsel, footprint, pilot, prep
from .cfgfeat import FEATURE_NAMES, class_features, load_class_graphs
from .config import RunConfig, read_fingerprint
from .metadata import FEATURE_PREFIX, Metadata, compute_goodness, load_metadata, write_metadata
from .plot import plot_space

log = logging.getLogger(__name__)

EXIT_CODES = {
    "usage": 2,
    "ingest": 10,
    "features-cfg": 11,
    "prep": 12,
    "select": 13,
    "project": 14,
    "footprints": 15,
    "boundary": 16,
    "plot": 17,
    "report": 18,
    "recommend": 19,
    "synth": 20,
}

STAGES = ("ingest", "prep", "select", "project", "footprints", "boundary", "plot", "report")


class StageError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
        self.exit_code = EXIT_CODES[stage]


def _stamp(cfg: RunConfig) -> str:
    return f"config_fingerprint={cfg.fingerprint}"


def _dump_json(path: Path, doc: dict, cfg: RunConfig):
    doc = {"config_fingerprint": cfg.fingerprint, **doc}
    path.write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n", encoding="utf-8")


def _load_json(path: Path) -> dict:
    return json.loads(path.read_text(encoding="utf-8"))


class Artifacts:
    """File layout of one run directory."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.root = Path(cfg.out)

    def path(self, name: str) -> Path:
        return self.root / name

    def require(self, stage: str, *names: str) -> list[Path]:
        paths = []
        for name in names:
            p = self.path(name)
            if not p.exists():
                raise StageError(stage, f"missing {p}; run the earlier stages first")
            fp = read_fingerprint(p)
            if fp != self.cfg.fingerprint:
                raise StageError(stage, f"{p} was produced with config fingerprint {fp}, "
                                        f"current is {self.cfg.fingerprint}; rerun the earlier stages")
            paths.append(p)
        return paths

    def mkdir(self, sub: str = "") -> Path:
        d = self.root / sub if sub else self.root
        d.mkdir(parents=True, exist_ok=True)
        return d


def _log(stage: str, msg: str, *args):
    log.info("%s: " + msg, stage, *args)


# -- ingest ---------------------------------------------------------------

def stage_ingest(cfg: RunConfig) -> Metadata:
    art = Artifacts(cfg)
    if not cfg.metadata:
        raise StageError("ingest", "no metadata file given")
    try:
        md = load_metadata(cfg.metadata)
    except (OSError, ValueError) as exc:
        raise StageError("ingest", str(exc)) from exc
    art.mkdir()
    write_metadata(md, art.path("metadata.csv"), [_stamp(cfg)])
    gm = compute_goodness(md, cfg.epsilon_good, cfg.relative_good)
    buf = io.StringIO()
    buf.write(f"# {_stamp(cfg)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["instance"] + [f"good_{t}" for t in md.technique_names] + [f"best_{t}" for t in md.technique_names])
    for j, iid in enumerate(md.instance_ids):
        w.writerow([iid] + [int(v) for v in gm.good[:, j]] + [int(v) for v in gm.best[:, j]])
    art.path("goodness.csv").write_text(buf.getvalue(), encoding="utf-8")
    _log("ingest", "%d instances, %d features, %d techniques", md.n_instances,
         len(md.feature_names), len(md.technique_names))
    return md


def _metadata(art: Artifacts, stage: str) -> Metadata:
    (p,) = art.require(stage, "metadata.csv")
    return load_metadata(p)


# -- features-cfg ---------------------------------------------------------

def cfg_feature_table(graph_files) -> tuple[list[str], np.ndarray]:
    """Class ids and a (classes x features) matrix in FEATURE_NAMES order."""
    ids, rows = [], []
    for path in graph_files:
        name, methods = load_class_graphs(path)
        row = class_features(methods).as_row()
        ids.append(name)
        rows.append([row[k] for k in FEATURE_NAMES])
    return ids, np.array(rows, dtype=float).reshape(len(ids), len(FEATURE_NAMES))


def stage_features_cfg(graph_files, out_path, merge_into=None, header_lines=()):
    """Write CFG features as metadata-CSV columns, optionally joined onto a metadata file."""
    try:
        ids, X = cfg_feature_table(graph_files)
        if merge_into is None:
            buf = io.StringIO()
            for line in header_lines:
                buf.write(f"# {line}\n")
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(["instance"] + [FEATURE_PREFIX + k for k in FEATURE_NAMES])
            for iid, row in zip(ids, X):
                w.writerow([iid] + [repr(float(v)) for v in row])
            Path(out_path).write_text(buf.getvalue(), encoding="utf-8")
            return
        md = load_metadata(merge_into)
        index = {iid: j for j, iid in enumerate(ids)}
        missing = [iid for iid in md.instance_ids if iid not in index]
        if missing:
            raise ValueError(f"no CFG document for instances: {', '.join(missing[:10])}")
        clash = [k for k in FEATURE_NAMES if k in md.feature_names]
        if clash:
            raise ValueError(f"metadata already has features {clash}")
        extra = X[[index[iid] for iid in md.instance_ids]].T
        merged = md.replace(feature_names=list(md.feature_names) + list(FEATURE_NAMES),
                            F=np.vstack([md.F, extra]))
        write_metadata(merged, out_path, header_lines)
    except (OSError, ValueError, KeyError) as exc:
        raise StageError("features-cfg", str(exc)) from exc


# -- prep -----------------------------------------------------------------

def stage_prep(cfg: RunConfig):
    art = Artifacts(cfg)
    md = _metadata(art, "prep")
    try:
        Ft, report = prep.preprocess(md.F, md.Y, md.feature_names, md.technique_names,
                                     floor=cfg.spearman_floor, duplicate_rho=cfg.duplicate_rho)
    except ValueError as exc:
        raise StageError("prep", str(exc)) from exc
    out = md.replace(F=Ft)
    write_metadata(out, art.path("prep_metadata.csv"), [_stamp(cfg)])
    art.path("prep_report.csv").write_text(report.to_csv([_stamp(cfg)]), encoding="utf-8")
    _dump_json(art.path("prep_params.json"), report.to_json(), cfg)
    _log("prep", "%d of %d features retained", len(report.retained), len(md.feature_names))
    return out, report


def _prep_outputs(art: Artifacts, stage: str):
    p_md, p_par = art.require(stage, "prep_metadata.csv", "prep_params.json")
    return load_metadata(p_md), prep.PrepReport.from_json(_load_json(p_par))


# -- select ---------------------------------------------------------------

def stage_select(cfg: RunConfig):
    art = Artifacts(cfg)
    md, report = _prep_outputs(art, "select")
    raw = _metadata(art, "select")
    retained = report.retained
    if len(retained) < 2:
        raise StageError("select", f"only {len(retained)} feature(s) passed the Spearman filter; need 2")
    idx = [md.feature_names.index(n) for n in retained]
    gm = compute_goodness(raw, cfg.epsilon_good, cfg.relative_good)
    try:
        clusters, candidates, scores, sel = featsel.run_selection(
            md.F[idx], retained, gm.good, md.instance_ids, md.technique_names, k=cfg.k_clusters,
            cap=cfg.candidate_cap, seed=cfg.seed, n_trees=cfg.n_trees, n_folds=cfg.n_folds)
    except ValueError as exc:
        raise StageError("select", str(exc)) from exc
    art.path("featsel_report.csv").write_text(
        featsel.report_csv(scores, sel, md.technique_names, [_stamp(cfg)]), encoding="utf-8")
    _dump_json(art.path("selection.json"), {
        "selected": list(candidates[sel]),
        "candidate": sel,
        "mean_error": scores[sel].mean_error,
        "k": clusters.k,
        "silhouette": None if np.isnan(clusters.silhouette) else clusters.silhouette,
        "clusters": clusters.clusters(),
    }, cfg)
    _log("select", "selected %s (mean CV error %.4f) from %d candidates",
         ", ".join(candidates[sel]), scores[sel].mean_error, len(candidates))
    return list(candidates[sel])


def _selected(art: Artifacts, stage: str) -> list[str]:
    (p,) = art.require(stage, "selection.json")
    return list(_load_json(p)["selected"])


# -- project --------------------------------------------------------------

def standardize_rows(M) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    mu = M.mean(axis=1, keepdims=True)
    sd = M.std(axis=1, keepdims=True)
    return np.where(sd > 0, (M - mu) / np.where(sd > 0, sd, 1.0), 0.0)


def stage_project(cfg: RunConfig):
    art = Artifacts(cfg)
    md, _ = _prep_outputs(art, "project")
    sel = _selected(art, "project")
    F_sel = np.vstack([md.feature(n) for n in sel])
    try:
        proj = pilot.fit_projection(F_sel, standardize_rows(md.Y), restarts=cfg.restarts, seed=cfg.seed,
                                    feature_names=sel, technique_names=md.technique_names)
    except ValueError as exc:
        raise StageError("project", str(exc)) from exc
    _dump_json(art.path("projection.json"), proj.to_json(), cfg)
    write_coordinates(art.path("coordinates.csv"), md, proj.Z, [_stamp(cfg)])
    _log("project", "restart %d chosen, objective %.6g, topological preservation %.4f",
         proj.restart_id, proj.objective, proj.topo_preservation)
    return proj


def write_coordinates(path, md: Metadata, Z, header_lines=()):
    buf = io.StringIO()
    for line in header_lines:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["instance", "z1", "z2", "source"])
    src = md.source_labels or [""] * md.n_instances
    for j, iid in enumerate(md.instance_ids):
        w.writerow([iid, repr(float(Z[0, j])), repr(float(Z[1, j])), src[j]])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def read_coordinates(path):
    rows = list(csv.DictReader(line for line in Path(path).open(encoding="utf-8") if not line.startswith("#")))
    ids = [r["instance"] for r in rows]
    Z = np.array([[float(r["z1"]) for r in rows], [float(r["z2"]) for r in rows]])
    return ids, Z, [r["source"] for r in rows]


def _projection(art: Artifacts, stage: str):
    md, report = _prep_outputs(art, stage)
    (p,) = art.require(stage, "projection.json")
    doc = _load_json(p)
    F_sel = np.vstack([md.feature(n) for n in doc["feature_names"]])
    return md, report, pilot.Projection.from_json(doc, F_sel)


# -- footprints -----------------------------------------------------------

def stage_footprints(cfg: RunConfig):
    art = Artifacts(cfg)
    raw = _metadata(art, "footprints")
    (p,) = art.require("footprints", "coordinates.csv")
    ids, Z, _ = read_coordinates(p)
    if ids != raw.instance_ids:
        raise StageError("footprints", "coordinates.csv does not match metadata.csv instance order")
    gm = compute_goodness(raw, cfg.epsilon_good, cfg.relative_good)
    try:
        base = footprint.space_baseline(Z)
        good = [footprint.build_footprint(t, "good", Z, gm.good[j], base, cfg.alpha_radius, cfg.epsilon_scale)
                for j, t in enumerate(raw.technique_names)]
        best = [footprint.build_footprint(t, "best", Z, gm.best[j], base, cfg.alpha_radius, cfg.epsilon_scale)
                for j, t in enumerate(raw.technique_names)]
        best = footprint.resolve_conflicts(best, Z, list(gm.best), base)
    except (ValueError, footprint.FootprintError) as exc:
        raise StageError("footprints", str(exc)) from exc

    d = art.mkdir("footprints")
    for fp in good + best:
        (d / f"{fp.technique}_{fp.kind}.geojson").write_text(
            footprint.dumps_geojson(footprint.to_geojson(fp, cfg.fingerprint)), encoding="utf-8")
    rows = footprint.table_rows(good, best)
    art.path("footprint_summary.csv").write_text(footprint.summary_csv(rows, [_stamp(cfg)]), encoding="utf-8")
    _dump_json(art.path("footprints.json"), {
        "baseline": {"area": base.area, "density": base.density, "n_instances": base.n_instances},
        "good_rate": {t: float(r) for t, r in zip(raw.technique_names, gm.rates())},
        "footprints": [footprint.to_geojson(fp)["features"][0]["properties"] for fp in good + best],
    }, cfg)
    _log("footprints", "space area %.4g; good footprints: %s", base.area,
         ", ".join(f"{f.technique}={f.alpha_n:.1f}%" for f in good))
    return base, good, best


def load_footprints(art: Artifacts, stage: str, technique_names):
    art.require(stage, "footprints.json")
    out = []
    for kind in ("good", "best"):
        for t in technique_names:
            p = art.path(f"footprints/{t}_{kind}.geojson")
            if not p.exists():
                raise StageError(stage, f"missing {p}")
            out.append(footprint.from_geojson(_load_json(p)))
    return out


# -- boundary -------------------------------------------------------------

def stage_boundary(cfg: RunConfig):
    art = Artifacts(cfg)
    md, _, proj = _projection(art, "boundary")
    rho = prep.spearman_matrix(proj.F)
    fallback = ""
    try:
        full = bnd.compute_boundary(proj.F, proj.A, rho, prune=False)
    except ValueError as exc:
        raise StageError("boundary", str(exc)) from exc
    try:
        pruned = bnd.compute_boundary(proj.F, proj.A, rho, threshold=cfg.boundary_threshold)
    except bnd.BoundaryError as exc:
        log.warning("boundary: %s; using the unpruned hull", exc)
        fallback = str(exc)
        pruned = full
    Z = proj.Z
    doc = {"type": "FeatureCollection", "features": [
        {"type": "Feature",
         "properties": {"kind": "pruned", "fallback": bool(fallback), "q": pruned.q, "pruned_count": pruned.pruned_count,
                        "area": pruned.polygon.area, "config_fingerprint": cfg.fingerprint},
         "geometry": {"type": "Polygon", "coordinates": [_ring(pruned.hull)]}},
        {"type": "Feature",
         "properties": {"kind": "unpruned", "q": full.q, "area": full.polygon.area},
         "geometry": {"type": "Polygon", "coordinates": [_ring(full.hull)]}},
    ]}
    art.path("boundary.geojson").write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n", encoding="utf-8")
    lines = [
        _stamp(cfg),
        f"features: {', '.join(proj.feature_names)}",
        f"vertices_total (2^n): {full.q}",
        f"pruning_threshold: {cfg.boundary_threshold}",
        f"pruned_count: {pruned.pruned_count}",
        f"vertices_kept (q): {pruned.q}",
        f"hull_area: {pruned.polygon.area:.6g}",
        f"unpruned_hull_area: {full.polygon.area:.6g}",
        f"instance_hull_fraction: {bnd.occupancy(pruned, Z):.6f}",
    ]
    if fallback:
        lines.append(f"pruning_fallback: {fallback}")
    if pruned.degenerate:
        lines.append(f"degenerate_axes: {', '.join(proj.feature_names[j] for j in pruned.degenerate)}")
    art.path("boundary_report.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    _log("boundary", "%d of %d vertices kept, hull area %.4g", pruned.q, full.q, pruned.polygon.area)
    return pruned


def _ring(hull):
    pts = [[float(a), float(b)] for a, b in hull]
    return pts + [pts[0]]


def _boundary_hull(art: Artifacts, stage: str):
    (p,) = art.require(stage, "boundary.geojson")
    feat = _load_json(p)["features"][0]
    return np.array(feat["geometry"]["coordinates"][0][:-1], dtype=float)


# -- plot -----------------------------------------------------------------

def available_layers(md: Metadata, feature_names):
    return (["sources"] + [f"performance:{t}" for t in md.technique_names]
            + [f"feature:{n}" for n in feature_names] + ["footprints", "boundary"])


def stage_plot(cfg: RunConfig, layers=None, quadrants: bool = False):
    art = Artifacts(cfg)
    raw = _metadata(art, "plot")
    md, _, proj = _projection(art, "plot")
    Z = proj.Z
    layers = layers or available_layers(raw, proj.feature_names)
    perf = {t: raw.performance(t) for t in raw.technique_names}
    feats = {n: md.feature(n) for n in md.feature_names}
    d = art.mkdir("plots")
    written = []
    for layer in layers:
        kwargs = {}
        if layer.startswith("footprints"):
            kwargs["footprints"] = load_footprints(art, "plot", raw.technique_names)
        if layer == "boundary":
            kwargs["boundary"] = _boundary_hull(art, "plot")
        try:
            svg = plot_space(Z, layer, sources=raw.source_labels, performance=perf, features=feats,
                             quadrants=quadrants, comment=_stamp(cfg), **kwargs)
        except ValueError as exc:
            raise StageError("plot", str(exc)) from exc
        p = d / (layer.replace(":", "_") + ".svg")
        p.write_text(svg, encoding="utf-8")
        written.append(p)
    _log("plot", "%d plot(s) written", len(written))
    return written


# -- report ---------------------------------------------------------------

def stage_report(cfg: RunConfig) -> str:
    art = Artifacts(cfg)
    (p_sum, p_sel, p_proj, p_fp) = art.require("report", "footprint_summary.csv", "selection.json",
                                               "projection.json", "footprints.json")
    rows = footprint.parse_summary_csv(p_sum.read_text(encoding="utf-8"))
    sel = _load_json(p_sel)
    proj = _load_json(p_proj)
    fps = _load_json(p_fp)
    out = [f"Instance space analysis report ({_stamp(cfg)})", ""]
    out.append("Configuration:")
    for k, v in sorted(cfg.analysis_values().items()):
        out.append(f"  {k} = {v}")
    out += ["", f"Selected features ({len(sel['selected'])}): {', '.join(sel['selected'])}",
            f"  feature clusters k = {sel['k']}, candidate mean CV error = {sel['mean_error']:.4f}",
            "", f"Projection: restart {proj['restart_id']}, objective {proj['objective']:.6g}, "
                f"topological preservation {proj['topo_preservation']:.4f}",
            "  Z = A F with A ="]
    for name, a1, a2 in zip(proj["feature_names"], proj["A"][0], proj["A"][1]):
        out.append(f"    {name:>20s}  {a1: .4f}  {a2: .4f}")
    out += ["", f"Space baseline: area {fps['baseline']['area']:.6g}, density {fps['baseline']['density']:.6g}", ""]
    widths = (14, 10, 10, 10, 10, 10, 10)
    out.append("".join(h.rjust(w) if j else h.ljust(w) for j, (h, w) in enumerate(zip(footprint.TABLE_COLUMNS, widths))))
    for r in rows:
        out.append(r[0].ljust(widths[0]) + "".join(f"{v:.1f}".rjust(w) for v, w in zip(r[1:], widths[1:])))
    bpath = art.path("boundary_report.txt")
    if bpath.exists():
        out += ["", "Boundary:"] + ["  " + line for line in bpath.read_text(encoding="utf-8").splitlines()[1:]]
    text = "\n".join(out) + "\n"
    art.path("report.txt").write_text(text, encoding="utf-8")
    _log("report", "written to %s", art.path("report.txt"))
    return text


# -- recommend ------------------------------------------------------------

def recommend(cfg: RunConfig, x: dict[str, float]):
    """Rank techniques whose good footprint contains the projected instance.

    Returns (point, ranking, fallback) where ranking is a list of
    (technique, purity, alpha_N) ordered by purity then area.
    """
    art = Artifacts(cfg)
    md, report, proj = _projection(art, "recommend")
    known = set(md.feature_names)
    unknown = sorted(set(x) - known)
    if unknown:
        raise StageError("recommend", f"features not in the training meta-data: {', '.join(unknown)}")
    missing = [n for n in proj.feature_names if n not in x]
    if missing:
        raise StageError("recommend", f"missing required features: {', '.join(missing)}")
    params = report.by_name()
    vec = np.array([float(params[n].apply(np.array([x[n]]))[0]) for n in proj.feature_names])
    z = pilot.project_point(proj, vec)
    fps = [f for f in load_footprints(art, "recommend", md.technique_names) if f.kind == "good"]
    hits = [f for f in fps if footprint.enclosed_mask(f.geometry, z.reshape(2, 1))[0]]
    order = {t: j for j, t in enumerate(md.technique_names)}
    hits.sort(key=lambda f: (-f.purity, -f.alpha_n, order[f.technique]))
    ranking = [(f.technique, f.purity, f.alpha_n) for f in hits]
    if ranking:
        return z, ranking, False
    rates = _load_json(art.path("footprints.json"))["good_rate"]
    top = max(md.technique_names, key=lambda t: (rates[t], -order[t]))
    return z, [(top, float("nan"), float("nan"))], True


# -- run ------------------------------------------------------------------

def run_pipeline(cfg: RunConfig, quadrants: bool = False) -> Path:
    stage_ingest(cfg)
    stage_prep(cfg)
    stage_select(cfg)
    stage_project(cfg)
    stage_footprints(cfg)
    stage_boundary(cfg)
    stage_plot(cfg, quadrants=quadrants)
    stage_report(cfg)
    return Path(cfg.out)
