"""Command-line interface.

Exit codes: 0 success, 2 usage/configuration error, and one code per stage
failure (see ``pipeline.EXIT_CODES``): ingest 10, features-cfg 11, prep 12,
select 13, project 14, footprints 15, boundary 16, plot 17, report 18,
recommend 19, synth 20.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

from . import pipeline, synth
from .config import ConfigError, RunConfig, build_config, parse_config_file
from .metadata import write_metadata
from .pipeline import EXIT_CODES, StageError

log = logging.getLogger("isakit")

# CLI flag -> RunConfig field
OVERRIDES = {
    "epsilon_good": float, "spearman_floor": float, "duplicate_rho": float, "boundary_threshold": float,
    "restarts": int, "candidate_cap": int, "k_clusters": int, "n_trees": int, "n_folds": int,
    "alpha_radius": float,
}


def _common(p: argparse.ArgumentParser):
    p.add_argument("--seed", type=int, default=None, help="global random seed (default 0)")
    p.add_argument("--config", type=Path, default=None, help="key=value configuration file")
    p.add_argument("--out", default=None, help="artifact directory (default isa_out)")
    p.add_argument("-v", "--verbose", action="store_true")


def _thresholds(p: argparse.ArgumentParser):
    for name, typ in OVERRIDES.items():
        p.add_argument("--" + name.replace("_", "-"), type=typ, default=None, dest=name)
    p.add_argument("--relative-good", action="store_true", default=None,
                   help="measure the goodness gap relative to the best coverage")
    p.add_argument("--epsilon-scale", choices=("area", "length"), default=None,
                   help="DBSCAN radius scaling by the range product (area) or its square root (length)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="isakit", description="Instance space analysis pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_, metadata=False):
        p = sub.add_parser(name, help=help_)
        _common(p)
        _thresholds(p)
        if metadata:
            p.add_argument("--metadata", default=None, help="metadata CSV")
        return p

    add("ingest", "validate meta-data and label good/best", metadata=True)
    p = sub.add_parser("features-cfg", help="compute control-flow-graph features from class graph JSON")
    p.add_argument("graphs", nargs="+", type=Path, help="class graph JSON files or directories")
    p.add_argument("--merge", type=Path, default=None, help="metadata CSV to append the features to")
    p.add_argument("-o", "--output", type=Path, required=True)
    p.add_argument("-v", "--verbose", action="store_true")
    add("prep", "bound outliers, Box-Cox, standardise and filter features")
    add("select", "cluster features and pick the best subset")
    add("project", "fit the 2-D projection")
    add("footprints", "build good/best footprints")
    add("boundary", "estimate the instance space boundary")
    p = add("plot", "render SVG plots")
    p.add_argument("--layer", action="append", default=None,
                   help="sources | performance:<technique> | feature:<name> | footprints[:<technique>] | boundary")
    p.add_argument("--quadrants", action="store_true", help="overlay quadrant guides")
    add("report", "write the text report")
    p = add("recommend", "rank techniques for a new instance")
    p.add_argument("features", nargs="*", help="name=value raw feature values")
    p.add_argument("--json", dest="as_json", action="store_true")
    p = add("run", "run every stage", metadata=True)
    p.add_argument("--quadrants", action="store_true")
    p = sub.add_parser("synth", help="generate synthetic meta-data")
    p.add_argument("--spec", type=Path, default=None, help="cluster spec JSON (default: two-cluster demo)")
    p.add_argument("--n-per-cluster", type=int, default=150)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", type=Path, required=True)
    p.add_argument("-v", "--verbose", action="store_true")
    return parser


def _config(args) -> RunConfig:
    file_values = parse_config_file(args.config) if getattr(args, "config", None) else {}
    overrides = {k: getattr(args, k, None) for k in OVERRIDES}
    overrides.update(seed=args.seed, out=args.out, metadata=getattr(args, "metadata", None),
                     relative_good=getattr(args, "relative_good", None),
                     epsilon_scale=getattr(args, "epsilon_scale", None))
    return build_config(file_values, **overrides)


def _graph_files(paths):
    files = []
    for p in paths:
        files += sorted(p.glob("*.json")) if p.is_dir() else [p]
    return files


def _parse_features(items):
    x = {}
    for item in items:
        name, sep, value = item.partition("=")
        if not sep:
            raise ValueError(f"expected name=value, got {item!r}")
        x[name.strip().removeprefix("feature_")] = float(value)
    return x


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    cmd = args.command
    try:
        if cmd == "synth":
            spec = synth.load_spec(args.spec) if args.spec else synth.two_cluster_spec(args.n_per_cluster)
            md = synth.synth_metadata(spec, seed=args.seed)
            write_metadata(md, args.output)
            log.info("synth: %d instances written to %s", md.n_instances, args.output)
            return 0
        if cmd == "features-cfg":
            pipeline.stage_features_cfg(_graph_files(args.graphs), args.output, merge_into=args.merge)
            log.info("features-cfg: written to %s", args.output)
            return 0

        cfg = _config(args)
        if cmd == "run":
            pipeline.run_pipeline(cfg, quadrants=args.quadrants)
        elif cmd == "ingest":
            pipeline.stage_ingest(cfg)
        elif cmd == "prep":
            pipeline.stage_prep(cfg)
        elif cmd == "select":
            pipeline.stage_select(cfg)
        elif cmd == "project":
            pipeline.stage_project(cfg)
        elif cmd == "footprints":
            pipeline.stage_footprints(cfg)
        elif cmd == "boundary":
            pipeline.stage_boundary(cfg)
        elif cmd == "plot":
            pipeline.stage_plot(cfg, layers=args.layer, quadrants=args.quadrants)
        elif cmd == "report":
            print(pipeline.stage_report(cfg), end="")
        elif cmd == "recommend":
            try:
                x = _parse_features(args.features)
            except ValueError as exc:
                raise StageError("recommend", str(exc)) from exc
            z, ranking, fallback = pipeline.recommend(cfg, x)
            _print_recommendation(z, ranking, fallback, args.as_json)
        return 0
    except (ConfigError, argparse.ArgumentTypeError) as exc:
        log.error("configuration: %s", exc)
        return EXIT_CODES["usage"]
    except StageError as exc:
        log.error("%s", exc)
        return exc.exit_code
    except (synth.SynthError, OSError, ValueError) as exc:
        stage = cmd if cmd in EXIT_CODES else "usage"
        log.error("%s: %s", cmd, exc)
        return EXIT_CODES[stage]


def _print_recommendation(z, ranking, fallback, as_json):
    if as_json:
        doc = {"z1": float(z[0]), "z2": float(z[1]), "fallback": fallback,
               "ranking": [{"technique": t, "purity": None if math.isnan(p) else p,
                            "alpha_N": None if math.isnan(a) else a} for t, p, a in ranking]}
        print(json.dumps(doc, sort_keys=True))
        return
    print(f"projected point: z1={z[0]:.4f} z2={z[1]:.4f}")
    if fallback:
        print(f"outside every good footprint; fallback (highest good rate): {ranking[0][0]}")
        return
    for rank, (t, p, a) in enumerate(ranking, start=1):
        print(f"{rank}. {t}  purity={p:.3f}  alpha_N={a:.1f}%")


if __name__ == "__main__":
    sys.exit(main())
