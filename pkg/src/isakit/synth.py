"""Synthetic meta-data generator for tests and demos."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .metadata import Metadata


class SynthError(ValueError):
    pass


def two_cluster_spec(n_per_cluster: int = 150, n_features: int = 6, separation: float = 4.0) -> dict:
    """Two Gaussian clusters that differ only in the first two features.

    Technique A covers cluster 1 well, B covers cluster 2 well and C is
    mediocre everywhere.
    """
    m1 = [separation, separation] + [0.0] * (n_features - 2)
    m2 = [0.0, 0.0] + [0.0] * (n_features - 2)
    return {
        "feature_names": ["inf1", "inf2"] + [f"noise{j}" for j in range(1, n_features - 1)],
        "clusters": [
            {"name": "cluster1", "size": n_per_cluster, "mean": m1, "scale": 1.0},
            {"name": "cluster2", "size": n_per_cluster, "mean": m2, "scale": 1.0},
        ],
        "techniques": {"A": [0.95, 0.55], "B": [0.55, 0.95], "C": [0.75, 0.75]},
        "noise": 0.02,
    }


def load_spec(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _validate(spec):
    clusters = spec.get("clusters") or []
    techs = spec.get("techniques") or {}
    if len(clusters) < 1:
        raise SynthError("need at least one cluster")
    if len(techs) < 2:
        raise SynthError("need at least two techniques")
    dim = len(clusters[0]["mean"])
    for c in clusters:
        if len(c["mean"]) != dim:
            raise SynthError(f"cluster {c.get('name')}: mean has length {len(c['mean'])}, expected {dim}")
        scale = np.asarray(c.get("scale", 1.0), dtype=float)
        if np.any(scale <= 0):
            raise SynthError(f"cluster {c.get('name')}: covariance scale must be positive")
        if int(c["size"]) < 1:
            raise SynthError(f"cluster {c.get('name')}: size must be >= 1")
    for t, means in techs.items():
        if len(means) != len(clusters):
            raise SynthError(f"technique {t}: need one coverage mean per cluster")
    if spec.get("noise", 0.0) < 0:
        raise SynthError("noise must be >= 0")
    return dim


def synth_metadata(spec: dict, seed: int = 0) -> Metadata:
    """Sample instances per cluster; coverage = cluster mean + N(0, noise), clipped to [0, 1]."""
    dim = _validate(spec)
    rng = np.random.default_rng(seed)
    names = spec.get("feature_names") or [f"f{j + 1}" for j in range(dim)]
    techs = list(spec["techniques"])
    noise = float(spec.get("noise", 0.0))
    F_cols, Y_cols, sources = [], [], []
    for ci, c in enumerate(spec["clusters"]):
        size = int(c["size"])
        scale = np.broadcast_to(np.asarray(c.get("scale", 1.0), dtype=float), (dim,))
        F_cols.append(np.asarray(c["mean"], dtype=float)[:, None] + scale[:, None] * rng.standard_normal((dim, size)))
        mu = np.array([spec["techniques"][t][ci] for t in techs], dtype=float)
        Y_cols.append(np.clip(mu[:, None] + noise * rng.standard_normal((len(techs), size)), 0.0, 1.0))
        sources += [str(c.get("name", f"cluster{ci + 1}"))] * size
    F = np.hstack(F_cols)
    Y = np.round(np.hstack(Y_cols), 6)
    F = np.round(F, 6)
    ids = [f"synth_{j:05d}" for j in range(F.shape[1])]
    return Metadata(instance_ids=ids, feature_names=list(names), technique_names=techs, F=F, Y=Y,
                    source_labels=sources)


def expected_good(spec: dict, epsilon_good: float = 0.05) -> dict[tuple[str, str], bool]:
    """Noise-free goodness of each (technique, cluster) from the coverage means."""
    techs = spec["techniques"]
    out = {}
    for ci, c in enumerate(spec["clusters"]):
        best = max(m[ci] for m in techs.values())
        for t, m in techs.items():
            out[(t, str(c.get("name", f"cluster{ci + 1}")))] = best - m[ci] <= epsilon_good
    return out
