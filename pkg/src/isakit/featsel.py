"""Cluster-and-score feature selection.

Features are k-means clustered (features as points across instances), one
feature per cluster is combined into candidate subsets, and each subset is
scored by how well random forests predict the good/bad labels from its 2-D
PCA projection.
"""

from __future__ import annotations

import csv
import hashlib
import io
import itertools
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.cluster import KMeans
from sklearn.ensemble import RandomForestClassifier
from sklearn.metrics import silhouette_score
from sklearn.model_selection import StratifiedKFold

log = logging.getLogger(__name__)


class FeatSelError(ValueError):
    pass


@dataclass(frozen=True)
class FeatureClusterSet:
    k: int
    assignment: dict[str, int]
    silhouette: float
    silhouette_curve: dict[int, float] = field(default_factory=dict)

    def clusters(self) -> list[list[str]]:
        """Feature names per cluster, in input-feature order."""
        groups = [[] for _ in range(self.k)]
        for name, c in self.assignment.items():
            groups[c].append(name)
        return groups


@dataclass(frozen=True)
class CandidateScore:
    subset: tuple[str, ...]
    errors: dict[str, float]
    flagged: tuple[str, ...]  # techniques with single-class labels, excluded from the mean
    mean_error: float


def cluster_features(F_std, names, k=None, seed: int = 0, n_init: int = 100,
                     k_max: int = 12) -> FeatureClusterSet:
    """k-means over feature rows; silhouette picks k when not given."""
    X = np.asarray(F_std, dtype=float)
    names = list(names)
    f = X.shape[0]
    if f < 2:
        raise FeatSelError("need at least 2 features to cluster")
    if k is not None:
        if k > f:
            raise FeatSelError(f"k={k} exceeds the feature count {f}")
        if k < 1:
            raise FeatSelError("k must be >= 1")
        labels = _kmeans(X, k, seed, n_init)
        sil = _silhouette(X, labels)
        return FeatureClusterSet(k, _assignment(names, labels), sil, {k: sil})

    ks = list(range(3, min(k_max, f - 1) + 1))
    if not ks:
        # too few features for a silhouette search: every feature is its own cluster
        labels = np.arange(f)
        return FeatureClusterSet(f, _assignment(names, labels), float("nan"), {})
    curve, fits = {}, {}
    for kk in ks:
        labels = _kmeans(X, kk, seed, n_init)
        curve[kk] = _silhouette(X, labels)
        fits[kk] = labels
    best = max(ks, key=lambda kk: (curve[kk], -kk))
    return FeatureClusterSet(best, _assignment(names, fits[best]), curve[best], curve)


def _kmeans(X, k, seed, n_init):
    km = KMeans(n_clusters=k, init="k-means++", n_init=n_init, random_state=seed)
    return km.fit_predict(X)


def _silhouette(X, labels):
    n_lab = len(set(labels.tolist()))
    if n_lab < 2 or n_lab >= X.shape[0]:
        return float("nan")
    return float(silhouette_score(X, labels, metric="euclidean"))


def _assignment(names, labels):
    # renumber clusters by first appearance so ids are stable across k-means label permutations
    remap = {}
    for lab in labels.tolist():
        remap.setdefault(lab, len(remap))
    return {n: remap[lab] for n, lab in zip(names, labels.tolist())}


def enumerate_candidates(clusters, cap: int = 1000, seed: int = 0) -> list[tuple[str, ...]]:
    """One feature per cluster; a seeded sample of `cap` distinct combinations if too many."""
    if cap < 1:
        raise FeatSelError("cap must be >= 1")
    clusters = [list(c) for c in clusters]
    if any(len(c) == 0 for c in clusters):
        raise FeatSelError("empty cluster")
    sizes = [len(c) for c in clusters]
    total = math.prod(sizes)
    if total <= cap:
        return [tuple(combo) for combo in itertools.product(*clusters)]
    rng = np.random.default_rng(seed)
    picked = sorted(rng.choice(total, size=cap, replace=False).tolist())
    out = []
    for flat in picked:
        combo = []
        for c, s in zip(reversed(clusters), reversed(sizes)):
            flat, r = divmod(flat, s)
            combo.append(c[r])
        out.append(tuple(reversed(combo)))
    return out


def pca_2d(X) -> np.ndarray:
    """Project rows of X (instances x features) onto the top-2 covariance eigenvectors.

    Each component's sign is fixed so its largest-magnitude loading is positive.
    """
    X = np.asarray(X, dtype=float)
    Xc = X - X.mean(axis=0)
    cov = np.cov(Xc, rowvar=False, bias=True)
    vals, vecs = np.linalg.eigh(np.atleast_2d(cov))
    order = np.argsort(vals)[::-1][:2]
    W = vecs[:, order]
    for c in range(W.shape[1]):
        j = np.argmax(np.abs(W[:, c]))
        if W[j, c] < 0:
            W[:, c] = -W[:, c]
    return Xc @ W


def canonical_order(instance_ids, seed: int) -> np.ndarray:
    """Seeded permutation of instances that ignores file order."""
    keys = [hashlib.sha256(f"{seed}:{iid}".encode()).hexdigest() for iid in instance_ids]
    return np.array(sorted(range(len(keys)), key=lambda j: (keys[j], instance_ids[j])), dtype=int)


def cv_error(Z, y, seed: int = 0, n_trees: int = 100, n_folds: int = 5) -> float:
    """Stratified k-fold misclassification rate of a random forest on Z."""
    y = np.asarray(y).astype(int)
    min_count = np.bincount(y, minlength=2).min()
    folds = min(n_folds, int(min_count))
    skf = StratifiedKFold(n_splits=folds, shuffle=False)
    wrong = 0
    for train, test in skf.split(Z, y):
        rf = RandomForestClassifier(n_estimators=n_trees, max_depth=None, max_features="sqrt",
                                    random_state=seed, n_jobs=1)
        rf.fit(Z[train], y[train])
        wrong += int(np.count_nonzero(rf.predict(Z[test]) != y[test]))
    return wrong / len(y)


def score_candidate(subset, F_std, names, good, instance_ids, technique_names,
                    seed: int = 0, n_trees: int = 100, n_folds: int = 5) -> CandidateScore:
    """Mean cross-validated RF error over techniques for one feature subset.

    `good` is the technique x instance boolean matrix. Techniques whose labels
    have fewer than two members in some class cannot be cross-validated; they
    score 0 and are left out of the mean.
    """
    subset = tuple(subset)
    if len(subset) < 2:
        raise FeatSelError("a candidate needs at least 2 features")
    idx = [list(names).index(s) for s in subset]
    order = canonical_order(list(instance_ids), seed)
    X = np.asarray(F_std, dtype=float)[idx][:, order].T
    Z = pca_2d(X)
    good = np.asarray(good, dtype=bool)[:, order]
    errors, flagged = {}, []
    for t, tname in enumerate(technique_names):
        y = good[t]
        if min(np.count_nonzero(y), np.count_nonzero(~y)) < 2:
            errors[tname] = 0.0
            flagged.append(tname)
            continue
        errors[tname] = cv_error(Z, y, seed=seed, n_trees=n_trees, n_folds=n_folds)
    used = [errors[t] for t in technique_names if t not in flagged]
    mean = float(np.mean(used)) if used else 0.0
    return CandidateScore(subset, errors, tuple(flagged), mean)


def select_features(scores) -> int:
    """Index of the lowest mean error; first in enumeration order on ties."""
    scores = list(scores)
    if not scores:
        raise FeatSelError("no candidates to select from")
    return min(range(len(scores)), key=lambda j: (scores[j].mean_error, j))


def run_selection(F_std, names, good, instance_ids, technique_names, k=None, cap: int = 1000,
                  seed: int = 0, n_trees: int = 100, n_folds: int = 5):
    """Cluster, enumerate and score; returns (clusters, candidates, scores, selected index)."""
    names = list(names)
    clusters = cluster_features(F_std, names, k=k, seed=seed)
    groups = clusters.clusters()
    candidates = enumerate_candidates(groups, cap=cap, seed=seed)
    scores = []
    for cid, subset in enumerate(candidates):
        scores.append(score_candidate(subset, F_std, names, good, instance_ids, technique_names,
                                      seed=seed, n_trees=n_trees, n_folds=n_folds))
        log.debug("candidate %d %s mean error %.4f", cid, subset, scores[-1].mean_error)
    return clusters, candidates, scores, select_features(scores)


def report_csv(scores, selected: int, technique_names, header_lines=()) -> str:
    buf = io.StringIO()
    for line in header_lines:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["candidate", "features"] + [f"error_{t}" for t in technique_names] + ["mean_error", "selected"])
    for cid, s in enumerate(scores):
        w.writerow([cid, ";".join(s.subset)] + [repr(s.errors[t]) for t in technique_names]
                   + [repr(s.mean_error), int(cid == selected)])
    return buf.getvalue()


def read_selected(text: str) -> tuple[str, ...]:
    rows = csv.DictReader(line for line in io.StringIO(text) if not line.startswith("#"))
    for row in rows:
        if row["selected"] == "1":
            return tuple(row["features"].split(";"))
    raise FeatSelError("no selected candidate in report")
