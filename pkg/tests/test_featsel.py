import numpy as np
import pytest
from scipy.spatial.distance import pdist

from isakit.featsel import (CandidateScore, FeatSelError, canonical_order, cluster_features,
                            enumerate_candidates, pca_2d, read_selected, report_csv, run_selection,
                            score_candidate, select_features)


def silhouette_oracle(X, labels):
    """Direct mean silhouette from the pairwise distance matrix."""
    D = np.sqrt(((X[:, None, :] - X[None, :, :]) ** 2).sum(-1))
    s = []
    for i in range(len(X)):
        same = labels == labels[i]
        if same.sum() == 1:
            s.append(0.0)
            continue
        a = D[i, same & (np.arange(len(X)) != i)].mean()
        b = min(D[i, labels == c].mean() for c in set(labels.tolist()) if c != labels[i])
        s.append((b - a) / max(a, b))
    return float(np.mean(s))


def test_duplicated_groups_form_clusters(rng):
    a, b = rng.standard_normal(50), rng.standard_normal(50)
    F = np.vstack([a, a, a, b, b])
    cs = cluster_features(F, list("pqrst"), k=2)
    assert sorted(cs.clusters()) == [["p", "q", "r"], ["s", "t"]]


def test_orthogonal_features_are_singletons():
    F = np.eye(3) * 10
    cs = cluster_features(F, ["a", "b", "c"], k=3)
    assert sorted(cs.clusters()) == [["a"], ["b"], ["c"]]


def test_k_larger_than_feature_count():
    with pytest.raises(FeatSelError):
        cluster_features(np.ones((2, 5)), ["a", "b"], k=3)


def test_silhouette_selects_four_prototypes():
    rng = np.random.default_rng(7)
    protos = rng.standard_normal((4, 200))
    F = np.vstack([protos[j % 4] + 0.3 * rng.standard_normal(200) for j in range(16)])
    names = [f"f{j}" for j in range(16)]
    cs = cluster_features(F, names, seed=0)
    assert cs.k == 4
    truth = np.arange(16) % 4
    assert cs.silhouette == pytest.approx(silhouette_oracle(F, truth), abs=1e-9)
    for k, val in cs.silhouette_curve.items():
        labels = np.array([cs.assignment[n] for n in names]) if k == 4 else None
        if labels is not None:
            assert val == pytest.approx(silhouette_oracle(F, labels), abs=1e-9)
        assert val <= cs.silhouette + 1e-12


def test_enumerate_candidates_counts():
    assert len(enumerate_candidates([["a", "b"], ["c", "d", "e"]])) == 6
    assert enumerate_candidates([["a"], ["b"], ["c"]]) == [("a", "b", "c")]
    clusters = [[f"c{i}_{j}" for j in range(10)] for i in range(4)]
    cands = enumerate_candidates(clusters, cap=1000, seed=3)
    assert len(cands) == 1000 == len(set(cands))
    assert all(c[i] in clusters[i] for c in cands for i in range(4))
    assert cands == enumerate_candidates(clusters, cap=1000, seed=3)
    with pytest.raises(FeatSelError):
        enumerate_candidates([["a"], []])


def test_pca_on_2d_data_is_a_rotation(rng):
    X = rng.standard_normal((40, 2)) @ np.array([[3.0, 1.0], [0.0, 0.5]])
    Z = pca_2d(X)
    np.testing.assert_allclose(pdist(Z), pdist(X), atol=1e-9)


def test_pca_sign_convention(rng):
    X = rng.standard_normal((30, 4))
    Z1 = pca_2d(X)
    Z2 = pca_2d(-X)
    np.testing.assert_allclose(Z1, -Z2, atol=1e-9)


def _blobs(rng, n=200):
    ids = [f"i{j}" for j in range(n)]
    y = np.arange(n) % 2 == 0
    informative = np.where(y, 3.0, -3.0) + rng.standard_normal(n)
    return ids, y, informative


def test_separable_labels_low_error(rng):
    ids, y, inf = _blobs(rng)
    F = np.vstack([inf, 0.1 * rng.standard_normal(len(ids))])
    s = score_candidate(("inf", "n"), F, ["inf", "n"], y[None], ids, ["t"])
    assert s.errors["t"] <= 0.05


def test_coin_flip_labels_error_near_half(rng):
    ids, _, _ = _blobs(rng, 300)
    F = rng.standard_normal((2, 300))
    y = rng.uniform(size=300) < 0.5
    s = score_candidate(("a", "b"), F, ["a", "b"], y[None], ids, ["t"])
    assert abs(s.errors["t"] - 0.5) <= 0.1


def test_single_class_technique_flagged(rng):
    ids, y, inf = _blobs(rng, 60)
    F = np.vstack([inf, rng.standard_normal(60)])
    good = np.vstack([y, np.ones(60, dtype=bool)])
    s = score_candidate(("a", "b"), F, ["a", "b"], good, ids, ["t1", "t2"])
    assert s.flagged == ("t2",) and s.errors["t2"] == 0.0
    assert s.mean_error == s.errors["t1"]


def test_score_invariant_to_instance_order(rng):
    ids, y, inf = _blobs(rng, 80)
    F = np.vstack([inf + rng.standard_normal(80), rng.standard_normal(80)])
    perm = rng.permutation(80)
    a = score_candidate(("a", "b"), F, ["a", "b"], y[None], ids, ["t"], seed=4)
    b = score_candidate(("a", "b"), F[:, perm], ["a", "b"], y[None][:, perm], [ids[p] for p in perm], ["t"], seed=4)
    assert a == b


def test_canonical_order_ignores_file_order():
    ids = ["x", "y", "z", "w"]
    o1 = [ids[j] for j in canonical_order(ids, 1)]
    o2 = [ids[::-1][j] for j in canonical_order(ids[::-1], 1)]
    assert o1 == o2


def test_select_features_rules():
    s = lambda e: CandidateScore(("a", "b"), {}, (), e)  # noqa: E731
    assert select_features([s(0.3)]) == 0
    assert select_features([s(0.3), s(0.1), s(0.1)]) == 1
    with pytest.raises(FeatSelError):
        select_features([])


def test_informative_candidate_wins(rng):
    ids, y, inf = _blobs(rng, 150)
    noise1, noise2 = rng.standard_normal((2, 150))
    F = np.vstack([inf, noise1, noise2])
    names = ["inf", "n1", "n2"]
    scores = [score_candidate(c, F, names, y[None], ids, ["t"]) for c in [("n1", "n2"), ("inf", "n2")]]
    assert select_features(scores) == 1


def test_run_selection_is_deterministic_and_reports(rng):
    ids, y, inf = _blobs(rng, 60)
    F = np.vstack([inf, inf + 0.1 * rng.standard_normal(60), rng.standard_normal(60), rng.standard_normal(60)])
    names = ["a", "a2", "n1", "n2"]
    r1 = run_selection(F, names, y[None], ids, ["t"], k=2, n_trees=20)
    r2 = run_selection(F, names, y[None], ids, ["t"], k=2, n_trees=20)
    assert r1[2] == r2[2] and r1[3] == r2[3]
    text = report_csv(r1[2], r1[3], ["t"], ["hdr"])
    assert read_selected(text) == r1[1][r1[3]]
    assert set(read_selected(text)) <= set(names)
