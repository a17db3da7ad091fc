import numpy as np
import pytest
from hypothesis import given, strategies as st

from isakit.pilot import (PilotError, Projection, _fun_and_grad, fit_projection, fit_restart, gradient,
                          objective, pack, project_point, topo_preservation)


def _random_problem(rng, n, t, i):
    F = rng.standard_normal((n, i))
    Y = rng.standard_normal((t, i))
    A = rng.standard_normal((2, n))
    B = rng.standard_normal((n, 2))
    C = rng.standard_normal((t, 2))
    return F, Y, A, B, C


def central_difference(F, Y, x, h=1e-6):
    g = np.empty_like(x)
    for j in range(len(x)):
        e = np.zeros_like(x)
        e[j] = h
        g[j] = (_fun_and_grad(x + e, F, Y)[0] - _fun_and_grad(x - e, F, Y)[0]) / (2 * h)
    return g


@pytest.mark.parametrize("shape", [(2, 1, 3), (3, 2, 10), (6, 4, 30)])
def test_gradient_matches_finite_differences(rng, shape):
    F, Y, A, B, C = _random_problem(rng, *shape)
    x = pack(A, B, C)
    analytic = pack(*gradient(A, B, C, F, Y))
    numeric = central_difference(F, Y, x)
    scale = np.maximum(np.abs(numeric), 1.0)
    assert np.max(np.abs(analytic - numeric) / scale) < 1e-5


def test_fun_and_grad_agree_with_public_helpers(rng):
    F, Y, A, B, C = _random_problem(rng, 4, 3, 12)
    f, g = _fun_and_grad(pack(A, B, C), F, Y)
    assert f == pytest.approx(objective(A, B, C, F, Y))
    np.testing.assert_allclose(g, pack(*gradient(A, B, C, F, Y)))


def test_objective_at_zero_is_total_energy(rng):
    F, Y, *_ = _random_problem(rng, 3, 2, 8)
    val = objective(np.zeros((2, 3)), np.zeros((3, 2)), np.zeros((2, 2)), F, Y)
    assert val == pytest.approx(np.sum(F ** 2) + np.sum(Y ** 2))


def test_identity_projection_preserves_topology(rng):
    F = rng.standard_normal((2, 25))
    assert topo_preservation(F, np.eye(2) @ F) == pytest.approx(1.0)


def test_topo_with_constant_distances_is_minus_one():
    F = np.array([[0.0, 1.0, 2.0], [0.0, 1.0, 2.0]])
    assert topo_preservation(F, np.zeros((2, 3))) == -1.0


def test_topo_subsample_is_seeded(rng):
    F = rng.standard_normal((3, 60))
    Z = F[:2]
    a = topo_preservation(F, Z, seed=4, max_points=20)
    b = topo_preservation(F, Z, seed=4, max_points=20)
    assert a == b


def _rank2_problem(rng, n=4, t=3, i=40):
    Z = rng.standard_normal((2, i))
    F = rng.standard_normal((n, 2)) @ Z
    Y = rng.standard_normal((t, 2)) @ Z
    return F, Y


def test_rank_two_data_is_recovered_exactly(rng):
    F, Y = _rank2_problem(rng)
    p = fit_projection(F, Y, restarts=30, seed=3)
    assert min(p.restart_objective) <= 1e-6
    assert p.topo_preservation >= max(p.restart_topo)


def test_selected_restart_maximises_topology(rng):
    F = rng.standard_normal((5, 30))
    Y = rng.standard_normal((2, 30))
    p = fit_projection(F, Y, restarts=6, seed=1)
    assert len(p.restart_topo) == 6
    best = max(p.restart_topo)
    assert p.topo_preservation == best
    assert p.restart_id == min(r for r, v in enumerate(p.restart_topo) if v == best)


def test_trace_is_non_increasing(rng):
    F, Y, *_ = _random_problem(rng, 4, 2, 20)
    *_, trace = fit_restart(F, Y, np.random.default_rng(0))
    assert len(trace) >= 2
    assert all(b <= a * (1 + 1e-12) + 1e-15 for a, b in zip(trace, trace[1:]))


def test_fit_is_deterministic(rng):
    F, Y, *_ = _random_problem(rng, 3, 2, 15)
    p1 = fit_projection(F, Y, restarts=4, seed=9)
    p2 = fit_projection(F, Y, restarts=4, seed=9)
    np.testing.assert_array_equal(p1.A, p2.A)
    assert p1.restart_id == p2.restart_id


def test_z_is_linear_in_f(rng):
    F, Y, *_ = _random_problem(rng, 3, 2, 15)
    p = fit_projection(F, Y, restarts=2, seed=0)
    np.testing.assert_allclose(p.Z, p.A @ F)
    np.testing.assert_allclose(project_point(p, F[:, 4]), p.Z[:, 4])


@given(st.floats(-5, 5), st.floats(-5, 5))
def test_project_point_is_linear(a, b):
    rng = np.random.default_rng(0)
    A = rng.standard_normal((2, 3))
    p = Projection(A=A, B=np.zeros((3, 2)), C=np.zeros((1, 2)), F=np.zeros((3, 3)), objective=0.0,
                   topo_preservation=1.0, restart_id=0, seed=0)
    x, y = rng.standard_normal(3), rng.standard_normal(3)
    np.testing.assert_allclose(project_point(p, a * x + b * y),
                               a * project_point(p, x) + b * project_point(p, y), atol=1e-9)


def test_project_point_checks_dimension(rng):
    p = Projection(A=np.ones((2, 3)), B=np.zeros((3, 2)), C=np.zeros((1, 2)), F=np.zeros((3, 3)),
                   objective=0.0, topo_preservation=1.0, restart_id=0, seed=0)
    with pytest.raises(PilotError, match="3-vector"):
        project_point(p, np.ones(4))


def test_json_round_trip(rng):
    F, Y, *_ = _random_problem(rng, 3, 2, 10)
    p = fit_projection(F, Y, restarts=2, seed=0, feature_names=["a", "b", "c"], technique_names=["x", "y"])
    q = Projection.from_json(p.to_json(), F)
    np.testing.assert_array_equal(q.A, p.A)
    assert q.feature_names == ("a", "b", "c")
    assert q.restart_topo == p.restart_topo


@pytest.mark.parametrize("F, Y, restarts, msg", [
    (np.ones((1, 5)), np.ones((1, 5)), 1, "2 features"),
    (np.ones((2, 2)), np.ones((1, 2)), 1, "3 instances"),
    (np.ones((2, 5)), np.ones((1, 4)), 1, "same number"),
    (np.ones((2, 5)), np.ones((1, 5)), 0, "restarts"),
])
def test_input_errors(F, Y, restarts, msg):
    with pytest.raises(PilotError, match=msg):
        fit_projection(F, Y, restarts=restarts)
