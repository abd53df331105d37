import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cnsphere.sphere import (
    COST_MAX,
    CutLocusError,
    SpherePoint,
    build_grid,
    chart_exp,
    chart_log,
    cost,
    geodesic_distance,
    sphere_volume,
)

from conftest import random_rotation

unit3 = st.lists(st.floats(-1, 1), min_size=3, max_size=3).filter(
    lambda v: np.linalg.norm(v) > 1e-3).map(lambda v: np.asarray(v) / np.linalg.norm(v))


def test_four_node_circle():
    g = build_grid(1, 4)
    angles = np.mod(np.arctan2(g.nodes[:, 1], g.nodes[:, 0]), 2 * np.pi)
    assert np.allclose(angles, [0, np.pi / 2, np.pi, 3 * np.pi / 2], atol=1e-15)
    assert np.allclose(g.weights, np.pi / 2)


@pytest.mark.parametrize("n", [4, 7, 64, 129])
def test_circle_weights_sum(n):
    assert build_grid(1, n).total_weight == pytest.approx(2 * np.pi, abs=1e-13)


def test_icosahedral_level_two(sphere162):
    assert sphere162.size == 10 * 4**2 + 2
    assert sphere162.total_weight == pytest.approx(4 * np.pi, rel=1e-6)
    assert np.all(sphere162.weights > 0)


@pytest.mark.parametrize("dim,res", [(1, 3), (1, 0), (2, 0), (3, 2)])
def test_build_grid_rejects(dim, res):
    with pytest.raises(ValueError):
        build_grid(dim, res)


@pytest.mark.parametrize("dim,res", [(1, 16), (2, 1), (2, 2), (2, 3)])
def test_grid_invariants(dim, res):
    g = build_grid(dim, res)
    W = g.adjacency()
    assert np.array_equal(W, W.T)
    assert np.all((W > 0).sum(axis=1) >= 2)
    assert g.total_weight == pytest.approx(sphere_volume(dim), rel=1e-6)
    C = g.cost_matrix()
    assert np.array_equal(C, C.T)
    assert np.all(np.diag(C) == 0)
    assert C.max() <= COST_MAX


def test_first_harmonics_integrate_to_zero(sphere162):
    for k in range(3):
        assert abs(sphere162.integrate(sphere162.nodes[:, k])) < 1e-3


def test_cost_matrix_matches_pointwise(sphere162):
    C = sphere162.cost_matrix()
    idx = [0, 5, 40, 161]
    for i in idx:
        for j in idx:
            assert C[i, j] == pytest.approx(cost(sphere162.nodes[i], sphere162.nodes[j]), abs=1e-15)


def test_distance_examples():
    e = np.eye(3)
    assert geodesic_distance(e[0], -e[0]) == pytest.approx(np.pi)
    assert geodesic_distance(e[1], e[1]) == 0.0
    assert geodesic_distance(e[0], e[2]) == pytest.approx(np.pi / 2)
    assert cost(e[0], -e[0]) == pytest.approx(np.pi**2 / 2)
    assert cost(e[0], e[0]) == 0.0
    assert cost(e[0], e[1]) == pytest.approx(np.pi**2 / 8)


def test_sphere_point_validation():
    SpherePoint([0.0, 1.0])
    with pytest.raises(ValueError):
        SpherePoint([1.0, 1.0, 0.0])
    p = SpherePoint.normalized([3.0, 4.0])
    assert p.dim == 1 and geodesic_distance(p, p) == 0.0


@settings(max_examples=60, deadline=None)
@given(unit3, unit3, unit3)
def test_distance_metric_axioms(p, q, r):
    d = geodesic_distance
    assert 0 <= d(p, q) <= np.pi
    assert d(p, q) == pytest.approx(d(q, p), abs=1e-15)
    assert d(p, r) <= d(p, q) + d(q, r) + 1e-12


def test_rotation_invariance(rng):
    R = random_rotation(rng, 3)
    for _ in range(50):
        p, q = rng.normal(size=(2, 3))
        p, q = p / np.linalg.norm(p), q / np.linalg.norm(q)
        assert geodesic_distance(R @ p, R @ q) == pytest.approx(geodesic_distance(p, q), abs=1e-12)


def test_log_of_base_is_zero():
    p = np.array([0.0, 0.6, 0.8])
    assert np.allclose(chart_log(p, p), 0.0)


@pytest.mark.parametrize("dim", [1, 2])
def test_exp_log_round_trip(rng, dim):
    for _ in range(100):
        p, q = rng.normal(size=(2, dim + 1))
        p, q = p / np.linalg.norm(p), q / np.linalg.norm(q)
        if geodesic_distance(p, q) > np.pi - 1e-3:
            continue
        v = chart_log(p, q)
        assert np.linalg.norm(v) == pytest.approx(geodesic_distance(p, q), abs=1e-12)
        assert np.allclose(chart_exp(p, v), q, atol=1e-9)


def test_chart_log_rejects_antipode():
    p = np.array([0.0, 0.0, 1.0])
    with pytest.raises(CutLocusError):
        chart_log(p, -p)


def test_grid_csv(tmp_path, circle64):
    path = tmp_path / "grid.csv"
    circle64.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "x,y,z,weight"
    assert len(lines) == 65
