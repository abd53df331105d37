import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cnsphere.model import (
    CongestionFn,
    DiscreteMeasure,
    InadaError,
    InteractionKernel,
    Potential,
    energy,
    h_factor,
    h_max,
    interaction_field,
    nu_bounds,
    nu_bounds_osc,
    v_field,
)

from conftest import make_scenario, random_measure

FAMILIES = [CongestionFn("log"), CongestionFn("log-linear", 1.0, 0.5), CongestionFn("log-linear", 0.8, 2.0)]


@pytest.mark.parametrize("f", FAMILIES)
def test_congestion_inada(f):
    t = np.logspace(-8, 8, 200)
    assert np.all(f.derivative(t) > 0)
    assert f(1e-12) < -20 and f(1e12) > 20
    s = np.linspace(-30, 30, 301)
    assert np.allclose(f(f.inverse(s)), s, atol=1e-10)


@pytest.mark.parametrize("f", FAMILIES)
def test_antiderivative_and_second_derivative(f):
    t = np.linspace(0.05, 5, 50)
    d = 1e-6
    assert np.allclose((f.antiderivative(t + d) - f.antiderivative(t - d)) / (2 * d), f(t), atol=1e-7)
    assert np.allclose((f.derivative(t + d) - f.derivative(t - d)) / (2 * d), f.second_derivative(t),
                       rtol=1e-5)


def test_congestion_validation():
    with pytest.raises(ValueError):
        CongestionFn("log-linear", 0.0, 1.0)
    with pytest.raises(ValueError):
        CongestionFn("log-linear", 1.0, -1.0)
    with pytest.raises(ValueError):
        CongestionFn("cubic")


@settings(max_examples=50, deadline=None)
@given(st.sampled_from(["cosine", "gaussian", "constant"]), st.floats(-2, 2),
       st.lists(st.floats(-1, 1), min_size=6, max_size=6).filter(
           lambda v: np.linalg.norm(v[:3]) > 1e-2 and np.linalg.norm(v[3:]) > 1e-2))
def test_kernel_symmetry_and_bound(family, a, v):
    phi = InteractionKernel(family, a, 0.5)
    y, z = np.asarray(v[:3]), np.asarray(v[3:])
    y, z = y / np.linalg.norm(y), z / np.linalg.norm(z)
    assert phi(y, z) == pytest.approx(phi(z, y), abs=1e-12)
    assert abs(phi(y, z)) <= phi.sup_norm + 1e-12


def test_interaction_matrix_symmetric(sphere162):
    K = InteractionKernel("gaussian", 0.7, 0.5).matrix(sphere162.nodes)
    assert np.array_equal(K, K.T)
    m = random_measure(sphere162, np.random.default_rng(0)).masses
    assert 0.5 * m @ K @ m == pytest.approx(0.5 * m @ K.T @ m, abs=1e-12)


def test_potential_oscillation(circle64):
    V = Potential("linear", 0.3)
    vals = V(circle64.nodes)
    assert vals.max() - vals.min() == pytest.approx(V.oscillation, abs=1e-12)


def test_measure_validation(circle64):
    with pytest.raises(ValueError):
        DiscreteMeasure(circle64, np.ones(64))
    with pytest.raises(ValueError):
        DiscreteMeasure(circle64, np.ones(10))
    mu = DiscreteMeasure.uniform(circle64)
    assert mu.mass == pytest.approx(1.0, abs=1e-14)


def test_v_field_uniform_circle(circle64):
    sc = make_scenario(circle64)
    v = v_field(DiscreteMeasure.uniform(circle64), sc)
    assert np.allclose(v, np.log(1 / (2 * np.pi)), atol=1e-14)


def test_v_field_is_f_of_density(circle64, rng):
    sc = make_scenario(circle64, f=CongestionFn("log-linear", 1.0, 0.5))
    nu = random_measure(circle64, rng)
    assert np.allclose(v_field(nu, sc), sc.f(nu.density))


def test_v_field_names_zero_node(circle64):
    rho = np.full(64, 1 / (2 * np.pi))
    rho[7], rho[8] = 0.0, 2 * rho[8]
    nu = DiscreteMeasure(circle64, rho)
    with pytest.raises(InadaError, match="node 7"):
        v_field(nu, make_scenario(circle64))


def test_gaussian_interaction_rotationally_constant(sphere162):
    sc = make_scenario(sphere162, phi=InteractionKernel("gaussian", 1.0, 0.8))
    field = interaction_field(DiscreteMeasure.uniform(sphere162), sc)
    assert field.max() - field.min() < 1e-3


def test_energy_uniform_circle(circle64):
    sc = make_scenario(circle64)
    assert energy(DiscreteMeasure.uniform(circle64), sc) == pytest.approx(np.log(1 / (2 * np.pi)) - 1, abs=1e-13)


def test_energy_midpoint_convexity(circle64, rng):
    sc = make_scenario(circle64, f=CongestionFn("log-linear", 1.0, 0.5), V=Potential("linear", 0.4))
    for _ in range(20):
        n1, n2 = random_measure(circle64, rng, 1.0), random_measure(circle64, rng, 1.0)
        mid = DiscreteMeasure(circle64, 0.5 * (n1.density + n2.density))
        assert energy(mid, sc) <= 0.5 * (energy(n1, sc) + energy(n2, sc)) + 1e-14


def _directional_errors(grid, sc, rng, steps):
    nu = random_measure(grid, rng)
    delta = rng.normal(size=grid.size)
    delta -= np.dot(delta, grid.weights) / grid.total_weight
    delta *= 0.1 * nu.density.min() / np.abs(delta).max()
    exact = float(np.sum(v_field(nu, sc) * delta * grid.weights))
    e0 = energy(nu, sc)
    return [abs((energy(DiscreteMeasure(grid, nu.density + t * delta), sc) - e0) / t - exact)
            for t in steps]


@pytest.mark.parametrize("f,phi,V", [
    (CongestionFn("log"), InteractionKernel(), Potential()),
    (CongestionFn("log"), InteractionKernel("gaussian", 0.5, 0.5), Potential("linear", 0.2)),
    (CongestionFn("log-linear", 1.0, 0.5), InteractionKernel("cosine", 0.3), Potential("linear", 0.2)),
])
def test_energy_gradient(circle64, rng, f, phi, V):
    sc = make_scenario(circle64, f=f, phi=phi, V=V)
    e3, e4 = _directional_errors(circle64, sc, rng, [1e-3, 1e-4])
    assert e4 < 1e-5
    assert np.log10(e3 / e4) >= 0.9


def test_nu_bounds_closed_forms(circle64):
    lo, hi = nu_bounds(make_scenario(circle64))
    assert lo == pytest.approx(np.exp(-np.pi**2) / (2 * np.pi), rel=1e-12)
    assert hi == pytest.approx(np.exp(np.pi**2) / (2 * np.pi), rel=1e-12)
    lo, hi = nu_bounds(make_scenario(circle64, phi=InteractionKernel("gaussian", 0.1, 0.5)))
    assert lo == pytest.approx(np.exp(-np.pi**2 - 0.2) / (2 * np.pi), rel=1e-12)
    assert hi == pytest.approx(np.exp(np.pi**2 + 0.2) / (2 * np.pi), rel=1e-12)


def test_nu_bounds_bracket_and_monotone(circle64):
    prev = None
    for a in [0.0, 0.2, 0.5, 1.0]:
        sc = make_scenario(circle64, f=CongestionFn("log-linear", 1.0, 0.5),
                           phi=InteractionKernel("cosine", a), V=Potential("linear", a))
        lo, hi = nu_bounds(sc)
        assert 0 < lo < 1 / circle64.total_weight < hi
        if prev is not None:
            assert lo < prev[0] and hi > prev[1]
        prev = (lo, hi)


def test_nu_bounds_osc_variant(circle64):
    # osc of a cosine kernel is twice its sup norm, so the variant is wider
    sc = make_scenario(circle64, phi=InteractionKernel("cosine", 0.5))
    lo, hi = nu_bounds(sc)
    lo2, hi2 = nu_bounds_osc(sc)
    assert lo2 < lo and hi2 > hi


def test_h_factor_log_is_one():
    Q = np.linspace(-50, 50, 1001)
    assert np.all(h_factor(Q, CongestionFn("log")) == 1.0)


@pytest.mark.parametrize("alpha,beta", [(1.0, 0.5), (0.3, 2.0)])
def test_h_factor_finite_difference(alpha, beta):
    f = CongestionFn("log-linear", alpha, beta)
    d = 1e-5
    for Q in np.linspace(-10, 10, 41):
        fd = (f.inverse(Q + d) - f.inverse(Q - d)) / (2 * d) / f.inverse(Q)
        assert h_factor(Q, f) == pytest.approx(fd, abs=1e-6)


def test_h_factor_positive(rng):
    f = CongestionFn("log-linear", 0.7, 1.3)
    assert np.all(h_factor(rng.uniform(-40, 40, 1000), f) > 0)


def test_h_max(circle64):
    assert h_max(make_scenario(circle64)) == 1.0
    assert h_max(make_scenario(circle64, phi=InteractionKernel("gaussian", 0.5, 0.5))) == 1.0
    f = CongestionFn("log-linear", 1.0, 0.5)
    sc = make_scenario(circle64, f=f, phi=InteractionKernel("cosine", 0.3))
    lo, hi = nu_bounds(sc)
    hm = h_max(sc)
    assert hm >= h_factor(f(lo), f) - 1e-15 and hm >= h_factor(f(hi), f) - 1e-15
