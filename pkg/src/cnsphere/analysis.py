"""Checks run on a computed equilibrium.

* a priori bounds (oscillation of the potential, density sandwich,
  distance from the cut locus);
* the linearized operator ``L = A - h - h J A`` on ``L^2(mu)`` together with
  the norm of ``hJ`` and the smallest singular value of ``L``;
* positivity of the Ma-Trudinger-Wang tensor of the spherical cost,
  by finite differences in normal coordinates.

All operator norms are taken in ``L^2(mu)``: a matrix ``M`` acting on node
values is measured through ``D^{1/2} M D^{-1/2}`` with ``D = diag(mu masses)``.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .model import DiscreteMeasure, Scenario, nu_bounds, nu_bounds_osc
from .sphere import COST_MAX, CutLocusError, SphereGrid, chart_exp, chart_log, cost, tangent_frame

log = logging.getLogger(__name__)

QUADRATURE_TOL = 1e-6
STAYAWAY_MARGIN = 1e-3
MTW_DIST_RANGE = (0.2, np.pi - 0.2)
MTW_ANGLES = 90


def grid_slack(scenario: Scenario) -> float:
    """Entropic plus quadrature slack for comparing discrete to exact bounds."""
    return 5 * scenario.solver.eps_min * np.log(scenario.grid.size) + QUADRATURE_TOL


def _weighted(M, m):
    s = np.sqrt(m)
    return s[:, None] * M / s[None, :]


@dataclass
class DiscreteLaplacian:
    matrix: np.ndarray
    weights: np.ndarray

    def inner(self, eta, zeta) -> float:
        return float(np.sum(eta * zeta * self.weights))

    def __matmul__(self, eta):
        return self.matrix @ eta


def build_laplacian(grid: SphereGrid, mu: DiscreteMeasure) -> DiscreteLaplacian:
    """``(A eta)_i = (1 / mu_i) sum_{j ~ i} w_ij (eta_j - eta_i)``.

    Self-adjoint and negative semidefinite in ``L^2(mu)``; the constants
    are its kernel on a connected grid.
    """
    m = mu.masses
    if np.any(m <= 0):
        raise ValueError("Laplacian weights must be strictly positive")
    W = grid.adjacency()
    n_comp, _ = connected_components(coo_matrix(W), directed=False)
    if n_comp != 1:
        raise ValueError(f"grid adjacency is disconnected ({n_comp} components)")
    A = (W - np.diag(W.sum(axis=1))) / m[:, None]
    return DiscreteLaplacian(A, m)


@dataclass
class LinearizedOperator:
    L: np.ndarray
    A: DiscreteLaplacian
    J: np.ndarray
    h: np.ndarray

    @property
    def weights(self) -> np.ndarray:
        return self.A.weights

    def recomposed(self) -> np.ndarray:
        return (np.eye(len(self.h)) - self.h[:, None] * self.J) @ self.A.matrix - np.diag(self.h)


def assemble_linearized(result, scenario: Scenario, *, residual_tol: float | None = None) -> LinearizedOperator:
    """Linearized operator at a converged equilibrium.

    ``h_i = h(Q_i)`` with
    ``Q_i = -u_i - c(x_i, T x_i) - int phi(T x_i, T z) dmu(z) - V(T x_i)`` and
    ``(J eta)_i = sum_z phi(T x_i, T z) eta_z mu_z``.
    """
    tol = grid_slack(scenario) if residual_tol is None else residual_tol
    if not result.residual <= tol:
        raise ValueError(f"equilibrium residual {result.residual:.3e} exceeds {tol:.3e}; "
                         "the linearization only holds at a solution")
    grid = scenario.grid
    T = result.map.assignment
    m = scenario.mu.masses
    K = scenario.interaction_matrix[np.ix_(T, T)]
    C = grid.cost_matrix()
    rows = np.arange(grid.size)
    Q = -result.u - C[rows, T] - K @ m - scenario.potential_values[T]
    h = np.asarray(scenario.f.h_factor(Q), dtype=float)
    J = K * m[None, :]
    A = build_laplacian(grid, scenario.mu)
    L = A.matrix - np.diag(h) - h[:, None] * (J @ A.matrix)
    return LinearizedOperator(L, A, J, h)


def hj_norm(op: LinearizedOperator) -> float:
    return float(np.linalg.norm(_weighted(op.h[:, None] * op.J, op.weights), 2))


def kernel_check(op: LinearizedOperator) -> tuple[float, bool]:
    """Smallest singular value of ``L`` in ``L^2(mu)`` and whether it is
    distinguishable from zero (relative threshold 1e-10)."""
    sv = np.linalg.svd(_weighted(op.L, op.weights), compute_uv=False)
    smin, smax = float(sv[-1]), float(sv[0])
    return smin, bool(smin > 1e-10 * smax)


# -- MTW tensor ---------------------------------------------------------------

_D0 = np.array([0.0, 1.0, 0.0])


def _stencil(order, h):
    if order == 0:
        return _D0
    if order == 1:
        return np.array([-0.5, 0.0, 0.5]) / h
    return np.array([1.0, -2.0, 1.0]) / h**2


def _partial(values, orders, h):
    """Central difference of a (3, 3, 3, 3) sample block.

    ``orders`` gives the derivative order in each of the four chart
    coordinates ``(x1, x2, y1, y2)``; each is at most 2.
    """
    w = [_stencil(k, h) for k in orders]
    return float(np.einsum("abcd,a,b,c,d->", values, *w))


def _cost_samples(x, y, h, Ex, Ey):
    offsets = h * np.array([[i, j] for i in (-1, 0, 1) for j in (-1, 0, 1)], dtype=float)
    X = chart_exp(x, offsets, Ex)
    Y = chart_exp(y, offsets, Ey)
    vals = cost(X[:, None, :], Y[None, :, :])
    return vals.reshape(3, 3, 3, 3)


def _orders(x_idx=(), y_idx=()):
    k = [0, 0, 0, 0]
    for i in x_idx:
        k[i] += 1
    for p in y_idx:
        k[2 + p] += 1
    return k


def mtw_tensor(x, y, fd_step: float) -> np.ndarray:
    """``MTW[i, j, k, l]`` at ``(x, y)`` in orthonormal normal coordinates.

    ``(-c_ijpr + c_ijs c^sm c_mrp) c^pk c^rl`` with ``i, j, m`` source and
    ``p, r, s`` target indices; ``c^{..}`` is the inverse mixed Hessian.
    """
    x, y = np.asarray(x, float), np.asarray(y, float)
    Ex, Ey = tangent_frame(x), tangent_frame(y)
    vals = _cost_samples(x, y, fd_step, Ex, Ey)
    d = lambda xi=(), yi=(): _partial(vals, _orders(xi, yi), fd_step)  # noqa: E731
    r2 = range(2)
    c_xy = np.array([[d((i,), (p,)) for p in r2] for i in r2])
    c_xxy = np.array([[[d((i, j), (s,)) for s in r2] for j in r2] for i in r2])
    c_xyy = np.array([[[d((m,), (r, p)) for p in r2] for r in r2] for m in r2])
    c_xxyy = np.array([[[[d((i, j), (p, r)) for r in r2] for p in r2] for j in r2] for i in r2])
    inv = np.linalg.inv(c_xy)  # inv[p, k]: target index first
    A = -c_xxyy + np.einsum("ijs,sm,mrp->ijpr", c_xxy, inv, c_xyy)
    return np.einsum("ijpr,pk,rl->ijkl", A, inv, inv)


def mtw_form(tensor, tau, xi) -> float:
    return float(np.einsum("ijkl,i,j,k,l->", tensor, tau, tau, xi, xi))


def _min_over_orthogonal_pairs(tensor, angles=MTW_ANGLES):
    theta = np.linspace(0.0, np.pi, angles, endpoint=False)
    tau = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    xi = np.stack([-np.sin(theta), np.cos(theta)], axis=1)
    vals = np.einsum("ijkl,ni,nj,nk,nl->n", tensor, tau, tau, xi, xi)
    return float(vals.min())


def sample_pairs(samples: int, rng, dist_range=MTW_DIST_RANGE):
    """Random ``(x, y)`` on S^2 with ``d(x, y)`` uniform in ``dist_range``."""
    out = []
    for _ in range(samples):
        x = rng.normal(size=3)
        x /= np.linalg.norm(x)
        angle = rng.uniform(0, 2 * np.pi)
        dist = rng.uniform(*dist_range)
        v = dist * np.array([np.cos(angle), np.sin(angle)])
        out.append((x, chart_exp(x, v)))
    return out


def mtw_check(grid: SphereGrid, samples: int = 200, fd_step: float = 1e-2, *, seed: int = 0,
              pairs=None) -> float:
    """Minimum of ``MTW(tau, tau, xi, xi)`` over unit pairs with ``xi(tau) = 0``.

    Each sampled ``(x, y)`` is minimized over a grid of orthogonal pairs.
    """
    if grid.dim != 2:
        raise ValueError("the MTW condition needs xi(tau) = 0 with both nonzero, "
                         "which is impossible on S^1; use an S^2 grid")
    if not 1e-3 <= fd_step <= 1e-1:
        raise ValueError(f"fd_step must lie in [1e-3, 1e-1], got {fd_step}")
    if pairs is None:
        pairs = sample_pairs(samples, np.random.default_rng(seed))
    best = np.inf
    for x, y in pairs:
        try:
            chart_log(x, y)
            tensor = mtw_tensor(x, y, fd_step)
        except CutLocusError:
            log.info("skipping near-antipodal MTW sample")
            continue
        best = min(best, _min_over_orthogonal_pairs(tensor))
    return float(best)


# -- a priori report ----------------------------------------------------------

@dataclass
class AprioriReport:
    osc_u: float
    osc_bound: float
    nu_min: float
    nu_max: float
    nu_lower: float
    nu_upper: float
    nu_lower_osc: float
    nu_upper_osc: float
    slack: float
    max_displacement: float
    condition_margin: float

    @property
    def osc_ok(self) -> bool:
        return bool(self.osc_u <= self.osc_bound + self.slack)

    @property
    def lower_ok(self) -> bool:
        return bool(self.nu_min >= self.nu_lower - self.slack)

    @property
    def upper_ok(self) -> bool:
        return bool(self.nu_max <= self.nu_upper + self.slack)

    @property
    def stayaway_ok(self) -> bool:
        return bool(self.max_displacement < np.pi - STAYAWAY_MARGIN)

    @property
    def condition_ok(self) -> bool:
        return bool(self.condition_margin > 0)

    @property
    def flags(self) -> dict:
        return {k: getattr(self, k) for k in ("osc_ok", "lower_ok", "upper_ok", "stayaway_ok", "condition_ok")}

    @property
    def all_bounds_ok(self) -> bool:
        return self.osc_ok and self.lower_ok and self.upper_ok and self.stayaway_ok

    def to_dict(self) -> dict:
        return {**asdict(self), "flags": self.flags}


def verify_apriori(result, scenario: Scenario) -> AprioriReport:
    lo, hi = nu_bounds(scenario)
    lo_osc, hi_osc = nu_bounds_osc(scenario)
    rho = result.nu.density
    return AprioriReport(
        osc_u=float(result.u.max() - result.u.min()),
        osc_bound=COST_MAX,
        nu_min=float(rho.min()),
        nu_max=float(rho.max()),
        nu_lower=lo,
        nu_upper=hi,
        nu_lower_osc=lo_osc,
        nu_upper_osc=hi_osc,
        slack=grid_slack(scenario),
        max_displacement=result.map.max_displacement,
        condition_margin=result.condition_margin,
    )
