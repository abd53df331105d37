"""Discrete optimal transport for the spherical cost.

Potentials follow the sign convention ``-u(x) + u*(y) <= c(x, y)``, so the
dual objective is ``J(u, u*) = -<u, a> + <u*, b>`` for marginal masses
``a`` and ``b``.

The entropic solver uses the Gibbs reference ``sqrt(a_i b_j)``: the plan is

    P_ij = exp((u*_j - u_i - C_ij) / eps) * sqrt(a_i b_j).

Any product reference gives the same plan. This one keeps the log of the
quadrature weights out of the potentials: with equal marginals the two
potentials coincide and flatten out as eps decreases. Feasibility
``-u_i + u*_j <= C_ij`` is the statement ``P_ij <= sqrt(a_i b_j)``, which a
plan with the right marginals satisfies because ``P_ij <= min(a_i, b_j)``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import linprog
from scipy.special import logsumexp

LP_MAX_NODES = 256
CHECK_EVERY = 10
SWEEPS_BEFORE_NEWTON = 50
NEWTON_STEP_CAP = 10.0
NEWTON_BLOCK = 30


class SinkhornError(RuntimeError):
    def __init__(self, message, violation=None):
        super().__init__(message)
        self.violation = violation


@dataclass
class TransportSolution:
    u: np.ndarray
    u_star: np.ndarray
    plan: np.ndarray
    cost: np.ndarray
    a: np.ndarray
    b: np.ndarray
    eps_final: float = 0.0
    iterations: int = 0

    @property
    def transport_cost(self) -> float:
        return float(np.sum(self.plan * self.cost))

    @property
    def dual_value(self) -> float:
        return float(-np.dot(self.u, self.a) + np.dot(self.u_star, self.b))

    @property
    def duality_gap(self) -> float:
        return self.transport_cost - self.dual_value

    def slack(self) -> float:
        return self.eps_final * np.log(len(self.a))

    def marginal_violation(self) -> float:
        return float(max(np.abs(self.plan.sum(1) - self.a).sum(),
                         np.abs(self.plan.sum(0) - self.b).sum()))

    def feasibility_violation(self) -> float:
        """``max(-u_i + u*_j - C_ij)``; nonpositive for feasible potentials."""
        return float(np.max(self.u_star[None, :] - self.u[:, None] - self.cost))

    def plan_to_csv(self, path, threshold: float = 0.0) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["i", "j", "mass"])
            for i, j in zip(*np.nonzero(self.plan > threshold)):
                w.writerow([int(i), int(j), repr(float(self.plan[i, j]))])


@dataclass
class TransportMap:
    assignment: np.ndarray
    displacement: np.ndarray

    @property
    def max_displacement(self) -> float:
        return float(self.displacement.max())


def _masses(m) -> np.ndarray:
    return np.asarray(getattr(m, "masses", m), dtype=float)


def _validate(a, b, cost):
    n, k = cost.shape
    if a.shape != (n,) or b.shape != (k,):
        raise ValueError(f"marginals {a.shape}, {b.shape} do not match cost {cost.shape}")
    for name, m in (("source", a), ("target", b)):
        if abs(m.sum() - 1.0) > 1e-10:
            raise ValueError(f"{name} measure has mass {m.sum()!r}, expected 1")


def _f_update(g, C, eps, half_la, half_lb):
    return eps * (half_la - logsumexp((g[None, :] - C) / eps + half_lb[None, :], axis=1))


def _g_update(f, C, eps, half_la, half_lb):
    return eps * (half_lb - logsumexp((f[:, None] - C) / eps + half_la[:, None], axis=0))


def _log_plan(f, g, C, eps, half_la, half_lb):
    return (f[:, None] + g[None, :] - C) / eps + half_la[:, None] + half_lb[None, :]


def _semi_dual(g, C, eps, a, b, half_la, half_lb):
    f = _f_update(g, C, eps, half_la, half_lb)
    P = np.exp(_log_plan(f, g, C, eps, half_la, half_lb))
    return f, P, float(np.dot(g, b) + np.dot(f, a))


def _newton(f, g, C, eps, a, b, half_la, half_lb, tol, max_steps):
    """Damped Newton on the semi-dual in ``g`` (rows matched exactly by ``f``).

    The semi-dual is smooth and concave with Hessian
    ``-(diag(colsum) - P^T diag(1/a) P) / eps``; the constants span its kernel.
    Small eigenvalues are clipped so the step is always an ascent direction,
    and each step moves the potentials by at most ``NEWTON_STEP_CAP * eps``.

    Returns ``(f, g, violation, steps, stalled)``; the caller limits
    ``max_steps`` so that a Newton run creeping along with tiny accepted
    steps hands control back to the sweeps.
    """
    f, P, D = _semi_dual(g, C, eps, a, b, half_la, half_lb)
    for step in range(1, max_steps + 1):
        col = P.sum(axis=0)
        r = col - b
        viol = np.abs(r).sum()
        if viol < tol:
            return f, g, viol, step, False
        H = (np.diag(col) - P.T @ (P / a[:, None])) / eps
        lam, Q = np.linalg.eigh(H)
        lam = np.maximum(lam, 1e-14 * lam[-1])
        delta = -Q @ ((Q.T @ r) / lam)
        delta -= delta.mean()
        size = np.abs(delta).max()
        if size > NEWTON_STEP_CAP * eps:
            delta *= NEWTON_STEP_CAP * eps / size
        slope = -np.dot(r, delta)
        s = 1.0
        for _ in range(30):
            f_new, P_new, D_new = _semi_dual(g + s * delta, C, eps, a, b, half_la, half_lb)
            if np.isfinite(D_new) and D_new >= D + 1e-4 * s * slope - 1e-15 * abs(D):
                break
            s *= 0.5
        else:
            return f, g, viol, step, True
        g = g + s * delta
        f, P, D = f_new, P_new, D_new
    return f, g, np.abs(P.sum(axis=0) - b).sum(), max_steps, False


def _solve_at(f, g, C, eps, a, b, half_la, half_lb, tol, max_iter):
    viol = np.inf
    it = 0
    while it < max_iter:
        # a block of plain sweeps, then Newton for the slow linear phase;
        # if Newton stalls (round-off in the line search) go back to sweeps
        for _ in range(SWEEPS_BEFORE_NEWTON):
            it += 1
            f = _f_update(g, C, eps, half_la, half_lb)
            g = _g_update(f, C, eps, half_la, half_lb)
            if it % CHECK_EVERY == 0:
                logP = _log_plan(f, g, C, eps, half_la, half_lb)
                viol = np.abs(np.exp(logsumexp(logP, axis=1)) - a).sum()
                if not np.isfinite(viol):
                    raise SinkhornError(f"non-finite potentials at eps={eps}", viol)
                if viol < tol:
                    return f, g, viol, it
        f, g, viol, steps, _ = _newton(f, g, C, eps, a, b, half_la, half_lb, tol,
                                             min(NEWTON_BLOCK, max(1, max_iter - it)))
        it += steps
        if viol < tol:
            break
    return f, g, viol, it


def sinkhorn(mu, nu, cost, schedule, *, init=None, tol=1e-9, max_iter=100_000):
    """Entropic OT by log-domain alternating dual updates with eps-scaling.

    Parameters
    ----------
    mu, nu : DiscreteMeasure or array of masses
        Strictly positive marginals of mass 1.
    cost : (N, M) array
    schedule : sequence of float
        Strictly decreasing entropic parameters; potentials are carried
        over (warm start) from one value to the next.
    init : (u, u_star), optional
        Warm start in the -u + u* <= c sign convention.
    tol : float
        Target L1 marginal violation at every eps.
    max_iter : int
        Iteration cap per eps value.

    Returns
    -------
    TransportSolution
    """
    a, b = _masses(mu), _masses(nu)
    C = np.asarray(cost, dtype=float)
    _validate(a, b, C)
    if np.any(a <= 0) or np.any(b <= 0):
        raise ValueError("sinkhorn needs strictly positive marginals")
    schedule = [float(e) for e in np.atleast_1d(schedule)]
    if not schedule or schedule[-1] <= 0 or np.any(np.diff(schedule) >= 0):
        raise ValueError("eps schedule must be strictly decreasing and positive")

    half_la, half_lb = 0.5 * np.log(a), 0.5 * np.log(b)
    # internal potentials: f = -u, g = u*
    if init is None:
        f = np.zeros_like(a)
        g = np.zeros_like(b)
    else:
        f = -np.asarray(init[0], dtype=float).copy()
        g = np.asarray(init[1], dtype=float).copy()

    total = 0
    for eps in schedule:
        f, g, viol, it = _solve_at(f, g, C, eps, a, b, half_la, half_lb, tol, max_iter)
        total += it
        if not viol < tol:
            raise SinkhornError(
                f"sinkhorn did not reach marginal violation {tol} at eps={eps} "
                f"within {max_iter} iterations (last {viol:.3e})", viol)

    plan = np.exp(_log_plan(f, g, C, eps, half_la, half_lb))
    return TransportSolution(-f, g, plan, C, a, b, eps_final=schedule[-1], iterations=total)


def exact_ot_lp(mu, nu, cost) -> TransportSolution:
    """Solve the discrete Kantorovich LP exactly (HiGHS dual simplex)."""
    a, b = _masses(mu), _masses(nu)
    C = np.asarray(cost, dtype=float)
    _validate(a, b, C)
    n, k = C.shape
    if max(n, k) > LP_MAX_NODES:
        raise ValueError(f"exact LP limited to {LP_MAX_NODES} nodes, got {max(n, k)}")
    rows = np.kron(np.eye(n), np.ones((1, k)))
    cols = np.kron(np.ones((1, n)), np.eye(k))
    A_eq = np.vstack([rows, cols])
    b_eq = np.concatenate([a, b])
    res = linprog(C.ravel(), A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs-ds")
    if res.status != 0:
        raise RuntimeError(f"LP solver failed: {res.message}")
    plan = np.maximum(res.x.reshape(n, k), 0.0)
    duals = res.eqlin.marginals
    alpha, beta = duals[:n], duals[n:]
    # dual constraint alpha_i + beta_j <= C_ij; shift gauge to u*.min() = 0
    shift = beta.min()
    return TransportSolution(-(alpha + shift), beta - shift, plan, C, a, b)


def c_transform(u, cost) -> np.ndarray:
    """``u_hat(y) = max_x (-u(x) - c(x, y))``.

    The result is the tightest ``u_hat`` with ``-u(x) <= c(x, y) + u_hat(y)``.
    For a symmetric cost the same call maps ``u_hat`` back to the X side.
    """
    return np.max(-np.asarray(u, dtype=float)[:, None] - np.asarray(cost), axis=0)


def extract_map(solution: TransportSolution, tie_tol: float = 1e-9) -> TransportMap:
    """Discrete c-subdifferential selection ``T(x_i) = argmin_j (C_ij - u*_j)``.

    Near-ties (within ``tie_tol``) go to the node carrying the most plan mass.
    """
    plan = solution.plan
    empty = np.flatnonzero(plan.sum(axis=1) <= 0)
    if empty.size:
        raise ValueError(f"plan row {int(empty[0])} carries no mass")
    score = solution.cost - solution.u_star[None, :]
    best = score.min(axis=1, keepdims=True)
    candidates = score <= best + tie_tol
    T = np.argmax(np.where(candidates, plan, -1.0), axis=1)
    disp = np.sqrt(2.0 * solution.cost[np.arange(len(T)), T])
    return TransportMap(T, disp)
