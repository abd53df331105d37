"""Cournot-Nash equilibria by damped best-reply iteration.

Given a candidate action distribution ``nu_k``, the best reply transports
the source onto ``nu_k``, reads off the Y-side price ``u_hat`` (the
c-transform of the X potential) and sets

    nu(y) = f^{-1}(u_hat(y) - t * int phi(y, z) dnu_k(z) - t * V(y) + lambda)

with ``lambda`` fixing the mass. A fixed point is a discrete equilibrium:
every player's transported action minimizes ``c(x, y) + V[nu](y)``.
The homotopy parameter ``t`` blends the source towards the uniform
measure and scales the interaction and the potential; at ``t = 0`` the
uniform measure is a fixed point.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.optimize import brentq

from .model import (
    OSC_COST,
    DiscreteMeasure,
    Scenario,
    h_max,
    interaction_field,
    v_field,
)
from .transport import TransportMap, TransportSolution, c_transform, extract_map, sinkhorn

log = logging.getLogger(__name__)

MIN_TAU = 1.0 / 1024


class ConvergenceError(RuntimeError):
    def __init__(self, message, history):
        super().__init__(message)
        self.history = history


class BestReply(NamedTuple):
    nu: DiscreteMeasure
    u: np.ndarray
    lam: float
    transport: TransportSolution


@dataclass
class EquilibriumResult:
    nu: DiscreteMeasure
    u: np.ndarray
    map: TransportMap
    residual: float
    history: list
    transport: TransportSolution
    schedule: tuple
    condition_satisfied: bool
    condition_margin: float
    bound_report: object = None
    warnings: list = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return len(self.history)


def continuation_schedule(steps: int = 1) -> tuple:
    """Equispaced ``t`` values from 0 to 1; ``steps=1`` is a direct solve."""
    if steps < 1:
        raise ValueError("continuation needs at least one step")
    return tuple(float(t) for t in np.linspace(0.0, 1.0, steps + 1))


def _check_schedule(schedule) -> tuple:
    ts = tuple(float(t) for t in schedule)
    if not ts or ts[0] != 0.0 or ts[-1] != 1.0 or np.any(np.diff(ts) <= 0):
        raise ValueError(f"continuation schedule must increase from 0 to 1, got {ts}")
    return ts


def source_at(scenario: Scenario, t: float) -> DiscreteMeasure:
    grid = scenario.grid
    rho = t * scenario.mu.density + (1.0 - t) / grid.total_weight
    return DiscreteMeasure.normalized(grid, rho)


def normalize_mass(g, scenario: Scenario) -> float:
    """Find ``lam`` with ``sum f^{-1}(g_j + lam) w_j = 1``.

    The bracket starts from the oscillation bounds around the level that
    makes the density uniform and grows geometrically until it changes sign.
    """
    f, w = scenario.f, scenario.grid.weights
    level = float(f(1.0 / scenario.grid.total_weight))
    half = 2 * OSC_COST + 2 * scenario.phi.sup_norm + scenario.V.oscillation + abs(level)
    center = level - 0.5 * (g.max() + g.min())

    def excess(lam):
        return float(np.dot(f.inverse(g + lam), w)) - 1.0

    lo, hi = center - half, center + half
    for _ in range(60):
        if excess(lo) < 0 < excess(hi):
            break
        lo, hi = center - 2 * (center - lo), center + 2 * (hi - center)
    else:
        raise RuntimeError("could not bracket the mass multiplier")
    return brentq(excess, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)


def best_reply(nu_k: DiscreteMeasure, scenario: Scenario, t: float = 1.0, *,
               warm: TransportSolution | None = None) -> BestReply:
    """One best-reply step at homotopy time ``t``.

    ``warm`` (the previous transport solution) restarts the OT solve at the
    final eps instead of running the whole eps schedule.

    The returned ``u`` is the X potential shifted into the gauge where the
    Y potential of the total cost vanishes.
    """
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"homotopy time must lie in [0, 1], got {t}")
    if np.any(nu_k.density <= 0):
        raise ValueError("best reply needs a strictly positive density")
    s = scenario.solver
    mu_t = source_at(scenario, t)
    C = scenario.grid.cost_matrix()
    if warm is None:
        ot = sinkhorn(mu_t, nu_k, C, s.eps_schedule, tol=s.sinkhorn_tol,
                      max_iter=s.sinkhorn_max_iter)
    else:
        ot = sinkhorn(mu_t, nu_k, C, [s.eps_min], init=(warm.u, warm.u_star),
                      tol=s.sinkhorn_tol, max_iter=s.sinkhorn_max_iter)
    u_hat = c_transform(ot.u, C)
    g = u_hat - t * interaction_field(nu_k, scenario) - t * scenario.potential_values
    lam = normalize_mass(g, scenario)
    rho = scenario.f.inverse(g + lam)
    nu = DiscreteMeasure.normalized(scenario.grid, rho)
    return BestReply(nu, ot.u + lam, lam, ot)


def check_condition(scenario: Scenario) -> tuple[bool, float]:
    """Smallness of the interaction feedback: ``h_max * ||phi||_inf < 1``."""
    margin = 1.0 - h_max(scenario) * scenario.phi.sup_norm
    return margin > 0, float(margin)


def cne_gap(nu: DiscreteMeasure, assignment, scenario: Scenario) -> np.ndarray:
    """Per-player optimality gap of the chosen actions under ``nu``."""
    C = scenario.grid.cost_matrix()
    Phi = C + v_field(nu, scenario)[None, :]
    rows = np.arange(len(assignment))
    return Phi[rows, assignment] - Phi.min(axis=1)


def equilibrium_residual(result: EquilibriumResult, scenario: Scenario) -> float:
    return float(cne_gap(result.nu, result.map.assignment, scenario).max())


def _package(nu, transport, scenario, history, schedule):
    C = scenario.grid.cost_matrix()
    Phi = C + v_field(nu, scenario)[None, :]
    u = -Phi.min(axis=1)
    tmap = extract_map(transport)
    ok, margin = check_condition(scenario)
    result = EquilibriumResult(
        nu=nu, u=u, map=tmap, residual=0.0, history=history, transport=transport,
        schedule=schedule, condition_satisfied=ok, condition_margin=margin)
    result.residual = equilibrium_residual(result, scenario)
    if not ok:
        result.warnings.append(
            f"interaction feedback outside the guaranteed regime (margin {margin:.3g})")
    return result


def solve_equilibrium(scenario: Scenario, schedule=None, *, nu0: DiscreteMeasure | None = None,
                      analyze: bool = True) -> EquilibriumResult:
    """Damped best-reply iteration along a continuation schedule.

    At every ``t`` the iteration ``nu <- (1 - tau) nu + tau BR(nu)`` runs
    until the sup-norm step drops below ``tol_fixed``; ``tau`` is halved
    whenever the step grows.

    Raises
    ------
    ConvergenceError
        When the iteration cap is hit at some ``t``; carries the history.
    """
    s = scenario.solver
    if schedule is None:
        schedule = continuation_schedule(s.continuation_steps)
    schedule = _check_schedule(schedule)
    ok, margin = check_condition(scenario)
    if not ok:
        log.warning("condition margin %.3g <= 0: no invertibility guarantee", margin)

    nu = nu0 if nu0 is not None else DiscreteMeasure.uniform(scenario.grid)
    history = []
    warm = None
    for t in schedule:
        tau = s.tau
        prev_step = np.inf
        for it in range(1, s.max_iter + 1):
            br = best_reply(nu, scenario, t, warm=warm)
            warm = br.transport
            diff = br.nu.density - nu.density
            step = float(np.abs(diff).max())
            # residual of the current iterate against its own transport map
            residual = (float(cne_gap(nu, extract_map(br.transport).assignment, scenario).max())
                        if t == 1.0 else None)
            history.append({
                "t": t, "iteration": it, "tau": tau, "lambda": br.lam, "step": step,
                "ratio": step / prev_step if np.isfinite(prev_step) else None,
                "residual": residual,
            })
            if step < s.tol_fixed:
                break
            if step > prev_step and tau > MIN_TAU:
                tau *= 0.5
            nu = DiscreteMeasure.normalized(scenario.grid, nu.density + tau * diff)
            prev_step = step
        else:
            raise ConvergenceError(
                f"best-reply iteration did not converge at t={t} within {s.max_iter} "
                f"iterations (last step {step:.3e})", history)
        log.debug("t=%.3f converged in %d iterations", t, it)

    result = _package(nu, warm, scenario, history, schedule)
    if analyze:
        from .analysis import verify_apriori
        result.bound_report = verify_apriori(result, scenario)
    return result
