"""Cost structure of the game: congestion, interaction, potential.

The per-action cost felt by a player is

    V[nu](y) = f(nu(y)) + int phi(y, z) dnu(z) + V(y)

where ``nu`` is the density of the action distribution with respect to
the volume measure. Everything here is evaluated on the nodes of a
:class:`~cnsphere.sphere.SphereGrid` with its quadrature weights.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .sphere import COST_MAX, SphereGrid, geodesic_distance

MASS_TOL = 1e-10
H_MAX_SAMPLES = 10_000

# osc c on the unit sphere, attained at antipodal points
OSC_COST = COST_MAX


class InadaError(ValueError):
    """Density hit zero where the congestion cost diverges."""


@dataclass(frozen=True)
class CongestionFn:
    """Congestion cost ``f``; supported families ``log`` and ``log-linear``.

    ``log-linear`` is ``f(t) = alpha * ln t + beta * t`` (alpha > 0, beta >= 0);
    ``log`` is the special case alpha = 1, beta = 0 and uses closed forms.
    """

    family: str = "log"
    alpha: float = 1.0
    beta: float = 0.0

    def __post_init__(self):
        if self.family == "log":
            object.__setattr__(self, "alpha", 1.0)
            object.__setattr__(self, "beta", 0.0)
        elif self.family == "log-linear":
            if not self.alpha > 0:
                raise ValueError(f"log-linear congestion needs alpha > 0, got {self.alpha}")
            if not self.beta >= 0:
                raise ValueError(f"log-linear congestion needs beta >= 0, got {self.beta}")
        else:
            raise ValueError(f"unknown congestion family {self.family!r}")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return self.alpha * np.log(t) + self.beta * t

    def derivative(self, t):
        t = np.asarray(t, dtype=float)
        return self.alpha / t + self.beta

    def second_derivative(self, t):
        t = np.asarray(t, dtype=float)
        return -self.alpha / t**2

    def antiderivative(self, t):
        """``F`` with ``F' = f`` and ``F(0+) = 0``."""
        t = np.asarray(t, dtype=float)
        return self.alpha * (t * np.log(t) - t) + 0.5 * self.beta * t**2

    def _log_inverse(self, q):
        """``ln f^{-1}(q)``, solved by monotone Newton for beta > 0."""
        q = np.asarray(q, dtype=float)
        if self.beta == 0.0:
            return q / self.alpha
        a, b = self.alpha, self.beta
        # start where g(s) = a s + b e^s - q >= 0; g is convex increasing, so
        # Newton decreases monotonically to the root
        s = np.minimum(q / a, np.log1p(np.maximum(q, 0.0) / b))
        for _ in range(100):
            g = a * s + b * np.exp(s) - q
            step = g / (a + b * np.exp(s))
            s = s - step
            if np.all(np.abs(step) <= 1e-15 * np.maximum(1.0, np.abs(s))):
                break
        return s

    def inverse(self, q):
        s = self._log_inverse(q)
        if np.any(s > 700) or np.any(s < -700) or not np.all(np.isfinite(s)):
            raise ValueError("argument outside the representable range of f^{-1}")
        return np.exp(s)

    def h_factor(self, q):
        """``(f^{-1})'(q) / f^{-1}(q)`` which equals ``1 / (alpha + beta * f^{-1}(q))``."""
        if self.beta == 0.0:
            q = np.asarray(q, dtype=float)
            if not np.all(np.isfinite(q)) or np.any(np.abs(q / self.alpha) > 700):
                raise ValueError("argument outside the representable range of f^{-1}")
            return np.full(q.shape, 1.0 / self.alpha) if q.ndim else 1.0 / self.alpha
        t = self.inverse(q)
        return 1.0 / (self.alpha + self.beta * t)

    def to_dict(self) -> dict:
        if self.family == "log":
            return {"family": "log"}
        return {"family": self.family, "alpha": self.alpha, "beta": self.beta}


@dataclass(frozen=True)
class InteractionKernel:
    """Symmetric interaction ``phi(y, z)`` depending only on ``d(y, z)``.

    Families: ``zero``, ``constant`` (a), ``cosine`` (a cos d) and
    ``gaussian`` (a exp(-d^2 / sigma^2)).
    """

    family: str = "zero"
    a: float = 0.0
    sigma: float | None = None

    def __post_init__(self):
        if self.family not in ("zero", "constant", "cosine", "gaussian"):
            raise ValueError(f"unknown interaction family {self.family!r}")
        if self.family == "gaussian" and not (self.sigma and self.sigma > 0):
            raise ValueError("gaussian interaction needs sigma > 0")
        if self.family == "zero":
            object.__setattr__(self, "a", 0.0)

    def of_distance(self, d):
        d = np.asarray(d, dtype=float)
        if self.family == "zero":
            return np.zeros_like(d)
        if self.family == "constant":
            return np.full_like(d, self.a)
        if self.family == "cosine":
            return self.a * np.cos(d)
        return self.a * np.exp(-(d / self.sigma) ** 2)

    def __call__(self, y, z):
        return self.of_distance(geodesic_distance(y, z))

    def matrix(self, y: np.ndarray, z: np.ndarray | None = None) -> np.ndarray:
        z = y if z is None else z
        K = self.of_distance(geodesic_distance(y[:, None, :], z[None, :, :]))
        if z is y:
            K = 0.5 * (K + K.T)
        return K

    @property
    def sup_norm(self) -> float:
        return abs(self.a)

    @property
    def oscillation(self) -> float:
        """max - min of phi over pairs of points, distances in [0, pi]."""
        if self.family in ("zero", "constant"):
            return 0.0
        if self.family == "cosine":
            return 2.0 * abs(self.a)
        return abs(self.a) * (1.0 - np.exp(-(np.pi / self.sigma) ** 2))

    def to_dict(self) -> dict:
        out = {"family": self.family}
        if self.family != "zero":
            out["a"] = self.a
        if self.family == "gaussian":
            out["sigma"] = self.sigma
        return out


@dataclass(frozen=True)
class Potential:
    """External potential ``V``; families ``zero`` and ``linear`` (a <y, pole>)."""

    family: str = "zero"
    a: float = 0.0
    pole: tuple | None = None

    def __post_init__(self):
        if self.family not in ("zero", "linear"):
            raise ValueError(f"unknown potential family {self.family!r}")
        if self.pole is not None:
            p = np.asarray(self.pole, dtype=float)
            object.__setattr__(self, "pole", tuple(float(v) for v in p / np.linalg.norm(p)))

    def _pole(self, ambient: int) -> np.ndarray:
        if self.pole is None:
            p = np.zeros(ambient)
            p[0] = 1.0
            return p
        if len(self.pole) != ambient:
            raise ValueError(f"pole has {len(self.pole)} coordinates, points have {ambient}")
        return np.asarray(self.pole)

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        if self.family == "zero":
            return np.zeros(y.shape[:-1])
        return self.a * (y @ self._pole(y.shape[-1]))

    @property
    def oscillation(self) -> float:
        """Analytic max - min over the whole sphere."""
        return 0.0 if self.family == "zero" else 2.0 * abs(self.a)

    def to_dict(self) -> dict:
        out = {"family": self.family}
        if self.family == "linear":
            out["a"] = self.a
            if self.pole is not None:
                out["pole"] = list(self.pole)
        return out


class DiscreteMeasure:
    """Probability measure on a grid, stored as a density w.r.t. volume."""

    def __init__(self, grid: SphereGrid, density, *, check: bool = True):
        self.grid = grid
        self.density = np.asarray(density, dtype=float).copy()
        self.density.setflags(write=False)
        if self.density.shape != (grid.size,):
            raise ValueError(f"density has shape {self.density.shape}, grid has {grid.size} nodes")
        if check:
            if np.any(self.density < 0) or not np.all(np.isfinite(self.density)):
                raise ValueError("density must be finite and nonnegative")
            if abs(self.mass - 1.0) > MASS_TOL:
                raise ValueError(f"measure has mass {self.mass!r}, expected 1")

    @classmethod
    def uniform(cls, grid: SphereGrid) -> "DiscreteMeasure":
        return cls(grid, np.full(grid.size, 1.0 / grid.total_weight))

    @classmethod
    def normalized(cls, grid: SphereGrid, values) -> "DiscreteMeasure":
        values = np.asarray(values, dtype=float)
        return cls(grid, values / np.dot(values, grid.weights))

    @property
    def masses(self) -> np.ndarray:
        return self.density * self.grid.weights

    @property
    def mass(self) -> float:
        return float(np.dot(self.density, self.grid.weights))

    def __repr__(self):
        return f"DiscreteMeasure(N={self.grid.size}, min={self.density.min():.4g}, max={self.density.max():.4g})"


def default_eps_schedule(start=1.0, stop=1e-3, factor=0.7) -> tuple:
    eps = [start]
    while eps[-1] * factor > stop:
        eps.append(eps[-1] * factor)
    eps.append(stop)
    return tuple(eps)


@dataclass(frozen=True)
class SolverSettings:
    eps_schedule: tuple = field(default_factory=default_eps_schedule)
    tau: float = 0.5
    tol_fixed: float = 1e-8
    max_iter: int = 500
    sinkhorn_tol: float = 1e-9
    sinkhorn_max_iter: int = 100_000
    continuation_steps: int = 1

    @property
    def eps_min(self) -> float:
        return float(self.eps_schedule[-1])


@dataclass(frozen=True)
class Scenario:
    grid: SphereGrid
    mu: DiscreteMeasure
    f: CongestionFn = CongestionFn()
    phi: InteractionKernel = InteractionKernel()
    V: Potential = Potential()
    solver: SolverSettings = SolverSettings()
    name: str = ""
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.mu.grid is not self.grid:
            raise ValueError("source measure lives on a different grid")
        if abs(self.mu.mass - 1.0) > MASS_TOL:
            raise ValueError("source measure must have mass 1")
        if np.any(self.mu.density <= 0):
            raise ValueError("source density must be strictly positive")

    @property
    def interaction_matrix(self) -> np.ndarray:
        if "K" not in self._cache:
            self._cache["K"] = self.phi.matrix(self.grid.nodes)
        return self._cache["K"]

    @property
    def potential_values(self) -> np.ndarray:
        if "V" not in self._cache:
            self._cache["V"] = self.V(self.grid.nodes)
        return self._cache["V"]

    def with_solver(self, **kw) -> "Scenario":
        return replace(self, solver=replace(self.solver, **kw), _cache={})


def _positive_density(nu: DiscreteMeasure) -> np.ndarray:
    rho = nu.density
    bad = np.flatnonzero(rho <= 0)
    if bad.size:
        raise InadaError(f"density vanishes at node {int(bad[0])}; congestion cost is -inf there")
    return rho


def interaction_field(nu: DiscreteMeasure, scenario: Scenario) -> np.ndarray:
    """``int phi(y_j, z) dnu(z)`` at every node."""
    return scenario.interaction_matrix @ nu.masses


def v_field(nu: DiscreteMeasure, scenario: Scenario) -> np.ndarray:
    rho = _positive_density(nu)
    return scenario.f(rho) + interaction_field(nu, scenario) + scenario.potential_values


def energy(nu: DiscreteMeasure, scenario: Scenario) -> float:
    """The functional whose first variation is :func:`v_field`."""
    rho = _positive_density(nu)
    m = nu.masses
    w = scenario.grid.weights
    congestion = np.dot(scenario.f.antiderivative(rho), w)
    interaction = 0.5 * m @ scenario.interaction_matrix @ m
    return float(congestion + interaction + np.dot(scenario.potential_values, m))


def nu_bounds(scenario: Scenario) -> tuple[float, float]:
    """A priori lower/upper bounds on the equilibrium density.

    ``f^{-1}(f(1/|S|) -/+ (2 osc c + 2 ||phi||_inf + osc V))`` with
    ``osc c = pi^2 / 2``.
    """
    f = scenario.f
    spread = 2 * OSC_COST + 2 * scenario.phi.sup_norm + scenario.V.oscillation
    center = f(1.0 / scenario.grid.total_weight)
    return float(f.inverse(center - spread)), float(f.inverse(center + spread))


def nu_bounds_osc(scenario: Scenario) -> tuple[float, float]:
    """Variant of :func:`nu_bounds` with ``osc phi`` in place of ``||phi||_inf``.

    Reported next to it for comparison; which of the two is tighter
    depends on the kernel family.
    """
    f = scenario.f
    spread = 2 * OSC_COST + 2 * scenario.phi.oscillation + scenario.V.oscillation
    center = f(1.0 / scenario.grid.total_weight)
    return float(f.inverse(center - spread)), float(f.inverse(center + spread))


def h_factor(Q, f: CongestionFn):
    return f.h_factor(Q)


def h_max(scenario: Scenario, samples: int = H_MAX_SAMPLES) -> float:
    lo, hi = nu_bounds(scenario)
    f = scenario.f
    Q = np.linspace(float(f(lo)), float(f(hi)), samples)
    return float(np.max(f.h_factor(Q)))
