"""Geometry and quadrature of the round unit sphere S^1 / S^2.

Points are unit vectors in R^{d+1}. Most functions accept either a
:class:`SpherePoint` or a plain array of coordinates and broadcast over
leading axes, so a whole grid can be handled in one call.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import SphericalVoronoi

UNIT_TOL = 1e-12
ANTIPODAL_TOL = 1e-6
COST_MAX = np.pi**2 / 2


class CutLocusError(ValueError):
    """Raised when a chart is requested at (or too near) the antipode."""


@dataclass(frozen=True)
class SpherePoint:
    coords: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coords, dtype=float)
        if c.ndim != 1 or c.size not in (2, 3):
            raise ValueError(f"expected a vector in R^2 or R^3, got shape {c.shape}")
        if abs(np.linalg.norm(c) - 1.0) > UNIT_TOL:
            raise ValueError(f"point is not on the unit sphere: |x| = {np.linalg.norm(c)!r}")
        c.setflags(write=False)
        object.__setattr__(self, "coords", c)

    @classmethod
    def normalized(cls, coords) -> "SpherePoint":
        c = np.asarray(coords, dtype=float)
        return cls(c / np.linalg.norm(c))

    @property
    def dim(self) -> int:
        return self.coords.size - 1

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.coords, dtype=dtype)


def _coords(p) -> np.ndarray:
    if isinstance(p, SpherePoint):
        return p.coords
    return np.asarray(p, dtype=float)


def _sin_between(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    # |p x q|, computed without cancellation for nearly parallel vectors
    if p.shape[-1] == 2:
        return np.abs(p[..., 0] * q[..., 1] - p[..., 1] * q[..., 0])
    return np.linalg.norm(np.cross(p, q), axis=-1)


def geodesic_distance(p, q) -> np.ndarray | float:
    """Great-circle distance in [0, pi].

    Uses ``atan2(|p x q|, <p, q>)``; this equals the clamped ``arccos`` of
    the inner product but keeps full precision near 0 and pi.
    """
    p, q = _coords(p), _coords(q)
    d = np.arctan2(_sin_between(p, q), np.sum(p * q, axis=-1))
    return float(d) if np.ndim(d) == 0 else d


def cost(p, q) -> np.ndarray | float:
    """Transport cost: half the squared geodesic distance."""
    d = geodesic_distance(p, q)
    return 0.5 * d * d


def cost_matrix(x: np.ndarray, y: np.ndarray | None = None) -> np.ndarray:
    """Dense matrix ``C[i, j] = cost(x_i, y_j)``; each entry computed independently."""
    x = _coords(x)
    y = x if y is None else _coords(y)
    C = cost(x[:, None, :], y[None, :, :])
    if y is x:
        # exact symmetry and zero diagonal
        C = np.triu(C, 1)
        C = C + C.T
    return C


def tangent_frame(base) -> np.ndarray:
    """Orthonormal basis of the tangent space at ``base``, shape (dim, dim+1)."""
    b = _coords(base)
    if b.size == 2:
        return np.array([[-b[1], b[0]]])
    # Gram-Schmidt against the coordinate axis least aligned with b
    axis = np.zeros(3)
    axis[np.argmin(np.abs(b))] = 1.0
    e1 = axis - b.dot(axis) * b
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(b, e1)
    return np.stack([e1, e2])


def chart_log(base, q, frame: np.ndarray | None = None) -> np.ndarray:
    """Riemannian logarithm of ``q`` at ``base`` in tangent-frame coordinates.

    Raises
    ------
    CutLocusError
        If ``q`` lies within ``ANTIPODAL_TOL`` of the antipode of ``base``.
    """
    b, q = _coords(base), _coords(q)
    E = tangent_frame(b) if frame is None else frame
    cos_d = float(b.dot(q))
    w = q - cos_d * b
    sin_d = float(np.linalg.norm(w))
    d = float(np.arctan2(sin_d, cos_d))
    if d > np.pi - ANTIPODAL_TOL:
        raise CutLocusError(f"point at distance {d!r} from base is on the cut locus")
    if sin_d == 0.0:
        return np.zeros(E.shape[0])
    return E @ (w * (d / sin_d))


def chart_exp(base, v, frame: np.ndarray | None = None) -> np.ndarray:
    """Exponential map: tangent coordinates ``v`` at ``base`` to a point.

    ``v`` may carry leading batch axes; the last axis has length ``dim``.
    """
    b = _coords(base)
    E = tangent_frame(b) if frame is None else frame
    v = np.asarray(v, dtype=float)
    t = v @ E
    r = np.linalg.norm(v, axis=-1)[..., None]
    sinc = np.sinc(r / np.pi)  # sin(r)/r, exact at r = 0
    out = np.cos(r) * b + sinc * t
    return out / np.linalg.norm(out, axis=-1, keepdims=True)


@dataclass(frozen=True)
class SphereGrid:
    """Quadrature discretization of S^dim.

    ``neighbors`` is a symmetric sparse adjacency stored as edge arrays:
    ``edges[k] = (i, j)`` with ``i < j`` and weight ``edge_weights[k]``.
    """

    dim: int
    nodes: np.ndarray
    weights: np.ndarray
    edges: np.ndarray
    edge_weights: np.ndarray
    resolution: int = 0
    _cost: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def size(self) -> int:
        return self.nodes.shape[0]

    @property
    def total_weight(self) -> float:
        return float(self.weights.sum())

    @property
    def points(self) -> list[SpherePoint]:
        return [SpherePoint(p) for p in self.nodes]

    def cost_matrix(self) -> np.ndarray:
        if self._cost is None:
            C = cost_matrix(self.nodes)
            C.setflags(write=False)
            object.__setattr__(self, "_cost", C)
        return self._cost

    def adjacency(self) -> np.ndarray:
        """Dense symmetric matrix of edge weights (zero off the edge set)."""
        W = np.zeros((self.size, self.size))
        i, j = self.edges.T
        W[i, j] = self.edge_weights
        W[j, i] = self.edge_weights
        return W

    def degree(self) -> np.ndarray:
        return np.bincount(self.edges.ravel(), minlength=self.size)

    def integrate(self, values) -> float:
        return float(np.dot(np.asarray(values, dtype=float), self.weights))

    def to_csv(self, path) -> None:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "y", "z", "weight"])
            for p, wt in zip(self.nodes, self.weights):
                z = p[2] if self.dim == 2 else 0.0
                w.writerow([repr(float(p[0])), repr(float(p[1])), repr(float(z)), repr(float(wt))])


def _edge_weights(nodes, weights, edges):
    i, j = edges.T
    length = geodesic_distance(nodes[i], nodes[j])
    return 0.5 * (weights[i] + weights[j]) / length**2


def _circle_grid(n: int) -> SphereGrid:
    theta = 2 * np.pi * np.arange(n) / n
    nodes = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    weights = np.full(n, 2 * np.pi / n)
    i = np.arange(n)
    edges = np.sort(np.stack([i, (i + 1) % n], axis=1), axis=1)
    return SphereGrid(1, nodes, weights, edges, _edge_weights(nodes, weights, edges), n)


def _icosahedron():
    g = (1 + 5**0.5) / 2
    v = np.array([
        [-1, g, 0], [1, g, 0], [-1, -g, 0], [1, -g, 0],
        [0, -1, g], [0, 1, g], [0, -1, -g], [0, 1, -g],
        [g, 0, -1], [g, 0, 1], [-g, 0, -1], [-g, 0, 1],
    ], dtype=float)
    f = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ])
    return v / np.linalg.norm(v, axis=1, keepdims=True), f


def _subdivide(verts, faces):
    verts = list(verts)
    midpoint = {}

    def mid(a, b):
        key = (a, b) if a < b else (b, a)
        if key not in midpoint:
            m = verts[a] + verts[b]
            verts.append(m / np.linalg.norm(m))
            midpoint[key] = len(verts) - 1
        return midpoint[key]

    out = []
    for a, b, c in faces:
        ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
        out += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
    return np.array(verts), np.array(out)


def _icosahedral_grid(level: int) -> SphereGrid:
    verts, faces = _icosahedron()
    for _ in range(level):
        verts, faces = _subdivide(verts, faces)
    sv = SphericalVoronoi(verts, radius=1.0, center=np.zeros(3))
    weights = sv.calculate_areas()
    e = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    edges = np.unique(np.sort(e, axis=1), axis=0)
    return SphereGrid(2, verts, weights, edges, _edge_weights(verts, weights, edges), level)


def build_grid(dim: int, resolution: int) -> SphereGrid:
    """Build a quadrature grid on S^dim.

    Parameters
    ----------
    dim : {1, 2}
    resolution : int
        Number of equispaced nodes on S^1 (at least 4), or the number of
        icosahedron subdivision levels on S^2 (at least 1; level k gives
        ``10 * 4**k + 2`` nodes).
    """
    if dim == 1:
        if resolution < 4:
            raise ValueError(f"S^1 grid needs at least 4 nodes, got {resolution}")
        return _circle_grid(int(resolution))
    if dim == 2:
        if resolution < 1:
            raise ValueError(f"S^2 grid needs subdivision level >= 1, got {resolution}")
        return _icosahedral_grid(int(resolution))
    raise ValueError(f"only S^1 and S^2 are supported, got dim={dim}")


def sphere_volume(dim: int) -> float:
    return {1: 2 * np.pi, 2: 4 * np.pi}[dim]
