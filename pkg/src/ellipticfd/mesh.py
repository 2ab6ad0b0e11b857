"""Bounded domains, the lattice h*Z^n, and the interior/boundary split.

A mesh is the set of lattice points of spacing h inside the closed domain.
A point is *interior* when its distance to the domain boundary exceeds N*h,
where N is the stencil width; every other mesh point is a boundary point.
This guarantees that all lattice translates x + y with |y| <= N*h of an
interior point x stay inside the mesh.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Box",
    "Ball",
    "Mesh",
    "MeshFunction",
    "build_mesh",
    "distance_to_boundary",
    "eroded_points",
    "domain_from_config",
]

# Lattice points within this fraction of h of the closed domain are kept as
# boundary points, so corner points are not lost to rounding.
BOUNDARY_SNAP = 1e-12


@dataclass(frozen=True, eq=False)
class Box:
    """Axis-aligned box given by per-axis bounds."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        if lo.ndim != 1 or lo.shape != hi.shape:
            raise ValueError("lo and hi must be 1-d arrays of equal length")
        if not np.all(hi > lo):
            raise ValueError("box must have nonempty interior (hi > lo per axis)")

    @property
    def dim(self) -> int:
        return self.lo.size

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.hi - self.lo))

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    def bounding_box(self):
        return self.lo, self.hi

    def contains(self, pts, tol: float = 0.0):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return np.all((pts >= self.lo - tol) & (pts <= self.hi + tol), axis=1)

    def boundary_distance(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        margins = np.minimum(pts - self.lo, self.hi - pts)
        return margins.min(axis=1)


@dataclass(frozen=True, eq=False)
class Ball:
    """Euclidean ball with given center and radius."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        c = np.asarray(self.center, dtype=float)
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "radius", float(self.radius))
        if c.ndim != 1:
            raise ValueError("center must be a 1-d array")
        if self.radius <= 0:
            raise ValueError("radius must be positive")

    @property
    def dim(self) -> int:
        return self.center.size

    @property
    def diameter(self) -> float:
        return 2.0 * self.radius

    def bounding_box(self):
        return self.center - self.radius, self.center + self.radius

    def contains(self, pts, tol: float = 0.0):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return np.linalg.norm(pts - self.center, axis=1) <= self.radius + tol

    def boundary_distance(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return self.radius - np.linalg.norm(pts - self.center, axis=1)


Domain = Box | Ball


def domain_from_config(cfg: dict) -> Domain:
    """Build a domain from its JSON description."""
    kind = cfg.get("kind")
    if kind == "box":
        return Box(np.asarray(cfg["lo"], float), np.asarray(cfg["hi"], float))
    if kind == "ball":
        return Ball(np.asarray(cfg["center"], float), float(cfg["radius"]))
    raise ValueError(f"unknown domain kind {kind!r}")


def distance_to_boundary(domain: Domain, x) -> float:
    """Exact Euclidean distance from x to the domain boundary.

    x must lie in the closed domain (a tiny tolerance absorbs rounding).
    """
    x = np.asarray(x, dtype=float)
    tol = 1e-12 * max(1.0, domain.diameter)
    if not bool(domain.contains(x[None, :], tol=tol)[0]):
        raise ValueError(f"point {x} lies outside the domain")
    d = float(domain.boundary_distance(x[None, :])[0])
    return max(d, 0.0)


@dataclass(eq=False)
class Mesh:
    """Lattice points of spacing h in the closed domain, split into interior
    and boundary relative to the stencil width N."""

    domain: Domain
    h: float
    N: int
    coords: np.ndarray        # (n_pts, dim) integer lattice coordinates, lex sorted
    points: np.ndarray        # (n_pts, dim) = coords * h
    dist: np.ndarray          # (n_pts,) distance to the domain boundary
    interior_mask: np.ndarray  # (n_pts,) bool
    _origin: np.ndarray = field(repr=False, default=None)
    _grid: np.ndarray = field(repr=False, default=None)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    @property
    def interior_idx(self) -> np.ndarray:
        return np.flatnonzero(self.interior_mask)

    @property
    def boundary_idx(self) -> np.ndarray:
        return np.flatnonzero(~self.interior_mask)

    @property
    def index(self) -> dict:
        """Map lattice coordinates (tuple of ints) to point ordinal."""
        return {tuple(c): i for i, c in enumerate(self.coords)}

    def lookup(self, coords) -> np.ndarray:
        """Ordinals of the given integer lattice coordinates, -1 if absent."""
        coords = np.atleast_2d(np.asarray(coords))
        off = coords - self._origin
        shape = self._grid.shape
        ok = np.all((off >= 0) & (off < shape), axis=1)
        out = np.full(coords.shape[0], -1, dtype=np.int64)
        if np.any(ok):
            out[ok] = self._grid[tuple(off[ok].T)]
        return out


@dataclass(eq=False)
class MeshFunction:
    """Real values attached to every mesh point."""

    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.mesh.n_points,):
            raise ValueError("value count must equal mesh point count")

    @classmethod
    def from_field(cls, mesh: Mesh, f) -> "MeshFunction":
        return cls(mesh, np.asarray(f(mesh.points), dtype=float))

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def copy(self) -> "MeshFunction":
        return MeshFunction(self.mesh, self.values.copy())


def build_mesh(domain: Domain, h: float, N: int) -> Mesh:
    """Enumerate the lattice points of spacing h in the closed domain.

    Raises ValueError when no interior point exists (N*h too large for the
    domain), which would make the discrete Dirichlet problem degenerate.
    """
    if h <= 0:
        raise ValueError("spacing h must be positive")
    if N < 1:
        raise ValueError("stencil width N must be at least 1")

    lo, hi = domain.bounding_box()
    m_lo = np.floor(lo / h).astype(np.int64) - 1
    m_hi = np.ceil(hi / h).astype(np.int64) + 1
    ranges = [np.arange(a, b + 1) for a, b in zip(m_lo, m_hi)]
    coords = np.stack(np.meshgrid(*ranges, indexing="ij"), axis=-1).reshape(-1, domain.dim)
    pts = coords * h

    snap = BOUNDARY_SNAP * h
    keep = domain.contains(pts, tol=snap)
    coords = coords[keep]
    pts = pts[keep]
    if coords.shape[0] == 0:
        raise ValueError("degenerate mesh: no lattice point inside the domain")

    dist = np.maximum(domain.boundary_distance(pts), 0.0)
    interior = dist > N * h + snap
    if not np.any(interior):
        raise ValueError(
            f"degenerate mesh: no interior point (N*h = {N * h} too large for the domain)"
        )

    origin = coords.min(axis=0)
    shape = tuple(coords.max(axis=0) - origin + 1)
    grid = np.full(shape, -1, dtype=np.int64)
    grid[tuple((coords - origin).T)] = np.arange(coords.shape[0])

    for arr in (coords, pts, dist, interior):
        arr.setflags(write=False)
    return Mesh(domain, float(h), int(N), coords, pts, dist, interior,
                _origin=origin, _grid=grid)


def eroded_points(mesh: Mesh, margin: float) -> np.ndarray:
    """Ordinals of mesh points with d(x, boundary) strictly above margin.

    The margin is supplied by the caller, e.g. the convolution reach
    4*sqrt(theta)*sqrt(sup|v|) + sqrt(n)*h plus a ball radius.
    """
    if margin < 0:
        raise ValueError("margin must be nonnegative")
    return np.flatnonzero(mesh.dist > margin)
