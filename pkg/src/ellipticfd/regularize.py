"""Quadratic inf- and sup-convolutions of mesh functions.

    v^{theta,+}(x) = max_y { v(y) - |x - y|^2 / (2 theta) }
    v^{theta,-}(x) = min_y { v(y) + |x - y|^2 / (2 theta) }

with y ranging over all mesh points. The sup-convolution is semiconvex with
D^2 >= -I/theta, stays within a controlled distance of its source, and the
maximizing point x* (the witness) satisfies
|x - x*| <= 4 sqrt(sup|v|) sqrt(theta) + sqrt(n) h.

Both a brute-force evaluator (any evaluation points) and a per-axis
separable fast path (evaluation on the full mesh) are provided; they agree
bit for bit because they maximize the same floating-point candidate values,
accumulated per axis in identical order, with identical first-occurrence
tie-breaking over the lexicographically sorted mesh.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import Mesh, MeshFunction
from .scheme import make_stencil

__all__ = [
    "ConvolvedFunction",
    "sup_convolve",
    "inf_convolve",
    "semiconvexity_check",
    "magic_point_gap",
    "closeness_check",
]


@dataclass(eq=False)
class ConvolvedFunction:
    source: MeshFunction
    theta: float
    kind: str                 # "sup" or "inf"
    eval_points: np.ndarray   # (E, dim)
    values: np.ndarray        # (E,)
    witness_idx: np.ndarray   # (E,) ordinals of the witness mesh point
    on_mesh: bool             # evaluation points are exactly the mesh points

    @property
    def witnesses(self) -> np.ndarray:
        return self.source.mesh.points[self.witness_idx]

    def as_mesh_function(self) -> MeshFunction:
        if not self.on_mesh:
            raise ValueError("convolution was not evaluated on the full mesh")
        return MeshFunction(self.source.mesh, self.values.copy())


def _brute_sup(values, pts, eval_points, theta):
    """Max of v(y) - |x-y|^2/(2 theta), penalties accumulated from the last
    axis to the first (the fast path uses the same order)."""
    E = eval_points.shape[0]
    out = np.empty(E)
    arg = np.empty(E, dtype=np.int64)
    dim = pts.shape[1]
    inv2t = 1.0 / (2.0 * theta)
    block = max(1, 20_000_000 // max(pts.shape[0], 1))
    for s in range(0, E, block):
        e = min(E, s + block)
        cand = np.broadcast_to(values, (e - s, values.size)).copy()
        for a in reversed(range(dim)):
            cand -= (eval_points[s:e, a, None] - pts[None, :, a]) ** 2 * inv2t
        arg[s:e] = np.argmax(cand, axis=1)
        out[s:e] = cand[np.arange(e - s), arg[s:e]]
    return out, arg


def _fast_sup(values, mesh: Mesh, theta):
    """Separable pass over axes, processed from the last axis to the first.

    Embeds the mesh in its bounding lattice box (missing points get -inf),
    takes per-axis maxima of the same candidate values as the brute force,
    and composes the per-axis argmax tables into the global witness. The
    final pass runs over axis 0, so argmax ties resolve to the
    lexicographically smallest witness, as in the brute force.
    """
    dim = mesh.dim
    origin = mesh._origin
    shape = mesh._grid.shape
    arr = np.full(shape, -np.inf)
    arr[tuple((mesh.coords - origin).T)] = values
    inv2t = 1.0 / (2.0 * theta)

    axis_coords = [(np.arange(shape[a]) + origin[a]) * mesh.h for a in range(dim)]
    witness_tables = [None] * dim
    for a in reversed(range(dim)):
        xs = axis_coords[a]
        pen = (xs[:, None] - xs[None, :]) ** 2 * inv2t  # (eval, src)
        moved = np.moveaxis(arr, a, -1)
        cand = moved[..., None, :] - pen               # (..., eval, src)
        W = np.argmax(cand, axis=-1)
        moved_new = np.take_along_axis(cand, W[..., None], axis=-1)[..., 0]
        arr = np.moveaxis(moved_new, -1, a)
        witness_tables[a] = np.moveaxis(W, -1, a)

    eval_off = mesh.coords - origin
    witness_off = np.empty_like(eval_off)
    # witness table for axis a is indexed by (source offsets of axes < a,
    # eval offsets of axes >= a); recover components in ascending axis order
    for a in range(dim):
        idx = tuple(witness_off[:, :a].T) + tuple(eval_off[:, a:].T)
        witness_off[:, a] = witness_tables[a][idx]
    out = arr[tuple(eval_off.T)]
    warg = mesh.lookup(witness_off + origin)
    return out, warg


def sup_convolve(v: MeshFunction, theta: float, eval_points=None, method: str = "auto") -> ConvolvedFunction:
    """Sup-convolution of a mesh function.

    eval_points=None evaluates on the full mesh (fast separable path);
    arbitrary points fall back to the exact brute-force scan. Witness ties
    break to the lexicographically smallest mesh point.
    """
    if theta <= 0:
        raise ValueError("theta must be positive")
    mesh = v.mesh
    on_mesh = eval_points is None
    if on_mesh:
        eval_pts = mesh.points
        if method == "auto":
            method = "fast"
    else:
        eval_pts = np.atleast_2d(np.asarray(eval_points, dtype=float))
        if method == "auto":
            method = "brute"
        if method == "fast":
            raise ValueError("fast path requires evaluation on the full mesh")
    if method == "fast":
        vals, warg = _fast_sup(v.values, mesh, theta)
    elif method == "brute":
        vals, warg = _brute_sup(v.values, mesh.points, eval_pts, theta)
    else:
        raise ValueError(f"unknown method {method!r}")
    return ConvolvedFunction(v, float(theta), "sup", eval_pts, vals, warg, on_mesh)


def inf_convolve(v: MeshFunction, theta: float, eval_points=None, method: str = "auto") -> ConvolvedFunction:
    """Inf-convolution, computed as the negated sup-convolution of -v
    (negation is exact in floating point, so the fast-path guarantees carry
    over unchanged)."""
    neg = MeshFunction(v.mesh, -v.values)
    c = sup_convolve(neg, theta, eval_points=eval_points, method=method)
    return ConvolvedFunction(v, float(theta), "inf", c.eval_points, -c.values,
                             c.witness_idx, c.on_mesh)


@dataclass
class RegularityReport:
    checked: int
    violations: int
    worst_gap: float
    bound: float

    @property
    def passed(self) -> bool:
        return self.violations == 0


def semiconvexity_check(c: ConvolvedFunction, mesh: Mesh = None, slack: float = 1e-9) -> RegularityReport:
    """Directional second differences of a sup-convolution stay >= -1/theta
    (<= 1/theta for the inf kind) at every interior point."""
    mesh = c.source.mesh if mesh is None else mesh
    if not c.on_mesh:
        raise ValueError("semiconvexity_check needs values on the full mesh")
    stencil = make_stencil(mesh.dim, mesh.N)
    int_idx = mesh.interior_idx
    coords = mesh.coords[int_idx]
    vals = c.values
    bound = 1.0 / c.theta
    violations = 0
    worst = 0.0
    checked = 0
    for d, vec in enumerate(stencil.vectors):
        ip = mesh.lookup(coords + vec)
        im = mesh.lookup(coords - vec)
        ok = (ip >= 0) & (im >= 0)
        l2 = (vec @ vec) * mesh.h**2
        d2 = (vals[ip[ok]] - 2.0 * vals[int_idx[ok]] + vals[im[ok]]) / l2
        checked += int(ok.sum())
        if c.kind == "sup":
            gap = np.maximum(-bound - d2, 0.0)
        else:
            gap = np.maximum(d2 - bound, 0.0)
        bad = gap > slack
        violations += int(bad.sum())
        if gap.size:
            worst = max(worst, float(gap.max()))
    return RegularityReport(checked, violations, worst, bound)


def magic_point_gap(c: ConvolvedFunction, lip: float = None, slack: float = 1e-9) -> RegularityReport:
    """Distance from each evaluation point to its witness obeys

        |x - x*| <= 4 sqrt(sup|v|) sqrt(theta) + sqrt(n) h,

    and, when a Lipschitz constant of the source is supplied, the sharper
    |x - x*| <= 2 theta lip + sqrt(n) h."""
    mesh = c.source.mesh
    n = mesh.dim
    gaps = np.linalg.norm(c.eval_points - c.witnesses, axis=1)
    bound = 4.0 * np.sqrt(c.source.sup_norm()) * np.sqrt(c.theta) + np.sqrt(n) * mesh.h
    if lip is not None:
        bound = min(bound, 2.0 * c.theta * lip + np.sqrt(n) * mesh.h)
    violations = int(np.sum(gaps > bound + slack))
    worst = float(np.max(np.maximum(gaps - bound, 0.0))) if gaps.size else 0.0
    return RegularityReport(gaps.size, violations, worst, float(bound))


def closeness_check(c: ConvolvedFunction, lip: float, slack: float = 1e-9) -> RegularityReport:
    """0 <= v^{theta,+} - v <= 2 lip theta + lip sqrt(n) h at mesh points
    (mirrored for the inf kind), for sources sampled from a field with
    Lipschitz constant lip."""
    if not c.on_mesh:
        raise ValueError("closeness_check compares against source values on the mesh")
    mesh = c.source.mesh
    diff = c.values - c.source.values
    if c.kind == "inf":
        diff = -diff
    upper = 2.0 * lip * c.theta + lip * np.sqrt(mesh.dim) * mesh.h
    bad_low = diff < -slack
    bad_high = diff > upper + slack
    violations = int(np.sum(bad_low | bad_high))
    worst = float(max(np.max(diff - upper, initial=0.0), np.max(-diff, initial=0.0)))
    return RegularityReport(diff.size, violations, worst, float(upper))
