"""Paraboloid machinery: touching certificates, statistical delta-solution
verification, the sliding-paraboloid construction, concave envelopes with
contact sets, and the doubled-variables diagnostic.

A function v is a delta-supersolution of G = 0 when every paraboloid P that
touches v from below at the center of a ball of radius delta contained in
the domain satisfies G(D^2 P, x) <= 0; delta-subsolutions mirror this with
above-touching paraboloids and G >= 0. The checker here samples random
shapes, aligns each with a true center touch by a re-centering fixed-point
loop, and evaluates G on the certificates it finds.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import ConvexHull

from .mesh import Mesh, MeshFunction, eroded_points
from .operators import spectral_norm, sym

__all__ = [
    "Paraboloid",
    "TouchCertificate",
    "Affine",
    "touch",
    "delta_solution_check",
    "DeltaSolutionReport",
    "sliding_paraboloid",
    "SlidingResult",
    "concave_envelope",
    "doubling_gap",
    "DoublingReport",
]


@dataclass(frozen=True, eq=False)
class Paraboloid:
    """P(x) = c + b.(x - x0) + 0.5 (x - x0)^T M (x - x0)."""

    x0: np.ndarray
    c: float
    b: np.ndarray
    M: np.ndarray

    def __call__(self, x):
        pts = np.atleast_2d(np.asarray(x, dtype=float))
        d = pts - self.x0
        vals = self.c + d @ self.b + 0.5 * np.einsum("mi,ij,mj->m", d, self.M, d)
        return float(vals[0]) if np.asarray(x).ndim == 1 else vals

    @property
    def opening(self) -> np.ndarray:
        return self.M


@dataclass(frozen=True, eq=False)
class Affine:
    """l(x) = a.x + b."""

    a: np.ndarray
    b: float

    def __call__(self, x):
        pts = np.atleast_2d(np.asarray(x, dtype=float))
        vals = pts @ self.a + self.b
        return float(vals[0]) if np.asarray(x).ndim == 1 else vals


@dataclass(eq=False)
class TouchCertificate:
    """A paraboloid touching v at x' with the stated side on B_delta(x').

    side 'above' means P >= v on the ball with P(x') = v(x') (subsolution
    test); 'below' means P <= v (supersolution test)."""

    paraboloid: Paraboloid
    touch_point: np.ndarray
    touch_index: int
    side: str
    delta: float
    residual_min: float
    residual_max: float
    rounds: int


def _ball_points(mesh: Mesh, center, radius):
    """Ordinals of mesh points within the closed ball, lex sorted."""
    c = np.asarray(center, dtype=float)
    lo = np.ceil((c - radius) / mesh.h - 1e-9).astype(np.int64)
    hi = np.floor((c + radius) / mesh.h + 1e-9).astype(np.int64)
    ranges = [np.arange(a, b + 1) for a, b in zip(lo, hi)]
    coords = np.stack(np.meshgrid(*ranges, indexing="ij"), -1).reshape(-1, mesh.dim)
    idx = mesh.lookup(coords)
    idx = idx[idx >= 0]
    pts = mesh.points[idx]
    keep = np.linalg.norm(pts - c, axis=1) <= radius + 1e-12 * max(1.0, radius)
    return idx[keep]


def touch(v: MeshFunction, shape, x, delta: float, side: str, max_rounds: int = 5):
    """Shift a quadratic shape vertically until it touches v at the center
    of a delta-ball, re-centering on the touch point until it is a fixed
    point. Returns a TouchCertificate, or None when the sample is rejected
    (ball escapes the domain, or no fixed point within max_rounds)."""
    if side not in ("above", "below"):
        raise ValueError("side must be 'above' or 'below'")
    b, M = shape
    b = np.asarray(b, dtype=float)
    M = sym(M)
    mesh = v.mesh
    base = np.asarray(x, dtype=float)

    def shape_values(pts):
        d = pts - base
        return d @ b + 0.5 * np.einsum("mi,ij,mj->m", d, M, d)

    center = base
    center_idx = -1
    tol = 1e-12 * max(1.0, mesh.domain.diameter)
    rounds = 0
    for rounds in range(1, max_rounds + 1):
        if mesh.domain.boundary_distance(center[None, :])[0] < delta - tol:
            return None
        ball = _ball_points(mesh, center, delta)
        if ball.size == 0:
            return None
        diff = v.values[ball] - shape_values(mesh.points[ball])
        pick = int(np.argmax(diff)) if side == "above" else int(np.argmin(diff))
        new_idx = int(ball[pick])
        if new_idx == center_idx:
            break
        center_idx = new_idx
        center = mesh.points[new_idx]
    else:
        return None

    if mesh.domain.boundary_distance(center[None, :])[0] < delta - tol:
        return None
    ball = _ball_points(mesh, center, delta)
    qvals = shape_values(mesh.points[ball])
    shift = v.values[center_idx] - shape_values(center[None, :])[0]
    resid = (qvals + shift) - v.values[ball]
    grad_at_center = b + M @ (center - base)
    P = Paraboloid(x0=center.copy(), c=float(v.values[center_idx]), b=grad_at_center, M=M)
    return TouchCertificate(
        paraboloid=P,
        touch_point=center.copy(),
        touch_index=center_idx,
        side=side,
        delta=float(delta),
        residual_min=float(resid.min()),
        residual_max=float(resid.max()),
        rounds=rounds,
    )


@dataclass
class DeltaSolutionReport:
    accepted: int
    rejected: int
    violations: int
    worst_margin: float
    seed: int
    caps: dict
    inconclusive: bool
    examples: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.violations == 0 and not self.inconclusive

    def to_json(self) -> str:
        return json.dumps(
            {
                "accepted": self.accepted,
                "rejected": self.rejected,
                "violations": self.violations,
                "worst_margin": self.worst_margin,
                "seed": self.seed,
                "caps": self.caps,
                "inconclusive": self.inconclusive,
            }
        )


def _estimate_lipschitz(v: MeshFunction) -> float:
    """Cheap neighbor-difference Lipschitz estimate used only for caps."""
    mesh = v.mesh
    best = 0.0
    for k in range(mesh.dim):
        vec = np.zeros(mesh.dim, dtype=np.int64)
        vec[k] = 1
        nbr = mesh.lookup(mesh.coords + vec)
        ok = nbr >= 0
        if np.any(ok):
            d = np.abs(v.values[nbr[ok]] - v.values[ok]) / mesh.h
            best = max(best, float(d.max()))
    return best


def delta_solution_check(
    v: MeshFunction,
    G,
    delta: float,
    samples: int,
    M_max: float = None,
    slack: float = 0.0,
    seed: int = 0,
    margin: float = None,
    grad_cap: float = None,
    require: str = "both",
) -> DeltaSolutionReport:
    """Statistical delta-sub/supersolution test of G(D^2 P, x') at touch
    certificates.

    Base points are drawn from mesh points at distance > margin from the
    boundary (margin defaults to delta; callers verifying convolved mesh
    solutions pass the larger convolution reach plus delta). Shapes are
    random with |M| <= M_max (default 10/delta) and |b| <= grad_cap
    (default 10 times a measured Lipschitz estimate of v). For each accepted
    below-touch the supersolution inequality G <= slack is asserted, for
    each above-touch the subsolution inequality G >= -slack; require
    restricts the test to 'super', 'sub', or 'both'.
    """
    if samples < 1:
        raise ValueError("samples must be at least 1")
    if require not in ("both", "sub", "super"):
        raise ValueError("require must be 'both', 'sub' or 'super'")
    mesh = v.mesh
    M_max = 10.0 / delta if M_max is None else float(M_max)
    if grad_cap is None:
        grad_cap = 10.0 * max(_estimate_lipschitz(v), 1e-6)
    margin = delta if margin is None else float(margin)
    pool = eroded_points(mesh, margin)
    if pool.size == 0:
        return DeltaSolutionReport(0, samples, 0, 0.0, seed,
                                   {"M_max": M_max, "grad_cap": grad_cap, "margin": margin},
                                   inconclusive=True)

    accepted = rejected = violations = 0
    worst = -np.inf
    examples = []
    n = mesh.dim
    for k in range(samples):
        rng = np.random.default_rng([seed, k])
        if require == "both":
            side = "below" if k % 2 == 0 else "above"
        else:
            side = "below" if require == "super" else "above"
        base = mesh.points[int(pool[rng.integers(pool.size)])]
        bdir = rng.normal(size=n)
        bdir /= max(np.linalg.norm(bdir), 1e-300)
        b = bdir * rng.uniform(0.0, grad_cap)
        # openings: random symmetric part plus a spectrum shift, so both
        # definite regions (where center touches actually have fixed points)
        # and saddles are explored across the admissible scale
        scale = M_max * 10.0 ** rng.uniform(-2.0, 0.0)
        Mraw = sym(rng.normal(size=(n, n))) * scale * rng.uniform(0.0, 0.5)
        Mraw += rng.uniform(-scale, scale) * np.eye(n)
        nrm = spectral_norm(Mraw)
        M = Mraw if nrm <= M_max else Mraw * (M_max / nrm)
        cert = touch(v, (b, M), base, delta, side)
        if cert is None or mesh.dist[cert.touch_index] <= margin:
            rejected += 1
            continue
        accepted += 1
        gval = float(G(cert.paraboloid.M, cert.touch_point))
        viol = gval - slack if side == "below" else -gval - slack
        worst = max(worst, viol)
        if viol > 0:
            violations += 1
            if len(examples) < 10:
                examples.append({"sample": k, "side": side, "G": gval,
                                 "point": cert.touch_point.tolist()})
    return DeltaSolutionReport(
        accepted=accepted,
        rejected=rejected,
        violations=violations,
        worst_margin=float(worst) if np.isfinite(worst) else 0.0,
        seed=seed,
        caps={"M_max": M_max, "grad_cap": grad_cap, "margin": margin},
        inconclusive=accepted == 0,
        examples=examples,
    )


@dataclass(eq=False)
class SlidingResult:
    x0: np.ndarray
    index: int
    l: Affine
    m: float
    R: float


def sliding_paraboloid(w: MeshFunction, m: float, y=None) -> SlidingResult:
    """Touch w from above by a concave paraboloid of opening m / diam(U)^2.

    For w <= 0 on boundary points and 0 < m <= max w, returns the vertex
    x0 = argmin over the mesh of (-m/(2R^2) |x-y|^2 - w(x)) with R = diam(U),
    and the affine l(x) = w(x0) - (m/R^2) <x - x0, x0 - y>, which satisfy

        w(x) <= l(x) - m/(2R^2) |x - x0|^2   at every mesh point,
        w(x0) >= m/2.

    y defaults to the domain center.
    """
    mesh = w.mesh
    sup_w = float(np.max(w.values))
    if not (0 < m <= sup_w):
        raise ValueError(f"need 0 < m <= max w = {sup_w:g}")
    bvals = w.values[mesh.boundary_idx]
    if bvals.size and bvals.max() > 1e-12:
        raise ValueError("w must be nonpositive on boundary points")
    y = mesh.domain.center if y is None else np.asarray(y, dtype=float)
    R = mesh.domain.diameter
    scale = m / (2.0 * R * R)
    obj = -scale * np.sum((mesh.points - y) ** 2, axis=1) - w.values
    i0 = int(np.argmin(obj))
    x0 = mesh.points[i0]
    a = -(m / R**2) * (x0 - y)
    l = Affine(a=a, b=float(w.values[i0] - a @ x0))
    return SlidingResult(x0=x0.copy(), index=i0, l=l, m=float(m), R=float(R))


def _upper_hull_1d(x, u):
    order = np.argsort(x)
    pts = np.column_stack([x[order], u[order]])
    hull = []
    for p in pts:
        while len(hull) >= 2:
            o, a = hull[-2], hull[-1]
            cross = (a[0] - o[0]) * (p[1] - o[1]) - (a[1] - o[1]) * (p[0] - o[0])
            if cross >= 0:  # keep the chain concave
                hull.pop()
            else:
                break
        hull.append(p)
    hull = np.array(hull)
    return hull


def concave_envelope(u: MeshFunction):
    """Discrete concave envelope (least concave majorant over the mesh
    points) and its contact set, for dimension 1 or 2.

    Returns (envelope MeshFunction, contact point ordinals); contact is
    where the envelope meets u within 1e-10.
    """
    mesh = u.mesh
    if mesh.dim > 2:
        raise ValueError("concave_envelope supports dimension 1 and 2 only")
    pts = mesh.points
    vals = u.values
    if mesh.dim == 1:
        hull = _upper_hull_1d(pts[:, 0], vals)
        env = np.interp(pts[:, 0], hull[:, 0], hull[:, 1])
    else:
        # affine data has a degenerate (flat) lifted hull; handle it exactly
        A = np.column_stack([pts, np.ones(len(vals))])
        coef, *_ = np.linalg.lstsq(A, vals, rcond=None)
        fit = A @ coef
        scale = 1.0 + float(np.max(np.abs(vals)))
        if np.max(np.abs(vals - fit)) <= 1e-12 * scale:
            env = vals.copy()
        else:
            lifted = np.column_stack([pts, vals])
            hull = ConvexHull(lifted)
            eq = hull.equations  # n.x + offset <= 0 inside
            upper = eq[eq[:, 2] > 1e-12]
            if upper.size == 0:
                raise RuntimeError("no upper facets found for the lifted hull")
            # each upper facet plane is an affine majorant; their min is the envelope
            planes = -(upper[:, 3][:, None] + upper[:, 0][:, None] * pts[:, 0]
                       + upper[:, 1][:, None] * pts[:, 1]) / upper[:, 2][:, None]
            env = planes.min(axis=0)
            env = np.maximum(env, vals)  # guard rounding below the data
    contact = np.flatnonzero(env - vals <= 1e-10)
    return MeshFunction(mesh, env), contact


@dataclass
class DoublingReport:
    value: float
    x: np.ndarray
    y: np.ndarray
    i: int
    j: int
    boundary_sup: float
    pair_bound: float = None
    separation_bound: float = None
    boundary_ok: bool = None
    separation_ok: bool = None


def doubling_gap(
    v: MeshFunction,
    w: MeshFunction,
    a: float,
    lip_v: float = None,
    lip_w: float = None,
    max_points: int = 10_000,
) -> DoublingReport:
    """Exhaustive maximization of v(x) - w(y) - a/2 |x - y|^2 over mesh pairs.

    Also records the maximum over pairs with a boundary member, and when
    Lipschitz constants are supplied checks the two doubled-variables bounds
    (boundary pairs <= 2 (Lv^2 + Lw^2)/a, maximizer separation
    |x - y| <= 2 min(Lv, Lw)/a).
    """
    if a <= 0:
        raise ValueError("a must be positive")
    mesh = v.mesh
    if w.mesh is not mesh and not np.array_equal(w.mesh.points, mesh.points):
        raise ValueError("v and w must live on the same mesh")
    M = mesh.n_points
    if M > max_points:
        raise ValueError(
            f"mesh has {M} > {max_points} points; subsample the mesh first "
            "(exhaustive pair scan only)"
        )
    pts = mesh.points
    on_bnd = np.zeros(M, dtype=bool)
    on_bnd[mesh.boundary_idx] = True

    best = -np.inf
    best_ij = (0, 0)
    bnd_best = -np.inf
    block = max(1, 20_000_000 // M)
    for s in range(0, M, block):
        e = min(M, s + block)
        d2 = np.sum((pts[s:e, None, :] - pts[None, :, :]) ** 2, axis=2)
        vals = v.values[s:e, None] - w.values[None, :] - 0.5 * a * d2
        flat = int(np.argmax(vals))
        i_loc, j_loc = divmod(flat, M)
        if vals[i_loc, j_loc] > best:
            best = float(vals[i_loc, j_loc])
            best_ij = (s + i_loc, j_loc)
        mask = on_bnd[s:e, None] | on_bnd[None, :]
        if mask.any():
            bnd_best = max(bnd_best, float(vals[mask].max()))
    i, j = best_ij
    report = DoublingReport(
        value=best,
        x=pts[i].copy(),
        y=pts[j].copy(),
        i=i,
        j=j,
        boundary_sup=bnd_best,
    )
    if lip_v is not None and lip_w is not None:
        report.pair_bound = 2.0 * (lip_v**2 + lip_w**2) / a
        report.separation_bound = 2.0 * min(lip_v, lip_w) / a
        report.boundary_ok = bnd_best <= report.pair_bound + 1e-12
        sep = float(np.linalg.norm(pts[i] - pts[j]))
        report.separation_ok = sep <= report.separation_bound + 1e-12
    return report
