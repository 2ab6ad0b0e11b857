"""Monotone finite difference operators built from directional second
differences.

The stencil collects lattice directions y with 0 < |y| <= N*h, one
representative per +/- pair and per direction line (the second difference
delta_y^2 is even in y, and longer parallel vectors add nothing to the
rank-one cone). A coefficient matrix a is decomposed as

    a  =  sum_y  w_y  (y/|y|) (y/|y|)^T,    w_y >= 0,

by nonnegative least squares, and the discrete operator evaluates

    F_h[u](x) = max_a min_b { sum_y w_y^{ab}(x) delta_y^2 u(x) + run^{ab}(x) } - f(x),

which is monotone by construction: nondecreasing in every neighbor value and
nonincreasing in the center value.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations, product
from math import gcd

import numpy as np
from scipy.optimize import nnls

from .fields import ScalarField
from .mesh import Mesh, MeshFunction
from .operators import Isaacs, LinearVC, Nonlinearity, PerturbedNonlinearity, Pucci

__all__ = [
    "Stencil",
    "make_stencil",
    "DirectionalWeights",
    "DiscreteOperator",
    "DecompositionError",
    "delta_y2",
    "decompose_matrix",
    "assemble",
    "monotonicity_check",
    "consistency_check",
    "MonotonicityReport",
    "ConsistencyReport",
]


class DecompositionError(ValueError):
    """A coefficient matrix is not in the rank-one cone of the stencil."""


@dataclass(frozen=True, eq=False)
class Stencil:
    """Lattice directions for width N, stored up to sign, none parallel."""

    N: int
    dim: int
    vectors: np.ndarray  # (n_dir, dim) primitive integer vectors

    @property
    def n_dir(self) -> int:
        return self.vectors.shape[0]

    @property
    def lengths(self) -> np.ndarray:
        return np.linalg.norm(self.vectors, axis=1)

    @property
    def units(self) -> np.ndarray:
        return self.vectors / self.lengths[:, None]

    def directions(self, h: float) -> np.ndarray:
        return self.vectors * h


def _primitive(vec) -> bool:
    g = 0
    for v in vec:
        g = gcd(g, abs(int(v)))
    return g == 1


def make_stencil(dim: int, N: int) -> Stencil:
    """All primitive integer directions with |m| <= N, canonical sign
    (first nonzero component positive), sorted by (|m|^2, lex)."""
    if N < 1:
        raise ValueError("stencil width N must be at least 1")
    rng = range(-N, N + 1)
    vecs = []
    for m in product(rng, repeat=dim):
        m = np.array(m, dtype=np.int64)
        if not m.any():
            continue
        if m @ m > N * N:
            continue
        first = m[np.flatnonzero(m)[0]]
        if first < 0:
            continue
        if not _primitive(m):
            continue
        vecs.append(m)
    vecs = np.array(sorted(vecs, key=lambda v: (int(v @ v), tuple(v))), dtype=np.int64)
    vecs.setflags(write=False)
    return Stencil(int(N), int(dim), vecs)


def delta_y2(u: MeshFunction, x, y) -> float:
    """Standard directional second difference
    (u(x-y) - 2 u(x) + u(x+y)) / |y|^2; exact on quadratics."""
    mesh = u.mesh
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    cx = np.rint(x / mesh.h).astype(np.int64)
    cy = np.rint(y / mesh.h).astype(np.int64)
    if np.max(np.abs(cx * mesh.h - x)) > 1e-9 * mesh.h or not cy.any():
        raise ValueError("x must be a lattice point and y a nonzero lattice direction")
    i = mesh.lookup(cx)[0]
    ip = mesh.lookup(cx + cy)[0]
    im = mesh.lookup(cx - cy)[0]
    if min(i, ip, im) < 0:
        raise ValueError("stencil leaves the mesh at this point")
    v = u.values
    return float((v[im] - 2.0 * v[i] + v[ip]) / (y @ y))


@dataclass
class DirectionalWeights:
    """Nonnegative weights over stencil directions with the fit residual."""

    weights: np.ndarray
    residual: float


def decompose_matrix(a, stencil: Stencil) -> DirectionalWeights:
    """Best nonnegative combination of rank-one direction matrices.

    Solves min_{w >= 0} |a - sum_y w_y yhat yhat^T|_F by active-set
    nonnegative least squares. Residual 0 (to rounding) exactly when a lies
    in the cone spanned by the stencil directions.
    """
    a = np.ascontiguousarray(0.5 * (np.asarray(a, float) + np.asarray(a, float).T))
    units = stencil.units
    cols = np.einsum("di,dj->dij", units, units).reshape(stencil.n_dir, -1).T
    w, rnorm = nnls(cols, a.reshape(-1))
    return DirectionalWeights(w, float(rnorm))


def _suggest_width(a, dim: int, start_N: int, max_N: int = 8):
    for N in range(start_N + 1, max_N + 1):
        trial = decompose_matrix(a, make_stencil(dim, N))
        if trial.residual <= 1e-10 * (1.0 + np.linalg.norm(a)):
            return N
    return None


@dataclass(eq=False)
class DiscreteOperator:
    """Assembled monotone operator on the interior points of a mesh.

    weights has shape (n_ctrl, n_int, n_dir) with the controls flattened in
    row-major (a, b) order; evaluation takes min over b then max over a.
    Entries flagged invalid (perturbation offsets leaving the domain) are
    filled with +/-inf so they never win the reduction.
    """

    mesh: Mesh
    stencil: Stencil
    weights: np.ndarray
    runnings: np.ndarray | None
    valid: np.ndarray | None
    fill: float
    shape_ab: tuple
    rhs: np.ndarray
    plus_idx: np.ndarray
    minus_idx: np.ndarray
    interior_idx: np.ndarray
    inv_len2: np.ndarray
    K_est: float
    F_ref: Nonlinearity
    f_ref: ScalarField

    @property
    def n_interior(self) -> int:
        return self.interior_idx.size

    @property
    def n_controls(self) -> int:
        return self.weights.shape[0]

    def second_differences(self, values: np.ndarray) -> np.ndarray:
        vc = values[self.interior_idx][:, None]
        return (values[self.plus_idx] + values[self.minus_idx] - 2.0 * vc) * self.inv_len2

    def pair_values(self, values: np.ndarray) -> np.ndarray:
        """Per-control operator values before the min/max reduction, (n_ctrl, n_int)."""
        d2 = self.second_differences(values)
        vals = np.einsum("cmd,md->cm", self.weights, d2)
        if self.runnings is not None:
            vals = vals + self.runnings
        if self.valid is not None:
            vals = np.where(self.valid, vals, self.fill)
        return vals

    def evaluate(self, values: np.ndarray) -> np.ndarray:
        """F_h[u] at every interior point."""
        na, nb = self.shape_ab
        vals = self.pair_values(values).reshape(na, nb, -1)
        return vals.min(axis=1).max(axis=0) - self.rhs

    def evaluate_at(self, values: np.ndarray, k: int) -> float:
        """F_h[u] at interior slot k only."""
        vp = values[self.plus_idx[k]]
        vm = values[self.minus_idx[k]]
        vc = values[self.interior_idx[k]]
        d2 = (vp + vm - 2.0 * vc) * self.inv_len2
        vals = self.weights[:, k, :] @ d2
        if self.runnings is not None:
            vals = vals + self.runnings[:, k]
        if self.valid is not None:
            vals = np.where(self.valid[:, k], vals, self.fill)
        na, nb = self.shape_ab
        return float(vals.reshape(na, nb).min(axis=1).max(axis=0) - self.rhs[k])

    def residual(self, values: np.ndarray) -> float:
        return float(np.max(np.abs(self.evaluate(values))))

    def max_center_coefficient(self) -> float:
        """max over controls and points of sum_y w_y / |y|^2 (relaxation step bound)."""
        s = self.weights @ self.inv_len2  # (n_ctrl, n_int)
        if self.valid is not None:
            s = np.where(self.valid, s, 0.0)
        return float(np.max(s))


def _neighbor_tables(mesh: Mesh, stencil: Stencil):
    int_idx = mesh.interior_idx
    coords = mesh.coords[int_idx]
    m = int_idx.size
    plus = np.empty((m, stencil.n_dir), dtype=np.int64)
    minus = np.empty((m, stencil.n_dir), dtype=np.int64)
    for d, vec in enumerate(stencil.vectors):
        plus[:, d] = mesh.lookup(coords + vec)
        minus[:, d] = mesh.lookup(coords - vec)
    if plus.min() < 0 or minus.min() < 0:
        raise RuntimeError("mesh invariant broken: stencil leaves the mesh from an interior point")
    return plus, minus


def _decompose_field(coeff, pts, stencil: Stencil, cache: dict, dim: int):
    mats = coeff(pts)
    W = np.empty((pts.shape[0], stencil.n_dir))
    for i in range(pts.shape[0]):
        a = np.ascontiguousarray(mats[i])
        key = a.tobytes()
        w = cache.get(key)
        if w is None:
            dw = decompose_matrix(a, stencil)
            tol = 1e-10 * (1.0 + np.linalg.norm(a))
            if dw.residual > tol:
                hint = _suggest_width(a, dim, stencil.N)
                hint_msg = f"; widening to N = {hint} would succeed" if hint else ""
                raise DecompositionError(
                    f"coefficient matrix at point {pts[i]} is outside the stencil cone "
                    f"(residual {dw.residual:.3e}, N = {stencil.N}){hint_msg}"
                )
            w = dw.weights
            cache[key] = w
        W[i] = w
    return W


def _pucci_controls(F: Pucci, stencil: Stencil):
    units = stencil.units
    dim = stencil.dim
    frames = []
    for combo in combinations(range(stencil.n_dir), dim):
        U = units[list(combo)]
        if np.max(np.abs(U @ U.T - np.eye(dim))) < 1e-12:
            frames.append(combo)
    if not frames:
        raise RuntimeError("stencil contains no orthogonal frame")
    rows = []
    for frame in frames:
        for mus in product((F.lam0, F.Lam0), repeat=dim):
            w = np.zeros(stencil.n_dir)
            for d, mu in zip(frame, mus):
                w[d] = mu
            rows.append(w)
    return np.array(rows)


def assemble(F: Nonlinearity, f: ScalarField, mesh: Mesh) -> DiscreteOperator:
    """Build the monotone discrete operator for F with right-hand side f.

    Raises DecompositionError, naming the offending point and a suggested
    wider stencil, when some coefficient matrix is not decomposable over the
    width-N stencil.
    """
    stencil = make_stencil(mesh.dim, mesh.N)
    plus, minus = _neighbor_tables(mesh, stencil)
    int_idx = mesh.interior_idx
    pts = mesh.points[int_idx]
    m = int_idx.size
    lens = stencil.lengths * mesh.h
    inv_len2 = 1.0 / lens**2
    rhs = np.asarray(f(pts), dtype=float)
    cache: dict = {}

    runnings = None
    valid = None
    fill = np.nan

    if isinstance(F, LinearVC):
        weights = _decompose_field(F.coeff, pts, stencil, cache, mesh.dim)[None, :, :]
        shape_ab = (1, 1)
    elif isinstance(F, Isaacs):
        weights = np.empty((F.na * F.nb, m, stencil.n_dir))
        has_run = F.runnings is not None
        if has_run:
            runnings = np.empty((F.na * F.nb, m))
        for a, b, cf, run in F.pair_fields():
            c = a * F.nb + b
            weights[c] = _decompose_field(cf, pts, stencil, cache, mesh.dim)
            if has_run:
                runnings[c] = run(pts)
        shape_ab = (F.na, F.nb)
    elif isinstance(F, Pucci):
        ctrl = _pucci_controls(F, stencil)
        weights = np.broadcast_to(ctrl[:, None, :], (ctrl.shape[0], m, stencil.n_dir)).copy()
        shape_ab = (ctrl.shape[0], 1) if F.sign > 0 else (1, ctrl.shape[0])
    elif isinstance(F, PerturbedNonlinearity):
        base = F.base
        if not isinstance(base, LinearVC):
            raise NotImplementedError(
                "assembly of perturbed operators is supported for the linear "
                "variable-coefficient variant only; others evaluate but do not assemble"
            )
        offs = F.offsets
        K = offs.shape[0]
        tol = 1e-12 * max(1.0, mesh.domain.diameter)
        weights = np.zeros((K, m, stencil.n_dir))
        valid = np.zeros((K, m), dtype=bool)
        for j in range(K):
            ys = pts + offs[j]
            ok = mesh.domain.contains(ys, tol=tol)
            valid[j, ok] = True
            if np.any(ok):
                weights[j, ok, :] = _decompose_field(base.coeff, ys[ok], stencil, cache, mesh.dim)
        if not valid.any(axis=0).all():
            raise RuntimeError("perturbation left some interior point with no valid offset")
        if F.mode == "inf":
            shape_ab = (1, K)
            fill = np.inf
        else:
            shape_ab = (K, 1)
            fill = -np.inf
    else:
        raise TypeError(f"cannot assemble nonlinearity of type {type(F).__name__}")

    wsum = np.einsum("cmd,d->cm", weights, stencil.lengths)
    if valid is not None:
        wsum = np.where(valid, wsum, 0.0)
    K_est = float(np.max(wsum)) / 3.0

    return DiscreteOperator(
        mesh=mesh,
        stencil=stencil,
        weights=weights,
        runnings=runnings,
        valid=valid,
        fill=fill,
        shape_ab=shape_ab,
        rhs=rhs,
        plus_idx=plus,
        minus_idx=minus,
        interior_idx=int_idx,
        inv_len2=inv_len2,
        K_est=K_est,
        F_ref=F,
        f_ref=f,
    )


@dataclass
class MonotonicityReport:
    trials: int
    violations: int
    worst_gap: float
    examples: list

    @property
    def passed(self) -> bool:
        return self.violations == 0


def monotonicity_check(op: DiscreteOperator, trials: int, seed: int) -> MonotonicityReport:
    """Randomized test of the two monotonicity inequalities.

    Each trial perturbs the neighbors of a random interior point by
    0 <= eta <= tau and the center by tau, and asserts

        F_h(q + eta, z) >= F_h(q, z) >= F_h(q + eta, z + tau)

    with 1e-10 relative slack.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    m = op.n_interior
    n_dir = op.stencil.n_dir
    values = np.zeros(op.mesh.n_points)
    violations = 0
    worst = 0.0
    examples = []
    for t in range(trials):
        rng = np.random.default_rng([seed, t])
        k = int(rng.integers(m))
        nbrs = np.concatenate(([op.interior_idx[k]], op.plus_idx[k], op.minus_idx[k]))
        values[nbrs] = rng.normal(scale=1.0, size=nbrs.size)
        f0 = op.evaluate_at(values, k)
        tau = rng.uniform(0.0, 1.0)
        eta_p = rng.uniform(0.0, tau, n_dir)
        eta_m = rng.uniform(0.0, tau, n_dir)
        values[op.plus_idx[k]] += eta_p
        values[op.minus_idx[k]] += eta_m
        f1 = op.evaluate_at(values, k)
        values[op.interior_idx[k]] += tau
        f2 = op.evaluate_at(values, k)
        values[nbrs] = 0.0
        slack = 1e-10 * (1.0 + abs(f0))
        gap = max(f0 - f1, f2 - f0)
        if gap > slack:
            violations += 1
            worst = max(worst, gap)
            if len(examples) < 10:
                examples.append({"trial": t, "slot": k, "gap": float(gap)})
    return MonotonicityReport(trials, violations, worst, examples)


@dataclass
class ConsistencyReport:
    sup_discrepancy: float
    bound: float
    K_used: float
    measured_K: float
    worst_point: np.ndarray

    @property
    def passed(self) -> bool:
        return self.sup_discrepancy <= self.bound


def consistency_check(op: DiscreteOperator, phi: ScalarField, K: float = None) -> ConsistencyReport:
    """Compare F_h[phi] with F(D^2 phi, x) - f(x) over all interior points.

    The test asserts the first-order bound sup |...| <= K (1 + d3) h, where
    d3 bounds the third derivative of phi and K defaults to the assembled
    estimate max_x sum_y w_y |y| / (3 h).
    """
    if phi.hess is None or phi.d3 is None:
        raise ValueError("consistency_check needs a catalog field with Hessian and d3 bound")
    mesh = op.mesh
    pts = mesh.points[op.interior_idx]
    Fh = op.evaluate(np.asarray(phi(mesh.points), dtype=float))
    ref = op.F_ref.apply_hessians(phi.hessian(pts), pts) - np.asarray(op.f_ref(pts), float)
    disc = np.abs(Fh - ref)
    worst = int(np.argmax(disc))
    K_used = op.K_est if K is None else float(K)
    bound = K_used * (1.0 + phi.d3) * mesh.h
    return ConsistencyReport(
        sup_discrepancy=float(disc[worst]),
        bound=float(bound),
        K_used=K_used,
        measured_K=float(disc[worst] / ((1.0 + phi.d3) * mesh.h)),
        worst_point=pts[worst],
    )
