"""Solvers and diagnostics for the discrete Dirichlet problem
F_h[v] = 0 on interior points, v = g on boundary points.

Two methods are provided. 'policy' is Howard iteration: improve the
maximizing control greedily, and for each frozen maximizing policy run
policy iteration over the minimizing control, solving the frozen-control
sparse linear system exactly at every step. 'relax' is the damped explicit
iteration v <- v + tau F_h[v] with the largest step that keeps the update
map monotone, which converges for every assembled operator but slowly.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.spatial import cKDTree

from .fields import ScalarField
from .mesh import MeshFunction
from .operators import Nonlinearity
from .scheme import DiscreteOperator

__all__ = [
    "SolveReport",
    "solve_dirichlet",
    "discrete_comparison_test",
    "holder_norm",
    "manufactured_problem",
]


@dataclass
class SolveReport:
    method: str
    iterations: int
    residual: float
    elapsed: float
    converged: bool


def _boundary_values(op: DiscreteOperator, g) -> np.ndarray:
    mesh = op.mesh
    bidx = mesh.boundary_idx
    if isinstance(g, ScalarField):
        return np.asarray(g(mesh.points[bidx]), dtype=float)
    g = np.asarray(g, dtype=float)
    if g.shape == (bidx.size,):
        return g
    if g.shape == (mesh.n_points,):
        return g[bidx]
    raise ValueError("g must be a ScalarField or an array of boundary values")


def _initial_guess(op: DiscreteOperator, gb: np.ndarray) -> np.ndarray:
    """Extend boundary data to the interior by nearest boundary value."""
    mesh = op.mesh
    values = np.zeros(mesh.n_points)
    values[mesh.boundary_idx] = gb
    tree = cKDTree(mesh.points[mesh.boundary_idx])
    _, nearest = tree.query(mesh.points[op.interior_idx])
    values[op.interior_idx] = gb[nearest]
    return values


def _select_controls(op: DiscreteOperator, values, alpha, beta=None):
    """Greedy policies from the current iterate.

    Returns (alpha, beta) with beta the argmin over b for the given alpha
    and, when alpha is None, alpha the argmax of the min.
    """
    na, nb = op.shape_ab
    vals = op.pair_values(values).reshape(na, nb, -1)
    mins = vals.min(axis=1)
    if alpha is None:
        alpha = mins.argmax(axis=0)
    m = vals.shape[2]
    beta = vals[alpha, :, np.arange(m)].argmin(axis=1)
    return alpha, beta


def _frozen_solve(op: DiscreteOperator, alpha, beta, gb) -> np.ndarray:
    """Exact sparse solve of the linear system with both policies frozen."""
    mesh = op.mesh
    m = op.n_interior
    na, nb = op.shape_ab
    ctrl = alpha * nb + beta
    rows_w = op.weights[ctrl, np.arange(m), :]  # (m, n_dir)
    rhs = op.rhs.copy()
    if op.runnings is not None:
        rhs = rhs - op.runnings[ctrl, np.arange(m)]

    pos_of = np.full(mesh.n_points, -1, dtype=np.int64)
    pos_of[op.interior_idx] = np.arange(m)
    gfull = np.zeros(mesh.n_points)
    gfull[mesh.boundary_idx] = gb

    diag = -2.0 * rows_w @ op.inv_len2
    rows = [np.arange(m)]
    cols = [np.arange(m)]
    data = [diag]
    b = rhs.copy()
    for sgn_idx in (op.plus_idx, op.minus_idx):
        for d in range(op.stencil.n_dir):
            nbr = sgn_idx[:, d]
            w = rows_w[:, d] * op.inv_len2[d]
            p = pos_of[nbr]
            interior = p >= 0
            rows.append(np.flatnonzero(interior))
            cols.append(p[interior])
            data.append(w[interior])
            b[~interior] -= w[~interior] * gfull[nbr[~interior]]
    A = sp.csr_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(m, m),
    )
    return spla.spsolve(A, b)


def solve_dirichlet(
    op: DiscreteOperator,
    g,
    method: str = "policy",
    tol: float = 1e-10,
    max_iter: int = 200_000,
    initial=None,
):
    """Solve F_h[v] = 0 interior, v = g boundary.

    Returns (MeshFunction, SolveReport). Boundary values are set exactly;
    the report's residual is a fresh post-hoc sup-norm evaluation of F_h[v]
    over the interior points.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    mesh = op.mesh
    gb = _boundary_values(op, g)
    if not np.all(np.isfinite(gb)):
        raise ValueError("boundary values must be finite")
    t0 = time.perf_counter()

    if initial is None:
        values = _initial_guess(op, gb)
    else:
        init = initial.values if isinstance(initial, MeshFunction) else np.asarray(initial, float)
        values = init.copy()
        values[mesh.boundary_idx] = gb

    iterations = 0
    if method == "policy":
        alpha, beta = _select_controls(op, values, alpha=None)
        converged = False
        na, nb = op.shape_ab
        outer_cap = max(20, 4 * na * nb + 20)
        for _ in range(outer_cap):
            # policy iteration over the minimizing control for frozen alpha
            for _ in range(max(10, 4 * nb + 10)):
                values[op.interior_idx] = _frozen_solve(op, alpha, beta, gb)
                iterations += 1
                _, new_beta = _select_controls(op, values, alpha)
                if np.array_equal(new_beta, beta):
                    break
                beta = new_beta
            if op.residual(values) <= tol:
                converged = True
                break
            new_alpha, new_beta = _select_controls(op, values, alpha=None)
            if np.array_equal(new_alpha, alpha):
                beta = new_beta
                converged = op.residual(values) <= tol
                break
            alpha, beta = new_alpha, new_beta
            if iterations >= max_iter:
                break
    elif method == "relax":
        tau = 0.9 / (2.0 * op.max_center_coefficient())
        converged = False
        for _ in range(max_iter):
            r = op.evaluate(values)
            iterations += 1
            if np.max(np.abs(r)) <= tol:
                converged = True
                break
            values[op.interior_idx] += tau * r
    else:
        raise ValueError(f"unknown method {method!r}")

    res = op.residual(values)
    converged = res <= tol
    report = SolveReport(
        method=method,
        iterations=iterations,
        residual=res,
        elapsed=time.perf_counter() - t0,
        converged=converged,
    )
    return MeshFunction(mesh, values), report


def discrete_comparison_test(
    op: DiscreteOperator,
    v1: MeshFunction,
    v2: MeshFunction,
    tol: float = 1e-8,
    residual_tol: float = 1e-6,
) -> bool:
    """Comparison property of monotone schemes on a solved pair.

    Both inputs must satisfy F_h[v] = 0 up to residual_tol (checked, a
    ValueError otherwise). Returns True iff v1 <= v2 + tol on the boundary
    implies v1 <= v2 + tol everywhere.
    """
    for name, v in (("v1", v1), ("v2", v2)):
        r = op.residual(v.values)
        if r > residual_tol:
            raise ValueError(f"{name} is not a discrete solution (residual {r:.3e})")
    b = op.mesh.boundary_idx
    premise = np.all(v1.values[b] <= v2.values[b] + tol)
    if not premise:
        return True
    return bool(np.all(v1.values <= v2.values + tol))


def holder_norm(u: MeshFunction, eta: float, cap: int = 20_000_000, seed: int = 0) -> float:
    """Discrete Hoelder seminorm sup_{x != y} |u(x) - u(y)| / |x - y|^eta.

    Exact over all point pairs when their number is at most cap; otherwise a
    seeded random subsample of cap pairs is scanned and a warning flags the
    estimate.
    """
    if not (0 < eta <= 1):
        raise ValueError("eta must be in (0, 1]")
    pts = u.mesh.points
    vals = u.values
    M = pts.shape[0]
    n_pairs = M * (M - 1) // 2
    best = 0.0
    if n_pairs <= cap:
        block = max(1, min(M, 20_000_000 // max(M, 1)))
        for s in range(0, M, block):
            e = min(M, s + block)
            d = np.linalg.norm(pts[s:e, None, :] - pts[None, :, :], axis=2)
            dv = np.abs(vals[s:e, None] - vals[None, :])
            np.fill_diagonal(d[:, s:e], np.inf)
            ratio = dv / d**eta
            best = max(best, float(np.max(ratio)))
        return best
    warnings.warn(
        f"holder_norm subsampled {cap} of {n_pairs} pairs (seeded)",
        stacklevel=2,
    )
    rng = np.random.default_rng(seed)
    i = rng.integers(0, M, cap)
    j = rng.integers(0, M - 1, cap)
    j = np.where(j >= i, j + 1, j)
    d = np.linalg.norm(pts[i] - pts[j], axis=1)
    dv = np.abs(vals[i] - vals[j])
    return float(np.max(dv / d**eta))


def manufactured_problem(u_exact: ScalarField, F: Nonlinearity):
    """Right-hand side and boundary data that make u_exact the solution.

    f(x) := F(D^2 u_exact(x), x), so u_exact solves the problem classically
    and hence in the viscosity sense; g is u_exact itself (restricted to the
    boundary by the solver).
    """
    if u_exact.hess is None:
        raise ValueError("manufactured_problem needs a catalog field with exact Hessian")

    def fn(pts):
        return F.apply_hessians(u_exact.hess(pts), pts)

    f = ScalarField(name=f"manufactured({u_exact.name})", fn=fn)
    return f, u_exact
