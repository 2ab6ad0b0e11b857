"""Closed-form scalar fields and matrix coefficient fields.

Everything evaluable here comes from a small catalog of closed forms
(affine, quadratic, sine products, bumps) so that manufactured right-hand
sides and exact derivatives are available where the toolkit needs them.
Matrix coefficient fields are affine in x, which keeps eigenvalue ranges
over boxes computable exactly from corner evaluations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "ScalarField",
    "MatrixField",
    "constant_field",
    "affine_field",
    "quadratic_field",
    "sin_product",
    "cubic_axis",
    "gaussian_bump",
    "identity_coeff",
    "constant_coeff",
    "iso_affine_coeff",
    "diag_affine_coeff",
    "affine_coeff",
    "field_from_config",
    "matrix_field_from_config",
]


def _as_batch(x):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    return (x[None, :] if single else x), single


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Scalar function with optional exact gradient/Hessian and metadata.

    lip is a Lipschitz constant valid on the domain of use; d3 bounds the
    directional third derivative sup |D3 f(x)[v,v,v]| over unit v.
    """

    name: str
    fn: callable
    grad: callable = None
    hess: callable = None
    lip: float = None
    d3: float = None

    def __call__(self, x):
        pts, single = _as_batch(x)
        vals = np.asarray(self.fn(pts), dtype=float)
        return float(vals[0]) if single else vals

    def gradient(self, x):
        if self.grad is None:
            raise ValueError(f"field {self.name!r} has no gradient in the catalog")
        pts, single = _as_batch(x)
        g = np.asarray(self.grad(pts), dtype=float)
        return g[0] if single else g

    def hessian(self, x):
        if self.hess is None:
            raise ValueError(f"field {self.name!r} has no Hessian in the catalog")
        pts, single = _as_batch(x)
        H = np.asarray(self.hess(pts), dtype=float)
        return H[0] if single else H

    def shifted(self, c: float) -> "ScalarField":
        """The field plus a constant (same derivatives and constants)."""
        return ScalarField(
            name=f"{self.name}{c:+g}",
            fn=lambda pts, _f=self.fn, _c=c: np.asarray(_f(pts), float) + _c,
            grad=self.grad,
            hess=self.hess,
            lip=self.lip,
            d3=self.d3,
        )


def constant_field(value: float, dim: int) -> ScalarField:
    v = float(value)
    return ScalarField(
        name=f"const({v:g})",
        fn=lambda pts: np.full(pts.shape[0], v),
        grad=lambda pts: np.zeros_like(pts),
        hess=lambda pts: np.zeros((pts.shape[0], dim, dim)),
        lip=0.0,
        d3=0.0,
    )


def affine_field(a, b: float = 0.0) -> ScalarField:
    a = np.asarray(a, dtype=float)
    dim = a.size
    return ScalarField(
        name="affine",
        fn=lambda pts: pts @ a + b,
        grad=lambda pts: np.broadcast_to(a, pts.shape).copy(),
        hess=lambda pts: np.zeros((pts.shape[0], dim, dim)),
        lip=float(np.linalg.norm(a)),
        d3=0.0,
    )


def quadratic_field(M, b=None, c: float = 0.0, domain=None) -> ScalarField:
    """0.5 x^T M x + b.x + c with exact derivatives.

    When a domain is given, the Lipschitz constant is the max of |Mx + b|
    over the bounding-box corners (exact for boxes, an upper bound for balls).
    """
    M = np.asarray(M, dtype=float)
    M = 0.5 * (M + M.T)
    dim = M.shape[0]
    b = np.zeros(dim) if b is None else np.asarray(b, dtype=float)
    lip = None
    if domain is not None:
        lo, hi = domain.bounding_box()
        corners = np.stack(np.meshgrid(*zip(lo, hi), indexing="ij"), -1).reshape(-1, dim)
        lip = float(np.max(np.linalg.norm(corners @ M + b, axis=1)))
    return ScalarField(
        name="quadratic",
        fn=lambda pts: 0.5 * np.einsum("mi,ij,mj->m", pts, M, pts) + pts @ b + c,
        grad=lambda pts: pts @ M + b,
        hess=lambda pts: np.broadcast_to(M, (pts.shape[0], dim, dim)).copy(),
        lip=lip,
        d3=0.0,
    )


def sin_product(dim: int = 2, scale: float = 1.0) -> ScalarField:
    """scale * prod_i sin(pi x_i), the classic manufactured solution."""
    s = float(scale)
    pi = np.pi

    def fn(pts):
        return s * np.prod(np.sin(pi * pts), axis=1)

    def grad(pts):
        sins = np.sin(pi * pts)
        coss = np.cos(pi * pts)
        prod = np.prod(sins, axis=1)
        g = np.empty_like(pts)
        for k in range(dim):
            with np.errstate(divide="ignore", invalid="ignore"):
                others = np.where(np.abs(sins[:, k]) > 1e-300, prod / sins[:, k], 0.0)
            # recompute exactly when sin vanishes
            bad = np.abs(sins[:, k]) <= 1e-300
            if np.any(bad):
                others[bad] = np.prod(np.delete(sins[bad], k, axis=1), axis=1)
            g[:, k] = s * pi * coss[:, k] * others
        return g

    def hess(pts):
        m = pts.shape[0]
        sins = np.sin(pi * pts)
        coss = np.cos(pi * pts)
        H = np.empty((m, dim, dim))
        for i in range(dim):
            for j in range(dim):
                term = np.ones(m)
                for k in range(dim):
                    if k == i == j:
                        term = term * (-pi * pi * sins[:, k])
                    elif k in (i, j):
                        term = term * (pi * coss[:, k])
                    else:
                        term = term * sins[:, k]
                H[:, i, j] = s * term
        return H

    return ScalarField(
        name=f"sin_product({dim}d,{s:g})",
        fn=fn,
        grad=grad,
        hess=hess,
        lip=abs(s) * np.pi * np.sqrt(dim),
        d3=abs(s) * np.pi**3 * dim**1.5,
    )


def cubic_axis(dim: int, axis: int = 0, domain=None) -> ScalarField:
    """x_axis^3; third derivatives are constant, handy for consistency checks."""
    a = int(axis)
    lip = None
    if domain is not None:
        lo, hi = domain.bounding_box()
        lip = 3.0 * max(lo[a] ** 2, hi[a] ** 2)

    def hess(pts):
        H = np.zeros((pts.shape[0], dim, dim))
        H[:, a, a] = 6.0 * pts[:, a]
        return H

    def grad(pts):
        g = np.zeros_like(pts)
        g[:, a] = 3.0 * pts[:, a] ** 2
        return g

    return ScalarField(
        name=f"cubic(x{a})",
        fn=lambda pts: pts[:, a] ** 3,
        grad=grad,
        hess=hess,
        lip=lip,
        d3=6.0,
    )


def gaussian_bump(center, width: float, amp: float = 1.0) -> ScalarField:
    """amp * exp(-|x - c|^2 / width^2), with exact derivatives.

    Its curvature is localized at the center, which keeps manufactured
    problems insensitive to the boundary band and makes rate studies clean.
    """
    c = np.asarray(center, dtype=float)
    w = float(width)
    dim = c.size

    def fn(pts):
        return amp * np.exp(-np.sum((pts - c) ** 2, axis=1) / w**2)

    def grad(pts):
        d = pts - c
        e = amp * np.exp(-np.sum(d**2, axis=1) / w**2)
        return (-2.0 / w**2) * d * e[:, None]

    def hess(pts):
        d = pts - c
        e = amp * np.exp(-np.sum(d**2, axis=1) / w**2)
        H = (4.0 / w**4) * np.einsum("mi,mj->mij", d, d) * e[:, None, None]
        H -= (2.0 / w**2) * np.broadcast_to(np.eye(dim), (pts.shape[0], dim, dim)) * e[:, None, None]
        return H

    lip = abs(amp) * np.sqrt(2.0) / w * np.exp(-0.5)
    # sup over unit directions of the third directional derivative
    d3 = 4.0 * abs(amp) / w**3
    return ScalarField(name="bump", fn=fn, grad=grad, hess=hess, lip=lip, d3=d3)


@dataclass(frozen=True, eq=False)
class MatrixField:
    """Symmetric matrix field affine in x: a(x) = A0 + sum_k x_k Ak[k]."""

    name: str
    A0: np.ndarray
    Ak: np.ndarray  # (dim, n, n); zero for constant fields

    def __post_init__(self):
        A0 = np.asarray(self.A0, dtype=float)
        A0 = 0.5 * (A0 + A0.T)
        Ak = np.asarray(self.Ak, dtype=float)
        Ak = 0.5 * (Ak + np.swapaxes(Ak, 1, 2))
        object.__setattr__(self, "A0", A0)
        object.__setattr__(self, "Ak", Ak)

    @property
    def dim(self) -> int:
        return self.A0.shape[0]

    @property
    def x_independent(self) -> bool:
        return not np.any(self.Ak)

    @property
    def lip_fro(self) -> float:
        """Frobenius Lipschitz bound: |a(x)-a(y)|_F <= lip_fro |x-y|."""
        return float(np.sqrt(np.sum(self.Ak**2)))

    def __call__(self, x):
        pts, single = _as_batch(x)
        A = self.A0 + np.einsum("mk,kij->mij", pts, self.Ak)
        return A[0] if single else A

    def eig_bounds(self, domain):
        """Eigenvalue range of a(x) over the domain.

        Exact on boxes: the matrices over a box form the convex hull of the
        corner matrices, lambda_min is concave and lambda_max convex, so
        extremes are attained at corners. For balls this bounds via the
        bounding box.
        """
        lo, hi = domain.bounding_box()
        dim = len(lo)
        corners = np.stack(np.meshgrid(*zip(lo, hi), indexing="ij"), -1).reshape(-1, dim)
        mats = self(corners)
        eigs = np.linalg.eigvalsh(mats)
        return float(eigs.min()), float(eigs.max())


def identity_coeff(dim: int) -> MatrixField:
    return MatrixField("identity", np.eye(dim), np.zeros((dim, dim, dim)))


def constant_coeff(A) -> MatrixField:
    A = np.asarray(A, dtype=float)
    dim = A.shape[0]
    return MatrixField("const", A, np.zeros((dim, dim, dim)))


def iso_affine_coeff(a, b: float, dim: int = None) -> MatrixField:
    """(b + a.x) * I, e.g. (1 + x_1) * I."""
    a = np.asarray(a, dtype=float)
    dim = a.size if dim is None else dim
    Ak = np.array([a[k] * np.eye(dim) for k in range(dim)])
    return MatrixField("iso_affine", b * np.eye(dim), Ak)


def diag_affine_coeff(entries) -> MatrixField:
    """Diagonal matrix with affine entries [{'a': [...], 'b': c}, ...]."""
    dim = len(entries)
    A0 = np.zeros((dim, dim))
    Ak = np.zeros((dim, dim, dim))
    for i, e in enumerate(entries):
        A0[i, i] = float(e.get("b", 0.0))
        a = np.asarray(e.get("a", np.zeros(dim)), dtype=float)
        for k in range(dim):
            Ak[k, i, i] = a[k]
    return MatrixField("diag_affine", A0, Ak)


def affine_coeff(A0, Ak) -> MatrixField:
    A0 = np.asarray(A0, dtype=float)
    Ak = np.asarray(Ak, dtype=float)
    return MatrixField("affine", A0, Ak)


def field_from_config(cfg, dim: int) -> ScalarField:
    """Scalar field from a JSON value: a catalog id string or a kind dict."""
    if isinstance(cfg, str):
        if cfg == "zero":
            return constant_field(0.0, dim)
        if cfg == "one":
            return constant_field(1.0, dim)
        raise ValueError(f"unknown scalar field id {cfg!r}")
    kind = cfg.get("kind")
    if kind == "constant":
        return constant_field(cfg["value"], dim)
    if kind == "affine":
        return affine_field(cfg["a"], cfg.get("b", 0.0))
    if kind == "quadratic":
        return quadratic_field(cfg["M"], cfg.get("b"), cfg.get("c", 0.0))
    if kind == "sin_product":
        return sin_product(dim, cfg.get("scale", 1.0))
    if kind == "cubic":
        return cubic_axis(dim, cfg.get("axis", 0))
    if kind == "bump":
        return gaussian_bump(cfg["center"], cfg["width"], cfg.get("amp", 1.0))
    raise ValueError(f"unknown scalar field kind {kind!r}")


def matrix_field_from_config(cfg, dim: int) -> MatrixField:
    """Matrix coefficient field from a JSON value."""
    if isinstance(cfg, str):
        if cfg == "identity":
            return identity_coeff(dim)
        raise ValueError(f"unknown matrix field id {cfg!r}")
    kind = cfg.get("kind")
    if kind == "identity":
        return identity_coeff(dim)
    if kind == "constant":
        return constant_coeff(cfg["matrix"])
    if kind == "iso_affine":
        return iso_affine_coeff(cfg["a"], cfg.get("b", 0.0), dim)
    if kind == "diag_affine":
        return diag_affine_coeff(cfg["entries"])
    if kind == "affine":
        return affine_coeff(cfg["A0"], cfg["Ak"])
    raise ValueError(f"unknown matrix field kind {kind!r}")
