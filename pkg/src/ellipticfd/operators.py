"""Uniformly elliptic nonlinearities F(X, x) and their ball perturbations.

Every operator records an ellipticity pair (lam, Lam) such that for all
positive semidefinite Y

    lam * |Y| <= F(X + Y, x) - F(X, x) <= Lam * |Y|,

with |.| the spectral norm, and a constant kappa with

    |F(X, x) - F(X, y)| <= kappa * |x - y| * (|X| + 1).

For trace-form operators built from coefficient matrices with eigenvalues in
[lo, hi], the valid pair is (lo, n * hi): increments satisfy
tr(a Y) <= hi * tr(Y) <= n * hi * |Y|, and the lower bound uses
tr(a Y) >= lo * tr(Y) >= lo * |Y|.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fields import MatrixField, ScalarField
from .mesh import Domain

__all__ = [
    "Nonlinearity",
    "LinearVC",
    "Pucci",
    "Isaacs",
    "PerturbedNonlinearity",
    "make_linear",
    "make_isaacs",
    "pucci",
    "spectral_norm",
    "check_ellipticity",
    "EllipticityReport",
    "perturb_inf",
    "perturb_sup",
    "field_inf",
    "field_sup",
    "ball_offsets",
    "sym",
]


def sym(X) -> np.ndarray:
    """Exactly symmetric copy of X ((X + X^T)/2 is symmetric in floats)."""
    X = np.asarray(X, dtype=float)
    return 0.5 * (X + X.T)


def spectral_norm(X) -> float:
    """Largest absolute eigenvalue of a symmetric matrix."""
    X = np.asarray(X, dtype=float)
    if X.shape == (1, 1):
        return abs(float(X[0, 0]))
    return float(np.max(np.abs(np.linalg.eigvalsh(X))))


def _batch_points(x, dim):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = x[None, :] if single else x
    if pts.shape[1] != dim:
        raise ValueError("point dimension mismatch")
    return pts, single


class Nonlinearity:
    """Base class; subclasses implement _values(X, pts) -> (m,) array."""

    lam: float
    Lam: float
    kappa: float
    dim: int
    domain: Domain | None

    def __call__(self, X, x):
        X = np.asarray(X, dtype=float)
        pts, single = _batch_points(x, self.dim)
        vals = self._values(X, pts)
        return float(vals[0]) if single else vals

    @property
    def x_independent(self) -> bool:
        return False

    @property
    def normalized(self) -> bool:
        """Whether F(0, x) = 0 holds identically."""
        return True

    def apply_hessians(self, Xs, xs):
        """F(Xs[i], xs[i]) for batches; used to manufacture right-hand sides."""
        raise NotImplementedError


@dataclass(eq=False)
class LinearVC(Nonlinearity):
    """Variable-coefficient linear operator F(X, x) = tr(a(x) X), drift free."""

    coeff: MatrixField
    domain: Domain
    lam: float = field(init=False)
    Lam: float = field(init=False)
    kappa: float = field(init=False)

    def __post_init__(self):
        self.dim = self.coeff.dim
        lo, hi = self.coeff.eig_bounds(self.domain)
        if lo <= 0:
            raise ValueError(f"coefficient field is not uniformly elliptic (min eig {lo})")
        self.lam = lo
        self.Lam = self.dim * hi
        self.kappa = np.sqrt(self.dim) * self.coeff.lip_fro

    @property
    def x_independent(self) -> bool:
        return self.coeff.x_independent

    def _values(self, X, pts):
        A = self.coeff(pts)
        return np.einsum("mij,ij->m", A, X)

    def apply_hessians(self, Xs, xs):
        A = self.coeff(np.atleast_2d(xs))
        return np.einsum("mij,mij->m", A, np.asarray(Xs, float))


@dataclass(eq=False)
class Pucci(Nonlinearity):
    """Extremal operator with parameters (lam0, Lam0).

    sign=+1 is the maximal operator Lam0 * sum(e_i^+) - lam0 * sum(e_i^-),
    sign=-1 the minimal one; e_i are the eigenvalues of X.
    """

    lam0: float
    Lam0: float
    sign: int
    dim: int
    domain: Domain | None = None

    def __post_init__(self):
        if not (0 < self.lam0 <= self.Lam0):
            raise ValueError("need 0 < lam0 <= Lam0")
        if self.sign not in (-1, 1):
            raise ValueError("sign must be +1 or -1")
        self.lam = self.lam0
        self.Lam = self.dim * self.Lam0
        self.kappa = 0.0

    @property
    def x_independent(self) -> bool:
        return True

    def _eval_one(self, X):
        e = np.linalg.eigvalsh(sym(X))
        pos = e[e > 0].sum()
        neg = e[e < 0].sum()
        if self.sign > 0:
            return self.Lam0 * pos + self.lam0 * neg
        return self.lam0 * pos + self.Lam0 * neg

    def _values(self, X, pts):
        return np.full(pts.shape[0], self._eval_one(X))

    def apply_hessians(self, Xs, xs):
        Xs = np.asarray(Xs, dtype=float)
        e = np.linalg.eigvalsh(0.5 * (Xs + np.swapaxes(Xs, 1, 2)))
        pos = np.where(e > 0, e, 0.0).sum(axis=1)
        neg = np.where(e < 0, e, 0.0).sum(axis=1)
        if self.sign > 0:
            return self.Lam0 * pos + self.lam0 * neg
        return self.lam0 * pos + self.Lam0 * neg


@dataclass(eq=False)
class Isaacs(Nonlinearity):
    """Finite-control sup-inf of linear operators:

        F(X, x) = max_a min_b { tr(coeffs[a][b](x) X) + runnings[a][b](x) }.
    """

    coeffs: tuple          # (na, nb) nested tuples of MatrixField
    domain: Domain
    runnings: tuple = None  # matching nested tuples of ScalarField, or None

    def __post_init__(self):
        self.na = len(self.coeffs)
        self.nb = len(self.coeffs[0])
        self.dim = self.coeffs[0][0].dim
        los, his, kaps = [], [], []
        for a in range(self.na):
            for b in range(self.nb):
                lo, hi = self.coeffs[a][b].eig_bounds(self.domain)
                if lo <= 0:
                    raise ValueError(
                        f"control pair ({a},{b}) is not uniformly elliptic (min eig {lo})"
                    )
                los.append(lo)
                his.append(hi)
                run_lip = 0.0
                if self.runnings is not None:
                    run_lip = self.runnings[a][b].lip or 0.0
                kaps.append(max(np.sqrt(self.dim) * self.coeffs[a][b].lip_fro, run_lip))
        self.lam = min(los)
        self.Lam = self.dim * max(his)
        self.kappa = max(kaps)

    @property
    def x_independent(self) -> bool:
        coeff_const = all(c.x_independent for row in self.coeffs for c in row)
        if self.runnings is None:
            return coeff_const
        run_const = all((r.lip or 1.0) == 0.0 for row in self.runnings for r in row)
        return coeff_const and run_const

    @property
    def normalized(self) -> bool:
        return self.runnings is None

    def pair_fields(self):
        for a in range(self.na):
            for b in range(self.nb):
                run = None if self.runnings is None else self.runnings[a][b]
                yield a, b, self.coeffs[a][b], run

    def _values(self, X, pts):
        m = pts.shape[0]
        vals = np.empty((self.na, self.nb, m))
        for a, b, cf, run in self.pair_fields():
            v = np.einsum("mij,ij->m", cf(pts), X)
            if run is not None:
                v = v + run(pts)
            vals[a, b] = v
        return vals.min(axis=1).max(axis=0)

    def apply_hessians(self, Xs, xs):
        Xs = np.asarray(Xs, dtype=float)
        pts = np.atleast_2d(xs)
        m = pts.shape[0]
        vals = np.empty((self.na, self.nb, m))
        for a, b, cf, run in self.pair_fields():
            v = np.einsum("mij,mij->m", cf(pts), Xs)
            if run is not None:
                v = v + run(pts)
            vals[a, b] = v
        return vals.min(axis=1).max(axis=0)


def make_linear(coeff: MatrixField, domain: Domain) -> LinearVC:
    return LinearVC(coeff, domain)


def make_isaacs(coeffs, domain: Domain, runnings=None) -> Isaacs:
    coeffs = tuple(tuple(row) for row in coeffs)
    if runnings is not None:
        runnings = tuple(tuple(row) for row in runnings)
    return Isaacs(coeffs, domain, runnings)


def pucci(lam: float, Lam: float, sign: int, dim: int, domain=None) -> Pucci:
    return Pucci(lam, Lam, sign, dim, domain)


def ball_offsets(dim: int, eps: float, spacing: float) -> np.ndarray:
    """Sub-lattice of the closed eps-ball with the given spacing, 0 included,
    sorted lexicographically."""
    if eps == 0:
        return np.zeros((1, dim))
    k = int(np.floor(eps / spacing + 1e-12))
    ranges = [np.arange(-k, k + 1)] * dim
    grid = np.stack(np.meshgrid(*ranges, indexing="ij"), -1).reshape(-1, dim)
    offs = grid * spacing
    keep = np.linalg.norm(offs, axis=1) <= eps + 1e-12 * max(eps, 1.0)
    return offs[keep]


@dataclass(eq=False)
class PerturbedNonlinearity(Nonlinearity):
    """Extremum of F(X, .) over a sub-lattice of the eps-ball around x.

    mode 'inf' realizes F_eps(X, x) = inf over B_eps(x) cap U of F(X, y),
    mode 'sup' the matching sup. The sub-lattice always contains y = x, so
    the inf(sup) is an upper (lower) approximation with error at most
    kappa * (|X| + 1) * spacing by the Lipschitz property of F in x.
    Ellipticity constants are inherited from the base operator.
    """

    base: Nonlinearity
    eps: float
    mode: str
    resolution: float
    offsets: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.eps < 0:
            raise ValueError("eps must be nonnegative")
        if self.mode not in ("inf", "sup"):
            raise ValueError("mode must be 'inf' or 'sup'")
        self.dim = self.base.dim
        self.domain = self.base.domain
        self.lam = self.base.lam
        self.Lam = self.base.Lam
        self.kappa = self.base.kappa
        self.offsets = ball_offsets(self.dim, self.eps, self.resolution)

    @property
    def x_independent(self) -> bool:
        return self.base.x_independent

    def _values(self, X, pts):
        out = np.empty(pts.shape[0])
        reduce = np.min if self.mode == "inf" else np.max
        for i, p in enumerate(pts):
            ys = p + self.offsets
            ok = self.domain.contains(ys, tol=1e-12 * max(1.0, self.domain.diameter))
            out[i] = reduce(self.base._values(X, ys[ok]))
        return out

    def apply_hessians(self, Xs, xs):
        Xs = np.asarray(Xs, dtype=float)
        pts = np.atleast_2d(np.asarray(xs, dtype=float))
        return np.array([self(Xs[i], pts[i]) for i in range(pts.shape[0])])


def perturb_inf(F: Nonlinearity, eps: float, resolution: float = None) -> Nonlinearity:
    """inf of F(X, .) over the eps-ball, sampled on a sub-lattice.

    Default sub-lattice spacing is eps / 8. For x-independent operators the
    perturbation changes nothing and F itself is returned.
    """
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    if F.x_independent or eps == 0:
        return F
    if F.domain is None:
        raise ValueError("perturbation needs the operator's domain")
    res = eps / 8.0 if resolution is None else float(resolution)
    if res <= 0:
        raise ValueError("resolution must be positive")
    return PerturbedNonlinearity(F, float(eps), "inf", res)


def perturb_sup(F: Nonlinearity, eps: float, resolution: float = None) -> Nonlinearity:
    """sup analogue of perturb_inf."""
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    if F.x_independent or eps == 0:
        return F
    if F.domain is None:
        raise ValueError("perturbation needs the operator's domain")
    res = eps / 8.0 if resolution is None else float(resolution)
    if res <= 0:
        raise ValueError("resolution must be positive")
    return PerturbedNonlinearity(F, float(eps), "sup", res)


def _field_extremum(f: ScalarField, eps: float, domain: Domain, resolution, mode) -> ScalarField:
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    if eps == 0 or (f.lip is not None and f.lip == 0.0):
        return f
    res = eps / 8.0 if resolution is None else float(resolution)
    offs = ball_offsets(domain.dim, eps, res)
    tol = 1e-12 * max(1.0, domain.diameter)
    reduce = np.min if mode == "inf" else np.max

    def fn(pts):
        out = np.empty(pts.shape[0])
        for i, p in enumerate(pts):
            ys = p + offs
            ok = domain.contains(ys, tol=tol)
            out[i] = reduce(np.asarray(f.fn(ys[ok]), dtype=float))
        return out

    # inf/sup over translates keeps the Lipschitz constant
    return ScalarField(name=f"{f.name}_{mode}{eps:g}", fn=fn, lip=f.lip)


def field_inf(f: ScalarField, eps: float, domain: Domain, resolution: float = None) -> ScalarField:
    """inf of f over the eps-ball intersected with the domain (sub-lattice)."""
    return _field_extremum(f, eps, domain, resolution, "inf")


def field_sup(f: ScalarField, eps: float, domain: Domain, resolution: float = None) -> ScalarField:
    """sup analogue of field_inf."""
    return _field_extremum(f, eps, domain, resolution, "sup")


@dataclass
class EllipticityReport:
    trials: int
    violations: int
    worst_margin: float
    examples: list
    lam: float
    Lam: float

    @property
    def passed(self) -> bool:
        return self.violations == 0


def _random_point(domain: Domain, rng) -> np.ndarray:
    lo, hi = domain.bounding_box()
    for _ in range(1000):
        p = rng.uniform(lo, hi)
        if bool(domain.contains(p[None, :])[0]):
            return p
    raise RuntimeError("failed to sample a point inside the domain")


def check_ellipticity(F: Nonlinearity, trials: int, seed: int) -> EllipticityReport:
    """Sample random (X, x, Y >= 0) and test the two-sided increment bound.

    Y is a random Gram matrix, alternating rank one and full rank so that
    both extreme shapes are exercised. Violations are reported, not raised.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    rng = np.random.default_rng(seed)
    n = F.dim
    domain = F.domain
    violations = 0
    worst = 0.0
    examples = []
    for t in range(trials):
        X = sym(rng.normal(size=(n, n)) * rng.uniform(0.1, 3.0))
        x = _random_point(domain, rng) if domain is not None else rng.uniform(-1, 1, n)
        rank = 1 if t % 2 == 0 else n
        G = rng.normal(size=(n, rank))
        Y = G @ G.T * rng.uniform(0.1, 2.0)
        ny = spectral_norm(Y)
        if ny < 1e-14:
            continue
        inc = F(X + Y, x) - F(X, x)
        slack = 1e-9 * (1.0 + F.Lam * ny)
        low_gap = F.lam * ny - inc
        high_gap = inc - F.Lam * ny
        gap = max(low_gap, high_gap)
        if gap > slack:
            violations += 1
            worst = max(worst, gap)
            if len(examples) < 10:
                examples.append({"trial": t, "gap": float(gap), "increment": float(inc),
                                 "norm_Y": float(ny)})
    return EllipticityReport(trials, violations, worst, examples, F.lam, F.Lam)
