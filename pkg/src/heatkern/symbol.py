"""Operator data of a noncommutative Dirac operator on a single chart.

A :class:`DiracSymbol` bundles the Dirac matrices ``Gamma^mu(x)``, the
density ``rho(x)`` and the connection ``B_mu(x)``.  From it we build the
endomorphism-valued metric ``a^{mu nu}``, the leading symbol
``H = Gamma(xi)^2``, an ellipticity verdict, coefficient jets and the frozen
boundary matrices ``A, B, C``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import optimize

from .algebra import hermitian_defect
from .errors import ConfigurationError, DomainError, EllipticityError, ValidationError

SELF_ADJOINT_TOL = 1e-10
POSITIVITY_THRESHOLD = 1e-8


# ---------------------------------------------------------------------------
# matrix fields


class MatrixField:
    """Map from chart points in R^n to N x N complex matrices."""

    n: int
    N: int

    def __call__(self, x) -> np.ndarray:
        raise NotImplementedError

    @property
    def has_derivatives(self) -> bool:
        return False

    def derivatives(self, x):
        """Return ``(value, grad, hess)`` with shapes (N,N), (n,N,N), (n,n,N,N)."""
        raise NotImplementedError(f"{type(self).__name__} has no analytic derivatives")


class PolynomialField(MatrixField):
    """Polynomial with matrix coefficients, ``sum_alpha M_alpha x^alpha``.

    ``terms`` maps exponent tuples of length ``n`` to N x N matrices.  Total
    degree is capped at 4 so that jets and tests stay exact.
    """

    MAX_DEGREE = 4

    def __init__(self, n: int, N: int, terms: dict):
        self.n = int(n)
        self.N = int(N)
        self.terms: dict[tuple[int, ...], np.ndarray] = {}
        for alpha, M in terms.items():
            alpha = tuple(int(a) for a in alpha)
            if len(alpha) != self.n or min(alpha, default=0) < 0:
                raise ValidationError(f"exponent {alpha} does not match dimension n={self.n}")
            if sum(alpha) > self.MAX_DEGREE:
                raise ValidationError(f"exponent {alpha} exceeds total degree {self.MAX_DEGREE}")
            M = np.asarray(M, dtype=complex)
            if M.shape != (self.N, self.N):
                raise ValidationError(f"coefficient for {alpha} has shape {M.shape}, expected {(self.N, self.N)}")
            self.terms[alpha] = self.terms.get(alpha, 0) + M

    @classmethod
    def constant(cls, M, n: int) -> "PolynomialField":
        M = np.asarray(M, dtype=complex)
        return cls(n, M.shape[0], {(0,) * n: M})

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros((self.N, self.N), complex)
        for alpha, M in self.terms.items():
            out += M * float(np.prod(x ** np.asarray(alpha)))
        return out

    @property
    def has_derivatives(self) -> bool:
        return True

    def derivatives(self, x):
        x = np.asarray(x, dtype=float)
        n, N = self.n, self.N
        val = np.zeros((N, N), complex)
        grad = np.zeros((n, N, N), complex)
        hess = np.zeros((n, n, N, N), complex)
        for alpha, M in self.terms.items():
            a = np.asarray(alpha)
            val += M * _monomial(x, a)
            for i in range(n):
                if a[i] == 0:
                    continue
                ai = a.copy()
                ai[i] -= 1
                grad[i] += M * a[i] * _monomial(x, ai)
                for j in range(n):
                    if ai[j] == 0:
                        continue
                    aij = ai.copy()
                    aij[j] -= 1
                    hess[i, j] += M * a[i] * ai[j] * _monomial(x, aij)
        return val, grad, hess


def _monomial(x, a) -> float:
    return float(np.prod(x ** a))


class FunctionField(MatrixField):
    """Field given by Python callables; derivative rules are optional."""

    def __init__(self, n: int, N: int, func: Callable, grad: Callable | None = None,
                 hess: Callable | None = None):
        self.n, self.N = int(n), int(N)
        self.func = func
        self.grad = grad
        self.hess = hess

    def __call__(self, x) -> np.ndarray:
        return np.asarray(self.func(np.asarray(x, dtype=float)), dtype=complex).reshape(self.N, self.N)

    @property
    def has_derivatives(self) -> bool:
        return self.grad is not None and self.hess is not None

    def derivatives(self, x):
        if not self.has_derivatives:
            return super().derivatives(x)
        x = np.asarray(x, dtype=float)
        g = np.asarray(self.grad(x), dtype=complex).reshape(self.n, self.N, self.N)
        h = np.asarray(self.hess(x), dtype=complex).reshape(self.n, self.n, self.N, self.N)
        return self(x), g, h


def _as_field(obj, n: int, N: int | None = None) -> MatrixField:
    if isinstance(obj, MatrixField):
        return obj
    M = np.asarray(obj, dtype=complex)
    if M.ndim != 2:
        raise ValidationError(f"expected a matrix or MatrixField, got shape {M.shape}")
    return PolynomialField.constant(M, n)


# ---------------------------------------------------------------------------
# the symbol


@dataclass(frozen=True)
class DiracSymbol:
    """Dirac matrices, density and connection over a box-shaped chart.

    ``lo``/``hi`` bound the domain box.  Construction samples the box corners
    and centre and checks self-adjointness of ``Gamma^mu`` and ``rho``,
    invertibility of ``rho`` and anti-self-adjointness of ``B_mu``.
    """

    gamma: tuple
    rho: MatrixField
    conn: tuple
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        n = len(self.gamma)
        if n < 1:
            raise ValidationError("at least one Dirac matrix is required")
        N = self.gamma[0].N
        for name, fields in (("gamma", self.gamma), ("conn", self.conn)):
            if len(fields) != n:
                raise ValidationError(f"{name} needs {n} components, got {len(fields)}")
            for f in fields:
                if f.n != n or f.N != N:
                    raise ValidationError(f"{name} component has (n, N) = ({f.n}, {f.N}), expected ({n}, {N})")
        if self.rho.n != n or self.rho.N != N:
            raise ValidationError("rho has inconsistent dimensions")
        lo = np.asarray(self.lo, float).reshape(n)
        hi = np.asarray(self.hi, float).reshape(n)
        if np.any(hi <= lo):
            raise ValidationError("domain box must satisfy lo < hi componentwise")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        for x in self.sample_points(3):
            self._check_point(x)

    @classmethod
    def build(cls, gamma: Sequence, rho=None, conn=None, lo=None, hi=None) -> "DiracSymbol":
        """Convenience constructor accepting constant matrices or fields."""
        first = gamma[0]
        n = len(gamma)
        N = first.N if isinstance(first, MatrixField) else np.asarray(first).shape[0]
        g = tuple(_as_field(G, n) for G in gamma)
        r = _as_field(np.eye(N) if rho is None else rho, n)
        b = tuple(_as_field(np.zeros((N, N)) if conn is None else c, n)
                  for c in (conn if conn is not None else [None] * n))
        lo = -np.ones(n) if lo is None else lo
        hi = np.ones(n) if hi is None else hi
        return cls(g, r, b, lo, hi)

    @property
    def n(self) -> int:
        return len(self.gamma)

    @property
    def N(self) -> int:
        return self.gamma[0].N

    def sample_points(self, per_axis: int) -> np.ndarray:
        axes = [np.linspace(a, b, per_axis) for a, b in zip(self.lo, self.hi)]
        return np.array(list(itertools.product(*axes)), dtype=float)

    def contains(self, x, margin: float = 0.0) -> bool:
        x = np.asarray(x, float)
        tol = 1e-12 * (1.0 + np.abs(x))
        return bool(np.all(x >= self.lo + margin - tol) and np.all(x <= self.hi - margin + tol))

    def require(self, x) -> np.ndarray:
        x = np.asarray(x, float).reshape(-1)
        if x.shape != (self.n,):
            raise ValidationError(f"point must have {self.n} coordinates, got {x.shape[0]}")
        if not self.contains(x):
            raise DomainError(f"point {x.tolist()} lies outside the domain box [{self.lo.tolist()}, {self.hi.tolist()}]")
        return x

    def _check_point(self, x):
        for mu, G in enumerate(self.gamma):
            M = G(x)
            if hermitian_defect(M) > SELF_ADJOINT_TOL * max(1.0, np.max(np.abs(M))):
                raise ValidationError(f"Gamma^{mu + 1} is not self-adjoint at x={x.tolist()}")
        R = self.rho(x)
        if hermitian_defect(R) > SELF_ADJOINT_TOL * max(1.0, np.max(np.abs(R))):
            raise ValidationError(f"rho is not self-adjoint at x={x.tolist()}")
        if abs(np.linalg.det(R)) <= 1e-10:
            raise ValidationError(f"rho is degenerate at x={x.tolist()}")
        for mu, Bf in enumerate(self.conn):
            M = Bf(x)
            if np.max(np.abs(M + M.conj().T), initial=0.0) > SELF_ADJOINT_TOL * max(1.0, np.max(np.abs(M))):
                raise ValidationError(f"B_{mu + 1} is not anti-self-adjoint at x={x.tolist()}")

    def gammas(self, x) -> np.ndarray:
        """Stack of ``Gamma^mu(x)`` with shape (n, N, N)."""
        return np.stack([G(x) for G in self.gamma])

    def gamma_of(self, x, xi) -> np.ndarray:
        """``Gamma(xi) = Gamma^mu xi_mu``."""
        x = self.require(x)
        xi = np.asarray(xi, dtype=float).reshape(self.n)
        return np.einsum("m,mab->ab", xi, self.gammas(x))

    def direct_sum(self, other: "DiracSymbol") -> "DiracSymbol":
        """Block-diagonal symbol acting on the direct sum of both fibres."""
        if other.n != self.n:
            raise ValidationError("direct sum needs equal base dimension")
        n = self.n

        def blk(f1, f2):
            return FunctionField(n, f1.N + f2.N, lambda x: _blockdiag(f1(x), f2(x)),
                                 (lambda x: _blockdiag_stack(f1.derivatives(x)[1], f2.derivatives(x)[1]))
                                 if f1.has_derivatives and f2.has_derivatives else None,
                                 (lambda x: _blockdiag_stack(f1.derivatives(x)[2], f2.derivatives(x)[2]))
                                 if f1.has_derivatives and f2.has_derivatives else None)

        lo = np.maximum(self.lo, other.lo)
        hi = np.minimum(self.hi, other.hi)
        return DiracSymbol(tuple(blk(a, b) for a, b in zip(self.gamma, other.gamma)),
                           blk(self.rho, other.rho),
                           tuple(blk(a, b) for a, b in zip(self.conn, other.conn)), lo, hi)


def _blockdiag(P, Q):
    out = np.zeros((P.shape[0] + Q.shape[0],) * 2, complex)
    out[:P.shape[0], :P.shape[0]] = P
    out[P.shape[0]:, P.shape[0]:] = Q
    return out


def _blockdiag_stack(P, Q):
    lead = P.shape[:-2]
    a, b = P.shape[-1], Q.shape[-1]
    out = np.zeros(lead + (a + b, a + b), complex)
    out[..., :a, :a] = P
    out[..., a:, a:] = Q
    return out


def build_metric(sym: DiracSymbol, x) -> np.ndarray:
    """``a^{mu nu} = (Gamma^mu Gamma^nu + Gamma^nu Gamma^mu)/2``, shape (n, n, N, N)."""
    x = sym.require(x)
    G = sym.gammas(x)
    prod = np.einsum("mab,nbc->mnac", G, G)
    return 0.5 * (prod + prod.transpose(1, 0, 2, 3))


def build_H(sym: DiracSymbol, x, xi) -> np.ndarray:
    """Leading symbol ``H(x, xi) = Gamma(xi)^2``."""
    G = sym.gamma_of(x, xi)
    return G @ G


# ---------------------------------------------------------------------------
# ellipticity


@dataclass(frozen=True)
class EllipticityVerdict:
    elliptic: bool
    min_eigenvalue: float
    witness_x: np.ndarray
    witness_xi: np.ndarray
    threshold: float
    samples: int
    refined_min: float | None = None

    def as_dict(self) -> dict:
        return {
            "elliptic": self.elliptic,
            "min_eigenvalue": self.min_eigenvalue,
            "refined_min_eigenvalue": self.refined_min,
            "witness": {"x": self.witness_x.tolist(), "xi": self.witness_xi.tolist()},
            "threshold": self.threshold,
            "samples": self.samples,
        }


def sphere_directions(n: int, count: int) -> np.ndarray:
    """Quasi-uniform unit covectors, one per antipodal pair (H is even in xi)."""
    if n == 1:
        return np.ones((1, 1))
    if n == 2:
        th = np.pi * np.arange(count) / count
        return np.stack([np.cos(th), np.sin(th)], axis=1)
    if n == 3:
        # Fibonacci lattice on the upper hemisphere
        k = np.arange(count) + 0.5
        z = k / count
        phi = np.pi * (1 + 5**0.5) * k
        s = np.sqrt(1 - z**2)
        return np.stack([s * np.cos(phi), s * np.sin(phi), z], axis=1)
    rng = np.random.default_rng(12345)
    v = rng.normal(size=(count, n))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _min_eigs(sym: DiracSymbol, xs: np.ndarray, dirs: np.ndarray):
    best = (np.inf, None, None)
    for x in xs:
        G = sym.gammas(x)
        Gx = np.einsum("km,mab->kab", dirs, G)
        lam = np.linalg.eigvalsh(Gx @ Gx)[:, 0]
        k = int(np.argmin(lam))
        if lam[k] < best[0]:
            best = (float(lam[k]), x.copy(), dirs[k].copy())
    return best


def _local_directions(xi: np.ndarray, spread: float, count: int = 21) -> np.ndarray:
    n = xi.shape[0]
    if n == 1:
        return xi.reshape(1, 1)
    # orthonormal tangent frame at xi
    Q, _ = np.linalg.qr(np.column_stack([xi, np.eye(n)]))
    T = Q[:, 1:n]
    offs = np.linspace(-spread, spread, count)
    grid = np.array(list(itertools.product(offs, repeat=n - 1)))
    v = xi[None, :] + grid @ T.T
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _polish_direction(sym: DiracSymbol, x, xi):
    """Nelder-Mead on tangent offsets of the unit direction at fixed x."""
    n = xi.shape[0]
    Q, _ = np.linalg.qr(np.column_stack([xi, np.eye(n)]))
    T = Q[:, 1:n]
    G = sym.gammas(x)

    def unit(p):
        v = xi + T @ p
        return v / np.linalg.norm(v)

    def lam_min(p):
        Gx = np.einsum("m,mab->ab", unit(p), G)
        return float(np.linalg.eigvalsh(Gx @ Gx)[0])

    res = optimize.minimize(lam_min, np.zeros(n - 1), method="Nelder-Mead",
                            options={"xatol": 1e-10, "fatol": 1e-16, "maxiter": 400})
    return float(res.fun), unit(res.x)


def pointwise_min_eigenvalue(sym: DiracSymbol, x, directions: int = 256) -> tuple[float, np.ndarray]:
    """Smallest eigenvalue of ``H(x, .)`` on the unit sphere at one point, polished."""
    x = np.asarray(x, float)
    lam, _, xi = _min_eigs(sym, x[None, :], sphere_directions(sym.n, directions))
    if sym.n > 1:
        pl, pxi = _polish_direction(sym, x, xi)
        if pl < lam:
            lam, xi = pl, pxi
    return lam, xi


def ellipticity_check(sym: DiracSymbol, directions: int = 512, grid: int = 8,
                      threshold: float = POSITIVITY_THRESHOLD, refine: bool = True,
                      raise_on_failure: bool = False) -> EllipticityVerdict:
    """Sample ``lambda_min(H(x, xi))`` over domain grid x unit sphere.

    Positive homogeneity of degree two means unit covectors suffice.  After the
    coarse pass one local pass with ten-fold finer spacing is run around the
    minimiser.  This is a sampling heuristic, not a proof.
    """
    if directions < 1 or grid < 1:
        raise ConfigurationError("ellipticity sample grid is empty")
    xs = sym.sample_points(grid) if grid > 1 else ((sym.lo + sym.hi) / 2)[None, :]
    dirs = sphere_directions(sym.n, directions)
    lam, wx, wxi = _min_eigs(sym, xs, dirs)
    samples = len(xs) * len(dirs)
    refined = None
    if refine:
        dx = (sym.hi - sym.lo) / max(grid - 1, 1)
        axes = [np.clip(np.linspace(c - d, c + d, 11), a, b)
                for c, d, a, b in zip(wx, dx, sym.lo, sym.hi)]
        local_x = np.array(list(itertools.product(*axes)))
        spread = math.pi / max(directions, 1) * (2 if sym.n == 2 else 4)
        local_dirs = _local_directions(wxi, spread)
        rl, rx, rxi = _min_eigs(sym, local_x, local_dirs)
        samples += len(local_x) * len(local_dirs)
        if rl < lam:
            lam, wx, wxi = rl, rx, rxi
        if sym.n > 1:
            pl, pxi = _polish_direction(sym, wx, wxi)
            samples += 1
            if pl < lam:
                lam, wxi = pl, pxi
        refined = lam
    verdict = EllipticityVerdict(bool(lam > threshold), float(lam), wx, wxi, threshold, samples, refined)
    if raise_on_failure and not verdict.elliptic:
        raise EllipticityError(
            f"symbol not elliptic: min eigenvalue {lam:.3e} at x={wx.tolist()}, xi={wxi.tolist()}",
            witness=(wx, wxi),
        )
    return verdict


# ---------------------------------------------------------------------------
# boundary split


@dataclass(frozen=True)
class BoundaryChart:
    """Collar frame at one boundary point: ``dr`` and tangential ``dxhat^j``.

    Covectors are given in the ambient coordinate basis; ``dxhat`` has shape
    (n-1, n).
    """

    point: np.ndarray
    dr: np.ndarray
    dxhat: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.point, float).reshape(-1)
        n = p.shape[0]
        dr = np.asarray(self.dr, float).reshape(n)
        dx = np.asarray(self.dxhat, float).reshape(n - 1, n)
        object.__setattr__(self, "point", p)
        object.__setattr__(self, "dr", dr)
        object.__setattr__(self, "dxhat", dx)


def coordinate_chart(point, normal_axis: int = 0, orientation: float = 1.0) -> BoundaryChart:
    """Chart with ``r = orientation * x^normal_axis``; remaining axes tangential."""
    p = np.asarray(point, float).reshape(-1)
    n = p.shape[0]
    E = np.eye(n)
    tang = [E[i] for i in range(n) if i != normal_axis]
    return BoundaryChart(p, orientation * E[normal_axis], np.array(tang).reshape(n - 1, n))


@dataclass(frozen=True)
class BoundarySplit:
    """Frozen boundary matrices with ``H(omega) = (A omega + C)^2 = A^2 w^2 + B w + C^2``."""

    A: np.ndarray
    C: np.ndarray
    B: np.ndarray = field(default=None)
    point: np.ndarray | None = None
    xi_hat: np.ndarray | None = None

    def __post_init__(self):
        A = np.asarray(self.A, complex)
        C = np.asarray(self.C, complex)
        if A.ndim != 2 or A.shape != C.shape or A.shape[0] != A.shape[1]:
            raise ValidationError("A and C must be square matrices of equal size")
        for name, M in (("A", A), ("C", C)):
            if hermitian_defect(M) > SELF_ADJOINT_TOL * max(1.0, np.max(np.abs(M))):
                raise ValidationError(f"boundary matrix {name} is not self-adjoint")
        s = np.linalg.svd(A, compute_uv=False)
        if s[-1] <= 1e-10 * max(s[0], 1.0):
            raise EllipticityError("normal direction degenerate: A = Gamma(dr) is singular",
                                   witness=(self.point, self.xi_hat))
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "B", A @ C + C @ A)

    @property
    def N(self) -> int:
        return self.A.shape[0]

    @property
    def A2(self) -> np.ndarray:
        return self.A @ self.A

    @property
    def C2(self) -> np.ndarray:
        return self.C @ self.C

    def symbol(self, omega: float) -> np.ndarray:
        return self.A2 * omega**2 + self.B * omega + self.C2

    def scaled(self, s: float) -> "BoundarySplit":
        """Split for tangential covector ``s * xi_hat`` (C scales linearly)."""
        return BoundarySplit(self.A, s * self.C, None, self.point,
                             None if self.xi_hat is None else s * self.xi_hat)


def boundary_split(sym: DiracSymbol, chart: BoundaryChart, xi_hat) -> BoundarySplit:
    """``A = Gamma(dr)``, ``C = Gamma(dxhat^j) xi_hat_j`` and ``B = AC + CA`` at the chart point."""
    x = sym.require(chart.point)
    xi_hat = np.atleast_1d(np.asarray(xi_hat, float))
    if xi_hat.shape != (sym.n - 1,):
        raise ValidationError(f"tangential covector needs {sym.n - 1} components")
    G = sym.gammas(x)
    A = np.einsum("m,mab->ab", chart.dr, G)
    C = np.einsum("m,mab->ab", xi_hat @ chart.dxhat, G) if sym.n > 1 else np.zeros_like(A)
    return BoundarySplit(A, C, None, x, xi_hat)


# ---------------------------------------------------------------------------
# jets


@dataclass(frozen=True)
class JetData:
    """Values, first and second derivatives of all coefficient fields at ``x``.

    ``gamma[k]`` holds derivative order k for every Dirac matrix: shapes
    (n,N,N), (n,n,N,N), (n,n,n,N,N) with the field index first.  ``rho`` drops
    the field index.  ``conn`` mirrors ``gamma``.
    """

    x: np.ndarray
    gamma: tuple
    rho: tuple
    conn: tuple
    method: str

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def N(self) -> int:
        return self.rho[0].shape[0]


def _fd_jet(f: MatrixField, x: np.ndarray, h: float):
    n = x.shape[0]
    E = np.eye(n) * h
    f0 = f(x)
    grad = np.zeros((n,) + f0.shape, complex)
    hess = np.zeros((n, n) + f0.shape, complex)
    plus = [f(x + E[i]) for i in range(n)]
    minus = [f(x - E[i]) for i in range(n)]
    for i in range(n):
        grad[i] = (plus[i] - minus[i]) / (2 * h)
        hess[i, i] = (plus[i] - 2 * f0 + minus[i]) / h**2
        for j in range(i + 1, n):
            v = (f(x + E[i] + E[j]) - f(x + E[i] - E[j]) - f(x - E[i] + E[j]) + f(x - E[i] - E[j])) / (4 * h * h)
            hess[i, j] = hess[j, i] = v
    return f0, grad, hess


def jets_at(sym: DiracSymbol, x, h: float | None = None, method: str = "auto") -> JetData:
    """Coefficient jets at ``x``.

    ``method="fd"`` uses second-order central differences with step
    ``h = 1e-4 (1 + |x|)``; ``"analytic"`` requires derivative rules on every
    field; ``"auto"`` picks analytic when available.
    """
    x = sym.require(x)
    fields = list(sym.gamma) + [sym.rho] + list(sym.conn)
    if method not in ("auto", "fd", "analytic"):
        raise ValidationError(f"unknown jet method {method!r}")
    analytic = all(f.has_derivatives for f in fields)
    if method == "analytic" and not analytic:
        raise ConfigurationError("analytic jets requested but a field lacks derivative rules")
    use_analytic = analytic and method != "fd"
    if use_analytic:
        jets = [f.derivatives(x) for f in fields]
        tag = "analytic"
    else:
        h = 1e-4 * (1.0 + float(np.linalg.norm(x))) if h is None else float(h)
        if not sym.contains(x, margin=2 * h):
            raise DomainError(f"point {x.tolist()} is closer than 2h={2 * h:.2e} to the domain boundary")
        jets = [_fd_jet(f, x, h) for f in fields]
        tag = "fd"
    n = sym.n

    def stack(block):
        return tuple(np.stack([j[k] for j in block]) for k in range(3))

    return JetData(x, stack(jets[:n]), tuple(jets[n]), stack(jets[n + 1:]), tag)
