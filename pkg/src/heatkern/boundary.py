"""Boundary resolvent slice and the boundary heat invariant A1.

For a frozen split ``(A, C)`` the normal symbol is
``R(omega) = ((A omega + C)^2 - lam)^{-1}``.  Its Fourier transform
``Phi(lam, y)`` is evaluated by closing the omega contour on the roots of the
quadratic pencil ``A^2 w^2 + B w + C^2 - lam``, so ``Phi0 = Phi(lam, 0)`` is
``i`` times the sum of upper half-plane residues.

The boundary density needs
``Psi1 = -sqrt(pi) int dlam/(2 pi i) e^{-lam} tr(Phi0^{-1} d_lam Phi0)`` over a
vertical line left of the spectrum.  The line is deformed into a parabola
around the positive real axis where ``e^{-lam}`` decays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as sla
from scipy.integrate import quad_vec

from .algebra import PencilSpectrum, matrix_exp, matrix_sqrt_analytic, pencil_roots
from .errors import (
    ContourPlacementError,
    CrossValidationError,
    EllipticityError,
    NearSpectrumError,
    ValidationError,
)
from .parallel import ordered_map
from .quadrature import polar_rule
from .symbol import BoundaryChart, BoundarySplit, DiracSymbol, boundary_split

SQRT_PI = math.sqrt(math.pi)


def resolvent_symbol(split: BoundarySplit, lam: complex, omega: complex) -> np.ndarray:
    """``((A omega + C)^2 - lam)^{-1}`` by direct inversion."""
    P = split.symbol(omega) - lam * np.eye(split.N)
    s = np.linalg.svd(P, compute_uv=False)
    if s[-1] <= 1e-12 * max(s[0], 1.0):
        raise NearSpectrumError(f"symbol minus lam is singular at omega={omega}, lam={lam}")
    return np.linalg.inv(P)


def spectrum(split: BoundarySplit, lam: complex) -> PencilSpectrum:
    spec = pencil_roots(split.A2, split.B, split.C2, lam)
    if np.any(np.abs(spec.roots.imag) < 1e-12 * (1 + np.abs(spec.roots))):
        raise NearSpectrumError(f"pencil has a real root at lam={lam}; lam lies in the boundary spectrum")
    return spec


# ---------------------------------------------------------------------------
# Phi and Phi0


def phi(split: BoundarySplit, lam: complex, y: float, spec: PencilSpectrum | None = None) -> np.ndarray:
    """``Phi(lam, y) = int d omega/(2 pi) e^{i omega y} R(omega)`` by residues."""
    spec = spec or spectrum(split, lam)
    up = spec.upper
    if y >= 0:
        ph = np.exp(1j * spec.roots[up] * y)
        return 1j * np.einsum("j,jab->ab", ph, spec.residues[up])
    ph = np.exp(1j * spec.roots[~up] * y)
    return -1j * np.einsum("j,jab->ab", ph, spec.residues[~up])


def phi_dy(split: BoundarySplit, lam: complex, y: float, side: int = 1,
           spec: PencilSpectrum | None = None) -> np.ndarray:
    """``d Phi / dy``; at ``y = 0`` ``side`` picks the one-sided limit."""
    spec = spec or spectrum(split, lam)
    up = spec.upper if (y > 0 or (y == 0 and side > 0)) else ~spec.upper
    sgn = 1j if up is spec.upper else -1j
    w = spec.roots[up]
    return sgn * np.einsum("j,jab->ab", 1j * w * np.exp(1j * w * y), spec.residues[up])


@dataclass(frozen=True)
class ResolventSlice:
    lam: complex
    xi_hat: np.ndarray | None
    phi0: np.ndarray
    dphi0: np.ndarray
    method: str
    residual: float
    perturbed: bool = False

    def log_det_derivative(self) -> complex:
        """``tr(Phi0^{-1} d_lam Phi0)``."""
        return complex(np.trace(np.linalg.solve(self.phi0, self.dphi0)))


def _phi0_residue(split: BoundarySplit, lam: complex):
    spec = spectrum(split, lam)
    up = spec.upper
    Ru, Rl = spec.residues[up], spec.residues[~up]
    wu, wl = spec.roots[up], spec.roots[~up]
    p0 = 1j * Ru.sum(axis=0)
    # d_lam R = R^2; residues of R^2 at upper roots pair with lower roots only
    inv = 1.0 / (wu[:, None] - wl[None, :])
    d = np.einsum("jk,jab,kbc->ac", inv, Ru, Rl) + np.einsum("jk,kab,jbc->ac", inv, Rl, Ru)
    return p0, 1j * d, spec


def _phi0_quadrature(split: BoundarySplit, lam: complex, epsabs: float = 1e-13):
    N = split.N
    scale = math.sqrt(abs(lam) + np.linalg.norm(split.C2, 2) + 1.0) / np.linalg.norm(split.A, 2)

    def integrand(theta):
        w = scale * math.tan(theta)
        R = resolvent_symbol(split, lam, w)
        jac = scale / math.cos(theta) ** 2 / (2 * math.pi)
        return np.concatenate([(R * jac).ravel(), ((R @ R) * jac).ravel()])

    val, err = quad_vec(integrand, -math.pi / 2, math.pi / 2, epsabs=epsabs, epsrel=1e-12, limit=400)
    return val[:N * N].reshape(N, N), val[N * N:].reshape(N, N), float(err)


def _phi0_closed(split: BoundarySplit, lam: complex):
    if np.max(np.abs(split.B)) > 1e-12 * max(1.0, np.max(np.abs(split.A)) * np.max(np.abs(split.C))):
        raise ValidationError("closed form needs B = AC + CA = 0")
    Ai = np.linalg.inv(split.A)
    mu = matrix_sqrt_analytic(Ai @ (split.C2 - lam * np.eye(split.N)) @ Ai)
    mui = np.linalg.inv(mu)
    p0 = 0.5 * Ai @ mui @ Ai
    # mu dmu + dmu mu = -A^{-2}
    dmu = sla.solve_sylvester(mu, mu, -(Ai @ Ai))
    d = -0.5 * Ai @ mui @ dmu @ mui @ Ai
    return p0, d


def phi0(split: BoundarySplit, lam: complex, method: str = "residue",
         cross_check: bool = False, tol: float = 1e-6) -> ResolventSlice:
    """``Phi0(lam)`` and ``d_lam Phi0``.

    ``method`` is ``"residue"`` (default), ``"quadrature"`` (tan-mapped
    adaptive integration over the real omega axis) or ``"closed-form"``
    (``B = 0`` only).  With ``cross_check`` the quadrature value is compared
    and a :class:`CrossValidationError` raised beyond ``tol``.
    """
    lam = complex(lam)
    perturbed = False
    if method == "residue":
        p0, d, spec = _phi0_residue(split, lam)
        perturbed = spec.perturbed
        residual = float(np.max(np.abs(spec.residues.sum(axis=0))))
    elif method == "quadrature":
        p0, d, residual = _phi0_quadrature(split, lam)
    elif method == "closed-form":
        p0, d = _phi0_closed(split, lam)
        residual = 0.0
    else:
        raise ValidationError(f"unknown Phi0 method {method!r}")
    if cross_check and method != "quadrature":
        q0, qd, _ = _phi0_quadrature(split, lam)
        delta = max(float(np.max(np.abs(q0 - p0))), float(np.max(np.abs(qd - d))))
        if delta > tol:
            raise CrossValidationError(f"Phi0 {method} and quadrature disagree by {delta:.2e}", delta)
        residual = max(residual, delta)
    return ResolventSlice(lam, split.xi_hat, p0, d, method, residual, perturbed)


# ---------------------------------------------------------------------------
# half-line problem


def solve_halfline_ode(split: BoundarySplit, lam: complex, f) -> Callable[[float], np.ndarray]:
    """Decaying solution of ``(-A^2 d_r^2 - i B d_r + C^2 - lam) phi = 0`` with ``phi(0) = f``.

    Returns ``r -> Phi(lam, r) Phi0^{-1} f``.
    """
    spec = spectrum(split, lam)
    p0 = phi(split, lam, 0.0, spec)
    s = np.linalg.svd(p0, compute_uv=False)
    if s[-1] <= 1e-12 * s[0]:
        raise EllipticityError(f"Phi0 is singular at lam={lam}: boundary ellipticity fails",
                               witness=(split.point, split.xi_hat))
    g = np.linalg.solve(p0, np.asarray(f, dtype=complex))

    def solution(r: float) -> np.ndarray:
        if r < 0:
            raise ValidationError("half-line solution is defined for r >= 0")
        return phi(split, lam, float(r), spec) @ g

    return solution


def halfline_operator(split: BoundarySplit, lam: complex, u: Callable[[float], np.ndarray], r: float,
                      h: float = 1e-3) -> np.ndarray:
    """Finite-difference ``(-A^2 d^2 - i B d + C^2 - lam) u`` at ``r`` (fourth-order stencil)."""
    u2, up, mid, dn, d2n = u(r + 2 * h), u(r + h), u(r), u(r - h), u(r - 2 * h)
    d2 = (-u2 + 16 * up - 30 * mid + 16 * dn - d2n) / (12 * h**2)
    d1 = (-u2 + 8 * up - 8 * dn + d2n) / (12 * h)
    return -split.A2 @ d2 - 1j * split.B @ d1 + (split.C2 - lam * np.eye(split.N)) @ mid


def boundary_green(split: BoundarySplit, lam: complex, r: float, r2: float,
                   spec: PencilSpectrum | None = None) -> np.ndarray:
    """``F_B(r, r') = -Phi(lam, r) Phi0^{-1} Phi(lam, -r')``."""
    spec = spec or spectrum(split, lam)
    p0 = phi(split, lam, 0.0, spec)
    return -phi(split, lam, r, spec) @ np.linalg.solve(p0, phi(split, lam, -r2, spec))


# ---------------------------------------------------------------------------
# Psi1 and A1


@dataclass(frozen=True)
class ContourSpec:
    """Parabola ``lam(u) = -mu (1 + i u)^2``, ``u in [-u_max, u_max]``.

    It crosses the real axis at the abscissa ``-mu`` and opens to the right
    around the positive real axis; ``|e^{-lam}| = e^{mu (1 - u^2)}``.
    """

    nodes: int = 64
    mu: float = 4.0
    u_max: float = 3.0

    def __post_init__(self):
        if self.nodes < 4:
            raise ValidationError("contour needs at least 4 nodes")
        if not self.mu > 0 or not self.u_max > 0:
            raise ContourPlacementError("contour parameters mu and u_max must be positive "
                                        "(mu <= 0 puts the crossing point on the spectrum)")

    @property
    def abscissa(self) -> float:
        return -self.mu

    def points(self):
        """Nodes ``lam_k`` and weights ``c_k`` with ``int dlam/(2 pi i) e^{-lam} F ~ sum c_k F(lam_k)``."""
        u = np.linspace(-self.u_max, self.u_max, self.nodes + 1)
        h = u[1] - u[0]
        s = self.mu * (1 + 1j * u) ** 2
        ds = 2j * self.mu * (1 + 1j * u)
        w = np.full(u.shape, h)
        # vertical line upward in lam maps to the s-contour with dlam = -ds, reversed
        return -s, np.exp(s) * ds * w / (2j * np.pi)

    def doubled(self) -> "ContourSpec":
        return ContourSpec(2 * self.nodes, self.mu, self.u_max)


def _check_contour(lams: np.ndarray):
    bad = (np.abs(lams.imag) < 1e-12) & (lams.real >= 0)
    if np.any(bad):
        raise ContourPlacementError(f"contour node {lams[bad][0]} lies on the spectrum [0, inf)")


def psi1(split: BoundarySplit, contour: ContourSpec = ContourSpec(), method: str = "residue") -> float:
    """``Psi1 = -sqrt(pi) int dlam/(2 pi i) e^{-lam} tr(Phi0^{-1} d_lam Phi0)``."""
    lams, c = contour.points()
    _check_contour(lams)
    vals = np.array([phi0(split, lam, method).log_det_derivative() for lam in lams])
    return float(np.real(-SQRT_PI * (c @ vals)))


def psi1_estimate(split: BoundarySplit, contour: ContourSpec = ContourSpec()) -> tuple[float, float]:
    """Value on the doubled contour and the node-doubling change."""
    a = psi1(split, contour)
    b = psi1(split, contour.doubled())
    return b, abs(b - a)


def psi1_closed_form(split: BoundarySplit) -> float:
    """``-(sqrt(pi)/2) tr e^{-C^2}``, exact when ``B = 0``."""
    return float(-0.5 * SQRT_PI * np.real(np.trace(matrix_exp(-split.C2, hermitian=True))))


@dataclass(frozen=True)
class BoundaryMesh:
    """Boundary quadrature: collar charts with integration weights."""

    charts: Sequence[BoundaryChart]
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, float).reshape(-1)
        if len(self.charts) != w.shape[0] or w.shape[0] == 0:
            raise ValidationError("boundary mesh needs one weight per chart")
        object.__setattr__(self, "weights", w)


@dataclass(frozen=True)
class A1Result:
    value: float
    error: float
    densities: np.ndarray
    method: str
    extra: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        d = {"value": self.value, "error": self.error, "method": self.method,
             "densities": self.densities.tolist()}
        d.update(self.extra)
        return d


def _tangential_rule(split_unit: Callable[[np.ndarray], BoundarySplit], m: int, order: int):
    """Half-space rule for ``int d xi_hat / pi^{m/2}`` using evenness in ``xi_hat``."""
    if m == 0:
        return np.zeros((1, 0)), np.ones(1)

    def scale(d):
        lam = float(np.linalg.eigvalsh(split_unit(d).C2)[0])
        if lam <= 1e-12:
            raise EllipticityError(f"C(xi_hat)^2 is singular along {d.tolist()}", witness=(None, d))
        return lam

    rule = polar_rule(m, order, scale)
    nodes, weights = rule.nodes, rule.weights
    per_ray = order
    rays = len(weights) // per_ray
    keep = np.concatenate([np.arange(k * per_ray, (k + 1) * per_ray) for k in range(rays // 2)])
    return nodes[keep], 2 * weights[keep]


def boundary_density(sym: DiracSymbol, chart: BoundaryChart, order: int = 16,
                     contour: ContourSpec = ContourSpec(), fast_path: bool = False) -> float:
    """``int d xi_hat / pi^{(n-1)/2} Psi1(xi_hat)`` at one boundary point."""
    m = sym.n - 1

    def split_at(xi_hat):
        return boundary_split(sym, chart, xi_hat)

    nodes, weights = _tangential_rule(split_at, m, order)
    vals = []
    for xi in nodes:
        s = split_at(xi)
        if fast_path and np.max(np.abs(s.B)) <= 1e-12 * max(1.0, np.max(np.abs(s.C2))):
            vals.append(psi1_closed_form(s))
        else:
            vals.append(psi1(s, contour))
    return float(weights @ np.asarray(vals))


def compute_A1(sym: DiracSymbol, mesh: BoundaryMesh, order: int = 16,
               contour: ContourSpec = ContourSpec(), fast_path: bool = False,
               error_estimate: bool = True, workers=None) -> A1Result:
    """``A1 = int_dM dx_hat int d xi_hat / pi^{(n-1)/2} Psi1``.

    The error estimate is the change under refining the tangential order by
    half and doubling the contour nodes.
    """
    for ch in mesh.charts:
        try:
            boundary_split(sym, ch, np.zeros(sym.n - 1))
        except EllipticityError as exc:
            raise EllipticityError(f"boundary ellipticity fails at {ch.point.tolist()}: {exc}",
                                   witness=(ch.point, None)) from exc

    def density(ch, o=order, c=contour):
        return boundary_density(sym, ch, o, c, fast_path)

    dens = np.array(ordered_map(density, list(mesh.charts), workers))
    value = float(mesh.weights @ dens)
    err = 0.0
    if error_estimate:
        # refinement at the first chart, scaled to the whole mesh
        ch = mesh.charts[0]
        fine = density(ch, order + max(4, order // 2), contour.doubled())
        err = abs(fine - dens[0]) * float(np.sum(np.abs(mesh.weights)))
    return A1Result(value, err, dens, "contour" if not fast_path else "contour+closed-form")
