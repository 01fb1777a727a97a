"""Interior heat-kernel densities a0, a1, a2 at a point.

After rescaling ``xi -> xi / sqrt(t)`` the conjugated operator becomes
``H + sqrt(t) K + t Dbar D`` with ``K = -Gamma(xi) D - Dbar Gamma(xi)``, and
the density coefficients are Volterra terms of ``exp(-(H + eps K + eps^2 Dbar D))``
applied to the unit matrix, integrated with ``d xi / pi^{n/2}``.

Coefficient derivatives enter through second-order jets (see :mod:`heatkern.jets`).
In the jet representation multiplication by ``H(x, xi)`` is a block lower
triangular matrix, and its exponential carries the x-derivatives of
``e^{-tau H}`` (the integral rule for ``d e^{-tau H}``) automatically.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .algebra import matrix_exp
from .errors import AccuracyWarning, ConfigurationError, EllipticityError, UnsupportedOrderError, ValidationError
from .jets import JetOperators
from .parallel import chunks, ordered_map
from .quadrature import XiQuadrature, polar_rule, simplex_rule, sphere_rule, whitened_hermite
from .symbol import (POSITIVITY_THRESHOLD, DiracSymbol, JetData, build_H, build_metric, jets_at,
                     pointwise_min_eigenvalue)

POSITIVITY = 1e-12


@dataclass(frozen=True)
class QuadSpec:
    """How to build the covector rule at a point.

    ``scheme="polar"`` (default) integrates rays with Gauss-Legendre radii;
    ``scheme="hermite"`` is the whitened tensor Gauss-Hermite rule.  The
    error estimate compares ``order`` with ``refined_order``.
    """

    scheme: str = "polar"
    order: int = 24
    refined_order: int | None = None
    angles: int | None = None

    def __post_init__(self):
        if self.scheme not in ("polar", "hermite"):
            raise ValidationError(f"unknown covector quadrature scheme {self.scheme!r}")
        if self.order < 2:
            raise ValidationError("covector quadrature order must be at least 2")

    @property
    def fine(self) -> int:
        return self.refined_order or self.order + max(4, self.order // 2)


@dataclass(frozen=True)
class VolterraSpec:
    order: int = 24


@dataclass(frozen=True)
class DensityEstimate:
    value: float
    error: float
    method: str
    nodes: int
    warning: str | None = None
    extra: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        d = {"value": self.value, "error": self.error, "method": self.method, "nodes": self.nodes}
        if self.warning:
            d["warning"] = self.warning
        d.update(self.extra)
        return d


def _ray_scale(sym: DiracSymbol, x, both: bool = False):
    def scale(omega):
        w = np.linalg.eigvalsh(build_H(sym, x, omega))
        lam = float(w[0])
        if lam <= POSITIVITY:
            raise EllipticityError(f"H(x, xi) not positive at x={np.asarray(x).tolist()}, xi={np.asarray(omega).tolist()}",
                                   witness=(np.asarray(x), np.asarray(omega)))
        return (lam, float(w[-1])) if both else lam
    return scale


def proxy_metric(sym: DiracSymbol, x) -> np.ndarray:
    """Scalar proxy ``g0^{mu nu} = tr a^{mu nu} / N``."""
    a = build_metric(sym, x)
    return np.real(np.einsum("mnaa->mn", a)) / sym.N


def require_elliptic_at(sym: DiracSymbol, x, threshold: float = POSITIVITY_THRESHOLD) -> None:
    lam, xi = pointwise_min_eigenvalue(sym, x)
    if lam <= threshold:
        raise EllipticityError(f"H(x, xi) degenerates at x={np.asarray(x).tolist()} along xi={xi.tolist()} "
                               f"(min eigenvalue {lam:.3e})", witness=(np.asarray(x), xi))


def make_rule(sym: DiracSymbol, x, spec: QuadSpec, order: int | None = None) -> XiQuadrature:
    order = order or spec.order
    if spec.scheme == "polar":
        ang = None if spec.angles is None else int(spec.angles * order / spec.order)
        return polar_rule(sym.n, order, _ray_scale(sym, x, both=True), ang)
    g0 = proxy_metric(sym, x)
    # widen the reference Gaussian so e^{kappa |eta|^2} tr e^{-H} decays on every ray
    dirs, _ = sphere_rule(sym.n, 256) if sym.n <= 3 else (np.eye(sym.n), None)
    scale = _ray_scale(sym, x)
    kappa = min(1.0, min(scale(d) / float(d @ g0 @ d) for d in dirs))
    return whitened_hermite(g0, order, 0.999 * kappa)


def _refined(evaluate, sym, x, spec: QuadSpec, tol: float | None, label: str):
    require_elliptic_at(sym, x)
    coarse_rule = make_rule(sym, x, spec)
    fine_rule = make_rule(sym, x, spec, spec.fine)
    v0 = evaluate(coarse_rule)
    v1 = evaluate(fine_rule)
    err = abs(v1 - v0)
    msg = None
    if tol is not None and err > tol * max(1.0, abs(v1)):
        msg = f"{label}: quadrature refinement changed the value by {err:.2e}"
        warnings.warn(msg, AccuracyWarning, stacklevel=3)
    return v1, err, msg, len(fine_rule)


# ---------------------------------------------------------------------------
# a0


def compute_a0(sym: DiracSymbol, x, quad: QuadSpec = QuadSpec(), tol: float | None = 1e-8) -> DensityEstimate:
    """``a0 = int d xi / pi^{n/2} tr e^{-H(x, xi)}``."""
    x = sym.require(x)
    G = sym.gammas(x)

    def evaluate(rule: XiQuadrature) -> float:
        Gx = np.einsum("km,mab->kab", rule.nodes, G)
        lam = np.linalg.eigvalsh(Gx @ Gx)
        return float(rule.weights @ np.exp(-lam).sum(axis=1))

    v, err, msg, nodes = _refined(evaluate, sym, x, quad, tol, "a0")
    return DensityEstimate(v, err, f"quadrature:{quad.scheme}", nodes, msg)


def compute_a0_radial(sym: DiracSymbol, x, angles: int = 256) -> float:
    """Radial integral done in closed form: ``Gamma(n/2)/(2 pi^{n/2}) int_S tr H(omega)^{-n/2}``."""
    x = sym.require(x)
    dirs, w = sphere_rule(sym.n, angles)
    G = sym.gammas(x)
    Gx = np.einsum("km,mab->kab", dirs, G)
    lam = np.linalg.eigvalsh(Gx @ Gx)
    if np.min(lam) <= POSITIVITY:
        raise EllipticityError("H is not positive on the unit sphere")
    n = sym.n
    return float(math.gamma(n / 2) / (2 * math.pi ** (n / 2)) * (w @ np.sum(lam ** (-n / 2), axis=1)))


# ---------------------------------------------------------------------------
# Volterra terms


def volterra_term(H, factors, spec: VolterraSpec = VolterraSpec()) -> np.ndarray:
    """Time-ordered integral ``int e^{-(1-tau_k)H} F_k ... F_1 e^{-tau_1 H}`` over the simplex.

    ``factors`` lists ``F_1, ..., F_k`` (k = 1 or 2).
    """
    H = np.asarray(H, dtype=complex)
    k = len(factors)
    if k not in (1, 2):
        raise UnsupportedOrderError(f"time-ordered integrals of order {k} are not supported (k must be 1 or 2)")
    rule = simplex_rule(k, spec.order)
    F = [np.asarray(f, dtype=complex) for f in factors]
    if k == 1:
        t1 = rule.taus[:, 0]
        E_left = matrix_exp(-(1 - t1)[:, None, None] * H)
        E_right = matrix_exp(-t1[:, None, None] * H)
        return np.einsum("k,kab->ab", rule.weights, E_left @ F[0] @ E_right)
    t1, t2 = rule.taus[:, 0], rule.taus[:, 1]
    E_left = matrix_exp(-(1 - t2)[:, None, None] * H)
    E_mid = matrix_exp(-(t2 - t1)[:, None, None] * H)
    E_right = matrix_exp(-t1[:, None, None] * H)
    return np.einsum("k,kab->ab", rule.weights, E_left @ F[1] @ E_mid @ F[0] @ E_right)


# ---------------------------------------------------------------------------
# a1, a2 through jets


def _jets(sym, x, jets: JetData | None) -> JetData:
    if jets is None:
        return jets_at(sym, x)
    if not isinstance(jets, JetData):
        raise ConfigurationError("jets must be a JetData instance")
    if jets.n != sym.n or jets.N != sym.N:
        raise ConfigurationError("jets do not match the symbol dimensions")
    return jets


def _augmented_blocks(ops: JetOperators, nodes: np.ndarray, workers=None):
    """Degree-zero N x N corners of the eps^1 and eps^2 Volterra coefficients.

    Uses ``exp([[M0, M1, M2], [0, M0, M1], [0, 0, M0]])`` whose upper blocks are
    the eps-coefficients of ``exp(M0 + eps M1 + eps^2 M2)``.
    """
    d = ops.space.dim
    N = ops.space.N
    M2 = -ops.DbarD

    def run(batch):
        Z = np.zeros((len(batch), 3 * d, 3 * d), complex)
        for i, xi in enumerate(batch):
            M0 = -ops.H(xi)
            M1 = -ops.Kxi(xi)
            for b in range(3):
                Z[i, b * d:(b + 1) * d, b * d:(b + 1) * d] = M0
            Z[i, :d, d:2 * d] = M1
            Z[i, d:2 * d, 2 * d:] = M1
            Z[i, :d, 2 * d:] = M2
        E = sla.expm(Z)
        return E[:, :N, d:d + N], E[:, :N, 2 * d:2 * d + N]

    parts = ordered_map(run, chunks(nodes, 256), workers)
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def _volterra_blocks(ops: JetOperators, nodes: np.ndarray, spec: VolterraSpec, workers=None):
    """Same corners via explicit simplex quadrature of the time-ordered products."""
    N = ops.space.N
    r1 = simplex_rule(1, spec.order)
    r2 = simplex_rule(2, spec.order)

    def one(xi):
        Hx = ops.H(xi)
        K = ops.Kxi(xi)
        t = r1.taus[:, 0]
        L1 = matrix_exp(-(1 - t)[:, None, None] * Hx, hermitian=False)[:, :N, :]
        R1 = matrix_exp(-t[:, None, None] * Hx, hermitian=False)[:, :, :N]
        first = np.einsum("k,kab->ab", r1.weights, L1 @ K @ R1)
        dd = np.einsum("k,kab->ab", r1.weights, L1 @ ops.DbarD @ R1)
        s1, s2 = r2.taus[:, 0], r2.taus[:, 1]
        L2 = matrix_exp(-(1 - s2)[:, None, None] * Hx, hermitian=False)[:, :N, :]
        M2 = matrix_exp(-(s2 - s1)[:, None, None] * Hx, hermitian=False)
        R2 = matrix_exp(-s1[:, None, None] * Hx, hermitian=False)[:, :, :N]
        kk = np.einsum("k,kab->ab", r2.weights, L2 @ K @ M2 @ K @ R2)
        # eps-coefficients of exp(-(H + eps K + eps^2 DbarD))
        return -first, kk - dd

    parts = ordered_map(one, list(nodes), workers)
    return np.stack([p[0] for p in parts]), np.stack([p[1] for p in parts])


@dataclass(frozen=True)
class A1Check:
    residual: float
    a0: float
    passed: bool
    rel_tol: float = 1e-8

    def as_dict(self) -> dict:
        return {"residual": self.residual, "a0": self.a0, "passed": self.passed, "rel_tol": self.rel_tol}


def check_a1(sym: DiracSymbol, x, quad: QuadSpec = QuadSpec(), jets: JetData | None = None,
             rel_tol: float = 1e-8, workers=None) -> A1Check:
    """Magnitude of the order ``t^{1/2}`` density (odd in xi, hence zero)."""
    x = sym.require(x)
    ops = JetOperators(_jets(sym, x, jets))
    rule = make_rule(sym, x, quad)
    first, _ = _augmented_blocks(ops, rule.nodes, workers)
    vals = np.trace(first, axis1=1, axis2=2)
    res = float(abs(rule.weights @ vals))
    a0 = compute_a0(sym, x, quad, tol=None).value
    return A1Check(res, a0, res <= rel_tol * a0, rel_tol)


def compute_a2(sym: DiracSymbol, x, quad: QuadSpec = QuadSpec(), jets: JetData | None = None,
               method: str = "augmented", volterra: VolterraSpec = VolterraSpec(),
               tol: float | None = 1e-3, workers=None, potential=None) -> DensityEstimate:
    """Density ``a2(x)`` of ``Dbar D`` (plus ``potential``, if given).

    ``method="augmented"`` reads the eps^2 coefficient off one block
    exponential; ``method="volterra"`` integrates the time-ordered products
    on the simplex.  Both share the jet operators but not the time integration.
    """
    x = sym.require(x)
    if method not in ("augmented", "volterra"):
        raise ValidationError(f"unknown a2 method {method!r}")
    if callable(potential):
        potential = potential(x)
    ops = JetOperators(_jets(sym, x, jets), potential)

    def evaluate(rule: XiQuadrature) -> float:
        if method == "augmented":
            _, second = _augmented_blocks(ops, rule.nodes, workers)
        else:
            _, second = _volterra_blocks(ops, rule.nodes, volterra, workers)
        return float(np.real(rule.weights @ np.trace(second, axis1=1, axis2=2)))

    v, err, msg, nodes = _refined(evaluate, sym, x, quad, None, "a2")
    if tol is not None and err > tol * max(abs(v), 1e-12):
        msg = f"a2: quadrature refinement changed the value by {err:.2e}"
        warnings.warn(msg, AccuracyWarning, stacklevel=2)
    return DensityEstimate(v, err, method, nodes, msg)


@dataclass(frozen=True)
class RouteComparison:
    augmented: float
    volterra: float
    delta: float
    nodes: int

    def as_dict(self) -> dict:
        return {"augmented": self.augmented, "volterra": self.volterra, "delta": self.delta, "nodes": self.nodes}


def compare_a2_routes(sym: DiracSymbol, x, quad: QuadSpec = QuadSpec(order=12),
                      volterra: VolterraSpec = VolterraSpec(12), jets: JetData | None = None,
                      workers=None, potential=None) -> RouteComparison:
    """Both time integrations on one shared covector rule.

    Sharing the rule isolates the time integration; the simplex route costs
    hundreds of exponentials per node, hence the modest default orders.
    """
    x = sym.require(x)
    require_elliptic_at(sym, x)
    if callable(potential):
        potential = potential(x)
    ops = JetOperators(_jets(sym, x, jets), potential)
    rule = make_rule(sym, x, quad)
    _, a = _augmented_blocks(ops, rule.nodes, workers)
    _, b = _volterra_blocks(ops, rule.nodes, volterra, workers)
    va = float(np.real(rule.weights @ np.trace(a, axis1=1, axis2=2)))
    vb = float(np.real(rule.weights @ np.trace(b, axis1=1, axis2=2)))
    return RouteComparison(va, vb, abs(va - vb), len(rule.nodes))


def integrate_density(density, points, weights) -> tuple[float, float]:
    """``sum_k w_k a(x_k)`` with propagated error for a callable returning DensityEstimate."""
    vals = [density(p) for p in points]
    w = np.asarray(weights, float)
    return float(w @ [v.value for v in vals]), float(np.abs(w) @ [v.error for v in vals])
