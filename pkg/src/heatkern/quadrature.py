"""Quadrature rules: covector space with Gaussian weight, and time simplices."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.hermite import hermgauss
from numpy.polynomial.legendre import leggauss

from .errors import UnsupportedOrderError, ValidationError


def hermite_rule(n: int, order: int):
    """Tensor Gauss-Hermite rule for ``int e^{-|eta|^2} p(eta) d eta / pi^{n/2}``.

    Nodes come in +/- pairs, so odd integrands cancel exactly.
    """
    if order < 1:
        raise ValidationError("quadrature order must be positive")
    x, w = hermgauss(order)
    w = w / math.sqrt(math.pi)
    nodes = np.array(list(itertools.product(x, repeat=n)), dtype=float).reshape(-1, n)
    weights = np.array([np.prod(c) for c in itertools.product(w, repeat=n)], dtype=float)
    return nodes, weights


@dataclass(frozen=True)
class XiQuadrature:
    """Nodes ``xi_k`` and weights with ``sum_k w_k f(xi_k) ~ int f(xi) d xi / pi^{n/2}``.

    The rules expect integrands with Gaussian-type decay built in (for example
    ``tr e^{-H}``); the reference Gaussian is divided out through the weights.
    """

    nodes: np.ndarray
    weights: np.ndarray
    scheme: str
    order: int
    whitening: np.ndarray | None = None
    kappa: float = 1.0

    @property
    def n(self) -> int:
        return self.nodes.shape[1]

    def __len__(self) -> int:
        return self.weights.shape[0]


def whitened_hermite(g0, order: int = 16, kappa: float = 1.0) -> XiQuadrature:
    """Gauss-Hermite after mapping ``xi^T g0 xi`` to ``|eta|^2 / kappa``.

    ``g0`` is a positive-definite proxy metric; ``kappa <= 1`` widens the
    reference Gaussian so that ``e^{+kappa |eta|^2}`` times the integrand still
    decays in every direction.
    """
    g0 = np.atleast_2d(np.asarray(g0, dtype=float))
    n = g0.shape[0]
    w, U = np.linalg.eigh(0.5 * (g0 + g0.T))
    if w[0] <= 0:
        raise ValidationError("proxy metric must be positive definite")
    W = (U / np.sqrt(w)) @ U.T
    eta, weta = hermite_rule(n, order)
    nodes = eta @ W.T / math.sqrt(kappa)
    weights = weta * np.exp(np.sum(eta**2, axis=1)) * abs(np.linalg.det(W)) * kappa ** (-n / 2)
    return XiQuadrature(nodes, weights, "hermite", order, W, kappa)


def sphere_rule(n: int, angles: int):
    """Directions and weights integrating over the full unit sphere S^{n-1}."""
    if n == 1:
        return np.array([[1.0], [-1.0]]), np.array([1.0, 1.0])
    if n == 2:
        m = angles + angles % 2
        th = 2 * np.pi * np.arange(m) / m
        return np.stack([np.cos(th), np.sin(th)], axis=1), np.full(m, 2 * np.pi / m)
    if n == 3:
        z, wz = leggauss(angles)
        m = 2 * angles
        ph = 2 * np.pi * np.arange(m) / m
        Z, P = np.meshgrid(z, ph, indexing="ij")
        S = np.sqrt(1 - Z**2)
        dirs = np.stack([(S * np.cos(P)).ravel(), (S * np.sin(P)).ravel(), Z.ravel()], axis=1)
        w = np.outer(wz, np.full(m, 2 * np.pi / m)).ravel()
        return dirs, w
    raise ValidationError("polar covector rules are implemented for n <= 3")


def polar_rule(n: int, order: int, scale_fn, angles: int | None = None,
               cut: float = 40.0, panel_ratio: float = 4.0) -> XiQuadrature:
    """Ray-wise rule: sphere directions times panelled Gauss-Legendre radii.

    ``scale_fn(omega)`` returns the slowest Gaussian rate ``k_min`` on the
    ray, or a pair ``(k_min, k_max)``.  The radius runs over
    ``[0, sqrt(cut/k_min)]`` so the truncated tail is below ``e^{-cut}``; when
    the rates differ by more than ``panel_ratio`` the ray is split at
    ``sqrt(cut/k)`` for geometrically spaced ``k`` so every decay scale is
    resolved.  No reference Gaussian is involved, which keeps convergence
    geometric for strongly anisotropic symbols.
    """
    if order < 1:
        raise ValidationError("quadrature order must be positive")
    dirs, dw = sphere_rule(n, angles or (order if n == 3 else 2 * order))
    x, wx = leggauss(order)
    nodes, weights = [], []
    for d, a in zip(dirs, dw):
        ks = scale_fn(d)
        kmin, kmax = (float(ks), float(ks)) if np.isscalar(ks) else (float(ks[0]), float(ks[1]))
        if not kmin > 0:
            raise ValidationError(f"ray scale must be positive, got {kmin} along {d.tolist()}")
        panels = max(1, int(math.ceil(math.log(kmax / kmin) / math.log(panel_ratio))))
        ends = [0.0] + [math.sqrt(cut / k) for k in np.geomspace(kmax, kmin, panels + 1)[1:]] \
            if panels > 1 else [0.0, math.sqrt(cut / kmin)]
        for lo, hi in zip(ends[:-1], ends[1:]):
            r = lo + 0.5 * (hi - lo) * (x + 1)
            nodes.append(np.outer(r, d))
            weights.append(a * 0.5 * (hi - lo) * wx * r ** (n - 1) / math.pi ** (n / 2))
    return XiQuadrature(np.concatenate(nodes), np.concatenate(weights), "polar", order)


@dataclass(frozen=True)
class SimplexRule:
    """Gauss rule on ``0 <= tau_1 <= ... <= tau_k <= 1`` (k = 1, 2)."""

    taus: np.ndarray  # shape (m, k), columns tau_1..tau_k
    weights: np.ndarray


def simplex_rule(k: int, order: int = 24) -> SimplexRule:
    """Gauss-Legendre on [0,1] for k=1; collapsed (Duffy) square for k=2."""
    x, w = leggauss(order)
    x = 0.5 * (x + 1)
    w = 0.5 * w
    if k == 1:
        return SimplexRule(x[:, None], w)
    if k == 2:
        U, V = np.meshgrid(x, x, indexing="ij")
        WU, WV = np.meshgrid(w, w, indexing="ij")
        t2 = U.ravel()
        t1 = (U * V).ravel()
        return SimplexRule(np.stack([t1, t2], axis=1), (WU * WV * U).ravel())
    raise UnsupportedOrderError(f"time-ordered integrals of order {k} are not supported (k must be 1 or 2)")
