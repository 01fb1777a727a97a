"""Finsler geometries carried by the eigenvalue branches of the leading symbol.

Each eigenvalue ``h_a(x, xi)`` of ``H(x, xi)`` is homogeneous of degree two in
``xi`` and defines ``g_a^{mu nu} = (1/2) d^2 h_a / d xi_mu d xi_nu`` and the
bicharacteristic flow ``x' = (1/2) dh/d xi``, ``xi' = -(1/2) dh/dx``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from .errors import (
    ConvexityError,
    DegenerateBranchError,
    FlowDegeneracyError,
    IllConditionedError,
    ValidationError,
)
from .symbol import DiracSymbol, build_H

GAP_TOL = 1e-8


@dataclass(frozen=True)
class EigenBranch:
    index: int
    h: float
    multiplicity: int
    degenerate: bool


def _eig(sym: DiracSymbol, x, xi):
    return np.linalg.eigh(build_H(sym, x, xi))


def _clusters(w: np.ndarray, gap_tol: float) -> list[list[int]]:
    scale = max(float(np.max(np.abs(w))), 1e-300)
    groups = [[0]]
    for k in range(1, len(w)):
        if w[k] - w[k - 1] < gap_tol * scale:
            groups[-1].append(k)
        else:
            groups.append([k])
    return groups


def eigen_branches(sym: DiracSymbol, x, xi, gap_tol: float = GAP_TOL) -> list[EigenBranch]:
    """Ascending eigenvalues of ``H(x, xi)``; clustered ones are flagged degenerate."""
    xi = np.asarray(xi, float)
    if not np.any(xi):
        raise ValidationError("branches need a nonzero covector")
    w, _ = _eig(sym, x, xi)
    out = [None] * len(w)
    for g in _clusters(w, gap_tol):
        for k in g:
            out[k] = EigenBranch(k, float(w[k]), len(g), len(g) > 1)
    return out


@dataclass(frozen=True)
class FinslerBranch:
    index: int
    h: float
    grad: np.ndarray
    g_contra: np.ndarray
    convex: bool = True
    degenerate: bool = False


def _tracked(sym, x, xi, ref_vecs: np.ndarray) -> tuple[float, float]:
    """Mean and spread of the eigenvalues whose eigenvectors best overlap ``ref_vecs``."""
    w, V = _eig(sym, x, xi)
    k = ref_vecs.shape[1]
    overlap = np.sum(np.abs(V.conj().T @ ref_vecs) ** 2, axis=1)
    sel = w[np.argsort(-overlap)[:k]]
    return float(np.mean(sel)), float(np.ptp(sel))


def _tracked_value(sym, x, xi, ref_vecs: np.ndarray) -> float:
    return _tracked(sym, x, xi, ref_vecs)[0]


def _hessian(f, xi: np.ndarray, step: float) -> np.ndarray:
    n = xi.shape[0]
    E = np.eye(n) * step
    f0 = f(xi)
    Hs = np.zeros((n, n))
    for i in range(n):
        Hs[i, i] = (f(xi + E[i]) - 2 * f0 + f(xi - E[i])) / step**2
        for j in range(i + 1, n):
            v = (f(xi + E[i] + E[j]) - f(xi + E[i] - E[j]) - f(xi - E[i] + E[j]) + f(xi - E[i] - E[j])) / (4 * step**2)
            Hs[i, j] = Hs[j, i] = v
    return Hs


def finsler_metric(sym: DiracSymbol, x, xi, branch: int, rel_step: float = 1e-4,
                   gap_tol: float = GAP_TOL) -> FinslerBranch:
    """Contravariant Finsler metric of one branch by central differences in ``xi``.

    Branches are followed across the stencil by eigenvector overlap.  A
    degenerate cluster is accepted only when it stays degenerate across the
    stencil and its Hessian is step-independent (a globally quadratic branch,
    e.g. ``|xi|^2``).  A cluster that splits is not a single function.
    """
    xi = np.asarray(xi, float)
    x = sym.require(x)
    branches = eigen_branches(sym, x, xi, gap_tol)
    if not 0 <= branch < len(branches):
        raise ValidationError(f"branch index {branch} out of range 0..{len(branches) - 1}")
    w, V = _eig(sym, x, xi)
    cluster = next(g for g in _clusters(w, gap_tol) if branch in g)
    ref = V[:, cluster]
    step = rel_step * float(np.linalg.norm(xi))

    def f(z):
        return _tracked_value(sym, x, z, ref)

    hess = _hessian(f, xi, step)
    degenerate = len(cluster) > 1
    if degenerate:
        other = _hessian(f, xi, 4 * step)
        probes = [xi + 4 * step * e for e in np.vstack([np.eye(len(xi)), -np.eye(len(xi))])]
        spread = max(_tracked(sym, x, z, ref)[1] for z in probes)
        if spread > 1e-9 * float(np.max(np.abs(w))) or \
                np.max(np.abs(other - hess)) > 1e-6 * max(1.0, np.max(np.abs(hess))):
            raise DegenerateBranchError(
                f"branch {branch} is degenerate (multiplicity {len(cluster)}) at xi={xi.tolist()} "
                "and not globally quadratic; Finsler metric undefined there")
        # certified quadratic: a full-scale stencil is exact up to rounding
        hess = _hessian(f, xi, float(np.linalg.norm(xi)))
    g = 0.5 * (hess + hess.T) / 2
    Gm = sym.gammas(x)
    Gx = np.einsum("m,mab->ab", xi, Gm)
    dH = np.einsum("mab,bc->mac", Gm, Gx) + np.einsum("ab,mbc->mac", Gx, Gm)
    grad = np.real(np.einsum("ak,mab,bk->m", ref.conj(), dH, ref)) / len(cluster)
    ev = np.linalg.eigvalsh(g)
    convex = bool(ev[0] > 0)
    if not convex:
        warnings.warn(f"Finsler metric of branch {branch} is not positive definite at xi={xi.tolist()} "
                      f"(min eigenvalue {ev[0]:.3e})", RuntimeWarning, stacklevel=2)
    return FinslerBranch(branch, float(w[branch]), grad, g, convex, degenerate)


def require_convex(branch: FinslerBranch) -> FinslerBranch:
    if not branch.convex:
        raise ConvexityError(f"Finsler metric of branch {branch.index} is indefinite")
    return branch


def covariant_metric(branch: FinslerBranch, max_cond: float = 1e12) -> np.ndarray:
    """Inverse ``g_{mu nu}`` of the contravariant metric."""
    g = np.asarray(branch.g_contra if isinstance(branch, FinslerBranch) else branch, float)
    c = np.linalg.cond(g)
    if not np.isfinite(c) or c > max_cond:
        raise IllConditionedError(f"Finsler metric condition number {c:.2e} exceeds {max_cond:.0e}")
    inv = np.linalg.inv(g)
    return 0.5 * (inv + inv.T)


# ---------------------------------------------------------------------------
# Hamiltonian flow


@dataclass(frozen=True)
class FlowState:
    x: np.ndarray
    xi: np.ndarray
    branch: int
    t: float = 0.0


def _gamma_gradients(sym: DiracSymbol, x: np.ndarray, fd_step: float = 1e-6) -> np.ndarray:
    """``d_i Gamma^mu`` with shape (n_coord, n_field, N, N)."""
    n = sym.n
    out = np.zeros((n, n, sym.N, sym.N), complex)
    for m, G in enumerate(sym.gamma):
        if G.has_derivatives:
            out[:, m] = G.derivatives(x)[1]
        else:
            for i in range(n):
                e = np.zeros(n)
                e[i] = fd_step
                out[i, m] = (G(x + e) - G(x - e)) / (2 * fd_step)
    return out


def hamiltonian_rhs(sym: DiracSymbol, x, xi, branch: int, gap_tol: float = GAP_TOL):
    """``(dx/dt, dxi/dt)`` from Hellmann-Feynman gradients of ``h_branch``."""
    x = np.asarray(x, float)
    xi = np.asarray(xi, float)
    if not sym.contains(x):
        raise FlowDegeneracyError(f"flow left the domain box at x={x.tolist()}", location=(x, xi))
    Gm = sym.gammas(x)
    Gx = np.einsum("m,mab->ab", xi, Gm)
    w, V = np.linalg.eigh(Gx @ Gx)
    scale = max(float(np.max(np.abs(w))), 1e-300)
    gaps = []
    if branch > 0:
        gaps.append(w[branch] - w[branch - 1])
    if branch < len(w) - 1:
        gaps.append(w[branch + 1] - w[branch])
    if gaps and min(gaps) < gap_tol * scale:
        raise FlowDegeneracyError(f"branch {branch} crosses a neighbour at x={x.tolist()}, xi={xi.tolist()}",
                                  location=(x, xi))
    v = V[:, branch]
    dH_dxi = np.einsum("mab,bc->mac", Gm, Gx) + np.einsum("ab,mbc->mac", Gx, Gm)
    dG = _gamma_gradients(sym, x)
    dGx = np.einsum("m,imab->iab", xi, dG)
    dH_dx = np.einsum("iab,bc->iac", dGx, Gx) + np.einsum("ab,ibc->iac", Gx, dGx)
    gxi = np.real(np.einsum("a,mab,b->m", v.conj(), dH_dxi, v))
    gx = np.real(np.einsum("a,iab,b->i", v.conj(), dH_dx, v))
    return 0.5 * gxi, -0.5 * gx


def hamiltonian_step(sym: DiracSymbol, state: FlowState, dt: float = 1e-3) -> FlowState:
    """One classical Runge-Kutta step of the bicharacteristic flow."""
    a = state.branch
    x, xi = np.asarray(state.x, float), np.asarray(state.xi, float)
    k1 = hamiltonian_rhs(sym, x, xi, a)
    k2 = hamiltonian_rhs(sym, x + 0.5 * dt * k1[0], xi + 0.5 * dt * k1[1], a)
    k3 = hamiltonian_rhs(sym, x + 0.5 * dt * k2[0], xi + 0.5 * dt * k2[1], a)
    k4 = hamiltonian_rhs(sym, x + dt * k3[0], xi + dt * k3[1], a)
    nx = x + dt / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
    nxi = xi + dt / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
    return replace(state, x=nx, xi=nxi, t=state.t + dt)


def branch_value(sym: DiracSymbol, state: FlowState) -> float:
    return float(np.linalg.eigvalsh(build_H(sym, state.x, state.xi))[state.branch])


def flow(sym: DiracSymbol, state: FlowState, dt: float = 1e-3, steps: int = 1000) -> list[FlowState]:
    """Trajectory including the initial state."""
    out = [state]
    for _ in range(steps):
        state = hamiltonian_step(sym, state, dt)
        out.append(state)
    return out
