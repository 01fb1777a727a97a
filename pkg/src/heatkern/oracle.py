"""Brute-force one-dimensional discretizations used to cross-check the analytic modules.

Functions live on grid nodes, first-order operators map nodes to cell
midpoints:

    (D phi)_{j+1/2} = i (Gamma rho)_{j+1/2} [ (u_{j+1} - u_j)/h + B_{j+1/2} (u_j + u_{j+1})/2 ],
    u = rho^{-1} phi,

and ``Dbar`` is assembled by the mirrored stencil.  With equal node and
midpoint weights ``Dbar`` equals the matrix adjoint of ``D``, so ``Dbar D`` and
``D Dbar`` are exactly Hermitian, nonnegative and share their nonzero spectrum.
The staggered layout keeps ``Dbar D`` a three-point stencil without spurious
doubler modes.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import eig_banded

from .errors import ResolutionError, ValidationError, WindowError
from .symbol import BoundarySplit, DiracSymbol

KINDS = ("D", "Dbar", "DbarD", "DDbar", "Delta")
MIN_GRID = 16


@dataclass(frozen=True)
class Geometry:
    """``circle`` (periodic, circumference L), ``interval`` or ``halfline`` ([0, L], Dirichlet ends)."""

    kind: str
    length: float

    def __post_init__(self):
        if self.kind not in ("circle", "interval", "halfline"):
            raise ValidationError(f"unknown geometry {self.kind!r}")
        if not self.length > 0:
            raise ValidationError("geometry length must be positive")

    @property
    def closed(self) -> bool:
        return self.kind == "circle"

    @property
    def boundary_points(self) -> int:
        return 0 if self.closed else 2


@dataclass
class DiscretizedOperator:
    geometry: Geometry
    m: int
    kind: str
    N: int
    matrix: np.ndarray
    _eig: np.ndarray | None = field(default=None, repr=False)

    @property
    def h(self) -> float:
        return self.geometry.length / self.m

    def eigenvalues(self) -> np.ndarray:
        if self.kind in ("D", "Dbar"):
            raise ValidationError("first-order discretizations are not self-adjoint; use DbarD or DDbar")
        if self._eig is None:
            M = self.matrix
            self._eig = np.linalg.eigvalsh(0.5 * (M + M.conj().T))
        return self._eig


def _grids(geometry: Geometry, m: int):
    h = geometry.length / m
    mids = (np.arange(m) + 0.5) * h
    if geometry.closed:
        nodes = np.arange(m) * h
    else:
        nodes = np.arange(1, m) * h
    return h, nodes, mids


def _blockdiag(mats: Sequence[np.ndarray]) -> np.ndarray:
    k = len(mats)
    N = mats[0].shape[0]
    out = np.zeros((k * N, k * N), complex)
    for i, M in enumerate(mats):
        out[i * N:(i + 1) * N, i * N:(i + 1) * N] = M
    return out


def _stencils(geometry: Geometry, m: int, N: int):
    """Difference and averaging maps from node unknowns to midpoints."""
    h = geometry.length / m
    cols = m if geometry.closed else m - 1
    Dl = np.zeros((m, cols))
    Av = np.zeros((m, cols))
    for j in range(m):
        for node, sgn in ((j, -1.0), (j + 1, 1.0)):
            if geometry.closed:
                c = node % m
            else:
                if node < 1 or node > m - 1:
                    continue
                c = node - 1
            Dl[j, c] += sgn / h
            Av[j, c] += 0.5
    I = np.eye(N)
    return np.kron(Dl, I), np.kron(Av, I)


def _first_order(sym: DiracSymbol, geometry: Geometry, m: int):
    if sym.n != 1:
        raise ValidationError("the discretization oracle handles one-dimensional symbols only")
    if m < MIN_GRID:
        raise ResolutionError(f"grid size m={m} below the minimum {MIN_GRID}")
    N = sym.N
    _, nodes, mids = _grids(geometry, m)
    Dl, Av = _stencils(geometry, m, N)
    rho_n = [sym.rho([x]) for x in nodes]
    rho_m = [sym.rho([x]) for x in mids]
    gam_m = [sym.gamma[0]([x]) for x in mids]
    B_m = _blockdiag([sym.conn[0]([x]) for x in mids])
    rinv_n = _blockdiag([np.linalg.inv(r) for r in rho_n])
    G_rho = _blockdiag([g @ r for g, r in zip(gam_m, rho_m)])
    rho_G = _blockdiag([r @ g for g, r in zip(gam_m, rho_m)])
    D = 1j * G_rho @ (Dl + B_m @ Av) @ rinv_n
    Dbar = 1j * rinv_n @ (-Dl.T + Av.T @ B_m) @ rho_G
    return D, Dbar, nodes, mids


def discretize(sym: DiracSymbol, geometry: Geometry, m: int, kind: str = "DbarD",
               potential: Callable[[float], np.ndarray] | None = None) -> DiscretizedOperator:
    """Finite-difference matrix of ``D``, ``Dbar``, ``Dbar D``, ``D Dbar`` or ``Delta``.

    Product operators are matrix products of the first-order factors.
    ``Delta = rho^{-1}(d+B) rho a rho (d+B) rho^{-1}`` equals ``-Dbar D`` in one
    dimension.  ``potential`` (node-space kinds only) adds a multiplication
    operator, which is how constant potentials enter the oracle.
    """
    if kind not in KINDS:
        raise ValidationError(f"unknown operator kind {kind!r}; expected one of {KINDS}")
    D, Dbar, nodes, mids = _first_order(sym, geometry, m)
    mats = {
        "D": lambda: D,
        "Dbar": lambda: Dbar,
        "DbarD": lambda: Dbar @ D,
        "DDbar": lambda: D @ Dbar,
        "Delta": lambda: -(Dbar @ D),
    }
    M = mats[kind]()
    if kind in ("DbarD", "DDbar", "Delta"):
        M = 0.5 * (M + M.conj().T)
    if potential is not None:
        if kind not in ("DbarD", "Delta"):
            raise ValidationError("potentials can be added to node-space operators only")
        V = _blockdiag([np.asarray(potential(x), complex).reshape(sym.N, sym.N) for x in nodes])
        M = M + (V if kind == "DbarD" else -V)
    return DiscretizedOperator(geometry, m, kind, sym.N, M)


# ---------------------------------------------------------------------------
# heat traces


def heat_trace(op: DiscretizedOperator, t) -> np.ndarray | float:
    """``Tr exp(-t L) = sum_k exp(-t lambda_k)``."""
    t_arr = np.atleast_1d(np.asarray(t, float))
    if np.any(t_arr <= 0):
        raise ValidationError("heat trace needs t > 0")
    ev = op.eigenvalues()
    vals = np.exp(-np.outer(t_arr, ev)).sum(axis=1)
    return float(vals[0]) if np.ndim(t) == 0 else vals


@dataclass(frozen=True)
class HeatFit:
    """Least-squares estimates of ``A_k`` from ``Tr e^{-tL} ~ (4 pi t)^{-1/2} sum_k t^{k/2} A_k``."""

    t: np.ndarray
    powers: np.ndarray
    coefficients: np.ndarray
    uncertainty: np.ndarray
    residual: float
    condition: float

    def A(self, k: int) -> float:
        idx = np.nonzero(self.powers == k)[0]
        return float(self.coefficients[idx[0]]) if idx.size else 0.0

    def dA(self, k: int) -> float:
        idx = np.nonzero(self.powers == k)[0]
        return float(self.uncertainty[idx[0]]) if idx.size else 0.0

    def as_dict(self) -> dict:
        return {f"A{int(k)}": {"value": float(c), "uncertainty": float(u)}
                for k, c, u in zip(self.powers, self.coefficients, self.uncertainty)} | {
            "residual": self.residual, "condition": self.condition,
            "t_window": [float(self.t[0]), float(self.t[-1])]}


def default_window(op: DiscretizedOperator, samples: int = 40, lo_factor: float = 5.0,
                   hi: float | None = None) -> np.ndarray:
    """Log-spaced ``t`` in ``[lo_factor h^2, hi]``.

    ``hi`` defaults to ``L^2 / (80 c^2)`` with the largest wave speed ``c``
    read off the top of the spectrum (``lambda_max ~ 4 c^2 / h^2``), which
    keeps winding and reflection terms ``exp(-L^2 / (4 c^2 t))`` below 1e-8.
    """
    L = op.geometry.length
    h = L / op.m
    lo = lo_factor * h**2
    if hi is None:
        c2 = max(float(op.eigenvalues()[-1]) * h**2 / 4, 1e-300)
        hi = L**2 / (80 * c2)
    if not hi > lo:
        raise WindowError(f"empty fit window [{lo:.3g}, {hi:.3g}]; refine the grid")
    return np.geomspace(lo, hi, samples)


def _lsq(t, y, powers, lattice: bool):
    cols = [t ** (k / 2) for k in powers]
    if lattice:
        cols.append(1.0 / t)
    X = np.stack(cols, axis=1)
    scale = np.max(np.abs(X), axis=0)
    Xs = X / scale
    cond = float(np.linalg.cond(Xs))
    coef, *_ = np.linalg.lstsq(Xs, y, rcond=None)
    coef = coef / scale
    resid = float(np.max(np.abs(X @ coef - y)))
    return coef[:len(powers)], resid, cond


def fit_heat_invariants(op: DiscretizedOperator, t_grid=None, k_max: int = 2,
                        parity: str | None = None, lattice_term: bool = True,
                        max_condition: float = 1e10) -> HeatFit:
    """Fit ``sqrt(4 pi t) Tr e^{-tL}`` by powers ``t^{k/2}``.

    ``parity="even"`` keeps even k (closed manifolds); the default is even for
    the circle and all k otherwise.  ``lattice_term`` adds a ``1/t`` column
    absorbing the leading ``O(h^2/t)`` grid error of the trace.  The
    uncertainty is the change when the upper end of the window is halved.
    """
    t = default_window(op) if t_grid is None else np.sort(np.asarray(t_grid, float))
    if parity is None:
        parity = "even" if op.geometry.closed else "all"
    powers = np.arange(0, k_max + 1, 2 if parity == "even" else 1)
    y = np.sqrt(4 * np.pi * t) * heat_trace(op, t)
    coef, resid, cond = _lsq(t, y, powers, lattice_term)
    if cond > max_condition:
        raise WindowError(f"fit design condition {cond:.2e} exceeds {max_condition:.0e}; "
                          "narrow the t window or lower k_max")
    half = t <= 0.5 * t[-1]
    if half.sum() >= len(powers) + 2:
        c2, _, _ = _lsq(t[half], y[half], powers, lattice_term)
        unc = np.abs(c2 - coef)
    else:
        unc = np.full(len(powers), np.nan)
    return HeatFit(t, powers, coef, unc, resid, cond)


# ---------------------------------------------------------------------------
# index


@dataclass(frozen=True)
class IndexResult:
    paired_spectra_residual: float
    index: int
    trace_diff_samples: list
    trace_diff_spread: float
    flagged: bool

    def as_dict(self) -> dict:
        return {"paired_spectra_residual": self.paired_spectra_residual, "index": self.index,
                "trace_diff_samples": self.trace_diff_samples,
                "trace_diff_spread": self.trace_diff_spread, "flagged": self.flagged}


def index_check(sym: DiracSymbol, geometry: Geometry, m: int, times=(0.1, 0.5, 1.0, 2.0),
                rel_threshold: float = 1e-6) -> IndexResult:
    """Compare the spectra of ``Dbar D`` and ``D Dbar`` on a closed geometry."""
    if not geometry.closed:
        raise ValidationError("index check needs a closed geometry")
    p = discretize(sym, geometry, m, "DbarD")
    q = discretize(sym, geometry, m, "DDbar")
    ep, eq = p.eigenvalues(), q.eigenvalues()
    lam_max = max(float(np.max(np.abs(ep))), float(np.max(np.abs(eq))), 1e-300)
    thr = rel_threshold * lam_max
    flagged = bool(np.any((np.abs(ep) > thr / 10) & (np.abs(ep) < 10 * thr)) or
                   np.any((np.abs(eq) > thr / 10) & (np.abs(eq) < 10 * thr)))
    nzp, nzq = np.sort(ep[np.abs(ep) > thr]), np.sort(eq[np.abs(eq) > thr])
    if nzp.shape != nzq.shape:
        resid = float("inf")
    elif nzp.size == 0:
        resid = 0.0
    else:
        resid = float(np.max(np.abs(nzp - nzq) / np.abs(nzq)))
    index = int(np.sum(np.abs(ep) <= thr) - np.sum(np.abs(eq) <= thr))
    diffs = [float(heat_trace(p, t) - heat_trace(q, t)) for t in times]
    return IndexResult(resid, index, diffs, float(max(diffs) - min(diffs)), flagged)


# ---------------------------------------------------------------------------
# resolvent traces


def resolvent_trace(op: DiscretizedOperator, lam: complex, derivative: int = 0) -> complex:
    """``Tr d^k/dlam^k (L - lam)^{-1} = k! sum_j (lambda_j - lam)^{-(k+1)}``."""
    ev = op.eigenvalues()
    d = ev - lam
    if np.min(np.abs(d)) < 1e-12 * max(1.0, np.max(np.abs(ev))):
        raise ValidationError("lam coincides with an eigenvalue")
    return complex(math.factorial(derivative) * np.sum(d ** (-(derivative + 1))))


# ---------------------------------------------------------------------------
# frozen half-line problem


def _halfline_blocks(split: BoundarySplit, h: float):
    """Node-coupling blocks of ``P = -i A d_r + C`` on the staggered grid."""
    X = 1j * split.A / h + 0.5 * split.C  # left node of a cell
    Y = -1j * split.A / h + 0.5 * split.C  # right node
    diag = X.conj().T @ X + Y.conj().T @ Y
    lower = Y.conj().T @ X  # block (k+1, k)
    return diag, lower


def halfline_matrix(split: BoundarySplit, length: float, m: int) -> np.ndarray:
    """Dense ``P^H P`` for ``P = -i A d_r + C`` on ``[0, length]`` with Dirichlet ends."""
    if m < MIN_GRID:
        raise ResolutionError(f"grid size m={m} below the minimum {MIN_GRID}")
    Dl, Av = _stencils(Geometry("halfline", length), m, split.N)
    A = np.kron(np.eye(m), split.A)
    C = np.kron(np.eye(m), split.C)
    P = -1j * A @ Dl + C @ Av
    L = P.conj().T @ P
    return 0.5 * (L + L.conj().T)


def halfline_eigenvalues(split: BoundarySplit, length: float, m: int) -> np.ndarray:
    """Eigenvalues of :func:`halfline_matrix` from Hermitian band storage."""
    if m < MIN_GRID:
        raise ResolutionError(f"grid size m={m} below the minimum {MIN_GRID}")
    N = split.N
    diag, lower = _halfline_blocks(split, length / m)
    diag = 0.5 * (diag + diag.conj().T)
    size = (m - 1) * N
    bw = 2 * N - 1
    band = np.zeros((bw + 1, size), complex)
    for d in range(bw + 1):
        for b in range(N):
            a = b + d  # row offset within the block pair
            if a < N:
                band[d, b::N][: m - 1] = diag[a, b]
            elif a - N < N:
                vals = np.full(m - 2, lower[a - N, b])
                band[d, b::N][: m - 2] = vals
    return eig_banded(band, lower=True, eigvals_only=True)


def halfline_bulk(split: BoundarySplit, h: float, samples: int = 2000) -> float:
    """Trace per unit length of ``e^{-P^H P}`` on the infinite uniform grid."""
    th = (np.arange(samples) + 0.5) / samples * 2 * np.pi - np.pi
    s = 2 * np.sin(th / 2) / h
    c = np.cos(th / 2)
    X = s[:, None, None] * split.A + c[:, None, None] * split.C
    ev = np.linalg.eigvalsh(np.einsum("kab,kcb->kac", X, X.conj()))
    return float(np.exp(-ev).sum() / samples / h)


@dataclass(frozen=True)
class HalflineFit:
    psi1: float
    bulk_slope: float
    intercept: float
    residual: float
    radii: np.ndarray
    h: float

    def as_dict(self) -> dict:
        return {"psi1": self.psi1, "bulk_slope": self.bulk_slope, "intercept": self.intercept,
                "residual": self.residual, "radii": self.radii.tolist(), "h": self.h}


def halfline_psi1(split: BoundarySplit, h: float = 0.025, radii=None) -> HalflineFit:
    """Boundary part of ``Tr e^{-L}`` for the frozen problem, scaled to ``Psi1``.

    On ``[0, R]`` with Dirichlet ends the trace is ``bulk * R`` plus one
    boundary term per end; the far end sees the reflected covector, and
    ``Psi1`` is even, so the intercept of a linear fit in ``R`` equals
    ``Psi1 / sqrt(pi)``.
    """
    if radii is None:
        lmin = float(np.linalg.eigvalsh(split.C2)[0])
        r0 = 20.0 / math.sqrt(lmin + 1.0)
        radii = np.array([r0, 1.25 * r0, 1.5 * r0])
    radii = np.asarray(radii, float)
    if radii.size < 2:
        raise ValidationError("half-line fit needs at least two truncation radii")
    traces = []
    used = []
    for R in radii:
        m = max(MIN_GRID, int(round(R / h)))
        used.append(m * h)
        ev = halfline_eigenvalues(split, m * h, m)
        traces.append(float(np.exp(-ev).sum()))
    used = np.asarray(used)
    X = np.stack([np.ones_like(used), used], axis=1)
    coef, *_ = np.linalg.lstsq(X, np.asarray(traces), rcond=None)
    resid = float(np.max(np.abs(X @ coef - traces)))
    return HalflineFit(float(math.sqrt(math.pi) * coef[0]), float(coef[1]), float(coef[0]), resid, used, h)


# ---------------------------------------------------------------------------
# CSV sidecars


def write_eigenvalues_csv(path, op: DiscretizedOperator) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "eigenvalue"])
        for k, v in enumerate(op.eigenvalues()):
            w.writerow([k, repr(float(v))])


def write_trace_csv(path, t, values) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "trace"])
        for a, b in zip(np.atleast_1d(t), np.atleast_1d(values)):
            w.writerow([repr(float(a)), repr(float(b))])
