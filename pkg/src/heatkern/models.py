"""Ready-made symbols used by tests, the CLI and the acceptance run."""

from __future__ import annotations

import numpy as np

from .symbol import DiracSymbol, FunctionField

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
I2 = np.eye(2, dtype=complex)
PAULI = (SX, SY, SZ)


def clifford_gammas(n: int, N: int = 2) -> list[np.ndarray]:
    """Anticommuting Hermitian matrices squaring to the identity."""
    if n == 1:
        return [np.eye(N, dtype=complex)]
    if N != 2 or n > 3:
        raise ValueError("only 2x2 Clifford generators for n = 2, 3 are provided")
    return [P.copy() for P in PAULI[:n]]


def clifford_symbol(n: int = 2, N: int = 2, lo=None, hi=None) -> DiracSymbol:
    return DiracSymbol.build(clifford_gammas(n, N), lo=lo, hi=hi)


def skewed_pair(shift: float = 0.5) -> DiracSymbol:
    """``Gamma^1 = sx``, ``Gamma^2 = sy + shift I``: elliptic for |shift| < 1, not Laplace type."""
    return DiracSymbol.build([SX, SY + shift * I2])


def block_clifford(scales=(1.0, 2.0)) -> DiracSymbol:
    """Direct sum of Clifford pairs ``c_k (sx, sy)``; ``H = diag(c_k^2 |xi|^2)`` blockwise."""
    G1 = np.zeros((2 * len(scales),) * 2, complex)
    G2 = np.zeros_like(G1)
    for k, c in enumerate(scales):
        G1[2 * k:2 * k + 2, 2 * k:2 * k + 2] = c * SX
        G2[2 * k:2 * k + 2, 2 * k:2 * k + 2] = c * SY
    return DiracSymbol.build([G1, G2])


def anisotropic_blocks(c: float = 2.0) -> DiracSymbol:
    """``Gamma^1 = diag(sx, sx)``, ``Gamma^2 = diag(sy, c sy)``: ``H = diag(|xi|^2, xi_1^2 + c^2 xi_2^2)``."""
    Z = np.zeros((2, 2), complex)
    G1 = np.block([[SX, Z], [Z, SX]])
    G2 = np.block([[SY, Z], [Z, c * SY]])
    return DiracSymbol.build([G1, G2])


def circle_symbol(N: int = 1, period: float = 2 * np.pi) -> DiracSymbol:
    """Flat ``Gamma = 1`` on ``[0, L]``; ``Dbar D = -d^2`` on N components."""
    return DiracSymbol.build([np.eye(N)], lo=[0.0], hi=[period])


def periodic_density_symbol(amplitudes, period: float = 2 * np.pi) -> DiracSymbol:
    """One-dimensional ``Gamma = 1`` with ``rho = diag(exp(a_k cos(2 pi x / L)))``.

    Then ``Dbar D = -d^2 + V`` with ``V = rho''/rho`` diagonal, and
    ``int_0^L V_k dx = a_k^2 (2 pi)^2 / (2 L)``.
    """
    a = np.asarray(amplitudes, float)
    N = a.shape[0]
    k = 2 * np.pi / period

    def rho(x):
        return np.diag(np.exp(a * np.cos(k * x[0])))

    def rho_d(x):
        return np.diag(-a * k * np.sin(k * x[0]) * np.exp(a * np.cos(k * x[0]))).reshape(1, N, N)

    def rho_dd(x):
        c, s = np.cos(k * x[0]), np.sin(k * x[0])
        return np.diag((a**2 * k**2 * s**2 - a * k**2 * c) * np.exp(a * c)).reshape(1, 1, N, N)

    return DiracSymbol.build([np.eye(N)], rho=FunctionField(1, N, rho, rho_d, rho_dd),
                             lo=[0.0], hi=[period])


def periodic_potential(amplitudes, period: float = 2 * np.pi):
    """``V(x) = rho''/rho`` for :func:`periodic_density_symbol`, as a diagonal vector."""
    a = np.asarray(amplitudes, float)
    k = 2 * np.pi / period

    def V(x):
        c, s = np.cos(k * x), np.sin(k * x)
        return a**2 * k**2 * s**2 - a * k**2 * c

    return V


def disk_boundary_mesh(radius: float = 1.0, points: int = 16):
    """Circle of given radius as the boundary of a disk, ``r = R - |x|``, ``x_hat = theta``."""
    from .boundary import BoundaryMesh
    from .symbol import BoundaryChart

    charts = []
    for k in range(points):
        th = 2 * np.pi * k / points
        p = radius * np.array([np.cos(th), np.sin(th)])
        dr = -p / radius
        dth = np.array([[-np.sin(th), np.cos(th)]]) / radius
        charts.append(BoundaryChart(p, dr, dth))
    return BoundaryMesh(charts, np.full(points, 2 * np.pi / points))


def interval_boundary_mesh(length: float, n_fields: int = 1):
    """Both end points of ``[0, L]`` with inward normals."""
    from .boundary import BoundaryMesh
    from .symbol import BoundaryChart

    charts = [BoundaryChart([0.0], [1.0], np.zeros((0, 1))),
              BoundaryChart([length], [-1.0], np.zeros((0, 1)))]
    return BoundaryMesh(charts, np.ones(2))
