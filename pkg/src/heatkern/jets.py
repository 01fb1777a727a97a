"""Second-order truncated Taylor algebra with matrix coefficients.

A function ``f(x0 + y)`` is stored by its Taylor coefficients ``f_alpha`` for
multi-indices ``|alpha| <= 2``.  Multiplication and differentiation become
block matrices acting on stacked coefficient columns.  Differentiation loses
the top degree, which is harmless here: every quantity we evaluate at ``x0``
involves at most two derivatives in total.
"""

from __future__ import annotations

import itertools

import numpy as np

from .symbol import JetData


class JetSpace:
    def __init__(self, n: int, N: int):
        self.n, self.N = n, N
        idx = [a for d in range(3) for a in _multi_indices(n, d)]
        self.indices: list[tuple[int, ...]] = idx
        self.position = {a: k for k, a in enumerate(idx)}
        self.J = len(idx)
        self.dim = self.J * N

    def coefficients(self, value, grad, hess) -> np.ndarray:
        """Taylor coefficients (J, N, N) from value, gradient and Hessian."""
        out = np.zeros((self.J, self.N, self.N), complex)
        for k, a in enumerate(self.indices):
            nz = [i for i, e in enumerate(a) for _ in range(e)]
            if len(nz) == 0:
                out[k] = value
            elif len(nz) == 1:
                out[k] = grad[nz[0]]
            else:
                i, j = nz
                out[k] = hess[i, j] * (0.5 if i == j else 1.0)
        return out

    def mult(self, coeffs) -> np.ndarray:
        """Left multiplication by the jet with Taylor coefficients ``coeffs``."""
        N = self.N
        M = np.zeros((self.dim, self.dim), complex)
        for g, ag in enumerate(self.indices):
            for b, ab in enumerate(self.indices):
                diff = tuple(x - y for x, y in zip(ag, ab))
                if min(diff) < 0:
                    continue
                M[g * N:(g + 1) * N, b * N:(b + 1) * N] = coeffs[self.position[diff]]
        return M

    def deriv(self, mu: int) -> np.ndarray:
        N = self.N
        D = np.zeros((self.dim, self.dim), complex)
        for k, a in enumerate(self.indices):
            up = list(a)
            up[mu] += 1
            up = tuple(up)
            if up in self.position:
                j = self.position[up]
                D[k * N:(k + 1) * N, j * N:(j + 1) * N] = (a[mu] + 1) * np.eye(N)
        return D

    def unit(self) -> np.ndarray:
        """The constant identity matrix as a (dim, N) stack of columns."""
        E = np.zeros((self.dim, self.N), complex)
        E[:self.N] = np.eye(self.N)
        return E


def _multi_indices(n: int, degree: int):
    for c in itertools.combinations_with_replacement(range(n), degree):
        a = [0] * n
        for i in c:
            a[i] += 1
        yield tuple(a)


class JetOperators:
    """Matrices of ``Gamma^mu``, ``D``, ``Dbar`` acting on jets at one point.

    With ``G_mu`` multiplication by ``Gamma^mu``:
    ``D = i G_mu rho (d_mu + B_mu) rho^{-1}`` and
    ``Dbar = i rho^{-1} (d_mu + B_mu) rho G_mu``.
    """

    def __init__(self, jets: JetData, potential=None):
        n, N = jets.n, jets.N
        sp = JetSpace(n, N)
        self.space = sp
        G = [sp.mult(sp.coefficients(jets.gamma[0][m], jets.gamma[1][m], jets.gamma[2][m])) for m in range(n)]
        R = sp.mult(sp.coefficients(*jets.rho))
        Rinv = np.linalg.inv(R)
        Bc = [sp.mult(sp.coefficients(jets.conn[0][m], jets.conn[1][m], jets.conn[2][m])) for m in range(n)]
        cov = [sp.deriv(m) + Bc[m] for m in range(n)]
        self.G = G
        self.D = 1j * sum(G[m] @ R @ cov[m] @ Rinv for m in range(n))
        self.Dbar = 1j * sum(Rinv @ cov[m] @ R @ G[m] for m in range(n))
        self.DbarD = self.Dbar @ self.D
        if potential is not None:
            # only the value at x reaches the degree-zero corner
            V = np.asarray(potential, complex).reshape(N, N)
            self.DbarD = self.DbarD + sp.mult(sp.coefficients(V, np.zeros((n, N, N)), np.zeros((n, n, N, N))))
        # K(xi) = xi_mu K_mu and H(xi) = xi_mu xi_nu GG_{mu nu}
        self.K = np.stack([-(G[m] @ self.D) - self.Dbar @ G[m] for m in range(n)])
        self.GG = np.einsum("mab,nbc->mnac", np.stack(G), np.stack(G))

    def H(self, xi) -> np.ndarray:
        return np.einsum("m,n,mnab->ab", xi, xi, self.GG)

    def Kxi(self, xi) -> np.ndarray:
        return np.einsum("m,mab->ab", xi, self.K)
