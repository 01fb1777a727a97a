"""Dense complex matrix kernel.

Hermitian eigendecomposition, matrix exponential, principal matrix square
root and the quadratic pencil ``A2 w^2 + B1 w + C0 - lam I`` with its root /
residue data.  Every function accepts plain ``numpy`` arrays; the exponential
also accepts stacks of matrices with shape ``(..., n, n)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import BranchCutError, DegeneratePencilError, ValidationError

HERMITIAN_TOL = 1e-12
DEFECT_TOL = 1e-8
PERTURBATION = 1e-6


def as_cmatrix(M, name: str = "matrix") -> np.ndarray:
    M = np.asarray(M, dtype=complex)
    if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] < 1:
        raise ValidationError(f"{name} must be a non-empty square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValidationError(f"{name} has non-finite entries")
    return M


def hermitian_defect(M) -> float:
    """Max-norm of ``M - M^H`` (works on stacks)."""
    M = np.asarray(M)
    return float(np.max(np.abs(M - np.swapaxes(M.conj(), -1, -2)), initial=0.0))


def is_hermitian(M, tol: float = HERMITIAN_TOL) -> bool:
    M = np.asarray(M)
    scale = max(float(np.max(np.abs(M), initial=0.0)), 1.0)
    return hermitian_defect(M) <= tol * scale


def hermitian_eig(M, tol: float = HERMITIAN_TOL):
    """Ascending eigenvalues and unitary eigenvectors of a Hermitian matrix."""
    M = as_cmatrix(M)
    scale = float(np.max(np.abs(M)))
    asym = hermitian_defect(M)
    if asym > tol * max(scale, 1e-300) and asym > 0.0:
        raise ValidationError(f"matrix is not Hermitian: max|M - M^H| = {asym:.3e}")
    w, U = np.linalg.eigh(0.5 * (M + M.conj().T))
    return w, U


def matrix_exp(M, hermitian: bool | None = None) -> np.ndarray:
    """Matrix exponential.

    Hermitian inputs go through ``eigh``; anything else through scipy's
    scaling-and-squaring Pade(13) ``expm``.  ``hermitian=None`` detects.
    """
    M = np.asarray(M, dtype=complex)
    if M.ndim < 2 or M.shape[-1] != M.shape[-2]:
        raise ValidationError(f"matrix_exp needs square matrices, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValidationError("matrix_exp input has non-finite entries")
    if hermitian is None:
        hermitian = is_hermitian(M)
    if not np.any(M):
        return np.broadcast_to(np.eye(M.shape[-1], dtype=complex), M.shape).copy()
    if hermitian:
        w, U = np.linalg.eigh(0.5 * (M + np.swapaxes(M.conj(), -1, -2)))
        return (U * np.exp(w)[..., None, :]) @ np.swapaxes(U.conj(), -1, -2)
    return sla.expm(M)


def matrix_sqrt_analytic(M, origin_branch: str = "principal", tol: float = 1e-10) -> np.ndarray:
    """Square root whose eigenvalues have positive real part.

    This is the branch reached by continuation from a positive definite
    matrix as long as no eigenvalue crosses the closed negative real axis.
    Only the ``"principal"`` branch is implemented.
    """
    if origin_branch != "principal":
        raise ValidationError(f"unknown branch {origin_branch!r}")
    M = as_cmatrix(M)
    scale = max(float(np.max(np.abs(M))), 1e-300)
    if is_hermitian(M):
        w, U = np.linalg.eigh(0.5 * (M + M.conj().T))
        if w[0] > tol * scale:
            return (U * np.sqrt(w)) @ U.conj().T
    ev = np.linalg.eigvals(M)
    near_cut = (ev.real <= tol * scale) & (np.abs(ev.imag) <= tol * scale)
    if np.any(near_cut):
        bad = ev[near_cut][0]
        raise BranchCutError(f"eigenvalue {bad:.3e} lies on the branch cut (-inf, 0]")
    R = sla.sqrtm(M)
    resid = float(np.max(np.abs(R @ R - M))) / scale
    if resid > 1e-8:
        raise BranchCutError(f"square root residual {resid:.2e}; matrix too close to defective")
    return np.asarray(R, dtype=complex)


@dataclass(frozen=True)
class PencilSpectrum:
    """Roots ``w_j`` and matrix residues of ``R(w) = (A2 w^2 + B1 w + C0 - lam)^-1``.

    ``lam`` is the spectral parameter actually used (it differs from the
    requested one when a defective pencil forced a perturbation).
    """

    roots: np.ndarray
    residues: np.ndarray
    lam: complex
    perturbed: bool = False
    condition: float = 1.0
    _upper: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_upper", self.roots.imag > 0)

    @property
    def upper(self) -> np.ndarray:
        """Boolean mask of roots in the open upper half plane."""
        return self._upper

    def resolvent(self, omega) -> np.ndarray:
        """Evaluate ``R`` at ``omega`` from the partial-fraction expansion."""
        return np.einsum("j,jab->ab", 1.0 / (omega - self.roots), self.residues)


def _companion(A2, B1, C0, lam):
    N = A2.shape[0]
    A2inv = np.linalg.inv(A2)
    top = np.hstack([np.zeros((N, N), complex), np.eye(N)])
    bottom = np.hstack([-A2inv @ (C0 - lam * np.eye(N)), -A2inv @ B1])
    return np.vstack([top, bottom]), A2inv


def pencil_roots(A2, B1, C0, lam: complex, defect_tol: float = DEFECT_TOL,
                 retry: bool = True) -> PencilSpectrum:
    """All ``2N`` roots of ``det(A2 w^2 + B1 w + C0 - lam) = 0`` with residues.

    Linearizes with the first companion form premultiplied by ``A2^-1``.  For
    a diagonalizable companion ``L = V diag(w) V^-1`` the resolvent is
    ``sum_j V[:N, j] (V^-1)[j, N:] A2^-1 / (w - w_j)``.  A badly conditioned
    eigenvector matrix signals a defective root cluster; the spectral
    parameter is then shifted by ``1e-6 (1 + |lam|)`` once.
    """
    A2 = as_cmatrix(A2, "A2")
    B1 = as_cmatrix(B1, "B1")
    C0 = as_cmatrix(C0, "C0")
    N = A2.shape[0]
    if B1.shape != (N, N) or C0.shape != (N, N):
        raise ValidationError("pencil coefficients must share one shape")
    if np.linalg.cond(A2) > 1e14:
        raise ValidationError("leading pencil coefficient A2 is singular")
    lam = complex(lam)
    L, A2inv = _companion(A2, B1, C0, lam)
    w, V = np.linalg.eig(L)
    cond = float(np.linalg.cond(V))
    if not np.isfinite(cond) or cond * defect_tol > 1.0:
        if retry:
            shifted = lam - PERTURBATION * (1.0 + abs(lam))
            spec = pencil_roots(A2, B1, C0, shifted, defect_tol, retry=False)
            return PencilSpectrum(spec.roots, spec.residues, spec.lam, True, spec.condition)
        raise DegeneratePencilError(
            f"defective root cluster at lam={lam:.6g} (eigenvector condition {cond:.2e}); "
            "perturb lam slightly and retry"
        )
    Vinv = np.linalg.inv(V)
    right = V[:N, :]
    left = Vinv[:, N:] @ A2inv
    residues = np.einsum("aj,jb->jab", right, left)
    return PencilSpectrum(w, residues, lam, False, cond)


def pencil_resolvent(A2, B1, C0, lam: complex, omega: complex) -> np.ndarray:
    """Direct inverse of ``A2 w^2 + B1 w + C0 - lam`` (reference path)."""
    A2 = np.asarray(A2, complex)
    N = A2.shape[0]
    P = A2 * omega**2 + np.asarray(B1) * omega + np.asarray(C0) - lam * np.eye(N)
    return np.linalg.inv(P)
