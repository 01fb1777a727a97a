from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from heatkern.algebra import (
    hermitian_eig,
    matrix_exp,
    matrix_sqrt_analytic,
    pencil_resolvent,
    pencil_roots,
)
from heatkern.errors import BranchCutError, DegeneratePencilError, ValidationError


def rand_herm(rng, n, scale=1.0):
    X = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return scale * (X + X.conj().T) / 2


def rand_unitary(rng, n):
    Q, _ = np.linalg.qr(rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n)))
    return Q


def test_eig_identity():
    w, U = hermitian_eig(np.eye(2))
    assert np.allclose(w, [1, 1])
    assert np.allclose(U.conj().T @ U, np.eye(2))


def test_eig_two_by_two():
    w, _ = hermitian_eig([[2, 3], [3, 5]])
    assert np.allclose(w, [(7 - 3 * np.sqrt(5)) / 2, (7 + 3 * np.sqrt(5)) / 2], atol=1e-14)


def test_eig_reconstruction():
    rng = np.random.default_rng(0)
    M = rand_herm(rng, 4)
    w, U = hermitian_eig(M)
    assert np.all(np.diff(w) >= 0)
    assert np.max(np.abs(U @ np.diag(w) @ U.conj().T - M)) < 1e-10 * np.max(np.abs(M))


def test_eig_rejects_non_hermitian():
    with pytest.raises(ValidationError, match="max"):
        hermitian_eig([[1, 2], [0, 1]])


def test_exp_zero_is_identity():
    assert np.array_equal(matrix_exp(np.zeros((3, 3))), np.eye(3))


def test_exp_diagonal():
    assert np.allclose(matrix_exp(np.diag([-1.0, -4.0])), np.diag(np.exp([-1.0, -4.0])), rtol=1e-14)


def test_exp_hermitian_matches_series():
    rng = np.random.default_rng(1)
    H = rand_herm(rng, 3, 0.5)
    series = np.eye(3, dtype=complex)
    term = np.eye(3, dtype=complex)
    for k in range(1, 60):
        term = term @ H / k
        series = series + term
    assert np.max(np.abs(matrix_exp(H) - series)) < 1e-12 * np.max(np.abs(series))


def test_exp_general_matches_reference():
    rng = np.random.default_rng(2)
    M = rng.normal(size=(5, 5)) * 3 + 1j * rng.normal(size=(5, 5))
    ref = expm(M)
    assert np.max(np.abs(matrix_exp(M) - ref)) < 1e-12 * np.max(np.abs(ref))


def test_exp_batched():
    rng = np.random.default_rng(3)
    Ms = np.stack([rand_herm(rng, 3) for _ in range(4)])
    out = matrix_exp(Ms)
    for M, E in zip(Ms, out):
        assert np.allclose(E, expm(M), atol=1e-12)


def test_exp_rejects_nan():
    with pytest.raises(ValidationError):
        matrix_exp(np.array([[np.nan]]))


@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=0, max_value=2**31))
def test_exp_unitary_covariance(seed):
    rng = np.random.default_rng(seed)
    M = rand_herm(rng, 3)
    U = rand_unitary(rng, 3)
    lhs = matrix_exp(U @ M @ U.conj().T)
    rhs = U @ matrix_exp(M) @ U.conj().T
    assert np.max(np.abs(lhs - rhs)) < 1e-11 * max(1.0, np.max(np.abs(rhs)))


def test_sqrt_examples():
    assert np.allclose(matrix_sqrt_analytic(np.eye(2)), np.eye(2))
    assert np.allclose(matrix_sqrt_analytic(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]))


def test_sqrt_scalar_branch():
    lam = np.exp(3j * np.pi / 4)
    m = 2.0**2 - lam
    r = matrix_sqrt_analytic(np.array([[m]]))[0, 0]
    assert r.real > 0
    assert abs(r - np.sqrt(m)) < 1e-14


def test_sqrt_random_pd():
    rng = np.random.default_rng(4)
    for _ in range(100):
        X = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
        M = X @ X.conj().T + 0.1 * np.eye(3)
        R = matrix_sqrt_analytic(M)
        assert np.max(np.abs(R @ R - M)) < 1e-10 * np.max(np.abs(M))
        assert np.min(np.linalg.eigvalsh((R + R.conj().T) / 2)) > 0


def test_sqrt_non_normal_complex():
    rng = np.random.default_rng(5)
    M = rand_herm(rng, 3) + 4 * np.eye(3) + 0.8j * rng.normal(size=(3, 3))
    R = matrix_sqrt_analytic(M)
    assert np.max(np.abs(R @ R - M)) < 1e-10 * np.max(np.abs(M))
    assert np.all(np.linalg.eigvals(R).real > 0)


def test_sqrt_branch_cut():
    with pytest.raises(BranchCutError):
        matrix_sqrt_analytic(np.diag([1.0, -2.0]))


def test_pencil_scalar():
    spec = pencil_roots([[1]], [[0]], [[0]], -1.0)
    order = np.argsort(spec.roots.imag)
    assert np.allclose(spec.roots[order], [-1j, 1j])
    # residue of 1/(w^2+1) at w0 is 1/(2 w0)
    assert np.allclose(spec.residues[order, 0, 0], [1 / (-2j), 1 / (2j)])


def test_pencil_diag():
    spec = pencil_roots(np.diag([1.0, 4.0]), np.zeros((2, 2)), np.zeros((2, 2)), -1.0)
    r = sorted(spec.roots, key=lambda z: (z.imag))
    assert np.allclose(r, [-1j, -0.5j, 0.5j, 1j])


def test_pencil_residue_sum_zero_and_reconstruction():
    rng = np.random.default_rng(6)
    A = rand_herm(rng, 2) + 2 * np.eye(2)
    C = rand_herm(rng, 2)
    spec = pencil_roots(A @ A, A @ C + C @ A, C @ C, -1.0)
    assert len(spec.roots) == 4
    assert np.max(np.abs(spec.residues.sum(axis=0))) < 1e-10
    assert np.min(np.abs(spec.roots.imag)) > 1e-8
    for w in rng.normal(size=20) * 3:
        R = pencil_resolvent(A @ A, A @ C + C @ A, C @ C, -1.0, w)
        assert np.max(np.abs(R - spec.resolvent(w))) < 1e-8


def test_pencil_conjugate_pairs():
    rng = np.random.default_rng(7)
    A = rand_herm(rng, 3) + 3 * np.eye(3)
    C = rand_herm(rng, 3)
    spec = pencil_roots(A @ A, A @ C + C @ A, C @ C, -2.0)
    up = np.sort_complex(spec.roots[spec.upper])
    down = np.sort_complex(np.conj(spec.roots[~spec.upper]))
    assert spec.upper.sum() == 3
    assert np.allclose(up, down, atol=1e-10)


def test_pencil_defective_perturbs():
    # A=1, C=0, lam=0: double root at 0
    spec = pencil_roots([[1]], [[0]], [[0]], 0.0)
    assert spec.perturbed
    assert spec.lam != 0
    with pytest.raises(DegeneratePencilError):
        pencil_roots([[1]], [[0]], [[0]], 0.0, retry=False)
