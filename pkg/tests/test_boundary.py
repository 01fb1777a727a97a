from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from heatkern.boundary import (
    ContourSpec,
    boundary_density,
    boundary_green,
    compute_A1,
    halfline_operator,
    phi,
    phi0,
    phi_dy,
    psi1,
    psi1_closed_form,
    psi1_estimate,
    resolvent_symbol,
    solve_halfline_ode,
    spectrum,
)
from heatkern.errors import ContourPlacementError, CrossValidationError, EllipticityError, NearSpectrumError
from heatkern.models import I2, SX, SY, SZ, clifford_symbol, disk_boundary_mesh, interval_boundary_mesh
from heatkern.symbol import BoundarySplit, DiracSymbol, boundary_split, coordinate_chart

SQRT_PI = math.sqrt(math.pi)
B_SPLIT = BoundarySplit(SX, np.diag([1.0, 2.0]))  # B = AC + CA = 3 sx


def herm(rng, n, scale=1.0):
    X = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return scale * (X + X.conj().T) / 2


def random_split(seed: int, N: int = 2) -> BoundarySplit:
    rng = np.random.default_rng(seed)
    w = rng.uniform(0.6, 1.6, N) * rng.choice([-1, 1], N)
    U, _ = np.linalg.qr(rng.normal(size=(N, N)) + 1j * rng.normal(size=(N, N)))
    A = U @ np.diag(w) @ U.conj().T
    return BoundarySplit(A, herm(rng, N, 0.7))


samples = settings(max_examples=100, deadline=None)


# -- resolvent symbol ---------------------------------------------------------


def test_resolvent_examples():
    assert np.allclose(resolvent_symbol(BoundarySplit(I2, 0 * I2), -1, 1.0), 0.5 * I2)
    got = resolvent_symbol(BoundarySplit(I2, np.diag([1.0, 2.0])), -1, 0.0)
    assert np.allclose(got, np.diag([0.5, 0.2]))


def test_resolvent_hermitian_with_B():
    R = resolvent_symbol(B_SPLIT, -1.0, 0.7)
    assert np.max(np.abs(R - R.conj().T)) < 1e-12


def test_resolvent_near_spectrum():
    with pytest.raises(NearSpectrumError):
        resolvent_symbol(BoundarySplit(I2, 0 * I2), 1.0, 1.0)


def test_spectrum_rejects_real_axis():
    with pytest.raises(NearSpectrumError):
        spectrum(BoundarySplit(I2, 0 * I2), 1.0)


# -- Phi -------------------------------------------------------------------


def test_phi_scalar_fourier_pair():
    s = BoundarySplit(I2, 0 * I2)
    for y in (-1.3, 0.0, 0.4, 2.0):
        assert np.allclose(phi(s, -1.0, y), 0.5 * math.exp(-abs(y)) * I2, atol=1e-14)


def test_phi0_examples():
    assert np.allclose(phi0(BoundarySplit(I2, 0 * I2), -1).phi0, 0.5 * I2, atol=1e-14)
    # anticommuting pair with C^2 = 3: 1 / (2 sqrt(3 + 1))
    assert np.allclose(phi0(BoundarySplit(SX, math.sqrt(3) * SY), -1).phi0, 0.25 * I2, atol=1e-14)


def test_phi0_methods_agree_with_B():
    r = phi0(B_SPLIT, -1.0)
    q = phi0(B_SPLIT, -1.0, "quadrature")
    assert np.max(np.abs(r.phi0 - q.phi0)) < 1e-8
    assert np.max(np.abs(r.dphi0 - q.dphi0)) < 1e-8
    phi0(B_SPLIT, -1.0, cross_check=True)


def test_phi0_cross_check_reports_disagreement():
    with pytest.raises(CrossValidationError):
        phi0(B_SPLIT, -1.0, cross_check=True, tol=1e-30)


@given(seed=st.integers(0, 10**6), lam=st.floats(-5.0, -0.05))
@samples
def test_phi0_closed_form_when_anticommuting(seed, lam):
    rng = np.random.default_rng(seed)
    a, c = rng.uniform(0.5, 2.0), rng.normal(size=2)
    A = a * SX
    C = c[0] * SY + c[1] * SZ  # anticommutes with sx: B = 0
    s = BoundarySplit(A, C)
    r = phi0(s, lam)
    k = phi0(s, lam, "closed-form")
    assert np.max(np.abs(r.phi0 - k.phi0)) < 1e-8 * max(1.0, np.max(np.abs(k.phi0)))
    assert np.max(np.abs(r.dphi0 - k.dphi0)) < 1e-8 * max(1.0, np.max(np.abs(k.dphi0)))


@given(seed=st.integers(0, 10**6), y=st.floats(-3.0, 3.0), lr=st.floats(-4.0, -0.1), li=st.floats(-3.0, 3.0))
@samples
def test_phi_symmetry_relations(seed, y, lr, li):
    s = random_split(seed)
    lam = complex(lr, li)
    # Phi(lam, y)^dagger = Phi(conj lam, -y)
    assert np.max(np.abs(phi(s, lam, y).conj().T - phi(s, lam.conjugate(), -y))) < 1e-9
    # xi_hat -> -xi_hat flips C, which is y -> -y
    flipped = BoundarySplit(s.A, -s.C)
    assert np.max(np.abs(phi(flipped, lam, y) - phi(s, lam, -y))) < 1e-9


@given(seed=st.integers(0, 10**6), lam=st.floats(-4.0, -0.1))
@samples
def test_phi0_even_and_positive(seed, lam):
    s = random_split(seed)
    p = phi0(s, lam).phi0
    assert np.max(np.abs(p - phi0(BoundarySplit(s.A, -s.C), lam).phi0)) < 1e-10
    assert np.max(np.abs(p - p.conj().T)) < 1e-10
    assert np.linalg.eigvalsh(0.5 * (p + p.conj().T))[0] > 0


@given(seed=st.integers(0, 10**6), y=st.floats(-2.0, 2.0), t=st.floats(0.2, 5.0))
@samples
def test_phi_homogeneity(seed, y, t):
    s = random_split(seed)
    lam = -1.0 + 0.5j
    lhs = phi(s.scaled(1 / math.sqrt(t)), lam / t, math.sqrt(t) * y)
    assert np.max(np.abs(lhs - math.sqrt(t) * phi(s, lam, y))) < 1e-9 * max(1.0, math.sqrt(t))


@given(seed=st.integers(0, 10**6))
@samples
def test_phi_decay(seed):
    s = random_split(seed)
    spec = spectrum(s, -1.0)
    rate = float(np.min(np.abs(spec.roots.imag)))
    y = 40.0 / rate
    assert np.max(np.abs(phi(s, -1.0, y, spec))) < 1e-12
    assert np.max(np.abs(phi(s, -1.0, -y, spec))) < 1e-12


@given(seed=st.integers(0, 10**6))
@samples
def test_phi_derivative_jump(seed):
    s = random_split(seed)
    jump = phi_dy(s, -1.0, 0.0, +1) - phi_dy(s, -1.0, 0.0, -1)
    assert np.max(np.abs(jump + np.linalg.inv(s.A2))) < 1e-7


def test_phi_homogeneity_example():
    t = 2.5
    lhs = phi(B_SPLIT.scaled(1 / math.sqrt(t)), -1.0 / t, math.sqrt(t) * 0.3)
    assert np.max(np.abs(lhs - math.sqrt(t) * phi(B_SPLIT, -1.0, 0.3))) < 1e-9


# -- half-line problem --------------------------------------------------------


def test_halfline_scalar():
    sol = solve_halfline_ode(BoundarySplit(np.eye(1), np.zeros((1, 1))), -1.0, [1.0])
    for r in (0.0, 0.5, 2.0):
        assert abs(sol(r)[0] - math.exp(-r)) < 1e-12


def test_halfline_closed_form_path():
    s = BoundarySplit(1.5 * SX, 0.8 * SY)
    f = np.array([1.0, -0.5j])
    sol = solve_halfline_ode(s, -0.7, f)
    assert np.max(np.abs(sol(0.0) - f)) < 1e-10
    Ai = np.linalg.inv(s.A)
    from heatkern.algebra import matrix_exp, matrix_sqrt_analytic

    mu = matrix_sqrt_analytic(Ai @ (s.C2 + 0.7 * I2) @ Ai)
    # u = A^{-1} v solves -v'' + mu^2 v = 0 when B = 0
    ref = Ai @ matrix_exp(-1.3 * mu) @ s.A @ f
    assert np.max(np.abs(sol(1.3) - ref)) < 1e-10


@pytest.mark.parametrize("r", [0.1, 0.5, 1.0, 2.0])
def test_halfline_residual_with_B(r):
    f = np.array([1.0, 0.3 + 0.2j])
    sol = solve_halfline_ode(B_SPLIT, -1.0, f)
    assert np.max(np.abs(halfline_operator(B_SPLIT, -1.0, sol, r))) < 1e-6 * np.linalg.norm(f)
    assert np.max(np.abs(sol(0.0) - f)) < 1e-9
    assert np.max(np.abs(sol(60.0))) < 1e-12


def test_green_dirichlet_and_homogeneity():
    lam = -1.0 + 0.3j
    spec = spectrum(B_SPLIT, lam)
    for r2 in (0.2, 1.1):
        # full kernel Phi(r - r') + F_B vanishes at r = 0
        G0 = phi(B_SPLIT, lam, -r2, spec) + boundary_green(B_SPLIT, lam, 0.0, r2, spec)
        assert np.max(np.abs(G0)) < 1e-12

        def F(r, r2=r2):
            return boundary_green(B_SPLIT, lam, r, r2, spec)

        for r in (0.3, 1.0):
            assert np.max(np.abs(halfline_operator(B_SPLIT, lam, F, r))) < 1e-6
    t = 1.7
    lhs = boundary_green(B_SPLIT.scaled(1 / math.sqrt(t)), lam / t, math.sqrt(t) * 0.4, math.sqrt(t) * 0.9)
    assert np.max(np.abs(lhs - math.sqrt(t) * boundary_green(B_SPLIT, lam, 0.4, 0.9))) < 1e-8


def test_split_rejects_singular_normal_block():
    with pytest.raises(EllipticityError):
        BoundarySplit(np.diag([1.0, 0.0]), I2)


# -- Psi1 -------------------------------------------------------------------


def test_psi1_laplace_limit():
    assert abs(psi1(BoundarySplit(SX, 0 * I2)) + SQRT_PI) < 1e-7


def test_psi1_closed_form_blocks():
    Z = np.zeros((2, 2))
    A = np.block([[SX, Z], [Z, SX]])
    C = np.block([[SY, Z], [Z, 2 * SY]])
    s = BoundarySplit(A, C)
    want = -SQRT_PI * (math.exp(-1) + math.exp(-4))
    assert abs(psi1_closed_form(s) - want) < 1e-14
    assert abs(psi1(s) - want) < 1e-7


@given(seed=st.integers(0, 10**6))
@settings(max_examples=30, deadline=None)
def test_psi1_contour_matches_closed_form(seed):
    rng = np.random.default_rng(seed)
    A = rng.uniform(0.5, 2.0) * SX
    C = rng.normal() * SY + rng.normal() * SZ
    s = BoundarySplit(A, C)
    assert abs(psi1(s) - psi1_closed_form(s)) < 1e-6


def test_psi1_node_doubling():
    value, change = psi1_estimate(B_SPLIT)
    assert change < 1e-7
    assert abs(psi1(B_SPLIT, ContourSpec(128)) - value) < 1e-12


def test_psi1_quadrature_method_matches():
    assert abs(psi1(B_SPLIT, method="residue") - psi1(B_SPLIT, ContourSpec(32), method="quadrature")) < 1e-6


def test_contour_placement_errors():
    with pytest.raises(ContourPlacementError):
        ContourSpec(mu=-1.0)
    with pytest.raises(ContourPlacementError):
        ContourSpec(u_max=0.0)


# -- A1 ---------------------------------------------------------------------


def test_A1_disk():
    res = compute_A1(clifford_symbol(2), disk_boundary_mesh(1.0, 16))
    assert abs(res.value + 2 * math.pi**1.5) < 1e-6
    assert res.error < 1e-6


def test_A1_disk_fast_path_agrees():
    mesh = disk_boundary_mesh(1.0, 8)
    a = compute_A1(clifford_symbol(2), mesh, error_estimate=False)
    b = compute_A1(clifford_symbol(2), mesh, fast_path=True, error_estimate=False)
    assert abs(a.value - b.value) < 1e-7


@pytest.mark.parametrize("N", [1, 2])
def test_A1_interval(N):
    sym = DiracSymbol.build([np.eye(N)], lo=[-0.5], hi=[3.5])
    res = compute_A1(sym, interval_boundary_mesh(3.0))
    assert abs(res.value + SQRT_PI * N) < 1e-7


def test_boundary_density_scalar_tangential_gaussian():
    # Gamma = (c sy, sx) at a boundary x1 = 0: C = c xi sy, B = 0, density -(sqrt(pi)/2) (2/c)... per N
    c = 2.0
    sym = DiracSymbol.build([SX, c * SY])
    chart = coordinate_chart([0.0, 0.0], normal_axis=0)
    dens = boundary_density(sym, chart)
    # tr e^{-C^2} = 2 e^{-c^2 xi^2}; int d xi / sqrt(pi) of that is 2 / c
    assert abs(dens + 0.5 * SQRT_PI * 2 / c) < 1e-8


def test_A1_ellipticity_abort():
    sym = DiracSymbol.build([np.diag([1.0, 0.0]) + 1e-14 * I2, SY])
    mesh = disk_boundary_mesh(1.0, 4)
    with pytest.raises(EllipticityError):
        compute_A1(sym, mesh)


def test_boundary_split_examples():
    s = boundary_split(clifford_symbol(2), coordinate_chart([0.0, 0.0]), [1.0])
    assert np.allclose(s.B, 0)
    assert np.allclose(s.A, SX) and np.allclose(s.C, SY)
