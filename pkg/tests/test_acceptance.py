"""Acceptance run: one PASS/FAIL line per criterion with timing.

Run with ``python3 tests/test_acceptance.py`` or through pytest, where each
criterion is a separate test and the summary lines are printed unbuffered.
"""

from __future__ import annotations

import math
import time

import numpy as np
import pytest

from heatkern.boundary import compute_A1, phi, phi0, psi1, psi1_closed_form, spectrum
from heatkern.finsler import FlowState, branch_value, finsler_metric, flow
from heatkern.interior import check_a1, compute_a0, compute_a2, integrate_density
from heatkern.models import (
    I2,
    SX,
    SY,
    SZ,
    circle_symbol,
    clifford_symbol,
    disk_boundary_mesh,
    interval_boundary_mesh,
    periodic_density_symbol,
)
from heatkern.oracle import Geometry, discretize, fit_heat_invariants, halfline_psi1, index_check
from heatkern.symbol import BoundarySplit, DiracSymbol, FunctionField, PolynomialField

SQRT_PI = math.sqrt(math.pi)
TWO_PI = 2 * math.pi


def random_split(rng, N=2, anticommuting=False) -> BoundarySplit:
    if anticommuting:
        return BoundarySplit(rng.uniform(0.5, 2.0) * SX, rng.normal() * SY + rng.normal() * SZ)
    w = rng.uniform(0.6, 1.6, N) * rng.choice([-1, 1], N)
    U, _ = np.linalg.qr(rng.normal(size=(N, N)) + 1j * rng.normal(size=(N, N)))
    X = rng.normal(size=(N, N)) + 1j * rng.normal(size=(N, N))
    return BoundarySplit(U @ np.diag(w) @ U.conj().T, 0.35 * (X + X.conj().T))


def worst(checks: dict) -> str:
    return ", ".join(f"{k}={v:.2e}" for k, v in checks.items())


# -- criteria -----------------------------------------------------------------


def criterion_1():
    disk = compute_A1(clifford_symbol(2), disk_boundary_mesh(1.0, 16)).value
    rel = {"disk": abs(disk + 2 * math.pi**1.5) / (2 * math.pi**1.5)}
    for N in (1, 2):
        sym = DiracSymbol.build([np.eye(N)], lo=[-0.5], hi=[3.5])
        val = compute_A1(sym, interval_boundary_mesh(3.0)).value
        rel[f"interval_N{N}"] = abs(val + SQRT_PI * N) / (SQRT_PI * N)
    return max(rel.values()) < 5e-3, "relative errors " + worst(rel)


def criterion_2():
    rng = np.random.default_rng(20)
    d_phi = d_psi = 0.0
    for k in range(50):
        s = random_split(rng, anticommuting=True)
        lam = -rng.uniform(0.05, 5.0)
        r, c = phi0(s, lam), phi0(s, lam, "closed-form")
        scale = max(1.0, float(np.max(np.abs(c.phi0))))
        d_phi = max(d_phi, float(np.max(np.abs(r.phi0 - c.phi0))) / scale)
        if k < 20:
            d_psi = max(d_psi, abs(psi1(s) - psi1_closed_form(s)))
    return d_phi < 1e-8 and d_psi < 1e-6, f"phi0 residue vs closed form {d_phi:.2e}, psi1 {d_psi:.2e}"


def criterion_3():
    rng = np.random.default_rng(30)
    err = dict.fromkeys(("symmetry", "reflection", "evenness", "homogeneity", "decay"), 0.0)
    err["min_phi0_eigenvalue"] = math.inf
    with_B = 0
    for _ in range(100):
        s = random_split(rng)
        with_B += bool(np.max(np.abs(s.B)) > 1e-8)
        lam = complex(-rng.uniform(0.1, 4.0), rng.uniform(-3.0, 3.0))
        y = rng.uniform(-3.0, 3.0)
        t = rng.uniform(0.2, 5.0)
        spec = spectrum(s, lam)
        p = phi(s, lam, y, spec)
        flipped = BoundarySplit(s.A, -s.C)
        err["symmetry"] = max(err["symmetry"], float(np.max(np.abs(p.conj().T - phi(s, lam.conjugate(), -y)))))
        err["reflection"] = max(err["reflection"], float(np.max(np.abs(phi(flipped, lam, y) - phi(s, lam, -y)))))
        lhs = phi(s.scaled(1 / math.sqrt(t)), lam / t, math.sqrt(t) * y)
        err["homogeneity"] = max(err["homogeneity"], float(np.max(np.abs(lhs - math.sqrt(t) * p))) / math.sqrt(t))
        far = 40.0 / float(np.min(np.abs(spec.roots.imag)))
        err["decay"] = max(err["decay"], float(np.max(np.abs(phi(s, lam, far, spec)))),
                           float(np.max(np.abs(phi(s, lam, -far, spec)))))
        lr = lam.real
        p0 = phi0(s, lr).phi0
        err["evenness"] = max(err["evenness"], float(np.max(np.abs(p0 - phi0(flipped, lr).phi0))))
        err["min_phi0_eigenvalue"] = min(err["min_phi0_eigenvalue"],
                                         float(np.linalg.eigvalsh(0.5 * (p0 + p0.conj().T))[0]))
    ok = (err["symmetry"] < 1e-9 and err["reflection"] < 1e-9 and err["evenness"] < 1e-9
          and err["homogeneity"] < 1e-9 and err["decay"] < 1e-12 and err["min_phi0_eigenvalue"] > 0 and with_B >= 90)
    return ok, f"{with_B}/100 with B != 0; " + worst(err)


def criterion_4():
    a0 = max(abs(compute_a0(clifford_symbol(n), np.full(n, 0.1)).value - 2) for n in (1, 2, 3))
    G1 = PolynomialField(2, 2, {(0, 0): SX, (1, 0): 0.1 * SZ, (0, 1): 0.05 * I2})
    G2 = PolynomialField(2, 2, {(0, 0): SY + 0.3 * I2, (1, 1): 0.1 * SX})
    rho = PolynomialField(2, 2, {(0, 0): I2, (1, 0): 0.1 * SX, (0, 2): 0.05 * I2})
    B1 = PolynomialField(2, 2, {(0, 0): 0.2j * SZ, (0, 1): 0.1j * SY})
    res = check_a1(DiracSymbol.build([G1, G2], rho, [B1, PolynomialField(2, 2, {(1, 0): 0.15j * I2})]), [0.2, -0.1])
    a1 = res.residual / res.a0
    # L = -d^2 + V on the circle, V constant and V = rho''/rho, against oracle fits
    rel = {}
    m = 512
    h = TWO_PI / m
    window = np.geomspace(50 * h * h, 0.2, 60)
    V = np.diag([1.0, 2.0])
    dens = compute_a2(circle_symbol(2), [1.0], potential=V).value
    fit = fit_heat_invariants(discretize(circle_symbol(2), Geometry("circle", TWO_PI), m, potential=lambda x: V),
                              window, k_max=6)
    rel["constant_V"] = abs(dens * TWO_PI - fit.A(2)) / abs(fit.A(2))
    exact_density = abs(dens + np.trace(V).real)
    sym = periodic_density_symbol([0.7, -0.4])
    xs = (np.arange(32) + 0.5) * TWO_PI / 32
    total, _ = integrate_density(lambda p: compute_a2(sym, [p]), xs, np.full(32, TWO_PI / 32))
    fit = fit_heat_invariants(discretize(sym, Geometry("circle", TWO_PI), m), window, k_max=6)
    rel["rho_generated_V"] = abs(total - fit.A(2)) / abs(fit.A(2))
    ok = a0 < 1e-8 and a1 < 1e-8 and exact_density < 1e-10 and max(rel.values()) < 1e-2
    return ok, (f"a0 err {a0:.2e}, a1 residual/a0 {a1:.2e}, a2 + tr V {exact_density:.2e}, "
                "a2 vs oracle " + worst(rel))


def criterion_5():
    splits = {"sx|0.8(sy+I/2)": BoundarySplit(SX, 0.8 * (SY + 0.5 * I2)),
              "sx|diag(1,2)": BoundarySplit(SX, np.diag([1.0, 2.0])),
              "mixed": BoundarySplit(1.3 * SX + 0.2 * SZ, 0.6 * SY + 0.4 * SZ + 0.3 * I2)}
    rel = {}
    for name, s in splits.items():
        assert np.max(np.abs(s.B)) > 0.1
        contour = psi1(s)
        rel[name] = abs(halfline_psi1(s).psi1 - contour) / abs(contour)
    return max(rel.values()) < 1e-2, "contour vs half-line " + worst(rel)


def criterion_6():
    gamma = FunctionField(1, 2, lambda x: SX * (1 + 0.3 * math.sin(x[0])))
    rho = FunctionField(1, 2, lambda x: math.exp(0.1 * math.cos(x[0])) * I2)
    conn = FunctionField(1, 2, lambda x: 0.3j * math.cos(x[0]) * SZ + 0.2j * SY)
    gamma2 = FunctionField(1, 2, lambda x: SX + 0.4 * SZ + 0.2 * math.sin(x[0]) * SY)
    cases = {"sx(1+0.3 sin)": DiracSymbol.build([gamma], rho=rho, lo=[0.0], hi=[TWO_PI]),
             "with connection": DiracSymbol.build([gamma2], rho=rho, conn=[conn], lo=[0.0], hi=[TWO_PI])}
    out = {}
    ok = True
    for name, sym in cases.items():
        r = index_check(sym, Geometry("circle", TWO_PI), 128)
        out[f"{name} pair"] = r.paired_spectra_residual
        out[f"{name} spread"] = r.trace_diff_spread
        ok &= r.paired_spectra_residual < 1e-8 and r.trace_diff_spread < 1e-6 and r.index == 0
    return ok, worst(out)


def criterion_7():
    G1 = PolynomialField(2, 2, {(0, 0): SX, (0, 1): 0.1 * SZ})
    G2 = PolynomialField(2, 2, {(0, 0): SY + 0.3 * I2, (1, 0): 0.1 * SX})
    sym = DiracSymbol.build([G1, G2], lo=[-2, -2], hi=[2, 2])
    rng = np.random.default_rng(70)
    ident = homog = 0.0
    for _ in range(20):
        x = rng.uniform(-0.5, 0.5, 2)
        xi = rng.normal(size=2)
        for a in (0, 1):
            fb = finsler_metric(sym, x, xi, a)
            ident = max(ident, abs(xi @ fb.g_contra @ xi - fb.h) / fb.h)
            g3 = finsler_metric(sym, x, 3 * xi, a).g_contra
            homog = max(homog, float(np.max(np.abs(g3 - fb.g_contra))))
    traj = flow(sym, FlowState(np.array([0.1, -0.2]), np.array([0.5, 1.0]), 1), 1e-3, 1000)
    drift = abs(branch_value(sym, traj[-1]) - branch_value(sym, traj[0])) / branch_value(sym, traj[0])
    ok = ident < 1e-6 and homog < 1e-6 and drift < 1e-6
    return ok, f"identity {ident:.2e}, degree-0 {homog:.2e}, flow drift over 1000 steps {drift:.2e}"


def criterion_8():
    rel = {}
    L = math.pi
    for N in (1, 2):
        sym = DiracSymbol.build([np.eye(N)], lo=[0.0], hi=[L])
        fit = fit_heat_invariants(discretize(sym, Geometry("interval", L), 256), k_max=2)
        rel[f"A0_N{N}"] = abs(fit.A(0) - N * L) / (N * L)
        rel[f"A1_N{N}"] = abs(fit.A(1) + SQRT_PI * N) / (SQRT_PI * N)
    ms = np.array([64, 128, 256])
    sym = DiracSymbol.build([np.eye(1)], lo=[0.0], hi=[L])
    errs = [abs(discretize(sym, Geometry("interval", L), m).eigenvalues()[0] - 1) for m in ms]
    slope = -float(np.polyfit(np.log(ms), np.log(errs), 1)[0])
    ok = all(v < 1e-2 for k, v in rel.items() if k.startswith("A0")) and \
        all(v < 2e-2 for k, v in rel.items() if k.startswith("A1")) and abs(slope - 2) < 0.2
    return ok, worst(rel) + f", eigenvalue exponent {slope:.3f}"


CRITERIA = {
    1: ("Dirichlet Laplacian limit of A1", criterion_1, 60),
    2: ("B = 0 closed forms", criterion_2, 60),
    3: ("Phi property suite", criterion_3, 120),
    4: ("interior invariants", criterion_4, 120),
    5: ("general B half-line cross-validation", criterion_5, 300),
    6: ("index identities", criterion_6, 60),
    7: ("Finsler suite", criterion_7, 60),
    8: ("oracle convergence", criterion_8, 120),
}


def run(k: int) -> tuple[bool, str]:
    name, fn, budget = CRITERIA[k]
    start = time.perf_counter()
    try:
        ok, detail = fn()
    except Exception as exc:  # a crash is a failure, reported on its line
        ok, detail = False, f"{type(exc).__name__}: {exc}"
    elapsed = time.perf_counter() - start
    ok = ok and elapsed < budget
    line = f"{'PASS' if ok else 'FAIL'} criterion {k} ({name}) [{elapsed:.1f}s / {budget}s] {detail}"
    return ok, line


@pytest.mark.parametrize("k", sorted(CRITERIA))
def test_criterion(k, capsys):
    ok, line = run(k)
    with capsys.disabled():
        print("\n" + line)
    assert ok, line


if __name__ == "__main__":
    import sys

    results = [run(k) for k in sorted(CRITERIA)]
    for _, line in results:
        print(line)
    sys.exit(0 if all(ok for ok, _ in results) else 1)
