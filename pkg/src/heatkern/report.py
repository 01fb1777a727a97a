"""Orchestration of a full run and assembly of the invariant report."""

from __future__ import annotations

import csv
import datetime as _dt
import json
import math
import os
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .boundary import ContourSpec, boundary_split, compute_A1, phi0, psi1, psi1_closed_form
from .config import RunConfig
from .errors import EllipticityError, FlowDegeneracyError, HeatKernError
from .finsler import FlowState, branch_value, eigen_branches, finsler_metric, flow
from .interior import QuadSpec, VolterraSpec, check_a1, compare_a2_routes, compute_a0, compute_a2
from .oracle import (Geometry, default_window, discretize, fit_heat_invariants, halfline_psi1, heat_trace,
                     index_check, write_eigenvalues_csv, write_trace_csv)
from .parallel import worker_count
from .symbol import ellipticity_check

def _est(value, uncertainty=None, exact=False) -> dict:
    d = {"value": float(value)}
    if exact:
        d["exact"] = True
    else:
        d["uncertainty"] = float(uncertainty if uncertainty is not None else float("nan"))
    return d


def _rounded(obj, digits: int = 15):
    """Floats to a fixed number of significant digits so reports diff cleanly."""
    if isinstance(obj, float):
        return float(f"{obj:.{digits}g}") if math.isfinite(obj) else str(obj)
    if isinstance(obj, dict):
        return {k: _rounded(v, digits) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_rounded(v, digits) for v in obj]
    if isinstance(obj, np.generic):
        return _rounded(obj.item(), digits)
    return obj


def _ellipticity(sym, cfg: RunConfig, force: bool) -> dict:
    opts = cfg.section("ellipticity") or {}
    verdict = ellipticity_check(sym, directions=opts.get("directions", 512), grid=opts.get("grid", 8),
                                threshold=opts.get("threshold", 1e-8))
    out = verdict.as_dict()
    if not verdict.elliptic:
        if not force:
            raise EllipticityError(
                f"symbol is not elliptic: min eigenvalue {verdict.min_eigenvalue:.3e} "
                f"at x={np.asarray(verdict.witness_x).tolist()}, xi={np.asarray(verdict.witness_xi).tolist()}",
                witness=(verdict.witness_x, verdict.witness_xi))
        out["forced"] = True
    return out


def _interior(sym, cfg: RunConfig, workers) -> dict:
    it = cfg.section("interior")
    quad = QuadSpec(scheme=it.get("scheme", "polar"), order=it.get("order", 24))
    vspec = VolterraSpec(it.get("volterra_order", 24))
    method = it.get("a2_method", "augmented")
    pot = cfg.potential()
    rows = []
    for x in it["points"]:
        a0 = compute_a0(sym, x, quad, tol=cfg.tolerance("a0"))
        a1 = check_a1(sym, x, quad, rel_tol=cfg.tolerance("a1"), workers=workers)
        a2 = compute_a2(sym, x, quad, method=method, volterra=vspec, tol=cfg.tolerance("a2"), workers=workers,
                        potential=pot)
        row = {"x": list(map(float, x)), "a0": _est(a0.value, a0.error), "a1_residual": a1.residual,
               "a1_passed": a1.passed, "a2": _est(a2.value, a2.error)}
        if it.get("cross_check", False):
            order = it.get("cross_check_order", 12)
            cmp = compare_a2_routes(sym, x, QuadSpec(quad.scheme, order), VolterraSpec(order), workers=workers,
                                    potential=pot)
            row["a2_route_check"] = cmp.as_dict()
        warn = [w for w in (a0.warning, a2.warning) if w]
        if warn:
            row["warnings"] = warn
        rows.append(row)
    out = {"points": rows}
    if "weights" in it:
        w = np.asarray(it["weights"], float)
        for key, name in (("a0", "A0"), ("a2", "A2")):
            vals = np.array([r[key]["value"] for r in rows])
            errs = np.array([r[key]["uncertainty"] for r in rows])
            out[name] = _est(w @ vals, np.abs(w) @ errs)
    return out


def _boundary(sym, cfg: RunConfig, workers) -> dict:
    b = cfg.section("boundary")
    mesh = cfg.boundary_mesh()
    cs = b.get("contour", {})
    contour = ContourSpec(cs.get("nodes", 64), cs.get("mu", 4.0), cs.get("u_max", 3.0))
    res = compute_A1(sym, mesh, order=b.get("order", 16), contour=contour,
                     fast_path=b.get("fast_path", False), workers=workers)
    out = {"A1": _est(res.value, res.error), "method": res.method, "densities": res.densities.tolist()}
    split = boundary_split(sym, mesh.charts[0], np.zeros(sym.n - 1))
    lam = -1.0 - float(np.max(np.linalg.eigvalsh(split.C2)))
    s_res = phi0(split, lam, "residue")
    s_quad = phi0(split, lam, "quadrature")
    checks = {"phi0_residue_vs_quadrature": float(np.max(np.abs(s_res.phi0 - s_quad.phi0)))}
    contour_value = psi1(split, contour)
    if np.max(np.abs(split.B)) <= 1e-12:
        checks["psi1_contour_vs_closed_form"] = abs(contour_value - psi1_closed_form(split))
    if b.get("halfline_check", False):
        fit = halfline_psi1(split)
        checks["psi1_contour_vs_halfline"] = abs(contour_value - fit.psi1)
        checks["halfline_psi1"] = fit.psi1
    out["cross_checks"] = checks
    return out


def run_oracle(sym, cfg: RunConfig, report: dict, csv_dir: Path | None) -> dict:
    o = cfg.section("oracle")
    geom = Geometry(o["geometry"], float(o["length"]))
    m = o.get("m", 256)
    kind = o.get("kind", "DbarD")
    pot = cfg.potential()
    op = discretize(sym, geom, m, kind, potential=(lambda x: pot([x])) if pot is not None else None)
    window = o.get("t_window")
    t = np.geomspace(window[0], window[1], o.get("samples", 40)) if window else default_window(op, o.get("samples", 40))
    fit = fit_heat_invariants(op, t, k_max=o.get("k_max", 2))
    out = {"geometry": geom.kind, "length": geom.length, "m": m, "kind": kind, "fit": fit.as_dict()}
    deltas = {}
    interior = report.get("interior", {})
    if "A0" in interior:
        deltas["A0"] = abs(fit.A(0) - interior["A0"]["value"])
    # on an interval the fitted A2 also holds boundary terms that are not computed
    if "A2" in interior and 2 in fit.powers and geom.closed:
        deltas["A2"] = abs(fit.A(2) - interior["A2"]["value"])
    if "boundary" in report and 1 in fit.powers and not geom.closed:
        deltas["A1"] = abs(fit.A(1) - report["boundary"]["A1"]["value"])
    out["cross_check_deltas"] = deltas
    if kind == "DbarD" and geom.closed:
        times = o.get("index_times", [0.1, 0.5, 1.0, 2.0])
        out["index"] = index_check(sym, geom, m, times).as_dict()
    if csv_dir is not None:
        write_eigenvalues_csv(csv_dir / "eigenvalues.csv", op)
        write_trace_csv(csv_dir / "trace.csv", t, heat_trace(op, t))
    return out


def _finsler(sym, cfg: RunConfig, csv_dir: Path | None) -> dict:
    f = cfg.section("finsler")
    out = {"samples": []}
    for s in f.get("samples", []):
        entry = {"x": s["x"], "xi": s["xi"], "branch": s["branch"],
                 "branches": [[b.h, b.multiplicity] for b in eigen_branches(sym, s["x"], s["xi"])]}
        try:
            fb = finsler_metric(sym, s["x"], s["xi"], s["branch"])
            xi = np.asarray(s["xi"], float)
            entry.update({"h": fb.h, "g_contra": fb.g_contra.tolist(), "convex": fb.convex,
                          "degenerate": fb.degenerate,
                          "homogeneity_residual": abs(float(xi @ fb.g_contra @ xi) - fb.h) / fb.h})
        except HeatKernError as exc:
            entry["error"] = f"{type(exc).__name__}: {exc}"
        out["samples"].append(entry)
    if "flow" in f:
        fl = f["flow"]
        state = FlowState(np.asarray(fl["x"], float), np.asarray(fl["xi"], float), fl["branch"])
        try:
            traj = flow(sym, state, fl.get("dt", 1e-3), fl.get("steps", 1000))
        except FlowDegeneracyError as exc:
            out["flow"] = {"error": str(exc)}
        else:
            h0, h1 = branch_value(sym, traj[0]), branch_value(sym, traj[-1])
            out["flow"] = {"steps": len(traj) - 1, "h_start": h0, "h_end": h1,
                           "relative_drift": abs(h1 - h0) / abs(h0)}
            if csv_dir is not None:
                write_trajectory_csv(csv_dir / "trajectory.csv", sym, traj)
    return out


def write_trajectory_csv(path, sym, traj) -> None:
    n = sym.n
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"x{i}" for i in range(n)] + [f"xi{i}" for i in range(n)] + ["h"])
        for s in traj:
            w.writerow([repr(float(s.t))] + [repr(float(v)) for v in s.x] + [repr(float(v)) for v in s.xi]
                       + [repr(branch_value(sym, s))])


def run_report(config: RunConfig, force: bool = False, tol: float | None = None, threads: int | None = None,
               csv_dir=None, sections=None, timestamp: bool = True) -> dict:
    """Ellipticity, interior densities, boundary A1, oracle and Finsler summaries.

    ``sections`` restricts the run to a subset of
    ``{"interior", "boundary", "oracle", "finsler"}``; ellipticity always runs.
    ``tol`` overrides every configured tolerance.
    """
    if tol is not None:
        raw = dict(config.raw)
        raw["tolerances"] = {k: tol for k in ("a0", "a1", "a2", "cross_check", "index")}
        config = RunConfig(raw)
    workers = worker_count(threads)
    csv_path = Path(csv_dir) if csv_dir is not None else None
    if csv_path is not None:
        csv_path.mkdir(parents=True, exist_ok=True)
    wanted = set(sections) if sections is not None else {"interior", "boundary", "oracle", "finsler"}
    sym = config.symbol()
    report: dict = {"version": __version__, "config_hash": config.digest()}
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        report["ellipticity"] = _ellipticity(sym, config, force)
        if "interior" in wanted and config.section("interior"):
            report["interior"] = _interior(sym, config, workers)
        if "boundary" in wanted and config.section("boundary"):
            report["boundary"] = _boundary(sym, config, workers)
        if "oracle" in wanted and config.section("oracle"):
            report["oracle"] = run_oracle(sym, config, report, csv_path)
        if "finsler" in wanted and config.section("finsler"):
            report["finsler"] = _finsler(sym, config, csv_path)
    msgs = sorted({f"{w.category.__name__}: {w.message}" for w in caught})
    if msgs:
        report["warnings"] = msgs
    report = _rounded(report)
    if timestamp:
        report["timestamp"] = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    return report


def dumps(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2) + "\n"


def write_report(report: dict, path) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(dumps(report))
    os.replace(tmp, path)


__all__ = ["run_report", "run_oracle", "write_report", "dumps", "write_trajectory_csv"]
