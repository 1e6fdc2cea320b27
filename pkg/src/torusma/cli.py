"""Command-line front end: ``ma run``, ``ma table`` and ``ma validate``.

Every run writes, under ``<output_dir>/<case_id>/``:

* ``report.json`` -- deterministic results and per-check verdicts,
* ``table.csv`` -- one row per case with the standard comparison columns,
* field binaries (``*.bin``) in the package container format,
* ``manifest.json`` -- config echo, file checksums, versions, timings.

Timestamps and wall-clock figures live in the manifest only, so reports of
the same config and seed are byte-identical.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import platform
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import scipy

from . import __version__
from .capacity import (DecayProfile, cap_omega_detail, decay_iterate, h_alpha_b_ratio, h_condition,
                       standard_test_sets, verify_h_alpha_b)
from .config import ExperimentConfig, load_config
from .density import (AlgebraicDensitySpec, Density, KltSpec, algebraic_density, integrability_quadrature,
                      klt_check, lp_estimate)
from .errors import ConfigError, InconclusiveError, MAError, MixedKindError
from .experiments import (calibrate_c1, cosine_perturbation, default_s_grid, holder_estimate,
                          linf_bound_audit, mms_study, observed_orders, random_smooth_field,
                          stability_experiment, stability_threshold, uniqueness_probe)
from .field import GridSpec, PeriodicField, ReferenceForm, norm
from .io import fmt_float, write_field, write_json, write_table
from .solver import SolverConfig, solution_residual, solve

TABLE_COLUMNS = ("case_id", "grid_m", "eps", "residual_sup", "sup_norm", "l2_gap", "sup_gap")

EXIT_OK = 0
EXIT_CHECKS_FAILED = 1
EXIT_USAGE = 2
EXIT_CODES = {"config": 3, "input": 4, "feasibility": 5, "convergence": 6, "inconclusive": 7, "internal": 8}


@dataclass
class Outcome:
    results: dict = dc_field(default_factory=dict)
    checks: Dict[str, bool] = dc_field(default_factory=dict)
    rows: List[dict] = dc_field(default_factory=list)
    fields: Dict[str, object] = dc_field(default_factory=dict)
    tables: Dict[str, tuple] = dc_field(default_factory=dict)


# ---------------------------------------------------------------------------
# builders

def build_grid(cfg: ExperimentConfig) -> GridSpec:
    g = cfg.get("grid")
    try:
        return GridSpec(g["n"], g["m"], g["period"])
    except ValueError as exc:
        raise ConfigError(f"[grid]: {exc}") from None


def build_form(cfg: ExperimentConfig, grid: GridSpec) -> ReferenceForm:
    f = cfg.get("form") or {"type": "flat", "scale": 1.0}
    if f["type"] == "flat":
        return ReferenceForm.flat(grid, f["scale"])
    if f["type"] == "degenerate":
        return ReferenceForm.degenerate(grid, f["delta"], f["direction"])
    if not f.get("entries") or len(f["entries"]) != grid.n:
        raise ConfigError(f"[form] entries: diagonal form needs {grid.n} entries")
    return ReferenceForm.diagonal(grid, f["entries"])


def density_spec(cfg: ExperimentConfig) -> AlgebraicDensitySpec:
    d = cfg.get("density")
    if d.get("type", "constant") == "constant":
        return AlgebraicDensitySpec(scale=d.get("scale", 1.0))
    return AlgebraicDensitySpec(zeros=d["zeros"], poles=d["poles"], scale=d["scale"])


def build_density(cfg: ExperimentConfig, omega: ReferenceForm) -> Density:
    return algebraic_density(density_spec(cfg), omega.grid, target_mass=omega.total_mass())


def build_solver(cfg: ExperimentConfig, **over) -> SolverConfig:
    s = dict(cfg.get("solver"))
    s.update(over)
    try:
        return SolverConfig(t=s["t"], eps_schedule=tuple(s["eps_schedule"]), newton_tol=s["newton_tol"],
                            max_newton=s["max_newton"], outer_mode=s["outer_mode"],
                            normalization=s["normalization"], preconditioner=s["preconditioner"])
    except ValueError as exc:
        raise ConfigError(f"[solver]: {exc}") from None


def _row(case_id, grid_m, eps="", residual_sup="", sup_norm="", l2_gap="", sup_gap=""):
    return dict(zip(TABLE_COLUMNS, (case_id, grid_m, eps, residual_sup, sup_norm, l2_gap, sup_gap)))


def _setup(cfg):
    grid = build_grid(cfg)
    omega = build_form(cfg, grid)
    return grid, omega, build_density(cfg, omega)


# ---------------------------------------------------------------------------
# pipelines

def run_solve(cfg: ExperimentConfig) -> Outcome:
    grid, omega, f = _setup(cfg)
    scfg = build_solver(cfg)
    rep = solve(omega, f, scfg)
    resid = solution_residual(rep, omega, f)
    out = Outcome()
    out.results = {"solve": rep.to_dict(), "independent_residual": resid}
    out.checks = {
        "converged": rep.converged,
        "independent_residual_within_2tol": resid <= 2 * scfg.newton_tol,
        "positive_definite": rep.min_eig > 0,
    }
    sups = rep.stage_sup_norms
    if len(sups) >= 3:
        last = sups[-3:]
        out.checks["stage_sup_norms_within_5pct"] = (max(last) - min(last)) <= 0.05 * max(last)
        gaps = np.abs(np.diff(sups))
        out.checks["eps_path_gaps_decreasing"] = bool(np.all(np.diff(gaps) <= 0))
    out.rows = [_row(cfg.case_id, grid.m, rep.eps_used[-1], resid, norm(rep.phi, "sup"))]
    out.fields = {"phi": rep.phi, "density": f}
    return out


def run_mms(cfg: ExperimentConfig) -> Outcome:
    n = cfg.get("grid")["n"]
    mcfg = cfg.get("mms")
    ts = mcfg["t_values"] if mcfg["t_values"] is not None else [cfg.get("solver")["t"]]
    out = Outcome()
    conv_rows = []
    for t in ts:
        scfg = build_solver(cfg, t=t, normalization="none")
        cases = mms_study(n, mcfg["grids"], t, scfg, continuum=mcfg["continuum"])
        tag = f"t={t:g}"
        hs = [1.0 / c.grid_m for c in cases]
        orders = observed_orders(hs, [c.continuum_error for c in cases]) if mcfg["continuum"] else []
        timeless = [{k: v for k, v in c._asdict().items() if k != "wall_ms"} for c in cases]
        out.results[tag] = {"cases": timeless, "observed_orders": orders}
        out.checks[f"oracle_recovery_{tag}"] = all(c.oracle_error <= mcfg["oracle_tol"] for c in cases)
        if mcfg["continuum"] and len(cases) >= 2:
            out.checks[f"order_in_range_{tag}"] = all(mcfg["order_min"] <= o <= mcfg["order_max"]
                                                      for o in orders)
        for i, c in enumerate(cases):
            resid = c.truncation_residual if mcfg["continuum"] else c.residual_sup
            out.rows.append(_row(f"{cfg.case_id}/{tag}", c.grid_m, 0.0, resid, "", "", c.oracle_error))
            order = orders[i - 1] if i > 0 and orders else ""
            conv_rows.append([tag, c.grid_m, 1.0 / c.grid_m, c.oracle_error,
                              c.continuum_error if mcfg["continuum"] else "", order])
    out.tables["convergence"] = (("t", "grid_m", "h", "oracle_error", "continuum_error",
                                  "convergence_order"), conv_rows)
    return out


def run_decay(cfg: ExperimentConfig) -> Outcome:
    d = cfg.get("decay")
    path = cfg.resolve(d["profile_path"])
    try:
        prof = DecayProfile.from_csv(path)
    except OSError as exc:
        raise ConfigError(f"[decay] profile_path: cannot read {path}: {exc}") from None
    alpha = d["alpha"]
    B_min = h_alpha_b_ratio(prof, alpha, exact=d["exact"])
    B = d["B"] if d["B"] is not None else (d["B_factor"] * B_min if B_min > 0 else 1.0)
    oracle = verify_h_alpha_b(prof, alpha, B, exact=d["exact"])
    rep = decay_iterate(prof, alpha, B)
    beyond = prof.f[prof.s >= rep.S_inf]
    out = Outcome()
    out.results = {"alpha": alpha, "B": B, "B_min": B_min, "decay": rep.to_dict(),
                   "samples": int(prof.s.size)}
    out.checks = {"h_alpha_b_brute_force": oracle, "bound_check": rep.bound_check,
                  "zero_beyond_S_inf": bool((beyond == 0).all())}
    out.rows = [_row(cfg.case_id, "")]
    return out


def run_klt(cfg: ExperimentConfig) -> Outcome:
    k = cfg.get("klt")
    out = Outcome()
    if k["exponents"]:
        res = klt_check(KltSpec(k["exponents"]), k["eps"])
        out.results["klt"] = {"klt": res.klt, "margin": res.margin, "eps": k["eps"]}
        expected = min(a - k["eps"] * b for a, b in k["exponents"]) > -1
        out.checks["klt_matches_threshold"] = res.klt == expected
    quad = {}
    for a in k["quadrature"]:
        key = fmt_float(a)
        try:
            r = integrability_quadrature(a, k["quadrature_n"], k["refinements"])
            quad[key] = {"verdict": "integrable" if r.integrable_verdict else "divergent",
                         "mass_sequence": r.mass_sequence}
            out.checks[f"quadrature_a={key}"] = r.integrable_verdict == (a > -1)
        except InconclusiveError as exc:
            quad[key] = {"verdict": "inconclusive", "mass_sequence": exc.sequence}
            out.checks[f"quadrature_a={key}"] = False
    out.results["quadrature"] = quad
    out.rows = [_row(cfg.case_id, "")]
    return out


def _nested_chains(sets: Dict[str, np.ndarray]):
    for prefix in ("ball_r", "slab_w"):
        chain = sorted((k for k in sets if k.startswith(prefix)), key=lambda k: int(k[len(prefix):]))
        yield chain


def run_capacity(cfg: ExperimentConfig) -> Outcome:
    grid, omega, f = _setup(cfg)
    alpha = cfg.get("capacity")["alpha"]
    sets = standard_test_sets(grid)
    sets["all"] = np.ones(grid.shape, dtype=bool)
    details = {name: cap_omega_detail(K, omega) for name, K in sets.items()}
    caps = {k: v.value for k, v in details.items()}
    mono = True
    for chain in _nested_chains(sets):
        # chain runs from the largest set to the smallest
        mono &= all(caps[a] >= caps[b] for a, b in zip(chain, chain[1:]))
    mu = Density(grid, f.values / f.mass)
    hc = h_condition(mu, omega, alpha, sets)
    out = Outcome()
    out.results = {"capacities": {k: {"value": v.value, "maximizer": v.maximizer} for k, v in details.items()},
                   "h_condition": hc.to_dict()}
    out.checks = {"cap_all_is_total_mass": abs(caps["all"] - omega.total_mass()) <= 1e-12,
                  "monotone_on_nested_sets": bool(mono), "A_hat_finite": math.isfinite(hc.A_hat)}
    out.rows = [_row(cfg.case_id, grid.m)]
    return out


def _lp_checked(f: Density, p: float, grid: GridSpec) -> dict:
    """L^p membership by refinement from a coarse grid (three levels past n = 1)."""
    base = GridSpec(grid.n, 8, grid.period)
    levels = 5 if grid.n == 1 else 3
    try:
        r = lp_estimate(f.spec, p, refinements=levels, grid=base)
        return {"in_lp": r.in_lp, "norm_sequence": r.norm_sequence}
    except InconclusiveError as exc:
        return {"in_lp": None, "norm_sequence": exc.sequence}


def run_stability(cfg: ExperimentConfig) -> Outcome:
    grid, omega, f = _setup(cfg)
    s = cfg.get("stability")
    scfg = build_solver(cfg)
    perts = [cosine_perturbation(f, d) for d in s["deltas"]]
    res = stability_experiment(omega, f, perts, s["p"], scfg)
    thr = res["threshold"]
    out = Outcome()
    out.results = {"stability": res, "deltas": s["deltas"], "lp": _lp_checked(f, s["p"], grid)}
    out.checks = {"lp_membership": out.results["lp"]["in_lp"] is True,
                  "exponent_above_threshold_minus_slack": res["fitted_exponent"] >= thr - s["slack"]}
    out.rows = [_row(f"{cfg.case_id}/delta={fmt_float(d)}", grid.m, scfg.eps_schedule[-1], "", "", l2, sup)
                for d, (l2, sup) in zip(s["deltas"], res["pairs"])]
    return out


def run_holder(cfg: ExperimentConfig) -> Outcome:
    grid, omega, f = _setup(cfg)
    hcfg = cfg.get("holder")
    for sh in hcfg["shifts"]:
        if len(sh) != grid.ndim:
            raise ConfigError(f"[holder] shifts: each shift needs {grid.ndim} integers")
    rep = solve(omega, f, build_solver(cfg))
    res = holder_estimate(rep.phi, hcfg["shifts"])
    thr = stability_threshold(grid.n, hcfg["p"])
    out = Outcome()
    out.results = {"holder": res, "threshold": thr, "lp": _lp_checked(f, hcfg["p"], grid)}
    out.checks = {"lp_membership": out.results["lp"]["in_lp"] is True,
                  "gamma_above_threshold_minus_slack": res["gamma_obs"] >= thr - hcfg["slack"]}
    out.rows = [_row(cfg.case_id, grid.m, rep.eps_used[-1], rep.final_residual, norm(rep.phi, "sup"))]
    out.fields = {"phi": rep.phi}
    return out


def run_uniqueness(cfg: ExperimentConfig) -> Outcome:
    grid, omega, f = _setup(cfg)
    u = cfg.get("uniqueness")
    rng = np.random.default_rng(cfg.seed)
    inits = [grid.zeros()] + [random_smooth_field(grid, rng) for _ in range(u["inits"] - 1)]
    res = uniqueness_probe(omega, f, build_solver(cfg), inits)
    out = Outcome()
    out.results = {"uniqueness": res, "inits": u["inits"], "seed": cfg.seed}
    out.checks = {"max_gap_within_tol": res["max_pairwise_sup_gap"] <= u["tol"]}
    out.rows = [_row(cfg.case_id, grid.m, "", "", "", "", res["max_pairwise_sup_gap"])]
    return out


def run_audit(cfg: ExperimentConfig) -> Outcome:
    grid, omega, f = _setup(cfg)
    a = cfg.get("audit")
    rep = solve(omega, f, build_solver(cfg))
    phi = rep.phi
    mu = Density(grid, f.values / f.mass)
    sets = standard_test_sets(grid, fields=[phi])
    hc = h_condition(mu, omega, a["alpha"], sets)
    C1 = calibrate_c1([phi], omega, default_s_grid(PeriodicField(grid, phi.values - phi.max() - 1.0),
                                                   a["s_count"]))
    aud = linf_bound_audit(rep, a["alpha"], hc.A_hat, C1)
    inflated = linf_bound_audit(rep, a["alpha"], 10 * hc.A_hat, C1)
    out = Outcome()
    out.results = {"audit": aud, "alpha": a["alpha"], "A_hat": hc.A_hat, "C1": C1,
                   "h_condition": hc.to_dict(), "inflated_A_bound": inflated["bound"]}
    out.checks = {"bound_dominates": aud["within"], "bound_monotone_in_A": inflated["bound"] >= aud["bound"]}
    out.rows = [_row(cfg.case_id, grid.m, rep.eps_used[-1], rep.final_residual, aud["actual"])]
    out.fields = {"phi": phi}
    return out


PIPELINES = {
    "solve": run_solve, "mms": run_mms, "decay_lemma": run_decay, "klt": run_klt,
    "capacity": run_capacity, "stability": run_stability, "holder": run_holder,
    "uniqueness": run_uniqueness, "audit": run_audit,
}


# ---------------------------------------------------------------------------
# run / table / validate

def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _versions() -> dict:
    return {"torusma": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__}


def output_root(cfg: ExperimentConfig, override: Optional[str] = None) -> Path:
    base = override or os.environ.get("MA_OUTPUT_DIR")
    root = Path(base) if base else cfg.resolve(str(cfg.output_dir))
    return root / cfg.case_id


def execute(cfg: ExperimentConfig, out_dir: Path) -> int:
    """Run one experiment and write its artifacts; returns the exit code."""
    out_dir.mkdir(parents=True, exist_ok=True)
    started = datetime.now(timezone.utc).isoformat()
    t0 = time.perf_counter()
    error = None
    code = EXIT_OK
    try:
        outcome = PIPELINES[cfg.kind](cfg)
    except MAError as exc:
        error = {"family": exc.family, "type": type(exc).__name__, "message": str(exc)}
        code = EXIT_CODES.get(exc.family, EXIT_CODES["internal"])
        outcome = None
    files = []
    if outcome is not None:
        checks = {k: "pass" if v else "fail" for k, v in outcome.checks.items()}
        report = {"kind": cfg.kind, "case_id": cfg.case_id, "seed": cfg.seed, "config": cfg.raw,
                  "results": outcome.results, "checks": checks, "rows": outcome.rows}
        files.append(write_json(out_dir / "report.json", report))
        files.append(write_table(out_dir / "table.csv", TABLE_COLUMNS,
                                 [[r[c] for c in TABLE_COLUMNS] for r in outcome.rows]))
        for name, (header, rows) in outcome.tables.items():
            files.append(write_table(out_dir / f"{name}.csv", header, rows))
        for name, obj in outcome.fields.items():
            files.append(write_field(out_dir / f"{name}.bin", obj))
        if not all(outcome.checks.values()):
            code = EXIT_CHECKS_FAILED
    else:
        checks = {}
    manifest = {
        "config": cfg.raw,
        "config_path": str(cfg.source) if cfg.source else None,
        "files": [{"path": p.name, "sha256": _sha256(p)} for p in files],
        "versions": _versions(),
        "started": started,
        "finished": datetime.now(timezone.utc).isoformat(),
        "wall_ms": int(round(1000 * (time.perf_counter() - t0))),
        "checks": checks,
        "error": error,
        "exit_code": code,
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return code


def cmd_run(args) -> int:
    cfgs = []
    for p in args.configs:
        try:
            cfgs.append(load_config(p))
        except ConfigError as exc:
            print(f"{p}: {exc}", file=sys.stderr)
            return EXIT_CODES["config"]
    dirs = [output_root(c, args.output_dir) for c in cfgs]
    if len(set(dirs)) != len(dirs):
        print("two configs share an output directory; give them distinct case_id values", file=sys.stderr)
        return EXIT_CODES["config"]
    with ThreadPoolExecutor(max_workers=max(1, args.jobs)) as pool:
        codes = list(pool.map(execute, cfgs, dirs))
    for c, d, code in zip(cfgs, dirs, codes):
        status = "ok" if code == EXIT_OK else f"exit {code}"
        print(f"{c.case_id}: {status} -> {d}")
    failing = [c for c in codes if c != EXIT_OK]
    return failing[0] if failing else EXIT_OK


def _load_report(path: Path) -> dict:
    if path.is_dir():
        path = path / "report.json"
    try:
        return json.loads(path.read_text())
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read report {path}: {exc}") from None


def _sort_key(row):
    m = row["grid_m"]
    return (str(row["case_id"]), (0, m) if isinstance(m, (int, float)) else (1, 0))


def merge_tables(paths, delimiter=",") -> str:
    reports = [_load_report(Path(p)) for p in paths]
    kinds = sorted({r["kind"] for r in reports})
    if len(kinds) > 1:
        raise MixedKindError(f"reports mix kinds: {', '.join(kinds)}")
    rows = sorted((row for r in reports for row in r["rows"]), key=_sort_key)
    lines = [delimiter.join(TABLE_COLUMNS)]
    for row in rows:
        cells = [fmt_float(row[c]) if isinstance(row[c], float) else str(row[c]) for c in TABLE_COLUMNS]
        lines.append(delimiter.join(cells))
    return "\n".join(lines) + "\n"


def cmd_table(args) -> int:
    if not args.reports:
        print("ma table: at least one report is required", file=sys.stderr)
        return EXIT_USAGE
    try:
        text = merge_tables(args.reports, "\t" if args.format == "tsv" else ",")
    except MAError as exc:
        print(f"ma table: {exc}", file=sys.stderr)
        return EXIT_CODES[exc.family]
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_validate(args) -> int:
    try:
        cfg = load_config(args.config)
        if cfg.kind in ("solve", "capacity", "stability", "holder", "uniqueness", "audit"):
            grid = build_grid(cfg)
            density_spec(cfg)
            build_form(cfg, grid)
        if "solver" in cfg.sections:
            build_solver(cfg)
    except MAError as exc:
        print(f"{args.config}: {exc}", file=sys.stderr)
        return EXIT_CODES[exc.family]
    except ValueError as exc:
        print(f"{args.config}: {exc}", file=sys.stderr)
        return EXIT_CODES["config"]
    print(f"{args.config}: ok ({cfg.kind})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ma", description="Complex Monge-Ampere solver and verification runs.")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run one or more experiment configs")
    r.add_argument("configs", nargs="+", help="INI experiment configs")
    r.add_argument("--jobs", type=int, default=1, help="worker threads for independent configs")
    r.add_argument("--output-dir", default=None, help="override the output root (beats MA_OUTPUT_DIR)")
    r.set_defaults(func=cmd_run)
    t = sub.add_parser("table", help="merge report tables")
    t.add_argument("reports", nargs="*", help="report.json files or run directories")
    t.add_argument("--format", choices=("csv", "tsv"), default="csv")
    t.add_argument("-o", "--output", default=None, help="write to a file instead of stdout")
    t.set_defaults(func=cmd_table)
    v = sub.add_parser("validate", help="check a config against the schema")
    v.add_argument("config")
    v.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
