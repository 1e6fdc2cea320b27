"""Acceptance battery: one test per criterion, each logging a PASS/FAIL line."""
import math
import time
from pathlib import Path

import numpy as np
import pytest

from torusma.capacity import comparison_check, decay_iterate, h_condition, standard_test_sets, verify_h_alpha_b
from torusma.cli import _setup, build_solver, main, run_holder, run_stability
from torusma.config import load_config
from torusma.density import AlgebraicDensitySpec, Density, algebraic_density, integrability_quadrature, lp_estimate
from torusma.errors import InconclusiveError
from torusma.experiments import (NON_PROBATIVE, calibrate_c1, decay_battery, default_s_grid, linf_bound_audit,
                                 mms_study, random_smooth_field, stability_threshold, uniqueness_probe)
from torusma.field import GridSpec, PeriodicField, ReferenceForm
from torusma.solver import SolverConfig, solve

from helpers import admissible_field, brute_force_ratio, record

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
POLE = AlgebraicDensitySpec(poles=[((0.5,) * 4, 1.0)])


def test_constant_case():
    worst = 0.0
    for grid in (GridSpec(1, 8), GridSpec(2, 8), GridSpec(1, 64)):
        phi = solve(ReferenceForm.flat(grid), Density.constant(grid), SolverConfig()).phi
        worst = max(worst, float(np.abs(phi.values + 1.0).max()))
    g = GridSpec(2, 16)
    start = time.perf_counter()
    phi = solve(ReferenceForm.flat(g), Density.constant(g), SolverConfig()).phi
    elapsed = time.perf_counter() - start
    worst = max(worst, float(np.abs(phi.values + 1.0).max()))
    ok = worst <= 1e-12 and elapsed < 1.0
    assert record(1, "constant density gives phi = -1", ok, f"max |phi + 1| = {worst:.1e}, {elapsed:.2f} s at m=16")


@pytest.mark.slow
def test_mms_oracle_equivalence():
    start = time.perf_counter()
    worst = {}
    for t in (0.0, 1.0):
        cases = mms_study(2, [8, 16, 32], t, SolverConfig(t=t, normalization="none"), continuum=False)
        worst[t] = max(c.oracle_error for c in cases)
    elapsed = time.perf_counter() - start
    ok = max(worst.values()) <= 1e-8 and elapsed < 120
    assert record(2, "manufactured solutions recovered on m = 8, 16, 32", ok,
                  f"t=0 {worst[0.0]:.1e}, t=1 {worst[1.0]:.1e}, {elapsed:.0f} s")


def test_uniqueness():
    g = GridSpec(2, 8)
    om = ReferenceForm.flat(g)
    f = algebraic_density(POLE, g)
    gaps = {}
    for t in (0.0, 1.0):
        rng = np.random.default_rng(11)
        inits = [random_smooth_field(g, rng) for _ in range(5)]
        gaps[t] = uniqueness_probe(om, f, SolverConfig(t=t), inits)["max_pairwise_sup_gap"]
    ok = max(gaps.values()) <= 1e-6
    assert record(3, "five random starts reach one solution", ok, f"t=0 {gaps[0.0]:.1e}, t=1 {gaps[1.0]:.1e}")


def test_comparison_principle():
    g = GridSpec(2, 8)
    om = ReferenceForm.flat(g)
    rng = np.random.default_rng(2024)
    held = 0
    for _ in range(100):
        phi = admissible_field(g, rng)
        psi = admissible_field(g, rng)
        held += comparison_check(phi, psi, om, quadrature_tol=1e-9).holds
    assert record(4, "comparison inequality on random admissible pairs", held == 100, f"{held}/100")


def test_decay_engine():
    battery = decay_battery()
    start = time.perf_counter()
    failures = []
    for name, (prof, alpha) in battery.items():
        B_grid = brute_force_ratio(prof, alpha)
        B = 1.01 * B_grid if B_grid > 0 else 1.0
        if not (verify_h_alpha_b(prof, alpha, B) and B_grid <= B):
            failures.append(f"{name}: hypothesis")
            continue
        rep = decay_iterate(prof, alpha, B)
        if rep.S_inf > rep.s0 + 1.0 / (1.0 - 2.0 ** -alpha) + 1e-12:
            failures.append(f"{name}: S_inf")
        if np.any(prof.f[prof.s >= rep.S_inf] != 0):
            failures.append(f"{name}: tail")
    elapsed = time.perf_counter() - start
    zero_ok = "zero" in battery and np.all(battery["zero"][0].f == 0)
    small = battery["power_small_start"]
    small_ok = 2 * brute_force_ratio(*small) * 1.01 * small[0].f[0] ** small[1] < 1
    ok = not failures and len(battery) == 10 and zero_ok and small_ok and elapsed < 1.0
    assert record(5, "decay iteration on the ten-profile battery", ok,
                  f"{elapsed:.2f} s" + (f", failed: {failures}" if failures else ""))


def test_degenerate_bounded_potentials():
    cfg = load_config(CONFIGS / "solve_degenerate_pole.ini")
    sups = {}
    detail = []
    ok = True
    for m in (8, 16):
        cfg.sections["grid"]["m"] = m
        grid, om, f = _setup(cfg)
        scfg = build_solver(cfg)
        rep = solve(om, f, scfg)
        last = rep.stage_sup_norms[-3:]
        spread = (max(last) - min(last)) / max(last)
        ok &= rep.converged and rep.eps_used[-1] == 1e-4 and spread < 0.05
        sups[m] = rep.stage_sup_norms[-1]
        detail.append(f"m={m} sup {sups[m]:.4f}, stage spread {spread:.1e}")
    between = abs(sups[8] - sups[16]) / max(sups.values())
    lp = lp_estimate(POLE, 1.5, refinements=3, grid=GridSpec(2, 8))
    ok &= between < 0.1 and lp.in_lp
    assert record(6, "bounded potentials for degenerate form with pole", ok,
                  "; ".join(detail) + f"; grids differ {between:.1e}; in L^1.5: {lp.in_lp}")


def test_cross_mode_equivalence():
    cfg = load_config(CONFIGS / "solve_exponential_T.ini")
    grid, om, f = _setup(cfg)
    t_rep = solve(om, f, build_solver(cfg))
    n_rep = solve(om, f, build_solver(cfg, outer_mode="direct_newton"))
    gap = float(np.abs(t_rep.phi.values - n_rep.phi.values).max())
    hist = t_rep.residual_history[-1]
    contracts = all(b < a for a, b in zip(hist[3:], hist[4:]))
    ok = gap <= 1e-6 and contracts and len(hist) > 4
    assert record(7, "T-iteration matches direct Newton at t = 1", ok,
                  f"gap {gap:.1e}, {len(hist)} outer steps, contracting after step 3: {contracts}")


def test_klt_integrability():
    verdicts = {}
    for a in (-0.25, -0.5, -0.75, -1.0, -1.25):
        try:
            verdicts[a] = integrability_quadrature(a, 1, refinements=5).integrable_verdict
        except InconclusiveError:
            verdicts[a] = None
    ok = all(verdicts[a] is (a > -1) for a in verdicts)
    shown = ", ".join(f"{a:g}: {'inconclusive' if v is None else ('int' if v else 'div')}"
                      for a, v in verdicts.items())
    assert record(8, "quadrature verdicts match the klt threshold", ok, shown)


def test_exponent_experiments():
    thr = stability_threshold(2, 2.0)
    stab = run_stability(load_config(CONFIGS / "stability.ini"))
    hold = run_holder(load_config(CONFIGS / "holder.ini"))
    expo = stab.results["stability"]["fitted_exponent"]
    gamma = hold.results["holder"]["gamma_obs"]
    labels = (stab.results["stability"]["label"] == NON_PROBATIVE
              and hold.results["holder"]["label"] == NON_PROBATIVE)
    ok = (expo >= thr - 0.1 and gamma >= thr - 0.1 and labels and abs(thr - 1 / 3) < 1e-15
          and stab.results["lp"]["in_lp"] and hold.results["lp"]["in_lp"])
    assert record(9, "stability and Hoelder exponents above 2/(2+nq) - 0.1", ok,
                  f"stability {expo:.3f}, gamma {gamma:.3f}, threshold {thr:.3f}, labelled non-probative")


@pytest.mark.slow
def test_linf_bound_audit():
    detail = []
    ok = True
    for path in sorted(CONFIGS.glob("solve_*.ini")):
        cfg = load_config(path)
        grid, om, f = _setup(cfg)
        rep = solve(om, f, build_solver(cfg))
        phi = rep.phi
        mu = Density(grid, f.values / f.mass)
        hc = h_condition(mu, om, 1.0, standard_test_sets(grid, fields=[phi]))
        normalized = PeriodicField(grid, phi.values - phi.max() - 1.0)
        c1 = calibrate_c1([phi], om, default_s_grid(normalized, 16))
        aud = linf_bound_audit(rep, 1.0, hc.A_hat, c1)
        ok &= aud["within"] and math.isfinite(aud["bound"])
        detail.append(f"{cfg.case_id}: {aud['actual']:.3f} <= {aud['bound']:.3f}")
    assert record(10, "closed-form sup bound dominates every solve case", ok, "; ".join(detail))


@pytest.mark.slow
def test_determinism(tmp_path):
    differing = []
    configs = sorted(CONFIGS.glob("*.ini"))
    for path in configs:
        for tag in ("a", "b"):
            assert main(["run", str(path), "--output-dir", str(tmp_path / tag)]) == 0
    for case in sorted(p.name for p in (tmp_path / "a").iterdir()):
        for name in ("report.json", "table.csv"):
            if (tmp_path / "a" / case / name).read_bytes() != (tmp_path / "b" / case / name).read_bytes():
                differing.append(f"{case}/{name}")
    ok = not differing and len(list((tmp_path / "a").iterdir())) == len(configs)
    assert record(11, "repeated runs give byte-identical reports", ok,
                  f"{len(configs)} configs" + (f", differing: {differing}" if differing else ""))
