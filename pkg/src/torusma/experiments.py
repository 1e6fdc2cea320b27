"""Numerical experiments built on the solver: manufactured solutions,
uniqueness probes, stability and Hölder exponents, and the L-infinity audit.

The exponent experiments are consistency checks on a flat torus, not
reproductions of any proof; their outputs carry a ``non_probative`` label.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .capacity import DecayProfile, sublevel_profile
from .density import Density
from .field import (GridSpec, PeriodicField, ReferenceForm, hermitian_det, integrate, ma_measure, norm,
                    translate)
from .solver import SolveReport, SolverConfig, solve

NON_PROBATIVE = "consistency check on a flat torus analogue; not a proof reproduction"


# ---------------------------------------------------------------------------
# manufactured solutions

@dataclass(frozen=True)
class TrigField:
    """``sum_k amp_k cos(2 pi <wave_k, x> + phase_k)`` with integer wave vectors."""

    modes: Tuple[Tuple[float, Tuple[int, ...], float], ...]

    def values(self, grid: GridSpec) -> np.ndarray:
        axes = grid.mesh()
        out = np.zeros(grid.shape)
        for amp, wave, phase in self.modes:
            arg = sum(2 * np.pi * k * axes[a] / grid.period for a, k in enumerate(wave) if k)
            out = out + amp * np.cos(arg + phase)
        return out

    def field(self, grid: GridSpec) -> PeriodicField:
        return PeriodicField(grid, self.values(grid))

    def exact_hessian(self, grid: GridSpec) -> np.ndarray:
        """Closed-form complex Hessian sampled at the nodes."""
        n = grid.n
        axes = grid.mesh()
        H = np.zeros(grid.shape + (n, n), dtype=complex)
        w = 2 * np.pi / grid.period
        for amp, wave, phase in self.modes:
            arg = sum(w * k * axes[a] for a, k in enumerate(wave) if k) + phase
            c = -amp * w * w * np.broadcast_to(np.cos(arg), grid.shape) / 4
            kx, ky = wave[0::2], wave[1::2]
            for j in range(n):
                for k in range(n):
                    H[..., j, k] += c * complex(kx[j] * kx[k] + ky[j] * ky[k], kx[j] * ky[k] - ky[j] * kx[k])
        return H


def standard_manufactured(n: int, amplitude: float = 0.015) -> TrigField:
    """A smooth test potential mixing real and complex directions, admissible for flat omega."""
    half = np.pi / 2
    if n == 1:
        modes = [(1.0, (1, 0), 0.0), (1.0, (0, 1), -half), (0.5, (1, 1), 0.0)]
    else:
        pad = (0,) * (2 * n - 4)
        modes = [(1.0, (1, 0, 0, 0) + pad, 0.0), (1.0, (0, 0, 0, 1) + pad, -half),
                 (1.0, (1, 0, 1, 0) + pad, -half), (1.0, (0, 1, -1, 0) + pad, 0.0),
                 (0.5, (1, 1, 0, 1) + pad, 0.0)]
        for a in range(4, 2 * n):
            wave = [0] * (2 * n)
            wave[a] = 1
            modes.append((1.0, tuple(wave), 0.0))
    return TrigField(tuple((amplitude * c, w, ph) for c, w, ph in modes))


def manufactured_density(phi_star: PeriodicField, omega: ReferenceForm, t: float = 0.0) -> Density:
    """Right-hand side for which ``phi_star`` is the exact discrete solution."""
    ma = ma_measure(phi_star, omega, require_positive=True).values
    if t > 0:
        ma = ma * np.exp(-t * phi_star.values)
    return Density(omega.grid, ma)


def continuum_density(trig: TrigField, omega: ReferenceForm, t: float = 0.0) -> Density:
    """Right-hand side from the exact Hessian; the discrete solution then carries O(h^2) error."""
    vals = hermitian_det(omega.coeff + trig.exact_hessian(omega.grid)).real
    if t > 0:
        vals = vals * np.exp(-t * trig.values(omega.grid))
    return Density(omega.grid, vals)


def gauge_gap(a: np.ndarray, b: np.ndarray, t: float) -> float:
    """Sup distance, modulo constants when ``t = 0``."""
    d = a - b
    if t == 0:
        d = d - d.mean()
    return float(np.abs(d).max())


class MMSCase(NamedTuple):
    grid_m: int
    oracle_error: float
    continuum_error: float
    residual_sup: float
    truncation_residual: float
    iterations: int
    wall_ms: int


def mms_study(n: int, ms: Sequence[int], t: float = 0.0, cfg: Optional[SolverConfig] = None,
              trig: Optional[TrigField] = None, continuum: bool = True) -> List[MMSCase]:
    """Manufactured-solution recovery on each grid.

    The discrete oracle (right-hand side from the stencil itself) must be
    recovered to solver tolerance.  With ``continuum`` the exact-Hessian
    right-hand side is solved too; its error measures the O(h^2) truncation.
    """
    trig = trig or standard_manufactured(n)
    cfg = cfg or SolverConfig(t=t, normalization="none")
    out = []
    for m in ms:
        g = GridSpec(n, m)
        om = ReferenceForm.flat(g)
        star = trig.field(g)
        f = manufactured_density(star, om, t)
        if t == 0:
            f = Density(g, f.values * (om.total_mass() / f.mass))
        rep = solve(om, f, cfg)
        iters, wall, cerr, trunc = rep.iterations, rep.wall_ms, float("nan"), float("nan")
        if continuum:
            fc = continuum_density(trig, om, t)
            if t == 0:
                fc = Density(g, fc.values * (om.total_mass() / fc.mass))
            repc = solve(om, fc, cfg)
            cerr = gauge_gap(repc.phi.values, star.values, t)
            # the discrete operator at the exact potential, against continuum data
            trunc = float(np.abs(np.log(f.values) - np.log(fc.values)).max())
            iters, wall = iters + repc.iterations, wall + repc.wall_ms
        out.append(MMSCase(m, gauge_gap(rep.phi.values, star.values, t), cerr, rep.final_residual,
                           trunc, iters, wall))
    return out


def observed_orders(hs: Sequence[float], errors: Sequence[float]) -> List[float]:
    """``log(e_i / e_{i+1}) / log(h_i / h_{i+1})`` for consecutive refinements."""
    return [math.log(errors[i] / errors[i + 1]) / math.log(hs[i] / hs[i + 1]) for i in range(len(errors) - 1)]


# ---------------------------------------------------------------------------
# uniqueness and stability

def uniqueness_probe(omega: ReferenceForm, f: Density, cfg: SolverConfig,
                     inits: Sequence[PeriodicField]) -> dict:
    if len(inits) < 2:
        raise ValueError("uniqueness probe needs at least two initial guesses")
    sols = [solve(omega, f, cfg, init=u).phi.values for u in inits]
    gaps = [float(np.abs(a - b).max()) for a, b in combinations(sols, 2)]
    return {"max_pairwise_sup_gap": max(gaps), "pairwise": gaps}


def random_smooth_field(grid: GridSpec, rng: np.random.Generator, modes: int = 4,
                        amplitude: float = 0.05, offset: float = 1.0) -> PeriodicField:
    """Low-frequency random field plus a random constant (used as initial guesses)."""
    two = grid.ndim
    terms = tuple((amplitude * rng.normal() / modes, tuple(int(k) for k in rng.integers(-1, 2, size=two)),
                   float(rng.uniform(0, 2 * np.pi))) for _ in range(modes))
    vals = TrigField(terms).values(grid) + offset * rng.normal()
    return PeriodicField(grid, vals)


def cosine_perturbation(f: Density, delta: float, axis: int = 0) -> Density:
    """``f (1 + delta cos(2 pi x_axis))`` rescaled back to the mass of ``f``."""
    g = f.grid
    wave = np.cos(2 * np.pi * g.mesh()[axis] / g.period)
    vals = f.values * (1.0 + delta * wave)
    return Density(g, vals * (f.mass / integrate(vals, g)))


def loglog_slope(x: Sequence[float], y: Sequence[float]) -> float:
    x, y = np.asarray(x, float), np.asarray(y, float)
    keep = (x > 0) & (y > 0)
    if keep.sum() < 2:
        return math.inf
    return float(np.polyfit(np.log(x[keep]), np.log(y[keep]), 1)[0])


def stability_threshold(n: int, p: float) -> float:
    q = p / (p - 1.0)
    return 2.0 / (2.0 + n * q)


def stability_experiment(omega: ReferenceForm, f: Density, perturbations: Sequence[Density], p: float,
                         cfg: SolverConfig = SolverConfig()) -> dict:
    """Sup gap against ``L^2(omega^n)`` gap between solutions, with a log-log fit."""
    if not p > 1:
        raise ValueError("p must exceed 1")
    weight = Density(omega.grid, omega.det(), check=False)
    base = solve(omega, f, cfg).phi
    pairs = []
    for g in perturbations:
        phi = solve(omega, g, cfg).phi
        d = phi - base
        pairs.append((norm(d, "L2", weight=weight), norm(d, "sup")))
    l2, sup = zip(*pairs) if pairs else ((), ())
    return {"pairs": pairs, "fitted_exponent": loglog_slope(l2, sup),
            "threshold": stability_threshold(omega.grid.n, p), "label": NON_PROBATIVE}


def holder_estimate(phi: PeriodicField, shifts: Sequence[Sequence[int]]) -> dict:
    """Log-log slope of ``sup |phi(x + h) - phi(x)|`` against ``|h|``."""
    table = []
    for s in shifts:
        s = tuple(int(v) for v in s)
        if not any(s):
            raise ValueError("shifts must be nonzero")
        size = phi.grid.h * math.sqrt(sum(v * v for v in s))
        table.append((size, norm(translate(phi, s) - phi, "sup")))
    hs, gaps = zip(*table)
    if max(gaps) == 0:
        gamma = math.inf
    else:
        gamma = loglog_slope(hs, gaps)
    return {"gamma_obs": gamma, "table": table, "label": NON_PROBATIVE}


# ---------------------------------------------------------------------------
# L-infinity audit

def default_s_grid(phi: PeriodicField, count: int = 24) -> np.ndarray:
    depth = max(-phi.min(), 1.0)
    return np.linspace(0.0, depth * 1.05, count)


def calibrate_c1(fields: Sequence[PeriodicField], omega: ReferenceForm, s_grid=None) -> float:
    """Smallest ``C_1`` with ``Cap(phi < -s) <= C_1^n / s`` on every field and sample.

    Each field is first normalized to ``sup = -1``.
    """
    n = omega.grid.n
    best = 0.0
    for phi in fields:
        phi = PeriodicField(phi.grid, phi.values - phi.max() - 1.0)
        s = default_s_grid(phi) if s_grid is None else np.asarray(s_grid, float)
        prof = sublevel_profile(phi, omega, s)
        for si, fi in zip(prof.s, prof.f):
            if si > 0:
                best = max(best, si ** (1.0 / n) * fi)
    return best


def linf_bound(n: int, alpha: float, A: float, C1: float) -> float:
    return 2.0 ** (n / alpha) * C1 ** n * A ** (1.0 / alpha) + 1.0 / (1.0 - 2.0 ** (-alpha))


def linf_bound_audit(report: SolveReport, alpha: float, A: float, C1: float) -> dict:
    phi = report.phi
    actual = float(np.abs(phi.values - phi.max() - 1.0).max())
    bound = linf_bound(phi.grid.n, alpha, A, C1)
    return {"bound": bound, "actual": actual, "within": bool(actual <= bound)}


# ---------------------------------------------------------------------------
# decay-profile battery

def power_profile(S: float, alpha: float, c: float = 1.0, samples: int = 401, s_max=None) -> DecayProfile:
    """``c (S - s)_+^(1/alpha)``, the extremal shape for the decay hypothesis."""
    s = np.linspace(0.0, s_max if s_max is not None else 1.25 * S, samples)
    return DecayProfile(s, c * np.clip(S - s, 0.0, None) ** (1.0 / alpha))


def decay_battery() -> dict:
    """Ten profiles with their ``alpha``; the decay constant is found by scan.

    Includes ``f = 0`` and a profile for which the small-start bound applies
    (``2 B f(0)^alpha < 1``, as for power profiles with ``S < 2`` at alpha 1).
    """
    s = np.linspace(0.0, 4.0, 401)
    cut_exp = np.where(s < 2.0, 0.5 * np.exp(-s / 0.5), 0.0)
    steps = np.select([s < 0.5, s < 1.0, s < 1.5], [0.8, 0.4, 0.1], 0.0)
    halving = np.where(s < 3.0, 2.0 ** -np.floor(4 * s), 0.0)
    return {
        "zero": (DecayProfile(np.linspace(0.0, 2.0, 21), np.zeros(21)), 1.0),
        "power_small_start": (power_profile(1.5, 1.0), 1.0),
        "power_alpha_half": (power_profile(3.0, 0.5, 0.2), 0.5),
        "power_alpha_two": (power_profile(2.0, 2.0, 3.0), 2.0),
        "power_long": (power_profile(5.0, 1.0, 0.1), 1.0),
        "exponential_cut": (DecayProfile(s, cut_exp), 1.0),
        "staircase": (DecayProfile(s, steps), 1.0),
        "linear": (DecayProfile(s, np.clip(1.0 - s / 2.5, 0.0, None)), 1.0),
        "plateau": (DecayProfile(s, np.where(s < 0.5, 0.3, 0.0)), 1.5),
        "halving_steps": (DecayProfile(s, halving), 0.75),
    }
