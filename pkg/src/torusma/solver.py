"""Damped Newton solvers for ``(omega + dd^c phi)^n = e^{t phi} f omega^n``.

Both equations are solved in log-determinant form along a continuity path
``omega_eps = omega + eps * I``:

* ``t = 0``: ``log det(omega_eps + H(phi)) = log(lambda_eps f) + c`` with
  ``phi`` kept mean-zero and a scalar ``c`` absorbing the discrete
  compatibility defect of the stencil (``c`` vanishes for manufactured data
  and is ``O(h^2)`` otherwise).
* ``t > 0``: ``log det(omega_eps + H(phi)) - t phi = log f``, which is
  monotone in ``phi`` and needs no gauge.

The fixed-point operator ``psi -> phi`` solving
``(omega + dd^c phi)^n = e^{t psi - c_psi} f`` is available as a second outer
loop for cross-validation.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field as dc_field, replace
from typing import List, Optional

import numpy as np
import scipy.fft as sfft
from scipy.sparse.linalg import LinearOperator, gmres

from .density import Density
from .errors import (FeasibilityError, LinearSolveError, MassMismatchError,
                     NewtonDivergenceError, TIterationStallError)
from .field import (GridSpec, PeriodicField, ReferenceForm, apply_contraction, contraction_coefficients,
                    _hessian_array, hermitian_det, hermitian_inv, hermitian_min_eig, integrate)

logger = logging.getLogger(__name__)

POSITIVITY_FLOOR = 1e-12
MASS_TOL = 1e-10


@dataclass(frozen=True)
class SolverConfig:
    t: float = 0.0
    eps_schedule: tuple = (0.0,)
    newton_tol: float = 1e-10
    max_newton: int = 60
    damping_floor: float = 2.0 ** -20
    outer_mode: str = "direct_newton"
    normalization: str = "sup_minus_one"
    linear_rtol: float = 1e-12
    preconditioner: str = "fft"
    max_outer: int = 200

    def __post_init__(self):
        eps = tuple(float(e) for e in np.atleast_1d(self.eps_schedule))
        object.__setattr__(self, "eps_schedule", eps)
        if not eps:
            raise ValueError("eps_schedule must not be empty")
        if any(e < 0 for e in eps):
            raise ValueError("eps values must be nonnegative")
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise ValueError("eps_schedule must be strictly decreasing")
        if not self.newton_tol > 0:
            raise ValueError("newton_tol must be positive")
        if self.t < 0:
            raise ValueError("negative t is not supported")
        if self.outer_mode not in ("direct_newton", "T_iteration"):
            raise ValueError(f"unknown outer_mode {self.outer_mode!r}")
        if self.normalization not in ("sup_minus_one", "none"):
            raise ValueError(f"unknown normalization {self.normalization!r}")
        if self.preconditioner not in ("fft", "jacobi"):
            raise ValueError(f"unknown preconditioner {self.preconditioner!r}")


@dataclass
class SolveReport:
    phi: PeriodicField
    residual_history: List[List[float]]
    eps_used: List[float]
    converged: bool
    iterations: int
    wall_ms: int
    c_psi_history: List[float] = dc_field(default_factory=list)
    stage_sup_norms: List[float] = dc_field(default_factory=list)
    compat_shift: float = 0.0
    regularized: bool = False
    min_eig: float = float("nan")
    t: float = 0.0

    @property
    def final_residual(self) -> float:
        for hist in reversed(self.residual_history):
            if hist:
                return hist[-1]
        return float("nan")

    def to_dict(self) -> dict:
        g = self.phi.grid
        return {
            "grid": {"n": g.n, "m": g.m, "period": g.period},
            "t": self.t,
            "converged": self.converged,
            "regularized": self.regularized,
            "iterations": self.iterations,
            "eps_used": list(self.eps_used),
            "residual_history": [list(h) for h in self.residual_history],
            "c_psi_history": list(self.c_psi_history),
            "stage_sup_norms": list(self.stage_sup_norms),
            "compat_shift": self.compat_shift,
            "min_eig": self.min_eig,
            "sup_norm": float(np.abs(self.phi.values).max()),
            "phi_max": self.phi.max(),
            "phi_min": self.phi.min(),
        }


# ---------------------------------------------------------------------------
# linear algebra

def _symbol(grid: GridSpec, Bbar: np.ndarray, shift: float) -> np.ndarray:
    """Fourier symbol (rfft layout) of ``v -> tr(Bbar H(v)) - shift v``."""
    n, m, h = grid.n, grid.m, grid.h
    k_full = 2 * np.pi * sfft.fftfreq(m, d=1.0 / m) / m
    k_half = 2 * np.pi * sfft.rfftfreq(m, d=1.0 / m) / m
    ks = [k_full] * (2 * n - 1) + [k_half]
    grids = np.meshgrid(*ks, indexing="ij", sparse=True)
    s2 = [-4.0 * np.sin(k / 2) ** 2 / h ** 2 for k in grids]
    s1 = [np.sin(k) / h for k in grids]  # D1 symbol is i * s1
    sym = 0.0
    for j in range(n):
        sym = sym + 0.25 * Bbar[j, j].real * (s2[2 * j] + s2[2 * j + 1])
    for j in range(n):
        for k in range(j + 1, n):
            br, bi = Bbar[k, j].real, Bbar[k, j].imag
            P = -(s1[2 * j] * s1[2 * k] + s1[2 * j + 1] * s1[2 * k + 1])
            Q = -(s1[2 * k + 1] * s1[2 * j] - s1[2 * k] * s1[2 * j + 1])
            sym = sym + 0.5 * (br * P - bi * Q)
    sym = np.broadcast_to(sym, tuple(len(k) for k in ks)).copy()
    sym = sym - shift
    if shift == 0:
        sym.flat[0] = -1.0
    return sym


class _NewtonSystem:
    """Jacobian of the log-det residual at one iterate, with its preconditioner."""

    def __init__(self, grid: GridSpec, B: np.ndarray, t: float, precond: str):
        self.grid, self.B, self.t = grid, B, t
        self.shape = grid.shape
        N = grid.size
        if precond == "fft":
            sym = _symbol(grid, B.reshape(-1, grid.n, grid.n).mean(axis=0), t)
            axes = tuple(range(grid.ndim))
            self.M = LinearOperator(
                (N, N), dtype=float,
                matvec=lambda r: sfft.irfftn(sfft.rfftn(r.reshape(self.shape), axes=axes) / sym,
                                             s=self.shape, axes=axes).reshape(-1))
        else:
            h = grid.h
            diag = -np.trace(B, axis1=-2, axis2=-1).real / h ** 2 - (t if t > 0 else 1.0 / N)
            self.M = LinearOperator((N, N), dtype=float, matvec=lambda r: r / diag.reshape(-1))
        self.terms = contraction_coefficients(B)
        self.A = LinearOperator((N, N), dtype=float, matvec=self.apply)

    def apply(self, v):
        v = v.reshape(self.shape)
        out = apply_contraction(self.terms, v, self.grid)
        if self.t > 0:
            out -= self.t * v
        else:
            out -= v.mean()
        return out.reshape(-1)

    def solve(self, rhs: np.ndarray, rtol: float) -> np.ndarray:
        b = rhs.reshape(-1)
        bnorm = np.linalg.norm(b)
        if bnorm == 0:
            return np.zeros(self.shape)
        x = self.M.matvec(b)
        for _ in range(4):
            r = b - self.A.matvec(x)
            if np.linalg.norm(r) <= rtol * bnorm:
                break
            dx, _info = gmres(self.A, r, rtol=rtol * bnorm / np.linalg.norm(r) * 0.5, atol=0.0,
                              restart=60, maxiter=20, M=self.M)
            x = x + dx
        res = np.linalg.norm(b - self.A.matvec(x)) / bnorm
        if res > rtol * 10:
            raise LinearSolveError(f"linear solve stalled at relative residual {res:.2e}")
        return x.reshape(self.shape)


# ---------------------------------------------------------------------------
# Newton stage

def _state(A, phi_vals, grid):
    M = A + _hessian_array(phi_vals, grid)
    return M, hermitian_min_eig(M)


def _residual(M, phi_vals, t, logrhs, c):
    r = np.log(hermitian_det(M)) - logrhs
    if t > 0:
        r -= t * phi_vals
    else:
        r -= c
    return r


def _feasible_start(A, phi_vals, grid):
    """Shrink ``phi`` towards zero until ``A + H(theta phi)`` is positive definite."""
    theta = 1.0
    for _ in range(60):
        _, lam = _state(A, theta * phi_vals, grid)
        if lam.min() > POSITIVITY_FLOOR:
            return theta * phi_vals
        theta *= 0.5
    raise FeasibilityError("reference form plus initial guess is not positive at any scale")


def newton_stage(A: np.ndarray, logrhs: np.ndarray, grid: GridSpec, t: float, phi0: np.ndarray,
                 cfg: SolverConfig, c0: float = 0.0):
    """Damped Newton for one regularization level; returns ``(phi, c, history, iters)``."""
    phi = np.array(phi0, dtype=float)
    if t == 0:
        phi -= phi.mean()
    phi = _feasible_start(A, phi, grid)
    c = c0
    M, _ = _state(A, phi, grid)
    r = _residual(M, phi, t, logrhs, c)
    hist = [float(np.abs(r).max())]
    it = 0
    while hist[-1] > cfg.newton_tol:
        if it >= cfg.max_newton:
            raise NewtonDivergenceError(
                f"no convergence in {cfg.max_newton} Newton steps (residual {hist[-1]:.3e})",
                last=PeriodicField(grid, phi))
        sysm = _NewtonSystem(grid, hermitian_inv(M), t, cfg.preconditioner)
        w = sysm.solve(-r, cfg.linear_rtol)
        if t == 0:
            dc = float(w.mean())
            dphi = w - dc
        else:
            dc, dphi = 0.0, w
        merit = np.linalg.norm(r)
        theta = 1.0
        while True:
            cand = phi + theta * dphi
            Mc, lamc = _state(A, cand, grid)
            if lamc.min() > POSITIVITY_FLOOR:
                rc = _residual(Mc, cand, t, logrhs, c + theta * dc)
                mc = np.linalg.norm(rc)
                if mc < (1.0 - 1e-4 * theta) * merit or np.abs(rc).max() <= cfg.newton_tol:
                    break
            theta *= 0.5
            if theta < cfg.damping_floor:
                raise NewtonDivergenceError(
                    f"line search hit the damping floor at residual {hist[-1]:.3e}",
                    last=PeriodicField(grid, phi))
        phi, c, M, r = cand, c + theta * dc, Mc, rc
        it += 1
        hist.append(float(np.abs(r).max()))
        logger.debug("newton %d: theta=%g residual=%.3e", it, theta, hist[-1])
    return phi, c, hist, it


# ---------------------------------------------------------------------------

def normalize_sup(phi: PeriodicField, level: float = -1.0) -> PeriodicField:
    return PeriodicField(phi.grid, phi.values - phi.values.max() + level)


def _finalize(phi_vals, grid, cfg):
    phi = PeriodicField(grid, phi_vals)
    if cfg.normalization == "sup_minus_one":
        phi = normalize_sup(phi, -1.0)
    return phi


def _check_inputs(omega: ReferenceForm, f: Density):
    if omega.grid != f.grid:
        raise ValueError("reference form and density live on different grids")
    if (f.values < 0).any() or not np.isfinite(f.values).all():
        raise ValueError("density must be finite and nonnegative")


def _log_density(values):
    if (values <= 0).any():
        raise FeasibilityError("density vanishes at a node; the log-determinant form is undefined")
    return np.log(values)


def solve_fixed_rhs(omega: ReferenceForm, f: Density, cfg: SolverConfig = SolverConfig(),
                    init: Optional[PeriodicField] = None) -> SolveReport:
    """Solve ``(omega + dd^c phi)^n = f`` (densities against Lebesgue measure).

    ``f`` must have the same mass as ``omega^n``.  Each stage solves with
    ``omega + eps I`` and right-hand side ``lambda_eps f`` where
    ``lambda_eps`` is the mass ratio of ``omega + eps I`` to ``omega``.
    """
    if cfg.t != 0:
        raise ValueError("solve_fixed_rhs needs t = 0; use solve_exponential")
    _check_inputs(omega, f)
    start = time.perf_counter()
    grid = omega.grid
    base_mass = omega.total_mass()
    if abs(f.mass - base_mass) > MASS_TOL * max(1.0, base_mass):
        raise MassMismatchError(f"density mass {f.mass!r} differs from omega^n mass {base_mass!r}")
    logf = _log_density(f.values)
    phi = np.zeros(grid.shape) if init is None else np.array(init.values, dtype=float)
    c = 0.0
    hists, eps_used, sups = [], [], []
    iters = 0
    regularized = False
    for eps in cfg.eps_schedule:
        A = omega.regularized(eps).coeff
        if eps == 0 and eps_used:
            margin = float(hermitian_min_eig(omega.coeff + _hessian_array(phi, grid)).min())
            if margin <= 10 * cfg.newton_tol:
                regularized = True
                break
        lam = omega.regularized(eps).total_mass() / base_mass
        try:
            phi, c, hist, it = newton_stage(A, logf + np.log(lam), grid, 0.0, phi, cfg, c)
        except (NewtonDivergenceError, FeasibilityError):
            if eps == 0 and eps_used:
                regularized = True
                break
            raise
        iters += it
        hists.append(hist)
        eps_used.append(eps)
        sups.append(float(np.abs(phi - phi.max() - 1.0).max()))
    if eps_used and eps_used[-1] > 0:
        regularized = True
    final_eps = eps_used[-1]
    lam_min = float(hermitian_min_eig(omega.regularized(final_eps).coeff + _hessian_array(phi, grid)).min())
    wall = int(round(1000 * (time.perf_counter() - start)))
    return SolveReport(_finalize(phi, grid, cfg), hists, eps_used, hists[-1][-1] <= cfg.newton_tol,
                       iters, wall, stage_sup_norms=sups, compat_shift=float(c),
                       regularized=regularized, min_eig=lam_min, t=0.0)


def _mu_mean(vals, f, grid):
    return integrate(vals * f.values, grid) / f.mass


def c_psi(psi: np.ndarray, f: Density, t: float, target_mass: float = 1.0) -> float:
    """``log`` of the quadrature of ``e^{t psi} f``, relative to ``target_mass``."""
    tp = t * psi
    top = tp.max()
    return float(top + np.log(integrate(np.exp(tp - top) * f.values, f.grid) / target_mass))


def solve_exponential(omega: ReferenceForm, f: Density, cfg: SolverConfig,
                      init: Optional[PeriodicField] = None) -> SolveReport:
    """Solve ``(omega + dd^c phi)^n = e^{t phi} f`` for ``t > 0``."""
    if not cfg.t > 0:
        raise ValueError("solve_exponential needs t > 0")
    _check_inputs(omega, f)
    if not f.mass > 0:
        raise ValueError("density needs positive mass")
    if cfg.outer_mode == "T_iteration":
        return _solve_t_iteration(omega, f, cfg, init)
    start = time.perf_counter()
    grid = omega.grid
    logf = _log_density(f.values)
    phi = np.zeros(grid.shape) if init is None else np.array(init.values, dtype=float)
    hists, eps_used, sups = [], [], []
    iters = 0
    for eps in cfg.eps_schedule:
        A = omega.regularized(eps).coeff
        phi, _, hist, it = newton_stage(A, logf, grid, cfg.t, phi, cfg)
        iters += it
        hists.append(hist)
        eps_used.append(eps)
        sups.append(float(np.abs(phi).max()))
    lam_min = float(hermitian_min_eig(omega.regularized(eps_used[-1]).coeff + _hessian_array(phi, grid)).min())
    wall = int(round(1000 * (time.perf_counter() - start)))
    return SolveReport(PeriodicField(grid, phi), hists, eps_used, hists[-1][-1] <= cfg.newton_tol,
                       iters, wall, stage_sup_norms=sups, regularized=eps_used[-1] > 0,
                       min_eig=lam_min, t=cfg.t)


def _solve_t_iteration(omega, f, cfg, init):
    start = time.perf_counter()
    grid = omega.grid
    t = cfg.t
    inner_cfg = replace(cfg, t=0.0, normalization="none", outer_mode="direct_newton",
                        newton_tol=cfg.newton_tol / 10)
    psi = np.zeros(grid.shape) if init is None else np.array(init.values, dtype=float)
    psi = psi - _mu_mean(psi, f, grid)
    hists, eps_used, sups, cpsis = [], [], [], []
    iters = 0
    shift = 0.0
    for eps in cfg.eps_schedule:
        om = omega.regularized(eps)
        om = ReferenceForm(grid, om.coeff, validate=False)
        target = om.total_mass()
        hist = []
        stall = 0
        for k in range(cfg.max_outer):
            cp = c_psi(psi, f, t, target)
            rhs = Density(grid, np.exp(t * psi - cp) * f.values, check=False)
            rep = solve_fixed_rhs(om, rhs, replace(inner_cfg, eps_schedule=(0.0,)),
                                  init=PeriodicField(grid, psi))
            iters += rep.iterations
            phi = rep.phi.values
            phi = phi - _mu_mean(phi, f, grid)
            gap = float(np.abs(phi - psi).max())
            if hist and gap >= hist[-1]:
                stall += 1
            else:
                stall = 0
            hist.append(gap)
            cpsis.append(cp)
            psi = phi
            shift = rep.compat_shift
            if gap <= cfg.newton_tol:
                break
            if stall >= 10:
                raise TIterationStallError(f"fixed-point residual stalled at {gap:.3e}")
        else:
            raise TIterationStallError(f"no fixed point within {cfg.max_outer} outer steps")
        hists.append(hist)
        eps_used.append(eps)
        sups.append(float(np.abs(psi).max()))
    cp = c_psi(psi, f, t, omega.regularized(eps_used[-1]).total_mass())
    cpsis.append(cp)
    Phi = psi - (cp - shift) / t
    lam_min = float(hermitian_min_eig(omega.regularized(eps_used[-1]).coeff + _hessian_array(Phi, grid)).min())
    wall = int(round(1000 * (time.perf_counter() - start)))
    return SolveReport(PeriodicField(grid, Phi), hists, eps_used, hists[-1][-1] <= cfg.newton_tol,
                       iters, wall, c_psi_history=cpsis, stage_sup_norms=sups,
                       compat_shift=shift, regularized=eps_used[-1] > 0, min_eig=lam_min, t=t)


def solve(omega: ReferenceForm, f: Density, cfg: SolverConfig,
          init: Optional[PeriodicField] = None) -> SolveReport:
    """Dispatch on ``cfg.t``."""
    if cfg.t == 0:
        return solve_fixed_rhs(omega, f, cfg, init)
    return solve_exponential(omega, f, cfg, init)


def solution_residual(report: SolveReport, omega: ReferenceForm, f: Density) -> float:
    """Independent residual ``sup |MA(phi) / rhs - 1|`` recomputed from the field."""
    from .field import ma_measure
    eps = report.eps_used[-1]
    om = omega.regularized(eps)
    ma = ma_measure(report.phi, ReferenceForm(om.grid, om.coeff, validate=False)).values
    if report.t > 0:
        rhs = np.exp(report.t * report.phi.values) * f.values
    else:
        lam = om.total_mass() / omega.total_mass()
        rhs = lam * f.values * np.exp(report.compat_shift)
    return float(np.abs(ma / rhs - 1.0).max())
