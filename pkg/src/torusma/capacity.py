"""Discrete Monge-Ampere capacity, the domination condition and the
decay-iteration engine for sublevel capacity profiles.

Capacities here are certified lower bounds: every number is the Monge-Ampere
mass on ``K`` of an explicit competitor ``v`` with ``0 <= v <= 1`` and
``omega + H(v)`` positive semidefinite at every node.  Competitor measures are
rescaled to the exact total mass of ``omega^n``, which the centered stencil
only reproduces up to ``O(h^2)`` for ``n >= 2``.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional, Sequence

import numpy as np

from .density import Density
from .errors import HViolationError, NoStartError, NonConvergenceError
from .field import (GridSpec, PeriodicField, ReferenceForm, _hessian_array, hermitian_det,
                    hermitian_min_eig, ma_measure)

logger = logging.getLogger(__name__)

H_RTOL = 1e-9
ADMISSIBLE_TOL = 1e-12


# ---------------------------------------------------------------------------
# competitors

def _color_masks(grid: GridSpec):
    idx = np.indices(grid.shape).sum(axis=0)
    red = (idx % 2) == 0
    return red, ~red


def relative_extremal(K: np.ndarray, omega: ReferenceForm, sweeps: int = 5000,
                      tol: float = 1e-10) -> PeriodicField:
    """Largest field with ``u <= 0``, ``u = -1`` on ``K`` and ``omega + H(u) >= 0`` off ``K``.

    Red-black relaxation from ``u = -1``: each free node is raised to the
    largest value keeping its own matrix semidefinite, capped at 0.  The
    centre weight of ``H`` is ``-1/h^2`` on the diagonal, which makes the
    local update explicit: ``u(x) = min(0, h^2 lambda_min(omega + H_rest(x)))``.
    """
    grid = omega.grid
    K = np.asarray(K, dtype=bool).reshape(grid.shape)
    if not K.any():
        raise ValueError("K must be nonempty")
    h2 = grid.h ** 2
    eye = np.eye(grid.n)
    u = -np.ones(grid.shape)
    free = ~K
    colors = [c & free for c in _color_masks(grid)]
    for sweep in range(sweeps):
        change = 0.0
        for c in colors:
            if not c.any():
                continue
            rest = omega.coeff + _hessian_array(u, grid) + (u / h2)[..., None, None] * eye
            cand = np.minimum(0.0, h2 * hermitian_min_eig(rest))
            change = max(change, float(np.abs(cand[c] - u[c]).max()))
            u[c] = cand[c]
        if change <= tol:
            return PeriodicField(grid, u)
    raise NonConvergenceError(f"relative extremal sweep did not settle in {sweeps} sweeps",
                              last=PeriodicField(grid, u))


def _admissible_scale(omega_coeff: np.ndarray, H: np.ndarray, tol: float = ADMISSIBLE_TOL) -> float:
    """Largest ``theta`` in [0, 1] with ``omega + theta H >= -tol`` at every node."""
    def ok(th):
        return hermitian_min_eig(omega_coeff + th * H).min() >= -tol
    if ok(1.0):
        return 1.0
    lo, hi = 0.0, 1.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo


def bowl(grid: GridSpec, center: Sequence[float]) -> np.ndarray:
    """Smooth periodic bowl ``sum_a (1 - cos(2 pi (x_a - c_a)/P))`` scaled to [0, 1]."""
    axes = grid.mesh()
    P = grid.period
    b = np.zeros(grid.shape)
    for a in range(grid.ndim):
        b = b + (1.0 - np.cos(2 * np.pi * (axes[a] - center[a]) / P))
    return b / b.max()


def _centroid(K: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Circular mean of the node coordinates in ``K`` along each axis."""
    coords = grid.coords()
    P = grid.period
    idx = np.nonzero(K)
    c = np.empty(grid.ndim)
    for a in range(grid.ndim):
        ang = 2 * np.pi * coords[idx[a]] / P
        c[a] = np.mod(np.arctan2(np.sin(ang).mean(), np.cos(ang).mean()) * P / (2 * np.pi), P)
    return c


class CapacityEstimate(NamedTuple):
    value: float
    maximizer: str
    candidates: Dict[str, float]


def _corrected_mass_on(K, v_vals, omega, total):
    d = hermitian_det(omega.coeff + _hessian_array(v_vals, omega.grid))
    d = np.maximum(d, 0.0)
    s = d.sum()
    if s <= 0:
        return 0.0
    return float(total * d[K].sum() / s)


def competitor_dictionary(K: np.ndarray, omega: ReferenceForm, sweeps: int = 5000,
                          extremal: bool = True) -> Dict[str, np.ndarray]:
    """Admissible competitors with values in [0, 1] used to bound ``Cap(K)`` from below."""
    grid = omega.grid
    comps = {"constant": np.zeros(grid.shape)}
    if not K.any():
        return comps
    b = bowl(grid, _centroid(K, grid))
    theta = _admissible_scale(omega.coeff, _hessian_array(b, grid))
    for frac in (1.0, 0.5):
        comps[f"bowl[{frac:g}]"] = frac * theta * b
    if extremal and not K.all():
        try:
            u = relative_extremal(K, omega, sweeps).values
        except NonConvergenceError as exc:
            logger.info("using unconverged extremal iterate: %s", exc)
            u = exc.last.values
        v = u + 1.0
        theta = _admissible_scale(omega.coeff, _hessian_array(v, grid))
        comps["extremal"] = theta * v
    return comps


def cap_omega_detail(K: np.ndarray, omega: ReferenceForm, sweeps: int = 5000,
                     extremal: bool = True) -> CapacityEstimate:
    grid = omega.grid
    K = np.asarray(K, dtype=bool).reshape(grid.shape)
    if not K.any():
        return CapacityEstimate(0.0, "empty", {})
    total = omega.total_mass()
    vals = {}
    for name, v in competitor_dictionary(K, omega, sweeps, extremal).items():
        vals[name] = _corrected_mass_on(K, v, omega, total)
    best = max(vals, key=vals.get)
    return CapacityEstimate(vals[best], best, vals)


def cap_omega(K: np.ndarray, omega: ReferenceForm, sweeps: int = 5000, extremal: bool = True) -> float:
    """Certified lower bound for ``Cap_omega(K)`` from the competitor dictionary."""
    return cap_omega_detail(K, omega, sweeps, extremal).value


# ---------------------------------------------------------------------------
# domination condition

@dataclass
class HConditionReport:
    alpha: float
    A_hat: float
    worst_set: Optional[str]
    ratios: Dict[str, float]
    capacities: Dict[str, float]

    def satisfied(self, A: float) -> bool:
        return self.A_hat <= A

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "A_hat": self.A_hat, "worst_set": self.worst_set,
                "ratios": dict(self.ratios), "capacities": dict(self.capacities),
                "capacity_kind": "dictionary lower bound"}


def standard_test_sets(grid: GridSpec, center: Optional[Sequence[float]] = None,
                       fields: Sequence[PeriodicField] = (), levels: Sequence[float] = (0.25, 0.5, 0.75)
                       ) -> Dict[str, np.ndarray]:
    """Dyadic metric balls, coordinate slabs and sublevel sets of ``fields``."""
    from .density import periodic_distance_sq
    c = np.full(grid.ndim, 0.5 * grid.period) if center is None else np.asarray(center, float)
    sets = {}
    d = np.sqrt(periodic_distance_sq(grid, c))
    r = 0.5 * grid.period
    k = 1
    while r >= grid.h:
        mask = d < r
        if mask.any():
            sets[f"ball_r{k}"] = mask
        r /= 2
        k += 1
    x = grid.mesh()[0]
    w = 0.5 * grid.period
    k = 1
    while w >= grid.h:
        sets[f"slab_w{k}"] = np.broadcast_to(x < w, grid.shape).copy()
        w /= 2
        k += 1
    for i, phi in enumerate(fields):
        vals = phi.values
        lo, hi = vals.min(), vals.max()
        for q in levels:
            mask = vals < lo + q * (hi - lo)
            if mask.any():
                sets[f"sublevel{i}_q{q:g}"] = mask
    return sets


def h_condition(mu: Density, omega: ReferenceForm, alpha: float, test_sets,
                sweeps: int = 5000) -> HConditionReport:
    """Estimate the smallest ``A`` with ``mu(K) <= A Cap(K)^(1+alpha)`` on the test sets."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    if isinstance(test_sets, dict):
        items = list(test_sets.items())
    else:
        items = [(f"set{i}", s) for i, s in enumerate(test_sets)]
    if not items:
        raise ValueError("need at least one test set")
    ratios, caps = {}, {}
    for name, K in items:
        K = np.asarray(K, dtype=bool).reshape(mu.grid.shape)
        mK = mu.restricted_mass(K)
        if mK == 0:
            ratios[name] = 0.0
            caps[name] = float("nan") if not K.any() else cap_omega(K, omega, sweeps)
            continue
        cap = cap_omega(K, omega, sweeps)
        caps[name] = cap
        ratios[name] = float("inf") if cap == 0 else mK / cap ** (1 + alpha)
    worst = max(ratios, key=ratios.get)
    A_hat = ratios[worst]
    return HConditionReport(alpha, A_hat, worst if A_hat > 0 else None, ratios, caps)


# ---------------------------------------------------------------------------
# decay profiles

@dataclass(frozen=True)
class DecayProfile:
    """Right-continuous step function ``f(s) = f_i`` on ``[s_i, s_{i+1})``.

    The value after the last sample is the last value, so ``f`` tends to zero
    only if the last sample is zero.
    """

    s: np.ndarray
    f: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.s, dtype=float)
        f = np.asarray(self.f, dtype=float)
        if s.ndim != 1 or s.shape != f.shape or s.size == 0:
            raise ValueError("profile needs matching 1-D sample arrays")
        if (s < 0).any() or (np.diff(s) <= 0).any():
            raise ValueError("sample abscissae must be nonnegative and strictly increasing")
        if (f < 0).any() or (np.diff(f) > 0).any():
            raise ValueError("profile values must be nonnegative and nonincreasing")
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "f", f)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        i = np.searchsorted(self.s, x, side="right") - 1
        out = np.where(i >= 0, self.f[np.clip(i, 0, None)], self.f[0])
        return out

    def to_csv(self, path) -> Path:
        from .io import fmt_float
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["s", "f"])
            for a, b in zip(self.s, self.f):
                w.writerow([fmt_float(a), fmt_float(b)])
        return path

    @classmethod
    def from_csv(cls, path) -> "DecayProfile":
        with Path(path).open() as fh:
            rows = list(csv.reader(fh))
        body = rows[1:] if rows and rows[0][0].strip().lower() == "s" else rows
        s = [float(r[0]) for r in body if r]
        f = [float(r[1]) for r in body if r]
        return cls(np.array(s), np.array(f))


@dataclass
class DecayReport:
    s0: float
    s_sequence: List[float]
    S_inf: float
    bound_check: bool
    bound: float
    small_start_bound: Optional[float]
    certification: str = "grid-certified"

    def to_dict(self) -> dict:
        return {"s0": self.s0, "s_sequence": list(self.s_sequence), "S_inf": self.S_inf,
                "bound_check": self.bound_check, "bound": self.bound,
                "small_start_bound": self.small_start_bound, "certification": self.certification}


def h_alpha_b_ratio(profile: DecayProfile, alpha: float, exact: bool = False) -> float:
    """Smallest ``B`` making ``t f(s+t) <= B f(s)^(1+alpha)`` hold on the profile.

    Grid mode checks sample pairs ``(s_i, s_j)`` with ``0 <= s_j - s_i <= 1``.
    ``exact`` takes the supremum over all real ``s`` and ``t`` of the step
    function: for ``s`` in step ``i`` and ``s + t`` in step ``j`` the worst
    ``t`` is ``min(1, s_{j+1} - s_i)``.  Returns ``inf`` when some pair has
    ``f(s) = 0 < f(s+t)``.
    """
    s, f = profile.s, profile.f
    n = s.size
    nxt = np.append(s[1:], np.inf)
    best = 0.0
    for i in range(n):
        if exact:
            j_hi = np.searchsorted(s, nxt[i] + 1.0, side="left")
            js = np.arange(i, j_hi)
            t = np.minimum(1.0, nxt[js] - s[i])
        else:
            j_hi = np.searchsorted(s, s[i] + 1.0, side="right")
            js = np.arange(i, j_hi)
            t = s[js] - s[i]
        lhs = float((t * f[js]).max()) if js.size else 0.0
        if lhs == 0:
            continue
        base = f[i] ** (1 + alpha)
        if base == 0:
            return float("inf")
        best = max(best, lhs / base)
    return best


def verify_h_alpha_b(profile: DecayProfile, alpha: float, B: float, exact: bool = False,
                     rtol: float = H_RTOL) -> bool:
    """Exhaustive check of ``t f(s+t) <= B f(s)^(1+alpha)`` for ``0 <= t <= 1``."""
    if not alpha > 0 or not B > 0:
        return bool(np.all(profile.f == 0))
    return h_alpha_b_ratio(profile, alpha, exact) <= B * (1 + rtol)


def decay_iterate(profile: DecayProfile, alpha: float, B: float, tol: float = 1e-12) -> DecayReport:
    """Run the halving recursion ``s_{j+1} = sup{s > s_j : f(s) > f(s_j)/2}``.

    The profile must satisfy the decay hypothesis on the sample grid and end
    at zero.  ``S_inf`` is the terminal point of the recursion, after which the
    profile vanishes.
    """
    if not alpha > 0 or not B > 0:
        raise ValueError("alpha and B must be positive")
    ratio = h_alpha_b_ratio(profile, alpha)
    if ratio > B * (1 + H_RTOL):
        raise HViolationError(f"profile violates the hypothesis: needs B >= {ratio:.6g}, got {B:.6g}")
    s, f = profile.s, profile.f
    start = np.nonzero(f ** alpha < 1.0 / (2 * B))[0]
    if start.size == 0:
        raise NoStartError("no sample satisfies f(s0)^alpha < 1/(2B)")
    i = int(start[0])
    seq = [float(s[i])]
    while f[i] > 0:
        nxt = np.nonzero(f[i + 1:] <= 0.5 * f[i])[0]
        if nxt.size == 0:
            raise NoStartError("profile does not decay to zero within the sampled window")
        i = i + 1 + int(nxt[0])
        seq.append(float(s[i]))
    s0 = seq[0]
    S_inf = seq[-1]
    geo = 1.0 / (1.0 - 2.0 ** (-alpha))
    bound = s0 + geo
    ok = S_inf <= bound + tol
    small = None
    if f[0] ** alpha < 1.0 / (2 * B):
        small = 2 * B * f[0] ** alpha * geo
        ok = ok and S_inf <= small + tol
    return DecayReport(s0, seq, S_inf, bool(ok), bound, small)


def sublevel_profile(phi: PeriodicField, omega: ReferenceForm, s_grid: Sequence[float],
                     sweeps: int = 5000) -> DecayProfile:
    """``f(s) = Cap(phi < -s)^(1/n)`` with capacities from the competitor dictionary."""
    n = phi.grid.n
    cache = {}
    vals = []
    for s in s_grid:
        K = phi.values < -s
        key = K.tobytes()
        if key not in cache:
            cache[key] = cap_omega(K, omega, sweeps)
        vals.append(cache[key] ** (1.0 / n))
    vals = np.minimum.accumulate(np.asarray(vals))
    return DecayProfile(np.asarray(s_grid, dtype=float), vals)


class ComparisonResult(NamedTuple):
    lhs: float
    rhs: float
    holds: bool


def comparison_check(phi: PeriodicField, psi: PeriodicField, omega: ReferenceForm,
                     quadrature_tol: float = 1e-9, feas_tol: float = 1e-12) -> ComparisonResult:
    """``int_{phi < psi} MA(psi) <= int_{phi < psi} MA(phi)`` on the node set."""
    mphi = ma_measure(phi, omega, require_positive=True, tol=feas_tol)
    mpsi = ma_measure(psi, omega, require_positive=True, tol=feas_tol)
    S = phi.values < psi.values
    lhs = mpsi.restricted_mass(S)
    rhs = mphi.restricted_mass(S)
    return ComparisonResult(lhs, rhs, bool(lhs <= rhs + quadrature_tol))
