"""Right-hand-side measures: construction, normalization and integrability.

Sections of line bundles are modeled by powers of the periodic distance to
marked points (or to complex coordinate hyperplanes, when a term is given a
subset of complex directions).  Singular centres are snapped to grid
vertices, which are never nodes, so a pole is felt by the quadrature only
through growth under refinement.
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field, replace
from typing import Callable, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import InconclusiveError, IntegrabilityError, PoleOnNodeError, ZeroMassError
from .field import GridSpec, PeriodicField, integrate

CONTRACTION_RATIO = 0.9
GROWTH_RATIO = 0.97


@dataclass(frozen=True)
class Density:
    grid: GridSpec
    values: np.ndarray
    lp_class: Optional[Tuple[float, float]] = None
    spec: Optional["AlgebraicDensitySpec"] = dc_field(default=None, compare=False)
    check: bool = dc_field(default=True, repr=False, compare=False)
    allow_poles: bool = dc_field(default=False, repr=False, compare=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.grid.shape:
            v = np.broadcast_to(v, self.grid.shape).copy()
        object.__setattr__(self, "values", v)
        if self.check:
            if np.isnan(v).any():
                raise ValueError("density has NaN values")
            if not self.allow_poles and not np.isfinite(v).all():
                raise ValueError("infinite density values need allow_poles=True")
            if (v < 0).any():
                raise ValueError("density must be nonnegative")

    @classmethod
    def constant(cls, grid: GridSpec, value: float = 1.0) -> "Density":
        return cls(grid, np.full(grid.shape, float(value)), spec=AlgebraicDensitySpec(scale=value))

    @property
    def mass(self) -> float:
        return integrate(self.values, self.grid)

    def with_values(self, values) -> "Density":
        return Density(self.grid, values, spec=None)

    def restricted_mass(self, mask: np.ndarray) -> float:
        return integrate(np.where(mask, self.values, 0.0), self.grid)


class Singularity(NamedTuple):
    """A zero or pole term ``d(., center)^exponent``.

    ``directions`` lists the complex coordinates the distance is measured in;
    ``None`` means all of them (a point singularity).
    """

    center: Tuple[float, ...]
    exponent: float
    directions: Optional[Tuple[int, ...]] = None


def _as_singularity(term) -> Singularity:
    if isinstance(term, Singularity):
        return term
    if len(term) == 2:
        return Singularity(tuple(term[0]), float(term[1]))
    return Singularity(tuple(term[0]), float(term[1]), tuple(term[2]))


@dataclass(frozen=True)
class AlgebraicDensitySpec:
    """``(sum_i |sigma_i|^{2k_i}) / (sum_j |tau_j|^{2l_j}) * exp(F)``.

    ``zeros`` and ``poles`` hold :class:`Singularity` terms whose ``exponent``
    is the even-style power ``2k`` (resp. ``2l``).  ``smooth_factor`` is ``F``,
    either a callable of the real coordinate arrays or a fixed field.
    """

    zeros: Tuple[Singularity, ...] = ()
    poles: Tuple[Singularity, ...] = ()
    smooth_factor: Optional[Union[Callable, PeriodicField]] = None
    scale: float = 1.0

    def __post_init__(self):
        zeros = tuple(_as_singularity(z) for z in self.zeros)
        poles = tuple(_as_singularity(p) for p in self.poles)
        object.__setattr__(self, "zeros", zeros)
        object.__setattr__(self, "poles", poles)
        for t in zeros + poles:
            if not np.isfinite(t.exponent) or t.exponent < 0:
                raise ValueError(f"exponents must be finite and nonnegative, got {t.exponent}")
        for p in poles:
            # local exponent -l must stay above -1 in each complex factor
            if not p.exponent < 2.0:
                raise IntegrabilityError(
                    f"pole exponent 2l = {p.exponent} is not integrable (need 2l < 2)")


class KltSpec(NamedTuple):
    exponents: Sequence[Tuple[float, float]]


class KltResult(NamedTuple):
    klt: bool
    margin: float


class IntegrabilityResult(NamedTuple):
    integrable_verdict: bool
    mass_sequence: list


class LpResult(NamedTuple):
    in_lp: bool
    norm_sequence: list


# ---------------------------------------------------------------------------

def snap_to_vertex(grid: GridSpec, point: Sequence[float]) -> np.ndarray:
    """Move ``point`` to the nearest grid vertex (a cell centre of the node lattice)."""
    p = np.asarray(point, dtype=float)
    if p.shape != (grid.ndim,):
        raise ValueError(f"centre needs {grid.ndim} real coordinates, got {p.shape}")
    return np.mod(np.round(p / grid.h) * grid.h, grid.period)


def periodic_distance_sq(grid: GridSpec, center: Sequence[float],
                         directions: Optional[Sequence[int]] = None) -> np.ndarray:
    axes = grid.mesh()
    P = grid.period
    dirs = range(grid.n) if directions is None else directions
    d2 = np.zeros(grid.shape)
    for j in dirs:
        for a in (2 * j, 2 * j + 1):
            delta = np.mod(axes[a] - center[a], P)
            delta = np.minimum(delta, P - delta)
            d2 = d2 + delta ** 2
    return d2


def _term_sum(grid, terms, snap, check_nodes):
    total = np.zeros(grid.shape)
    for t in terms:
        c = snap_to_vertex(grid, t.center) if snap else np.asarray(t.center, dtype=float)
        d2 = periodic_distance_sq(grid, c, t.directions)
        if check_nodes and np.sqrt(d2.min()) < grid.h * 1e-6:
            raise PoleOnNodeError(f"pole at {tuple(c)} coincides with a grid node")
        total = total + d2 ** (0.5 * t.exponent)
    return total


def algebraic_density(spec: AlgebraicDensitySpec, grid: GridSpec, target_mass: Optional[float] = 1.0,
                      snap: bool = True) -> Density:
    """Sample the algebraic density on ``grid`` and normalize it to ``target_mass``.

    ``target_mass=None`` skips normalization (values then carry ``spec.scale``).
    """
    num = _term_sum(grid, spec.zeros, snap, False) if spec.zeros else np.ones(grid.shape)
    if spec.poles:
        den = _term_sum(grid, spec.poles, snap, True)
        f = num / den
    else:
        f = num
    F = spec.smooth_factor
    if F is not None:
        Fv = F.values if isinstance(F, PeriodicField) else np.broadcast_to(F(*grid.mesh()), grid.shape)
        f = f * np.exp(Fv)
    f = spec.scale * f
    dens = Density(grid, f, spec=spec)
    if target_mass is not None:
        dens = normalize(dens, target_mass)
    return dens


def normalize(f: Density, target_mass: float = 1.0) -> Density:
    if not target_mass > 0:
        raise ValueError("target mass must be positive")
    mass = f.mass
    if not mass > 0:
        raise ZeroMassError("cannot normalize a density with zero mass")
    return replace(f, values=f.values * (target_mass / mass), check=False)


def klt_check(spec: KltSpec, eps: float = 0.0) -> KltResult:
    """Log terminal test on discrepancy data: every ``a_E - eps b_E`` must exceed -1."""
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    exps = list(spec.exponents if isinstance(spec, KltSpec) else spec)
    if not exps:
        raise ValueError("klt spec needs at least one exceptional divisor")
    margin = min(a - eps * b + 1.0 for a, b in exps)
    return KltResult(bool(margin > 0), float(margin))


# ---------------------------------------------------------------------------
# refinement studies

def refinement_verdict(seq: Sequence[float], what: str = "quantity") -> bool:
    """True if successive differences contract geometrically, False if they grow.

    Raises :class:`InconclusiveError` when neither pattern holds.
    """
    seq = np.asarray(seq, dtype=float)
    if not np.isfinite(seq).all():
        return False
    diffs = np.diff(seq)
    scale = max(np.abs(seq).max(), 1e-300)
    if np.all(np.abs(diffs) <= 1e-13 * scale):
        return True
    mags = np.abs(diffs)
    ratios = mags[1:] / np.maximum(mags[:-1], 1e-300)
    if np.all(ratios < CONTRACTION_RATIO):
        return True
    if np.all(diffs > 0) and np.all(ratios >= GROWTH_RATIO):
        return False
    raise InconclusiveError(f"{what} sequence neither contracts nor grows: {seq.tolist()}",
                            sequence=seq.tolist())


def integrability_quadrature(a: float, n: int = 1, refinements: int = 5, m0: int = 8) -> IntegrabilityResult:
    """Mass of ``prod_j |z_j|^{2a}`` on the unit torus under grid doubling.

    The integrand is centred at the vertex 0.  It is a product over complex
    factors, so its tensor-grid quadrature is the ``n``-th power of the
    one-factor quadrature; only the factor quadrature is evaluated.
    """
    if refinements < 3:
        raise ValueError("need at least 3 refinement levels")
    masses = []
    for r in range(refinements):
        g = GridSpec(1, m0 * 2 ** r)
        d2 = periodic_distance_sq(g, np.zeros(2))
        factor = integrate(d2 ** a, g)
        masses.append(factor ** n)
    return IntegrabilityResult(refinement_verdict(masses, "mass"), masses)


def lp_estimate(f: Union[Density, AlgebraicDensitySpec, Callable], p: float, refinements: int = 4,
                grid: Optional[GridSpec] = None) -> LpResult:
    """``||f||_p`` of the mass-normalized density on successively doubled grids.

    ``f`` is rebuilt at each level, so it must be a Density carrying its
    algebraic spec, a spec plus ``grid``, or a callable ``grid -> Density``.
    """
    if not p > 1:
        raise ValueError("p must exceed 1")
    if isinstance(f, Density):
        if f.spec is None:
            raise ValueError("density carries no spec; pass a spec or a grid -> Density callable")
        grid = grid or f.grid
        build = lambda g: algebraic_density(f.spec, g)
    elif isinstance(f, AlgebraicDensitySpec):
        if grid is None:
            raise ValueError("a base grid is required with a spec")
        build = lambda g: algebraic_density(f, g)
    else:
        if grid is None:
            raise ValueError("a base grid is required with a callable")
        build = f
    norms = []
    g = grid
    for _ in range(refinements):
        d = build(g)
        norms.append(integrate(np.abs(d.values) ** p, g) ** (1.0 / p))
        g = g.refine()
    return LpResult(refinement_verdict(norms, "L^p norm"), norms)
