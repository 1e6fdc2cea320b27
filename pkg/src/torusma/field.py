"""Periodic grids on the flat torus C^n / (Z^n + iZ^n), complex Hessians and
the discrete Monge-Ampere operator.

A grid with complex dimension ``n`` carries ``2n`` real axes ordered
``(x_1, y_1, x_2, y_2, ...)`` with ``z_j = x_j + i y_j``.  Node ``i`` on an
axis sits at ``(i + 1/2) h``, so dyadic points such as ``0`` or ``1/2`` are
never nodes at any refinement level; singular densities are centred there.
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Optional, Sequence

import numpy as np

from .errors import FeasibilityError, GridMismatchError

PSD_RTOL = 1e-10


@dataclass(frozen=True)
class GridSpec:
    n: int
    m: int
    period: float = 1.0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"complex dimension must be an integer >= 1, got {self.n}")
        if int(self.m) != self.m or self.m < 4 or self.m % 2:
            raise ValueError(f"samples per axis must be an even integer >= 4, got {self.m}")
        if not self.period > 0:
            raise ValueError("period must be positive")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "m", int(self.m))
        object.__setattr__(self, "period", float(self.period))

    @property
    def ndim(self) -> int:
        return 2 * self.n

    @property
    def shape(self) -> tuple:
        return (self.m,) * self.ndim

    @property
    def size(self) -> int:
        return self.m ** self.ndim

    @property
    def h(self) -> float:
        return self.period / self.m

    @property
    def cell_volume(self) -> float:
        return self.h ** self.ndim

    @property
    def volume(self) -> float:
        return self.period ** self.ndim

    def coords(self) -> np.ndarray:
        return (np.arange(self.m) + 0.5) * self.h

    def mesh(self) -> list:
        """Sparse coordinate arrays, one per real axis, broadcastable to ``shape``."""
        c = self.coords()
        return np.meshgrid(*([c] * self.ndim), indexing="ij", sparse=True)

    def refine(self, factor: int = 2) -> "GridSpec":
        return GridSpec(self.n, self.m * factor, self.period)

    def zeros(self) -> "PeriodicField":
        return PeriodicField(self, np.zeros(self.shape))


def _check_same_grid(*grids):
    g0 = grids[0]
    for g in grids[1:]:
        if g != g0:
            raise GridMismatchError(f"grid mismatch: {g0} vs {g}")


@dataclass(frozen=True)
class PeriodicField:
    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.grid.shape:
            v = v.reshape(self.grid.shape)
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, grid: GridSpec, func) -> "PeriodicField":
        """Sample ``func(*axes)`` where ``axes`` are the broadcastable real coordinates."""
        vals = np.broadcast_to(func(*grid.mesh()), grid.shape)
        return cls(grid, np.array(vals, dtype=float))

    def __add__(self, other):
        if isinstance(other, PeriodicField):
            _check_same_grid(self.grid, other.grid)
            return PeriodicField(self.grid, self.values + other.values)
        return PeriodicField(self.grid, self.values + other)

    def __sub__(self, other):
        if isinstance(other, PeriodicField):
            _check_same_grid(self.grid, other.grid)
            return PeriodicField(self.grid, self.values - other.values)
        return PeriodicField(self.grid, self.values - other)

    def __mul__(self, c):
        return PeriodicField(self.grid, self.values * c)

    __rmul__ = __mul__

    def __neg__(self):
        return PeriodicField(self.grid, -self.values)

    def max(self) -> float:
        return float(self.values.max())

    def min(self) -> float:
        return float(self.values.min())


# ---------------------------------------------------------------------------
# batched Hermitian helpers; closed forms for n <= 2, LAPACK otherwise

def hermitian_det(M: np.ndarray) -> np.ndarray:
    n = M.shape[-1]
    if n == 1:
        return M[..., 0, 0].real.copy()
    if n == 2:
        return (M[..., 0, 0].real * M[..., 1, 1].real
                - (M[..., 0, 1] * M[..., 1, 0]).real)
    return np.linalg.det(M).real


def hermitian_min_eig(M: np.ndarray) -> np.ndarray:
    n = M.shape[-1]
    if n == 1:
        return M[..., 0, 0].real.copy()
    if n == 2:
        a = M[..., 0, 0].real
        d = M[..., 1, 1].real
        b2 = np.abs(M[..., 0, 1]) ** 2
        return 0.5 * (a + d) - np.sqrt(0.25 * (a - d) ** 2 + b2)
    return np.linalg.eigvalsh(M)[..., 0]


def hermitian_max_eig(M: np.ndarray) -> np.ndarray:
    n = M.shape[-1]
    if n == 1:
        return M[..., 0, 0].real.copy()
    if n == 2:
        a = M[..., 0, 0].real
        d = M[..., 1, 1].real
        b2 = np.abs(M[..., 0, 1]) ** 2
        return 0.5 * (a + d) + np.sqrt(0.25 * (a - d) ** 2 + b2)
    return np.linalg.eigvalsh(M)[..., -1]


def hermitian_inv(M: np.ndarray) -> np.ndarray:
    n = M.shape[-1]
    if n == 1:
        return 1.0 / M
    if n == 2:
        det = hermitian_det(M)[..., None, None]
        out = np.empty_like(M)
        out[..., 0, 0] = M[..., 1, 1]
        out[..., 1, 1] = M[..., 0, 0]
        out[..., 0, 1] = -M[..., 0, 1]
        out[..., 1, 0] = -M[..., 1, 0]
        return out / det
    return np.linalg.inv(M)


# ---------------------------------------------------------------------------
# reference forms

@dataclass(frozen=True)
class ReferenceForm:
    """Hermitian (1,1)-form coefficients ``omega_{j kbar}`` at every node.

    ``coeff`` has shape ``grid.shape + (n, n)``.  The form may degenerate on
    subsets but must be semipositive and big.
    """

    grid: GridSpec
    coeff: np.ndarray
    validate: bool = dc_field(default=True, repr=False, compare=False)

    def __post_init__(self):
        n = self.grid.n
        c = np.asarray(self.coeff, dtype=complex)
        c = np.broadcast_to(c, self.grid.shape + (n, n)).copy()
        object.__setattr__(self, "coeff", c)
        if self.validate:
            self._validate()

    def _validate(self):
        c = self.coeff
        scale = max(float(np.abs(c).max()), 1e-300)
        if np.abs(c - np.conj(np.swapaxes(c, -1, -2))).max() > 1e-12 * scale:
            raise ValueError("reference form is not Hermitian")
        lam_max = float(hermitian_max_eig(c).max())
        tol = PSD_RTOL * max(lam_max, 0.0)
        if hermitian_min_eig(c).min() < -tol:
            raise ValueError("reference form is not positive semidefinite")
        if not self.total_mass() > 0:
            raise ValueError("reference form is not big (zero total volume)")

    @classmethod
    def flat(cls, grid: GridSpec, scale: float = 1.0) -> "ReferenceForm":
        return cls(grid, scale * np.eye(grid.n, dtype=complex))

    @classmethod
    def diagonal(cls, grid: GridSpec, entries: Sequence) -> "ReferenceForm":
        """Diagonal form from ``n`` scalars or arrays broadcastable to the grid."""
        if len(entries) != grid.n:
            raise ValueError("need one diagonal entry per complex dimension")
        c = np.zeros(grid.shape + (grid.n, grid.n), dtype=complex)
        for j, e in enumerate(entries):
            c[..., j, j] = np.broadcast_to(e, grid.shape)
        return cls(grid, c)

    @classmethod
    def degenerate(cls, grid: GridSpec, delta: float = 0.0, direction: int = 0) -> "ReferenceForm":
        """``diag(sin^2(pi (x - x_0)) + delta, 1, ..., 1)`` in complex direction ``direction``.

        ``x_0`` is the first node coordinate, so with ``delta = 0`` the form
        has a vanishing eigenvalue on the node hyperplane ``x_direction = x_0``.
        """
        axes = grid.mesh()
        x = axes[2 * direction]
        x0 = grid.coords()[0]
        a = np.sin(np.pi * (x - x0) / grid.period) ** 2 + delta
        entries = [1.0] * grid.n
        entries[direction] = a
        return cls.diagonal(grid, entries)

    def regularized(self, eps: float, Omega: Optional["ReferenceForm"] = None) -> "ReferenceForm":
        """``omega + eps * Omega`` with ``Omega`` the flat form by default."""
        if eps == 0:
            return self
        extra = np.eye(self.grid.n) if Omega is None else Omega.coeff
        return ReferenceForm(self.grid, self.coeff + eps * extra, validate=False)

    def det(self) -> np.ndarray:
        return hermitian_det(self.coeff)

    def total_mass(self) -> float:
        return float(self.det().sum() * self.grid.cell_volume)

    def is_flat(self) -> bool:
        return bool(np.allclose(self.coeff, np.eye(self.grid.n)))


@dataclass(frozen=True)
class HessianField:
    grid: GridSpec
    hess: np.ndarray


# ---------------------------------------------------------------------------
# stencils

def _d2(v, axis, h):
    return (np.roll(v, -1, axis) - 2.0 * v + np.roll(v, 1, axis)) / (h * h)


def _d1(v, axis, h):
    return (np.roll(v, -1, axis) - np.roll(v, 1, axis)) / (2.0 * h)


def _hessian_array(v: np.ndarray, grid: GridSpec) -> np.ndarray:
    n, h = grid.n, grid.h
    H = np.zeros(grid.shape + (n, n), dtype=complex)
    first = [_d1(v, a, h) for a in range(2 * n)] if n > 1 else None
    for j in range(n):
        H[..., j, j] = 0.25 * (_d2(v, 2 * j, h) + _d2(v, 2 * j + 1, h))
    for j in range(n):
        xj, yj = 2 * j, 2 * j + 1
        for k in range(j + 1, n):
            xk, yk = 2 * k, 2 * k + 1
            re = _d1(first[xk], xj, h) + _d1(first[yk], yj, h)
            im = _d1(first[yk], xj, h) - _d1(first[xk], yj, h)
            H[..., j, k] = 0.25 * (re + 1j * im)
            H[..., k, j] = 0.25 * (re - 1j * im)
    return H


def complex_hessian(phi: PeriodicField) -> HessianField:
    """Centered-difference discretization of ``d^2 phi / dz_j dzbar_k``.

    Diagonal entries use the compact three-point Laplacian in the ``(x_j, y_j)``
    plane divided by four; off-diagonal entries compose centered first
    differences.  ``H[k, j]`` is filled as the conjugate of ``H[j, k]`` so the
    output is Hermitian exactly.
    """
    return HessianField(phi.grid, _hessian_array(phi.values, phi.grid))


def contraction_coefficients(B: np.ndarray) -> list:
    """Real stencil weights of ``v -> tr(B H(v))``.

    Returns ``(kind, axes, weight)`` triples: ``kind`` is ``"d2"`` for a pure
    second difference along ``axes[0]`` or ``"d11"`` for the mixed centered
    difference along ``axes``.
    """
    n = B.shape[-1]
    terms = []
    for j in range(n):
        w = np.ascontiguousarray(0.25 * B[..., j, j].real)
        terms.append(("d2", (2 * j,), w))
        terms.append(("d2", (2 * j + 1,), w))
    for j in range(n):
        xj, yj = 2 * j, 2 * j + 1
        for k in range(j + 1, n):
            xk, yk = 2 * k, 2 * k + 1
            br = np.ascontiguousarray(0.5 * B[..., k, j].real)
            bi = np.ascontiguousarray(0.5 * B[..., k, j].imag)
            terms.append(("d11", (xj, xk), br))
            terms.append(("d11", (yj, yk), br))
            terms.append(("d11", (xj, yk), -bi))
            terms.append(("d11", (yj, xk), bi))
    return terms


def apply_contraction(terms: list, v: np.ndarray, grid: GridSpec) -> np.ndarray:
    h = grid.h
    out = np.zeros(grid.shape)
    first = {}
    for kind, axes, w in terms:
        if kind == "d2":
            out += w * _d2(v, axes[0], h)
        else:
            a, b = axes
            if b not in first:
                first[b] = _d1(v, b, h)
            out += w * _d1(first[b], a, h)
    return out


def contract_hessian(B: np.ndarray, v: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Pointwise ``tr(B H(v))`` for a Hermitian coefficient field ``B``.

    Equivalent to ``einsum('...kj,...jk', B, H(v))`` but works on real
    differences directly; this is the Newton matvec.
    """
    return apply_contraction(contraction_coefficients(B), v, grid)


def form_plus_hessian(phi: PeriodicField, omega: ReferenceForm) -> np.ndarray:
    _check_same_grid(phi.grid, omega.grid)
    return omega.coeff + _hessian_array(phi.values, phi.grid)


def ma_measure(phi: PeriodicField, omega: ReferenceForm, require_positive: bool = False,
               tol: float = 1e-12, det_ref: float = 1.0):
    """Density of ``(omega + dd^c phi)^n`` against the Lebesgue measure.

    Values are ``det(omega + H(phi)) / det_ref``; ``det_ref = 1`` is the
    determinant of the flat form, so ``ma_measure(0, flat)`` is identically 1.
    Negative determinants are kept unless ``require_positive`` is set, in
    which case any value below ``-tol`` raises :class:`FeasibilityError`.
    """
    from .density import Density

    d = hermitian_det(form_plus_hessian(phi, omega)) / det_ref
    if require_positive:
        worst = float(d.min())
        if worst < -tol:
            raise FeasibilityError(
                f"Monge-Ampere density negative at {int((d < -tol).sum())} nodes (min {worst:.3e})")
    return Density(phi.grid, d, check=False)


def min_eigenvalue(phi: PeriodicField, omega: ReferenceForm) -> np.ndarray:
    return hermitian_min_eig(form_plus_hessian(phi, omega))


# ---------------------------------------------------------------------------
# quadrature

def integrate(values: np.ndarray, grid: GridSpec) -> float:
    """Midpoint rule on the periodic grid."""
    return float(np.sum(values) * grid.cell_volume)


def norm(phi, kind: str = "sup", p: Optional[float] = None, weight=None) -> float:
    """Sup, L1, L2 or Lp norm; ``weight`` (a Density or array) multiplies the measure."""
    grid = phi.grid
    v = np.abs(phi.values)
    kind = kind.lower()
    if kind == "sup":
        if weight is not None:
            w = np.asarray(getattr(weight, "values", weight))
            v = v[np.broadcast_to(w, v.shape) > 0]
        return float(v.max()) if v.size else 0.0
    if kind == "l1":
        p = 1.0
    elif kind == "l2":
        p = 2.0
    elif kind == "lp":
        if p is None or p < 1:
            raise ValueError("Lp norm needs p >= 1")
    else:
        raise ValueError(f"unknown norm kind {kind!r}")
    integrand = v ** p
    if weight is not None:
        integrand = integrand * np.asarray(getattr(weight, "values", weight))
    return integrate(integrand, grid) ** (1.0 / p)


def translate(phi: PeriodicField, shift: Sequence[int]) -> PeriodicField:
    """``x -> phi(x + shift * h)`` as a circular shift of the node values."""
    shift = tuple(-int(s) for s in shift)
    if len(shift) != phi.grid.ndim:
        raise ValueError(f"need {phi.grid.ndim} integer offsets")
    return PeriodicField(phi.grid, np.roll(phi.values, shift, axis=tuple(range(phi.grid.ndim))))
