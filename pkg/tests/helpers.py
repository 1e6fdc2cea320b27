"""Shared generators for the test modules."""
import numpy as np

from torusma.field import PeriodicField, ReferenceForm, min_eigenvalue


def admissible_field(grid, rng, strength=0.8):
    """Random trig field scaled so that ``I + H(phi)`` stays positive definite."""
    axes = grid.mesh()
    v = np.zeros(grid.shape)
    for _ in range(6):
        k = rng.integers(-2, 3, size=grid.ndim)
        v = v + rng.normal() * np.cos(sum(2 * np.pi * k[a] * axes[a] for a in range(grid.ndim))
                                      + rng.uniform(0, 2 * np.pi))
    phi = PeriodicField(grid, v)
    lam = min_eigenvalue(phi, ReferenceForm(grid, np.zeros(grid.shape + (grid.n, grid.n)), validate=False))
    scale = strength / max(1e-9, -lam.min()) * rng.uniform(0.1, 1.0)
    return phi * scale


def brute_force_ratio(profile, alpha):
    """Independent double loop over all sample pairs with 0 <= t <= 1."""
    s, f = profile.s, profile.f
    worst = 0.0
    for i in range(s.size):
        for j in range(i, s.size):
            t = s[j] - s[i]
            if t > 1.0:
                break
            lhs = t * f[j]
            if lhs == 0:
                continue
            rhs = f[i] ** (1 + alpha)
            worst = max(worst, np.inf if rhs == 0 else lhs / rhs)
    return worst


ACCEPTANCE = []


def record(number, title, ok, detail=""):
    """Log one acceptance verdict; the session summary prints them in order."""
    line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}" + (f"  ({detail})" if detail else "")
    ACCEPTANCE.append((number, line))
    print(line)
    return ok
