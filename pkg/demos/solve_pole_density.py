"""Solve the fixed right-hand-side equation for a density with one pole.

The density is 1/|z - c| on the flat torus (n = 2, one pole with 2l = 1),
rescaled to unit mass.  The solution is normalized to sup = -1; we print
the Newton history and a few slices through the pole.
"""
import numpy as np

from torusma import AlgebraicDensitySpec, GridSpec, ReferenceForm, SolverConfig, algebraic_density, solve
from torusma.solver import solution_residual

grid = GridSpec(2, 16)
omega = ReferenceForm.flat(grid)
f = algebraic_density(AlgebraicDensitySpec(poles=[((0.5, 0.5, 0.5, 0.5), 1.0)]), grid)

rep = solve(omega, f, SolverConfig())
print(f"converged: {rep.converged} in {rep.iterations} Newton steps")
print("residual history:", " ".join(f"{r:.1e}" for r in rep.residual_history[-1]))
print(f"independent residual: {solution_residual(rep, omega, f):.2e}")
print(f"sup = {rep.phi.max():.3f}, inf = {rep.phi.min():.4f}, min eigenvalue = {rep.min_eig:.3f}")

# the potential dips where the density piles up
line = rep.phi.values[:, 8, 8, 8]
print("phi along x1 through the pole:", np.array2string(line, precision=4))

# t = 1: the Kahler-Einstein type equation has no normalization freedom
rep1 = solve(omega, f, SolverConfig(t=1.0))
print(f"t = 1: sup = {rep1.phi.max():.4f}, inf = {rep1.phi.min():.4f}")
