"""Monge-Ampere capacity of balls and slabs, and the H(alpha, A) constant of a measure.

On the unit torus most sets have capacity close to the total mass; only
small sets are genuinely small in capacity.  The pole density is compared
against capacity on the standard test family.
"""
from torusma import AlgebraicDensitySpec, Density, GridSpec, ReferenceForm, algebraic_density
from torusma.capacity import cap_omega_detail, h_condition, standard_test_sets

grid = GridSpec(1, 16)
omega = ReferenceForm.flat(grid)
sets = standard_test_sets(grid, center=(0.5, 0.5))
for name, K in sets.items():
    est = cap_omega_detail(K, omega)
    print(f"{name:10s} nodes {int(K.sum()):4d}  Cap >= {est.value:.4f}  (best competitor: {est.maximizer})")

f = algebraic_density(AlgebraicDensitySpec(poles=[((0.5, 0.5), 1.0)]), grid)
mu = Density(grid, f.values / f.mass)
rep = h_condition(mu, omega, 1.0, sets)
print(f"A_hat = {rep.A_hat:.3f}, attained on {rep.worst_set}")
