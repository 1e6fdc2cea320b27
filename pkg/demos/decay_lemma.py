"""The halving recursion on decay profiles.

For each profile of the battery we scan the smallest decay constant B on
the sample grid, run the recursion and compare its end point with the
bound s0 + 1/(1 - 2^-alpha).
"""
from torusma.capacity import decay_iterate, h_alpha_b_ratio
from torusma.experiments import decay_battery

for name, (prof, alpha) in decay_battery().items():
    B = h_alpha_b_ratio(prof, alpha)
    B = 1.01 * B if B > 0 else 1.0
    rep = decay_iterate(prof, alpha, B)
    steps = len(rep.s_sequence)
    small = "" if rep.small_start_bound is None else f", small-start bound {rep.small_start_bound:.3f}"
    print(f"{name:18s} alpha {alpha:4g}  B {B:8.4f}  steps {steps:2d}  S_inf {rep.S_inf:.3f} <= {rep.bound:.3f}{small}")
