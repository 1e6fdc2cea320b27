"""Manufactured solutions: exact recovery on the grid, second order against the continuum.

f is built from a known trigonometric potential, once with the discrete
operator (the solver must return the potential to round-off) and once from
the exact complex Hessian (the error then measures the discretization).
"""
from torusma.experiments import mms_study, observed_orders

for t in (0.0, 1.0):
    cases = mms_study(1, [16, 32, 64], t=t)
    orders = observed_orders([1 / c.grid_m for c in cases], [c.continuum_error for c in cases])
    print(f"t = {t:g}")
    for c in cases:
        print(f"  m = {c.grid_m:3d}  oracle error {c.oracle_error:.1e}  continuum error {c.continuum_error:.2e}")
    print("  observed orders:", ", ".join(f"{o:.3f}" for o in orders))
