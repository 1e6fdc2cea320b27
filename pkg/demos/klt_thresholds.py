"""Integrability of |z|^(2a) by grid refinement, next to the exponent test.

The quadrature mass converges for a > -1 and blows up like log or a power
of the grid size otherwise.
"""
from torusma.density import KltSpec, integrability_quadrature, klt_check

for a in (-0.25, -0.5, -0.75, -0.9, -1.0, -1.25):
    r = integrability_quadrature(a, n=1, refinements=6)
    masses = " ".join(f"{v:.3f}" for v in r.mass_sequence)
    print(f"a = {a:5.2f}: {'integrable' if r.integrable_verdict else 'divergent':10s} masses {masses}")

spec = KltSpec([(-0.5, 1.0), (0.0, 2.0)])
for eps in (0.0, 0.3, 0.6):
    res = klt_check(spec, eps)
    print(f"pairs {spec.exponents}, eps = {eps}: klt {res.klt} (margin {res.margin:+.2f})")
