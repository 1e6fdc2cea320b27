import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from torusma.density import AlgebraicDensitySpec, Density, algebraic_density
from torusma.errors import MassMismatchError, NewtonDivergenceError
from torusma.experiments import manufactured_density, random_smooth_field, standard_manufactured
from torusma.field import GridSpec, PeriodicField, ReferenceForm, complex_hessian, ma_measure
from torusma.solver import (SolverConfig, c_psi, normalize_sup, solution_residual, solve, solve_exponential,
                            solve_fixed_rhs)

G2 = GridSpec(2, 8)
POLE = AlgebraicDensitySpec(poles=[((0.5,) * 4, 1.0)])


@pytest.fixture(scope="module")
def pole_case():
    om = ReferenceForm.flat(G2)
    return om, algebraic_density(POLE, G2)


# -- configuration -----------------------------------------------------------

@pytest.mark.parametrize("kw", [dict(eps_schedule=(1e-2, 1e-1)), dict(newton_tol=0.0), dict(t=-1.0),
                                dict(outer_mode="schauder"), dict(normalization="mean"),
                                dict(eps_schedule=(-1.0,)), dict(preconditioner="ilu")])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        SolverConfig(**kw)


# -- normalization -----------------------------------------------------------

def test_normalize_sup_examples():
    phi = PeriodicField(G2, np.full(G2.shape, 5.0))
    assert np.all(normalize_sup(phi, -1.0).values == -1.0)


@given(st.integers(0, 1000), st.floats(-10, 10))
def test_normalize_sup_properties(seed, level):
    phi = random_smooth_field(GridSpec(1, 8), np.random.default_rng(seed))
    out = normalize_sup(phi, level)
    assert out.max() == level
    assert np.array_equal(normalize_sup(out, level).values, out.values)
    # a constant shift keeps the maximizer up to rounding ties
    assert phi.values.flat[np.argmax(out.values)] >= phi.max() - 1e-12 * (1 + abs(level))


# -- fixed right-hand side ---------------------------------------------------

@pytest.mark.parametrize("grid", [GridSpec(1, 8), GridSpec(2, 16)])
def test_constant_density(grid):
    rep = solve_fixed_rhs(ReferenceForm.flat(grid), Density.constant(grid))
    assert np.all(rep.phi.values == -1.0) and rep.converged


def test_mass_mismatch(pole_case):
    om, f = pole_case
    with pytest.raises(MassMismatchError):
        solve_fixed_rhs(om, Density(G2, 1.1 * f.values))


def test_manufactured_t0_mean_gauge():
    om = ReferenceForm.flat(G2)
    star = standard_manufactured(2).field(G2)
    f = manufactured_density(star, om)
    f = Density(G2, f.values / f.mass)
    rep = solve_fixed_rhs(om, f, SolverConfig())
    expect = star.values - star.max() - 1.0
    assert np.abs(rep.phi.values - expect).max() <= 1e-10
    assert rep.phi.max() == -1.0


def test_newton_divergence_reported(pole_case):
    om, f = pole_case
    with pytest.raises(NewtonDivergenceError) as exc:
        solve_fixed_rhs(om, f, SolverConfig(max_newton=1))
    assert exc.value.last is not None


def test_infeasible_init_is_shrunk(pole_case):
    om, f = pole_case
    x = G2.mesh()[0]
    bad = PeriodicField(G2, np.broadcast_to(0.5 * np.cos(2 * np.pi * x), G2.shape).copy())
    ref = solve_fixed_rhs(om, f).phi.values
    assert np.abs(solve_fixed_rhs(om, f, init=bad).phi.values - ref).max() <= 1e-9


def test_independent_residual(pole_case):
    om, f = pole_case
    cfg = SolverConfig()
    for rep in (solve(om, f, cfg), solve(om, f, SolverConfig(t=1.0))):
        assert solution_residual(rep, om, f) <= 2 * cfg.newton_tol


def test_jacobi_preconditioner_agrees(pole_case):
    om, f = pole_case
    a = solve(om, f, SolverConfig(t=1.0)).phi.values
    b = solve(om, f, SolverConfig(t=1.0, preconditioner="jacobi")).phi.values
    assert np.abs(a - b).max() <= 1e-9


def test_regularization_path_is_cauchy():
    om = ReferenceForm.degenerate(G2)
    f = algebraic_density(POLE, G2, target_mass=om.total_mass())
    rep = solve_fixed_rhs(om, f, SolverConfig(eps_schedule=(1e-1, 1e-2, 1e-3, 1e-4)))
    gaps = np.abs(np.diff(rep.stage_sup_norms))
    assert np.all(np.diff(gaps) < 0)
    assert rep.regularized and rep.converged and rep.min_eig > 0


def test_terminal_zero_stage_on_flat_form(pole_case):
    om, f = pole_case
    rep = solve_fixed_rhs(om, f, SolverConfig(eps_schedule=(1e-1, 0.0)))
    assert rep.eps_used == [1e-1, 0.0] and not rep.regularized


def test_n1_linearization_is_exact():
    # for n = 1 the Monge-Ampere operator is affine, so one linear correction is exact
    g = GridSpec(1, 16)
    om = ReferenceForm.flat(g)
    rng = np.random.default_rng(4)
    phi = random_smooth_field(g, rng, amplitude=0.02)
    w = random_smooth_field(g, rng, amplitude=0.02)
    lhs = ma_measure(phi + w, om).values - ma_measure(phi, om).values
    np.testing.assert_allclose(lhs, complex_hessian(w).hess[..., 0, 0].real, atol=1e-12)


def _separable_star(grid):
    x = grid.mesh()
    vals = 0.02 * np.cos(2 * np.pi * x[0]) + 0.01 * np.sin(2 * np.pi * x[1])
    if grid.n == 2:
        vals = vals + 0.015 * np.cos(2 * np.pi * x[2]) + 0.02 * np.sin(2 * np.pi * x[3])
    return PeriodicField(grid, np.broadcast_to(vals, grid.shape).copy())


@pytest.mark.parametrize("grid", [GridSpec(1, 16), GridSpec(2, 8)])
def test_mass_conserved_for_separable_data(grid):
    om = ReferenceForm.flat(grid)
    f = ma_measure(_separable_star(grid), om)
    assert abs(f.mass - 1.0) <= 1e-12
    rep = solve_fixed_rhs(om, Density(grid, f.values))
    assert abs(ma_measure(rep.phi, om).mass - 1.0) <= 1e-8


@pytest.mark.xfail(strict=True, reason="stencil mass defect is O(h^2) for coupled potentials when n >= 2; "
                                       "see decisions ledger")
@pytest.mark.parametrize("source", ["pole", "coupled_trig"])
def test_mass_conserved_for_coupled_data(pole_case, source):
    om, f = pole_case
    if source == "coupled_trig":
        g = manufactured_density(standard_manufactured(2).field(G2), om)
        f = Density(G2, g.values / g.mass)
    rep = solve_fixed_rhs(om, f)
    assert abs(ma_measure(rep.phi, om).mass - 1.0) <= 1e-8


def test_compat_shift_is_small_and_shrinks():
    shifts = []
    for m in (8, 16):
        g = GridSpec(2, m)
        shifts.append(solve_fixed_rhs(ReferenceForm.flat(g), algebraic_density(POLE, g)).compat_shift)
    assert 0 < shifts[1] < shifts[0] < 1e-2


# -- exponential right-hand side ---------------------------------------------

def test_exponential_constant():
    rep = solve_exponential(ReferenceForm.flat(G2), Density.constant(G2), SolverConfig(t=1.0))
    assert np.all(rep.phi.values == 0.0)


@pytest.mark.parametrize("t", [0.5, 1.0, 2.0])
def test_exponential_manufactured(t):
    om = ReferenceForm.flat(G2)
    star = standard_manufactured(2).field(G2)
    f = manufactured_density(star, om, t)
    rep = solve_exponential(om, f, SolverConfig(t=t))
    assert np.abs(rep.phi.values - star.values).max() <= 1e-8


def test_exponential_normalization_free(pole_case):
    om, f = pole_case
    cfg = SolverConfig(t=1.0)
    a = solve(om, f, cfg).phi.values
    b = solve(om, f, cfg, init=PeriodicField(G2, np.full(G2.shape, 3.7))).phi.values
    assert np.abs(a - b).max() <= cfg.newton_tol


@settings(max_examples=8)
@given(st.integers(0, 10 ** 6))
def test_exponential_monotone_dependence(seed):
    # larger density forces a smaller potential: f1 <= f2 gives phi2 <= phi1
    rng = np.random.default_rng(seed)
    om = ReferenceForm.flat(G2)
    base = np.exp(0.3 * rng.normal(size=G2.shape))
    f1 = Density(G2, base)
    f2 = Density(G2, base * np.exp(np.abs(0.2 * rng.normal(size=G2.shape))))
    cfg = SolverConfig(t=1.0)
    p1 = solve(om, f1, cfg).phi.values
    p2 = solve(om, f2, cfg).phi.values
    assert np.all(p2 <= p1 + 2 * cfg.newton_tol)


def test_t_iteration_matches_newton():
    om = ReferenceForm.flat(G2)
    spec = AlgebraicDensitySpec(zeros=[((0.25,) * 4, 2.0)], poles=[((0.75, 0.75, 0.5, 0.5), 1.0)])
    f = algebraic_density(spec, G2)
    a = solve(om, f, SolverConfig(t=1.0))
    b = solve(om, f, SolverConfig(t=1.0, outer_mode="T_iteration"))
    assert np.abs(a.phi.values - b.phi.values).max() <= 1e-6
    assert len(b.c_psi_history) >= 2


def test_c_psi_of_zero():
    f = Density.constant(G2)
    assert c_psi(np.zeros(G2.shape), f, 1.0) == pytest.approx(0.0, abs=1e-15)
    assert c_psi(np.full(G2.shape, 2.0), f, 0.5) == pytest.approx(1.0, abs=1e-14)


def test_report_serializes(pole_case):
    om, f = pole_case
    d = solve(om, f, SolverConfig()).to_dict()
    assert d["phi_max"] == -1.0 and "wall_ms" not in d
