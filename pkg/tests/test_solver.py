import numpy as np
import pytest
from hypothesis import given, strategies as st

from stoch_bvp.greens import KernelTable
from stoch_bvp.model import BoundaryKind, Grid
from stoch_bvp.solver import (
    B0Function,
    BracketError,
    MaxIterExceeded,
    NoContraction,
    contraction_bound,
    forcing_path,
    invert_B0,
    picard_solve,
    verify_sde,
)
from stoch_bvp.stochastic import sample_path

from conftest import const1, make_spec, ones1, sine_drift_spec, zeros1, zeros2

# Root of x + 0.5*sin(x) = 1, pinned beforehand by an independent
# high-resolution bisection (200 halvings at 40 decimal digits).
SINE_ROOT_A1 = 0.6840366566778294


# -- forcing path ---------------------------------------------------------------


def test_forcing_path_zero_inputs():
    spec = make_spec(boundary=BoundaryKind.FIRST_KIND)
    phi = forcing_path(spec, 0.5, sample_path(64, 1))
    assert np.all(phi == 0.0)


def test_forcing_path_second_kind_constant_limit():
    spec = make_spec(boundary=BoundaryKind.SECOND_KIND, p=2.0, f=ones1)
    phi = forcing_path(spec, 1e-3, sample_path(128, 1))
    assert np.max(np.abs(phi + 0.5)) < 1e-3


def test_forcing_path_first_kind_scaled_limit():
    spec = make_spec(boundary=BoundaryKind.FIRST_KIND, p=1.0, f=ones1)
    path = sample_path(128, 1)
    phi = forcing_path(spec, 1e-3, path)
    t = path.grid.points
    assert np.max(np.abs(phi / 1e-6 + t * (1.0 - t) / 2.0)) < 1e-3


def test_forcing_path_rejects_mismatched_table():
    spec = make_spec(boundary=BoundaryKind.FIRST_KIND)
    table = KernelTable.build(BoundaryKind.PERIODIC, 0.5, 1.0, Grid(64))
    with pytest.raises(ValueError):
        forcing_path(spec, 0.5, sample_path(64, 1), table=table)


# -- contraction bound ------------------------------------------------------------


def test_contraction_bound_zero_drift():
    spec = make_spec(boundary=BoundaryKind.FIRST_KIND)
    assert contraction_bound(spec, 0.5) == 0.0


def test_contraction_bound_second_kind_limit():
    spec = make_spec(boundary=BoundaryKind.SECOND_KIND, p=2.0, beta=1.0, beta_star=1.0)
    assert contraction_bound(spec, 1e-3) == pytest.approx(0.5, abs=1e-3)


def test_contraction_bound_first_kind_scales_with_eps_sq():
    spec = make_spec(boundary=BoundaryKind.FIRST_KIND, p=1.0, beta=1.0, beta_star=1.0)
    bound = contraction_bound(spec, 1e-3)
    assert bound == pytest.approx(0.25e-6, rel=1e-6)


# -- fixed point iteration ----------------------------------------------------------


def test_picard_zero_drift_converges_first_iteration():
    spec = make_spec(boundary=BoundaryKind.SECOND_KIND, f=ones1, delta=ones1)
    sol = picard_solve(spec, 1e-2, sample_path(128, 3))
    assert sol.iterations == 1
    assert sol.final_residual == 0.0
    assert sol.theta_est == 0.0


@pytest.mark.parametrize("eps", [1e-1, 1e-2, 1e-3])
def test_picard_constant_solution_exact(eps):
    # Derivative-pinned, B = 0, delta = 0, f = c: x = -c/p solves exactly.
    c, p = 1.0, 2.0
    spec = make_spec(boundary=BoundaryKind.SECOND_KIND, p=p, f=const1(c))
    sol = picard_solve(spec, eps, sample_path(1024, 5))
    assert np.max(np.abs(sol.x + c / p)) < 1e-8


def test_picard_cosh_oracle():
    # Value-pinned linear problem with unit forcing: the closed-form
    # solution is cosh(eps*(t-1/2))/cosh(eps/2) - 1 for p = 1.
    spec = make_spec(boundary=BoundaryKind.FIRST_KIND, p=1.0, f=ones1)
    path = sample_path(2**10, 5)
    sol = picard_solve(spec, 0.5, path)
    t = path.grid.points
    oracle = np.cosh(0.5 * (t - 0.5)) / np.cosh(0.25) - 1.0
    assert np.max(np.abs(sol.x - oracle)) < 1e-6


def test_picard_no_contraction():
    spec = sine_drift_spec(scale=0.8, f=ones1)
    with pytest.raises(NoContraction):
        picard_solve(spec, 1.0, sample_path(128, 1))


def test_picard_max_iter():
    spec = sine_drift_spec(scale=0.5, f=ones1)
    with pytest.raises(MaxIterExceeded):
        picard_solve(spec, 1e-2, sample_path(128, 1), max_iter=2)


def test_picard_unique_fixed_point_from_two_starts():
    tol = 1e-10
    spec = sine_drift_spec(scale=0.5, f=ones1, delta=const1(0.5))
    path = sample_path(256, 9)
    theta = contraction_bound(spec, 1e-2, grid=path.grid)
    a = picard_solve(spec, 1e-2, path, tol=tol)
    phi = forcing_path(spec, 1e-2, path)
    b = picard_solve(spec, 1e-2, path, tol=tol, x0=phi + 1.0)
    assert np.max(np.abs(a.x - b.x)) <= 2.0 * tol / (1.0 - theta)


def test_picard_update_ratios_below_bound():
    spec = sine_drift_spec(scale=0.5, f=ones1, delta=const1(0.5))
    path = sample_path(256, 9)
    for eps in (1e-1, 1e-2):
        sol = picard_solve(spec, eps, path)
        bound = contraction_bound(spec, eps, grid=path.grid)
        assert sol.update_ratios, "expected a multi-step iteration"
        assert max(sol.update_ratios) <= bound + 0.05


def test_picard_a_posteriori_stopping_invariant():
    tol = 1e-10
    spec = sine_drift_spec(scale=0.5, f=ones1, delta=const1(0.5))
    sol = picard_solve(spec, 1e-2, sample_path(256, 9), tol=tol)
    assert sol.final_residual <= tol * (1.0 - sol.theta_est) / max(sol.theta_est, 1e-3)


@pytest.mark.parametrize("kind", list(BoundaryKind))
def test_boundary_residuals_deterministic_inputs(kind):
    spec = sine_drift_spec(boundary=kind, scale=0.3, f=ones1)
    path = sample_path(512, 2)
    sol = picard_solve(spec, 1e-2, path)
    bc_tol = max(10.0 * path.grid.h**2, 1e-8)
    assert sol.bc_residual <= bc_tol


def test_boundary_residuals_with_noise():
    for kind in BoundaryKind:
        spec = sine_drift_spec(boundary=kind, scale=0.3, f=ones1, delta=ones1)
        path = sample_path(512, 8)
        sol = picard_solve(spec, 1e-2, path)
        assert sol.bc_residual <= max(10.0 * path.grid.h**2, 1e-8)


def test_picard_rejects_bad_tol():
    spec = make_spec(boundary=BoundaryKind.SECOND_KIND)
    with pytest.raises(ValueError):
        picard_solve(spec, 1e-2, sample_path(64, 1), tol=0.0)


# -- averaged drift map ---------------------------------------------------------------


def test_b0_identity_for_zero_drift():
    spec = make_spec(boundary=BoundaryKind.SECOND_KIND)
    for a in np.linspace(-3, 3, 7):
        assert invert_B0(spec, a) == pytest.approx(a, abs=1e-12)


def test_b0_affine_inverse():
    c, p = 0.7, 2.0
    spec = make_spec(
        boundary=BoundaryKind.SECOND_KIND,
        p=p,
        B=lambda t, x: np.full(np.broadcast(t, x).shape, c),
        B_x=zeros2,
        beta_star=c,
        beta=0.0,
    )
    for a in (-1.0, 0.0, 2.5):
        assert invert_B0(spec, a) == pytest.approx(a - c / p, abs=1e-12)


def test_b0_sine_root_regression():
    spec = sine_drift_spec(scale=0.5, p=1.0)
    assert invert_B0(spec, 0.0) == pytest.approx(0.0, abs=1e-12)
    root = invert_B0(spec, 1.0)
    assert root == pytest.approx(SINE_ROOT_A1, abs=1e-12)
    assert root + 0.5 * np.sin(root) == pytest.approx(1.0, abs=1e-12)


def test_b0_inverse_composition_identity():
    spec = sine_drift_spec(scale=0.5, p=1.0)
    b0 = B0Function(spec)
    lattice = np.linspace(-10.0, 10.0, 101)
    for x in lattice:
        assert b0.inverse(b0(float(x)), tol=1e-12) == pytest.approx(x, abs=1e-10)


@given(st.floats(min_value=-10, max_value=10), st.floats(min_value=1e-3, max_value=5.0))
def test_b0_monotone_lower_slope(x1, gap):
    spec = sine_drift_spec(scale=0.5, p=1.0)
    b0 = B0Function(spec)
    x2 = x1 + gap
    assert b0(x2) - b0(x1) >= (1.0 - spec.beta / spec.p) * gap - 1e-12


def test_b0_bracket_failure_on_dishonest_bound():
    # Actual drift is the constant 1 but beta_star claims 0.1: the bracket
    # cannot straddle the root.
    spec = make_spec(
        boundary=BoundaryKind.SECOND_KIND,
        B=lambda t, x: np.ones(np.broadcast(t, x).shape),
        B_x=zeros2,
        beta_star=0.1,
        beta=0.0,
    )
    with pytest.raises(BracketError):
        invert_B0(spec, 0.0)


def test_b0_bracket_failure_on_infinite_bound():
    spec = make_spec(boundary=BoundaryKind.SECOND_KIND, beta_star=np.inf)
    with pytest.raises(BracketError):
        invert_B0(spec, 0.0)


# -- equation residual -------------------------------------------------------------


def test_verify_sde_zero_spec():
    spec = make_spec(boundary=BoundaryKind.SECOND_KIND)
    path = sample_path(256, 1)
    sol = picard_solve(spec, 1e-2, path)
    assert verify_sde(spec, 1e-2, path, sol).max_residual == 0.0


def test_verify_sde_constant_solution():
    spec = make_spec(boundary=BoundaryKind.SECOND_KIND, p=2.0, f=ones1)
    path = sample_path(512, 3)
    sol = picard_solve(spec, 1e-1, path)
    assert verify_sde(spec, 1e-1, path, sol).max_residual < 1e-8


def test_verify_sde_refinement_order():
    # Coupled refinement: the derivative path is assembled from analytic
    # kernel rows, so the noise bookkeeping cancels exactly and only
    # trapezoid error remains; the residual contracts at second order
    # (ratio ~4 per doubling), comfortably inside the at-least-first-order
    # contract.
    spec = make_spec(boundary=BoundaryKind.FIRST_KIND, f=ones1, delta=ones1)
    fine = sample_path(1024, 13)
    coarse = fine.coarsen()
    r_fine = verify_sde(spec, 0.5, fine, picard_solve(spec, 0.5, fine)).max_residual
    r_coarse = verify_sde(spec, 0.5, coarse, picard_solve(spec, 0.5, coarse)).max_residual
    assert 1.4 <= r_coarse / r_fine <= 4.6
    assert r_fine < 1e-8


def test_verify_sde_grid_mismatch():
    spec = make_spec(boundary=BoundaryKind.SECOND_KIND)
    path = sample_path(256, 1)
    sol = picard_solve(spec, 1e-2, path)
    with pytest.raises(ValueError):
        verify_sde(spec, 1e-2, sample_path(128, 1), sol)
