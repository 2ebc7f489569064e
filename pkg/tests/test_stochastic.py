import numpy as np
import pytest

from stoch_bvp.greens import KernelTable, upsilon
from stoch_bvp.model import BoundaryKind, Grid
from stoch_bvp.stochastic import (
    BrownianPath,
    brownian_bridge_check,
    check_ito_lemma,
    eta,
    ito_integral,
    kappa,
    sample_path,
)

from conftest import const1, make_spec, ones1, zeros1


# -- path sampling -------------------------------------------------------------


def test_sample_path_reproducible():
    a = sample_path(4, 42)
    b = sample_path(4, 42)
    assert np.array_equal(a.increments, b.increments)
    assert not np.array_equal(a.increments, sample_path(4, 43).increments)
    assert not np.array_equal(a.increments, sample_path(4, 42, stream=1).increments)


def test_sample_path_cumulative_values():
    path = sample_path(16, 5)
    assert path.values[0] == 0.0
    assert np.allclose(np.diff(path.values), path.increments)


def test_sample_path_preconditions():
    with pytest.raises(ValueError):
        sample_path(1, 0)
    with pytest.raises(ValueError):
        sample_path(8, -1)


def test_sample_path_terminal_moments():
    # W(1) over many paths: mean within 3/sqrt(M), variance in a chi^2 band.
    M, n = 1000, 10_000
    w1 = np.array([sample_path(n, 2024, stream=m).values[-1] for m in range(M)])
    assert abs(np.mean(w1)) <= 3.0 / np.sqrt(M)
    assert 0.87 <= np.var(w1, ddof=1) <= 1.13


def test_quadratic_variation():
    n = 10_000
    path = sample_path(n, 9)
    qv = float(np.sum(path.increments**2))
    assert abs(qv - 1.0) <= 3.0 * np.sqrt(2.0 / n)


def test_coarsen_preserves_path():
    fine = sample_path(64, 3)
    coarse = fine.coarsen()
    assert coarse.grid.n == 32
    assert np.allclose(coarse.values, fine.values[::2])
    with pytest.raises(ValueError):
        BrownianPath(Grid(3), np.zeros(3), seed=0).coarsen()


# -- Ito sums --------------------------------------------------------------------


def test_ito_integral_zero_kernel():
    path = sample_path(32, 1)
    assert ito_integral(np.zeros(33), ones1, path) == 0.0


def test_ito_integral_telescopes_to_terminal_value():
    path = sample_path(64, 7)
    total = ito_integral(np.ones(65), ones1, path)
    assert total == pytest.approx(path.values[-1], abs=1e-12)


def test_ito_integral_length_mismatch():
    path = sample_path(32, 1)
    with pytest.raises(ValueError):
        ito_integral(np.ones(32), ones1, path)
    with pytest.raises(ValueError):
        ito_integral(np.ones(33), np.ones(5), path)


def test_ito_isometry_monte_carlo():
    # Var(int s dW) -> int s^2 ds = 1/3, at three standard errors of the
    # variance estimator over 10^3 seeds.
    M, n = 1000, 256
    grid = Grid(n)
    k = grid.points
    vals = np.array([ito_integral(k, ones1, sample_path(n, 512, stream=m)) for m in range(M)])
    var = float(np.var(vals, ddof=1))
    sigma = var * np.sqrt(2.0 / (M - 1))
    assert abs(var - 1.0 / 3.0) <= 3.0 * sigma


# -- limit objects ----------------------------------------------------------------


def test_kappa_closed_form_constant_forcing():
    # delta = 0, B = 0, f = 1: kappa(t) = -t(1-t)/2 exactly (the limit
    # kernel is piecewise linear in s, so trapezoid quadrature is exact).
    spec = make_spec(boundary=BoundaryKind.FIRST_KIND, f=ones1)
    kp = kappa(spec, sample_path(128, 3))
    t = kp.grid.points
    assert np.max(np.abs(kp.values + t * (1.0 - t) / 2.0)) < 1e-12
    assert kp.values[64] == pytest.approx(-0.125, abs=1e-12)


def test_kappa_zero_inputs():
    spec = make_spec(boundary=BoundaryKind.FIRST_KIND)
    kp = kappa(spec, sample_path(64, 11))
    assert np.all(kp.values == 0.0)


def test_kappa_vanishes_at_ends_with_noise():
    spec = make_spec(boundary=BoundaryKind.FIRST_KIND, f=ones1, delta=ones1)
    for m in range(5):
        kp = kappa(spec, sample_path(128, 17, stream=m))
        assert kp.values[0] == 0.0 and kp.values[-1] == 0.0


def test_kappa_variance_matches_isometry():
    # Var kappa(1/2) -> int ups(1/2, s)^2 ds, evaluated by brute-force
    # quadrature as the independent oracle (closed form: 1/48).
    M, n = 1000, 256
    spec = make_spec(boundary=BoundaryKind.FIRST_KIND, delta=ones1)
    mid = n // 2
    vals = np.array([kappa(spec, sample_path(n, 99, stream=m)).values[mid] for m in range(M)])
    s_fine = np.linspace(0.0, 1.0, 20_001)
    target = float(np.trapezoid(upsilon(0.5, s_fine) ** 2, s_fine))
    assert target == pytest.approx(1.0 / 48.0, abs=1e-9)
    var = float(np.var(vals, ddof=1))
    sigma = var * np.sqrt(2.0 / (M - 1))
    assert abs(var - target) <= 3.0 * sigma


def test_eta_deterministic_part():
    spec = make_spec(p=2.0, f=ones1)
    val = eta(spec, sample_path(64, 1))
    assert val.value == pytest.approx(-0.5, abs=1e-12)
    assert val.noise_part == 0.0


def test_eta_zero_inputs():
    spec = make_spec()
    assert eta(spec, sample_path(64, 1)).value == 0.0


def test_eta_variance_matches_noise_norm():
    # f = 0, delta = 1, p = 1: Var(eta) -> ||delta||^2 = 1.
    M, n = 1000, 256
    spec = make_spec(p=1.0, delta=ones1)
    vals = np.array([eta(spec, sample_path(n, 77, stream=m)).value for m in range(M)])
    var = float(np.var(vals, ddof=1))
    sigma = var * np.sqrt(2.0 / (M - 1))
    assert abs(var - 1.0) <= 3.0 * sigma


# -- differential-form consistency -----------------------------------------------


def test_check_ito_lemma_zero_noise():
    table = KernelTable.build(BoundaryKind.FIRST_KIND, 0.5, 1.0, Grid(64))
    assert check_ito_lemma(table, zeros1, sample_path(64, 4)) == 0.0


@pytest.mark.parametrize("kind", [BoundaryKind.FIRST_KIND, BoundaryKind.PERIODIC])
def test_check_ito_lemma_first_order_in_h(kind):
    # Coupled refinement (same path, halved resolution): the residual is
    # first order, so it should halve within +-30% when n doubles.
    fine = sample_path(1024, 11)
    coarse = fine.coarsen()
    r_fine = check_ito_lemma(KernelTable.build(kind, 0.5, 1.0, fine.grid), ones1, fine)
    r_coarse = check_ito_lemma(KernelTable.build(kind, 0.5, 1.0, coarse.grid), ones1, coarse)
    assert 1.4 <= r_coarse / r_fine <= 2.6


def test_check_ito_lemma_grid_mismatch():
    table = KernelTable.build(BoundaryKind.FIRST_KIND, 0.5, 1.0, Grid(64))
    with pytest.raises(ValueError):
        check_ito_lemma(table, ones1, sample_path(32, 4))


# -- bridge covariance -------------------------------------------------------------


def test_brownian_bridge_covariance():
    report = brownian_bridge_check(n=1024, seeds=1000)
    assert report.passed, report.as_dict()
    cells = {(c.t, c.u): c for c in report.cells}
    assert cells[(0.0, 0.0)].estimate == 0.0 and cells[(0.0, 0.0)].expected == 0.0
    assert cells[(0.5, 0.5)].expected == pytest.approx(0.25)
    assert cells[(0.25, 0.75)].expected == pytest.approx(0.0625)
    assert abs(cells[(0.5, 0.5)].estimate - 0.25) <= 3 * cells[(0.5, 0.5)].sigma


def test_brownian_bridge_seed_precondition():
    with pytest.raises(ValueError):
        brownian_bridge_check(n=64, seeds=50)
