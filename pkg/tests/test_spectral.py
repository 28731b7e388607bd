import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vortexlab import (BracketError, ConvergenceError, InputError,
                       NoThresholdError, Potential, assemble_radial_operator,
                       find_epsilon0, gl_linearization_eigenvalue,
                       linearization_eigenvalue_sweep, make_grid,
                       smallest_eigenpair, sweep_to_csv)

QUAD = Potential.quadratic()

# frozen independent oracle: first zero of the order-zero Bessel function
J0_ZERO_SQ = 5.783185962946785


def test_dirichlet_laplacian_pi_squared(grid_n3):
    op = assemble_radial_operator(3, grid_n3, 0.0, 0.0)
    pair = smallest_eigenpair(op)
    assert abs(pair.eigenvalue - math.pi ** 2) < 1e-6
    assert pair.residual < 1e-9


def test_dirichlet_laplacian_bessel(grid_n2):
    op = assemble_radial_operator(2, grid_n2, 0.0, 0.0)
    pair = smallest_eigenpair(op)
    assert abs(pair.eigenvalue - J0_ZERO_SQ) < 1e-3


def test_second_radial_eigenvalue(grid_n3):
    op = assemble_radial_operator(3, grid_n3, 0.0, 0.0)
    pair = smallest_eigenpair(op, which=1)
    assert abs(pair.eigenvalue - (2 * math.pi) ** 2) < 1e-3


def test_constant_shift_is_exact(grid_n3):
    op0 = assemble_radial_operator(3, grid_n3, 0.0, 0.0)
    op1 = assemble_radial_operator(3, grid_n3, 0.0, -10.0)
    v0 = smallest_eigenpair(op0).eigenvalue
    v1 = smallest_eigenpair(op1).eigenvalue
    assert abs((v0 - 10.0) - v1) < 1e-9


@given(st.floats(-5.0, 5.0))
@settings(max_examples=10)
def test_constant_shift_property(shift):
    grid = make_grid(3, 400, {"graded": 2.0})
    v0 = smallest_eigenpair(assemble_radial_operator(3, grid, 0.0,
                                                     0.0)).eigenvalue
    v1 = smallest_eigenpair(assemble_radial_operator(3, grid, 0.0,
                                                     shift)).eigenvalue
    assert abs(v1 - (v0 + shift)) < 1e-9 * (1 + abs(v0))


def test_angular_term_raises_eigenvalue(grid_n3):
    base = smallest_eigenpair(assemble_radial_operator(3, grid_n3, 0.0,
                                                       0.0)).eigenvalue
    with_mu = smallest_eigenpair(assemble_radial_operator(3, grid_n3, 2.0,
                                                          0.0)).eigenvalue
    assert with_mu > base + 1.0


def test_ground_state_positive(grid_n3):
    op = assemble_radial_operator(3, grid_n3, 0.0, 0.0)
    pair = smallest_eigenpair(op)
    assert np.all(pair.q[op.start:-1] > 0)
    assert pair.q[-1] == 0.0
    text = pair.to_csv()
    assert text.splitlines()[0] == "r,q"


def test_operator_validation(grid_n3):
    with pytest.raises(InputError):
        assemble_radial_operator(3, grid_n3, -1.0, 0.0)
    op = assemble_radial_operator(3, grid_n3, 0.0, 0.0)
    with pytest.raises(InputError):
        smallest_eigenpair(op, which=2)


# ---------------------------------------------------------------------------
# linearization around the amplitude profile


def test_high_dimension_lower_bound(grid_n7):
    # (N-2)^2/4 - (N-1) = 0.25 at N = 7
    for eps in (0.25, 0.5, 1.0):
        ell, pair, prof = gl_linearization_eigenvalue(7, QUAD, eps, grid_n7)
        assert ell >= 0.25 - 1e-4
        assert pair.residual < 1e-9
        assert prof.residual_norm < 1e-9


def test_threshold_value(eps0_n3, grid_n3):
    ell, _, _ = gl_linearization_eigenvalue(3, QUAD, eps0_n3, grid_n3)
    assert abs(ell) < 1e-6


def test_threshold_sign_pattern(eps0_n3, grid_n3):
    below, _, _ = gl_linearization_eigenvalue(3, QUAD, 0.9 * eps0_n3, grid_n3)
    above, _, _ = gl_linearization_eigenvalue(3, QUAD, 1.1 * eps0_n3, grid_n3)
    assert below < 0 < above


def test_scaled_eigenvalue_monotone(grid_n3):
    eps_values = np.linspace(0.08, 1.2, 10)
    rows = linearization_eigenvalue_sweep(3, QUAD, eps_values, grid=grid_n3)
    scaled = [eps * eps * ell for eps, ell in rows]
    assert all(b > a for a, b in zip(scaled, scaled[1:]))
    text = sweep_to_csv(rows)
    assert text.splitlines()[0] == "eps,eigenvalue,eps2_eigenvalue"
    assert len(text.splitlines()) == 11


def test_sweep_jobs_invariant(grid_n3):
    eps_values = np.array([0.1, 0.3, 0.6])
    one = linearization_eigenvalue_sweep(3, QUAD, eps_values, grid=grid_n3,
                                         jobs=1)
    two = linearization_eigenvalue_sweep(3, QUAD, eps_values, grid=grid_n3,
                                         jobs=2)
    assert sweep_to_csv(one) == sweep_to_csv(two)


def test_no_threshold_high_dimension(grid_n7):
    with pytest.raises(NoThresholdError):
        find_epsilon0(7, QUAD, (0.05, 1.0), grid=grid_n7)


def test_no_threshold_flat_slope(grid_n3):
    with pytest.raises(NoThresholdError):
        find_epsilon0(3, Potential.zero(), (0.05, 1.0), grid=grid_n3)


def test_threshold_needs_bracket(grid_n3):
    with pytest.raises(BracketError):
        find_epsilon0(3, QUAD, (0.5, 1.0), grid=grid_n3)
    with pytest.raises(InputError):
        find_epsilon0(3, QUAD, (1.0, 0.5), grid=grid_n3)
