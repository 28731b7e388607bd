import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vortexlab import (DomainError, InputError, Potential, format_float,
                       grid_from_spec, make_grid, potential_eval)


# ---------------------------------------------------------------------------
# grids


def test_make_grid_validation():
    with pytest.raises(InputError):
        make_grid(1, 100)
    with pytest.raises(InputError):
        make_grid(3, 8)
    with pytest.raises(InputError):
        make_grid(3, 100, {"graded": 0.5})
    with pytest.raises(InputError):
        make_grid(2.5, 100)


@given(st.integers(2, 9), st.integers(16, 400),
       st.sampled_from(["uniform", {"graded": 2.0}, {"graded": 3.0}]))
def test_grid_structure(N, n, grading):
    g = make_grid(N, n, grading)
    assert g.nodes.shape == (n,)
    assert g.nodes[-1] == 1.0
    assert g.nodes[0] > 0
    assert np.all(np.diff(g.nodes) > 0)
    # quadrature weights integrate 1 against r^(N-1) dr to the exact volume
    total = g.quadrature(np.ones(n))
    assert abs(total - 1.0 / N) < 5e-12


@given(st.integers(2, 7), st.integers(0, 2))
def test_quadrature_polynomial_exactness(N, k):
    # node weights reconstruct piecewise quadratics exactly
    g = make_grid(N, 300, {"graded": 2.0})
    val = g.quadrature(g.nodes ** k)
    assert abs(val - 1.0 / (N + k)) < 1e-10


def test_grid_spec_round_trip():
    g = make_grid(4, 123, {"graded": 2.5})
    g2 = grid_from_spec(4, g.spec())
    assert np.array_equal(g.nodes, g2.nodes)
    gu = make_grid(2, 50, "uniform")
    gu2 = grid_from_spec(2, gu.spec())
    assert np.array_equal(gu.nodes, gu2.nodes)


def test_node_gradient_cubic_exact():
    g = make_grid(3, 200, {"graded": 2.0})
    r = g.nodes
    p = 2.0 - 3.0 * r + r ** 2 + 0.5 * r ** 3
    dp = -3.0 + 2.0 * r + 1.5 * r ** 2
    assert np.max(np.abs(g.node_gradient(p) - dp)) < 1e-10


def test_node_gradient_convergence():
    errs = []
    for n in (200, 400, 800):
        g = make_grid(3, n, {"graded": 2.0})
        err = np.max(np.abs(g.node_gradient(np.sin(3 * g.nodes))
                            - 3 * np.cos(3 * g.nodes)))
        errs.append(err)
    assert errs[2] < errs[0] / 30     # at least third order


def test_gradient_energy_matches_quadrature():
    g = make_grid(3, 2000, {"graded": 2.0})
    u = g.nodes ** 2
    exact = 4.0 / (3 + 1)             # int (2r)^2 r^2 dr = 4/5... recompute
    exact = g.quadrature((2 * g.nodes) ** 2)
    assert abs(g.gradient_energy(u) - exact) < 1e-5


# ---------------------------------------------------------------------------
# consistent P1 matrices


def test_p1_weighted_mass_constant_matches_p1_mass():
    g = make_grid(3, 500, {"graded": 2.0})
    d0, o0 = g.p1_mass(0)
    d1, o1 = g.p1_weighted_mass(np.ones(g.n), 0)
    assert np.array_equal(d0, d1) and np.array_equal(o0, o1)


@given(st.integers(2, 7), st.sampled_from([-2, -1, 0, 1]))
def test_p1_weighted_mass_integrates(N, shift):
    g = make_grid(N, 800, {"graded": 2.0})
    r = g.nodes
    vals = 1.0 + r ** 2
    u = r * (1 - r)
    d, off = g.p1_weighted_mass(vals, shift)
    got = float(d @ u ** 2) + 2.0 * float(off @ (u[:-1] * u[1:]))
    p = N - 1 + shift
    # exact integral of (1+r^2) r^2 (1-r)^2 r^p over [0,1]
    def mono(q):
        return 1.0 / (q + 1)
    exact = sum(c * mono(p + k)
                for k, c in [(2, 1.0), (3, -2.0), (4, 2.0), (5, -2.0),
                             (6, 1.0)])
    assert abs(got - exact) < 2e-4 * abs(exact) + 1e-9


def test_hat_weights_positive():
    g = make_grid(5, 300, {"graded": 3.0})
    for shift in (-2, 0, 2):
        assert np.all(g.hat_weights(shift) > 0)


# ---------------------------------------------------------------------------
# potentials


def test_potential_presets():
    W = Potential.quadratic()
    assert W.eval(0.0, 0) == 0.0
    assert W.eval(1.0, 1) > 0
    L = Potential.linear()
    assert abs(L.eval(0.3, 0) - 0.3) < 1e-15
    assert L.eval(0.0, 1) == 1.0
    Z = Potential.zero()
    assert Z.eval(0.7, 0) == 0.0 and Z.eval(0.7, 1) == 0.0
    F = Potential.flat_well(0.25)
    assert F.eval(0.1, 1) == 0.0          # flat inside the well
    assert F.eval(0.5, 1) > 0


def test_potential_requires_normalization():
    # W(0) = 0 and convexity are enforced on construction
    with pytest.raises(InputError):
        Potential.from_spec({"piecewise": {"breaks": [0.5],
                                           "coeffs": [[1.0, 0.0, 0.0, 0.0],
                                                      [1.0, 0.0, 0.0, 0.0]]}})


def test_potential_spec_round_trip():
    for spec in ("quadratic", "linear", "zero", {"flat_well": 0.3}):
        W = Potential.from_spec(spec)
        W2 = Potential.from_spec(W.spec())
        for t in (0.0, 0.2, 0.9):
            assert W.eval(t, 0) == W2.eval(t, 0)
            assert W.eval(t, 1) == W2.eval(t, 1)


def test_potential_domain_checks():
    W = Potential.quadratic()
    with pytest.raises(DomainError):
        potential_eval(W, 1.5, 0)
    assert potential_eval(W, -0.5, 0) == W.eval(-0.5, 0)  # 1 - f^2 < 0 is fine
    with pytest.raises(InputError):
        W.eval(0.5, 3)


@given(st.floats(min_value=0.0, max_value=1.0))
def test_quadratic_well_values(t):
    W = Potential.quadratic()
    assert abs(W.eval(t, 0) - 0.5 * t * t) < 1e-15
    assert abs(W.eval(t, 1) - t) < 1e-15


# ---------------------------------------------------------------------------
# float formatting


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_format_float_round_trip(x):
    assert float(format_float(x)) == x
