import json
import math

import numpy as np
import pytest

from vortexlab import (InputError, NoEscapingRegionError, OutOfRangeError,
                       Potential, classify_point, eta0, make_grid, sweep)

QUAD = Potential.quadratic()
LIN = Potential.linear()


def test_eta0_matches_eigenvalue(eps0_n3, grid_n3):
    eps = eps0_n3 / 2
    val = eta0(3, QUAD, LIN, eps, grid=grid_n3)
    from vortexlab import gl_linearization_eigenvalue
    ell, _, _ = gl_linearization_eigenvalue(3, QUAD, eps, grid_n3)
    assert ell < 0
    assert abs(val - math.sqrt(LIN.eval(0.0, 1) / abs(ell))) < 1e-12


def test_eta0_diverges_at_threshold(eps0_n3, grid_n3):
    vals = [eta0(3, QUAD, LIN, eps0_n3 - 10.0 ** (-k), grid=grid_n3)
            for k in (3, 5, 7)]
    assert vals[0] < vals[1] < vals[2]
    assert vals[2] > 1e2


def test_eta0_out_of_range(eps0_n3, grid_n3):
    with pytest.raises(OutOfRangeError):
        eta0(3, QUAD, LIN, 2 * eps0_n3, grid=grid_n3)


def test_eta0_no_escaping_region(grid_n7):
    with pytest.raises(NoEscapingRegionError):
        eta0(7, QUAD, LIN, 0.5, grid=grid_n7)


def test_eta0_quadratic_penalty_vanishes(eps0_n3, grid_n3):
    # a penalty with zero slope at the origin never blocks escape
    assert eta0(3, QUAD, Potential.quadratic(), eps0_n3 / 2,
                grid=grid_n3) == 0.0


def test_classify_escaping_point(escaping_point, grid_n3):
    eps, eta, _ = escaping_point
    pt = classify_point(3, QUAD, LIN, eps, eta, grid=grid_n3, confirm=True)
    assert pt.cls == "Escaping"
    assert pt.confirmed
    assert pt.criterion < 0


def test_classify_non_escaping_point(grid_n3, eps0_n3):
    pt = classify_point(3, QUAD, LIN, 2 * eps0_n3, 0.5, grid=grid_n3,
                        confirm=True)
    assert pt.cls == "NonEscaping"
    assert pt.criterion > 0


def test_classify_high_dimension(grid_n7):
    pt = classify_point(7, QUAD, LIN, 0.4, 2.0, grid=grid_n7, confirm=True)
    assert pt.cls == "NonEscaping"


def test_classify_boundary_band(escaping_point, grid_n3):
    eps, _, eta_star = escaping_point
    pt = classify_point(3, QUAD, LIN, eps, eta_star, grid=grid_n3)
    assert pt.cls == "Boundary"


def test_sweep_structure_and_row_transitions(eps0_n3):
    grid = make_grid(3, 800, {"graded": 2.0})
    diagram = sweep(3, QUAD, LIN, (0.05, 0.4), (0.1, 1.2), (6, 6),
                    confirm_fraction=1.0, grid=grid, seed=1)
    assert diagram.eps0 is not None
    assert abs(diagram.eps0 - eps0_n3) < 1e-3
    # within each eps-column below threshold, class flips once in eta
    for i, eps in enumerate(diagram.eps_samples):
        classes = [diagram.points[i][j].cls
                   for j in range(len(diagram.eta_samples))]
        kinds = [c for c in classes if c != "Boundary"]
        flips = sum(a != b for a, b in zip(kinds, kinds[1:]))
        assert flips <= 1
    csv = diagram.to_csv()
    header, *rows = csv.splitlines()
    assert header == "eps,eta,class,criterion"
    assert len(rows) == 36
    svg = diagram.to_svg()
    assert svg.startswith("<svg") and "hatch" in svg
    assert "date" not in svg and "time" not in svg


def test_sweep_jobs_and_seed_deterministic():
    grid = make_grid(3, 600, {"graded": 2.0})
    kw = dict(confirm_fraction=0.4, grid=grid, seed=9)
    a = sweep(3, QUAD, LIN, (0.05, 0.3), (0.2, 1.0), (4, 4), jobs=1, **kw)
    b = sweep(3, QUAD, LIN, (0.05, 0.3), (0.2, 1.0), (4, 4), jobs=3, **kw)
    assert a.to_csv() == b.to_csv()
    conf_a = [(i, j) for i, row in enumerate(a.points)
              for j, pt in enumerate(row) if pt.confirmed]
    conf_b = [(i, j) for i, row in enumerate(b.points)
              for j, pt in enumerate(row) if pt.confirmed]
    assert conf_a == conf_b and conf_a


def test_sweep_axis_validation():
    with pytest.raises(InputError):
        sweep(3, QUAD, LIN, (0.4, 0.1), (0.1, 1.0), (4, 4))
    with pytest.raises(InputError):
        sweep(3, QUAD, LIN, (0.1, 0.4), (0.1, 1.0), (4, 4),
              confirm_fraction=1.5)


def test_sweep_open_axis_at_zero():
    grid = make_grid(3, 400, {"graded": 2.0})
    d = sweep(3, QUAD, LIN, (0.0, 0.2), (0.0, 0.5), (3, 3), grid=grid)
    assert d.eps_samples[0] > 0
    assert d.eta_samples[0] > 0
