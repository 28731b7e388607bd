"""Radial profile boundary-value solvers and reduced energies.

Three models on the unit ball, reduced to r ∈ (0, 1]:

* the scalar vortex amplitude f with f(1)=1 (maps into R^N), solved in the
  regular variable v = f/r;
* the two-field extension (f, g) where g is the out-of-plane component,
  penalized by a transverse potential; branches: non_escaping (g ≡ 0) and
  escaping (g > 0);
* the sphere-valued polar angle θ with θ(1) = π/2 (g = cos θ escapes toward
  the pole at the origin).

All solvers are damped Newton on a conservative finite-volume discretization
with midpoint flux coefficients, zero-flux closure at the origin, and
parameter continuation for stiff regimes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import solve_banded

from .core import (
    ConvergenceError,
    InputError,
    Potential,
    RadialGrid,
    format_float,
    make_grid,
)

__all__ = [
    "SolverOptions",
    "GLProfile",
    "ExtendedProfile",
    "SphereProfile",
    "solve_gl_profile",
    "solve_extended_profile",
    "solve_sphere_profile",
    "reduced_energy_gl",
    "reduced_energy_extended",
    "reduced_energy_mm",
    "residual",
    "pohozaev_check",
    "profile_to_csv",
    "profile_to_json",
    "profile_from_json",
]


@dataclass(frozen=True)
class SolverOptions:
    tol: float = 1e-10            # sup-norm of the discrete residual
    max_iter: int = 60
    min_damping: float = 2.0**-16
    escape_tol: float = 1e-6      # branch disambiguation threshold on max g
    g_seed: float = 0.5           # escaping initial guess amplitude
    eps_direct: float = 0.25      # solve directly for eps >= this, else continue
    continuation_factor: float = math.sqrt(2.0)
    eta_anchors: tuple = (1.0, 2.0, 4.0, 8.0, 16.0, 32.0)
    collapse_angle: float = 0.5   # θ(r_min) above this = equator collapse
    glue_gap: float = 1e-4        # π/2 − θ(1/2) below this = equator with a
                                  # spurious O(r_min) core; counts as collapse


# ---------------------------------------------------------------------------
# damped Newton driver


def _newton(assemble: Callable, u0: np.ndarray, opts: SolverOptions,
            stage: str, trace: list) -> tuple[np.ndarray, float]:
    """assemble(u) -> (residual vector, solve(rhs) -> Newton step)."""
    u = np.array(u0, dtype=float)
    res, solve = assemble(u)
    norm = float(np.max(np.abs(res)))
    for it in range(opts.max_iter):
        if norm <= opts.tol:
            return u, norm
        delta = solve(-res)
        alpha = 1.0
        while True:
            trial = u + alpha * delta
            res2, solve2 = assemble(trial)
            norm2 = float(np.max(np.abs(res2)))
            if norm2 <= (1.0 - 1e-4 * alpha) * norm or norm2 <= opts.tol:
                break
            alpha *= 0.5
            if alpha < opts.min_damping:
                trace.append((stage, it, norm, alpha))
                raise ConvergenceError(
                    f"Newton stalled in stage {stage!r} (residual {norm:.3e})",
                    trace)
        u, res, solve, norm = trial, res2, solve2, norm2
        trace.append((stage, it, norm, alpha))
    if norm <= opts.tol:
        return u, norm
    trace.append((stage, opts.max_iter, norm, 0.0))
    raise ConvergenceError(
        f"Newton did not reach tol in stage {stage!r} (residual {norm:.3e})",
        trace)


def _tridiag_solver(sub, diag, sup):
    # row-equilibrate: the r^(N+1) weights span ~50 decades at large N on a
    # graded grid, and without scaling the factorization loses the step
    rs = np.abs(diag).copy()
    rs[1:] = np.maximum(rs[1:], np.abs(sub))
    rs[:-1] = np.maximum(rs[:-1], np.abs(sup))
    rs = np.where(rs > 0, rs, 1.0)
    ab = np.zeros((3, diag.size))
    ab[0, 1:] = sup / rs[:-1]
    ab[1, :] = diag / rs
    ab[2, :-1] = sub / rs[1:]

    def solve(rhs):
        return solve_banded((1, 1), ab, rhs / rs)
    return solve


# ---------------------------------------------------------------------------
# discrete operators (shared by solvers and the independent residual check)


def _face_coeffs(grid: RadialGrid, power: int) -> np.ndarray:
    """Midpoint flux coefficients  mid^power / h  on the n-1 faces."""
    mids = 0.5 * (grid.nodes[:-1] + grid.nodes[1:])
    return mids**power / grid.h


def _gl_residual_full(grid, eps, well, v):
    """FV residual of (r^{N+1} v')' = -(r^{N+1}/eps²) W'(1-r²v²) v at nodes
    0..n-2 (node n-1 carries the Dirichlet value v=1)."""
    c = _face_coeffs(grid, grid.N + 1)
    mass = grid.hat_weights(2)
    r = grid.nodes
    wp = well.eval(1.0 - r * r * v * v, 1, clamp=True)
    res = np.empty(grid.n - 1)
    flux = c * (v[1:] - v[:-1])          # face fluxes
    res[0] = -flux[0]
    res[1:] = flux[:-1] - flux[1:]
    res -= mass[:-1] / eps**2 * wp[:-1] * v[:-1]
    return res


def _gl_assemble(grid, eps, well):
    c = _face_coeffs(grid, grid.N + 1)
    mass = grid.hat_weights(2)[:-1]
    r = grid.nodes

    def assemble(vi):
        v = np.append(vi, 1.0)
        res = _gl_residual_full(grid, eps, well, v)
        x = 1.0 - r * r * v * v
        wp = well.eval(x, 1, clamp=True)
        wpp = well.eval(x, 2, clamp=True)
        m = grid.n - 1
        diag = np.zeros(m)
        diag += c[: m]
        diag[1:] += c[: m - 1]
        diag -= mass / eps**2 * (wp[:m] - 2 * r[:m]**2 * v[:m]**2 * wpp[:m])
        off = -c[: m - 1]
        return res, _tridiag_solver(off, diag, off)

    return assemble


def _extended_residual_full(grid, eps, eta, well, penalty, v, g):
    c_v = _face_coeffs(grid, grid.N + 1)
    c_g = _face_coeffs(grid, grid.N - 1)
    mv = grid.hat_weights(2)
    mg = grid.hat_weights(0)
    r = grid.nodes
    x = 1.0 - r * r * v * v - g * g
    wp = well.eval(x, 1, clamp=True)
    tp = penalty.eval(g * g, 1, clamp=True)
    m = grid.n - 1
    res_v = np.empty(m)
    res_g = np.empty(m)
    flux_v = c_v * (v[1:] - v[:-1])
    flux_g = c_g * (g[1:] - g[:-1])
    res_v[0] = -flux_v[0]
    res_v[1:] = flux_v[:-1] - flux_v[1:]
    res_g[0] = -flux_g[0]
    res_g[1:] = flux_g[:-1] - flux_g[1:]
    res_v -= mv[:m] / eps**2 * wp[:m] * v[:m]
    res_g -= mg[:m] * (wp[:m] / eps**2 - tp[:m] / eta**2) * g[:m]
    return res_v, res_g


def _extended_assemble(grid, eps, eta, well, penalty):
    c_v = _face_coeffs(grid, grid.N + 1)
    c_g = _face_coeffs(grid, grid.N - 1)
    mv = grid.hat_weights(2)
    mg = grid.hat_weights(0)
    r = grid.nodes
    m = grid.n - 1

    def assemble(z):
        v = np.append(z[0::2], 1.0)
        g = np.append(z[1::2], 0.0)
        res_v, res_g = _extended_residual_full(grid, eps, eta, well, penalty, v, g)
        res = np.empty(2 * m)
        res[0::2] = res_v
        res[1::2] = res_g

        x = (1.0 - r * r * v * v - g * g)[:m]
        wp = well.eval(x, 1, clamp=True)
        wpp = well.eval(x, 2, clamp=True)
        g2 = (g * g)[:m]
        tp = penalty.eval(g2, 1, clamp=True)
        tpp = penalty.eval(g2, 2, clamp=True)
        rv, gg = (r * v)[:m], g[:m]

        dvv = np.zeros(m)
        dvv += c_v[:m]
        dvv[1:] += c_v[: m - 1]
        dvv -= mv[:m] / eps**2 * (wp - 2 * rv * rv * wpp)
        dgg = np.zeros(m)
        dgg += c_g[:m]
        dgg[1:] += c_g[: m - 1]
        dgg -= mg[:m] * ((wp - 2 * gg * gg * wpp) / eps**2
                         - (tp + 2 * gg * gg * tpp) / eta**2)
        dvg = mv[:m] / eps**2 * 2 * v[:m] * gg * wpp
        dgv = mg[:m] / eps**2 * 2 * r[:m] * rv * gg * wpp

        ab = np.zeros((5, 2 * m))
        idx = np.arange(m)
        ab[2, 2 * idx] = dvv
        ab[2, 2 * idx + 1] = dgg
        ab[1, 2 * idx + 1] = dvg          # (2j, 2j+1)
        ab[3, 2 * idx] = dgv              # (2j+1, 2j)
        ab[0, 2 * idx[1:]] = -c_v[: m - 1]      # (2j, 2j+2)
        ab[4, 2 * idx[:-1]] = -c_v[: m - 1]
        ab[0, 2 * idx[1:] + 1] = -c_g[: m - 1]  # (2j+1, 2j+3)
        ab[4, 2 * idx[:-1] + 1] = -c_g[: m - 1]

        # row-equilibrate (same reasoning as _tridiag_solver)
        m2 = 2 * m
        rs = np.zeros(m2)
        for k in range(5):
            d = k - 2                      # ab[k, j] holds A[j + d, j]
            j0, j1 = max(0, -d), min(m2, m2 - d)
            rows = slice(j0 + d, j1 + d)
            rs[rows] = np.maximum(rs[rows], np.abs(ab[k, j0:j1]))
        rs = np.where(rs > 0, rs, 1.0)
        for k in range(5):
            d = k - 2
            j0, j1 = max(0, -d), min(m2, m2 - d)
            ab[k, j0:j1] /= rs[j0 + d:j1 + d]

        def solve(rhs):
            return solve_banded((2, 2), ab, rhs / rs)

        return res, solve

    return assemble


def _sphere_residual_full(grid, eta, penalty, theta):
    c = _face_coeffs(grid, grid.N - 1)
    m_cent = grid.hat_weights(-2)
    m0 = grid.hat_weights(0)
    sc = np.sin(theta) * np.cos(theta)
    tp = penalty.eval(np.cos(theta)**2, 1, clamp=True)
    m = grid.n - 1
    res = np.empty(m)
    flux = c * (theta[1:] - theta[:-1])
    res[0] = -flux[0]
    res[1:] = flux[:-1] - flux[1:]
    res += (grid.N - 1) * m_cent[:m] * sc[:m] - m0[:m] / eta**2 * tp[:m] * sc[:m]
    return res


def _sphere_assemble(grid, eta, penalty):
    c = _face_coeffs(grid, grid.N - 1)
    m_cent = grid.hat_weights(-2)
    m0 = grid.hat_weights(0)
    m = grid.n - 1

    def assemble(ti):
        theta = np.append(ti, 0.5 * math.pi)
        res = _sphere_residual_full(grid, eta, penalty, theta)
        cos2 = np.cos(2 * theta)[:m]
        sin2 = np.sin(2 * theta)[:m]
        c2 = (np.cos(theta)**2)[:m]
        tp = penalty.eval(c2, 1, clamp=True)
        tpp = penalty.eval(c2, 2, clamp=True)
        diag = np.zeros(m)
        diag += c[:m]
        diag[1:] += c[: m - 1]
        diag += (grid.N - 1) * m_cent[:m] * cos2
        diag -= m0[:m] / eta**2 * (tp * cos2 - 0.5 * tpp * sin2 * sin2)
        off = -c[: m - 1]
        return res, _tridiag_solver(off, diag, off)

    return assemble


# ---------------------------------------------------------------------------
# profile records


def _monotone(values: np.ndarray, direction: int) -> bool:
    d = np.diff(values) * direction
    return bool(np.all(d > -1e-12))


@dataclass(frozen=True)
class GLProfile:
    grid: RadialGrid
    eps: float
    well: Potential
    v: np.ndarray                 # f/r at nodes, the solved unknown
    f: np.ndarray                 # amplitude at nodes, f = r·v
    residual_norm: float
    solver_trace: list = field(repr=False, default_factory=list)

    def interpolate(self, r) -> np.ndarray:
        """Amplitude at arbitrary radii (linear, f(0)=0)."""
        return np.interp(r, np.concatenate(([0.0], self.grid.nodes)),
                         np.concatenate(([0.0], self.f)))


@dataclass(frozen=True)
class ExtendedProfile:
    grid: RadialGrid
    eps: float
    eta: float
    well: Potential
    penalty: Potential
    v: np.ndarray
    f: np.ndarray
    g: np.ndarray
    branch: str                   # "escaping" | "non_escaping"
    residual_norm: float
    solver_trace: list = field(repr=False, default_factory=list)
    flags: tuple = ()

    def interpolate(self, r) -> np.ndarray:
        return np.interp(r, np.concatenate(([0.0], self.grid.nodes)),
                         np.concatenate(([0.0], self.f)))


@dataclass(frozen=True)
class SphereProfile:
    grid: RadialGrid
    eta: float
    penalty: Potential
    theta: np.ndarray
    residual_norm: float
    no_escape: bool = False       # True: collapsed to the equator branch
    solver_trace: list = field(repr=False, default_factory=list)


# ---------------------------------------------------------------------------
# solvers


def _check_potential(p: Potential, name: str, needs_cap: bool) -> None:
    if not isinstance(p, Potential):
        raise InputError(f"{name} must be a Potential")
    if needs_cap and p.hi < 1.0:
        raise InputError(f"{name} domain must reach 1 (solutions hit 1-f²-g²=0..1)")


def solve_gl_profile(N: int, W: Potential, eps: float, grid: RadialGrid,
                     opts: SolverOptions = SolverOptions()) -> GLProfile:
    """Vortex amplitude profile: unique solution with f(1)=1.

    Continuation marches eps downward from the mildly nonlinear regime; each
    Newton stage solves the v-form system to opts.tol in sup norm.
    """
    W = Potential.from_spec(W)
    _check_potential(W, "W", needs_cap=True)
    if eps <= 0:
        raise InputError("eps must be positive")
    if grid.N != N:
        raise InputError("grid dimension does not match N")
    trace: list = []
    v = _gl_continuation(grid, W, eps, opts, trace)
    vfull = np.append(v, 1.0)
    res = _gl_residual_full(grid, eps, W, vfull)
    return GLProfile(grid=grid, eps=eps, well=W, v=vfull,
                     f=grid.nodes * vfull,
                     residual_norm=float(np.max(np.abs(res))),
                     solver_trace=trace)


def _gl_continuation(grid, W, eps, opts, trace, v_init=None):
    """Newton path to the v-unknowns (length n-1) at the target eps."""
    if v_init is not None:
        v = np.array(v_init, dtype=float)
        steps = [eps]
    else:
        v = np.ones(grid.n - 1)
        if eps >= opts.eps_direct:
            steps = [eps]
        else:
            steps = []
            e = opts.eps_direct
            while e > eps * opts.continuation_factor:
                steps.append(e)
                e /= opts.continuation_factor
            steps.append(eps)
    for e in steps:
        v, _ = _newton(_gl_assemble(grid, e, W), v, opts,
                       f"gl eps={e:.6g}", trace)
    return v


def solve_sphere_profile(N: int, Wt: Potential, eta: float, grid: RadialGrid,
                         opts: SolverOptions = SolverOptions()) -> SphereProfile:
    """Sphere-valued polar-angle profile with θ(1) = π/2.

    Seeks the escaping branch (θ(0)=0). If every attempt collapses to the
    equator θ ≡ π/2 (which happens for N ≥ 7), returns the equator profile
    with no_escape=True — detection, not assertion. For N = 2 the equator is
    not an admissible finite-energy state, so collapse is a solver failure.
    """
    Wt = Potential.from_spec(Wt)
    _check_potential(Wt, "Wt", needs_cap=False)
    if eta <= 0:
        raise InputError("eta must be positive")
    if grid.N != N:
        raise InputError("grid dimension does not match N")
    trace: list = []
    theta = None
    saw_collapse = False
    for anchor in (1.0, 4.0, 16.0, 64.0):
        try:
            theta = _sphere_march(grid, Wt, eta, anchor * eta, opts, trace)
        except ConvergenceError:
            theta = None
            continue
        if theta is not None:
            break
        saw_collapse = True   # this anchor converged straight to the equator
    if theta is None or _theta_collapsed(grid, theta, opts):
        if N == 2:
            raise ConvergenceError(
                "sphere solver collapsed to the equator at N=2 "
                "(no admissible equator branch)", trace)
        if theta is None and not saw_collapse:
            raise ConvergenceError("sphere solver failed to converge", trace)
        tfull = np.full(grid.n, 0.5 * math.pi)
        res = _sphere_residual_full(grid, eta, Wt, tfull)
        return SphereProfile(grid=grid, eta=eta, penalty=Wt, theta=tfull,
                             residual_norm=float(np.max(np.abs(res))),
                             no_escape=True, solver_trace=trace)
    tfull = np.append(theta, 0.5 * math.pi)
    res = _sphere_residual_full(grid, eta, Wt, tfull)
    return SphereProfile(grid=grid, eta=eta, penalty=Wt, theta=tfull,
                         residual_norm=float(np.max(np.abs(res))),
                         no_escape=False, solver_trace=trace)


def _theta_collapsed(grid, theta, opts):
    """True when an iterate has fallen onto the equator: either outright
    (θ(r_min) large) or glued to it away from a spurious mesh-scale core near
    the origin, which the zero-flux closure can sustain when no true escaping
    branch exists. Genuine branches keep a macroscopic gap at r = 1/2 (worst
    case, N=6: about 1e-2); the artifacts sit within ~1e-6 of π/2 there."""
    if theta[0] > opts.collapse_angle:
        return True
    mid = np.searchsorted(grid.nodes, 0.5)
    return 0.5 * math.pi - theta[min(mid, len(theta) - 1)] < opts.glue_gap


def _sphere_march(grid, Wt, eta, start, opts, trace):
    """March η downward from start. None: the anchor itself collapsed (caller
    tries a deeper anchor). A collapse mid-march is definitive and returns the
    collapsed iterate; Newton failures propagate."""
    theta = 0.5 * math.pi * grid.nodes[:-1]
    e, first = start, True
    while True:
        theta, _ = _newton(_sphere_assemble(grid, e, Wt), theta, opts,
                           f"sphere eta={e:.6g}", trace)
        if _theta_collapsed(grid, theta, opts):
            return None if first else theta
        if e == eta:
            return theta
        first = False
        e = max(eta, e / opts.continuation_factor)


def solve_extended_profile(N: int, W: Potential, Wt: Potential, eps: float,
                           eta: float, grid: RadialGrid,
                           branch_hint: str = "escaping",
                           opts: SolverOptions = SolverOptions()) -> ExtendedProfile:
    """Two-field profile (f, g); branch per branch_hint.

    hint non_escaping: returns (f_gl, 0), always a solution. hint escaping:
    damped Newton with downward-in-η continuation from the first anchor in
    opts.eta_anchors·η that sustains g > escape_tol; if the branch collapses
    all the way to the target, the point has no escaping solution and the
    non-escaping profile is returned with a diagnostic flag (not an error).
    """
    W = Potential.from_spec(W)
    Wt = Potential.from_spec(Wt)
    _check_potential(W, "W", needs_cap=True)
    _check_potential(Wt, "Wt", needs_cap=False)
    if eps <= 0 or eta <= 0:
        raise InputError("eps and eta must be positive")
    if grid.N != N:
        raise InputError("grid dimension does not match N")
    if branch_hint not in ("escaping", "non_escaping"):
        raise InputError("branch_hint must be 'escaping' or 'non_escaping'")

    trace: list = []
    v_gl = _gl_continuation(grid, W, eps, opts, trace)

    if branch_hint == "non_escaping":
        return _wrap_extended(grid, eps, eta, W, Wt,
                              np.append(v_gl, 1.0), np.zeros(grid.n),
                              "non_escaping", trace, ())

    for factor in opts.eta_anchors:
        z = _escape_march(grid, W, Wt, eps, eta, factor * eta, v_gl, opts, trace)
        if z is None:
            continue              # anchor collapsed/stalled; go deeper
        v = np.append(z[0::2], 1.0)
        g = np.append(z[1::2], 0.0)
        gmax = float(np.max(np.abs(g)))
        if gmax > opts.escape_tol:
            if g[np.argmax(np.abs(g))] < 0:
                g = -g            # report the g > 0 representative
            return _wrap_extended(grid, eps, eta, W, Wt, v, g,
                                  "escaping", trace, ())
        # the branch merged with g ≡ 0 on the way down: no escaping solution
        flags = ("boundary_ambiguous",) if gmax > 0 else ()
        return _wrap_extended(grid, eps, eta, W, Wt,
                              np.append(v_gl, 1.0), np.zeros(grid.n),
                              "non_escaping", trace,
                              flags + ("no_escape_found",))
    return _wrap_extended(grid, eps, eta, W, Wt,
                          np.append(v_gl, 1.0), np.zeros(grid.n),
                          "non_escaping", trace, ("no_escape_found",))


def _escape_march(grid, W, Wt, eps, eta, start, v_gl, opts, trace):
    """March η from start down to eta on the escaping branch.

    None: the anchor itself collapsed or stalled (caller tries a deeper one).
    Otherwise returns the interleaved unknowns: at eta if the branch
    survived, or the collapsed iterate (max g ≤ escape_tol) — definitive,
    since the escaping set is an up-set in η at fixed eps."""
    z = np.empty(2 * (grid.n - 1))
    z[0::2] = v_gl
    z[1::2] = opts.g_seed * (1.0 - grid.nodes[:-1] ** 2)
    e, first = start, True
    prev, z_prev = start, z.copy()
    while True:
        try:
            z, _ = _newton(_extended_assemble(grid, eps, e, W, Wt), z, opts,
                           f"ext eta={e:.6g}", trace)
        except ConvergenceError:
            if first:
                return None
            # retry the failed stride in two half-steps before giving up
            mid = math.sqrt(e * prev)
            try:
                z = z_prev
                z, _ = _newton(_extended_assemble(grid, eps, mid, W, Wt), z,
                               opts, f"ext eta={mid:.6g}", trace)
                z, _ = _newton(_extended_assemble(grid, eps, e, W, Wt), z,
                               opts, f"ext eta={e:.6g}", trace)
            except ConvergenceError:
                return None
        if float(np.max(np.abs(z[1::2]))) <= opts.escape_tol:
            return None if first else z
        if e == eta:
            return z
        first = False
        prev, z_prev = e, z.copy()
        e = max(eta, e / opts.continuation_factor)


def _wrap_extended(grid, eps, eta, W, Wt, v, g, branch, trace, flags):
    res_v, res_g = _extended_residual_full(grid, eps, eta, W, Wt, v, g)
    rn = float(max(np.max(np.abs(res_v)), np.max(np.abs(res_g))))
    return ExtendedProfile(grid=grid, eps=eps, eta=eta, well=W, penalty=Wt,
                           v=v, f=grid.nodes * v, g=g, branch=branch,
                           residual_norm=rn, solver_trace=trace, flags=flags)


# ---------------------------------------------------------------------------
# reduced energies (the common 1/|S^{N-1}| normalization, ½∫[...] r^{N-1} dr)
# The centrifugal term ∫ f²/r² r^{N-1} dr is integrated through the smooth
# samples (f/r)², which stay bounded at the origin.


def reduced_energy_gl(p: GLProfile, W: Potential, eps: float) -> float:
    W = Potential.from_spec(W)
    grid = p.grid
    pot = W.eval(1.0 - p.f**2, 0, clamp=True)
    return 0.5 * (grid.gradient_energy(p.f, left_value=0.0)
                  + (grid.N - 1) * grid.quadrature(p.v**2)
                  + grid.quadrature(pot) / eps**2)


def reduced_energy_extended(p, W: Potential, Wt: Potential, eps: float,
                            eta: float) -> float:
    """Accepts an ExtendedProfile (or a GLProfile, treated as g ≡ 0)."""
    W = Potential.from_spec(W)
    Wt = Potential.from_spec(Wt)
    grid = p.grid
    g = getattr(p, "g", None)
    if g is None:
        g = np.zeros(grid.n)
    pot = W.eval(1.0 - p.f**2 - g**2, 0, clamp=True)
    pen = Wt.eval(g**2, 0, clamp=True)
    return 0.5 * (grid.gradient_energy(p.f, left_value=0.0)
                  + grid.gradient_energy(g, left_value=None)
                  + (grid.N - 1) * grid.quadrature(p.v**2)
                  + grid.quadrature(pot) / eps**2
                  + grid.quadrature(pen) / eta**2)


def reduced_energy_mm(p: SphereProfile, Wt: Potential, eta: float) -> float:
    Wt = Potential.from_spec(Wt)
    grid = p.grid
    s2 = np.sin(p.theta)**2
    if grid.N >= 3:
        cent = float(grid.product_weights(-2) @ s2)
    else:
        cent = grid.quadrature(s2 / grid.nodes**2)
    pen = Wt.eval(np.cos(p.theta)**2, 0, clamp=True)
    return 0.5 * (grid.gradient_energy(p.theta, left_value=None)
                  + (grid.N - 1) * cent
                  + grid.quadrature(pen) / eta**2)


# ---------------------------------------------------------------------------
# independent residual and Pohozaev identity check


def residual(profile) -> float:
    """Sup-norm of the discrete ODE residual, recomputed from the stored
    fields and potentials (independent of the solver's bookkeeping)."""
    if isinstance(profile, GLProfile):
        r = _gl_residual_full(profile.grid, profile.eps, profile.well, profile.v)
        return float(np.max(np.abs(r)))
    if isinstance(profile, ExtendedProfile):
        rv, rg = _extended_residual_full(profile.grid, profile.eps, profile.eta,
                                         profile.well, profile.penalty,
                                         profile.v, profile.g)
        return float(max(np.max(np.abs(rv)), np.max(np.abs(rg))))
    if isinstance(profile, SphereProfile):
        r = _sphere_residual_full(profile.grid, profile.eta, profile.penalty,
                                  profile.theta)
        return float(np.max(np.abs(r)))
    raise InputError(f"not a profile: {profile!r}")


def pohozaev_check(p: SphereProfile, Wt: Potential, eta: float) -> float:
    """Max-norm defect of the radial conservation identity

        d/dr [ r²(θ')² + (N-1)cos²θ - (r²/η²) Ṽ(cos²θ) ]
            = -2(N-2) r (θ')² - (2r/η²) Ṽ(cos²θ)

    evaluated with second-order node derivatives. Small values certify that
    θ solves the angle ODE; O(1) values reject non-solutions."""
    Wt = Potential.from_spec(Wt)
    grid = p.grid
    r = grid.nodes
    dtheta = grid.node_gradient(p.theta)
    c2 = np.cos(p.theta)**2
    pen = Wt.eval(c2, 0, clamp=True)
    P = r**2 * dtheta**2 + (grid.N - 1) * c2 - r**2 / eta**2 * pen
    dP = grid.node_gradient(P)
    rhs = -2.0 * (grid.N - 2) * r * dtheta**2 - 2.0 * r / eta**2 * pen
    return float(np.max(np.abs(dP - rhs)))


# ---------------------------------------------------------------------------
# serialization


def _meta(profile) -> dict:
    if isinstance(profile, GLProfile):
        return {"model": "gl", "N": profile.grid.N, "eps": profile.eps,
                "well": profile.well.spec(),
                "grid": profile.grid.spec(),
                "residual_norm": profile.residual_norm}
    if isinstance(profile, ExtendedProfile):
        return {"model": "extended", "N": profile.grid.N, "eps": profile.eps,
                "eta": profile.eta, "well": profile.well.spec(),
                "penalty": profile.penalty.spec(), "branch": profile.branch,
                "flags": list(profile.flags), "grid": profile.grid.spec(),
                "residual_norm": profile.residual_norm}
    if isinstance(profile, SphereProfile):
        return {"model": "sphere", "N": profile.grid.N, "eta": profile.eta,
                "penalty": profile.penalty.spec(),
                "no_escape": profile.no_escape, "grid": profile.grid.spec(),
                "residual_norm": profile.residual_norm}
    raise InputError(f"not a profile: {profile!r}")


def profile_to_csv(profile) -> str:
    """CSV text: one JSON metadata comment line, column header, 17-digit rows."""
    meta = _meta(profile)
    lines = ["# " + json.dumps(meta, sort_keys=True)]
    r = profile.grid.nodes
    if isinstance(profile, GLProfile):
        lines.append("r,f")
        cols = (r, profile.f)
    elif isinstance(profile, ExtendedProfile):
        lines.append("r,f,g")
        cols = (r, profile.f, profile.g)
    else:
        lines.append("r,theta")
        cols = (r, profile.theta)
    for row in zip(*cols):
        lines.append(",".join(format_float(x) for x in row))
    return "\n".join(lines) + "\n"


def profile_to_json(profile) -> str:
    meta = _meta(profile)
    if isinstance(profile, GLProfile):
        meta["fields"] = {"v": profile.v.tolist()}
    elif isinstance(profile, ExtendedProfile):
        meta["fields"] = {"v": profile.v.tolist(), "g": profile.g.tolist()}
    else:
        meta["fields"] = {"theta": profile.theta.tolist()}
    return json.dumps(meta, sort_keys=True)


def profile_from_json(text: str):
    data = json.loads(text)
    gs = data["grid"]
    grid = make_grid(data["N"], gs["n"], gs["grading"])

    def arr(key):
        return np.asarray(data["fields"][key], dtype=float)

    model = data["model"]
    if model == "gl":
        v = arr("v")
        return GLProfile(grid=grid, eps=data["eps"],
                         well=Potential.from_spec(data["well"]), v=v,
                         f=grid.nodes * v,
                         residual_norm=data["residual_norm"])
    if model == "extended":
        v, g = arr("v"), arr("g")
        return ExtendedProfile(grid=grid, eps=data["eps"], eta=data["eta"],
                               well=Potential.from_spec(data["well"]),
                               penalty=Potential.from_spec(data["penalty"]),
                               v=v, f=grid.nodes * v, g=g,
                               branch=data["branch"],
                               residual_norm=data["residual_norm"],
                               flags=tuple(data.get("flags", ())))
    if model == "sphere":
        return SphereProfile(grid=grid, eta=data["eta"],
                             penalty=Potential.from_spec(data["penalty"]),
                             theta=arr("theta"),
                             residual_norm=data["residual_norm"],
                             no_escape=data.get("no_escape", False))
    raise InputError(f"unknown profile model {model!r}")
