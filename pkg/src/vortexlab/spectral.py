"""Radial Sturm-Liouville eigenproblems on the unit ball.

Assembles the weighted form  ∫ (q'^2 + (mu/r^2) q^2 + V q^2) r^(N-1) dr
against the mass  ∫ q^2 r^(N-1) dr  as a symmetric banded pencil (A, M) and
computes its smallest eigenpairs by inertia bisection plus inverse iteration.
The banded machinery is bandwidth-generic so the coupled stability blocks can
reuse it; here everything is tridiagonal.

Conventions: Dirichlet row at r = 1 always; at r_min the row is kept with a
zero-flux (even-extension) closure when mu = 0 and dropped (Dirichlet) when
mu > 0, since a nonzero angular term forces q(0) = 0.
"""
from __future__ import annotations

import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from .core import (ConvergenceError, InputError, NoThresholdError,
                   BracketError, Potential, RadialGrid, format_float,
                   grid_from_spec, make_grid, _product_weights)
from .profiles import GLProfile, solve_gl_profile, SolverOptions


# ---------------------------------------------------------------------------
# symmetric banded pencil utilities
#
# storage: lower band, shape (b+1, m); band[d, j] = A[j+d, j].


def band_matvec(band: np.ndarray, x: np.ndarray) -> np.ndarray:
    b = band.shape[0] - 1
    y = band[0] * x
    for d in range(1, b + 1):
        y[d:] += band[d, :-d] * x[:-d]
        y[:-d] += band[d, :-d] * x[d:]
    return y


def _abs_matvec(band: np.ndarray, x: np.ndarray) -> np.ndarray:
    return band_matvec(np.abs(band), np.abs(x))


def _band_to_ab(band: np.ndarray) -> np.ndarray:
    """Expand symmetric lower storage to the full (2b+1, m) form used by
    scipy.linalg.solve_banded."""
    b = band.shape[0] - 1
    m = band.shape[1]
    ab = np.zeros((2 * b + 1, m))
    ab[b] = band[0]
    for d in range(1, b + 1):
        ab[b + d, :m - d] = band[d, :m - d]      # subdiagonals
        ab[b - d, d:] = band[d, :m - d]          # superdiagonals
    return ab


def _count_below(Ab: np.ndarray, Mb: np.ndarray, sigma: float) -> int:
    """Eigenvalues of the pencil strictly below sigma (Sylvester inertia of
    A - sigma*M via banded LDL^T).

    Pivots that vanish relative to their own row are clamped to a negative
    per-row floor instead of aborting: that can only miscount when sigma sits
    numerically on an eigenvalue, which bisection tolerates.
    """
    S = Ab - sigma * Mb
    b = S.shape[0] - 1
    m = S.shape[1]
    rowmax = np.abs(S[0]).copy()
    for d in range(1, b + 1):
        rowmax[d:] += np.abs(S[d, :m - d])
        rowmax[:m - d] += np.abs(S[d, :m - d])
    pivmin = 2e-16 * np.maximum(rowmax, 1e-290)
    neg = 0
    if b == 1:
        diag = S[0]
        off = S[1]
        d_prev = diag[0]
        if abs(d_prev) < pivmin[0]:
            d_prev = -pivmin[0]
        if d_prev < 0:
            neg = 1
        for j in range(1, m):
            d = diag[j] - off[j - 1] ** 2 / d_prev
            if abs(d) < pivmin[j]:
                d = -pivmin[j]
            if d < 0:
                neg += 1
            d_prev = d
        return neg
    L = np.zeros((b, m))        # L[d-1, j] = L[j+d, j]
    dpiv = np.zeros(m)
    for j in range(m):
        acc = S[0, j]
        for k in range(max(0, j - b), j):
            acc -= L[j - k - 1, k] ** 2 * dpiv[k]
        if abs(acc) < pivmin[j]:
            acc = -pivmin[j]
        if acc < 0:
            neg += 1
        dpiv[j] = acc
        for i in range(j + 1, min(j + b + 1, m)):
            s = S[i - j, j]
            for k in range(max(0, i - b), j):
                s -= L[i - k - 1, k] * L[j - k - 1, k] * dpiv[k]
            L[i - j - 1, j] = s / acc
    return neg


def _equilibrate(Ab: np.ndarray, Mb: np.ndarray):
    """Symmetric diagonal scaling making M unit-diagonal. A congruence, so
    pencil eigenvalues and inertia are untouched, but the 20 decades of
    r^(N-1) row imbalance on a graded grid disappear."""
    d = 1.0 / np.sqrt(Mb[0])
    b = Ab.shape[0] - 1
    m = Ab.shape[1]
    A2, M2 = Ab.copy(), Mb.copy()
    A2[0] *= d * d
    M2[0] *= d * d
    for k in range(1, b + 1):
        A2[k, :m - k] *= d[k:] * d[:m - k]
        M2[k, :m - k] *= d[k:] * d[:m - k]
    return A2, M2, d


def pencil_smallest(Ab: np.ndarray, Mb: np.ndarray, which: int = 0,
                    tol: float = 1e-9) -> tuple[float, np.ndarray, float, list]:
    """Smallest (or `which`-th) eigenpair of the symmetric banded pencil
    A q = lambda M q with M positive definite.

    Inertia bisection brackets the eigenvalue, inverse iteration with a
    Rayleigh-quotient polish delivers the vector. Returns (eigenvalue,
    vector, residual, bracket trace). Shared by the radial operators here
    and the coupled stability blocks.
    """
    if np.any(Mb[0] <= 0):
        raise InputError("mass diagonal must be positive")
    Ab, Mb, dscale = _equilibrate(Ab, Mb)
    m = Ab.shape[1]
    band = Ab.shape[0] - 1
    trace: list = []

    x = np.ones(m)
    x /= math.sqrt(band_matvec(Mb, x) @ x)
    hi = float(band_matvec(Ab, x) @ x)     # Rayleigh quotient upper bound
    width = max(1.0, 0.1 * abs(hi))
    lo = hi - width
    while _count_below(Ab, Mb, lo) > which:
        width *= 4.0
        lo -= width
        trace.append(("expand", lo))
        if width > 1e18:
            raise ConvergenceError("failed to bracket the eigenvalue from "
                                   "below", trace)
    while _count_below(Ab, Mb, hi) < which + 1:
        hi += max(1.0, abs(hi))
        trace.append(("raise", hi))
        if hi > 1e18:
            raise ConvergenceError("failed to bracket the eigenvalue from "
                                   "above", trace)

    # bisect until the bracket isolates exactly the target eigenvalue and is
    # tight enough for inverse iteration to converge in a couple of sweeps
    target_width = 1e-6 * (1.0 + abs(hi))
    for _ in range(200):
        if (hi - lo < target_width
                and _count_below(Ab, Mb, lo) == which
                and _count_below(Ab, Mb, hi) == which + 1):
            break
        mid = 0.5 * (lo + hi)
        c = _count_below(Ab, Mb, mid)
        trace.append((lo, hi, c))
        if c > which:
            hi = mid
        else:
            lo = mid
        if hi - lo < 1e-15 * (1.0 + abs(hi)):
            break
    sigma = 0.5 * (lo + hi)

    lam = sigma
    resid = math.inf
    for _ in range(8):
        ab = _band_to_ab(Ab - sigma * Mb)
        try:
            for _ in range(3):
                y = solve_banded((band, band), ab, band_matvec(Mb, x))
                nrm = math.sqrt(abs(band_matvec(Mb, y) @ y))
                if not np.isfinite(nrm) or nrm == 0.0:
                    raise np.linalg.LinAlgError("inverse iteration overflow")
                x = y / nrm
        except (np.linalg.LinAlgError, ValueError):
            sigma += (hi - lo) * 1e-3 + abs(sigma) * 1e-13
            trace.append(("shift-jitter", sigma))
            continue
        lam = float(band_matvec(Ab, x) @ x)            # x is M-normalized
        r = band_matvec(Ab, x) - lam * band_matvec(Mb, x)
        # normwise backward error: immune to the huge row-scale spread and
        # meaningful even when lam sits near zero
        denom = np.linalg.norm(_abs_matvec(Ab, x) + abs(lam) * _abs_matvec(Mb, x))
        resid = float(np.linalg.norm(r)) / max(denom, 1e-300)
        if resid < tol:
            break
        sigma = lam
    if resid >= tol:
        raise ConvergenceError(
            f"inverse iteration stalled (backward error {resid:.3e})", trace)
    return lam, x * dscale, resid, trace


# ---------------------------------------------------------------------------
# radial operator assembly


@dataclass(frozen=True)
class SLOperator:
    """Discrete radial Sturm-Liouville pencil on (0, 1]."""
    grid: RadialGrid
    N: int
    mu: float
    V: np.ndarray          # node samples, full grid
    A: np.ndarray          # stiffness + zero-order terms, lower band (2, m)
    M: np.ndarray          # consistent P1 mass, lower band (2, m)
    start: int             # first active node index (0 if mu == 0 else 1)

    @property
    def size(self) -> int:
        return self.A.shape[1]

    def embed(self, x: np.ndarray) -> np.ndarray:
        """Active-node vector -> full-grid vector with Dirichlet zeros."""
        q = np.zeros(self.grid.n)
        q[self.start:self.start + self.size] = x
        return q


def assemble_radial_operator(N: int, grid: RadialGrid, mu: float,
                             V) -> SLOperator:
    """Banded pencil for ∫(q'^2 + (mu/r^2) q^2 + V q^2) r^(N-1) dr vs the
    r^(N-1)-weighted mass.

    Stiffness is the flux form with face coefficients mid^(N-1)/h; the
    zero-order terms and the mass are consistent piecewise-linear matrices
    with exact radial moments (so the mu/r^2 weight needs no sampling near
    the origin, and a constant added to V shifts the discrete spectrum by
    exactly that constant). Consistent mass keeps the benchmark eigenvalues
    an order of magnitude tighter than lumping.
    """
    if grid.N != N:
        raise InputError("grid dimension does not match N")
    if mu < 0:
        raise InputError("mu must be nonnegative")
    if np.isscalar(V) or np.ndim(V) == 0:
        V = np.full(grid.n, float(V))
    V = np.asarray(V, dtype=float)
    if V.shape != grid.nodes.shape:
        raise InputError("V must be sampled on the grid nodes")
    if not np.all(np.isfinite(V)):
        raise InputError("V must be bounded on the nodes")

    n = grid.n
    start = 0 if mu == 0 else 1
    m = n - 1 - start
    if m < 2:
        raise InputError("grid too small for the eigenproblem")

    r = grid.nodes
    h = grid.h
    mids = 0.5 * (r[:-1] + r[1:])
    c = mids ** (N - 1) / h                     # face flux coefficients

    diag = np.zeros(m)
    off = np.zeros(m - 1)
    for k in range(m):
        j = start + k
        diag[k] = c[j]                          # face to the right
        if j > 0:
            diag[k] += c[j - 1]                 # face to the left
        # j == 0 (mu == 0): zero-flux closure across the origin segment
    off[:] = -c[start:start + m - 1]

    vd, vo = grid.p1_weighted_mass(V, 0)
    diag += vd[start:start + m]
    off += vo[start:start + m - 1]
    if mu > 0:
        cd, co = grid.p1_mass(-2)
        diag += mu * cd[start:start + m]
        off += mu * co[start:start + m - 1]

    p1d, p1o = grid.p1_mass(0)
    Md = p1d[start:start + m]
    Mo = p1o[start:start + m - 1]

    A = np.zeros((2, m))
    A[0] = diag
    A[1, :m - 1] = off
    M = np.zeros((2, m))
    M[0] = Md
    M[1, :m - 1] = Mo
    A.setflags(write=False)
    M.setflags(write=False)
    return SLOperator(grid=grid, N=N, mu=float(mu), V=V, A=A, M=M,
                      start=start)


@dataclass(frozen=True)
class EigenPair:
    """Eigenvalue with its node-sampled eigenfunction.

    q spans the full grid (Dirichlet zeros included), is normalized to
    ∫ q^2 r^(N-1) dr = 1 and sign-normalized positive near r_min. `residual`
    is the normwise backward error of the generalized eigen-residual on the
    assembled pencil.
    """
    eigenvalue: float
    q: np.ndarray
    grid: RadialGrid
    mu: float
    residual: float

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("r,q\n")
        for rr, qq in zip(self.grid.nodes, self.q):
            buf.write(f"{format_float(rr)},{format_float(qq)}\n")
        return buf.getvalue()


def smallest_eigenpair(op: SLOperator, which: int = 0) -> EigenPair:
    """Smallest (or next, which=1, for gap diagnostics) eigenpair of the
    assembled pencil via inertia bisection + inverse iteration."""
    if which not in (0, 1):
        raise InputError("only the smallest and second eigenpairs are "
                         "supported")
    lam, x, resid, trace = pencil_smallest(op.A, op.M, which=which)
    q = op.embed(x)
    nrm = math.sqrt(op.grid.quadrature(q * q))
    q = q / nrm
    first = q[op.start]
    if first < 0:
        q = -q
    if which == 0:
        interior = q[op.start:op.grid.n - 1]
        tiny = 1e-10 * float(np.max(np.abs(interior)))
        if np.any(interior < -tiny):
            raise ConvergenceError(
                "smallest mode came back with a sign change", trace)
    q.setflags(write=False)
    return EigenPair(eigenvalue=lam, q=q, grid=op.grid, mu=op.mu,
                     residual=resid)


# ---------------------------------------------------------------------------
# vortex linearization


def gl_linearization_eigenvalue(N: int, W, eps: float, grid: RadialGrid,
                                opts: SolverOptions = SolverOptions()
                                ) -> tuple[float, EigenPair, GLProfile]:
    """Smallest eigenvalue of the amplitude linearization around the vortex
    profile: potential V(r) = -W'(1 - f(r)^2)/eps^2, no angular term.

    The sign of (eigenvalue + transverse-well slope/eta^2) is what decides
    whether the symmetric branch can shed energy by escaping, so this value
    feeds both the phase diagram and the stability verdicts.
    """
    W = Potential.from_spec(W)
    profile = solve_gl_profile(N, W, eps, grid, opts)
    X = 1.0 - profile.f ** 2
    V = -W.eval(X, 1) / eps ** 2
    op = assemble_radial_operator(N, grid, 0.0, V)
    pair = smallest_eigenpair(op)
    lam = pair.eigenvalue
    lower = -W.eval(1.0, 1) / eps ** 2
    if lam <= lower - 1e-9 * (1.0 + abs(lower)):
        raise ConvergenceError(
            f"linearization eigenvalue {lam} under its lower bound {lower}",
            [("eps", eps)])
    return lam, pair, profile


def _halve_rmin(grid: RadialGrid) -> RadialGrid:
    nodes = np.concatenate(([0.5 * grid.r_min], grid.nodes))
    return RadialGrid(N=grid.N, nodes=nodes,
                      weights=_product_weights(nodes, grid.N - 1),
                      grading=dict(grid.grading))


def find_epsilon0(N: int, W, bracket: tuple[float, float], tol: float = 1e-8,
                  grid: RadialGrid | None = None,
                  opts: SolverOptions = SolverOptions()) -> float:
    """Coupling threshold: the eps at which the linearization eigenvalue
    crosses zero (negative below, positive above).

    Guarded regula-falsi in eps on the eigenvalue, valid because
    eps^2 * eigenvalue is strictly increasing. The result is accepted only if
    halving r_min moves the eigenvalue by under tol/10, confirming the
    zero-flux origin closure is not polluting the answer.
    """
    W = Potential.from_spec(W)
    if not isinstance(N, (int, np.integer)) or N < 2:
        raise InputError("N must be an integer >= 2")
    if N >= 7:
        raise NoThresholdError(
            "no threshold: for N >= 7 the linearization eigenvalue stays "
            "positive at every eps")
    if W.eval(1.0, 1) <= 0.0:
        raise NoThresholdError(
            "no threshold: the well has zero slope at full depletion, so the "
            "linearization eigenvalue never turns negative")
    lo, hi = float(bracket[0]), float(bracket[1])
    if not (0 < lo < hi):
        raise InputError("bracket must satisfy 0 < lo < hi")
    if tol <= 0:
        raise InputError("tol must be positive")
    if grid is None:
        grid = make_grid(N, 2000, {"graded": 2.0})

    def ell(e, g=grid):
        return gl_linearization_eigenvalue(N, W, e, g, opts)[0]

    flo, fhi = ell(lo), ell(hi)
    if not (flo < 0.0 < fhi):
        raise BracketError(
            f"bracket does not straddle the threshold: "
            f"eigenvalue({lo}) = {flo:.6g}, eigenvalue({hi}) = {fhi:.6g}")

    # Illinois variant: never leaves the bracket, superlinear once close
    e_mid, f_mid = lo, flo
    side = 0
    for _ in range(200):
        e_mid = (lo * fhi - hi * flo) / (fhi - flo)
        if not (lo < e_mid < hi):
            e_mid = 0.5 * (lo + hi)
        f_mid = ell(e_mid)
        if abs(f_mid) < tol:
            break
        if f_mid < 0:
            lo, flo = e_mid, f_mid
            if side == -1:
                fhi *= 0.5
            side = -1
        else:
            hi, fhi = e_mid, f_mid
            if side == 1:
                flo *= 0.5
            side = 1
    else:
        raise ConvergenceError(
            f"threshold search stalled at eigenvalue {f_mid:.3e}",
            [("bracket", (lo, hi))])

    shifted = ell(e_mid, _halve_rmin(grid))
    if abs(shifted - f_mid) > 0.1 * tol:
        raise ConvergenceError(
            "threshold rejected: halving r_min moved the eigenvalue by "
            f"{abs(shifted - f_mid):.3e} (limit {0.1 * tol:.1e}); refine the "
            "grid near the origin", [("eps", e_mid)])
    return float(e_mid)


# ---------------------------------------------------------------------------
# sweeps and export


def _sweep_worker(args):
    N, wspec, eps, gridspec = args
    g = grid_from_spec(N, gridspec)
    val, _, _ = gl_linearization_eigenvalue(N, Potential.from_spec(wspec),
                                            eps, g)
    return val

def linearization_eigenvalue_sweep(N: int, W, eps_values,
                                   grid: RadialGrid | None = None,
                                   jobs: int = 1) -> list[tuple[float, float]]:
    """(eps, eigenvalue) rows across eps values; columns are independent so
    they parallelize across processes when jobs > 1."""
    W = Potential.from_spec(W)
    if grid is None:
        grid = make_grid(N, 2000, {"graded": 2.0})
    eps_values = [float(e) for e in eps_values]
    if jobs > 1:
        payload = [(N, W.spec(), e, grid.spec()) for e in eps_values]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            vals = list(pool.map(_sweep_worker, payload))
    else:
        vals = [gl_linearization_eigenvalue(N, W, e, grid)[0]
                for e in eps_values]
    return list(zip(eps_values, vals))


def sweep_to_csv(rows) -> str:
    buf = io.StringIO()
    buf.write("eps,eigenvalue,eps2_eigenvalue\n")
    for eps, val in rows:
        buf.write(f"{format_float(eps)},{format_float(val)},"
                  f"{format_float(eps * eps * val)}\n")
    return buf.getvalue()
