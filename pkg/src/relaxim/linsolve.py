"""Mode-by-mode solvers for ``eps u'' + u' + A u = h`` in exponentially weighted spaces.

All solves are carried out for ``y = e^{theta t} u``, which satisfies

    eps y'' + (1 - 2 eps theta) y' + (lambda_n + theta (eps theta - 1)) y = e^{theta t} h,

with characteristic roots ``sigma^+- = mu^+- + theta``.  A root with positive
real part is integrated backward in time (from zero at the right end of the
window), a root with negative real part forward.  Under the gap conditions
this is exactly "anticausal iff n <= N" for ``sigma^+`` and always causal for
``sigma^-``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import minimize_scalar

from . import _expint
from .spaces import TimeGrid, ValidationError, WeightedSignal, energy_norm, EnergyVector
from .spaces import weighted_l2_norm, weighted_sup_norm
from .spectrum import (EigenvalueSequence, SpectralGapReport, gap_report, projector_coefficients,
                       root_arrays)

# below this |1 - 4 eps lambda| the partial-fraction split is ill-conditioned
_DOUBLE_ROOT_TOL = 1e-6


class LinearSolveError(RuntimeError):
    """Raised when the linear problem is not uniquely solvable in the weighted space."""

    def __init__(self, message: str, report: Optional[SpectralGapReport] = None):
        super().__init__(message)
        self.report = report


# ---------------------------------------------------------------------------
# Fourier symbol

@dataclass(frozen=True)
class SymbolMinReport:
    """``min_mu |R_n(mu)|`` where ``R_n(mu) = -eps mu^2 + i(1 - 2 eps theta) mu + k_n``.

    ``z_star`` is the minimising ``z = mu^2``; ``case_tag`` is ``"I"`` when the
    minimum sits at ``z = 0`` and ``"II"`` at the vertex of the parabola.
    """
    n: int
    case_tag: str
    z_star: float
    min_abs: float
    grid_check: float


def _symbol_quadratic(lam, theta: float, eps: float):
    """Coefficients of ``|R(mu)|^2 = eps^2 z^2 + B z + k^2`` with ``z = mu^2``."""
    lam = np.asarray(lam, dtype=float)
    k = lam + theta * (eps * theta - 1.0)
    B = 1.0 - 2.0 * eps * lam + 2.0 * eps * theta * (eps * theta - 1.0)
    return k, B


def _symbol_min_closed(lam, theta: float, eps: float):
    k, B = _symbol_quadratic(lam, theta, eps)
    case_two = (B < 0) & (eps > 0)
    z = np.where(case_two, -B / (2.0 * eps * eps) if eps > 0 else 0.0, 0.0)
    val2 = k * k - (B * B / (4.0 * eps * eps) if eps > 0 else 0.0)
    vals = np.where(case_two, np.sqrt(np.maximum(val2, 0.0)), np.abs(k))
    return vals, z, case_two


def _symbol_abs(mu, lam: float, theta: float, eps: float):
    mu = np.asarray(mu, dtype=float)
    k = lam + theta * (eps * theta - 1.0)
    return np.abs(-eps * mu * mu + 1j * (1.0 - 2.0 * eps * theta) * mu + k)


def symbol_min(lambda_n: float, theta: float, eps: float, lam_N: float, lam_N1: float,
               n: int = 0) -> SymbolMinReport:
    """Closed-form minimum of the Fourier symbol with an independent grid search.

    ``lam_N`` and ``lam_N1`` only fix the scale of the search window; the
    minimum itself depends on ``lambda_n``, ``theta`` and ``eps``.
    """
    vals, z, case_two = _symbol_min_closed([lambda_n], theta, eps)
    min_abs, z_star, two = float(vals[0]), float(z[0]), bool(case_two[0])
    # |R|^2 is increasing in z beyond the vertex, so a window several vertex
    # widths long brackets the minimum
    mu_max = 2.0 * math.sqrt(max(z_star, 0.0)) + 4.0 * math.sqrt(
        lambda_n + lam_N + lam_N1 + abs(theta)) + 1.0
    mus = np.linspace(0.0, mu_max, 40001)
    vals_grid = _symbol_abs(mus, lambda_n, theta, eps)
    j = int(np.argmin(vals_grid))
    lo, hi = mus[max(j - 1, 0)], mus[min(j + 1, len(mus) - 1)]
    grid_val = float(vals_grid[j])
    if hi > lo:
        res = minimize_scalar(lambda m: float(_symbol_abs(m, lambda_n, theta, eps)),
                              bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-13 * max(1.0, hi)})
        grid_val = min(grid_val, float(res.fun))
    return SymbolMinReport(n, "II" if two else "I", z_star, min_abs, grid_val)


# ---------------------------------------------------------------------------
# weighted per-mode responses

def _check_solvable(seq: EigenvalueSequence, modes: int, N: int, theta: float, eps: float,
                    L: Optional[float]) -> None:
    if not 1 <= N < modes:
        raise ValidationError(f"N={N} must satisfy 1 <= N < mode count {modes}")
    if L is not None:
        rep = gap_report(seq, N, eps, L)
        if not rep.admissible:
            raise LinearSolveError("gap conditions violated: " + ", ".join(rep.reasons), rep)
    lam = seq.values[:modes]
    vals, _, _ = _symbol_min_closed(lam, theta, eps)
    bad = np.flatnonzero(vals <= 1e-12 * (1.0 + lam))
    if bad.size:
        raise LinearSolveError(f"non-resonance violated at mode {bad[0] + 1}: symbol minimum "
                               f"{vals[bad[0]]:.3g}")
    mu_p, _ = root_arrays(lam, eps)
    sig = mu_p.real + theta
    upper = np.arange(1, modes + 1) <= N
    wrong = np.flatnonzero((sig > 0) != upper)
    if wrong.size:
        raise LinearSolveError(
            f"weight theta={theta:.6g} does not separate mode {wrong[0] + 1}: "
            f"need -mu_N^+ < theta < -Re mu_(N+1)^+")


def _weighted_response(g: np.ndarray, h: float, theta: float, eps: float, lam: np.ndarray,
                       N: int, breaks=None) -> tuple[np.ndarray, np.ndarray]:
    """``(y, y')`` for weighted forcing ``g`` of shape ``(modes, K+1)``.

    Zero inflow at both ends: causal factors start from zero at the left end,
    anticausal ones at the right end.
    """
    modes = g.shape[0]
    upper = np.arange(1, modes + 1) <= N
    y = np.zeros(g.shape)
    dy = np.zeros(g.shape)
    if eps == 0:
        sigma = theta - lam
        w = np.zeros(g.shape, dtype=complex)
        if upper.any():
            w[upper] = _expint.anticausal(sigma[upper], g[upper], h, breaks=breaks)
        if (~upper).any():
            w[~upper] = _expint.causal(sigma[~upper], g[~upper], h, breaks=breaks)
        y = w.real
        dy = sigma[:, None] * y + g
        return y, dy

    mu_p, mu_m = root_arrays(lam, eps)
    sp, sm = mu_p + theta, mu_m + theta
    disc = 1.0 - 4.0 * eps * lam
    near = (np.abs(disc) < _DOUBLE_ROOT_TOL) & ~upper
    real = (disc > 0) & ~near
    cplx = (disc < 0) & ~near

    if real.any():
        idx = np.flatnonzero(real)
        wp = np.zeros((idx.size, g.shape[1]), dtype=complex)
        up = upper[idx]
        if up.any():
            wp[up] = _expint.anticausal(sp[idx[up]], g[idx[up]], h, breaks=breaks)
        if (~up).any():
            wp[~up] = _expint.causal(sp[idx[~up]], g[idx[~up]], h, breaks=breaks)
        wm = _expint.causal(sm[idx], g[idx], h, breaks=breaks)
        s = np.sqrt(disc[idx])[:, None]                  # eps (sigma^+ - sigma^-)
        y[idx] = ((wp - wm) / s).real
        dy[idx] = ((sp[idx, None] * wp - sm[idx, None] * wm) / s).real
    if cplx.any():
        # conjugate roots: w^- is the conjugate of w^+, which leaves a single
        # complex recursion (the rotation-decay form of the damped oscillator)
        idx = np.flatnonzero(cplx)
        w = _expint.causal(sp[idx], g[idx], h, breaks=breaks)
        s = np.sqrt(-disc[idx])[:, None]
        y[idx] = 2.0 * w.imag / s
        dy[idx] = 2.0 * (sp[idx, None] * w).imag / s
    if near.any():
        idx = np.flatnonzero(near)
        stiff = lam[idx] + theta * (eps * theta - 1.0)
        damp = np.full(idx.size, 1.0 - 2.0 * eps * theta)
        y[idx], dy[idx] = _expint.oscillator(stiff, damp, eps, g[idx], h, breaks=breaks)
    return y, dy


def _unweight(y: np.ndarray, dy: np.ndarray, t: np.ndarray, theta: float):
    e = np.exp(-theta * t)[None, :]
    return e * y, e * (dy - theta * y)


def _linear_core(coeffs: np.ndarray, grid: TimeGrid, theta: float, eps: float,
                 lam: np.ndarray, N: int, breaks=None) -> tuple[np.ndarray, np.ndarray]:
    """Unweighted ``(u, u')`` of the zero-inflow solve on the grid window."""
    t = grid.nodes
    g = coeffs * np.exp(theta * t)[None, :]
    y, dy = _weighted_response(g, grid.h, theta, eps, lam, N, breaks)
    return _unweight(y, dy, t, theta)


def homogeneous_arrays(p: np.ndarray, t: np.ndarray, eps: float, lam: np.ndarray,
                       modes: int) -> tuple[np.ndarray, np.ndarray]:
    """``(S p)(t)`` and its time derivative as ``(modes, len(t))`` arrays."""
    N = p.shape[0]
    mu_p, _ = root_arrays(lam[:N], eps)
    mu = mu_p.real
    u = np.zeros((modes, t.size))
    u[:N] = p[:, None] * np.exp(mu[:, None] * t[None, :])
    v = np.zeros_like(u)
    v[:N] = mu[:, None] * u[:N]
    return u, v


def _split_p(p, N: int) -> np.ndarray:
    p = np.atleast_1d(np.asarray(p, dtype=float))
    if p.shape[0] > N and np.any(p[N:] != 0):
        raise ValidationError("p must lie in span{e_1..e_N}: nonzero tail components")
    if p.shape[0] < N:
        p = np.concatenate([p, np.zeros(N - p.shape[0])])
    return p[:N].copy()


# ---------------------------------------------------------------------------
# public solvers

@dataclass(frozen=True)
class LinearSolveResult:
    """Output of the weighted linear solves.

    ``norm_ratio`` is ``||L h|| / ||h||`` for the forced part (0 when ``h = 0``);
    ``homogeneous_ratio`` is ``||S p|| / ||p||`` on the semiaxis.
    """
    solution: WeightedSignal
    velocity: WeightedSignal
    residual_norm: float
    boundary_defect: Optional[float]
    norm_ratio: float
    forcing_norm: float
    homogeneous_ratio: Optional[float] = None
    theta: float = 0.0
    eps: float = 0.0
    N: int = 0
    extras: dict = field(default_factory=dict)


def residual_signal(u: np.ndarray, v: np.ndarray, h: np.ndarray, grid: TimeGrid, eps: float,
                    lam: np.ndarray) -> np.ndarray:
    """``eps u'' + u' + A u - h`` with ``u''`` from centred differences of the velocity."""
    if eps > 0:
        acc = np.gradient(v, grid.h, axis=1, edge_order=2)
        return eps * acc + v + lam[:, None] * u - h
    return v + lam[:, None] * u - h


def _ratio(a: float, b: float) -> float:
    return a / b if b > 0 else 0.0


def solve_full_line(h: WeightedSignal, theta: float, eps: float, seq: EigenvalueSequence,
                    N: int, L: Optional[float] = None, breaks=None) -> LinearSolveResult:
    """``u = L h`` on the window of ``h`` with zero inflow at both ends.

    ``L``, when given, is the Lipschitz constant used to check the gap
    conditions before solving.  ``breaks`` lists node indices where ``h`` is
    allowed to have a derivative jump.
    """
    modes = h.mode_count
    _check_solvable(seq, modes, N, theta, eps, L)
    lam = seq.values[:modes]
    u, v = _linear_core(h.coeffs, h.grid, theta, eps, lam, N, breaks)
    sol = WeightedSignal(h.grid, u)
    vel = WeightedSignal(h.grid, v)
    res = WeightedSignal(h.grid, residual_signal(u, v, h.coeffs, h.grid, eps, lam))
    hn = weighted_l2_norm(h, theta, 0.0, seq)
    un = weighted_l2_norm(sol, theta, 0.0, seq)
    return LinearSolveResult(sol, vel, weighted_l2_norm(res, theta, 0.0, seq), None,
                             _ratio(un, hn), hn, None, theta, eps, N)


def homogeneous_backward(p, theta: float, eps: float, seq: EigenvalueSequence, N: int,
                         grid: TimeGrid, modes: Optional[int] = None) -> WeightedSignal:
    """``(S p)(t) = sum_{n<=N} p_n e^{mu_n^+ t} e_n`` on a grid covering ``[-T, 0]``."""
    if grid.t_max != 0.0:
        raise ValidationError("homogeneous_backward needs a grid ending at t = 0")
    modes = seq.count if modes is None else modes
    if N > modes:
        raise ValidationError("N exceeds the mode count")
    pv = _split_p(p, N)
    projector_coefficients(seq, N, eps)          # real roots required for n <= N
    u, _ = homogeneous_arrays(pv, grid.nodes, eps, seq.values, modes)
    return WeightedSignal(grid, u)


def boundary_defect(u0: np.ndarray, v0: np.ndarray, p: np.ndarray, seq: EigenvalueSequence,
                    eps: float) -> float:
    """``|| P^ v(0) + P u(0) - p ||``."""
    N = p.shape[0]
    pc = projector_coefficients(seq, N, eps)
    return float(np.linalg.norm(pc.a * v0[:N] + pc.b * u0[:N] - p))


def semiaxis_arrays(hc: np.ndarray, p: np.ndarray, grid: TimeGrid, theta: float, eps: float,
                    lam: np.ndarray, N: int) -> tuple[np.ndarray, np.ndarray]:
    """Unchecked ``(u, u')`` of ``u = S p + L h`` on ``[-T, 0]``; used by the Perron loop."""
    u, v = _linear_core(hc, grid, theta, eps, lam, N)
    su, sv = homogeneous_arrays(p, grid.nodes, eps, lam, hc.shape[0])
    return u + su, v + sv


def solve_semiaxis(h: WeightedSignal, p, theta: float, eps: float, seq: EigenvalueSequence,
                   N: int, L: Optional[float] = None) -> LinearSolveResult:
    """Backward solution on ``[-T, 0]`` with boundary data ``P^ u'(0) + P u(0) = p``.

    Realised as ``S p + L h`` with ``h`` extended by zero for ``t > 0``: the
    anticausal passes start from zero at ``t = 0``.
    """
    grid = h.grid
    if grid.t_max != 0.0:
        raise ValidationError("solve_semiaxis needs a grid ending at t = 0")
    modes = h.mode_count
    _check_solvable(seq, modes, N, theta, eps, L)
    pv = _split_p(p, N)
    lam = seq.values[:modes]
    fu, fv = _linear_core(h.coeffs, grid, theta, eps, lam, N)
    su, sv = homogeneous_arrays(pv, grid.nodes, eps, lam, modes)
    u, v = fu + su, fv + sv
    sol = WeightedSignal(grid, u)
    res = WeightedSignal(grid, residual_signal(u, v, h.coeffs, grid, eps, lam))
    hn = weighted_l2_norm(h, theta, 0.0, seq)
    fn = weighted_l2_norm(WeightedSignal(grid, fu), theta, 0.0, seq)
    sn = weighted_l2_norm(WeightedSignal(grid, su), theta, 0.0, seq)
    pn = float(np.linalg.norm(pv))
    defect = boundary_defect(u[:, -1], v[:, -1], pv, seq, eps)
    return LinearSolveResult(sol, WeightedSignal(grid, v),
                             weighted_l2_norm(res, theta, 0.0, seq), defect,
                             _ratio(fn, hn), hn, _ratio(sn, pn), theta, eps, N)


# ---------------------------------------------------------------------------
# estimate audits

@dataclass(frozen=True)
class AuditEntry:
    lhs: float
    rhs: float

    @property
    def ratio(self) -> float:
        return self.lhs / self.rhs if self.rhs > 0 else 0.0


@dataclass(frozen=True)
class EstimateAudit:
    """Left- and right-hand sides of the smoothing and phase-space estimates.

    Entries are squared norms, matching the way the estimates are stated.
    """
    entries: dict

    @property
    def ratios(self) -> dict:
        return {k: e.ratio for k, e in self.entries.items()}

    @property
    def finite(self) -> bool:
        return all(math.isfinite(e.lhs) and math.isfinite(e.rhs) for e in self.entries.values())

    def drift(self, other: "EstimateAudit") -> float:
        """Largest relative change of any ratio against another audit."""
        worst = 0.0
        for k, e in self.entries.items():
            a, b = e.ratio, other.entries[k].ratio
            scale = max(abs(a), abs(b))
            if scale > 0:
                worst = max(worst, abs(a - b) / scale)
        return worst


def _l2(c: np.ndarray, grid: TimeGrid, theta: float, s: float, seq) -> float:
    return weighted_l2_norm(WeightedSignal(grid, c), theta, s, seq) ** 2


def _sup(c: np.ndarray, grid: TimeGrid, theta: float, s: float, seq) -> float:
    return weighted_sup_norm(WeightedSignal(grid, c), theta, s, seq) ** 2


def _phase_sup(u: np.ndarray, v: np.ndarray, t: np.ndarray, theta: float, eps: float,
               lam: np.ndarray, shift: int) -> float:
    ls = lam[:, None] ** shift
    dens = eps * ls * v ** 2 + ls / lam[:, None] * v ** 2 + ls * lam[:, None] * u ** 2
    return float(np.max(np.exp(2.0 * theta * t) * dens.sum(axis=0)))


def estimate_audit(result: LinearSolveResult, h: WeightedSignal, p, theta: float, eps: float,
                   seq: EigenvalueSequence, N: int) -> EstimateAudit:
    """Evaluate both sides of the smoothing and boundary-layer estimates.

    Second and third time derivatives are recovered from the equation
    itself (``eps u'' = h - u' - A u`` and its derivative), not by
    differencing the solution.  Constants in these estimates are not known,
    so only the achieved ratios are reported.
    """
    grid = h.grid
    t = grid.nodes
    modes = h.mode_count
    lam = seq.values[:modes]
    pv = _split_p(p, N) if p is not None else np.zeros(N)
    u, v, hc = result.solution.coeffs, result.velocity.coeffs, h.coeffs
    dh = np.gradient(hc, grid.h, axis=1, edge_order=2)
    if eps > 0:
        acc = (hc - v - lam[:, None] * u) / eps
        jerk = (dh - acc - lam[:, None] * v) / eps
    else:
        acc = dh - lam[:, None] * v
        jerk = np.zeros_like(acc)
    p2 = float(pv @ pv)
    h2 = _l2(hc, grid, theta, 0.0, seq)
    dh2 = _l2(dh, grid, theta, 0.0, seq)
    hinf = _sup(hc, grid, theta, -1.0, seq)
    dhinf = _sup(dh, grid, theta, -1.0, seq)
    e = {}
    lhs = (eps * _sup(v, grid, theta, 0.0, seq) + _sup(u, grid, theta, 1.0, seq)
           + _l2(u, grid, theta, 1.0, seq) + _l2(v, grid, theta, 0.0, seq)
           + eps ** 2 * _l2(acc, grid, theta, -1.0, seq))
    e["smoothing"] = AuditEntry(lhs, h2 + p2)
    e["phase"] = AuditEntry(_phase_sup(u, v, t, theta, eps, lam, 0), h2 + hinf + p2)
    lhs_reg = (eps * _sup(acc, grid, theta, 0.0, seq) + _sup(v, grid, theta, 1.0, seq)
               + _l2(v, grid, theta, 1.0, seq) + _l2(u, grid, theta, 2.0, seq)
               + _sup(u, grid, theta, 2.0, seq) + _l2(acc, grid, theta, 0.0, seq)
               + eps ** 2 * _l2(jerk, grid, theta, -1.0, seq))
    e["smoothing_regular"] = AuditEntry(lhs_reg, h2 + dh2 + p2)
    e["phase_regular"] = AuditEntry(_phase_sup(u, v, t, theta, eps, lam, 1), h2 + dh2 + p2)
    e["phase_derivative"] = AuditEntry(_phase_sup(v, acc, t, theta, eps, lam, 0),
                                       h2 + dh2 + dhinf + p2)
    if p2 > 0:
        xi0 = EnergyVector(u[:, -1] if grid.t_max == 0.0 else u[:, grid.index_of(0.0)],
                           v[:, -1] if grid.t_max == 0.0 else v[:, grid.index_of(0.0)], eps)
        e["energy_at_zero"] = AuditEntry(energy_norm(xi0, seq) ** 2, p2)
    return EstimateAudit(e)
