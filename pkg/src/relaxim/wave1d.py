"""End-to-end pipeline for the 1D damped wave equation with a cut-off nonlinearity.

    eps u_tt + u_t - u_xx = f(u) + g(x),    x in (0, length),  u = 0 at the ends.

The nonlinearity is cut off outside ``|u| <= 2R`` (``R`` is an a-priori bound
on the attractor supplied by the user), a stationary solution ``G`` of
``-G'' = fbar(G) + g`` is subtracted, and the remaining problem
``eps w_tt + w_t + A w = fbar(w + G) - fbar(G)`` is in the abstract form
handled by :mod:`relaxim.manifold`.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dynamics import EvolveConfig, invariance_check
from .manifold import build_chart, linear_manifold_point, perron_config, tracking_shadow
from .nonlin import (NemytskiiSine1D, NonlinearityError, ScalarFunction, ShiftedCutoff, Zero,
                     smoothstep, smoothstep_d1)
from .spaces import EnergyVector, energy_norm
from .spectrum import Dirichlet1D, EigenvalueSequence, eigenvalues, gap_scan

log = logging.getLogger(__name__)

_GAUSS_POINTS = 64


class EllipticError(RuntimeError):
    def __init__(self, message: str, seeds=()):
        super().__init__(message)
        self.seeds = list(seeds)


# ---------------------------------------------------------------------------
# cut-off

def cutoff_function(f: ScalarFunction, radius: float, width: float) -> ScalarFunction:
    """``fbar`` equal to ``f`` on ``|u| <= radius`` and constant for ``|u| >= radius + width``.

    With ``psi`` the smoothstep from 0 at ``radius`` to 1 at ``radius + width``,

        fbar'(u) = f'(u) (1 - psi(|u|)),

    so the derivative bound of ``f`` on ``|u| <= radius + width`` carries over
    unchanged.  Integrating by parts gives the evaluated form

        fbar(u) = f(u) (1 - psi(|u|)) + int_radius^{|u|} f(sign(u) s) psi'(s) ds.
    """
    if not (radius > 0 and width > 0):
        raise NonlinearityError("cut radius and width must be positive")
    r, w = float(radius), float(width)
    gx, gw = np.polynomial.legendre.leggauss(_GAUSS_POINTS)

    def psi(a):
        return smoothstep((a - r) / w)

    def tail(x):
        a = np.abs(x)
        sgn = np.where(x < 0, -1.0, 1.0)
        top = np.clip(a, r, r + w)
        half = 0.5 * (top - r)
        s = r + half[..., None] * (gx + 1.0)             # nodes on [r, top]
        vals = f.f(sgn[..., None] * s) * smoothstep_d1((s - r) / w) / w
        return half * (vals @ gw)

    plateau = {sgn: float(tail(np.array([sgn * (r + w)]))[0]) for sgn in (-1.0, 1.0)}

    def fbar(x):
        x = np.asarray(x, dtype=float)
        flat = np.atleast_1d(x).ravel()
        out = np.array(f.f(flat), dtype=float)
        a = np.abs(flat)
        band = (a > r) & (a < r + w)
        if band.any():
            xo = flat[band]
            out[band] = f.f(xo) * (1.0 - psi(np.abs(xo))) + tail(xo)
        far = a >= r + w
        if far.any():
            out[far] = np.where(flat[far] < 0, plateau[-1.0], plateau[1.0])
        return out.reshape(x.shape)

    def dfbar(x):
        x = np.asarray(x, dtype=float)
        return f.df(x) * (1.0 - psi(np.abs(x)))

    grid = np.linspace(-(r + w), r + w, 20001)
    sampled = float(np.max(np.abs(dfbar(grid)))) * (1.0 + 1e-6)
    sup = min(f.sup_df, sampled) if math.isfinite(f.sup_df) else sampled
    return ScalarFunction(f"cutoff({f.name})", fbar, dfbar, sup,
                          {"base": f.name, "base_params": f.params, "radius": r, "width": w})


# ---------------------------------------------------------------------------
# elliptic shift

@dataclass
class EllipticResult:
    G: np.ndarray
    residual: float
    method: str
    seed: str
    iterations: int
    history: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {"residual": self.residual, "method": self.method, "seed": self.seed,
                "iterations": self.iterations, "G": self.G.tolist()}


def _sine_transform(modes: int, length: float) -> NemytskiiSine1D:
    # only the sampling/projection matrices are used
    return NemytskiiSine1D(ScalarFunction("id", lambda x: x, lambda x: np.ones(np.shape(x)), 1.0),
                           modes, length)


def solve_elliptic_shift(fbar: ScalarFunction, g, seq: EigenvalueSequence, tol: float = 1e-12,
                         max_iter: int = 50, length: float = math.pi, seed: int = 0,
                         method: str = "auto", fp_max_iter: int = 2000) -> EllipticResult:
    """One solution of ``A G = fbar(G) + g`` on the truncated sine basis.

    ``fbar(G)`` is promoted to coefficients by the midpoint-rule projection of
    the Nemytskii operator.  Newton is tried from the seeds ``0``, ``A^{-1} g``
    and two small random perturbations; if all fail, the fixed-point
    iteration ``G <- A^{-1}(fbar(G) + g)`` is used (a contraction when
    ``sup |fbar'| < lambda_1``).  ``method`` may force ``"newton"`` or
    ``"fixed_point"``.

    Convergence means ``||A G - fbar(G) - g|| <= tol (1 + ||g||)``; the
    scaling keeps the test meaningful for large forcing.
    """
    g = np.asarray(g, dtype=float)
    M = g.shape[0]
    lam = seq.values[:M]
    T = _sine_transform(M, length)

    def resid(G):
        return lam * G - T.P @ fbar.f(T.S @ G) - g

    def rnorm(G):
        return float(np.linalg.norm(resid(G)))

    scale = 1.0 + float(np.linalg.norm(g))
    base = g / lam
    rng = np.random.default_rng(seed)
    pert = 1e-3 * (1.0 + float(np.linalg.norm(base))) * rng.normal(size=M) / math.sqrt(M)
    seeds = [("zero", np.zeros(M)), ("A^-1 g", base), ("+random", base + pert),
             ("-random", base - pert)]
    tried = []
    if method in ("auto", "newton"):
        for name, G in seeds:
            G = G.copy()
            hist = [rnorm(G)]
            for it in range(1, max_iter + 1):
                if hist[-1] <= tol * scale:
                    break
                J = np.diag(lam) - T.P @ (fbar.df(T.S @ G)[:, None] * T.S)
                try:
                    step = np.linalg.solve(J, -resid(G))
                except np.linalg.LinAlgError:
                    break
                # backtracking on the residual norm
                a = 1.0
                while a > 1e-4:
                    trial = G + a * step
                    r = rnorm(trial)
                    if r < hist[-1]:
                        break
                    a *= 0.5
                else:
                    break
                G = trial
                hist.append(r)
            tried.append(name)
            if hist[-1] <= tol * scale:
                return EllipticResult(G, hist[-1], "newton", name, len(hist) - 1, hist)
        if method == "newton":
            raise EllipticError("Newton did not converge from any seed", tried)
    G = np.zeros(M)
    hist = [rnorm(G)]
    steps = []
    for it in range(1, fp_max_iter + 1):
        G_new = (T.P @ fbar.f(T.S @ G) + g) / lam
        steps.append(float(np.linalg.norm(G_new - G)))
        G = G_new
        hist.append(rnorm(G))
        if hist[-1] <= tol * scale:
            return EllipticResult(G, hist[-1], "fixed_point", "zero", it, steps)
    tried.append("fixed_point")
    raise EllipticError(f"elliptic shift did not converge (residual {hist[-1]:.3g})", tried)


def shift_nonlinearity(fbar: ScalarFunction, G, seq: EigenvalueSequence,
                       length: float = math.pi, cut_radius: float = math.inf):
    """``F(u) = fbar(u + G) - fbar(G)``; ``Zero`` when ``fbar`` is constant."""
    G = np.asarray(G, dtype=float)
    if fbar.sup_df == 0.0:
        return Zero(G.shape[0])
    return ShiftedCutoff(fbar, G.shape[0], G, cut_radius, length)


# ---------------------------------------------------------------------------
# pipeline

@dataclass
class WavePipelineConfig:
    f: ScalarFunction
    g: np.ndarray
    R: float
    eps: float
    L: Optional[float] = None
    modes: int = 16
    length: float = math.pi
    spectrum: Optional[EigenvalueSequence] = None
    cut_factor: float = 2.0
    width_fraction: float = 0.1
    newton_tol: float = 1e-12
    newton_max_iter: int = 50
    h: float = 0.01
    chart_radius: float = 1.0
    chart_axis_points: int = 5
    chart_random: int = 4
    t_check: float = 1.0
    method: str = "etdrk4"
    track_count: int = 3
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        self.g = np.asarray(self.g, dtype=float)
        if self.g.shape != (self.modes,):
            g = np.zeros(self.modes)
            g[:min(self.modes, self.g.size)] = self.g.ravel()[:self.modes]
            self.g = g
        if not self.R > 0:
            raise ValueError("a-priori radius R must be positive")
        if self.eps < 0:
            raise ValueError("eps must be nonnegative")

    def sequence(self) -> EigenvalueSequence:
        if self.spectrum is not None:
            return self.spectrum
        return eigenvalues(Dirichlet1D(self.length), self.modes)


@dataclass
class PipelineResult:
    report: dict
    chart: object = None
    trajectories: list = field(default_factory=list)


def run_pipeline(cfg: WavePipelineConfig) -> PipelineResult:
    """Cut-off, elliptic shift, gap scan, chart, invariance and tracking checks.

    An empty gap scan is reported (``verdict = "no_admissible_N"``) rather
    than raised.
    """
    seq = cfg.sequence()
    radius = cfg.cut_factor * cfg.R
    fbar = cutoff_function(cfg.f, radius, cfg.width_fraction * cfg.R)
    ell = solve_elliptic_shift(fbar, cfg.g, seq, cfg.newton_tol, cfg.newton_max_iter,
                               cfg.length, cfg.seed)
    F = shift_nonlinearity(fbar, ell.G, seq, cfg.length, radius)
    L = F.declared_L if cfg.L is None else float(cfg.L)
    if L < F.declared_L:
        raise ValueError(f"L = {L} is below sup |fbar'| = {F.declared_L}")
    L = max(L, 1e-12)
    report = {
        "cutoff": {"radius": radius, "width": cfg.width_fraction * cfg.R, "sup_dfbar": fbar.sup_df},
        "elliptic": ell.as_dict(),
        "nonlinearity": F.describe(),
        "L": L, "eps": cfg.eps,
    }
    scan = gap_scan(seq, L, cfg.eps)
    report["admissible_N"] = [r.N for r in scan]
    if not scan:
        report["verdict"] = "no_admissible_N"
        report["message"] = f"no admissible N at this (L, eps) = ({L:g}, {cfg.eps:g})"
        return PipelineResult(report)
    N = scan[0].N
    pcfg = perron_config(seq, N, cfg.eps, L, h=cfg.h)
    report["N"] = N
    report["gap_report"] = scan[0].as_dict()
    report["perron"] = pcfg.as_dict()
    chart = build_chart(F, pcfg, seq, threads=cfg.threads, axis_points=cfg.chart_axis_points,
                        random_count=cfg.chart_random, radius=cfg.chart_radius, seed=cfg.seed)
    summ = chart.summary()
    report["chart"] = summ
    checks = {
        "boundary_identity": summ["max_boundary_defect"] <= 1e-8,
        "contraction": summ["max_observed_contraction"] <= pcfg.kappa + 0.02,
    }
    if isinstance(F, Zero):
        worst = max(energy_norm(pt.value - linear_manifold_point(pt.p, seq, N, cfg.eps, F.modes),
                                seq) / max(1e-300, float(np.linalg.norm(pt.p)))
                    for pt in chart.points if np.any(pt.p))
        report["linear_closed_form_error"] = worst
        checks["linear_closed_form"] = worst <= 1e-8
    inv = invariance_check(chart, F, EvolveConfig(h=cfg.h, method=cfg.method), seq, cfg.t_check)
    report["invariance"] = {k: v for k, v in inv.as_dict().items() if k != "defects"}
    checks["invariance"] = inv.max_defect <= 1e-5
    rng = np.random.default_rng(cfg.seed)
    n = np.arange(1, F.modes + 1)
    rates, trajectories = [], []
    for _ in range(cfg.track_count):
        xi0 = EnergyVector(rng.normal(size=F.modes) / n ** 1.5, rng.normal(size=F.modes) / n ** 0.5,
                           cfg.eps)
        tr = tracking_shadow(xi0, F, pcfg, seq)
        rates.append(tr.rate)
        trajectories.append(tr)
    report["tracking"] = {"theta": pcfg.theta, "rates": rates,
                          "min_rate_over_theta": min(rates) / pcfg.theta if rates else None}
    checks["tracking"] = all(r >= 0.95 * pcfg.theta for r in rates)
    report["checks"] = checks
    report["verdict"] = "PASS" if all(checks.values()) else "FAIL"
    return PipelineResult(report, chart, trajectories)
