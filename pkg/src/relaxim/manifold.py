"""Backward-solution (Perron) construction of the inertial manifold.

A point ``M(p)`` is obtained from the backward solution ``U(p)`` on
``(-inf, 0]`` that lies in the weighted space ``L^2_{e^{theta t}}`` and whose
boundary data satisfy ``P^ U'(0) + P U(0) = p``.  ``U(p)`` is the fixed point of
``u -> S p + L F(u)``, a contraction with factor ``2L/(lambda_{N+1} - lambda_N)``
under the gap conditions.  The half-line is truncated to ``[-T, 0]`` with
``T`` large enough that the weights and boundary layers are below round-off.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .dynamics import integrate
from .linsolve import _linear_core, homogeneous_arrays, residual_signal, semiaxis_arrays
from .nonlin import NonlinearityModel, smoothstep, smoothstep_d1, smoothstep_d2
from .spaces import (EnergyVector, TimeGrid, ValidationError, WeightedSignal, default_window,
                     energy1_norm, energy_norm, energy_norm_series, weighted_l2_norm)
from .spectrum import (EigenvalueSequence, SpectralGapReport, gap_report, projector_coefficients,
                       root_arrays)

log = logging.getLogger(__name__)


class ManifoldError(RuntimeError):
    """Refused or failed construction.

    ``refused`` marks violated preconditions (gap conditions, contraction
    factor, Lipschitz constant); otherwise the fixed-point iteration failed
    and ``history`` holds its increments.
    """

    def __init__(self, message: str, history: Sequence[float] = (),
                 report: Optional[SpectralGapReport] = None, refused: bool = False):
        super().__init__(message)
        self.history = list(history)
        self.report = report
        self.refused = refused


@dataclass(frozen=True)
class PerronConfig:
    N: int
    eps: float
    theta: float
    L: float
    kappa: float
    T: float
    h: float
    fp_max_iter: int = 200
    fp_rel_tol: float = 1e-10
    track_T_minus: float = 0.0
    track_T_plus: float = 0.0
    margin: float = 0.0

    def __post_init__(self):
        if not self.kappa < 1:
            raise ManifoldError(f"contraction factor {self.kappa:.4g} >= 1: refusing to iterate",
                                refused=True)
        if not self.fp_rel_tol > 0:
            raise ValidationError("fp tolerance must be positive")
        if not (self.h > 0 and self.T > 0):
            raise ValidationError("window and step must be positive")

    @property
    def steps(self) -> int:
        return max(1, int(round(self.T / self.h)))

    @property
    def grid(self) -> TimeGrid:
        return TimeGrid(-self.steps * self.h, 0.0, self.steps)

    def fp_tol(self, p) -> float:
        """``fp_rel_tol * (1 + ||p||)``."""
        return self.fp_rel_tol * (1.0 + float(np.linalg.norm(p)))

    def as_dict(self) -> dict:
        return {"N": self.N, "eps": self.eps, "theta": self.theta, "L": self.L,
                "kappa": self.kappa, "T": self.T, "h": self.h, "steps": self.steps,
                "fp_max_iter": self.fp_max_iter, "fp_rel_tol": self.fp_rel_tol,
                "track_T_minus": self.track_T_minus, "track_T_plus": self.track_T_plus,
                "margin": self.margin}


def weight_margin(seq: EigenvalueSequence, N: int, eps: float, theta: float) -> float:
    """Distance of ``theta`` to the weighted roots: ``min(theta + mu_N^+, -(theta + Re mu_{N+1}^+))``."""
    mp, _ = root_arrays(seq.values[N - 1:N + 1], eps)
    return float(min(theta + mp[0].real, -(theta + mp[1].real)))


def perron_config(seq: EigenvalueSequence, N: int, eps: float, L: float, h: float = 0.01,
                  T: Optional[float] = None, fp_max_iter: int = 200,
                  fp_rel_tol: float = 1e-10, track_T_plus: Optional[float] = None) -> PerronConfig:
    """Validate the gap conditions for ``(N, eps, L)`` and choose the windows.

    The step is adjusted so that ``1/h`` is an integer, which puts ``t = 0`` and
    ``t = 1`` on the tracking grid.
    """
    rep = gap_report(seq, N, eps, L)
    if not rep.admissible:
        raise ManifoldError("gap conditions violated: " + ", ".join(rep.reasons), report=rep,
                            refused=True)
    theta = rep.theta
    margin = weight_margin(seq, N, eps, theta)
    h = 1.0 / max(1, round(1.0 / h))
    T = default_window(theta, margin) if T is None else float(T)
    if track_T_plus is None:
        track_T_plus = 1.0 + 5.0 / margin + 20.0 / theta
    return PerronConfig(N, eps, theta, L, rep.contraction, T, h, fp_max_iter, fp_rel_tol,
                        T, float(track_T_plus), margin)


# ---------------------------------------------------------------------------
# single points

@dataclass
class ManifoldPoint:
    """``M(p)`` with the backward trajectory and fixed-point diagnostics."""
    p: np.ndarray
    trajectory: WeightedSignal
    velocity: WeightedSignal
    value: EnergyVector
    iterations: int
    contraction: float
    residual: float
    energy1_ratio: float
    boundary_defect: float
    history: list = field(default_factory=list)

    def diagnostics(self) -> dict:
        return {"iterations": self.iterations, "contraction": self.contraction,
                "residual": self.residual, "energy1_ratio": self.energy1_ratio,
                "boundary_defect": self.boundary_defect}


def _observed_contraction(history: Sequence[float], floor: float) -> float:
    """Largest ratio of successive increments, ignoring increments at the noise level."""
    ratios = [b / a for a, b in zip(history[:-1], history[1:]) if a > floor and b > floor]
    return max(ratios) if ratios else 0.0


def _stagnated(history: Sequence[float], kappa: float, drop: float = 1e-4,
               window: int = 3) -> bool:
    """Increments that fell by ``drop`` and then stopped contracting: round-off is reached.

    On long forward windows the weight ``e^{theta t}`` amplifies rounding in
    the forcing, so the weighted increment levels off (or cycles) above
    ``fp_tol``.  A genuine contraction shrinks increments by at most
    ``kappa`` per step, so ``window`` consecutive ratios above
    ``(1 + kappa) / 2`` after a drop by ``drop`` signal the noise floor.
    """
    if len(history) <= window or history[-1] >= drop * history[0]:
        return False
    tail = history[-window - 1:]
    slow = 0.5 * (1.0 + kappa)
    return all(b > slow * a for a, b in zip(tail[:-1], tail[1:]))


def _check_model(F: NonlinearityModel, cfg: PerronConfig, seq: EigenvalueSequence) -> None:
    F.check_basis(seq)
    if F.modes > seq.count:
        raise ValidationError(f"F acts on {F.modes} modes but only {seq.count} eigenvalues given")
    if F.modes <= cfg.N:
        raise ValidationError("F must retain more than N modes")
    if F.declared_L > cfg.L * (1.0 + 1e-12):
        raise ManifoldError(f"declared Lipschitz constant {F.declared_L:.4g} exceeds the "
                            f"configured L = {cfg.L:.4g}", refused=True)


def construct_point(p, F: NonlinearityModel, cfg: PerronConfig, seq: EigenvalueSequence,
                    u_init=None) -> ManifoldPoint:
    """Solve ``u = S p + L F(u)`` on ``[-T, 0]`` and return ``M(p) = (u(0), u'(0))``.

    Parameters
    ----------
    p : array_like
        Base point in ``span{e_1..e_N}`` (length ``N``, or longer with a zero tail).
    u_init : {None, "zero"} or ndarray, optional
        Starting guess; the default is the homogeneous solution ``S p``.
    """
    _check_model(F, cfg, seq)
    p = np.atleast_1d(np.asarray(p, dtype=float))
    if p.shape[0] > cfg.N:
        if np.any(p[cfg.N:] != 0):
            raise ValidationError("p must lie in span{e_1..e_N}")
        p = p[:cfg.N]
    elif p.shape[0] < cfg.N:
        p = np.concatenate([p, np.zeros(cfg.N - p.shape[0])])
    M = F.modes
    lam = seq.values[:M]
    grid = cfg.grid
    t = grid.nodes
    su, sv = homogeneous_arrays(p, t, cfg.eps, lam, M)
    if u_init is None:
        u = su
    elif isinstance(u_init, str) and u_init == "zero":
        u = np.zeros_like(su)
    else:
        u = np.asarray(u_init, dtype=float)
        if u.shape != su.shape:
            raise ValidationError(f"u_init must have shape {su.shape}")

    def wnorm(c):
        return weighted_l2_norm(WeightedSignal(grid, c), cfg.theta, 0.0, seq)

    tol = cfg.fp_tol(p)
    history: list[float] = []
    v = sv
    for it in range(1, cfg.fp_max_iter + 1):
        u_new, v = semiaxis_arrays(F(u), p, grid, cfg.theta, cfg.eps, lam, cfg.N)
        inc = wnorm(u_new - u)
        history.append(inc)
        u = u_new
        if not math.isfinite(inc):
            raise ManifoldError("fixed-point iteration produced non-finite values", history)
        if inc < tol:
            break
    else:
        raise ManifoldError(f"no convergence in {cfg.fp_max_iter} iterations "
                            f"(last increment {history[-1]:.3g}, tol {tol:.3g})", history)
    value = EnergyVector(u[:, -1], v[:, -1], cfg.eps)
    Fu = F(u)
    res = wnorm(residual_signal(u, v, Fu, grid, cfg.eps, lam))
    scale = wnorm(Fu) + wnorm(u) + float(np.linalg.norm(p))
    pc = projector_coefficients(seq, cfg.N, cfg.eps)
    defect = float(np.linalg.norm(pc.a * value.v[:cfg.N] + pc.b * value.u[:cfg.N] - p))
    pn = float(np.linalg.norm(p))
    e1 = energy1_norm(value, seq) / pn if pn > 0 else 0.0
    floor = max(1e-3 * tol, 1e-13 * (1.0 + wnorm(u)))
    return ManifoldPoint(p, WeightedSignal(grid, u), WeightedSignal(grid, v), value, len(history),
                         _observed_contraction(history, floor),
                         res / scale if scale > 0 else 0.0, e1, defect, history)


def linear_manifold_point(p, seq: EigenvalueSequence, N: int, eps: float,
                          modes: int) -> EnergyVector:
    """Closed form ``(p, sum mu_n^+ p_n e_n)`` of the manifold for ``F = 0``."""
    p = np.atleast_1d(np.asarray(p, dtype=float))[:N]
    mp, _ = root_arrays(seq.values[:N], eps)
    u = np.zeros(modes)
    v = np.zeros(modes)
    u[:N] = p
    v[:N] = mp.real * p
    return EnergyVector(u, v, eps)


# ---------------------------------------------------------------------------
# charts

def graph_split(xi: EnergyVector, seq: EigenvalueSequence, N: int,
                eps: float) -> tuple[EnergyVector, EnergyVector]:
    """Split ``xi`` along ``H_N^+`` (the ``mu^+`` lines of the first ``N`` modes) and ``H_N^-``.

    The first part is ``(p, mu^+ p)`` with ``p = P^ v + P u``; the second part
    is the remainder, which has zero ``p``-coordinates because
    ``a mu^- + b = 0``.
    """
    pc = projector_coefficients(seq, N, eps)
    p = pc.a * xi.v[:N] + pc.b * xi.u[:N]
    plus = linear_manifold_point(p, seq, N, eps, xi.u.shape[0])
    plus = EnergyVector(plus.u, plus.v, xi.eps)
    return plus, xi - plus


@dataclass
class ManifoldChart:
    """Sampled points of the manifold with their graph data over ``H_N^+``."""
    config: PerronConfig
    points: list
    model: dict

    @property
    def samples(self) -> np.ndarray:
        return np.array([pt.p for pt in self.points])

    def graph(self, seq: EigenvalueSequence) -> list[EnergyVector]:
        """``H_N^-`` components of every point: the graph function evaluated at ``p``."""
        return [graph_split(pt.value, seq, self.config.N, self.config.eps)[1]
                for pt in self.points]

    def to_csv(self, path) -> None:
        if not self.points:
            raise ValidationError("empty chart")
        N = self.config.N
        M = self.points[0].value.u.shape[0]
        keys = list(self.points[0].diagnostics())
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([f"p_{i + 1}" for i in range(N)] + [f"u_{i + 1}" for i in range(M)]
                       + [f"v_{i + 1}" for i in range(M)] + keys)
            for pt in self.points:
                d = pt.diagnostics()
                w.writerow([repr(float(x)) for x in pt.p] + [repr(float(x)) for x in pt.value.u]
                           + [repr(float(x)) for x in pt.value.v] + [repr(d[k]) for k in keys])

    def summary(self) -> dict:
        c = [pt.contraction for pt in self.points]
        return {"points": len(self.points), "kappa": self.config.kappa,
                "max_observed_contraction": max(c) if c else 0.0,
                "max_iterations": max(pt.iterations for pt in self.points),
                "max_boundary_defect": max(pt.boundary_defect for pt in self.points),
                "max_residual": max(pt.residual for pt in self.points)}


def chart_samples(N: int, axis_points: int = 5, random_count: int = 8, radius: float = 1.0,
                  seed: int = 0) -> np.ndarray:
    """Axis-aligned grid (including the origin once) followed by random points in the ball."""
    pts = [np.zeros(N)]
    vals = np.linspace(-radius, radius, axis_points)
    for i in range(N):
        for x in vals:
            if x != 0:
                q = np.zeros(N)
                q[i] = x
                pts.append(q)
    rng = np.random.default_rng(seed)
    for _ in range(random_count):
        d = rng.normal(size=N)
        d /= np.linalg.norm(d)
        pts.append(radius * rng.uniform() ** (1.0 / N) * d)
    return np.array(pts)


def chart_key(cfg: PerronConfig, F: NonlinearityModel, samples: np.ndarray) -> str:
    blob = json.dumps({"cfg": cfg.as_dict(), "F": F.describe(),
                       "samples": np.round(samples, 15).tolist()}, sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _map_points(samples, F, cfg, seq, threads: int):
    if threads > 1 and len(samples) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(lambda q: construct_point(q, F, cfg, seq), samples))
    return [construct_point(q, F, cfg, seq) for q in samples]


def build_chart(F: NonlinearityModel, cfg: PerronConfig, seq: EigenvalueSequence,
                samples: Optional[np.ndarray] = None, threads: int = 1,
                cache_dir=None, **sample_kw) -> ManifoldChart:
    """Construct ``M(p)`` at every sample; results keep the sample order.

    With ``cache_dir`` the samples and boundary values ``M(p)`` are also
    written to ``chart-<key>.npz``, where the key hashes the configuration,
    model and samples (see :func:`load_chart_values`).  The cache is write-only:
    every call recomputes the points, so diagnostics are always fresh.
    """
    if samples is None:
        samples = chart_samples(cfg.N, **sample_kw)
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    points = _map_points(samples, F, cfg, seq, threads)
    chart = ManifoldChart(cfg, points, F.describe())
    if cache_dir is not None:
        path = Path(cache_dir) / f"chart-{chart_key(cfg, F, samples)}.npz"
        path.parent.mkdir(parents=True, exist_ok=True)
        np.savez(path, p=samples, u=np.array([pt.value.u for pt in points]),
                 v=np.array([pt.value.v for pt in points]))
    return chart


def load_chart_values(path) -> dict:
    with np.load(path) as data:
        return {k: data[k] for k in data.files}


@dataclass(frozen=True)
class LipschitzReport:
    max_ratio: float
    ratios: list
    pairs: list

    def as_dict(self) -> dict:
        return {"max_ratio": self.max_ratio, "pairs": len(self.pairs),
                "median_ratio": float(np.median(self.ratios)) if self.ratios else 0.0}


def lipschitz_of_M(F: NonlinearityModel, cfg: PerronConfig, seq: EigenvalueSequence,
                   samples: Optional[np.ndarray] = None, count: int = 12, radius: float = 1.0,
                   seed: int = 0, threads: int = 1,
                   points: Optional[list] = None) -> LipschitzReport:
    """``max ||M(p_1) - M(p_2)||_E / ||p_1 - p_2||`` over all pairs of samples.

    Samples default to ``count`` random points in the ball of ``radius``
    together with close neighbours of half of them, so that both global and
    local slopes are probed.
    """
    if points is None:
        if samples is None:
            rng = np.random.default_rng(seed)
            base = rng.uniform(-radius, radius, size=(count, cfg.N))
            near = base[: count // 2] + 1e-2 * radius * rng.normal(size=(count // 2, cfg.N))
            samples = np.vstack([base, near])
        points = _map_points(np.atleast_2d(samples), F, cfg, seq, threads)
    ratios, pairs = [], []
    for i in range(len(points)):
        for j in range(i + 1, len(points)):
            dp = float(np.linalg.norm(points[i].p - points[j].p))
            if dp == 0:
                continue
            ratios.append(energy_norm(points[i].value - points[j].value, seq) / dp)
            pairs.append((i, j))
    return LipschitzReport(max(ratios) if ratios else 0.0, ratios, pairs)


# ---------------------------------------------------------------------------
# dependence on eps

@dataclass(frozen=True)
class EpsilonComparison:
    eps: list
    distances: list
    slope: float
    skipped: list

    def as_dict(self) -> dict:
        return {"eps": self.eps, "distances": self.distances, "slope": self.slope,
                "skipped": self.skipped}


def compare_epsilon(p, F: NonlinearityModel, eps_list: Sequence[float], seq: EigenvalueSequence,
                    N: int, L: float, h: float = 0.01) -> EpsilonComparison:
    """``d(eps) = ||M_eps(p) - M_0(p)||_{E_eps}`` and the log-log slope of ``d``.

    ``eps = 0`` is always included as the reference; values failing the gap
    conditions for the common ``N`` are skipped with a warning.
    """
    ref_cfg = perron_config(seq, N, 0.0, L, h=h)
    ref = construct_point(p, F, ref_cfg, seq).value
    eps_out, dist, skipped = [], [], []
    for eps in sorted({float(e) for e in eps_list if e > 0}, reverse=True):
        try:
            cfg = perron_config(seq, N, eps, L, h=h)
        except ManifoldError as exc:
            log.warning("skipping eps=%g: %s", eps, exc)
            skipped.append(eps)
            continue
        val = construct_point(p, F, cfg, seq).value
        eps_out.append(eps)
        dist.append(energy_norm(val - ref.with_eps(eps), seq))
    slope = math.nan
    good = [(e, d) for e, d in zip(eps_out, dist) if d > 0]
    if len(good) >= 2:
        x = np.log([e for e, _ in good])
        y = np.log([d for _, d in good])
        slope = float(np.polyfit(x, y, 1)[0])
    return EpsilonComparison(eps_out, dist, slope, skipped)


# ---------------------------------------------------------------------------
# exponential tracking

@dataclass
class TrackingReport:
    shadow: EnergyVector
    rate: float
    t: np.ndarray
    distance: np.ndarray
    fit_window: tuple
    iterations: int
    contraction: float

    def as_dict(self) -> dict:
        return {"rate": self.rate, "fit_window": list(self.fit_window),
                "iterations": self.iterations, "contraction": self.contraction,
                "distance_at_1": float(self.distance[0]) if self.distance.size else 0.0,
                "max_distance": float(self.distance.max()) if self.distance.size else 0.0}


def tracking_shadow(xi0: EnergyVector, F: NonlinearityModel, cfg: PerronConfig,
                    seq: EigenvalueSequence, method: str = "etdrk4",
                    floor: float = 1e-8) -> TrackingReport:
    """Shadow of the trajectory through ``xi0`` on the manifold.

    With ``u`` the forward trajectory (zero for ``t < 0``) and ``phi`` the
    smoothstep on ``[0, 1]``, the correction ``v`` solves ``v = L Phi(v, u)``,

        Phi = F(phi u + v) - phi F(u) - (eps phi'' + phi') u - 2 eps phi' u',

    on ``[-T_-, T_+]``.  Then ``phi u + v`` is a solution which coincides with a
    backward manifold solution for ``t <= 0`` and with ``u + v`` for ``t >= 1``,
    so ``v(0)`` is the shadow point and ``||(v, v')||_E`` is the distance.
    The decay rate is fitted on ``[1, t_end]``, where ``t_end`` stops short of
    the right boundary layer and of the point where the distance has dropped
    by the factor ``floor``.
    """
    _check_model(F, cfg, seq)
    M = F.modes
    lam = seq.values[:M]
    eps = cfg.eps
    h = cfg.h
    k0 = int(round(cfg.track_T_minus / h))
    k1 = int(round(cfg.track_T_plus / h))
    kone = int(round(1.0 / h))
    if k1 <= kone + 1:
        raise ValidationError("tracking window must extend beyond t = 1")
    grid = TimeGrid(-k0 * h, k1 * h, k0 + k1)
    t = grid.nodes
    U, V = integrate(np.asarray(xi0.u, float)[:M, None], np.asarray(xi0.v, float)[:M, None],
                     F, eps, lam, h, k1, method)
    u = np.zeros((M, t.size))
    du = np.zeros((M, t.size))
    u[:, k0:] = U[:, 0]
    du[:, k0:] = V[:, 0]
    s = np.clip(t, 0.0, 1.0)
    phi, d1, d2 = smoothstep(s), smoothstep_d1(s), smoothstep_d2(s)
    inside = (t > 0) & (t < 1)
    d1 = np.where(inside, d1, 0.0)
    d2 = np.where(inside, d2, 0.0)
    fixed = -phi * F(u) - (eps * d2 + d1) * u - 2.0 * eps * d1 * du
    breaks = [k0, k0 + kone]

    def wnorm(c):
        return weighted_l2_norm(WeightedSignal(grid, c), cfg.theta, 0.0, seq)

    v = np.zeros_like(u)
    dv = np.zeros_like(u)
    tol = cfg.fp_tol(xi0.u[:cfg.N])
    history = []
    for _ in range(cfg.fp_max_iter):
        rhs = F(phi * u + v) + fixed
        v_new, dv = _linear_core(rhs, grid, cfg.theta, eps, lam, cfg.N, breaks)
        inc = wnorm(v_new - v)
        history.append(inc)
        v = v_new
        if inc < tol or _stagnated(history, cfg.kappa):
            break
    else:
        raise ManifoldError("tracking iteration did not converge", history)
    shadow = EnergyVector(v[:, k0], dv[:, k0], eps)
    dist = energy_norm_series(v[:, k0 + kone:], dv[:, k0 + kone:], eps, seq)
    tt = t[k0 + kone:]
    t_end = tt[-1] - 5.0 / cfg.margin
    if dist[0] > 0:
        below = np.flatnonzero(dist < floor * dist[0])
        if below.size:
            t_end = min(t_end, tt[below[0]])
    sel = tt <= t_end
    rate = math.inf
    if dist[0] > 0 and sel.sum() >= 3:
        rate = -float(np.polyfit(tt[sel], np.log(dist[sel]), 1)[0])
    # contraction is read off the first six decades of decrease; increments
    # near the rounding plateau (and a decade above it) are not data
    noise = 10.0 * min(history[-4:]) if history[-1] >= tol else 0.0
    contraction = _observed_contraction(history, max(tol, 1e-6 * history[0], noise))
    return TrackingReport(shadow, rate, tt, dist, (1.0, float(t_end)), len(history), contraction)
