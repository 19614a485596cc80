"""Forward evolution of ``eps u'' + u' + A u = F(u)`` and the audits built on it.

Each mode is propagated exactly through its linear part: for ``eps > 0`` the
state ``(u_n, u_n')`` obeys ``Y' = B_n Y + (0, F_n(u)/eps)`` with
``B_n = [[0, 1], [-lambda_n/eps, -1/eps]]``, and the matrix functions
``phi_k(h B_n)`` are formed from the characteristic roots (or from a small
matrix exponential when the roots nearly coincide).  The nonlinearity enters
through an exponential midpoint rule (order 2) or the fourth-order
Cox-Matthews scheme.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import expm

from ._expint import phi_functions
from .nonlin import NonlinearityModel
from .spaces import EnergyVector, energy_norm, energy_norm_series
from .spectrum import EigenvalueSequence, root_arrays

_DOUBLE_ROOT_TOL = 1e-6
METHODS = ("midpoint", "etdrk4")


class DynamicsError(RuntimeError):
    def __init__(self, message: str, last_time: Optional[float] = None):
        super().__init__(message)
        self.last_time = last_time


@dataclass(frozen=True)
class EvolveConfig:
    h: float = 0.01
    T: float = 5.0
    method: str = "midpoint"
    error_estimate: bool = True

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("time step must be positive")
        if not self.T > 0:
            raise ValueError("horizon must be positive")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")

    @property
    def steps(self) -> int:
        return max(1, int(round(self.T / self.h)))


@dataclass
class Trajectory:
    """States at ``t_k = k h``; ``u`` and ``v`` have shape ``(modes, steps+1)``."""
    t: np.ndarray
    u: np.ndarray
    v: np.ndarray
    eps: float
    method: str
    error_estimate: Optional[float] = None

    def state(self, k: int) -> EnergyVector:
        return EnergyVector(self.u[:, k], self.v[:, k], self.eps)

    @property
    def final(self) -> EnergyVector:
        return self.state(-1)

    def energy(self, seq: EigenvalueSequence, shift: int = 0) -> np.ndarray:
        return energy_norm_series(self.u, self.v, self.eps, seq, shift)

    def to_csv(self, path, seq: EigenvalueSequence, coefficients: bool = False) -> None:
        e = self.energy(seq)
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            head = ["t", "energy"]
            if coefficients:
                M = self.u.shape[0]
                head += [f"u_{n + 1}" for n in range(M)] + [f"v_{n + 1}" for n in range(M)]
            w.writerow(head)
            for k, tk in enumerate(self.t):
                row = [repr(float(tk)), repr(float(e[k]))]
                if coefficients:
                    row += [repr(float(x)) for x in self.u[:, k]]
                    row += [repr(float(x)) for x in self.v[:, k]]
                w.writerow(row)


# ---------------------------------------------------------------------------
# matrix phi-functions of the per-mode linear part

def _mode_phis(lam: np.ndarray, eps: float, tau: float, kmax: int) -> np.ndarray:
    """``phi_k(tau B_n)`` for ``k = 0..kmax``; shape ``(kmax+1, modes, 2, 2)``."""
    M = lam.size
    out = np.zeros((kmax + 1, M, 2, 2))
    mp, mm = root_arrays(lam, eps)
    disc = 1.0 - 4.0 * eps * lam
    near = np.abs(disc) < _DOUBLE_ROOT_TOL
    far = ~near
    if far.any():
        a, b = mp[far], mm[far]
        pa = phi_functions(tau * a, kmax)            # (k, m)
        pb = phi_functions(tau * b, kmax)
        d = b - a
        # V diag(pa, pb) V^{-1} with V = [[1, 1], [a, b]]
        m00 = (b * pa - a * pb) / d
        m01 = (pb - pa) / d
        m10 = a * b * (pa - pb) / d
        m11 = (b * pb - a * pa) / d
        blk = np.stack([np.stack([m00, m01], -1), np.stack([m10, m11], -1)], -2)
        out[:, far] = blk.real
    for n in np.flatnonzero(near):
        B = np.array([[0.0, 1.0], [-lam[n] / eps, -1.0 / eps]])
        size = 2 * (kmax + 1)
        big = np.zeros((size, size))
        big[:2, :2] = tau * B
        for k in range(kmax):
            big[2 * k:2 * k + 2, 2 * k + 2:2 * k + 4] = np.eye(2)
        P = expm(big)
        for k in range(kmax + 1):
            out[k, n] = P[:2, 2 * k:2 * k + 2]
    return out


class _Stepper:
    """Precomputed propagators for one step size; states are ``(modes, batch)``."""

    def __init__(self, F: NonlinearityModel, lam: np.ndarray, eps: float, h: float, method: str):
        self.F, self.eps, self.h, self.method = F, eps, h, method
        self.lam = lam
        if eps == 0:
            full = phi_functions(-h * lam, 3).real      # (4, M)
            half = phi_functions(-0.5 * h * lam, 1).real
            self.E, self.E2 = full[0][:, None], half[0][:, None]
            self.p1h = (0.5 * h * half[1])[:, None]
            p1, p2, p3 = full[1], full[2], full[3]
        else:
            full = _mode_phis(lam, eps, h, 3)
            half = _mode_phis(lam, eps, 0.5 * h, 1)
            self.E, self.E2 = full[0], half[0]
            # the forcing acts on the velocity row only: keep column 1, scaled by 1/eps
            self.p1h = 0.5 * h * half[1][:, :, 1] / eps
            p1, p2, p3 = (full[k][:, :, 1] / eps for k in (1, 2, 3))
        self.p1 = h * p1
        self.f1 = h * (p1 - 3 * p2 + 4 * p3)
        self.f2 = 2.0 * h * (p2 - 2 * p3)
        self.f3 = h * (-p2 + 4 * p3)

    def _lin(self, E, Y):
        if self.eps == 0:
            return E * Y
        u, v = Y
        return np.stack([E[:, 0, 0, None] * u + E[:, 0, 1, None] * v,
                         E[:, 1, 0, None] * u + E[:, 1, 1, None] * v])

    def _force(self, c, Fu):
        if self.eps == 0:
            if c.ndim == 1:
                c = c[:, None]
            return c * Fu
        return np.stack([c[:, 0, None] * Fu, c[:, 1, None] * Fu])

    def _N(self, Y):
        return self.F(Y if self.eps == 0 else Y[0])

    def step(self, Y):
        if self.method == "midpoint":
            half = self._lin(self.E2, Y) + self._force(self.p1h, self._N(Y))
            return self._lin(self.E, Y) + self._force(self.p1, self._N(half))
        Nu = self._N(Y)
        a = self._lin(self.E2, Y) + self._force(self.p1h, Nu)
        Na = self._N(a)
        b = self._lin(self.E2, Y) + self._force(self.p1h, Na)
        Nb = self._N(b)
        c = self._lin(self.E2, a) + self._force(self.p1h, 2.0 * Nb - Nu)
        Nc = self._N(c)
        return (self._lin(self.E, Y) + self._force(self.f1, Nu)
                + self._force(self.f2, Na + Nb) + self._force(self.f3, Nc))


def integrate(u0: np.ndarray, v0: np.ndarray, F: NonlinearityModel, eps: float,
              lam: np.ndarray, h: float, steps: int, method: str = "midpoint"):
    """Batch integration; ``u0``/``v0`` are ``(modes, batch)``.  Returns ``(u, v)``
    arrays of shape ``(modes, batch, steps+1)``.

    For ``eps = 0`` only ``u0`` is used and ``v = F(u) - A u``.
    """
    st = _Stepper(F, lam, eps, h, method)
    M, P = u0.shape
    U = np.empty((M, P, steps + 1))
    V = np.empty((M, P, steps + 1))
    Y = u0.copy() if eps == 0 else np.stack([u0, v0])
    for k in range(steps + 1):
        if k:
            with np.errstate(over="ignore", invalid="ignore"):
                Y = st.step(Y)
            if not np.all(np.isfinite(Y)):
                raise DynamicsError("state became non-finite", (k - 1) * h)
        if eps == 0:
            U[:, :, k] = Y
        else:
            U[:, :, k], V[:, :, k] = Y
    if eps == 0:
        for k in range(steps + 1):
            V[:, :, k] = F(U[:, :, k]) - lam[:, None] * U[:, :, k]
    return U, V


def evolve(xi0: EnergyVector, F: NonlinearityModel, eps: float, cfg: EvolveConfig,
           seq: EigenvalueSequence) -> Trajectory:
    """Trajectory from ``xi0`` on ``[0, cfg.T]``.

    With ``cfg.error_estimate`` the run is repeated at half the step and the
    largest energy-norm difference at common times is reported.
    """
    M = F.modes
    lam = seq.values[:M]
    u0 = np.asarray(xi0.u, dtype=float)[:, None]
    v0 = np.asarray(xi0.v, dtype=float)[:, None]
    n = cfg.steps
    h = cfg.T / n
    U, V = integrate(u0, v0, F, eps, lam, h, n, cfg.method)
    t = h * np.arange(n + 1)
    traj = Trajectory(t, U[:, 0], V[:, 0], eps, cfg.method)
    if cfg.error_estimate:
        U2, V2 = integrate(u0, v0, F, eps, lam, h / 2, 2 * n, cfg.method)
        du = U[:, 0] - U2[:, 0, ::2]
        dv = V[:, 0] - V2[:, 0, ::2]
        traj.error_estimate = float(np.max(energy_norm_series(du, dv, eps, seq)))
    return traj


# ---------------------------------------------------------------------------
# invariance

@dataclass(frozen=True)
class InvarianceReport:
    defects: list
    t_check: float

    @property
    def max_defect(self) -> float:
        return max(self.defects) if self.defects else 0.0

    def as_dict(self) -> dict:
        d = np.asarray(self.defects)
        return {"t_check": self.t_check, "max_defect": self.max_defect,
                "median_defect": float(np.median(d)) if d.size else 0.0,
                "defects": [float(x) for x in d]}


def invariance_check(chart, F: NonlinearityModel, cfg: EvolveConfig, seq: EigenvalueSequence,
                     t_check: float) -> InvarianceReport:
    """Evolve each chart point, re-project to ``p'`` and compare with ``M(p')``."""
    from .spectrum import projector_coefficients
    from .manifold import construct_point

    pcfg = chart.config
    pc = projector_coefficients(seq, pcfg.N, pcfg.eps)
    run = EvolveConfig(cfg.h, t_check, cfg.method, error_estimate=False)
    defects = []
    for pt in chart.points:
        traj = evolve(pt.value, F, pcfg.eps, run, seq)
        xi = traj.final
        p_new = pc.a * xi.v[:pcfg.N] + pc.b * xi.u[:pcfg.N]
        again = construct_point(p_new, F, pcfg, seq)
        diff = xi - again.value.with_eps(pcfg.eps)
        defects.append(energy_norm(diff, seq) / (1.0 + float(np.linalg.norm(pt.p))))
    return InvarianceReport(defects, t_check)


# ---------------------------------------------------------------------------
# energy estimate audits

@dataclass(frozen=True)
class GrowthFit:
    C: float
    K: float

    def as_dict(self):
        return {"C": self.C, "K": self.K}


def fit_growth(t: np.ndarray, ratio: np.ndarray) -> GrowthFit:
    """Fit ``ratio(t) <= C e^{K t}``.

    ``K`` is the least-squares slope of ``log max_{s<=t} ratio(s)`` over the
    second half of the horizon (clipped at 0); ``C`` is the smallest constant
    that makes the bound hold at every sample for that ``K``.
    """
    ratio = np.maximum(np.asarray(ratio, dtype=float), 1e-300)
    run = np.maximum.accumulate(ratio)
    sel = t >= t[0] + 0.5 * (t[-1] - t[0])
    if sel.sum() >= 2 and np.ptp(t[sel]) > 0:
        K = max(0.0, float(np.polyfit(t[sel], np.log(run[sel]), 1)[0]))
    else:
        K = 0.0
    C = float(np.max(ratio * np.exp(-K * t)))
    return GrowthFit(C, K)


def _window_integral(t: np.ndarray, dens: np.ndarray, width: float = 1.0):
    """``int_t^{t+width} dens`` for every node with ``t + width`` inside the grid."""
    h = t[1] - t[0]
    w = int(round(width / h))
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * h)])
    return cum[w:] - cum[:-w]


@dataclass(frozen=True)
class EnergyAudit:
    eps: float
    energy: GrowthFit
    energy1: GrowthFit
    lipschitz: Optional[GrowthFit]

    def as_dict(self):
        return {"eps": self.eps, "energy": self.energy.as_dict(),
                "energy1": self.energy1.as_dict(),
                "lipschitz": None if self.lipschitz is None else self.lipschitz.as_dict()}


def energy_estimate_audit(trajectories: Sequence[Trajectory], F: NonlinearityModel, eps: float,
                          seq: EigenvalueSequence,
                          pairs: Sequence[tuple[int, int]] = ()) -> EnergyAudit:
    """Fit ``(C, K)`` in the energy, first-order energy and semigroup-Lipschitz bounds.

    For each trajectory the left-hand side is the squared (first-order)
    energy norm at ``t`` plus the integral of ``||u'||^2`` (``||u'||^2_{H^1}``)
    over ``[t, t+1]``, divided by the squared initial norm; the fit uses the
    worst trajectory at every time.  ``pairs`` selects trajectory pairs for
    the Lipschitz bound, which is stated for norms rather than squares.
    """
    lam = seq.values[:F.modes]
    worst0 = worst1 = None
    for tr in trajectories:
        t = tr.t
        e0 = energy_norm_series(tr.u, tr.v, tr.eps, seq, 0) ** 2
        e1 = energy_norm_series(tr.u, tr.v, tr.eps, seq, 1) ** 2
        i0 = _window_integral(t, np.sum(tr.v ** 2, axis=0))
        i1 = _window_integral(t, np.sum(lam[:, None] * tr.v ** 2, axis=0))
        m = i0.size
        r0 = (e0[:m] + i0) / e0[0] if e0[0] > 0 else np.zeros(m)
        r1 = (e1[:m] + i1) / e1[0] if e1[0] > 0 else np.zeros(m)
        worst0 = r0 if worst0 is None else np.maximum(worst0, r0)
        worst1 = r1 if worst1 is None else np.maximum(worst1, r1)
    tt = trajectories[0].t[:worst0.size]
    lip = None
    if pairs:
        worst = None
        for i, j in pairs:
            a, b = trajectories[i], trajectories[j]
            d = energy_norm_series(a.u - b.u, a.v - b.v, a.eps, seq, 0)
            r = d / d[0] if d[0] > 0 else np.zeros_like(d)
            worst = r if worst is None else np.maximum(worst, r)
        lip = fit_growth(trajectories[0].t, worst)
    return EnergyAudit(eps, fit_growth(tt, worst0), fit_growth(tt, worst1), lip)


def fit_drift(a: GrowthFit, b: GrowthFit) -> float:
    """Relative change of ``(C, K)``; rates are measured against ``max(|K|, 1)``."""
    dc = abs(a.C - b.C) / max(abs(a.C), abs(b.C), 1e-300)
    dk = abs(a.K - b.K) / max(abs(a.K), abs(b.K), 1.0)
    return max(dc, dk)
