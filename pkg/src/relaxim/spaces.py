"""Time grids, per-mode signals, weighted-in-time norms and energy norms."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .spectrum import EigenvalueSequence


class ValidationError(ValueError):
    pass


@dataclass(frozen=True)
class TimeGrid:
    t_min: float
    t_max: float
    steps: int

    def __post_init__(self):
        if not self.t_min < self.t_max:
            raise ValidationError(f"t_min={self.t_min} must be < t_max={self.t_max}")
        if self.steps < 1:
            raise ValidationError("steps must be positive")

    @classmethod
    def from_step(cls, t_min: float, t_max: float, h: float) -> "TimeGrid":
        """Grid on ``[t_min, t_max]`` with spacing as close to ``h`` as possible."""
        return cls(t_min, t_max, max(1, int(round((t_max - t_min) / h))))

    @property
    def h(self) -> float:
        return (self.t_max - self.t_min) / self.steps

    @property
    def nodes(self) -> np.ndarray:
        return self.t_min + self.h * np.arange(self.steps + 1)

    def index_of(self, t: float) -> int:
        k = int(round((t - self.t_min) / self.h))
        if not 0 <= k <= self.steps or abs(self.t_min + k * self.h - t) > 1e-9 * max(1.0, abs(t)):
            raise ValidationError(f"t={t} is not a grid node")
        return k


@dataclass(frozen=True)
class WeightedSignal:
    """``u(t) = sum_n coeffs[n-1, k] e_n`` sampled at the nodes of ``grid``.

    Coefficients are stored raw; exponential weights are only applied inside
    the norm routines.
    """
    grid: TimeGrid
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.ndim == 1:
            c = c[None, :]
        if c.ndim != 2 or c.shape[1] != self.grid.steps + 1:
            raise ValidationError(
                f"coeffs shape {c.shape} does not match (modes, {self.grid.steps + 1})")
        if not np.all(np.isfinite(c)):
            raise ValidationError("signal has non-finite entries")
        object.__setattr__(self, "coeffs", c)

    @property
    def mode_count(self) -> int:
        return self.coeffs.shape[0]

    @classmethod
    def zeros(cls, grid: TimeGrid, modes: int) -> "WeightedSignal":
        return cls(grid, np.zeros((modes, grid.steps + 1)))

    def at(self, t: float) -> np.ndarray:
        return self.coeffs[:, self.grid.index_of(t)].copy()

    def __add__(self, other: "WeightedSignal") -> "WeightedSignal":
        _same_grid(self, other)
        return WeightedSignal(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other: "WeightedSignal") -> "WeightedSignal":
        _same_grid(self, other)
        return WeightedSignal(self.grid, self.coeffs - other.coeffs)

    def __mul__(self, scalar: float) -> "WeightedSignal":
        return WeightedSignal(self.grid, self.coeffs * scalar)

    __rmul__ = __mul__

    def to_csv(self, path) -> None:
        """Columns ``t, mode_1, ..., mode_M``."""
        write_signal_csv(path, self.grid.nodes, self.coeffs)


def _same_grid(a: WeightedSignal, b: WeightedSignal) -> None:
    if a.grid != b.grid or a.coeffs.shape != b.coeffs.shape:
        raise ValidationError("signals live on different grids or mode counts")


def write_signal_csv(path, t: np.ndarray, coeffs: np.ndarray) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + [f"mode_{n + 1}" for n in range(coeffs.shape[0])])
        for k, tk in enumerate(t):
            w.writerow([repr(float(tk))] + [repr(float(x)) for x in coeffs[:, k]])


def _sobolev_factors(seq: EigenvalueSequence, modes: int, s: float) -> np.ndarray:
    if modes > seq.count:
        raise ValidationError(f"signal has {modes} modes but the spectrum only {seq.count}")
    return seq.values[:modes] ** s


def _weighted(coeffs: np.ndarray, t: np.ndarray, theta: float) -> np.ndarray:
    # e^{theta t} |u| evaluated as exp(theta t + log|u|) so that large weights
    # never multiply tiny coefficients directly
    mag = np.abs(coeffs)
    with np.errstate(divide="ignore"):
        logs = np.log(mag) + theta * t[None, :]
    return np.where(mag > 0, np.exp(logs), 0.0)


def weighted_l2_norm(signal: WeightedSignal, theta: float, s: float,
                     seq: EigenvalueSequence) -> float:
    """Trapezoid approximation of ``(int e^{2 theta t} ||u(t)||_{H^s}^2 dt)^{1/2}``."""
    fac = _sobolev_factors(seq, signal.mode_count, s)
    w = _weighted(signal.coeffs, signal.grid.nodes, theta)
    dens = fac @ (w * w)
    return math.sqrt(float(np.trapezoid(dens, dx=signal.grid.h)))


def weighted_sup_norm(signal: WeightedSignal, theta: float, s: float,
                      seq: EigenvalueSequence) -> float:
    """``max_k e^{theta t_k} ||u(t_k)||_{H^s}``."""
    fac = _sobolev_factors(seq, signal.mode_count, s)
    w = _weighted(signal.coeffs, signal.grid.nodes, theta)
    return math.sqrt(float(np.max(fac @ (w * w))))


def sobolev_norm(u: np.ndarray, seq: EigenvalueSequence, s: float) -> float:
    u = np.asarray(u, dtype=float)
    return math.sqrt(float(np.sum(_sobolev_factors(seq, u.shape[0], s) * u * u)))


@dataclass(frozen=True)
class EnergyVector:
    """A phase-space point ``(u, du/dt)`` in coefficient form."""
    u: np.ndarray
    v: np.ndarray
    eps: float

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float).copy()
        v = np.asarray(self.v, dtype=float).copy()
        if u.shape != v.shape or u.ndim != 1:
            raise ValidationError(f"u and v shapes differ: {u.shape} vs {v.shape}")
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
            raise ValidationError("energy vector has non-finite entries")
        if self.eps < 0:
            raise ValidationError("eps must be nonnegative")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    def __sub__(self, other: "EnergyVector") -> "EnergyVector":
        return EnergyVector(self.u - other.u, self.v - other.v, self.eps)

    def __add__(self, other: "EnergyVector") -> "EnergyVector":
        return EnergyVector(self.u + other.u, self.v + other.v, self.eps)

    def scaled(self, c: float) -> "EnergyVector":
        return EnergyVector(c * self.u, c * self.v, self.eps)

    def with_eps(self, eps: float) -> "EnergyVector":
        return EnergyVector(self.u, self.v, eps)


def energy_norm(xi: EnergyVector, seq: EigenvalueSequence) -> float:
    """``(eps ||v||^2 + ||v||_{H^-1}^2 + ||u||_{H^1}^2)^{1/2}``."""
    lam = _sobolev_factors(seq, xi.u.shape[0], 1.0)
    val = np.sum(xi.eps * xi.v ** 2 + xi.v ** 2 / lam + lam * xi.u ** 2)
    return math.sqrt(float(val))


def energy1_norm(xi: EnergyVector, seq: EigenvalueSequence) -> float:
    """``(eps ||v||_{H^1}^2 + ||u||_{H^2}^2 + ||v||^2)^{1/2}``."""
    lam = _sobolev_factors(seq, xi.u.shape[0], 1.0)
    val = np.sum(xi.eps * lam * xi.v ** 2 + lam ** 2 * xi.u ** 2 + xi.v ** 2)
    return math.sqrt(float(val))


def energy_norm_series(u: np.ndarray, v: np.ndarray, eps: float, seq: EigenvalueSequence,
                       shift: int = 0) -> np.ndarray:
    """Energy norms (``shift=0``) or first-order energy norms (``shift=1``) column by column."""
    lam = _sobolev_factors(seq, u.shape[0], 1.0)[:, None]
    ls = lam ** shift
    dens = eps * ls * v ** 2 + ls / lam * v ** 2 + ls * lam * u ** 2
    return np.sqrt(np.sum(dens, axis=0))


def default_window(theta: float, margin: float) -> float:
    """Length of the truncated half-line: weights and boundary layers below 1e-17.

    ``margin`` is the slowest decay rate of a boundary layer in weighted
    variables, i.e. ``min(theta + mu_N^+, -(theta + Re mu_{N+1}^+))``.
    """
    return max(40.0 / theta, 20.0 / margin)
