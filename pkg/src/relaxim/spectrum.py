"""Operator spectra, characteristic roots and spectral gap conditions.

All operators are positive self-adjoint with compact inverse and are
represented only through their eigenvalues ``lambda_1 <= lambda_2 <= ...``.
Per-mode dynamics of ``eps u'' + u' + lambda_n u = 0`` are governed by the
roots of ``eps mu^2 + mu + lambda_n = 0``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np


class SpectrumError(ValueError):
    """Invalid operator model or an index outside the admissible range."""


# ---------------------------------------------------------------------------
# operator models

@dataclass(frozen=True)
class Dirichlet1D:
    """-d^2/dx^2 on (0, length) with Dirichlet conditions."""
    length: float = math.pi


@dataclass(frozen=True)
class Torus:
    """-Laplacian on the flat torus [0, 2 pi scale)^d, constant mode removed."""
    dimension: int = 2
    scale: float = 1.0


@dataclass(frozen=True)
class Sphere:
    """Laplace-Beltrami operator on the unit sphere S^d, constant mode removed."""
    dimension: int = 3


@dataclass(frozen=True)
class Custom:
    values: tuple = ()


OperatorModel = Union[Dirichlet1D, Torus, Sphere, Custom]


@dataclass(frozen=True)
class EigenvalueSequence:
    """Nondecreasing positive eigenvalues of ``A`` with the generating model."""
    values: np.ndarray
    generator: OperatorModel = field(default_factory=Custom)

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        _validate_values(vals)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def count(self) -> int:
        return len(self.values)

    def __len__(self):
        return len(self.values)

    def __getitem__(self, n: int) -> float:
        """1-based access, ``seq[1]`` is the first eigenvalue."""
        if not 1 <= n <= self.count:
            raise SpectrumError(f"mode index {n} outside 1..{self.count}")
        return float(self.values[n - 1])

    def truncate(self, count: int) -> "EigenvalueSequence":
        if count > self.count:
            raise SpectrumError(f"cannot extend a sequence of {self.count} to {count}")
        return EigenvalueSequence(self.values[:count], self.generator)


def _validate_values(vals: np.ndarray) -> None:
    if vals.ndim != 1 or vals.size == 0:
        raise SpectrumError("eigenvalue list must be a nonempty 1-D sequence")
    for i, v in enumerate(vals):
        if not np.isfinite(v) or v <= 0:
            raise SpectrumError(f"eigenvalue at index {i + 1} is not positive: {v!r}")
        if i and v < vals[i - 1]:
            raise SpectrumError(
                f"eigenvalues not sorted: index {i + 1} ({v!r}) < index {i} ({vals[i - 1]!r})")


def _sphere_multiplicity(k: int, d: int) -> int:
    # harmonic homogeneous polynomials of degree k in d+1 variables
    return math.comb(k + d, d) - (math.comb(k + d - 2, d) if k >= 2 else 0)


def _torus_values(dimension: int, scale: float, count: int) -> np.ndarray:
    radius = 1
    while True:
        rng = range(-radius, radius + 1)
        sq = np.array([sum(c * c for c in k) for k in itertools.product(rng, repeat=dimension)])
        sq = np.sort(sq[(sq > 0) & (sq <= radius * radius)])
        if sq.size >= count:
            return sq[:count] / scale ** 2
        radius *= 2


def eigenvalues(model: OperatorModel, count: int) -> EigenvalueSequence:
    """Closed-form eigenvalues of ``model``, multiplicities repeated.

    >>> eigenvalues(Dirichlet1D(), 4).values
    array([ 1.,  4.,  9., 16.])
    """
    if count < 2:
        raise SpectrumError("count must be at least 2")
    if isinstance(model, Dirichlet1D):
        if model.length <= 0:
            raise SpectrumError("Dirichlet1D length must be positive")
        n = np.arange(1, count + 1, dtype=float)
        if model.length == math.pi:
            vals = n * n
        else:
            vals = (n * math.pi / model.length) ** 2
    elif isinstance(model, Torus):
        if model.dimension < 1 or model.scale <= 0:
            raise SpectrumError("Torus needs dimension >= 1 and scale > 0")
        vals = _torus_values(model.dimension, model.scale, count)
    elif isinstance(model, Sphere):
        if model.dimension < 1:
            raise SpectrumError("Sphere dimension must be >= 1")
        d = model.dimension
        out: list[float] = []
        k = 1
        while len(out) < count:
            out.extend([float(k * (k + d - 1))] * _sphere_multiplicity(k, d))
            k += 1
        vals = np.array(out[:count])
    elif isinstance(model, Custom):
        vals = np.array(model.values, dtype=float)
        _validate_values(vals)
        if vals.size < count:
            raise SpectrumError(f"custom list has {vals.size} values, {count} requested")
        vals = vals[:count]
    else:
        raise SpectrumError(f"unknown operator model {model!r}")
    return EigenvalueSequence(vals, model)


# ---------------------------------------------------------------------------
# characteristic roots

def critical_index(seq: EigenvalueSequence, eps: float) -> Optional[int]:
    """Largest ``n`` with ``4 eps lambda_n <= 1``; ``None`` means unbounded (eps = 0).

    Only the retained modes are inspected, so a truncated sequence in which
    every mode has real roots returns ``seq.count``.
    """
    if eps < 0:
        raise SpectrumError("eps must be nonnegative")
    if eps == 0:
        return None
    return int(np.count_nonzero(4.0 * eps * seq.values <= 1.0))


@dataclass(frozen=True)
class CharacteristicRoots:
    mu_plus: complex
    mu_minus: complex
    discriminant: float
    parabolic: bool = False

    @property
    def real(self) -> bool:
        return self.discriminant >= 0


def root_arrays(values, eps: float) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised roots of ``eps mu^2 + mu + lambda = 0`` as complex arrays.

    ``mu_plus`` uses the cancellation-free form ``-2 lambda / (1 + sqrt(d))``.
    At ``eps = 0`` returns ``(-lambda, -inf)``.
    """
    lam = np.asarray(values, dtype=float)
    if eps == 0:
        return (-lam).astype(complex), np.full(lam.shape, -np.inf, dtype=complex)
    disc = 1.0 - 4.0 * eps * lam
    s = np.sqrt(np.abs(disc))
    real = disc >= 0
    # both branches are evaluated; for tiny eps the unused one may overflow
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        mu_p = np.where(real, -2.0 * lam / (1.0 + s), -1.0 / (2 * eps)).astype(complex)
        mu_m = np.where(real, -(1.0 + s) / (2 * eps), -1.0 / (2 * eps)).astype(complex)
        mu_p = mu_p + np.where(real, 0.0, 1j * s / (2 * eps))
        mu_m = mu_m - np.where(real, 0.0, 1j * s / (2 * eps))
    return mu_p, mu_m


def characteristic_roots(lambda_n: float, eps: float) -> CharacteristicRoots:
    """Roots of ``eps mu^2 + mu + lambda_n = 0``.

    ``eps = 0`` yields the parabolic branch ``mu_plus = -lambda_n`` with
    ``mu_minus = -inf`` and ``parabolic=True``.
    """
    if lambda_n <= 0:
        raise SpectrumError("lambda_n must be positive")
    if eps < 0:
        raise SpectrumError("eps must be nonnegative")
    mp, mm = root_arrays([lambda_n], eps)
    if eps == 0:
        return CharacteristicRoots(complex(mp[0]), complex(mm[0]), 1.0, parabolic=True)
    disc = 1.0 - 4.0 * eps * lambda_n
    return CharacteristicRoots(complex(mp[0]), complex(mm[0]), disc)


@dataclass(frozen=True)
class ProjectorCoefficients:
    """Coefficients of the boundary operators: ``p_n = a_n u_n'(0) + b_n u_n(0)``."""
    a: np.ndarray
    b: np.ndarray

    @property
    def N(self) -> int:
        return len(self.a)


def projector_coefficients(seq: EigenvalueSequence, N: int, eps: float) -> ProjectorCoefficients:
    if not 1 <= N <= seq.count:
        raise SpectrumError(f"N={N} outside 1..{seq.count}")
    if eps < 0:
        raise SpectrumError("eps must be nonnegative")
    if eps == 0:
        return ProjectorCoefficients(np.zeros(N), np.ones(N))
    disc = 1.0 - 4.0 * eps * seq.values[:N]
    bad = np.flatnonzero(disc <= 0)
    if bad.size:
        raise SpectrumError(
            f"N exceeds real-root range: 1 - 4 eps lambda_{bad[0] + 1} = {disc[bad[0]]:.3g} <= 0")
    s = np.sqrt(disc)
    return ProjectorCoefficients(eps / s, (1.0 + s) / (2.0 * s))


# ---------------------------------------------------------------------------
# spectral gap conditions

def weight_exponent(lam_N: float, lam_N1: float, eps: float) -> Optional[float]:
    """Smaller root of ``2 theta (eps theta - 1) + lam_N + lam_N1 = 0``.

    Written as ``S / (1 + sqrt(1 - 2 eps S))`` which is exact at ``eps = 0``.
    Returns ``None`` when the root is complex.
    """
    S = lam_N + lam_N1
    disc = 1.0 - 2.0 * eps * S
    if disc < 0:
        return None
    return S / (1.0 + math.sqrt(disc))


@dataclass(frozen=True)
class SpectralGapReport:
    N: int
    gap: float
    gap_ok: bool
    eps_ok: bool
    theta: Optional[float]
    contraction: float
    n_cr: Optional[int]
    eps: float
    L: float
    regime: str

    @property
    def admissible(self) -> bool:
        return self.gap_ok and self.eps_ok

    @property
    def reasons(self) -> list[str]:
        out = []
        if not self.gap_ok:
            out.append("gap condition")
        if not self.eps_ok:
            out.append("eps condition")
        return out

    def as_dict(self) -> dict:
        return {
            "N": self.N, "gap": self.gap, "gap_ok": self.gap_ok, "eps_ok": self.eps_ok,
            "theta": self.theta, "contraction": self.contraction,
            "n_cr": "unbounded" if self.n_cr is None else self.n_cr,
            "eps": self.eps, "L": self.L, "regime": self.regime,
        }


def gap_report(seq: EigenvalueSequence, N: int, eps: float, L: float) -> SpectralGapReport:
    """Check ``lambda_{N+1} - lambda_N > 2L`` and ``3 lambda_{N+1} + lambda_N <= 1/eps``.

    ``regime`` is ``"standard"`` when the eps condition holds, ``"last_gap"``
    in the unsupported band ``4 eps lambda_N < 1 < eps (3 lambda_{N+1} + lambda_N)``
    and ``"complex"`` when mode ``N`` itself has complex roots.
    """
    if not 1 <= N < seq.count:
        raise SpectrumError(f"N + 1 = {N + 1} exceeds mode count {seq.count}")
    if L <= 0:
        raise SpectrumError("Lipschitz constant must be positive")
    if eps < 0:
        raise SpectrumError("eps must be nonnegative")
    lam_N, lam_N1 = seq[N], seq[N + 1]
    gap = lam_N1 - lam_N
    gap_ok = gap > 2.0 * L
    eps_ok = eps * (3.0 * lam_N1 + lam_N) <= 1.0
    theta = weight_exponent(lam_N, lam_N1, eps)
    if theta is not None:
        resid = 2.0 * theta * (eps * theta - 1.0) + lam_N + lam_N1
        assert abs(resid) <= 1e-12 * (lam_N + lam_N1), resid
    if eps_ok:
        regime = "standard"
    elif 4.0 * eps * lam_N < 1.0:
        regime = "last_gap"
    else:
        regime = "complex"
    contraction = 2.0 * L / gap if gap > 0 else math.inf
    return SpectralGapReport(N, gap, gap_ok, eps_ok, theta, contraction,
                             critical_index(seq, eps), eps, L, regime)


def gap_scan(seq: EigenvalueSequence, L: float, eps: float) -> list[SpectralGapReport]:
    """All ``N`` (ascending) for which both gap conditions hold."""
    reports = (gap_report(seq, N, eps, L) for N in range(1, seq.count))
    return [r for r in reports if r.admissible]


def weight_bracket(seq: EigenvalueSequence, N: int, eps: float) -> tuple[float, float]:
    """``(-mu_N^+, -Re mu_{N+1}^+)``; an admissible weight lies strictly inside."""
    mp, _ = root_arrays(seq.values[N - 1:N + 1], eps)
    return -mp[0].real, -mp[1].real
