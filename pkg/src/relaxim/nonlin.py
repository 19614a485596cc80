"""Globally Lipschitz nonlinearities on coefficient vectors.

Every model maps a coefficient vector ``u`` of length ``modes`` (or a matrix
whose columns are such vectors) to ``F(u)`` and satisfies ``F(0) = 0``.  Each
model also provides its Jacobian in closed form, which is what the
equilibrium analysis uses.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .spectrum import Dirichlet1D, EigenvalueSequence, critical_index


class NonlinearityError(ValueError):
    pass


class UnsupportedBasisError(NonlinearityError):
    pass


# ---------------------------------------------------------------------------
# smooth building blocks

def smoothstep(s):
    """Quintic ``6s^5 - 15s^4 + 10s^3`` with ``s`` clamped to ``[0, 1]``."""
    s = np.clip(s, 0.0, 1.0)
    return s * s * s * (10.0 + s * (-15.0 + 6.0 * s))


def smoothstep_d1(s):
    s = np.asarray(s, dtype=float)
    inside = (s > 0) & (s < 1)
    sc = np.clip(s, 0.0, 1.0)
    return np.where(inside, 30.0 * sc * sc * (1.0 - sc) ** 2, 0.0)


def smoothstep_d2(s):
    s = np.asarray(s, dtype=float)
    inside = (s > 0) & (s < 1)
    sc = np.clip(s, 0.0, 1.0)
    return np.where(inside, 60.0 * sc * (1.0 - sc) * (1.0 - 2.0 * sc), 0.0)


def cutoff(z):
    """Equal to 1 for ``z <= 0``, 0 for ``z >= 1/2``, smoothstep in between."""
    return 1.0 - smoothstep(2.0 * np.asarray(z, dtype=float))


def cutoff_d1(z):
    return -2.0 * smoothstep_d1(2.0 * np.asarray(z, dtype=float))


CUTOFF_D1_SUP = 2.0 * 30.0 / 16.0


class BumpMollifier:
    """Symmetric ``C^infinity`` bump of half-width ``w`` and the ramp it smooths.

    ``ramp(x) = int (x - y)_+ rho(y) dy``, which is 0 for ``x <= -w`` and
    ``x`` for ``x >= w``; both integrals are evaluated with Gauss-Legendre
    nodes on ``[-w, x]`` so the integrand is smooth.
    """

    def __init__(self, width: float, points: int = 96):
        if width <= 0:
            raise NonlinearityError("mollifier width must be positive")
        if points < 64:
            raise NonlinearityError("use at least 64 quadrature points")
        self.width = float(width)
        self._s, self._wq = np.polynomial.legendre.leggauss(points)
        y = self.width * self._s
        self._norm = float(self.width * np.sum(self._wq * self._shape(y)))

    def _shape(self, y):
        r = np.clip(np.abs(np.asarray(y, dtype=float)) / self.width, 0.0, 1.0)
        with np.errstate(divide="ignore", over="ignore"):
            return np.where(r < 1.0, np.exp(-1.0 / np.maximum(1.0 - r * r, 1e-300)), 0.0)

    def density(self, y):
        return self._shape(y) / self._norm

    def _partial(self, x):
        """``(int_{-w}^x rho, int_{-w}^x y rho)`` for ``|x| < w``."""
        x = np.asarray(x, dtype=float)
        half = 0.5 * (x + self.width)
        y = -self.width + half[..., None] * (self._s + 1.0)
        rho = self.density(y)
        c0 = half * np.sum(self._wq * rho, axis=-1)
        c1 = half * np.sum(self._wq * y * rho, axis=-1)
        return c0, c1

    def ramp(self, x):
        x = np.asarray(x, dtype=float)
        out = np.where(x >= self.width, x, 0.0)
        inside = np.abs(x) < self.width
        if np.any(inside):
            c0, c1 = self._partial(x[inside])
            out = out.copy()
            out[inside] = x[inside] * c0 - c1
        return out

    def ramp_d1(self, x):
        x = np.asarray(x, dtype=float)
        out = np.where(x >= self.width, 1.0, 0.0)
        inside = np.abs(x) < self.width
        if np.any(inside):
            c0, _ = self._partial(x[inside])
            out = out.copy()
            out[inside] = c0
        return out


# ---------------------------------------------------------------------------
# scalar functions for Nemytskii operators

@dataclass(frozen=True)
class ScalarFunction:
    """A scalar ``f`` with derivative and a bound on ``sup |f'|``."""
    name: str
    f: Callable
    df: Callable
    sup_df: float
    params: dict = field(default_factory=dict)

    def __call__(self, x):
        return self.f(x)


def sine_function(amplitude: float = 1.0, frequency: float = 1.0) -> ScalarFunction:
    a, k = float(amplitude), float(frequency)
    return ScalarFunction("sin", lambda x: a * np.sin(k * x), lambda x: a * k * np.cos(k * x),
                          abs(a * k), {"amplitude": a, "frequency": k})


def linear_function(slope: float) -> ScalarFunction:
    c = float(slope)
    return ScalarFunction("linear", lambda x: c * np.asarray(x, dtype=float),
                          lambda x: np.full(np.shape(x), c), abs(c), {"slope": c})


def constant_function(value: float) -> ScalarFunction:
    c = float(value)
    return ScalarFunction("constant", lambda x: np.full(np.shape(x), c),
                          lambda x: np.zeros(np.shape(x)), 0.0, {"value": c})


def zero_function() -> ScalarFunction:
    return ScalarFunction("zero", lambda x: np.zeros(np.shape(x)),
                          lambda x: np.zeros(np.shape(x)), 0.0, {})


def cubic_function(a: float = 1.0, b: float = 1.0) -> ScalarFunction:
    """``a x - b x^3``; not globally Lipschitz, meant to be cut off."""
    return ScalarFunction("cubic", lambda x: a * np.asarray(x) - b * np.asarray(x) ** 3,
                          lambda x: a - 3.0 * b * np.asarray(x) ** 2, math.inf,
                          {"a": float(a), "b": float(b)})


def table_function(xs: Sequence[float], fs: Sequence[float], name: str = "table") -> ScalarFunction:
    """Piecewise-linear interpolant, constant outside the table range."""
    xs = np.asarray(xs, dtype=float)
    fs = np.asarray(fs, dtype=float)
    if xs.ndim != 1 or xs.shape != fs.shape or xs.size < 2:
        raise NonlinearityError("table needs matching x and f columns with at least two rows")
    if np.any(np.diff(xs) <= 0):
        raise NonlinearityError("table x values must be strictly increasing")
    slopes = np.diff(fs) / np.diff(xs)

    def df(x):
        x = np.asarray(x, dtype=float)
        idx = np.clip(np.searchsorted(xs, x, side="right") - 1, 0, slopes.size - 1)
        return np.where((x < xs[0]) | (x > xs[-1]), 0.0, slopes[idx])

    return ScalarFunction(name, lambda x: np.interp(x, xs, fs), df, float(np.max(np.abs(slopes))),
                          {"x": xs.tolist(), "f": fs.tolist()})


def read_table(path) -> ScalarFunction:
    """Read a two-column CSV ``x, f(x)``; a non-numeric first row is a header."""
    xs, fs = [], []
    with Path(path).open(newline="", encoding="utf-8") as fh:
        for i, row in enumerate(csv.reader(fh)):
            if not row or row[0].lstrip().startswith("#"):
                continue
            try:
                x, y = float(row[0]), float(row[1])
            except (ValueError, IndexError):
                if i == 0:
                    continue
                raise NonlinearityError(f"{path}: row {i + 1} is not 'x, f(x)'") from None
            xs.append(x)
            fs.append(y)
    return table_function(xs, fs, name=f"table:{Path(path).name}")


# ---------------------------------------------------------------------------
# models

class NonlinearityModel:
    """Base class: a map on coefficient vectors with ``F(0) = 0``."""
    kind = "abstract"

    def __init__(self, modes: int, declared_L: float):
        if modes < 1:
            raise NonlinearityError("modes must be positive")
        self.modes = int(modes)
        self.declared_L = float(declared_L)

    def _eval(self, U: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def jacobian(self, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def params(self) -> dict:
        return {}

    def describe(self) -> dict:
        return {"kind": self.kind, "modes": self.modes, "declared_L": self.declared_L,
                **self.params()}

    def check_basis(self, seq: EigenvalueSequence) -> None:
        if seq.count < self.modes:
            raise NonlinearityError(f"spectrum has {seq.count} modes, model needs {self.modes}")

    def __call__(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.shape[0] != self.modes:
            raise NonlinearityError(f"vector length {u.shape[0]} != mode count {self.modes}")
        if u.ndim == 1:
            return self._eval(u[:, None])[:, 0]
        return self._eval(u)

    def probe_points(self, rng: np.random.Generator, count: int) -> np.ndarray:
        """Extra base points (columns) where the Lipschitz sampler should look."""
        return np.zeros((self.modes, 0))


def apply(F: NonlinearityModel, u, seq: EigenvalueSequence) -> np.ndarray:
    """``F(u)`` after checking that ``F`` is compatible with the spectrum's basis."""
    F.check_basis(seq)
    return F(u)


class Zero(NonlinearityModel):
    kind = "zero"

    def __init__(self, modes: int):
        super().__init__(modes, 0.0)

    def _eval(self, U):
        return np.zeros_like(U)

    def jacobian(self, u):
        return np.zeros((self.modes, self.modes))


class LinearMap(NonlinearityModel):
    """``F(u) = K u`` for a fixed matrix ``K``; declared constant is ``||K||_2``."""
    kind = "linear"

    def __init__(self, matrix):
        K = np.array(matrix, dtype=float)
        if K.ndim != 2 or K.shape[0] != K.shape[1]:
            raise NonlinearityError("linear map needs a square matrix")
        super().__init__(K.shape[0], float(np.linalg.norm(K, 2)))
        self.matrix = K

    def _eval(self, U):
        return self.matrix @ U

    def jacobian(self, u):
        return self.matrix.copy()

    def params(self):
        return {"matrix": self.matrix.tolist()}


class DiagonalLinear(LinearMap):
    kind = "diagonal_linear"

    def __init__(self, c, modes: Optional[int] = None):
        c = np.atleast_1d(np.asarray(c, dtype=float))
        if c.size == 1 and modes is not None:
            c = np.full(modes, c[0])
        super().__init__(np.diag(c))
        self.c = c
        self.declared_L = float(np.max(np.abs(c)))

    def _eval(self, U):
        return self.c[:, None] * U

    def params(self):
        return {"c": self.c.tolist()}


class GapBlocker(LinearMap):
    """Splits the gap between modes ``N`` and ``N+1``, optionally with a rotation.

    ``F e_N = -(gap/2) e_N + delta e_{N+1}``,
    ``F e_{N+1} = (gap/2) e_{N+1} - delta e_N``.
    """
    kind = "gap_blocker"

    def __init__(self, modes: int, N: int, gap: float, delta_rot: float = 0.0):
        if not 1 <= N < modes:
            raise NonlinearityError("gap blocker needs 1 <= N < modes")
        if delta_rot < 0:
            raise NonlinearityError("delta_rot must be nonnegative")
        K = np.zeros((modes, modes))
        i = N - 1
        K[i, i] = -gap / 2.0
        K[i + 1, i + 1] = gap / 2.0
        K[i + 1, i] = delta_rot
        K[i, i + 1] = -delta_rot
        super().__init__(K)
        # the block is (gap/2) times a reflection plus a rotation: exact norm
        self.declared_L = math.hypot(gap / 2.0, delta_rot)
        self.N, self.gap, self.delta_rot = N, gap, delta_rot

    def params(self):
        return {"N": self.N, "gap": self.gap, "delta_rot": self.delta_rot}


def build_gap_blocker(seq: EigenvalueSequence, N: int, delta_rot: float = 0.0,
                      modes: Optional[int] = None) -> GapBlocker:
    modes = seq.count if modes is None else modes
    if N + 1 > modes:
        raise NonlinearityError(f"N + 1 = {N + 1} exceeds mode count {modes}")
    return GapBlocker(modes, N, seq[N + 1] - seq[N], delta_rot)


class Counterexample(NonlinearityModel):
    """Diagonal nonlinearity with equilibria ``0`` and ``R e_1`` and prescribed linearisations.

    ``F(u) = f_1(u_1) e_1 + sum_{n>=2} (Fp_n phi(u_1/R) + Fm_n phi(1 - u_1/R)) arctan(u_n) e_n``
    where ``f_1`` is the mollified maximum of ``-g z`` and
    ``(L - delta)(z - R) + lambda_1 R`` with ``g = (lambda_2 - lambda_1)/2``.
    """
    kind = "counterexample"

    def __init__(self, lam: np.ndarray, F_plus: np.ndarray, F_minus: np.ndarray, L: float,
                 delta: float, R: float, mollifier_fraction: float = 0.05):
        lam = np.asarray(lam, dtype=float)
        modes = lam.size
        super().__init__(modes, L)
        self.lam1 = float(lam[0])
        self.F_plus = np.asarray(F_plus, dtype=float)
        self.F_minus = np.asarray(F_minus, dtype=float)
        self.L, self.delta, self.R = float(L), float(delta), float(R)
        self.g = -self.F_plus[0]
        self.slope_hi = self.F_minus[0]
        self.mollifier_fraction = float(mollifier_fraction)
        self.mollifier = BumpMollifier(mollifier_fraction * R)
        # kink of max{-g z, s_hi (z - R) + lam1 R}
        self.kink = R * (self.slope_hi - self.lam1) / (self.slope_hi + self.g)
        w = self.mollifier.width
        if not (self.kink - w > 0 and self.kink + w < R):
            raise NonlinearityError("mollifier overlaps an equilibrium; reduce the width")

    def f1(self, z):
        z = np.asarray(z, dtype=float)
        x = z - self.kink
        w = self.mollifier.width
        out = -self.g * z + (self.slope_hi + self.g) * self.mollifier.ramp(x)
        # on the upper affine piece use its own formula so f1(R) = lam1 R exactly
        upper = self.slope_hi * (z - self.R) + self.lam1 * self.R
        return np.where(x >= w, upper, np.where(x <= -w, -self.g * z, out))

    def f1_d1(self, z):
        x = np.asarray(z, dtype=float) - self.kink
        return -self.g + (self.slope_hi + self.g) * self.mollifier.ramp_d1(x)

    def _coef(self, u1):
        s = np.asarray(u1, dtype=float) / self.R
        a, b = cutoff(s), cutoff(1.0 - s)
        return self.F_plus[1:, None] * a + self.F_minus[1:, None] * b

    def _coef_d1(self, u1):
        s = np.asarray(u1, dtype=float) / self.R
        a, b = cutoff_d1(s) / self.R, -cutoff_d1(1.0 - s) / self.R
        return self.F_plus[1:, None] * a + self.F_minus[1:, None] * b

    def _eval(self, U):
        out = np.empty_like(U)
        out[0] = self.f1(U[0])
        out[1:] = self._coef(U[0]) * np.arctan(U[1:])
        return out

    def jacobian(self, u):
        u = np.asarray(u, dtype=float)
        J = np.zeros((self.modes, self.modes))
        J[0, 0] = float(self.f1_d1(u[0]))
        coef = self._coef(np.array([u[0]]))[:, 0]
        dcoef = self._coef_d1(np.array([u[0]]))[:, 0]
        idx = np.arange(1, self.modes)
        J[idx, idx] = coef / (1.0 + u[1:] ** 2)
        J[1:, 0] = dcoef * np.arctan(u[1:])
        return J

    def jacobian_bound(self) -> float:
        """Rigorous bound on ``sup_u ||DF(u)||_2``.

        Diagonal entries are bounded by the largest ``|F^+-_n|``, and the
        first column by ``(pi/2) sup|phi'| / R`` times the larger tail norm (the
        two cut-offs switch on disjoint ranges of ``u_1``).
        """
        diag = max(self.g, abs(self.slope_hi), float(np.max(np.abs(self.F_plus[1:]), initial=0.0)),
                   float(np.max(np.abs(self.F_minus[1:]), initial=0.0)))
        col = (math.pi / 2.0) * CUTOFF_D1_SUP / self.R * max(
            float(np.linalg.norm(self.F_plus[1:])), float(np.linalg.norm(self.F_minus[1:])))
        return diag + col

    def equilibria(self) -> tuple[np.ndarray, np.ndarray]:
        plus = np.zeros(self.modes)
        minus = np.zeros(self.modes)
        minus[0] = self.R
        return plus, minus

    def probe_points(self, rng, count):
        P = np.zeros((self.modes, count))
        P[0] = rng.uniform(-0.25 * self.R, 1.25 * self.R, count)
        P[1:] = rng.normal(scale=0.5, size=(self.modes - 1, count))
        # half of the points sit on the u_1 axis, where arctan'(u_n) = 1
        P[1:, ::2] *= 1e-3
        return P

    def params(self):
        return {"F_plus": self.F_plus.tolist(), "F_minus": self.F_minus.tolist(),
                "L": self.L, "delta": self.delta, "R": self.R,
                "mollifier_fraction": self.mollifier_fraction,
                "cutoff": "quintic smoothstep"}


def counterexample_diagonals(lam: np.ndarray, n_cr: int, L: float, delta: float):
    """Diagonal entries of the linearisations at ``0`` and ``R e_1``.

    Pairs ``(k, k+1)`` carry ``-/+ (lambda_{k+1} - lambda_k)/2``: odd ``k`` at
    ``0``, even ``k`` at ``R e_1``.  A pair is kept only when ``k <= n_cr``,
    which is exactly the range where the no-gap assumption bounds its
    entries by ``L``; all other entries are zero.
    """
    M = lam.size
    Fp = np.zeros(M)
    Fm = np.zeros(M)
    Fm[0] = L - delta
    for k in range(1, M):
        if k > n_cr:
            break
        half = (lam[k] - lam[k - 1]) / 2.0
        target = Fp if k % 2 == 1 else Fm
        target[k - 1] = -half
        target[k] = half
    return Fp, Fm


def build_counterexample(seq: EigenvalueSequence, eps: float, L: float, delta: float,
                         R: Optional[float] = None, mollifier_fraction: float = 0.05,
                         modes: Optional[int] = None, seed: int = 0,
                         max_doublings: int = 20) -> Counterexample:
    """Construct the two-equilibrium counterexample for the given ``(eps, L)``.

    When ``R`` is omitted it starts at 10 and doubles until both the rigorous
    Jacobian bound and the sampled Lipschitz constant are below ``L``.
    """
    modes = seq.count if modes is None else modes
    lam = seq.values[:modes]
    n_cr = critical_index(seq.truncate(modes), eps)
    if n_cr is None:
        n_cr = modes - 1
    n_cr = min(n_cr, modes - 1)
    if n_cr >= 1:
        gaps = np.diff(lam[:n_cr + 1])
        worst = int(np.argmax(gaps))
        if not gaps[worst] < 2.0 * L:
            raise NonlinearityError(
                f"no-gap condition fails: lambda_{worst + 2} - lambda_{worst + 1} = "
                f"{gaps[worst]:.6g} >= 2L = {2 * L:.6g}")
    if not L - delta > lam[0]:
        raise NonlinearityError(f"need L - delta > lambda_1: {L - delta:.6g} <= {lam[0]:.6g}")
    if not 0 < delta:
        raise NonlinearityError("delta must be positive")
    if modes < 2:
        raise NonlinearityError("need at least two modes")
    Fp, Fm = counterexample_diagonals(lam, n_cr, L, delta)
    if R is not None:
        return Counterexample(lam, Fp, Fm, L, delta, R, mollifier_fraction)
    R = 10.0
    for _ in range(max_doublings):
        F = Counterexample(lam, Fp, Fm, L, delta, R, mollifier_fraction)
        if F.jacobian_bound() < L and lipschitz_estimate(F, 400, 1.0, seed) < L:
            return F
        R *= 2.0
    raise NonlinearityError("could not find R with Lipschitz constant below L")


class NemytskiiSine1D(NonlinearityModel):
    """``F(u) = P[f(S u + G) - f(G)]`` for Dirichlet sine modes on ``(0, length)``.

    ``S`` samples the sine series at ``4 * modes`` midpoints and ``P = S^T W``
    is the matching midpoint-rule projection, so ``P S = I`` exactly and the
    Lipschitz constant is at most ``sup |f'|``.
    """
    kind = "nemytskii_sine1d"

    def __init__(self, func: ScalarFunction, modes: int, length: float = math.pi,
                 shift: Optional[np.ndarray] = None, oversample: int = 4):
        super().__init__(modes, func.sup_df)
        if not math.isfinite(func.sup_df):
            raise NonlinearityError(f"{func.name} is not globally Lipschitz; cut it off first")
        self.func = func
        self.length = float(length)
        J = oversample * modes
        x = (np.arange(J) + 0.5) * self.length / J
        self.x = x
        self.weight = self.length / J
        n = np.arange(1, modes + 1)
        self.S = math.sqrt(2.0 / self.length) * np.sin(np.outer(x, n) * math.pi / self.length)
        self.P = self.S.T * self.weight
        self.shift = np.zeros(modes) if shift is None else np.asarray(shift, dtype=float).copy()
        if self.shift.shape != (modes,):
            raise NonlinearityError("shift profile must have one coefficient per mode")
        self._g = self.S @ self.shift
        self._fg = func.f(self._g)

    def check_basis(self, seq):
        super().check_basis(seq)
        gen = seq.generator
        if not (isinstance(gen, Dirichlet1D) and abs(gen.length - self.length) <= 1e-12 * self.length):
            raise UnsupportedBasisError(
                "Nemytskii operator needs the Dirichlet sine basis on (0, %g)" % self.length)

    def _eval(self, U):
        vals = self.func.f(self.S @ U + self._g[:, None]) - self._fg[:, None]
        return self.P @ vals

    def jacobian(self, u):
        d = self.func.df(self.S @ np.asarray(u, dtype=float) + self._g)
        return self.P @ (d[:, None] * self.S)

    def to_grid(self, u):
        return self.S @ np.asarray(u, dtype=float)

    def from_grid(self, values):
        return self.P @ np.asarray(values, dtype=float)

    def params(self):
        return {"function": self.func.name, "function_params": self.func.params,
                "length": self.length, "shift": self.shift.tolist()}


class ShiftedCutoff(NemytskiiSine1D):
    """``F(u) = fbar(u + G) - fbar(G)`` for a cut-off scalar ``fbar`` and shift ``G``."""
    kind = "shifted_cutoff"

    def __init__(self, fbar: ScalarFunction, modes: int, shift: np.ndarray, cut_radius: float,
                 length: float = math.pi):
        super().__init__(fbar, modes, length, shift)
        self.cut_radius = float(cut_radius)

    def params(self):
        return {**super().params(), "cut_radius": self.cut_radius}


# ---------------------------------------------------------------------------
# Lipschitz sampling

def lipschitz_estimate(F: NonlinearityModel, count: int = 200, radius: float = 1.0,
                       seed: int = 0) -> float:
    """Largest ``||F(u1) - F(u2)|| / ||u1 - u2||`` over a deterministic sample.

    The sample contains the pairs ``(0, radius e_n)`` for every mode, random
    pairs in the ball of the given radius, and close pairs around random and
    model-specific base points, which see the local derivative.
    """
    if count < 2:
        raise NonlinearityError("count must be at least 2")
    M = F.modes
    rng = np.random.default_rng(seed)
    a_cols = [np.zeros((M, M))]
    b_cols = [radius * np.eye(M)]
    U1 = rng.normal(size=(M, count))
    U1 *= radius * rng.uniform(0, 1, count) ** (1.0 / M) / np.linalg.norm(U1, axis=0)
    U2 = rng.normal(size=(M, count))
    U2 *= radius * rng.uniform(0, 1, count) ** (1.0 / M) / np.linalg.norm(U2, axis=0)
    a_cols += [U1]
    b_cols += [U2]
    base = np.concatenate([U1, F.probe_points(rng, count)], axis=1)
    D = rng.normal(size=base.shape)
    # every other close pair moves along a single coordinate, where diagonal
    # maps attain their norm
    coord = np.arange(base.shape[1]) % 2 == 1
    D[:, coord] = np.eye(M)[:, rng.integers(0, M, int(coord.sum()))]
    D /= np.linalg.norm(D, axis=0)
    step = radius * 10.0 ** rng.uniform(-4, -1, base.shape[1])
    a_cols += [base]
    b_cols += [base + step * D]
    A = np.concatenate(a_cols, axis=1)
    B = np.concatenate(b_cols, axis=1)
    num = np.linalg.norm(F(A) - F(B), axis=0)
    den = np.linalg.norm(A - B, axis=0)
    keep = den > 0
    return float(np.max(num[keep] / den[keep]))


# ---------------------------------------------------------------------------
# equilibria

@dataclass(frozen=True)
class EquilibriumSpectrum:
    equilibrium: np.ndarray
    diagonal: np.ndarray
    nu: np.ndarray
    collisions: list
    eps: float

    def as_dict(self) -> dict:
        return {"equilibrium_norm": float(np.linalg.norm(self.equilibrium)),
                "diagonal": self.diagonal.tolist(),
                "nu_real": self.nu.real.tolist(), "nu_imag": self.nu.imag.tolist(),
                "collisions": list(self.collisions)}


def pencil_roots(kappa, eps: float) -> np.ndarray:
    """Roots of ``eps nu^2 + nu + kappa = 0`` (one root ``-kappa`` when ``eps = 0``)."""
    kappa = np.asarray(kappa, dtype=complex)
    if eps == 0:
        return -kappa
    s = np.sqrt(1.0 - 4.0 * eps * kappa)
    plus = -2.0 * kappa / (1.0 + s)
    minus = -(1.0 + s) / (2.0 * eps)
    return np.concatenate([plus, minus])


def _block_structure(J: np.ndarray, tol: float) -> list[list[int]]:
    """Split indices into 1x1 and adjacent 2x2 blocks; fail on anything else."""
    M = J.shape[0]
    off = np.abs(J - np.diag(np.diag(J))) > tol
    blocks, n = [], 0
    while n < M:
        if n + 1 < M and (off[n, n + 1] or off[n + 1, n]):
            blocks.append([n, n + 1])
            n += 2
        else:
            blocks.append([n])
            n += 1
    for b in blocks:
        mask = np.ones(M, dtype=bool)
        mask[b] = False
        if np.any(off[np.ix_(b, np.flatnonzero(mask))]) or np.any(off[np.ix_(np.flatnonzero(mask), b)]):
            raise NonlinearityError("Jacobian at the equilibrium is not (block-)diagonal")
    return blocks


def equilibrium_spectrum(F: NonlinearityModel, u0, eps: float, seq: EigenvalueSequence,
                         count: Optional[int] = None, tol: float = 1e-10) -> EquilibriumSpectrum:
    """Pencil eigenvalues of the linearisation at an equilibrium, by decreasing real part."""
    u0 = np.asarray(u0, dtype=float)
    M = F.modes
    lam = seq.values[:M]
    defect = float(np.linalg.norm(lam * u0 - F(u0)))
    if defect > 1e-10 * max(1.0, float(np.linalg.norm(lam * u0))):
        raise NonlinearityError(f"not an equilibrium: ||A u0 - F(u0)|| = {defect:.3g}")
    J = F.jacobian(u0)
    # cross-check the closed-form Jacobian by central differences
    hstep = 1e-6 * max(1.0, float(np.linalg.norm(u0)))
    E = np.eye(M) * hstep
    fd = (F(u0[:, None] + E) - F(u0[:, None] - E)) / (2.0 * hstep)
    if np.max(np.abs(fd - J)) > 1e-5 * max(1.0, float(np.max(np.abs(J)))):
        raise NonlinearityError("closed-form Jacobian disagrees with finite differences")
    blocks = _block_structure(J, 1e-12)
    kappas = []
    for b in blocks:
        K = np.diag(lam[b]) - J[np.ix_(b, b)]
        kappas.extend(np.linalg.eigvals(K) if len(b) == 2 else [K[0, 0]])
    nu = pencil_roots(np.array(kappas), eps)
    order = np.lexsort((-nu.imag, -nu.real))
    nu = nu[order]
    if count is not None:
        nu = nu[:count]
    re = nu.real
    collisions = [i + 1 for i in range(len(nu) - 1)
                  if abs(re[i] - re[i + 1]) <= tol * max(1.0, abs(re[i]))]
    return EquilibriumSpectrum(u0.copy(), np.diag(J).copy(), nu, collisions, eps)


def admissible_dimensions(spec: EquilibriumSpectrum, tol: float = 1e-10) -> list[int]:
    """All ``N`` with ``0 > Re nu_N > Re nu_{N+1}`` (strictly, beyond ``tol``)."""
    re = spec.nu.real
    out = []
    for N in range(1, len(re)):
        a, b = re[N - 1], re[N]
        scale = max(1.0, abs(a))
        if a < -tol * scale and a - b > tol * scale:
            out.append(N)
    return out


def normal_hyperbolicity_gaps(spectra) -> list[int]:
    """Dimensions admissible at every equilibrium; empty means no candidate exists."""
    if isinstance(spectra, EquilibriumSpectrum):
        spectra = [spectra]
    sets = [set(admissible_dimensions(s)) for s in spectra]
    if not sets:
        return []
    return sorted(set.intersection(*sets))
