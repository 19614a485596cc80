"""Exact exponential recursions for linear constant-coefficient ODEs.

The forcing is replaced on every step by its cubic interpolant through the
four nearest nodes (linear when ``order=2``), and the variation-of-constants
integral against that interpolant is evaluated exactly through the
phi-functions ``phi_k(z) = int_0^1 e^{z(1-s)} s^{k-1}/(k-1)! ds``.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.linalg import expm
from scipy.signal import lfilter

_SERIES_RADIUS = 2.0
_SERIES_TERMS = 45


def phi_functions(z, kmax: int = 4) -> np.ndarray:
    """``phi_0 .. phi_kmax`` at every entry of ``z``; shape ``(kmax+1,) + z.shape``."""
    z = np.asarray(z, dtype=complex)
    out = np.empty((kmax + 1,) + z.shape, dtype=complex)
    small = np.abs(z) < _SERIES_RADIUS
    zs = np.where(small, z, 0.0)
    zl = np.where(small, 1.0, z)
    out[0] = np.exp(z)
    for k in range(1, kmax + 1):
        # Taylor series near zero, stable upward recurrence elsewhere
        ser = np.zeros(z.shape, dtype=complex)
        term = np.full(z.shape, 1.0 / math.factorial(k), dtype=complex)
        for j in range(_SERIES_TERMS):
            ser += term
            term = term * zs / (j + k + 1)
        rec = (out[k - 1] - 1.0 / math.factorial(k - 1)) / zl
        out[k] = np.where(small, ser, rec)
    return out


def _stencils(order: int, steps: int):
    """Node offsets used on the first, interior and last interval."""
    if order == 2 or steps < 3:
        return (0, 1), (0, 1), (0, 1)
    if order != 4:
        raise ValueError("order must be 2 or 4")
    return (0, 1, 2, 3), (-1, 0, 1, 2), (-2, -1, 0, 1)


def _vandermonde_inverse(offsets) -> np.ndarray:
    tau = np.asarray(offsets, dtype=float)
    V = tau[:, None] ** np.arange(len(tau))[None, :]
    return np.linalg.inv(V)


def _scalar_weights(z: np.ndarray, offsets) -> np.ndarray:
    """``beta_j(z)`` so that ``int_0^1 e^{z(1-s)} g(s) ds = sum_j beta_j g_{k+j}``."""
    Vinv = _vandermonde_inverse(offsets)
    phis = phi_functions(z, len(offsets))
    fact = np.array([math.factorial(m) for m in range(len(offsets))], dtype=float)
    # (modes, m) @ (m, j)
    terms = (phis[1:].T * fact[None, :])
    return terms @ Vinv


def _segment_sums(weights_by_type, stencils, g: np.ndarray) -> np.ndarray:
    K = g.shape[1] - 1
    first, inner, last = stencils
    b = np.zeros((g.shape[0], K), dtype=complex)
    w_first, w_inner, w_last = weights_by_type
    ks = np.arange(K)
    inner_idx = ks[(ks >= -min(inner)) & (ks + max(inner) <= K)]
    if inner_idx.size:
        for j, off in enumerate(inner):
            b[:, inner_idx] += w_inner[:, j:j + 1] * g[:, inner_idx + off]
    for k in ks[~np.isin(ks, inner_idx)]:
        if k < K / 2:
            offs, w = first, w_first
        else:
            offs, w = last, w_last
        for j, off in enumerate(offs):
            b[:, k] += w[:, j] * g[:, k + off]
    return b


def _segments(K: int, breaks) -> list[tuple[int, int]]:
    cuts = sorted({int(k) for k in (breaks or ()) if 0 < k < K})
    edges = [0] + cuts + [K]
    return list(zip(edges[:-1], edges[1:]))


def _forcing_sums(weights_for, order: int, g: np.ndarray, breaks=None) -> np.ndarray:
    """``b_k = sum_j beta_j g_{k+j}`` for every interval ``k``; ``g`` is ``(modes, K+1)``.

    Stencils never straddle a node listed in ``breaks``, so forcing that is
    only piecewise smooth keeps full order when its kinks sit on nodes.
    """
    K = g.shape[1] - 1
    b = np.zeros((g.shape[0], K), dtype=complex)
    for a, e in _segments(K, breaks):
        stencils = _stencils(order, e - a)
        weights = tuple(weights_for(s) for s in stencils)
        b[:, a:e] = _segment_sums(weights, stencils, g[:, a:e + 1])
    return b


def causal(sigma, g: np.ndarray, h: float, order: int = 4, breaks=None) -> np.ndarray:
    """Solve ``w' = sigma w + g`` forward from ``w(t_0) = 0``.

    ``sigma`` has one entry per row of ``g``; the result is complex with the
    shape of ``g``.
    """
    sigma = np.atleast_1d(np.asarray(sigma, dtype=complex))
    g = np.atleast_2d(g)
    z = sigma * h
    cache = {}

    def weights_for(offs):
        if offs not in cache:
            cache[offs] = _scalar_weights(z, offs)
        return cache[offs]

    b = h * _forcing_sums(weights_for, order, g, breaks)
    w = np.zeros(g.shape, dtype=complex)
    decay = np.exp(z)
    for n in range(g.shape[0]):
        w[n, 1:] = lfilter([1.0], [1.0, -decay[n]], b[n])
    return w


def anticausal(sigma, g: np.ndarray, h: float, order: int = 4, breaks=None) -> np.ndarray:
    """Solve ``w' = sigma w + g`` backward from ``w(t_K) = 0``."""
    sigma = np.atleast_1d(np.asarray(sigma, dtype=complex))
    g = np.atleast_2d(g)
    K = g.shape[1] - 1
    rbreaks = None if breaks is None else [K - k for k in breaks]
    return causal(-sigma, -g[:, ::-1], h, order, rbreaks)[:, ::-1]


def oscillator(stiff: np.ndarray, damp: np.ndarray, eps: float, g: np.ndarray, h: float,
               order: int = 4, breaks=None) -> tuple[np.ndarray, np.ndarray]:
    """Causal solve of ``eps y'' + damp y' + stiff y = g`` in real 2x2 form.

    Used when the two characteristic roots nearly coincide, where the
    partial-fraction splitting loses accuracy.  Returns ``(y, y')`` with zero
    state at ``t_0``.
    """
    g = np.atleast_2d(np.asarray(g, dtype=float))
    q = 4 if order == 4 else 2
    y = np.zeros(g.shape)
    dy = np.zeros(g.shape)
    fact = np.array([math.factorial(m) for m in range(q)], dtype=float)
    for n in range(g.shape[0]):
        # state (y, y', g, g', ...) with g a polynomial of degree q-1
        M = np.zeros((2 + q, 2 + q))
        M[0, 1] = 1.0
        M[1, 0] = -stiff[n] / eps
        M[1, 1] = -damp[n] / eps
        M[1, 2] = 1.0 / eps
        for m in range(q - 1):
            M[2 + m, 3 + m] = 1.0
        P = expm(M * h)
        E, Kd = P[:2, :2], P[:2, 2:]

        def weights_for(offs, c):
            Vinv = _vandermonde_inverse(offs)
            qq = len(offs)
            # derivatives at the left node: g^(m) = m! c_m / h^m
            D = (fact[:qq] / h ** np.arange(qq))[:, None] * Vinv
            return (Kd[c:c + 1, :qq] @ D).astype(complex)

        forcing = np.stack([
            _forcing_sums(lambda offs, c=c: weights_for(offs, c), order, g[n:n + 1], breaks)[0].real
            for c in range(2)])                         # (2, K)
        tr = np.trace(E)
        det = np.linalg.det(E)
        prev = np.zeros_like(forcing)
        prev[:, 1:] = forcing[:, :-1]
        drive = forcing + (E - tr * np.eye(2)) @ prev
        for c, out in enumerate((y, dy)):
            out[n, 1:] = lfilter([1.0], [1.0, -tr, det], drive[c])
    return y, dy
