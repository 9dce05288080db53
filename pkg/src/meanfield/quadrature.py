"""Gaussian expectations of activation values and derivatives.

One- and two-dimensional standard-normal expectations are computed by
Gauss-Legendre quadrature on finite pieces of ``[-Z_MAX, Z_MAX]`` with the
Gaussian density folded into the integrand.  Pieces are delimited by the
activation's breakpoints (scaled to the integration variable), so every piece
integrates a smooth function and converges spectrally.  Where the activation
saturates to a constant, the tails are added analytically through ``erfc``.

For the bivariate expectations we integrate over ``(z1, z2)`` with::

    U1 = sqrt(q) z1
    U2 = sqrt(q) (rho z1 + sqrt(1 - rho^2) z2)

The inner ``z2`` integral is split where ``U2`` crosses a breakpoint (a
different location for every outer node).  For piecewise-linear activations
it is evaluated in closed form through the normal CDF and density instead.  The outer integral is split at
the breakpoints of ``U1`` and, for ``|rho|`` close to one, at a geometric
cluster of points around where the inner integral changes rapidly.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy import special

from .activations import Activation

Z_MAX = 12.0
# |rho| above this is treated as +-1 (U2 = +-U1)
RHO_DEGENERATE = 1.0 - 1e-8

MODES_1D = ("phi", "phi_sq", "dphi_sq", "dphi_pow")
MODES_2D = ("phi_phi", "dphi_dphi")

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
_BASE_KNOTS = np.arange(-Z_MAX, Z_MAX + 0.5, 2.0)
_NODES_2D = 16
# bound on array elements held at once by the inner quadrature
_CHUNK_ELEMS = 2_000_000


@lru_cache(maxsize=None)
def _legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    return np.polynomial.legendre.leggauss(n)


def _pdf(z):
    return _INV_SQRT_2PI * np.exp(-0.5 * z * z)


def _edges(knots, lo: float, hi: float, max_len: float) -> np.ndarray:
    """Sorted segment edges on [lo, hi] through ``knots``, no piece longer than max_len."""
    pts = [lo, hi] + [float(x) for x in knots if lo < x < hi]
    pts = np.unique(pts)
    out = [pts[:1]]
    for a, b in zip(pts[:-1], pts[1:]):
        m = max(1, math.ceil((b - a) / max_len))
        out.append(np.linspace(a, b, m + 1)[1:])
    return np.concatenate(out)


def _gauss_legendre(func, edges: np.ndarray, n: int) -> float:
    """Integrate ``func(z) * pdf(z)`` over the pieces delimited by ``edges``."""
    x, w = _legendre(n)
    half = 0.5 * (edges[1:] - edges[:-1])
    mid = 0.5 * (edges[1:] + edges[:-1])
    z = mid[:, None] + half[:, None] * x[None, :]
    weights = half[:, None] * w[None, :] * _pdf(z)
    return float(np.sum(func(z) * weights))


def gaussian_expectation(func, knots=(), lo: float = -Z_MAX, hi: float = Z_MAX,
                         max_len: float = 2.0, rtol: float = 1e-13) -> float:
    """``E[func(Z)]`` restricted to ``[lo, hi]``, split at ``knots``.

    The node count per piece is doubled until two successive estimates agree
    to ``rtol`` (relative) or ``1e-16`` (absolute).
    """
    edges = _edges(knots, lo, hi, max_len)
    n = 32
    prev = _gauss_legendre(func, edges, n)
    while n < 1024:
        n *= 2
        cur = _gauss_legendre(func, edges, n)
        if abs(cur - prev) <= max(rtol * abs(cur), 1e-16):
            return cur
        prev = cur
    return prev


def _max_piece(act: Activation, q: float) -> float:
    period = act.oscillation_period
    if period is None:
        return 2.0
    return min(2.0, period / math.sqrt(q))


def _integrand_1d(act: Activation, q: float, mode: str, power: int):
    root = math.sqrt(q)
    if mode == "phi":
        return lambda z: act.phi(root * z)
    if mode == "phi_sq":
        return lambda z: act.phi(root * z) ** 2
    if mode == "dphi_sq":
        return lambda z: act.dphi(root * z) ** 2
    if mode == "dphi_pow":
        return lambda z: act.dphi(root * z) ** (2 * power)
    raise ValueError(f"unknown mode {mode!r}; expected one of {MODES_1D}")


def expect_1d(act: Activation, q: float, mode: str, power: int = 1) -> float:
    """Standard-normal expectation of an activation functional at scale ``q``.

    ``mode`` selects the integrand evaluated at ``u = sqrt(q) Z``:

    ``phi``        phi(u)
    ``phi_sq``     phi(u)^2
    ``dphi_sq``    phi'(u)^2
    ``dphi_pow``   phi'(u)^(2 * power)
    """
    if not q > 0:
        raise ValueError(f"q must be positive, got {q}")
    if mode == "dphi_pow" and (int(power) != power or power < 1):
        raise ValueError(f"power must be a positive integer, got {power}")
    func = _integrand_1d(act, q, mode, int(power))
    root = math.sqrt(q)
    knots = _feature_knots(act, Z_MAX * root) / root

    zmax, tail = Z_MAX, 0.0
    sat = act.saturation_start
    if sat is not None and sat / root < Z_MAX:
        # outside the last breakpoint phi = +-a*k and phi' = 0
        zmax = sat / root
        if mode == "phi_sq":
            tail = (act.a * act.k) ** 2 * special.erfc(zmax / math.sqrt(2.0))
    body = gaussian_expectation(func, knots, -zmax, zmax, _max_piece(act, q))
    return body + tail


def _feature_knots(act: Activation, span: float) -> np.ndarray:
    """Points in preactivation units on ``[-span, span]`` that bracket the shape of ``phi``.

    Breakpoints always; smooth transitions get a geometric ladder and the
    oscillating tail a knot every quarter period.
    """
    pts = list(act.breakpoints)
    if act.kind in ("tanh", "erf"):
        pts += [0.0] + [2.0 ** j for j in range(-3, 4)]
    elif act.kind == "ssoftsign":
        s = 0.5 * act.a
        while s < span:
            pts.append(act.a + s)
            s *= 2.0
    elif act.kind == "ssinusoid":
        step = 0.5 * math.pi * act.a
        pts += list(act.a + step * np.arange(1, min(math.ceil(span / step), 4000) + 1))
    pts = np.unique(np.abs(pts))
    pts = pts[pts <= span]
    return np.concatenate([-pts[::-1], pts])


def _funcs_2d(act: Activation, mode: str):
    if mode == "phi_phi":
        return act.phi, act.phi
    if mode == "dphi_dphi":
        return act.dphi, act.dphi
    raise ValueError(f"unknown mode {mode!r}; expected one of {MODES_2D}")


def _outer_knots(act: Activation, q: float, rho: float, c: float) -> list[float]:
    root = math.sqrt(q)
    feats = _feature_knots(act, Z_MAX * root)
    knots = list(feats / root)
    if rho != 0.0:
        knots += [u / (root * rho) for u in feats if abs(u) <= Z_MAX * root * abs(rho)]
        # the inner integral changes over a width ~ c/|rho| around z1 = d/(sqrt(q) rho)
        width = c / abs(rho)
        scales = []
        s = width / 2
        while s < 1.0:
            scales.append(s)
            s *= 2.0
        for d in act.breakpoints:
            z0 = d / (root * rho)
            if abs(z0) > 9.0:
                continue
            knots.append(z0)
            knots.extend(z0 + sgn * s for s in scales for sgn in (-1.0, 1.0))
    return knots


def _inner_expectation(g, act: Activation, mean: np.ndarray, sd: float, n: int) -> np.ndarray:
    """``E[g(mean + sd * Z)]`` for every entry of ``mean``, split at g's breakpoints."""
    x, w = _legendre(n)
    m = mean.shape[0]
    span = float(np.max(np.abs(mean))) + Z_MAX * sd
    feats = _feature_knots(act, span)
    moving = (feats[None, :] - mean[:, None]) / sd
    knots = np.concatenate([np.broadcast_to(_BASE_KNOTS, (m, _BASE_KNOTS.size)), moving], axis=1)
    knots = np.sort(np.clip(knots, -Z_MAX, Z_MAX), axis=1)
    half = 0.5 * (knots[:, 1:] - knots[:, :-1])
    mid = 0.5 * (knots[:, 1:] + knots[:, :-1])
    z = mid[..., None] + half[..., None] * x
    vals = g(mean[:, None, None] + sd * z)
    return np.einsum("ijk,ijk->i", vals, half[..., None] * w * _pdf(z))


def _tail_mass(lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """``P(lo < Z < hi)`` without cancellation in the upper tail."""
    upper = lo > 0
    return np.where(upper, special.ndtr(-lo) - special.ndtr(-hi),
                    special.ndtr(hi) - special.ndtr(lo))


def _inner_linear(act: Activation, mode: str, mean: np.ndarray, sd: float) -> np.ndarray:
    """Closed-form ``E[g(mean + sd * Z)]`` for a piecewise-linear activation."""
    pieces = np.asarray(act.linear_pieces, dtype=float)
    lo, hi, icpt, slope = (pieces[:, i] for i in range(4))
    with np.errstate(invalid="ignore"):
        za = (lo[None, :] - mean[:, None]) / sd
        zb = (hi[None, :] - mean[:, None]) / sd
    mass = _tail_mass(za, zb)
    if mode == "dphi_dphi":
        return mass @ slope
    dens = _pdf(za) - _pdf(zb)
    return np.sum((icpt + slope * mean[:, None]) * mass + slope * sd * dens, axis=1)


def _expect_2d_scalar(act: Activation, q: float, rho: float, mode: str, n: int) -> float:
    f, g = _funcs_2d(act, mode)
    root = math.sqrt(q)
    if abs(rho) > RHO_DEGENERATE:
        sign = 1.0 if rho > 0 else -1.0
        knots = _feature_knots(act, Z_MAX * root) / root
        return gaussian_expectation(lambda z: f(root * z) * g(sign * root * z), knots,
                                    max_len=_max_piece(act, q))
    c = math.sqrt((1.0 - rho) * (1.0 + rho))
    max_len = _max_piece(act, q)
    if act.oscillation_period is not None:
        max_len = min(max_len, act.oscillation_period / (root * max(abs(rho), c)))
    edges = _edges(_outer_knots(act, q, rho, c), -Z_MAX, Z_MAX, max_len)
    x, w = _legendre(n)
    half = 0.5 * (edges[1:] - edges[:-1])
    mid = 0.5 * (edges[1:] + edges[:-1])
    z1 = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    wt = (half[:, None] * w[None, :]).ravel() * _pdf(z1)
    if act.linear_pieces is not None:
        inner = _inner_linear(act, mode, root * rho * z1, root * c)
    else:
        mean = root * rho * z1
        span = float(np.max(np.abs(mean))) + Z_MAX * root * c
        per_row = n * (_BASE_KNOTS.size + _feature_knots(act, span).size)
        step = max(1, _CHUNK_ELEMS // per_row)
        inner = np.concatenate([_inner_expectation(g, act, mean[i:i + step], root * c, n)
                                for i in range(0, mean.size, step)])
    return float(np.sum(f(root * z1) * inner * wt))


def expect_2d(act: Activation, q: float, rho, mode: str, n: int = _NODES_2D):
    """Bivariate expectation ``E[f(U1) g(U2)]`` at correlation ``rho``.

    ``mode`` is ``phi_phi`` (``f = g = phi``) or ``dphi_dphi``
    (``f = g = phi'``).  ``rho`` may be a scalar or an array; ``|rho|`` within
    1e-8 of one uses the exact one-dimensional reduction ``U2 = +-U1``.
    """
    if not q > 0:
        raise ValueError(f"q must be positive, got {q}")
    rhos = np.asarray(rho, dtype=float)
    if np.any(np.abs(rhos) > 1.0) or np.any(np.isnan(rhos)):
        raise ValueError(f"correlation must lie in [-1, 1], got {rho}")
    _funcs_2d(act, mode)
    out = np.array([_expect_2d_scalar(act, q, float(r), mode, n) for r in rhos.ravel()])
    if rhos.ndim == 0:
        return float(out[0])
    return out.reshape(rhos.shape)
