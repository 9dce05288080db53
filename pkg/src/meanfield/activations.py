"""Activation functions: the scaled-bounded family and smooth comparison activations.

A scaled-bounded activation is odd, continuous, equal to ``k * z`` on
``[-a, a]``, bounded by ``a * k`` and has derivative bounded by ``k`` away
from a finite breakpoint set ``D``.  Four members are provided:

``shtanh``
    ``k * z`` inside the linear region, ``sign(z) * a * k`` outside.
``ssoftsign``
    Beyond ``a`` the output relaxes from ``a*k`` towards ``a*k/2`` with a
    reciprocal (softsign-style) tail ``(a*k/2) * (1 + a / |z|)``.
``ssinusoid``
    Beyond ``a`` the output oscillates as ``a*k*cos((|z| - a) / a)``.
``shard-saw``
    Beyond ``a`` a triangle wave of slope ``+-k`` between ``+-a*k`` for two
    full periods (up to ``|z| = 9a``), then constant ``a*k``.

The tail shapes of the last three are free choices; every one of them meets
the defining properties above, which is all the theory depends on.

``tanh``, ``erf``, ``relu`` and ``htanh`` are included for comparing
edge-of-chaos curves.  ``htanh`` is ``shtanh`` with ``a = k = 1``.

Derivatives are the symmetrised one-sided derivative
``0.5 * (phi'(z-) + phi'(z+))`` so that they are defined everywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

SCALED_BOUNDED_KINDS = ("shtanh", "ssoftsign", "ssinusoid", "shard-saw")
COMPARISON_KINDS = ("tanh", "erf", "relu", "htanh")
KINDS = SCALED_BOUNDED_KINDS + COMPARISON_KINDS

_ALIASES = {"ssoftsign-like": "ssoftsign", "shardsaw": "shard-saw"}

# number of full triangle periods in the shard-saw tail
_SAW_PERIODS = 2


class ActivationError(ValueError):
    """Invalid activation kind or shape parameters."""


@dataclass(frozen=True)
class Activation:
    """An immutable activation function.

    Use :func:`make_activation` rather than constructing directly.  For the
    smooth comparison kinds (``tanh``, ``erf``, ``relu``) the fields ``a`` and
    ``k`` are nominal (both 1) and carry no meaning.
    """

    name: str
    kind: str
    a: float
    k: float
    breakpoints: tuple[float, ...]

    @property
    def scaled_bounded(self) -> bool:
        return self.kind in SCALED_BOUNDED_KINDS or self.kind == "htanh"

    @property
    def odd(self) -> bool:
        return self.kind != "relu"

    @property
    def saturation_start(self) -> float | None:
        """Magnitude beyond which ``phi`` is constant (``+-a*k``), if any."""
        if self.kind in ("shtanh", "htanh"):
            return self.a
        if self.kind == "shard-saw":
            return self.a * (1 + 4 * _SAW_PERIODS)
        return None

    @property
    def oscillation_period(self) -> float | None:
        """Period of an oscillating tail in preactivation units."""
        if self.kind == "ssinusoid":
            return 2.0 * math.pi * self.a
        return None

    @property
    def linear_pieces(self) -> tuple[tuple[float, float, float, float], ...] | None:
        """``(lo, hi, intercept, slope)`` for piecewise-linear kinds, else None.

        The pieces tile the real line; ``phi(u) = intercept + slope * u`` on
        ``[lo, hi]``.
        """
        a, k = self.a, self.k
        if self.kind == "relu":
            return ((-math.inf, 0.0, 0.0, 0.0), (0.0, math.inf, 0.0, 1.0))
        if self.kind not in ("shtanh", "htanh", "shard-saw"):
            return None
        pos = [(0.0, a, 0.0, k)]
        knots = [d for d in self.breakpoints if d > 0] + [math.inf]
        for j, (lo, hi) in enumerate(zip(knots[:-1], knots[1:])):
            if hi == math.inf:
                pos.append((lo, hi, a * k, 0.0))
                continue
            start = a * k if j % 2 == 0 else -a * k
            slope = -k if j % 2 == 0 else k
            pos.append((lo, hi, start - slope * lo, slope))
        neg = [(-hi, -lo, -c, s) for lo, hi, c, s in reversed(pos[1:])]
        first = pos[0]
        return tuple(neg + [(-first[1], first[1], 0.0, k)] + pos[1:])

    @property
    def spec(self) -> str:
        """The ``kind:a:k`` string that reproduces this activation."""
        if self.kind in ("tanh", "erf", "relu", "htanh"):
            return self.kind
        return f"{self.kind}:{self.a!r}:{self.k!r}"

    def __call__(self, z):
        return self.phi(z)

    def phi(self, z):
        z = np.asarray(z, dtype=float)
        out = _PHI[self.kind](self, z)
        return float(out) if out.ndim == 0 else out

    def dphi(self, z):
        z = np.asarray(z, dtype=float)
        out = _DPHI[self.kind](self, z)
        return float(out) if out.ndim == 0 else out


# --- scaled-bounded kinds -------------------------------------------------
#
# Each is written as phi(z) = sign(z) * g(|z|) so oddness holds bit-for-bit,
# with g(t) = k*t on [0, a].  Derivatives are assembled from piece slopes on
# t >= 0: pieces are delimited by `knots` and the one-sided slopes at a knot
# come from the piece on either side.


def _knots(act: Activation) -> np.ndarray:
    return np.array([0.0] + [d for d in act.breakpoints if d > 0])


def _tail_value(act: Activation, t: np.ndarray) -> np.ndarray:
    a, k = act.a, act.k
    s = t - a
    if act.kind in ("shtanh", "htanh"):
        return np.full_like(t, a * k)
    if act.kind == "ssoftsign":
        return 0.5 * a * k * (1.0 + a / (a + s))
    if act.kind == "ssinusoid":
        return a * k * np.cos(s / a)
    if act.kind == "shard-saw":
        end = 4 * _SAW_PERIODS * a
        m = np.mod(np.minimum(s, end), 4 * a)
        m = np.where(s >= end, 0.0, m)
        return k * np.abs(m - 2 * a) - a * k
    raise AssertionError(act.kind)


def _piece_slope(act: Activation, piece: np.ndarray, t: np.ndarray) -> np.ndarray:
    a, k = act.a, act.k
    s = t - a
    if act.kind in ("shtanh", "htanh"):
        tail = np.zeros_like(t)
    elif act.kind == "ssoftsign":
        tail = -0.5 * k * (a / (a + np.maximum(s, 0.0))) ** 2
    elif act.kind == "ssinusoid":
        tail = -k * np.sin(s / a)
    elif act.kind == "shard-saw":
        # pieces 1..2P alternate -k, +k; the final piece is flat
        last = 2 * _SAW_PERIODS + 1
        tail = np.where(piece % 2 == 1, -k, k).astype(float)
        tail = np.where(piece >= last, 0.0, tail)
    else:
        raise AssertionError(act.kind)
    return np.where(piece == 0, k, tail)


def _bounded_phi(act: Activation, z: np.ndarray) -> np.ndarray:
    t = np.abs(z)
    inside = t <= act.a
    tail = _tail_value(act, np.where(inside, act.a, t))
    return np.where(inside, act.k * z, np.sign(z) * tail)


def _bounded_dphi(act: Activation, z: np.ndarray) -> np.ndarray:
    t = np.abs(z)
    knots = _knots(act)
    left = np.maximum(np.searchsorted(knots, t, side="left") - 1, 0)
    right = np.searchsorted(knots, t, side="right") - 1
    return 0.5 * (_piece_slope(act, left, t) + _piece_slope(act, right, t))


# --- comparison kinds -----------------------------------------------------

_ERF_SLOPE = 2.0 / math.sqrt(math.pi)


def _relu_dphi(act: Activation, z: np.ndarray) -> np.ndarray:
    return np.where(z > 0, 1.0, np.where(z < 0, 0.0, 0.5))


_PHI = {
    "shtanh": _bounded_phi,
    "ssoftsign": _bounded_phi,
    "ssinusoid": _bounded_phi,
    "shard-saw": _bounded_phi,
    "htanh": _bounded_phi,
    "tanh": lambda act, z: np.tanh(z),
    "erf": lambda act, z: special.erf(z),
    "relu": lambda act, z: np.maximum(z, 0.0),
}

_DPHI = {
    "shtanh": _bounded_dphi,
    "ssoftsign": _bounded_dphi,
    "ssinusoid": _bounded_dphi,
    "shard-saw": _bounded_dphi,
    "htanh": _bounded_dphi,
    "tanh": lambda act, z: 1.0 - np.tanh(z) ** 2,
    "erf": lambda act, z: _ERF_SLOPE * np.exp(-z * z),
    "relu": _relu_dphi,
}


def _positive_breakpoints(kind: str, a: float) -> list[float]:
    if kind in ("shtanh", "htanh", "ssoftsign", "ssinusoid"):
        return [a]
    if kind == "shard-saw":
        return [a * (2 * i + 1) for i in range(2 * _SAW_PERIODS + 1)]
    return []


def make_activation(kind: str, a: float = 1.0, k: float = 1.0) -> Activation:
    """Build an activation of the given kind.

    ``a`` is the half-width of the linear region and ``k`` its slope.  Both
    are ignored for ``tanh``, ``erf`` and ``relu``; ``htanh`` always uses
    ``a = k = 1``.
    """
    kind = _ALIASES.get(kind, kind)
    if kind not in KINDS:
        raise ActivationError(f"unknown activation kind {kind!r}; expected one of {KINDS}")
    if kind in SCALED_BOUNDED_KINDS:
        a, k = float(a), float(k)
        if not (a > 0 and math.isfinite(a)):
            raise ActivationError(f"a must be positive and finite, got {a}")
        if not (k > 0 and math.isfinite(k)):
            raise ActivationError(f"k must be positive and finite, got {k}")
        name = f"{kind}(a={a:g}, k={k:g})"
    else:
        a, k = 1.0, 1.0
        name = kind
    pos = _positive_breakpoints(kind, a)
    if kind == "relu":
        bps: tuple[float, ...] = (0.0,)
    else:
        bps = tuple(sorted([-d for d in pos] + pos))
    return Activation(name=name, kind=kind, a=a, k=k, breakpoints=bps)


def parse_activation(text: str) -> Activation:
    """Parse a ``kind:a:k`` string such as ``shtanh:2.0:1.0`` (or a bare kind)."""
    parts = text.strip().split(":")
    kind = parts[0]
    try:
        values = [float(p) for p in parts[1:]]
    except ValueError as exc:
        raise ActivationError(f"cannot parse activation {text!r}") from exc
    if len(values) > 2:
        raise ActivationError(f"too many fields in activation {text!r}")
    return make_activation(kind, *values)


def eval_phi(act: Activation, z):
    return act.phi(z)


def eval_dphi(act: Activation, z):
    """Symmetrised derivative; equals the ordinary derivative off the breakpoints."""
    return act.dphi(z)


def scaled_breakpoints(act: Activation, q: float) -> tuple[float, ...]:
    """Breakpoints of ``z -> phi(sqrt(q) z)``, i.e. ``d / sqrt(q)`` for ``d`` in D."""
    if not q > 0:
        raise ValueError(f"q must be positive, got {q}")
    root = math.sqrt(q)
    return tuple(sorted(d / root for d in act.breakpoints))
