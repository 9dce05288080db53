"""Mean-field propagation maps and their fixed points.

For a network with weight variance ``sigma_w2`` and bias variance
``sigma_b2`` the per-neuron preactivation variance evolves with depth as
``q <- V(q) = sigma_w2 * E[phi(sqrt(q) Z)^2] + sigma_b2`` and, once lengths
sit at the fixed point ``q*``, the correlation of two inputs evolves as
``rho <- R(rho)``.

The edge of chaos (``chi1 = 1``) is located through the auxiliary map::

    W(q) = E[phi(sqrt(q) Z)^2] / E[phi'(sqrt(q) Z)^2] + sigma_b2

whose fixed point gives ``q*`` directly, with ``sigma_w2 = 1 / E[phi'^2]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .activations import Activation
from .quadrature import expect_1d, expect_2d

DAMPING = 0.5
MAX_ITER = 10_000
Q_DIVERGE = 1e8
# damped iterations tried before switching to a bracketing scan
_ITER_BEFORE_SCAN = 100
_SCAN_PER_DECADE = 16
# chi1 within this of one counts as the edge of chaos
_CHI_EOC_TOL = 1e-9


class NoFixedPointError(ValueError):
    """The variance (or W) map has no fixed point in the searched range."""


class DivergenceError(NoFixedPointError):
    """Damped iteration ran past the divergence threshold."""


@dataclass(frozen=True)
class NetworkHyperparams:
    act: Activation
    sigma_w2: float
    sigma_b2: float

    def __post_init__(self):
        if not (self.sigma_w2 > 0 and math.isfinite(self.sigma_w2)):
            raise ValueError(f"sigma_w2 must be positive, got {self.sigma_w2}")
        if not (self.sigma_b2 > 0 and math.isfinite(self.sigma_b2)):
            raise ValueError(f"sigma_b2 must be positive, got {self.sigma_b2}")


@dataclass
class FixedPointResult:
    """A solved fixed point with diagnostics.

    ``all_sign_changes`` lists every root located by the bracketing scan,
    including ``value`` itself; more than one entry means the fixed point is
    not unique on the scanned range.
    """

    value: float
    residual: float
    bracket: tuple[float, float]
    iterations: int
    all_sign_changes: tuple[float, ...] = ()


@dataclass
class DepthTrajectory:
    values: np.ndarray
    L: int
    mode: str
    diverged: bool = False


@dataclass
class EocPoint:
    sigma_b2: float
    sigma_w2: float
    q_star: float
    chi1: float
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


# --- maps -----------------------------------------------------------------


def variance_map(hp: NetworkHyperparams, q: float) -> float:
    """``V(q) = sigma_w2 * E[phi(sqrt(q) Z)^2] + sigma_b2``; ``V(0) = sigma_b2``."""
    if q < 0:
        raise ValueError(f"q must be nonnegative, got {q}")
    if q == 0:
        return hp.sigma_b2
    return hp.sigma_w2 * expect_1d(hp.act, q, "phi_sq") + hp.sigma_b2


def w_map(act: Activation, sigma_b2: float, q: float) -> float:
    """``W(q) = E[phi^2] / E[phi'^2] + sigma_b2`` at scale ``q``; ``W(0) = sigma_b2``."""
    if q < 0:
        raise ValueError(f"q must be nonnegative, got {q}")
    if q == 0:
        return sigma_b2
    den = expect_1d(act, q, "dphi_sq")
    if not den > 0:
        raise ArithmeticError(f"E[phi'^2] vanished at q={q} for {act.name}")
    return expect_1d(act, q, "phi_sq") / den + sigma_b2


def chi1(hp: NetworkHyperparams, q_star: float) -> float:
    """Slope of the correlation map at ``rho = 1``."""
    if not q_star > 0:
        raise ValueError(f"q_star must be positive, got {q_star}")
    return hp.sigma_w2 * expect_1d(hp.act, q_star, "dphi_sq")


def corr_map(hp: NetworkHyperparams, q_star: float, rho):
    """Correlation map ``R(rho)`` at length ``q_star``; accepts scalar or array ``rho``."""
    if not q_star > 0:
        raise ValueError(f"q_star must be positive, got {q_star}")
    r = np.asarray(rho, dtype=float)
    if np.any(np.abs(r) > 1.0) or np.any(np.isnan(r)):
        raise ValueError(f"correlation must lie in [-1, 1], got {rho}")
    cov = hp.sigma_w2 * expect_2d(hp.act, q_star, r, "phi_phi") + hp.sigma_b2
    out = np.asarray(cov / q_star)
    # clamp rounding overshoot only; a real excursion means q_star is not a fixed point
    overshoot = np.abs(out) - 1.0
    out = np.where((overshoot > 0) & (overshoot <= 1e-10), np.sign(out), out)
    return float(out) if out.ndim == 0 else out


def corr_derivative(hp: NetworkHyperparams, q_star: float, rho):
    """``R'(rho) = sigma_w2 * E[phi'(U1) phi'(U2)]`` on the open interval ``(-1, 1)``."""
    if not q_star > 0:
        raise ValueError(f"q_star must be positive, got {q_star}")
    r = np.asarray(rho, dtype=float)
    if np.any(np.abs(r) >= 1.0) or np.any(np.isnan(r)):
        raise ValueError(f"corr_derivative needs |rho| < 1 (use chi1 at rho = 1), got {rho}")
    out = hp.sigma_w2 * expect_2d(hp.act, q_star, r, "dphi_dphi")
    return float(out) if np.ndim(out) == 0 else out


# --- variance fixed points ------------------------------------------------


def _scan_roots(func, lo: float, hi: float) -> tuple[list[tuple[float, float]], int]:
    """Brackets of every sign change of ``func`` on a geometric grid over [lo, hi]."""
    n = max(2, math.ceil(_SCAN_PER_DECADE * math.log10(hi / lo)) + 1)
    grid = np.geomspace(lo, hi, n)
    vals = np.array([func(x) for x in grid])
    idx = np.nonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) <= 0)[0]
    brackets = []
    for i in idx:
        if vals[i] == 0:
            brackets.append((grid[i], grid[i]))
        elif vals[i + 1] != 0:
            brackets.append((grid[i], grid[i + 1]))
    return brackets, n


def _refine(func, bracket: tuple[float, float]) -> tuple[float, int]:
    lo, hi = bracket
    if lo == hi:
        return lo, 0
    root, info = optimize.brentq(func, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps,
                                 full_output=True)
    return root, info.function_calls


def solve_q_star_eoc(act: Activation, sigma_b2: float,
                     q_max: float | None = None) -> tuple[FixedPointResult, float]:
    """Solve ``W(q) = q`` and return ``(q*, sigma_w2)`` on the edge of chaos.

    ``W(q) - q`` is scanned on a geometric grid from ``sigma_b2`` to
    ``q_max`` (default ``1e4 * max(a^2, sigma_b2)``); the first sign change is
    refined with Brent's method.  All sign changes are refined and reported.

    Raises
    ------
    NoFixedPointError
        If ``W(q) - q`` keeps one sign on the whole range (e.g. ReLU).
    """
    if not sigma_b2 > 0:
        raise ValueError(f"sigma_b2 must be positive, got {sigma_b2}")
    if q_max is None:
        q_max = 1e4 * max(act.a ** 2, sigma_b2)

    def gap(q):
        return w_map(act, sigma_b2, q) - q

    brackets, calls = _scan_roots(gap, sigma_b2, q_max)
    if not brackets:
        raise NoFixedPointError(
            f"no variance fixed point for {act.name} with sigma_b2={sigma_b2:g}: "
            f"W(q) - q keeps its sign on [{sigma_b2:g}, {q_max:g}]")
    roots = []
    for br in brackets:
        root, n = _refine(gap, br)
        roots.append(root)
        calls += n
    q_star = roots[0]
    sigma_w2 = 1.0 / expect_1d(act, q_star, "dphi_sq")
    lo, hi = brackets[0]
    result = FixedPointResult(value=q_star, residual=float(abs(gap(q_star))),
                              bracket=(float(lo), float(hi)),
                              iterations=calls, all_sign_changes=tuple(roots))
    return result, sigma_w2


def variance_fixed_point_general(hp: NetworkHyperparams, damping: float = DAMPING,
                                 max_iter: int = MAX_ITER, q_max: float = Q_DIVERGE,
                                 q0: float | None = None) -> FixedPointResult:
    """Fixed point of ``V`` for arbitrary ``(sigma_w2, sigma_b2)``.

    Runs the damped iteration ``q <- (1 - damping) q + damping V(q)``.  If it
    has not settled after a short burn-in, a bracketing scan of ``V(q) - q``
    from the current iterate takes over; the result is always polished with
    Brent's method so the residual is at rounding level.

    Raises
    ------
    DivergenceError
        When iterates exceed ``q_max`` or no sign change exists below it.
    """
    def gap(q):
        return variance_map(hp, q) - q

    q = hp.sigma_b2 if q0 is None else q0
    it = 0
    for it in range(1, max_iter + 1):
        v = variance_map(hp, q)
        if not math.isfinite(v) or v > q_max:
            raise DivergenceError(f"variance iterates diverged past {q_max:g} after {it} steps")
        step = damping * (v - q)
        q += step
        if abs(step) <= 1e-9 * max(1.0, q):
            break
        if it >= _ITER_BEFORE_SCAN:
            # slow drift: bracket instead of iterating on
            brackets, n = _scan_roots(gap, hp.sigma_b2, q_max)
            it += n
            if not brackets:
                raise DivergenceError(
                    f"no variance fixed point below {q_max:g}: lengths grow without bound")
            # the stable root nearest the iterate
            q = min((0.5 * (lo + hi) for lo, hi in brackets), key=lambda x: abs(x - q))
            break

    # polish: expand a bracket around q until V(q) - q changes sign
    lo, hi = q, q
    g0 = gap(q)
    width = max(1e-12, 1e-6 * q)
    for _ in range(200):
        lo, hi = max(q - width, 0.0), q + width
        if g0 == 0 or np.sign(gap(lo)) != np.sign(gap(hi)):
            break
        width *= 4.0
    else:
        raise DivergenceError(f"could not bracket the variance fixed point near q={q:g}")
    if g0 != 0:
        q, n = _refine(gap, (lo, hi))
        it += n
    return FixedPointResult(value=q, residual=float(abs(gap(q))), bracket=(float(lo), float(hi)),
                            iterations=it, all_sign_changes=(q,))


# --- correlation dynamics -------------------------------------------------


def iterate_depth(hp: NetworkHyperparams, initial: float, L: int, mode: str = "length",
                  q_star: float | None = None) -> DepthTrajectory:
    """Iterate the variance (``mode="length"``) or correlation map ``L`` times.

    Divergence of lengths is flagged on the trajectory; the remaining entries
    are ``inf``.
    """
    if L < 1 or int(L) != L:
        raise ValueError(f"L must be a positive integer, got {L}")
    L = int(L)
    values = np.empty(L + 1)
    values[0] = initial
    if mode == "length":
        if initial < 0:
            raise ValueError(f"initial length must be nonnegative, got {initial}")
        for l in range(1, L + 1):
            v = variance_map(hp, values[l - 1])
            if not math.isfinite(v) or v > Q_DIVERGE:
                values[l:] = np.inf
                return DepthTrajectory(values, L, mode, diverged=True)
            values[l] = v
    elif mode == "correlation":
        if q_star is None:
            raise ValueError("correlation mode needs q_star")
        if abs(initial) > 1:
            raise ValueError(f"initial correlation must lie in [-1, 1], got {initial}")
        for l in range(1, L + 1):
            values[l] = corr_map(hp, q_star, values[l - 1])
    else:
        raise ValueError(f"mode must be 'length' or 'correlation', got {mode!r}")
    return DepthTrajectory(values, L, mode)


def corr_fixed_point(hp: NetworkHyperparams, q_star: float | None = None,
                     scan_n: int = 65) -> FixedPointResult:
    """Stable fixed point of the correlation map on ``[0, 1]``.

    ``rho* = 1`` when ``chi1 <= 1``; otherwise the interior root where
    ``R(rho) - rho`` turns from positive to negative.
    """
    if q_star is None:
        q_star = variance_fixed_point_general(hp).value
    c = chi1(hp, q_star)
    if c <= 1.0 + _CHI_EOC_TOL:
        res = abs(corr_map(hp, q_star, 1.0) - 1.0)
        return FixedPointResult(value=1.0, residual=res, bracket=(1.0, 1.0), iterations=0,
                                all_sign_changes=(1.0,))

    def gap(r):
        return corr_map(hp, q_star, r) - r

    grid = np.linspace(0.0, 1.0 - 1e-6, scan_n)
    vals = gap(grid)
    down = np.nonzero((vals[:-1] > 0) & (vals[1:] <= 0))[0]
    if down.size == 0:
        raise NoFixedPointError(f"no interior correlation fixed point with chi1={c:.6g}")
    roots = []
    calls = scan_n
    for i in down:
        root, n = _refine(gap, (grid[i], grid[i + 1]))
        roots.append(root)
        calls += n
    i = down[0]
    return FixedPointResult(value=roots[0], residual=float(abs(gap(roots[0]))),
                            bracket=(float(grid[i]), float(grid[i + 1])), iterations=calls,
                            all_sign_changes=tuple(roots))


def corr_gap(hp: NetworkHyperparams, q_star: float, grid_n: int = 1001) -> tuple[float, float]:
    """Maximum of ``|R(rho) - rho|`` over ``rho`` in ``[0, 1]`` and where it is attained.

    The uniform grid argmax is refined by a bounded scalar search over the
    neighbouring grid cells; the refined point replaces the grid point only
    if it is strictly larger.
    """
    if grid_n < 2:
        raise ValueError(f"grid_n must be at least 2, got {grid_n}")
    grid = np.linspace(0.0, 1.0, grid_n)
    gaps = np.abs(corr_map(hp, q_star, grid) - grid)
    i = int(np.argmax(gaps))
    best, where = float(gaps[i]), float(grid[i])
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, grid_n - 1)]
    if hi > lo:
        res = optimize.minimize_scalar(lambda r: -abs(corr_map(hp, q_star, r) - r),
                                       bounds=(lo, hi), method="bounded",
                                       options={"xatol": 1e-10})
        if -res.fun > best:
            best, where = float(-res.fun), float(res.x)
    return best, where


# --- edge-of-chaos curves -------------------------------------------------


def _joint_iteration(act: Activation, sigma_b2: float, max_iter: int = 2000) -> float:
    """Damped iteration of ``W`` for smooth activations whose scan found no root."""
    q = sigma_b2
    for _ in range(max_iter):
        w = w_map(act, sigma_b2, q)
        if not math.isfinite(w) or w > Q_DIVERGE:
            break
        step = DAMPING * (w - q)
        q += step
        if abs(step) <= 1e-13 * max(1.0, q):
            return q
    raise NoFixedPointError(f"no variance fixed point for {act.name} with sigma_b2={sigma_b2:g}")


def eoc_curve(act: Activation, sigma_b2_list) -> list[EocPoint]:
    """Edge-of-chaos ``(sigma_b2, sigma_w2, q*)`` for each bias variance.

    A failing entry is recorded with NaNs and the error message; the other
    entries are still computed.
    """
    sigma_b2_list = list(sigma_b2_list)
    if not sigma_b2_list:
        raise ValueError("sigma_b2_list is empty")
    rows = []
    for sb in sigma_b2_list:
        try:
            try:
                fp, sw = solve_q_star_eoc(act, sb)
                q = fp.value
            except NoFixedPointError:
                if act.kind not in ("tanh", "erf"):
                    raise
                q = _joint_iteration(act, sb)
                sw = 1.0 / expect_1d(act, q, "dphi_sq")
            hp = NetworkHyperparams(act, sw, sb)
            rows.append(EocPoint(sb, sw, q, chi1(hp, q)))
        except (NoFixedPointError, ValueError) as exc:
            rows.append(EocPoint(sb, math.nan, math.nan, math.nan, error=str(exc)))
    return rows
