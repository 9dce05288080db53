"""Closed-form bounds for scaled-bounded activations on the edge of chaos.

With ``y = sigma_b2 / a^2`` the ratio of the linear-region half-width to the
fixed-point length obeys::

    Lambda(y) < a / sqrt(q*) < (8/pi)^(1/6) y^(-1/3)

and consequently::

    max |R(rho) - rho|   < (8/pi)^(1/3) y^(1/3)
    |mu_2 / mu_1^2 - 1| <= erf(Lambda(y) / sqrt(2))^(-2) - 1

``Lambda`` is assembled from three Lambert-W evaluations.  Writing
``g(x) = sqrt(2/pi) exp(-x^2/2) / x``:

* ``delta`` solves ``g(delta) = y``, i.e. ``delta^2 = W0(2 / (pi y^2))``;
* ``beta`` is the intercept of the tangent to ``g`` at ``delta``,
  ``beta = sqrt(2/pi) exp(-delta^2/2) (2/delta + delta)``;
* ``Lambda = gamma`` solves ``g(gamma) = beta``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from scipy import special

from .activations import Activation
from .maps import NetworkHyperparams, corr_gap, solve_q_star_eoc
from .spectrum import moment_ratio

_INV_E = math.exp(-1.0)
_LOG_2_OVER_PI = math.log(2.0 / math.pi)
_RATIO_COEF = (8.0 / math.pi) ** (1.0 / 6.0)
_CORR_COEF = (8.0 / math.pi) ** (1.0 / 3.0)
# above this log-argument w * exp(w) overflows; switch to w + log(w) = log(x)
_LOG_SWITCH = 700.0


# --- Lambert W ------------------------------------------------------------


def _halley(x: float, w: float) -> float:
    for _ in range(64):
        ew = math.exp(w)
        f = w * ew - x
        wp1 = w + 1.0
        if wp1 == 0.0:
            return w
        step = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1))
        w -= step
        if abs(step) <= 1e-15 * (1.0 + abs(w)):
            break
    return w


def _w0_from_log(log_x: float) -> float:
    """``W0(exp(log_x))`` without forming ``exp(log_x)``."""
    if log_x < _LOG_SWITCH:
        return lambert_w0(math.exp(log_x))
    # Newton on w + log(w) = log_x, seeded from the asymptotic expansion
    w = log_x - math.log(log_x)
    for _ in range(64):
        step = (w + math.log(w) - log_x) * w / (w + 1.0)
        w -= step
        if abs(step) <= 1e-16 * w:
            break
    return w


def lambert_w0(x: float) -> float:
    """Principal branch of the Lambert W function, ``w * exp(w) = x`` with ``w >= -1``.

    Halley iteration seeded with ``log(x) - log(log(x))`` for ``x > e``, the
    branch-point series near ``-1/e`` and ``log1p(x)`` elsewhere.

    Raises
    ------
    ValueError
        For ``x < -1/e`` or NaN.
    """
    x = float(x)
    if math.isnan(x) or x < -_INV_E:
        raise ValueError(f"lambert_w0 needs x >= -1/e, got {x}")
    if x == 0.0:
        return 0.0
    if x == math.inf:
        return math.inf
    if x == math.e:
        return 1.0
    if x > math.e:
        if math.log(x) > _LOG_SWITCH:
            return _w0_from_log(math.log(x))
        lx = math.log(x)
        w = lx - math.log(lx)
    elif x < -0.25:
        p = math.sqrt(max(2.0 * (math.e * x + 1.0), 0.0))
        if p == 0.0:
            return -1.0
        w = -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p ** 3
    else:
        w = math.log1p(x)
    return _halley(x, w)


# --- Lambda(y) --------------------------------------------------------------


def _check_y(y: float) -> float:
    y = float(y)
    if not y > 0 or math.isnan(y):
        raise ValueError(f"y must be positive, got {y}")
    return y


def _log_beta(y: float) -> float:
    """``log(beta)`` from ``delta^2 = W0(x)``, using ``log W0(x) = log x - W0(x)`` so tiny ``x`` is safe."""
    log_x = _LOG_2_OVER_PI - 2.0 * math.log(y)
    d2 = _w0_from_log(log_x)
    log_delta = 0.5 * (log_x - d2)
    return 0.5 * _LOG_2_OVER_PI - 0.5 * d2 - log_delta + math.log(2.0 + d2)


def lambda_lower(y: float) -> float:
    """``Lambda(y)``, the lower bound on ``a / sqrt(q*)``; strictly decreasing in ``y``."""
    y = _check_y(y)
    log_beta = _log_beta(y)
    return math.sqrt(_w0_from_log(_LOG_2_OVER_PI - 2.0 * log_beta))


def tangent_intercept(y: float) -> float:
    """``beta(delta(y))``, the level that ``g(Lambda(y))`` must reproduce."""
    return math.exp(_log_beta(_check_y(y)))


def g_curve(x: float) -> float:
    """``sqrt(2/pi) exp(-x^2/2) / x``."""
    return math.sqrt(2.0 / math.pi) * math.exp(-0.5 * x * x) / x


def h_curve(x: float, y: float) -> float:
    """``erfc(x / sqrt(2)) + y``."""
    return float(special.erfc(x / math.sqrt(2.0))) + y


def ratio_bounds(y: float) -> tuple[float, float]:
    """``(Lambda(y), (8/pi)^(1/6) y^(-1/3))``, the sandwich on ``a / sqrt(q*)``."""
    y = _check_y(y)
    return lambda_lower(y), _RATIO_COEF * y ** (-1.0 / 3.0)


def theorem_bounds(y: float) -> tuple[float, float]:
    """``(corr_bound, moment_bound)``.

    ``corr_bound = (8/pi)^(1/3) y^(1/3)`` bounds the correlation-map gap and
    ``moment_bound = erf(Lambda(y) / sqrt(2))^(-2) - 1`` bounds
    ``|mu_2 / mu_1^2 - 1|``.  The moment bound is ``inf`` once the erf
    underflows.
    """
    y = _check_y(y)
    e = float(special.erf(lambda_lower(y) / math.sqrt(2.0)))
    moment = math.inf if e == 0.0 else e ** -2 - 1.0
    return _CORR_COEF * y ** (1.0 / 3.0), moment


# --- verification -----------------------------------------------------------


@dataclass
class BoundReport:
    activation: str
    a: float
    sigma_b2: float
    sigma_w2: float
    q_star: float
    y: float
    lambda_lower: float
    ratio_upper: float
    measured_ratio: float
    corr_bound: float
    measured_gap: float
    moment_bound: float
    measured_moment_dev: float
    all_satisfied: bool
    corr_bound_vacuous: bool
    moment_bound_vacuous: bool

    @property
    def ratio_ok(self) -> bool:
        return self.lambda_lower < self.measured_ratio < self.ratio_upper

    @property
    def corr_ok(self) -> bool:
        return self.measured_gap < self.corr_bound

    @property
    def moment_ok(self) -> bool:
        return self.measured_moment_dev <= self.moment_bound


def verify_theorem(act: Activation, sigma_b2: float, grid_n: int = 1001) -> BoundReport:
    """Solve the edge of chaos and compare measured quantities with every bound.

    The bounds are flagged vacuous when they cannot bind: the correlation
    gap on ``[0, 1]`` never exceeds one, and an infinite moment bound says
    nothing.
    """
    if not act.scaled_bounded:
        raise ValueError(f"{act.name} is not scaled-bounded")
    fp, sigma_w2 = solve_q_star_eoc(act, sigma_b2)
    q_star = fp.value
    hp = NetworkHyperparams(act, sigma_w2, sigma_b2)
    y = sigma_b2 / act.a ** 2
    lower, upper = ratio_bounds(y)
    corr_b, moment_b = theorem_bounds(y)
    gap, _ = corr_gap(hp, q_star, grid_n)
    dev = abs(moment_ratio(act, q_star) - 1.0)
    ratio = act.a / math.sqrt(q_star)
    ok = (lower < ratio < upper) and gap < corr_b and dev <= moment_b
    return BoundReport(activation=act.spec, a=act.a, sigma_b2=sigma_b2, sigma_w2=sigma_w2,
                       q_star=q_star, y=y, lambda_lower=lower, ratio_upper=upper,
                       measured_ratio=ratio, corr_bound=corr_b, measured_gap=gap,
                       moment_bound=moment_b, measured_moment_dev=dev, all_satisfied=ok,
                       corr_bound_vacuous=corr_b >= 1.0,
                       moment_bound_vacuous=not math.isfinite(moment_b))
