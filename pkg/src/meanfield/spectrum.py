"""Moments of the input-output Jacobian spectrum and backpropagated error variance.

With ``mu_k = E[phi'(sqrt(q*) Z)^(2k)]`` and ``chi1 = sigma_w2 * mu_1`` the first
two moments of the spectrum of ``J J^T`` for a depth-``L`` network are::

    m1 = chi1^L
    m2 = chi1^(2L) * L * (mu_2 / mu_1^2 + 1/L - 1 - s1)

where ``s1 = -1`` for Gaussian and ``0`` for orthogonal weights.  On the edge
of chaos the spectral variance is ``L * (mu_2 / mu_1^2 - 1 - s1)``: linear in
depth for Gaussian weights, and arbitrarily small for orthogonal weights when
``mu_2 / mu_1^2`` is close to one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .activations import Activation
from .maps import NetworkHyperparams
from .quadrature import expect_1d

SCHEMES = ("gaussian", "orthogonal")
_S1 = {"gaussian": -1.0, "orthogonal": 0.0}


@dataclass(frozen=True)
class SpectrumMoments:
    mu1: float
    mu2: float
    m1: float
    m2: float
    var_jjt: float
    L: int
    s1: float
    chi1: float


def moment_mu(act: Activation, q_star: float, order: int) -> float:
    """``mu_order = E[phi'(sqrt(q_star) Z)^(2 order)]``."""
    if int(order) != order or order < 1:
        raise ValueError(f"order must be a positive integer, got {order}")
    return expect_1d(act, q_star, "dphi_pow", power=int(order))


def moment_ratio(act: Activation, q_star: float) -> float:
    """``mu_2 / mu_1^2``; equals ``1 / erf(a / sqrt(2 q*))`` for shtanh."""
    mu1 = moment_mu(act, q_star, 1)
    return moment_mu(act, q_star, 2) / (mu1 * mu1)


def jacobian_moments(hp: NetworkHyperparams, q_star: float, L: int,
                     scheme: str = "orthogonal") -> SpectrumMoments:
    """First two spectral moments of ``J J^T`` and their variance at depth ``L``."""
    if int(L) != L or L < 1:
        raise ValueError(f"L must be a positive integer, got {L}")
    if scheme not in _S1:
        raise ValueError(f"scheme must be one of {SCHEMES}, got {scheme!r}")
    L = int(L)
    s1 = _S1[scheme]
    mu1 = moment_mu(hp.act, q_star, 1)
    mu2 = moment_mu(hp.act, q_star, 2)
    chi = hp.sigma_w2 * mu1
    m1 = chi ** L
    m2 = chi ** (2 * L) * L * (mu2 / (mu1 * mu1) + 1.0 / L - 1.0 - s1)
    return SpectrumMoments(mu1=mu1, mu2=mu2, m1=m1, m2=m2, var_jjt=m2 - m1 * m1, L=L,
                           s1=s1, chi1=chi)


def backprop_variance_trajectory(chi1: float, widths, q_tilde_L: float) -> np.ndarray:
    """Error-signal variances ``q~^l = (N^(l+1) / N^l) q~^(l+1) chi1``, output layer last."""
    widths = np.asarray(widths)
    if widths.ndim != 1 or widths.size < 2:
        raise ValueError("widths needs at least two layers")
    if np.any(widths <= 0) or np.any(widths != np.round(widths)):
        raise ValueError(f"widths must be positive integers, got {widths.tolist()}")
    out = np.empty(widths.size)
    out[-1] = q_tilde_L
    for l in range(widths.size - 2, -1, -1):
        out[l] = widths[l + 1] / widths[l] * out[l + 1] * chi1
    return out
