import math

import pytest
from hypothesis import settings
from scipy import special

from meanfield import NetworkHyperparams, make_activation, solve_q_star_eoc

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


def shtanh_phi_sq(a, k, q):
    """Closed form of E[shtanh(sqrt(q) Z)^2]."""
    s = a / math.sqrt(2.0 * q)
    return (k * k * q * special.erf(s)
            - math.sqrt(2.0 / math.pi) * a * k * k * math.sqrt(q) * math.exp(-a * a / (2.0 * q))
            + a * a * k * k * special.erfc(s))


def shtanh_dphi_sq(a, k, q):
    """Closed form of E[shtanh'(sqrt(q) Z)^2]."""
    return k * k * special.erf(a / math.sqrt(2.0 * q))


@pytest.fixture(scope="session")
def eoc_shtanh():
    """Edge-of-chaos hyperparameters and q* for shtanh(a=1, k=1), sigma_b2 = 0.1."""
    act = make_activation("shtanh", 1.0, 1.0)
    fp, sw = solve_q_star_eoc(act, 0.1)
    return NetworkHyperparams(act, sw, 0.1), fp.value
