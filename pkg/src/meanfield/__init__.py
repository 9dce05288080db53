"""Mean-field signal propagation in deep random networks with scaled-bounded activations."""

from .activations import (Activation, ActivationError, eval_dphi, eval_phi, make_activation,
                          parse_activation, scaled_breakpoints)
from .bounds import (BoundReport, lambda_lower, lambert_w0, ratio_bounds, theorem_bounds,
                     verify_theorem)
from .maps import (DepthTrajectory, DivergenceError, FixedPointResult, NetworkHyperparams,
                   NoFixedPointError, chi1, corr_derivative, corr_fixed_point, corr_gap,
                   corr_map, eoc_curve, iterate_depth, solve_q_star_eoc,
                   variance_fixed_point_general, variance_map, w_map)
from .quadrature import expect_1d, expect_2d
from .simulate import (SimConfig, SimResult, empirical_jacobian, forward_pair, sample_weights,
                       simulate)
from .spectrum import (SpectrumMoments, backprop_variance_trajectory, jacobian_moments,
                       moment_mu, moment_ratio)

__version__ = "0.1.0"
