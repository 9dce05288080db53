"""Monte Carlo simulation of finite-width random networks.

Two inputs with squared length ``N q*`` and correlation ``rho0`` are pushed
through the same random network::

    z^(0) = x,    z^(l) = W^(l) phi(z^(l-1)) + b^(l),    l = 1..L

so that layer 0 matches the mean-field initial condition ``q^(0) = q*``.
Per layer we record ``q_hat = |z|^2 / N`` (averaged over the two inputs) and
the cosine similarity of the pair.

The input-output Jacobian ``J = W^(L) D^(L-1) ... W^(1) D^(0)`` with
``D^(l) = diag(phi'(z^(l)))`` is formed explicitly; its singular values give
``m1_hat = tr(J J^T) / N`` and ``m2_hat = tr((J J^T)^2) / N``.

Every trial draws from its own stream keyed by ``(seed, trial)``, so results
do not depend on the order or parallelism in which trials run.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .maps import NetworkHyperparams, variance_fixed_point_general

SCHEMES = ("gaussian", "orthogonal")
COND_LIMIT = 1e12
# stream tags so forward and Jacobian runs of one trial never share draws
_FORWARD, _JACOBIAN = 0, 1


@dataclass(frozen=True)
class SimConfig:
    hp: NetworkHyperparams
    width: int
    depth: int
    trials: int = 20
    seed: int = 0
    scheme: str = "gaussian"
    rho0: float = 0.5
    measure_jacobian: bool = False

    def __post_init__(self):
        if self.width < 2:
            raise ValueError(f"width must be at least 2, got {self.width}")
        if self.depth < 1:
            raise ValueError(f"depth must be positive, got {self.depth}")
        if self.trials < 1:
            raise ValueError(f"trials must be positive, got {self.trials}")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if not -1.0 <= self.rho0 <= 1.0:
            raise ValueError(f"rho0 must lie in [-1, 1], got {self.rho0}")


@dataclass
class JacobianEstimate:
    """Trial-averaged spectral moments of ``J J^T``.

    ``var_hat = m2_hat - m1_hat^2`` uses the pooled moments.
    ``var_hat_normalised`` averages ``m2 / m1^2 - 1`` per trial, which
    removes the trial-to-trial fluctuation of the overall scale and is far
    less heavy-tailed when ``m1`` fluctuates (Gaussian weights at depth).
    """

    m1_hat: float
    m2_hat: float
    m1_stderr: float
    m2_stderr: float
    var_hat: float
    var_hat_normalised: float
    var_hat_normalised_stderr: float
    ill_conditioned: int
    trials: int


@dataclass
class SimResult:
    q_traj_mean: np.ndarray
    q_traj_stderr: np.ndarray
    rho_traj_mean: np.ndarray
    rho_traj_stderr: np.ndarray
    trials: int
    diverged: bool = False
    jacobian: JacobianEstimate | None = None

    @property
    def jac_m1_hat(self) -> float | None:
        return None if self.jacobian is None else self.jacobian.m1_hat

    @property
    def jac_m2_hat(self) -> float | None:
        return None if self.jacobian is None else self.jacobian.m2_hat


def trial_rng(seed: int, trial: int, tag: int = _FORWARD) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(trial, tag)))


def sample_weights(scheme: str, N: int, sigma_w2: float, rng: np.random.Generator) -> np.ndarray:
    """``N x N`` weights: iid ``N(0, sigma_w2 / N)`` or Haar orthogonal scaled by ``sigma_w``."""
    if N < 2:
        raise ValueError(f"N must be at least 2, got {N}")
    if scheme == "gaussian":
        return rng.standard_normal((N, N)) * math.sqrt(sigma_w2 / N)
    if scheme == "orthogonal":
        q, r = np.linalg.qr(rng.standard_normal((N, N)))
        # sign fix makes Q Haar distributed rather than biased by the QR convention
        return q * (np.sign(np.diag(r)) * math.sqrt(sigma_w2))
    raise ValueError(f"scheme must be one of {SCHEMES}, got {scheme!r}")


def input_pair(N: int, q_star: float, rho0: float, rng: np.random.Generator):
    """Two vectors with ``|x|^2 = N q_star`` and cosine similarity exactly ``rho0``."""
    u = rng.standard_normal(N)
    v = rng.standard_normal(N)
    e1 = u / np.linalg.norm(u)
    v = v - (v @ e1) * e1
    e2 = v / np.linalg.norm(v)
    scale = math.sqrt(N * q_star)
    x1 = scale * e1
    if rho0 == 1.0:
        return x1, x1.copy()
    return x1, scale * (rho0 * e1 + math.sqrt((1.0 - rho0) * (1.0 + rho0)) * e2)


def _layer_params(config: SimConfig, rng: np.random.Generator):
    N, hp = config.width, config.hp
    w = sample_weights(config.scheme, N, hp.sigma_w2, rng)
    b = rng.standard_normal(N) * math.sqrt(hp.sigma_b2)
    return w, b


def _cosine(z1: np.ndarray, z2: np.ndarray) -> float:
    return float(z1 @ z2 / math.sqrt((z1 @ z1) * (z2 @ z2)))


def _forward_trial(config: SimConfig, q_star: float, trial: int):
    rng = trial_rng(config.seed, trial, _FORWARD)
    N, L, act = config.width, config.depth, config.hp.act
    z1, z2 = input_pair(N, q_star, config.rho0, rng)
    q = np.empty(L + 1)
    rho = np.empty(L + 1)
    q[0] = 0.5 * (z1 @ z1 + z2 @ z2) / N
    rho[0] = _cosine(z1, z2)
    with np.errstate(over="ignore", invalid="ignore"):
        for l in range(1, L + 1):
            w, b = _layer_params(config, rng)
            z1 = w @ act.phi(z1) + b
            z2 = w @ act.phi(z2) + b
            q[l] = 0.5 * (z1 @ z1 + z2 @ z2) / N
            rho[l] = _cosine(z1, z2)
    return q, rho


def _jacobian_trial(config: SimConfig, q_star: float, trial: int) -> np.ndarray:
    """Squared singular values of the input-output Jacobian for one trial."""
    rng = trial_rng(config.seed, trial, _JACOBIAN)
    N, act = config.width, config.hp.act
    z, _ = input_pair(N, q_star, 1.0, rng)
    jac = np.eye(N)
    for _ in range(config.depth):
        w, b = _layer_params(config, rng)
        jac = w @ (act.dphi(z)[:, None] * jac)
        z = w @ act.phi(z) + b
    return np.linalg.svd(jac, compute_uv=False) ** 2


def _workers() -> int:
    env = os.environ.get("MEANFIELD_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


def map_trials(func, trials: int) -> list:
    """``[func(t) for t in range(trials)]``, possibly on a thread pool, in trial order."""
    workers = min(_workers(), trials)
    if workers <= 1:
        return [func(t) for t in range(trials)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, range(trials)))


def _mean_stderr(x: np.ndarray):
    mean = x.mean(axis=0)
    if x.shape[0] < 2:
        return mean, np.zeros_like(mean)
    return mean, x.std(axis=0, ddof=1) / math.sqrt(x.shape[0])


def _resolve_q_star(config: SimConfig, q_star: float | None) -> float:
    if q_star is None:
        q_star = variance_fixed_point_general(config.hp).value
    if not q_star > 0:
        raise ValueError(f"q_star must be positive, got {q_star}")
    return q_star


def forward_pair(config: SimConfig, q_star: float | None = None) -> SimResult:
    """Empirical per-layer length and correlation statistics over trials.

    ``q_star`` defaults to the variance fixed point of ``config.hp``.
    Non-finite values mark the result as diverged instead of raising.
    """
    q_star = _resolve_q_star(config, q_star)
    out = map_trials(lambda t: _forward_trial(config, q_star, t), config.trials)
    qs = np.array([o[0] for o in out])
    rhos = np.array([o[1] for o in out])
    with np.errstate(over="ignore", invalid="ignore"):
        q_mean, q_err = _mean_stderr(qs)
        r_mean, r_err = _mean_stderr(rhos)
    diverged = not (np.all(np.isfinite(qs)) and np.all(np.isfinite(rhos)))
    return SimResult(q_mean, q_err, r_mean, r_err, config.trials, diverged)


def jacobian_eigenvalues(config: SimConfig, q_star: float | None = None) -> np.ndarray:
    """Eigenvalues of ``J J^T`` for every trial, shape ``(trials, width)``, descending."""
    q_star = _resolve_q_star(config, q_star)
    return np.array(map_trials(lambda t: _jacobian_trial(config, q_star, t), config.trials))


def empirical_jacobian(config: SimConfig, q_star: float | None = None) -> JacobianEstimate:
    """Spectral moments of ``J J^T`` averaged over trials.

    Trials whose Jacobian has condition number above ``COND_LIMIT`` are
    counted in ``ill_conditioned``; their moments are still included.
    """
    eig = jacobian_eigenvalues(config, q_star)
    m1 = eig.mean(axis=1)
    m2 = (eig ** 2).mean(axis=1)
    with np.errstate(divide="ignore"):
        cond = np.sqrt(eig[:, 0] / eig[:, -1])
    m1_mean, m1_err = _mean_stderr(m1)
    m2_mean, m2_err = _mean_stderr(m2)
    norm_mean, norm_err = _mean_stderr(m2 / m1 ** 2 - 1.0)
    return JacobianEstimate(m1_hat=float(m1_mean), m2_hat=float(m2_mean),
                            m1_stderr=float(m1_err), m2_stderr=float(m2_err),
                            var_hat=float(m2_mean - m1_mean ** 2),
                            var_hat_normalised=float(norm_mean),
                            var_hat_normalised_stderr=float(norm_err),
                            ill_conditioned=int(np.sum(~(cond <= COND_LIMIT))),
                            trials=config.trials)


def simulate(config: SimConfig, q_star: float | None = None) -> SimResult:
    """Forward statistics plus, if requested, the Jacobian estimate."""
    q_star = _resolve_q_star(config, q_star)
    result = forward_pair(config, q_star)
    if config.measure_jacobian:
        result.jacobian = empirical_jacobian(config, q_star)
    return result
