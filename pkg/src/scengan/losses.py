"""Wasserstein GAN losses, Gaussian weight priors and posterior gradients."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .nn import MlpNetwork, ShapeError, backward, forward


@dataclass(frozen=True)
class PriorSpec:
    """Isotropic zero-mean Gaussian prior with standard deviation ``gamma``.

    ``gamma = inf`` is a flat prior.
    """

    gamma: float = 1.0

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("prior gamma must be > 0")

    @property
    def flat(self) -> bool:
        return math.isinf(self.gamma)


@dataclass(frozen=True)
class LossReport:
    l_g: float
    l_d: float
    value_v: float
    wasserstein_estimate: float
    l_g_particles: tuple = ()


def _scores(s) -> np.ndarray:
    s = np.asarray(s, dtype=np.float64).ravel()
    if s.size == 0:
        raise ValueError("empty score batch")
    return s


def generator_loss(fake_scores) -> float:
    return -float(np.mean(_scores(fake_scores)))


def discriminator_loss(real_scores, fake_scores) -> float:
    return -float(np.mean(_scores(real_scores))) + float(np.mean(_scores(fake_scores)))


def value_function(real_scores, fake_scores) -> float:
    """Minimax value; also the empirical Wasserstein-dual estimate."""
    return -discriminator_loss(real_scores, fake_scores)


def loss_report(real_scores, fake_scores_per_particle: Sequence) -> LossReport:
    """Summarise one critic against a generator ensemble.

    Fake scores are pooled over particles for the critic loss; ``l_g`` is the
    mean of the per-particle generator losses.
    """
    per = tuple(generator_loss(s) for s in fake_scores_per_particle)
    pooled = np.concatenate([_scores(s) for s in fake_scores_per_particle])
    l_d = discriminator_loss(real_scores, pooled)
    v = -l_d
    return LossReport(float(np.mean(per)), l_d, v, v, per)


def log_prior_grad(theta: np.ndarray, prior: PriorSpec) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    if prior.flat:
        return np.zeros_like(theta)
    return -theta / (prior.gamma * prior.gamma)


def _add_prior(grad: np.ndarray, theta: np.ndarray, prior: PriorSpec, running_n: int) -> np.ndarray:
    if running_n < 1:
        raise ValueError("running_n must be >= 1")
    if prior.flat:
        return grad
    # minimised objective carries -(1/N) log p(theta)
    return grad - log_prior_grad(theta, prior) / running_n


def posterior_grad_discriminator(
    gen_net: MlpNetwork,
    disc_net: MlpNetwork,
    theta_d: np.ndarray,
    theta_g_particles: Sequence[np.ndarray],
    real_batch: np.ndarray,
    noise_batch: np.ndarray,
    prior_d: PriorSpec,
    running_n: int,
) -> np.ndarray:
    """Gradient of the critic's negative log posterior.

    Objective: ``-mean D(x) + mean_i mean_j D(G_j(z_i)) - log p(theta_d)/N``.
    """
    real_batch = np.asarray(real_batch, dtype=np.float64)
    noise_batch = np.asarray(noise_batch, dtype=np.float64)
    m = real_batch.shape[0]
    if noise_batch.shape[0] != m:
        raise ShapeError(f"real batch has {m} rows but noise batch has {noise_batch.shape[0]}")
    if not theta_g_particles:
        raise ValueError("need at least one generator particle")
    n_gen = len(theta_g_particles)

    out, trace = forward(disc_net, theta_d, real_batch)
    grad = backward(disc_net, theta_d, trace, np.full_like(out, -1.0 / m))
    for theta_g in theta_g_particles:
        fake, _ = forward(gen_net, theta_g, noise_batch)
        out, trace = forward(disc_net, theta_d, fake)
        grad = grad + backward(disc_net, theta_d, trace, np.full_like(out, 1.0 / (m * n_gen)))
    return _add_prior(grad, theta_d, prior_d, running_n)


def posterior_grad_generator(
    gen_net: MlpNetwork,
    disc_net: MlpNetwork,
    theta_g: np.ndarray,
    theta_d_particles: Sequence[np.ndarray],
    noise_batch: np.ndarray,
    prior_g: PriorSpec,
    running_n: int,
) -> np.ndarray:
    """Gradient of a generator particle's negative log posterior.

    Objective: ``-mean_i mean_k D_k(G(z_i)) - log p(theta_g)/N``.
    """
    noise_batch = np.asarray(noise_batch, dtype=np.float64)
    m = noise_batch.shape[0]
    if m == 0:
        raise ValueError("empty noise batch")
    if not theta_d_particles:
        raise ValueError("need at least one discriminator particle")
    n_disc = len(theta_d_particles)

    fake, g_trace = forward(gen_net, theta_g, noise_batch)
    upstream = np.zeros_like(fake)
    for theta_d in theta_d_particles:
        out, trace = forward(disc_net, theta_d, fake)
        _, dx = backward(disc_net, theta_d, trace, np.full_like(out, -1.0 / (m * n_disc)),
                         with_input_grad=True)
        upstream = upstream + dx
    grad = backward(gen_net, theta_g, g_trace, upstream)
    return _add_prior(grad, theta_g, prior_g, running_n)
