"""Stochastic-gradient HMC updates with RMSProp preconditioning."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np


class NumericalError(FloatingPointError):
    """A gradient or loss became non-finite."""


@dataclass(frozen=True)
class SghmcConfig:
    alpha: float = 1e-4
    eta: float = 0.01
    m_inner: int = 2

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be > 0")
        if not self.eta >= 0:
            raise ValueError("eta must be >= 0")
        if self.m_inner < 1:
            raise ValueError("m_inner must be >= 1")


@dataclass(frozen=True)
class RmsPropState:
    accumulator: np.ndarray
    decay: float = 0.9
    epsilon: float = 1e-8

    @classmethod
    def zeros(cls, n: int, decay: float = 0.9, epsilon: float = 1e-8) -> "RmsPropState":
        return cls(np.zeros(n), decay, epsilon)


def inject_noise(grad: np.ndarray, cfg: SghmcConfig, rng: np.random.Generator) -> np.ndarray:
    """Add ``N(0, 2*eta*alpha*I)`` noise; ``eta == 0`` returns ``grad`` untouched."""
    if cfg.eta == 0:
        return grad
    std = np.sqrt(2.0 * cfg.eta * cfg.alpha)
    return grad + std * rng.standard_normal(np.shape(grad))


def rmsprop_precondition(state: RmsPropState, g: np.ndarray) -> tuple[np.ndarray, RmsPropState]:
    if np.shape(g) != state.accumulator.shape:
        raise ValueError(f"gradient shape {np.shape(g)} != accumulator shape {state.accumulator.shape}")
    acc = state.decay * state.accumulator + (1.0 - state.decay) * (g * g)
    direction = g / (np.sqrt(acc) + state.epsilon)
    return direction, replace(state, accumulator=acc)


def clip_weights(theta: np.ndarray, c: float) -> np.ndarray:
    if c < 0:
        raise ValueError("clip bound must be >= 0")
    return np.clip(theta, -c, c)


def sghmc_step(
    theta: np.ndarray,
    grad_fn: Callable[[np.ndarray], np.ndarray],
    cfg: SghmcConfig,
    rms: RmsPropState,
    rng: np.random.Generator,
    project: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> tuple[np.ndarray, RmsPropState]:
    """Run ``cfg.m_inner`` noisy preconditioned descent iterations.

    ``project`` (e.g. weight clipping) is applied after every iteration.
    """
    for _ in range(cfg.m_inner):
        g = grad_fn(theta)
        if not np.all(np.isfinite(g)):
            raise NumericalError("non-finite gradient in SGHMC step")
        g = inject_noise(g, cfg, rng)
        direction, rms = rmsprop_precondition(rms, g)
        theta = theta - cfg.alpha * direction
        if not (np.all(np.isfinite(theta)) and np.all(np.isfinite(rms.accumulator))):
            raise NumericalError("SGHMC step produced non-finite weights")
        if project is not None:
            theta = project(theta)
    return theta, rms
