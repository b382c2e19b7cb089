"""Bayesian GAN training: SGHMC sampling over generator and critic weights."""

from __future__ import annotations

import dataclasses
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .data import BatchStream, DataError, ScenarioBatch
from .losses import (
    LossReport,
    PriorSpec,
    loss_report,
    posterior_grad_discriminator,
    posterior_grad_generator,
)
from .nn import MlpNetwork, discriminator_net, forward, generator_net, init_weights
from .sghmc import NumericalError, RmsPropState, SghmcConfig, clip_weights, sghmc_step


@dataclass
class TrainingConfig:
    alpha: float = 1e-4
    eta: float = 0.01
    c: float = 0.01
    m: int = 32
    n_discri: int = 5
    n_d_mc: int = 1
    n_g_mc: int = 1
    m_inner: int = 2
    j_particles: int = 2
    d_particles: int = 1
    # None means a flat prior
    gamma_g: Optional[float] = 1.0
    gamma_d: Optional[float] = 1.0
    latent_dim: int = 32
    max_epochs: int = 2000
    seed: int = 0
    conv_window: int = 10
    conv_tol: float = 1e-3
    eval_interval: int = 50
    rms_decay: float = 0.9
    rms_eps: float = 1e-8

    def __post_init__(self):
        counts = ("m", "n_discri", "n_d_mc", "n_g_mc", "m_inner", "j_particles",
                  "d_particles", "latent_dim", "max_epochs", "eval_interval")
        for name in counts:
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not self.c > 0:
            raise ValueError("c must be > 0")
        if not self.conv_tol > 0:
            raise ValueError("conv_tol must be > 0")
        if self.conv_window < 2:
            raise ValueError("conv_window must be >= 2")
        if not 0 < self.rms_decay < 1:
            raise ValueError("rms_decay must lie in (0, 1)")
        # validates alpha/eta/m_inner
        self.sghmc
        self.prior_g, self.prior_d

    @property
    def sghmc(self) -> SghmcConfig:
        return SghmcConfig(self.alpha, self.eta, self.m_inner)

    @property
    def prior_g(self) -> PriorSpec:
        return PriorSpec(math.inf if self.gamma_g is None else self.gamma_g)

    @property
    def prior_d(self) -> PriorSpec:
        return PriorSpec(math.inf if self.gamma_d is None else self.gamma_d)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainingConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown training config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class Particle:
    theta: np.ndarray
    rms: RmsPropState
    rng: np.random.Generator


@dataclass
class ParticleEnsemble:
    gen_net: MlpNetwork
    disc_net: MlpNetwork
    generators: list
    discriminators: list
    sample_shape: tuple

    @property
    def latent_dim(self) -> int:
        return self.gen_net.input_width


@dataclass
class TrainerState:
    stream: BatchStream
    latent_rng: np.random.Generator
    running_n: int = 0
    epoch: int = 0
    loss_history: list = field(default_factory=list)


def build_nets(config: TrainingConfig, sample_width: int, gen_hidden=(64, 128),
               disc_hidden=(128, 64), slope: float = 0.2) -> tuple[MlpNetwork, MlpNetwork]:
    return (generator_net(config.latent_dim, sample_width, gen_hidden, slope),
            discriminator_net(sample_width, disc_hidden, slope))


def init_run(config: TrainingConfig, data: ScenarioBatch, nets=None) -> tuple[ParticleEnsemble, TrainerState]:
    """Fresh ensemble and trainer state, every stream derived from ``config.seed``."""
    if data.n_samples == 0:
        raise DataError("empty training set")
    if config.m > data.n_samples:
        raise DataError(f"batch size {config.m} exceeds {data.n_samples} training samples")
    width = data.n_sites * data.timesteps
    gen_net, disc_net = nets if nets is not None else build_nets(config, width)
    if gen_net.output_width != width or disc_net.input_width != width:
        raise ValueError(f"network widths do not match sample width {width}")
    if gen_net.input_width != config.latent_dim:
        raise ValueError("generator input width must equal latent_dim")

    J, K = config.j_particles, config.d_particles
    seeds = np.random.SeedSequence(config.seed).spawn(2 * (J + K) + 2)
    rms = lambda n: RmsPropState.zeros(n, config.rms_decay, config.rms_eps)
    gens = [Particle(init_weights(gen_net, seeds[j]), rms(gen_net.n_params),
                     np.random.default_rng(seeds[J + j])) for j in range(J)]
    off = 2 * J
    discs = [Particle(init_weights(disc_net, seeds[off + k]), rms(disc_net.n_params),
                      np.random.default_rng(seeds[off + K + k])) for k in range(K)]
    for p in discs:
        p.theta = clip_weights(p.theta, config.c)
    ensemble = ParticleEnsemble(gen_net, disc_net, gens, discs, (data.n_sites, data.timesteps))
    state = TrainerState(BatchStream(data.n_samples, config.m, np.random.default_rng(seeds[-2])),
                         np.random.default_rng(seeds[-1]))
    return ensemble, state


def has_converged(state: TrainerState, config: TrainingConfig) -> bool:
    """Windowed test on the moving average of ``|V|`` plus the epoch cap.

    The newest moving average (last ``window`` evaluations) is compared with
    the one ending an evaluation earlier.
    """
    if state.epoch >= config.max_epochs:
        return True
    window = config.conv_window
    hist = state.loss_history
    if len(hist) < window:
        return False
    vals = np.abs([r.value_v for r in hist])
    current = vals[-window:].mean()
    previous = vals[-window - 1:-1].mean() if len(vals) > window else vals[:-1].mean()
    if previous == current:
        return True
    return abs(current - previous) < config.conv_tol * abs(previous)


def _map(fn, items, pool):
    if pool is None:
        return [fn(x) for x in items]
    return list(pool.map(fn, items))


def train(
    config: TrainingConfig,
    data: ScenarioBatch,
    nets=None,
    *,
    resume: Optional[tuple[ParticleEnsemble, TrainerState]] = None,
    callback: Optional[Callable[[str, ParticleEnsemble, TrainerState], None]] = None,
    workers: int = 1,
) -> tuple[ParticleEnsemble, TrainerState]:
    """Run the sampler until convergence or ``config.max_epochs`` outer iterations.

    Each outer iteration runs ``n_d_mc * n_discri`` critic rounds then
    ``n_g_mc`` generator rounds.  A round draws one mini-batch (plus one latent
    batch), adds ``m`` to ``running_n`` and moves every particle of one side
    with ``m_inner`` SGHMC iterations against a snapshot of the other side.

    ``callback(event, ensemble, state)`` fires with ``"discriminator"`` after
    each critic round, ``"generator"`` after each generator round and
    ``"eval"`` whenever a loss report is appended.
    """
    ensemble, state = resume if resume is not None else init_run(config, data, nets)
    flat = data.flat()
    gen_net, disc_net = ensemble.gen_net, ensemble.disc_net
    sg = config.sghmc
    prior_g, prior_d = config.prior_g, config.prior_d
    clip = lambda th: clip_weights(th, config.c)
    pool = ThreadPoolExecutor(workers) if workers > 1 else None
    notify = callback or (lambda *a: None)

    real = z = None
    try:
        while not has_converged(state, config):
            for _ in range(config.n_d_mc):
                for _ in range(config.n_discri):
                    real = flat[state.stream.next()]
                    z = state.latent_rng.standard_normal((config.m, config.latent_dim))
                    state.running_n += config.m
                    gens = [p.theta for p in ensemble.generators]
                    n_now = state.running_n

                    def step_d(p, real=real, z=z, gens=gens, n_now=n_now):
                        grad = lambda th: posterior_grad_discriminator(
                            gen_net, disc_net, th, gens, real, z, prior_d, n_now)
                        p.theta, p.rms = sghmc_step(p.theta, grad, sg, p.rms, p.rng, project=clip)

                    _map(step_d, ensemble.discriminators, pool)
                    notify("discriminator", ensemble, state)

            for _ in range(config.n_g_mc):
                z = state.latent_rng.standard_normal((config.m, config.latent_dim))
                state.running_n += config.m
                discs = [p.theta for p in ensemble.discriminators]
                n_now = state.running_n

                def step_g(p, z=z, discs=discs, n_now=n_now):
                    grad = lambda th: posterior_grad_generator(
                        gen_net, disc_net, th, discs, z, prior_g, n_now)
                    p.theta, p.rms = sghmc_step(p.theta, grad, sg, p.rms, p.rng)

                _map(step_g, ensemble.generators, pool)
                notify("generator", ensemble, state)

            state.epoch += 1
            if state.epoch % config.eval_interval == 0:
                report = evaluate_losses(ensemble, real, z)
                if not all(np.isfinite([report.l_d, report.l_g])):
                    raise NumericalError(f"non-finite loss at epoch {state.epoch}")
                state.loss_history.append(report)
                notify("eval", ensemble, state)
    finally:
        if pool is not None:
            pool.shutdown()
    return ensemble, state


def evaluate_losses(ensemble: ParticleEnsemble, real: np.ndarray, z: np.ndarray) -> LossReport:
    """Loss report for the first critic particle against every generator."""
    theta_d = ensemble.discriminators[0].theta
    real_scores, _ = forward(ensemble.disc_net, theta_d, real)
    fake_scores = []
    for p in ensemble.generators:
        fake, _ = forward(ensemble.gen_net, p.theta, z)
        fake_scores.append(forward(ensemble.disc_net, theta_d, fake)[0])
    return loss_report(real_scores, fake_scores)


def generate(ensemble: ParticleEnsemble, generator_index: int, count: int,
             rng: np.random.Generator) -> ScenarioBatch:
    """Draw ``count`` scenarios from one generator particle."""
    if not 0 <= generator_index < len(ensemble.generators):
        raise IndexError(f"generator index {generator_index} out of range "
                         f"(have {len(ensemble.generators)})")
    if count < 1:
        raise ValueError("count must be >= 1")
    z = rng.standard_normal((count, ensemble.latent_dim))
    out, _ = forward(ensemble.gen_net, ensemble.generators[generator_index].theta, z)
    return ScenarioBatch(out.reshape(count, *ensemble.sample_shape),
                         provenance=f"generated({generator_index})")
