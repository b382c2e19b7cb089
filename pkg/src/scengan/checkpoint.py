"""JSON checkpoints that restore a training run bit-for-bit.

Floats are written with ``repr`` precision (exact float64 round-trip) and
every random stream is stored as its bit-generator state.
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .data import BatchStream
from .losses import LossReport
from .nn import MlpNetwork
from .sghmc import RmsPropState
from .trainer import Particle, ParticleEnsemble, TrainerState, TrainingConfig

FORMAT = "scengan-checkpoint"
VERSION = 1


class CheckpointError(ValueError):
    pass


def _rng_state(rng: np.random.Generator) -> dict:
    return rng.bit_generator.state


def _rng_from(state: dict) -> np.random.Generator:
    name = state.get("bit_generator")
    bitgen_cls = getattr(np.random, name, None) if isinstance(name, str) else None
    if bitgen_cls is None:
        raise CheckpointError(f"unknown bit generator {name!r}")
    bg = bitgen_cls()
    bg.state = state
    return np.random.Generator(bg)


def _particle_doc(p: Particle) -> dict:
    return {
        "theta": p.theta.tolist(),
        "rms": {
            "accumulator": p.rms.accumulator.tolist(),
            "decay": p.rms.decay,
            "epsilon": p.rms.epsilon,
        },
        "rng": _rng_state(p.rng),
    }


def _particle_from(doc: dict, n_params: int) -> Particle:
    theta = np.array(doc["theta"], dtype=np.float64)
    acc = np.array(doc["rms"]["accumulator"], dtype=np.float64)
    if theta.shape != (n_params,) or acc.shape != (n_params,):
        raise CheckpointError(f"particle has {theta.shape[0]} weights, network needs {n_params}")
    rms = RmsPropState(acc, float(doc["rms"]["decay"]), float(doc["rms"]["epsilon"]))
    return Particle(theta, rms, _rng_from(doc["rng"]))


def to_document(ensemble: ParticleEnsemble, state: TrainerState, config: TrainingConfig,
                extra: dict | None = None) -> dict:
    s = state.stream
    return {
        "format": FORMAT,
        "version": VERSION,
        "config": config.to_dict(),
        "nets": {"generator": ensemble.gen_net.to_dict(), "discriminator": ensemble.disc_net.to_dict()},
        "sample_shape": list(ensemble.sample_shape),
        "generators": [_particle_doc(p) for p in ensemble.generators],
        "discriminators": [_particle_doc(p) for p in ensemble.discriminators],
        "state": {
            "running_n": state.running_n,
            "epoch": state.epoch,
            "loss_history": [
                {"l_g": r.l_g, "l_d": r.l_d, "value_v": r.value_v,
                 "wasserstein_estimate": r.wasserstein_estimate,
                 "l_g_particles": list(r.l_g_particles)}
                for r in state.loss_history
            ],
            "stream": {
                "n": s.n, "m": s.m, "perm": s.perm.tolist(), "cursor": s.cursor,
                "data_epoch": s.data_epoch, "rng": _rng_state(s.rng),
            },
            "latent_rng": _rng_state(state.latent_rng),
        },
        "meta": extra or {},
    }


def from_document(doc: dict) -> tuple[ParticleEnsemble, TrainerState, TrainingConfig, dict]:
    if not isinstance(doc, dict) or doc.get("format") != FORMAT:
        raise CheckpointError("not a scengan checkpoint")
    if doc.get("version") != VERSION:
        raise CheckpointError(f"checkpoint version {doc.get('version')!r}, expected {VERSION}")
    try:
        config = TrainingConfig.from_dict(doc["config"])
        gen_net = MlpNetwork.from_dict(doc["nets"]["generator"])
        disc_net = MlpNetwork.from_dict(doc["nets"]["discriminator"])
        gens = [_particle_from(p, gen_net.n_params) for p in doc["generators"]]
        discs = [_particle_from(p, disc_net.n_params) for p in doc["discriminators"]]
        ensemble = ParticleEnsemble(gen_net, disc_net, gens, discs, tuple(doc["sample_shape"]))
        st = doc["state"]
        sd = st["stream"]
        stream = BatchStream(int(sd["n"]), int(sd["m"]), _rng_from(sd["rng"]),
                             np.array(sd["perm"], dtype=np.int64), int(sd["cursor"]),
                             int(sd["data_epoch"]))
        history = [
            LossReport(float(r["l_g"]), float(r["l_d"]), float(r["value_v"]),
                       float(r["wasserstein_estimate"]), tuple(r["l_g_particles"]))
            for r in st["loss_history"]
        ]
        state = TrainerState(stream, _rng_from(st["latent_rng"]), int(st["running_n"]),
                             int(st["epoch"]), history)
        meta = doc.get("meta", {})
    except CheckpointError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"malformed checkpoint: {exc!r}") from None
    if len(gens) != config.j_particles or len(discs) != config.d_particles:
        raise CheckpointError("particle counts disagree with config")
    return ensemble, state, config, meta


def save_checkpoint(ensemble, state, config, path, extra: dict | None = None) -> None:
    """Write atomically: a crash never leaves a half-written checkpoint."""
    path = Path(path)
    text = json.dumps(to_document(ensemble, state, config, extra), allow_nan=False)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_checkpoint(path) -> tuple[ParticleEnsemble, TrainerState, TrainingConfig, dict]:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{path}: not valid JSON ({exc})") from None
    return from_document(doc)
