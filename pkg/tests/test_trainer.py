import dataclasses
import json

import numpy as np
import pytest

from scengan.checkpoint import CheckpointError, load_checkpoint, save_checkpoint, to_document
from scengan.data import DataError
from scengan.losses import LossReport
from scengan.nn import backward, forward, init_weights
from scengan.synth import make_family
from scengan.trainer import (TrainerState, TrainingConfig, build_nets, generate, has_converged, init_run,
                             train)


@pytest.fixture(scope="module")
def data():
    return make_family("mixed_wind_solar", 64, np.random.default_rng(0), timesteps=24)


def small(**kw):
    base = dict(alpha=1e-3, eta=1e-3, c=0.05, m=8, n_discri=2, latent_dim=4, max_epochs=6,
                eval_interval=2, seed=3)
    base.update(kw)
    return TrainingConfig(**base)


def nets(cfg, data):
    return build_nets(cfg, data.n_sites * data.timesteps, gen_hidden=(8,), disc_hidden=(8,))


def thetas(ens):
    return [p.theta for p in ens.generators + ens.discriminators]


def same_run(a, b):
    return all(np.array_equal(x, y) for x, y in zip(thetas(a), thetas(b)))


# -- config and convergence -----------------------------------------------------

def test_config_validation():
    for bad in (dict(m=0), dict(c=0), dict(conv_tol=0), dict(conv_window=1), dict(j_particles=0),
                dict(alpha=0), dict(gamma_g=-1.0)):
        with pytest.raises(ValueError):
            TrainingConfig(**bad)
    with pytest.raises(ValueError):
        TrainingConfig.from_dict({"m": 4, "nope": 1})
    cfg = small(gamma_d=None)
    assert TrainingConfig.from_dict(cfg.to_dict()) == cfg
    assert cfg.prior_d.flat and not cfg.prior_g.flat


def _state(values, epoch=0):
    hist = [LossReport(-v, -v, v, v) for v in values]
    return TrainerState(None, None, epoch=epoch, loss_history=hist)


def test_has_converged_examples():
    cfg = small(conv_window=3, conv_tol=1e-3, max_epochs=100)
    assert not has_converged(_state([1.0, 1.0]), cfg)
    assert has_converged(_state([1.0, 1.0, 1.0]), cfg)
    assert has_converged(_state([5.0, 1.0], epoch=100), cfg)
    assert not has_converged(_state([1.0, 2.0, 4.0, 8.0]), cfg)
    # |V| is what matters, sign flips do not
    assert has_converged(_state([0.5, -0.5, 0.5, -0.5]), cfg)


def test_rejects_bad_data(data):
    with pytest.raises(DataError):
        init_run(small(m=65), data)
    with pytest.raises(DataError):
        init_run(small(), data.subset([]))


# -- loop laws ------------------------------------------------------------------

def test_counter_law_and_epochs(data):
    cfg = small(n_d_mc=2, n_g_mc=3, max_epochs=4)
    rounds = []
    ens, st = train(cfg, data, nets(cfg, data), callback=lambda ev, e, s: rounds.append((ev, s.running_n)))
    batches = [r for r in rounds if r[0] != "eval"]
    assert [n for _, n in batches] == [cfg.m * (k + 1) for k in range(len(batches))]
    assert len(batches) == 4 * (2 * 2 + 3)
    assert st.running_n == cfg.m * len(batches)
    assert st.epoch == 4 and len(st.loss_history) == 2


def test_clipping_invariant_every_round(data):
    cfg = small(c=0.01, eta=0.5, alpha=0.05, max_epochs=10)
    worst = []
    def cb(ev, ens, st):
        worst.extend(np.max(np.abs(p.theta)) for p in ens.discriminators)
    train(cfg, data, nets(cfg, data), callback=cb)
    assert worst and max(worst) <= cfg.c


def test_deterministic_across_runs_and_workers(data):
    cfg = small(j_particles=3, d_particles=2)
    a, sa = train(cfg, data, nets(cfg, data))
    b, sb = train(cfg, data, nets(cfg, data), workers=3)
    assert same_run(a, b)
    assert to_document(a, sa, cfg) == to_document(b, sb, cfg)
    c, _ = train(small(j_particles=3, d_particles=2, seed=4), data, nets(cfg, data))
    assert not same_run(a, c)


def test_prior_pull_shrinks_generators(data):
    # zero critic weights give zero data gradient, leaving only the prior term
    cfg = small(gamma_g=1e-3, gamma_d=None, eta=0.0, alpha=1e-4, max_epochs=30, eval_interval=100)
    gen, disc = nets(cfg, data)
    ens, st = init_run(cfg, data, (gen, disc))
    for p in ens.discriminators:
        p.theta = np.zeros(disc.n_params)
    norms = [[np.linalg.norm(p.theta) for p in ens.generators]]
    train(cfg, data, resume=(ens, st),
          callback=lambda ev, e, s: ev == "generator" and norms.append([np.linalg.norm(p.theta) for p in e.generators]))
    norms = np.array(norms)
    assert len(norms) == 31
    assert np.all(np.diff(norms, axis=0) < 0)
    assert all(np.all(p.theta == 0) for p in ens.discriminators)


def test_generate(data):
    cfg = small()
    ens, _ = init_run(cfg, data, nets(cfg, data))
    a = generate(ens, 1, 10, np.random.default_rng(2))
    b = generate(ens, 1, 10, np.random.default_rng(2))
    assert np.array_equal(a.samples, b.samples)
    assert a.samples.shape == (10, 1, 24)
    assert np.all((a.samples > 0) & (a.samples < 1))
    with pytest.raises(IndexError):
        generate(ens, 2, 10, np.random.default_rng(2))


# -- degeneracy: a plain clipped-critic WGAN loop -------------------------------

def reference_wgan(cfg, data, gen, disc, rounds):
    """Single generator, single critic, RMSProp, clip after each step; no noise, no prior."""
    seeds = np.random.SeedSequence(cfg.seed).spawn(6)
    tg, td = init_weights(gen, seeds[0]), np.clip(init_weights(disc, seeds[2]), -cfg.c, cfg.c)
    ag, ad = np.zeros_like(tg), np.zeros_like(td)
    data_rng, z_rng = np.random.default_rng(seeds[4]), np.random.default_rng(seeds[5])
    x_all = data.flat()
    perm, cur = np.zeros(0, dtype=int), 0
    lr, rho, eps = cfg.alpha, cfg.rms_decay, cfg.rms_eps

    def critic_grad(td, x, z):
        out, tr = forward(disc, td, x)
        g = backward(disc, td, tr, np.full_like(out, -1.0 / len(x)))
        fake = forward(gen, tg, z)[0]
        out, tr = forward(disc, td, fake)
        return g + backward(disc, td, tr, np.full_like(out, 1.0 / len(z)))

    def gen_grad(tg, z):
        fake, gtr = forward(gen, tg, z)
        out, tr = forward(disc, td, fake)
        _, dx = backward(disc, td, tr, np.full_like(out, -1.0 / len(z)), with_input_grad=True)
        return backward(gen, tg, gtr, dx)

    trajectory = []
    while len(trajectory) < rounds:
        for _ in range(cfg.n_discri):
            if cur + cfg.m > len(perm):
                perm, cur = data_rng.permutation(len(x_all)), 0
            x = x_all[perm[cur:cur + cfg.m]]
            cur += cfg.m
            z = z_rng.standard_normal((cfg.m, cfg.latent_dim))
            for _ in range(cfg.m_inner):
                g = critic_grad(td, x, z)
                ad = rho * ad + (1 - rho) * (g * g)
                td = np.clip(td - lr * (g / (np.sqrt(ad) + eps)), -cfg.c, cfg.c)
            trajectory.append(("discriminator", tg, td))
        z = z_rng.standard_normal((cfg.m, cfg.latent_dim))
        for _ in range(cfg.m_inner):
            g = gen_grad(tg, z)
            ag = rho * ag + (1 - rho) * (g * g)
            tg = tg - lr * (g / (np.sqrt(ag) + eps))
        trajectory.append(("generator", tg, td))
    return trajectory[:rounds]


def test_degenerate_ensemble_is_plain_wgan(data):
    cfg = small(j_particles=1, d_particles=1, eta=0.0, gamma_g=None, gamma_d=None, n_discri=3,
                m_inner=2, max_epochs=50, eval_interval=10)
    gen, disc = nets(cfg, data)
    ours = []
    train(cfg, data, (gen, disc), callback=lambda ev, e, s: ev != "eval" and ours.append(
        (ev, e.generators[0].theta, e.discriminators[0].theta)))
    ref = reference_wgan(cfg, data, gen, disc, len(ours))
    assert len(ours) == 200
    for (ev_a, g_a, d_a), (ev_b, g_b, d_b) in zip(ours, ref):
        assert ev_a == ev_b
        assert np.array_equal(g_a, g_b) and np.array_equal(d_a, d_b)


# -- checkpoints ----------------------------------------------------------------

def test_checkpoint_roundtrip(data, tmp_path):
    cfg = small()
    ens, st = train(cfg, data, nets(cfg, data))
    path = tmp_path / "ck.json"
    save_checkpoint(ens, st, cfg, path, {"note": "x"})
    ens2, st2, cfg2, meta = load_checkpoint(path)
    assert cfg2 == cfg and meta == {"note": "x"}
    assert to_document(ens2, st2, cfg2, meta) == to_document(ens, st, cfg, meta)
    assert same_run(ens, ens2)
    assert st2.latent_rng.standard_normal() == st.latent_rng.standard_normal()
    assert [p.rng.integers(1 << 60) for p in ens2.generators] == [p.rng.integers(1 << 60) for p in ens.generators]


def test_checkpoint_rejects_truncated_and_wrong_version(data, tmp_path):
    cfg = small()
    ens, st = init_run(cfg, data, nets(cfg, data))
    path = tmp_path / "ck.json"
    save_checkpoint(ens, st, cfg, path)
    text = path.read_text()
    (tmp_path / "cut.json").write_text(text[: len(text) // 2])
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "cut.json")
    doc = json.loads(text)
    doc["version"] = 99
    (tmp_path / "v.json").write_text(json.dumps(doc))
    with pytest.raises(CheckpointError, match="version"):
        load_checkpoint(tmp_path / "v.json")
    del doc["generators"]
    doc["version"] = 1
    (tmp_path / "m.json").write_text(json.dumps(doc))
    with pytest.raises(CheckpointError, match="malformed"):
        load_checkpoint(tmp_path / "m.json")
    assert list(p.name for p in tmp_path.iterdir() if p.suffix == ".tmp") == []


def test_resume_equals_uninterrupted(data, tmp_path):
    full_cfg = small(max_epochs=8, j_particles=2, d_particles=2)
    full, full_state = train(full_cfg, data, nets(full_cfg, data))
    half_cfg = dataclasses.replace(full_cfg, max_epochs=3)
    ens, st = train(half_cfg, data, nets(full_cfg, data))
    save_checkpoint(ens, st, half_cfg, tmp_path / "ck.json")
    ens, st, cfg, _ = load_checkpoint(tmp_path / "ck.json")
    ens, st = train(dataclasses.replace(cfg, max_epochs=8), data, resume=(ens, st))
    assert to_document(ens, st, full_cfg) == to_document(full, full_state, full_cfg)
