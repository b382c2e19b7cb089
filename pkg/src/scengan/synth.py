"""Synthetic wind/solar scenario families with known, separable modes.

All profiles are in capacity units on ``[0, 1]``.  Time is mapped onto a 24 h
day, so every family works at any resolution with ``timesteps >= 8``.
"""

from __future__ import annotations

import numpy as np

from .data import DataError, ScenarioBatch

SUNRISE_H, SUNSET_H = 6.0, 18.0

# per-regime (mean level, day-to-day level jitter, fluctuation std, ramp probability)
WIND_REGIMES = {
    "calm": (0.2, 0.02, 0.05, 0.0),
    "gusty": (0.6, 0.04, 0.10, 0.7),
}
REGIME_THRESHOLD = 0.5 * (WIND_REGIMES["calm"][0] + WIND_REGIMES["gusty"][0])

FAMILIES = ("mixed_wind_solar", "two_regime_wind", "spatiotemporal")


def _hours(timesteps: int) -> np.ndarray:
    return (np.arange(timesteps) + 0.5) * 24.0 / timesteps


def night_mask(timesteps: int) -> np.ndarray:
    h = _hours(timesteps)
    return (h <= SUNRISE_H) | (h >= SUNSET_H)


def _check_timesteps(timesteps: int):
    if timesteps < 8:
        raise DataError("synthetic profiles need at least 8 timesteps per day")


def _ou_paths(rng, n_samples, timesteps, n_sites=1, chol=None, tau_hours=4.0):
    """Unit-variance stationary AR(1) paths, shape (n_samples, n_sites, timesteps).

    ``chol`` correlates the innovations across sites.
    """
    phi = np.exp(-(24.0 / timesteps) / tau_hours)
    eps = rng.standard_normal((n_samples, n_sites, timesteps))
    if chol is not None:
        eps = np.einsum("ij,njt->nit", chol, eps)
    x = np.empty_like(eps)
    x[..., 0] = eps[..., 0]
    scale = np.sqrt(1.0 - phi * phi)
    for t in range(1, timesteps):
        x[..., t] = phi * x[..., t - 1] + scale * eps[..., t]
    return x


def synth_solar(n_samples: int, timesteps: int, rng: np.random.Generator) -> ScenarioBatch:
    _check_timesteps(timesteps)
    h = _hours(timesteps)
    day = ~night_mask(timesteps)
    shape = np.zeros(timesteps)
    shape[day] = np.sin(np.pi * (h[day] - SUNRISE_H) / (SUNSET_H - SUNRISE_H)) ** 1.2
    peak = rng.uniform(0.5, 1.0, size=(n_samples, 1, 1))
    cloud = np.clip(1.0 - 0.25 * np.abs(_ou_paths(rng, n_samples, timesteps, tau_hours=2.0)), 0.3, 1.0)
    samples = np.clip(peak * shape * cloud, 0.0, 1.0)
    samples[..., ~day] = 0.0
    return ScenarioBatch(samples, provenance="synthetic",
                         labels=np.full(n_samples, "solar"), family="solar")


def _ramps(rng, n_samples, timesteps, prob):
    h = _hours(timesteps)
    has = rng.random(n_samples) < prob
    t0 = rng.uniform(3.0, 21.0, n_samples)
    size = rng.uniform(0.15, 0.3, n_samples) * rng.choice([-1.0, 1.0], n_samples)
    step = np.tanh((h[None, :] - t0[:, None]) / 0.75)
    # level shift within the day only; the daily mean keeps its regime
    step = step - step.mean(axis=1, keepdims=True)
    return (has * size)[:, None] * step


def synth_wind(n_samples: int, timesteps: int, rng: np.random.Generator,
               regime: str = "gusty") -> ScenarioBatch:
    _check_timesteps(timesteps)
    if regime not in WIND_REGIMES:
        raise DataError(f"unknown wind regime {regime!r}")
    level, jitter, vol, ramp_prob = WIND_REGIMES[regime]
    base = level + jitter * rng.standard_normal((n_samples, 1, 1))
    x = base + vol * _ou_paths(rng, n_samples, timesteps)
    if ramp_prob:
        x = x + _ramps(rng, n_samples, timesteps, ramp_prob)[:, None, :]
    return ScenarioBatch(np.clip(x, 0.0, 1.0), provenance="synthetic",
                         labels=np.full(n_samples, regime), family="wind")


def _check_corr(target_corr: np.ndarray) -> np.ndarray:
    c = np.asarray(target_corr, dtype=np.float64)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise DataError("target correlation must be square")
    if not np.allclose(c, c.T) or not np.allclose(np.diag(c), 1.0):
        raise DataError("target correlation must be symmetric with unit diagonal")
    try:
        return np.linalg.cholesky(c)
    except np.linalg.LinAlgError:
        raise DataError("target correlation is not positive definite") from None


def synth_spatiotemporal(n_samples: int, n_sites: int, timesteps: int, target_corr,
                         rng: np.random.Generator) -> ScenarioBatch:
    """Multi-site gusty-level wind driven by cross-correlated innovations.

    With identical AR(1) dynamics at every site the stationary cross-site
    correlation equals ``target_corr`` before clipping to ``[0, 1]``.
    """
    _check_timesteps(timesteps)
    if n_sites == 1:
        return synth_wind(n_samples, timesteps, rng, "gusty")
    chol = _check_corr(target_corr)
    if chol.shape[0] != n_sites:
        raise DataError(f"target correlation is {chol.shape[0]}x{chol.shape[0]}, need {n_sites}")
    level, _, vol, _ = WIND_REGIMES["gusty"]
    x = level + vol * _ou_paths(rng, n_samples, timesteps, n_sites, chol)
    return ScenarioBatch(np.clip(x, 0.0, 1.0), provenance="synthetic", family="spatiotemporal")


def uniform_corr(n_sites: int, rho: float) -> np.ndarray:
    c = np.full((n_sites, n_sites), rho)
    np.fill_diagonal(c, 1.0)
    return c


def paired_corr(n_sites: int = 4, within: float = 0.8, across: float = -0.3) -> np.ndarray:
    """Two site clusters: strong positive within, negative across."""
    half = n_sites // 2
    grp = np.arange(n_sites) < half
    c = np.where(grp[:, None] == grp[None, :], within, across)
    np.fill_diagonal(c, 1.0)
    return c


def _mix(parts, rng, family):
    samples = np.concatenate([p.samples for p in parts])
    labels = np.concatenate([p.labels for p in parts])
    perm = rng.permutation(len(samples))
    return ScenarioBatch(samples[perm], provenance="synthetic", labels=labels[perm], family=family)


def make_family(family: str, n_samples: int, rng: np.random.Generator, timesteps: int = 24,
                n_sites: int = 4, group_corrs=None) -> ScenarioBatch:
    """Build a labelled, shuffled two-mode dataset.

    ``mixed_wind_solar``: half gusty wind, half solar.
    ``two_regime_wind``: half calm, half gusty wind.
    ``spatiotemporal``: two multi-site groups with different correlation
    matrices (``group_corrs``, default :func:`default_group_corrs`).
    """
    if n_samples < 2:
        raise DataError("need at least 2 samples")
    n_a = n_samples // 2
    n_b = n_samples - n_a
    if family == "mixed_wind_solar":
        parts = [synth_wind(n_a, timesteps, rng, "gusty"), synth_solar(n_b, timesteps, rng)]
        for p, lab in zip(parts, ("wind", "solar")):
            p.labels = np.full(p.n_samples, lab)
    elif family == "two_regime_wind":
        parts = [synth_wind(n_a, timesteps, rng, "calm"), synth_wind(n_b, timesteps, rng, "gusty")]
    elif family == "spatiotemporal":
        if n_sites < 2:
            raise DataError("spatiotemporal family needs at least 2 sites")
        corrs = group_corrs if group_corrs is not None else default_group_corrs(n_sites)
        parts = []
        for k, (n, c) in enumerate(zip((n_a, n_b), corrs), start=1):
            p = synth_spatiotemporal(n, n_sites, timesteps, c, rng)
            p.labels = np.full(n, f"group{k}")
            parts.append(p)
    else:
        raise DataError(f"unknown family {family!r}; choose from {FAMILIES}")
    return _mix(parts, rng, family)


def default_group_corrs(n_sites: int = 4):
    """Same cluster structure, different site membership.

    Group 1 pairs neighbouring sites (0-1, 2-3); group 2 interleaves them
    (0-2, 1-3).  Neither group is "more correlated" overall, so a generator
    can only be closer to one of them by reproducing its structure.
    """
    a = paired_corr(n_sites)
    order = np.r_[np.arange(0, n_sites, 2), np.arange(1, n_sites, 2)]
    inv = np.argsort(order)
    return a, a[np.ix_(inv, inv)]
