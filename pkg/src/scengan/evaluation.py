"""Scenario quality metrics: Pearson structure, summary statistics, mode purity."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .data import DataError, ScenarioBatch
from .synth import REGIME_THRESHOLD, night_mask


def pearson_matrix(batch: ScenarioBatch) -> np.ndarray:
    """Site-by-site Pearson coefficients over all days concatenated.

    Pairs involving a constant site series are NaN (undefined), never 0.
    """
    if batch.n_sites < 2:
        raise DataError("need at least two sites for a correlation matrix")
    x = batch.samples.transpose(1, 0, 2).reshape(batch.n_sites, -1)
    xc = x - x.mean(axis=1, keepdims=True)
    norm = np.sqrt(np.einsum("ij,ij->i", xc, xc))
    with np.errstate(invalid="ignore", divide="ignore"):
        corr = (xc @ xc.T) / np.outer(norm, norm)
    constant = norm == 0
    corr[constant, :] = np.nan
    corr[:, constant] = np.nan
    corr = np.clip(corr, -1.0, 1.0)
    corr = 0.5 * (corr + corr.T)
    np.fill_diagonal(corr, 1.0)
    return corr


def correlation_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Frobenius norm of ``a - b``."""
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"correlation matrices differ in shape: {a.shape} vs {b.shape}")
    return float(np.sqrt(np.sum((a - b) ** 2)))


@dataclass(frozen=True)
class BoxSummary:
    q1: float
    median: float
    q3: float
    whisker_lo: float
    whisker_hi: float

    @classmethod
    def of(cls, values: np.ndarray) -> "BoxSummary":
        q1, med, q3 = np.percentile(values, [25, 50, 75])
        iqr = q3 - q1
        lo = values[values >= q1 - 1.5 * iqr].min()
        hi = values[values <= q3 + 1.5 * iqr].max()
        return cls(float(q1), float(med), float(q3), float(lo), float(hi))


@dataclass(frozen=True)
class GeneratorStats:
    means: np.ndarray
    variances: np.ndarray
    mean_box: BoxSummary
    variance_box: BoxSummary


def generator_stats(batch: ScenarioBatch) -> GeneratorStats:
    if batch.n_samples < 4:
        raise DataError("need at least 4 scenarios for quartiles")
    flat = batch.flat()
    means = flat.mean(axis=1)
    variances = flat.var(axis=1)
    return GeneratorStats(means, variances, BoxSummary.of(means), BoxSummary.of(variances))


class WindSolarClassifier:
    """Solar iff the mean over night timesteps is below ``night_level``."""

    family = "mixed_wind_solar"
    accepts = ("mixed_wind_solar", "wind", "solar")
    modes = ("wind", "solar")

    def __init__(self, timesteps: int, night_level: float = 0.02):
        self.timesteps = timesteps
        self.night = night_mask(timesteps)
        self.night_level = night_level

    def classify(self, batch: ScenarioBatch) -> np.ndarray:
        if batch.timesteps != self.timesteps:
            raise DataError(f"classifier built for {self.timesteps} timesteps, batch has {batch.timesteps}")
        night_mean = batch.samples[..., self.night].mean(axis=(1, 2))
        return np.where(night_mean < self.night_level, "solar", "wind")


class RegimeClassifier:
    """Calm iff the scenario mean is below the midpoint of the two regime levels."""

    family = "two_regime_wind"
    accepts = ("two_regime_wind", "wind")
    modes = ("calm", "gusty")

    def __init__(self, threshold: float = REGIME_THRESHOLD):
        self.threshold = threshold

    def classify(self, batch: ScenarioBatch) -> np.ndarray:
        return np.where(batch.flat().mean(axis=1) < self.threshold, "calm", "gusty")


class CorrelationGroupClassifier:
    """Assign each scenario to the group whose correlation matrix it matches best.

    Per-scenario Pearson matrices are noisy at T points, so this is only
    meaningful in aggregate; :func:`mode_purity` still works with it.
    """

    family = "spatiotemporal"
    accepts = ("spatiotemporal",)

    def __init__(self, group_corrs: dict):
        self.group_corrs = dict(group_corrs)
        self.modes = tuple(self.group_corrs)

    def classify(self, batch: ScenarioBatch) -> np.ndarray:
        labels = []
        for k in range(batch.n_samples):
            c = pearson_matrix(batch.subset([k]))
            c = np.nan_to_num(c)
            d = [correlation_distance(c, g) for g in self.group_corrs.values()]
            labels.append(self.modes[int(np.argmin(d))])
        return np.array(labels)


def classifier_for(family: str, timesteps: int, group_corrs=None):
    if family == "mixed_wind_solar":
        return WindSolarClassifier(timesteps)
    if family == "two_regime_wind":
        return RegimeClassifier()
    if family == "spatiotemporal" and group_corrs is not None:
        return CorrelationGroupClassifier(group_corrs)
    raise DataError(f"no mode classifier for family {family!r}")


@dataclass(frozen=True)
class ModePurityReport:
    counts: dict
    fractions: dict
    dominant_mode: str
    purity: Fraction

    @property
    def total(self) -> int:
        return sum(self.counts.values())


def mode_purity(batch: ScenarioBatch, classifier) -> ModePurityReport:
    """Fraction of scenarios per mode; purity is the largest fraction."""
    if batch.family is not None and batch.family not in classifier.accepts:
        raise DataError(f"batch family {batch.family!r} does not match classifier for {classifier.family!r}")
    if batch.n_samples == 0:
        raise DataError("empty batch")
    labels = classifier.classify(batch)
    counts = {mode: int(np.count_nonzero(labels == mode)) for mode in classifier.modes}
    n = batch.n_samples
    fractions = {mode: Fraction(c, n) for mode, c in counts.items()}
    dominant = max(classifier.modes, key=lambda mo: counts[mo])
    return ModePurityReport(counts, fractions, dominant, fractions[dominant])


def classifier_accuracy(batch: ScenarioBatch, classifier) -> float:
    if batch.labels is None:
        raise DataError("labelled batch required")
    return float(np.mean(classifier.classify(batch) == batch.labels))
