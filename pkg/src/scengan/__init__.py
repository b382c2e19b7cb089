"""Bayesian GAN renewable scenario generation.

Ensembles of generator networks are sampled from their weight posterior with
stochastic-gradient HMC against Wasserstein critics, so that different
generators capture different modes of historical power data.
"""

from .data import ScenarioBatch, load_dataset
from .trainer import TrainingConfig, generate, train

__all__ = ["ScenarioBatch", "TrainingConfig", "generate", "load_dataset", "train"]
__version__ = "0.1.0"
