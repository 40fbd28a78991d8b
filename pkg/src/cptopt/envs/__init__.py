"""Black-box return environments.

An environment maps a parameter vector to a distribution of scalar returns
and exposes only a sampler: given (theta, count, rng) it yields i.i.d. draws.
Distinct substreams give independent batches; the same substream and theta
reproduce the same batch exactly.
"""

from __future__ import annotations

import numpy as np

from .ssp import BoltzmannPolicy, SspMdp, SspReturnEnv, boltzmann_probs, ssp_episode
from .traffic import TrafficConfig, TrafficGrid, TrafficSim, traffic_episode

__all__ = [
    "ReturnEnv",
    "GaussianMeanEnv",
    "SspMdp",
    "BoltzmannPolicy",
    "SspReturnEnv",
    "boltzmann_probs",
    "ssp_episode",
    "TrafficConfig",
    "TrafficGrid",
    "TrafficSim",
    "traffic_episode",
]


class ReturnEnv:
    """Sampler interface for parameterized return distributions."""

    @property
    def dim(self) -> int:
        raise NotImplementedError

    def sample_returns(
        self, theta: np.ndarray, m: int, rng: np.random.Generator
    ) -> np.ndarray:
        """Draw ``m`` i.i.d. returns at parameter ``theta``."""
        theta = self._check_theta(theta)
        if m < 1:
            raise ValueError("need at least one sample")
        return self._sample(theta, int(m), rng)

    def _check_theta(self, theta: np.ndarray) -> np.ndarray:
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        if theta.shape != (self.dim,):
            raise ValueError(f"theta has shape {theta.shape}, expected ({self.dim},)")
        if not np.all(np.isfinite(theta)):
            raise ValueError("theta must be finite")
        return theta

    def _sample(self, theta: np.ndarray, m: int, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError


class GaussianMeanEnv(ReturnEnv):
    """Gaussian returns centered on a concave quadratic of the parameter.

    X^theta ~ Normal(-0.5 * sum_i curvature_i (theta_i - optimum_i)^2, noise_std).
    The default scalar configuration has mean ``-(theta - 2)^2`` and its
    maximum-value parameter at 2.
    """

    def __init__(self, optimum=2.0, curvatures=2.0, noise_std: float = 0.1):
        self._optimum = np.atleast_1d(np.asarray(optimum, dtype=float))
        self._curvatures = np.broadcast_to(
            np.asarray(curvatures, dtype=float), self._optimum.shape
        ).copy()
        if np.any(self._curvatures <= 0.0):
            raise ValueError("curvatures must be positive")
        if noise_std < 0.0:
            raise ValueError("noise_std must be nonnegative")
        self._noise_std = float(noise_std)

    @property
    def dim(self) -> int:
        return self._optimum.size

    @property
    def optimum(self) -> np.ndarray:
        return self._optimum.copy()

    def mean_value(self, theta) -> float:
        theta = self._check_theta(theta)
        gap = theta - self._optimum
        return float(-0.5 * np.dot(self._curvatures, gap * gap))

    def _sample(self, theta: np.ndarray, m: int, rng: np.random.Generator) -> np.ndarray:
        return rng.normal(self.mean_value(theta), self._noise_std, m)
