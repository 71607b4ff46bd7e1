"""Sliding-window per-node latency estimation with an outlier gate."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Iterable, NamedTuple

from .errors import ConfigError, InputError


class LatencyEstimate(NamedTuple):
    mu: float
    sigma: float
    sample_count: int = 0


@dataclass(frozen=True)
class EstimatorConfig:
    window_size: int = 100
    bootstrap_min: int = 10
    prior_mu: float = 100.0
    prior_sigma: float = 50.0
    outlier_k: float = 6.0
    sigma_floor: float = 1.0

    def validate(self) -> None:
        if not self.window_size >= self.bootstrap_min >= 1:
            raise ConfigError("need window_size >= bootstrap_min >= 1")
        if self.outlier_k <= 0:
            raise ConfigError("outlier_k must be > 0")
        if self.sigma_floor < 0:
            raise ConfigError("sigma_floor must be >= 0")


class LatencyEstimator:
    """Gaussian fit of one node's recent latencies.

    Keeps the last ``window_size`` accepted samples.  Once the window holds
    ``bootstrap_min`` samples, anything above ``mu + outlier_k * sigma`` is
    treated as an abnormal arrival and not admitted, so rare very late
    messages cannot stretch the fusion deadline.
    """

    def __init__(self, config: EstimatorConfig | None = None):
        self.config = config or EstimatorConfig()
        self.config.validate()
        self._window: deque[float] = deque()
        # sums are kept about a fixed shift to limit cancellation error
        self._shift: float | None = None
        self._s1 = 0.0
        self._s2 = 0.0
        self.rejected = 0

    def __len__(self) -> int:
        return len(self._window)

    @property
    def samples(self) -> tuple[float, ...]:
        return tuple(self._window)

    def observe(self, latency_sample: float) -> "LatencyEstimator":
        if latency_sample < 0 or math.isnan(latency_sample):
            raise InputError(f"latency sample must be >= 0, got {latency_sample}")
        cfg = self.config
        if len(self._window) >= cfg.bootstrap_min:
            mu, sigma, _ = self.estimate()
            if latency_sample > mu + cfg.outlier_k * sigma:
                self.rejected += 1
                return self
        if self._shift is None:
            self._shift = latency_sample
        d = latency_sample - self._shift
        self._window.append(latency_sample)
        self._s1 += d
        self._s2 += d * d
        if len(self._window) > cfg.window_size:
            old = self._window.popleft() - self._shift
            self._s1 -= old
            self._s2 -= old * old
        return self

    def observe_many(self, samples: Iterable[float]) -> "LatencyEstimator":
        for s in samples:
            self.observe(s)
        return self

    def estimate(self) -> LatencyEstimate:
        cfg = self.config
        n = len(self._window)
        if n < cfg.bootstrap_min:
            return LatencyEstimate(cfg.prior_mu, cfg.prior_sigma, n)
        mean_d = self._s1 / n
        mu = self._shift + mean_d
        var = (self._s2 - n * mean_d * mean_d) / (n - 1) if n > 1 else 0.0
        sigma = math.sqrt(var) if var > 0 else 0.0
        return LatencyEstimate(max(mu, 0.0), max(sigma, cfg.sigma_floor), n)


def observe(estimator: LatencyEstimator, latency_sample: float) -> LatencyEstimator:
    return estimator.observe(latency_sample)


def estimate(estimator: LatencyEstimator) -> LatencyEstimate:
    return estimator.estimate()
