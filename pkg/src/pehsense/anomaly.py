"""Gaussian z-score anomaly detection on harvested energy."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

HEALTHY = "healthy"
ANOMALOUS = "anomalous"


class AnomalyError(ValueError):
    pass


@dataclass(frozen=True)
class GaussianAnomalyModel:
    mu: float
    sigma: float
    z_threshold: float = 3.0
    n_samples: int = 0

    def __post_init__(self):
        if not (np.isfinite(self.sigma) and self.sigma > 0):
            raise AnomalyError("sigma must be > 0")
        if not self.z_threshold > 0:
            raise AnomalyError("z_threshold must be > 0")


def fit(energies, z_threshold: float = 3.0) -> GaussianAnomalyModel:
    """Sample mean and (n-1) standard deviation of healthy energies."""
    e = np.asarray(energies, dtype=float).ravel()
    if e.size < 3:
        raise AnomalyError(f"need at least 3 healthy samples, got {e.size}")
    if not np.all(np.isfinite(e)):
        raise AnomalyError("energies must be finite")
    sigma = float(np.std(e, ddof=1))
    if sigma == 0.0 or sigma <= 1e-15 * abs(float(np.mean(e))):
        raise AnomalyError("healthy energies have zero spread")
    return GaussianAnomalyModel(float(np.mean(e)), sigma, float(z_threshold), int(e.size))


def score(model: GaussianAnomalyModel, energy):
    """Signed z-score; scalar in, scalar out."""
    z = (np.asarray(energy, dtype=float) - model.mu) / model.sigma
    return float(z) if z.ndim == 0 else z


def is_anomalous(model: GaussianAnomalyModel, energy):
    # boundary |z| == threshold counts as healthy
    return np.abs(score(model, energy)) > model.z_threshold


def classify(model: GaussianAnomalyModel, energy):
    flag = is_anomalous(model, energy)
    if np.ndim(flag) == 0:
        return ANOMALOUS if flag else HEALTHY
    return np.where(flag, ANOMALOUS, HEALTHY)


@dataclass(frozen=True)
class DetectionSummary:
    n_healthy: int
    n_faulty: int
    false_alarms: int
    detections: int

    @property
    def detection_rate(self) -> float:
        return self.detections / self.n_faulty if self.n_faulty else float("nan")

    @property
    def false_alarm_rate(self) -> float:
        return self.false_alarms / self.n_healthy if self.n_healthy else float("nan")


def evaluate(model: GaussianAnomalyModel, healthy, faulty) -> DetectionSummary:
    h = np.atleast_1d(is_anomalous(model, healthy))
    f = np.atleast_1d(is_anomalous(model, faulty))
    return DetectionSummary(h.size, f.size, int(h.sum()), int(f.sum()))
