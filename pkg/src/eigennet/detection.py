"""Eigenvalue-based detection statistics, thresholds and ROC estimation.

Four statistics over a descending eigenvalue list:

* RT, largest root over known noise power: lambda_1 / sigma2
* GT, largest eigenvalue ratio: lambda_1 / sum(lambda_i)
* ST, sphericity: prod(lambda_i) / mean(lambda_i)^len
* JT: sum(lambda_i^2) / sum(lambda_i)^2

GT, ST and JT are scale invariant; RT scales linearly. Statistics computed
from a partial (Ritz) list use that list's length throughout. Thresholds are
calibrated empirically as nearest-rank-higher quantiles of the statistic
under the noise-only hypothesis, using the same eigenvalue pipeline as the
evaluated detector.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DetectionError
from .signals import SignalConfig, gen_h0

__all__ = [
    "Hypothesis",
    "Statistic",
    "DetectorConfig",
    "RocPoint",
    "STATISTIC_KINDS",
    "compute_statistic",
    "trace_consensus",
    "threshold_from_h0",
    "calibrate_threshold",
    "local_decide",
    "statistic_consensus",
    "roc_curve",
]

STATISTIC_KINDS = ("RT", "GT", "ST", "JT")


class Hypothesis(enum.Enum):
    H0 = 0
    H1 = 1


@dataclass(frozen=True)
class Statistic:
    kind: str
    value: float
    clamped: bool = False


@dataclass(frozen=True)
class DetectorConfig:
    """A statistic kind with its target false-alarm rate and calibration size."""

    kind: str
    alpha: float
    calibration_trials: int = 1000
    sigma2: float | None = None
    threshold: float | None = None

    def __post_init__(self) -> None:
        if self.kind not in STATISTIC_KINDS:
            raise DetectionError(f"unknown statistic kind {self.kind!r}")
        if not (0.0 < self.alpha < 1.0):
            raise DetectionError("false-alarm rate must lie in (0, 1)")
        if self.calibration_trials < 1000:
            raise DetectionError("calibration needs at least 1000 trials")
        if self.kind == "RT" and self.sigma2 is None:
            raise DetectionError("RT needs the noise variance")


@dataclass(frozen=True)
class RocPoint:
    threshold: float
    pfa: float
    pd: float


def compute_statistic(
    kind: str,
    eigenvalues: np.ndarray,
    sigma2: float | None = None,
    *,
    trace: float | None = None,
) -> Statistic:
    """Evaluate one detection statistic on a descending eigenvalue list.

    Small negative values (numerical artifacts of a PSD spectrum) are
    clamped to zero and flagged. An all-zero list leaves GT/ST/JT undefined.

    On a partial (Ritz) list the eigenvalue sum undercounts the true trace;
    passing ``trace`` substitutes it for the sum in GT/ST/JT (the exact-trace
    mode, with :func:`trace_consensus` supplying the decentralized value).
    """
    if kind not in STATISTIC_KINDS:
        raise DetectionError(f"unknown statistic kind {kind!r}")
    lam = np.asarray(eigenvalues, dtype=float)
    if lam.size == 0:
        raise DetectionError("empty eigenvalue list")
    clamped = bool(np.any(lam < 0))
    lam = np.maximum(lam, 0.0)
    lam = np.sort(lam)[::-1]
    if kind == "RT":
        if sigma2 is None or sigma2 <= 0:
            raise DetectionError("RT needs a positive noise variance")
        return Statistic("RT", float(lam[0]) / sigma2, clamped)
    total = float(lam.sum()) if trace is None else float(trace)
    if total == 0.0:
        raise DetectionError(f"{kind} undefined on an all-zero eigenvalue list")
    if kind == "GT":
        return Statistic("GT", float(lam[0]) / total, clamped)
    if kind == "JT":
        # normalize before squaring so tiny spectra do not underflow
        return Statistic("JT", float(np.sum((lam / total) ** 2)), clamped)
    mean = total / len(lam)
    return Statistic("ST", float(np.prod(lam / mean)), clamped)


def trace_consensus(y: np.ndarray, ac) -> np.ndarray:
    """Per-node covariance-trace estimates via one scalar consensus round.

    Node k contributes its sample energy; K/N times the consensus output
    equals trace((1/N) Y Y^H) exactly under ideal averaging.
    """
    from .consensus import AcConfig, run_consensus

    y = np.asarray(y)
    k, n = y.shape
    energies = np.sum(np.abs(y) ** 2, axis=1)
    res = run_consensus(energies, ac) if isinstance(ac, AcConfig) else ac.run(energies)
    return (k / n) * np.real(res.z)


def threshold_from_h0(values: Sequence[float], alpha: float) -> float:
    """Nearest-rank-higher (1 - alpha) quantile of noise-only statistics.

    Needs at least 10/alpha samples for the tail to be resolvable.
    """
    if not (0.0 < alpha < 1.0):
        raise DetectionError("false-alarm rate must lie in (0, 1)")
    vals = np.sort(np.asarray(values, dtype=float))
    n = len(vals)
    if n < 10.0 / alpha:
        raise DetectionError(
            f"{n} calibration trials are too few for alpha={alpha} "
            f"(need at least {math.ceil(10.0 / alpha)})"
        )
    rank = math.ceil((1.0 - alpha) * n)
    return float(vals[min(max(rank, 1), n) - 1])


def calibrate_threshold(
    cfg: DetectorConfig,
    h0_config: SignalConfig,
    pipeline: Callable[[np.ndarray], np.ndarray],
    *,
    trial_seed: Callable[[int], int] | None = None,
) -> float:
    """Empirical threshold from seeded noise-only trials.

    ``pipeline`` maps a sample matrix to the descending eigenvalue list the
    detector will consume (exact, power-method or Lanczos based), so the
    calibration sees the same estimator bias as the evaluation.
    """
    seeds = trial_seed or (lambda i: h0_config.seed + i)
    values = []
    for i in range(cfg.calibration_trials):
        trial_cfg = SignalConfig(
            k=h0_config.k,
            n=h0_config.n,
            sigma2=h0_config.sigma2,
            seed=seeds(i),
        )
        lam = pipeline(gen_h0(trial_cfg))
        values.append(compute_statistic(cfg.kind, lam, cfg.sigma2).value)
    return threshold_from_h0(values, cfg.alpha)


def local_decide(value: float, threshold: float) -> Hypothesis:
    """Signal declared present only when the statistic strictly exceeds the threshold."""
    return Hypothesis.H1 if value > threshold else Hypothesis.H0


def statistic_consensus(values: np.ndarray, ac) -> np.ndarray:
    """Smooth per-node statistics with one scalar consensus round."""
    from .consensus import AcConfig, run_consensus

    values = np.asarray(values, dtype=float)
    if values.ndim != 1:
        raise DetectionError("expected one statistic per node")
    res = run_consensus(values, ac) if isinstance(ac, AcConfig) else ac.run(values)
    return np.real(res.z)


def roc_curve(
    h0_values: Sequence[float],
    h1_values: Sequence[float],
    thresholds: Sequence[float] | None = None,
) -> list[RocPoint]:
    """Empirical ROC from disjoint noise-only and signal-present trial sets.

    The default threshold grid is the sorted unique noise-only statistic
    values, bracketed by -inf and +inf so the curve reaches (1, 1) and
    (0, 0).
    """
    h0 = np.asarray(h0_values, dtype=float)
    h1 = np.asarray(h1_values, dtype=float)
    if h0.size == 0 or h1.size == 0:
        raise DetectionError("need trials under both hypotheses")
    if thresholds is None:
        grid = np.concatenate(([-np.inf], np.unique(h0), [np.inf]))
    else:
        grid = np.sort(np.asarray(thresholds, dtype=float))
    points = []
    for th in grid:
        pfa = float(np.mean(h0 > th))
        pd = float(np.mean(h1 > th))
        points.append(RocPoint(threshold=float(th), pfa=pfa, pd=pd))
    return points
