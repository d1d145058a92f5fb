import logging
from typing import Optional, Tuple

import numpy as np
from scipy.stats import gaussian_kde, ks_2samp

from .errors import DegenerateDistributionError, UsageError
from .models import ComparisonMetrics, FieldStats, PdfEstimate

logger = logging.getLogger(__name__)

MIN_KDE_SAMPLES = 30


def ensemble_moments(samples) -> Tuple[np.ndarray, np.ndarray]:
    """Mean and unbiased standard deviation along the sample axis."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.shape[0] < 2:
        raise UsageError(f"moments need at least 2 samples, got {samples.shape[0]}")
    return samples.mean(axis=0), samples.std(axis=0, ddof=1)


def silverman_bandwidth(samples: np.ndarray) -> float:
    return 1.06 * float(np.std(samples, ddof=1)) * len(samples) ** -0.2


def kde_pdf(samples, abscissae) -> PdfEstimate:
    """Gaussian-kernel density with bandwidth 1.06 sigma n^(-1/5)."""
    samples = np.asarray(samples, dtype=np.float64).ravel()
    if len(samples) < MIN_KDE_SAMPLES:
        raise UsageError(f"density estimate needs at least {MIN_KDE_SAMPLES} samples, got {len(samples)}")
    if np.ptp(samples) == 0:
        raise DegenerateDistributionError("samples have zero variance; no density to estimate")
    kde = gaussian_kde(samples, bw_method=lambda _: 1.06 * len(samples) ** -0.2)
    abscissae = np.asarray(abscissae, dtype=np.float64)
    return PdfEstimate(abscissae, kde(abscissae), silverman_bandwidth(samples))


def default_abscissae(samples, points: int = 128, spread: float = 5.0) -> np.ndarray:
    """Evenly spaced points covering mean +- spread * std."""
    samples = np.asarray(samples, dtype=np.float64)
    centre, width = samples.mean(), spread * samples.std(ddof=1)
    return np.linspace(centre - width, centre + width, points)


def field_stats(probes: np.ndarray, samples: np.ndarray, keep_samples: bool = True) -> FieldStats:
    mean, std = ensemble_moments(samples)
    return FieldStats(np.atleast_2d(probes), mean, std, samples if keep_samples else None)


def _relative_l2(value: np.ndarray, reference: np.ndarray) -> float:
    norm = np.linalg.norm(reference)
    diff = np.linalg.norm(value - reference)
    if norm == 0:
        return 0.0 if diff == 0 else float("inf")
    return float(diff / norm)


def compare_fields(a: FieldStats, b: FieldStats, atol: float = 1e-12) -> ComparisonMetrics:
    """Errors of `a` against the reference `b`.

    Relative L2 errors of mean and std use `b` as the reference; the max
    absolute error is over the means. KS distances need both ensembles.
    """
    if a.probes.shape != b.probes.shape or not np.allclose(a.probes, b.probes, atol=atol):
        raise UsageError("fields are given on different probe sets")
    ks: Optional[np.ndarray] = None
    if a.samples is not None and b.samples is not None:
        ks = np.array([ks_2samp(a.samples[:, j], b.samples[:, j]).statistic for j in range(len(a.probes))])
    return ComparisonMetrics(
        mean_rel_l2=_relative_l2(a.mean, b.mean),
        std_rel_l2=_relative_l2(a.std, b.std),
        max_abs_error=float(np.max(np.abs(a.mean - b.mean))) if len(a.mean) else 0.0,
        ks_distance=ks,
    )
