"""Mini-batch sampling of interior, initial and boundary points.

All randomness comes from `stream_rng`: a Philox generator keyed by
(seed, stream) whose counter starts at a block reserved for one
(iteration, worker) index, so any draw can be regenerated from those three
integers alone.
"""

import logging
from typing import Optional

import numpy as np
from scipy.stats import chisquare

from .errors import ConfigurationError, UsageError
from .models import (
    STREAM_BOUNDARY,
    STREAM_INITIAL,
    STREAM_INTERIOR,
    DomainSpec,
    SampleBatch,
)

logger = logging.getLogger(__name__)

PARAM_DISTRIBUTIONS = ("uniform01",)
MIN_ACCEPTANCE = 0.10


def stream_rng(seed: int, stream: int, counter: int) -> np.random.Generator:
    if seed < 0 or stream < 0 or counter < 0:
        raise UsageError("seed, stream and counter must be nonnegative")
    key = (int(seed) << 64) | int(stream)
    start = np.array([0, 0, 0, int(counter)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=start))


def sample_params(n: int, d: int, dist: str, rng: np.random.Generator) -> np.ndarray:
    if dist not in PARAM_DISTRIBUTIONS:
        raise UsageError(f"unknown parameter distribution: {dist}")
    return rng.uniform(0.0, 1.0, size=(n, d))


def _square_points(n: int, rng: np.random.Generator) -> np.ndarray:
    return rng.uniform(-1.0, 1.0, size=(n, 2))


def sample_interior_points(n: int, dom: DomainSpec, rng: np.random.Generator) -> np.ndarray:
    if n < 1:
        raise UsageError(f"batch size must be positive, got {n}")
    if dom.geometry == "interval":
        t = rng.uniform(0.0, dom.horizon, n)
        x = rng.uniform(0.0, 1.0, n)
        return np.column_stack([t, x])
    if dom.geometry == "square":
        return _square_points(n, rng)

    radius2 = dom.hole_radius**2
    accepted = []
    count = drawn = 0
    while count < n:
        candidates = _square_points(n, rng)
        drawn += n
        keep = candidates[np.sum(candidates * candidates, axis=1) > radius2]
        accepted.append(keep)
        count += len(keep)
        if count / drawn < MIN_ACCEPTANCE:
            raise ConfigurationError(
                f"rejection sampling accepted {count}/{drawn} points; hole of radius {dom.hole_radius} is degenerate"
            )
    return np.concatenate(accepted)[:n]


def sample_interior(n: int, dom: DomainSpec, d: int, rng: np.random.Generator) -> SampleBatch:
    points = sample_interior_points(n, dom, rng)
    return SampleBatch(points, sample_params(n, d, "uniform01", rng))


def sample_boundary(n: int, dom: DomainSpec, rng: np.random.Generator) -> np.ndarray:
    """Points on the spatial boundary, uniform in arc length.

    For the transient interval each point also carries t ~ U[0, T].
    """
    if n < 1:
        raise UsageError(f"batch size must be positive, got {n}")
    if dom.geometry == "interval":
        t = rng.uniform(0.0, dom.horizon, n)
        x = rng.integers(0, 2, n).astype(np.float64)
        return np.column_stack([t, x])

    s = rng.uniform(0.0, dom.boundary_length, n)
    side = np.minimum(np.floor(s / 2.0), 3).astype(int)
    along = s - 2.0 * side - 1.0
    x = np.select([side == 0, side == 1, side == 2], [along, np.ones(n), -along], -np.ones(n))
    y = np.select([side == 0, side == 1, side == 2], [-np.ones(n), along, np.ones(n)], -along)
    if dom.geometry == "square-with-hole":
        on_circle = s >= 8.0
        angle = (s[on_circle] - 8.0) / dom.hole_radius
        x[on_circle] = dom.hole_radius * np.cos(angle)
        y[on_circle] = dom.hole_radius * np.sin(angle)
    return np.column_stack([x, y])


def sample_initial(n: int, dom: DomainSpec, rng: np.random.Generator) -> np.ndarray:
    if not dom.transient:
        raise UsageError("steady domains have no initial manifold")
    x = rng.uniform(0.0, 1.0, n)
    return np.column_stack([np.zeros(n), x])


def draw_batch(
    dom: DomainSpec,
    d: int,
    n: int,
    seed: int,
    iteration: int,
    soft: bool,
    dist: str = "uniform01",
) -> SampleBatch:
    """One mini-batch for one optimizer iteration."""
    rng = stream_rng(seed, STREAM_INTERIOR, iteration)
    interior = sample_interior_points(n, dom, rng)
    batch = SampleBatch(interior, sample_params(n, d, dist, rng))
    if soft:
        rng = stream_rng(seed, STREAM_BOUNDARY, iteration)
        batch.boundary_points = sample_boundary(n, dom, rng)
        batch.boundary_params = sample_params(n, d, dist, rng)
        if dom.transient:
            rng = stream_rng(seed, STREAM_INITIAL, iteration)
            batch.initial_points = sample_initial(n, dom, rng)
            batch.initial_params = sample_params(n, d, dist, rng)
    return batch


def chi_square_uniformity(values: np.ndarray, low: float, high: float, bins: int = 10) -> float:
    """Pearson chi-square statistic of `values` against U[low, high]."""
    counts, _ = np.histogram(values, bins=bins, range=(low, high))
    return float(chisquare(counts).statistic)


def acceptance_rate(dom: DomainSpec) -> Optional[float]:
    if dom.geometry != "square-with-hole":
        return None
    return 1.0 - np.pi * dom.hole_radius**2 / 4.0
