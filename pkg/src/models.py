import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple, TypedDict

import numpy as np

from .errors import ConfigurationError


class AdamHeader(TypedDict):
    step: int
    lr: float
    beta1: float
    beta2: float
    eps: float


class PlateauHeader(TypedDict):
    best: Optional[float]
    stale: int
    window: List[float]


class CheckpointHeader(TypedDict):
    version: int
    config: Dict
    network: Dict
    iteration: int
    optimizer: AdamHeader
    counts: Dict[str, int]
    loss_tail: List[List[float]]
    rng: Dict[str, int]
    plateau: PlateauHeader


@dataclass(frozen=True)
class PenaltyWeights:
    lambda_ic: float = 1.0
    lambda_bc: float = 1.0

    def __post_init__(self):
        if self.lambda_ic < 0 or self.lambda_bc < 0:
            raise ConfigurationError(
                f"penalty weights must be nonnegative, got {self.lambda_ic}, {self.lambda_bc}"
            )


@dataclass(frozen=True)
class DomainSpec:
    """Space(-time) domain of a problem.

    Coordinates are ordered (t, x) for the transient interval and (x, y) for
    the steady square geometries. The square is [-1, 1]^2; the hole, when
    present, is a disc of `hole_radius` centred at the origin.
    """

    geometry: str
    horizon: Optional[float] = None
    hole_radius: float = 0.0

    def __post_init__(self):
        if self.geometry not in GEOMETRIES:
            raise ConfigurationError(f"unknown geometry: {self.geometry}")
        if self.horizon is not None and self.horizon <= 0:
            raise ConfigurationError(f"time horizon must be positive, got {self.horizon}")
        if self.geometry == "interval" and self.horizon is None:
            raise ConfigurationError("interval domain needs a time horizon")
        if self.geometry == "square-with-hole":
            if not 0 < self.hole_radius < 1.0:
                raise ConfigurationError(
                    f"hole radius must lie in (0, 1), got {self.hole_radius}"
                )

    @property
    def transient(self) -> bool:
        return self.horizon is not None

    @property
    def coordinate_names(self) -> Tuple[str, ...]:
        return ("t", "x") if self.geometry == "interval" else ("x", "y")

    @property
    def n_coords(self) -> int:
        return len(self.coordinate_names)

    @property
    def volume(self) -> float:
        if self.geometry == "interval":
            return self.horizon
        area = 4.0
        if self.geometry == "square-with-hole":
            area -= math.pi * self.hole_radius**2
        return area

    @property
    def boundary_length(self) -> float:
        if self.geometry == "interval":
            return 2.0
        length = 8.0
        if self.geometry == "square-with-hole":
            length += 2.0 * math.pi * self.hole_radius
        return length

    def contains(self, points: np.ndarray, tol: float = 0.0) -> np.ndarray:
        """Closed-domain membership of each row of `points`."""
        points = np.atleast_2d(points)
        if self.geometry == "interval":
            t, x = points[:, 0], points[:, 1]
            return (
                (t >= -tol)
                & (t <= self.horizon + tol)
                & (x >= -tol)
                & (x <= 1.0 + tol)
            )
        x, y = points[:, 0], points[:, 1]
        inside = (np.abs(x) <= 1.0 + tol) & (np.abs(y) <= 1.0 + tol)
        if self.geometry == "square-with-hole":
            inside &= x * x + y * y >= self.hole_radius**2 - tol
        return inside


GEOMETRIES = ("interval", "square", "square-with-hole")


@dataclass
class SampleBatch:
    interior_points: np.ndarray
    interior_params: np.ndarray
    boundary_points: Optional[np.ndarray] = None
    boundary_params: Optional[np.ndarray] = None
    initial_points: Optional[np.ndarray] = None
    initial_params: Optional[np.ndarray] = None

    @property
    def size(self) -> int:
        return len(self.interior_points)

    def chunk(self, start: int, stop: int) -> "SampleBatch":
        def cut(array):
            return None if array is None else array[start:stop]

        return SampleBatch(
            interior_points=self.interior_points[start:stop],
            interior_params=self.interior_params[start:stop],
            boundary_points=cut(self.boundary_points),
            boundary_params=cut(self.boundary_params),
            initial_points=cut(self.initial_points),
            initial_params=cut(self.initial_params),
        )


@dataclass
class QueryPointSet:
    """Probe locations and the parameter draws every probe is evaluated at."""

    coordinate_names: Tuple[str, ...]
    probes: np.ndarray
    params: np.ndarray

    @property
    def n_probes(self) -> int:
        return len(self.probes)

    @property
    def n_draws(self) -> int:
        return len(self.params)

    def pairs(self) -> Tuple[np.ndarray, np.ndarray]:
        """(points, p) for every probe and draw, probe-major."""
        points = np.repeat(self.probes, self.n_draws, axis=0)
        return points, np.tile(self.params, (self.n_probes, 1))


@dataclass
class PdfEstimate:
    abscissae: np.ndarray
    density: np.ndarray
    bandwidth: float


@dataclass
class FieldStats:
    """Mean/std per probe, optionally with the raw ensemble (samples x probes)."""

    probes: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    samples: Optional[np.ndarray] = None


@dataclass
class ComparisonMetrics:
    mean_rel_l2: float
    std_rel_l2: float
    max_abs_error: float
    ks_distance: Optional[np.ndarray] = None

    @property
    def max_ks(self) -> Optional[float]:
        if self.ks_distance is None or len(self.ks_distance) == 0:
            return None
        return float(np.max(self.ks_distance))


@dataclass
class PlateauState:
    """Plateau stopper progress: best window mean, stale windows and the open window."""

    best: float = math.inf
    stale: int = 0
    window: List[float] = field(default_factory=list)

    def header(self) -> PlateauHeader:
        return {
            "best": None if math.isinf(self.best) else float(self.best),
            "stale": int(self.stale),
            "window": [float(loss) for loss in self.window],
        }

    @classmethod
    def from_header(cls, header: PlateauHeader) -> "PlateauState":
        best = header["best"]
        return cls(math.inf if best is None else float(best), int(header["stale"]), [float(v) for v in header["window"]])


@dataclass
class TrainingResult:
    iterations: int
    losses: List[Tuple[int, float]] = field(default_factory=list)
    stopped_early: bool = False


PROBLEM_TAGS = ("diffusion-smooth", "diffusion-nonsmooth", "heat-square", "heat-hole")

# Random streams of the counter-based generator, one per sampling role.
STREAM_INIT = 1
STREAM_INTERIOR = 2
STREAM_BOUNDARY = 3
STREAM_INITIAL = 4
STREAM_ORACLE = 5
STREAM_EVALUATE = 6

CHECKPOINT_VERSION = 2
