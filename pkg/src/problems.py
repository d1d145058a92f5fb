"""Benchmark problems: random coefficient fields, forcings and presets."""

import logging
from dataclasses import dataclass
from typing import Callable, Dict, Mapping, Optional, Tuple

import numpy as np

from .constraints import DIFFUSION_TRIAL, HEAT_SQUARE_TRIAL, TrialForm
from .errors import ConfigurationError
from .models import PROBLEM_TAGS, DomainSpec, PenaltyWeights

logger = logging.getLogger(__name__)

FIELD_KINDS = ("smooth-diffusion", "nonsmooth-diffusion", "conductivity")


def _mode_indices(d: int) -> np.ndarray:
    return np.arange(1, d + 1, dtype=np.float64)


def smooth_diffusion_coeff(x, p) -> Tuple[np.ndarray, np.ndarray]:
    """a = 0.26 + sum_j (0.05/j) cos(pi/2 j x) p_j and da/dx."""
    x = np.asarray(x, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    j = _mode_indices(p.shape[-1])
    phase = 0.5 * np.pi * np.multiply.outer(x, j)
    a = 0.26 + np.sum((0.05 / j) * np.cos(phase) * p, axis=-1)
    a_x = -np.sum(0.025 * np.pi * np.sin(phase) * p, axis=-1)
    return a, a_x


def nonsmooth_diffusion_coeff(x, p) -> Tuple[np.ndarray, np.ndarray]:
    """a = 0.2 + sum_j (0.1/j) cos^2(pi/2 j x) p_j and da/dx."""
    x = np.asarray(x, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    j = _mode_indices(p.shape[-1])
    phase = 0.5 * np.pi * np.multiply.outer(x, j)
    a = 0.2 + np.sum((0.1 / j) * np.cos(phase) ** 2 * p, axis=-1)
    a_x = -np.sum(0.05 * np.pi * np.sin(2.0 * phase) * p, axis=-1)
    return a, a_x


def _conductivity_phase(x, y, p):
    j = _mode_indices(p.shape[-1])
    return 0.25 * np.pi * np.multiply.outer(x * y, j**1.5), j


def conductivity(x, y, p) -> np.ndarray:
    """k = 1 + sum_j (1/j) cos^2(pi/4 j^{3/2} x y) p_j."""
    x, y, p = (np.asarray(v, dtype=np.float64) for v in (x, y, p))
    phase, j = _conductivity_phase(x, y, p)
    return 1.0 + np.sum(np.cos(phase) ** 2 / j * p, axis=-1)


def conductivity_gradient(x, y, p) -> Tuple[np.ndarray, np.ndarray]:
    x, y, p = (np.asarray(v, dtype=np.float64) for v in (x, y, p))
    phase, j = _conductivity_phase(x, y, p)
    # d/d(xy) of cos^2(c xy) is -c sin(2 c xy)
    common = -np.sum(np.sin(2.0 * phase) * (0.25 * np.pi * j**0.5) * p, axis=-1)
    return common * y, common * x


def heat_forcing(x, y, tag: str = "heat-square") -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if tag == "heat-square":
        return 100.0 * np.abs(x * y)
    if tag == "heat-hole":
        return np.full(np.broadcast(x, y).shape, 2.0)
    raise ConfigurationError(f"no heat forcing for problem '{tag}'")


def diffusion_initial_condition(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return 10.0 * (x - x * x)


@dataclass(frozen=True)
class RandomFieldSpec:
    kind: str
    base: float
    d: int

    def __post_init__(self):
        if self.kind not in FIELD_KINDS:
            raise ConfigurationError(f"unknown random field: {self.kind}")
        if self.d < 0:
            raise ConfigurationError(f"stochastic dimension must be nonnegative, got {self.d}")

    @property
    def amplitudes(self) -> np.ndarray:
        j = _mode_indices(self.d)
        scale = {"smooth-diffusion": 0.05, "nonsmooth-diffusion": 0.1, "conductivity": 1.0}[self.kind]
        return scale / j

    def evaluate(self, coords: np.ndarray, p: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Field value and spatial gradient at each row.

        `coords` are the domain coordinates ((t, x) or (x, y)); the gradient
        has one column per spatial coordinate.
        """
        coords = np.atleast_2d(coords)
        p = np.atleast_2d(p)
        if self.kind == "conductivity":
            x, y = coords[:, 0], coords[:, 1]
            kx, ky = conductivity_gradient(x, y, p)
            return conductivity(x, y, p), np.column_stack([kx, ky])
        evaluator = smooth_diffusion_coeff if self.kind == "smooth-diffusion" else nonsmooth_diffusion_coeff
        a, a_x = evaluator(coords[:, 1], p)
        return a, a_x[:, None]

    def positivity_bound(self, resolution: int = 2001) -> float:
        """Lower bound of the field over the domain for any p in [0, 1]^d.

        Each mode contributes its amplitude times its most negative value,
        found on a fine grid of the mode's argument.
        """
        if self.d == 0:
            return self.base
        j = _mode_indices(self.d)
        if self.kind == "conductivity":
            return self.base
        grid = np.linspace(0.0, 1.0, resolution)
        modes = np.cos(0.5 * np.pi * np.multiply.outer(grid, j))
        if self.kind == "nonsmooth-diffusion":
            modes = modes**2
        lowest = np.minimum(modes.min(axis=0), 0.0)
        return float(self.base + np.sum(self.amplitudes * lowest))

    def empirical_minimum(self, n: int, rng: np.random.Generator) -> float:
        if self.kind == "conductivity":
            coords = rng.uniform(-1.0, 1.0, size=(n, 2))
        else:
            coords = np.column_stack([np.zeros(n), rng.uniform(0.0, 1.0, n)])
        p = rng.uniform(0.0, 1.0, size=(n, self.d))
        value, _ = self.evaluate(coords, p)
        return float(value.min())


@dataclass(frozen=True)
class ProblemSpec:
    tag: str
    pde: str
    domain: DomainSpec
    field: RandomFieldSpec
    d: int
    constraint_mode: str
    loss_mode: str
    weights: PenaltyWeights
    source: float = 0.0
    trial: Optional[TrialForm] = None
    initial_condition: Optional[Callable[[np.ndarray], np.ndarray]] = None

    @property
    def input_dim(self) -> int:
        return self.domain.n_coords + self.d

    @property
    def soft(self) -> bool:
        return self.constraint_mode == "soft"

    def forcing(self, points: np.ndarray) -> np.ndarray:
        if self.pde == "diffusion":
            return np.full(len(points), self.source)
        return heat_forcing(points[:, 0], points[:, 1], self.tag)


PROBLEM_DEFAULTS: Dict[str, Dict] = {
    "diffusion-smooth": {"d": 100, "constraint": "hard", "loss": "strong", "lambda_ic": 1.0, "lambda_bc": 1.0},
    "diffusion-nonsmooth": {"d": 50, "constraint": "hard", "loss": "strong", "lambda_ic": 1.0, "lambda_bc": 1.0},
    "heat-square": {"d": 50, "constraint": "hard", "loss": "variational", "lambda_ic": 0.0, "lambda_bc": 1.0},
    "heat-hole": {"d": 30, "constraint": "soft", "loss": "variational", "lambda_ic": 0.0, "lambda_bc": 1000.0},
}

HOLE_RADIUS = 0.3
DIFFUSION_SOURCE = 3.0


def build_problem(tag: str, overrides: Optional[Mapping] = None) -> ProblemSpec:
    """Problem with its benchmark defaults, optionally overriding d, modes and weights.

    Recognized override keys: d, constraint, loss, lambda_ic, lambda_bc.
    Keys mapped to None keep the default.
    """
    if tag not in PROBLEM_TAGS:
        raise ConfigurationError(f"unknown problem tag '{tag}'; expected one of {PROBLEM_TAGS}")
    settings = dict(PROBLEM_DEFAULTS[tag])
    for key, value in (overrides or {}).items():
        if key not in settings:
            raise ConfigurationError(f"unknown problem override '{key}'")
        if value is not None:
            settings[key] = value

    d = int(settings["d"])
    constraint, loss = settings["constraint"], settings["loss"]
    if constraint not in ("hard", "soft"):
        raise ConfigurationError(f"constraint mode must be hard or soft, got '{constraint}'")
    if loss not in ("strong", "variational"):
        raise ConfigurationError(f"loss mode must be strong or variational, got '{loss}'")

    if tag.startswith("diffusion"):
        domain = DomainSpec("interval", horizon=1.0)
        kind = "smooth-diffusion" if tag == "diffusion-smooth" else "nonsmooth-diffusion"
        field = RandomFieldSpec(kind, 0.26 if kind == "smooth-diffusion" else 0.2, d)
        pde, trial, ic = "diffusion", DIFFUSION_TRIAL, diffusion_initial_condition
        if loss == "variational":
            raise ConfigurationError("variational loss is only available for steady problems")
    else:
        geometry = "square" if tag == "heat-square" else "square-with-hole"
        domain = DomainSpec(geometry, hole_radius=HOLE_RADIUS if geometry != "square" else 0.0)
        field = RandomFieldSpec("conductivity", 1.0, d)
        pde, ic = "heat", None
        trial = HEAT_SQUARE_TRIAL if tag == "heat-square" else None
        if constraint == "hard" and trial is None:
            raise ConfigurationError(f"problem '{tag}' has no hard trial form; use soft constraints")

    weights = PenaltyWeights(
        float(settings["lambda_ic"]) if ic is not None else 0.0, float(settings["lambda_bc"])
    )
    bound = field.positivity_bound()
    if bound <= 0:
        raise ConfigurationError(f"coefficient field of '{tag}' is not positive for d={d} (bound {bound:.4g})")
    logger.debug("built problem %s: d=%d, %s/%s", tag, d, constraint, loss)
    return ProblemSpec(
        tag=tag,
        pde=pde,
        domain=domain,
        field=field,
        d=d,
        constraint_mode=constraint,
        loss_mode=loss,
        weights=weights,
        source=DIFFUSION_SOURCE if pde == "diffusion" else 0.0,
        trial=trial if constraint == "hard" else None,
        initial_condition=ic,
    )


def default_probes(problem: ProblemSpec) -> np.ndarray:
    """Probe locations where statistics are reported for each benchmark."""
    if problem.pde == "diffusion":
        x = np.linspace(0.0, 1.0, 21)
        return np.vstack([np.column_stack([np.full_like(x, t), x]) for t in (0.5, 1.0)])
    if problem.domain.geometry == "square":
        axis = np.linspace(-0.8, 0.8, 9)
        xx, yy = np.meshgrid(axis, axis, indexing="ij")
        return np.column_stack([xx.ravel(), yy.ravel()])
    return np.array([[-0.6, 0.0], [-0.6, -0.6], [0.6, 0.6], [0.0, -0.6], [-0.5, 0.5]])
