"""Mini-batch loss estimates for the strong and variational formulations.

Both batch losses build their graph through a loss builder of the form
``build(tape, theta_leaf) -> root`` so the same code serves training,
gradient checks and finite-difference probes.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from . import autodiff
from .autodiff import GradientMap, Jet2, Tape, Var
from .constraints import soft_penalty
from .errors import NumericFault, UsageError
from .models import SampleBatch
from .resnet import NetworkParams
from .surrogate import Surrogate

logger = logging.getLogger(__name__)

# Samples per tape; the batch loss is summed chunk by chunk in this order.
CHUNK_SIZE = 8

LossBuilder = Callable[[Tape, Var], Var]


def diffusion_residual(jt: Jet2, jx: Jet2, a, a_x, c):
    """u_t - (a_x u_x + a u_xx) - c."""
    return jt.d1 - (a_x * jx.d1 + a * jx.d2) - c


def heat_residual(jx: Jet2, jy: Jet2, k, k_x, k_y, f):
    """-(k_x u_x + k_y u_y + k (u_xx + u_yy)) - f."""
    flux = k_x * jx.d1 + k_y * jy.d1 + k * (jx.d2 + jy.d2)
    return -flux - f


def heat_variational_integrand(jx: Jet2, jy: Jet2, k, f):
    """(k/2)(u_x^2 + u_y^2) - f u; `jx.v` carries u."""
    energy = autodiff.add(autodiff.square(jx.d1), autodiff.square(jy.d1))
    return autodiff.sub(autodiff.mul(0.5 * np.asarray(k), energy), autodiff.mul(f, jx.v))


@dataclass(frozen=True)
class StrongResidualSpec:
    """Residual L(coords, p; jets of u) of one PDE, zero for its exact solution."""

    pde: str
    order: int = 2

    def evaluate(self, surrogate: Surrogate, out, points: np.ndarray, p: np.ndarray):
        problem = surrogate.problem
        coeff, grad = problem.field.evaluate(points, p)
        forcing = problem.forcing(points)
        if self.pde == "diffusion":
            return diffusion_residual(out.jets[0], out.jets[1], coeff, grad[:, 0], forcing)
        return heat_residual(out.jets[0], out.jets[1], coeff, grad[:, 0], grad[:, 1], forcing)


STRONG_RESIDUALS: Dict[str, StrongResidualSpec] = {
    "diffusion": StrongResidualSpec("diffusion"),
    "heat": StrongResidualSpec("heat"),
}


# Integrand/weak-form pairs of the first variation:
#   (k/2)|grad u|^2  ->  k grad u . grad v
#   c |u|^q          ->  c q |u|^(q-2) u v
#   -f u             ->  -f v
def _coefficient(c, x, y):
    return c(x, y) if callable(c) else c


@dataclass(frozen=True)
class FieldSample:
    value: np.ndarray
    dx: np.ndarray
    dy: np.ndarray

    def shifted(self, other: "FieldSample", eps: float) -> "FieldSample":
        return FieldSample(self.value + eps * other.value, self.dx + eps * other.dx, self.dy + eps * other.dy)


def _gradient_energy_integrand(params, x, y, u: FieldSample):
    return 0.5 * _coefficient(params.get("k", 1.0), x, y) * (u.dx**2 + u.dy**2)


def _gradient_energy_weak(params, x, y, u: FieldSample, v: FieldSample):
    return _coefficient(params.get("k", 1.0), x, y) * (u.dx * v.dx + u.dy * v.dy)


def _power_integrand(params, x, y, u: FieldSample):
    return _coefficient(params.get("c", 1.0), x, y) * np.abs(u.value) ** params["q"]


def _power_weak(params, x, y, u: FieldSample, v: FieldSample):
    q = params["q"]
    return _coefficient(params.get("c", 1.0), x, y) * q * np.abs(u.value) ** (q - 2) * u.value * v.value


def _source_integrand(params, x, y, u: FieldSample):
    return -_coefficient(params["f"], x, y) * u.value


def _source_weak(params, x, y, u: FieldSample, v: FieldSample):
    return -_coefficient(params["f"], x, y) * v.value


FIRST_VARIATION_RULES: Dict[str, Tuple[Callable, Callable]] = {
    "gradient_energy": (_gradient_energy_integrand, _gradient_energy_weak),
    "power": (_power_integrand, _power_weak),
    "source": (_source_integrand, _source_weak),
}


@dataclass(frozen=True)
class VariationalIntegrandSpec:
    """Sum of rule-table terms F(x, y; u, grad u), no second derivatives."""

    terms: Tuple[Tuple[str, Mapping], ...]
    volume: float = 1.0

    def __post_init__(self):
        for name, params in self.terms:
            if name not in FIRST_VARIATION_RULES:
                raise UsageError(f"unknown first-variation rule '{name}'")
            if name == "power" and params.get("q", 0) < 2:
                raise UsageError("power terms need an exponent q >= 2")

    def integrand(self, x, y, u: FieldSample) -> np.ndarray:
        return sum(FIRST_VARIATION_RULES[name][0](params, x, y, u) for name, params in self.terms)

    def weak_form(self, x, y, u: FieldSample, v: FieldSample) -> np.ndarray:
        return sum(FIRST_VARIATION_RULES[name][1](params, x, y, u, v) for name, params in self.terms)


def poisson_functional(k=1.0, f=0.0) -> VariationalIntegrandSpec:
    """(k/2)|grad u|^2 - f u on [-1, 1]^2; k and f may be callables of (x, y)."""
    return VariationalIntegrandSpec((("gradient_energy", {"k": k}), ("source", {"f": f})), volume=4.0)


@dataclass(frozen=True)
class MidpointGrid:
    """Tensor-product midpoint rule with m x m cells on a box."""

    m: int
    lower: Tuple[float, float] = (-1.0, -1.0)
    upper: Tuple[float, float] = (1.0, 1.0)

    def nodes(self) -> Tuple[np.ndarray, np.ndarray, float]:
        if self.m < 1:
            raise UsageError(f"quadrature grid needs at least one cell, got {self.m}")
        hx = (self.upper[0] - self.lower[0]) / self.m
        hy = (self.upper[1] - self.lower[1]) / self.m
        xs = self.lower[0] + hx * (np.arange(self.m) + 0.5)
        ys = self.lower[1] + hy * (np.arange(self.m) + 0.5)
        x, y = np.meshgrid(xs, ys, indexing="ij")
        return x, y, hx * hy


FieldEvaluator = Callable[[np.ndarray, np.ndarray], FieldSample]


def first_variation_check(
    integrand: VariationalIntegrandSpec,
    weak_form: Optional[Callable] = None,
    u: Optional[FieldEvaluator] = None,
    v: Optional[FieldEvaluator] = None,
    quad_grid: MidpointGrid = MidpointGrid(64),
    eps: float = 1e-4,
) -> float:
    """|(F(u + eps v) - F(u)) / eps - integral of the weak form at (u, v)|.

    `u` and `v` return value and gradient on the quadrature nodes; `v`
    should vanish on the boundary. Without `weak_form` the integrand's own
    rule-table weak form is used.
    """
    if u is None or v is None:
        raise UsageError("first_variation_check needs both a field u and a test field v")
    if eps <= 0:
        raise UsageError(f"eps must be positive, got {eps}")
    weak_form = weak_form or integrand.weak_form
    x, y, area = quad_grid.nodes()
    u_at, v_at = u(x, y), v(x, y)

    def functional(w: FieldSample) -> float:
        return float(np.sum(integrand.integrand(x, y, w)) * area)

    numeric = (functional(u_at.shifted(v_at, eps)) - functional(u_at)) / eps
    weak = float(np.sum(weak_form(x, y, u_at, v_at)) * area)
    return abs(numeric - weak)


def _boundary_values(surrogate, params, weights, tape, points, p):
    return surrogate.jets(params, points, p, directions=(), tape=tape, weights=weights).value


def _soft_penalty_terms(surrogate: Surrogate, params, weights, tape, batch: SampleBatch):
    problem = surrogate.problem
    if not problem.soft:
        return 0.0
    if batch.boundary_points is None:
        raise UsageError("soft constraints need boundary samples in the batch")
    residual_bc = _boundary_values(surrogate, params, weights, tape, batch.boundary_points, batch.boundary_params)
    residual_ic = 0.0
    if problem.domain.transient:
        if batch.initial_points is None:
            raise UsageError("soft constraints on a transient problem need initial samples")
        u0 = _boundary_values(surrogate, params, weights, tape, batch.initial_points, batch.initial_params)
        residual_ic = autodiff.sub(u0, problem.initial_condition(batch.initial_points[:, 1]))
    return soft_penalty(residual_ic, residual_bc, problem.weights)


def strong_loss_builder(surrogate: Surrogate, params: NetworkParams, batch: SampleBatch) -> LossBuilder:
    """mean_i L_i^2 (+ mean_i of the soft penalties) over `batch`."""
    residual_form = STRONG_RESIDUALS[surrogate.problem.pde]

    def build(tape: Tape, theta: Var) -> Var:
        weights = params.views(theta)
        points, p = batch.interior_points, batch.interior_params
        out = surrogate.jets(params, points, p, tape=tape, weights=weights, order=residual_form.order)
        residual = residual_form.evaluate(surrogate, out, points, p)
        loss = autodiff.mean(autodiff.square(residual))
        penalty = _soft_penalty_terms(surrogate, params, weights, tape, batch)
        return autodiff.add(loss, autodiff.mean(penalty))

    return build


def variational_loss_builder(
    surrogate: Surrogate, params: NetworkParams, batch: SampleBatch, volume: Optional[float] = None
) -> LossBuilder:
    """V * mean_i F_i (+ mean_i of the soft penalties) over `batch`."""
    problem = surrogate.problem
    if problem.pde != "heat":
        raise UsageError(f"no variational form for the {problem.pde} equation")
    volume = problem.domain.volume if volume is None else volume

    def build(tape: Tape, theta: Var) -> Var:
        weights = params.views(theta)
        points, p = batch.interior_points, batch.interior_params
        out = surrogate.jets(params, points, p, tape=tape, weights=weights, order=1)
        k, _ = problem.field.evaluate(points, p)
        integrand = heat_variational_integrand(out.jets[0], out.jets[1], k, problem.forcing(points))
        loss = autodiff.scale(autodiff.mean(integrand), volume)
        penalty = _soft_penalty_terms(surrogate, params, weights, tape, batch)
        return autodiff.add(loss, autodiff.mean(penalty))

    return build


def _locate_fault(builder_factory, surrogate: Surrogate, params: NetworkParams, batch: SampleBatch) -> str:
    """Echo of the first sample whose own loss is non-finite."""
    for row in range(batch.size):
        tape = Tape()
        try:
            with np.errstate(all="ignore"):
                build = builder_factory(surrogate, params, batch.chunk(row, row + 1))
                root = build(tape, tape.parameter(params.flat))
                tape.backward(root.id)
        except NumericFault:
            points, p = batch.interior_points, batch.interior_params
            return f"row {row}: coords={points[row].tolist()}, p[:4]={p[row][:4].tolist()}"
    return f"no single sample of the {batch.size} in the chunk is non-finite on its own"


def _run_chunk(builder_factory, surrogate, params, batch, tape, weight) -> Tuple[float, GradientMap]:
    tape.clear()
    build = builder_factory(surrogate, params, batch)
    try:
        root = autodiff.scale(build(tape, tape.parameter(params.flat)), weight)
        gradient = tape.backward(root.id)
    except NumericFault as error:
        raise NumericFault(str(error), sample=_locate_fault(builder_factory, surrogate, params, batch)) from error
    return float(root.value), gradient


def _batch_loss(
    builder_factory,
    surrogate: Surrogate,
    params: NetworkParams,
    batch: SampleBatch,
    workers: int,
    tapes: Optional[Sequence[Tape]],
) -> Tuple[float, GradientMap]:
    if batch.size < 1:
        raise UsageError("empty batch")
    workers = max(1, workers)
    if tapes is not None and len(tapes) < workers:
        raise UsageError(f"{workers} workers need as many tapes, got {len(tapes)}")
    # the partition depends on the batch alone, never on the worker count
    bounds = list(range(0, batch.size, CHUNK_SIZE)) + [batch.size]
    chunks = [
        (batch.chunk(start, stop), (stop - start) / batch.size) for start, stop in zip(bounds[:-1], bounds[1:])
    ]
    workers = min(workers, len(chunks))
    if tapes is None:
        tapes = [Tape() for _ in range(workers)]

    def run_group(index: int) -> List[Tuple[float, GradientMap]]:
        return [
            _run_chunk(builder_factory, surrogate, params, chunk, tapes[index], weight)
            for chunk, weight in chunks[index::workers]
        ]

    if workers == 1:
        groups = [run_group(0)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            groups = list(pool.map(run_group, range(workers)))
    loss = 0.0
    gradient = GradientMap(np.zeros_like(params.flat))
    for position in range(len(chunks)):
        chunk_loss, chunk_gradient = groups[position % workers][position // workers]
        loss += chunk_loss
        gradient = gradient + chunk_gradient
    return loss, gradient


def strong_batch_loss(
    surrogate: Surrogate,
    params: NetworkParams,
    batch: SampleBatch,
    workers: int = 1,
    tapes: Optional[Sequence[Tape]] = None,
) -> Tuple[float, GradientMap]:
    return _batch_loss(strong_loss_builder, surrogate, params, batch, workers, tapes)


def variational_batch_loss(
    surrogate: Surrogate,
    params: NetworkParams,
    batch: SampleBatch,
    volume: Optional[float] = None,
    workers: int = 1,
    tapes: Optional[Sequence[Tape]] = None,
) -> Tuple[float, GradientMap]:
    def factory(s, theta, b):
        return variational_loss_builder(s, theta, b, volume)

    return _batch_loss(factory, surrogate, params, batch, workers, tapes)


def batch_loss(
    surrogate: Surrogate,
    params: NetworkParams,
    batch: SampleBatch,
    workers: int = 1,
    tapes: Optional[Sequence[Tape]] = None,
) -> Tuple[float, GradientMap]:
    """Loss of the problem's configured formulation."""
    if surrogate.problem.loss_mode == "variational":
        return variational_batch_loss(surrogate, params, batch, workers=workers, tapes=tapes)
    return strong_batch_loss(surrogate, params, batch, workers=workers, tapes=tapes)
