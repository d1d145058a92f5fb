"""Fully-connected residual network u_DNN(t, x, p; theta).

Hidden layers are numbered 1..num_layers. Layer 1 maps the input to the
first hidden width; every later layer i with i > r and (i - 1) % r == 0
closes a block and receives the shortcut from layer i - r before its
activation, so with r = 2 the odd layers 1 -> 3 -> 5 ... are connected.
The output layer is affine.
"""

import logging
import operator
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from . import autodiff
from .autodiff import Jet2, Tape, Var
from .errors import ConfigurationError, UsageError
from .models import STREAM_INIT
from .sampler import stream_rng

logger = logging.getLogger(__name__)

ACTIVATIONS = ("tanh", "sin")


@dataclass(frozen=True)
class NetworkConfig:
    input_dim: int
    hidden_width: int = 64
    num_layers: int = 6
    block_size: int = 2
    activation: str = "tanh"
    output_dim: int = 1
    layer_widths: Optional[Tuple[int, ...]] = None

    def __post_init__(self):
        if self.input_dim < 1:
            raise ConfigurationError(f"input_dim must be positive, got {self.input_dim}")
        if self.num_layers < 1:
            raise ConfigurationError(f"num_layers must be positive, got {self.num_layers}")
        if self.hidden_width < 1 or self.block_size < 1:
            raise ConfigurationError("hidden_width and block_size must be positive")
        if self.activation not in ACTIVATIONS:
            raise ConfigurationError(
                f"activation '{self.activation}' not supported; second derivatives need one of {ACTIVATIONS}"
            )
        if self.output_dim != 1:
            raise ConfigurationError("only scalar surrogates are supported")
        if self.layer_widths is not None and (
            len(self.layer_widths) != self.num_layers or min(self.layer_widths) < 1
        ):
            raise ConfigurationError("layer_widths must give one positive width per hidden layer")

    def width(self, layer: int) -> int:
        """Width of hidden layer `layer` (1-based); layer 0 is the input."""
        if layer == 0:
            return self.input_dim
        if self.layer_widths is not None:
            return self.layer_widths[layer - 1]
        return self.hidden_width

    def shortcut_source(self, layer: int) -> Optional[int]:
        r = self.block_size
        if layer > r and (layer - 1) % r == 0:
            return layer - r
        return None

    def needs_projection(self, layer: int) -> bool:
        source = self.shortcut_source(layer)
        return source is not None and self.width(source) != self.width(layer)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "input_dim": self.input_dim,
            "hidden_width": self.hidden_width,
            "num_layers": self.num_layers,
            "block_size": self.block_size,
            "activation": self.activation,
            "output_dim": self.output_dim,
            "layer_widths": list(self.layer_widths) if self.layer_widths else None,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "NetworkConfig":
        data = dict(data)
        if data.get("layer_widths") is not None:
            data["layer_widths"] = tuple(data["layer_widths"])
        return cls(**data)


@dataclass(frozen=True)
class ParamSlot:
    name: str
    shape: Tuple[int, ...]
    offset: int

    @property
    def size(self) -> int:
        return int(np.prod(self.shape, dtype=int))


def build_layout(config: NetworkConfig) -> Tuple[ParamSlot, ...]:
    slots: List[ParamSlot] = []
    offset = 0

    def add(name, shape):
        nonlocal offset
        slot = ParamSlot(name, shape, offset)
        slots.append(slot)
        offset += slot.size

    for layer in range(1, config.num_layers + 1):
        fan_in, fan_out = config.width(layer - 1), config.width(layer)
        add(f"hidden{layer}.weight", (fan_in, fan_out))
        add(f"hidden{layer}.bias", (fan_out,))
        if config.needs_projection(layer):
            add(f"hidden{layer}.projection", (config.width(config.shortcut_source(layer)), fan_out))
    add("output.weight", (config.width(config.num_layers),))
    add("output.bias", (1,))
    return tuple(slots)


def parameter_count(config: NetworkConfig) -> int:
    count = 0
    for layer in range(1, config.num_layers + 1):
        count += (config.width(layer - 1) + 1) * config.width(layer)
        if config.needs_projection(layer):
            count += config.width(config.shortcut_source(layer)) * config.width(layer)
    return count + config.width(config.num_layers) + 1


@dataclass
class NetworkParams:
    config: NetworkConfig
    flat: np.ndarray
    layout: Tuple[ParamSlot, ...]

    def __post_init__(self):
        expected = sum(slot.size for slot in self.layout)
        if self.flat.shape != (expected,):
            raise UsageError(f"flat parameter vector must have {expected} entries, got {self.flat.shape}")

    def __getitem__(self, name: str) -> np.ndarray:
        for slot in self.layout:
            if slot.name == name:
                return self.flat[slot.offset : slot.offset + slot.size].reshape(slot.shape)
        raise KeyError(name)

    def structured(self) -> Dict[str, np.ndarray]:
        return {slot.name: self[slot.name] for slot in self.layout}

    def copy(self) -> "NetworkParams":
        return NetworkParams(self.config, self.flat.copy(), self.layout)

    @classmethod
    def from_flat(cls, config: NetworkConfig, flat: np.ndarray) -> "NetworkParams":
        return cls(config, np.array(flat, dtype=np.float64), build_layout(config))

    @classmethod
    def from_structured(cls, config: NetworkConfig, arrays: Mapping[str, np.ndarray]) -> "NetworkParams":
        layout = build_layout(config)
        flat = np.zeros(sum(slot.size for slot in layout))
        for slot in layout:
            array = np.asarray(arrays[slot.name], dtype=np.float64)
            if array.shape != slot.shape:
                raise UsageError(f"{slot.name} must have shape {slot.shape}, got {array.shape}")
            flat[slot.offset : slot.offset + slot.size] = array.ravel()
        return cls(config, flat, layout)

    def views(self, flat_var) -> Dict[str, Any]:
        """Per-layer slices of a flat parameter leaf (or plain vector)."""
        return {slot.name: autodiff.take(flat_var, slot.offset, slot.shape) for slot in self.layout}

    def on_tape(self, tape: Tape) -> Dict[str, Var]:
        return self.views(tape.parameter(self.flat))


def init_params(config: NetworkConfig, seed: int) -> NetworkParams:
    """Glorot-uniform weights, zero biases; deterministic in `seed`."""
    rng = stream_rng(seed, STREAM_INIT, 0)
    layout = build_layout(config)
    flat = np.zeros(sum(slot.size for slot in layout))
    for slot in layout:
        if slot.name.endswith(".bias"):
            continue
        fan_in = slot.shape[0]
        fan_out = slot.shape[1] if len(slot.shape) > 1 else 1
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        flat[slot.offset : slot.offset + slot.size] = rng.uniform(-limit, limit, slot.size)
    logger.debug("initialized %d parameters (seed=%d)", len(flat), seed)
    return NetworkParams(config, flat, layout)


def _propagate(
    config: NetworkConfig,
    weights: Mapping[str, Any],
    h,
    linear: Callable,
    activate: Callable,
    add: Callable,
):
    outputs = {}
    for layer in range(1, config.num_layers + 1):
        z = linear(h, weights[f"hidden{layer}.weight"], weights[f"hidden{layer}.bias"])
        source = config.shortcut_source(layer)
        if source is not None:
            shortcut = outputs[source]
            if config.needs_projection(layer):
                shortcut = linear(shortcut, weights[f"hidden{layer}.projection"], None)
            z = add(z, shortcut)
        h = activate(z)
        outputs[layer] = h
    return linear(h, weights["output.weight"], weights["output.bias"])


def _plain_linear(h, weight, bias):
    out = h @ weight
    return out if bias is None else out + bias


_PLAIN_ACTIVATIONS = {"tanh": np.tanh, "sin": np.sin}


def _as_batch(inputs, config: NetworkConfig) -> Tuple[np.ndarray, bool]:
    array = np.asarray(inputs, dtype=np.float64)
    single = array.ndim == 1
    array = np.atleast_2d(array)
    if array.ndim != 2 or array.shape[1] != config.input_dim:
        raise UsageError(f"expected inputs with {config.input_dim} columns, got shape {np.shape(inputs)}")
    return array, single


def forward(params: NetworkParams, inputs) -> Any:
    """Plain evaluation; a single input vector gives a float."""
    batch, single = _as_batch(inputs, params.config)
    out = _propagate(
        params.config,
        params.structured(),
        batch,
        _plain_linear,
        _PLAIN_ACTIVATIONS[params.config.activation],
        operator.add,
    )
    return float(out[0]) if single else out


class _Bundle:
    """Shared value path plus (d1, d2) per seeded direction."""

    __slots__ = ("v", "derivs")

    def __init__(self, v, derivs: List[Tuple[Any, Any]]):
        self.v = v
        self.derivs = derivs


def _bundle_linear(h: _Bundle, weight, bias) -> _Bundle:
    out = h.v @ weight
    v = out if bias is None else out + bias
    derivs = [
        (0.0 if autodiff._is_zero(d1) else d1 @ weight, 0.0 if autodiff._is_zero(d2) else d2 @ weight)
        for d1, d2 in h.derivs
    ]
    return _Bundle(v, derivs)


def _bundle_add(a: _Bundle, b: _Bundle) -> _Bundle:
    derivs = [
        (autodiff._jadd(a1, b1), autodiff._jadd(a2, b2))
        for (a1, a2), (b1, b2) in zip(a.derivs, b.derivs)
    ]
    return _Bundle(a.v + b.v, derivs)


def _bundle_activation(name: str, order: int) -> Callable[[_Bundle], _Bundle]:
    def activate(z: _Bundle) -> _Bundle:
        if name == "tanh":
            g = autodiff.tanh(z.v)
            g1 = 1.0 - autodiff.square(g)
            g2 = -2.0 * (g * g1) if order > 1 else 0.0
        else:
            g = autodiff.sin(z.v)
            g1 = autodiff.cos(z.v)
            g2 = autodiff.neg(g) if order > 1 else 0.0
        derivs = []
        for d1, d2 in z.derivs:
            out1 = autodiff._jmul(g1, d1)
            out2 = 0.0
            if order > 1:
                out2 = autodiff._jadd(autodiff._jmul(g2, autodiff._jmul(d1, d1)), autodiff._jmul(g1, d2))
            derivs.append((out1, out2))
        return _Bundle(g, derivs)

    return activate


@dataclass
class SurrogateOutput:
    """Value of a surrogate on a batch plus its jets per seeded input direction."""

    value: Any
    jets: Dict[int, Jet2]
    tape: Optional[Tape] = None


def forward_jets(
    params: NetworkParams,
    inputs,
    directions: Sequence[int],
    tape: Optional[Tape] = None,
    weights: Optional[Mapping[str, Any]] = None,
    order: int = 2,
) -> SurrogateOutput:
    """Jets of the network output along each input coordinate in `directions`.

    Without `weights` the parameters are put on `tape` (a fresh tape when
    none is given) so that derivatives of the jets w.r.t. theta are
    available from one backward pass.
    """
    config = params.config
    batch, single = _as_batch(inputs, config)
    for direction in directions:
        if not 0 <= direction < config.input_dim:
            raise UsageError(f"direction {direction} outside input of size {config.input_dim}")
    if weights is None:
        tape = tape if tape is not None else Tape()
        weights = params.on_tape(tape)
    seeds = []
    for direction in directions:
        unit = np.zeros(config.input_dim)
        unit[direction] = 1.0
        seeds.append((unit, 0.0))
    out = _propagate(
        config,
        weights,
        _Bundle(batch, seeds),
        _bundle_linear,
        _bundle_activation(config.activation, order),
        _bundle_add,
    )
    jets = {
        direction: Jet2(out.v, d1, d2) for direction, (d1, d2) in zip(directions, out.derivs)
    }
    return SurrogateOutput(out.v, jets, tape)


def forward_jet(
    params: NetworkParams, inputs, direction: int, tape: Optional[Tape] = None
) -> SurrogateOutput:
    return forward_jets(params, inputs, [direction], tape=tape)
