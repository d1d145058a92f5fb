"""Tape-based reverse mode with forward second-order jets on top.

Every node of the tape is a scalar operation applied sample-wise over a
batch, so node values are numpy arrays (0-d for a single scalar). Parameters
enter the tape as marked leaves; `backward` returns the adjoint of every
marked leaf, concatenated in marking order.

Jets (`Jet2`) carry a value together with its first and second derivative
along one input direction. Their components may be plain numbers, numpy
arrays or tape variables, so the same jet arithmetic serves pure evaluation
and the forward-over-reverse training pass.
"""

import logging
from dataclasses import dataclass
from typing import Any, Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import NumericFault, UsageError

logger = logging.getLogger(__name__)

Partial = Union[float, np.ndarray, Callable[[np.ndarray], np.ndarray]]


@dataclass(slots=True)
class Node:
    id: int
    value: np.ndarray
    op: str
    parents: Tuple[Tuple[int, Partial], ...]


@dataclass
class GradientMap:
    """Flat d(root)/d(theta), laid out like the marked parameter leaves."""

    values: np.ndarray

    def __len__(self) -> int:
        return len(self.values)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.values)))

    def __add__(self, other: "GradientMap") -> "GradientMap":
        return GradientMap(self.values + other.values)


def _check_finite(op: str, value, what: str) -> None:
    if not np.all(np.isfinite(value)):
        raise NumericFault(f"non-finite {what} recorded by '{op}'")


def _unbroadcast(array: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    array = np.asarray(array)
    while array.ndim > len(shape):
        array = array.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and array.shape[axis] != 1:
            array = array.sum(axis=axis, keepdims=True)
    if array.shape != shape:
        array = np.broadcast_to(array, shape).copy()
    return array


class Tape:
    """Append-only node store for one worker.

    The tape object is reused across optimizer iterations; `clear` drops
    the nodes between iterations.
    """

    def __init__(self):
        self.nodes: List[Node] = []
        self.input_marks: List[int] = []
        self.last_visits = 0

    def __len__(self) -> int:
        return len(self.nodes)

    def clear(self) -> None:
        self.nodes.clear()
        self.input_marks.clear()
        self.last_visits = 0

    def record(
        self,
        op: str,
        inputs: Sequence[int],
        value,
        partials: Sequence[Partial],
    ) -> int:
        if len(inputs) != len(partials):
            raise UsageError(f"'{op}' got {len(inputs)} inputs but {len(partials)} partials")
        next_id = len(self.nodes)
        for parent in inputs:
            if not 0 <= parent < next_id:
                raise UsageError(f"'{op}' references node {parent} which is not on the tape")
        value = np.asarray(value, dtype=np.float64)
        _check_finite(op, value, "value")
        for partial in partials:
            if not callable(partial):
                _check_finite(op, partial, "partial")
        self.nodes.append(Node(next_id, value, op, tuple(zip(inputs, partials))))
        return next_id

    def variable(self, value, mark: bool = False) -> "Var":
        node_id = self.record("leaf", (), value, ())
        if mark:
            self.input_marks.append(node_id)
        return Var(self, node_id)

    def parameter(self, value) -> "Var":
        return self.variable(value, mark=True)

    def backward(self, root: int) -> GradientMap:
        if not 0 <= root < len(self.nodes):
            raise UsageError(f"root {root} is not on the tape")
        adjoints: List[Optional[np.ndarray]] = [None] * (root + 1)
        adjoints[root] = np.ones_like(self.nodes[root].value)
        visits = 0
        for index in range(root, -1, -1):
            visits += 1
            adjoint = adjoints[index]
            if adjoint is None:
                continue
            for parent, partial in self.nodes[index].parents:
                if callable(partial):
                    contribution = partial(adjoint)
                else:
                    contribution = _unbroadcast(partial * adjoint, self.nodes[parent].value.shape)
                previous = adjoints[parent]
                adjoints[parent] = contribution if previous is None else previous + contribution
        self.last_visits = visits

        blocks = []
        for mark in self.input_marks:
            adjoint = adjoints[mark] if mark <= root else None
            if adjoint is None:
                adjoint = np.zeros_like(self.nodes[mark].value)
            blocks.append(np.ravel(adjoint))
        values = np.concatenate(blocks) if blocks else np.zeros(0)
        return GradientMap(values)


def record(tape: Tape, op: str, inputs: Sequence[int], value, partials: Sequence[Partial]) -> int:
    return tape.record(op, inputs, value, partials)


def backward(tape: Tape, root: int) -> GradientMap:
    return tape.backward(root)


class Var:
    """Handle to a tape node with numpy-style operators."""

    __slots__ = ("tape", "id")
    # Make numpy hand binary operators over to Var's reflected methods.
    __array_ufunc__ = None

    def __init__(self, tape: Tape, node_id: int):
        self.tape = tape
        self.id = node_id

    @property
    def value(self) -> np.ndarray:
        return self.tape.nodes[self.id].value

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.value.shape

    def __repr__(self) -> str:
        return f"Var(id={self.id}, value={self.value!r})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)


def value_of(x):
    return x.value if isinstance(x, Var) else x


def _emit(op: str, value, operands: Sequence[Tuple[Any, Partial]]):
    """Record `value` if any operand lives on a tape, else return it plain."""
    tape = None
    inputs, partials = [], []
    for operand, partial in operands:
        if isinstance(operand, Var):
            tape = operand.tape
            inputs.append(operand.id)
            partials.append(partial)
    if tape is None:
        return value
    return Var(tape, tape.record(op, inputs, value, partials))


def add(a, b):
    return _emit("add", value_of(a) + value_of(b), ((a, 1.0), (b, 1.0)))


def sub(a, b):
    return _emit("sub", value_of(a) - value_of(b), ((a, 1.0), (b, -1.0)))


def mul(a, b):
    av, bv = value_of(a), value_of(b)
    return _emit("mul", av * bv, ((a, bv), (b, av)))


def neg(a):
    return _emit("neg", -value_of(a), ((a, -1.0),))


def scale(a, factor: float):
    return _emit("scale", value_of(a) * factor, ((a, factor),))


def square(a):
    av = value_of(a)
    return _emit("square", av * av, ((a, 2.0 * av),))


def tanh(a):
    av = value_of(a)
    value = np.tanh(av)
    return _emit("tanh", value, ((a, 1.0 - value * value),))


def sin(a):
    av = value_of(a)
    return _emit("sin", np.sin(av), ((a, np.cos(av)),))


def cos(a):
    av = value_of(a)
    return _emit("cos", np.cos(av), ((a, -np.sin(av)),))


def total(a):
    """Sum of all entries."""
    av = value_of(a)
    return _emit("sum", np.sum(av), ((a, np.ones_like(av)),))


def mean(a):
    av = np.asarray(value_of(a))
    return scale(total(a), 1.0 / max(av.size, 1))


def matmul(a, b):
    av, bv = np.asarray(value_of(a)), np.asarray(value_of(b))
    value = av @ bv

    def grad_a(adjoint):
        if bv.ndim == 1:
            return np.multiply.outer(adjoint, bv)
        if av.ndim == 1:
            return bv @ adjoint
        return adjoint @ bv.T

    def grad_b(adjoint):
        if av.ndim == 1:
            return np.multiply.outer(av, adjoint)
        return av.T @ adjoint

    return _emit("matmul", value, ((a, grad_a), (b, grad_b)))


def take(a, offset: int, shape: Tuple[int, ...]):
    """Reshaped view of a contiguous slice of a flat variable."""
    av = value_of(a)
    size = int(np.prod(shape, dtype=int))
    value = av[offset : offset + size].reshape(shape)
    full = av.shape

    def grad(adjoint):
        scattered = np.zeros(full)
        scattered[offset : offset + size] = np.ravel(adjoint)
        return scattered

    return _emit("take", value, ((a, grad),))


def _is_zero(x) -> bool:
    return isinstance(x, (int, float)) and x == 0


def _jadd(a, b):
    if _is_zero(a):
        return b
    if _is_zero(b):
        return a
    return add(a, b)


def _jsub(a, b):
    if _is_zero(b):
        return a
    if _is_zero(a):
        return neg(b)
    return sub(a, b)


def _jmul(a, b):
    if _is_zero(a) or _is_zero(b):
        return 0.0
    return mul(a, b)


@dataclass(frozen=True)
class Jet2:
    """(value, first, second) derivative triple along one direction.

    A plain 0.0 in d1/d2 marks a structurally zero derivative and is
    skipped by the arithmetic below.
    """

    v: Any
    d1: Any = 0.0
    d2: Any = 0.0

    @staticmethod
    def lift(x) -> "Jet2":
        return x if isinstance(x, Jet2) else Jet2(x)

    @staticmethod
    def seed(value) -> "Jet2":
        return Jet2(value, 1.0, 0.0)

    def __add__(self, other):
        other = Jet2.lift(other)
        return Jet2(_jadd(self.v, other.v), _jadd(self.d1, other.d1), _jadd(self.d2, other.d2))

    __radd__ = __add__

    def __sub__(self, other):
        other = Jet2.lift(other)
        return Jet2(_jsub(self.v, other.v), _jsub(self.d1, other.d1), _jsub(self.d2, other.d2))

    def __rsub__(self, other):
        return Jet2.lift(other) - self

    def __neg__(self):
        return Jet2(neg(self.v), _jsub(0.0, self.d1), _jsub(0.0, self.d2))

    def __mul__(self, other):
        if not isinstance(other, Jet2):
            return Jet2(_jmul(self.v, other), _jmul(self.d1, other), _jmul(self.d2, other))
        d1 = _jadd(_jmul(self.d1, other.v), _jmul(self.v, other.d1))
        d2 = _jadd(
            _jadd(_jmul(self.d2, other.v), _jmul(2.0, _jmul(self.d1, other.d1))),
            _jmul(self.v, other.d2),
        )
        return Jet2(_jmul(self.v, other.v), d1, d2)

    __rmul__ = __mul__


def compose(f: Jet2, g, g1, g2) -> Jet2:
    """Chain rule for g(f) given g(f.v), g'(f.v), g''(f.v)."""
    d1 = _jmul(g1, f.d1)
    d2 = _jadd(_jmul(g2, _jmul(f.d1, f.d1)), _jmul(g1, f.d2))
    return Jet2(g, d1, d2)


def jet_tanh(f: Jet2) -> Jet2:
    g = tanh(f.v)
    g1 = 1.0 - square(g)
    return compose(f, g, g1, -2.0 * (g * g1))


def jet_sin(f: Jet2) -> Jet2:
    g = sin(f.v)
    return compose(f, g, cos(f.v), neg(g))


def jet_cos(f: Jet2) -> Jet2:
    g = cos(f.v)
    return compose(f, g, neg(sin(f.v)), neg(g))


def jet_square(f: Jet2) -> Jet2:
    return compose(f, square(f.v), 2.0 * f.v, 2.0)


def jet_apply(op: str, inputs: Sequence[Jet2], **kwargs) -> Jet2:
    """Apply one supported operation to jets.

    `scale` takes `factor`; `affine` takes `weight` and `bias` and computes
    weight * x + bias.
    """
    jets = [Jet2.lift(j) for j in inputs]
    if op == "add":
        return jets[0] + jets[1]
    if op == "sub":
        return jets[0] - jets[1]
    if op == "mul":
        return jets[0] * jets[1]
    if op == "scale":
        return jets[0] * kwargs["factor"]
    if op == "affine":
        return jets[0] * kwargs["weight"] + kwargs.get("bias", 0.0)
    if op == "tanh":
        return jet_tanh(jets[0])
    if op == "sin":
        return jet_sin(jets[0])
    if op == "cos":
        return jet_cos(jets[0])
    if op == "square":
        return jet_square(jets[0])
    raise UsageError(f"unsupported jet operation: {op}")


def value_and_grad(f: Callable[[Tape, Var], Var], theta: np.ndarray) -> Tuple[float, np.ndarray]:
    tape = Tape()
    root = f(tape, tape.parameter(np.asarray(theta, dtype=np.float64)))
    return float(root.value), tape.backward(root.id).values


def _probe(f: Callable[[Tape, Var], Var], theta: np.ndarray) -> float:
    tape = Tape()
    value = float(value_of(f(tape, tape.parameter(theta))))
    if not np.isfinite(value):
        raise NumericFault("non-finite function value during gradient check")
    return value


def gradient_check(
    f: Callable[[Tape, Var], Var],
    theta: np.ndarray,
    h: float,
    coordinates: Optional[Sequence[int]] = None,
) -> float:
    """Max over coordinates of |analytic - central FD| / max(1, |analytic|).

    `f` builds the scalar root on the given tape from the flat parameter
    leaf. `coordinates` restricts the check to a subset of entries.
    """
    if h <= 0:
        raise UsageError(f"step must be positive, got {h}")
    theta = np.asarray(theta, dtype=np.float64)
    _, analytic = value_and_grad(f, theta)
    if coordinates is None:
        coordinates = range(len(theta))
    worst = 0.0
    for k in coordinates:
        probe = theta.copy()
        probe[k] = theta[k] + h
        upper = _probe(f, probe)
        probe[k] = theta[k] - h
        lower = _probe(f, probe)
        numeric = (upper - lower) / (2.0 * h)
        error = abs(analytic[k] - numeric) / max(1.0, abs(analytic[k]))
        worst = max(worst, error)
    logger.debug("gradient check over %d coordinates: %.3e", len(coordinates), worst)
    return worst
