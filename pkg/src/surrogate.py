"""A residual network bound to one problem's constraint mode."""

from typing import Any, Mapping, Optional, Sequence

import numpy as np

from .autodiff import Tape
from .constraints import hard_wrap, wrap_values
from .errors import UsageError
from .problems import ProblemSpec
from .resnet import NetworkConfig, NetworkParams, SurrogateOutput, forward, forward_jets


class Surrogate:
    """u_h(t, x, p; theta): the network itself in soft mode, C + G(u_DNN) in hard mode."""

    def __init__(self, problem: ProblemSpec, network: NetworkConfig):
        if network.input_dim != problem.input_dim:
            raise UsageError(
                f"network takes {network.input_dim} inputs but problem '{problem.tag}' has {problem.input_dim}"
            )
        self.problem = problem
        self.network = network

    @property
    def hard(self) -> bool:
        return self.problem.trial is not None

    @property
    def coordinate_directions(self) -> Sequence[int]:
        return tuple(range(self.problem.domain.n_coords))

    def inputs(self, points: np.ndarray, p: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        p = np.asarray(p, dtype=np.float64).reshape(len(points), self.problem.d)
        return np.hstack([points, p])

    def jets(
        self,
        params: NetworkParams,
        points: np.ndarray,
        p: np.ndarray,
        directions: Optional[Sequence[int]] = None,
        tape: Optional[Tape] = None,
        weights: Optional[Mapping[str, Any]] = None,
        order: int = 2,
    ) -> SurrogateOutput:
        """Value and coordinate jets of u_h on a batch.

        `directions` default to every space-time coordinate. Passing an
        empty sequence evaluates the value alone.
        """
        if directions is None:
            directions = self.coordinate_directions
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        out = forward_jets(params, self.inputs(points, p), directions, tape=tape, weights=weights, order=order)
        if self.hard:
            return hard_wrap(self.problem.trial, out, points)
        return out

    def predict(self, params: NetworkParams, points: np.ndarray, p: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        values = np.atleast_1d(forward(params, self.inputs(points, p)))
        if self.hard:
            return wrap_values(self.problem.trial, values, points)
        return values
