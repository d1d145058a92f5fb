from dataclasses import dataclass
from typing import Callable, Dict, List, Sequence

import numpy as np

from . import autodiff
from .autodiff import Jet2
from .models import PenaltyWeights
from .resnet import SurrogateOutput


@dataclass(frozen=True)
class TrialForm:
    """u_h = C(coords) + G(coords, u_DNN) for one problem geometry.

    C and G receive the coordinate jets in domain order ((t, x) or (x, y)).
    """

    name: str
    particular: Callable[[Sequence[Jet2]], Jet2]
    compositor: Callable[[Sequence[Jet2], Jet2], Jet2]

    def __call__(self, coords: Sequence[Jet2], net: Jet2) -> Jet2:
        return self.particular(coords) + self.compositor(coords, net)


def _diffusion_particular(coords):
    _, x = coords
    return 10.0 * (x - x * x)


def _diffusion_compositor(coords, net):
    t, x = coords
    return t * (x - x * x) * net


def _heat_square_particular(coords):
    return Jet2(0.0)


def _heat_square_compositor(coords, net):
    x, y = coords
    return (1.0 - x * x) * (1.0 - y * y) * net


DIFFUSION_TRIAL = TrialForm("diffusion", _diffusion_particular, _diffusion_compositor)
HEAT_SQUARE_TRIAL = TrialForm("heat-square", _heat_square_particular, _heat_square_compositor)


def coordinate_jets(points: np.ndarray, direction: int = -1) -> List[Jet2]:
    """Constant jets of each coordinate column, seeded along `direction`."""
    return [
        Jet2(points[:, j], 1.0 if j == direction else 0.0, 0.0) for j in range(points.shape[1])
    ]


def hard_wrap(trial: TrialForm, net_out: SurrogateOutput, points: np.ndarray) -> SurrogateOutput:
    """Compose a network output with a trial form.

    `points` holds the (t, x) or (x, y) columns of the batch; the network's
    seeded directions index its full input, whose leading columns are these
    coordinates.
    """
    jets: Dict[int, Jet2] = {}
    for direction, jet in net_out.jets.items():
        jets[direction] = trial(coordinate_jets(points, direction), jet)
    value = trial(coordinate_jets(points), Jet2(net_out.value)).v
    return SurrogateOutput(value, jets, net_out.tape)


def wrap_values(trial: TrialForm, net_values: np.ndarray, points: np.ndarray) -> np.ndarray:
    return trial(coordinate_jets(points), Jet2(net_values)).v


def soft_penalty(residual_ic, residual_bc, w: PenaltyWeights):
    """lambda_1 * r_I^2 + lambda_2 * r_B^2, elementwise over a batch."""
    return autodiff.add(
        autodiff.scale(autodiff.square(residual_ic), w.lambda_ic),
        autodiff.scale(autodiff.square(residual_bc), w.lambda_bc),
    )
