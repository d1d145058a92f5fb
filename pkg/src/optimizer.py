import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .autodiff import GradientMap
from .errors import NumericFault, UsageError
from .models import AdamHeader

logger = logging.getLogger(__name__)

OPTIMIZERS = ("adam", "sgd")


@dataclass
class AdamState:
    """Moment accumulators and hyperparameters of Adam.

    `step` counts completed updates; the defaults are the full-scale
    settings (lr 1e-5, eps 1e-15).
    """

    m: np.ndarray
    v: np.ndarray
    step: int = 0
    lr: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-15

    @classmethod
    def zeros(cls, n: int, **hyper) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), **hyper)

    def header(self) -> AdamHeader:
        return {
            "step": self.step,
            "lr": self.lr,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "eps": self.eps,
        }

    @classmethod
    def from_header(cls, header: AdamHeader, m: np.ndarray, v: np.ndarray) -> "AdamState":
        return cls(np.array(m, dtype=np.float64), np.array(v, dtype=np.float64), **header)

    def copy(self) -> "AdamState":
        return AdamState(self.m.copy(), self.v.copy(), self.step, self.lr, self.beta1, self.beta2, self.eps)


def _gradient_values(theta: np.ndarray, g) -> np.ndarray:
    values = g.values if isinstance(g, GradientMap) else np.asarray(g, dtype=np.float64)
    if values.shape != theta.shape:
        raise UsageError(f"gradient of shape {values.shape} does not match parameters {theta.shape}")
    if not np.all(np.isfinite(values)):
        bad = int(np.flatnonzero(~np.isfinite(values))[0])
        raise NumericFault(f"non-finite gradient entry at parameter index {bad}")
    return values


def adam_step(state: AdamState, theta: np.ndarray, g) -> Tuple[np.ndarray, AdamState]:
    """One bias-corrected Adam update; returns new (theta, state).

    Neither input is modified, so a faulting gradient leaves the caller's
    state as it was.
    """
    values = _gradient_values(theta, g)
    step = state.step + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * values
    v = state.beta2 * state.v + (1.0 - state.beta2) * values * values
    m_hat = m / (1.0 - state.beta1**step)
    v_hat = v / (1.0 - state.beta2**step)
    theta = theta - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return theta, AdamState(m, v, step, state.lr, state.beta1, state.beta2, state.eps)


def sgd_step(state: AdamState, theta: np.ndarray, g) -> Tuple[np.ndarray, AdamState]:
    """theta - lr * g; the moments are left untouched."""
    values = _gradient_values(theta, g)
    new_state = state.copy()
    new_state.step += 1
    return theta - state.lr * values, new_state


STEPS = {"adam": adam_step, "sgd": sgd_step}


def get_step(name: str):
    try:
        return STEPS[name]
    except KeyError:
        raise UsageError(f"unknown optimizer '{name}'; expected one of {OPTIMIZERS}") from None
