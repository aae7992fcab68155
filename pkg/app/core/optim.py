"""First-order stochastic optimisation (Adam with bias correction)."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import List, Sequence, Tuple, Union

import numpy as np

from app.config.constants import ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON
from app.core.errors import StateError
from app.core.tensor import Tensor

logger = logging.getLogger(__name__)


@dataclass
class AdamState:
    """Per-parameter Adam moments.

    ``learning_rate`` may be an array broadcastable to the parameter, which the
    per-query counterfactual searches use to keep one step size per row.
    """

    first_moment: np.ndarray
    second_moment: np.ndarray
    learning_rate: Union[float, np.ndarray] = 1e-3
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    epsilon: float = ADAM_EPSILON
    # Scalar, or one count per row when rows are accepted independently
    step: Union[int, np.ndarray] = 0

    def __post_init__(self):
        if not 0.0 < self.beta1 < 1.0 or not 0.0 < self.beta2 < 1.0:
            raise ValueError(f"Adam betas must lie in (0, 1), got {self.beta1}, {self.beta2}")
        if self.epsilon <= 0:
            raise ValueError(f"Adam epsilon must be positive, got {self.epsilon}")
        if self.first_moment.shape != self.second_moment.shape:
            raise StateError("Adam moment arrays differ in shape")

    @classmethod
    def for_shape(cls, shape, learning_rate: Union[float, np.ndarray] = 1e-3, **kwargs) -> "AdamState":
        return cls(
            first_moment=np.zeros(shape),
            second_moment=np.zeros(shape),
            learning_rate=learning_rate,
            **kwargs,
        )

    def direction(self, grad: np.ndarray) -> np.ndarray:
        """Advance the moments with ``grad`` and return the bias-corrected update."""
        if grad.shape != self.first_moment.shape:
            raise StateError(f"gradient shape {grad.shape} != moment shape {self.first_moment.shape}")
        self.step = self.step + 1
        self.first_moment = self.beta1 * self.first_moment + (1.0 - self.beta1) * grad
        self.second_moment = self.beta2 * self.second_moment + (1.0 - self.beta2) * grad ** 2
        m_hat = self.first_moment / (1.0 - self.beta1 ** self.step)
        v_hat = self.second_moment / (1.0 - self.beta2 ** self.step)
        return self.learning_rate * m_hat / (np.sqrt(v_hat) + self.epsilon)

    def propose(self, grad: np.ndarray) -> Tuple[np.ndarray, "AdamState"]:
        """Update for ``grad`` and the advanced state; this state is left as is."""
        advanced = replace(
            self,
            first_moment=self.first_moment.copy(),
            second_moment=self.second_moment.copy(),
            step=np.copy(self.step) if np.ndim(self.step) else self.step,
        )
        return advanced.direction(grad), advanced

    def accept(self, advanced: "AdamState", rows: np.ndarray) -> None:
        """Take the moments and step counts of ``advanced`` for ``rows`` only."""
        if np.ndim(self.step) == 0:
            raise StateError("per-row acceptance needs per-row step counts")
        self.first_moment[rows] = advanced.first_moment[rows]
        self.second_moment[rows] = advanced.second_moment[rows]
        self.step[rows] = advanced.step[rows]


def adam_step(params: Sequence[Tensor], states: Sequence[AdamState]) -> None:
    """Apply one Adam update to every parameter and clear its gradient."""
    if len(params) != len(states):
        raise StateError(f"{len(params)} parameters but {len(states)} optimizer states")
    for index, param in enumerate(params):
        if param.grad is None:
            raise StateError(f"parameter {param.name or index} has no gradient")
    for param, state in zip(params, states):
        param.data -= state.direction(param.grad)
        param.grad = None


@dataclass
class Adam:
    """Convenience wrapper pairing parameters with their states."""

    params: List[Tensor]
    learning_rate: float = 1e-3
    states: List[AdamState] = field(init=False)

    def __post_init__(self):
        self.states = [AdamState.for_shape(p.shape, self.learning_rate) for p in self.params]

    def zero_grad(self) -> None:
        for param in self.params:
            param.grad = None

    def step(self) -> None:
        adam_step(self.params, self.states)
