from typing import Dict, List, Optional

import numpy as np

from app.core import tensor as T
from app.core.errors import ShapeError
from app.core.tensor import Tensor

ACTIVATIONS = {"relu": T.relu, "tanh": T.tanh, "sigmoid": T.sigmoid}


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


class TwoLayerMlp:
    """
    Two-layer perceptron ``act(x @ w1 + b1) @ w2 + b2``.

    Acts on the last axis, so a (batch, L, in) block runs the same network on
    every attribute row.
    """

    PARAM_NAMES = ("w1", "b1", "w2", "b2")

    def __init__(
        self,
        in_features: int,
        hidden_size: int,
        out_features: int,
        rng: Optional[np.random.Generator] = None,
        activation: str = "relu",
        name: str = "mlp",
    ):
        if activation not in ACTIVATIONS:
            raise ValueError(f"Unknown activation '{activation}'")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.in_features = in_features
        self.hidden_size = hidden_size
        self.out_features = out_features
        self.activation = activation
        self.name = name
        self.w1 = Tensor(glorot_uniform(rng, in_features, hidden_size), requires_grad=True, name=f"{name}.w1")
        self.b1 = Tensor(np.zeros(hidden_size), requires_grad=True, name=f"{name}.b1")
        self.w2 = Tensor(glorot_uniform(rng, hidden_size, out_features), requires_grad=True, name=f"{name}.w2")
        self.b2 = Tensor(np.zeros(out_features), requires_grad=True, name=f"{name}.b2")

    def __call__(self, x) -> Tensor:
        x = T.as_tensor(x)
        if x.shape[-1] != self.in_features:
            raise ShapeError(f"{self.name}: expected last axis {self.in_features}, got shape {x.shape}")
        hidden = ACTIVATIONS[self.activation](x @ self.w1 + self.b1)
        return hidden @ self.w2 + self.b2

    def parameters(self) -> List[Tensor]:
        return [self.w1, self.b1, self.w2, self.b2]

    def freeze(self) -> None:
        for param in self.parameters():
            param.requires_grad = False
            param.grad = None

    def zero_(self) -> None:
        for param in self.parameters():
            param.data[...] = 0.0

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {key: getattr(self, key).data.copy() for key in self.PARAM_NAMES}

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        for key in self.PARAM_NAMES:
            value = np.asarray(state[key], dtype=np.float64)
            current = getattr(self, key)
            if value.shape != current.shape:
                raise ShapeError(f"{self.name}.{key}: stored shape {value.shape} != {current.shape}")
            current.data = value.copy()
