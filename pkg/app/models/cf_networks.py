from typing import Any, Dict, List, Optional

import numpy as np

from app.config.constants import CF_GAMMA, NUM_CLASSES
from app.core import tensor as T
from app.core.errors import DomainError, ShapeError
from app.core.tensor import Tensor
from app.models.mlp import TwoLayerMlp
from app.utils.serialization import state_from_json, state_to_json


def one_hot(labels: np.ndarray, num_classes: int = NUM_CLASSES) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    encoded = np.zeros((labels.shape[0], num_classes))
    encoded[np.arange(labels.shape[0]), labels] = 1.0
    return encoded


class ModulationNet:
    """delta = gamma * f_mod(x || onehot(y_cf)), reshaped to the (L, d) latent."""

    def __init__(
        self,
        num_features: int,
        latent_dim: int,
        hidden_size: int,
        gamma: float = CF_GAMMA,
        rng: Optional[np.random.Generator] = None,
    ):
        if gamma <= 0:
            raise DomainError(f"gamma must be positive, got {gamma}")
        self.num_features = num_features
        self.latent_dim = latent_dim
        self.hidden_size = hidden_size
        self.gamma = gamma
        self.network = TwoLayerMlp(
            num_features + NUM_CLASSES, hidden_size, num_features * latent_dim, rng, name="modulation"
        )

    def raw(self, x, y_cf) -> Tensor:
        x = T.as_tensor(x)
        if x.ndim != 2 or x.shape[1] != self.num_features:
            raise ShapeError(f"ModulationNet expects (batch, {self.num_features}) input, got {x.shape}")
        target = one_hot(y_cf)
        if target.shape[0] != x.shape[0]:
            raise ShapeError(f"{target.shape[0]} target labels for {x.shape[0]} queries")
        return self.network(T.concat(x, Tensor(target), axis=1))

    def __call__(self, x, y_cf) -> Tensor:
        raw = self.raw(x, y_cf)
        delta = T.reshape(raw, (raw.shape[0], self.num_features, self.latent_dim))
        return delta * self.gamma

    def parameters(self) -> List[Tensor]:
        return self.network.parameters()

    def freeze(self) -> None:
        self.network.freeze()

    def to_dict(self) -> Dict[str, Any]:
        return {
            "num_features": self.num_features,
            "latent_dim": self.latent_dim,
            "hidden_size": self.hidden_size,
            "gamma": self.gamma,
            "weights": state_to_json(self.network.state_dict()),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ModulationNet":
        net = cls(data["num_features"], data["latent_dim"], data["hidden_size"], data["gamma"])
        net.network.load_state_dict(state_from_json(data["weights"]))
        return net


class Discriminator:
    """f_dis(z): probability that a flattened latent came from real data."""

    def __init__(self, num_features: int, latent_dim: int, hidden_size: int, rng: Optional[np.random.Generator] = None):
        self.num_features = num_features
        self.latent_dim = latent_dim
        self.hidden_size = hidden_size
        self.network = TwoLayerMlp(num_features * latent_dim, hidden_size, 1, rng, name="discriminator")

    def __call__(self, z) -> Tensor:
        z = T.as_tensor(z)
        batch = z.shape[0]
        flat = T.reshape(z, (batch, self.num_features * self.latent_dim))
        return T.reshape(T.sigmoid(self.network(flat)), (batch,))

    def parameters(self) -> List[Tensor]:
        return self.network.parameters()

    def freeze(self) -> None:
        self.network.freeze()

    def to_dict(self) -> Dict[str, Any]:
        return {
            "num_features": self.num_features,
            "latent_dim": self.latent_dim,
            "hidden_size": self.hidden_size,
            "weights": state_to_json(self.network.state_dict()),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Discriminator":
        net = cls(data["num_features"], data["latent_dim"], data["hidden_size"])
        net.network.load_state_dict(state_from_json(data["weights"]))
        return net
