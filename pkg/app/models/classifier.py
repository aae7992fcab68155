from typing import Any, Dict, List, Optional

import numpy as np

from app.config.constants import NUM_CLASSES
from app.core import tensor as T
from app.core.errors import ShapeError
from app.core.tensor import Tensor
from app.models.mlp import TwoLayerMlp
from app.utils.serialization import state_from_json, state_to_json


class ClassifierModel:
    """
    Black-box scorer h(x): two-layer ReLU MLP with a 2-way softmax head.

    Once frozen, gradients still flow to the input (counterfactual searches
    need them) but never to the weights.
    """

    def __init__(
        self,
        num_features: int,
        hidden_size: int,
        rng: Optional[np.random.Generator] = None,
        standardizer_ref: str = "",
    ):
        self.num_features = num_features
        self.hidden_size = hidden_size
        self.standardizer_ref = standardizer_ref
        self.network = TwoLayerMlp(num_features, hidden_size, NUM_CLASSES, rng, name="classifier")
        self.metrics: Dict[str, Optional[float]] = {}
        self.history: List[Dict[str, float]] = []
        self.frozen = False

    def _input(self, x) -> Tensor:
        x = T.as_tensor(x)
        if x.ndim not in (1, 2) or x.shape[-1] != self.num_features:
            raise ShapeError(f"Classifier expects {self.num_features} features, got shape {x.shape}")
        return x

    def logits(self, x) -> Tensor:
        x = self._input(x)
        if x.ndim == 1:
            return T.reshape(self.network(T.reshape(x, (1, -1))), (NUM_CLASSES,))
        return self.network(x)

    def predict_proba(self, x) -> Tensor:
        return T.softmax(self.logits(x))

    def predict(self, x) -> np.ndarray:
        # np.argmax returns the first maximum, so ties go to label 0
        return np.argmax(self.predict_proba(x).data, axis=-1)

    def accuracy(self, x: np.ndarray, y: np.ndarray) -> Optional[float]:
        if len(y) == 0:
            return None
        return float(np.mean(self.predict(x) == y))

    def parameters(self) -> List[Tensor]:
        return self.network.parameters()

    def freeze(self) -> None:
        self.network.freeze()
        self.frozen = True

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": "classifier",
            "num_features": self.num_features,
            "hidden_size": self.hidden_size,
            "standardizer_ref": self.standardizer_ref,
            "weights": state_to_json(self.network.state_dict()),
            "metrics": self.metrics,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ClassifierModel":
        model = cls(data["num_features"], data["hidden_size"], standardizer_ref=data.get("standardizer_ref", ""))
        model.network.load_state_dict(state_from_json(data["weights"]))
        model.metrics = dict(data.get("metrics", {}))
        model.freeze()
        return model
