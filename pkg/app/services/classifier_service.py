import logging
from typing import Optional

import numpy as np

from app.core import tensor as T
from app.core.errors import DataError, NumericError
from app.core.optim import Adam
from app.core.tensor import Tensor
from app.models.cf_networks import one_hot
from app.models.classifier import ClassifierModel
from app.models.dataset import Dataset
from app.schemas.experiment import ClassifierConfig

logger = logging.getLogger(__name__)


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean negative log-likelihood of integer ``labels`` under softmax(logits)."""
    targets = Tensor(one_hot(labels, logits.shape[-1]))
    return -T.sum(T.log_softmax(logits) * targets) / logits.shape[0]


class ClassifierService:
    """Trains the black-box classifier that counterfactuals have to flip."""

    def __init__(self, config: Optional[ClassifierConfig] = None):
        self.config = config or ClassifierConfig()

    def train_classifier(self, data: Dataset, seed: Optional[int] = None) -> ClassifierModel:
        """
        Train with Adam on cross-entropy, early-stopping on validation accuracy.

        Args:
            data: Standardized dataset with both classes in its training split
            seed: Overrides ``config.seed``

        Returns:
            Frozen model holding the best-validation weights and its accuracies
        """
        config = self.config
        seed = seed if seed is not None else (config.seed or 0)
        x_train, y_train = data.x("train"), data.y("train")
        if len(np.unique(y_train)) < 2:
            raise DataError("Training split contains a single class; cannot train a binary classifier")

        rng = np.random.default_rng(seed)
        model = ClassifierModel(
            data.num_features, config.hidden_size, rng, standardizer_ref=data.standardizer.identifier
        )
        optimizer = Adam(model.parameters(), config.learning_rate)

        # Leave-one-out folds have no validation split
        x_monitor, y_monitor = (data.x("val"), data.y("val")) if len(data.y("val")) else (x_train, y_train)

        best_accuracy, best_state, stale = -1.0, model.network.state_dict(), 0
        n = len(y_train)
        for epoch in range(config.epochs):
            order = rng.permutation(n)
            losses = []
            for start in range(0, n, config.batch_size):
                batch = order[start:start + config.batch_size]
                loss = cross_entropy(model.logits(x_train[batch]), y_train[batch])
                if not np.isfinite(loss.item()):
                    raise NumericError(f"Classifier loss became non-finite at epoch {epoch}")
                loss.backward()
                optimizer.step()
                losses.append(loss.item())

            accuracy = model.accuracy(x_monitor, y_monitor)
            model.history.append({"epoch": epoch, "loss": float(np.mean(losses)), "monitor_accuracy": accuracy})
            if accuracy > best_accuracy:
                best_accuracy, best_state, stale = accuracy, model.network.state_dict(), 0
            else:
                stale += 1
                if stale >= config.patience:
                    logger.info(f"Classifier early stop at epoch {epoch} (best accuracy {best_accuracy:.4f})")
                    break

        model.network.load_state_dict(best_state)
        model.metrics = {
            "train_accuracy": model.accuracy(x_train, y_train),
            "val_accuracy": model.accuracy(data.x("val"), data.y("val")),
            "test_accuracy": model.accuracy(data.x("test"), data.y("test")),
        }
        model.freeze()
        logger.info(f"Classifier trained: {model.metrics}")
        return model
