"""
Per-query gradient counterfactual searches (Plain-CF and Plain-CF_K).

    minimise  lambda * hinge(s(x_cf), y_cf) + ||x - x_cf||^2  [+ w * knn(x_cf)]

over x_cf in standardized space with Adam. A step that raises a query's loss
is rejected: that query's moments stay put and its learning rate is halved.
Queries never interact, so the whole query set is optimised as one batch with
per-row learning rates and step counts.
"""
import logging
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from sklearn.neighbors import NearestNeighbors

from app.config.constants import INVALID_NOTE, METHOD_PLAIN_CF, METHOD_PLAIN_CF_K, NO_FLIP_NOTE, NUM_CLASSES
from app.core import tensor as T
from app.core.errors import DataError, ShapeError
from app.core.optim import AdamState
from app.core.tensor import Tensor
from app.models.classifier import ClassifierModel
from app.models.dataset import Dataset, Standardizer
from app.schemas.experiment import PlainCfConfig
from app.schemas.results import CounterfactualResult
from app.services.cf_service import hinge_class_loss_per_sample

logger = logging.getLogger(__name__)


class NeighbourIndex:
    """k-nearest training samples of each class, on standardized features."""

    def __init__(self, data: Dataset, k: int):
        x_train, y_train = data.x("train"), data.y("train")
        self.k = k
        self._points: Dict[int, np.ndarray] = {}
        self._indexes: Dict[int, NearestNeighbors] = {}
        for label in range(NUM_CLASSES):
            points = x_train[y_train == label]
            self._points[label] = points
            if len(points) >= k:
                self._indexes[label] = NearestNeighbors(n_neighbors=k).fit(points)

    def check(self, labels: np.ndarray) -> None:
        for label in np.unique(labels):
            count = len(self._points[int(label)])
            if count < self.k:
                raise DataError(f"Only {count} training samples of class {label}; need k = {self.k}")

    def neighbours(self, x: np.ndarray, labels: np.ndarray) -> np.ndarray:
        """(N, k, L) block of the k nearest class-``labels[i]`` samples of each row."""
        block = np.empty((x.shape[0], self.k, x.shape[1]))
        for label in np.unique(labels):
            rows = labels == label
            _, idx = self._indexes[int(label)].kneighbors(x[rows])
            block[rows] = self._points[int(label)][idx]
        return block


class BaselineService:
    def __init__(self, blackbox: ClassifierModel, standardizer: Standardizer):
        self.blackbox = blackbox
        self.standardizer = standardizer

    def _objective(
        self,
        x_cf: np.ndarray,
        x: np.ndarray,
        y_cf: np.ndarray,
        lam: float,
        config: PlainCfConfig,
        index: Optional[NeighbourIndex],
    ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Per-row loss, gradient and validity at ``x_cf``."""
        point = Tensor(x_cf, requires_grad=True)
        scores = self.blackbox.predict_proba(point)
        loss = hinge_class_loss_per_sample(scores, y_cf, config.beta) * lam
        loss = loss + T.sum(T.square(point - x), axis=1)
        if index is not None:
            neighbours = index.neighbours(x_cf, y_cf)
            gap = T.reshape(point, (x_cf.shape[0], 1, x_cf.shape[1])) - neighbours
            loss = loss + T.mean(T.sum(T.square(gap), axis=2), axis=1) * config.knn_weight
        T.sum(loss).backward()
        valid = np.argmax(scores.data, axis=-1) == y_cf
        return loss.data.copy(), point.grad, valid

    def _descend(
        self,
        x: np.ndarray,
        y_cf: np.ndarray,
        lam: float,
        config: PlainCfConfig,
        index: Optional[NeighbourIndex],
    ) -> Tuple[np.ndarray, np.ndarray]:
        """
        Adam descent from ``x`` at a fixed ``lam``.

        Returns:
            (x_cf, found): lowest-loss valid iterate per row (final iterate where none was valid)
        """
        x_cf = x.copy()
        learning_rate = np.full((x.shape[0], 1), config.learning_rate)
        state = AdamState.for_shape(x.shape, learning_rate, step=np.zeros((x.shape[0], 1), dtype=np.int64))

        loss, grad, valid = self._objective(x_cf, x, y_cf, lam, config, index)
        best = x_cf.copy()
        best_loss = np.where(valid, loss, np.inf)
        for _ in range(config.steps):
            update, advanced = state.propose(grad)
            candidate = x_cf - update
            cand_loss, cand_grad, cand_valid = self._objective(candidate, x, y_cf, lam, config, index)
            accept = cand_loss <= loss
            state.accept(advanced, accept)
            x_cf[accept] = candidate[accept]
            loss[accept] = cand_loss[accept]
            grad[accept] = cand_grad[accept]
            valid[accept] = cand_valid[accept]
            learning_rate[~accept] *= 0.5

            improved = valid & (loss < best_loss)
            best[improved] = x_cf[improved]
            best_loss[improved] = loss[improved]

        found = np.isfinite(best_loss)
        return np.where(found[:, None], best, x_cf), found

    def search(
        self,
        x_raw: np.ndarray,
        y_cf: Sequence[int],
        config: Optional[PlainCfConfig] = None,
        train_data: Optional[Dataset] = None,
    ) -> List[CounterfactualResult]:
        """
        Run Plain-CF (``train_data`` unset) or Plain-CF_K on a batch of raw-unit queries.

        Queries without a valid iterate are searched again from the start with
        lambda raised by ``lambda_growth``, for at most ``lambda_rounds`` rounds.
        A query that never reaches its target returns the final iterate of its
        last round with ``INVALID_NOTE``.
        """
        config = config or PlainCfConfig()
        x_raw = np.atleast_2d(np.asarray(x_raw, dtype=np.float64))
        y_cf = np.atleast_1d(np.asarray(y_cf, dtype=np.int64))
        if y_cf.shape[0] != x_raw.shape[0]:
            raise ShapeError(f"{y_cf.shape[0]} target labels for {x_raw.shape[0]} queries")

        index = None
        if train_data is not None:
            index = NeighbourIndex(train_data, config.k)
            index.check(y_cf)

        x = self.standardizer.transform(x_raw)
        final = x.copy()
        found = np.zeros(x.shape[0], dtype=bool)
        pending = np.arange(x.shape[0])
        lam = config.lam
        for round_index in range(config.lambda_rounds):
            x_cf, ok = self._descend(x[pending], y_cf[pending], lam, config, index)
            final[pending] = x_cf
            found[pending] = ok
            pending = pending[~ok]
            logger.debug(f"Plain-CF round {round_index}: lambda={lam:.3g}, {pending.size} queries still invalid")
            if pending.size == 0 or lam == 0:
                break
            lam *= config.lambda_growth
        if pending.size:
            logger.info(f"{pending.size} of {x.shape[0]} queries found no valid counterfactual (final lambda {lam:.3g})")
        return self._results(x, x_raw, final, y_cf, found, train_data is not None)

    def _results(
        self,
        x: np.ndarray,
        x_raw: np.ndarray,
        x_cf: np.ndarray,
        y_cf: np.ndarray,
        found: np.ndarray,
        with_neighbours: bool,
    ) -> List[CounterfactualResult]:
        original_labels = self.blackbox.predict(x)
        cf_labels = self.blackbox.predict(x_cf)
        x_cf_raw = self.standardizer.inverse_transform(x_cf)
        method = METHOD_PLAIN_CF_K if with_neighbours else METHOD_PLAIN_CF
        results = []
        for i in range(x.shape[0]):
            if original_labels[i] == y_cf[i]:
                note = NO_FLIP_NOTE
            elif not found[i]:
                note = INVALID_NOTE
            else:
                note = None
            results.append(
                CounterfactualResult(
                    method=method,
                    original=x_raw[i].tolist(),
                    counterfactual=x_cf_raw[i].tolist(),
                    original_label=int(original_labels[i]),
                    target_label=int(y_cf[i]),
                    predicted_cf_label=int(cf_labels[i]),
                    note=note,
                )
            )
        return results

    def plain_cf(self, x_raw: np.ndarray, y_cf: int, config: Optional[PlainCfConfig] = None) -> CounterfactualResult:
        return self.search(np.asarray(x_raw, dtype=np.float64)[None, :], [y_cf], config)[0]

    def plain_cf_k(
        self, x_raw: np.ndarray, y_cf: int, train_data: Dataset, config: Optional[PlainCfConfig] = None
    ) -> CounterfactualResult:
        return self.search(np.asarray(x_raw, dtype=np.float64)[None, :], [y_cf], config, train_data)[0]
