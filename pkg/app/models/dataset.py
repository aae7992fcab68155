import hashlib
from dataclasses import dataclass, field, replace
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np

from app.config.constants import SPLIT_FRACTION_TEST, SPLIT_FRACTION_VAL
from app.core.errors import ConstantFeatureError, DataError, ShapeError
from app.schemas.dataset import RelationConstraint


@dataclass(frozen=True, eq=False)
class Standardizer:
    """Per-feature (mean, std) in raw units, fitted on training rows only."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, raw: np.ndarray, feature_names: Sequence[str]) -> "Standardizer":
        if raw.shape[0] == 0:
            raise DataError("Cannot fit a standardizer on zero rows")
        for j, name in enumerate(feature_names):
            if np.ptp(raw[:, j]) == 0:
                raise ConstantFeatureError(name)
        return cls(mean=raw.mean(axis=0), std=raw.std(axis=0))

    def _check(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.mean.shape[0]:
            raise ShapeError(f"Expected {self.mean.shape[0]} features, got shape {x.shape}")
        return x

    def transform(self, raw: np.ndarray) -> np.ndarray:
        return (self._check(raw) - self.mean) / self.std

    def inverse_transform(self, standardized: np.ndarray) -> np.ndarray:
        return self._check(standardized) * self.std + self.mean

    @property
    def identifier(self) -> str:
        digest = hashlib.sha256(self.mean.tobytes() + self.std.tobytes())
        return digest.hexdigest()[:16]

    def to_dict(self) -> Dict[str, Any]:
        return {"mean": self.mean.tolist(), "std": self.std.tolist(), "identifier": self.identifier}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Standardizer":
        return cls(mean=np.asarray(data["mean"], dtype=np.float64), std=np.asarray(data["std"], dtype=np.float64))


@dataclass(frozen=True, eq=False)
class DatasetSplit:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    loo: bool = False

    @classmethod
    def random(cls, n: int, rng: np.random.Generator) -> "DatasetSplit":
        """8:1:1 split; |test| = |val| = floor(n / 10)."""
        order = rng.permutation(n)
        n_test = int(n * SPLIT_FRACTION_TEST)
        n_val = int(n * SPLIT_FRACTION_VAL)
        return cls(
            train=np.sort(order[n_test + n_val:]),
            val=np.sort(order[n_test:n_test + n_val]),
            test=np.sort(order[:n_test]),
        )

    @classmethod
    def leave_one_out(cls, n: int) -> "DatasetSplit":
        return cls(train=np.arange(n), val=np.array([], dtype=np.int64), test=np.array([], dtype=np.int64), loo=True)

    def validate(self, n: int) -> None:
        combined = np.concatenate([self.train, self.val, self.test])
        if len(np.unique(combined)) != len(combined):
            raise DataError("Split index lists overlap")
        if len(combined) != n or (n and (combined.min() < 0 or combined.max() >= n)):
            raise DataError(f"Split indices do not cover 0..{n - 1}")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "train": self.train.tolist(),
            "val": self.val.tolist(),
            "test": self.test.tolist(),
            "loo": self.loo,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "DatasetSplit":
        return cls(
            train=np.asarray(data["train"], dtype=np.int64),
            val=np.asarray(data["val"], dtype=np.int64),
            test=np.asarray(data["test"], dtype=np.int64),
            loo=bool(data.get("loo", False)),
        )


@dataclass(frozen=True, eq=False)
class Dataset:
    raw: np.ndarray
    features: np.ndarray
    labels: np.ndarray
    feature_names: Tuple[str, ...]
    split: DatasetSplit
    standardizer: Standardizer
    constraints: Tuple[RelationConstraint, ...] = ()
    metadata: Dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_raw(
        cls,
        raw: np.ndarray,
        labels: np.ndarray,
        feature_names: Sequence[str],
        split: DatasetSplit,
        constraints: Sequence[RelationConstraint] = (),
        metadata: Optional[Dict[str, Any]] = None,
    ) -> "Dataset":
        raw = np.asarray(raw, dtype=np.float64)
        labels = np.asarray(labels, dtype=np.int64)
        if raw.ndim != 2 or raw.shape[0] == 0:
            raise DataError(f"Dataset needs a non-empty 2-D feature matrix, got shape {raw.shape}")
        if labels.shape != (raw.shape[0],):
            raise ShapeError(f"{labels.shape[0]} labels for {raw.shape[0]} rows")
        if len(feature_names) != raw.shape[1]:
            raise ShapeError(f"{len(feature_names)} feature names for {raw.shape[1]} columns")
        if not np.isin(labels, (0, 1)).all():
            raise DataError("Labels must be 0 or 1")
        if not np.isfinite(raw).all():
            raise DataError("Feature matrix contains non-finite values")
        for c in constraints:
            if max(c.attr_a, c.attr_b) >= raw.shape[1]:
                raise DataError(f"Constraint {c.key} references a missing attribute")
        split.validate(raw.shape[0])

        standardizer = Standardizer.fit(raw[split.train], feature_names)
        return cls(
            raw=raw,
            features=standardizer.transform(raw),
            labels=labels,
            feature_names=tuple(feature_names),
            split=split,
            standardizer=standardizer,
            constraints=tuple(constraints),
            metadata=dict(metadata or {}),
        )

    @property
    def num_samples(self) -> int:
        return self.raw.shape[0]

    @property
    def num_features(self) -> int:
        return self.raw.shape[1]

    def indices(self, part: str) -> np.ndarray:
        if part not in ("train", "val", "test"):
            raise ValueError(f"Unknown split '{part}'")
        return getattr(self.split, part)

    def x(self, part: str) -> np.ndarray:
        return self.features[self.indices(part)]

    def y(self, part: str) -> np.ndarray:
        return self.labels[self.indices(part)]

    def raw_part(self, part: str) -> np.ndarray:
        return self.raw[self.indices(part)]

    def fold(self, i: int) -> "Dataset":
        """Leave-one-out fold ``i``: train on every other record, test on record ``i``."""
        if not 0 <= i < self.num_samples:
            raise IndexError(f"Fold {i} out of range for {self.num_samples} records")
        split = DatasetSplit(
            train=np.delete(np.arange(self.num_samples), i),
            val=np.array([], dtype=np.int64),
            test=np.array([i], dtype=np.int64),
            loo=True,
        )
        metadata = dict(self.metadata, fold=i)
        return Dataset.from_raw(self.raw, self.labels, self.feature_names, split, self.constraints, metadata)

    def subset(self, indices: Sequence[int], split: Optional[DatasetSplit] = None) -> "Dataset":
        """Records ``indices`` as a new dataset, by default split 8:1:1 in order."""
        indices = np.asarray(indices, dtype=np.int64)
        n = len(indices)
        if split is None:
            n_hold = int(n * SPLIT_FRACTION_TEST)
            split = DatasetSplit(
                train=np.arange(2 * n_hold, n),
                val=np.arange(n_hold, 2 * n_hold),
                test=np.arange(n_hold),
            )
        return Dataset.from_raw(
            self.raw[indices], self.labels[indices], self.feature_names, split, self.constraints, self.metadata
        )

    def with_constraints(self, constraints: Sequence[RelationConstraint]) -> "Dataset":
        for c in constraints:
            if max(c.attr_a, c.attr_b) >= self.num_features:
                raise DataError(f"Constraint {c.key} references a missing attribute")
        return replace(self, constraints=tuple(constraints))
