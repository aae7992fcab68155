"""Synthetic dataset generation and dataset persistence."""
import logging
from pathlib import Path
from typing import Tuple, Union

import numpy as np
import pandas as pd

from app.config.constants import DATASET_FILE, LABEL_COLUMN, METADATA_FILE
from app.core.errors import ArtifactMissingError, DataError, SchemaError
from app.models.dataset import Dataset, DatasetSplit, Standardizer
from app.models.sem import SemSpec, nonlinear_sem, toy_sem
from app.schemas.dataset import RelationConstraint
from app.utils.serialization import read_json, write_json

logger = logging.getLogger(__name__)


class DatasetService:
    """Builds datasets from structural equation models and moves them to/from disk."""

    @staticmethod
    def generate(sem: SemSpec, n: int, seed: int) -> Dataset:
        """
        Sample ``n`` records from ``sem`` and split them 8:1:1.

        Args:
            sem: Structural equation model to sample from
            n: Number of records
            seed: Seed for the noise draws and the split permutation

        Returns:
            Standardized dataset carrying the SEM's constraints
        """
        if n <= 0:
            raise DataError(f"Number of samples must be positive, got {n}")
        rng = np.random.default_rng(seed)
        raw, labels = sem.simulate(n, rng)
        split = DatasetSplit.random(n, rng)
        positive_rate = float(labels.mean())
        metadata = {
            "name": sem.name,
            "seed": seed,
            "num_samples": n,
            "positive_rate": positive_rate,
            "notes": dict(sem.notes),
        }
        logger.info(f"Generated {sem.name} dataset: {n} samples, {positive_rate:.1%} in class 1")
        return Dataset.from_raw(raw, labels, sem.feature_names, split, sem.constraints, metadata)

    @classmethod
    def generate_toy(cls, n: int, seed: int) -> Dataset:
        return cls.generate(toy_sem(), n, seed)

    @classmethod
    def generate_nonlinear(cls, n: int, seed: int) -> Dataset:
        return cls.generate(nonlinear_sem(), n, seed)

    @staticmethod
    def save_dataset(dataset: Dataset, directory: Union[str, Path]) -> Tuple[Path, Path]:
        """Write ``dataset.csv`` (features + label) and ``metadata.json``."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        frame = pd.DataFrame(dataset.raw, columns=list(dataset.feature_names))
        frame[LABEL_COLUMN] = dataset.labels
        csv_path = directory / DATASET_FILE
        frame.to_csv(csv_path, index=False, float_format="%.17g", lineterminator="\n")

        metadata = dict(dataset.metadata)
        metadata.update(
            {
                "feature_names": list(dataset.feature_names),
                "split": dataset.split.to_dict(),
                "split_sizes": {
                    "train": int(len(dataset.split.train)),
                    "val": int(len(dataset.split.val)),
                    "test": int(len(dataset.split.test)),
                },
                "standardizer": dataset.standardizer.to_dict(),
                "constraints": [c.model_dump() for c in dataset.constraints],
            }
        )
        meta_path = write_json(directory / METADATA_FILE, metadata)
        logger.info(f"Saved dataset to {csv_path}")
        return csv_path, meta_path

    @staticmethod
    def load_dataset(directory: Union[str, Path], stage: str = "gen-data") -> Dataset:
        directory = Path(directory)
        metadata = read_json(directory / METADATA_FILE, stage)
        csv_path = directory / DATASET_FILE
        if not csv_path.is_file():
            raise ArtifactMissingError(str(csv_path), stage)
        frame = pd.read_csv(csv_path, float_precision="round_trip")

        names = metadata["feature_names"]
        missing = [c for c in names + [LABEL_COLUMN] if c not in frame.columns]
        if missing:
            raise SchemaError(f"Dataset file {csv_path} lacks columns {missing}")

        split = DatasetSplit.from_dict(metadata["split"])
        constraints = [RelationConstraint.model_validate(c) for c in metadata.get("constraints", [])]
        extra = {
            k: v
            for k, v in metadata.items()
            if k not in ("feature_names", "split", "split_sizes", "standardizer", "constraints")
        }
        dataset = Dataset.from_raw(
            frame[names].to_numpy(dtype=np.float64),
            frame[LABEL_COLUMN].to_numpy(dtype=np.int64),
            names,
            split,
            constraints,
            extra,
        )
        stored = metadata.get("standardizer")
        if stored and Standardizer.from_dict(stored).identifier != dataset.standardizer.identifier:
            logger.warning("Stored standardizer differs from the one refitted on the training split")
        return dataset
