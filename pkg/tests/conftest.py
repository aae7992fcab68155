import numpy as np
import pytest

from app.models.dataset import Dataset, DatasetSplit
from app.schemas.dataset import RelationConstraint
from app.schemas.experiment import ClassifierConfig, ExperimentConfig, VaeTrainConfig
from app.services.classifier_service import ClassifierService
from app.services.dataset_service import DatasetService
from app.services.vae_service import VaeService


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def toy_data():
    """Small toy SEM dataset shared by the training tests."""
    return DatasetService.generate_toy(2000, seed=7)


@pytest.fixture
def blob_data():
    """Two well separated Gaussian blobs in 2-D."""
    rng = np.random.default_rng(3)
    negatives = rng.normal([-3.0, -3.0], 0.5, size=(200, 2))
    positives = rng.normal([3.0, 3.0], 0.5, size=(200, 2))
    raw = np.vstack([negatives, positives])
    labels = np.array([0] * 200 + [1] * 200)
    split = DatasetSplit.random(len(labels), np.random.default_rng(4))
    constraint = RelationConstraint(attr_a=0, attr_b=1, sign=1, description="a~b")
    return Dataset.from_raw(raw, labels, ("a", "b"), split, [constraint], {"name": "blobs"})


@pytest.fixture(scope="session")
def toy_classifier(toy_data):
    config = ClassifierConfig(hidden_size=32, epochs=40, patience=10)
    return ClassifierService(config).train_classifier(toy_data, seed=11)


@pytest.fixture(scope="session")
def toy_vae(toy_data):
    config = VaeTrainConfig(epochs=5, max_outer_rounds=4)
    return VaeService(config).train_vae(toy_data, seed=12)


@pytest.fixture
def tiny_experiment(tmp_path):
    """Experiment config small enough to run every CLI stage in seconds."""

    def build(**updates):
        payload = {
            "dataset": {"kind": "toy", "n_samples": 400},
            "seed": 5,
            "classifier": {"hidden_size": 16, "epochs": 15, "patience": 5},
            "vae": {"epochs": 2, "max_outer_rounds": 2},
            "cf": {
                "epochs": 3,
                "grid": {"hidden_sizes": [16], "learning_rates": [1e-3], "batch_sizes": [32, 64]},
            },
            "plain_cf": {"steps": 20},
            "plain_cf_k": {"steps": 20, "k": 3},
            "output_dir": str(tmp_path / "run"),
            "workers": 1,
        }
        for key, value in updates.items():
            payload[key] = value
        return ExperimentConfig.model_validate(payload)

    return build
