import numpy as np
import pytest

from app.core.errors import DataError, ShapeError
from app.models.classifier import ClassifierModel
from app.models.dataset import Dataset, DatasetSplit
from app.schemas.experiment import ClassifierConfig
from app.services.classifier_service import ClassifierService, cross_entropy
from app.services.dataset_service import DatasetService


def zero_model(num_features=3):
    model = ClassifierModel(num_features, 16, np.random.default_rng(0))
    model.network.zero_()
    return model


def test_zero_weight_model_is_uniform():
    model = zero_model()
    np.testing.assert_allclose(model.predict_proba(np.ones(3)).data, [0.5, 0.5])
    # Ties go to label 0
    assert model.predict(np.ones(3)) == 0


def test_predict_batch_shape_and_dimension_check():
    model = ClassifierModel(3, 16, np.random.default_rng(0))
    assert model.predict(np.zeros((7, 3))).shape == (7,)
    with pytest.raises(ShapeError):
        model.predict(np.zeros(4))
    with pytest.raises(ShapeError):
        model.predict(np.zeros((2, 2, 3)))


def test_hidden_size_restricted():
    with pytest.raises(ValueError):
        ClassifierConfig(hidden_size=8)


def test_cross_entropy_of_uniform_logits():
    loss = cross_entropy(np.zeros((4, 2)), np.array([0, 1, 1, 0]))
    assert loss.item() == pytest.approx(np.log(2.0))


def test_separable_blobs_are_classified_perfectly(blob_data):
    model = ClassifierService(ClassifierConfig(hidden_size=16, epochs=30)).train_classifier(blob_data, seed=0)
    assert model.metrics["test_accuracy"] == 1.0
    assert model.frozen
    assert model.standardizer_ref == blob_data.standardizer.identifier


def test_single_class_training_split_is_rejected():
    raw = np.random.default_rng(0).normal(size=(20, 2))
    split = DatasetSplit.random(20, np.random.default_rng(1))
    data = Dataset.from_raw(raw, np.zeros(20, dtype=int), ("a", "b"), split)
    with pytest.raises(DataError):
        ClassifierService().train_classifier(data)


def test_training_is_deterministic(blob_data):
    config = ClassifierConfig(hidden_size=16, epochs=5)
    first = ClassifierService(config).train_classifier(blob_data, seed=3)
    second = ClassifierService(config).train_classifier(blob_data, seed=3)
    for a, b in zip(first.parameters(), second.parameters()):
        np.testing.assert_array_equal(a.data, b.data)


def test_frozen_model_passes_gradient_to_inputs_only(blob_data):
    model = ClassifierService(ClassifierConfig(hidden_size=16, epochs=2)).train_classifier(blob_data, seed=0)
    from app.core import tensor as T
    from app.core.tensor import Tensor

    x = Tensor(np.zeros((1, 2)), requires_grad=True)
    T.sum(model.predict_proba(x)).backward()
    assert x.grad is not None
    assert all(p.grad is None for p in model.parameters())


def test_serialization_restores_predictions(blob_data):
    model = ClassifierService(ClassifierConfig(hidden_size=16, epochs=3)).train_classifier(blob_data, seed=0)
    restored = ClassifierModel.from_dict(model.to_dict())
    x = blob_data.x("test")
    np.testing.assert_array_equal(restored.predict_proba(x).data, model.predict_proba(x).data)
    assert restored.metrics == model.metrics


def test_leave_one_out_monitors_training_accuracy(blob_data):
    loo = Dataset.from_raw(blob_data.raw, blob_data.labels, blob_data.feature_names, DatasetSplit.leave_one_out(400))
    model = ClassifierService(ClassifierConfig(hidden_size=16, epochs=3)).train_classifier(loo.fold(0), seed=0)
    assert model.metrics["val_accuracy"] is None
    assert model.metrics["test_accuracy"] in (0.0, 1.0)


@pytest.mark.slow
@pytest.mark.parametrize("generate", [DatasetService.generate_toy, DatasetService.generate_nonlinear])
def test_synthetic_accuracy(generate):
    data = generate(20000, seed=0)
    model = ClassifierService(ClassifierConfig(hidden_size=32)).train_classifier(data, seed=0)
    assert model.metrics["test_accuracy"] >= 0.95
