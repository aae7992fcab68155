import numpy as np
import pytest

from app.config.constants import INVALID_NOTE, METHOD_PLAIN_CF, METHOD_PLAIN_CF_K
from app.core.errors import DataError, ShapeError
from app.models.classifier import ClassifierModel
from app.models.dataset import Standardizer
from app.schemas.experiment import ClassifierConfig, PlainCfConfig
from app.services.baseline_service import BaselineService
from app.services.classifier_service import ClassifierService
from app.services.metrics_service import MetricsService


def threshold_classifier():
    """1-D classifier with logits (-x, x) for x > 0 and (|x|, -|x|) otherwise: class 1 iff x > 0."""
    model = ClassifierModel(1, 2, np.random.default_rng(0))
    model.network.load_state_dict(
        {
            "w1": np.array([[1.0, -1.0]]),
            "b1": np.zeros(2),
            "w2": np.array([[-1.0, 1.0], [1.0, -1.0]]),
            "b2": np.zeros(2),
        }
    )
    model.freeze()
    return model


def identity_standardizer(num_features=1):
    return Standardizer(mean=np.zeros(num_features), std=np.ones(num_features))


@pytest.fixture
def blob_classifier(blob_data):
    return ClassifierService(ClassifierConfig(hidden_size=16, epochs=30)).train_classifier(blob_data, seed=0)


def test_one_dimensional_search_matches_brute_force():
    config = PlainCfConfig(lam=10.0, steps=500, learning_rate=0.05, beta=0.1)
    result = BaselineService(threshold_classifier(), identity_standardizer()).plain_cf(np.array([-1.0]), 1, config)

    grid = np.linspace(-2.0, 2.0, 400001)
    p1 = 1.0 / (1.0 + np.exp(-2.0 * grid))
    objective = config.lam * np.maximum((1.0 - p1) - p1, -config.beta) + (grid + 1.0) ** 2
    optimum = grid[np.argmin(objective)]

    x_cf = result.counterfactual[0]
    assert result.valid
    assert result.method == METHOD_PLAIN_CF
    assert x_cf > 0.0
    assert abs(x_cf - (-1.0)) <= 1.5
    assert x_cf == pytest.approx(optimum, abs=0.05)


def test_lambda_is_raised_until_the_query_flips():
    service = BaselineService(threshold_classifier(), identity_standardizer())
    query = np.array([-1.0])
    stuck = service.plain_cf(query, 1, PlainCfConfig(lam=0.1, lambda_rounds=1))
    raised = service.plain_cf(query, 1, PlainCfConfig(lam=0.1, lambda_rounds=3, lambda_growth=10.0))
    direct = service.plain_cf(query, 1, PlainCfConfig(lam=10.0, lambda_rounds=1))

    assert not stuck.valid
    assert stuck.note == INVALID_NOTE
    assert raised.valid
    assert raised.counterfactual[0] == pytest.approx(direct.counterfactual[0])


def test_zero_lambda_keeps_query():
    config = PlainCfConfig(lam=0.0, steps=50)
    result = BaselineService(threshold_classifier(), identity_standardizer()).plain_cf(np.array([-1.0]), 1, config)
    assert result.counterfactual == [-1.0]
    assert result.note == INVALID_NOTE
    assert not result.valid


def test_lambda_alias():
    assert PlainCfConfig.model_validate({"lambda": 3.0}).lam == 3.0


def test_target_count_must_match_queries():
    service = BaselineService(threshold_classifier(), identity_standardizer())
    with pytest.raises(ShapeError):
        service.search(np.zeros((3, 1)), [1, 1])


def test_zero_knn_weight_matches_plain(blob_data, blob_classifier):
    service = BaselineService(blob_classifier, blob_data.standardizer)
    x_raw = blob_data.raw_part("test")[:5]
    targets = 1 - blob_classifier.predict(blob_data.x("test")[:5])
    plain = service.search(x_raw, targets, PlainCfConfig(steps=60))
    knn = service.search(x_raw, targets, PlainCfConfig(steps=60, knn_weight=0.0), train_data=blob_data)
    for a, b in zip(plain, knn):
        assert a.counterfactual == b.counterfactual
        assert b.method == METHOD_PLAIN_CF_K


def test_neighbour_term_pulls_toward_target_cluster(blob_data, blob_classifier):
    service = BaselineService(blob_classifier, blob_data.standardizer)
    query = np.array([-3.0, -3.0])
    plain = service.plain_cf(query, 1, PlainCfConfig(steps=300))
    pulled = service.plain_cf_k(query, 1, blob_data, PlainCfConfig(steps=300, knn_weight=2.0))
    centroid = np.array([3.0, 3.0])
    assert np.linalg.norm(pulled.counterfactual_array - centroid) < np.linalg.norm(plain.counterfactual_array - centroid)


def test_too_few_target_samples(blob_data, blob_classifier):
    service = BaselineService(blob_classifier, blob_data.standardizer)
    with pytest.raises(DataError):
        service.plain_cf_k(np.array([-3.0, -3.0]), 1, blob_data, PlainCfConfig(k=1000))


def test_search_leaves_blackbox_untouched(blob_data, blob_classifier):
    before = [p.data.copy() for p in blob_classifier.parameters()]
    BaselineService(blob_classifier, blob_data.standardizer).search(
        blob_data.raw_part("test"), 1 - blob_classifier.predict(blob_data.x("test")), PlainCfConfig(steps=20)
    )
    for old, param in zip(before, blob_classifier.parameters()):
        np.testing.assert_array_equal(old, param.data)


@pytest.fixture(scope="module")
def toy_baseline_results():
    from app.services.dataset_service import DatasetService

    data = DatasetService.generate_toy(20000, seed=0)
    classifier = ClassifierService(ClassifierConfig(hidden_size=32)).train_classifier(data, seed=0)
    targets = 1 - classifier.predict(data.x("test"))
    service = BaselineService(classifier, data.standardizer)
    plain = service.search(data.raw_part("test"), targets, PlainCfConfig())
    with_neighbours = service.search(data.raw_part("test"), targets, PlainCfConfig(), train_data=data)
    return data, plain, with_neighbours


@pytest.mark.slow
def test_toy_plain_cf_validity(toy_baseline_results):
    _, plain, _ = toy_baseline_results
    assert MetricsService.validity(plain) >= 0.90


@pytest.mark.slow
def test_toy_neighbour_term_keeps_constraints_at_least_as_well(toy_baseline_results):
    data, plain, with_neighbours = toy_baseline_results
    plain_score, _ = MetricsService.constraint_score(plain, data.constraints)
    knn_score, _ = MetricsService.constraint_score(with_neighbours, data.constraints)
    assert knn_score >= plain_score
