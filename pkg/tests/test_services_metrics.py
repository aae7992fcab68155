import itertools

import numpy as np
import pytest

from app.core.errors import DataError, NumericError, SchemaError
from app.schemas.dataset import RelationConstraint
from app.schemas.results import CounterfactualResult
from app.services.metrics_service import MetricsService, harmonic_mean


def make_result(original, counterfactual, target=1, predicted=1):
    return CounterfactualResult(
        original=list(original),
        counterfactual=list(counterfactual),
        original_label=1 - target,
        target_label=target,
        predicted_cf_label=predicted,
    )


POSITIVE = RelationConstraint(attr_a=0, attr_b=1, sign=1)


def test_validity_counts_correct_labels():
    results = [make_result([0, 0], [1, 1], predicted=p) for p in (1, 1, 0, 1)]
    assert MetricsService.validity(results) == 0.75
    assert MetricsService.validity(results[:2]) == 1.0


def test_validity_of_nothing_is_data_error():
    with pytest.raises(DataError):
        MetricsService.validity([])


@pytest.mark.parametrize(
    "delta_a, delta_b, preserved",
    [(1.0, 1.0, True), (-1.0, -1.0, True), (1.0, -1.0, False), (-1.0, 1.0, False)],
)
def test_positive_relation_sign_table(delta_a, delta_b, preserved):
    result = make_result([0.0, 0.0], [delta_a, delta_b])
    assert MetricsService.preserved([result], POSITIVE)[0] == preserved


def test_negative_relation_accepts_opposite_moves():
    constraint = RelationConstraint(attr_a=0, attr_b=1, sign=-1)
    assert MetricsService.preserved([make_result([0.0, 0.0], [1.0, -2.0])], constraint)[0]


def test_zero_change_never_violates():
    results = [make_result([1.0, 1.0], [1.0 + 1e-9, 5.0]), make_result([1.0, 1.0], [-3.0, 1.0])]
    assert MetricsService.preserved(results, POSITIVE).all()


def test_constraint_index_beyond_width_is_schema_error():
    with pytest.raises(SchemaError):
        MetricsService.preserved([make_result([0.0, 0.0], [1.0, 1.0])], RelationConstraint(attr_a=0, attr_b=2))


def test_constraint_score_combines_by_harmonic_mean():
    second = RelationConstraint(attr_a=1, attr_b=2, sign=1, description="b~c")
    results = [
        make_result([0, 0, 0], [1, 1, 1]),
        make_result([0, 0, 0], [1, 1, -1]),
    ]
    overall, per_constraint = MetricsService.constraint_score(results, [POSITIVE, second])
    assert per_constraint == {"0~1": 1.0, "b~c": 0.5}
    assert overall == pytest.approx(2 * 0.5 / 1.5)


def test_constraint_score_requires_constraints():
    with pytest.raises(DataError):
        MetricsService.constraint_score([make_result([0, 0], [1, 1])], [])


def test_harmonic_mean_examples():
    assert harmonic_mean([0.9, 0.9]) == pytest.approx(0.9)
    assert harmonic_mean([1.0, 0.5]) == pytest.approx(2 * 1.0 * 0.5 / 1.5, abs=1e-10)
    assert harmonic_mean([0.8, 0.0, 1.0]) == 0.0
    assert harmonic_mean([0.5, 0.25, 1.0]) == pytest.approx(3 / (2 + 4 + 1))


def test_harmonic_mean_never_exceeds_arithmetic(rng):
    for _ in range(50):
        scores = rng.uniform(0.01, 1.0, size=rng.integers(2, 5))
        assert harmonic_mean(scores) <= np.mean(scores) + 1e-12


def test_diameter_matches_brute_force(rng):
    for _ in range(5):
        points = rng.normal(size=(50, 3))
        expected = max(np.linalg.norm(p - q) for p, q in itertools.combinations(points, 2))
        assert MetricsService.diameter(points) == pytest.approx(expected, abs=1e-10)


def test_diameter_needs_two_points():
    with pytest.raises(DataError):
        MetricsService.diameter(np.zeros((1, 2)))


def test_euclidean_normalized_example():
    reference = np.array([[0.0, 0.0], [6.0, 8.0]])
    results = [make_result([0.0, 0.0], [3.0, 4.0])]
    assert MetricsService.euclidean_normalized(results, reference) == pytest.approx(0.5)
    unchanged = [make_result([1.0, 2.0], [1.0, 2.0])]
    assert MetricsService.euclidean_normalized(unchanged, reference) == 0.0


def test_identical_reference_points_rejected():
    with pytest.raises(DataError):
        MetricsService.euclidean_normalized([make_result([0, 0], [1, 1])], np.ones((4, 2)))


def test_mahalanobis_diagonal_example():
    distance = MetricsService.mahalanobis_distance(np.array([2.0, 0.0]), np.zeros(2), np.diag([4.0, 1.0]))
    assert distance[0] == pytest.approx(1.0)


def test_mahalanobis_identity_covariance_is_euclidean(rng):
    x1, x2 = rng.normal(size=(10, 4)), rng.normal(size=(10, 4))
    np.testing.assert_allclose(
        MetricsService.mahalanobis_distance(x1, x2, np.eye(4)), np.linalg.norm(x1 - x2, axis=1), atol=1e-10
    )


def test_mahalanobis_of_unchanged_records_is_zero(rng):
    reference = rng.normal(size=(30, 3))
    results = [make_result(row, row) for row in reference[:5]]
    assert MetricsService.mahalanobis_mean(results, reference) == 0.0


def test_covariance_needs_more_points_than_features():
    with pytest.raises(DataError):
        MetricsService.covariance(np.zeros((3, 3)))


def test_singular_covariance_is_numeric_error():
    with pytest.raises(NumericError):
        MetricsService.mahalanobis_distance(np.ones(2), np.zeros(2), np.array([[1.0, 1.0], [1.0, 1.0]]))


def test_metrics_ignore_result_order(rng):
    reference = rng.normal(size=(40, 2))
    results = [make_result(row, row + rng.normal(size=2), predicted=int(i % 3 == 0)) for i, row in enumerate(reference[:12])]
    forward = MetricsService.evaluate_method("Ours", results, [POSITIVE], reference)
    backward = MetricsService.evaluate_method("Ours", results[::-1], [POSITIVE], reference)
    assert forward.validity == backward.validity
    assert forward.constraint_score == backward.constraint_score
    assert forward.euclidean_mean == pytest.approx(backward.euclidean_mean, abs=1e-12)
    assert forward.mahalanobis_mean == pytest.approx(backward.mahalanobis_mean, abs=1e-12)
    assert forward.n_evaluated == 12
    assert forward.table_row()[0] == "Ours"
