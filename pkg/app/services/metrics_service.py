import logging
from typing import Dict, List, Sequence, Tuple

import numpy as np
from sklearn.metrics import pairwise_distances_chunked

from app.config.constants import CONDITION_THRESHOLD, COVARIANCE_RIDGE, NO_CHANGE_EPSILON
from app.core.errors import DataError, NumericError, SchemaError
from app.core.tensor import condition_estimate
from app.schemas.dataset import RelationConstraint
from app.schemas.results import CounterfactualResult, MetricsReport

logger = logging.getLogger(__name__)


def _pairs(results: Sequence[CounterfactualResult]) -> Tuple[np.ndarray, np.ndarray]:
    if not results:
        raise DataError("No counterfactual results to evaluate")
    originals = np.array([r.original for r in results], dtype=np.float64)
    counterfactuals = np.array([r.counterfactual for r in results], dtype=np.float64)
    return originals, counterfactuals


def harmonic_mean(scores: Sequence[float]) -> float:
    """n / sum(1 / s_i); any zero score makes the mean zero."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size == 0:
        raise DataError("Harmonic mean of no scores")
    if np.any(scores == 0):
        return 0.0
    return float(scores.size / np.sum(1.0 / scores))


class MetricsService:
    """Validity, constraint feasibility, normalized Euclidean and Mahalanobis distances."""

    @staticmethod
    def validity(results: Sequence[CounterfactualResult]) -> float:
        if not results:
            raise DataError("No counterfactual results to evaluate")
        return float(np.mean([r.predicted_cf_label == r.target_label for r in results]))

    @staticmethod
    def preserved(
        results: Sequence[CounterfactualResult], constraint: RelationConstraint, epsilon: float = NO_CHANGE_EPSILON
    ) -> np.ndarray:
        """Boolean mask of results whose changes respect ``constraint``."""
        originals, counterfactuals = _pairs(results)
        num_features = originals.shape[1]
        if constraint.attr_a >= num_features or constraint.attr_b >= num_features:
            raise SchemaError(f"Constraint {constraint.key} indexes beyond {num_features} attributes")
        a0, a1 = originals[:, constraint.attr_a], counterfactuals[:, constraint.attr_a]
        if constraint.transform_a == "square":
            a0, a1 = a0 ** 2, a1 ** 2
        delta_a = a1 - a0
        delta_b = counterfactuals[:, constraint.attr_b] - originals[:, constraint.attr_b]
        delta_a = np.where(np.abs(delta_a) < epsilon, 0.0, delta_a)
        delta_b = np.where(np.abs(delta_b) < epsilon, 0.0, delta_b)
        return constraint.sign * delta_a * delta_b >= 0

    @classmethod
    def constraint_score(
        cls,
        results: Sequence[CounterfactualResult],
        constraints: Sequence[RelationConstraint],
        epsilon: float = NO_CHANGE_EPSILON,
    ) -> Tuple[float, Dict[str, float]]:
        """
        Returns:
            (overall, per-constraint) where overall is the harmonic mean of the
            per-constraint preserved fractions
        """
        if not constraints:
            raise DataError("No relationship constraints declared")
        per_constraint = {c.key: float(np.mean(cls.preserved(results, c, epsilon))) for c in constraints}
        return harmonic_mean(list(per_constraint.values())), per_constraint

    @staticmethod
    def diameter(reference: np.ndarray) -> float:
        """Exact maximum pairwise Euclidean distance, computed in memory-bounded chunks."""
        reference = np.asarray(reference, dtype=np.float64)
        if reference.shape[0] < 2:
            raise DataError(f"Diameter needs at least 2 reference points, got {reference.shape[0]}")
        # minkowski goes through scipy on coordinate differences
        chunks = pairwise_distances_chunked(reference, metric="minkowski", p=2)
        return float(max(chunk.max() for chunk in chunks))

    @classmethod
    def euclidean_normalized(cls, results: Sequence[CounterfactualResult], reference: np.ndarray) -> float:
        originals, counterfactuals = _pairs(results)
        diameter = cls.diameter(reference)
        if diameter == 0:
            raise DataError("Reference points are all identical (zero diameter)")
        return float(np.mean(np.linalg.norm(originals - counterfactuals, axis=1)) / diameter)

    @staticmethod
    def covariance(reference: np.ndarray, ridge: float = COVARIANCE_RIDGE) -> np.ndarray:
        reference = np.asarray(reference, dtype=np.float64)
        n, num_features = reference.shape
        if n <= num_features:
            raise DataError(f"Mahalanobis needs more than {num_features} reference points, got {n}")
        return np.cov(reference, rowvar=False) + ridge * np.eye(num_features)

    @staticmethod
    def mahalanobis_distance(x1: np.ndarray, x2: np.ndarray, covariance: np.ndarray) -> np.ndarray:
        """sqrt((x1 - x2)^T S^-1 (x1 - x2)) row by row."""
        try:
            inverse = np.linalg.inv(covariance)
        except np.linalg.LinAlgError as e:
            raise NumericError("Covariance matrix is singular", condition=float("inf")) from e
        condition = condition_estimate(covariance, inverse)
        if condition > CONDITION_THRESHOLD:
            raise NumericError(f"Covariance condition estimate {condition:.3e} too large", condition=condition)
        diff = np.atleast_2d(np.asarray(x1, dtype=np.float64) - np.asarray(x2, dtype=np.float64))
        squared = np.einsum("ij,jk,ik->i", diff, inverse, diff)
        return np.sqrt(np.maximum(squared, 0.0))

    @classmethod
    def mahalanobis_mean(
        cls, results: Sequence[CounterfactualResult], reference: np.ndarray, ridge: float = COVARIANCE_RIDGE
    ) -> float:
        originals, counterfactuals = _pairs(results)
        covariance = cls.covariance(reference, ridge)
        return float(np.mean(cls.mahalanobis_distance(originals, counterfactuals, covariance)))

    @classmethod
    def evaluate_method(
        cls,
        method_name: str,
        results: List[CounterfactualResult],
        constraints: Sequence[RelationConstraint],
        reference: np.ndarray,
        epsilon: float = NO_CHANGE_EPSILON,
        n_skipped: int = 0,
    ) -> MetricsReport:
        overall, per_constraint = cls.constraint_score(results, constraints, epsilon)
        report = MetricsReport(
            method_name=method_name,
            validity=cls.validity(results),
            constraint_score=overall,
            per_constraint=per_constraint,
            euclidean_mean=cls.euclidean_normalized(results, reference),
            mahalanobis_mean=cls.mahalanobis_mean(results, reference),
            n_evaluated=len(results),
            n_skipped=n_skipped,
        )
        logger.info(
            f"{method_name}: valid={report.validity:.4f}, const={report.constraint_score:.4f}, "
            f"euclid={report.euclidean_mean:.4f}, mahalanobis={report.mahalanobis_mean:.4f}"
        )
        return report
