from typing import Dict, List, Optional

import numpy as np
from pydantic import BaseModel, Field, field_validator


class CounterfactualResult(BaseModel):
    method: str = "Ours"
    original: List[float]
    counterfactual: List[float]
    original_label: int
    target_label: int
    predicted_cf_label: int
    delta_norm: float = Field(0.0, ge=0)
    latent: Optional[List[List[float]]] = None
    latent_cf: Optional[List[List[float]]] = None
    note: Optional[str] = None

    @field_validator("original_label", "target_label", "predicted_cf_label")
    @classmethod
    def binary_label(cls, v):
        if v not in (0, 1):
            raise ValueError(f"Labels must be 0 or 1, got {v}")
        return v

    @property
    def valid(self) -> bool:
        return self.predicted_cf_label == self.target_label

    @property
    def original_array(self) -> np.ndarray:
        return np.asarray(self.original, dtype=np.float64)

    @property
    def counterfactual_array(self) -> np.ndarray:
        return np.asarray(self.counterfactual, dtype=np.float64)


class MetricsReport(BaseModel):
    method_name: str
    validity: float = Field(ge=0, le=1)
    constraint_score: float = Field(ge=0, le=1)
    per_constraint: Dict[str, float] = Field(default_factory=dict)
    euclidean_mean: float = Field(ge=0)
    mahalanobis_mean: float = Field(ge=0)
    n_evaluated: int = Field(gt=0)
    n_skipped: int = Field(0, ge=0)

    @field_validator("per_constraint")
    @classmethod
    def fractions(cls, v):
        for key, score in v.items():
            if not 0.0 <= score <= 1.0:
                raise ValueError(f"Constraint score for {key} outside [0, 1]: {score}")
        return v

    def table_row(self) -> List:
        return [
            self.method_name,
            round(100.0 * self.validity, 2),
            round(100.0 * self.constraint_score, 2),
            round(self.euclidean_mean, 4),
            round(self.mahalanobis_mean, 4),
        ]
