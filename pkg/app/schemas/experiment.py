from pathlib import Path
from typing import List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.config.constants import (
    CF_ALPHA_ADV,
    CF_ALPHA_CLASS,
    CF_ALPHA_NEAR,
    CF_BATCH_SIZE,
    CF_CLASS_SCALE_CAP,
    CF_CLASS_SCALE_GROWTH,
    CF_DIS_STEPS,
    CF_EPOCHS,
    CF_GAMMA,
    CF_GRID_BATCH_SIZES,
    CF_GRID_HIDDEN_SIZES,
    CF_GRID_LEARNING_RATES,
    CF_HIDDEN_SIZE,
    CF_HINGE_MARGIN,
    CF_LEARNING_RATE,
    CF_TARGET_VALIDITY,
    CLASSIFIER_ALLOWED_HIDDEN,
    CLASSIFIER_BATCH_SIZE,
    CLASSIFIER_EPOCHS,
    CLASSIFIER_HIDDEN_SYNTHETIC,
    CLASSIFIER_LEARNING_RATE,
    CLASSIFIER_PATIENCE,
    CONDITION_THRESHOLD,
    NO_CHANGE_EPSILON,
    PLAIN_CF_K,
    PLAIN_CF_KNN_WEIGHT,
    PLAIN_CF_LAMBDA,
    PLAIN_CF_LAMBDA_GROWTH,
    PLAIN_CF_LAMBDA_ROUNDS,
    PLAIN_CF_LEARNING_RATE,
    PLAIN_CF_STEPS,
    SYNTHETIC_SAMPLES,
    VAE_ADJACENCY_DAMPING,
    VAE_BATCH_SIZE,
    VAE_EPOCHS_PER_ROUND,
    VAE_H_SHRINK_FACTOR,
    VAE_H_TOLERANCE,
    VAE_HIDDEN_SIZE,
    VAE_INITIAL_LAGRANGE,
    VAE_INITIAL_PENALTY,
    VAE_KL_WEIGHT,
    VAE_LATENT_DIM,
    VAE_LEARNING_RATE,
    VAE_MAX_OUTER_ROUNDS,
    VAE_MIN_OUTER_ROUNDS,
    VAE_MSE_PLATEAU,
    VAE_PENALTY_CAP,
    VAE_PENALTY_GROWTH,
)
from app.core.config import settings
from app.schemas.dataset import CsvSchema, RelationConstraint, pima_schema


class ClassifierConfig(BaseModel):
    hidden_size: int = CLASSIFIER_HIDDEN_SYNTHETIC
    learning_rate: float = Field(CLASSIFIER_LEARNING_RATE, gt=0)
    epochs: int = Field(CLASSIFIER_EPOCHS, gt=0)
    batch_size: int = Field(CLASSIFIER_BATCH_SIZE, gt=0)
    patience: int = Field(CLASSIFIER_PATIENCE, gt=0)
    seed: Optional[int] = None

    @field_validator("hidden_size")
    @classmethod
    def validate_hidden(cls, v):
        if v not in CLASSIFIER_ALLOWED_HIDDEN:
            raise ValueError(f"Classifier hidden size must be one of {CLASSIFIER_ALLOWED_HIDDEN}")
        return v


class VaeTrainConfig(BaseModel):
    epochs: int = Field(VAE_EPOCHS_PER_ROUND, gt=0, description="Epochs per outer round")
    batch_size: int = Field(VAE_BATCH_SIZE, gt=0)
    learning_rate: float = Field(VAE_LEARNING_RATE, gt=0)
    lagrange_multiplier: float = VAE_INITIAL_LAGRANGE
    penalty_weight: float = Field(VAE_INITIAL_PENALTY, gt=0)
    penalty_growth: float = VAE_PENALTY_GROWTH
    penalty_cap: float = Field(VAE_PENALTY_CAP, gt=0)
    h_tolerance: float = VAE_H_TOLERANCE
    shrink_factor: float = Field(VAE_H_SHRINK_FACTOR, gt=0, lt=1)
    max_outer_rounds: int = Field(VAE_MAX_OUTER_ROUNDS, gt=0)
    min_outer_rounds: int = Field(VAE_MIN_OUTER_ROUNDS, gt=0)
    mse_plateau: float = Field(VAE_MSE_PLATEAU, ge=0)
    kl_weight: float = Field(VAE_KL_WEIGHT, gt=0)
    adjacency_damping: float = Field(VAE_ADJACENCY_DAMPING, gt=0, lt=1)
    latent_dim: int = Field(VAE_LATENT_DIM, gt=0)
    hidden_size: int = Field(VAE_HIDDEN_SIZE, gt=0)
    # Defaults to 1 / L when unset
    alpha_acyc: Optional[float] = Field(None, gt=0)
    condition_threshold: float = Field(CONDITION_THRESHOLD, gt=1)

    @field_validator("penalty_growth")
    @classmethod
    def validate_growth(cls, v):
        if v <= 1:
            raise ValueError("penalty_growth must be > 1")
        return v

    @field_validator("h_tolerance")
    @classmethod
    def validate_tolerance(cls, v):
        if v <= 0:
            raise ValueError("h_tolerance must be > 0")
        return v


class CfGridConfig(BaseModel):
    hidden_sizes: List[int] = Field(default_factory=lambda: list(CF_GRID_HIDDEN_SIZES))
    learning_rates: List[float] = Field(default_factory=lambda: list(CF_GRID_LEARNING_RATES))
    batch_sizes: List[int] = Field(default_factory=lambda: list(CF_GRID_BATCH_SIZES))

    @field_validator("hidden_sizes", "learning_rates", "batch_sizes")
    @classmethod
    def non_empty(cls, v):
        if not v:
            raise ValueError("Grid lists must be non-empty")
        if any(x <= 0 for x in v):
            raise ValueError("Grid values must be positive")
        return v


class CfTrainConfig(BaseModel):
    alpha1: float = Field(CF_ALPHA_CLASS, ge=0)
    alpha2: float = Field(CF_ALPHA_NEAR, ge=0)
    alpha3: float = Field(CF_ALPHA_ADV, ge=0)
    beta: float = Field(CF_HINGE_MARGIN, gt=0)
    gamma: float = Field(CF_GAMMA, gt=0)
    epochs: int = Field(CF_EPOCHS, gt=0)
    batch_size: int = Field(CF_BATCH_SIZE, gt=0)
    learning_rate_mod: float = Field(CF_LEARNING_RATE, gt=0)
    learning_rate_dis: float = Field(CF_LEARNING_RATE, gt=0)
    hidden_size: int = Field(CF_HIDDEN_SIZE, gt=0)
    n_dis_steps: int = Field(CF_DIS_STEPS, gt=0)
    class_scale_growth: float = Field(CF_CLASS_SCALE_GROWTH, ge=1)
    class_scale_cap: float = Field(CF_CLASS_SCALE_CAP, ge=1)
    target_validity: float = Field(CF_TARGET_VALIDITY, gt=0, le=1)
    seed: Optional[int] = None
    grid: CfGridConfig = Field(default_factory=CfGridConfig)


class PlainCfConfig(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    lam: float = Field(PLAIN_CF_LAMBDA, ge=0, alias="lambda")
    lambda_growth: float = Field(PLAIN_CF_LAMBDA_GROWTH, gt=1)
    lambda_rounds: int = Field(PLAIN_CF_LAMBDA_ROUNDS, ge=1)
    steps: int = Field(PLAIN_CF_STEPS, gt=0)
    learning_rate: float = Field(PLAIN_CF_LEARNING_RATE, gt=0)
    beta: float = Field(CF_HINGE_MARGIN, gt=0)
    k: int = Field(PLAIN_CF_K, ge=1)
    knn_weight: float = Field(PLAIN_CF_KNN_WEIGHT, ge=0)


class DatasetConfig(BaseModel):
    kind: Literal["toy", "nonlinear", "csv"] = "toy"
    n_samples: int = Field(SYNTHETIC_SAMPLES, gt=0)
    path: Optional[str] = None
    csv_schema: Optional[CsvSchema] = None
    preset: Optional[Literal["pima"]] = None
    loo: bool = False

    @model_validator(mode="after")
    def check_csv(self):
        if self.kind == "csv":
            if not self.path:
                raise ValueError("CSV datasets need a path")
            if not Path(self.path).is_file():
                raise ValueError(f"CSV dataset not found: {self.path}")
            if self.csv_schema is None and self.preset is None:
                raise ValueError("CSV datasets need csv_schema or a preset")
        return self

    def resolved_schema(self) -> Optional[CsvSchema]:
        if self.csv_schema is not None:
            return self.csv_schema
        if self.preset == "pima":
            return pima_schema()
        return None


class ExperimentConfig(BaseModel):
    dataset: DatasetConfig = Field(default_factory=DatasetConfig)
    seed: int = Field(default_factory=lambda: settings.ROOT_SEED)
    classifier: ClassifierConfig = Field(default_factory=ClassifierConfig)
    vae: VaeTrainConfig = Field(default_factory=VaeTrainConfig)
    cf: CfTrainConfig = Field(default_factory=CfTrainConfig)
    plain_cf: PlainCfConfig = Field(default_factory=PlainCfConfig)
    plain_cf_k: PlainCfConfig = Field(default_factory=PlainCfConfig)
    # Replaces the dataset's own constraints when given
    constraints: Optional[List[RelationConstraint]] = None
    metrics_epsilon: float = Field(NO_CHANGE_EPSILON, ge=0)
    output_dir: str = Field(default_factory=lambda: settings.OUTPUT_DIR)
    # Number of leave-one-out folds to run; 0 runs every fold
    loo_folds: int = Field(default_factory=lambda: settings.LOO_FOLDS, ge=0)
    workers: int = Field(default_factory=lambda: settings.WORKERS, ge=1)
