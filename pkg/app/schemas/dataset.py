from typing import List, Literal, Optional

from pydantic import BaseModel, Field, field_validator, model_validator

from app.config.constants import PIMA_FEATURES, PIMA_LABEL, PIMA_ZERO_MISSING


class RelationConstraint(BaseModel):
    """Declared monotone relationship between two attributes."""

    attr_a: int = Field(ge=0)
    attr_b: int = Field(ge=0)
    sign: Literal[1, -1] = 1
    description: str = ""
    # "square" scores the co-movement of attr_a**2 instead of attr_a
    transform_a: Literal["identity", "square"] = "identity"

    @model_validator(mode="after")
    def check_distinct(self):
        if self.attr_a == self.attr_b:
            raise ValueError(f"Constraint relates attribute {self.attr_a} to itself")
        return self

    @property
    def key(self) -> str:
        return self.description or f"{self.attr_a}~{self.attr_b}"


class NamedConstraint(BaseModel):
    """Constraint declared by column names, resolved against a CSV schema."""

    column_a: str
    column_b: str
    sign: Literal[1, -1] = 1
    description: str = ""


class CsvSchema(BaseModel):
    feature_columns: List[str] = Field(min_length=1)
    label_column: str
    # Label values counted as class 1; when unset the column must hold 0/1
    positive_values: Optional[List[str]] = None
    zero_missing_columns: List[str] = Field(default_factory=list)
    constraints: List[NamedConstraint] = Field(default_factory=list)
    missing_policy: Literal["drop_row"] = "drop_row"

    @field_validator("feature_columns")
    @classmethod
    def unique_features(cls, v):
        if len(set(v)) != len(v):
            raise ValueError("Feature columns must be unique")
        return v

    def resolve_constraints(self) -> List[RelationConstraint]:
        resolved = []
        for c in self.constraints:
            for column in (c.column_a, c.column_b):
                if column not in self.feature_columns:
                    raise ValueError(f"Constraint column '{column}' is not a feature column")
            resolved.append(
                RelationConstraint(
                    attr_a=self.feature_columns.index(c.column_a),
                    attr_b=self.feature_columns.index(c.column_b),
                    sign=c.sign,
                    description=c.description or f"{c.column_a}~{c.column_b}",
                )
            )
        return resolved


def pima_schema() -> CsvSchema:
    """Pima Indians diabetes: 7 attributes, zeros in clinical columns mean missing."""
    return CsvSchema(
        feature_columns=list(PIMA_FEATURES),
        label_column=PIMA_LABEL,
        zero_missing_columns=list(PIMA_ZERO_MISSING),
        constraints=[
            NamedConstraint(
                column_a="BloodPressure",
                column_b="BMI",
                sign=1,
                description="BloodPressure~BMI",
            )
        ],
    )


def sangiovese_schema(feature_columns: List[str], label_column: str, positive_values: List[str]) -> CsvSchema:
    """Schema for a Sangiovese network export with its two monotone pairs."""
    return CsvSchema(
        feature_columns=feature_columns,
        label_column=label_column,
        positive_values=positive_values,
        constraints=[
            NamedConstraint(column_a="SproutN", column_b="BunchN", sign=1, description="SproutN~BunchN"),
            NamedConstraint(column_a="SPAD06", column_b="SPAD08", sign=1, description="SPAD06~SPAD08"),
        ],
    )
