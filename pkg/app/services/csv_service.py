"""CSV import service for real tabular datasets (Pima diabetes, Sangiovese exports)."""
import logging
from pathlib import Path
from typing import Optional, Union

import numpy as np
import pandas as pd
from pandas.errors import EmptyDataError

from app.config.constants import MISSING_TOKENS
from app.core.errors import DataError, ParseError, SchemaError
from app.models.dataset import Dataset, DatasetSplit
from app.schemas.dataset import CsvSchema

logger = logging.getLogger(__name__)


class CSVImportService:
    """Service for turning a comma-separated file into a standardized Dataset."""

    def __init__(self, schema: CsvSchema):
        """
        Initialize CSV import service.

        Args:
            schema: Feature/label columns, missing-value coding and constraints
        """
        self.schema = schema

    @staticmethod
    def validate_csv_path(path: Union[str, Path]) -> Optional[str]:
        """
        Validate the input file before parsing.

        Returns:
            Error message if validation fails, None if valid
        """
        path = Path(path)
        if not path.is_file():
            return f"CSV file not found: {path}"
        if path.suffix.lower() != ".csv":
            return f"Expected a .csv file, got {path.name}"
        return None

    def _parse_numeric(self, frame: pd.DataFrame, column: str) -> pd.Series:
        text = frame[column].str.strip()
        missing = text.str.lower().isin(MISSING_TOKENS)
        values = pd.to_numeric(text.where(~missing), errors="coerce")
        bad = values.isna() & ~missing
        if bad.any():
            row = int(bad.idxmax())
            # +2: header line and 1-based numbering
            raise ParseError(f"Column '{column}' row {row + 2}: cannot parse '{frame[column][row]}' as a number")
        return values

    def _parse_labels(self, frame: pd.DataFrame) -> pd.Series:
        column = self.schema.label_column
        text = frame[column].str.strip()
        missing = text.str.lower().isin(MISSING_TOKENS)
        if self.schema.positive_values is not None:
            positives = {v.strip() for v in self.schema.positive_values}
            labels = text.isin(positives).astype(float)
            return labels.where(~missing)
        values = self._parse_numeric(frame, column)
        invalid = values.notna() & ~values.isin([0, 1])
        if invalid.any():
            row = int(invalid.idxmax())
            raise ParseError(f"Label column '{column}' row {row + 2}: expected 0 or 1, got '{frame[column][row]}'")
        return values

    def ingest_csv(self, path: Union[str, Path], loo: bool = False, seed: int = 0) -> Dataset:
        """
        Load, clean and standardize a CSV file.

        Rows with a missing cell (or a zero in a zero-coded-missing column) are
        dropped. Any other non-numeric cell is a parse error.

        Args:
            path: CSV file with a header row
            loo: Mark the dataset for leave-one-out evaluation instead of 8:1:1
            seed: Seed for the 8:1:1 split permutation

        Returns:
            Dataset with the schema's constraints attached
        """
        path = Path(path)
        error = self.validate_csv_path(path)
        if error:
            raise DataError(error)
        try:
            frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
        except EmptyDataError as e:
            raise DataError(f"{path.name} is empty") from e
        frame.columns = [c.strip() for c in frame.columns]

        required = list(self.schema.feature_columns) + [self.schema.label_column]
        missing_columns = [c for c in required if c not in frame.columns]
        if missing_columns:
            raise SchemaError(f"{path.name} lacks columns {missing_columns}")
        if frame.empty:
            raise DataError(f"{path.name} has a header but no records")

        cleaned = pd.DataFrame({c: self._parse_numeric(frame, c) for c in self.schema.feature_columns})
        for column in self.schema.zero_missing_columns:
            if column not in cleaned.columns:
                raise SchemaError(f"Zero-coded column '{column}' is not a feature column")
            cleaned.loc[cleaned[column] == 0, column] = np.nan
        cleaned["__label__"] = self._parse_labels(frame)

        before = len(cleaned)
        cleaned = cleaned.dropna().reset_index(drop=True)
        dropped = before - len(cleaned)
        if cleaned.empty:
            raise DataError(f"{path.name}: no records left after dropping {dropped} with missing values")
        logger.info(f"Ingested {path.name}: kept {len(cleaned)} records, dropped {dropped} with missing values")

        try:
            constraints = self.schema.resolve_constraints()
        except ValueError as e:
            raise SchemaError(str(e)) from e

        n = len(cleaned)
        split = DatasetSplit.leave_one_out(n) if loo else DatasetSplit.random(n, np.random.default_rng(seed))
        metadata = {
            "name": path.stem,
            "source": path.name,
            "seed": seed,
            "num_samples": n,
            "dropped_rows": dropped,
            "leave_one_out": loo,
        }
        return Dataset.from_raw(
            cleaned[self.schema.feature_columns].to_numpy(dtype=np.float64),
            cleaned["__label__"].to_numpy(dtype=np.int64),
            self.schema.feature_columns,
            split,
            constraints,
            metadata,
        )
