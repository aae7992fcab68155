import os

import numpy as np
import pytest

from app.config.constants import PIMA_FEATURES
from app.core.errors import DataError, ParseError, SchemaError
from app.schemas.dataset import CsvSchema, NamedConstraint, pima_schema, sangiovese_schema
from app.services.csv_service import CSVImportService

PIMA_HEADER = "Pregnancies,Glucose,BloodPressure,SkinThickness,Insulin,BMI,DiabetesPedigreeFunction,Age,Outcome"


def write_csv(path, lines):
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


@pytest.fixture
def pima_csv(tmp_path):
    return write_csv(
        tmp_path / "pima.csv",
        [
            PIMA_HEADER,
            "1,89,66,23,94,28.1,0.167,21,0",
            "0,137,40,35,168,43.1,2.288,33,1",
            "3,0,50,32,88,31.0,0.248,26,1",
        ],
    )


def test_validate_csv_path(tmp_path):
    assert CSVImportService.validate_csv_path(tmp_path / "missing.csv") is not None
    other = write_csv(tmp_path / "data.txt", ["a,b"])
    assert "csv" in CSVImportService.validate_csv_path(other)


def test_row_with_missing_glucose_is_dropped(pima_csv):
    data = CSVImportService(pima_schema()).ingest_csv(pima_csv, seed=1)
    assert data.num_samples == 2
    assert data.metadata["dropped_rows"] == 1
    assert list(data.feature_names) == PIMA_FEATURES
    np.testing.assert_array_equal(np.sort(data.labels), [0, 1])
    assert data.constraints[0].key == "BloodPressure~BMI"
    assert data.constraints[0].attr_a == PIMA_FEATURES.index("BloodPressure")


def test_leave_one_out_marker(pima_csv, tmp_path):
    lines = [PIMA_HEADER] + [f"{i},{90 + i},{60 + i},{20 + i},{80 + i},{25.0 + i},0.2,{21 + i},{i % 2}" for i in range(1, 6)]
    path = write_csv(tmp_path / "loo.csv", lines)
    data = CSVImportService(pima_schema()).ingest_csv(path, loo=True)
    assert data.split.loo
    assert len(data.split.train) == 5
    assert len(data.split.test) == 0


def test_header_only_is_data_error(tmp_path):
    path = write_csv(tmp_path / "empty.csv", [PIMA_HEADER])
    with pytest.raises(DataError):
        CSVImportService(pima_schema()).ingest_csv(path)


def test_empty_file_is_data_error(tmp_path):
    path = tmp_path / "blank.csv"
    path.write_text("", encoding="utf-8")
    with pytest.raises(DataError):
        CSVImportService(pima_schema()).ingest_csv(path)


def test_missing_column_is_schema_error(tmp_path):
    path = write_csv(tmp_path / "short.csv", ["Pregnancies,Glucose,Outcome", "1,89,0"])
    with pytest.raises(SchemaError):
        CSVImportService(pima_schema()).ingest_csv(path)


def test_non_numeric_cell_is_parse_error(tmp_path):
    path = write_csv(
        tmp_path / "bad.csv",
        [PIMA_HEADER, "1,89,66,23,94,28.1,0.167,21,0", "2,abc,70,30,90,30.0,0.3,40,1"],
    )
    with pytest.raises(ParseError) as exc_info:
        CSVImportService(pima_schema()).ingest_csv(path)
    assert "Glucose" in str(exc_info.value)


def test_missing_tokens_drop_rows(tmp_path):
    schema = CsvSchema(feature_columns=["x", "y"], label_column="label")
    path = write_csv(tmp_path / "tokens.csv", ["x,y,label", "1,2,0", "NA,3,1", "4,?,1", "5,6,1", "7,9,0"])
    data = CSVImportService(schema).ingest_csv(path)
    assert data.num_samples == 3


def test_positive_values_map_labels(tmp_path):
    schema = sangiovese_schema(["SproutN", "BunchN", "SPAD06", "SPAD08"], "Quality", ["high"])
    lines = ["SproutN,BunchN,SPAD06,SPAD08,Quality"] + [
        f"{10 + i},{20 + 2 * i},{30 + i},{35 + i},{'high' if i % 2 else 'low'}" for i in range(10)
    ]
    data = CSVImportService(schema).ingest_csv(write_csv(tmp_path / "sangiovese.csv", lines))
    assert data.labels.sum() == 5
    assert [c.key for c in data.constraints] == ["SproutN~BunchN", "SPAD06~SPAD08"]


def test_constraint_on_unknown_column_is_schema_error(tmp_path):
    schema = CsvSchema(
        feature_columns=["x", "y"],
        label_column="label",
        constraints=[NamedConstraint(column_a="x", column_b="z")],
    )
    path = write_csv(tmp_path / "c.csv", ["x,y,label", "1,2,0", "3,5,1"])
    with pytest.raises(SchemaError):
        CSVImportService(schema).ingest_csv(path)


@pytest.mark.slow
@pytest.mark.skipif(not os.path.isfile("data/diabetes.csv"), reason="Pima diabetes CSV not available")
def test_pima_ingest_keeps_336_records():
    data = CSVImportService(pima_schema()).ingest_csv("data/diabetes.csv", loo=True)
    assert data.num_samples == 336
    assert data.num_features == 7
