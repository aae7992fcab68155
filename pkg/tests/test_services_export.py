import numpy as np
import pandas as pd
import pytest

from app.config.constants import COMPARISON_COLUMNS
from app.schemas.dataset import RelationConstraint
from app.schemas.results import CounterfactualResult, MetricsReport
from app.services.export_service import ARROW_COLUMNS, ExportService


def sample_results():
    return [
        CounterfactualResult(
            original=[float(i), 2.0 * i, 1.0],
            counterfactual=[float(i) + 1, 2.0 * i + 1, 1.0],
            original_label=0,
            target_label=1,
            predicted_cf_label=1,
            delta_norm=0.5,
        )
        for i in range(4)
    ]


def test_results_file_has_original_and_counterfactual_columns(tmp_path):
    path = ExportService.write_results(sample_results(), ["a", "b", "c"], tmp_path / "results.csv")
    frame = pd.read_csv(path)
    assert len(frame) == 4
    assert {"original_a", "cf_c", "predicted_cf_label", "delta_norm"} <= set(frame.columns)


def test_comparison_table_column_order(tmp_path):
    report = MetricsReport(
        method_name="Ours",
        validity=0.99731,
        constraint_score=0.93,
        euclidean_mean=0.123456,
        mahalanobis_mean=2.349312,
        n_evaluated=10,
    )
    frame = pd.read_csv(ExportService.write_comparison([report], tmp_path / "comparison.csv"))
    assert list(frame.columns) == COMPARISON_COLUMNS
    assert frame.iloc[0].tolist() == ["Ours", 99.73, 93.0, 0.1235, 2.3493]


def test_arrow_files_per_constraint(tmp_path):
    constraints = [RelationConstraint(attr_a=0, attr_b=1), RelationConstraint(attr_a=1, attr_b=2, sign=-1)]
    paths = ExportService.write_arrows(sample_results(), constraints, ["a", "b", "c"], tmp_path, "Plain-CF")
    assert [p.name for p in paths] == ["arrows_Plain-CF_a_b.csv", "arrows_Plain-CF_b_c.csv"]
    frame = pd.read_csv(paths[0])
    assert list(frame.columns) == ARROW_COLUMNS
    assert len(frame) == 4
    np.testing.assert_array_equal(frame["x_cf_a"] - frame["x_orig_a"], 1.0)

    png = ExportService.plot_arrows(paths[0], names=("a", "b"))
    assert png.suffix == ".png"
    assert png.stat().st_size > 0


def test_projection_covers_every_point():
    reference = np.random.default_rng(0).normal(size=(20, 3))
    frame = ExportService.projection_frame(reference, {"Ours": sample_results()})
    assert len(frame) == 8
    assert set(frame["kind"]) == {"original", "counterfactual"}
    assert {"pc1", "pc2"} <= set(frame.columns)


def test_projection_is_stable_across_calls():
    reference = np.random.default_rng(1).normal(size=(30, 3))
    first = ExportService.projection_frame(reference, {"Ours": sample_results()})
    second = ExportService.projection_frame(reference, {"Ours": sample_results()})
    pd.testing.assert_frame_equal(first, second)


def test_class_correlations_per_label():
    rng = np.random.default_rng(2)
    a = rng.normal(size=40)
    b = np.where(np.arange(40) < 20, 2.0 * a, -a)
    raw = np.column_stack([a, b])
    labels = np.array([0] * 20 + [1] * 20)

    frame = ExportService.class_correlations(raw, labels, ["a", "b"])
    assert list(frame.columns) == ["label", "attribute", "a", "b"]
    assert len(frame) == 4
    by_key = frame.set_index(["label", "attribute"])
    assert by_key.loc[(0, "a"), "b"] == pytest.approx(1.0)
    assert by_key.loc[(1, "a"), "b"] == pytest.approx(-1.0)
    assert by_key.loc[(1, "b"), "b"] == pytest.approx(1.0)


def test_class_scatter_is_written(tmp_path):
    raw = np.random.default_rng(3).normal(size=(30, 3))
    labels = np.array([0, 1] * 15)
    path = ExportService.plot_class_scatter(raw, labels, ["a", "b", "c"], tmp_path / "scatter.png")
    assert path.is_file()
    assert path.stat().st_size > 0
