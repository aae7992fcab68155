import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import matplotlib
import numpy as np
import pandas as pd
from sklearn.decomposition import PCA
from sklearn.pipeline import make_pipeline
from sklearn.preprocessing import StandardScaler

from app.config.constants import COMPARISON_COLUMNS, LABEL_COLUMN
from app.schemas.dataset import RelationConstraint
from app.schemas.results import CounterfactualResult, MetricsReport

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
FLOAT_FORMAT = "%.17g"
ARROW_COLUMNS = ["x_orig_a", "x_orig_b", "x_cf_a", "x_cf_b", "label", "target"]


def _write_frame(frame: pd.DataFrame, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n", encoding="utf-8")
    return path


class ExportService:
    @staticmethod
    def results_frame(results: Sequence[CounterfactualResult], feature_names: Sequence[str]) -> pd.DataFrame:
        rows = []
        for r in results:
            row = {f"original_{name}": value for name, value in zip(feature_names, r.original)}
            row.update({f"cf_{name}": value for name, value in zip(feature_names, r.counterfactual)})
            row.update(
                {
                    "original_label": r.original_label,
                    "target_label": r.target_label,
                    "predicted_cf_label": r.predicted_cf_label,
                    "delta_norm": r.delta_norm,
                    "note": r.note or "",
                }
            )
            rows.append(row)
        return pd.DataFrame(rows)

    @classmethod
    def write_results(
        cls, results: Sequence[CounterfactualResult], feature_names: Sequence[str], path: PathLike
    ) -> Path:
        return _write_frame(cls.results_frame(results, feature_names), path)

    @staticmethod
    def write_comparison(reports: Sequence[MetricsReport], path: PathLike) -> Path:
        frame = pd.DataFrame([report.table_row() for report in reports], columns=COMPARISON_COLUMNS)
        return _write_frame(frame, path)

    @staticmethod
    def write_table(rows: List[Dict], path: PathLike) -> Path:
        return _write_frame(pd.DataFrame(rows), path)

    @staticmethod
    def arrow_frame(results: Sequence[CounterfactualResult], constraint: RelationConstraint) -> pd.DataFrame:
        a, b = constraint.attr_a, constraint.attr_b
        return pd.DataFrame(
            {
                "x_orig_a": [r.original[a] for r in results],
                "x_orig_b": [r.original[b] for r in results],
                "x_cf_a": [r.counterfactual[a] for r in results],
                "x_cf_b": [r.counterfactual[b] for r in results],
                "label": [r.original_label for r in results],
                "target": [r.target_label for r in results],
            },
            columns=ARROW_COLUMNS,
        )

    @classmethod
    def write_arrows(
        cls,
        results: Sequence[CounterfactualResult],
        constraints: Sequence[RelationConstraint],
        feature_names: Sequence[str],
        directory: PathLike,
        method: str,
    ) -> List[Path]:
        paths = []
        for c in constraints:
            name = f"arrows_{method}_{feature_names[c.attr_a]}_{feature_names[c.attr_b]}.csv"
            paths.append(_write_frame(cls.arrow_frame(results, c), Path(directory) / name))
        return paths

    @staticmethod
    def projection_frame(
        reference: np.ndarray, results_by_method: Dict[str, Sequence[CounterfactualResult]]
    ) -> pd.DataFrame:
        """
        2-D PCA (fitted on the reference originals) of every original and
        counterfactual, for visual sanity checks.
        """
        reference = np.asarray(reference, dtype=np.float64)
        n_components = min(2, *reference.shape)
        projector = make_pipeline(StandardScaler(), PCA(n_components=n_components, svd_solver="full"))
        projector.fit(reference)

        frames = []
        for method, results in results_by_method.items():
            for kind, attr in (("original", "original"), ("counterfactual", "counterfactual")):
                points = np.array([getattr(r, attr) for r in results], dtype=np.float64)
                projected = projector.transform(points)
                frame = pd.DataFrame(projected, columns=[f"pc{i + 1}" for i in range(projected.shape[1])])
                frame.insert(0, "kind", kind)
                frame.insert(0, "method", method)
                frame["label"] = [r.original_label if kind == "original" else r.predicted_cf_label for r in results]
                frames.append(frame)
        return pd.concat(frames, ignore_index=True)

    @staticmethod
    def write_projection(frame: pd.DataFrame, path: PathLike) -> Path:
        return _write_frame(frame, path)

    @staticmethod
    def plot_arrows(csv_path: PathLike, png_path: Optional[PathLike] = None, names: Sequence[str] = ("a", "b")) -> Path:
        """Render an arrow CSV as original -> counterfactual arrows."""
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        csv_path = Path(csv_path)
        png_path = Path(png_path) if png_path else csv_path.with_suffix(".png")
        frame = pd.read_csv(csv_path)

        plt.figure(figsize=(8, 6))
        colors = np.where(frame["label"] == 1, "tab:red", "tab:blue")
        plt.scatter(frame["x_orig_a"], frame["x_orig_b"], c=colors, s=8, alpha=0.6)
        plt.quiver(
            frame["x_orig_a"],
            frame["x_orig_b"],
            frame["x_cf_a"] - frame["x_orig_a"],
            frame["x_cf_b"] - frame["x_orig_b"],
            angles="xy",
            scale_units="xy",
            scale=1,
            width=0.002,
            alpha=0.5,
        )
        plt.xlabel(names[0])
        plt.ylabel(names[1])
        plt.title(csv_path.stem)
        plt.tight_layout()
        plt.savefig(png_path, format="png")
        plt.close()
        logger.info(f"Saved plot {png_path}")
        return png_path

    @staticmethod
    def class_correlations(raw: np.ndarray, labels: np.ndarray, feature_names: Sequence[str]) -> pd.DataFrame:
        """Pearson correlation of every attribute pair within each class, one row per (class, attribute)."""
        frame = pd.DataFrame(np.asarray(raw, dtype=np.float64), columns=list(feature_names))
        frame[LABEL_COLUMN] = np.asarray(labels, dtype=np.int64)
        correlations = frame.groupby(LABEL_COLUMN).corr()
        correlations.index = correlations.index.set_names([LABEL_COLUMN, "attribute"])
        return correlations.reset_index()

    @staticmethod
    def write_class_correlations(frame: pd.DataFrame, path: PathLike) -> Path:
        return _write_frame(frame, path)

    @staticmethod
    def plot_class_scatter(
        raw: np.ndarray, labels: np.ndarray, feature_names: Sequence[str], png_path: PathLike
    ) -> Path:
        """Pairwise attribute scatter grid coloured by class; each panel is titled with the per-class correlations."""
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        raw = np.asarray(raw, dtype=np.float64)
        labels = np.asarray(labels, dtype=np.int64)
        png_path = Path(png_path)
        png_path.parent.mkdir(parents=True, exist_ok=True)
        num_features = raw.shape[1]
        classes = np.unique(labels)
        colors = {0: "tab:blue", 1: "tab:red"}

        size = 2.2 * num_features
        fig, axes = plt.subplots(num_features, num_features, figsize=(size, size), squeeze=False)
        for i in range(num_features):
            for j in range(num_features):
                ax = axes[i, j]
                if i == j:
                    for label in classes:
                        ax.hist(raw[labels == label, i], bins=20, alpha=0.5, color=colors.get(int(label), "gray"))
                else:
                    titles = []
                    for label in classes:
                        rows = labels == label
                        ax.scatter(raw[rows, j], raw[rows, i], s=4, alpha=0.5, color=colors.get(int(label), "gray"))
                        if rows.sum() > 1:
                            titles.append(f"{label}: {np.corrcoef(raw[rows, j], raw[rows, i])[0, 1]:.2f}")
                    ax.set_title(", ".join(titles), fontsize=7)
                if i == num_features - 1:
                    ax.set_xlabel(feature_names[j], fontsize=8)
                if j == 0:
                    ax.set_ylabel(feature_names[i], fontsize=8)
                ax.tick_params(labelsize=6)
        fig.tight_layout()
        fig.savefig(png_path, format="png")
        plt.close(fig)
        logger.info(f"Saved plot {png_path}")
        return png_path
