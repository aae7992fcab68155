"""
Experiment pipeline behind the CLI.

Every stage reads its inputs from the run directory and writes its outputs
back there, so stages can be rerun independently:

    gen-data -> train -> grid-search / evaluate / explain
    gen-data (loo) -> loo-evaluate
"""
import itertools
import logging
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import pydantic
import sklearn

from app.config.constants import (
    BEST_CONFIG_FILE,
    CLASS_CORRELATIONS_FILE,
    CLASS_SCATTER_FILE,
    CLASSIFIER_FILE,
    COMPARISON_FILE,
    CURVES_DIR,
    DATA_DIR,
    ENGINE_FILE,
    EVAL_DIR,
    EXCLUDED_METHODS_NOTE,
    EXPLAIN_DIR,
    GRID_DIR,
    GRID_REPORT_FILE,
    LOO_DIR,
    MANIFEST_FILE,
    METHOD_OURS,
    METHOD_PLAIN_CF,
    METHOD_PLAIN_CF_K,
    METHODS,
    METRICS_FILE,
    MODELS_DIR,
    PACKAGE_VERSION,
    PROJECTION_FILE,
    VAE_FILE,
)
from app.core.errors import CfError, ConvergenceWarning, DataError, ParseError, SchemaError
from app.models.causal_vae import CausalVae
from app.models.classifier import ClassifierModel
from app.models.dataset import Dataset
from app.schemas.experiment import CfTrainConfig, ExperimentConfig
from app.schemas.results import CounterfactualResult, MetricsReport
from app.services.baseline_service import BaselineService
from app.services.cf_service import CfEngine, CounterfactualService
from app.services.classifier_service import ClassifierService
from app.services.csv_service import CSVImportService
from app.services.dataset_service import DatasetService
from app.services.export_service import ExportService
from app.services.metrics_service import MetricsService
from app.services.vae_service import VaeService
from app.utils.seeds import sub_seed, sub_seeds
from app.utils.serialization import file_sha256, payload_sha256, read_json, write_json

logger = logging.getLogger(__name__)

STAGE_GEN_DATA = "gen-data"
STAGE_TRAIN = "train"

# Fields that change where or how fast a run happens but not what it computes
RUNTIME_FIELDS = {"output_dir", "workers"}


@dataclass(frozen=True)
class RunLayout:
    root: Path

    @property
    def data_dir(self) -> Path:
        return self.root / DATA_DIR

    @property
    def models_dir(self) -> Path:
        return self.root / MODELS_DIR

    @property
    def curves_dir(self) -> Path:
        return self.root / CURVES_DIR

    @property
    def eval_dir(self) -> Path:
        return self.root / EVAL_DIR

    @property
    def grid_dir(self) -> Path:
        return self.root / GRID_DIR

    @property
    def loo_dir(self) -> Path:
        return self.root / LOO_DIR

    @property
    def explain_dir(self) -> Path:
        return self.root / EXPLAIN_DIR

    @property
    def manifest(self) -> Path:
        return self.root / MANIFEST_FILE

    @property
    def classifier(self) -> Path:
        return self.models_dir / CLASSIFIER_FILE

    @property
    def vae(self) -> Path:
        return self.models_dir / VAE_FILE

    @property
    def engine(self) -> Path:
        return self.models_dir / ENGINE_FILE


def capture_convergence_warnings(fn: Callable, *args, **kwargs) -> Tuple[Any, List[str]]:
    """Call ``fn`` and return its result with the ConvergenceWarning messages it raised."""
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", ConvergenceWarning)
        result = fn(*args, **kwargs)
    return result, [str(w.message) for w in caught if issubclass(w.category, ConvergenceWarning)]


def library_versions() -> Dict[str, str]:
    return {
        "causal-cf": PACKAGE_VERSION,
        "numpy": np.__version__,
        "pandas": pd.__version__,
        "pydantic": pydantic.VERSION,
        "scikit-learn": sklearn.__version__,
    }


def _run_grid_cell(payload: Tuple[Dict[str, Any], Tuple[int, float, int]]) -> Dict[str, Any]:
    config, cell = payload
    service = ExperimentService(ExperimentConfig.model_validate(config))
    data = service.load_dataset()
    classifier, vae = service.load_upstream()
    return service.grid_cell(data, classifier, vae, cell)


def _run_fold(payload: Tuple[Dict[str, Any], int]) -> Dict[str, Any]:
    config, fold = payload
    service = ExperimentService(ExperimentConfig.model_validate(config))
    return service.loo_fold(service.load_dataset(), fold)


class ExperimentService:
    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.layout = RunLayout(Path(config.output_dir))
        self.seeds = sub_seeds(config.seed)

    # ------------------------------------------------------------------
    # Provenance
    # ------------------------------------------------------------------

    @property
    def config_hash(self) -> str:
        return payload_sha256(self.config.model_dump(mode="json", exclude=RUNTIME_FIELDS))

    def update_manifest(self, stage: str, entry: Dict[str, Any]) -> Path:
        manifest = read_json(self.layout.manifest) if self.layout.manifest.is_file() else {}
        manifest.update(
            {
                "versions": library_versions(),
                "config_sha256": self.config_hash,
                "root_seed": self.config.seed,
                "seeds": self.seeds,
                "methods": METHODS,
                "excluded_methods": EXCLUDED_METHODS_NOTE,
            }
        )
        stages = manifest.setdefault("stages", {})
        stages[stage] = entry
        manifest["warnings"] = [w for name in sorted(stages) for w in stages[name].get("warnings", [])]
        return write_json(self.layout.manifest, manifest)

    def _hashes(self, *paths: Path) -> Dict[str, str]:
        return {str(p.relative_to(self.layout.root)): file_sha256(p) for p in paths if p.is_file()}

    # ------------------------------------------------------------------
    # Loading
    # ------------------------------------------------------------------

    def build_dataset(self) -> Dataset:
        dataset_config = self.config.dataset
        seed = self.seeds["dataset"]
        if dataset_config.kind == "toy":
            data = DatasetService.generate_toy(dataset_config.n_samples, seed)
        elif dataset_config.kind == "nonlinear":
            data = DatasetService.generate_nonlinear(dataset_config.n_samples, seed)
        else:
            data = CSVImportService(dataset_config.resolved_schema()).ingest_csv(
                dataset_config.path, loo=dataset_config.loo, seed=seed
            )
        if self.config.constraints is not None:
            data = data.with_constraints(self.config.constraints)
        return data

    def load_dataset(self) -> Dataset:
        return DatasetService.load_dataset(self.layout.data_dir, STAGE_GEN_DATA)

    def load_upstream(self) -> Tuple[ClassifierModel, CausalVae]:
        classifier = ClassifierModel.from_dict(read_json(self.layout.classifier, STAGE_TRAIN))
        vae = CausalVae.from_dict(read_json(self.layout.vae, STAGE_TRAIN))
        return classifier, vae

    def load_engine(self) -> CfEngine:
        return CfEngine.from_dict(read_json(self.layout.engine, STAGE_TRAIN))

    # ------------------------------------------------------------------
    # Counterfactual generation for every method
    # ------------------------------------------------------------------

    def generate_all(
        self,
        data: Dataset,
        classifier: ClassifierModel,
        vae: CausalVae,
        engine: CfEngine,
        x_raw: np.ndarray,
    ) -> Dict[str, List[CounterfactualResult]]:
        """Counterfactuals for ``x_raw`` from every method, each query targeting the flipped prediction."""
        targets = 1 - classifier.predict(data.standardizer.transform(x_raw))
        ours = CounterfactualService(vae, classifier, data.standardizer).generate_batch(engine.modulation, x_raw, targets)
        baselines = BaselineService(classifier, data.standardizer)
        return {
            METHOD_OURS: ours,
            METHOD_PLAIN_CF: baselines.search(x_raw, targets, self.config.plain_cf),
            METHOD_PLAIN_CF_K: baselines.search(x_raw, targets, self.config.plain_cf_k, train_data=data),
        }

    def evaluate_all(
        self,
        results_by_method: Dict[str, List[CounterfactualResult]],
        constraints,
        reference: np.ndarray,
        n_skipped: int = 0,
    ) -> List[MetricsReport]:
        return [
            MetricsService.evaluate_method(
                method, results, constraints, reference, self.config.metrics_epsilon, n_skipped
            )
            for method, results in results_by_method.items()
        ]

    # ------------------------------------------------------------------
    # Commands
    # ------------------------------------------------------------------

    def gen_data(self) -> Dataset:
        """
        Build and save the dataset. CSV datasets also get per-class attribute
        correlations and a pairwise scatter grid next to the data file.
        """
        data = self.build_dataset()
        csv_path, meta_path = DatasetService.save_dataset(data, self.layout.data_dir)
        files = [csv_path, meta_path]
        if self.config.dataset.kind == "csv":
            correlations = ExportService.class_correlations(data.raw, data.labels, data.feature_names)
            files.append(
                ExportService.write_class_correlations(correlations, self.layout.data_dir / CLASS_CORRELATIONS_FILE)
            )
            ExportService.plot_class_scatter(
                data.raw, data.labels, data.feature_names, self.layout.data_dir / CLASS_SCATTER_FILE
            )
        self.update_manifest(
            STAGE_GEN_DATA,
            {
                "num_samples": data.num_samples,
                "split_sizes": {part: int(len(data.indices(part))) for part in ("train", "val", "test")},
                "leave_one_out": data.split.loo,
                "files": self._hashes(*files),
            },
        )
        return data

    def train(self) -> Tuple[ClassifierModel, CausalVae, CfEngine]:
        data = self.load_dataset()
        layout = self.layout

        classifier = ClassifierService(self.config.classifier).train_classifier(data, self.seeds["classifier"])
        write_json(layout.classifier, classifier.to_dict())
        ExportService.write_table(classifier.history, layout.curves_dir / "classifier.csv")

        vae, vae_warnings = capture_convergence_warnings(
            VaeService(self.config.vae).train_vae, data, self.seeds["vae"]
        )
        write_json(layout.vae, vae.to_dict())
        ExportService.write_table(vae.history["epochs"], layout.curves_dir / "vae_epochs.csv")
        ExportService.write_table(vae.history["rounds"], layout.curves_dir / "vae_rounds.csv")

        engine = CounterfactualService(vae, classifier, data.standardizer).train_cf(
            data, self.config.cf, self.seeds["cf"]
        )
        engine.upstream = {"classifier": file_sha256(layout.classifier), "vae": file_sha256(layout.vae)}
        write_json(layout.engine, engine.to_dict())
        ExportService.write_table(engine.history, layout.curves_dir / "cf.csv")

        self.update_manifest(
            STAGE_TRAIN,
            {
                "classifier": classifier.metrics,
                "vae": {"final_h": vae.final_h, "converged": vae.converged},
                "files": self._hashes(layout.classifier, layout.vae, layout.engine),
                "warnings": vae_warnings,
            },
        )
        return classifier, vae, engine

    def grid_cell(
        self, data: Dataset, classifier: ClassifierModel, vae: CausalVae, cell: Tuple[int, float, int]
    ) -> Dict[str, Any]:
        hidden_size, learning_rate, batch_size = cell
        config = self.config.cf.model_copy(
            update={
                "hidden_size": hidden_size,
                "learning_rate_mod": learning_rate,
                "learning_rate_dis": learning_rate,
                "batch_size": batch_size,
            }
        )
        engine = CounterfactualService(vae, classifier, data.standardizer).train_cf(data, config, self.seeds["cf"])
        x_val = data.raw_part("val")
        targets = 1 - classifier.predict(data.x("val"))
        results = CounterfactualService(vae, classifier, data.standardizer).generate_batch(
            engine.modulation, x_val, targets
        )
        report = MetricsService.evaluate_method(
            METHOD_OURS, results, data.constraints, x_val, self.config.metrics_epsilon
        )
        return {
            "hidden_size": hidden_size,
            "learning_rate": learning_rate,
            "batch_size": batch_size,
            "validity": report.validity,
            "constraint_score": report.constraint_score,
            "euclidean_mean": report.euclidean_mean,
            "mahalanobis_mean": report.mahalanobis_mean,
            "engine": engine.to_dict(),
        }

    def grid_search(self) -> Tuple[CfTrainConfig, List[Dict[str, Any]]]:
        """
        Train one engine per grid cell, score it on the validation split and keep
        the cell with the best constraint score (then validity, then lower
        Mahalanobis distance).
        """
        data = self.load_dataset()
        if len(data.split.val) == 0:
            raise DataError("Grid search needs a validation split; leave-one-out datasets have none")
        classifier, vae = self.load_upstream()
        grid = self.config.cf.grid
        cells = list(itertools.product(grid.hidden_sizes, grid.learning_rates, grid.batch_sizes))
        logger.info(f"Grid search over {len(cells)} cells with {self.config.workers} worker(s)")

        if self.config.workers > 1:
            payload = self.config.model_dump(mode="json", by_alias=True)
            with ProcessPoolExecutor(max_workers=self.config.workers) as pool:
                rows = list(pool.map(_run_grid_cell, [(payload, cell) for cell in cells]))
        else:
            rows = [self.grid_cell(data, classifier, vae, cell) for cell in cells]

        best = max(rows, key=lambda r: (r["constraint_score"], r["validity"], -r["mahalanobis_mean"]))
        best_config = self.config.cf.model_copy(
            update={
                "hidden_size": best["hidden_size"],
                "learning_rate_mod": best["learning_rate"],
                "learning_rate_dis": best["learning_rate"],
                "batch_size": best["batch_size"],
            }
        )
        report = [{k: v for k, v in row.items() if k != "engine"} for row in rows]
        ExportService.write_table(report, self.layout.grid_dir / GRID_REPORT_FILE)
        write_json(
            self.layout.grid_dir / BEST_CONFIG_FILE,
            {"cf": best_config.model_dump(mode="json"), "metrics": {k: best[k] for k in report[0]}},
        )
        write_json(self.layout.grid_dir / ENGINE_FILE, best["engine"])
        self.update_manifest(
            "grid-search",
            {
                "cells": len(rows),
                "best": {k: best[k] for k in ("hidden_size", "learning_rate", "batch_size")},
                "files": self._hashes(self.layout.grid_dir / GRID_REPORT_FILE, self.layout.grid_dir / ENGINE_FILE),
            },
        )
        return best_config, report

    def evaluate(self, plot: bool = False) -> List[MetricsReport]:
        """Generate counterfactuals for every test record with every method and score them."""
        data = self.load_dataset()
        if data.split.loo:
            raise DataError("Dataset is marked leave-one-out; run 'loo-evaluate' instead")
        classifier, vae = self.load_upstream()
        engine = self.load_engine()
        model_hashes = self._hashes(self.layout.classifier, self.layout.vae, self.layout.engine)

        x_test = data.raw_part("test")
        results = self.generate_all(data, classifier, vae, engine, x_test)
        reports = self.evaluate_all(results, data.constraints, x_test)

        out = self.layout.eval_dir
        for method, method_results in results.items():
            ExportService.write_results(method_results, data.feature_names, out / f"results_{method}.csv")
            arrows = ExportService.write_arrows(method_results, data.constraints, data.feature_names, out, method)
            if plot:
                for path, c in zip(arrows, data.constraints):
                    ExportService.plot_arrows(path, names=(data.feature_names[c.attr_a], data.feature_names[c.attr_b]))
        ExportService.write_comparison(reports, out / COMPARISON_FILE)
        ExportService.write_projection(ExportService.projection_frame(x_test, results), out / PROJECTION_FILE)
        metrics_path = write_json(
            out / METRICS_FILE,
            {"methods": [r.model_dump() for r in reports], "excluded_methods": EXCLUDED_METHODS_NOTE},
        )

        if self._hashes(self.layout.classifier, self.layout.vae, self.layout.engine) != model_hashes:
            raise CfError("Model files changed during evaluation")
        self.update_manifest(
            "evaluate",
            {"models": model_hashes, "files": self._hashes(metrics_path, out / COMPARISON_FILE)},
        )
        return reports

    # ------------------------------------------------------------------
    # Single-record explanation
    # ------------------------------------------------------------------

    @staticmethod
    def parse_record(record: Union[str, Sequence[float]], feature_names: Sequence[str]) -> np.ndarray:
        """Accept a list of numbers, a comma-separated string, or a CSV file whose first row is used."""
        if isinstance(record, str) and record.lower().endswith(".csv") and Path(record).is_file():
            frame = pd.read_csv(record)
            missing = [name for name in feature_names if name not in frame.columns]
            if missing or frame.empty:
                raise SchemaError(f"{record} lacks feature columns {missing}" if missing else f"{record} has no rows")
            values = frame.loc[0, list(feature_names)].to_numpy(dtype=np.float64)
        else:
            if isinstance(record, str):
                record = [part for part in record.replace(";", ",").split(",") if part.strip()]
            try:
                values = np.asarray([float(v) for v in record], dtype=np.float64)
            except ValueError as e:
                raise ParseError(f"Record contains a non-numeric value: {e}") from e
        if values.shape != (len(feature_names),):
            raise SchemaError(f"Record has {values.size} values; the schema has {len(feature_names)} features")
        return values

    def explain(self, record: Union[str, Sequence[float]], target: Optional[int] = None) -> Tuple[CounterfactualResult, str]:
        data = self.load_dataset()
        classifier, vae = self.load_upstream()
        engine = self.load_engine()
        values = self.parse_record(record, data.feature_names)
        current = int(classifier.predict(data.standardizer.transform(values)))
        target = 1 - current if target is None else int(target)
        if target not in (0, 1):
            raise SchemaError(f"Target label must be 0 or 1, got {target}")

        result = CounterfactualService(vae, classifier, data.standardizer).generate(engine.modulation, values, target)
        table = pd.DataFrame(
            {
                "attribute": list(data.feature_names),
                "original": result.original,
                "counterfactual": result.counterfactual,
                "delta": np.asarray(result.counterfactual) - np.asarray(result.original),
            }
        )
        lines = [
            table.to_string(index=False, float_format=lambda v: f"{v:.4f}"),
            f"prediction: {result.original_label} -> {result.predicted_cf_label} (target {target})",
            f"valid: {result.valid}",
        ]
        if result.note:
            lines.append(f"note: {result.note}")
        write_json(
            self.layout.explain_dir / "explanation.json",
            {"feature_names": list(data.feature_names), "result": result.model_dump(), "valid": result.valid},
        )
        return result, "\n".join(lines)

    # ------------------------------------------------------------------
    # Leave-one-out
    # ------------------------------------------------------------------

    def fold_indices(self, num_samples: int, full: bool = False) -> np.ndarray:
        folds = self.config.loo_folds
        if full or folds == 0 or folds >= num_samples:
            return np.arange(num_samples)
        rng = np.random.default_rng(self.seeds["loo"])
        return np.sort(rng.choice(num_samples, size=folds, replace=False))

    def loo_fold(self, data: Dataset, fold: int) -> Dict[str, Any]:
        """Retrain every stage without record ``fold`` and explain that record."""
        root = self.config.seed
        try:
            fold_data = data.fold(fold)
            classifier = ClassifierService(self.config.classifier).train_classifier(
                fold_data, sub_seed(root, f"classifier/{fold}")
            )
            vae, fold_warnings = capture_convergence_warnings(
                VaeService(self.config.vae).train_vae, fold_data, sub_seed(root, f"vae/{fold}")
            )
            engine = CounterfactualService(vae, classifier, fold_data.standardizer).train_cf(
                fold_data, self.config.cf, sub_seed(root, f"cf/{fold}")
            )
            results = self.generate_all(fold_data, classifier, vae, engine, fold_data.raw_part("test"))
        except (CfError, ArithmeticError, ValueError) as e:
            logger.exception(f"Leave-one-out fold {fold} failed")
            return {"fold": int(fold), "status": "failed", "error": str(e), "results": {}, "warnings": []}
        return {
            "fold": int(fold),
            "status": "ok",
            "error": "",
            "results": {method: [r.model_dump() for r in rs] for method, rs in results.items()},
            "warnings": [f"fold {fold}: {w}" for w in fold_warnings],
        }

    def loo_evaluate(self, full: bool = False) -> List[MetricsReport]:
        data = self.load_dataset()
        if not data.split.loo:
            raise DataError("Dataset is not marked leave-one-out; set dataset.loo and rerun 'gen-data'")
        folds = self.fold_indices(data.num_samples, full)
        logger.info(f"Leave-one-out over {len(folds)} of {data.num_samples} folds")

        if self.config.workers > 1:
            payload = self.config.model_dump(mode="json", by_alias=True)
            with ProcessPoolExecutor(max_workers=self.config.workers) as pool:
                outcomes = list(pool.map(_run_fold, [(payload, int(i)) for i in folds]))
        else:
            outcomes = [self.loo_fold(data, int(i)) for i in folds]

        skipped = [o for o in outcomes if o["status"] != "ok"]
        for o in skipped:
            logger.warning(f"Skipped fold {o['fold']}: {o['error']}")
        completed = [o for o in outcomes if o["status"] == "ok"]
        if not completed:
            raise DataError(f"All {len(outcomes)} leave-one-out folds failed")

        results = {
            method: [CounterfactualResult.model_validate(r) for o in completed for r in o["results"][method]]
            for method in METHODS
        }
        reports = self.evaluate_all(results, data.constraints, data.raw, n_skipped=len(skipped))

        out = self.layout.loo_dir
        for method, method_results in results.items():
            ExportService.write_results(method_results, data.feature_names, out / f"results_{method}.csv")
        ExportService.write_table(
            [{"fold": o["fold"], "status": o["status"], "error": o["error"]} for o in outcomes], out / "folds.csv"
        )
        ExportService.write_comparison(reports, out / COMPARISON_FILE)
        metrics_path = write_json(
            out / METRICS_FILE,
            {
                "methods": [r.model_dump() for r in reports],
                "folds": len(folds),
                "skipped": len(skipped),
                "excluded_methods": EXCLUDED_METHODS_NOTE,
            },
        )
        self.update_manifest(
            "loo-evaluate",
            {
                "folds": [int(i) for i in folds],
                "skipped": len(skipped),
                "files": self._hashes(metrics_path),
                "warnings": [w for o in outcomes for w in o["warnings"]],
            },
        )
        return reports
