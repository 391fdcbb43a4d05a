"""Orchestrates the experiment stages: data, supernet training, search, ELS removal, ranking and diagnostics.

Every stage reads what it needs from the resolved config and the run's output
directory, writes its artifacts there and finishes with a manifest under
`manifests/<command>.json`, also when the stage fails.
"""

import json
import logging
import os
import platform
from datetime import datetime
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
import pydantic
import scipy

import scarlet_kit
from scarlet_kit.config import DEFAULT_WORKERS, OUTPUT_DIR, SHOW_PROGRESS
from scarlet_kit.data.dataset import DatasetSplits, build_splits, save_dataset, write_dataset_csv
from scarlet_kit.diagnostics.instability import accuracy_spread, instability_report, write_histogram_csv
from scarlet_kit.diagnostics.similarity import layer_similarity, write_similarity_csv
from scarlet_kit.els.folding import strip_stabilizers, verify_equivalence
from scarlet_kit.engine.checkpoint import save_checkpoint
from scarlet_kit.engine.tensor import Rng
from scarlet_kit.errors import ConfigError, InputError
from scarlet_kit.evolution.search import evolve, write_search_outputs
from scarlet_kit.experiment import ExperimentConfig
from scarlet_kit.oracle.ground_truth import GroundTruthTable, ground_truth, ranking_experiment, train_standalone
from scarlet_kit.search_space.costs import count_madds, stripped_param_count
from scarlet_kit.search_space.spec import Architecture, SpaceSpec, parse_architecture, validate_architecture
from scarlet_kit.search_space.supernet import Supernet, build_supernet
from scarlet_kit.training.trainer import OneShotEvaluator, TrainLog, accuracy_histogram, train_supernet

logger = logging.getLogger(__name__)

COMMANDS = ("gen-data", "train", "search", "fold", "rank-eval", "diagnose")


def runtime_versions() -> Dict[str, str]:
    return {
        "python": platform.python_version(),
        "numpy": np.__version__,
        "pandas": pd.__version__,
        "pydantic": pydantic.VERSION,
        "scipy": scipy.__version__,
        "scarlet_kit": scarlet_kit.__version__,
    }


def write_json(path: Path, data) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=2)
    return path


def arch_slug(arch: Architecture) -> str:
    return "-".join(str(g) for g in arch.genes)


class ExperimentPipeline:
    """One experiment run rooted at `output_dir`."""

    def __init__(self, config: ExperimentConfig, output_dir=None, workers: int = DEFAULT_WORKERS,
                 argv: Optional[Sequence[str]] = None, checkpoint=None, progress: bool = SHOW_PROGRESS):
        if workers < 1:
            raise ConfigError(f"workers must be >= 1, got {workers}")
        self.output_dir = Path(output_dir or config.output_dir or OUTPUT_DIR)
        self.config = config.with_overrides(output_dir=self.output_dir)
        self.workers = workers
        self.argv = list(argv or [])
        self.progress = progress
        self.checkpoint_path = Path(checkpoint) if checkpoint else self.output_dir / "supernet.scnt"
        self.base_spec = self.config.load_space()
        self._splits: Optional[DatasetSplits] = None
        self.output_dir.mkdir(parents=True, exist_ok=True)

    @property
    def spec(self) -> SpaceSpec:
        """The space the supernet is trained on: skips become stabilizers when ELS is enabled."""
        if self.config.train.els_enabled and not self.base_spec.has_stabilizers():
            return self.base_spec.with_stabilizers()
        return self.base_spec

    @property
    def splits(self) -> DatasetSplits:
        if self._splits is None:
            self._splits = build_splits(self.config.dataset)
        return self._splits

    def load_supernet(self) -> Supernet:
        if not self.checkpoint_path.exists():
            raise FileNotFoundError(f"Supernet checkpoint not found: {self.checkpoint_path} (run `train` first)")
        return Supernet.load(self.checkpoint_path, self.spec, self.config.train.stabilizer_activation)

    # ------------------------------------------------------------------ stages

    def gen_data(self, csv: bool = False) -> Dict[str, Path]:
        """Persist the train/val/test splits and their class histograms."""
        logger.info("🚀 Generating dataset splits...")
        data_dir = self.output_dir / "data"
        artifacts: Dict[str, Path] = {}
        rows = []
        for name in ("train", "val", "test"):
            part = getattr(self.splits, name)
            artifacts[name] = save_dataset(part, data_dir / f"{name}.scnt")
            if csv:
                artifacts[f"{name}_csv"] = write_dataset_csv(part, data_dir / f"{name}.csv")
            rows.append({
                "split": name,
                "samples": len(part),
                **{f"class_{c}": int(n) for c, n in enumerate(part.class_histogram())},
            })
        artifacts["splits"] = data_dir / "splits.csv"
        pd.DataFrame(rows).to_csv(artifacts["splits"], index=False)
        logger.info(f"✅ Dataset written to {data_dir}")
        return artifacts

    def train(self) -> Dict[str, Path]:
        cfg = self.config.train
        supernet = build_supernet(self.spec, cfg.seed, **cfg.stabilizer_options())
        log = train_supernet(supernet, self.splits.train, cfg, val=self.splits.val, progress=self.progress)
        counts = pd.DataFrame(
            [
                {"layer": l, "choice": label, "updates": int(supernet.update_counts[l, c])}
                for l in range(self.spec.num_layers)
                for c, label in enumerate(self.spec.labels(l))
            ]
        )
        artifacts = {
            "checkpoint": supernet.save(self.checkpoint_path),
            "train_log": log.write_csv(self.output_dir / "train_log.csv"),
            "train_epochs": self.output_dir / "train_epochs.csv",
            "update_counts": self.output_dir / "update_counts.csv",
        }
        log.epoch_stats().to_csv(artifacts["train_epochs"], index=False)
        counts.to_csv(artifacts["update_counts"], index=False)
        artifacts["summary"] = write_json(self.output_dir / "train_summary.json", log.summary())
        logger.info(f"✅ Supernet trained: {len(log.steps)} steps, checkpoint at {self.checkpoint_path}")
        return artifacts

    def search(self) -> Dict[str, Path]:
        supernet = self.load_supernet()
        cfg = self.config.search
        result = evolve(supernet, self.spec, self.splits.val, cfg, workers=self.workers, progress=self.progress)
        artifacts = write_search_outputs(result, self.output_dir / "search", cfg.select_k)
        best = result.archive.best
        artifacts["summary"] = write_json(self.output_dir / "search" / "search_summary.json", {
            "madds_max": result.madds_max,
            "acc_min": cfg.acc_min,
            "final_front": len(result.front),
            "archive": len(result.archive.members),
            "evaluations": sum(1 for event in result.audit if event["event"] == "evaluate"),
            "best": None if best is None else {
                "genes": str(best.arch), "acc": best.objectives.acc,
                "madds": best.objectives.madds, "params": best.objectives.params,
            },
        })
        return artifacts

    def _selected_arch(self, arch_text: Optional[str]) -> Architecture:
        if arch_text:
            return validate_architecture(self.spec, parse_architecture(arch_text))
        selected = self.output_dir / "search" / "selected_archs.txt"
        if not selected.exists():
            raise InputError("no architecture given: pass --arch or run `search` first")
        lines = [line for line in selected.read_text(encoding="utf-8").splitlines() if line.strip()]
        if not lines:
            raise InputError(f"{selected} lists no architectures")
        logger.info(f"📋 Using the first selected architecture from {selected}: {lines[0]}")
        return validate_architecture(self.spec, parse_architecture(lines[0]))

    def fold(self, arch: Optional[str] = None, train_standalone_net: bool = False) -> Dict[str, Path]:
        """Remove stabilizers from one architecture and check the result against the supernet path."""
        target = self._selected_arch(arch)
        supernet = self.load_supernet()
        cfg = self.config.fold
        stripped = strip_stabilizers(target, supernet)
        report = verify_equivalence(
            supernet.path(target), stripped, cfg.probes, cfg.tolerance, Rng(cfg.seed).spawn(8), cfg.batch_size
        )
        if report.passed:
            logger.info(f"✅ {target}: folded network matches the supernet path (max diff {report.max_abs_output_diff:.2e})")
        else:
            logger.warning(
                f"⚠️ {target}: folded network deviates by {report.max_abs_output_diff:.2e} "
                f"(> {cfg.tolerance}) on {report.probes_exceeding}/{report.probes} probes"
            )
        expected_params = stripped_param_count(self.spec, target)
        if stripped.param_count() != expected_params:
            raise InputError(f"stripped {target} holds {stripped.param_count()} parameters, expected {expected_params}")

        fold_dir = self.output_dir / "fold"
        summary = {
            "genes": str(target),
            "params": expected_params,
            "madds": count_madds(self.spec, target, folded=True),
            "path_madds": count_madds(self.spec, target),
            **report.to_dict(),
        }
        if train_standalone_net:
            result = train_standalone(self.spec, target, self.splits, self.config.oracle)
            summary.update(standalone_test_acc=result.test_accuracy, standalone_train_acc=result.train_accuracy)
        return {
            "checkpoint": save_checkpoint(fold_dir / f"stripped_{arch_slug(target)}.scnt", stripped.state_dict()),
            "report": write_json(fold_dir / f"fold_report_{arch_slug(target)}.json", summary),
        }

    def rank_eval(self, table: Optional[str] = None) -> Dict[str, Path]:
        """Kendall tau of one-shot accuracies against a standalone ground-truth table."""
        cfg = self.config.oracle
        rank_dir = self.output_dir / "rank"
        artifacts: Dict[str, Path] = {}
        if table:
            truth = GroundTruthTable.load_csv(table, self.spec.name)
            logger.info(f"📂 Loaded ground truth for {len(truth)} architectures from {table}")
        else:
            truth = ground_truth(self.spec, self.splits, cfg, self.workers, self.progress)
            artifacts["ground_truth"] = truth.save_csv(rank_dir / "ground_truth.csv")
        evaluator = OneShotEvaluator(self.load_supernet(), self.splits.val)
        result = ranking_experiment(evaluator, truth, cfg.ranking_sample, Rng(cfg.seed).spawn(5), gap=cfg.pair_gap)
        artifacts["scatter"] = result.write_csv(rank_dir / "ranking_scatter.csv")
        artifacts["summary"] = write_json(rank_dir / "ranking.json", {
            "tau": result.tau,
            "architectures": len(result.scatter),
            "pair_gap": cfg.pair_gap,
            "pairs_correct": result.pairs.correct,
            "pairs_total": result.pairs.total,
            "pair_fraction": result.pairs.fraction,
        })
        return artifacts

    def diagnose(self, baseline: Optional[str] = None) -> Dict[str, Path]:
        """Feature similarity per layer, the one-shot accuracy histogram and, with a baseline run, instability."""
        cfg = self.config.diagnose
        spec = self.spec
        layers: List[int] = list(range(spec.num_layers)) if cfg.layers is None else list(cfg.layers)
        bad = [l for l in layers if not 0 <= l < spec.num_layers]
        if bad:
            raise ConfigError(f"diagnose.layers {bad} outside [0, {spec.num_layers})")
        supernet = self.load_supernet()
        val = self.splits.val
        diag_dir = self.output_dir / "diagnostics"
        artifacts: Dict[str, Path] = {}

        probe = val.images[:cfg.probe_size]
        rows = []
        for layer in layers:
            matrix = layer_similarity(supernet, layer, probe)
            artifacts[f"similarity_{layer}"] = write_similarity_csv(matrix, diag_dir / f"similarity_layer{layer}.csv")
            rows.extend(
                {"layer": layer, "choice": label, "row_mean": float(mean)}
                for label, mean in zip(matrix.labels, matrix.row_means)
            )
        artifacts["row_means"] = diag_dir / "similarity_row_means.csv"
        pd.DataFrame(rows, columns=["layer", "choice", "row_mean"]).to_csv(
            artifacts["row_means"], index=False, float_format="%.6f"
        )

        histogram = accuracy_histogram(supernet, val, cfg.histogram_samples, Rng(cfg.seed).spawn(6))
        artifacts["histogram"] = write_histogram_csv(histogram, diag_dir / "accuracy_histogram.csv")
        spread = accuracy_spread(histogram.accuracies)
        summary = {"samples": cfg.histogram_samples, "acc_mean": spread.mean, "acc_std": spread.std,
                   "mass_below_0.3": spread.mass_below}

        if baseline:
            log_a = TrainLog.read_csv(Path(baseline) / "train_log.csv", "baseline")
            log_b = TrainLog.read_csv(self.output_dir / "train_log.csv", self.config.train.strategy)
            report = instability_report(log_a, log_b)
            artifacts["instability"] = diag_dir / "instability.csv"
            report.per_epoch.to_csv(artifacts["instability"], index=False)
            summary["instability"] = report.summary()
        artifacts["summary"] = write_json(diag_dir / "diagnose_summary.json", summary)
        logger.info(f"📊 One-shot accuracy over {cfg.histogram_samples} paths: mean {spread.mean:.4f}, std {spread.std:.4f}")
        return artifacts

    # ------------------------------------------------------------------ orchestration

    def write_manifest(self, command: str, artifacts: Dict[str, Path], error: Optional[str] = None) -> Path:
        manifest = {
            "command": command,
            "status": "ok" if error is None else "failed",
            "error": error,
            "argv": self.argv,
            "created_at": datetime.now().isoformat(timespec="seconds"),
            "config_hash": self.config.config_hash(),
            "seeds": self.config.seeds(),
            "versions": runtime_versions(),
            "workers": self.workers,
            "artifacts": {key: os.path.relpath(path, self.output_dir) for key, path in sorted(artifacts.items())},
            "config": self.config.model_dump(mode="json"),
        }
        return write_json(self.output_dir / "manifests" / f"{command}.json", manifest)

    def run(self, command: str, **options) -> Dict[str, Path]:
        stages = {
            "gen-data": self.gen_data,
            "train": self.train,
            "search": self.search,
            "fold": self.fold,
            "rank-eval": self.rank_eval,
            "diagnose": self.diagnose,
        }
        if command not in stages:
            raise InputError(f"unknown command {command!r}, expected one of {COMMANDS}")
        logger.info(f"🚀 {command}: output under {self.output_dir} (config {self.config.config_hash()[:12]})")
        artifacts: Dict[str, Path] = {}
        error: Optional[str] = "interrupted"
        try:
            artifacts = stages[command](**options)
            error = None
        except Exception as exc:
            error = f"{type(exc).__name__}: {exc}"
            raise
        finally:
            manifest = self.write_manifest(command, artifacts, error)
            logger.info(f"💾 Manifest written to {manifest}")
        return artifacts
