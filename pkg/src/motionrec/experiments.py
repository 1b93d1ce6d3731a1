"""Experiment drivers: representation training, feature extraction, and the
scarce-annotation recognition protocol with an optional process pool.

Evaluation is deterministic by construction: every split derives its seeds
from (master seed, annotation budget, split index), results are keyed and
sorted independently of scheduling, and CSV floats are printed with %.17g,
so reruns at any worker width produce byte-identical files.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .data import Dataset, SplitPlan, Standardizer, downsample_dataset, make_splits, standardize
from .metrics import edit_distance, error_rate, normalized_edit_distance, to_segments
from .models import Autoencoder, FuturePredictor, GenerativeModel, Recognizer, train

FEATURE_KINDS = ("raw", "genmodel", "autoencoder", "futurepred")


@dataclass
class ExperimentConfig:
    """Every knob of the pipeline, with the protocol defaults baked in."""

    feature: str = "raw"
    genmodel_hidden: int = 128
    genmodel_components: int = 8
    window_hidden: int = 64
    window_components: int = 16
    window_len: int = 64
    rep_lr: float = 0.005
    rep_epochs: int = 100
    rec_layers: int = 3
    rec_hidden: int = 64
    rec_hidden_per_direction: bool = True
    rec_lr: float = 10**-2.5
    rec_epochs: int = 100
    batch_size: int = 1
    downsample: int = 6
    standardize: bool = True
    n_labeled: list[int] = field(default_factory=lambda: [1])
    seed: int = 0
    workers: int = 1
    dataset: str | None = None
    checkpoint: str | None = None
    out_dir: str | None = None

    def validate(self) -> None:
        if self.feature not in FEATURE_KINDS:
            raise ValueError(f"unknown feature kind {self.feature!r}, expected one of {FEATURE_KINDS}")
        if self.batch_size != 1:
            raise ValueError("batch_size is fixed at 1; the update rule is one step per trial")
        if self.downsample < 1:
            raise ValueError("downsample must be a positive integer")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")
        if not self.n_labeled or any(n < 1 for n in self.n_labeled):
            raise ValueError("n_labeled must be a non-empty list of positive budgets")
        for name in ("rep_epochs", "rec_epochs"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}")
        cfg = cls(**raw)
        if isinstance(cfg.n_labeled, int):
            cfg.n_labeled = [cfg.n_labeled]
        cfg.n_labeled = [int(n) for n in cfg.n_labeled]
        cfg.validate()
        return cfg


def preprocess(ds: Dataset, config: ExperimentConfig):
    """Decimate, then z-score with statistics pooled over the whole unlabeled
    collection (representation learning legitimately sees every trial's
    kinematics; labels play no part here)."""
    out = downsample_dataset(ds, config.downsample)
    stats = None
    trials = out.trials
    if config.standardize:
        trials, stats = standardize(trials)
    return Dataset(trials, out.activity_names, out.sample_rate_hz), stats


def build_rep_model(feature: str, n_channels: int, config: ExperimentConfig, seed: int | None = None):
    if seed is None:
        seed = config.seed
    if feature == "genmodel":
        return GenerativeModel(n_channels, config.genmodel_hidden, config.genmodel_components, seed)
    if feature == "autoencoder":
        return Autoencoder(n_channels, config.window_hidden, config.window_components, config.window_len, seed)
    if feature == "futurepred":
        return FuturePredictor(n_channels, config.window_hidden, config.window_components, config.window_len, seed)
    raise ValueError(f"no representation model for feature kind {feature!r}")


def train_representation(ds: Dataset, config: ExperimentConfig, seed: int | None = None):
    """Train the configured representation model on every trial's kinematics
    (unsupervised; labels are never read). Returns (model, per-epoch trace)."""
    config.validate()
    proc, _ = preprocess(ds, config)
    model = build_rep_model(config.feature, proc.n_channels, config, seed)
    items = [t.kinematics for t in proc.trials]
    trace = train(
        model, items, epochs=config.rep_epochs, lr=config.rep_lr, seed=config.seed if seed is None else seed
    )
    return model, trace


def extract_features(model, ds: Dataset, feature: str) -> dict[str, np.ndarray]:
    """Per-trial feature sequences: the standardized kinematics themselves for
    'raw', otherwise the frozen model's per-frame encoding."""
    if feature == "raw":
        return {t.trial_id: t.kinematics for t in ds.trials}
    if model is None:
        raise ValueError(f"feature kind {feature!r} needs a trained representation model")
    if model.kind != feature:
        raise ValueError(f"checkpoint holds a {model.kind!r} model, config asks for {feature!r}")
    return {t.trial_id: model.encode(t.kinematics) for t in ds.trials}


def split_seeds(master_seed: int, n_labeled: int, split_idx: int) -> tuple[int, int]:
    """Stable per-split seeds: (recognizer init, shuffle order)."""
    ss = np.random.SeedSequence([int(master_seed), int(n_labeled), int(split_idx)])
    a, b = ss.generate_state(2)
    return int(a), int(b)


def train_split_recognizer(
    features: dict[str, np.ndarray],
    labels: dict[str, np.ndarray],
    split: dict,
    n_classes: int,
    config: ExperimentConfig,
    init_seed: int,
    shuffle_seed: int,
) -> Recognizer:
    """Fit the recognizer for one split. Only the split's training trials are
    touched; test labels in the mapping stay unread until scoring."""
    items = [(features[tid], labels[tid]) for tid in split["train"]]
    input_dim = items[0][0].shape[1]
    rec = Recognizer(
        input_dim,
        n_classes,
        n_layers=config.rec_layers,
        hidden_size=config.rec_hidden,
        hidden_per_direction=config.rec_hidden_per_direction,
        seed=init_seed,
    )
    train(rec, items, epochs=config.rec_epochs, lr=config.rec_lr, seed=shuffle_seed)
    return rec


def score_split(rec: Recognizer, features, labels, split) -> tuple[float, float]:
    """Mean frame error over the split's test trials, plus the edit distance
    normalized by the largest ground-truth segment count in this test set."""
    errors = []
    distances = []
    counts = []
    for tid in split["test"]:
        truth = labels[tid]
        pred = rec.predict(features[tid])
        errors.append(error_rate(pred, truth))
        truth_segments = to_segments(truth)
        distances.append(edit_distance(to_segments(pred), truth_segments))
        counts.append(len(truth_segments))
    return float(np.mean(errors)), normalized_edit_distance(distances, counts)


def _run_split_job(payload: dict) -> dict:
    config = ExperimentConfig(**payload["config"])
    rec = train_split_recognizer(
        payload["features"],
        payload["labels"],
        payload["split"],
        payload["n_classes"],
        config,
        payload["init_seed"],
        payload["shuffle_seed"],
    )
    err, edit = score_split(rec, payload["features"], payload["labels"], payload["split"])
    return {
        "n_labeled": payload["n_labeled"],
        "split_id": payload["split_id"],
        "error_rate": err,
        "edit_distance": edit,
    }


@dataclass
class EvaluationResult:
    rows: list[dict]
    summaries: list[dict]
    plans: dict[int, SplitPlan]


def evaluate(ds: Dataset, config: ExperimentConfig, rep_model=None) -> EvaluationResult:
    """Run the full protocol for every annotation budget in config.n_labeled.

    Features are extracted once, then each split trains its own recognizer
    and is scored on the held-out subjects' trials. Row order and content do
    not depend on the worker count.
    """
    config.validate()
    proc, _ = preprocess(ds, config)
    for t in proc.trials:
        if t.labels is None:
            raise ValueError(f"trial {t.trial_id} has no labels; the protocol needs them")
    features = extract_features(rep_model, proc, config.feature)
    labels = {t.trial_id: t.labels for t in proc.trials}

    payloads = []
    plans: dict[int, SplitPlan] = {}
    for n in config.n_labeled:
        plan = make_splits(proc, n, seed=config.seed)
        plans[n] = plan
        for idx, split in enumerate(plan.splits):
            init_seed, shuffle_seed = split_seeds(config.seed, n, idx)
            needed = list(split["train"]) + list(split["test"])
            payloads.append(
                {
                    "n_labeled": n,
                    "split_id": idx,
                    "split": split,
                    "features": {tid: features[tid] for tid in needed},
                    "labels": {tid: labels[tid] for tid in needed},
                    "n_classes": proc.n_classes,
                    "config": config.to_dict(),
                    "init_seed": init_seed,
                    "shuffle_seed": shuffle_seed,
                }
            )

    if config.workers > 1 and len(payloads) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            rows = list(pool.map(_run_split_job, payloads))
    else:
        rows = [_run_split_job(p) for p in payloads]
    rows.sort(key=lambda r: (r["n_labeled"], r["split_id"]))

    summaries = []
    for n in config.n_labeled:
        errs = np.array([r["error_rate"] for r in rows if r["n_labeled"] == n])
        edits = np.array([r["edit_distance"] for r in rows if r["n_labeled"] == n])
        summaries.append(
            {
                "n_labeled": n,
                "n_splits": int(errs.size),
                "error_rate_mean": float(errs.mean()),
                "error_rate_std": float(errs.std()),
                "edit_distance_mean": float(edits.mean()),
                "edit_distance_std": float(edits.std()),
            }
        )
    return EvaluationResult(rows, summaries, plans)


def _fmt(x) -> str:
    if isinstance(x, float):
        return "%.17g" % x
    return str(x)


def write_csv(rows: list[dict], columns: list[str], path) -> None:
    """Deterministic CSV: fixed column order, %.17g floats, \\n newlines."""
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(_fmt(row[c]) for c in columns))
    Path(path).write_text("\n".join(lines) + "\n")


RESULT_COLUMNS = ["n_labeled", "split_id", "error_rate", "edit_distance"]
SUMMARY_COLUMNS = [
    "n_labeled",
    "n_splits",
    "error_rate_mean",
    "error_rate_std",
    "edit_distance_mean",
    "edit_distance_std",
]


def write_evaluation(result: EvaluationResult, out_dir) -> None:
    """results.csv, summary.csv, and one split plan JSON per budget."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_csv(result.rows, RESULT_COLUMNS, out_dir / "results.csv")
    write_csv(result.summaries, SUMMARY_COLUMNS, out_dir / "summary.csv")
    for n, plan in result.plans.items():
        (out_dir / f"splits_{n}.json").write_text(plan.to_json() + "\n")


def write_trace(trace: list[float], path) -> None:
    rows = [{"epoch": i + 1, "mean_loss": v} for i, v in enumerate(trace)]
    write_csv(rows, ["epoch", "mean_loss"], path)
