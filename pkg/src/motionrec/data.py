"""Trial ingestion, decimation, z-scoring, the one-labeled-trial-per-user
split protocol, and a synthetic benchmark generator.

On disk a dataset is a manifest.json next to headerless CSV files: one
kinematics file per trial (one row per frame, one column per channel) and one
label file per trial (one integer activity id per row). Loader errors name
the offending file and line.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from itertools import combinations, product
from pathlib import Path

import numpy as np

from .numerics import TWO_PI

EXHAUSTIVE_CAP = 200
N_RANDOM_SPLITS = 10
STD_FLOOR = 1e-8


class DataError(ValueError):
    """Malformed dataset content; messages carry file and line."""


@dataclass
class Trial:
    trial_id: str
    subject_id: str
    kinematics: np.ndarray  # (T, n_channels) float64
    labels: np.ndarray | None = None  # (T,) int64, or None for unlabeled data

    @property
    def n_frames(self) -> int:
        return self.kinematics.shape[0]


@dataclass
class Dataset:
    trials: list[Trial]
    activity_names: list[str]
    sample_rate_hz: float

    def validate(self) -> None:
        if not self.trials:
            raise DataError("dataset contains no trials")
        if not self.activity_names:
            raise DataError("dataset declares no activities")
        ids = [t.trial_id for t in self.trials]
        if len(set(ids)) != len(ids):
            raise DataError("trial ids are not unique")
        width = self.trials[0].kinematics.shape[1]
        K = len(self.activity_names)
        for t in self.trials:
            if t.kinematics.ndim != 2 or t.kinematics.shape[1] != width:
                raise DataError(
                    f"trial {t.trial_id}: kinematics width {t.kinematics.shape[1]} "
                    f"differs from the dataset width {width}"
                )
            if t.n_frames < 1:
                raise DataError(f"trial {t.trial_id}: no frames")
            if not np.all(np.isfinite(t.kinematics)):
                raise DataError(f"trial {t.trial_id}: non-finite kinematics")
            if t.labels is not None:
                if t.labels.shape != (t.n_frames,):
                    raise DataError(
                        f"trial {t.trial_id}: {t.labels.shape[0]} labels for {t.n_frames} frames"
                    )
                if t.labels.min() < 0 or t.labels.max() >= K:
                    raise DataError(f"trial {t.trial_id}: activity id outside [0, {K})")

    @property
    def n_channels(self) -> int:
        return self.trials[0].kinematics.shape[1]

    @property
    def n_classes(self) -> int:
        return len(self.activity_names)

    def subjects(self) -> list[str]:
        return sorted({t.subject_id for t in self.trials})

    def trial(self, trial_id: str) -> Trial:
        for t in self.trials:
            if t.trial_id == trial_id:
                return t
        raise KeyError(trial_id)


def _read_csv_floats(path: Path, expect_width: int | None) -> np.ndarray:
    rows = []
    width = expect_width
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if width is None:
                width = len(parts)
            if len(parts) != width:
                raise DataError(f"{path}:{lineno}: expected {width} columns, got {len(parts)}")
            try:
                rows.append([float(p) for p in parts])
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-numeric value") from None
    if not rows:
        raise DataError(f"{path}: empty kinematics file")
    return np.asarray(rows, dtype=np.float64)


def _read_csv_labels(path: Path, n_classes: int) -> np.ndarray:
    out = []
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                value = int(line)
            except ValueError:
                raise DataError(f"{path}:{lineno}: labels must be integers") from None
            if not 0 <= value < n_classes:
                raise DataError(
                    f"{path}:{lineno}: activity id {value} outside [0, {n_classes})"
                )
            out.append(value)
    if not out:
        raise DataError(f"{path}: empty label file")
    return np.asarray(out, dtype=np.int64)


def load_dataset(manifest_path) -> Dataset:
    """Read a manifest and its per-trial CSVs; every structural problem is
    reported with the file (and line, where it applies) that caused it."""
    manifest_path = Path(manifest_path)
    with open(manifest_path) as f:
        try:
            manifest = json.load(f)
        except json.JSONDecodeError as e:
            raise DataError(f"{manifest_path}: invalid JSON ({e})") from None
    for key in ("activity_names", "sample_rate_hz", "trials"):
        if key not in manifest:
            raise DataError(f"{manifest_path}: missing key {key!r}")
    names = manifest["activity_names"]
    if not isinstance(names, list) or not all(isinstance(n, str) for n in names):
        raise DataError(f"{manifest_path}: activity_names must be a list of strings")
    root = manifest_path.parent
    width = manifest.get("n_channels")
    trials = []
    for entry in manifest["trials"]:
        for key in ("trial_id", "subject_id", "kinematics"):
            if key not in entry:
                raise DataError(f"{manifest_path}: trial entry missing {key!r}")
        kin = _read_csv_floats(root / entry["kinematics"], width)
        if width is None:
            width = kin.shape[1]
        labels = None
        if entry.get("labels"):
            labels = _read_csv_labels(root / entry["labels"], len(names))
            if labels.shape[0] != kin.shape[0]:
                raise DataError(
                    f"{root / entry['labels']}: {labels.shape[0]} labels for "
                    f"{kin.shape[0]} kinematic frames"
                )
        trials.append(Trial(entry["trial_id"], entry["subject_id"], kin, labels))
    ds = Dataset(trials, list(names), float(manifest["sample_rate_hz"]))
    ds.validate()
    return ds


def save_dataset(ds: Dataset, out_dir) -> Path:
    """Write manifest.json plus per-trial CSVs; floats use %.17g so a reload
    reproduces every payload bit for bit."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for t in ds.trials:
        kin_name = f"{t.trial_id}.csv"
        np.savetxt(out_dir / kin_name, t.kinematics, fmt="%.17g", delimiter=",")
        entry = {"trial_id": t.trial_id, "subject_id": t.subject_id, "kinematics": kin_name}
        if t.labels is not None:
            lab_name = f"{t.trial_id}_labels.csv"
            np.savetxt(out_dir / lab_name, t.labels, fmt="%d")
            entry["labels"] = lab_name
        entries.append(entry)
    manifest = {
        "activity_names": ds.activity_names,
        "sample_rate_hz": ds.sample_rate_hz,
        "n_channels": ds.n_channels,
        "trials": entries,
    }
    path = out_dir / "manifest.json"
    with open(path, "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    return path


def downsample(x: np.ndarray, labels: np.ndarray | None = None, factor: int = 6):
    """Plain decimation: keep frames 0, factor, 2*factor, ... so labels stay
    aligned with their frames. Output length is ceil(T / factor)."""
    if not isinstance(factor, (int, np.integer)) or factor < 1:
        raise ValueError(f"downsample factor must be a positive integer, got {factor!r}")
    kept = np.ascontiguousarray(x[::factor])
    if labels is None:
        return kept, None
    return kept, np.ascontiguousarray(labels[::factor])


def downsample_dataset(ds: Dataset, factor: int) -> Dataset:
    trials = []
    for t in ds.trials:
        kin, lab = downsample(t.kinematics, t.labels, factor)
        trials.append(Trial(t.trial_id, t.subject_id, kin, lab))
    return Dataset(trials, list(ds.activity_names), ds.sample_rate_hz / factor)


@dataclass
class Standardizer:
    """Per-channel z-scoring; stds are floored at 1e-8 so constant channels
    pass through as zeros instead of dividing by zero."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, kinematics_list) -> "Standardizer":
        pooled = np.vstack(list(kinematics_list))
        std = pooled.std(axis=0)
        return cls(pooled.mean(axis=0), np.maximum(std, STD_FLOOR))

    def transform(self, x: np.ndarray) -> np.ndarray:
        return (x - self.mean) / self.std

    def inverse(self, x: np.ndarray) -> np.ndarray:
        return x * self.std + self.mean


def standardize(trials: list[Trial], stats: Standardizer | None = None):
    """Z-score a list of trials. When stats is None they are fitted on these
    trials; pass stats fitted on training data to transform anything else, so
    evaluation data never influences the normalization."""
    if stats is None:
        stats = Standardizer.fit(t.kinematics for t in trials)
    out = [replace(t, kinematics=stats.transform(t.kinematics)) for t in trials]
    return out, stats


@dataclass
class SplitPlan:
    """All train/test splits for one annotation budget. Each split lists the
    labeled training trial ids and the test trial ids; test trials always
    belong to subjects with no labeled trial in that split."""

    n_labeled: int
    mode: str  # "exhaustive" or "random"
    seed: int
    splits: list[dict] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(
            {
                "n_labeled": self.n_labeled,
                "mode": self.mode,
                "seed": self.seed,
                "splits": self.splits,
            },
            indent=2,
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "SplitPlan":
        raw = json.loads(text)
        return cls(raw["n_labeled"], raw["mode"], raw["seed"], raw["splits"])


def make_splits(ds: Dataset, n_labeled: int, seed: int = 0) -> SplitPlan:
    """Enumerate annotation splits under the at-most-one-labeled-trial-per-
    subject rule.

    Exactly n_labeled subjects contribute one labeled trial each; the test
    set is every trial of the remaining subjects. For n_labeled of 1 or
    (subjects - 1) with at most 200 combinations the enumeration is
    exhaustive, otherwise 10 splits are drawn from a seeded generator.
    """
    subjects = ds.subjects()
    u = len(subjects)
    if u < 2:
        raise ValueError("the protocol needs at least two subjects")
    if not 1 <= n_labeled <= u - 1:
        raise ValueError(f"n_labeled must lie in [1, {u - 1}], got {n_labeled}")
    by_subject = {s: sorted(t.trial_id for t in ds.trials if t.subject_id == s) for s in subjects}

    count = None
    if n_labeled in (1, u - 1):
        count = 0
        for subs in combinations(subjects, n_labeled):
            count += math.prod(len(by_subject[s]) for s in subs)
            if count > EXHAUSTIVE_CAP:
                break

    plan = SplitPlan(n_labeled, "", seed)
    if count is not None and count <= EXHAUSTIVE_CAP:
        plan.mode = "exhaustive"
        for subs in combinations(subjects, n_labeled):
            held_out = [s for s in subjects if s not in subs]
            test = sorted(tid for s in held_out for tid in by_subject[s])
            for choice in product(*(by_subject[s] for s in subs)):
                plan.splits.append({"train": list(choice), "test": test})
    else:
        plan.mode = "random"
        rng = np.random.default_rng(seed)
        for _ in range(N_RANDOM_SPLITS):
            picked = sorted(rng.choice(u, size=n_labeled, replace=False))
            subs = [subjects[int(i)] for i in picked]
            train = [by_subject[s][int(rng.integers(len(by_subject[s])))] for s in subs]
            held_out = [s for s in subjects if s not in subs]
            test = sorted(tid for s in held_out for tid in by_subject[s])
            plan.splits.append({"train": train, "test": test})
    return plan


@dataclass
class SynthConfig:
    """Subject-perturbed Markov chains over activities with per-activity
    sinusoidal signatures per channel. Defaults give 8 subjects x 4 trials,
    4 activities, 14 channels at 50 Hz."""

    n_subjects: int = 8
    trials_per_subject: int = 4
    n_activities: int = 4
    n_channels: int = 14
    trial_len: int = 900
    mean_segment_len: int = 150
    sample_rate_hz: float = 50.0
    noise_std: float = 0.1
    seed: int = 0


def synth_generate(config: SynthConfig) -> Dataset:
    """Deterministic synthetic dataset for the full pipeline.

    Activity k paints channel j with a sinusoid whose frequency, amplitude
    and phase are drawn once per (k, j); subjects rescale every channel by a
    private amplitude factor and perturb the transition matrix, so models
    that generalize across subjects must do more than memorize amplitudes.
    Segment durations are geometric; Gaussian noise is added per frame.
    """
    c = config
    if min(c.n_subjects, c.trials_per_subject, c.n_activities, c.n_channels, c.trial_len) < 1:
        raise ValueError("all synthetic dataset sizes must be positive")
    if c.mean_segment_len < 1:
        raise ValueError("mean_segment_len must be positive")
    rng = np.random.default_rng(c.seed)
    K, nch = c.n_activities, c.n_channels

    freq = rng.uniform(0.2, 1.2, size=(K, nch))
    amp = rng.uniform(0.6, 1.4, size=(K, nch))
    phase = rng.uniform(0.0, TWO_PI, size=(K, nch))
    base_weights = rng.uniform(0.5, 1.5, size=(K, K))
    np.fill_diagonal(base_weights, 0.0)

    trials = []
    tt = np.arange(c.trial_len) / c.sample_rate_hz
    for si in range(c.n_subjects):
        subject_amp = rng.uniform(0.75, 1.25, size=nch)
        weights = base_weights * rng.uniform(0.5, 1.5, size=(K, K))
        np.fill_diagonal(weights, 0.0)
        for ti in range(c.trials_per_subject):
            labels = np.empty(c.trial_len, dtype=np.int64)
            k = int(rng.integers(K))
            t = 0
            while t < c.trial_len:
                duration = int(rng.geometric(1.0 / c.mean_segment_len))
                end = min(t + duration, c.trial_len)
                labels[t:end] = k
                t = end
                if K > 1:
                    row = weights[k] / weights[k].sum()
                    k = int(rng.choice(K, p=row))
            clean = (
                subject_amp
                * amp[labels]
                * np.sin(TWO_PI * freq[labels] * tt[:, None] + phase[labels])
            )
            kin = clean + c.noise_std * rng.standard_normal((c.trial_len, nch))
            trials.append(Trial(f"s{si:02d}_t{ti:02d}", f"subj{si:02d}", kin, labels))

    names = [f"activity_{k}" for k in range(K)]
    ds = Dataset(trials, names, c.sample_rate_hz)
    ds.validate()
    return ds
