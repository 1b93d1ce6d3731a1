"""Command line for the full pipeline.

Subcommands: synth, train-rep, encode, train-rec, evaluate, sample,
gradcheck. Every config-driven command accepts --config CONFIG.json plus
per-key flag overrides (flags win), and --print-config to show the merged
configuration and exit.

Exit codes: 0 success, 1 validation or data errors, 2 usage errors,
3 I/O failures.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import fields
from pathlib import Path

import numpy as np

from .data import SynthConfig, load_dataset, save_dataset, synth_generate
from .experiments import (
    ExperimentConfig,
    evaluate,
    extract_features,
    preprocess,
    train_representation,
    write_evaluation,
    write_trace,
)
from .models import (
    Autoencoder,
    FuturePredictor,
    GenerativeModel,
    Recognizer,
    load_checkpoint,
    save_checkpoint,
    train,
)
from .optim import GradientError, grad_check


class UsageError(Exception):
    """Bad or missing arguments; maps to exit code 2."""


def _parse_bool(text: str) -> bool:
    lowered = text.lower()
    if lowered in {"1", "true", "yes", "on"}:
        return True
    if lowered in {"0", "false", "no", "off"}:
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _parse_budgets(text: str) -> list[int]:
    """Annotation budgets: '3', '1,2,5', or a '1..7' range."""
    out: list[int] = []
    for piece in text.split(","):
        piece = piece.strip()
        if ".." in piece:
            lo, hi = piece.split("..", 1)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(piece))
    return out


_FLAG_PARSERS = {"int": int, "float": float, "str": str, "bool": _parse_bool}


def _add_config_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", metavar="JSON", help="config file; flags override its keys")
    sub.add_argument("--print-config", action="store_true", help="print the merged config and exit")
    for f in fields(ExperimentConfig):
        flag = "--" + f.name.replace("_", "-")
        if f.name == "n_labeled":
            parser_fn = _parse_budgets
        else:
            parser_fn = _FLAG_PARSERS.get(f.type, str)
        sub.add_argument(flag, type=parser_fn, default=None, help=argparse.SUPPRESS, dest=f.name)


def load_config(args) -> ExperimentConfig:
    raw = {}
    if getattr(args, "config", None):
        with open(args.config) as f:
            try:
                raw = json.load(f)
            except json.JSONDecodeError as e:
                raise UsageError(f"{args.config}: invalid config JSON ({e})") from None
        if not isinstance(raw, dict):
            raise UsageError(f"{args.config}: config must be a JSON object")
    for f in fields(ExperimentConfig):
        value = getattr(args, f.name, None)
        if value is not None:
            raw[f.name] = value
    try:
        return ExperimentConfig.from_dict(raw)
    except (ValueError, TypeError) as e:
        raise UsageError(str(e)) from None


def _maybe_print_config(args, config: ExperimentConfig) -> bool:
    if getattr(args, "print_config", False):
        print(json.dumps(config.to_dict(), indent=2, sort_keys=True))
        return True
    return False


def _require(value, what: str):
    if value is None:
        raise UsageError(f"missing {what}")
    return value


def _load_rep_model(config: ExperimentConfig):
    """None for raw features, otherwise the checkpointed representation."""
    if config.feature == "raw":
        return None
    path = _require(config.checkpoint, f"--checkpoint (feature {config.feature!r} needs a trained model)")
    return load_checkpoint(path)


def cmd_synth(args) -> int:
    sc = SynthConfig(
        n_subjects=args.subjects,
        trials_per_subject=args.trials_per_subject,
        n_activities=args.activities,
        n_channels=args.channels,
        trial_len=args.trial_len,
        mean_segment_len=args.mean_segment_len,
        sample_rate_hz=args.sample_rate,
        noise_std=args.noise_std,
        seed=args.seed,
    )
    ds = synth_generate(sc)
    path = save_dataset(ds, args.out)
    print(
        f"wrote {len(ds.trials)} trials ({sc.n_subjects} subjects x "
        f"{sc.trials_per_subject}), {ds.n_classes} activities, "
        f"{ds.n_channels} channels -> {path}"
    )
    return 0


def cmd_train_rep(args) -> int:
    config = load_config(args)
    if _maybe_print_config(args, config):
        return 0
    if config.feature == "raw":
        raise UsageError("train-rep needs a representation feature kind (genmodel, autoencoder, futurepred)")
    ds = load_dataset(_require(config.dataset, "--dataset"))
    out = Path(_require(args.out, "--out"))
    model, trace = train_representation(ds, config)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(model, out)
    trace_path = args.trace or str(out) + ".trace.csv"
    write_trace(trace, trace_path)
    last = f"{trace[-1]:.4f}" if trace else "n/a"
    print(f"trained {config.feature} for {config.rep_epochs} epochs (final mean loss {last})")
    print(f"checkpoint -> {out}")
    print(f"trace -> {trace_path}")
    return 0


def cmd_encode(args) -> int:
    config = load_config(args)
    if _maybe_print_config(args, config):
        return 0
    ds = load_dataset(_require(config.dataset, "--dataset"))
    model = load_checkpoint(_require(config.checkpoint, "--checkpoint"))
    if not hasattr(model, "encode"):
        raise UsageError("the checkpointed model does not produce features")
    out_dir = Path(_require(config.out_dir or args.out, "--out"))
    proc, _ = preprocess(ds, config)
    features = extract_features(model, proc, model.kind)
    out_dir.mkdir(parents=True, exist_ok=True)
    index = []
    for trial_id in sorted(features):
        name = f"{trial_id}_features.csv"
        np.savetxt(out_dir / name, features[trial_id], fmt="%.17g", delimiter=",")
        index.append({"trial_id": trial_id, "features": name})
    width = next(iter(features.values())).shape[1]
    (out_dir / "features_manifest.json").write_text(
        json.dumps({"feature_kind": model.kind, "width": width, "trials": index}, indent=2, sort_keys=True)
        + "\n"
    )
    print(f"encoded {len(index)} trials to width-{width} features -> {out_dir}")
    return 0


def cmd_train_rec(args) -> int:
    config = load_config(args)
    if _maybe_print_config(args, config):
        return 0
    ds = load_dataset(_require(config.dataset, "--dataset"))
    wanted = [t.strip() for t in _require(args.train_trials, "--train-trials").split(",") if t.strip()]
    if not wanted:
        raise UsageError("--train-trials lists no trial ids")
    rep = _load_rep_model(config)
    proc, _ = preprocess(ds, config)
    features = extract_features(rep, proc, config.feature)
    labels = {t.trial_id: t.labels for t in proc.trials}
    items = []
    for tid in wanted:
        if tid not in features:
            raise UsageError(f"unknown trial id {tid!r}")
        if labels[tid] is None:
            raise ValueError(f"trial {tid!r} has no labels")
        items.append((features[tid], labels[tid]))
    rec = Recognizer(
        items[0][0].shape[1],
        proc.n_classes,
        n_layers=config.rec_layers,
        hidden_size=config.rec_hidden,
        hidden_per_direction=config.rec_hidden_per_direction,
        seed=config.seed,
    )
    trace = train(rec, items, epochs=config.rec_epochs, lr=config.rec_lr, seed=config.seed)
    out = Path(_require(args.out, "--out"))
    out.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(rec, out)
    trace_path = args.trace or str(out) + ".trace.csv"
    write_trace(trace, trace_path)
    last = f"{trace[-1]:.4f}" if trace else "n/a"
    print(f"trained recognizer on {len(items)} trials for {config.rec_epochs} epochs (final loss {last})")
    print(f"checkpoint -> {out}")
    return 0


def cmd_evaluate(args) -> int:
    config = load_config(args)
    if _maybe_print_config(args, config):
        return 0
    ds = load_dataset(_require(config.dataset, "--dataset"))
    rep = _load_rep_model(config)
    out_dir = _require(config.out_dir or args.out, "--out")
    result = evaluate(ds, config, rep)
    write_evaluation(result, out_dir)
    for s in result.summaries:
        print(
            f"n_labeled={s['n_labeled']}: error {100 * s['error_rate_mean']:.2f}% "
            f"(+- {100 * s['error_rate_std']:.2f}) over {s['n_splits']} splits, "
            f"edit {s['edit_distance_mean']:.2f}"
        )
    print(f"results -> {Path(out_dir) / 'results.csv'}")
    return 0


def cmd_sample(args) -> int:
    config = load_config(args)
    if _maybe_print_config(args, config):
        return 0
    ds = load_dataset(_require(config.dataset, "--dataset"))
    model = load_checkpoint(_require(config.checkpoint, "--checkpoint"))
    if not isinstance(model, GenerativeModel):
        raise UsageError("sample needs a genmodel checkpoint")
    proc, _ = preprocess(ds, config)
    try:
        trial = proc.trial(args.trial)
    except KeyError:
        raise UsageError(f"unknown trial id {args.trial!r}") from None
    if args.prefix_frames < 0:
        raise ValueError("--prefix-frames must be non-negative")
    if args.prefix_frames > trial.n_frames:
        raise ValueError(
            f"prefix of {args.prefix_frames} frames exceeds the trial's {trial.n_frames}"
        )
    prefix = trial.kinematics[: args.prefix_frames]
    truth = trial.kinematics[args.prefix_frames : args.prefix_frames + args.horizon]
    out_dir = Path(_require(config.out_dir or args.out, "--out"))
    out_dir.mkdir(parents=True, exist_ok=True)
    np.savetxt(out_dir / "prefix.csv", prefix, fmt="%.17g", delimiter=",")
    np.savetxt(out_dir / "truth.csv", truth, fmt="%.17g", delimiter=",")
    for k in range(args.n_samples):
        rng = np.random.default_rng(np.random.SeedSequence([config.seed, k]))
        continuation = model.sample(prefix, args.horizon, rng)
        np.savetxt(out_dir / f"sample_{k:02d}.csv", continuation, fmt="%.17g", delimiter=",")
    print(
        f"wrote {args.n_samples} sampled continuations of {args.horizon} frames "
        f"after a {args.prefix_frames}-frame prefix of {args.trial} -> {out_dir}"
    )
    return 0


GRADCHECK_EPSILON = {
    # Central differences trade truncation against roundoff: the windowed
    # losses are roundoff-dominated on their smallest gradients and want the
    # largest permitted step, while the autoregressive loss shows curvature
    # error at 1e-3. Chosen by sweeping all coordinates over several seeds.
    "genmodel": 3e-4,
    "autoencoder": 1e-3,
    "futurepred": 1e-3,
    "recognizer": 3e-4,
}


def run_gradcheck(seed: int = 0, fault: tuple[str, str] | None = None, n_coords: int = 200) -> dict:
    """Finite-difference checks for all four losses on tiny seeded models.

    fault, when given, is a (loss, tensor) pair whose analytic gradient is
    doubled before comparison; it exists so the failure path of this harness
    is itself testable.
    """
    rng = np.random.default_rng(seed)
    T, nx, L, K = 12, 3, 6, 3
    x = rng.standard_normal((T, nx))
    feats = rng.standard_normal((T, 4))
    labels = rng.integers(0, K, size=T)

    gen = GenerativeModel(nx, hidden_size=8, n_components=3, seed=seed)
    ae = Autoencoder(nx, hidden_size=8, n_components=2, window_len=L, seed=seed)
    fp = FuturePredictor(nx, hidden_size=8, n_components=2, window_len=L, seed=seed)
    rec = Recognizer(4, K, n_layers=2, hidden_size=5, seed=seed)

    cases = {
        "genmodel": (gen, lambda: gen.nll_and_grad(x)),
        "autoencoder": (ae, lambda: ae.loss_and_grad(x[:L])),
        "futurepred": (fp, lambda: fp.loss_and_grad(x[:L], x[L : 2 * L])),
        "recognizer": (rec, lambda: rec.loss_and_grad(feats, labels)),
    }

    reports = {}
    for name, (model, fn) in cases.items():
        loss_fn = fn
        if fault is not None and fault[0] == name:
            tensor = fault[1]
            if tensor not in model.store.names():
                raise UsageError(f"loss {name!r} has no tensor {tensor!r}")

            def loss_fn(fn=fn, store=model.store, tensor=tensor):
                value = fn()
                store.grad(tensor)[...] *= 2.0
                return value

        reports[name] = grad_check(
            loss_fn, model.store, epsilon=GRADCHECK_EPSILON[name], n_coords=n_coords, seed=seed
        )
    return reports


def cmd_gradcheck(args) -> int:
    fault = None
    if args.inject_fault:
        if ":" not in args.inject_fault:
            raise UsageError("--inject-fault takes LOSS:TENSOR")
        loss_name, tensor = args.inject_fault.split(":", 1)
        fault = (loss_name, tensor)
    started = time.perf_counter()
    reports = run_gradcheck(seed=args.seed, fault=fault)
    ok = True
    for name, report in reports.items():
        passed = report.passed(1e-4)
        ok &= passed
        print(
            f"gradcheck {name}: max rel err {report.max_rel_error:.3e} "
            f"over {report.n_checked} coords {'PASS' if passed else 'FAIL'}"
        )
    print(f"gradcheck finished in {time.perf_counter() - started:.1f}s")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="motionrec",
        description="Sequence representation learning and activity recognition for motion trials.",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("synth", help="generate the synthetic benchmark dataset")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--subjects", type=int, default=8)
    p.add_argument("--trials-per-subject", type=int, default=4)
    p.add_argument("--activities", type=int, default=4)
    p.add_argument("--channels", type=int, default=14)
    p.add_argument("--trial-len", type=int, default=900)
    p.add_argument("--mean-segment-len", type=int, default=150)
    p.add_argument("--sample-rate", type=float, default=50.0)
    p.add_argument("--noise-std", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = subs.add_parser("train-rep", help="train a representation model on all kinematics")
    _add_config_flags(p)
    p.add_argument("--out", help="checkpoint output path")
    p.add_argument("--trace", help="per-epoch loss CSV (default: OUT.trace.csv)")
    p.set_defaults(func=cmd_train_rep)

    p = subs.add_parser("encode", help="write per-trial feature CSVs from a checkpoint")
    _add_config_flags(p)
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_encode)

    p = subs.add_parser("train-rec", help="train a recognizer on chosen labeled trials")
    _add_config_flags(p)
    p.add_argument("--train-trials", help="comma-separated trial ids")
    p.add_argument("--out", help="recognizer checkpoint output path")
    p.add_argument("--trace", help="per-epoch loss CSV (default: OUT.trace.csv)")
    p.set_defaults(func=cmd_train_rec)

    p = subs.add_parser("evaluate", help="run the scarce-annotation protocol")
    _add_config_flags(p)
    p.add_argument("--out", help="output directory for results.csv, summary.csv, split plans")
    p.set_defaults(func=cmd_evaluate)

    p = subs.add_parser("sample", help="sample continuations from a generative checkpoint")
    _add_config_flags(p)
    p.add_argument("--trial", required=True, help="trial id supplying the prefix")
    p.add_argument("--prefix-frames", type=int, default=25)
    p.add_argument("--horizon", type=int, default=50)
    p.add_argument("--n-samples", type=int, default=5)
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_sample)

    p = subs.add_parser("gradcheck", help="finite-difference check of every loss gradient")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--inject-fault", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 0 if e.code in (0, None) else 2
    try:
        return int(args.func(args) or 0)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (ValueError, AssertionError, KeyError, GradientError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
