"""Command-line entry point: train / analyze / simulate / bench.

Every run validates its JSON config strictly (unknown keys are errors, so
a typo cannot silently change an experiment), expands defaults, and writes
the fully-resolved config plus a manifest next to its outputs. Error
classes map to distinct exit codes so scripts can tell a malformed config
from, say, an unstable profile.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, analysis, bench, data, dynamics, net
from .errors import (
    ConfigError,
    DataFormatError,
    DivergedLoss,
    LengthTooSmall,
    PathMismatch,
    SemlcError,
    ShapeMismatch,
    UnstableOperator,
    ZeroNormFilter,
)
from .operators import build_circulant
from .profiles import GAUSSIAN, RICKER, ProfileParams, discretize

EXIT_CODES = [
    (ConfigError, 2),
    (DataFormatError, 3),
    (UnstableOperator, 4),
    (ShapeMismatch, 5),
    (LengthTooSmall, 6),
    (ZeroNormFilter, 7),
    (PathMismatch, 8),
    (DivergedLoss, 9),
]


# ----------------------------------------------------------------------
# strict config handling

def _check_keys(record: dict, required: dict, optional: dict, context: str) -> dict:
    """Reject unknown keys, require the required ones, fill defaults.

    required/optional map key -> default (None for required, which must be
    present). Returns a new dict with every key present.
    """
    if not isinstance(record, dict):
        raise ConfigError(f"{context} must be a JSON object, got {type(record).__name__}")
    unknown = set(record) - set(required) - set(optional)
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)} in {context}")
    missing = set(required) - set(record)
    if missing:
        raise ConfigError(f"missing key(s) {sorted(missing)} in {context}")
    resolved = dict(record)
    for key, default in optional.items():
        resolved.setdefault(key, default)
    return resolved


def _load_config(path: str) -> dict:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file does not exist: {p}")
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {p} is not valid JSON: {exc}") from exc


def _require_file(path: str, context: str) -> str:
    if not Path(path).exists():
        raise ConfigError(f"{context} path does not exist: {path}")
    return path


def _resolve_dataset(record: dict) -> dict:
    kind = record.get("kind")
    if kind == "mnist-idx":
        resolved = _check_keys(
            record, {"kind": None, "images": None, "labels": None}, {"limit": None}, "dataset"
        )
        _require_file(resolved["images"], "dataset images")
        _require_file(resolved["labels"], "dataset labels")
    elif kind == "cifar10":
        resolved = _check_keys(record, {"kind": None, "files": None}, {"limit": None}, "dataset")
        for f in resolved["files"]:
            _require_file(f, "dataset batch")
    elif kind == "synthetic-digits":
        resolved = _check_keys(record, {"kind": None}, {"count": 5000, "image_size": 28}, "dataset")
    elif kind == "synthetic-blobs":
        resolved = _check_keys(record, {"kind": None}, {"count": 200, "image_size": 8}, "dataset")
    else:
        raise ConfigError(
            f"dataset kind must be one of mnist-idx, cifar10, synthetic-digits, synthetic-blobs; got {kind!r}"
        )
    return resolved


def _load_dataset(resolved: dict, seed: int):
    kind = resolved["kind"]
    if kind == "mnist-idx":
        return data.load_mnist(resolved["images"], resolved["labels"], resolved["limit"])
    if kind == "cifar10":
        x, y = data.load_cifar10(resolved["files"])
        if resolved["limit"] is not None:
            x, y = x[: resolved["limit"]], y[: resolved["limit"]]
        return x, y
    if kind == "synthetic-digits":
        return data.synthetic_digits(resolved["count"], seed=seed, size=resolved["image_size"])
    return data.synthetic_blobs(resolved["count"], seed=seed, size=resolved["image_size"])


_STAGE_DEFAULTS = {
    "sigma": 3.0,
    "delta": 0.2,
    "depth_radius": 2,
    "alpha": 1e-4,
    "beta": 0.75,
    "k": 2.0,
}


def _resolve_network(record: dict) -> dict:
    resolved = _check_keys(
        record,
        {"input_shape": None, "classes": None, "conv_blocks": None},
        {"dense": []},
        "network",
    )
    if not isinstance(resolved["conv_blocks"], list) or not resolved["conv_blocks"]:
        raise ConfigError("network.conv_blocks must be a non-empty list")
    blocks_resolved = []
    for i, block in enumerate(resolved["conv_blocks"]):
        b = _check_keys(
            block,
            {"out_channels": None, "kernel": None},
            {
                "stride": 1,
                "padding": 0,
                "channel_stage": {"kind": net.STAGE_NONE},
                "batch_norm": False,
                "pool": 0,
                "dropout": 0.0,
            },
            f"network.conv_blocks[{i}]",
        )
        b["channel_stage"] = _check_keys(
            b["channel_stage"],
            {"kind": None},
            _STAGE_DEFAULTS,
            f"network.conv_blocks[{i}].channel_stage",
        )
        blocks_resolved.append(b)
    resolved["conv_blocks"] = blocks_resolved
    return resolved


def _resolve_train(record: dict) -> dict:
    resolved = _check_keys(
        record,
        {"epochs": None},
        {
            "batch_size": 64,
            "learning_rate": 1e-3,
            "beta1": 0.9,
            "beta2": 0.999,
            "eps": 1e-8,
            "schedule_epochs": [100, 150],
            "schedule_factor": 0.1,
            "validation_fraction": 0.1,
        },
        "train",
    )
    return resolved


# ----------------------------------------------------------------------
# output plumbing

def _prepare_out(out: str) -> Path:
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    return out_dir


def _write_manifest(out_dir: Path, resolved: dict, started: float) -> None:
    payload = json.dumps(resolved, indent=2, sort_keys=True)
    (out_dir / "resolved_config.json").write_text(payload)
    manifest = {
        "config_sha256": hashlib.sha256(payload.encode()).hexdigest(),
        "package_version": __version__,
        "wall_time_s": round(time.monotonic() - started, 3),
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))


# ----------------------------------------------------------------------
# subcommands

def _cmd_train(args) -> int:
    started = time.monotonic()
    raw = _load_config(args.config)
    resolved = _check_keys(
        raw, {"dataset": None, "network": None, "train": None}, {"seed": 0}, "train config"
    )
    if args.seed is not None:
        resolved["seed"] = args.seed
    resolved["dataset"] = _resolve_dataset(resolved["dataset"])
    resolved["network"] = _resolve_network(resolved["network"])
    resolved["train"] = _resolve_train(resolved["train"])

    spec = net.spec_from_dict(resolved["network"])
    t = resolved["train"]
    cfg = net.TrainConfig(
        epochs=t["epochs"],
        batch_size=t["batch_size"],
        learning_rate=t["learning_rate"],
        beta1=t["beta1"],
        beta2=t["beta2"],
        eps=t["eps"],
        schedule_epochs=tuple(t["schedule_epochs"]),
        schedule_factor=t["schedule_factor"],
        validation_fraction=t["validation_fraction"],
        seed=resolved["seed"],
    )
    dataset = _load_dataset(resolved["dataset"], resolved["seed"])

    out_dir = _prepare_out(args.out)
    result = net.train(spec, dataset, cfg)
    net.save_checkpoint(out_dir / "checkpoint.npz", result.checkpoint)
    rows = ["epoch,split,loss,accuracy"]
    rows += [f"{r['epoch']},{r['split']},{r['loss']!r},{r['accuracy']!r}" for r in result.history]
    (out_dir / "metrics.csv").write_text("\n".join(rows) + "\n")
    _write_manifest(out_dir, resolved, started)
    best = result.checkpoint
    print(
        f"trained {cfg.epochs} epochs; best val accuracy {best['val_accuracy']:.4f} "
        f"at epoch {best['epoch']}; outputs in {out_dir}"
    )
    return 0


def _cmd_analyze(args) -> int:
    started = time.monotonic()
    _require_file(args.checkpoint, "checkpoint")
    if args.threshold < 0:
        raise ConfigError(f"threshold must be >= 0, got {args.threshold}")
    checkpoint = net.load_checkpoint(args.checkpoint)
    bank = net.checkpoint_filter_bank(checkpoint)
    report = analysis.order_report(bank, args.threshold)

    out_dir = _prepare_out(args.out)
    (out_dir / "order_report.json").write_text(report.to_json())
    position = {filter_index: pos for pos, filter_index in enumerate(report.tour)}
    rows = ["original_index,two_opt_index"]
    rows += [f"{i},{position[i]}" for i in range(bank.count)]
    (out_dir / "ordering.csv").write_text("\n".join(rows) + "\n")
    center = bank.count // 2
    rows = ["offset,mean_cosine"]
    rows += [
        f"{m - center},{value!r}" for m, value in enumerate(report.correlation_profile)
    ]
    (out_dir / "correlation.csv").write_text("\n".join(rows) + "\n")
    resolved = {"checkpoint": args.checkpoint, "threshold": args.threshold, "seed": 0}
    _write_manifest(out_dir, resolved, started)
    print(
        f"all-pair MSD {report.all_pair_msd:.4g}, adjacent {report.adjacent_pair_msd:.4g}, "
        f"reduction {report.percent_reduction:.1f}%; outputs in {out_dir}"
    )
    return 0


def _cmd_simulate(args) -> int:
    started = time.monotonic()
    raw = _load_config(args.config)
    resolved = _check_keys(
        raw,
        {"profile": None},
        {
            "seed": 0,
            "dt": 0.01,
            "max_steps": 200_000,
            "convergence_eps": 1e-9,
            "z_hat": "random",
            "z0": "zeros",
        },
        "simulate config",
    )
    if args.seed is not None:
        resolved["seed"] = args.seed
    profile_rec = _check_keys(
        resolved["profile"],
        {"sigma": None, "delta": None, "length": None},
        {"kind": RICKER},
        "simulate profile",
    )
    if profile_rec["kind"] not in (RICKER, GAUSSIAN):
        raise ConfigError(f"profile kind must be ricker or gaussian, got {profile_rec['kind']!r}")
    resolved["profile"] = profile_rec

    profile = discretize(
        ProfileParams(profile_rec["sigma"], profile_rec["delta"], profile_rec["length"]),
        profile_rec["kind"],
    )
    op = build_circulant(profile, require_stable=False)
    rng = np.random.default_rng(resolved["seed"])
    f = profile.length
    z_hat = (
        rng.standard_normal(f)
        if resolved["z_hat"] == "random"
        else np.asarray(resolved["z_hat"], dtype=np.float64)
    )
    z0 = (
        np.zeros(f) if resolved["z0"] == "zeros" else np.asarray(resolved["z0"], dtype=np.float64)
    )
    cfg = dynamics.DynamicsConfig(
        dt=resolved["dt"],
        max_steps=resolved["max_steps"],
        convergence_eps=resolved["convergence_eps"],
    )
    trace: list = []
    result = dynamics.integrate(op, z_hat, cfg, z0, trace=trace)

    out_dir = _prepare_out(args.out)
    rows = ["step,max_abs_residual"] + [f"{step},{residual!r}" for step, residual in trace]
    (out_dir / "trace.csv").write_text("\n".join(rows) + "\n")
    summary = {
        "stable_operator": op.stable,
        "converged": result.converged,
        "steps": result.steps,
        "z_final": result.z_final.tolist(),
    }
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2))
    _write_manifest(out_dir, resolved, started)
    print(
        f"integration {'converged' if result.converged else 'did not converge'} "
        f"after {result.steps} steps; outputs in {out_dir}"
    )
    return 0


def _cmd_bench(args) -> int:
    started = time.monotonic()
    raw = _load_config(args.config) if args.config else {}
    resolved = _check_keys(
        raw,
        {},
        {
            "seed": 0,
            "shapes": [[64, 64, 32, 32]],
            "repetitions": 25,
            "warmup": 5,
            "include_backward": True,
            "sigma": 3.0,
            "delta": 0.2,
        },
        "bench config",
    )
    if args.seed is not None:
        resolved["seed"] = args.seed
    try:
        cfg = bench.BenchConfig(
            shapes=tuple(tuple(s) for s in resolved["shapes"]),
            repetitions=resolved["repetitions"],
            warmup=resolved["warmup"],
            include_backward=resolved["include_backward"],
            sigma=resolved["sigma"],
            delta=resolved["delta"],
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    report = bench.run_bench(cfg, seed=resolved["seed"])

    out_dir = _prepare_out(args.out)
    (out_dir / "bench.csv").write_text("\n".join(report.csv_rows()) + "\n")
    _write_manifest(out_dir, resolved, started)
    print(report.table())
    return 0


# ----------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="semlc",
        description="Lateral channel connectivity: training, order analysis, dynamics, benchmarks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    train_p = sub.add_parser("train", help="train a CNN with a channel-interaction stage")
    train_p.add_argument("--config", required=True, help="JSON run configuration")
    train_p.set_defaults(fn=_cmd_train, default_out="runs/train")

    analyze_p = sub.add_parser("analyze", help="order diagnostics for a checkpoint's filter bank")
    analyze_p.add_argument("--checkpoint", required=True, help="checkpoint.npz from train")
    analyze_p.add_argument("--threshold", type=float, default=0.003, help="2-opt acceptance threshold")
    analyze_p.set_defaults(fn=_cmd_analyze, default_out="runs/analyze")

    sim_p = sub.add_parser("simulate", help="integrate the lateral dynamics to equilibrium")
    sim_p.add_argument("--config", required=True, help="JSON simulation configuration")
    sim_p.set_defaults(fn=_cmd_simulate, default_out="runs/simulate")

    bench_p = sub.add_parser("bench", help="time the dense vs FFT equilibrium paths")
    bench_p.add_argument("--config", help="JSON benchmark configuration (optional)")
    bench_p.set_defaults(fn=_cmd_bench, default_out="runs/bench")

    for p in (train_p, analyze_p, sim_p, bench_p):
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=None, help="output directory")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.out is None:
        args.out = args.default_out
    try:
        return args.fn(args)
    except SemlcError as exc:
        for klass, code in EXIT_CODES:
            if isinstance(exc, klass):
                print(f"error: {exc}", file=sys.stderr)
                return code
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
