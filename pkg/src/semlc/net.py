"""Minimal CNN with hand-written passes and a pluggable channel stage.

A network is a chain of conv blocks (conv -> optional channel stage ->
optional batchnorm -> relu -> optional pool -> optional dropout) followed
by a dense head with a softmax cross-entropy loss. The channel stage slot
after the first convolution takes none, LRN, or any lateral-connectivity
variant; that placement (between convolution and ReLU, before pooling) is
load-bearing because the equilibrium solve requires the feedback system to
stay linear.

Training is plain Adam over named parameter dicts, single-threaded and
bitwise deterministic for a given seed.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import blocks, layers, optim
from .errors import ConfigError, DataFormatError, DivergedLoss, ShapeMismatch, UnstableOperator
from .operators import build_circulant
from .profiles import ConnectivityProfile

CHECKPOINT_VERSION = 1

STAGE_NONE = "none"
STAGE_LRN = "lrn"
SEMLC_STAGE_VARIANTS = {
    "semlc-fixed": layers.FIXED,
    "semlc-adaptive": layers.ADAPTIVE,
    "semlc-parametric": layers.PARAMETRIC,
    "semlc-gaussian": layers.GAUSSIAN_VARIANT,
}
STAGE_KINDS = (STAGE_NONE, STAGE_LRN, *SEMLC_STAGE_VARIANTS)

# How many times a rejected (unstable) stage update is retried at half the
# previous step size before the step is skipped entirely.
STAGE_BACKOFF_TRIES = 20


@dataclass(frozen=True)
class StageSpec:
    """Channel-interaction stage choice for one conv block.

    sigma/delta configure the lateral-connectivity variants; the remaining
    fields configure LRN. Irrelevant fields are ignored for a given kind.
    """

    kind: str = STAGE_NONE
    sigma: float = 3.0
    delta: float = 0.2
    depth_radius: int = 2
    alpha: float = 1e-4
    beta: float = 0.75
    k: float = 2.0

    def __post_init__(self):
        if self.kind not in STAGE_KINDS:
            raise ConfigError(f"unknown channel stage {self.kind!r}; expected one of {STAGE_KINDS}")


@dataclass(frozen=True)
class ConvBlockSpec:
    out_channels: int
    kernel: int
    stride: int = 1
    padding: int = 0
    channel_stage: StageSpec = field(default_factory=StageSpec)
    batch_norm: bool = False
    pool: int = 0
    dropout: float = 0.0


@dataclass(frozen=True)
class NetworkSpec:
    input_shape: tuple[int, int, int]
    classes: int
    conv_blocks: tuple[ConvBlockSpec, ...]
    dense: tuple[int, ...] = ()

    def __post_init__(self):
        if self.classes < 2:
            raise ConfigError(f"need at least 2 classes, got {self.classes}")
        if not self.conv_blocks:
            raise ConfigError("at least one conv block is required")
        for i, block in enumerate(self.conv_blocks):
            if i > 0 and block.channel_stage.kind in SEMLC_STAGE_VARIANTS:
                raise ConfigError(
                    "lateral connectivity is only supported on the first conv block"
                )
        self.feature_shape()  # raises if the shapes do not chain

    def feature_shape(self) -> tuple[int, int, int]:
        """(C, H, W) entering the dense head."""
        c, h, w = self.input_shape
        for block in self.conv_blocks:
            h = blocks._conv_out_size(h, block.kernel, block.stride, block.padding)
            w = blocks._conv_out_size(w, block.kernel, block.stride, block.padding)
            c = block.out_channels
            if block.pool:
                h, w = h // block.pool, w // block.pool
                if h < 1 or w < 1:
                    raise ShapeMismatch(f"pooling {block.pool} collapses block {c} output")
        return c, h, w


def spec_to_dict(spec: NetworkSpec) -> dict:
    return {
        "input_shape": list(spec.input_shape),
        "classes": spec.classes,
        "conv_blocks": [
            {
                "out_channels": b.out_channels,
                "kernel": b.kernel,
                "stride": b.stride,
                "padding": b.padding,
                "channel_stage": {
                    "kind": b.channel_stage.kind,
                    "sigma": b.channel_stage.sigma,
                    "delta": b.channel_stage.delta,
                    "depth_radius": b.channel_stage.depth_radius,
                    "alpha": b.channel_stage.alpha,
                    "beta": b.channel_stage.beta,
                    "k": b.channel_stage.k,
                },
                "batch_norm": b.batch_norm,
                "pool": b.pool,
                "dropout": b.dropout,
            }
            for b in spec.conv_blocks
        ],
        "dense": list(spec.dense),
    }


def spec_from_dict(record: dict) -> NetworkSpec:
    return NetworkSpec(
        input_shape=tuple(record["input_shape"]),
        classes=record["classes"],
        conv_blocks=tuple(
            ConvBlockSpec(
                out_channels=b["out_channels"],
                kernel=b["kernel"],
                stride=b.get("stride", 1),
                padding=b.get("padding", 0),
                channel_stage=StageSpec(**b.get("channel_stage", {"kind": STAGE_NONE})),
                batch_norm=b.get("batch_norm", False),
                pool=b.get("pool", 0),
                dropout=b.get("dropout", 0.0),
            )
            for b in record["conv_blocks"]
        ),
        dense=tuple(record.get("dense", ())),
    )


@dataclass(frozen=True)
class FilterBank:
    """First-layer conv filters, the object whose emergent order the
    analysis module measures."""

    weights: np.ndarray  # (f, c_in, k, k)
    bias: np.ndarray  # (f,)

    def __post_init__(self):
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.bias))):
            raise ValueError("filter bank entries must be finite")

    @property
    def count(self) -> int:
        return self.weights.shape[0]


class Network:
    """Parameter container plus forward/backward over a NetworkSpec."""

    def __init__(self, spec: NetworkSpec, rng: np.random.Generator):
        self.spec = spec
        self.params: dict[str, np.ndarray] = {}
        self.bn_state: dict[str, np.ndarray] = {}
        self.semlc: layers.SemlcLayer | None = None
        self.lrn: dict[int, layers.LrnLayer] = {}

        c_in = spec.input_shape[0]
        for i, block in enumerate(spec.conv_blocks):
            fan_in = c_in * block.kernel * block.kernel
            self.params[f"conv{i}.w"] = rng.normal(
                0.0, np.sqrt(2.0 / fan_in), size=(block.out_channels, c_in, block.kernel, block.kernel)
            )
            self.params[f"conv{i}.b"] = np.zeros(block.out_channels)
            if block.batch_norm:
                self.params[f"bn{i}.gamma"] = np.ones(block.out_channels)
                self.params[f"bn{i}.beta"] = np.zeros(block.out_channels)
                self.bn_state[f"bn{i}.mean"] = np.zeros(block.out_channels)
                self.bn_state[f"bn{i}.var"] = np.ones(block.out_channels)
            stage = block.channel_stage
            if stage.kind == STAGE_LRN:
                self.lrn[i] = layers.LrnLayer(stage.depth_radius, stage.alpha, stage.beta, stage.k)
            elif stage.kind in SEMLC_STAGE_VARIANTS:
                layer = layers.make_semlc_layer(
                    SEMLC_STAGE_VARIANTS[stage.kind], stage.sigma, stage.delta, block.out_channels
                )
                self.semlc = layer
                for key, value in layers.trainable_parameters(layer).items():
                    self.params[f"stage.{key}"] = np.array(value, dtype=np.float64)
            c_in = block.out_channels

        dim = int(np.prod(spec.feature_shape()))
        widths = (*spec.dense, spec.classes)
        for j, width in enumerate(widths):
            self.params[f"dense{j}.w"] = rng.normal(0.0, np.sqrt(2.0 / dim), size=(dim, width))
            self.params[f"dense{j}.b"] = np.zeros(width)
            dim = width

    # -- stage bookkeeping -------------------------------------------------

    def stage_param_keys(self) -> list[str]:
        return sorted(k for k in self.params if k.startswith("stage."))

    def rebuild_stage(self, params: dict[str, np.ndarray]) -> layers.SemlcLayer:
        """Layer matching the stage trainables in params. Raises
        UnstableOperator (or ValueError for out-of-domain sigma/delta) when
        the candidate profile is rejected."""
        assert self.semlc is not None
        if self.semlc.variant == layers.ADAPTIVE:
            return layers.with_weights(self.semlc, params["stage.weights"])
        if self.semlc.variant == layers.PARAMETRIC:
            return layers.with_wavelet_params(
                self.semlc, float(params["stage.sigma"]), float(params["stage.delta"])
            )
        return self.semlc

    def parameter_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {"conv": 0, "batchnorm": 0, "dense": 0, "stage": 0, "total": 0}
        for key, value in self.params.items():
            group = "stage" if key.startswith("stage.") else ("batchnorm" if key.startswith("bn") else key.split(".")[0].rstrip("0123456789"))
            counts[group] += value.size
            counts["total"] += value.size
        return counts

    # -- passes ------------------------------------------------------------

    def forward(self, x: np.ndarray, train: bool = False, rng: np.random.Generator | None = None):
        if x.shape[1:] != tuple(self.spec.input_shape):
            raise ShapeMismatch(
                f"input shape {x.shape[1:]} does not match spec {self.spec.input_shape}"
            )
        caches = []
        out = x
        for i, block in enumerate(self.spec.conv_blocks):
            cache: dict = {}
            out, cache["conv"] = blocks.conv2d_forward(
                out, self.params[f"conv{i}.w"], self.params[f"conv{i}.b"], block.stride, block.padding
            )
            stage = block.channel_stage.kind
            if stage in SEMLC_STAGE_VARIANTS:
                cache["semlc_in"] = out
                out = layers.semlc_forward(self.semlc, out)
            elif stage == STAGE_LRN:
                cache["lrn_in"] = out
                out = layers.lrn_forward(self.lrn[i], out)
            if block.batch_norm:
                out, cache["bn"], self.bn_state[f"bn{i}.mean"], self.bn_state[f"bn{i}.var"] = (
                    blocks.batchnorm_forward(
                        out,
                        self.params[f"bn{i}.gamma"],
                        self.params[f"bn{i}.beta"],
                        self.bn_state[f"bn{i}.mean"],
                        self.bn_state[f"bn{i}.var"],
                        train=train,
                    )
                )
            out, cache["relu"] = blocks.relu_forward(out)
            if block.pool:
                out, cache["pool"] = blocks.maxpool_forward(out, block.pool)
            if block.dropout:
                if train and rng is None:
                    raise ValueError("training forward with dropout needs an rng")
                out, cache["dropout"] = blocks.dropout_forward(out, block.dropout, rng, train)
            caches.append(cache)

        shape = out.shape
        out = out.reshape(shape[0], -1)
        dense_caches = []
        n_dense = len(self.spec.dense) + 1
        for j in range(n_dense):
            out, dc = blocks.dense_forward(out, self.params[f"dense{j}.w"], self.params[f"dense{j}.b"])
            relu_cache = None
            if j < n_dense - 1:
                out, relu_cache = blocks.relu_forward(out)
            dense_caches.append((dc, relu_cache))
        return out, (caches, dense_caches, shape)

    def backward(self, grad_logits: np.ndarray, cache) -> dict[str, np.ndarray]:
        conv_caches, dense_caches, feature_shape = cache
        grads: dict[str, np.ndarray] = {}
        grad = grad_logits
        for j in range(len(dense_caches) - 1, -1, -1):
            dc, relu_cache = dense_caches[j]
            if relu_cache is not None:
                grad = blocks.relu_backward(grad, relu_cache)
            grad, grads[f"dense{j}.w"], grads[f"dense{j}.b"] = blocks.dense_backward(grad, dc)
        grad = grad.reshape(feature_shape)

        for i in range(len(self.spec.conv_blocks) - 1, -1, -1):
            block = self.spec.conv_blocks[i]
            c = conv_caches[i]
            if block.dropout:
                grad = blocks.dropout_backward(grad, c["dropout"])
            if block.pool:
                grad = blocks.maxpool_backward(grad, c["pool"])
            grad = blocks.relu_backward(grad, c["relu"])
            if block.batch_norm:
                grad, grads[f"bn{i}.gamma"], grads[f"bn{i}.beta"] = blocks.batchnorm_backward(
                    grad, c["bn"]
                )
            stage = block.channel_stage.kind
            if stage in SEMLC_STAGE_VARIANTS:
                grad, stage_grads = layers.semlc_backward(self.semlc, c["semlc_in"], grad)
                for key, value in stage_grads.items():
                    grads[f"stage.{key}"] = np.asarray(value, dtype=np.float64)
            elif stage == STAGE_LRN:
                grad = layers.lrn_backward(self.lrn[i], c["lrn_in"], grad)
            grad, grads[f"conv{i}.w"], grads[f"conv{i}.b"] = blocks.conv2d_backward(grad, c["conv"])
        return grads

    def loss_and_grads(self, x, labels, train=True, rng=None):
        logits, cache = self.forward(x, train=train, rng=rng)
        loss, grad_logits = blocks.softmax_cross_entropy(logits, labels)
        accuracy = float((logits.argmax(axis=1) == labels).mean())
        grads = self.backward(grad_logits, cache)
        return loss, accuracy, grads

    def filter_bank(self) -> FilterBank:
        return FilterBank(self.params["conv0.w"].copy(), self.params["conv0.b"].copy())


# ----------------------------------------------------------------------
# training

@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    batch_size: int = 64
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    schedule_epochs: tuple[int, ...] = (100, 150)
    schedule_factor: float = 0.1
    validation_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.validation_fraction < 1.0:
            raise ConfigError(
                f"validation_fraction must lie in (0, 1), got {self.validation_fraction}"
            )
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be positive")


@dataclass
class TrainResult:
    checkpoint: dict
    history: list[dict]


def effective_learning_rate(cfg: TrainConfig, epoch: int) -> float:
    drops = sum(1 for s in cfg.schedule_epochs if epoch > s)
    return cfg.learning_rate * cfg.schedule_factor**drops


def evaluate(net: Network, x: np.ndarray, labels: np.ndarray, batch_size: int = 256):
    total_loss = 0.0
    correct = 0
    for start in range(0, len(x), batch_size):
        xb = x[start : start + batch_size]
        yb = labels[start : start + batch_size]
        logits, _ = net.forward(xb, train=False)
        loss, _ = blocks.softmax_cross_entropy(logits, yb)
        total_loss += loss * len(xb)
        correct += int((logits.argmax(axis=1) == yb).sum())
    return total_loss / len(x), correct / len(x)


def _apply_update(net: Network, grads, adam_state, adam_cfg, lr):
    """Adam step with the stage stability guard.

    Moments advance once; the value update for the stage trainables is
    retried at half the previous step size while the rebuilt operator is
    rejected (unstable spectrum or out-of-domain wavelet parameters), and
    skipped entirely when the backoff budget runs out.
    """
    new_state = optim.update_moments(grads, adam_state, adam_cfg)
    new_params = {
        key: optim.candidate_value(net.params[key], key, new_state, adam_cfg, lr)
        for key in net.params
    }
    stage_keys = net.stage_param_keys()
    if stage_keys:
        scale = 1.0
        for _ in range(STAGE_BACKOFF_TRIES):
            try:
                candidate = {
                    key: optim.candidate_value(net.params[key], key, new_state, adam_cfg, lr * scale)
                    for key in stage_keys
                }
                net.semlc = net.rebuild_stage(candidate)
                new_params.update(candidate)
                break
            except (UnstableOperator, ValueError):
                scale *= 0.5
        else:
            for key in stage_keys:  # skip the stage step entirely
                new_params[key] = net.params[key]
            net.semlc = net.rebuild_stage(new_params)
    net.params = new_params
    return new_state


def train(spec: NetworkSpec, data: tuple[np.ndarray, np.ndarray], cfg: TrainConfig) -> TrainResult:
    """Train on (images, labels); returns the best-validation checkpoint
    and the per-epoch metrics history. Deterministic for a given seed."""
    x, labels = data
    if x.ndim != 4 or len(x) != len(labels):
        raise DataFormatError(f"expected (N, C, H, W) images with matching labels, got {x.shape}")
    if len(x) < 2:
        raise DataFormatError("need at least 2 samples to split off validation data")
    x = np.asarray(x, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)

    rng = np.random.default_rng(cfg.seed)
    n_val = max(1, int(round(len(x) * cfg.validation_fraction)))
    order = rng.permutation(len(x))
    val_idx, train_idx = order[:n_val], order[n_val:]
    x_train, y_train = x[train_idx], labels[train_idx]
    x_val, y_val = x[val_idx], labels[val_idx]

    net = Network(spec, rng)
    adam_cfg = optim.AdamConfig(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps)
    adam_state = optim.adam_init(net.params)

    history: list[dict] = []
    best: dict | None = None
    for epoch in range(1, cfg.epochs + 1):
        lr = effective_learning_rate(cfg, epoch)
        perm = rng.permutation(len(x_train))
        epoch_loss = 0.0
        epoch_correct = 0.0
        for start in range(0, len(x_train), cfg.batch_size):
            batch = perm[start : start + cfg.batch_size]
            loss, accuracy, grads = net.loss_and_grads(
                x_train[batch], y_train[batch], train=True, rng=rng
            )
            if not np.isfinite(loss):
                raise DivergedLoss(epoch, loss)
            epoch_loss += loss * len(batch)
            epoch_correct += accuracy * len(batch)
            adam_state = _apply_update(net, grads, adam_state, adam_cfg, lr)
        val_loss, val_accuracy = evaluate(net, x_val, y_val)
        history.append(
            {
                "epoch": epoch,
                "split": "train",
                "loss": epoch_loss / len(x_train),
                "accuracy": epoch_correct / len(x_train),
            }
        )
        history.append({"epoch": epoch, "split": "val", "loss": val_loss, "accuracy": val_accuracy})
        if best is None or val_accuracy > best["val_accuracy"]:
            best = _snapshot(net, adam_state, cfg, epoch, val_accuracy, rng)
    return TrainResult(checkpoint=best, history=history)


def _snapshot(net, adam_state, cfg, epoch, val_accuracy, rng) -> dict:
    return {
        "version": CHECKPOINT_VERSION,
        "spec": net.spec,
        "train_config": cfg,
        "params": copy.deepcopy(net.params),
        "bn_state": copy.deepcopy(net.bn_state),
        "adam_state": copy.deepcopy(adam_state),
        "epoch": epoch,
        "val_accuracy": val_accuracy,
        "rng_state": rng.bit_generator.state,
        "semlc_profile": net.semlc.profile if net.semlc is not None else None,
    }


# ----------------------------------------------------------------------
# checkpoint container: one .npz holding a JSON header plus raw tensors

def save_checkpoint(path, checkpoint: dict) -> None:
    cfg = checkpoint["train_config"]
    meta = {
        "version": checkpoint["version"],
        "spec": spec_to_dict(checkpoint["spec"]),
        "train_config": {
            "epochs": cfg.epochs,
            "batch_size": cfg.batch_size,
            "learning_rate": cfg.learning_rate,
            "beta1": cfg.beta1,
            "beta2": cfg.beta2,
            "eps": cfg.eps,
            "schedule_epochs": list(cfg.schedule_epochs),
            "schedule_factor": cfg.schedule_factor,
            "validation_fraction": cfg.validation_fraction,
            "seed": cfg.seed,
        },
        "epoch": checkpoint["epoch"],
        "val_accuracy": checkpoint["val_accuracy"],
        "rng_state": checkpoint["rng_state"],
        "adam_step": checkpoint["adam_state"]["step"],
        "semlc_profile": (
            None if checkpoint["semlc_profile"] is None else json.loads(checkpoint["semlc_profile"].to_json())
        ),
    }
    arrays = {f"param/{k}": v for k, v in checkpoint["params"].items()}
    arrays.update({f"bn/{k}": v for k, v in checkpoint["bn_state"].items()})
    arrays.update({f"adam_m/{k}": v for k, v in checkpoint["adam_state"]["m"].items()})
    arrays.update({f"adam_v/{k}": v for k, v in checkpoint["adam_state"]["v"].items()})
    np.savez(path, meta=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8), **arrays)


def load_checkpoint(path) -> dict:
    with np.load(path) as archive:
        if "meta" not in archive:
            raise DataFormatError(f"{path}: not a checkpoint archive (missing meta)")
        meta = json.loads(bytes(archive["meta"]).decode())
        if meta.get("version") != CHECKPOINT_VERSION:
            raise DataFormatError(f"{path}: unsupported checkpoint version {meta.get('version')}")
        params = {}
        bn_state = {}
        adam_m = {}
        adam_v = {}
        for key in archive.files:
            prefix, _, name = key.partition("/")
            if prefix == "param":
                params[name] = archive[key]
            elif prefix == "bn":
                bn_state[name] = archive[key]
            elif prefix == "adam_m":
                adam_m[name] = archive[key]
            elif prefix == "adam_v":
                adam_v[name] = archive[key]
    cfg_rec = meta["train_config"]
    cfg = TrainConfig(
        epochs=cfg_rec["epochs"],
        batch_size=cfg_rec["batch_size"],
        learning_rate=cfg_rec["learning_rate"],
        beta1=cfg_rec["beta1"],
        beta2=cfg_rec["beta2"],
        eps=cfg_rec["eps"],
        schedule_epochs=tuple(cfg_rec["schedule_epochs"]),
        schedule_factor=cfg_rec["schedule_factor"],
        validation_fraction=cfg_rec["validation_fraction"],
        seed=cfg_rec["seed"],
    )
    profile = None
    if meta.get("semlc_profile") is not None:
        profile = ConnectivityProfile.from_json(json.dumps(meta["semlc_profile"]))
    return {
        "version": meta["version"],
        "spec": spec_from_dict(meta["spec"]),
        "train_config": cfg,
        "params": params,
        "bn_state": bn_state,
        "adam_state": {"step": meta["adam_step"], "m": adam_m, "v": adam_v},
        "epoch": meta["epoch"],
        "val_accuracy": meta["val_accuracy"],
        "rng_state": meta["rng_state"],
        "semlc_profile": profile,
    }


def checkpoint_filter_bank(checkpoint: dict) -> FilterBank:
    return FilterBank(checkpoint["params"]["conv0.w"], checkpoint["params"]["conv0.b"])


def restore_network(checkpoint: dict) -> Network:
    """Rebuild a Network (weights, BN state, stage layer) from a checkpoint."""
    net = Network(checkpoint["spec"], np.random.default_rng(0))
    net.params = {k: np.array(v) for k, v in checkpoint["params"].items()}
    net.bn_state = {k: np.array(v) for k, v in checkpoint["bn_state"].items()}
    if net.semlc is not None:
        profile = checkpoint["semlc_profile"]
        if profile is not None:
            net.semlc = layers.SemlcLayer(net.semlc.variant, profile, build_circulant(profile))
        elif net.stage_param_keys():
            net.semlc = net.rebuild_stage(net.params)
    return net
