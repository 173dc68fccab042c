"""Contrastive pretraining, Adam, cosine annealing, and frozen-encoder fine-tuning."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import checkpoint as ckpt
from .augment import AugmentConfig, make_pair
from .autodiff import Tensor
from .contrastive import ContrastiveBatch, LossWeights, joint_loss
from .encoder import EncoderConfig, EncoderParams, GraphBatch, encode_batch, from_arrays, init_encoder
from .metrics import evaluate
from .momentum import NetworkPair, init_pair, momentum_update

log = logging.getLogger(__name__)


class DatasetTooSmall(ValueError):
    pass


class NonFiniteLoss(FloatingPointError):
    pass


class LabelArityMismatch(ValueError):
    pass


class EmptySplit(ValueError):
    pass


# --- optimisation primitives -------------------------------------------------


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params) -> "AdamState":
        return cls([np.zeros_like(p.data) for p in params], [np.zeros_like(p.data) for p in params])


def adam_step(params, grads, moments: AdamState, lr: float) -> AdamState:
    """One bias-corrected Adam update, in place on ``params`` and ``moments``.

    ``grads`` is either a list aligned with ``params`` or the node-id map
    returned by :func:`~digmol.autodiff.backward`.
    """
    if isinstance(grads, dict):
        grads = [grads[p.node_id] for p in params]
    if len(grads) != len(params) or len(moments.m) != len(params):
        raise ad.ShapeMismatch("params, grads and moments must align")
    moments.step += 1
    t = moments.step
    b1, b2 = moments.beta1, moments.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for p, g, m, v in zip(params, grads, moments.m, moments.v):
        if g.shape != p.data.shape:
            raise ad.ShapeMismatch(f"gradient {g.shape} for parameter {p.data.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.data -= lr * (m / c1) / (np.sqrt(v / c2) + moments.eps)
    return moments


def cosine_lr(lr0: float, epoch: int, total_epochs: int) -> float:
    return lr0 * 0.5 * (1.0 + math.cos(math.pi * epoch / total_epochs))


# --- configuration ---------------------------------------------------------------


@dataclass(frozen=True)
class PretrainConfig:
    epochs: int = 100
    batch_size: int = 32
    lr0: float = 0.001
    tau: float = 0.1
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 1.0
    m: float = 0.8
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    mode: str = "diffusion"
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 2:
            raise ValueError("batch_size must be at least 2")
        if self.epochs < 1 or self.lr0 <= 0:
            raise ValueError("epochs must be >= 1 and lr0 > 0")

    @property
    def weights(self) -> LossWeights:
        return LossWeights(self.alpha, self.beta, self.gamma, self.tau)

    def to_fields(self) -> dict[str, str]:
        """Flat canonical text form, used inside checkpoints."""
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name in ("augment", "encoder"):
                out.update({f"{f.name}.{k}": repr(x) for k, x in asdict(v).items()})
            else:
                out[f.name] = repr(v)
        return out

    @classmethod
    def from_fields(cls, values: dict[str, str]) -> "PretrainConfig":
        import ast

        nested: dict[str, dict] = {"augment": {}, "encoder": {}}
        top = {}
        for k, v in values.items():
            head, _, tail = k.partition(".")
            if tail:
                nested[head][tail] = ast.literal_eval(v)
            else:
                top[k] = ast.literal_eval(v)
        return cls(augment=AugmentConfig(**nested["augment"]), encoder=EncoderConfig(**nested["encoder"]), **top)


@dataclass
class Checkpoint:
    """Everything needed to resume pretraining or start fine-tuning."""

    config: PretrainConfig
    pair: NetworkPair
    adam: AdamState
    epoch: int = 0
    rng_state: dict | None = None

    def sections(self) -> list[tuple[str, bytes]]:
        meta = {
            "kind": "pretrain",
            "epoch": self.epoch,
            "step": self.pair.t,
            "adam_step": self.adam.step,
            "rng_state": json.dumps(self.rng_state, sort_keys=True),
        }
        out = [("config", ckpt.pack_text(self.config.to_fields())), ("meta", ckpt.pack_text(meta))]
        online = self.pair.online.named_parameters()
        out += [(f"theta/{n}", ckpt.pack_tensor(t.data)) for n, t in online]
        out += [(f"xi/{n}", ckpt.pack_tensor(t.data)) for n, t in self.pair.target.named_parameters()]
        out += [(f"adam_m/{n}", ckpt.pack_tensor(a)) for (n, _), a in zip(online, self.adam.m)]
        out += [(f"adam_v/{n}", ckpt.pack_tensor(a)) for (n, _), a in zip(online, self.adam.v)]
        return out

    def to_bytes(self) -> bytes:
        return ckpt.encode_sections(self.sections())

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def from_bytes(cls, data: bytes) -> "Checkpoint":
        sections = dict(ckpt.decode_sections(data))
        meta = ckpt.unpack_text(sections["meta"])
        if meta.get("kind") != "pretrain":
            raise ckpt.CheckpointError(f"expected a pretraining checkpoint, found {meta.get('kind')!r}")
        config = PretrainConfig.from_fields(ckpt.unpack_text(sections["config"]))

        def group(prefix):
            n = len(prefix) + 1
            return {k[n:]: ckpt.unpack_tensor(v) for k, v in sections.items() if k.startswith(prefix + "/")}

        online = from_arrays(config.encoder, group("theta"))
        target = from_arrays(config.encoder, group("xi"))
        names = [n for n, _ in online.named_parameters()]
        m, v = group("adam_m"), group("adam_v")
        adam = AdamState([m[n] for n in names], [v[n] for n in names], int(meta["adam_step"]))
        pair = NetworkPair(online, target, config.m, int(meta["step"]))
        return cls(config, pair, adam, int(meta["epoch"]), json.loads(meta["rng_state"]))

    @classmethod
    def load(cls, path) -> "Checkpoint":
        return cls.from_bytes(Path(path).read_bytes())


# --- pretraining --------------------------------------------------------------------

METRICS_HEADER = "epoch,L_joint,L_GI,L_EI,L_MI,lr"


@dataclass
class PretrainResult:
    checkpoint: Checkpoint
    history: list[tuple[int, float, float, float, float, float]]

    def metrics_csv(self) -> str:
        rows = [METRICS_HEADER] + [",".join(repr(v) for v in row) for row in self.history]
        return "\n".join(rows) + "\n"


def _molecule_stream(seed: int, epoch: int, index: int) -> np.random.Generator:
    return np.random.default_rng([seed, epoch, index])


def pretrain_step(pair: NetworkPair, adam: AdamState, graphs, indices, config: PretrainConfig, epoch: int, lr: float):
    """Augment, encode four ways, take one Adam step on the online network, track the target."""
    views1, views2 = [], []
    for i in indices:
        g1, g2 = make_pair(graphs[i], config.augment, _molecule_stream(config.seed, epoch, int(i)))
        views1.append(g1)
        views2.append(g2)
    b1, b2 = GraphBatch(views1), GraphBatch(views2)
    _, z_t1 = encode_batch(b1, pair.online, config.mode)
    _, z_t2 = encode_batch(b2, pair.online, config.mode)
    with ad.no_grad():
        _, z_x1 = encode_batch(b1, pair.target, config.mode)
        _, z_x2 = encode_batch(b2, pair.target, config.mode)
    losses = joint_loss(ContrastiveBatch(z_t1, z_t2, z_x1, z_x2), config.weights)
    values = losses.values()
    if not all(math.isfinite(v) for v in values):
        raise NonFiniteLoss(f"loss became non-finite at epoch {epoch}: {values}")
    params = pair.online.parameters()
    grads = ad.backward(losses.joint, params)
    adam_step(params, grads, adam, lr)
    momentum_update(pair)
    return values


def pretrain(dataset, config: PretrainConfig = PretrainConfig(), metrics_path=None) -> PretrainResult:
    """Contrastive pretraining of an online/target pair.

    Every epoch shuffles the data, drops the last incomplete batch, and for
    each batch performs one optimizer step on the online network followed by
    one momentum update of the target.
    """
    graphs = list(dataset)
    if len(graphs) < config.batch_size:
        raise DatasetTooSmall(f"{len(graphs)} molecules for batch size {config.batch_size}")
    pair = init_pair(config.seed, config.encoder, config.m)
    adam = AdamState.zeros_like(pair.online.parameters())
    shuffle = np.random.default_rng(config.seed)
    history = []
    n_batches = len(graphs) // config.batch_size
    for epoch in range(config.epochs):
        lr = cosine_lr(config.lr0, epoch, config.epochs)
        order = shuffle.permutation(len(graphs))
        totals = np.zeros(4)
        for b in range(n_batches):
            batch = order[b * config.batch_size : (b + 1) * config.batch_size]
            totals += pretrain_step(pair, adam, graphs, batch, config, epoch, lr)
        mean = totals / n_batches
        history.append((epoch, *(float(v) for v in mean), lr))
        log.info("epoch %d  L_joint %.4f  GI %.4f  EI %.4f  MI %.4f  lr %.2e", epoch, *mean, lr)
    result = PretrainResult(
        Checkpoint(config, pair, adam, config.epochs, shuffle.bit_generator.state), history
    )
    if metrics_path is not None:
        Path(metrics_path).write_text(result.metrics_csv())
    return result


# --- fine-tuning ------------------------------------------------------------------------

TASKS = ("classification", "regression")


@dataclass(frozen=True)
class FinetuneConfig:
    epochs: int = 100
    batch_size: int = 32
    lr: float = 0.001
    hidden: int = 64
    dropout: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")


@dataclass
class FinetuneHead:
    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor
    task: str = "classification"

    def named_parameters(self):
        return [("w1", self.w1), ("b1", self.b1), ("w2", self.w2), ("b2", self.b2)]

    def parameters(self):
        return [t for _, t in self.named_parameters()]

    def forward(self, h, dropout_mask=None) -> Tensor:
        hidden = ad.relu(ad.add(ad.matmul(h, self.w1), self.b1))
        if dropout_mask is not None:
            hidden = ad.mul(hidden, dropout_mask)
        return ad.add(ad.matmul(hidden, self.w2), self.b2)


def init_head(d_in: int, hidden: int, n_tasks: int, task: str, rng) -> FinetuneHead:
    b1 = np.sqrt(6.0 / d_in)
    b2 = np.sqrt(6.0 / hidden)
    return FinetuneHead(
        ad.parameter(rng.uniform(-b1, b1, (d_in, hidden))),
        ad.parameter(np.zeros((1, hidden))),
        ad.parameter(rng.uniform(-b2, b2, (hidden, n_tasks))),
        ad.parameter(np.zeros((1, n_tasks))),
        task,
    )


@dataclass
class FinetunedModel:
    encoder: EncoderParams
    head: FinetuneHead
    task: str
    mode: str = "diffusion"
    # frozen embeddings are standardised with training-split statistics
    embed_mean: np.ndarray | None = None
    embed_std: np.ndarray | None = None
    # regression targets likewise
    target_mean: np.ndarray | None = None
    target_std: np.ndarray | None = None
    task_names: list[str] = field(default_factory=list)
    best_epoch: int = -1

    def sections(self) -> list[tuple[str, bytes]]:
        cfg = {f"encoder.{k}": repr(v) for k, v in asdict(self.encoder.config).items()}
        meta = {
            "kind": "finetuned",
            "task": self.task,
            "mode": self.mode,
            "task_names": json.dumps(self.task_names),
            "best_epoch": self.best_epoch,
        }
        out = [("config", ckpt.pack_text(cfg)), ("meta", ckpt.pack_text(meta))]
        out += [(f"theta/{n}", ckpt.pack_tensor(t.data)) for n, t in self.encoder.named_parameters()]
        out += [(f"head/{n}", ckpt.pack_tensor(t.data)) for n, t in self.head.named_parameters()]
        out += [("embed/mean", ckpt.pack_tensor(self.embed_mean)), ("embed/std", ckpt.pack_tensor(self.embed_std))]
        if self.target_mean is not None:
            out += [("scale/mean", ckpt.pack_tensor(self.target_mean)), ("scale/std", ckpt.pack_tensor(self.target_std))]
        return out

    def save(self, path) -> None:
        ckpt.write_file(path, self.sections())

    @classmethod
    def load(cls, path) -> "FinetunedModel":
        import ast

        sections = dict(ckpt.read_file(path))
        meta = ckpt.unpack_text(sections["meta"])
        if meta.get("kind") != "finetuned":
            raise ckpt.CheckpointError(f"expected a fine-tuned model, found {meta.get('kind')!r}")
        cfg = {k.split(".", 1)[1]: ast.literal_eval(v) for k, v in ckpt.unpack_text(sections["config"]).items()}
        encoder = from_arrays(
            EncoderConfig(**cfg),
            {k[6:]: ckpt.unpack_tensor(v) for k, v in sections.items() if k.startswith("theta/")},
        )
        h = {k[5:]: ad.parameter(ckpt.unpack_tensor(v)) for k, v in sections.items() if k.startswith("head/")}
        head = FinetuneHead(h["w1"], h["b1"], h["w2"], h["b2"], meta["task"])
        mean = ckpt.unpack_tensor(sections["scale/mean"]) if "scale/mean" in sections else None
        std = ckpt.unpack_tensor(sections["scale/std"]) if "scale/std" in sections else None
        return cls(
            encoder, head, meta["task"], meta["mode"],
            ckpt.unpack_tensor(sections["embed/mean"]), ckpt.unpack_tensor(sections["embed/std"]),
            mean, std, json.loads(meta["task_names"]), int(meta["best_epoch"]),
        )


def embed(graphs, encoder: EncoderParams, mode: str = "diffusion", batch_size: int = 256) -> np.ndarray:
    """Graph embeddings h for many graphs, without recording gradients."""
    graphs = list(graphs)
    out = []
    with ad.no_grad():
        for start in range(0, len(graphs), batch_size):
            h, _ = encode_batch(graphs[start : start + batch_size], encoder, mode)
            out.append(h.data)
    return np.vstack(out) if out else np.zeros((0, encoder.config.hidden))


def _task_loss(logits: Tensor, y: np.ndarray, task: str) -> Tensor:
    observed = ~np.isnan(y)
    count = max(int(observed.sum()), 1)
    y0 = np.where(observed, y, 0.0)
    if task == "classification":
        # binary cross-entropy on logits: softplus(x) - y * x
        per = ad.sub(ad.softplus(logits), ad.mul(logits, y0))
    else:
        diff = ad.sub(logits, y0)
        per = ad.mul(diff, diff)
    return ad.scale(ad.tensor_sum(ad.mul(per, observed.astype(float))), 1.0 / count)


def _encoder_of(source) -> tuple[EncoderParams, str]:
    if isinstance(source, Checkpoint):
        return source.pair.online, source.config.mode
    if isinstance(source, NetworkPair):
        return source.online, "diffusion"
    return source, "diffusion"


def finetune(
    source,
    graphs,
    labels,
    task: str = "classification",
    config: FinetuneConfig = FinetuneConfig(),
    train_idx=None,
    valid_idx=None,
    mode: str | None = None,
    task_names=None,
) -> FinetunedModel:
    """Train a two-layer head on top of a frozen encoder.

    ``source`` is a pretraining :class:`Checkpoint`, a :class:`NetworkPair`
    or bare :class:`EncoderParams`; only its online encoder is used and it is
    never modified. Missing labels (NaN) are masked out of the loss. When a
    validation split is given the head from the best validation epoch is
    returned, otherwise the head after the last epoch.
    """
    if task not in TASKS:
        raise ValueError(f"task must be one of {TASKS}")
    encoder, default_mode = _encoder_of(source)
    mode = mode or default_mode
    graphs = list(graphs)
    y = np.asarray(labels, dtype=np.float64)
    if y.ndim == 1:
        y = y[:, None]
    if y.shape[0] != len(graphs):
        raise LabelArityMismatch(f"{y.shape[0]} label rows for {len(graphs)} molecules")
    if task_names is not None and len(task_names) != y.shape[1]:
        raise LabelArityMismatch(f"{len(task_names)} task names for {y.shape[1]} label columns")
    train_idx = np.arange(len(graphs)) if train_idx is None else np.asarray(train_idx, dtype=int)
    if train_idx.size == 0:
        raise EmptySplit("training split is empty")
    if valid_idx is not None:
        valid_idx = np.asarray(valid_idx, dtype=int)
        if valid_idx.size == 0:
            raise EmptySplit("validation split is empty")

    h_raw = embed(graphs, encoder, mode)
    e_mean = h_raw[train_idx].mean(axis=0, keepdims=True)
    e_std = h_raw[train_idx].std(axis=0, keepdims=True)
    e_std = np.where(e_std > 0, e_std, 1.0)
    h_all = (h_raw - e_mean) / e_std
    rng = np.random.default_rng(config.seed)
    n_tasks = y.shape[1]
    mean = std = None
    y_fit = y
    if task == "regression":
        mean = np.nanmean(y[train_idx], axis=0, keepdims=True)
        std = np.nanstd(y[train_idx], axis=0, keepdims=True)
        # constant targets give a round-off spread; leave those unscaled
        std = np.where(std > 1e-12 * (1.0 + np.abs(mean)), std, 1.0)
        y_fit = (y - mean) / std
    head = init_head(h_all.shape[1], config.hidden, n_tasks, task, rng)
    names = list(task_names or [f"task{i}" for i in range(n_tasks)])
    model = FinetunedModel(encoder, head, task, mode, e_mean, e_std, mean, std, names)
    params = head.parameters()
    adam = AdamState.zeros_like(params)
    best_score, best = -math.inf, [p.data.copy() for p in params]
    metric = "roc_auc" if task == "classification" else "rmse"
    for epoch in range(config.epochs):
        lr = cosine_lr(config.lr, epoch, config.epochs)
        order = rng.permutation(train_idx)
        for start in range(0, order.size, config.batch_size):
            idx = order[start : start + config.batch_size]
            mask = None
            if config.dropout > 0:
                keep = rng.random((idx.size, config.hidden)) >= config.dropout
                mask = keep / (1.0 - config.dropout)
            loss = _task_loss(head.forward(Tensor(h_all[idx]), mask), y_fit[idx], task)
            adam_step(params, ad.backward(loss, params), adam, lr)
        if valid_idx is not None:
            score = _validation_score(model, h_all[valid_idx], y[valid_idx], metric)
            if score >= best_score:
                best_score, best = score, [p.data.copy() for p in params]
                model.best_epoch = epoch
    if valid_idx is not None and model.best_epoch >= 0:
        for p, b in zip(params, best):
            p.data[...] = b
    else:
        model.best_epoch = config.epochs - 1
    return model


def _head_outputs(model: FinetunedModel, h: np.ndarray) -> np.ndarray:
    """Head outputs for embeddings already standardised."""
    with ad.no_grad():
        out = model.head.forward(Tensor(h)).data
    if model.task == "classification":
        return ad._sigmoid(out)
    if model.target_mean is not None:
        out = out * model.target_std + model.target_mean
    return out


def _validation_score(model, h, y, metric) -> float:
    pred = _head_outputs(model, h)
    report = evaluate(pred, y, metric)
    value = report.macro_average
    if value is None:
        return -math.inf
    return value if metric == "roc_auc" else -value


def predict(model: FinetunedModel, graphs) -> np.ndarray:
    """Per-task outputs: probabilities for classification, values for regression."""
    h = embed(graphs, model.encoder, model.mode)
    return _head_outputs(model, (h - model.embed_mean) / model.embed_std)
