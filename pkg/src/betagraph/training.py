"""Two-phase alternating training with validation-driven model selection.

Phase 1 fits the encoder and the disjunction operator with the margin
loss over Beta-KL distances; phase 2 freezes them, rebuilds the class
regions, and fits the evidence heads with the Dirichlet cross-entropy.
Alternating the phases R times refines both sides; after every round the
model is scored on validation as

    acc + auroc - 10 * aurc

(weights configurable) and the best-scoring snapshot is returned.

Everything is full batch and deterministic: parameter init and the two
dropout streams are independent substreams of the config seed.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, replace

import numpy as np

from . import autodiff as ad
from . import evidence as ev
from . import reasoning as rs
from .autodiff import Adam, Tensor, no_grad
from .graphs import Graph, SplitSpec, normalize_adjacency, remap_labels
from .metrics import accuracy, aurc, auroc
from .rng import substream


class TrainingDivergence(RuntimeError):
    """Raised when a loss goes non-finite; carries phase/round/epoch info."""


@dataclass
class TrainConfig:
    # canonical per-phase hyperparameters
    lr_p1: float = 0.01
    dropout_p1: float = 0.2
    gamma: float = 55.0
    lr_p2: float = 0.01
    dropout_p2: float = 0.2
    # schedule
    epochs_p1: int = 200
    epochs_p2: int = 200
    rounds: int = 5
    seed: int = 0
    # architecture
    hidden_dim: int = 64
    embed_dim: int = 32
    reasoning_dim: int = 64
    dtype: str = "float32"
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    # ablation switches
    use_beta_reasoning: bool = True      # encoder + disjunction + phase 1
    learned_prior: bool = True           # per-node W from the novel head
    context_propagation: bool = True     # graph propagation inside heads
    # selection-score weights
    sel_weight_acc: float = 1.0
    sel_weight_auroc: float = 1.0
    sel_weight_aurc: float = 10.0
    # split construction (used by drivers that build splits from configs)
    ood_classes: tuple = ()
    split_ratios: tuple = (1, 1, 8)
    ood_val_fraction: float = 0.2
    normalize_features: bool = True

    def __post_init__(self):
        if self.lr_p1 <= 0 or self.lr_p2 <= 0:
            raise ValueError("learning rates must be positive")
        if not (0 <= self.dropout_p1 < 1 and 0 <= self.dropout_p2 < 1):
            raise ValueError("dropout rates must lie in [0, 1)")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        if self.dtype not in ("float32", "float64"):
            raise ValueError("dtype must be float32 or float64")

    @property
    def np_dtype(self):
        return np.dtype(self.dtype)


# ablation variants: presets over the three switches; "no_at" folds the
# alternation into a single long round
VARIANTS = {
    "a": dict(use_beta_reasoning=False, learned_prior=False,
              context_propagation=True),
    "b": dict(learned_prior=False, context_propagation=False),
    "c": dict(context_propagation=False),
    "d": dict(learned_prior=False),
    "e": dict(),
}


def variant_config(base: TrainConfig, name: str) -> TrainConfig:
    if name == "no_at":
        return replace(base, rounds=1,
                       epochs_p1=base.epochs_p1 * base.rounds,
                       epochs_p2=base.epochs_p2 * base.rounds)
    if name not in VARIANTS:
        raise ValueError(f"unknown variant '{name}'")
    return replace(base, **VARIANTS[name])


@dataclass
class RunContext:
    """Everything about a (graph, split) pair the loops reuse."""
    graph: Graph
    split: SplitSpec
    adj: object                     # normalized adjacency
    x: Tensor                       # (n, F) features, constant
    propagated_x: Tensor            # adj @ x, constant
    labels: np.ndarray              # remapped: ID classes 0..K-1, OOD -1
    class_count: int
    class_train_idx: list           # train node ids per remapped class


def build_context(graph: Graph, split: SplitSpec, config: TrainConfig) -> RunContext:
    adj = normalize_adjacency(graph)
    labels = remap_labels(graph, split)
    k = len(split.id_classes)
    x = Tensor(graph.features.astype(config.np_dtype))
    with no_grad():
        px = ad.spmm(adj, x)
    class_train_idx = [split.train[labels[split.train] == c]
                       for c in range(k)]
    for c, idx in enumerate(class_train_idx):
        if idx.size == 0:
            raise ValueError(f"class {split.id_classes[c]} has no training nodes")
    return RunContext(graph=graph, split=split, adj=adj, x=x,
                      propagated_x=px, labels=labels, class_count=k,
                      class_train_idx=class_train_idx)


@dataclass
class ModelState:
    config: TrainConfig
    class_count: int
    feature_dim: int
    encoder: rs.EncoderParams = None
    disjunction: rs.DisjunctionParams = None
    heads: ev.EvidenceHeadParams = None
    direct: ev.DirectHeadParams = None
    opt_p1: Adam = None
    opt_p2: Adam = None
    rng_p1: object = None
    rng_p2: object = None
    round: int = 0
    best_score: float = None
    best_round: int = None
    best_params: dict = None

    def phase1_tensors(self) -> dict:
        out = {}
        if self.encoder is not None:
            out.update(self.encoder.tensors())
            out.update(self.disjunction.tensors())
        return out

    def phase2_tensors(self) -> dict:
        if self.direct is not None:
            return self.direct.tensors()
        return self.heads.tensors()

    def all_tensors(self) -> dict:
        return {**self.phase1_tensors(), **self.phase2_tensors()}

    def running_stats(self) -> dict:
        if self.encoder is None:
            return {}
        return {
            "encoder.bn1.running_mean": self.encoder.bn1.running_mean,
            "encoder.bn1.running_var": self.encoder.bn1.running_var,
            "encoder.bn2.running_mean": self.encoder.bn2.running_mean,
            "encoder.bn2.running_var": self.encoder.bn2.running_var,
        }

    def snapshot(self) -> dict:
        snap = {name: t.data.copy() for name, t in self.all_tensors().items()}
        snap.update({name: arr.copy() for name, arr in self.running_stats().items()})
        return snap

    def load_snapshot(self, snap: dict):
        for name, t in self.all_tensors().items():
            t.data = snap[name].copy()
        if self.encoder is not None:
            self.encoder.bn1.running_mean = snap["encoder.bn1.running_mean"].copy()
            self.encoder.bn1.running_var = snap["encoder.bn1.running_var"].copy()
            self.encoder.bn2.running_mean = snap["encoder.bn2.running_mean"].copy()
            self.encoder.bn2.running_var = snap["encoder.bn2.running_var"].copy()


def init_model(feature_dim: int, class_count: int, config: TrainConfig) -> ModelState:
    gen = substream(config.seed, 0)
    dtype = config.np_dtype
    state = ModelState(config=config, class_count=class_count,
                       feature_dim=feature_dim)
    if config.use_beta_reasoning:
        state.encoder = rs.init_encoder(gen, feature_dim, config.hidden_dim,
                                        config.embed_dim, dtype)
        state.disjunction = rs.init_disjunction(gen, config.embed_dim,
                                                config.reasoning_dim, dtype)
        state.heads = ev.init_evidence_heads(gen, config.embed_dim,
                                             config.hidden_dim, class_count,
                                             dtype)
    else:
        state.direct = ev.init_direct_head(gen, feature_dim, config.hidden_dim,
                                           class_count, dtype)
    state.opt_p1 = Adam(state.phase1_tensors().values(), lr=config.lr_p1,
                        betas=(config.adam_beta1, config.adam_beta2),
                        eps=config.adam_eps)
    state.opt_p2 = Adam(state.phase2_tensors().values(), lr=config.lr_p2,
                        betas=(config.adam_beta1, config.adam_beta2),
                        eps=config.adam_eps)
    state.rng_p1 = substream(config.seed, 1)
    state.rng_p2 = substream(config.seed, 2)
    return state


def _check_finite(loss, phase, epoch, state):
    if not np.isfinite(loss.data).all():
        raise TrainingDivergence(
            f"non-finite loss in phase {phase}, round {state.round}, "
            f"epoch {epoch}"
        )


class _divergence_guard:
    """Convert numerical domain errors inside a step into a diagnostic."""

    def __init__(self, phase, epoch, state):
        self.where = (phase, epoch, state.round)

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type in (ValueError, FloatingPointError):
            phase, epoch, rnd = self.where
            raise TrainingDivergence(
                f"numerical failure in phase {phase}, round {rnd}, "
                f"epoch {epoch}: {exc}"
            ) from exc
        return False


def train_phase1(state: ModelState, ctx: RunContext, epochs: int) -> float:
    """Margin-loss epochs over the training nodes; returns the final loss.

    Only encoder and disjunction parameters change.
    """
    if not state.config.use_beta_reasoning or epochs == 0:
        return float("nan")
    cfg = state.config
    last = float("nan")
    train_labels = ctx.labels[ctx.split.train]
    for epoch in range(epochs):
        with _divergence_guard(1, epoch, state):
            emb = rs.encode(ctx.adj, ctx.x, state.encoder, training=True,
                            dropout_rate=cfg.dropout_p1,
                            generator=state.rng_p1,
                            propagated_x=ctx.propagated_x)
            class_embs = rs.build_class_embeddings(emb, ctx.class_train_idx,
                                                   state.disjunction)
            train_emb = ad.take_rows(emb, ctx.split.train)
            loss = rs.beta_loss(train_emb, train_labels, class_embs,
                                cfg.gamma, include_novel=cfg.learned_prior)
            _check_finite(loss, 1, epoch, state)
            state.opt_p1.zero_grad()
            loss.backward()
            state.opt_p1.step()
            last = float(loss.data)
    return last


def frozen_reasoning(state: ModelState, ctx: RunContext):
    """Inference-mode node embeddings, class regions, and the propagated
    embedding matrix, all detached for phase 2 / evaluation."""
    with no_grad():
        emb = rs.encode(ctx.adj, ctx.x, state.encoder, training=False,
                        update_running=False, propagated_x=ctx.propagated_x)
        class_embs = rs.build_class_embeddings(emb, ctx.class_train_idx,
                                               state.disjunction)
        prop = ad.spmm(ctx.adj, emb) if state.config.context_propagation else None
    return emb, class_embs, prop


def train_phase2(state: ModelState, ctx: RunContext, epochs: int) -> float:
    """Dirichlet-loss epochs for the evidence heads; reasoning parameters
    stay frozen (class regions are rebuilt once at entry)."""
    if epochs == 0:
        return float("nan")
    cfg = state.config
    last = float("nan")
    if state.direct is not None:
        for epoch in range(epochs):
            with _divergence_guard(2, epoch, state):
                batch = ev.direct_evidence_forward(
                    ctx.adj, ctx.x, state.direct, ctx.class_count,
                    training=True, dropout_rate=cfg.dropout_p2,
                    generator=state.rng_p2)
                loss = ev.dirichlet_loss(batch, ctx.labels, ctx.split.train)
                _check_finite(loss, 2, epoch, state)
                state.opt_p2.zero_grad()
                loss.backward()
                state.opt_p2.step()
                last = float(loss.data)
        return last

    with _divergence_guard(2, -1, state):
        emb, class_embs, prop = frozen_reasoning(state, ctx)
    for epoch in range(epochs):
        with _divergence_guard(2, epoch, state):
            batch = ev.evidence_forward(
                ctx.adj, emb, class_embs, state.heads, training=True,
                dropout_rate=cfg.dropout_p2, generator=state.rng_p2,
                propagate=cfg.context_propagation,
                learned_prior=cfg.learned_prior, propagated_nodes=prop)
            loss = ev.dirichlet_loss(batch, ctx.labels, ctx.split.train)
            _check_finite(loss, 2, epoch, state)
            state.opt_p2.zero_grad()
            loss.backward()
            state.opt_p2.step()
            last = float(loss.data)
    return last


def forward_scores(state: ModelState, ctx: RunContext) -> ev.ScoreBatch:
    """Inference-mode scores for every node."""
    with no_grad():
        if state.direct is not None:
            batch = ev.direct_evidence_forward(ctx.adj, ctx.x, state.direct,
                                               ctx.class_count, training=False)
        else:
            emb, class_embs, prop = frozen_reasoning(state, ctx)
            batch = ev.evidence_forward(
                ctx.adj, emb, class_embs, state.heads, training=False,
                propagate=state.config.context_propagation,
                learned_prior=state.config.learned_prior,
                propagated_nodes=prop)
    return ev.score(batch)


def selection_score(acc, roc, rc, config: TrainConfig) -> float:
    """acc + auroc - 10*aurc with configurable weights; the auroc term is
    dropped when no validation OOD nodes exist."""
    score = config.sel_weight_acc * acc - config.sel_weight_aurc * rc
    if roc is not None:
        score += config.sel_weight_auroc * roc
    return float(score)


def validation_metrics(state: ModelState, ctx: RunContext, scores=None):
    split = ctx.split
    sb = scores if scores is not None else forward_scores(state, ctx)
    correct = sb.prediction[split.val] == ctx.labels[split.val]
    acc = accuracy(sb.prediction[split.val], ctx.labels[split.val])
    rc = aurc(-sb.dissonance[split.val], correct)
    roc = None
    if split.ood_val.size:
        roc = auroc(sb.vacuity[split.ood_val], sb.vacuity[split.val])
    return acc, rc, roc


def train_alternating(graph: Graph, split: SplitSpec, config: TrainConfig,
                      ctx: RunContext = None):
    """Run R alternating rounds, score each on validation, and return the
    model restored to its best snapshot plus the per-round history."""
    ctx = ctx or build_context(graph, split, config)
    state = init_model(graph.feature_dim, ctx.class_count, config)
    history = []
    for r in range(config.rounds):
        state.round = r
        bl = train_phase1(state, ctx, config.epochs_p1)
        dl = train_phase2(state, ctx, config.epochs_p2)
        acc, rc, roc = validation_metrics(state, ctx)
        score = selection_score(acc, roc, rc, config)
        history.append({
            "round": r,
            "bl_loss": bl,
            "dl_loss": dl,
            "val_acc": acc,
            "val_aurc": rc,
            "val_auroc": float("nan") if roc is None else roc,
            "selection_score": score,
        })
        if state.best_score is None or score > state.best_score:
            state.best_score = score
            state.best_round = r
            state.best_params = state.snapshot()
    state.load_snapshot(state.best_params)
    return state, history


# -- checkpoint container -------------------------------------------------

CHECKPOINT_VERSION = 1


def save_checkpoint(path, state: ModelState, extra_meta=None):
    """Single .npz holding every tensor by name plus a JSON meta entry."""
    arrays = {name: t.data for name, t in state.all_tensors().items()}
    arrays.update(state.running_stats())
    meta = {
        "version": CHECKPOINT_VERSION,
        "config": asdict(state.config),
        "class_count": state.class_count,
        "feature_dim": state.feature_dim,
        "best_round": state.best_round,
        "best_score": state.best_score,
        "dtypes": {name: str(a.dtype) for name, a in arrays.items()},
        "shapes": {name: list(a.shape) for name, a in arrays.items()},
    }
    if extra_meta:
        meta.update(extra_meta)
    arrays["__meta__"] = np.frombuffer(
        json.dumps(meta).encode("utf-8"), dtype=np.uint8
    )
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path):
    """Returns (ModelState with loaded parameters, meta dict)."""
    with np.load(path) as zf:
        arrays = {name: zf[name] for name in zf.files}
    meta = json.loads(bytes(arrays.pop("__meta__")).decode("utf-8"))
    if meta["version"] != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {meta['version']}")
    cfg_dict = dict(meta["config"])
    cfg_dict["ood_classes"] = tuple(cfg_dict.get("ood_classes", ()))
    cfg_dict["split_ratios"] = tuple(cfg_dict.get("split_ratios", (1, 1, 8)))
    config = TrainConfig(**cfg_dict)
    state = init_model(meta["feature_dim"], meta["class_count"], config)
    state.best_round = meta.get("best_round")
    state.best_score = meta.get("best_score")
    for name, t in state.all_tensors().items():
        if name not in arrays:
            raise ValueError(f"checkpoint missing tensor '{name}'")
        if tuple(arrays[name].shape) != t.data.shape:
            raise ValueError(
                f"checkpoint tensor '{name}' has shape "
                f"{arrays[name].shape}, model expects {t.data.shape}"
            )
        t.data = arrays[name].astype(t.data.dtype)
    if state.encoder is not None:
        state.encoder.bn1.running_mean = arrays["encoder.bn1.running_mean"]
        state.encoder.bn1.running_var = arrays["encoder.bn1.running_var"]
        state.encoder.bn2.running_mean = arrays["encoder.bn2.running_mean"]
        state.encoder.bn2.running_var = arrays["encoder.bn2.running_var"]
    return state, meta
