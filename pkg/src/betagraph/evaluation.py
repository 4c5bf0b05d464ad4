"""Report assembly for the three tasks, multi-seed protocol, baselines.

Task conventions:

  IDC   accuracy of predictions on the in-distribution test nodes;
  MD    risk-coverage area with confidence = -dissonance (primary), plus
        AUROC/AUPR where positives are the misclassified test nodes
        scored by dissonance;
  OODD  FPR95 / AUROC / AUPR with the vacuity score, in-distribution test
        nodes against held-out-class test nodes.

run_protocol repeats split -> train -> evaluate over a seed list and
aggregates mean and standard deviation per metric, mirroring the usual
report-five-runs convention.  A plain cross-entropy graph classifier
provides MaxLogit and Energy comparison scores.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from . import metrics as mt
from .autodiff import Adam, Tensor, no_grad
from .graphs import Graph, SplitSpec, make_split
from .reasoning import glorot
from .rng import substream
from .training import (ModelState, RunContext, TrainConfig, build_context,
                       forward_scores, train_alternating)


@dataclass
class EvalReport:
    seed: int
    acc: float
    aurc: float
    aurc_x1000: float
    fpr95: float = None
    auroc: float = None
    aupr: float = None
    md_auroc: float = None
    md_aupr: float = None
    wall_clock: float = None
    config_hash: str = None
    extras: dict = field(default_factory=dict)

    def to_dict(self):
        out = {
            "seed": self.seed,
            "acc": self.acc,
            "aurc": self.aurc,
            "aurc_x1000": self.aurc_x1000,
            "fpr95": self.fpr95,
            "auroc": self.auroc,
            "aupr": self.aupr,
            "md_auroc": self.md_auroc,
            "md_aupr": self.md_aupr,
            "wall_clock": self.wall_clock,
            "config_hash": self.config_hash,
        }
        out.update(self.extras)
        return out

    def to_json(self):
        return json.dumps(self.to_dict(), indent=1)


METRIC_FIELDS = ("acc", "aurc", "aurc_x1000", "fpr95", "auroc", "aupr",
                 "md_auroc", "md_aupr")


def evaluate(state: ModelState, graph: Graph, split: SplitSpec,
             ctx: RunContext = None, seed=None, config_hash=None) -> EvalReport:
    """Score a trained model on its split's test partitions."""
    t0 = time.perf_counter()
    ctx = ctx or build_context(graph, split, state.config)
    sb = forward_scores(state, ctx)
    test = split.test
    labels = ctx.labels
    correct = sb.prediction[test] == labels[test]
    acc = mt.accuracy(sb.prediction[test], labels[test])
    rc = mt.aurc(-sb.dissonance[test], correct)

    report = EvalReport(
        seed=state.config.seed if seed is None else seed,
        acc=acc, aurc=rc, aurc_x1000=1000.0 * rc,
        config_hash=config_hash,
    )
    if np.any(correct) and np.any(~correct):
        report.md_auroc = mt.auroc(sb.dissonance[test][~correct],
                                   sb.dissonance[test][correct])
        report.md_aupr = mt.aupr(sb.dissonance[test][~correct],
                                 sb.dissonance[test][correct])
    if split.has_ood:
        vac_id = sb.vacuity[test]
        vac_ood = sb.vacuity[split.ood_test]
        report.fpr95 = mt.fpr_at_tpr(vac_id, vac_ood)
        report.auroc = mt.auroc(vac_ood, vac_id)
        report.aupr = mt.aupr(vac_ood, vac_id)
    report.wall_clock = time.perf_counter() - t0
    return report


def aggregate(reports) -> dict:
    """Mean and std per metric over per-seed reports (absent values skipped)."""
    out = {"seeds": [r.seed for r in reports], "runs": len(reports)}
    for name in METRIC_FIELDS:
        vals = [getattr(r, name) for r in reports if getattr(r, name) is not None]
        if not vals:
            out[f"{name}_mean"] = None
            out[f"{name}_std"] = None
            continue
        arr = np.asarray(vals, dtype=np.float64)
        out[f"{name}_mean"] = float(arr.mean())
        out[f"{name}_std"] = float(arr.std())
    return out


def run_protocol(graph: Graph, ood_classes, config: TrainConfig, seeds,
                 progress=None):
    """split -> train -> evaluate per seed; returns (reports, aggregate).

    Each seed drives both the split construction and the training run.
    """
    reports = []
    chash = config_hash(config)
    for s in seeds:
        split = make_split(graph, ood_classes, ratios=config.split_ratios,
                           ood_val_fraction=config.ood_val_fraction, seed=s)
        cfg = TrainConfig(**{**asdict(config), "seed": int(s)})
        t0 = time.perf_counter()
        state, _ = train_alternating(graph, split, cfg)
        rep = evaluate(state, graph, split, seed=int(s), config_hash=chash)
        rep.wall_clock = time.perf_counter() - t0
        rep.extras["best_round"] = state.best_round
        rep.extras["selection_score"] = state.best_score
        reports.append(rep)
        if progress is not None:
            progress(rep)
    return reports, aggregate(reports)


def config_hash(config: TrainConfig) -> str:
    """Stable digest of a config (seed excluded: it names the run, not
    the experiment)."""
    payload = {k: v for k, v in asdict(config).items() if k != "seed"}
    return hashlib.sha256(
        json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]


def curves(state: ModelState, graph: Graph, split: SplitSpec,
           ctx: RunContext = None):
    """Plot-ready risk-coverage and ROC curves for a trained model."""
    ctx = ctx or build_context(graph, split, state.config)
    sb = forward_scores(state, ctx)
    test = split.test
    correct = sb.prediction[test] == ctx.labels[test]
    coverage, risk = mt.risk_coverage_curve(-sb.dissonance[test], correct)
    out = {"risk_coverage": (coverage, risk)}
    if split.has_ood:
        fpr, tpr = mt.roc_curve(sb.vacuity[split.ood_test], sb.vacuity[test])
        out["roc"] = (fpr, tpr)
    return out


def node_scores_table(state: ModelState, graph: Graph, split: SplitSpec,
                      ctx: RunContext = None):
    """Per-node rows: node_id, prediction, dissonance, vacuity, p_0..p_{K-1}.

    Predictions are reported as original dataset class ids.
    """
    ctx = ctx or build_context(graph, split, state.config)
    sb = forward_scores(state, ctx)
    id_classes = np.asarray(split.id_classes, dtype=np.int64)
    preds = id_classes[sb.prediction]
    k = sb.probability.shape[1]
    header = ["node_id", "prediction", "dissonance", "vacuity"] + \
        [f"p_{i}" for i in range(k)]
    rows = []
    for i in range(graph.n):
        row = [str(i), str(int(preds[i])), repr(float(sb.dissonance[i])),
               repr(float(sb.vacuity[i]))]
        row += [repr(float(v)) for v in sb.probability[i]]
        rows.append(row)
    return header, rows


# -- plain cross-entropy classifier for MaxLogit / Energy -------------------

@dataclass
class BaselineClassifier:
    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor

    def params(self):
        return [self.w1, self.b1, self.w2, self.b2]


def train_baseline(graph: Graph, split: SplitSpec, *, hidden_dim=64, lr=0.01,
                   dropout=0.5, epochs=200, seed=0, dtype="float32"):
    """Two-layer graph classifier trained with cross entropy on the split's
    training nodes; returns (model, logits over all nodes)."""
    from .graphs import normalize_adjacency, remap_labels
    adj = normalize_adjacency(graph)
    labels = remap_labels(graph, split)
    k = len(split.id_classes)
    dt = np.dtype(dtype)
    gen = substream(seed, 10)
    drop = substream(seed, 11)
    x = Tensor(graph.features.astype(dt))
    model = BaselineClassifier(
        w1=glorot(gen, graph.feature_dim, hidden_dim, dt),
        b1=Tensor(np.zeros(hidden_dim, dtype=dt), requires_grad=True),
        w2=glorot(gen, hidden_dim, k, dt),
        b2=Tensor(np.zeros(k, dtype=dt), requires_grad=True),
    )
    with no_grad():
        px = ad.spmm(adj, x)

    def forward(training):
        h = ad.relu(ad.add(ad.matmul(px, model.w1), model.b1))
        if training and dropout > 0:
            h = ad.dropout(h, dropout, drop, training=True)
        return ad.add(ad.spmm(adj, ad.matmul(h, model.w2)), model.b2)

    opt = Adam(model.params(), lr=lr)
    train_idx = split.train
    y = labels[train_idx]
    onehot = np.zeros((train_idx.size, k), dtype=dt)
    onehot[np.arange(train_idx.size), y] = 1.0
    for _ in range(epochs):
        logits = ad.take_rows(forward(True), train_idx)
        lse = ad.logsumexp(logits, axis=1)
        picked = ad.tsum(ad.mul(logits, onehot), axis=1)
        loss = ad.tmean(ad.sub(lse, picked))
        if not np.isfinite(loss.data):
            raise RuntimeError("baseline classifier diverged")
        opt.zero_grad()
        loss.backward()
        opt.step()
    with no_grad():
        logits = forward(False)
    return model, logits.data


def baseline_report(graph: Graph, split: SplitSpec, seed=0, epochs=200) -> dict:
    """OODD metrics for the MaxLogit and Energy scores of the plain
    classifier (markers for the uncertainty-based pipeline to beat)."""
    _, logits = train_baseline(graph, split, seed=seed, epochs=epochs)
    maxlogit, energy = mt.baseline_scores(logits)
    out = {}
    labels_pred = logits.argmax(axis=1)
    from .graphs import remap_labels
    labels = remap_labels(graph, split)
    test = split.test
    out["acc"] = mt.accuracy(labels_pred[test], labels[test])
    for name, score in (("maxlogit", maxlogit), ("energy", energy)):
        correct = labels_pred[test] == labels[test]
        out[f"{name}_md_aurc"] = mt.aurc(-score[test], correct)
        if split.has_ood:
            out[f"{name}_fpr95"] = mt.fpr_at_tpr(score[test],
                                                 score[split.ood_test])
            out[f"{name}_auroc"] = mt.auroc(score[split.ood_test], score[test])
            out[f"{name}_aupr"] = mt.aupr(score[split.ood_test], score[test])
    return out
