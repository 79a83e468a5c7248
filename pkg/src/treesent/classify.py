"""Dropout + softmax classification head, fine-tuning loop, and the
SST-2/SST-5 × all-nodes/root-nodes accuracy grid."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import encoder as enc
from .autodiff import Tensor
from .optim import AdamW, make_rng
from .tokenizer import encode
from .treebank import BinaryLabel, extract_phrases, to_binary

__all__ = [
    "TASK_CLASSES",
    "ClassifierHead",
    "Prediction",
    "EvalReport",
    "FinetuneConfig",
    "EmptyTrainingSetError",
    "LabelSpaceMismatchError",
    "init_head",
    "head_forward",
    "project_label",
    "finetune",
    "accuracy",
    "predict_texts",
    "evaluate",
]

TASK_CLASSES = {"sst2": 2, "sst5": 5}


class EmptyTrainingSetError(ValueError):
    pass


class LabelSpaceMismatchError(ValueError):
    pass


@dataclass
class ClassifierHead:
    weights: Tensor  # (H, K)
    bias: Tensor     # (K,)
    n_classes: int
    dropout_p: float = 0.1

    def __post_init__(self):
        if self.n_classes not in (2, 5):
            raise LabelSpaceMismatchError(f"class count must be 2 or 5, got {self.n_classes}")
        if self.weights.shape[1] != self.n_classes or self.bias.shape != (self.n_classes,):
            raise ad.ShapeMismatchError("head weight shapes do not match class count")


@dataclass(frozen=True)
class Prediction:
    probs: np.ndarray
    label: int


@dataclass
class EvalReport:
    """Accuracy per (task, scope) cell; ``cells[(task, scope)] = (n, acc)``."""

    cells: dict = field(default_factory=dict)
    footer: str = "split: standard train/dev/test; every node occurrence scored"

    def to_tsv(self) -> str:
        lines = ["task\tscope\tn\taccuracy"]
        for (task, scope), (n, acc) in sorted(self.cells.items()):
            shown = f"{100.0 * acc:.1f}" if n > 0 else "n/a"
            lines.append(f"{task}\t{scope}\t{n}\t{shown}")
        lines.append(f"# {self.footer}")
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        payload = {
            "cells": {
                f"{task}/{scope}": {"n": n, "accuracy": acc if n > 0 else None}
                for (task, scope), (n, acc) in sorted(self.cells.items())
            },
            "footer": self.footer,
        }
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"


@dataclass(frozen=True)
class FinetuneConfig:
    epochs: int = 3
    batch_size: int = 32
    lr: float = 2e-5
    head_lr: float = 1e-3
    max_len: int = 64
    seed: int = 0
    freeze_encoder: bool = False
    weight_decay: float = 0.01
    warmup_frac: float = 0.1


def init_head(hidden: int, n_classes: int, rng, dropout_p=0.1) -> ClassifierHead:
    w = enc._truncated_normal(rng, (hidden, n_classes), 0.02)
    return ClassifierHead(
        weights=Tensor(w, requires_grad=True),
        bias=Tensor(np.zeros(n_classes, dtype=np.float32), requires_grad=True),
        n_classes=n_classes,
        dropout_p=dropout_p,
    )


def _head_logits(pooled, head, training, rng):
    dropped = ad.dropout(pooled, head.dropout_p, training, rng)
    return ad.matmul(dropped, head.weights) + head.bias


def head_forward(pooled, head: ClassifierHead, training=False, rng=None) -> Prediction:
    """Softmax probabilities over classes; argmax with lowest-index tie-break."""
    pooled = pooled if isinstance(pooled, Tensor) else Tensor(pooled)
    if pooled.data.shape != (head.weights.shape[0],):
        raise ad.ShapeMismatchError(
            f"pooled shape {pooled.data.shape} vs head hidden {head.weights.shape[0]}"
        )
    with ad.no_grad() if not training else _nullcontext():
        logits = _head_logits(ad.reshape(pooled, (1, -1)), head, training, rng)
        probs = ad.softmax(logits).data[0]
    return Prediction(probs=probs, label=int(np.argmax(probs)))


class _nullcontext:
    def __enter__(self):
        return self

    def __exit__(self, *exc):
        return False


def project_label(label, task: str):
    """Task label index, or None when the sample is excluded (sst2 neutral)."""
    if task == "sst5":
        return label.value
    if task == "sst2":
        binary = to_binary(label)
        if binary is None:
            return None
        return 0 if binary is BinaryLabel.NEGATIVE else 1
    raise LabelSpaceMismatchError(f"unknown task {task!r}")


def accuracy(predictions, golds) -> float:
    """Fraction of exact label matches."""
    if len(predictions) != len(golds):
        raise ValueError(f"length mismatch: {len(predictions)} vs {len(golds)}")
    if len(predictions) == 0:
        raise ValueError("empty prediction list")
    correct = sum(1 for p, g in zip(predictions, golds) if p == g)
    return correct / len(predictions)


def _encode_records(records, vocab, max_len):
    seqs = [encode(r.text, vocab, max_len) for r in records]
    ids = np.stack([s.ids for s in seqs])
    segs = np.stack([s.segment_ids for s in seqs])
    mask = np.stack([s.mask for s in seqs])
    return ids, segs, mask


def predict_texts(texts, params, config, head, vocab, max_len, batch_size=64):
    """Deterministic inference over a list of texts -> list of Prediction."""
    preds = []
    for start in range(0, len(texts), batch_size):
        chunk = texts[start:start + batch_size]
        seqs = [encode(t, vocab, max_len) for t in chunk]
        ids = np.stack([s.ids for s in seqs])
        segs = np.stack([s.segment_ids for s in seqs])
        mask = np.stack([s.mask for s in seqs])
        with ad.no_grad():
            _, pooled = enc.encode_batch(ids, segs, mask, params, config, training=False)
            logits = _head_logits(pooled, head, training=False, rng=None)
            probs = ad.softmax(logits).data
        for row in probs:
            preds.append(Prediction(probs=row, label=int(np.argmax(row))))
    return preds


def _dev_root_accuracy(dev_records, params, config, head, vocab, max_len, task):
    roots = [r for r in dev_records if r.is_root]
    pairs = [(r, project_label(r.label, task)) for r in roots]
    pairs = [(r, y) for r, y in pairs if y is not None]
    if not pairs:
        return 0.0
    preds = predict_texts([r.text for r, _ in pairs], params, config, head, vocab, max_len)
    return accuracy([p.label for p in preds], [y for _, y in pairs])


def finetune(train_records, dev_records, params, config, vocab, task: str,
             hyper: FinetuneConfig, head: ClassifierHead | None = None):
    """Fine-tune encoder + head (or head only) with cross-entropy.

    Returns (params, head, summary). The checkpoint with the best dev root
    accuracy wins; ties keep the earlier epoch. Deterministic per seed.
    """
    if task not in TASK_CLASSES:
        raise LabelSpaceMismatchError(f"unknown task {task!r}")
    k = TASK_CLASSES[task]
    labeled = [(r, project_label(r.label, task)) for r in train_records]
    labeled = [(r, y) for r, y in labeled if y is not None]
    if not labeled:
        raise EmptyTrainingSetError("no usable training samples after label projection")

    rng = make_rng(hyper.seed, stream=2)
    if head is None:
        head = init_head(config.hidden, k, rng)
    elif head.n_classes != k:
        raise LabelSpaceMismatchError(f"head has {head.n_classes} classes, task needs {k}")

    if hyper.epochs == 0:
        return params, head, {"best_epoch": None, "best_dev_root_acc": None}

    trainable = {"head.w": head.weights, "head.b": head.bias}
    lr = hyper.head_lr if hyper.freeze_encoder else hyper.lr
    if not hyper.freeze_encoder:
        trainable.update(params)
    steps_per_epoch = max(1, (len(labeled) + hyper.batch_size - 1) // hyper.batch_size)
    total = steps_per_epoch * hyper.epochs
    opt = AdamW(trainable, lr=lr, weight_decay=hyper.weight_decay,
                warmup_steps=int(total * hyper.warmup_frac), total_steps=total)

    ids, segs, mask = _encode_records([r for r, _ in labeled], vocab, hyper.max_len)
    labels = np.array([y for _, y in labeled], dtype=np.int64)

    best = None  # (acc, epoch, params_data, head_data)
    for epoch in range(hyper.epochs):
        order = rng.permutation(len(labeled))
        for start in range(0, len(labeled), hyper.batch_size):
            sel = order[start:start + hyper.batch_size]
            if hyper.freeze_encoder:
                with ad.no_grad():
                    _, pooled_const = enc.encode_batch(
                        ids[sel], segs[sel], mask[sel], params, config, training=False)
                pooled = Tensor(pooled_const.data)
            else:
                _, pooled = enc.encode_batch(ids[sel], segs[sel], mask[sel],
                                             params, config, training=True, rng=rng)
            logits = _head_logits(pooled, head, training=True, rng=rng)
            loss = ad.softmax_cross_entropy(logits, labels[sel])
            opt.zero_grad()
            ad.backward(loss)
            opt.step()
        dev_acc = _dev_root_accuracy(dev_records, params, config, head, vocab,
                                     hyper.max_len, task)
        if best is None or dev_acc > best[0]:
            best = (dev_acc, epoch,
                    {k_: p.data.copy() for k_, p in params.items()},
                    (head.weights.data.copy(), head.bias.data.copy()))

    for name, data in best[2].items():
        params[name].data = data
    head.weights.data, head.bias.data = best[3]
    return params, head, {"best_epoch": best[1], "best_dev_root_acc": best[0]}


def evaluate(params, config, head, vocab, corpora, cells, max_len=64,
             batch_size=64) -> EvalReport:
    """Score the requested (task, scope) cells over every node occurrence.

    Empty cells (e.g. sst2 root on all-neutral roots) report n=0 and are
    flagged rather than raising.
    """
    task_of_head = "sst2" if head.n_classes == 2 else "sst5"
    for task, _ in cells:
        if task != task_of_head:
            raise LabelSpaceMismatchError(
                f"cell task {task} does not match head label space {task_of_head}")

    records = []
    for corpus in corpora:
        for tree in corpus.trees:
            records.extend(extract_phrases(tree))

    golds = [project_label(r.label, task_of_head) for r in records]
    usable = [(r, y) for r, y in zip(records, golds) if y is not None]
    preds = predict_texts([r.text for r, _ in usable], params, config, head,
                          vocab, max_len, batch_size=batch_size)

    report = EvalReport()
    for task, scope in cells:
        if scope == "root":
            triple = [(p, y) for p, (r, y) in zip(preds, usable) if r.is_root]
        else:
            triple = list(zip(preds, [y for _, y in usable]))
        if not triple:
            report.cells[(task, scope)] = (0, 0.0)
            continue
        acc = accuracy([p.label for p, _ in triple], [y for _, y in triple])
        report.cells[(task, scope)] = (len(triple), acc)
    return report
