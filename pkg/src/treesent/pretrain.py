"""Pretraining objectives: masked word prediction and next sentence prediction.

Masking is word-level: all subword pieces of a chosen word are selected
together. Selected positions get the standard 80/10/10 replacement split
([MASK] / random token / unchanged). The toy pretraining loop trains both
objectives jointly with the masked-word head tied to the token embedding.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from . import encoder as enc
from .autodiff import Tensor
from .optim import AdamW, make_rng
from .tokenizer import TokenSequence

__all__ = [
    "IS_NEXT",
    "NOT_NEXT",
    "MaskedExample",
    "NspPair",
    "PretrainState",
    "PretrainConfig",
    "NoMaskablePositionsError",
    "CorpusTooSmallError",
    "mask_tokens",
    "make_nsp_pairs",
    "init_pretrain_state",
    "pretrain_step",
    "pretrain",
]

IS_NEXT = 1
NOT_NEXT = 0

NO_TARGET = -1  # sentinel in the per-position target array


class NoMaskablePositionsError(ValueError):
    pass


class CorpusTooSmallError(ValueError):
    pass


@dataclass(frozen=True)
class MaskedExample:
    seq: TokenSequence
    targets: np.ndarray        # original id at masked positions, NO_TARGET elsewhere
    mask_positions: np.ndarray


@dataclass(frozen=True)
class NspPair:
    seq: TokenSequence
    label: int  # IS_NEXT or NOT_NEXT
    a_text: str = ""
    b_text: str = ""


@dataclass
class PretrainState:
    params: dict            # encoder params + mlm.b + nsp.{w,b}
    config: enc.ModelConfig
    optimizer: AdamW
    step: int = 0
    loss_history: list = field(default_factory=list)  # (step, mlm, nsp)


@dataclass(frozen=True)
class PretrainConfig:
    epochs: int = 3
    batch_size: int = 16
    lr: float = 1e-4
    mask_rate: float = 0.15
    max_len: int = 32
    seed: int = 0
    warmup_frac: float = 0.1
    weight_decay: float = 0.01
    max_steps: int | None = None
    checkpoint_dir: str | None = None


def _maskable_positions(seq, vocab):
    special = {vocab.cls_id, vocab.sep_id, vocab.pad_id}
    return [i for i in range(seq.n_real) if int(seq.ids[i]) not in special]


def mask_tokens(seq: TokenSequence, rate: float, rng, vocab) -> MaskedExample:
    """Word-level masking: each word selected independently with prob rate.

    If no word is selected, one is forced, so every example trains the
    masked-word objective. Per selected position: 80% [MASK], 10% random
    vocab token, 10% unchanged; the target records the original id.
    """
    if not 0.0 < rate < 1.0:
        raise ValueError(f"mask rate {rate} outside (0, 1)")
    positions = _maskable_positions(seq, vocab)
    if not positions:
        raise NoMaskablePositionsError("sequence has no maskable positions")

    # group piece positions into words by the "##" continuation prefix
    words = []
    for i in positions:
        tok = vocab.token_of(int(seq.ids[i]))
        if tok.startswith("##") and words and words[-1][-1] == i - 1:
            words[-1].append(i)
        else:
            words.append([i])

    chosen = [w for w in words if rng.random() < rate]
    if not chosen:
        chosen = [words[rng.integers(len(words))]]

    ids = seq.ids.copy()
    targets = np.full(len(ids), NO_TARGET, dtype=np.int64)
    mask_positions = []
    n_special = len(vocab.special_ids)
    for word in chosen:
        for i in word:
            targets[i] = ids[i]
            mask_positions.append(i)
            r = rng.random()
            if r < 0.8:
                ids[i] = vocab.mask_id
            elif r < 0.9:
                ids[i] = int(rng.integers(n_special, len(vocab)))
            # else: keep the original token
    new_seq = TokenSequence(ids=ids, segment_ids=seq.segment_ids,
                            mask=seq.mask, n_real=seq.n_real)
    return MaskedExample(seq=new_seq, targets=targets,
                         mask_positions=np.array(sorted(mask_positions), dtype=np.int64))


def make_nsp_pairs(corpus, vocab, max_len: int, rng) -> list:
    """Adjacent-sentence pairs, half true continuations, half random."""
    from .tokenizer import encode_pair

    sentences = [tree.span_text for tree in corpus.trees]
    if len(sentences) < 2:
        raise CorpusTooSmallError("need at least 2 sentences for pairing")
    pairs = []
    for i in range(len(sentences) - 1):
        a = sentences[i]
        if rng.random() < 0.5:
            b, label = sentences[i + 1], IS_NEXT
        else:
            b, label = None, NOT_NEXT
            for _ in range(100):
                j = int(rng.integers(len(sentences)))
                if j != i + 1 and sentences[j] != sentences[i + 1]:
                    b = sentences[j]
                    break
            if b is None:  # every sentence equals the true next one
                b, label = sentences[i + 1], IS_NEXT
        seq = encode_pair(a, b, vocab, max_len)
        pairs.append(NspPair(seq=seq, label=label, a_text=a, b_text=b))
    return pairs


def init_pretrain_state(config, vocab_size, seed, hyper: PretrainConfig,
                        total_steps=None) -> PretrainState:
    rng = make_rng(seed, stream=1)
    params = enc.init_params(config, rng)
    h = config.hidden
    params["mlm.b"] = Tensor(np.zeros(vocab_size, dtype=np.float32), requires_grad=True)
    params["nsp.w"] = Tensor(enc._truncated_normal(rng, (h, 2), 0.02), requires_grad=True)
    params["nsp.b"] = Tensor(np.zeros(2, dtype=np.float32), requires_grad=True)
    warmup = int((total_steps or 0) * hyper.warmup_frac)
    opt = AdamW(params, lr=hyper.lr, weight_decay=hyper.weight_decay,
                warmup_steps=warmup, total_steps=total_steps)
    return PretrainState(params=params, config=config, optimizer=opt)


def pretrain_step(state: PretrainState, batch, rng):
    """One joint optimizer step; returns (mlm_loss, nsp_loss) floats.

    ``batch`` is a list of (MaskedExample, nsp_label) built from pair
    encodings: the masked sequence carries both objectives.
    """
    params, config = state.params, state.config
    ids = np.stack([ex.seq.ids for ex, _ in batch])
    segs = np.stack([ex.seq.segment_ids for ex, _ in batch])
    mask = np.stack([ex.seq.mask for ex, _ in batch])
    nsp_labels = np.array([lbl for _, lbl in batch], dtype=np.int64)

    hidden, pooled = enc.encode_batch(ids, segs, mask, params, config,
                                      training=True, rng=rng)
    b, n = ids.shape
    h = config.hidden

    # masked-word head: tied token embedding + bias, at masked positions only
    flat_positions = []
    flat_targets = []
    for row, (ex, _) in enumerate(batch):
        for p in ex.mask_positions:
            flat_positions.append(row * n + int(p))
            flat_targets.append(int(ex.targets[p]))
    flat_positions = np.array(flat_positions, dtype=np.int64)
    flat_targets = np.array(flat_targets, dtype=np.int64)

    hidden_flat = ad.reshape(hidden, (b * n, h))
    masked_states = ad.index_select(hidden_flat, 0, flat_positions)
    mlm_logits = ad.matmul(masked_states, ad.transpose(params["emb.tok"])) + params["mlm.b"]
    mlm_loss = ad.softmax_cross_entropy(mlm_logits, flat_targets)

    nsp_logits = ad.matmul(pooled, params["nsp.w"]) + params["nsp.b"]
    nsp_loss = ad.softmax_cross_entropy(nsp_logits, nsp_labels)

    total = mlm_loss + nsp_loss
    state.optimizer.zero_grad()
    ad.backward(total)
    state.optimizer.step()
    state.step += 1
    mlm_val, nsp_val = float(mlm_loss.data), float(nsp_loss.data)
    state.loss_history.append((state.step, mlm_val, nsp_val))
    return mlm_val, nsp_val


def pretrain(corpus, vocab, config, hyper: PretrainConfig,
             state: PretrainState | None = None,
             checkpoint_fn=None) -> PretrainState:
    """Toy-scale joint pretraining over a treebank corpus.

    Each epoch rebuilds sentence pairs (fresh pairing randomness), masks
    them, and runs shuffled batches. Deterministic for a fixed seed.
    ``checkpoint_fn(state, epoch)``, when given, is called after each epoch.
    """
    if len(corpus.trees) == 0:
        raise CorpusTooSmallError("empty corpus")
    n_pairs = max(len(corpus.trees) - 1, 1)
    steps_per_epoch = max(1, (n_pairs + hyper.batch_size - 1) // hyper.batch_size)
    total_steps = steps_per_epoch * hyper.epochs
    if hyper.max_steps is not None:
        total_steps = min(total_steps, hyper.max_steps)
    if state is None:
        state = init_pretrain_state(config, len(vocab), hyper.seed, hyper,
                                    total_steps=total_steps or None)
    for epoch in range(hyper.epochs):
        rng = make_rng(hyper.seed, stream=1000 + epoch)
        pairs = make_nsp_pairs(corpus, vocab, hyper.max_len, rng)
        examples = []
        for pair in pairs:
            try:
                ex = mask_tokens(pair.seq, hyper.mask_rate, rng, vocab)
            except NoMaskablePositionsError:
                continue
            examples.append((ex, pair.label))
        order = rng.permutation(len(examples))
        for start in range(0, len(examples), hyper.batch_size):
            if hyper.max_steps is not None and state.step >= hyper.max_steps:
                break
            batch = [examples[i] for i in order[start:start + hyper.batch_size]]
            pretrain_step(state, batch, rng)
        if checkpoint_fn is not None:
            checkpoint_fn(state, epoch)
    return state


def loss_history_csv(state: PretrainState) -> str:
    lines = ["step,mlm_loss,nsp_loss"]
    for step, mlm, nsp in state.loss_history:
        lines.append(f"{step},{mlm:.6f},{nsp:.6f}")
    return "\n".join(lines) + "\n"
