"""Bidirectional Transformer encoder: embeddings, attention blocks, pooler.

Post-layer-norm block order, learned absolute position embeddings, and a
tanh pooler over the first (classification) position. Parameters live in a
flat name -> Tensor dict using the checkpoint naming scheme:

    emb.tok, emb.pos, emb.seg, emb.ln.{g,b},
    layer.<i>.attn.{q,k,v,o}.{w,b}, layer.<i>.ffn.{in,out}.{w,b},
    layer.<i>.ln{1,2}.{g,b}, pooler.{w,b}
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

__all__ = [
    "ModelConfig",
    "UnknownPresetError",
    "preset",
    "param_count",
    "param_shapes",
    "init_params",
    "attention_block",
    "encode",
    "encode_batch",
]

NEG_INF = -1e9  # additive attention mask on padded keys


class UnknownPresetError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    layers: int
    hidden: int
    heads: int
    intermediate: int
    vocab_size: int
    max_positions: int
    segment_types: int = 2
    dropout_p: float = 0.1

    def __post_init__(self):
        if self.hidden % self.heads != 0:
            raise ValueError(f"hidden {self.hidden} not divisible by heads {self.heads}")

    @property
    def head_width(self):
        return self.hidden // self.heads

    def to_dict(self):
        return {
            "layers": self.layers,
            "hidden": self.hidden,
            "heads": self.heads,
            "intermediate": self.intermediate,
            "vocab_size": self.vocab_size,
            "max_positions": self.max_positions,
            "segment_types": self.segment_types,
            "dropout_p": self.dropout_p,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


_PRESETS = {
    "base": dict(layers=12, hidden=768, heads=12, intermediate=3072,
                 vocab_size=30522, max_positions=512),
    "large": dict(layers=24, hidden=1024, heads=16, intermediate=4096,
                  vocab_size=30522, max_positions=512),
    "toy": dict(layers=2, hidden=64, heads=2, intermediate=256,
                vocab_size=2000, max_positions=64),
}


def preset(name: str, **overrides) -> ModelConfig:
    if name not in _PRESETS:
        raise UnknownPresetError(f"unknown preset {name!r}; choose from {sorted(_PRESETS)}")
    cfg = ModelConfig(**_PRESETS[name])
    return replace(cfg, **overrides) if overrides else cfg


def param_shapes(config: ModelConfig) -> dict:
    """Name -> shape map for every trainable encoder tensor."""
    h, f = config.hidden, config.intermediate
    shapes = {
        "emb.tok": (config.vocab_size, h),
        "emb.pos": (config.max_positions, h),
        "emb.seg": (config.segment_types, h),
        "emb.ln.g": (h,),
        "emb.ln.b": (h,),
        "pooler.w": (h, h),
        "pooler.b": (h,),
    }
    for i in range(config.layers):
        for p in ("q", "k", "v", "o"):
            shapes[f"layer.{i}.attn.{p}.w"] = (h, h)
            shapes[f"layer.{i}.attn.{p}.b"] = (h,)
        shapes[f"layer.{i}.ffn.in.w"] = (h, f)
        shapes[f"layer.{i}.ffn.in.b"] = (f,)
        shapes[f"layer.{i}.ffn.out.w"] = (f, h)
        shapes[f"layer.{i}.ffn.out.b"] = (h,)
        for ln in ("ln1", "ln2"):
            shapes[f"layer.{i}.{ln}.g"] = (h,)
            shapes[f"layer.{i}.{ln}.b"] = (h,)
    return shapes


def param_count(config: ModelConfig) -> int:
    """Exact trainable scalar count."""
    return sum(int(np.prod(s)) for s in param_shapes(config).values())


def _truncated_normal(rng, shape, std):
    """Normal(0, std) with draws beyond 2 std redrawn."""
    out = rng.normal(0.0, std, size=shape)
    bad = np.abs(out) > 2 * std
    while bad.any():
        out[bad] = rng.normal(0.0, std, size=int(bad.sum()))
        bad = np.abs(out) > 2 * std
    return out.astype(np.float32)


def init_params(config: ModelConfig, rng, std=0.02, dtype=np.float32) -> dict:
    """Truncated-normal weights, zero biases, unit layer-norm gains."""
    params = {}
    for name, shape in param_shapes(config).items():
        leaf = name.rsplit(".", 1)[-1]
        if leaf == "g":
            data = np.ones(shape, dtype=np.float32)
        elif leaf == "b":
            data = np.zeros(shape, dtype=np.float32)
        else:
            data = _truncated_normal(rng, shape, std)
        params[name] = Tensor(data, requires_grad=True, dtype=dtype)
    return params


def _linear(x, params, prefix):
    return ad.matmul(x, params[prefix + ".w"]) + params[prefix + ".b"]


def attention_block(x, params, layer: int, config: ModelConfig, mask,
                    training=False, rng=None):
    """One Transformer block over (..., n, H) with a per-key {0,1} mask.

    Multi-head scaled dot-product attention (padded keys get a large
    negative additive bias before softmax), residual + layer-norm, then a
    GELU feed-forward with its own residual + layer-norm.
    """
    prefix = f"layer.{layer}"
    a, d = config.heads, config.head_width
    mask = np.asarray(mask)
    lead = x.shape[:-2]
    n = x.shape[-2]
    if mask.shape[-1] != n:
        raise ad.ShapeMismatchError(f"mask length {mask.shape[-1]} != sequence length {n}")

    def split_heads(t):
        t = ad.reshape(t, lead + (n, a, d))
        axes = tuple(range(len(lead))) + (len(lead) + 1, len(lead), len(lead) + 2)
        return ad.transpose(t, axes)  # (..., A, n, d)

    q = split_heads(_linear(x, params, f"{prefix}.attn.q"))
    k = split_heads(_linear(x, params, f"{prefix}.attn.k"))
    v = split_heads(_linear(x, params, f"{prefix}.attn.v"))

    scores = ad.matmul(q, ad.transpose(k, tuple(range(q.data.ndim - 2)) + (q.data.ndim - 1, q.data.ndim - 2)))
    scores = ad.mul(scores, 1.0 / math.sqrt(d))
    # additive mask broadcast over heads and query positions
    key_bias = (1.0 - mask.astype(np.float64)) * NEG_INF
    key_bias = key_bias.reshape(lead + (1, 1, n) if lead else (1, 1, n))
    scores = scores + Tensor(key_bias.astype(np.float32))
    attn = ad.softmax(scores)
    attn = ad.dropout(attn, config.dropout_p, training, rng)

    ctx = ad.matmul(attn, v)  # (..., A, n, d)
    axes = tuple(range(len(lead))) + (len(lead) + 1, len(lead), len(lead) + 2)
    ctx = ad.reshape(ad.transpose(ctx, axes), lead + (n, a * d))
    attn_out = _linear(ctx, params, f"{prefix}.attn.o")
    attn_out = ad.dropout(attn_out, config.dropout_p, training, rng)
    x = ad.layer_norm(x + attn_out, params[f"{prefix}.ln1.g"], params[f"{prefix}.ln1.b"])

    ff = ad.gelu(_linear(x, params, f"{prefix}.ffn.in"))
    ff = _linear(ff, params, f"{prefix}.ffn.out")
    ff = ad.dropout(ff, config.dropout_p, training, rng)
    return ad.layer_norm(x + ff, params[f"{prefix}.ln2.g"], params[f"{prefix}.ln2.b"])


def encode_batch(ids, segment_ids, mask, params, config: ModelConfig,
                 training=False, rng=None):
    """Encode a batch: (B, n) int arrays -> (hidden (B, n, H), pooled (B, H))."""
    ids = np.asarray(ids)
    segment_ids = np.asarray(segment_ids)
    mask = np.asarray(mask)
    b, n = ids.shape
    if n > config.max_positions:
        raise ad.IndexOutOfRangeError(f"sequence length {n} > max_positions {config.max_positions}")

    tok = ad.embedding_lookup(params["emb.tok"], ids)
    pos = ad.embedding_lookup(params["emb.pos"], np.arange(n))
    seg = ad.embedding_lookup(params["emb.seg"], segment_ids)
    x = tok + pos + seg
    x = ad.layer_norm(x, params["emb.ln.g"], params["emb.ln.b"])
    x = ad.dropout(x, config.dropout_p, training, rng)

    for layer in range(config.layers):
        x = attention_block(x, params, layer, config, mask, training=training, rng=rng)

    first = ad.reshape(ad.index_select(x, 1, np.array([0])), (b, config.hidden))
    pooled = ad.tanh(ad.matmul(first, params["pooler.w"]) + params["pooler.b"])
    return x, pooled


def encode(seq, params, config: ModelConfig, training=False, rng=None):
    """Encode one TokenSequence -> (hidden (max_len, H), pooled (H,))."""
    hidden, pooled = encode_batch(
        seq.ids[None, :], seq.segment_ids[None, :], seq.mask[None, :],
        params, config, training=training, rng=rng,
    )
    n = seq.ids.shape[0]
    return ad.reshape(hidden, (n, config.hidden)), ad.reshape(pooled, (config.hidden,))
