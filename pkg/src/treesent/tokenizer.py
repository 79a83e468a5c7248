"""Text preprocessing: canonicalization, WordPiece, and sequence assembly.

Canonicalization lowercases and strips digits, punctuation, and accent
marks. WordPiece uses greedy longest-match-first segmentation with "##"
continuation pieces; the vocabulary is induced by frequency ranking (not
likelihood training) at desk scale.
"""

from __future__ import annotations

import unicodedata
from collections import Counter
from dataclasses import dataclass

import numpy as np

__all__ = [
    "PAD", "UNK", "CLS", "SEP", "MASK", "SPECIAL_TOKENS",
    "Vocab", "TokenSequence", "TargetTooSmallError",
    "canonicalize", "wordpiece", "build_vocab", "encode", "encode_pair",
]

PAD, UNK, CLS, SEP, MASK = "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"
SPECIAL_TOKENS = (PAD, UNK, CLS, SEP, MASK)

MAX_WORD_CHARS = 100  # longer words become [UNK] outright


class TargetTooSmallError(ValueError):
    pass


class Vocab:
    """Ordered token list; id = position. Specials occupy ids 0-4."""

    def __init__(self, tokens):
        tokens = list(tokens)
        if tokens[: len(SPECIAL_TOKENS)] != list(SPECIAL_TOKENS):
            raise ValueError("vocab must start with [PAD],[UNK],[CLS],[SEP],[MASK]")
        if len(set(tokens)) != len(tokens):
            raise ValueError("duplicate tokens in vocab")
        self.tokens = tokens
        self.index = {t: i for i, t in enumerate(tokens)}
        self.pad_id = self.index[PAD]
        self.unk_id = self.index[UNK]
        self.cls_id = self.index[CLS]
        self.sep_id = self.index[SEP]
        self.mask_id = self.index[MASK]

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self.index

    def id_of(self, token):
        return self.index[token]

    def token_of(self, idx):
        return self.tokens[idx]

    @property
    def special_ids(self):
        return frozenset(range(len(SPECIAL_TOKENS)))

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            for t in self.tokens:
                fh.write(t + "\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls([line.rstrip("\n") for line in fh if line.rstrip("\n")])


@dataclass(frozen=True)
class TokenSequence:
    """Padded id sequence with segment ids and a real-token mask."""

    ids: np.ndarray
    segment_ids: np.ndarray
    mask: np.ndarray
    n_real: int

    def __post_init__(self):
        assert self.ids.shape == self.segment_ids.shape == self.mask.shape
        assert int(self.mask.sum()) == self.n_real


def canonicalize(text: str) -> str:
    """Lowercase; drop digits, punctuation, and combining accents.

    Removed symbols become spaces (so hyphenated words split), runs of
    whitespace collapse, and the result is trimmed. Idempotent.
    """
    out = []
    for ch in unicodedata.normalize("NFD", text):
        cat = unicodedata.category(ch)
        if cat == "Mn":
            continue
        if cat == "Nd" or cat.startswith("P") or ch.isspace():
            out.append(" ")
        else:
            out.append(ch.lower())
    return " ".join("".join(out).split())


def wordpiece(word: str, vocab: Vocab) -> list:
    """Greedy longest-match-first subword segmentation.

    Returns ["[UNK]"] when any remaining prefix has no vocab match (the
    character alphabet in a built vocab makes this rare).
    """
    if len(word) > MAX_WORD_CHARS:
        return [UNK]
    pieces = []
    start = 0
    n = len(word)
    while start < n:
        end = n
        found = None
        while end > start:
            piece = word[start:end]
            if start > 0:
                piece = "##" + piece
            if piece in vocab:
                found = piece
                break
            end -= 1
        if found is None:
            return [UNK]
        pieces.append(found)
        start = end
    return pieces


def _word_candidates(word):
    """Multi-char subword candidates of one word, in vocab spelling."""
    n = len(word)
    cands = set()
    for i in range(n):
        for j in range(i + 2, n + 1):
            piece = word[i:j]
            cands.add(piece if i == 0 else "##" + piece)
    return cands


def build_vocab(corpora, target_size: int) -> Vocab:
    """Frequency-ranked vocab: specials, full alphabet, then subwords.

    Every corpus character appears both bare and "##"-prefixed so greedy
    segmentation can always fall back to characters. Deterministic: ties
    break lexicographically. May come up short of target_size when the
    corpus has too few candidates.
    """
    word_freq = Counter()
    for corpus in corpora:
        for tree in corpus.trees:
            for w in canonicalize(tree.span_text).split():
                word_freq[w[:MAX_WORD_CHARS]] += 1

    alphabet = sorted({ch for w in word_freq for ch in w})
    base = list(SPECIAL_TOKENS) + alphabet + ["##" + ch for ch in alphabet]
    if target_size < len(base):
        raise TargetTooSmallError(
            f"target_size {target_size} < specials + alphabet ({len(base)})"
        )

    cand_freq = Counter()
    for w, f in word_freq.items():
        for c in _word_candidates(w):
            cand_freq[c] += f

    tokens = list(base)
    have = set(tokens)
    ranked = sorted(cand_freq.items(), key=lambda kv: (-kv[1], kv[0]))
    for tok, _ in ranked:
        if len(tokens) >= target_size:
            break
        if tok not in have:
            tokens.append(tok)
            have.add(tok)
    return Vocab(tokens)


def _pieces_of(text, vocab):
    pieces = []
    for w in canonicalize(text).split():
        pieces.extend(wordpiece(w, vocab))
    return pieces


def _assemble(piece_ids_a, piece_ids_b, vocab, max_len):
    ids = [vocab.cls_id] + piece_ids_a + [vocab.sep_id]
    segs = [0] * len(ids)
    if piece_ids_b is not None:
        ids += piece_ids_b + [vocab.sep_id]
        segs += [1] * (len(piece_ids_b) + 1)
    n_real = len(ids)
    pad = max_len - n_real
    ids = np.array(ids + [vocab.pad_id] * pad, dtype=np.int64)
    segs = np.array(segs + [0] * pad, dtype=np.int64)
    mask = np.zeros(max_len, dtype=np.int64)
    mask[:n_real] = 1
    return TokenSequence(ids=ids, segment_ids=segs, mask=mask, n_real=n_real)


def encode(text: str, vocab: Vocab, max_len: int) -> TokenSequence:
    """[CLS] pieces [SEP], truncated from the right, then padded."""
    if max_len < 3:
        raise ValueError("max_len must be at least 3")
    piece_ids = [vocab.id_of(p) for p in _pieces_of(text, vocab)]
    piece_ids = piece_ids[: max_len - 2]
    return _assemble(piece_ids, None, vocab, max_len)


def encode_pair(a: str, b: str, vocab: Vocab, max_len: int) -> TokenSequence:
    """[CLS] a [SEP] b [SEP] with longest-first alternating truncation."""
    if max_len < 5:
        raise ValueError("max_len must be at least 5")
    ids_a = [vocab.id_of(p) for p in _pieces_of(a, vocab)]
    ids_b = [vocab.id_of(p) for p in _pieces_of(b, vocab)]
    budget = max_len - 3
    while len(ids_a) + len(ids_b) > budget:
        if len(ids_a) > len(ids_b):
            ids_a.pop()
        else:
            ids_b.pop()
    return _assemble(ids_a, ids_b, vocab, max_len)
