"""Synthetic treebank generator for demos and data-free test runs.

Sentences are built from polarity-bearing word pools; every node's label is
the (clipped) mean polarity of its span, so the sentiment signal is
learnable by construction. Output matches the one-tree-per-line treebank
file format.
"""

from __future__ import annotations

import os

from .optim import make_rng
from .treebank import Corpus, PhraseTree, SentimentLabel, serialize_tree

WORD_POLARITY = {
    "dreadful": -2, "awful": -2, "unbearable": -2, "disaster": -2, "horrid": -2,
    "boring": -1, "weak": -1, "flawed": -1, "tedious": -1, "shallow": -1,
    "movie": 0, "film": 0, "story": 0, "actor": 0, "scene": 0, "plot": 0,
    "decent": 1, "solid": 1, "charming": 1, "pleasant": 1, "engaging": 1,
    "brilliant": 2, "stunning": 2, "masterpiece": 2, "superb": 2, "glorious": 2,
}


def _label_of(words):
    total = sum(WORD_POLARITY[w] for w in words)
    avg = total / len(words)
    return SentimentLabel(max(0, min(4, round(avg + 2))))


def _build_tree(words):
    """Right-branching binary tree; each node labeled by its span polarity."""
    if len(words) == 1:
        return PhraseTree(_label_of(words), token=words[0])
    left = PhraseTree(_label_of(words[:1]), token=words[0])
    right = _build_tree(words[1:])
    return PhraseTree(_label_of(words), children=(left, right))


def make_corpus(split: str, n_sentences: int, seed: int = 0,
                min_words: int = 3, max_words: int = 7) -> Corpus:
    stream = {"train": 11, "dev": 12, "test": 13}.get(split, 14)
    rng = make_rng(seed, stream=stream)
    pool = sorted(WORD_POLARITY)
    trees = []
    for _ in range(n_sentences):
        n = int(rng.integers(min_words, max_words + 1))
        words = [pool[int(rng.integers(len(pool)))] for _ in range(n)]
        trees.append(_build_tree(words))
    return Corpus(split=split, trees=tuple(trees))


def write_dataset(directory, n_train=200, n_dev=50, n_test=50, seed: int = 0):
    """Write train/dev/test treebank files; returns the three corpora."""
    os.makedirs(directory, exist_ok=True)
    corpora = [
        make_corpus("train", n_train, seed),
        make_corpus("dev", n_dev, seed + 1),
        make_corpus("test", n_test, seed + 2),
    ]
    for corpus in corpora:
        with open(os.path.join(directory, f"{corpus.split}.txt"), "w",
                  encoding="utf-8") as fh:
            for tree in corpus.trees:
                fh.write(serialize_tree(tree) + "\n")
    return corpora
