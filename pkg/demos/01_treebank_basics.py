"""Parse bracketed sentiment trees and survey a small corpus.

Run: python demos/01_treebank_basics.py
"""

import tempfile

from treesent import synth
from treesent.treebank import (
    corpus_stats,
    extract_phrases,
    load_corpus,
    parse_tree,
    serialize_tree,
)

# A sentiment tree is an s-expression: every node carries a 0..4 label,
# leaves carry tokens. Parsing and serializing round-trip exactly.
line = "(3 (2 (2 a) (2 movie)) (4 (2 worth) (4 seeing)))"
tree = parse_tree(line)
print("parsed:", line)
print("round-trip ok:", serialize_tree(tree) == line)
print("root label:", tree.label.value)
print("sentence:", tree.span_text)

# Every node is a labeled phrase in its own right.
print("\nall phrases:")
for rec in extract_phrases(tree):
    marker = " (root)" if rec.is_root else ""
    print(f"  [{rec.label.value}] {rec.text}{marker}")

# Corpus-level statistics over the three standard splits. Here we generate
# a small synthetic corpus; point load_corpus at real treebank files to get
# the published counts instead.
with tempfile.TemporaryDirectory() as d:
    synth.write_dataset(d, n_train=80, n_dev=20, n_test=20, seed=1)
    corpora = [load_corpus(f"{d}/{s}.txt", s) for s in ("train", "dev", "test")]
    stats = corpus_stats(corpora)
    print("\ncorpus statistics:")
    print(stats.to_text())
