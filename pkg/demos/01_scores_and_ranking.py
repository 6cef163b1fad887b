"""Difficulty scores from class probabilities, step by step.

The score of an example is the margin between its two largest class
probabilities: 0 = the model cannot tell the classes apart (hardest),
1 = fully confident (easiest).
"""

import numpy as np

from curlearn import (ClassDistribution, difficulty_score, normalize_restricted,
                      rank_examples, score_dataset, score_histogram)
from curlearn.synthetic import make_noisy_corpus
from curlearn.toy_model import build_probe_scorer

# A distribution that is all but decided is easy...
print("margin of [0.95, 0.05]      ->", difficulty_score(ClassDistribution([0.95, 0.05])))
# ...a coin flip is maximally hard...
print("margin of [0.5, 0.5]        ->", difficulty_score(ClassDistribution([0.5, 0.5])))
# ...and for multi-class only the top two probabilities matter.
print("margin of [0.6, 0.3, 0.1]   ->", difficulty_score(ClassDistribution([0.6, 0.3, 0.1])))

# Raw verbalizer-style mass is renormalized over the kept entries first.
dist = normalize_restricted([3.0, 1.0])
print("normalize_restricted([3,1]) ->", dist.probs, "margin", difficulty_score(dist))

# Score a whole corpus with a quick throwaway probe model. The probe stands
# in for pre-trained confidence; external score files are the faithful path.
corpus = make_noisy_corpus(400, noise=0.1, seed=0)
provider = build_probe_scorer(corpus, probe_fraction=0.5, probe_epochs=4,
                              seed=0, dim=2 ** 12)
table = score_dataset(provider, corpus)
print(f"\nscored {len(table)} examples; "
      f"mean {table.scores.mean():.3f}, min {table.scores.min():.3f}, "
      f"max {table.scores.max():.3f}")

# Ranking sorts ids by score, ties broken by ascending id. Descending order
# puts the easiest examples first.
ranked = rank_examples(table, "descending")
print("five easiest ids:", ranked.order[:5].tolist())
print("five hardest ids:", ranked.order[-5:].tolist())

# A histogram over [0, 1] summarizes the distribution, split by whether the
# probe classifies each example correctly.
preds = np.argmax(table.distributions, axis=1)
hist = score_histogram(table, preds, corpus.labels, bins=10)
print("\nbin     correct incorrect")
for b in range(10):
    lo, hi = hist.bin_edges[b], hist.bin_edges[b + 1]
    print(f"[{lo:.1f},{hi:.1f})   {hist.counts_correct[b]:5d} {hist.counts_incorrect[b]:7d}")
print("low-score bins carry most of the mistakes; that is the whole premise.")
