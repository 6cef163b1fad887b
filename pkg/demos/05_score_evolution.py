"""How the score distribution moves as the model trains.

Before training, scores cluster low; after an epoch the mass shifts toward
1.0 because the model has seen the data. Re-scoring per epoch is gated
behind the rescore flag since it costs a full pass over the training set.
"""

from curlearn.synthetic import make_noisy_corpus
from curlearn.trainer import TrainConfig, run_training

train = make_noisy_corpus(2000, noise=0.1, seed=9, split_tag="train")
val = make_noisy_corpus(300, noise=0.1, seed=10, split_tag="validation")

config = TrainConfig(epochs=3, strategy="Random", rescore=True, dim=2 ** 14)
outcome = run_training(train, val, val, config, seed=66)

WIDTH = 46
for hist in outcome.report.score_histograms:
    label = "before training" if hist.epoch_tag == 0 else f"after epoch {hist.epoch_tag}"
    print(f"\n{label}  (mean score {hist.mean_score:.3f})")
    totals = hist.total_counts
    peak = max(int(t) for t in totals) or 1
    for b, total in enumerate(totals):
        lo, hi = hist.bin_edges[b], hist.bin_edges[b + 1]
        bar = "#" * round(WIDTH * int(total) / peak)
        print(f"  [{lo:.2f},{hi:.2f}) {bar}")
