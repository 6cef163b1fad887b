"""Synthetic text corpora for demos and desk-scale experiments.

No benchmark data ships with this package; these generators produce small
labeled corpora whose difficulty structure is controllable, which is all
the sampling strategies need to be exercised end to end.
"""

from __future__ import annotations

import numpy as np

from .dataset_io import Dataset, Example


def make_separable_corpus(n: int, class_count: int = 2, words_per_text: int = 6,
                          vocab_per_class: int = 50, seed: int = 0,
                          split_tag: str = "train") -> Dataset:
    """Linearly separable corpus: each class draws from its own vocabulary."""
    rng = np.random.default_rng(seed)
    examples = []
    for i in range(n):
        label = i % class_count
        words = rng.integers(0, vocab_per_class, size=words_per_text)
        text = " ".join(f"c{label}w{w}" for w in words)
        examples.append(Example(id=i, text=text, label=label))
    return Dataset(examples=examples, class_count=class_count, split_tag=split_tag)


def make_noisy_corpus(n: int, noise: float = 0.1, class_count: int = 2,
                      words_per_text: int = 8, vocab_per_class: int = 50,
                      shared_vocab: int = 200, seed: int = 0,
                      split_tag: str = "train") -> Dataset:
    """Corpus with a built-in difficulty gradient and label noise.

    Each example mixes k class-specific signal words (k uniform over
    0..words_per_text) with shared filler words, so margins spread from
    hopeless to easy; a ``noise`` fraction of labels is flipped uniformly
    to another class.
    """
    rng = np.random.default_rng(seed)
    examples = []
    for i in range(n):
        label = int(rng.integers(class_count))
        k = int(rng.integers(0, words_per_text + 1))
        signal = [f"c{label}w{w}" for w in rng.integers(0, vocab_per_class, size=k)]
        filler = [f"sw{w}" for w in rng.integers(0, shared_vocab, size=words_per_text - k)]
        words = signal + filler
        rng.shuffle(words)
        observed = label
        if rng.random() < noise:
            observed = int((label + 1 + rng.integers(class_count - 1)) % class_count)
        examples.append(Example(id=i, text=" ".join(words), label=observed))
    return Dataset(examples=examples, class_count=class_count, split_tag=split_tag)
