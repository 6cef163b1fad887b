"""Loading, tokenizing, splitting and persisting labeled text datasets.

File formats (one record = one example):

* JSONL: fields ``id`` (optional; must equal the 0-based line index when
  present), ``text``, ``text_pair`` (optional), ``label``.
* CSV: RFC-4180, UTF-8, header row required, columns mirroring the JSONL
  fields. An empty ``text_pair`` cell means "no pair".

External score files are JSONL records ``{"id": int, "probs": [C floats]}``.
"""

from __future__ import annotations

import csv
import json
import math
import unicodedata
from dataclasses import dataclass, field, replace

import numpy as np


class DatasetFormatError(ValueError):
    """A dataset or score file violates its documented format."""


@dataclass
class Example:
    """One labeled text instance; ``text_pair`` is set for premise/hypothesis tasks."""

    id: int
    text: str
    label: int
    text_pair: str | None = None


@dataclass
class Dataset:
    examples: list[Example]
    class_count: int
    label_names: tuple[str, ...] = ()
    split_tag: str = "train"

    def __post_init__(self):
        if not self.label_names:
            self.label_names = tuple(f"class_{c}" for c in range(self.class_count))
        if self.class_count != len(self.label_names):
            raise ValueError(
                f"class_count {self.class_count} != {len(self.label_names)} label names"
            )
        for ex in self.examples:
            if not 0 <= ex.label < self.class_count:
                raise ValueError(f"label {ex.label} out of range for example id {ex.id}")

    def __len__(self):
        return len(self.examples)

    @property
    def ids(self) -> np.ndarray:
        return np.array([ex.id for ex in self.examples], dtype=np.int64)

    @property
    def labels(self) -> np.ndarray:
        return np.array([ex.label for ex in self.examples], dtype=np.int64)

    def by_id(self) -> dict[int, Example]:
        return {ex.id: ex for ex in self.examples}

    def subset(self, ids, split_tag: str | None = None) -> "Dataset":
        """New Dataset holding the given ids (ascending id order, ids kept)."""
        index = self.by_id()
        picked = [index[i] for i in sorted(int(i) for i in ids)]
        return replace(self, examples=picked, split_tag=split_tag or self.split_tag)


@dataclass
class TokenLengthIndex:
    """Per-example token counts, aligned with the dataset's example order."""

    lengths: np.ndarray
    ids: np.ndarray = field(default_factory=lambda: np.array([], dtype=np.int64))


def tokenize(text: str) -> list[str]:
    """Lowercase, split on unicode whitespace, strip edge punctuation per token.

    Deterministic and pure; interior punctuation ("don't") survives. Tokens
    that are punctuation-only vanish.
    """
    out = []
    for raw in text.lower().split():
        tok = _strip_edge_punct(raw)
        if tok:
            out.append(tok)
    return out


def _strip_edge_punct(tok: str) -> str:
    start, end = 0, len(tok)
    while start < end and unicodedata.category(tok[start]).startswith("P"):
        start += 1
    while end > start and unicodedata.category(tok[end - 1]).startswith("P"):
        end -= 1
    return tok[start:end]


def example_token_length(ex: Example, max_tokens: int | None = None) -> int:
    """Token count of an example: text tokens plus pair tokens, optionally capped."""
    n = len(tokenize(ex.text))
    if ex.text_pair is not None:
        n += len(tokenize(ex.text_pair))
    if max_tokens is not None:
        n = min(n, max_tokens)
    return n


def token_lengths(dataset: Dataset, max_tokens: int | None = None) -> TokenLengthIndex:
    lengths = np.array(
        [example_token_length(ex, max_tokens) for ex in dataset.examples], dtype=np.int64
    )
    return TokenLengthIndex(lengths=lengths, ids=dataset.ids)


def load_dataset(
    path,
    format: str = "jsonl",
    class_count: int = 2,
    label_names=None,
    split_tag: str = "train",
) -> Dataset:
    """Load a dataset file; ids come out dense (0..N-1 in file order).

    Records may carry an explicit ``id``; it must then equal the record's
    0-based position, otherwise the file is rejected.
    """
    if format == "jsonl":
        records = _read_jsonl_records(path)
    elif format == "csv":
        records = _read_csv_records(path)
    else:
        raise ValueError(f"unknown dataset format {format!r} (expected jsonl or csv)")

    examples = []
    for pos, (line_no, rec) in enumerate(records):
        if "text" not in rec or rec.get("label") is None:
            raise DatasetFormatError(f"{path}: malformed record at line {line_no}: "
                                     "needs 'text' and 'label'")
        try:
            label = int(rec["label"])
        except (TypeError, ValueError):
            raise DatasetFormatError(
                f"{path}: non-integer label at line {line_no}") from None
        if not 0 <= label < class_count:
            raise DatasetFormatError(
                f"{path}: label out of range at line {line_no} "
                f"(label {label}, class_count {class_count})")
        if rec.get("id") is not None:
            try:
                given = int(rec["id"])
            except (TypeError, ValueError):
                raise DatasetFormatError(
                    f"{path}: non-integer id at line {line_no}") from None
            if given != pos:
                raise DatasetFormatError(
                    f"{path}: non-dense id {given} at line {line_no} (expected {pos})")
        pair = rec.get("text_pair")
        examples.append(Example(id=pos, text=str(rec["text"]), label=label,
                                text_pair=None if pair in (None, "") else str(pair)))
    if not examples:
        raise DatasetFormatError(f"{path}: empty dataset file")
    return Dataset(examples=examples, class_count=class_count,
                   label_names=tuple(label_names) if label_names else (),
                   split_tag=split_tag)


def _read_jsonl_records(path):
    records = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as err:
                raise DatasetFormatError(
                    f"{path}: malformed JSON at line {line_no}: {err.msg}") from None
            if not isinstance(rec, dict):
                raise DatasetFormatError(
                    f"{path}: malformed record at line {line_no}: not an object")
            records.append((line_no, rec))
    return records


def _read_csv_records(path):
    records = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "text" not in reader.fieldnames:
            raise DatasetFormatError(f"{path}: CSV header row with a 'text' column required")
        for row_no, row in enumerate(reader, start=2):  # header is line 1
            rec = dict(row)
            # empty cells mean "absent" for the optional columns only
            for optional in ("id", "text_pair", "label"):
                if rec.get(optional) in (None, ""):
                    rec.pop(optional, None)
            records.append((row_no, rec))
    return records


def save_dataset(dataset: Dataset, path, format: str = "jsonl") -> None:
    """Persist a dataset; load_dataset(save_dataset(d)) is record-equivalent."""
    if format == "jsonl":
        with open(path, "w", encoding="utf-8") as fh:
            for ex in dataset.examples:
                rec = {"id": ex.id, "text": ex.text, "label": ex.label}
                if ex.text_pair is not None:
                    rec["text_pair"] = ex.text_pair
                fh.write(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n")
    elif format == "csv":
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["id", "text", "text_pair", "label"])
            for ex in dataset.examples:
                writer.writerow([ex.id, ex.text, ex.text_pair or "", ex.label])
    else:
        raise ValueError(f"unknown dataset format {format!r} (expected jsonl or csv)")


def stratified_split(dataset: Dataset, fractions, seed: int, tags=None) -> list[Dataset]:
    """Partition a dataset into label-stratified splits (ids are kept).

    Per-class allocation uses largest-remainder rounding, so each split's
    class proportions match the parent within one example per class. The
    shuffle inside each class is driven only by ``seed``.
    """
    fractions = [float(f) for f in fractions]
    if any(f <= 0 for f in fractions):
        raise ValueError("every split fraction must be > 0")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"fractions sum to {sum(fractions)}, expected 1")
    n_splits = len(fractions)
    if len(dataset) < dataset.class_count * n_splits:
        raise ValueError(
            f"class too small to stratify: {len(dataset)} examples over "
            f"{dataset.class_count} classes x {n_splits} splits")

    if tags is None:
        tags = {2: ("train", "validation"), 3: ("train", "validation", "test")}.get(
            n_splits, tuple("train" for _ in fractions))
    rng = np.random.default_rng(seed)

    assigned: list[list[int]] = [[] for _ in fractions]
    for c in range(dataset.class_count):
        members = [ex.id for ex in dataset.examples if ex.label == c]
        if not members:
            continue
        members = list(np.array(members)[rng.permutation(len(members))])
        counts = _largest_remainder(len(members), fractions)
        start = 0
        for k, cnt in enumerate(counts):
            assigned[k].extend(int(i) for i in members[start:start + cnt])
            start += cnt
    return [dataset.subset(ids, split_tag=tag) for ids, tag in zip(assigned, tags)]


def _largest_remainder(n: int, fractions) -> list[int]:
    raw = [n * f for f in fractions]
    counts = [math.floor(r) for r in raw]
    leftovers = n - sum(counts)
    order = sorted(range(len(fractions)), key=lambda k: (-(raw[k] - counts[k]), k))
    for k in order[:leftovers]:
        counts[k] += 1
    return counts


def load_external_scores(path, dataset: Dataset):
    """Read a ``{id, probs}`` JSONL file and turn it into a ScoreTable.

    Every dataset id must appear exactly once; probability vectors are
    renormalized over their own sum before scoring.
    """
    from .scoring import score_table_from_probs

    want = {int(i) for i in dataset.ids}
    seen: dict[int, list[float]] = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as err:
                raise DatasetFormatError(
                    f"{path}: malformed JSON at line {line_no}: {err.msg}") from None
            if "id" not in rec or "probs" not in rec:
                raise DatasetFormatError(
                    f"{path}: record at line {line_no} needs 'id' and 'probs'")
            rid = int(rec["id"])
            probs = [float(p) for p in rec["probs"]]
            if rid in seen:
                raise DatasetFormatError(f"{path}: duplicate id {rid} at line {line_no}")
            if rid not in want:
                raise DatasetFormatError(f"{path}: unknown id {rid} at line {line_no}")
            if len(probs) != dataset.class_count:
                raise DatasetFormatError(
                    f"{path}: probs length {len(probs)} != class_count "
                    f"{dataset.class_count} for id {rid}")
            if any(p < 0 for p in probs):
                raise DatasetFormatError(f"{path}: negative probability for id {rid}")
            seen[rid] = probs
    missing = sorted(want - seen.keys())
    if missing:
        raise DatasetFormatError(f"{path}: missing id {missing[0]} "
                                 f"({len(missing)} ids absent in total)")
    matrix = np.array([seen[int(i)] for i in dataset.ids], dtype=np.float64)
    return score_table_from_probs(matrix, ids=dataset.ids, source="external")
