"""The same protocol driven through the command line.

Builds a small corpus on disk, then runs score -> plan -> train -> compare
exactly as you would from a shell. Every command writes a manifest.json
with resolved settings and input digests; reports themselves are
byte-deterministic, so reruns with the same seeds are diffable.
"""

import json
import pathlib
import subprocess
import sys
import tempfile

from curlearn.dataset_io import save_dataset
from curlearn.synthetic import make_noisy_corpus

root = pathlib.Path(tempfile.mkdtemp(prefix="curlearn_demo_"))
for name, seed in (("train", 1), ("val", 2), ("test", 3)):
    save_dataset(make_noisy_corpus(300, noise=0.1, seed=seed), root / f"{name}.jsonl")


def run(*args):
    cmd = [sys.executable, "-m", "curlearn.cli", *args]
    print("\n$ curlearn", " ".join(args))
    subprocess.run(cmd, check=True)


run("score", "--dataset", str(root / "train.jsonl"), "--dim", "4096",
    "--out", str(root / "scores.jsonl"))
print("first record:", open(root / "scores.jsonl").readline().strip()[:90], "...")

run("plan", "--dataset", str(root / "train.jsonl"), "--strategy", "PME",
    "--scores", str(root / "scores.jsonl"), "--seed", "66",
    "--out", str(root / "plan.jsonl"))
print("first position:", open(root / "plan.jsonl").readline().strip())

run("train", "--train", str(root / "train.jsonl"), "--val", str(root / "val.jsonl"),
    "--test", str(root / "test.jsonl"), "--strategy", "SMD", "--seed", "66",
    "--epochs", "2", "--dim", "4096", "--scores", str(root / "scores.jsonl"),
    "--out", str(root / "run"))
report = json.loads((root / "run" / "report_SMD_seed66.json").read_text())
print("test accuracy:", report["test_metrics"]["accuracy"])

run("compare", "--train", str(root / "train.jsonl"), "--val", str(root / "val.jsonl"),
    "--test", str(root / "test.jsonl"), "--strategies", "Random", "Length", "PMD",
    "--seed", "66", "--epochs", "1", "--dim", "4096",
    "--scores", str(root / "scores.jsonl"), "--out", str(root / "grid"))
print((root / "grid" / "aggregate.txt").read_text())
print("outputs under", root)
