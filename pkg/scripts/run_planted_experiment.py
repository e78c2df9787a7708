"""End-to-end planted-signal experiment through the CLI.

synth (2,000 users per gender, 20 planted emojis at 3:1, rates 8% vs 7%)
-> analyze -> features -> train GBC with 5-fold CV on the default grid
-> eval on a held-out 20%.

    python scripts/run_planted_experiment.py --out runs/planted
"""

import argparse
import csv
import json
import time
from pathlib import Path

from emojilens.cli import run


def step(name, argv):
    t = time.perf_counter()
    code = run(argv)
    print(f"{name:<9} exit {code}  {time.perf_counter() - t:6.1f}s")
    if code:
        raise SystemExit(code)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/planted")
    ap.add_argument("--users", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    root = Path(args.out)
    seed = ["--seed", str(args.seed)]
    corpus_path = str(root / "synth" / "corpus.jsonl")

    step("synth", ["synth", "--n-users", str(args.users), "--out", str(root / "synth"), *seed])
    step("analyze", ["analyze", "--corpus", corpus_path, "--out", str(root / "analyze"), *seed])
    step("features", ["features", "--corpus", corpus_path, "--min-emoji-msgs", "1",
                      "--train-fraction", "0.8", "--out", str(root / "features"), *seed])
    step("train", ["train", "--features", str(root / "features"), "--split",
                   str(root / "features" / "split.json"), "--kind", "gbc", "--cv", "5",
                   "--grid", "default", "--out", str(root / "train"), *seed])
    step("eval", ["eval", "--features", str(root / "features"), "--model", str(root / "train" / "model.json"),
                  "--split", str(root / "features" / "split.json"), "--out", str(root / "eval"), *seed])

    planted = json.loads((root / "synth" / "synth_config.json").read_text())["planted"]
    with open(root / "analyze" / "discriminative.csv", encoding="utf-8") as fh:
        top = [row["code"] for row in csv.DictReader(fh)][:20]
    hits = sum(code in planted for code in top)
    pop = json.loads((root / "analyze" / "popularity.json").read_text())["test"]
    metrics = json.loads((root / "eval" / "metrics.json").read_text())
    acc, base = metrics["model"]["Accuracy"], metrics["baseline"]["Accuracy"]
    print(f"planted emojis in top-20 MI: {hits}/20")
    print(f"popularity z = {pop['z']:.3f}, adjusted p = {pop['p_adjusted']:.3g}")
    print(f"test accuracy {acc:.4f} vs baseline {base:.4f} (margin {acc - base:+.4f})")


if __name__ == "__main__":
    main()
