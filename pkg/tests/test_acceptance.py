"""Acceptance criteria, one test each; every test prints a single PASS/FAIL line."""

import csv
import hashlib
import json
import math
import random
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np
import pytest

from emojilens.cli import run
from emojilens.community import louvain
from emojilens.corpus import Gender, Message, UserAggregate, aggregate
from emojilens.features import build_features
from emojilens.lexicon import SentimentLabel
from emojilens.model import majority_baseline, predict, train_gbc
from emojilens.segmenter import tokenize
from emojilens.stats import MessageCounts, mutual_information, pmi, two_proportion_ztest

from . import test_segmenter
from .oracles import mi_bruteforce, modularity_bruteforce, normal_cdf_series, pmi_handcount


@pytest.fixture
def criterion(capsys):
    """``with criterion(n, title, budget_s) as detail:``; prints PASS/FAIL with timing."""

    @contextmanager
    def _run(number, title, budget):
        detail = {}
        start = time.perf_counter()
        ok = False
        try:
            yield detail
            elapsed = time.perf_counter() - start
            ok = elapsed < budget
            detail.setdefault("time", f"{elapsed:.2f}s < {budget}s")
            assert ok, f"runtime {elapsed:.2f}s exceeds {budget}s"
        finally:
            elapsed = time.perf_counter() - start
            info = ", ".join(f"{k}={v}" for k, v in detail.items() if k != "time")
            with capsys.disabled():
                print(f"\n{'PASS' if ok else 'FAIL'} criterion {number:>2} {title} "
                      f"[{info}{', ' if info else ''}{elapsed:.2f}s/{budget}s]")

    return _run


def test_c01_baseline_triples(criterion):
    with criterion(1, "majority baseline triples", 1.0) as d:
        for n_f, n_m, want in ((4898, 2602, (0.653, 0.347, 0.653)), (564, 286, (0.664, 0.336, 0.664))):
            b = majority_baseline(np.array([0] * n_f + [1] * n_m))
            got = (b.accuracy, b.precision_m, b.precision_f)
            d[f"{n_f}/{n_m}"] = "(" + ", ".join(f"{x:.4f}" for x in got) + ")"
            assert all(abs(g - w) <= 5e-4 for g, w in zip(got, want))


def test_c02_mi_oracle(criterion):
    e = (0x1F602,)
    with criterion(2, "MI matches exact-rational oracle", 10.0) as d:
        rng = random.Random(2)
        worst = 0.0
        done = 0
        while done < 1000:
            n = rng.randint(2, 20)
            draw = [(rng.choice([Gender.FEMALE, Gender.MALE]),
                     {x: 1 for x in rng.sample([(0x1F600 + k,) for k in range(5)], rng.randint(0, 5))})
                    for _ in range(n)]
            if len({g for g, _ in draw}) < 2:
                continue
            users = [UserAggregate(f"u{i}", g, per_emoji_counts=c) for i, (g, c) in enumerate(draw)]
            for k in range(5):
                em = (0x1F600 + k,)
                mi = mutual_information(users, em)
                want = mi_bruteforce([(em in c, g is Gender.MALE) for g, c in draw])
                assert mi >= 0
                worst = max(worst, abs(mi - want))
            done += 1
        # independent cases: equal usage rates in both genders
        for f_use, f_n, scale in ((1, 2, 1), (2, 5, 3), (3, 4, 2)):
            draw = ([(Gender.FEMALE, True)] * f_use + [(Gender.FEMALE, False)] * (f_n - f_use)) + \
                   ([(Gender.MALE, True)] * (f_use * scale) + [(Gender.MALE, False)] * ((f_n - f_use) * scale))
            users = [UserAggregate(f"u{i}", g, per_emoji_counts={e: 1} if used else {})
                     for i, (g, used) in enumerate(draw)]
            assert mutual_information(users, e) == 0.0
        d["populations"] = done
        d["max_abs_err"] = f"{worst:.1e}"
        assert worst <= 1e-12


def test_c03_pmi_oracle(criterion):
    A, B = (0x1F602,), (0x1F62D,)
    with criterion(3, "PMI matches hand counts", 5.0) as d:
        msgs = [{A, B}] * 4 + [{A}] + [set()] * 5
        ten = pmi(MessageCounts.from_messages(msgs), A, B)
        d["ten_message_pmi"] = f"{ten:.12f}"
        assert abs(ten - math.log(2)) <= 1e-12
        rng = random.Random(3)
        pool = [(0x1F600 + k,) for k in range(4)]
        worst, checked = 0.0, 0
        for _ in range(500):
            msgs = [set(rng.sample(pool, rng.randint(0, 3))) for _ in range(rng.randint(1, 50))]
            counts = MessageCounts.from_messages(msgs)
            for i, e1 in enumerate(pool):
                for e2 in pool[i + 1:]:
                    if not counts.single.get(e1) or not counts.single.get(e2):
                        continue
                    got, want = pmi(counts, e1, e2), pmi_handcount(msgs, e1, e2)
                    if want == -math.inf:
                        assert got == -math.inf
                    else:
                        worst = max(worst, abs(got - want))
                    checked += 1
        d["pairs"] = checked
        d["max_abs_err"] = f"{worst:.1e}"
        assert worst <= 1e-12


def test_c04_ztest(criterion):
    with criterion(4, "two-proportion z-test", 5.0) as d:
        z, p = two_proportion_ztest(50, 100, 40, 100)
        p_oracle = 2 * (1 - normal_cdf_series(abs(z)))
        d["z"], d["p"], d["p_oracle"] = f"{z:.4f}", f"{p:.4f}", f"{p_oracle:.4f}"
        assert abs(z - 1.4213) <= 1e-3 and abs(p - 0.1552) <= 1e-3 and abs(p - p_oracle) <= 1e-12
        rng = random.Random(4)
        fuzzed = 0
        while fuzzed < 1000:
            n1, n2 = rng.randint(1, 1000), rng.randint(1, 1000)
            k1, k2 = rng.randint(0, n1), rng.randint(0, n2)
            if k1 + k2 in (0, n1 + n2):
                continue
            z, p = two_proportion_ztest(k1, n1, k2, n2)
            z2, p2 = two_proportion_ztest(k2, n2, k1, n1)
            assert z2 == pytest.approx(-z, abs=1e-12) and p2 == pytest.approx(p, abs=1e-15)
            eq_z, eq_p = two_proportion_ztest(k1, n1, k1 * 3, n1 * 3) if 0 < k1 < n1 else (0.0, 1.0)
            assert eq_z == 0.0 and eq_p == 1.0
            fuzzed += 1
        d["fuzzed"] = fuzzed


def _random_graph(rng, n):
    adj = {i: {} for i in range(n)}
    p = rng.uniform(0.2, 0.8)
    for a in range(n):
        for b in range(a + 1, n):
            if rng.random() < p:
                w = rng.choice([1.0, rng.uniform(0.1, 3.0)])
                adj[a][b] = adj[b][a] = w
    if not any(adj.values()):
        adj[0][1] = adj[1][0] = 1.0
    return adj


def test_c05_louvain(criterion):
    with criterion(5, "Louvain vs brute-force modularity", 60.0) as d:
        rng = random.Random(5)
        hits = 0
        for _ in range(50):
            g = _random_graph(rng, rng.randint(2, 8))
            best = modularity_bruteforce(g)
            q = louvain(g, 1.0, seed=rng.randint(0, 10_000)).modularity
            assert q <= best + 1e-9
            hits += q >= best - 1e-9
        cliques = {i: {} for i in range(6)}
        for block in ((0, 1, 2), (3, 4, 5)):
            for a in block:
                for b in block:
                    if a != b:
                        cliques[a][b] = 1.0
        cliques[2][3] = cliques[3][2] = 0.1
        two = louvain(cliques, 0.2).n_communities
        d["optimal"] = f"{hits}/50"
        d["two_clique_communities"] = two
        assert hits >= 45 and two == 2


def test_c06_tokenizer(criterion, lexicon):
    with criterion(6, "tokenizer fixtures and tiling fuzz", 10.0) as d:
        cases = test_segmenter.CASES
        failures = [t for t, want in cases if test_segmenter.render(tokenize(t, lexicon)) != want]
        d["fixtures"] = f"{len(cases) - len(failures)}/{len(cases)}"
        assert len(cases) >= 40 and not failures
        rng = random.Random(6)
        for _ in range(10_000):
            test_segmenter.check_tiling("".join(rng.choices(test_segmenter.ALPHABET, k=rng.randint(0, 14))),
                                        lexicon)
        d["fuzzed"] = 10_000


def test_c07_feature_schema(criterion, lexicon, labels):
    with criterion(7, "feature schema", 5.0) as d:
        (u,) = aggregate([Message("u", t, Gender.FEMALE) for t in ("😂", "a😂b😢", "hi")], lexicon)
        v = build_features(u, lexicon, {(0x1F602,): SentimentLabel.POSITIVE,
                                        (0x1F622,): SentimentLabel.NEGATIVE})
        assert v.frequency.tolist() == [2 / 3, 1.5, 2.0, 1.5, 0.5, 0.0, 0.5, 0.0, 0.0]
        assert v.sentiment.tolist() == [2 / 3, 1 / 3, 1.0, 0.5, 0.5]
        assert {i: x for i, x in enumerate(v.preference) if x} == {
            lexicon.position((0x1F602,)): 2 / 3, lexicon.position((0x1F622,)): 1 / 3}
        rng = random.Random(7)
        texts = test_segmenter.ALPHABET + ["😂😂", "hi there", "❤️ ok", "👍🏽"]
        owners = [rng.randint(0, 199) for _ in range(3000)]
        users = aggregate([Message(f"u{i}", "".join(rng.choices(texts, k=rng.randint(1, 6))),
                                   Gender.MALE if i % 2 else Gender.FEMALE) for i in owners], lexicon)
        for u in users:
            x = build_features(u, lexicon, labels)
            assert len(x.to_array()) == 14 + len(lexicon)
            s = x.preference.sum()
            assert (x.preference >= 0).all() and (s == 0 or abs(s - 1) <= 1e-12)
        d["users"] = len(users)
        d["dim"] = 14 + len(lexicon)


def test_c08_planted_signal_end_to_end(criterion, tmp_path):
    with criterion(8, "planted-signal recovery end to end", 300.0) as d:
        root = tmp_path
        corpus = str(root / "synth" / "corpus.jsonl")
        assert run(["synth", "--n-users", "2000", "--out", str(root / "synth")]) == 0
        assert run(["analyze", "--corpus", corpus, "--out", str(root / "analyze")]) == 0
        assert run(["features", "--corpus", corpus, "--min-emoji-msgs", "1", "--train-fraction", "0.8",
                    "--out", str(root / "features")]) == 0
        split = str(root / "features" / "split.json")
        assert run(["train", "--features", str(root / "features"), "--split", split, "--kind", "gbc",
                    "--cv", "5", "--grid", "default", "--out", str(root / "train")]) == 0
        assert run(["eval", "--features", str(root / "features"), "--model", str(root / "train" / "model.json"),
                    "--split", split, "--out", str(root / "eval")]) == 0

        planted = json.loads((root / "synth" / "synth_config.json").read_text())["planted"]
        with open(root / "analyze" / "discriminative.csv", encoding="utf-8") as fh:
            top = [r["code"] for r in csv.DictReader(fh)][:20]
        hits = sum(c in planted for c in top)
        pop = json.loads((root / "analyze" / "popularity.json").read_text())["test"]
        m = json.loads((root / "eval" / "metrics.json").read_text())
        acc, base = m["model"]["Accuracy"], m["baseline"]["Accuracy"]
        d["planted_in_top20"] = hits
        d["pop_p_adj"] = f"{pop['p_adjusted']:.1e}"
        d["accuracy"] = f"{acc:.3f}"
        d["baseline"] = f"{base:.3f}"
        assert hits >= 15
        assert pop["p_adjusted"] < 0.01
        assert acc >= base + 0.10


def test_c09_gbc_sanity(criterion):
    with criterion(9, "GBC monotone loss, XOR, rescaling invariance", 60.0) as d:
        rng = np.random.default_rng(9)
        for _ in range(100):
            n, k = int(rng.integers(6, 80)), int(rng.integers(1, 5))
            X = np.round(rng.normal(size=(n, k)), int(rng.integers(0, 3)))
            y = (X[:, 0] + rng.normal(size=n) > 0).astype(int)
            y[:2] = [0, 1]
            model = train_gbc(X, y, n_trees=20, max_depth=int(rng.integers(1, 4)),
                              learning_rate=float(rng.choice([0.1, 0.5, 1.0])))
            assert all(b <= a + 1e-12 for a, b in zip(model.train_loss, model.train_loss[1:]))
        X = np.array([[0, 0], [0, 1], [1, 0], [1, 1]], dtype=float)
        y = np.array([0, 1, 1, 0])
        xor = predict(train_gbc(X, y, n_trees=10, max_depth=2, learning_rate=0.3), X)[0]
        d["xor_train_acc"] = float(np.mean(xor == y))
        assert (xor == y).all()
        for _ in range(20):
            n = int(rng.integers(10, 80))
            X = rng.normal(size=(n, 3))
            y = (X[:, 0] * X[:, 1] + 0.3 * rng.normal(size=n) > 0).astype(int)
            y[:2] = [0, 1]
            Z = np.column_stack([np.exp(X[:, 0]), X[:, 1] ** 3, 5 * X[:, 2] - 2])
            a = predict(train_gbc(X, y, n_trees=15, max_depth=3), X)[0]
            b = predict(train_gbc(Z, y, n_trees=15, max_depth=3), Z)[0]
            assert np.array_equal(a, b)
        d["fuzzed"] = "100+20"


def _digest(root: Path) -> dict:
    return {str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(root.rglob("*")) if p.is_file()}


def _pipeline():
    corpus = "synth/corpus.jsonl"
    steps = [
        ["synth", "--n-users", "80", "--out", "synth", "--seed", "3"],
        ["analyze", "--corpus", corpus, "--out", "analyze", "--seed", "3"],
        ["graph", "--corpus", corpus, "--out", "graph", "--seed", "3"],
        ["features", "--corpus", corpus, "--min-emoji-msgs", "1", "--train-fraction", "0.8",
         "--out", "features", "--seed", "3"],
        ["train", "--features", "features", "--split", "features/split.json", "--cv", "3",
         "--grid", '{"n_trees": [10, 20], "max_depth": [2, 3]}', "--out", "train", "--seed", "3"],
        ["eval", "--features", "features", "--model", "train/model.json", "--split", "features/split.json",
         "--out", "eval", "--seed", "3"],
        ["eval", "--features", "features", "--model", "train/model.json", "--buckets", "1:10,10:40",
         "--out", "buckets", "--seed", "3"],
    ]
    for argv in steps:
        assert run(argv) == 0, argv


def test_c10_reproducibility(criterion, tmp_path, monkeypatch):
    with criterion(10, "CLI outputs byte-identical across reruns", 120.0) as d:
        trees = []
        for name in ("a", "b"):
            base = tmp_path / name
            base.mkdir()
            monkeypatch.chdir(base)
            _pipeline()
            trees.append(_digest(base))
        d["files"] = len(trees[0])
        d["subcommands"] = 6
        assert trees[0] == trees[1]
