"""Command-line entry point: ``emojilens <synth|analyze|graph|features|train|eval>``.

Every run writes its outputs plus a ``run.json`` echo of the resolved
configuration into ``--out``. Files are produced in a staging directory and
moved into place only when the command succeeds.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical error.
"""

from __future__ import annotations

import argparse
import csv
import json
import shutil
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import community, corpus, features, model, stats
from .corpus import Gender
from .errors import ConfigError, ConsistencyError, DataError, NumericalError
from .lexicon import (
    DEFAULT_POLICY,
    NormalizationPolicy,
    bundled_emoji_lexicon,
    bundled_sentiment_lexicon,
    format_sequence,
    label_lexicon,
    load_emoji_lexicon,
    load_sentiment_lexicon,
)

EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 2, 3, 4
DEFAULT_CLASSES = ("positive", "negative", "face", "heart")
POPULARITY_THRESHOLD = 0.05


# --- helpers --------------------------------------------------------------------

def _dump_json(obj, path: Path):
    path.write_text(json.dumps(obj, ensure_ascii=False, indent=1, sort_keys=True, allow_nan=False) + "\n",
                    encoding="utf-8")


def _policy(args) -> NormalizationPolicy:
    if not args.policy:
        return DEFAULT_POLICY
    try:
        return NormalizationPolicy.from_assignments(args.policy)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _lexicon(args):
    policy = _policy(args)
    if args.lexicon:
        return load_emoji_lexicon(args.lexicon, policy)
    return bundled_emoji_lexicon(policy)


def _labels(args, lexicon):
    sentiment = load_sentiment_lexicon(args.sentiment_lexicon) if args.sentiment_lexicon else bundled_sentiment_lexicon()
    return label_lexicon(lexicon, sentiment)


def _users(args, lexicon):
    corp = corpus.read_corpus(args.corpus)
    users = corpus.aggregate(corp.messages, lexicon)
    if not corpus.labeled(users):
        raise DataError("no gendered users")
    return corp, users


def _parse_gender(text: str) -> Gender | None:
    if text.lower() in ("all", "any"):
        return None
    try:
        return Gender(text.upper())
    except ValueError:
        raise argparse.ArgumentTypeError(f"gender must be F, M or all, not {text!r}")


def _parse_buckets(text: str) -> list[tuple[int, int | None]]:
    out = []
    for part in text.split(","):
        lo, sep, hi = part.strip().partition(":")
        try:
            bucket = (int(lo), int(hi) if hi else None)
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad bucket {part!r}; expected LO:HI")
        if not sep or bucket[0] < 0 or (bucket[1] is not None and bucket[1] <= bucket[0]):
            raise argparse.ArgumentTypeError(f"bad bucket {part!r}; expected LO:HI with LO < HI")
        out.append(bucket)
    return out


def _write_rows(path: Path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _load_features(directory: str) -> features.FeatureMatrix:
    d = Path(directory)
    return features.load_matrix(d / "features.csv", d / "manifest.json")


def _split_ids(path: str | None, part: str) -> list[str] | None:
    if not path:
        return None
    try:
        return list(json.loads(Path(path).read_text(encoding="utf-8"))[part])
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise DataError(f"{path}: not a split file ({exc})") from exc


def _select(fm: features.FeatureMatrix, ids: list[str] | None) -> features.FeatureMatrix:
    if ids is None:
        return fm
    known = set(fm.user_ids)
    missing = [u for u in ids if u not in known]
    if missing:
        raise ConsistencyError(f"split names {len(missing)} users absent from the matrix, e.g. {missing[0]!r}")
    return fm.rows(sorted(ids))


def _fmt(x: float) -> str:
    return repr(float(x))


# --- subcommands ------------------------------------------------------------------

def cmd_synth(args, out: Path) -> dict:
    if args.config:
        try:
            cfg = corpus.SyntheticConfig.from_dict(json.loads(Path(args.config).read_text(encoding="utf-8")))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{args.config}: {exc}") from exc
        if args.n_users is not None:
            cfg.n_users_per_gender = args.n_users
    else:
        cfg = corpus.planted_config(
            _lexicon(args),
            2000 if args.n_users is None else args.n_users,
            vocab_size=args.vocab_size, n_planted=args.n_planted, ratio=args.ratio,
            female_rate=args.female_rate, male_rate=args.male_rate, seed=args.seed,
        )
    cfg.validate()
    digest = corpus.write_synthetic(cfg, out / "corpus.jsonl")
    _dump_json(cfg.as_dict(), out / "synth_config.json")
    print(f"sha256 {digest}")
    return {"synthetic_config": cfg.as_dict(), "sha256": digest}


def cmd_analyze(args, out: Path) -> dict:
    lexicon = _lexicon(args)
    labels = _labels(args, lexicon)
    corp, users = _users(args, lexicon)
    users = corpus.labeled(users)

    rows = []
    shares = {}
    for g in Gender:
        fractions = [stats.emoji_msg_fraction(u) for u in users if u.gender is g and u.msg_count]
        if not fractions:
            raise DataError(f"no users of gender {g.value}")
        shares[g.value] = stats.fraction_above(fractions, POPULARITY_THRESHOLD)
        rows.extend((g.value, _fmt(x), _fmt(p)) for x, p in stats.empirical_cdf(fractions))
    _write_rows(out / "cdf.csv", ("gender", "emoji_msg_fraction", "cdf"), rows)

    pop = stats.popularity(users)
    _dump_json({
        "test": pop.as_dict(),
        "policy": lexicon.policy.as_dict(),
        "share_of_users_above": {"threshold": POPULARITY_THRESHOLD, **shares},
        "ingest": corp.report.as_dict(),
        "n_users": {g.value: sum(u.gender is g for u in users) for g in Gender},
    }, out / "popularity.json")

    ranked = stats.rank_discriminative(users, lexicon, args.male_threshold)
    _write_rows(out / "discriminative.csv",
                ("Rank", "MI", "Emoji e", "p(Male|e)", "p(Female|e)", "code", "tag"),
                [(r.rank, _fmt(r.mi), "".join(map(chr, r.emoji)), _fmt(r.p_male_given_e),
                  _fmt(r.p_female_given_e), format_sequence(r.emoji), r.gender_tag) for r in ranked])

    result = stats.sentiment_usage_stats(users, lexicon, labels, args.classes)
    _dump_json({k: v.as_dict() for k, v in result.items()}, out / "sentiment.json")
    return {}


def cmd_graph(args, out: Path) -> dict:
    lexicon = _lexicon(args)
    _, users = _users(args, lexicon)
    graph = community.build_cooccurrence_graph(users, args.gender, args.k)
    result = community.louvain(graph, args.resolution, args.seed)
    _write_rows(out / "edges.csv", ("e1", "e2", "pmi"),
                [(format_sequence(a), format_sequence(b), _fmt(w)) for (a, b), w in sorted(graph.edges.items())])
    _write_rows(out / "communities.csv", ("emoji", "community"),
                [(format_sequence(n), result.communities[n]) for n in graph.nodes])
    _dump_json({
        "n_nodes": len(graph.nodes),
        "n_edges": len(graph.edges),
        "n_communities": result.n_communities,
        "modularity": result.modularity,
        "sweep_modularity": result.sweep_modularity,
        "resolution": result.resolution,
        "k": graph.k,
    }, out / "communities.json")
    return {}


def cmd_features(args, out: Path) -> dict:
    lexicon = _lexicon(args)
    corp, users = _users(args, lexicon)
    users = corpus.filter_by_emoji_msgs(corpus.labeled(users), args.min_emoji_msgs, args.max_emoji_msgs)
    if not users:
        raise DataError(f"no labeled user has at least {args.min_emoji_msgs} emoji messages")
    if args.unigram:
        keep = {u.user_id for u in users}
        texts: dict[str, list[str]] = {u: [] for u in keep}
        for m in corp.messages:
            if m.user_id in keep:
                texts[m.user_id].append(m.text)
        M, vocab, ids = model.unigram_text_features(texts, lexicon, args.min_df)
        by_id = {u.user_id: u for u in users}
        fm = features.FeatureMatrix(
            M, np.array([features.gender_code(by_id[u].gender) for u in ids], dtype=int), ids,
            features.FeatureManifest([f"w:{w}" for w in vocab], family="unigram"),
            np.array([by_id[u].emoji_msg_count for u in ids], dtype=int), [by_id[u].lang for u in ids],
        )
    else:
        fm = features.feature_matrix(users, lexicon, _labels(args, lexicon))
    features.save_matrix(fm, out / "features.csv", out / "manifest.json")
    extra = {"n_users": len(fm.user_ids), "n_columns": fm.X.shape[1], "fingerprint": fm.manifest.fingerprint}
    if args.train_fraction is not None:
        train, test = corpus.split(fm.user_ids, args.train_fraction, args.seed)
        train, test = sorted(train), sorted(test)
        _dump_json({"seed": args.seed, "train_fraction": args.train_fraction,
                    "train": train, "test": test}, out / "split.json")
        extra.update(n_train=len(train), n_test=len(test))
    return extra


def _grid(args):
    if args.grid in (None, "default"):
        return None
    try:
        grid = json.loads(Path(args.grid).read_text(encoding="utf-8")) if Path(args.grid).exists() \
            else json.loads(args.grid)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"--grid is neither 'default', a JSON file nor inline JSON: {exc}") from exc
    if not isinstance(grid, dict) or not all(isinstance(v, list) for v in grid.values()):
        raise ConfigError("--grid must map hyper-parameter names to lists")
    return grid


def cmd_train(args, out: Path) -> dict:
    fm = _select(_load_features(args.features), _split_ids(args.split, "train"))
    kind = args.kind
    if (kind == model.UNIGRAM) != (fm.manifest.family == "unigram"):
        raise ConsistencyError(f"model kind {kind!r} does not fit a {fm.manifest.family!r} feature matrix")
    hyper = {k: v for k, v in (("n_trees", args.n_trees), ("max_depth", args.max_depth),
                               ("learning_rate", args.learning_rate), ("min_leaf", args.min_leaf),
                               ("lam", args.lam)) if v is not None}
    if kind != model.GBC:
        hyper = {k: v for k, v in hyper.items() if k == "lam"}
    else:
        hyper.pop("lam", None)
    extra = {}
    if args.cv:
        cv = model.cross_validate(fm.X, fm.y, args.cv, _grid(args), args.seed, kind)
        _dump_json(cv.as_dict(), out / "cv.json")
        hyper = {**hyper, **cv.best}
        extra["cv_best"] = cv.best
    m = model.train(kind, fm.X, fm.y, hyper, fingerprint=fm.manifest.fingerprint, seed=args.seed)
    model.save_model(m, out / "model.json")
    extra["hyper"] = m.hyper
    return extra


def _metrics_report(m, fm: features.FeatureMatrix) -> dict:
    labels, _ = model.predict(m, fm.X)
    return {
        "n_users": len(fm.user_ids),
        "n_male": int(fm.y.sum()),
        "n_female": int(len(fm.y) - fm.y.sum()),
        "model": model.evaluate(labels, fm.y).as_dict(),
        "baseline": model.majority_baseline(fm.y).as_dict(),
    }


def cmd_eval(args, out: Path) -> dict:
    fm = _load_features(args.features)
    m = model.load_model(args.model)
    if m.manifest_fingerprint != fm.manifest.fingerprint:
        raise ConsistencyError(
            f"fingerprint mismatch: model {m.manifest_fingerprint} vs manifest {fm.manifest.fingerprint}"
        )
    fm = _select(fm, _split_ids(args.split, "test"))
    if not fm.user_ids:
        raise DataError("empty test set")
    written = []
    if args.buckets:
        for lo, hi in args.buckets:
            keep = (fm.emoji_msg_counts >= lo) & (True if hi is None else fm.emoji_msg_counts < hi)
            sub = fm.mask(np.asarray(keep))
            name = f"metrics_{lo}_{'inf' if hi is None else hi}.json"
            report = {"bucket": [lo, hi]}
            if sub.user_ids:
                report.update(_metrics_report(m, sub))
            else:
                report.update(n_users=0, note="no test users in this bucket")
            _dump_json(report, out / name)
            written.append(name)
    else:
        report = _metrics_report(m, fm)
        if args.by_lang:
            langs = sorted({lang or "" for lang in fm.langs})
            report["by_lang"] = {
                lang: _metrics_report(m, fm.mask(np.array([(x or "") == lang for x in fm.langs])))
                for lang in langs
            }
        _dump_json(report, out / "metrics.json")
        written.append("metrics.json")
    return {"written": written}


# --- parser -------------------------------------------------------------------------

def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--lexicon", help="emoji lexicon TSV (default: bundled)")
    p.add_argument("--sentiment-lexicon", help="word sentiment TSV (default: bundled)")
    p.add_argument("--policy", action="append", default=[], metavar="KEY=BOOL",
                   help="normalization setting, e.g. fold-skin-tones=false (repeatable)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="out", help="output directory")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="emojilens", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="write a synthetic JSONL corpus")
    p.add_argument("--config", help="SyntheticConfig JSON; default is a planted-signal config")
    p.add_argument("--n-users", type=int, help="users per gender (default 2000)")
    p.add_argument("--vocab-size", type=int, default=80)
    p.add_argument("--n-planted", type=int, default=20)
    p.add_argument("--ratio", type=float, default=3.0)
    p.add_argument("--female-rate", type=float, default=0.08)
    p.add_argument("--male-rate", type=float, default=0.07)

    p = sub.add_parser("analyze", parents=[common], help="popularity, discriminative emojis, sentiment")
    p.add_argument("--corpus", required=True)
    p.add_argument("--male-threshold", type=float, help="p(Male|e) tag threshold (default: male share)")
    p.add_argument("--classes", type=lambda s: tuple(c for c in s.split(",") if c),
                   default=DEFAULT_CLASSES, help="comma list of sentiment labels or lexicon groups")

    p = sub.add_parser("graph", parents=[common], help="co-occurrence graph and communities")
    p.add_argument("--corpus", required=True)
    p.add_argument("--gender", type=_parse_gender, default=None, help="F, M or all (default all)")
    p.add_argument("--k", type=int, default=community.DEFAULT_K)
    p.add_argument("--resolution", type=float, default=community.DEFAULT_RESOLUTION)

    p = sub.add_parser("features", parents=[common], help="per-user feature matrix")
    p.add_argument("--corpus", required=True)
    p.add_argument("--min-emoji-msgs", type=int, default=100)
    p.add_argument("--max-emoji-msgs", type=int)
    p.add_argument("--train-fraction", type=float, help="also write a seeded train/test split.json")
    p.add_argument("--unigram", action="store_true", help="word unigram features instead of emoji features")
    p.add_argument("--min-df", type=int, default=2)

    p = sub.add_parser("train", parents=[common], help="fit a classifier")
    p.add_argument("--features", required=True, help="directory written by 'features'")
    p.add_argument("--split", help="split.json; train on its 'train' users")
    p.add_argument("--kind", choices=model.KINDS, default=model.GBC)
    p.add_argument("--cv", type=int, default=0, help="folds for grid search (0 = none)")
    p.add_argument("--grid", help="'default', a JSON file or inline JSON")
    p.add_argument("--n-trees", type=int)
    p.add_argument("--max-depth", type=int)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--min-leaf", type=int)
    p.add_argument("--lam", type=float)

    p = sub.add_parser("eval", parents=[common], help="metrics against the majority baseline")
    p.add_argument("--features", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--split", help="split.json; evaluate on its 'test' users")
    p.add_argument("--buckets", type=_parse_buckets, help="emoji-message buckets, e.g. 80:100,60:80")
    p.add_argument("--by-lang", action="store_true")
    return parser


COMMANDS = {
    "synth": cmd_synth,
    "analyze": cmd_analyze,
    "graph": cmd_graph,
    "features": cmd_features,
    "train": cmd_train,
    "eval": cmd_eval,
}


def _resolved(args) -> dict:
    cfg = {k: (list(v) if isinstance(v, tuple) else v) for k, v in sorted(vars(args).items())}
    cfg["buckets"] = [list(b) for b in args.buckets] if getattr(args, "buckets", None) else None
    if isinstance(cfg.get("gender"), Gender):
        cfg["gender"] = cfg["gender"].value
    cfg["policy"] = _policy(args).as_dict()
    return cfg


def run(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    out = Path(args.out)
    staging = None
    try:
        config = _resolved(args)
        out.mkdir(parents=True, exist_ok=True)
        staging = Path(tempfile.mkdtemp(prefix=".staging-", dir=out))
        extra = COMMANDS[args.command](args, staging)
        _dump_json({"command": args.command, "config": config, "result": extra}, staging / "run.json")
        for f in sorted(staging.iterdir()):
            f.replace(out / f.name)
        return 0
    except NumericalError as exc:
        print(f"emojilens {args.command}: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, ValueError, KeyError, OSError) as exc:
        print(f"emojilens {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    finally:
        if staging is not None:
            shutil.rmtree(staging, ignore_errors=True)


def main(argv: list[str] | None = None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
