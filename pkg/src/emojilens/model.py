"""Gender classifiers on feature matrices, CV grid search and evaluation.

Labels are coded 1 = male, 0 = female throughout; male is the positive
class for confusion counts.
"""

from __future__ import annotations

import itertools
import json
import random
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence as Seq

import numba
import numpy as np

from .errors import ModelLoadError, NumericalError
from .lexicon import EmojiLexicon
from .segmenter import Kind, tokenize

FORMAT_VERSION = 1
RIDGE = "ridge"
GBC = "gbc"
UNIGRAM = "unigram"
KINDS = (RIDGE, GBC, UNIGRAM)

GBC_DEFAULTS = {"n_trees": 100, "max_depth": 3, "learning_rate": 0.1, "min_leaf": 1}
RIDGE_DEFAULTS = {"lam": 1.0}
DEFAULT_GRIDS = {
    RIDGE: {"lam": [0.01, 0.1, 1.0, 10.0]},
    UNIGRAM: {"lam": [0.01, 0.1, 1.0, 10.0]},
    GBC: {"n_trees": [50, 200], "max_depth": [2, 3, 5], "learning_rate": [0.05, 0.1, 0.3]},
}


@dataclass
class TrainedModel:
    kind: str
    params: dict
    hyper: dict
    n_features: int
    manifest_fingerprint: str | None = None
    seed: int | None = None
    train_loss: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "version": FORMAT_VERSION,
            "kind": self.kind,
            "manifest_fingerprint": self.manifest_fingerprint,
            "seed": self.seed,
            "hyper": self.hyper,
            "n_features": self.n_features,
            "params": self.params,
        }


def _check_xy(X, y):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y).astype(int)
    if X.ndim != 2 or len(X) != len(y):
        raise ValueError("X must be 2-D with one row per label")
    if not np.all(np.isfinite(X)):
        raise ValueError("X contains non-finite values")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be 0/1")
    if len(y) < 2 or len(np.unique(y)) < 2:
        raise ValueError("training needs both classes present")
    return X, y


# --- ridge ---------------------------------------------------------------------

def ridge_solve(X: np.ndarray, y: np.ndarray, lam: float) -> tuple[np.ndarray, float]:
    """Minimize (1/n) ||t - Xw - b||^2 + lam ||w||^2 with t = 2y - 1 and b unpenalized.

    The squared loss is averaged so that duplicating every row leaves the
    solution unchanged.
    """
    t = 2.0 * y - 1.0
    mean_x = X.mean(axis=0)
    mean_t = t.mean()
    Xc = X - mean_x
    n = len(t)
    A = Xc.T @ Xc / n
    A[np.diag_indices_from(A)] += lam
    rhs = Xc.T @ (t - mean_t) / n
    if lam == 0 and np.linalg.cond(A) > 1e12:
        raise NumericalError("ridge system is singular; use lambda > 0")
    try:
        w = np.linalg.solve(A, rhs)
        # one step of iterative refinement
        w += np.linalg.solve(A, rhs - A @ w)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"ridge system is singular: {exc}") from exc
    if not np.all(np.isfinite(w)):
        raise NumericalError("ridge solution is not finite")
    return w, float(mean_t - mean_x @ w)


def train_ridge(X, y, lam: float = 1.0, *, kind: str = RIDGE, fingerprint: str | None = None,
                seed: int | None = None) -> TrainedModel:
    X, y = _check_xy(X, y)
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    w, b = ridge_solve(X, y, lam)
    return TrainedModel(kind, {"weights": w.tolist(), "bias": b}, {"lam": lam}, X.shape[1],
                        fingerprint, seed)


# --- gradient boosting ---------------------------------------------------------

def _log_loss(F: np.ndarray, y: np.ndarray) -> float:
    return float(np.mean(np.logaddexp(0.0, F) - y * F))


def _sigmoid(F: np.ndarray) -> np.ndarray:
    return np.exp(-np.logaddexp(0.0, -F))


def _leaf_value(F: np.ndarray, y: np.ndarray, lr: float) -> float:
    """Damped Newton step for the log-loss of one leaf.

    The full Newton step is halved until the shrunken update does not raise
    the leaf's loss, which keeps training loss monotone per stage.
    """
    p = _sigmoid(F)
    g = float(np.sum(y - p))
    h = float(np.sum(p * (1.0 - p)))
    if g == 0.0:
        return 0.0
    step = g / max(h, 1e-12)
    before = np.sum(np.logaddexp(0.0, F) - y * F)
    for _ in range(60):
        G = F + lr * step
        if np.sum(np.logaddexp(0.0, G) - y * G) <= before:
            return step
        step /= 2.0
    return 0.0


@numba.njit(cache=True)
def _best_split(S, V, residual, min_leaf):
    """Scan every active feature's sorted rows; returns (feature, position, gain).

    Strict ``>`` keeps the first maximum: lowest feature, then lowest threshold.
    """
    d, m = S.shape
    total = 0.0
    for p in range(m):
        total += residual[S[0, p]]
    base = total * total / m
    best_f, best_p, best = -1, -1, -np.inf
    for f in range(d):
        sl = 0.0
        for p in range(m - 1):
            sl += residual[S[f, p]]
            nl = p + 1
            if nl < min_leaf or m - nl < min_leaf or not V[f, p] < V[f, p + 1]:
                continue
            sr = total - sl
            gain = sl * sl / nl + sr * sr / (m - nl) - base
            if gain > best:
                best_f, best_p, best = f, p, gain
    return best_f, best_p, best


@numba.njit(cache=True)
def _partition(S, V, goes_left, n_left):
    d, m = S.shape
    SL = np.empty((d, n_left), dtype=S.dtype)
    SR = np.empty((d, m - n_left), dtype=S.dtype)
    VL = np.empty((d, n_left), dtype=V.dtype)
    VR = np.empty((d, m - n_left), dtype=V.dtype)
    for f in range(d):
        a = 0
        b = 0
        for p in range(m):
            r = S[f, p]
            if goes_left[r]:
                SL[f, a] = r
                VL[f, a] = V[f, p]
                a += 1
            else:
                SR[f, b] = r
                VR[f, b] = V[f, p]
                b += 1
    return SL, SR, VL, VR


def _grow_tree(X: np.ndarray, active: np.ndarray, order: np.ndarray, values: np.ndarray,
               residual: np.ndarray, F: np.ndarray, y: np.ndarray, max_depth: int, min_leaf: int,
               lr: float) -> tuple[list, np.ndarray]:
    """Fit one regression tree to ``residual`` by exact greedy least squares.

    ``order`` holds, per active feature, all training rows sorted by that
    feature (``values`` the matching feature values); each node keeps the
    same layout restricted to its rows, so splitting only filters, never
    re-sorts. An impure node is split even at zero gain, as long as some
    split is valid. Returns the node list and the leaf value for every
    training row.
    """
    nodes: list = [None]
    leaf_of_row = np.empty(len(y), dtype=float)
    n = len(y)
    queue = [(0, 0, order, values, np.arange(n))]
    goes_left = np.zeros(n, dtype=np.bool_)
    head = 0
    while head < len(queue):
        nid, depth, S, V, rows = queue[head]
        queue[head] = None
        head += 1
        m = len(rows)
        split = None
        if depth < max_depth and m >= 2 * min_leaf and len(active):
            r = residual[rows]
            if r.max() - r.min() > 1e-12:
                fi, pos, best = _best_split(S, V, residual, min_leaf)
                scale = max(1.0, float(np.abs(r).sum()) ** 2 / m)
                if fi >= 0 and best >= -1e-12 * scale:
                    lo, hi = V[fi, pos], V[fi, pos + 1]
                    thr = lo + (hi - lo) / 2.0
                    if not lo <= thr < hi:
                        thr = lo
                    split = (int(active[fi]), float(thr))
        if split is None:
            value = _leaf_value(F[rows], y[rows], lr)
            nodes[nid] = [-1, 0.0, -1, -1, value]
            leaf_of_row[rows] = value
            continue
        feat, thr = split
        left = X[rows, feat] <= thr
        goes_left[rows] = left
        n_left = int(left.sum())
        S_left, S_right, V_left, V_right = _partition(S, V, goes_left, n_left)
        goes_left[rows] = False
        left_id, right_id = len(nodes), len(nodes) + 1
        nodes.extend([None, None])
        nodes[nid] = [feat, thr, left_id, right_id, 0.0]
        queue.append((left_id, depth + 1, S_left, V_left, rows[left]))
        queue.append((right_id, depth + 1, S_right, V_right, rows[~left]))
    return nodes, leaf_of_row


def train_gbc(X, y, n_trees: int = 100, max_depth: int = 3, learning_rate: float = 0.1,
              min_leaf: int = 1, *, fingerprint: str | None = None, seed: int | None = None) -> TrainedModel:
    """Gradient boosting on binomial log-loss with depth-limited regression trees.

    Splits are exact greedy on sorted feature values; equal gains go to the
    lowest feature index, then the lowest threshold. Training is fully
    deterministic (``seed`` is recorded but unused: there is no subsampling).
    """
    X, y = _check_xy(X, y)
    if n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    if max_depth < 1:
        raise ValueError("max_depth must be >= 1")
    if not 0 < learning_rate <= 1:
        raise ValueError("learning_rate must be in (0, 1]")
    if min_leaf < 1:
        raise ValueError("min_leaf must be >= 1")
    n, d = X.shape
    prior = y.mean()
    init = float(np.log(prior / (1 - prior)))
    F = np.full(n, init)
    Xt_full = np.ascontiguousarray(X.T)
    active = np.flatnonzero(Xt_full.max(axis=1) > Xt_full.min(axis=1))
    Xt = Xt_full[active]
    order = np.argsort(Xt, axis=1, kind="stable").astype(np.int32)
    values = np.ascontiguousarray(np.take_along_axis(Xt, order, axis=1))
    trees = []
    losses = [_log_loss(F, y)]
    for _ in range(n_trees):
        residual = y - _sigmoid(F)
        nodes, leaf_vals = _grow_tree(X, active, order, values, residual, F, y, max_depth, min_leaf,
                                      learning_rate)
        F = F + learning_rate * leaf_vals
        trees.append(nodes)
        losses.append(_log_loss(F, y))
    hyper = {"n_trees": n_trees, "max_depth": max_depth, "learning_rate": learning_rate,
             "min_leaf": min_leaf}
    params = {"init": init, "learning_rate": learning_rate, "trees": trees}
    return TrainedModel(GBC, params, hyper, d, fingerprint, seed, losses)


def _tree_values(tree: list, X: np.ndarray) -> np.ndarray:
    arr = np.asarray(tree, dtype=float)
    feat = arr[:, 0].astype(int)
    thr, left, right, value = arr[:, 1], arr[:, 2].astype(int), arr[:, 3].astype(int), arr[:, 4]
    idx = np.zeros(len(X), dtype=int)
    rows = np.arange(len(X))
    while True:
        f = feat[idx]
        internal = f >= 0
        if not internal.any():
            break
        r = rows[internal]
        i = idx[internal]
        go_left = X[r, f[internal]] <= thr[i]
        idx[r] = np.where(go_left, left[i], right[i])
    return value[idx]


def staged_scores(model: TrainedModel, X, stages: Iterable[int]) -> dict[int, np.ndarray]:
    """Margins after the first ``k`` trees, for each ``k`` in ``stages``."""
    X = _check_X(model, X)
    want = sorted(set(stages))
    p = model.params
    F = np.full(len(X), p["init"])
    out = {}
    if 0 in want:
        out[0] = F.copy()
    for k, tree in enumerate(p["trees"], start=1):
        F = F + p["learning_rate"] * _tree_values(tree, X)
        if k in want:
            out[k] = F.copy()
    return out


# --- prediction -----------------------------------------------------------------

def _check_X(model: TrainedModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.shape[1] != model.n_features:
        raise ValueError(f"model expects {model.n_features} columns, got {X.shape[1]}")
    return X


def predict(model: TrainedModel, X) -> tuple[np.ndarray, np.ndarray]:
    """``(labels, margins)``; label 1 (male) iff margin > 0."""
    X = _check_X(model, X)
    if model.kind == GBC:
        scores = staged_scores(model, X, [len(model.params["trees"])])[len(model.params["trees"])]
    elif model.kind in (RIDGE, UNIGRAM):
        scores = X @ np.asarray(model.params["weights"], dtype=float) + model.params["bias"]
    else:
        raise ValueError(f"unknown model kind {model.kind!r}")
    return (scores > 0).astype(int), scores


# --- serialization -------------------------------------------------------------------

def save_model(model: TrainedModel, sink) -> None:
    text = json.dumps(model.to_dict(), separators=(",", ":"), allow_nan=False)
    if isinstance(sink, (str, Path)):
        Path(sink).write_text(text + "\n", encoding="utf-8")
    else:
        sink.write(text + "\n")


def load_model(source) -> TrainedModel:
    try:
        if isinstance(source, (str, Path)):
            text = Path(source).read_text(encoding="utf-8")
        else:
            text = source.read()
        d = json.loads(text)
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelLoadError(f"cannot read model: {exc}") from exc
    if not isinstance(d, dict) or d.get("version") != FORMAT_VERSION:
        raise ModelLoadError(f"unsupported model version {d.get('version') if isinstance(d, dict) else None!r}")
    try:
        model = TrainedModel(d["kind"], d["params"], d["hyper"], int(d["n_features"]),
                             d.get("manifest_fingerprint"), d.get("seed"))
        if model.kind not in KINDS:
            raise ModelLoadError(f"unknown model kind {model.kind!r}")
        if model.kind == GBC:
            for tree in model.params["trees"]:
                if not tree or any(len(node) != 5 for node in tree):
                    raise ModelLoadError("malformed tree")
        elif len(model.params["weights"]) != model.n_features:
            raise ModelLoadError("weight vector length does not match n_features")
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelLoadError(f"malformed model: {exc}") from exc
    return model


# --- metrics ----------------------------------------------------------------------------

@dataclass(frozen=True)
class Metrics:
    accuracy: float
    precision_m: float | None
    precision_f: float | None
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0
    notes: tuple = ()

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def as_dict(self) -> dict:
        return {
            "Accuracy": self.accuracy,
            "Precision_M": self.precision_m,
            "Precision_F": self.precision_f,
            "TP": self.tp,
            "FP": self.fp,
            "TN": self.tn,
            "FN": self.fn,
            "notes": list(self.notes),
        }


def evaluate(pred, true) -> Metrics:
    pred = np.asarray(pred).astype(int)
    true = np.asarray(true).astype(int)
    if len(pred) != len(true):
        raise ValueError("prediction and label vectors differ in length")
    if len(true) == 0:
        raise ValueError("cannot evaluate an empty test set")
    tp = int(np.sum((pred == 1) & (true == 1)))
    fp = int(np.sum((pred == 1) & (true == 0)))
    tn = int(np.sum((pred == 0) & (true == 0)))
    fn = int(np.sum((pred == 0) & (true == 1)))
    notes = []
    if tp + fp:
        pm = tp / (tp + fp)
    else:
        pm = None
        notes.append("precision_M undefined: no user predicted male")
    if tn + fn:
        pf = tn / (tn + fn)
    else:
        pf = None
        notes.append("precision_F undefined: no user predicted female")
    return Metrics((tp + tn) / len(true), pm, pf, tp, fp, tn, fn, tuple(notes))


def majority_baseline(true) -> Metrics:
    """Majority-class accuracy with chance precisions equal to class prevalence."""
    true = np.asarray(true).astype(int)
    if len(true) == 0:
        raise ValueError("cannot compute a baseline on no labels")
    male = float(np.mean(true))
    return Metrics(max(male, 1 - male), male, 1 - male,
                   notes=("baseline: precisions are class prevalences",))


# --- cross-validation -------------------------------------------------------------

def stratified_folds(y, folds: int, seed: int) -> np.ndarray:
    """Fold id per row; every class is dealt round-robin after a seeded shuffle."""
    y = np.asarray(y).astype(int)
    if folds < 2:
        raise ValueError("need at least 2 folds")
    rng = random.Random(seed)
    assign = np.empty(len(y), dtype=int)
    for cls in (0, 1):
        idx = np.flatnonzero(y == cls).tolist()
        if len(idx) < folds:
            raise ValueError(f"class {cls} has {len(idx)} rows, fewer than {folds} folds")
        rng.shuffle(idx)
        for j, i in enumerate(idx):
            assign[i] = j % folds
    return assign


def expand_grid(grid: Mapping[str, Seq]) -> list[dict]:
    keys = list(grid)
    return [dict(zip(keys, vals)) for vals in itertools.product(*(grid[k] for k in keys))]


@dataclass
class CVResult:
    points: list[dict]
    scores: list[float]
    fold_scores: list[list[float]]
    best: dict
    best_score: float

    def as_dict(self) -> dict:
        return {
            "points": [
                {"hyper": p, "mean_accuracy": s, "fold_accuracy": f}
                for p, s, f in zip(self.points, self.scores, self.fold_scores)
            ],
            "best": self.best,
            "best_mean_accuracy": self.best_score,
        }


def _fit(kind: str, X, y, hyper: dict, **kw) -> TrainedModel:
    if kind == GBC:
        return train_gbc(X, y, **{**GBC_DEFAULTS, **hyper}, **kw)
    return train_ridge(X, y, **{**RIDGE_DEFAULTS, **hyper}, kind=kind, **kw)


def cross_validate(X, y, folds: int = 5, grid: Mapping[str, Seq] | None = None, seed: int = 0,
                   kind: str = GBC) -> CVResult:
    """Stratified k-fold grid search maximizing mean fold accuracy.

    Ties keep the earliest grid point. GBC points that differ only in
    ``n_trees`` share one fit per fold, read off at each stage; boosting is
    deterministic, so this equals fitting each point separately.
    """
    X, y = _check_xy(X, y)
    grid = DEFAULT_GRIDS[kind] if grid is None else grid
    points = expand_grid(grid)
    if not points:
        raise ValueError("empty hyper-parameter grid")
    fold_of = stratified_folds(y, folds, seed)
    fold_scores = [[0.0] * folds for _ in points]
    for f in range(folds):
        tr, te = fold_of != f, fold_of == f
        if kind == GBC:
            groups: dict = {}
            for i, p in enumerate(points):
                full = {**GBC_DEFAULTS, **p}
                key = tuple(sorted((k, v) for k, v in full.items() if k != "n_trees"))
                groups.setdefault(key, []).append((i, full["n_trees"]))
            for key, members in groups.items():
                hyper = dict(key)
                model = train_gbc(X[tr], y[tr], n_trees=max(t for _, t in members), **hyper)
                staged = staged_scores(model, X[te], [t for _, t in members])
                for i, t in members:
                    fold_scores[i][f] = float(np.mean((staged[t] > 0).astype(int) == y[te]))
        else:
            for i, p in enumerate(points):
                labels, _ = predict(_fit(kind, X[tr], y[tr], p), X[te])
                fold_scores[i][f] = float(np.mean(labels == y[te]))
    scores = [float(np.mean(s)) for s in fold_scores]
    best_i = int(np.argmax(scores))
    return CVResult(points, scores, fold_scores, points[best_i], scores[best_i])


def train(kind: str, X, y, hyper: Mapping | None = None, *, fingerprint: str | None = None,
          seed: int | None = None) -> TrainedModel:
    return _fit(kind, X, y, dict(hyper or {}), fingerprint=fingerprint, seed=seed)


# --- unigram text baseline ----------------------------------------------------------

_WORD = re.compile(r"\w+")


def text_unigrams(text: str, lexicon: EmojiLexicon | None = None) -> list[str]:
    """Lowercased word tokens; emoji spans are removed first when a lexicon is given."""
    if lexicon is not None:
        text = " ".join(t.text for t in tokenize(text, lexicon) if t.kind is Kind.TEXT)
    return [w.lower() for w in _WORD.findall(text)]


def unigram_text_features(messages_by_user: Mapping[str, Iterable[str]], lexicon: EmojiLexicon | None = None,
                          min_df: int = 2) -> tuple[np.ndarray, list[str], list[str]]:
    """Relative unigram frequencies per user over a sorted vocabulary.

    Returns ``(matrix, vocabulary, user_ids)`` with rows ordered by user id.
    Frequencies are over each user's full token count; the vocabulary holds
    words used by at least ``min_df`` users.
    """
    users = sorted(messages_by_user)
    counts: dict[str, Counter] = {}
    df: Counter = Counter()
    for uid in users:
        msgs = list(messages_by_user[uid])
        if not msgs:
            raise ValueError(f"user {uid!r} has no messages")
        c: Counter = Counter()
        for m in msgs:
            c.update(text_unigrams(m, lexicon))
        counts[uid] = c
        df.update(c.keys())
    vocab = sorted(w for w, n in df.items() if n >= min_df)
    if not vocab:
        raise ValueError("empty vocabulary")
    col = {w: i for i, w in enumerate(vocab)}
    M = np.zeros((len(users), len(vocab)))
    for r, uid in enumerate(users):
        c = counts[uid]
        total = sum(c.values())
        for w, n in c.items():
            if w in col:
                M[r, col[w]] = n / total
    return M, vocab, users
