import io
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from emojilens.errors import ModelLoadError, NumericalError
from emojilens.model import (
    cross_validate,
    evaluate,
    expand_grid,
    load_model,
    majority_baseline,
    predict,
    save_model,
    staged_scores,
    stratified_folds,
    text_unigrams,
    train_gbc,
    train_ridge,
    unigram_text_features,
)

XOR_X = np.array([[0, 0], [0, 1], [1, 0], [1, 1]], dtype=float)
XOR_Y = np.array([0, 1, 1, 0])


def labels(n_f, n_m):
    return np.array([0] * n_f + [1] * n_m)


# --- ridge ---------------------------------------------------------------------

def test_ridge_two_points_by_hand():
    m = train_ridge([[-1.0], [1.0]], [0, 1], lam=0.1)
    # centered: A = (1 + 1)/2 + 0.1, rhs = (1 + 1)/2
    assert m.params["weights"] == pytest.approx([1 / 1.1], abs=1e-14)
    assert m.params["bias"] == pytest.approx(0.0, abs=1e-15)
    assert predict(m, [[-1.0], [1.0]])[0].tolist() == [0, 1]


def test_ridge_duplicate_rows_and_large_lambda():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(30, 4))
    y = (X[:, 0] + 0.3 * rng.normal(size=30) > 0.5).astype(int)
    a = train_ridge(X, y, 0.5)
    b = train_ridge(np.vstack([X, X]), np.r_[y, y], 0.5)
    assert np.allclose(a.params["weights"], b.params["weights"], atol=1e-12)
    big = train_ridge(X, y, 1e12)
    assert np.abs(big.params["weights"]).max() < 1e-9
    majority = int(y.mean() > 0.5)
    assert set(predict(big, X)[0]) == {majority}


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([0.01, 0.1, 1.0, 10.0]))
def test_ridge_gradient_vanishes(seed, lam):
    rng = np.random.default_rng(seed)
    n, d = rng.integers(4, 20), rng.integers(1, 5)
    X = rng.normal(size=(n, d))
    y = np.r_[0, 1, rng.integers(0, 2, size=n - 2)]
    m = train_ridge(X, y, lam)
    w, b = np.array(m.params["weights"]), m.params["bias"]
    t = 2.0 * y - 1

    def objective(w, b):
        r = t - X @ w - b
        return r @ r / n + lam * w @ w

    r = t - X @ w - b
    grad = np.r_[-2 * X.T @ r / n + 2 * lam * w, -2 * r.sum() / n]
    assert np.linalg.norm(grad) < 1e-8
    # finite-difference cross-check of the analytic gradient at a perturbed point
    w2, b2, h = w + 0.1, b - 0.1, 1e-6
    r2 = t - X @ w2 - b2
    g2 = np.r_[-2 * X.T @ r2 / n + 2 * lam * w2, -2 * r2.sum() / n]
    fd = [(objective(w2 + h * e, b2) - objective(w2 - h * e, b2)) / (2 * h) for e in np.eye(d)]
    fd.append((objective(w2, b2 + h) - objective(w2, b2 - h)) / (2 * h))
    assert np.allclose(g2, fd, atol=1e-5)


def test_ridge_singular_without_penalty():
    X = np.array([[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]])
    with pytest.raises(NumericalError):
        train_ridge(X, [0, 1, 1], lam=0.0)


# --- boosting -----------------------------------------------------------------

def test_gbc_stump_separates():
    X = np.array([[0.1], [0.2], [0.7], [0.9]])
    m = train_gbc(X, [0, 0, 1, 1], n_trees=1, max_depth=1)
    root = m.params["trees"][0][0]
    assert root[0] == 0 and root[1] == pytest.approx(0.45)
    assert predict(m, X)[0].tolist() == [0, 0, 1, 1]


def test_gbc_xor_depth2():
    m = train_gbc(XOR_X, XOR_Y, n_trees=10, max_depth=2, learning_rate=0.3)
    assert predict(m, XOR_X)[0].tolist() == XOR_Y.tolist()


def test_gbc_argument_errors():
    for kw in ({"n_trees": 0}, {"max_depth": 0}, {"learning_rate": 0.0}, {"learning_rate": 1.5}):
        with pytest.raises(ValueError):
            train_gbc(XOR_X, XOR_Y, **kw)
    with pytest.raises(ValueError):
        train_gbc(XOR_X, [0, 0, 0, 0])


def test_gbc_constant_features_bias_only():
    X = np.ones((6, 3))
    y = np.array([0, 0, 1, 1, 1, 1])
    m = train_gbc(X, y, n_trees=5)
    _, scores = predict(m, X)
    assert np.allclose(scores, scores[0])
    assert predict(m, X)[0].tolist() == [1] * 6


def fuzz_data(seed, n=None, d=None):
    rng = np.random.default_rng(seed)
    n = n or int(rng.integers(6, 60))
    d = d or int(rng.integers(1, 5))
    X = np.round(rng.normal(size=(n, d)), int(rng.integers(0, 3)))
    y = (X[:, 0] * rng.normal() + rng.normal(size=n) > 0).astype(int)
    y[:2] = [0, 1]
    return X, y


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 100_000), st.sampled_from([1, 2, 3]), st.sampled_from([0.1, 0.5, 1.0]))
def test_gbc_loss_monotone(seed, depth, lr):
    X, y = fuzz_data(seed)
    m = train_gbc(X, y, n_trees=15, max_depth=depth, learning_rate=lr)
    assert all(b <= a + 1e-12 for a, b in zip(m.train_loss, m.train_loss[1:]))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 100_000))
def test_gbc_monotone_rescaling_invariance(seed):
    X, y = fuzz_data(seed)
    m1 = train_gbc(X, y, n_trees=10, max_depth=3)
    Z = np.exp(X) * 3.0 + 7.0
    m2 = train_gbc(Z, y, n_trees=10, max_depth=3)
    assert predict(m1, X)[0].tolist() == predict(m2, Z)[0].tolist()


def test_staged_scores_match_prefix_models():
    X, y = fuzz_data(1, n=50, d=3)
    full = train_gbc(X, y, n_trees=12, max_depth=2)
    short = train_gbc(X, y, n_trees=5, max_depth=2)
    assert np.array_equal(staged_scores(full, X, [5])[5], predict(short, X)[1])


# --- serialization -------------------------------------------------------------

def test_round_trip_gbc_and_ridge(tmp_path):
    X, y = fuzz_data(3, n=80, d=4)
    rng = np.random.default_rng(9)
    probe = rng.normal(size=(200, 4))
    for m in (train_gbc(X, y, n_trees=100, max_depth=3, fingerprint="abc", seed=4), train_ridge(X, y, 0.3)):
        path = tmp_path / f"{m.kind}.json"
        save_model(m, path)
        back = load_model(path)
        assert back.to_dict() == m.to_dict()
        assert np.array_equal(predict(back, probe)[1], predict(m, probe)[1])


def test_load_errors(tmp_path):
    m = train_ridge(XOR_X, XOR_Y, 1.0)
    buf = io.StringIO()
    save_model(m, buf)
    text = buf.getvalue()
    with pytest.raises(ModelLoadError):
        load_model(io.StringIO(text[: len(text) // 2]))
    d = json.loads(text)
    d["version"] = 99
    with pytest.raises(ModelLoadError):
        load_model(io.StringIO(json.dumps(d)))
    d["version"] = 1
    d["params"]["weights"] = [1.0]
    with pytest.raises(ModelLoadError):
        load_model(io.StringIO(json.dumps(d)))


def test_predict_dimension_mismatch():
    m = train_ridge(XOR_X, XOR_Y, 1.0)
    with pytest.raises(ValueError):
        predict(m, np.zeros((2, 3)))


# --- metrics ----------------------------------------------------------------------

def test_evaluate_examples():
    perfect = evaluate([0, 1, 1], [0, 1, 1])
    assert (perfect.accuracy, perfect.precision_m, perfect.precision_f) == (1.0, 1.0, 1.0)
    y = labels(4898, 2602)
    all_f = evaluate(np.zeros_like(y), y)
    assert all_f.accuracy == pytest.approx(0.653, abs=5e-4)
    assert all_f.precision_f == pytest.approx(0.653, abs=5e-4)
    assert all_f.precision_m is None and all_f.notes
    wrong = evaluate([0, 1], [1, 0])
    assert (wrong.accuracy, wrong.precision_m, wrong.precision_f) == (0.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        evaluate([0], [0, 1])


@given(st.lists(st.tuples(st.integers(0, 1), st.integers(0, 1)), min_size=1, max_size=50))
def test_metric_identities(pairs):
    pred, true = zip(*pairs)
    m = evaluate(pred, true)
    assert m.accuracy * m.total == pytest.approx(m.tp + m.tn)
    if m.tp + m.fp:
        assert m.precision_m == m.tp / (m.tp + m.fp)
    if m.tn + m.fn:
        assert m.precision_f == m.tn / (m.tn + m.fn)


@pytest.mark.parametrize("n_f, n_m, triple", [
    (4898, 2602, (0.653, 0.347, 0.653)),
    (564, 286, (0.664, 0.336, 0.664)),
    (50, 50, (0.5, 0.5, 0.5)),
])
def test_majority_baseline(n_f, n_m, triple):
    b = majority_baseline(labels(n_f, n_m))
    assert (b.accuracy, b.precision_m, b.precision_f) == pytest.approx(triple, abs=5e-4)


# --- cross-validation -----------------------------------------------------------

def test_stratified_folds():
    y = labels(23, 12)
    folds = stratified_folds(y, 5, seed=1)
    for f in range(5):
        assert set(y[folds == f]) == {0, 1}
    assert np.array_equal(folds, stratified_folds(y, 5, seed=1))
    with pytest.raises(ValueError):
        stratified_folds(labels(10, 3), 5, 0)


def test_cv_single_point_and_determinism():
    X, y = fuzz_data(7, n=60, d=3)
    cv = cross_validate(X, y, 3, {"n_trees": [5], "max_depth": [2]}, seed=0)
    assert cv.best == {"n_trees": 5, "max_depth": 2}
    again = cross_validate(X, y, 3, {"n_trees": [5], "max_depth": [2]}, seed=0)
    assert cv.as_dict() == again.as_dict()


def test_cv_prefers_depth_for_interactions():
    rng = np.random.default_rng(0)
    X = rng.integers(0, 2, size=(400, 4)).astype(float) + rng.normal(0, 0.05, size=(400, 4))
    y = ((X[:, 0] > 0.5) ^ (X[:, 1] > 0.5)).astype(int)
    cv = cross_validate(X, y, 5, {"max_depth": [1, 3], "n_trees": [30], "learning_rate": [0.3]}, seed=0)
    assert cv.best["max_depth"] == 3
    assert cv.scores[1] > cv.scores[0] + 0.2


def test_cv_shared_fits_equal_separate_fits():
    X, y = fuzz_data(11, n=70, d=3)
    grid = {"n_trees": [3, 8], "max_depth": [2]}
    cv = cross_validate(X, y, 3, grid, seed=2)
    folds = stratified_folds(y, 3, 2)
    for point, fold_scores in zip(cv.points, cv.fold_scores):
        for f in range(3):
            tr, te = folds != f, folds == f
            m = train_gbc(X[tr], y[tr], **point)
            assert fold_scores[f] == np.mean(predict(m, X[te])[0] == y[te])


def test_cv_ridge_kind():
    X, y = fuzz_data(5, n=60, d=3)
    cv = cross_validate(X, y, 4, None, seed=0, kind="ridge")
    assert cv.best in expand_grid({"lam": [0.01, 0.1, 1.0, 10.0]})


# --- unigram baseline ----------------------------------------------------------

def test_unigram_features(lexicon):
    M, vocab, users = unigram_text_features({"u1": ["a b", "a"], "u2": ["a c", "b"]}, min_df=1)
    assert vocab == ["a", "b", "c"] and users == ["u1", "u2"]
    assert M[0].tolist() == pytest.approx([2 / 3, 1 / 3, 0.0])
    M, vocab, _ = unigram_text_features({"u1": ["a b"], "u2": ["a c"]}, min_df=2)
    assert vocab == ["a"]
    assert text_unigrams("Hi😂there, HI", lexicon) == ["hi", "there", "hi"]
    with pytest.raises(ValueError):
        unigram_text_features({"u1": ["x"], "u2": ["y"]}, min_df=2)
