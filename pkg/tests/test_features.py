import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from emojilens.corpus import Gender, Message, aggregate, generate_synthetic, ingest, planted_config
from emojilens.errors import ConsistencyError, DataError
from emojilens.features import (
    FREQUENCY_NAMES,
    SENTIMENT_NAMES,
    FeatureManifest,
    build_features,
    column_names,
    feature_matrix,
    load_matrix,
    save_matrix,
)
from emojilens.lexicon import SentimentLabel

JOY, CRY = (0x1F602,), (0x1F622,)
HAND_LABELS = {JOY: SentimentLabel.POSITIVE, CRY: SentimentLabel.NEGATIVE}


def one_user(lexicon, texts, gender=Gender.FEMALE, uid="u"):
    (u,) = aggregate([Message(uid, t, gender) for t in texts], lexicon)
    return u


def test_hand_example(lexicon):
    v = build_features(one_user(lexicon, ["😂", "a😂b😢", "hi"]), lexicon, HAND_LABELS)
    freq = dict(zip(FREQUENCY_NAMES, v.frequency))
    assert freq == {
        "emoji_msg_fraction": 2 / 3,
        "emojis_per_msg_mean": 1.5,
        "emojis_per_msg_max": 2.0,
        "emojis_per_msg_median": 1.5,
        "share_emoji_only": 0.5,
        "share_single_emoji_in_text": 0.0,
        "share_multi_nonconsecutive": 0.5,
        "share_multi_consecutive": 0.0,
        "share_repeating": 0.0,
    }
    pref = {e.sequence: x for e, x in zip(lexicon, v.preference) if x}
    assert pref == {JOY: 2 / 3, CRY: 1 / 3}
    assert dict(zip(SENTIMENT_NAMES, v.sentiment)) == {
        "positive_token_share": 2 / 3,
        "negative_token_share": 1 / 3,
        "msgs_with_positive": 1.0,
        "msgs_with_negative": 0.5,
        "msgs_with_both": 0.5,
    }
    assert len(v) == 14 + len(lexicon)


def test_no_emoji_user_is_zero(lexicon, labels):
    v = build_features(one_user(lexicon, ["plain", "text"]), lexicon, labels).to_array()
    assert v.shape == (14 + len(lexicon),) and not v.any()


def test_unknown_emoji_is_consistency_error(lexicon, labels):
    u = one_user(lexicon, ["😂"])
    with pytest.raises(ConsistencyError):
        build_features(u, lexicon.subset([CRY]), labels)


TEXTS = ["hi", "😂", "😂😂", "a😂b😢", "❤️ ok ❤️", "👍🏽👍", "🇫🇷!", "no"]


@settings(max_examples=80, deadline=None)
@given(st.lists(st.sampled_from(TEXTS), min_size=1, max_size=15))
def test_vector_invariants(lexicon, labels, texts):
    v = build_features(one_user(lexicon, texts), lexicon, labels)
    assert len(v.to_array()) == 14 + len(lexicon)
    assert (v.preference >= 0).all()
    total = v.preference.sum()
    assert total == 0 or abs(total - 1) < 1e-12
    props = np.r_[v.frequency[[0, 4, 5, 6, 7, 8]], v.sentiment]
    assert ((props >= 0) & (props <= 1)).all()
    mean, mx, med = v.frequency[1:4]
    if v.frequency[0] > 0:
        assert min(mean, mx, med) >= 1 and med <= mx and mean <= mx


def test_matrix_shape_and_order(lexicon, labels):
    users = [one_user(lexicon, ["😂"], Gender.MALE, "c"), one_user(lexicon, ["hi"], Gender.FEMALE, "a"),
             one_user(lexicon, ["😢😢"], Gender.FEMALE, "b")]
    small = lexicon.subset([JOY, CRY, (0x2764,), (0x1F44D,), (0x1F62D,), (0x1F600,), (0x1F601,),
                            (0x1F603,), (0x1F604,), (0x1F605,)])
    fm = feature_matrix(users, small, labels)
    assert fm.X.shape == (3, 24)
    assert fm.user_ids == ["a", "b", "c"] and fm.y.tolist() == [0, 0, 1]
    assert fm.manifest.columns == column_names(small)
    again = feature_matrix(users[::-1], small, labels)
    assert np.array_equal(fm.X, again.X)
    with pytest.raises(ValueError):
        feature_matrix([one_user(lexicon, ["😂"], None)], small, labels)


def test_save_load_round_trip(tmp_path, lexicon, labels):
    cfg = planted_config(lexicon, 15, messages_per_user=(20, 40))
    users = aggregate(ingest(generate_synthetic(cfg)).messages, lexicon)
    fm = feature_matrix(users, lexicon, labels)
    save_matrix(fm, tmp_path / "f.csv", tmp_path / "m.json")
    back = load_matrix(tmp_path / "f.csv", tmp_path / "m.json")
    assert np.array_equal(back.X, fm.X) and np.array_equal(back.y, fm.y)
    assert back.user_ids == fm.user_ids and back.manifest.fingerprint == fm.manifest.fingerprint
    assert back.emoji_msg_counts.tolist() == fm.emoji_msg_counts.tolist()
    for row in fm.X:
        pref = row[len(FREQUENCY_NAMES):-len(SENTIMENT_NAMES)]
        assert pref.sum() == 0 or abs(pref.sum() - 1) < 1e-12
    FeatureManifest(fm.manifest.columns[:-1]).save(tmp_path / "bad.json")
    with pytest.raises(DataError):
        load_matrix(tmp_path / "f.csv", tmp_path / "bad.json")


def test_manifest_preference_sequences(lexicon):
    small = lexicon.subset([JOY, CRY])
    m = FeatureManifest(column_names(small))
    assert m.preference_sequences() == [e.sequence for e in small]
    assert FeatureManifest(column_names(small)).fingerprint == m.fingerprint
    assert FeatureManifest(column_names(small), "unigram").fingerprint != m.fingerprint
