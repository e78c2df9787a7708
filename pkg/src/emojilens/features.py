"""Per-user feature vectors: 9 frequency, |lexicon| preference and 5 sentiment features."""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .corpus import Gender, UserAggregate
from .errors import ConsistencyError, DataError
from .lexicon import EmojiLexicon, Sequence, SentimentLabel, format_sequence, parse_hex_sequence
from .segmenter import MessagePatternFlags

FREQUENCY_NAMES = (
    "emoji_msg_fraction",
    "emojis_per_msg_mean",
    "emojis_per_msg_max",
    "emojis_per_msg_median",
    *(f"share_{name}" for name in MessagePatternFlags.FLAGS),
)
SENTIMENT_NAMES = (
    "positive_token_share",
    "negative_token_share",
    "msgs_with_positive",
    "msgs_with_negative",
    "msgs_with_both",
)
PREFERENCE_PREFIX = "pref:"


@dataclass(frozen=True)
class FeatureVector:
    frequency: np.ndarray
    preference: np.ndarray
    sentiment: np.ndarray

    def __len__(self):
        return len(self.frequency) + len(self.preference) + len(self.sentiment)

    def to_array(self) -> np.ndarray:
        return np.concatenate([self.frequency, self.preference, self.sentiment])


def column_names(lexicon: EmojiLexicon) -> list[str]:
    return [
        *FREQUENCY_NAMES,
        *(PREFERENCE_PREFIX + format_sequence(e.sequence) for e in lexicon),
        *SENTIMENT_NAMES,
    ]


def build_features(u: UserAggregate, lexicon: EmojiLexicon,
                   labels: Mapping[Sequence, SentimentLabel]) -> FeatureVector:
    """Feature vector of one user; all zeros when the user has no emoji message.

    Pattern shares and message-level sentiment shares are over emoji
    messages; ``emoji_msg_fraction`` is over all messages; token shares are
    over emoji tokens.
    """
    freq = np.zeros(len(FREQUENCY_NAMES))
    pref = np.zeros(len(lexicon))
    sent = np.zeros(len(SENTIMENT_NAMES))
    unknown = [e for e in u.per_emoji_counts if e not in lexicon]
    if unknown:
        raise ConsistencyError(
            f"user {u.user_id!r} uses emoji {format_sequence(unknown[0])} missing from the lexicon"
        )
    if u.emoji_msg_count == 0:
        return FeatureVector(freq, pref, sent)

    n_emoji = u.emoji_msg_count
    freq[0] = u.emoji_msg_count / u.msg_count
    freq[1] = u.emoji_count_mean()
    freq[2] = u.emoji_count_max()
    freq[3] = u.emoji_count_median()
    for i, name in enumerate(MessagePatternFlags.FLAGS):
        freq[4 + i] = u.pattern_counts.get(name, 0) / n_emoji

    tokens = u.emoji_token_count
    pos_tokens = neg_tokens = 0
    for e, c in u.per_emoji_counts.items():
        pref[lexicon.position(e)] = c / tokens
        label = labels.get(e)
        if label is SentimentLabel.POSITIVE:
            pos_tokens += c
        elif label is SentimentLabel.NEGATIVE:
            neg_tokens += c

    with_pos = with_neg = with_both = 0
    for emoji_set, count in u.emoji_sets.items():
        found = {labels.get(e) for e in emoji_set}
        has_pos = SentimentLabel.POSITIVE in found
        has_neg = SentimentLabel.NEGATIVE in found
        with_pos += count * has_pos
        with_neg += count * has_neg
        with_both += count * (has_pos and has_neg)
    sent[:] = (
        pos_tokens / tokens,
        neg_tokens / tokens,
        with_pos / n_emoji,
        with_neg / n_emoji,
        with_both / n_emoji,
    )
    return FeatureVector(freq, pref, sent)


@dataclass
class FeatureManifest:
    columns: list[str]
    family: str = "emoji"

    @property
    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(self.family.encode())
        for c in self.columns:
            h.update(b"\0" + c.encode("utf-8"))
        return h.hexdigest()[:16]

    def as_dict(self) -> dict:
        return {"family": self.family, "fingerprint": self.fingerprint, "columns": self.columns}

    def save(self, path: str | Path):
        Path(path).write_text(json.dumps(self.as_dict(), ensure_ascii=False, indent=1) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "FeatureManifest":
        d = json.loads(Path(path).read_text(encoding="utf-8"))
        m = cls(list(d["columns"]), d.get("family", "emoji"))
        if "fingerprint" in d and d["fingerprint"] != m.fingerprint:
            raise DataError("manifest fingerprint does not match its columns")
        return m

    def preference_sequences(self) -> list[Sequence]:
        return [parse_hex_sequence(c[len(PREFERENCE_PREFIX):]) for c in self.columns
                if c.startswith(PREFERENCE_PREFIX)]


@dataclass
class FeatureMatrix:
    X: np.ndarray
    y: np.ndarray  # 1 = male, 0 = female
    user_ids: list[str]
    manifest: FeatureManifest
    emoji_msg_counts: np.ndarray | None = None
    langs: list | None = None

    def rows(self, ids: Iterable[str]) -> "FeatureMatrix":
        pos = {u: i for i, u in enumerate(self.user_ids)}
        idx = np.array([pos[u] for u in ids], dtype=int)
        return FeatureMatrix(
            self.X[idx], self.y[idx], [self.user_ids[i] for i in idx], self.manifest,
            None if self.emoji_msg_counts is None else self.emoji_msg_counts[idx],
            None if self.langs is None else [self.langs[i] for i in idx],
        )

    def mask(self, keep: np.ndarray) -> "FeatureMatrix":
        return self.rows([u for u, k in zip(self.user_ids, keep) if k])


def gender_code(g: Gender) -> int:
    return 1 if g is Gender.MALE else 0


def feature_matrix(users: Iterable[UserAggregate], lexicon: EmojiLexicon,
                   labels: Mapping[Sequence, SentimentLabel]) -> FeatureMatrix:
    """Stack feature vectors with rows ordered by user_id."""
    users = sorted(users, key=lambda u: u.user_id)
    for u in users:
        if u.gender is None:
            raise ValueError(f"user {u.user_id!r} is unlabeled")
    width = len(FREQUENCY_NAMES) + len(lexicon) + len(SENTIMENT_NAMES)
    X = np.zeros((len(users), width))
    for i, u in enumerate(users):
        X[i] = build_features(u, lexicon, labels).to_array()
    y = np.array([gender_code(u.gender) for u in users], dtype=int)
    return FeatureMatrix(
        X, y, [u.user_id for u in users], FeatureManifest(column_names(lexicon)),
        np.array([u.emoji_msg_count for u in users], dtype=int), [u.lang for u in users],
    )


META_COLUMNS = ("user_id", "gender", "lang", "emoji_msg_count")


def save_matrix(fm: FeatureMatrix, csv_path: str | Path, manifest_path: str | Path):
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*META_COLUMNS, *fm.manifest.columns])
        counts = fm.emoji_msg_counts if fm.emoji_msg_counts is not None else [""] * len(fm.user_ids)
        langs = fm.langs or [None] * len(fm.user_ids)
        for uid, label, lang, cnt, row in zip(fm.user_ids, fm.y, langs, counts, fm.X):
            w.writerow([uid, "M" if label else "F", lang or "", cnt, *map(repr, row.tolist())])
    fm.manifest.save(manifest_path)


def load_matrix(csv_path: str | Path, manifest_path: str | Path) -> FeatureMatrix:
    manifest = FeatureManifest.load(manifest_path)
    with open(csv_path, newline="", encoding="utf-8") as fh:
        r = csv.reader(fh)
        header = next(r, None)
        if header is None:
            raise DataError(f"{csv_path} is empty")
        if list(header[len(META_COLUMNS):]) != manifest.columns:
            raise DataError("feature CSV columns do not match the manifest (fingerprint mismatch)")
        ids, ys, langs, counts, rows = [], [], [], [], []
        for line in r:
            ids.append(line[0])
            ys.append(1 if line[1] == "M" else 0)
            langs.append(line[2] or None)
            counts.append(int(line[3]) if line[3] else 0)
            rows.append([float(v) for v in line[len(META_COLUMNS):]])
    X = np.array(rows, dtype=float).reshape(len(rows), len(manifest.columns))
    return FeatureMatrix(X, np.array(ys, dtype=int), ids, manifest, np.array(counts, dtype=int), langs)
