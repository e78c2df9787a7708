"""Message ingestion, per-user aggregation, user filtering/splitting and
seeded synthetic corpora with planted gender signal."""

from __future__ import annotations

import enum
import hashlib
import json
import math
import random
import statistics
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping

from .errors import ConfigError, DataError, IngestError
from .lexicon import EmojiLexicon, NormalizationPolicy, Sequence, format_sequence, parse_hex_sequence
from .segmenter import MessagePatternFlags, classify_patterns, emoji_sequences, tokenize

MAX_REJECT_SHARE = 0.5


class Gender(str, enum.Enum):
    FEMALE = "F"
    MALE = "M"


@dataclass(frozen=True)
class Message:
    user_id: str
    text: str
    gender: Gender | None = None
    lang: str | None = None
    timestamp: int | None = None

    def to_json(self) -> str:
        return json.dumps(
            {
                "user_id": self.user_id,
                "gender": self.gender.value if self.gender else None,
                "lang": self.lang,
                "timestamp": self.timestamp,
                "text": self.text,
            },
            ensure_ascii=False,
        )


def parse_record(obj) -> Message:
    """Validate one decoded JSON object; raises ``ValueError(reason)``."""
    if not isinstance(obj, dict):
        raise ValueError("not an object")
    uid = obj.get("user_id")
    if uid is None or uid == "":
        raise ValueError("missing user_id")
    if not isinstance(uid, str):
        raise ValueError("user_id is not a string")
    text = obj.get("text")
    if not isinstance(text, str):
        raise ValueError("missing text")
    g = obj.get("gender")
    if g is not None:
        try:
            g = Gender(g)
        except ValueError:
            raise ValueError(f"bad gender {g!r}") from None
    lang = obj.get("lang")
    if lang is not None and not isinstance(lang, str):
        raise ValueError("lang is not a string")
    ts = obj.get("timestamp")
    if ts is not None and (isinstance(ts, bool) or not isinstance(ts, int)):
        raise ValueError("timestamp is not an integer")
    return Message(uid, text, g, lang, ts)


@dataclass
class IngestReport:
    accepted: int = 0
    rejected: int = 0
    distinct_users: int = 0
    reasons: Counter = field(default_factory=Counter)

    def as_dict(self) -> dict:
        return {
            "accepted": self.accepted,
            "rejected": self.rejected,
            "distinct_users": self.distinct_users,
            "reasons": dict(sorted(self.reasons.items())),
        }


@dataclass
class Corpus:
    messages: list[Message]
    report: IngestReport = field(default_factory=IngestReport)

    def __len__(self):
        return len(self.messages)

    def __iter__(self):
        return iter(self.messages)

    def by_user(self) -> dict[str, list[Message]]:
        out: dict[str, list[Message]] = {}
        for m in self.messages:
            out.setdefault(m.user_id, []).append(m)
        return out

    def window(self, start: int | None = None, end: int | None = None) -> "Corpus":
        """Messages with ``start <= timestamp < end``; untimed messages are dropped
        when either bound is given."""
        if start is None and end is None:
            return self
        keep = [
            m for m in self.messages
            if m.timestamp is not None
            and (start is None or m.timestamp >= start)
            and (end is None or m.timestamp < end)
        ]
        return Corpus(keep, self.report)


def ingest(lines: Iterable[str | bytes]) -> Corpus:
    """Parse JSONL records. Bad lines are counted and skipped.

    Raises :class:`IngestError` when more than half the non-blank lines are
    rejected, which usually means the wrong file was passed.
    """
    report = IngestReport()
    messages = []
    try:
        for raw in lines:
            if isinstance(raw, bytes):
                try:
                    raw = raw.decode("utf-8")
                except UnicodeDecodeError:
                    report.rejected += 1
                    report.reasons["invalid utf-8"] += 1
                    continue
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError:
                report.rejected += 1
                report.reasons["invalid json"] += 1
                continue
            try:
                messages.append(parse_record(obj))
            except ValueError as exc:
                report.rejected += 1
                report.reasons[str(exc)] += 1
                continue
            report.accepted += 1
    except OSError as exc:
        raise IngestError(f"cannot read corpus: {exc}") from exc
    total = report.accepted + report.rejected
    if total and report.rejected / total > MAX_REJECT_SHARE:
        raise IngestError(
            f"{report.rejected} of {total} lines rejected; is this a message corpus?"
        )
    report.distinct_users = len({m.user_id for m in messages})
    return Corpus(messages, report)


def read_corpus(path: str | Path) -> Corpus:
    try:
        with open(path, "rb") as fh:
            return ingest(fh)
    except OSError as exc:
        raise IngestError(f"cannot read corpus {path}: {exc}") from exc


@dataclass
class UserAggregate:
    """Per-user sufficient statistics.

    ``emoji_count_hist`` maps "emojis in an emoji message" to how many
    messages had that count, and ``emoji_sets`` counts the distinct-emoji set
    of each emoji message. Both merge by addition, so aggregation over shards
    is associative and commutative.
    """

    user_id: str
    gender: Gender | None = None
    msg_count: int = 0
    emoji_msg_count: int = 0
    per_emoji_counts: Counter = field(default_factory=Counter)
    pattern_counts: Counter = field(default_factory=Counter)
    emoji_count_hist: Counter = field(default_factory=Counter)
    emoji_sets: Counter = field(default_factory=Counter)
    lang_counts: Counter = field(default_factory=Counter)

    @property
    def labeled(self) -> bool:
        return self.gender is not None

    @property
    def lang(self) -> str | None:
        if not self.lang_counts:
            return None
        # majority tag, ties to the lexicographically smallest
        return min(self.lang_counts.items(), key=lambda kv: (-kv[1], kv[0]))[0]

    @property
    def emoji_counts_per_emoji_msg(self) -> list[int]:
        return sorted(self.emoji_count_hist.elements())

    @property
    def emoji_token_count(self) -> int:
        return sum(self.per_emoji_counts.values())

    def emoji_count_mean(self) -> float:
        return sum(k * v for k, v in self.emoji_count_hist.items()) / self.emoji_msg_count

    def emoji_count_max(self) -> int:
        return max(self.emoji_count_hist)

    def emoji_count_median(self) -> float:
        return float(statistics.median(self.emoji_counts_per_emoji_msg))

    def _set_gender(self, gender: Gender | None):
        if gender is None:
            return
        if self.gender is not None and self.gender != gender:
            raise DataError(f"user {self.user_id!r} has conflicting gender labels")
        self.gender = gender

    def add(self, message: Message, sequences: list[Sequence], flags: MessagePatternFlags):
        self._set_gender(message.gender)
        if message.lang:
            self.lang_counts[message.lang] += 1
        self.msg_count += 1
        if not sequences:
            return
        self.emoji_msg_count += 1
        self.per_emoji_counts.update(sequences)
        self.emoji_count_hist[len(sequences)] += 1
        self.emoji_sets[frozenset(sequences)] += 1
        for name in MessagePatternFlags.FLAGS:
            if getattr(flags, name):
                self.pattern_counts[name] += 1

    def merge(self, other: "UserAggregate") -> "UserAggregate":
        if other.user_id != self.user_id:
            raise ValueError("cannot merge aggregates of different users")
        out = UserAggregate(self.user_id, self.gender)
        out._set_gender(other.gender)
        out.msg_count = self.msg_count + other.msg_count
        out.emoji_msg_count = self.emoji_msg_count + other.emoji_msg_count
        for name in ("per_emoji_counts", "pattern_counts", "emoji_count_hist", "emoji_sets", "lang_counts"):
            setattr(out, name, getattr(self, name) + getattr(other, name))
        return out


def aggregate(messages: Iterable[Message], lexicon: EmojiLexicon,
              policy: NormalizationPolicy | None = None) -> list[UserAggregate]:
    """Aggregate messages per user; result sorted by user_id.

    Users without a gender label are kept (``labeled`` is False) and are
    skipped by every gendered statistic downstream.
    """
    if policy is not None and policy != lexicon.policy:
        lexicon = lexicon.with_policy(policy)
    users: dict[str, UserAggregate] = {}
    for m in messages:
        agg = users.get(m.user_id)
        if agg is None:
            agg = users[m.user_id] = UserAggregate(m.user_id)
        tokens = tokenize(m.text, lexicon)
        agg.add(m, emoji_sequences(tokens), classify_patterns(tokens))
    return [users[k] for k in sorted(users)]


def merge_aggregates(*shards: Iterable[UserAggregate]) -> list[UserAggregate]:
    users: dict[str, UserAggregate] = {}
    for shard in shards:
        for u in shard:
            users[u.user_id] = users[u.user_id].merge(u) if u.user_id in users else u
    return [users[k] for k in sorted(users)]


def labeled(users: Iterable[UserAggregate]) -> list[UserAggregate]:
    return [u for u in users if u.gender is not None]


def filter_by_emoji_msgs(users: Iterable[UserAggregate], min_inclusive: int = 0,
                         max_exclusive: int | None = None) -> list[UserAggregate]:
    if min_inclusive < 0:
        raise ValueError("min_inclusive must be >= 0")
    if max_exclusive is not None and max_exclusive <= min_inclusive:
        raise ValueError(f"empty bucket [{min_inclusive}, {max_exclusive})")
    return [
        u for u in users
        if u.emoji_msg_count >= min_inclusive
        and (max_exclusive is None or u.emoji_msg_count < max_exclusive)
    ]


def split(users: Iterable, train_fraction: float, seed: int):
    """Random train/test partition; train gets ``floor(train_fraction * n)`` users.

    Items are user aggregates or plain user-id strings. Input order does
    not matter: items are ordered by user id before the seeded shuffle.
    """
    if not 0 < train_fraction < 1:
        raise ValueError("train_fraction must be in (0, 1)")
    items = sorted(users, key=lambda u: u if isinstance(u, str) else u.user_id)
    if not items:
        raise ValueError("cannot split an empty user list")
    random.Random(seed).shuffle(items)
    n_train = math.floor(train_fraction * len(items))
    return items[:n_train], items[n_train:]


# --- synthetic corpora -------------------------------------------------------

WORDS = (
    "ok yes no lol haha see you soon love this good night morning today tomorrow "
    "what when where why how happy birthday thanks please come home now later "
    "game match win team food dinner lunch coffee movie music song party friend "
    "call me back miss work school class bus late early wow nice cool sure maybe "
    "great fun weekend trip beach rain sun cold hot tired sleep wake busy free"
).split()

BASE_TIMESTAMP = 1480809600  # 2016-12-04T00:00:00Z
WINDOW_SECONDS = 87 * 86400


@dataclass
class SyntheticConfig:
    """Generator parameters.

    Preferences map hex code point strings (``"1F602"``) to probabilities
    and must each sum to 1. ``emoji_count_weights[i]`` is the probability
    that an emoji message holds ``i + 1`` emojis.
    """

    n_users_per_gender: int
    female_preference: dict[str, float]
    male_preference: dict[str, float]
    messages_per_user: tuple[int, int] = (150, 250)
    female_rate: float = 0.08
    male_rate: float = 0.07
    emoji_count_weights: tuple[float, ...] = (0.6, 0.25, 0.15)
    repeat_prob: float = 0.3
    emoji_only_prob: float = 0.2
    langs: tuple[str, ...] = ("en",)
    seed: int = 0
    planted: dict[str, str] = field(default_factory=dict)

    def validate(self):
        if self.n_users_per_gender < 0:
            raise ConfigError("n_users_per_gender must be >= 0")
        lo, hi = self.messages_per_user
        if not 1 <= lo <= hi:
            raise ConfigError("messages_per_user must satisfy 1 <= min <= max")
        for name in ("female_rate", "male_rate", "repeat_prob", "emoji_only_prob"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1]")
        for name in ("female_preference", "male_preference", "emoji_count_weights"):
            dist = getattr(self, name)
            values = list(dist.values()) if isinstance(dist, Mapping) else list(dist)
            if not values or any(v < 0 or not math.isfinite(v) for v in values):
                raise ConfigError(f"{name} must be a non-empty non-negative distribution")
            if abs(math.fsum(values) - 1.0) > 1e-9:
                raise ConfigError(f"{name} sums to {math.fsum(values)!r}, not 1")
        for pref in (self.female_preference, self.male_preference):
            for code in pref:
                try:
                    parse_hex_sequence(code)
                except ValueError as exc:
                    raise ConfigError(f"bad emoji code {code!r}") from exc
        if not self.langs:
            raise ConfigError("langs must be non-empty")

    def as_dict(self) -> dict:
        d = asdict(self)
        d["messages_per_user"] = list(self.messages_per_user)
        d["emoji_count_weights"] = list(self.emoji_count_weights)
        d["langs"] = list(self.langs)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "SyntheticConfig":
        d = dict(d)
        try:
            for key in ("messages_per_user", "emoji_count_weights", "langs"):
                if key in d:
                    d[key] = tuple(d[key])
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


def _sampler(dist: Mapping[str, float]):
    codes = list(dist)
    texts = ["".join(map(chr, parse_hex_sequence(c))) for c in codes]
    weights = [dist[c] for c in codes]
    cum = []
    acc = 0.0
    for w in weights:
        acc += w
        cum.append(acc)
    return texts, cum


def _draw(rng: random.Random, texts, cum) -> str:
    return rng.choices(texts, cum_weights=cum, k=1)[0]


def _compose(rng: random.Random, cfg: SyntheticConfig, emojis: list[str]) -> str:
    if emojis and rng.random() < cfg.emoji_only_prob:
        return "".join(emojis)
    words = rng.choices(WORDS, k=rng.randint(1, 8))
    if not emojis:
        return " ".join(words)
    if len(emojis) == 1 or rng.random() < 0.5:
        # run of emojis at a random word boundary
        pos = rng.randint(0, len(words))
        return " ".join(words[:pos] + ["".join(emojis)] + words[pos:]).strip()
    # scatter each emoji at its own boundary
    parts = list(words)
    for e in emojis:
        parts.insert(rng.randint(0, len(parts)), e)
    return " ".join(parts)


def generate_synthetic(config: SyntheticConfig) -> Iterator[str]:
    """Yield JSONL lines (no trailing newline). Pure function of ``config``."""
    config.validate()
    rng = random.Random(config.seed)
    samplers = {
        Gender.FEMALE: (_sampler(config.female_preference), config.female_rate),
        Gender.MALE: (_sampler(config.male_preference), config.male_rate),
    }
    counts = list(range(1, len(config.emoji_count_weights) + 1))
    lo, hi = config.messages_per_user
    for i in range(2 * config.n_users_per_gender):
        gender = Gender.FEMALE if i % 2 == 0 else Gender.MALE
        (texts, cum), rate = samplers[gender]
        uid = f"u{i:06d}"
        lang = rng.choice(config.langs)
        for _ in range(rng.randint(lo, hi)):
            emojis: list[str] = []
            if rng.random() < rate:
                k = rng.choices(counts, weights=config.emoji_count_weights, k=1)[0]
                if k > 1 and rng.random() < config.repeat_prob:
                    emojis = [_draw(rng, texts, cum)] * k
                else:
                    emojis = [_draw(rng, texts, cum) for _ in range(k)]
            msg = Message(uid, _compose(rng, config, emojis), gender, lang,
                          BASE_TIMESTAMP + rng.randrange(WINDOW_SECONDS))
            yield msg.to_json()


def write_synthetic(config: SyntheticConfig, path: str | Path) -> str:
    """Write the corpus to ``path`` and return its SHA-256 hex digest."""
    h = hashlib.sha256()
    with open(path, "wb") as fh:
        for line in generate_synthetic(config):
            data = (line + "\n").encode("utf-8")
            h.update(data)
            fh.write(data)
    return h.hexdigest()


def planted_config(lexicon: EmojiLexicon, n_users_per_gender: int = 2000, *,
                   vocab_size: int = 80, n_planted: int = 20, ratio: float = 3.0,
                   planted_mass: float = 0.4, zipf_exponent: float = 1.0,
                   female_rate: float = 0.08, male_rate: float = 0.07,
                   messages_per_user: tuple[int, int] = (150, 250), seed: int = 0) -> SyntheticConfig:
    """Config whose ground truth is known by construction.

    ``vocab_size`` single-code-point emojis are drawn from ``lexicon``. The
    neutral ones follow a Zipf law shared by both genders; ``n_planted`` of
    them carry ``planted_mass`` of each gender's distribution, half weighted
    ``ratio``:1 toward females and half toward males. Because the two halves
    mirror each other, both genders see the same total planted mass.
    """
    if n_planted % 2 or n_planted > vocab_size:
        raise ConfigError("n_planted must be even and <= vocab_size")
    rng = random.Random(seed)
    pool = sorted(e.code for e in lexicon if len(e.sequence) == 1)
    if len(pool) < vocab_size:
        raise ConfigError("lexicon too small for the requested vocabulary")
    vocab = rng.sample(pool, vocab_size)
    planted_codes = vocab[:n_planted]
    neutral = vocab[n_planted:]

    zipf = [1.0 / (r + 1) ** zipf_exponent for r in range(len(neutral))]
    zsum = math.fsum(zipf)
    neutral_w = {c: (1 - planted_mass) * w / zsum for c, w in zip(neutral, zipf)}

    half = n_planted // 2
    # each planted emoji shares planted_mass equally across the mirrored pair of weights
    unit = planted_mass / (half * (ratio + 1)) if n_planted else 0.0
    female, male = dict(neutral_w), dict(neutral_w)
    planted = {}
    for j, code in enumerate(planted_codes):
        hi_w, lo_w = ratio * unit, unit
        if j < half:
            female[code], male[code], planted[code] = hi_w, lo_w, "F"
        else:
            female[code], male[code], planted[code] = lo_w, hi_w, "M"
    return SyntheticConfig(
        n_users_per_gender=n_users_per_gender,
        female_preference=_renormalize(female),
        male_preference=_renormalize(male),
        messages_per_user=messages_per_user,
        female_rate=female_rate,
        male_rate=male_rate,
        seed=seed,
        planted=planted,
    )


def _renormalize(dist: dict[str, float]) -> dict[str, float]:
    total = math.fsum(dist.values())
    return {k: v / total for k, v in sorted(dist.items())}


def sequence_key(seq: Sequence) -> str:
    return format_sequence(seq)
