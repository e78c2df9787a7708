"""Gender-difference statistics over user aggregates.

MI is computed at user level (does a user ever use the emoji) and PMI at
message level (does a message contain the emoji). Both use natural logs.
"""

from __future__ import annotations

import bisect
import math
from collections import Counter
from dataclasses import dataclass
from itertools import combinations
from typing import Callable, Iterable, Mapping, Sequence as Seq

from .corpus import Gender, UserAggregate
from .errors import DegenerateError
from .lexicon import EmojiLexicon, Sequence, SentimentLabel

MI_CLAMP = 1e-15


@dataclass(frozen=True)
class GenderSplitStat:
    label: str
    female_value: float
    male_value: float
    female_count: int
    female_total: int
    male_count: int
    male_total: int
    z: float
    p_raw: float
    p_adjusted: float

    def as_dict(self) -> dict:
        return {
            "label": self.label,
            "female": self.female_value,
            "male": self.male_value,
            "female_count": self.female_count,
            "female_total": self.female_total,
            "male_count": self.male_count,
            "male_total": self.male_total,
            "z": self.z,
            "p_raw": self.p_raw,
            "p_adjusted": self.p_adjusted,
        }


def _gendered(users: Iterable[UserAggregate], gender: Gender | None = None) -> list[UserAggregate]:
    if gender is None:
        return [u for u in users if u.gender is not None]
    return [u for u in users if u.gender == gender]


# --- popularity ----------------------------------------------------------------

def emoji_msg_fraction(u: UserAggregate) -> float:
    if u.msg_count <= 0:
        raise DegenerateError(f"user {u.user_id!r} has no messages")
    return u.emoji_msg_count / u.msg_count


def empirical_cdf(values: Iterable[float]) -> list[tuple[float, float]]:
    """Step points ``(x, F(x))`` at each distinct value, F = share of values <= x."""
    vals = sorted(values)
    if not vals:
        raise ValueError("empirical_cdf of an empty sample")
    if not all(math.isfinite(v) for v in vals):
        raise ValueError("values must be finite")
    n = len(vals)
    steps = []
    for i, v in enumerate(vals):
        if i + 1 < n and vals[i + 1] == v:
            continue
        steps.append((v, (i + 1) / n))
    return steps


def cdf_at(steps: Seq[tuple[float, float]], x: float) -> float:
    xs = [s[0] for s in steps]
    i = bisect.bisect_right(xs, x)
    return 0.0 if i == 0 else steps[i - 1][1]


def fraction_above(values: Iterable[float], threshold: float) -> float:
    """Share of values strictly above ``threshold`` (1 - F(threshold))."""
    return 1.0 - cdf_at(empirical_cdf(values), threshold)


def normal_sf(x: float) -> float:
    """Upper tail of the standard normal, 1 - Phi(x)."""
    return 0.5 * math.erfc(x / math.sqrt(2.0))


def two_proportion_ztest(k1: int, n1: int, k2: int, n2: int) -> tuple[float, float]:
    """Pooled two-proportion z-test; returns ``(z, two-sided p)``."""
    if n1 <= 0 or n2 <= 0:
        raise ValueError("sample sizes must be positive")
    if not (0 <= k1 <= n1 and 0 <= k2 <= n2):
        raise ValueError("counts must satisfy 0 <= k <= n")
    pooled = (k1 + k2) / (n1 + n2)
    if pooled <= 0.0 or pooled >= 1.0:
        raise DegenerateError("pooled proportion is 0 or 1; z is undefined")
    se = math.sqrt(pooled * (1 - pooled) * (1 / n1 + 1 / n2))
    z = (k1 / n1 - k2 / n2) / se
    p = math.erfc(abs(z) / math.sqrt(2.0))
    return z, min(1.0, p)


def bonferroni(p_values: Seq[float]) -> list[float]:
    m = len(p_values)
    for p in p_values:
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"p-value {p!r} outside [0, 1]")
    return [min(1.0, m * p) for p in p_values]


def _split_stat(label: str, fk: int, fn: int, mk: int, mn: int) -> GenderSplitStat:
    try:
        z, p = two_proportion_ztest(fk, fn, mk, mn)
    except DegenerateError:
        # both proportions are 0 or both are 1
        z, p = 0.0, 1.0
    return GenderSplitStat(label, fk / fn, mk / mn, fk, fn, mk, mn, z, p, p)


def adjust_batch(stats: Seq[GenderSplitStat]) -> list[GenderSplitStat]:
    adjusted = bonferroni([s.p_raw for s in stats])
    return [
        GenderSplitStat(**{**s.__dict__, "p_adjusted": a}) for s, a in zip(stats, adjusted)
    ]


def popularity(users: Iterable[UserAggregate]) -> GenderSplitStat:
    """Message-level %emoji-msg for females vs males, with z-test."""
    users = list(users)
    fem = _gendered(users, Gender.FEMALE)
    mal = _gendered(users, Gender.MALE)
    fn = sum(u.msg_count for u in fem)
    mn = sum(u.msg_count for u in mal)
    if not fn or not mn:
        raise ValueError("need messages from both genders")
    return _split_stat(
        "emoji_msg", sum(u.emoji_msg_count for u in fem), fn, sum(u.emoji_msg_count for u in mal), mn
    )


# --- discriminative emojis -------------------------------------------------------

def mi_from_counts(n_use_f: int, n_use_m: int, n_f: int, n_m: int) -> float:
    """MI (nats) between a binary usage indicator and gender from user counts."""
    n = n_f + n_m
    use = n_use_f + n_use_m
    cells = (
        (n_use_f, use, n_f),
        (n_use_m, use, n_m),
        (n_f - n_use_f, n - use, n_f),
        (n_m - n_use_m, n - use, n_m),
    )
    mi = 0.0
    for joint, row, col in cells:
        if joint:
            mi += (joint / n) * math.log(joint * n / (row * col))
    if -MI_CLAMP < mi < 0.0:
        mi = 0.0
    return mi


def _usage_counts(users: Iterable[UserAggregate]):
    """Per-emoji number of female and male users, plus gender totals."""
    by_f: Counter = Counter()
    by_m: Counter = Counter()
    n_f = n_m = 0
    for u in users:
        if u.gender is Gender.FEMALE:
            n_f += 1
            by_f.update(u.per_emoji_counts.keys())
        elif u.gender is Gender.MALE:
            n_m += 1
            by_m.update(u.per_emoji_counts.keys())
    return by_f, by_m, n_f, n_m


def mutual_information(users: Iterable[UserAggregate], emoji: Sequence) -> float:
    emoji = tuple(emoji)
    n_f = n_m = uf = um = 0
    for u in users:
        if u.gender is None:
            continue
        used = u.per_emoji_counts.get(emoji, 0) >= 1
        if u.gender is Gender.FEMALE:
            n_f += 1
            uf += used
        else:
            n_m += 1
            um += used
    if not n_f or not n_m:
        raise ValueError("mutual information needs users of both genders")
    return mi_from_counts(uf, um, n_f, n_m)


def _conditional(n_use_f: int, n_use_m: int) -> tuple[float, float]:
    total = n_use_f + n_use_m
    if total == 0:
        raise DegenerateError("no labeled user used this emoji")
    p_m = n_use_m / total
    return p_m, 1.0 - p_m


def conditional_gender_prob(users: Iterable[UserAggregate], emoji: Sequence) -> tuple[float, float]:
    """``(p(Male|e), p(Female|e))`` over labeled users of ``emoji``."""
    emoji = tuple(emoji)
    uf = um = 0
    for u in users:
        if u.gender is not None and u.per_emoji_counts.get(emoji, 0) >= 1:
            if u.gender is Gender.FEMALE:
                uf += 1
            else:
                um += 1
    return _conditional(uf, um)


@dataclass(frozen=True)
class DiscriminativeEmojiRow:
    rank: int
    emoji: Sequence
    mi: float
    p_male_given_e: float
    p_female_given_e: float
    gender_tag: str  # "female" | "male"
    n_users: int


def rank_discriminative(users: Iterable[UserAggregate], lexicon: EmojiLexicon | None = None,
                        male_threshold: float | None = None) -> list[DiscriminativeEmojiRow]:
    """All emojis used by labeled users, by decreasing MI with gender.

    An emoji is tagged male when ``p(Male|e) > male_threshold`` (strict),
    female otherwise; the threshold defaults to the male share of labeled
    users. Equal MI values are ordered by code point sequence.
    """
    users = list(users)
    by_f, by_m, n_f, n_m = _usage_counts(users)
    if not n_f or not n_m:
        raise ValueError("ranking needs users of both genders")
    if male_threshold is None:
        male_threshold = n_m / (n_f + n_m)
    if not 0.0 < male_threshold < 1.0:
        raise ValueError("male_threshold must be in (0, 1)")
    emojis = set(by_f) | set(by_m)
    if lexicon is not None:
        emojis = {e for e in emojis if e in lexicon}
    scored = []
    for e in emojis:
        uf, um = by_f.get(e, 0), by_m.get(e, 0)
        p_m, p_f = _conditional(uf, um)
        scored.append((mi_from_counts(uf, um, n_f, n_m), e, p_m, p_f, uf + um))
    scored.sort(key=lambda r: (-r[0], r[1]))
    return [
        DiscriminativeEmojiRow(i + 1, e, mi, p_m, p_f, "male" if p_m > male_threshold else "female", n)
        for i, (mi, e, p_m, p_f, n) in enumerate(scored)
    ]


def top_emojis(users: Iterable[UserAggregate], gender: Gender | None = None,
               n: int | None = None) -> list[tuple[Sequence, float]]:
    """Emojis by share of all emoji tokens in the population.

    ``gender=None`` pools every user, labeled or not.
    """
    totals: Counter = Counter()
    for u in users:
        if gender is None or u.gender == gender:
            totals.update(u.per_emoji_counts)
    grand = sum(totals.values())
    if not grand:
        raise ValueError("no emoji tokens in the selected population")
    ranked = sorted(totals.items(), key=lambda kv: (-kv[1], kv[0]))
    if n is not None:
        ranked = ranked[:n]
    return [(e, c / grand) for e, c in ranked]


# --- co-occurrence ------------------------------------------------------------------

@dataclass
class MessageCounts:
    """Message-level emoji indicator counts.

    ``single[e]`` is the number of messages containing ``e``; ``pair[(a, b)]``
    with ``a < b`` the number containing both. ``n_messages`` counts all
    messages, emoji-free ones included.
    """

    n_messages: int
    single: Counter
    pair: Counter

    @classmethod
    def from_users(cls, users: Iterable[UserAggregate], gender: Gender | None = None) -> "MessageCounts":
        n = 0
        single: Counter = Counter()
        pair: Counter = Counter()
        for u in users:
            if gender is not None and u.gender != gender:
                continue
            n += u.msg_count
            for emoji_set, count in u.emoji_sets.items():
                ordered = sorted(emoji_set)
                for e in ordered:
                    single[e] += count
                for a, b in combinations(ordered, 2):
                    pair[(a, b)] += count
        return cls(n, single, pair)

    @classmethod
    def from_messages(cls, messages: Iterable[Iterable[Sequence]]) -> "MessageCounts":
        n = 0
        single: Counter = Counter()
        pair: Counter = Counter()
        for msg in messages:
            n += 1
            ordered = sorted({tuple(e) for e in msg})
            single.update(ordered)
            pair.update(combinations(ordered, 2))
        return cls(n, single, pair)

    def together(self, e1: Sequence, e2: Sequence) -> int:
        if e1 == e2:
            return self.single.get(e1, 0)
        key = (e1, e2) if e1 < e2 else (e2, e1)
        return self.pair.get(key, 0)


def pmi(counts: MessageCounts, e1: Sequence, e2: Sequence) -> float:
    """ln(p(e1,e2) / (p(e1) p(e2))); ``-inf`` when the pair never co-occurs."""
    e1, e2 = tuple(e1), tuple(e2)
    n1 = counts.single.get(e1, 0)
    n2 = counts.single.get(e2, 0)
    if not n1 or not n2:
        raise DegenerateError("PMI undefined: an emoji never occurs")
    n12 = counts.together(e1, e2)
    if not n12:
        return -math.inf
    return math.log(n12 * counts.n_messages / (n1 * n2))


# --- sentiment ----------------------------------------------------------------------

def class_predicate(name: str, lexicon: EmojiLexicon,
                    labels: Mapping[Sequence, SentimentLabel]) -> Callable[[Sequence], bool]:
    """Membership test for a sentiment label name or a lexicon group name."""
    try:
        label = SentimentLabel(name.lower())
    except ValueError:
        label = None
    if label is not None:
        return lambda e: labels.get(e) is label
    members = {e.sequence for e in lexicon if e.group == name}
    if not members:
        raise ValueError(f"unknown emoji class {name!r}")
    return members.__contains__


def sentiment_usage_stats(users: Iterable[UserAggregate], lexicon: EmojiLexicon,
                          labels: Mapping[Sequence, SentimentLabel],
                          classes: Seq[str] = ("positive", "negative")) -> dict[str, GenderSplitStat]:
    """Per class, the share of each gender's emoji tokens falling in it.

    The denominator is always all emoji tokens. p-values are Bonferroni
    adjusted over the classes requested together.
    """
    users = list(users)
    totals = {}
    for g in Gender:
        c: Counter = Counter()
        for u in _gendered(users, g):
            c.update(u.per_emoji_counts)
        if not c:
            raise ValueError(f"no emoji tokens from gender {g.value}")
        totals[g] = c
    raw = []
    for name in classes:
        member = class_predicate(name, lexicon, labels)
        counts = {
            g: (sum(v for e, v in totals[g].items() if member(e)), sum(totals[g].values()))
            for g in Gender
        }
        raw.append(_split_stat(name, *counts[Gender.FEMALE], *counts[Gender.MALE]))
    return {s.label: s for s in adjust_batch(raw)}
