"""Emoji inventory, sequence canonicalization and emoji sentiment labels."""

from __future__ import annotations

import enum
import io
import re
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import BinaryIO, Iterable, Iterator, Mapping

import regex

from .errors import LexiconConflict, ParseError

VS16 = 0xFE0F
ZWJ = 0x200D
KEYCAP = 0x20E3
SKIN_TONES = frozenset(range(0x1F3FB, 0x1F400))
REGIONAL_INDICATORS = range(0x1F1E6, 0x1F200)
KEYCAP_BASES = frozenset(map(ord, "0123456789#*"))

_EXT_PICT = regex.compile(r"\p{Extended_Pictographic}")
_HEADER = re.compile(r"#policy\b(.*)$")

Sequence = tuple[int, ...]


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


@dataclass(frozen=True)
class NormalizationPolicy:
    fold_skin_tones: bool = True
    strip_variation_selectors: bool = True
    keep_zwj_sequences_distinct: bool = True

    def drops(self, cp: int) -> bool:
        """True if normalization deletes this code point wherever it occurs."""
        if cp == VS16:
            return self.strip_variation_selectors
        if cp in SKIN_TONES:
            return self.fold_skin_tones
        return False

    def header(self) -> str:
        text = (
            f"#policy fold_skin_tones={str(self.fold_skin_tones).lower()} "
            f"strip_vs={str(self.strip_variation_selectors).lower()}"
        )
        if not self.keep_zwj_sequences_distinct:
            text += " keep_zwj=false"
        return text

    def as_dict(self) -> dict:
        return {
            "fold_skin_tones": self.fold_skin_tones,
            "strip_variation_selectors": self.strip_variation_selectors,
            "keep_zwj_sequences_distinct": self.keep_zwj_sequences_distinct,
        }

    @classmethod
    def from_header(cls, line: str) -> "NormalizationPolicy":
        m = _HEADER.match(line.strip())
        if not m:
            raise ValueError(f"not a policy header: {line!r}")
        return cls.from_assignments(m.group(1).split())

    @classmethod
    def from_assignments(cls, items: Iterable[str]) -> "NormalizationPolicy":
        """Build a policy from ``key=value`` strings (CLI and file header)."""
        aliases = {
            "fold_skin_tones": "fold_skin_tones",
            "strip_vs": "strip_variation_selectors",
            "strip_variation_selectors": "strip_variation_selectors",
            "keep_zwj": "keep_zwj_sequences_distinct",
            "keep_zwj_sequences_distinct": "keep_zwj_sequences_distinct",
        }
        kwargs = {}
        for item in items:
            for part in item.split(","):
                if not part.strip():
                    continue
                key, sep, value = part.partition("=")
                key = key.strip().replace("-", "_")
                if not sep or key not in aliases:
                    raise ValueError(f"unknown policy setting: {part!r}")
                kwargs[aliases[key]] = _parse_bool(value)
        return cls(**kwargs)


DEFAULT_POLICY = NormalizationPolicy()


def normalize_sequence(raw: Iterable[int], policy: NormalizationPolicy = DEFAULT_POLICY) -> Sequence:
    """Canonical form of a code-point sequence under ``policy``.

    Only deletes code points (VS16, skin-tone modifiers, and with
    ``keep_zwj_sequences_distinct`` off everything from the first ZWJ on);
    never reorders. Idempotent.
    """
    out = []
    for cp in raw:
        if cp == ZWJ and not policy.keep_zwj_sequences_distinct:
            break
        if policy.drops(cp):
            continue
        out.append(cp)
    return tuple(out)


def is_emoji_sequence(seq: Sequence) -> bool:
    if not seq:
        return False
    if len(seq) == 2 and all(cp in REGIONAL_INDICATORS for cp in seq):
        return True
    if len(seq) >= 2 and seq[0] in KEYCAP_BASES and seq[-1] == KEYCAP:
        return True
    return any(_EXT_PICT.match(chr(cp)) for cp in seq)


def parse_hex_sequence(text: str) -> Sequence:
    out = []
    for tok in text.replace(",", " ").split():
        tok = tok.upper()
        if tok.startswith("U+"):
            tok = tok[2:]
        out.append(int(tok, 16))
    if not out:
        raise ValueError("empty code point sequence")
    return tuple(out)


def format_sequence(seq: Sequence) -> str:
    return " ".join(f"{cp:04X}" for cp in seq)


@dataclass(frozen=True)
class EmojiEntry:
    sequence: Sequence
    name: str
    keywords: tuple[str, ...] = ()
    group: str | None = None

    @property
    def text(self) -> str:
        return "".join(map(chr, self.sequence))

    @property
    def code(self) -> str:
        return format_sequence(self.sequence)


class EmojiLexicon:
    """Ordered, duplicate-free emoji inventory under one normalization policy.

    Entry order is the file order and defines the preference-feature columns.
    """

    def __init__(self, entries: Iterable[EmojiEntry], policy: NormalizationPolicy = DEFAULT_POLICY):
        self.policy = policy
        self.entries: tuple[EmojiEntry, ...] = tuple(entries)
        self._index: dict[Sequence, int] = {}
        for i, e in enumerate(self.entries):
            if e.sequence in self._index:
                raise LexiconConflict(
                    f"duplicate canonical sequence {e.code} "
                    f"({self.entries[self._index[e.sequence]].name!r} and {e.name!r})"
                )
            self._index[e.sequence] = i

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[EmojiEntry]:
        return iter(self.entries)

    def __contains__(self, seq) -> bool:
        return tuple(seq) in self._index

    def __getitem__(self, seq: Sequence) -> EmojiEntry:
        return self.entries[self._index[tuple(seq)]]

    def get(self, seq: Sequence, default=None):
        i = self._index.get(tuple(seq))
        return default if i is None else self.entries[i]

    def position(self, seq: Sequence) -> int:
        return self._index[tuple(seq)]

    @property
    def sequences(self) -> list[Sequence]:
        return [e.sequence for e in self.entries]

    @cached_property
    def max_len(self) -> int:
        return max((len(s) for s in self._index), default=0)

    @cached_property
    def trie(self) -> dict:
        """Nested dict keyed by code point; the key ``None`` marks a complete sequence."""
        root: dict = {}
        for seq in self._index:
            node = root
            for cp in seq:
                node = node.setdefault(cp, {})
            node[None] = seq
        return root

    def with_policy(self, policy: NormalizationPolicy) -> "EmojiLexicon":
        if policy == self.policy:
            return self
        rows = [(i + 1, e.sequence, e.name, e.keywords, e.group) for i, e in enumerate(self.entries)]
        return EmojiLexicon(_canonical_entries(rows, policy, "entries"), policy)

    def subset(self, sequences: Iterable[Sequence]) -> "EmojiLexicon":
        keep = {tuple(s) for s in sequences}
        return EmojiLexicon([e for e in self.entries if e.sequence in keep], self.policy)

    def dumps(self) -> str:
        lines = [self.policy.header()]
        for e in self.entries:
            row = [e.code, e.name, ",".join(e.keywords)]
            if e.group:
                row.append(e.group)
            lines.append("\t".join(row))
        return "\n".join(lines) + "\n"


def _as_text_lines(source) -> list[str]:
    if isinstance(source, (str, Path)):
        data = Path(source).read_bytes()
    elif isinstance(source, (bytes, bytearray)):
        data = bytes(source)
    else:
        data = source.read()
        if isinstance(data, str):
            return data.splitlines()
    try:
        return data.decode("utf-8").splitlines()
    except UnicodeDecodeError as exc:
        raise ParseError(f"lexicon is not valid UTF-8: {exc}") from exc


def load_emoji_lexicon(source: BinaryIO | bytes | str | Path,
                       policy: NormalizationPolicy | None = None) -> EmojiLexicon:
    """Read the emoji lexicon TSV.

    ``policy`` overrides the header policy; rows are canonicalized under
    whichever one is active, and canonical collisions raise
    :class:`LexiconConflict` naming both rows.
    """
    lines = _as_text_lines(source)
    file_policy = DEFAULT_POLICY
    rows = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        if line.startswith("#"):
            if _HEADER.match(line.strip()):
                try:
                    file_policy = NormalizationPolicy.from_header(line)
                except ValueError as exc:
                    raise ParseError(str(exc), lineno) from exc
            continue
        fields = line.split("\t")
        if len(fields) < 3:
            raise ParseError(f"expected at least 3 tab-separated fields, got {len(fields)}", lineno)
        try:
            raw = parse_hex_sequence(fields[0])
        except ValueError as exc:
            raise ParseError(f"bad code points {fields[0]!r}: {exc}", lineno) from exc
        name = fields[1].strip()
        if not name:
            raise ParseError("empty name", lineno)
        keywords = tuple(k.strip().lower() for k in fields[2].split(",") if k.strip())
        group = fields[3].strip() or None if len(fields) > 3 else None
        rows.append((lineno, raw, name, keywords, group))

    active = policy or file_policy
    return EmojiLexicon(_canonical_entries(rows, active), active)


def _canonical_entries(rows, policy: NormalizationPolicy, what: str = "rows") -> list[EmojiEntry]:
    """Canonicalize ``(lineno, raw, name, keywords, group)`` rows, rejecting collisions.

    With ``keep_zwj_sequences_distinct`` off, a ZWJ sequence collapsing onto
    an entry that is already present is an intended merge, not a conflict:
    the row without a ZWJ (else the earliest) survives.
    """
    entries: list[EmojiEntry] = []
    seen: dict[Sequence, tuple[int, int, bool]] = {}
    for lineno, raw, name, keywords, group in rows:
        seq = normalize_sequence(raw, policy)
        if not is_emoji_sequence(seq):
            raise ParseError(f"{format_sequence(raw)} is not an emoji sequence", lineno)
        has_zwj = ZWJ in raw
        entry = EmojiEntry(seq, name, keywords, group)
        if seq in seen:
            first, pos, first_zwj = seen[seq]
            if policy.keep_zwj_sequences_distinct or not (has_zwj or first_zwj):
                raise LexiconConflict(
                    f"{what} {first} and {lineno} both canonicalize to {format_sequence(seq)}"
                )
            if first_zwj and not has_zwj:
                entries[pos] = entry
                seen[seq] = (lineno, pos, False)
            continue
        seen[seq] = (lineno, len(entries), has_zwj)
        entries.append(entry)
    return entries


class SentimentLabel(str, enum.Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"
    NEITHER = "neither"


@dataclass(frozen=True)
class SentimentLexicon(Mapping):
    """Word -> (posemo, negemo) weights."""

    weights: Mapping[str, tuple[float, float]] = field(default_factory=dict)

    def __getitem__(self, word):
        return self.weights[word]

    def __iter__(self):
        return iter(self.weights)

    def __len__(self):
        return len(self.weights)


def load_sentiment_lexicon(source: BinaryIO | bytes | str | Path) -> SentimentLexicon:
    weights: dict[str, tuple[float, float]] = {}
    for lineno, line in enumerate(_as_text_lines(source), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 3:
            raise ParseError(f"expected 3 tab-separated fields, got {len(fields)}", lineno)
        try:
            pos, neg = float(fields[1]), float(fields[2])
        except ValueError as exc:
            raise ParseError(str(exc), lineno) from exc
        if not (pos >= 0 and neg >= 0) or pos == float("inf") or neg == float("inf"):
            raise ParseError("weights must be finite and non-negative", lineno)
        weights[fields[0].strip().lower()] = (pos, neg)
    return SentimentLexicon(weights)


_WORD_SPLIT = re.compile(r"[\s\-]+")


def sentiment_scores(entry: EmojiEntry, lexicon: Mapping[str, tuple[float, float]]) -> tuple[float, float]:
    text = " ".join((entry.name, *entry.keywords)).lower()
    pos = neg = 0.0
    for tok in _WORD_SPLIT.split(text):
        if tok in lexicon:
            p, n = lexicon[tok]
            pos += p
            neg += n
    return pos, neg


def sentiment_of(entry: EmojiEntry, lexicon: Mapping[str, tuple[float, float]]) -> SentimentLabel:
    pos, neg = sentiment_scores(entry, lexicon)
    if pos > neg:
        return SentimentLabel.POSITIVE
    if pos < neg:
        return SentimentLabel.NEGATIVE
    return SentimentLabel.NEITHER


def label_lexicon(lexicon: EmojiLexicon, sentiment: Mapping[str, tuple[float, float]]) -> dict[Sequence, SentimentLabel]:
    return {e.sequence: sentiment_of(e, sentiment) for e in lexicon}


def bundled_emoji_lexicon(policy: NormalizationPolicy | None = None) -> EmojiLexicon:
    data = resources.files("emojilens.data").joinpath("emoji.tsv").read_bytes()
    return load_emoji_lexicon(io.BytesIO(data), policy)


def bundled_sentiment_lexicon() -> SentimentLexicon:
    data = resources.files("emojilens.data").joinpath("sentiment.tsv").read_bytes()
    return load_sentiment_lexicon(data)
