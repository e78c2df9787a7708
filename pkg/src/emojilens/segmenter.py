"""Split message text into emoji and text tokens; classify emoji patterns."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import regex

from .lexicon import ZWJ, EmojiLexicon, NormalizationPolicy, Sequence


class Kind(str, enum.Enum):
    TEXT = "text"
    EMOJI = "emoji"


@dataclass(frozen=True, slots=True)
class Token:
    """A span ``text[start:end]`` (code point offsets).

    Emoji tokens carry the canonical lexicon sequence they matched; the span
    still covers the raw code points, VS16 and folded modifiers included.
    """

    kind: Kind
    start: int
    end: int
    sequence: Sequence | None = None
    text: str = ""

    @property
    def is_emoji(self) -> bool:
        return self.kind is Kind.EMOJI

    def byte_span(self, source: str) -> tuple[int, int]:
        lo = len(source[: self.start].encode("utf-8"))
        return lo, lo + len(self.text.encode("utf-8"))


def Text(text: str, start: int = 0) -> Token:
    return Token(Kind.TEXT, start, start + len(text), None, text)


def Emoji(sequence: Sequence, text: str | None = None, start: int = 0) -> Token:
    sequence = tuple(sequence)
    if text is None:
        text = "".join(map(chr, sequence))
    return Token(Kind.EMOJI, start, start + len(text), sequence, text)


# Cheap pre-filter: every lexicon entry contains an Extended_Pictographic code
# point, a regional indicator or a keycap mark.
_MAYBE_EMOJI = regex.compile(r"[\p{Extended_Pictographic}\U0001F1E6-\U0001F1FF\u20E3]")


def _match_at(text: str, i: int, trie: dict, policy: NormalizationPolicy):
    """Longest lexicon match starting at ``text[i]``; returns (end, sequence) or None."""
    cp = ord(text[i])
    if policy.drops(cp):
        return None
    node = trie.get(cp)
    if node is None:
        return None
    best = (i + 1, node[None]) if None in node else None
    j = i + 1
    n = len(text)
    while j < n:
        cp = ord(text[j])
        if policy.drops(cp):
            # dropped code points extend the current window without moving in the trie
            j += 1
            if None in node:
                best = (j, node[None])
            continue
        node = node.get(cp)
        if node is None:
            break
        j += 1
        if None in node:
            best = (j, node[None])
    return best


def _absorb_zwj_tail(text: str, end: int, policy: NormalizationPolicy) -> int:
    n = len(text)
    while end + 1 < n and ord(text[end]) == ZWJ:
        end += 2
        while end < n and policy.drops(ord(text[end])):
            end += 1
    return end


def tokenize(text: str, lexicon: EmojiLexicon, policy: NormalizationPolicy | None = None) -> list[Token]:
    """Greedy longest-match segmentation against ``lexicon``.

    Candidate windows are compared after normalization, so ``"❤️"`` matches
    a lexicon entry stored as U+2764 when variation selectors are stripped.
    Unmatched spans coalesce into Text tokens; the token texts concatenate
    back to ``text``.
    """
    if policy is not None and policy != lexicon.policy:
        lexicon = lexicon.with_policy(policy)
    policy = lexicon.policy
    if not text:
        return []
    if not _MAYBE_EMOJI.search(text):
        return [Text(text)]
    trie = lexicon.trie
    tokens: list[Token] = []
    text_start = 0
    i = 0
    n = len(text)
    while i < n:
        hit = _match_at(text, i, trie, policy)
        if hit is None:
            i += 1
            continue
        end, seq = hit
        if not policy.keep_zwj_sequences_distinct:
            end = _absorb_zwj_tail(text, end, policy)
        if text_start < i:
            tokens.append(Token(Kind.TEXT, text_start, i, None, text[text_start:i]))
        tokens.append(Token(Kind.EMOJI, i, end, seq, text[i:end]))
        i = text_start = end
    if text_start < n:
        tokens.append(Token(Kind.TEXT, text_start, n, None, text[text_start:]))
    return tokens


def emoji_sequences(tokens: list[Token]) -> list[Sequence]:
    return [t.sequence for t in tokens if t.kind is Kind.EMOJI]


@dataclass(frozen=True)
class MessagePatternFlags:
    emoji_count: int = 0
    emoji_only: bool = False
    single_emoji_in_text: bool = False
    multi_nonconsecutive: bool = False
    multi_consecutive: bool = False
    repeating: bool = False

    FLAGS = (
        "emoji_only",
        "single_emoji_in_text",
        "multi_nonconsecutive",
        "multi_consecutive",
        "repeating",
    )


def classify_patterns(tokens: list[Token]) -> MessagePatternFlags:
    """Per-message usage patterns.

    Flags are independent, not a partition: ``"a😂😂b😂"`` is both
    multi-consecutive and multi-nonconsecutive. Whitespace between two
    emojis keeps them consecutive.
    """
    count = 0
    has_words = False
    consecutive = nonconsecutive = repeating = False
    prev: Sequence | None = None
    gap_has_words = False
    for tok in tokens:
        if tok.kind is Kind.TEXT:
            if tok.text.strip():
                has_words = True
                gap_has_words = True
            continue
        count += 1
        if prev is not None:
            if gap_has_words:
                nonconsecutive = True
            else:
                consecutive = True
                if tok.sequence == prev:
                    repeating = True
        prev = tok.sequence
        gap_has_words = False
    if count == 0:
        return MessagePatternFlags()
    return MessagePatternFlags(
        emoji_count=count,
        emoji_only=not has_words,
        single_emoji_in_text=count == 1 and has_words,
        multi_nonconsecutive=nonconsecutive,
        multi_consecutive=consecutive,
        repeating=repeating,
    )
