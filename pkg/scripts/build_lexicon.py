#!/usr/bin/env python3
"""Regenerate src/emojilens/data/emoji.tsv from the ``emoji`` package.

Only fully-qualified entries are kept; after canonicalization under the
default policy the first row of each canonical sequence wins, so skin-tone
variants collapse onto their base emoji. Groups are derived from names
("face", "heart", "flag", "keycap"); keywords come from the package aliases.

    pip install emoji
    python scripts/build_lexicon.py > src/emojilens/data/emoji.tsv
"""

import sys

import emoji

from emojilens.lexicon import DEFAULT_POLICY, is_emoji_sequence, normalize_sequence, format_sequence


def clean(name):
    return name.strip(":").replace("_", " ").replace("’", "'").strip()


def group_of(seq, words):
    if len(seq) == 2 and all(0x1F1E6 <= cp <= 0x1F1FF for cp in seq):
        return "flag"
    if seq[-1] == 0x20E3:
        return "keycap"
    if "face" in words:
        return "face"
    if "heart" in words or "hearts" in words:
        return "heart"
    return ""


def main():
    rows = {}
    for text, data in emoji.EMOJI_DATA.items():
        if data.get("status") != emoji.STATUS["fully_qualified"]:
            continue
        raw = tuple(map(ord, text))
        seq = normalize_sequence(raw, DEFAULT_POLICY)
        if not is_emoji_sequence(seq):
            continue
        name = clean(data["en"])
        # prefer the untoned base row when several rows share a canonical form
        toned = len(raw) != len(seq) and any(0x1F3FB <= cp <= 0x1F3FF for cp in raw)
        if seq in rows and (toned or not rows[seq][3]):
            continue
        words = name.lower().replace("-", " ").split()
        keywords = sorted({clean(a).lower() for a in data.get("alias", [])} - {name.lower()})
        rows[seq] = (name, keywords, group_of(seq, words), toned)

    out = sys.stdout
    out.write(DEFAULT_POLICY.header() + "\n")
    for seq in sorted(rows):
        name, keywords, group, _ = rows[seq]
        fields = [format_sequence(seq), name, ",".join(k.replace(",", " ") for k in keywords)]
        if group:
            fields.append(group)
        out.write("\t".join(fields) + "\n")


if __name__ == "__main__":
    main()
