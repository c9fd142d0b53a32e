"""Text normalization shared by every stage.

All comparisons in the engine (fuzzy ratios, token overlap, WER, gold
equality) go through :func:`normalize` so that case, punctuation and
whitespace never decide a match.
"""

from __future__ import annotations

import re

_APOSTROPHES = str.maketrans({"’": "'", "‘": "'", "`": "'"})
_NON_WORD = re.compile(r"[^a-z0-9' ]+")
# apostrophes survive only between two word characters ("let's", "o'clock")
_LOOSE_APOSTROPHE = re.compile(r"(?<![a-z0-9])'|'(?![a-z0-9])")


def tokenize(text: str) -> list[str]:
    """Lowercase, drop punctuation (keeping intra-word apostrophes), split."""
    text = text.lower().translate(_APOSTROPHES)
    text = _NON_WORD.sub(" ", text)
    text = _LOOSE_APOSTROPHE.sub(" ", text)
    return text.split()


def normalize(text: str) -> str:
    return " ".join(tokenize(text))


_ONES = (
    "zero one two three four five six seven eight nine ten eleven twelve "
    "thirteen fourteen fifteen sixteen seventeen eighteen nineteen twenty"
).split()
_TENS = {30: "thirty", 40: "forty", 50: "fifty", 60: "sixty", 70: "seventy", 80: "eighty", 90: "ninety"}
_DIGITS = _ONES[:10]


def number_words(token: str) -> list[str]:
    """Spell out a digit string.

    0-20 and round tens become a single word; anything else is read digit by
    digit ("21" -> ["two", "one"]), which is how a lexicon lookup can still
    produce a pronunciation for it.
    """
    if not token.isdigit():
        raise ValueError(f"not a digit string: {token!r}")
    value = int(token)
    if value <= 20 and (token == "0" or not token.startswith("0")):
        return [_ONES[value]]
    if value in _TENS and not token.startswith("0"):
        return [_TENS[value]]
    return [_DIGITS[int(ch)] for ch in token]
