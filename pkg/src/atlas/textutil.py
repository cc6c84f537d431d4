"""Tokenization helpers shared by the mock backends and canonicalization.

Nothing here aims for linguistic accuracy; the point is one deterministic
normalization used consistently on both sides of every comparison.
"""

from __future__ import annotations

import re

STOPWORDS = frozenset(
    """a an and are as at be but by for from in into is it its near no not of on
    or our out over that the their then there these they this to was were while
    with""".split()
)

_TOKEN_RE = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


def stem(token: str) -> str:
    """Light suffix stripping: plural first, then -ing/-ed."""
    if token.endswith("ies") and len(token) > 4:
        token = token[:-3] + "y"
    elif token.endswith("es") and len(token) > 4:
        token = token[:-2]
    elif token.endswith("s") and not token.endswith("ss") and len(token) > 3:
        token = token[:-1]
    if token.endswith("ing") and len(token) > 5:
        token = token[:-3]
    elif token.endswith("ed") and len(token) > 4:
        token = token[:-2]
    return token


def stem_tokens(text: str) -> list[str]:
    """Stemmed content tokens, stopwords removed, order preserved."""
    return [stem(t) for t in tokenize(text) if t not in STOPWORDS]


def token_jaccard(a: str, b: str) -> float:
    """Jaccard overlap of stemmed content-token sets."""
    sa, sb = set(stem_tokens(a)), set(stem_tokens(b))
    if not sa and not sb:
        return 1.0 if a.strip().lower() == b.strip().lower() else 0.0
    if not sa or not sb:
        return 0.0
    return len(sa & sb) / len(sa | sb)
