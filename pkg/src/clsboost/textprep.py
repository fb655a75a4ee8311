"""Cleaning and tokenization of short social-media posts.

The cleaning rules are deliberately simple and total:

* URLs (``http://``, ``https://`` and ``www.`` up to the next whitespace),
  ``@mentions`` and ``#hashtags`` (marker and word) are dropped;
* every remaining character that is not an ASCII letter, digit or
  whitespace is deleted (this is what removes emoji and punctuation);
* ASCII letters are lower-cased and whitespace runs collapse to one space.

Digits are kept on purpose ("covid 19").
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional

__all__ = [
    "Record",
    "clean_text",
    "tokenize",
    "remove_stopwords",
    "default_stoplist",
    "load_stoplist",
    "preprocess",
]

_URL_RE = re.compile(r"(?:https?://|www\.)\S*", re.IGNORECASE)
_MENTION_RE = re.compile(r"@\w+")
_TAG_RE = re.compile(r"#\w+")
_WS_RE = re.compile(r"\s+")
_NOT_ALNUM_SPACE_RE = re.compile(r"[^a-z0-9 ]+")


@dataclass(frozen=True)
class Record:
    """One labeled (or unlabeled) text sample."""

    id: str
    text: str
    label: Optional[int] = None

    def __post_init__(self):
        if not self.id:
            raise ValueError("record id must be non-empty")
        if self.label is not None and self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label!r}")


def _ascii_lower(s: str) -> str:
    # str.lower() maps some non-ASCII code points (KELVIN SIGN, ...) onto
    # ASCII letters; only fold A-Z.
    return s.translate(_ASCII_FOLD)


_ASCII_FOLD = {c: c + 32 for c in range(ord("A"), ord("Z") + 1)}


def clean_text(raw: str) -> str:
    """Return `raw` reduced to lowercase ASCII words separated by single spaces.

    >>> clean_text("I tested POSITIVE!! https://t.co/ab \\N{FACE WITH MEDICAL MASK} @doc #covid")
    'i tested positive'
    """
    s = _URL_RE.sub("", raw)
    s = _MENTION_RE.sub("", s)
    s = _TAG_RE.sub("", s)
    s = _WS_RE.sub(" ", s)
    s = _NOT_ALNUM_SPACE_RE.sub("", _ascii_lower(s))
    # deletions can leave double spaces behind ("a ! b")
    return " ".join(s.split())


def tokenize(cleaned: str) -> list[str]:
    """Split cleaned text on spaces, never yielding empty tokens."""
    return [t for t in cleaned.split(" ") if t]


def remove_stopwords(tokens: Iterable[str], stoplist: "set[str] | frozenset[str]") -> list[str]:
    return [t for t in tokens if t not in stoplist]


@lru_cache(maxsize=None)
def default_stoplist() -> frozenset[str]:
    """The built-in English stoplist (``clsboost/data/stopwords.txt``).

    Entries are already in cleaned form, so contractions appear without
    their apostrophe (``dont``, ``im``).
    """
    text = resources.files("clsboost").joinpath("data/stopwords.txt").read_text("utf-8")
    return frozenset(_read_words(text))


def load_stoplist(path: "str | Path") -> frozenset[str]:
    """Read a stoplist file: one lowercase word per line, blank lines ignored."""
    words = frozenset(_read_words(Path(path).read_text("utf-8")))
    bad = sorted(w for w in words if w != w.lower() or " " in w)
    if bad:
        raise ValueError(f"stoplist entries must be lowercase single words: {bad[:5]}")
    return words


def _read_words(text: str) -> list[str]:
    return [line.strip() for line in text.splitlines() if line.strip()]


def preprocess(
    raw: str,
    *,
    clean: bool = True,
    stopwords: bool = True,
    stoplist: "frozenset[str] | None" = None,
) -> list[str]:
    """Run the optional cleaning stage, tokenize, then drop stopwords.

    With ``clean=False`` the text is only split on whitespace.
    """
    if clean:
        tokens = tokenize(clean_text(raw))
    else:
        tokens = raw.split()
    if stopwords:
        tokens = remove_stopwords(tokens, default_stoplist() if stoplist is None else stoplist)
    return tokens
