"""Text analyzers used for lexical indexing and for exact-match encoders."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources

import Stemmer

from .errors import InvalidInputError

MODES = ("whitespace-lower", "english-porter")
STOPWORDS_VERSION = "en_v1"

_POSSESSIVE = re.compile(r"['’][s]\b")
_NON_ALNUM = re.compile(r"[^\W_]+")


@lru_cache(maxsize=None)
def load_stopwords(version: str = STOPWORDS_VERSION) -> frozenset[str]:
    text = resources.files("sprint_ir.data").joinpath(f"stopwords_{version}.txt").read_text("utf-8")
    return frozenset(
        line.strip() for line in text.splitlines() if line.strip() and not line.startswith("#")
    )


@lru_cache(maxsize=None)
def _porter():
    # PyStemmer objects are not picklable; one per process
    return Stemmer.Stemmer("porter")


@dataclass(frozen=True)
class Analyzer:
    """Deterministic text -> token sequence.

    ``english-porter`` lowercases, drops possessive ``'s``, splits on runs of
    non-alphanumeric characters, removes stopwords and applies the original
    Porter stemmer.  ``whitespace-lower`` just lowercases and splits on
    whitespace.
    """

    mode: str = "english-porter"
    stopwords: frozenset = field(default=None)

    def __post_init__(self):
        if self.mode not in MODES:
            raise InvalidInputError(f"unknown analyzer {self.mode!r}; expected one of {MODES}")
        if self.stopwords is None:
            sw = load_stopwords() if self.mode == "english-porter" else frozenset()
            object.__setattr__(self, "stopwords", sw)
        else:
            object.__setattr__(self, "stopwords", frozenset(self.stopwords))

    def __call__(self, text: str) -> list[str]:
        text = text.lower()
        if self.mode == "whitespace-lower":
            return text.split()
        words = _NON_ALNUM.findall(_POSSESSIVE.sub("", text))
        sw = self.stopwords
        return _porter().stemWords([w for w in words if w not in sw])

    @classmethod
    def from_config(cls, config: dict) -> "Analyzer":
        mode = config.get("analyzer", "english-porter")
        sw = config.get("stopwords")
        return cls(mode, None if sw in (None, STOPWORDS_VERSION) else frozenset(sw))

    def describe(self) -> dict:
        d = {"analyzer": self.mode}
        if self.mode == "english-porter":
            d["stopwords"] = STOPWORDS_VERSION if self.stopwords == load_stopwords() else sorted(self.stopwords)
        return d
