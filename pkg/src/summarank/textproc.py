"""Tokenization, stemming, and n-gram machinery shared by all scoring code.

The tokenizer has exactly one split rule: maximal runs of ASCII alphanumeric
characters are tokens, everything else (including non-ASCII) separates.
Splitting happens before lowercasing so Unicode case rules can never leak
into token boundaries.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping, Sequence

__all__ = [
    "TokenizerConfig",
    "NGramMultiset",
    "UndefinedNoveltyError",
    "tokenize",
    "porter_stem",
    "ngrams",
    "novel_ngram_fraction",
    "ROUGE_TOKENIZER",
    "NOVELTY_TOKENIZER",
]

SPLIT_RULE = "ascii-alnum-runs"

_TOKEN_RE = re.compile(r"[A-Za-z0-9]+")


@dataclass(frozen=True)
class TokenizerConfig:
    """Immutable tokenizer settings.

    ``split_rule`` is fixed; the field exists so configs serialize
    self-descriptively, and any other value is rejected.
    """

    lowercase: bool = True
    stem: bool = False
    split_rule: str = SPLIT_RULE

    def __post_init__(self) -> None:
        if self.split_rule != SPLIT_RULE:
            raise ValueError(f"unsupported split rule: {self.split_rule!r}")


ROUGE_TOKENIZER = TokenizerConfig(lowercase=True, stem=True)
NOVELTY_TOKENIZER = TokenizerConfig(lowercase=True, stem=False)


def tokenize(text: str, config: TokenizerConfig = NOVELTY_TOKENIZER) -> list[str]:
    """Split ``text`` into tokens per the fixed rule, then lowercase/stem."""
    tokens = _TOKEN_RE.findall(text)
    if config.lowercase:
        tokens = [t.lower() for t in tokens]
    if config.stem:
        tokens = [porter_stem(t) for t in tokens]
    return tokens


# ---------------------------------------------------------------------------
# Porter stemmer, original 1980 formulation.
#
# Within each step the longest matching suffix is selected; if its condition
# fails, no other suffix in that step is tried.  There is no minimum-length
# guard and step 1c is the original (*v*) Y -> I rule.
# ---------------------------------------------------------------------------

_VOWELS = frozenset("aeiou")
_LOWER = frozenset("abcdefghijklmnopqrstuvwxyz")


def _is_consonant(word: str, i: int) -> bool:
    ch = word[i]
    if ch in _VOWELS:
        return False
    if ch == "y":
        # y after a consonant acts as a vowel; word-initial y is a consonant
        return True if i == 0 else not _is_consonant(word, i - 1)
    return True


def _measure(stem: str) -> int:
    """Count VC sequences in the [C](VC)^m[V] decomposition of ``stem``."""
    m = 0
    prev_vowel = False
    for i in range(len(stem)):
        cons = _is_consonant(stem, i)
        if prev_vowel and cons:
            m += 1
        prev_vowel = not cons
    return m


def _contains_vowel(stem: str) -> bool:
    return any(not _is_consonant(stem, i) for i in range(len(stem)))


def _ends_double_consonant(word: str) -> bool:
    return (
        len(word) >= 2
        and word[-1] == word[-2]
        and _is_consonant(word, len(word) - 1)
    )


def _ends_cvc(stem: str) -> bool:
    # consonant-vowel-consonant ending where the final consonant is not w/x/y
    if len(stem) < 3:
        return False
    n = len(stem)
    return (
        _is_consonant(stem, n - 3)
        and not _is_consonant(stem, n - 2)
        and _is_consonant(stem, n - 1)
        and stem[-1] not in "wxy"
    )


def _apply_first_match(word: str, rules, condition) -> str:
    """Replace the first (longest listed) matching suffix if its stem passes.

    A matched suffix whose condition fails ends the step unchanged.
    """
    for suffix, replacement in rules:
        if word.endswith(suffix):
            stem = word[: len(word) - len(suffix)]
            if condition(stem):
                return stem + replacement
            return word
    return word


def _step1a(word: str) -> str:
    if word.endswith("sses"):
        return word[:-2]
    if word.endswith("ies"):
        return word[:-2]
    if word.endswith("ss"):
        return word
    if word.endswith("s"):
        return word[:-1]
    return word


def _step1b(word: str) -> str:
    if word.endswith("eed"):
        return word[:-1] if _measure(word[:-3]) > 0 else word
    removed = False
    if word.endswith("ed"):
        if _contains_vowel(word[:-2]):
            word = word[:-2]
            removed = True
    elif word.endswith("ing"):
        if _contains_vowel(word[:-3]):
            word = word[:-3]
            removed = True
    if removed:
        if word.endswith(("at", "bl", "iz")):
            return word + "e"
        if _ends_double_consonant(word) and word[-1] not in "lsz":
            return word[:-1]
        if _measure(word) == 1 and _ends_cvc(word):
            return word + "e"
    return word


def _step1c(word: str) -> str:
    if word.endswith("y") and _contains_vowel(word[:-1]):
        return word[:-1] + "i"
    return word


_STEP2_RULES = (
    ("ational", "ate"),
    ("tional", "tion"),
    ("enci", "ence"),
    ("anci", "ance"),
    ("izer", "ize"),
    ("abli", "able"),
    ("alli", "al"),
    ("entli", "ent"),
    ("eli", "e"),
    ("ousli", "ous"),
    ("ization", "ize"),
    ("ation", "ate"),
    ("ator", "ate"),
    ("alism", "al"),
    ("iveness", "ive"),
    ("fulness", "ful"),
    ("ousness", "ous"),
    ("aliti", "al"),
    ("iviti", "ive"),
    ("biliti", "ble"),
)

_STEP3_RULES = (
    ("icate", "ic"),
    ("ative", ""),
    ("alize", "al"),
    ("iciti", "ic"),
    ("ical", "ic"),
    ("ful", ""),
    ("ness", ""),
)

_STEP4_RULES = (
    ("al", ""),
    ("ance", ""),
    ("ence", ""),
    ("er", ""),
    ("ic", ""),
    ("able", ""),
    ("ible", ""),
    ("ant", ""),
    ("ement", ""),
    ("ment", ""),
    ("ent", ""),
    ("ion", ""),
    ("ou", ""),
    ("ism", ""),
    ("ate", ""),
    ("iti", ""),
    ("ous", ""),
    ("ive", ""),
    ("ize", ""),
)


def _step4(word: str) -> str:
    for suffix, _ in _STEP4_RULES:
        if word.endswith(suffix):
            stem = word[: len(word) - len(suffix)]
            if suffix == "ion" and not stem.endswith(("s", "t")):
                return word
            return stem if _measure(stem) > 1 else word
    return word


def _step5a(word: str) -> str:
    if word.endswith("e"):
        stem = word[:-1]
        m = _measure(stem)
        if m > 1 or (m == 1 and not _ends_cvc(stem)):
            return stem
    return word


def _step5b(word: str) -> str:
    if word.endswith("l") and _ends_double_consonant(word) and _measure(word) > 1:
        return word[:-1]
    return word


def porter_stem(word: str) -> str:
    """Stem one lowercase token.

    Tokens containing anything outside a-z (digits, mixed case, empty
    strings) are returned unchanged; note the algorithm itself can return
    an empty stem (e.g. the bare token "s").
    """
    if not word or not set(word) <= _LOWER:
        return word
    word = _step1a(word)
    word = _step1b(word)
    word = _step1c(word)
    word = _apply_first_match(word, _STEP2_RULES, lambda s: _measure(s) > 0)
    word = _apply_first_match(word, _STEP3_RULES, lambda s: _measure(s) > 0)
    word = _step4(word)
    word = _step5a(word)
    word = _step5b(word)
    return word


# ---------------------------------------------------------------------------
# n-grams and novelty
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NGramMultiset:
    """Occurrence counts of the n-grams of one token sequence."""

    n: int
    counts: Mapping[tuple[str, ...], int] = field(default_factory=dict)

    def total(self) -> int:
        return sum(self.counts.values())


class UndefinedNoveltyError(ValueError):
    """Raised when a summary is too short for the requested n-gram order."""


def ngrams(tokens: Sequence[str], n: int) -> NGramMultiset:
    """Count the n-grams of ``tokens``; ``n`` must be at least 1."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    counts = Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))
    return NGramMultiset(n=n, counts=dict(counts))


def novel_ngram_fraction(
    summary_tokens: Sequence[str],
    source_tokens: Sequence[str],
    n: int,
) -> float:
    """Fraction of summary n-gram occurrences absent from the source.

    Raises :class:`UndefinedNoveltyError` when the summary has fewer than
    ``n`` tokens, because the fraction has an empty denominator there.
    """
    summary_grams = ngrams(summary_tokens, n)
    total = summary_grams.total()
    if total == 0:
        raise UndefinedNoveltyError(
            f"summary has {len(summary_tokens)} tokens, fewer than n={n}"
        )
    source_grams = set(ngrams(source_tokens, n).counts)
    novel = sum(
        count for gram, count in summary_grams.counts.items() if gram not in source_grams
    )
    return novel / total
