"""Featurization of (post, subject) pairs.

A feature vector has a fixed-order dense part (interpretable style/overlap
signals) and a sparse part (signed-hash token unigrams and bigrams of the
subject). The combined layout is frozen per SCHEMA_VERSION; reward model
params store the version they were trained under.
"""

from __future__ import annotations

import hashlib
import string
import unicodedata
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import EmptyCandidate

SCHEMA_VERSION = 1

DENSE_FEATURE_NAMES = [
    "word_count",          # words / 10
    "char_count",          # chars / 100
    "ends_with_ellipsis",
    "emoji_present",
    "all_caps_word_count",
    "first_person_pronoun",
    "question_mark",
    "digit_present",
    "punctuation_count",   # punctuation chars / 10
    "prefix_overlap",
    "edit_similarity",
    "capital_ratio",
    "reserved_0",
    "reserved_1",
    "reserved_2",
    "reserved_3",
]

DENSE_DIM = len(DENSE_FEATURE_NAMES)
HASH_BUCKETS = 2 ** 14
TOTAL_DIM = DENSE_DIM + HASH_BUCKETS

DENSE_INDEX = {name: i for i, name in enumerate(DENSE_FEATURE_NAMES)}

_FIRST_PERSON = {"i", "i'm", "i'll", "i've", "i'd", "me", "my", "mine", "we", "our", "us"}

_EMOJI_RANGES = (
    (0x1F300, 0x1FAFF),
    (0x2600, 0x27BF),
    (0x1F000, 0x1F0FF),
    (0xFE00, 0xFE0F),
)

_PUNCT = set(string.punctuation) | {"…"}


@dataclass(frozen=True)
class FeatureVector:
    dense: np.ndarray                  # shape (DENSE_DIM,)
    sparse: dict[int, float]           # hash bucket -> signed count
    schema_version: int = SCHEMA_VERSION

    def to_array(self) -> np.ndarray:
        """Full dense expansion; for oracles and small-scale checks only."""
        arr = np.zeros(TOTAL_DIM)
        arr[:DENSE_DIM] = self.dense
        for bucket, value in self.sparse.items():
            arr[DENSE_DIM + bucket] = value
        return arr

    def named(self, name: str) -> float:
        return float(self.dense[DENSE_INDEX[name]])


def _is_emoji(ch: str) -> bool:
    code = ord(ch)
    return any(lo <= code <= hi for lo, hi in _EMOJI_RANGES)


def tokenize(text: str) -> list[str]:
    """Casefolded words with surrounding punctuation stripped."""
    tokens = []
    for raw in text.split():
        tok = raw.strip("".join(_PUNCT)).casefold()
        if tok:
            tokens.append(tok)
    return tokens


def hash_bucket(term: str) -> tuple[int, float]:
    """Deterministic signed hash: (bucket, sign)."""
    digest = hashlib.blake2b(term.encode("utf-8"), digest_size=8).digest()
    value = int.from_bytes(digest, "big")
    bucket = value % HASH_BUCKETS
    sign = 1.0 if (value >> 61) & 1 else -1.0
    return bucket, sign


def _levenshtein(a: str, b: str) -> int:
    if not a:
        return len(b)
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def _post_prefix(post_text: str, n_words: int = 10) -> str:
    return " ".join(post_text.split()[:n_words])


@lru_cache(maxsize=1 << 16)
def featurize(post_text: str, subject_text: str) -> FeatureVector:
    """Deterministic feature vector for a (post, candidate subject) pair.

    Cached; callers must not mutate the returned vector.
    """
    if not subject_text or not subject_text.strip():
        raise EmptyCandidate("subject text is empty")

    subject = unicodedata.normalize("NFC", subject_text)
    words = subject.split()
    letters = [ch for ch in subject if ch.isalpha()]

    dense = np.zeros(DENSE_DIM)
    dense[DENSE_INDEX["word_count"]] = len(words) / 10.0
    dense[DENSE_INDEX["char_count"]] = len(subject) / 100.0
    dense[DENSE_INDEX["ends_with_ellipsis"]] = float(
        subject.rstrip().endswith("...") or subject.rstrip().endswith("…")
    )
    dense[DENSE_INDEX["emoji_present"]] = float(any(_is_emoji(ch) for ch in subject))
    dense[DENSE_INDEX["all_caps_word_count"]] = float(
        sum(
            1
            for w in words
            if sum(ch.isalpha() for ch in w) >= 2 and w == w.upper()
        )
    )
    subject_tokens = tokenize(subject)
    dense[DENSE_INDEX["first_person_pronoun"]] = float(
        any(tok in _FIRST_PERSON for tok in subject_tokens)
    )
    dense[DENSE_INDEX["question_mark"]] = float("?" in subject)
    dense[DENSE_INDEX["digit_present"]] = float(any(ch.isdigit() for ch in subject))
    dense[DENSE_INDEX["punctuation_count"]] = sum(ch in _PUNCT for ch in subject) / 10.0

    prefix = _post_prefix(post_text)
    prefix_tokens = set(tokenize(prefix))
    if subject_tokens:
        overlap = sum(1 for tok in subject_tokens if tok in prefix_tokens)
        dense[DENSE_INDEX["prefix_overlap"]] = overlap / len(subject_tokens)
    longest = max(len(subject), len(prefix))
    if longest:
        dist = _levenshtein(subject.casefold(), prefix.casefold())
        dense[DENSE_INDEX["edit_similarity"]] = 1.0 - dist / longest
    if letters:
        dense[DENSE_INDEX["capital_ratio"]] = sum(ch.isupper() for ch in letters) / len(letters)

    sparse: dict[int, float] = {}
    terms = list(subject_tokens)
    terms.extend(f"{a}_{b}" for a, b in zip(subject_tokens, subject_tokens[1:]))
    for term in terms:
        bucket, sign = hash_bucket(term)
        sparse[bucket] = sparse.get(bucket, 0.0) + sign

    return FeatureVector(dense=dense, sparse=sparse)
