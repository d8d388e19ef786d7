"""Shared domain types."""

from __future__ import annotations

from dataclasses import dataclass

SOURCE_RULE = "rule"
SOURCE_GENERATED = "generated"
SOURCE_FALLBACK = "fallback"


@dataclass(frozen=True)
class Post:
    post_id: str
    text: str


@dataclass(frozen=True)
class SubjectLineCandidate:
    text: str
    source: str  # SOURCE_RULE | SOURCE_GENERATED | SOURCE_FALLBACK

    def to_dict(self) -> dict:
        return {"text": self.text, "source": self.source}

    @classmethod
    def from_dict(cls, d: dict) -> "SubjectLineCandidate":
        return cls(text=d["text"], source=d["source"])
