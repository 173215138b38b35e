"""Lexical suggestion backend.

Matches vocabulary preferred labels against document text: a subject is a
candidate when its full normalized label occurs contiguously in the
normalized title+abstract. Candidates are scored with a fixed heuristic
that rewards title hits, repetition, early position and longer labels.
"""

from __future__ import annotations

import json
import logging
import re
import unicodedata
from dataclasses import dataclass
from pathlib import Path

from .datamodel import Record, SubjectVocabulary, Suggestion, sort_suggestions

logger = logging.getLogger(__name__)

MODEL_MAGIC = "indexkit-lexical-v1"

_SPLIT_RE = re.compile(r"[\W_]+", re.UNICODE)


def normalize(text: str) -> list[str]:
    """Lowercase, fold diacritics (NFKD), split on non-alphanumeric runs.

    Tokens of length >= 2 are kept, plus single digits.
    """
    folded = unicodedata.normalize("NFKD", text.lower())
    folded = "".join(ch for ch in folded if not unicodedata.combining(ch))
    return [t for t in _SPLIT_RE.split(folded) if len(t) >= 2 or t.isdigit()]


@dataclass(frozen=True)
class LexicalModel:
    """Index from normalized label token sequences to subject ids."""

    language: str
    index: dict[tuple[str, ...], tuple[str, ...]]

    def save(self, path: str | Path) -> None:
        payload = {
            "magic": MODEL_MAGIC,
            "language": self.language,
            "index": [
                {"tokens": list(tokens), "subjects": list(subjects)}
                for tokens, subjects in sorted(self.index.items())
            ],
        }
        Path(path).write_text(json.dumps(payload, ensure_ascii=False), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "LexicalModel":
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        if payload.get("magic") != MODEL_MAGIC:
            raise ValueError(f"{path}: not a lexical model file")
        index = {
            tuple(item["tokens"]): tuple(item["subjects"])
            for item in payload["index"]
        }
        return cls(language=payload["language"], index=index)


def build_lexical(vocabulary: SubjectVocabulary, language: str) -> LexicalModel:
    """Index every subject's normalized preferred label for `language`."""
    if language not in vocabulary.languages:
        raise ValueError(f"language {language!r} not declared in vocabulary")
    index: dict[tuple[str, ...], list[str]] = {}
    for entry in vocabulary.subjects:
        tokens = tuple(normalize(entry.label(language)))
        if not tokens:
            logger.warning(
                "subject %s: label %r normalizes to empty, excluded from lexical index",
                entry.id, entry.label(language),
            )
            continue
        index.setdefault(tokens, []).append(entry.id)
    return LexicalModel(
        language=language,
        index={tokens: tuple(sorted(ids)) for tokens, ids in index.items()},
    )


def _find_occurrences(doc: list[str], label: tuple[str, ...]) -> list[int]:
    """Start positions of contiguous occurrences of `label` in `doc`."""
    n, m = len(doc), len(label)
    return [i for i in range(n - m + 1) if tuple(doc[i : i + m]) == label]


def suggest_lexical(model: LexicalModel, record: Record, limit: int = 20) -> list[Suggestion]:
    """Score label matches in a record.

    score = min(1, 0.4*in_title + 0.3*min(tf,3)/3
                 + 0.2*(1 - first_pos/doc_len) + 0.1*min(label_len,4)/4)
    """
    if record.language != model.language:
        raise ValueError(
            f"record language {record.language!r} != model language {model.language!r}"
        )
    title_tokens = normalize(record.title)
    doc_tokens = normalize(f"{record.title} {record.abstract}")
    if not doc_tokens:
        return []

    entries = []
    doc_len = len(doc_tokens)
    for label, subject_ids in model.index.items():
        positions = _find_occurrences(doc_tokens, label)
        if not positions:
            continue
        in_title = 1.0 if _find_occurrences(title_tokens, label) else 0.0
        tf = len(positions)
        first_pos = positions[0]
        label_len = len(label)
        score = min(
            1.0,
            0.4 * in_title
            + 0.3 * min(tf, 3) / 3
            + 0.2 * (1 - first_pos / doc_len)
            + 0.1 * min(label_len, 4) / 4,
        )
        for sid in subject_ids:
            entries.append(Suggestion(subject_id=sid, score=score))
    return sort_suggestions(entries)[:limit]
