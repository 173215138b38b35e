"""Vocabulary and corpus types plus their on-disk formats.

File formats:
  * vocabulary: UTF-8 TSV, header ``id<TAB>label_<lang>...``, LF newlines,
    no quoting;
  * corpus: UTF-8 JSON lines with fields ``id``, ``title``, ``abstract``,
    ``language``, ``subjects``;
  * suggestions: UTF-8 JSON lines with fields ``record_id`` and
    ``suggestions`` = list of ``{subject_id, score}``.

All loaded structures are immutable after ingestion.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

logger = logging.getLogger(__name__)


class DataFormatError(ValueError):
    """Raised when an input file violates its format contract."""


@dataclass(frozen=True)
class SubjectEntry:
    """One controlled-vocabulary subject: opaque id plus one preferred
    label per language."""

    id: str
    labels: dict[str, str]

    def label(self, language: str) -> str:
        try:
            return self.labels[language]
        except KeyError:
            raise KeyError(f"subject {self.id!r} has no label for language {language!r}")


class SubjectVocabulary:
    """Bilingual (or n-lingual) controlled vocabulary with id lookup."""

    def __init__(self, languages: Sequence[str], subjects: Sequence[SubjectEntry]):
        self.languages = tuple(languages)
        self.subjects = tuple(subjects)
        self._by_id: dict[str, SubjectEntry] = {}
        for entry in self.subjects:
            if not entry.id:
                raise DataFormatError("empty subject id")
            if entry.id in self._by_id:
                raise DataFormatError(f"duplicate subject id {entry.id!r}")
            for lang in self.languages:
                if not entry.labels.get(lang):
                    raise DataFormatError(
                        f"subject {entry.id!r} is missing a label for language {lang!r}"
                    )
            self._by_id[entry.id] = entry

    def __len__(self) -> int:
        return len(self.subjects)

    def __contains__(self, subject_id: str) -> bool:
        return subject_id in self._by_id

    def lookup(self, subject_id: str) -> SubjectEntry:
        try:
            return self._by_id[subject_id]
        except KeyError:
            raise KeyError(f"unknown subject id {subject_id!r}")


@dataclass(frozen=True)
class Record:
    """One bibliographic document; ``subjects`` is empty for unlabeled
    test records."""

    id: str
    title: str
    abstract: str
    language: str
    subjects: frozenset[str] = frozenset()

    def text(self) -> str:
        return f"{self.title} {self.abstract}" if self.abstract else self.title


@dataclass(frozen=True)
class Corpus:
    """Ordered record collection; iteration order is source file order."""

    records: tuple[Record, ...]
    role: str = "train"

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[Record]:
        return iter(self.records)

    def record_ids(self) -> list[str]:
        return [r.id for r in self.records]


# One scored suggestion; lists of these are kept sorted by descending
# score, ties broken by ascending subject id.
@dataclass(frozen=True)
class Suggestion:
    subject_id: str
    score: float


def sort_suggestions(entries: Sequence[Suggestion]) -> list[Suggestion]:
    """Canonical suggestion order: score descending, subject id ascending."""
    return sorted(entries, key=lambda s: (-s.score, s.subject_id))


def load_vocabulary(path: str | Path) -> SubjectVocabulary:
    """Load a vocabulary TSV. Header names declare the languages."""
    path = Path(path)
    with path.open(encoding="utf-8", newline="") as fh:
        header = fh.readline().rstrip("\n")
        if not header:
            raise DataFormatError(f"{path}: empty vocabulary file (no header)")
        columns = header.split("\t")
        if columns[0] != "id" or len(columns) < 2:
            raise DataFormatError(f"{path}: bad header {header!r}")
        languages = []
        for col in columns[1:]:
            if not col.startswith("label_"):
                raise DataFormatError(f"{path}: bad label column {col!r}")
            languages.append(col[len("label_"):])

        entries = []
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            cells = line.split("\t")
            if len(cells) != len(columns):
                raise DataFormatError(f"{path}:{lineno}: expected {len(columns)} cells")
            for lang, cell in zip(languages, cells[1:]):
                if not cell:
                    raise DataFormatError(
                        f"{path}:{lineno}: missing {lang!r} label for subject {cells[0]!r}"
                    )
            entries.append(SubjectEntry(id=cells[0], labels=dict(zip(languages, cells[1:]))))
    return SubjectVocabulary(languages, entries)


def write_vocabulary(path: str | Path, vocabulary: SubjectVocabulary) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write("id\t" + "\t".join(f"label_{lang}" for lang in vocabulary.languages) + "\n")
        for entry in vocabulary.subjects:
            fh.write(entry.id + "\t" + "\t".join(entry.labels[lang] for lang in vocabulary.languages) + "\n")


def load_corpus(path: str | Path, vocabulary: SubjectVocabulary, role: str = "train") -> Corpus:
    """Load a JSON-lines corpus, validating languages and subject ids
    against the vocabulary."""
    path = Path(path)
    records = []
    seen_ids: set[str] = set()
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataFormatError(f"{path}:{lineno}: malformed record: {exc}") from exc
            missing = {"id", "title", "abstract", "language", "subjects"} - obj.keys()
            if missing:
                raise DataFormatError(f"{path}:{lineno}: missing fields {sorted(missing)}")
            if obj["id"] in seen_ids:
                raise DataFormatError(f"{path}:{lineno}: duplicate record id {obj['id']!r}")
            seen_ids.add(obj["id"])
            if obj["language"] not in vocabulary.languages:
                raise DataFormatError(
                    f"{path}:{lineno}: unknown language {obj['language']!r}"
                )
            for sid in obj["subjects"]:
                if sid not in vocabulary:
                    raise DataFormatError(
                        f"{path}:{lineno}: unknown subject id {sid!r}"
                    )
            records.append(
                Record(
                    id=obj["id"],
                    title=obj["title"],
                    abstract=obj["abstract"],
                    language=obj["language"],
                    subjects=frozenset(obj["subjects"]),
                )
            )
    return Corpus(records=tuple(records), role=role)


def write_corpus(path: str | Path, corpus: Corpus) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for record in corpus:
            fh.write(
                json.dumps(
                    {
                        "id": record.id,
                        "title": record.title,
                        "abstract": record.abstract,
                        "language": record.language,
                        "subjects": sorted(record.subjects),
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )


def write_suggestions(
    path: str | Path,
    predictions: dict[str, list[Suggestion]],
    limit: int = 20,
) -> None:
    """Write per-record suggestion lists, truncating lists beyond `limit`.

    Each list must already be in descending-score order.
    """
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for record_id, suggestions in predictions.items():
            scores = [s.score for s in suggestions]
            if scores != sorted(scores, reverse=True):
                raise ValueError(f"suggestions for record {record_id!r} not sorted by score")
            if len(suggestions) > limit:
                logger.warning(
                    "record %s: %d suggestions exceed limit %d, truncating",
                    record_id, len(suggestions), limit,
                )
                suggestions = suggestions[:limit]
            fh.write(
                json.dumps(
                    {
                        "record_id": record_id,
                        "suggestions": [
                            {"subject_id": s.subject_id, "score": s.score} for s in suggestions
                        ],
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )


def load_suggestions(path: str | Path) -> dict[str, list[Suggestion]]:
    path = Path(path)
    out: dict[str, list[Suggestion]] = {}
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataFormatError(f"{path}:{lineno}: malformed line: {exc}") from exc
            out[obj["record_id"]] = [
                Suggestion(subject_id=e["subject_id"], score=e["score"])
                for e in obj["suggestions"]
            ]
    return out
