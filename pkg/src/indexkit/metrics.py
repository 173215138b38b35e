"""Ranking metrics over suggestion lists vs gold subject sets.

All metrics use binary relevance and depend only on ranks, never on raw
scores. Corpus-level values are plain per-record means; records with an
empty gold set contribute 0.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

from .datamodel import Corpus, Suggestion


@dataclass(frozen=True)
class EvalReport:
    values: dict[str, float]
    record_count: int
    ks: tuple[int, ...]

    def as_table(self) -> str:
        width = max(len(name) for name in self.values)
        lines = [f"{name:<{width}}  {value:.4f}" for name, value in self.values.items()]
        lines.append(f"{'records':<{width}}  {self.record_count}")
        return "\n".join(lines)

    def write(self, path: str | Path) -> None:
        payload = {"values": self.values, "record_count": self.record_count, "ks": list(self.ks)}
        Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def ndcg_at_k(ranked: list[Suggestion], gold: set[str], k: int) -> float:
    """Binary-relevance nDCG with log2(i+1) discounting; IDCG truncates at
    min(k, |gold|); 0 when gold is empty."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if not gold:
        return 0.0
    dcg = sum(
        1.0 / math.log2(i + 2)
        for i, entry in enumerate(ranked[:k])
        if entry.subject_id in gold
    )
    idcg = sum(1.0 / math.log2(i + 2) for i in range(min(k, len(gold))))
    return dcg / idcg


def precision_at_k(ranked: list[Suggestion], gold: set[str], k: int) -> float:
    if k < 1:
        raise ValueError("k must be >= 1")
    hits = sum(1 for entry in ranked[:k] if entry.subject_id in gold)
    return hits / k


def recall_at_k(ranked: list[Suggestion], gold: set[str], k: int) -> float:
    if k < 1:
        raise ValueError("k must be >= 1")
    if not gold:
        return 0.0
    hits = sum(1 for entry in ranked[:k] if entry.subject_id in gold)
    return hits / len(gold)


def f1_at_k(ranked: list[Suggestion], gold: set[str], k: int) -> float:
    if not gold:
        return 0.0
    p = precision_at_k(ranked, gold, k)
    r = recall_at_k(ranked, gold, k)
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


def r_precision(ranked: list[Suggestion], gold: set[str]) -> float:
    if not gold:
        return 0.0
    hits = sum(1 for entry in ranked[: len(gold)] if entry.subject_id in gold)
    return hits / len(gold)


def evaluate(
    predictions: dict[str, list[Suggestion]],
    corpus: Corpus,
    ks: tuple[int, ...] = (5, 20),
    require_complete: bool = False,
) -> EvalReport:
    """Per-record metrics averaged over the whole corpus.

    Records without predictions are scored as empty lists unless
    `require_complete` is set, in which case they are an error.
    Predictions for record ids outside the corpus are always an error.
    """
    known = set(corpus.record_ids())
    unknown = set(predictions) - known
    if unknown:
        raise ValueError(f"predictions for unknown record ids: {sorted(unknown)[:5]}")
    missing = known - set(predictions)
    if require_complete and missing:
        raise ValueError(f"missing predictions for records: {sorted(missing)[:5]}")

    names = [f"precision@{k}" for k in ks] + [f"recall@{k}" for k in ks]
    names += ["F1@5", "nDCG@20", "R-precision"]
    sums = {name: 0.0 for name in names}
    for record in corpus:
        ranked = predictions.get(record.id, [])
        gold = set(record.subjects)
        for k in ks:
            sums[f"precision@{k}"] += precision_at_k(ranked, gold, k)
            sums[f"recall@{k}"] += recall_at_k(ranked, gold, k)
        sums["F1@5"] += f1_at_k(ranked, gold, 5)
        sums["nDCG@20"] += ndcg_at_k(ranked, gold, 20)
        sums["R-precision"] += r_precision(ranked, gold)
    n = len(corpus)
    if n == 0:
        raise ValueError("cannot evaluate against an empty corpus")
    return EvalReport(
        values={name: sums[name] / n for name in names},
        record_count=n,
        ks=tuple(ks),
    )
