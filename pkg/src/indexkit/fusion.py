"""Score fusion across suggestion sources.

Three combiners:
  * fuse_simple  -- weighted sum of per-source scores raised to per-source
    exponents, f = sum_k w_k * x_k**p_k with the weights summing to 1;
  * fuse_llm     -- blends LLM relevance scores into the top-K combined
    candidates, f = w * r**p + (1-w) * x;
  * merge_bilingual -- sums a subject's scores across two monolingual
    prediction lists and keeps the top entries.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass
from pathlib import Path

from .datamodel import Suggestion, sort_suggestions

WEIGHT_SUM_TOL = 1e-9


@dataclass(frozen=True)
class FusionSource:
    name: str
    weight: float
    exponent: float


@dataclass(frozen=True)
class FusionConfig:
    """Per-source weights/exponents plus the LLM blending term."""

    sources: tuple[FusionSource, ...]
    llm_weight: float = 0.0
    llm_exponent: float = 1.0
    candidate_count: int = 100

    def __post_init__(self):
        if not self.sources:
            raise ValueError("fusion config needs at least one source")
        total = sum(s.weight for s in self.sources)
        if abs(total - 1.0) > WEIGHT_SUM_TOL:
            raise ValueError(f"source weights sum to {total}, expected 1.0")
        for s in self.sources:
            if s.weight < 0:
                raise ValueError(f"source {s.name!r} has negative weight")
            if s.exponent <= 0:
                raise ValueError(f"source {s.name!r} has non-positive exponent")
        if not 0.0 <= self.llm_weight <= 1.0:
            raise ValueError("llm weight must be in [0, 1]")
        if self.llm_exponent <= 0:
            raise ValueError("llm exponent must be positive")
        if self.candidate_count < 1:
            raise ValueError("candidate count must be >= 1")

    def source_names(self) -> list[str]:
        return [s.name for s in self.sources]


def load_fusion_config(path: str | Path) -> FusionConfig:
    """Read an INI-style config: [source.<name>] weight/exponent sections
    plus an optional [llm] section."""
    parser = configparser.ConfigParser()
    with Path(path).open(encoding="utf-8") as fh:
        parser.read_file(fh)
    sources = []
    for section in parser.sections():
        if section.startswith("source."):
            sources.append(
                FusionSource(
                    name=section[len("source."):],
                    weight=parser.getfloat(section, "weight"),
                    exponent=parser.getfloat(section, "exponent", fallback=1.0),
                )
            )
    kwargs = {}
    if parser.has_section("llm"):
        kwargs = {
            "llm_weight": parser.getfloat("llm", "weight", fallback=0.0),
            "llm_exponent": parser.getfloat("llm", "exponent", fallback=1.0),
            "candidate_count": parser.getint("llm", "candidates", fallback=100),
        }
    return FusionConfig(sources=tuple(sources), **kwargs)


def write_fusion_config(path: str | Path, config: FusionConfig) -> None:
    parser = configparser.ConfigParser()
    for source in config.sources:
        section = f"source.{source.name}"
        parser.add_section(section)
        parser.set(section, "weight", repr(source.weight))
        parser.set(section, "exponent", repr(source.exponent))
    parser.add_section("llm")
    parser.set("llm", "weight", repr(config.llm_weight))
    parser.set("llm", "exponent", repr(config.llm_exponent))
    parser.set("llm", "candidates", str(config.candidate_count))
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        parser.write(fh)


def fuse_simple(
    config: FusionConfig,
    inputs: dict[str, list[Suggestion]],
    limit: int = 20,
) -> list[Suggestion]:
    """Combine per-source suggestion lists; a subject missing from a
    source contributes score 0 there."""
    if set(inputs) != set(config.source_names()):
        raise ValueError(
            f"input sources {sorted(inputs)} do not match config sources "
            f"{sorted(config.source_names())}"
        )
    combined: dict[str, float] = {}
    for source in config.sources:
        for entry in inputs[source.name]:
            combined.setdefault(entry.subject_id, 0.0)
            combined[entry.subject_id] += source.weight * entry.score**source.exponent
    entries = [Suggestion(subject_id=sid, score=f) for sid, f in combined.items()]
    return sort_suggestions(entries)[:limit]


def fuse_llm(
    config: FusionConfig,
    combined: list[Suggestion],
    relevance: dict[str, float],
    limit: int = 20,
) -> list[Suggestion]:
    """Blend LLM relevance into the top-K combined candidates.

    Within the top K: f = w * r**p + (1-w) * x, with r = 0 for subjects the
    LLM did not score. Beyond K the LLM term is absent but the (1-w)
    scaling is kept so scores stay comparable across the window boundary.
    """
    w, p, k = config.llm_weight, config.llm_exponent, config.candidate_count
    entries = []
    for rank, entry in enumerate(combined):
        if rank < k:
            r = relevance.get(entry.subject_id, 0.0)
            score = w * r**p + (1 - w) * entry.score
        else:
            score = (1 - w) * entry.score
        entries.append(Suggestion(subject_id=entry.subject_id, score=score))
    return sort_suggestions(entries)[:limit]


def merge_bilingual(
    a: list[Suggestion], b: list[Suggestion], limit: int = 20
) -> list[Suggestion]:
    """Sum per-subject scores across two lists; output scores are the raw
    sums (may exceed 1)."""
    totals: dict[str, float] = {}
    for entry in list(a) + list(b):
        totals[entry.subject_id] = totals.get(entry.subject_id, 0.0) + entry.score
    entries = [Suggestion(subject_id=sid, score=score) for sid, score in totals.items()]
    return sort_suggestions(entries)[:limit]
