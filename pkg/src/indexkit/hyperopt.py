"""Random search over fusion weights and exponents.

Each trial draws source weights from a flat Dirichlet over the simplex
and exponents log-uniformly from their ranges, then scores the resulting
fusion with mean nDCG@20 on a frozen development set. Source predictions
are computed once, outside the trial loop.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .datamodel import Corpus, Suggestion
from .fusion import FusionConfig, FusionSource, fuse_llm, fuse_simple
from .metrics import ndcg_at_k

DEFAULT_TRIALS = 400


@dataclass(frozen=True)
class TrialSpec:
    trials: int = DEFAULT_TRIALS
    source_exponent_range: tuple[float, float] = (0.5, 2.0)
    llm_exponent_range: tuple[float, float] = (0.5, 12.0)
    llm_weight_range: tuple[float, float] = (0.0, 0.5)
    seed: int = 0

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trial count must be >= 1")
        for lo, hi in (self.source_exponent_range, self.llm_exponent_range):
            if lo <= 0 or hi < lo:
                raise ValueError("exponent ranges must be positive and ordered")
        lo, hi = self.llm_weight_range
        if lo < 0 or hi < lo or hi > 1:
            raise ValueError("llm weight range must lie in [0, 1]")


@dataclass(frozen=True)
class Trial:
    index: int
    params: dict[str, float]
    score: float
    best_so_far: float


def _log_uniform(rng: np.random.Generator, lo: float, hi: float) -> float:
    return float(np.exp(rng.uniform(np.log(lo), np.log(hi))))


def _mean_ndcg(per_record: dict[str, list[Suggestion]], dev: Corpus, k: int = 20) -> float:
    total = sum(
        ndcg_at_k(per_record.get(r.id, []), set(r.subjects), k) for r in dev
    )
    return total / len(dev)


def optimise_fusion(
    sources: dict[str, dict[str, list[Suggestion]]],
    dev: Corpus,
    spec: TrialSpec,
    limit: int = 20,
) -> tuple[FusionConfig, list[Trial]]:
    """Search weights/exponents maximising nDCG@20 of fuse_simple output."""
    if not sources:
        raise ValueError("need at least one suggestion source")
    names = sorted(sources)
    rng = np.random.default_rng(spec.seed)
    lo, hi = spec.source_exponent_range

    best: FusionConfig | None = None
    best_score = -1.0
    log: list[Trial] = []
    for index in range(spec.trials):
        if len(names) == 1:
            weights = np.array([1.0])
        else:
            weights = rng.dirichlet(np.ones(len(names)))
            weights = weights / weights.sum()
        exponents = [_log_uniform(rng, lo, hi) for _ in names]
        config = FusionConfig(
            sources=tuple(
                FusionSource(name=n, weight=float(w), exponent=e)
                for n, w, e in zip(names, weights, exponents)
            )
        )
        fused = {
            record.id: fuse_simple(
                config, {n: sources[n].get(record.id, []) for n in names}, limit
            )
            for record in dev
        }
        score = _mean_ndcg(fused, dev)
        if score > best_score:
            best_score = score
            best = config
        params = {f"w_{n}": float(w) for n, w in zip(names, weights)}
        params.update({f"p_{n}": e for n, e in zip(names, exponents)})
        log.append(Trial(index=index, params=params, score=score, best_so_far=best_score))
    assert best is not None
    return best, log


def optimise_llm_term(
    combined: dict[str, list[Suggestion]],
    relevance: dict[str, dict[str, float]],
    dev: Corpus,
    spec: TrialSpec,
    candidate_count: int = 100,
    limit: int = 20,
) -> tuple[float, float, list[Trial]]:
    """Search (weight, exponent) for the LLM blending term.

    `relevance` maps record id -> subject id -> rescaled LLM score; both
    it and `combined` are precomputed, so trials never call the LLM.
    """
    rng = np.random.default_rng(spec.seed)
    wlo, whi = spec.llm_weight_range
    elo, ehi = spec.llm_exponent_range

    best_w, best_p = 0.0, 1.0
    best_score = -1.0
    log: list[Trial] = []
    for index in range(spec.trials):
        w = float(rng.uniform(wlo, whi))
        p = _log_uniform(rng, elo, ehi)
        config = FusionConfig(
            sources=(FusionSource(name="combined", weight=1.0, exponent=1.0),),
            llm_weight=w,
            llm_exponent=p,
            candidate_count=candidate_count,
        )
        fused = {
            record.id: fuse_llm(
                config, combined.get(record.id, []), relevance.get(record.id, {}), limit
            )
            for record in dev
        }
        score = _mean_ndcg(fused, dev)
        if score > best_score:
            best_score = score
            best_w, best_p = w, p
        log.append(
            Trial(index=index, params={"w": w, "p": p}, score=score, best_so_far=best_score)
        )
    return best_w, best_p, log


def write_trial_log(path: str | Path, log: list[Trial]) -> None:
    if not log:
        raise ValueError("empty trial log")
    param_names = sorted(log[0].params)
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["trial", *param_names, "score", "best_so_far"])
        for trial in log:
            writer.writerow(
                [trial.index]
                + [repr(trial.params[name]) for name in param_names]
                + [repr(trial.score), repr(trial.best_so_far)]
            )
