"""Acceptance suite.

One test per acceptance criterion; each prints a single PASS/FAIL line on
the terminal (bypassing capture) so the run leaves an auditable trail.
Every numeric check is made against an oracle coded independently inside
this file, not against the library's own helpers.
"""

import itertools
import json
import math
import random
import time

import numpy as np
import pytest

from indexkit import prompts
from indexkit.datamodel import Corpus, Record, Suggestion
from indexkit.fusion import FusionConfig, FusionSource, fuse_llm, fuse_simple
from indexkit.hyperopt import TrialSpec, optimise_fusion
from indexkit.lexical import build_lexical, normalize, suggest_lexical
from indexkit.linear import merge_training_sets, suggest_linear, train_linear
from indexkit.llm import (
    LlmEndpoint,
    ModelScore,
    Telemetry,
    best_model,
    chat,
    rank_candidates,
    score_model,
    synthesize_record,
)
from indexkit.metrics import f1_at_k, ndcg_at_k, r_precision
from indexkit.mock_llm import MockLlmServer
from indexkit.pipeline import Pipeline, PipelineConfig

from conftest import make_toy_corpora, make_toy_vocabulary, write_toy_workspace
from test_llm import golden


def _report(capsys, number, label, ok):
    with capsys.disabled():
        print(f"[{'PASS' if ok else 'FAIL'}] criterion {number:02d}: {label}")


# -- independent oracles ---------------------------------------------------


def oracle_fuse(weights, exponents, per_source_scores):
    """Direct per-subject evaluation of the weighted-exponent sum."""
    subjects = set()
    for scores in per_source_scores:
        subjects |= set(scores)
    out = {}
    for subject in subjects:
        out[subject] = sum(
            w * scores.get(subject, 0.0) ** p
            for w, p, scores in zip(weights, exponents, per_source_scores)
        )
    return out


def oracle_ndcg(order, gold, k):
    """Literal DCG sum over the ranking; ideal DCG found by exhaustive
    search over every placement of the gold items in the top-k slots."""
    if not gold:
        return 0.0
    dcg = sum(
        (1.0 if item in gold else 0.0) / math.log2(i + 2)
        for i, item in enumerate(order[:k])
    )
    placeable = min(len(gold), k)
    ideal = max(
        sum(1.0 / math.log2(pos + 2) for pos in slots)
        for slots in itertools.combinations(range(k), placeable)
    )
    return dcg / ideal


def oracle_lexical_score(in_title, tf, first_pos, doc_len, label_len):
    return min(
        1.0,
        0.4 * in_title
        + 0.3 * min(tf, 3) / 3
        + 0.2 * (1 - first_pos / doc_len)
        + 0.1 * min(label_len, 4) / 4,
    )


def make_config(weights, exponents, **kwargs):
    return FusionConfig(
        sources=tuple(
            FusionSource(name=f"src{k}", weight=w, exponent=p)
            for k, (w, p) in enumerate(zip(weights, exponents))
        ),
        **kwargs,
    )


def as_inputs(per_source):
    inputs = {}
    for k, scores in enumerate(per_source):
        entries = [Suggestion(sid, score) for sid, score in scores.items()]
        inputs[f"src{k}"] = sorted(entries, key=lambda s: (-s.score, s.subject_id))
    return inputs


def ranking(*ids):
    return [Suggestion(sid, 1.0 - i / 100) for i, sid in enumerate(ids)]


def single_language_corpora():
    vocab = make_toy_vocabulary()
    train, dev = make_toy_corpora()

    def to_en(record):
        return Record(id=record.id, title=record.title, abstract=record.abstract,
                      language="en", subjects=record.subjects)

    return (
        vocab,
        Corpus(records=tuple(to_en(r) for r in train), role="train"),
        Corpus(records=tuple(to_en(r) for r in dev), role="dev"),
    )


# -- criteria ----------------------------------------------------------------


def test_criterion_01_fusion_oracle_equivalence(capsys):
    """1000 random instances, 2-4 sources, max abs error <= 1e-12, < 5 s."""
    ok = False
    try:
        rng = random.Random(20250823)
        start = time.perf_counter()
        worst = 0.0
        for _ in range(1000):
            n_sources = rng.randint(2, 4)
            n_subjects = rng.randint(1, 50)
            subjects = [f"s{i}" for i in range(n_subjects)]
            raw = [rng.random() for _ in range(n_sources)]
            weights = [x / sum(raw) for x in raw]
            exponents = [rng.uniform(0.5, 2.0) for _ in range(n_sources)]
            per_source = [
                {s: rng.random() for s in rng.sample(subjects, rng.randint(0, n_subjects))}
                for _ in range(n_sources)
            ]
            fused = fuse_simple(make_config(weights, exponents),
                                as_inputs(per_source), limit=10**9)
            expected = oracle_fuse(weights, exponents, per_source)
            assert len(fused) == len(expected)
            for entry in fused:
                worst = max(worst, abs(entry.score - expected[entry.subject_id]))
        elapsed = time.perf_counter() - start
        assert worst <= 1e-12
        assert elapsed < 5.0
        ok = True
    finally:
        _report(capsys, 1, "fusion matches independent oracle on 1000 random instances", ok)


def test_criterion_02_fusion_identities_and_reference_constants(capsys):
    ok = False
    try:
        # single source, w=1, p=1: exact identity
        entries = [Suggestion("a", 0.7), Suggestion("b", 0.3)]
        assert fuse_simple(make_config([1.0], [1.0]), {"src0": entries}, 10) == entries

        # LLM term with w=0: exact identity
        config = make_config([1.0], [1.0], llm_weight=0.0, llm_exponent=5.0)
        assert fuse_llm(config, entries, {"a": 1.0}, limit=10) == entries

        # all exponents 1: weighted average, 200 random instances
        rng = random.Random(7)
        for _ in range(200):
            n = rng.randint(2, 4)
            raw = [rng.random() for _ in range(n)]
            weights = [x / sum(raw) for x in raw]
            per_source = [{"s": rng.random()} for _ in range(n)]
            [fused] = fuse_simple(make_config(weights, [1.0] * n),
                                  as_inputs(per_source), 5)
            avg = sum(w * d["s"] for w, d in zip(weights, per_source))
            assert abs(fused.score - avg) <= 1e-12

        # published two-source weight:exponent pairs
        weights, exponents = [0.8523, 0.1477], [1.1119, 1.1611]
        per_source = [{"s1": 0.5}, {"s1": 0.2}]
        [fused] = fuse_simple(make_config(weights, exponents), as_inputs(per_source), 5)
        assert abs(fused.score - oracle_fuse(weights, exponents, per_source)["s1"]) <= 1e-12

        # published LLM blend constants
        config = make_config([1.0], [1.0], llm_weight=0.1592, llm_exponent=7.898)
        [blended] = fuse_llm(config, [Suggestion("s1", 0.5)], {"s1": 0.9}, 5)
        assert abs(blended.score - (0.1592 * 0.9**7.898 + (1 - 0.1592) * 0.5)) <= 1e-12
        ok = True
    finally:
        _report(capsys, 2, "fusion identities and reference constants hold", ok)


def test_criterion_03_metric_oracles(capsys):
    ok = False
    try:
        start = time.perf_counter()
        items = ["a", "b", "c", "d", "e", "f"]
        for n_gold in range(1, 4):
            gold = set(items[:n_gold])
            for n in range(0, 7):
                for perm in itertools.permutations(items, n):
                    expected = oracle_ndcg(list(perm), gold, k=6)
                    assert abs(ndcg_at_k(ranking(*perm), gold, 6) - expected) <= 1e-12
        # hand-computed cases
        assert f1_at_k(ranking("a", "b", "x", "y", "z"), {"a", "b", "c"}, 5) == pytest.approx(0.5, abs=1e-12)
        assert r_precision(ranking("a", "c", "b"), {"a", "b"}) == pytest.approx(0.5, abs=1e-12)
        assert ndcg_at_k(ranking("a", "b", "c"), {"a", "b", "c"}, 20) == 1.0
        assert time.perf_counter() - start < 10.0
        ok = True
    finally:
        _report(capsys, 3, "metrics match exhaustive enumeration and hand values", ok)


def test_criterion_04_backend_retrieval(capsys):
    ok = False
    try:
        start = time.perf_counter()
        vocab, train, dev = single_language_corpora()
        model = train_linear(train, vocab, min_df=2, seed=7)
        hits = sum(
            1 for r in dev
            if (top := suggest_linear(model, r, 1)) and top[0].subject_id in r.subjects
        )
        assert hits / len(dev) >= 0.95

        # lexical: every planted label found, score formula-exact
        # (checked on the bilingual dev split with per-language models)
        _, bilingual_dev = make_toy_corpora()
        models = {lang: build_lexical(vocab, lang) for lang in ("de", "en")}
        for record in bilingual_dev:
            lex = models[record.language]
            labels = {
                e.id: tuple(normalize(e.label(record.language)))
                for e in vocab.subjects
            }
            doc = normalize(f"{record.title} {record.abstract}")
            title = normalize(record.title)
            got = {s.subject_id: s.score for s in suggest_lexical(lex, record, 50)}
            for sid in record.subjects:
                label = labels[sid]
                positions = [
                    i for i in range(len(doc) - len(label) + 1)
                    if tuple(doc[i:i + len(label)]) == label
                ]
                assert positions, (record.id, sid)
                in_title = 1.0 if any(
                    tuple(title[i:i + len(label)]) == label
                    for i in range(len(title) - len(label) + 1)
                ) else 0.0
                expected = oracle_lexical_score(
                    in_title, len(positions), positions[0], len(doc), len(label)
                )
                assert got[sid] == pytest.approx(expected, abs=1e-15)

        # worked example: label of 2 tokens opening a 3-token document
        expected = 0.4 * 1 + 0.3 * (1 / 3) + 0.2 * (1 - 0 / 3) + 0.1 * (2 / 4)
        record = Record(id="x", title="t00a t00b t00c", abstract="", language="en")
        got = {s.subject_id: s.score for s in suggest_lexical(models["en"], record, 5)}
        assert got["s00"] == pytest.approx(expected, abs=1e-15)
        assert time.perf_counter() - start < 30.0
        ok = True
    finally:
        _report(capsys, 4, "linear retrieval >= 95% and lexical scores formula-exact", ok)


def test_criterion_05_routing_consistency(capsys):
    """With one cluster and beam 1, routed scoring equals flat scoring."""
    ok = False
    try:
        vocab, train, _ = single_language_corpora()
        model = train_linear(train, vocab, min_df=2, clusters=1, beam=1, seed=7)
        dense = model.prototypes.toarray()
        token_pool = [f"t{i:02d}{c}" for i in range(50) for c in "abcdef"]
        rng = random.Random(31)
        for q in range(100):
            text = " ".join(rng.choice(token_pool) for _ in range(8))
            record = Record(id=f"q{q}", title=text, abstract="", language="en")
            got = {
                s.subject_id: s.score
                for s in suggest_linear(model, record, limit=len(vocab.subjects))
            }
            query = model.feature_space.vectorize(text).toarray().ravel()
            expected = {
                sid: max(0.0, float(np.dot(dense[i], query)))
                for i, sid in enumerate(model.subject_ids)
            }
            if not query.any():
                assert got == {}
                continue
            assert set(got) == set(expected)
            for sid in got:
                assert abs(got[sid] - expected[sid]) <= 1e-12
        ok = True
    finally:
        _report(capsys, 5, "single-cluster routing equals flat all-subject scoring", ok)


def test_criterion_06_hyperopt_recovery(capsys):
    ok = False
    try:
        start = time.perf_counter()
        rng = random.Random(4)
        subjects = [f"s{i:02d}" for i in range(25)]
        records, good, noise = [], {}, {}
        for r in range(30):
            gold = rng.choice(subjects)
            records.append(Record(id=f"r{r}", title="t", abstract="", language="en",
                                  subjects=frozenset({gold})))
            ordered = [gold] + rng.sample([s for s in subjects if s != gold], 10)
            good[f"r{r}"] = [Suggestion(s, 1.0 - i / 20) for i, s in enumerate(ordered)]
            noise[f"r{r}"] = sorted(
                [Suggestion(s, rng.random()) for s in rng.sample(subjects, 11)],
                key=lambda s: (-s.score, s.subject_id),
            )
        dev = Corpus(records=tuple(records), role="dev")
        sources = {"good": good, "noise": noise}

        # 21-point grid over the weight of the informative source
        oracle_best = -1.0
        for i in range(21):
            w = i / 20
            config = FusionConfig(sources=(
                FusionSource("good", w, 1.0), FusionSource("noise", 1 - w, 1.0),
            ))
            mean = sum(
                ndcg_at_k(
                    fuse_simple(config, {n: sources[n][r.id] for n in sources}, 20),
                    set(r.subjects), 20,
                )
                for r in dev
            ) / len(dev)
            oracle_best = max(oracle_best, mean)

        _, log = optimise_fusion(sources, dev, TrialSpec(trials=400, seed=9))
        values = [t.best_so_far for t in log]
        assert values == sorted(values)
        assert values[-1] >= oracle_best - 0.02
        assert time.perf_counter() - start < 60.0
        ok = True
    finally:
        _report(capsys, 6, "random search reaches grid-search oracle within 0.02", ok)


def test_criterion_07_llm_protocol_conformance(capsys):
    ok = False
    try:
        # golden prompt byte identity
        assert prompts.render_translate(
            "de", "Quantum computing basics", "An introduction to qubits."
        ) == golden("translate_prompt.txt")
        assert prompts.render_synthesize(
            "en", ["Ethics", "Law"], "A title\n\nAn abstract.",
            ["Ethics", "Law", "Physics"],
        ) == golden("synthesize_prompt.txt")
        assert prompts.render_rank(
            "A study of quantum computing.", ["Quantum computing", "Ethics"]
        ) == golden("rank_prompt.txt")

        cases = [
            ('{"Ethics": 80, "Law": 20}', {"s1": 0.8, "s2": 0.2}, False),
            ('```json\n{"Ethics": 80, "Law": 20}\n```', {"s1": 0.8, "s2": 0.2}, False),
            ('Here you go: {"Ethics": 80, "Law": 20} hope it helps',
             {"s1": 0.8, "s2": 0.2}, False),
            ('{"Ethics": 80}', {"s1": 0.8, "s2": 0.0}, False),
            ('{"Ethics": 250, "Law": -7}', {"s1": 1.0, "s2": 0.0}, False),
            ("total nonsense, no json", {"s1": 0.0, "s2": 0.0}, True),
        ]
        with MockLlmServer() as server:
            endpoint = LlmEndpoint(base_url=server.base_url, model="m",
                                   timeout=10.0, backoff_base=0.01)
            for body, expected, expect_flag in cases:
                server.behaviour = lambda s, u, body=body: body
                scores, failed = rank_candidates(
                    endpoint, "text", [("s1", "Ethics"), ("s2", "Law")]
                )
                assert failed == expect_flag, body
                for sid, value in expected.items():
                    assert scores[sid] == pytest.approx(value, abs=1e-12), body

            # two 500s then success: two retries, three requests total
            from indexkit.mock_llm import default_behaviour
            server.behaviour = default_behaviour
            server.script_failures([500, 500])
            telemetry = Telemetry()
            assert chat(endpoint, "echo", "ok", telemetry) == "ok"
            assert telemetry.retries == 2
            assert telemetry.requests == 3
        ok = True
    finally:
        _report(capsys, 7, "prompt bytes, ranking parser and retry policy conform", ok)


def test_criterion_08_model_selection_score(capsys):
    ok = False
    try:
        # exact to the last representable bit (0.58 itself is not an
        # exact binary64 value, so equality is asserted at one ulp)
        assert abs(score_model(0.55, 10, 0.003) - 0.58) <= math.ulp(0.58)
        table = [("m1", 0.50, 30.0), ("m2", 0.60, 2.0), ("m3", 0.55, 10.0)]
        before = best_model([ModelScore(m, n, t) for m, n, t in table]).model
        shifted = best_model([ModelScore(m, n + 0.2, t) for m, n, t in table]).model
        assert shifted == before
        ok = True
    finally:
        _report(capsys, 8, "model score formula exact and argmax shift-invariant", ok)


def _workspace_bytes(workdir):
    out = {}
    for path in sorted(workdir.rglob("*")):
        if path.is_file() and path.name != ".lock":
            out[str(path.relative_to(workdir))] = path.read_bytes()
    return out


def test_criterion_09_end_to_end_determinism(capsys, tmp_path):
    ok = False
    try:
        start = time.perf_counter()
        snapshots = []
        config = None
        with MockLlmServer() as server:
            for name in ("one", "two"):
                config_path = write_toy_workspace(tmp_path / name, server.base_url)
                config = PipelineConfig.from_file(config_path)
                Pipeline(config).run()
                snapshots.append(_workspace_bytes(config.workdir))
        assert snapshots[0] == snapshots[1]

        # tuned fusion must not fall behind its best source on the dev set
        reports = config.workdir / "reports"
        for lang in ("de", "en"):
            values = {
                name: json.loads(
                    (reports / f"eval.{name}.{lang}.json").read_text()
                )["values"]["nDCG@20"]
                for name in ("linear", "lexical", "fused")
            }
            assert values["fused"] >= max(values["linear"], values["lexical"]) - 0.01
        assert time.perf_counter() - start < 300.0
        ok = True
    finally:
        _report(capsys, 9, "two from-scratch runs byte-identical; fusion >= best source - 0.01", ok)


def test_criterion_10_synthetic_data_plumbing(capsys):
    ok = False
    try:
        vocab, train, _ = single_language_corpora()
        eligible = {sid for r in train for sid in r.subjects}
        with MockLlmServer() as server:
            endpoint = LlmEndpoint(base_url=server.base_url, model="m",
                                   timeout=10.0, backoff_base=0.01)
            results = [
                synthesize_record(endpoint, r, vocab, eligible, seed=1234 + i)
                for i, r in enumerate(train.records[:20])
            ]
            repeat = [
                synthesize_record(endpoint, r, vocab, eligible, seed=1234 + i)
                for i, r in enumerate(train.records[:20])
            ]
        assert len(results) == 20
        for source, synthetic, again in zip(train.records[:20], results, repeat):
            added = set(synthetic.subjects) - set(source.subjects)
            assert len(added) == 1
            assert set(synthetic.subjects) == set(source.subjects) | added
            assert added <= eligible
            assert synthetic.added_subject_id == again.added_subject_id
            assert (synthetic.title, synthetic.abstract) == (again.title, again.abstract)

        extras = [train, train, train, train]
        merged = merge_training_sets(train, extras, base_repeat=2)
        assert len(merged) == 6 * len(train)
        assert len({r.id for r in merged}) == len(merged)
        ok = True
    finally:
        _report(capsys, 10, "one synthetic record per source; 2x base + 4 extras = 6n", ok)
