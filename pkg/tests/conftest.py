"""Shared fixtures: toy vocabulary/corpora and the mock LLM endpoint.

The toy corpus is fully separable: 50 subjects with pairwise disjoint
token sets, 4 training documents plus 1 held-out document per subject.
"""

from __future__ import annotations

import random

import pytest

from indexkit.datamodel import Corpus, Record, SubjectEntry, SubjectVocabulary
from indexkit.mock_llm import MockLlmServer

N_SUBJECTS = 50
DOCS_PER_SUBJECT = 4

LANG_PREFIX = {"en": "t", "de": "d"}


def subject_id(i: int) -> str:
    return f"s{i:02d}"


def subject_tokens(i: int, language: str) -> list[str]:
    prefix = LANG_PREFIX[language]
    return [f"{prefix}{i:02d}{c}" for c in "abcdef"]


def subject_label(i: int, language: str) -> str:
    tokens = subject_tokens(i, language)
    return f"{tokens[0]} {tokens[1]}"


def make_toy_vocabulary(n_subjects: int = N_SUBJECTS) -> SubjectVocabulary:
    entries = [
        SubjectEntry(
            id=subject_id(i),
            labels={"de": subject_label(i, "de"), "en": subject_label(i, "en")},
        )
        for i in range(n_subjects)
    ]
    return SubjectVocabulary(languages=("de", "en"), subjects=entries)


def make_toy_doc(i: int, doc_index: int, language: str) -> Record:
    """One document about subject i, using only that subject's tokens."""
    rng = random.Random(1000 * i + doc_index)
    tokens = subject_tokens(i, language)
    title = f"{subject_label(i, language)} {tokens[2]}"
    abstract = " ".join(rng.choice(tokens) for _ in range(12))
    return Record(
        id=f"r{i:02d}-{doc_index}",
        title=title,
        abstract=abstract,
        language=language,
        subjects=frozenset({subject_id(i)}),
    )


def make_toy_corpora(
    n_subjects: int = N_SUBJECTS, docs_per_subject: int = DOCS_PER_SUBJECT
) -> tuple[Corpus, Corpus]:
    """(train, held-out dev); records alternate between the two languages
    per subject."""
    train, dev = [], []
    for i in range(n_subjects):
        language = "en" if i % 2 == 0 else "de"
        for d in range(docs_per_subject):
            train.append(make_toy_doc(i, d, language))
        dev.append(make_toy_doc(i, docs_per_subject, language))
    return Corpus(records=tuple(train), role="train"), Corpus(records=tuple(dev), role="dev")


PIPELINE_CONF = """\
[paths]
vocabulary = vocab.tsv
train = train.jsonl
dev = dev.jsonl
workdir = build

[pipeline]
languages = de,en
seed = 42
limit = 20
candidates = {candidates}
trials = {trials}

[backend]
ngram = 2
min_df = 2
beam = 5

[llm]
endpoint = {endpoint}
model = mock-small
parallel = 4
timeout = 30
synthetic_sets = {synthetic_sets}
base_repeat = 2
"""


def write_toy_workspace(root, endpoint, trials=80, candidates=60, synthetic_sets=1):
    """Materialize vocabulary, corpora and a pipeline config under root;
    returns the config path."""
    from indexkit.datamodel import write_corpus, write_vocabulary

    root.mkdir(parents=True, exist_ok=True)
    vocab = make_toy_vocabulary()
    train, dev = make_toy_corpora()
    write_vocabulary(root / "vocab.tsv", vocab)
    write_corpus(root / "train.jsonl", train)
    write_corpus(root / "dev.jsonl", dev)
    config = root / "pipeline.conf"
    config.write_text(
        PIPELINE_CONF.format(endpoint=endpoint, trials=trials,
                             candidates=candidates, synthetic_sets=synthetic_sets),
        encoding="utf-8",
    )
    return config


@pytest.fixture(scope="session")
def toy_vocabulary() -> SubjectVocabulary:
    return make_toy_vocabulary()


@pytest.fixture(scope="session")
def toy_corpora() -> tuple[Corpus, Corpus]:
    return make_toy_corpora()


@pytest.fixture()
def mock_server():
    with MockLlmServer() as server:
        yield server
