"""Statistical suggestion backend: TF-IDF features (unigrams+bigrams),
a two-level partitioned label tree and cosine scoring.

Training builds one unit-normalized prototype vector per subject (mean of
its training documents) and clusters the prototypes with spherical
k-means. Suggestion routes a query through the best clusters (beam) and
scores only the subjects inside them.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from . import kernels
from .datamodel import Corpus, Record, SubjectVocabulary, Suggestion, sort_suggestions
from .lexical import normalize

MODEL_MAGIC = "indexkit-linear-v1"

DEFAULT_NGRAM = 2
DEFAULT_MIN_DF = 5
DEFAULT_BEAM = 10
DEFAULT_SEED = 42
KMEANS_MAX_ITER = 25


class TrainingError(ValueError):
    """Raised when training preconditions are violated."""


@dataclass(frozen=True)
class FeatureSpace:
    """Retained n-gram vocabulary with idf weights.

    idf(g) = ln((1+N)/(1+df(g))) + 1 with N the training document count;
    only n-grams with document frequency >= min_df are retained.
    """

    features: tuple[str, ...]
    idf: np.ndarray
    ngram: int
    min_df: int
    doc_count: int

    def __post_init__(self):
        object.__setattr__(self, "_index", {g: i for i, g in enumerate(self.features)})

    def __len__(self) -> int:
        return len(self.features)

    def ngrams(self, text: str) -> list[str]:
        tokens = normalize(text)
        grams = list(tokens)
        for n in range(2, self.ngram + 1):
            grams.extend(" ".join(tokens[i : i + n]) for i in range(len(tokens) - n + 1))
        return grams

    def vectorize(self, text: str) -> sp.csr_matrix:
        """Raw-count TF times idf, L2-normalized; all-zero rows allowed."""
        counts: dict[int, float] = {}
        for gram in self.ngrams(text):
            col = self._index.get(gram)
            if col is not None:
                counts[col] = counts.get(col, 0.0) + 1.0
        if not counts:
            return sp.csr_matrix((1, len(self.features)))
        cols = np.fromiter(sorted(counts), dtype=np.int64)
        vals = np.array([counts[c] for c in cols]) * self.idf[cols]
        vals /= np.linalg.norm(vals)
        return sp.csr_matrix(
            (vals, cols, np.array([0, len(cols)])), shape=(1, len(self.features))
        )


def build_feature_space(texts: list[str], ngram: int, min_df: int) -> FeatureSpace:
    df: dict[str, int] = {}
    for text in texts:
        tokens = normalize(text)
        grams = set(tokens)
        for n in range(2, ngram + 1):
            grams.update(" ".join(tokens[i : i + n]) for i in range(len(tokens) - n + 1))
        for gram in grams:
            df[gram] = df.get(gram, 0) + 1
    kept = sorted(g for g, c in df.items() if c >= min_df)
    if not kept:
        raise TrainingError("no features survive min_df")
    n_docs = len(texts)
    idf = np.array([math.log((1 + n_docs) / (1 + df[g])) + 1.0 for g in kept])
    return FeatureSpace(
        features=tuple(kept), idf=idf, ngram=ngram, min_df=min_df, doc_count=n_docs
    )


def _unit_rows(matrix: sp.csr_matrix) -> sp.csr_matrix:
    norms = np.sqrt(matrix.multiply(matrix).sum(axis=1)).A1
    norms[norms == 0] = 1.0
    return sp.diags(1.0 / norms) @ matrix


def _spherical_kmeans(
    points: sp.csr_matrix, n_clusters: int, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """Cluster unit vectors by cosine; returns (assignments, dense centroids).

    Empty clusters are reseeded from the point farthest from its centroid.
    """
    n_points = points.shape[0]
    rng = np.random.RandomState(seed)
    if n_clusters >= n_points:
        # one point per cluster, surplus clusters left empty then dropped
        assign = np.arange(n_points)
        centroids = np.asarray(points.todense())
        return assign, centroids

    start = points[rng.choice(n_points, size=n_clusters, replace=False)]
    centroids = np.asarray(start.todense())
    assign = np.zeros(n_points, dtype=np.int64)
    for _ in range(KMEANS_MAX_ITER):
        sims = points @ centroids.T
        new_assign = np.argmax(sims, axis=1)
        best_sim = sims[np.arange(n_points), new_assign]
        for c in range(n_clusters):
            if not np.any(new_assign == c):
                new_assign[int(np.argmin(best_sim))] = c
                best_sim[int(np.argmin(best_sim))] = 1.0
        if np.array_equal(new_assign, assign) and _ > 0:
            break
        assign = new_assign
        for c in range(n_clusters):
            members = points[assign == c]
            mean = np.asarray(members.mean(axis=0)).ravel()
            norm = np.linalg.norm(mean)
            centroids[c] = mean / norm if norm > 0 else mean
    return assign, centroids


@dataclass(frozen=True)
class LinearModel:
    language: str
    feature_space: FeatureSpace
    subject_ids: tuple[str, ...]
    prototypes: sp.csr_matrix  # one unit row per subject
    cluster_of: np.ndarray  # subject index -> cluster id
    centroids: np.ndarray  # dense, unit rows
    beam: int
    seed: int

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.mkdir(parents=True, exist_ok=True)
        meta = {
            "magic": MODEL_MAGIC,
            "language": self.language,
            "subject_ids": list(self.subject_ids),
            "features": list(self.feature_space.features),
            "ngram": self.feature_space.ngram,
            "min_df": self.feature_space.min_df,
            "doc_count": self.feature_space.doc_count,
            "beam": self.beam,
            "seed": self.seed,
        }
        (path / "meta.json").write_text(json.dumps(meta, ensure_ascii=False), encoding="utf-8")
        np.save(path / "idf.npy", self.feature_space.idf)
        np.save(path / "proto_indptr.npy", self.prototypes.indptr.astype(np.int64))
        np.save(path / "proto_indices.npy", self.prototypes.indices.astype(np.int64))
        np.save(path / "proto_data.npy", self.prototypes.data.astype(np.float64))
        np.save(path / "cluster_of.npy", self.cluster_of.astype(np.int64))
        np.save(path / "centroids.npy", self.centroids.astype(np.float64))

    @classmethod
    def load(cls, path: str | Path) -> "LinearModel":
        path = Path(path)
        meta = json.loads((path / "meta.json").read_text(encoding="utf-8"))
        if meta.get("magic") != MODEL_MAGIC:
            raise ValueError(f"{path}: not a linear model directory")
        space = FeatureSpace(
            features=tuple(meta["features"]),
            idf=np.load(path / "idf.npy"),
            ngram=meta["ngram"],
            min_df=meta["min_df"],
            doc_count=meta["doc_count"],
        )
        prototypes = sp.csr_matrix(
            (
                np.load(path / "proto_data.npy"),
                np.load(path / "proto_indices.npy"),
                np.load(path / "proto_indptr.npy"),
            ),
            shape=(len(meta["subject_ids"]), len(space)),
        )
        return cls(
            language=meta["language"],
            feature_space=space,
            subject_ids=tuple(meta["subject_ids"]),
            prototypes=prototypes,
            cluster_of=np.load(path / "cluster_of.npy"),
            centroids=np.load(path / "centroids.npy"),
            beam=meta["beam"],
            seed=meta["seed"],
        )


def train_linear(
    corpus: Corpus,
    vocabulary: SubjectVocabulary,
    ngram: int = DEFAULT_NGRAM,
    min_df: int = DEFAULT_MIN_DF,
    clusters: int | None = None,
    beam: int = DEFAULT_BEAM,
    seed: int = DEFAULT_SEED,
) -> LinearModel:
    if len(corpus) == 0:
        raise TrainingError("empty training corpus")
    labeled = [r for r in corpus if r.subjects]
    if not labeled:
        raise TrainingError("no labeled records in training corpus")

    texts = [r.text() for r in corpus]
    space = build_feature_space(texts, ngram=ngram, min_df=min_df)

    subject_ids = tuple(sorted({sid for r in labeled for sid in r.subjects}))
    subject_index = {sid: i for i, sid in enumerate(subject_ids)}
    if clusters is None:
        clusters = math.ceil(math.sqrt(len(subject_ids)))
    if clusters < 1:
        raise TrainingError("cluster count must be >= 1")

    doc_vectors = sp.vstack([space.vectorize(r.text()) for r in labeled])
    rows, cols = [], []
    for row, record in enumerate(labeled):
        for sid in record.subjects:
            rows.append(row)
            cols.append(subject_index[sid])
    membership = sp.csr_matrix(
        (np.ones(len(rows)), (rows, cols)), shape=(len(labeled), len(subject_ids))
    )
    counts = np.asarray(membership.sum(axis=0)).ravel()
    sums = sp.csr_matrix(membership.T @ doc_vectors)
    prototypes = _unit_rows(sp.csr_matrix(sp.diags(1.0 / counts) @ sums))

    cluster_of, centroids = _spherical_kmeans(prototypes, clusters, seed)
    return LinearModel(
        language=labeled[0].language,
        feature_space=space,
        subject_ids=subject_ids,
        prototypes=prototypes,
        cluster_of=cluster_of,
        centroids=centroids,
        beam=beam,
        seed=seed,
    )


def suggest_linear(model: LinearModel, record: Record, limit: int = 20) -> list[Suggestion]:
    """Beam-routed cosine scoring; score = max(0, cosine)."""
    if record.language != model.language:
        raise ValueError(
            f"record language {record.language!r} != model language {model.language!r}"
        )
    query_row = model.feature_space.vectorize(record.text())
    if query_row.nnz == 0:
        return []
    query = np.asarray(query_row.todense()).ravel()

    centroid_sims = model.centroids @ query
    beam = min(model.beam, len(model.centroids))
    top_clusters = set(np.argsort(-centroid_sims)[:beam].tolist())

    candidates = np.nonzero(np.isin(model.cluster_of, list(top_clusters)))[0]
    routed = sp.csr_matrix(model.prototypes[candidates])
    scores = kernels.csr_dense_dot(routed.indptr, routed.indices, routed.data, query)
    entries = [
        Suggestion(subject_id=model.subject_ids[i], score=max(0.0, float(scores[j])))
        for j, i in enumerate(candidates)
    ]
    return sort_suggestions(entries)[:limit]


def merge_training_sets(base: Corpus, extras: list[Corpus], base_repeat: int = 1) -> Corpus:
    """Concatenate base (repeated) and extra corpora with unique ids."""
    languages = {r.language for r in base}
    for extra in extras:
        if {r.language for r in extra} - languages:
            raise ValueError("training sets do not share a language")
    records = list(base.records)
    for i in range(2, base_repeat + 1):
        records.extend(
            Record(
                id=f"{r.id}#b{i}",
                title=r.title,
                abstract=r.abstract,
                language=r.language,
                subjects=r.subjects,
            )
            for r in base
        )
    for j, extra in enumerate(extras, start=1):
        records.extend(
            Record(
                id=f"{r.id}#x{j}",
                title=r.title,
                abstract=r.abstract,
                language=r.language,
                subjects=r.subjects,
            )
            for r in extra
        )
    return Corpus(records=tuple(records), role=base.role)
