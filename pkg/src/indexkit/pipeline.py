"""Pipeline orchestration: staged, content-addressed, re-runnable.

Each stage writes its artifacts atomically (temp file + rename) and
records input/output content hashes in a manifest. Re-running a stage
whose inputs are unchanged and whose outputs still match their recorded
hashes is a no-op.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import logging
import os
import shutil
import time
from dataclasses import dataclass
from pathlib import Path

from . import datamodel, fusion, hyperopt, lexical, linear, llm, metrics

logger = logging.getLogger(__name__)

STAGES = (
    "vocab",
    "translate",
    "synthesize",
    "train",
    "suggest",
    "hyperopt",
    "fuse",
    "rank",
    "merge",
    "eval",
)


class PipelineError(RuntimeError):
    pass


class StageInputMissing(PipelineError):
    def __init__(self, stage: str, artifact: Path):
        super().__init__(f"stage {stage!r}: missing input artifact {artifact}")
        self.stage = stage
        self.artifact = artifact


@dataclass(frozen=True)
class PipelineConfig:
    config_dir: Path
    vocabulary: Path
    train: Path
    dev: Path
    workdir: Path
    languages: tuple[str, ...]
    seed: int = 42
    limit: int = 20
    candidates: int = 100
    trials: int = hyperopt.DEFAULT_TRIALS
    ngram: int = linear.DEFAULT_NGRAM
    min_df: int = linear.DEFAULT_MIN_DF
    clusters: int | None = None
    beam: int = linear.DEFAULT_BEAM
    synthetic_sets: int = 2
    base_repeat: int = 2
    endpoint: str = ""
    model: str = "mock"
    parallel: int = 4
    timeout: float = 60.0
    alpha: float = 0.003

    def __post_init__(self):
        if self.limit < 1 or self.candidates < 1:
            raise ValueError("limits must be >= 1")
        if self.candidates < self.limit:
            raise ValueError("candidate limit must be >= suggestion limit")
        for path in (self.vocabulary, self.train, self.dev):
            if not path.exists():
                raise ValueError(f"configured path does not exist: {path}")

    @classmethod
    def from_file(cls, path: str | Path) -> "PipelineConfig":
        path = Path(path).resolve()
        parser = configparser.ConfigParser()
        with path.open(encoding="utf-8") as fh:
            parser.read_file(fh)
        base = path.parent

        def p(section, option, fallback=None):
            raw = parser.get(section, option, fallback=fallback)
            return (base / raw).resolve() if raw is not None else None

        languages = tuple(
            lang.strip()
            for lang in parser.get("pipeline", "languages", fallback="en").split(",")
            if lang.strip()
        )
        clusters_raw = parser.get("backend", "clusters", fallback="").strip()
        return cls(
            config_dir=base,
            vocabulary=p("paths", "vocabulary"),
            train=p("paths", "train"),
            dev=p("paths", "dev"),
            workdir=p("paths", "workdir", fallback="build"),
            languages=languages,
            seed=parser.getint("pipeline", "seed", fallback=42),
            limit=parser.getint("pipeline", "limit", fallback=20),
            candidates=parser.getint("pipeline", "candidates", fallback=100),
            trials=parser.getint("pipeline", "trials", fallback=hyperopt.DEFAULT_TRIALS),
            ngram=parser.getint("backend", "ngram", fallback=linear.DEFAULT_NGRAM),
            min_df=parser.getint("backend", "min_df", fallback=linear.DEFAULT_MIN_DF),
            clusters=int(clusters_raw) if clusters_raw else None,
            beam=parser.getint("backend", "beam", fallback=linear.DEFAULT_BEAM),
            synthetic_sets=parser.getint("llm", "synthetic_sets", fallback=2),
            base_repeat=parser.getint("llm", "base_repeat", fallback=2),
            endpoint=parser.get("llm", "endpoint", fallback=""),
            model=parser.get("llm", "model", fallback="mock"),
            parallel=parser.getint("llm", "parallel", fallback=4),
            timeout=parser.getfloat("llm", "timeout", fallback=60.0),
            alpha=parser.getfloat("llm", "alpha", fallback=0.003),
        )

    def llm_endpoint(self) -> llm.LlmEndpoint:
        if not self.endpoint:
            raise PipelineError("no LLM endpoint configured")
        return llm.LlmEndpoint(
            base_url=self.endpoint,
            model=self.model,
            timeout=self.timeout,
            parallel=self.parallel,
        )


def file_hash(path: Path) -> str:
    digest = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def tree_hash(path: Path) -> str:
    """Hash of a file, or of a directory's sorted (name, file hash) pairs."""
    if path.is_dir():
        digest = hashlib.sha256()
        for child in sorted(path.rglob("*")):
            if child.is_file():
                digest.update(str(child.relative_to(path)).encode())
                digest.update(file_hash(child).encode())
        return digest.hexdigest()
    return file_hash(path)


def record_seed(seed: int, key: str) -> int:
    """Stable per-record RNG seed, independent of processing order."""
    digest = hashlib.sha256(f"{seed}:{key}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def atomic_write_text(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


class Pipeline:
    """Runs stages in order over one working directory."""

    def __init__(self, config: PipelineConfig):
        self.config = config
        self.workdir = config.workdir
        self.manifest_path = self.workdir / "manifest.jsonl"
        self._vocab = None
        self._telemetry = llm.Telemetry()

    def _rel(self, path: Path) -> str:
        """Manifest paths are workdir-relative so two runs in different
        directories produce identical manifests."""
        return os.path.relpath(path, self.workdir)

    def _abs(self, rel: str) -> Path:
        return (self.workdir / rel).resolve()

    # -- manifest -----------------------------------------------------

    def load_manifest(self) -> dict[str, dict]:
        entries: dict[str, dict] = {}
        if self.manifest_path.exists():
            for line in self.manifest_path.read_text(encoding="utf-8").splitlines():
                if line.strip():
                    try:
                        entry = json.loads(line)
                    except json.JSONDecodeError as exc:
                        raise PipelineError(f"corrupted manifest: {exc}") from exc
                    entries[entry["stage"]] = entry
        return entries

    def _save_manifest(self, entries: dict[str, dict]) -> None:
        lines = [json.dumps(entries[stage]) for stage in STAGES if stage in entries]
        atomic_write_text(self.manifest_path, "\n".join(lines) + "\n")

    # -- paths --------------------------------------------------------

    def vocab_path(self) -> Path:
        return self.workdir / "vocabulary.tsv"

    def corpus_path(self, split: str, lang: str) -> Path:
        return self.workdir / f"{split}.{lang}.jsonl"

    def synth_path(self, lang: str, index: int) -> Path:
        return self.workdir / f"synthetic.{lang}.{index}.jsonl"

    def model_path(self, backend: str, lang: str) -> Path:
        suffix = "" if backend == "linear" else ".json"
        return self.workdir / "models" / f"{backend}.{lang}{suffix}"

    def pred_path(self, name: str, lang: str | None = None) -> Path:
        stem = f"dev.{name}.{lang}" if lang else f"dev.{name}"
        return self.workdir / "predictions" / f"{stem}.jsonl"

    def fusion_config_path(self, lang: str) -> Path:
        return self.workdir / f"fusion.{lang}.conf"

    def relevance_path(self, lang: str) -> Path:
        return self.workdir / f"relevance.{lang}.jsonl"

    def eval_path(self, name: str) -> Path:
        return self.workdir / "reports" / f"eval.{name}.json"

    # -- shared loads ---------------------------------------------------

    def vocabulary(self) -> datamodel.SubjectVocabulary:
        if self._vocab is None:
            source = self.vocab_path() if self.vocab_path().exists() else self.config.vocabulary
            self._vocab = datamodel.load_vocabulary(source)
        return self._vocab

    # -- stage definitions ----------------------------------------------

    def stage_io(self, stage: str) -> tuple[list[Path], list[Path]]:
        cfg = self.config
        langs = cfg.languages
        if stage == "vocab":
            return [cfg.vocabulary], [self.vocab_path()]
        if stage == "translate":
            return (
                [self.vocab_path(), cfg.train, cfg.dev],
                [self.corpus_path(s, l) for s in ("train", "dev") for l in langs],
            )
        if stage == "synthesize":
            inputs = [self.vocab_path()] + [self.corpus_path("train", l) for l in langs]
            outputs = [
                self.synth_path(l, i)
                for l in langs
                for i in range(1, cfg.synthetic_sets + 1)
            ]
            return inputs, outputs
        if stage == "train":
            inputs = [self.vocab_path()]
            for l in langs:
                inputs.append(self.corpus_path("train", l))
                inputs.extend(self.synth_path(l, i) for i in range(1, cfg.synthetic_sets + 1))
            outputs = [self.model_path(b, l) for b in ("linear", "lexical") for l in langs]
            return inputs, outputs
        if stage == "suggest":
            inputs = [self.vocab_path()]
            inputs += [self.corpus_path("dev", l) for l in langs]
            inputs += [self.model_path(b, l) for b in ("linear", "lexical") for l in langs]
            outputs = [self.pred_path(b, l) for b in ("linear", "lexical") for l in langs]
            return inputs, outputs
        if stage == "hyperopt":
            inputs = [self.vocab_path(), cfg.dev]
            inputs += [self.pred_path(b, l) for b in ("linear", "lexical") for l in langs]
            outputs = [self.fusion_config_path(l) for l in langs]
            outputs += [self.workdir / f"trials.{l}.csv" for l in langs]
            return inputs, outputs
        if stage == "fuse":
            inputs = [self.pred_path(b, l) for b in ("linear", "lexical") for l in langs]
            inputs += [self.fusion_config_path(l) for l in langs]
            return inputs, [self.pred_path("fused", l) for l in langs]
        if stage == "rank":
            inputs = [self.vocab_path(), cfg.dev]
            inputs += [self.pred_path("fused", l) for l in langs]
            inputs += [self.fusion_config_path(l) for l in langs]
            outputs = [self.relevance_path(l) for l in langs]
            outputs += [self.pred_path("ranked", l) for l in langs]
            outputs += [self.workdir / f"fusion.llm.{l}.conf" for l in langs]
            return inputs, outputs
        if stage == "merge":
            return (
                [self.pred_path("ranked", l) for l in langs],
                [self.pred_path("merged")],
            )
        if stage == "eval":
            inputs = [self.vocab_path(), cfg.dev]
            inputs += [
                self.pred_path(name, l)
                for name in ("linear", "lexical", "fused", "ranked")
                for l in langs
            ]
            inputs += [self.pred_path("merged")]
            outputs = [
                self.eval_path(f"{name}.{l}")
                for name in ("linear", "lexical", "fused", "ranked")
                for l in langs
            ]
            outputs += [self.eval_path("merged")]
            return inputs, outputs
        raise PipelineError(f"unknown stage {stage!r}")

    # -- stage bodies -----------------------------------------------------

    def _run_vocab(self) -> None:
        vocab = datamodel.load_vocabulary(self.config.vocabulary)
        datamodel.write_vocabulary(self.vocab_path(), vocab)
        self._vocab = vocab

    def _load_raw(self, path: Path, role: str) -> datamodel.Corpus:
        return datamodel.load_corpus(path, self.vocabulary(), role=role)

    def _run_translate(self) -> None:
        endpoint = self.config.llm_endpoint()
        for split, source in (("train", self.config.train), ("dev", self.config.dev)):
            corpus = self._load_raw(source, split)
            for lang in self.config.languages:
                translated = llm.map_parallel(
                    corpus.records,
                    lambda r, lang=lang: llm.translate_record(
                        endpoint, r, lang, self._telemetry
                    ),
                    endpoint.parallel,
                )
                out = datamodel.Corpus(records=tuple(translated), role=split)
                self._write_corpus_atomic(self.corpus_path(split, lang), out)

    def _write_corpus_atomic(self, path: Path, corpus: datamodel.Corpus) -> None:
        tmp = path.with_name(path.name + ".tmp")
        datamodel.write_corpus(tmp, corpus)
        os.replace(tmp, path)

    def _run_synthesize(self) -> None:
        endpoint = self.config.llm_endpoint()
        vocab = self.vocabulary()
        for lang in self.config.languages:
            train = datamodel.load_corpus(self.corpus_path("train", lang), vocab, role="train")
            seen = {sid for r in train if r.subjects for sid in r.subjects}
            for set_index in range(1, self.config.synthetic_sets + 1):
                start = time.monotonic()

                def synthesize(record, set_index=set_index):
                    return llm.synthesize_record(
                        endpoint,
                        record,
                        vocab,
                        eligible=seen,
                        seed=record_seed(self.config.seed + set_index, record.id),
                        telemetry=self._telemetry,
                    )

                results = llm.map_parallel(train.records, synthesize, endpoint.parallel)
                records = tuple(
                    datamodel.Record(
                        id=f"{r.id}#s{set_index}",
                        title=r.title,
                        abstract=r.abstract,
                        language=r.language,
                        subjects=r.subjects,
                    )
                    for r in results
                    if r is not None
                )
                elapsed = time.monotonic() - start
                logger.info(
                    "synthesize %s set %d: %d records, %.1f rec/s",
                    lang, set_index, len(records),
                    llm.measure_throughput(len(records), max(elapsed, 1e-9)),
                )
                self._write_corpus_atomic(
                    self.synth_path(lang, set_index),
                    datamodel.Corpus(records=records, role="train"),
                )

    def _run_train(self) -> None:
        vocab = self.vocabulary()
        cfg = self.config
        (self.workdir / "models").mkdir(exist_ok=True)
        for lang in cfg.languages:
            base = datamodel.load_corpus(self.corpus_path("train", lang), vocab)
            extras = [
                datamodel.load_corpus(self.synth_path(lang, i), vocab)
                for i in range(1, cfg.synthetic_sets + 1)
            ]
            merged = linear.merge_training_sets(base, extras, base_repeat=cfg.base_repeat)
            model = linear.train_linear(
                merged,
                vocab,
                ngram=cfg.ngram,
                min_df=cfg.min_df,
                clusters=cfg.clusters,
                beam=cfg.beam,
                seed=cfg.seed,
            )
            target = self.model_path("linear", lang)
            tmp = target.with_name(target.name + ".tmp")
            if tmp.exists():
                shutil.rmtree(tmp)
            model.save(tmp)
            if target.exists():
                shutil.rmtree(target)
            os.replace(tmp, target)

            lex = lexical.build_lexical(vocab, lang)
            lex_target = self.model_path("lexical", lang)
            lex_tmp = lex_target.with_name(lex_target.name + ".tmp")
            lex.save(lex_tmp)
            os.replace(lex_tmp, lex_target)

    def _write_predictions(self, path: Path, predictions, limit: int) -> None:
        path.parent.mkdir(exist_ok=True)
        tmp = path.with_name(path.name + ".tmp")
        datamodel.write_suggestions(tmp, predictions, limit=limit)
        os.replace(tmp, path)

    def _run_suggest(self) -> None:
        vocab = self.vocabulary()
        cfg = self.config
        for lang in cfg.languages:
            dev = datamodel.load_corpus(self.corpus_path("dev", lang), vocab, role="dev")
            lin = linear.LinearModel.load(self.model_path("linear", lang))
            lex = lexical.LexicalModel.load(self.model_path("lexical", lang))
            self._write_predictions(
                self.pred_path("linear", lang),
                {r.id: linear.suggest_linear(lin, r, cfg.candidates) for r in dev},
                cfg.candidates,
            )
            self._write_predictions(
                self.pred_path("lexical", lang),
                {r.id: lexical.suggest_lexical(lex, r, cfg.candidates) for r in dev},
                cfg.candidates,
            )

    def _gold_dev(self) -> datamodel.Corpus:
        return datamodel.load_corpus(self.config.dev, self.vocabulary(), role="dev")

    def _run_hyperopt(self) -> None:
        cfg = self.config
        dev = self._gold_dev()
        for lang in cfg.languages:
            sources = {
                backend: datamodel.load_suggestions(self.pred_path(backend, lang))
                for backend in ("linear", "lexical")
            }
            spec = hyperopt.TrialSpec(trials=cfg.trials, seed=cfg.seed)
            best, log = hyperopt.optimise_fusion(sources, dev, spec, limit=cfg.limit)
            best = fusion.FusionConfig(
                sources=best.sources, candidate_count=cfg.candidates
            )
            target = self.fusion_config_path(lang)
            tmp = target.with_name(target.name + ".tmp")
            fusion.write_fusion_config(tmp, best)
            os.replace(tmp, target)
            log_path = self.workdir / f"trials.{lang}.csv"
            tmp_log = log_path.with_name(log_path.name + ".tmp")
            hyperopt.write_trial_log(tmp_log, log)
            os.replace(tmp_log, log_path)

    def _run_fuse(self) -> None:
        cfg = self.config
        for lang in cfg.languages:
            config = fusion.load_fusion_config(self.fusion_config_path(lang))
            sources = {
                backend: datamodel.load_suggestions(self.pred_path(backend, lang))
                for backend in ("linear", "lexical")
            }
            record_ids = sorted(set().union(*[set(s) for s in sources.values()]))
            fused = {
                rid: fusion.fuse_simple(
                    config,
                    {name: sources[name].get(rid, []) for name in sources},
                    cfg.candidates,
                )
                for rid in record_ids
            }
            self._write_predictions(self.pred_path("fused", lang), fused, cfg.candidates)

    def _run_rank(self) -> None:
        cfg = self.config
        endpoint = cfg.llm_endpoint()
        vocab = self.vocabulary()
        dev_gold = self._gold_dev()
        for lang in cfg.languages:
            dev = datamodel.load_corpus(self.corpus_path("dev", lang), vocab, role="dev")
            texts = {r.id: r.text() for r in dev}
            fused = datamodel.load_suggestions(self.pred_path("fused", lang))

            def rank_one(record_id):
                candidates = [
                    (s.subject_id, vocab.lookup(s.subject_id).label(lang))
                    for s in fused[record_id][: cfg.candidates]
                ]
                scores, failed = llm.rank_candidates(
                    endpoint,
                    texts.get(record_id, ""),
                    candidates,
                    k=cfg.candidates,
                    telemetry=self._telemetry,
                )
                return record_id, scores, failed

            record_ids = sorted(fused)
            results = llm.map_parallel(record_ids, rank_one, endpoint.parallel)
            relevance = {rid: scores for rid, scores, _ in results}
            lines = [
                json.dumps({"record_id": rid, "scores": relevance[rid]}, sort_keys=True)
                for rid in record_ids
            ]
            atomic_write_text(self.relevance_path(lang), "\n".join(lines) + "\n")

            spec = hyperopt.TrialSpec(trials=cfg.trials, seed=cfg.seed)
            w, p, _log = hyperopt.optimise_llm_term(
                fused, relevance, dev_gold, spec,
                candidate_count=cfg.candidates, limit=cfg.limit,
            )
            base_config = fusion.load_fusion_config(self.fusion_config_path(lang))
            llm_config = fusion.FusionConfig(
                sources=base_config.sources,
                llm_weight=w,
                llm_exponent=p,
                candidate_count=cfg.candidates,
            )
            conf_path = self.workdir / f"fusion.llm.{lang}.conf"
            tmp = conf_path.with_name(conf_path.name + ".tmp")
            fusion.write_fusion_config(tmp, llm_config)
            os.replace(tmp, conf_path)

            ranked = {
                rid: fusion.fuse_llm(
                    llm_config, fused[rid], relevance.get(rid, {}), cfg.candidates
                )
                for rid in record_ids
            }
            self._write_predictions(self.pred_path("ranked", lang), ranked, cfg.candidates)

    def _run_merge(self) -> None:
        cfg = self.config
        per_lang = [
            datamodel.load_suggestions(self.pred_path("ranked", lang))
            for lang in cfg.languages
        ]
        record_ids = sorted(set().union(*[set(p) for p in per_lang]))
        if len(per_lang) == 1:
            merged = {rid: per_lang[0][rid][: cfg.limit] for rid in record_ids}
        else:
            merged = {
                rid: fusion.merge_bilingual(
                    per_lang[0].get(rid, []), per_lang[1].get(rid, []), cfg.limit
                )
                for rid in record_ids
            }
        self._write_predictions(self.pred_path("merged"), merged, cfg.limit)

    def _run_eval(self) -> None:
        cfg = self.config
        dev = self._gold_dev()
        (self.workdir / "reports").mkdir(exist_ok=True)

        def emit(name: str, predictions):
            report = metrics.evaluate(predictions, dev)
            target = self.eval_path(name)
            tmp = target.with_name(target.name + ".tmp")
            report.write(tmp)
            os.replace(tmp, target)

        for lang in cfg.languages:
            for name in ("linear", "lexical", "fused", "ranked"):
                emit(f"{name}.{lang}", datamodel.load_suggestions(self.pred_path(name, lang)))
        emit("merged", datamodel.load_suggestions(self.pred_path("merged")))
        self._telemetry.write(self.workdir / "telemetry.json")

    # -- runner --------------------------------------------------------

    def run(self, stages: list[str] | None = None, dry_run: bool = False) -> list[str]:
        """Run the requested stages in canonical order; returns the list
        of stages that actually executed (vs were skipped)."""
        requested = list(STAGES) if stages is None else [s for s in STAGES if s in set(stages)]
        unknown = set(stages or []) - set(STAGES)
        if unknown:
            raise PipelineError(f"unknown stages: {sorted(unknown)}")

        self.workdir.mkdir(parents=True, exist_ok=True)
        lock = self.workdir / ".lock"
        try:
            fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise PipelineError(f"working directory is locked ({lock})")
        os.close(fd)
        try:
            return self._run_locked(requested, dry_run)
        finally:
            os.unlink(lock)

    def _run_locked(self, requested: list[str], dry_run: bool) -> list[str]:
        manifest = self.load_manifest()
        executed = []
        runners = {
            "vocab": self._run_vocab,
            "translate": self._run_translate,
            "synthesize": self._run_synthesize,
            "train": self._run_train,
            "suggest": self._run_suggest,
            "hyperopt": self._run_hyperopt,
            "fuse": self._run_fuse,
            "rank": self._run_rank,
            "merge": self._run_merge,
            "eval": self._run_eval,
        }
        for stage in requested:
            inputs, outputs = self.stage_io(stage)
            for path in inputs:
                if not path.exists():
                    raise StageInputMissing(stage, path)
            input_hashes = {self._rel(p): tree_hash(p) for p in inputs}
            entry = manifest.get(stage)
            if (
                entry is not None
                and entry["inputs"] == input_hashes
                and all(self._abs(p).exists() for p in entry["outputs"])
                and {p: tree_hash(self._abs(p)) for p in entry["outputs"]} == entry["outputs"]
            ):
                logger.info("stage %s: up to date, skipping", stage)
                continue
            if dry_run:
                executed.append(stage)
                continue
            logger.info("stage %s: running", stage)
            runners[stage]()
            output_hashes = {self._rel(p): tree_hash(p) for p in outputs}
            manifest[stage] = {
                "stage": stage,
                "inputs": input_hashes,
                "outputs": output_hashes,
            }
            self._save_manifest(manifest)
            executed.append(stage)
        return executed

    # -- report --------------------------------------------------------

    def report(self) -> str:
        if not self.manifest_path.exists():
            return "no manifest: pipeline has not run in this working directory"
        manifest = self.load_manifest()
        lines = ["stage status:"]
        for stage in STAGES:
            status = "done" if stage in manifest else "pending"
            lines.append(f"  {stage:<11} {status}")

        rows = []
        for lang in self.config.languages:
            rows.append((lang, self.eval_path(f"ranked.{lang}")))
        rows.append(("merged", self.eval_path("merged")))
        table = [("set", "F1@5", "nDCG@20")]
        for name, path in rows:
            if path.exists():
                values = json.loads(path.read_text(encoding="utf-8"))["values"]
                table.append((name, f"{values['F1@5']:.4f}", f"{values['nDCG@20']:.4f}"))
        if len(table) > 1:
            lines.append("")
            lines.append("metrics (LLM-ranked ensembles):")
            for row in table:
                lines.append("  " + "".join(f"{cell:<10}" for cell in row))

        telemetry_path = self.workdir / "telemetry.json"
        if telemetry_path.exists():
            lines.append("")
            lines.append("LLM telemetry: " + telemetry_path.read_text(encoding="utf-8").strip())
        return "\n".join(lines)
