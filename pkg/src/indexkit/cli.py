"""Command-line interface.

One subcommand per pipeline stage plus `run` (all stages), `report`, and
a standalone `hyperopt` mode that works directly on prediction files.

Exit codes: 0 success, 1 validation error, 2 transport error, 3 internal
error.
"""

from __future__ import annotations

import dataclasses
import logging
import sys
from pathlib import Path

import click

from . import datamodel, hyperopt, llm, pipeline
from .fusion import write_fusion_config

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_TRANSPORT = 2
EXIT_INTERNAL = 3


def _fail(code: int, message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _load_config(config_path: str, seed: int | None) -> pipeline.PipelineConfig:
    config = pipeline.PipelineConfig.from_file(config_path)
    if seed is not None:
        config = dataclasses.replace(config, seed=seed)
    return config


def _run_stages(config_path: str, stages: list[str], seed: int | None = None,
                dry_run: bool = False) -> None:
    try:
        config = _load_config(config_path, seed)
        executed = pipeline.Pipeline(config).run(stages=stages, dry_run=dry_run)
    except (ValueError, datamodel.DataFormatError, pipeline.PipelineError, OSError) as exc:
        _fail(EXIT_VALIDATION, str(exc))
    except llm.TransportError as exc:
        _fail(EXIT_TRANSPORT, str(exc))
    except Exception as exc:  # invariant violations and bugs
        _fail(EXIT_INTERNAL, f"{type(exc).__name__}: {exc}")
    verb = "would run" if dry_run else "ran"
    click.echo(f"{verb} stages: {', '.join(executed) if executed else '(none, all up to date)'}")


config_option = click.option(
    "--config", "-c", "config_path", required=True,
    type=click.Path(exists=True, dir_okay=False),
    help="pipeline config file; paths inside are relative to it",
)
seed_option = click.option("--seed", type=int, default=None, help="override the configured seed")


@click.group()
@click.option("--verbose", "-v", is_flag=True, help="log stage progress")
def main(verbose: bool):
    """Multilingual subject indexing pipeline."""
    logging.basicConfig(
        level=logging.INFO if verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )


def _stage_command(stage: str, help_text: str):
    @main.command(name=stage, help=help_text)
    @config_option
    @seed_option
    def command(config_path: str, seed: int | None):
        _run_stages(config_path, [stage], seed=seed)

    return command


_stage_command("vocab", "Validate the vocabulary and stage it into the working directory.")
_stage_command("translate", "Produce monolingual record variants via the LLM endpoint.")
_stage_command("synthesize", "Generate synthetic training records via the LLM endpoint.")
_stage_command("train", "Train the linear backend and build the lexical index per language.")
_stage_command("suggest", "Produce backend predictions for the development set.")
_stage_command("fuse", "Combine backend predictions with the tuned fusion config.")
_stage_command("rank", "LLM-rank fused candidates and blend the relevance scores in.")
_stage_command("merge", "Merge per-language predictions into bilingual output.")
_stage_command("eval", "Evaluate all prediction sets against the development gold.")


@main.command(name="run", help="Run the full pipeline (or a stage subset).")
@config_option
@seed_option
@click.option("--stages", default=None, help="comma-separated stage subset")
@click.option("--dry-run", is_flag=True, help="show which stages would run")
def run_command(config_path: str, seed: int | None, stages: str | None, dry_run: bool):
    stage_list = None
    if stages:
        stage_list = [s.strip() for s in stages.split(",") if s.strip()]
    _run_stages(config_path, stage_list, seed=seed, dry_run=dry_run)


@main.command(name="report", help="Print per-stage status, metrics and LLM telemetry.")
@config_option
def report_command(config_path: str):
    try:
        config = pipeline.PipelineConfig.from_file(config_path)
        click.echo(pipeline.Pipeline(config).report())
    except pipeline.PipelineError as exc:
        _fail(EXIT_VALIDATION, str(exc))
    except Exception as exc:
        _fail(EXIT_INTERNAL, f"{type(exc).__name__}: {exc}")


@main.command(name="hyperopt", help="Tune fusion weights/exponents on prediction files.")
@click.option("--trials", type=int, default=hyperopt.DEFAULT_TRIALS, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--sources", required=True,
              help="comma-separated prediction files; source names come from the file stems")
@click.option("--dev", "dev_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--vocab", "vocab_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", default="fusion.conf", show_default=True,
              help="where to write the best fusion config")
@click.option("--log", "log_path", default="trials.csv", show_default=True,
              help="where to write the CSV trial log")
def hyperopt_command(trials: int, seed: int, sources: str, dev_path: str,
                     vocab_path: str, out_path: str, log_path: str):
    try:
        vocabulary = datamodel.load_vocabulary(vocab_path)
        dev = datamodel.load_corpus(dev_path, vocabulary, role="dev")
        source_files = [Path(s.strip()) for s in sources.split(",") if s.strip()]
        predictions = {path.stem: datamodel.load_suggestions(path) for path in source_files}
        spec = hyperopt.TrialSpec(trials=trials, seed=seed)
        best, log = hyperopt.optimise_fusion(predictions, dev, spec)
        write_fusion_config(out_path, best)
        hyperopt.write_trial_log(log_path, log)
    except (ValueError, datamodel.DataFormatError, FileNotFoundError) as exc:
        _fail(EXIT_VALIDATION, str(exc))
    except Exception as exc:
        _fail(EXIT_INTERNAL, f"{type(exc).__name__}: {exc}")
    click.echo(f"best objective {log[-1].best_so_far:.4f} over {trials} trials")
    click.echo(f"config written to {out_path}, trial log to {log_path}")


if __name__ == "__main__":
    main()
