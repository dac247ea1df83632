"""Command-line entry points.

Four subcommands: `evolve` runs a local 1+1 run and writes its artifacts,
`worker` evaluates tasks for a remote session, `verify` replays a `.simlog`
and checks it against a fresh simulation, and `serve` starts the HTTP
service.

Exit codes: 0 success, 2 invalid arguments, 3 verification failure,
4 protocol failure.  Every option can also be set through an environment
variable prefixed ``EVOARENA_`` (shown in ``--help``); explicit flags win
over the environment, which wins over defaults.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import __version__
from .animats import AnimatKind
from .evolution import EvolutionParams, evaluate, run_1p1
from .simlog import SimLogError, replay_verify

EXIT_VERIFICATION_FAILURE = 3
EXIT_PROTOCOL_FAILURE = 4

_KIND_CHOICES = [kind.value for kind in AnimatKind]


def _dumps(obj) -> str:
    return json.dumps(obj, separators=(",", ":"), ensure_ascii=False, allow_nan=False)


def _params_options(fn):
    defaults = EvolutionParams()
    options = [
        click.option(
            "--mutation-sigma-scale",
            type=float,
            default=defaults.mutation_sigma_scale,
            show_default=True,
            envvar="EVOARENA_MUTATION_SIGMA_SCALE",
            show_envvar=True,
            help="Gaussian mutation scale as a fraction of each gene's range.",
        ),
        click.option(
            "--per-gene-mutation-prob",
            type=float,
            default=defaults.per_gene_mutation_prob,
            show_default=True,
            envvar="EVOARENA_PER_GENE_MUTATION_PROB",
            show_envvar=True,
            help="Probability that each gene mutates.",
        ),
        click.option(
            "--eval-duration",
            type=float,
            default=defaults.eval_duration,
            show_default=True,
            envvar="EVOARENA_EVAL_DURATION",
            show_envvar=True,
            help="Seconds of scored locomotion per evaluation.",
        ),
        click.option(
            "--settle-duration",
            type=float,
            default=defaults.settle_duration,
            show_default=True,
            envvar="EVOARENA_SETTLE_DURATION",
            show_envvar=True,
            help="Unscored seconds before the controller starts oscillating.",
        ),
    ]
    for option in reversed(options):
        fn = option(fn)
    return fn


def _build_params(sigma, prob, eval_duration, settle_duration) -> EvolutionParams:
    params = EvolutionParams(
        mutation_sigma_scale=sigma,
        per_gene_mutation_prob=prob,
        eval_duration=eval_duration,
        settle_duration=settle_duration,
    )
    try:
        params.validate()
    except ValueError as exc:
        raise click.UsageError(str(exc)) from exc
    return params


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.version_option(__version__)
def main():
    """Evolve simulated animats, locally or against a remote session."""


@main.command()
@click.option(
    "--kind",
    type=click.Choice(_KIND_CHOICES),
    default=AnimatKind.QUADRUPED.value,
    show_default=True,
    envvar="EVOARENA_KIND",
    show_envvar=True,
    help="Animat body plan to evolve.",
)
@click.option(
    "--seed",
    type=click.IntRange(min=0),
    default=0,
    show_default=True,
    envvar="EVOARENA_SEED",
    show_envvar=True,
    help="Master seed; fixes every genome and outcome of the run.",
)
@click.option(
    "--n-evals",
    type=click.IntRange(min=1),
    default=200,
    show_default=True,
    envvar="EVOARENA_N_EVALS",
    show_envvar=True,
    help="Number of evaluations (the first one seeds the parent).",
)
@click.option(
    "--out-dir",
    type=click.Path(file_okay=False, path_type=Path),
    default=None,
    envvar="EVOARENA_OUT_DIR",
    show_envvar=True,
    help="Write history.jsonl, best.json, and best.simlog here.",
)
@click.option(
    "--records-out",
    type=click.File("w"),
    default=None,
    help="Stream one JSON record per evaluation to this file ('-' for stdout).",
)
@_params_options
def evolve(
    kind,
    seed,
    n_evals,
    out_dir,
    records_out,
    mutation_sigma_scale,
    per_gene_mutation_prob,
    eval_duration,
    settle_duration,
):
    """Run a local 1+1 evolution and report/store its records."""
    params = _build_params(
        mutation_sigma_scale, per_gene_mutation_prob, eval_duration, settle_duration
    )
    running_best = [float("-inf")]

    def on_record(record):
        running_best[0] = max(running_best[0], record.fitness)
        marker = "*" if record.accepted else " "
        click.echo(
            f"eval {record.eval_index:4d}  fitness {record.fitness:.6f} {marker} "
            f"best {running_best[0]:.6f}"
        )
        if records_out is not None:
            records_out.write(_dumps(record.to_dict()) + "\n")
            records_out.flush()

    best, history = run_1p1(AnimatKind(kind), params, seed, n_evals, on_record=on_record)
    click.echo(f"best fitness {best.fitness:.6f} at eval {best.eval_index}")

    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "history.jsonl", "w", encoding="utf-8") as fh:
            for record in history:
                fh.write(_dumps(record.to_dict()) + "\n")
        (out_dir / "best.json").write_text(_dumps(best.to_dict()) + "\n", encoding="utf-8")
        _, best_log = evaluate(best.genome, params)
        if best_log.digest() != best.log_digest:
            click.echo("warning: best log digest changed on re-evaluation", err=True)
        (out_dir / "best.simlog").write_text(best_log.dumps(), encoding="utf-8")
        click.echo(f"wrote {out_dir}/history.jsonl, best.json, best.simlog")


@main.command()
@click.option(
    "--server",
    "server_url",
    required=True,
    envvar="EVOARENA_SERVER",
    show_envvar=True,
    help="Base URL of the session server, e.g. http://127.0.0.1:8000",
)
@click.option(
    "--session",
    "session_id",
    required=True,
    envvar="EVOARENA_SESSION",
    show_envvar=True,
    help="Session id to evaluate tasks for.",
)
@click.option(
    "--worker-id",
    default=None,
    envvar="EVOARENA_WORKER_ID",
    show_envvar=True,
    help="Stable worker name; generated from the hostname when omitted.",
)
@click.option(
    "--max-tasks",
    type=click.IntRange(min=1),
    default=None,
    help="Stop after this many completed tasks instead of waiting for close.",
)
def worker(server_url, session_id, worker_id, max_tasks):
    """Fetch, evaluate, and report tasks until the session closes."""
    from .worker import ProtocolFailure, VerificationRejectedError, run_worker

    def on_task(task, result):
        if result.get("rejected_reason"):
            outcome = result["rejected_reason"]
        elif result.get("accepted"):
            outcome = "accepted"
        else:
            outcome = "recorded"
        click.echo(f"task {task['task_id']}  {outcome}")

    try:
        stats = run_worker(
            server_url,
            session_id,
            worker_id=worker_id,
            max_tasks=max_tasks,
            on_task=on_task,
        )
    except VerificationRejectedError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_VERIFICATION_FAILURE)
    except ProtocolFailure as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_PROTOCOL_FAILURE)
    click.echo(
        f"worker {stats.worker_id}: {stats.tasks_completed} tasks, "
        f"{stats.accepted} accepted, {stats.rejected} rejected "
        f"({stats.stopped_reason})"
    )


@main.command()
@click.argument("log_path", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option(
    "--tolerance",
    type=float,
    default=1e-9,
    show_default=True,
    help="Maximum allowed per-frame state deviation.",
)
def verify(log_path, tolerance):
    """Replay LOG_PATH against a fresh simulation and compare every frame."""
    try:
        report = replay_verify(log_path, tolerance=tolerance)
    except SimLogError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_VERIFICATION_FAILURE)
    if report.frames_compared == 0:
        click.echo("warning: log contains no frames; nothing to compare", err=True)
    click.echo(f"frames compared:       {report.frames_compared}")
    click.echo(f"max position error:    {report.max_position_error:.3e}")
    click.echo(f"max orientation error: {report.max_orientation_error:.3e}")
    verdict = "pass" if report.passed else "FAIL"
    suffix = f" ({report.reason})" if report.reason else ""
    click.echo(f"result: {verdict}{suffix}")
    if not report.passed:
        sys.exit(EXIT_VERIFICATION_FAILURE)


@main.command()
@click.option(
    "--bind",
    default="127.0.0.1:8000",
    show_default=True,
    envvar="EVOARENA_BIND",
    show_envvar=True,
    help="host:port to listen on.",
)
@click.option(
    "--data-dir",
    type=click.Path(file_okay=False, path_type=Path),
    default=Path("evoarena-data"),
    show_default=True,
    envvar="EVOARENA_DATA_DIR",
    show_envvar=True,
    help="Directory for session journals and stored logs.",
)
@click.option(
    "--static-dir",
    type=click.Path(file_okay=False, path_type=Path),
    default=None,
    envvar="EVOARENA_STATIC_DIR",
    show_envvar=True,
    help="Built web client to serve at '/'.",
)
def serve(bind, data_dir, static_dir):
    """Start the session server (and optionally the web client)."""
    host, _, port_text = bind.rpartition(":")
    if not host or not port_text.isdigit():
        raise click.UsageError(f"--bind must look like host:port, got {bind!r}")
    import uvicorn

    from .server import create_app

    app = create_app(data_dir, static_dir=static_dir)
    uvicorn.run(app, host=host, port=int(port_text), log_level="info")


if __name__ == "__main__":
    main()
