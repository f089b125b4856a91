"""Command-line interface for attnmerge."""

import functools
import logging
import sys
from typing import Any, Callable, Optional

import click

from attnmerge import __version__
from attnmerge.config import DTYPE_NAMES, ConfigurationError, resolve_config
from attnmerge.registry import RegistrationError
from attnmerge.suites import EXIT_ERROR, Runner, SuiteError
from attnmerge.writers import WriterError

logger = logging.getLogger(__name__)

PACKAGE_ERRORS = (ConfigurationError, RegistrationError, SuiteError, WriterError)


def run_options(command: Callable) -> Callable:
    """Options shared by every subcommand."""

    @click.option(
        "--config",
        "-c",
        "config_path",
        type=click.Path(exists=True, dir_okay=False),
        help="Configuration file path (default: ./config.yaml if present)",
    )
    @click.option("--seed", type=int, help="Seed for every random input")
    @click.option("--out", "-o", "out_dir", type=click.Path(file_okay=False), help="Report directory")
    @click.option("--dtype", type=click.Choice(DTYPE_NAMES), help="Floating-point precision")
    @click.option("--reps", type=click.IntRange(min=1), help="Repetitions (seed, seed+1, ...)")
    @click.option("--rows", "show_rows", is_flag=True, help="Print report rows after the summary")
    @functools.wraps(command)
    def wrapper(*args: Any, **kwargs: Any) -> Any:
        return command(*args, **kwargs)

    return wrapper


def _configure_logging(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        force=True,
    )


def _run(
    ctx: click.Context,
    command: str,
    config_path: Optional[str],
    seed: Optional[int],
    out_dir: Optional[str],
    dtype: Optional[str],
    reps: Optional[int],
    show_rows: bool,
    **suite_kwargs: Any,
) -> None:
    verbose = ctx.obj.get("verbose", False)
    try:
        config = resolve_config(config_path).with_overrides(
            seed=seed, out_dir=out_dir, dtype=dtype, reps=reps
        )
        if config.run.verbose and not verbose:
            verbose = True
            _configure_logging(True)

        if verbose:
            click.echo(f"Command: {command}")
            click.echo(f"Config: {config_path or 'default'}")
            click.echo(f"Seed: {config.run.seed}  dtype: {config.model.dtype}  reps: {config.run.reps}")
            click.echo(f"Output: {config.run.out_dir}")

        runner = Runner(config=config, config_path=config_path, show_rows=show_rows)
        status = runner.run(command, **suite_kwargs)

    except PACKAGE_ERRORS as e:
        click.echo(f"Error: {e}", err=True)
        sys.exit(EXIT_ERROR)
    except Exception as e:
        click.echo(f"Error: {e}", err=True)
        if verbose:
            import traceback
            traceback.print_exc()
        sys.exit(EXIT_ERROR)

    sys.exit(status)


@click.group()
@click.option("--verbose", "-v", is_flag=True, help="Enable debug logging")
@click.version_option(version=__version__, prog_name="attnmerge")
@click.pass_context
def main(ctx: click.Context, verbose: bool) -> None:
    """
    attnmerge - granular attention, attention-map merging and the
    segmentation network built on them.

    Every command writes CSV/JSON reports to the output directory, prints a
    summary, and exits 0 when all checks pass, 2 when a check fails and 1 on
    an error.
    """
    ctx.ensure_object(dict)
    ctx.obj["verbose"] = verbose
    _configure_logging(verbose)


@main.command()
@run_options
@click.option("--corrupt-mask", is_flag=True, hidden=True, help="Flip one mask entry (test hook)")
@click.pass_context
def oracle(ctx: click.Context, corrupt_mask: bool, **options: Any) -> None:
    """Check granular attention, merging and DCM against brute-force oracles."""
    _run(ctx, "oracle", corrupt_mask=corrupt_mask, **options)


@main.command()
@run_options
@click.pass_context
def gradcheck(ctx: click.Context, **options: Any) -> None:
    """Compare end-to-end gradients with central finite differences."""
    _run(ctx, "gradcheck", **options)


@main.command()
@run_options
@click.pass_context
def bench(ctx: click.Context, **options: Any) -> None:
    """Complexity sweep, parameter/MAC counts and throughput."""
    _run(ctx, "bench", **options)


@main.command()
@run_options
@click.pass_context
def smoketrain(ctx: click.Context, **options: Any) -> None:
    """Overfit one synthetic batch and record the loss curve."""
    _run(ctx, "smoketrain", **options)


@main.command()
@click.argument("pred", type=click.Path(exists=True, dir_okay=False))
@click.argument("truth", type=click.Path(exists=True, dir_okay=False))
@click.option("--classes", required=True, type=click.IntRange(min=2), help="Number of classes")
@run_options
@click.pass_context
def metrics(ctx: click.Context, pred: str, truth: str, classes: int, **options: Any) -> None:
    """Score a predicted label fixture PRED against TRUTH."""
    _run(ctx, "metrics", pred_path=pred, truth_path=truth, classes=classes, **options)


if __name__ == "__main__":
    main()
