from __future__ import annotations

from pathlib import Path
from typing import Optional

import typer
from rich.console import Console
from rich.table import Table

from .errors import (
    ConfigurationError,
    GMISError,
    ImageIOError,
    ParameterError,
    SceneParseError,
)
from .images import read_pfm, rmse, write_image
from .logs import configure_logging
from .models import IntegratorConfig
from .params import build_model, thread_count
from .progressive import render_progressive, write_convergence_log, write_stats
from .scene import FIXTURE_SCENES, fixture_text, load_scene
from .variance_lab import (
    load_lab_config,
    run_ordering_experiment,
    run_uniformity_test,
    uniformity_csv,
    write_report_csv,
)

EXIT_PARAMETER = 2
EXIT_SCENE = 3
EXIT_IO = 4
EXIT_VERDICT = 5

app = typer.Typer(help="Generalized multiple importance sampling: lab and renderer")
console = Console()
err_console = Console(stderr=True)


def _exit_code(exc: GMISError) -> int:
    # ImageShapeError is both an I/O and a parameter error; shape mismatches exit 2
    if isinstance(exc, (ParameterError, ConfigurationError)):
        return EXIT_PARAMETER
    if isinstance(exc, SceneParseError):
        return EXIT_SCENE
    if isinstance(exc, ImageIOError):
        return EXIT_IO
    return EXIT_PARAMETER


def _fail(exc: GMISError) -> typer.Exit:
    err_console.print(f"error: {exc}", markup=False, highlight=False)
    return typer.Exit(_exit_code(exc))


@app.callback()
def main(
    log_level: Optional[str] = typer.Option(None, help="Log level (default: GMIS_LOG_LEVEL)"),
):
    configure_logging(log_level)


@app.command()
def render(
    scene: Path = typer.Option(..., help="Scene file"),
    integrator: str = typer.Option(..., help="bpt, ppm, vcm or gmis"),
    out: Path = typer.Option(..., help="Output image (.pfm, or .png for PNG plus PFM)"),
    iterations: Optional[int] = typer.Option(None, help="Number of iterations"),
    seconds: Optional[float] = typer.Option(None, help="Wall-clock budget in seconds"),
    width: int = typer.Option(512, help="Film width"),
    height: int = typer.Option(512, help="Film height"),
    reference: Optional[Path] = typer.Option(None, help="Reference PFM for the RMSE column"),
    log: Optional[Path] = typer.Option(None, help="Convergence log CSV"),
    log_rmse: bool = typer.Option(False, help="Require an RMSE column in the log"),
    stats: Optional[Path] = typer.Option(None, help="Render stats JSON"),
    seed: int = typer.Option(0, help="Random seed"),
    max_samples: int = typer.Option(20, help="GMIS sample budget per light path"),
    branch: int = typer.Option(4, help="GMIS samples per non-specular vertex"),
    max_depth: int = typer.Option(12, help="Maximum path depth"),
    threads: Optional[int] = typer.Option(None, help="Worker threads (default: GMIS_THREADS)"),
):
    """Render a scene progressively."""

    try:
        config = build_model(
            IntegratorConfig,
            integrator=integrator,
            max_samples=max_samples,
            branch=branch,
            max_depth=max_depth,
            seed=seed,
            threads=threads or thread_count(),
        )
        loaded = load_scene(scene)
        ref = read_pfm(reference) if reference is not None else None
        result = render_progressive(
            loaded,
            config,
            width=width,
            height=height,
            iterations=iterations,
            seconds=seconds,
            reference=ref,
            log_rmse=log_rmse,
        )
        write_image(out, result.film.image())
        if log is not None:
            write_convergence_log(result.log, log)
        if stats is not None and result.stats is not None:
            write_stats(result.stats, stats)
    except GMISError as exc:
        raise _fail(exc) from exc


@app.command("rmse")
def rmse_command(
    image_a: Path = typer.Argument(..., help="First PFM image"),
    image_b: Path = typer.Argument(..., help="Second PFM image"),
):
    """Root mean squared difference of two PFM images."""

    try:
        value = rmse(read_pfm(image_a), read_pfm(image_b))
    except GMISError as exc:
        raise _fail(exc) from exc
    typer.echo(f"{value:.6f}")


@app.command()
def lab(
    config: Path = typer.Option(..., help="Lab config file"),
    out: Path = typer.Option(..., help="Report CSV"),
    seed: Optional[int] = typer.Option(None, help="Override the config's seed"),
    trials: Optional[int] = typer.Option(None, help="Override the config's trial count"),
    workers: int = typer.Option(1, help="Worker threads for the trial loop"),
):
    """Run the variance-ordering experiment; exit 5 when an ordering or a row check fails."""

    try:
        lab_config = load_lab_config(config)
        overrides = {
            k: v for k, v in (("seed", seed), ("trials", trials)) if v is not None
        }
        if overrides:
            lab_config = build_model(
                type(lab_config), **{**lab_config.model_dump(), **overrides}
            )
        report = run_ordering_experiment(lab_config, workers=workers)
        write_report_csv(report, out)
    except GMISError as exc:
        raise _fail(exc) from exc

    table = Table(title=f"integral = {report.integral:.6g}")
    for column in ("scheme", "analytic", "empirical", "mean", "stderr"):
        table.add_column(column, justify="right")
    for row in report.rows:
        table.add_row(
            row.scheme,
            f"{row.analytic_var:.6g}",
            f"{row.empirical_var:.6g}",
            f"{row.empirical_mean:.6g}",
            f"{row.stderr:.3g}",
        )
    console.print(table)
    for verdict in report.outer_chain + report.inner_chain:
        mark = "ok" if verdict.passed else "FAIL"
        if not verdict.gated:
            mark += " (informational)"
        console.print(f"{verdict.relation}: {mark}", markup=False)
    for check in report.row_checks:
        if not check.passed:
            console.print(
                f"{check.scheme} {check.quantity}: FAIL ({check.gap_sigmas:.2f} se)",
                markup=False,
            )
    if not report.passed:
        raise typer.Exit(EXIT_VERDICT)


@app.command()
def uniformity(
    strategy: str = typer.Option("S2", help="S1, S2 or S3"),
    n: int = typer.Option(3, help="Number of proposals N"),
    cycles: int = typer.Option(100_000, help="Number of selection cycles"),
    seed: int = typer.Option(0, help="Random seed"),
    out: Optional[Path] = typer.Option(None, help="CSV of index,slot,frequency"),
):
    """Selection frequencies of one strategy."""

    if strategy not in ("S1", "S2", "S3"):
        raise _fail(ParameterError(f"unknown strategy {strategy!r}"))
    try:
        report = run_uniformity_test(strategy, n, cycles, seed)
        if out is not None:
            try:
                out.write_text(uniformity_csv(report), encoding="utf-8")
            except OSError as exc:
                raise ImageIOError(f"cannot write {out}: {exc}") from exc
    except GMISError as exc:
        raise _fail(exc) from exc

    table = Table(title=f"{report.strategy}, N = {report.n}, {report.cycles} cycles")
    table.add_column("index", justify="right")
    table.add_column("frequency", justify="right")
    for i, f in enumerate(report.frequencies, start=1):
        table.add_row(str(i), f"{f:.6f}")
    console.print(table)
    console.print(f"chi-square {report.chi_square:.4g}, p = {report.p_value:.4g}", markup=False)


@app.command()
def fixtures(
    export: Optional[Path] = typer.Option(None, help="Directory to copy the scenes into"),
):
    """List the bundled scenes, optionally exporting them."""

    for name in FIXTURE_SCENES:
        if export is not None:
            try:
                export.mkdir(parents=True, exist_ok=True)
                (export / f"{name}.scn").write_text(fixture_text(name), encoding="utf-8")
            except OSError as exc:
                raise _fail(ImageIOError(f"cannot write to {export}: {exc}")) from exc
        typer.echo(name)


if __name__ == "__main__":  # pragma: no cover
    app()
