"""Progressive render loop, convergence log and stats sidecar."""

from __future__ import annotations

import csv
import io
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ConfigurationError, ImageIOError, InternalInvariantError
from .film import Film
from .images import rmse
from .models import ConvergenceRow, IntegratorConfig, RenderStats
from .photons import build_photon_structure
from .renderer import LightTrace, RenderContext, camera_pass, light_pass, merge_radius
from .scene import Scene

logger = logging.getLogger(__name__)

LOG_CSV_HEADER = ["iteration", "seconds", "rmse"]


@dataclass
class RenderResult:
    film: Film
    log: list[ConvergenceRow] = field(default_factory=list)
    stats: Optional[RenderStats] = None


class _StatsCollector:
    def __init__(self, config: IntegratorConfig) -> None:
        self.config = config
        self.paths = 0
        self.length = 0
        self.branch_events = 0
        self.branch_total = 0
        self.rejected = 0
        self.dropped = 0
        self.max_charged = 0

    def add_traces(self, traces: list[LightTrace]) -> None:
        for trace in traces:
            if self.config.integrator == "gmis" and trace.charged > self.config.max_samples:
                raise InternalInvariantError(
                    f"light path charged {trace.charged} samples, budget {self.config.max_samples}"
                )
            self.paths += 1
            self.length += trace.length
            self.branch_events += len(trace.branches)
            self.branch_total += sum(trace.branches)
            self.dropped += trace.dropped
            self.max_charged = max(self.max_charged, trace.charged)

    def finish(self, iterations: int, radius: float) -> RenderStats:
        return RenderStats(
            integrator=self.config.integrator,
            iterations=iterations,
            light_paths=self.paths,
            rejected_samples=self.rejected,
            dropped_degenerate=self.dropped,
            average_path_length=self.length / self.paths if self.paths else 0.0,
            average_branch_factor=(
                self.branch_total / self.branch_events if self.branch_events else 1.0
            ),
            max_charged_samples=self.max_charged,
            final_radius=radius,
        )


def render_iteration(
    scene: Scene, film: Film, config: IntegratorConfig, iteration: int
) -> tuple[RenderContext, list[LightTrace], int]:
    """Light pass, photon structure, camera pass; folds the frame into ``film``.

    Returns the iteration's context, its light traces and its rejected-sample count.
    """

    camera = scene.camera.for_film(film.width, film.height)
    ctx = RenderContext(scene, camera, config, merge_radius(config, scene, iteration))
    traces = light_pass(ctx, iteration)
    store = None
    if ctx.use_vm:
        store = build_photon_structure([v for t in traces for v in t.vertices], ctx.radius)
    frame, rejected = camera_pass(ctx, traces, store, iteration)
    film.add_iteration(frame)
    return ctx, traces, rejected


def render_progressive(
    scene: Scene,
    config: IntegratorConfig,
    *,
    width: int,
    height: int,
    iterations: Optional[int] = None,
    seconds: Optional[float] = None,
    reference: Optional[np.ndarray] = None,
    log_rmse: bool = False,
) -> RenderResult:
    """Render until ``iterations`` are done or ``seconds`` have elapsed.

    At least one iteration always runs. The film depends only on the seed, the
    config, the scene and the number of iterations performed; the ``seconds``
    column of the log is wall-clock time.
    """

    if iterations is None and seconds is None:
        raise ConfigurationError("a stop condition (iterations or seconds) is required")
    if iterations is not None and iterations < 1:
        raise ConfigurationError(f"iterations must be >= 1, got {iterations}")
    if seconds is not None and seconds <= 0:
        raise ConfigurationError(f"seconds must be positive, got {seconds}")
    if log_rmse and reference is None:
        raise ConfigurationError("RMSE logging requires a reference image")
    film = Film(width, height)
    if reference is not None and reference.shape != film.mean.shape:
        raise ConfigurationError(
            f"reference shape {reference.shape} does not match film {film.mean.shape}"
        )
    collector = _StatsCollector(config)
    result = RenderResult(film)
    radius = 0.0
    start = time.perf_counter()
    i = 0
    while True:
        ctx, traces, rejected = render_iteration(scene, film, config, i)
        collector.add_traces(traces)
        collector.rejected += rejected
        radius = ctx.radius
        elapsed = time.perf_counter() - start
        error = rmse(film.image(), reference) if reference is not None else None
        result.log.append(ConvergenceRow(iteration=i + 1, seconds=elapsed, rmse=error))
        logger.debug(
            "iteration %d: %.3fs radius=%.4g eta=%.4g rejected=%d",
            i + 1,
            elapsed,
            ctx.radius,
            ctx.eta,
            rejected,
        )
        i += 1
        if iterations is not None and i >= iterations:
            break
        if seconds is not None and elapsed >= seconds:
            break
    result.stats = collector.finish(i, radius)
    logger.info(
        "%s: %d iterations in %.2fs, %d rejected, branch factor %.2f",
        config.integrator,
        i,
        time.perf_counter() - start,
        result.stats.rejected_samples,
        result.stats.average_branch_factor,
    )
    return result


def convergence_csv(rows: list[ConvergenceRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(LOG_CSV_HEADER)
    for row in rows:
        writer.writerow(
            [row.iteration, repr(row.seconds), "" if row.rmse is None else repr(row.rmse)]
        )
    return buf.getvalue()


def _write_text(path: str | Path, text: str) -> Path:
    path = Path(path)
    try:
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise ImageIOError(f"cannot write {path}: {exc}") from exc
    return path


def write_convergence_log(rows: list[ConvergenceRow], path: str | Path) -> Path:
    return _write_text(path, convergence_csv(rows))


def write_stats(stats: RenderStats, path: str | Path) -> Path:
    return _write_text(path, stats.model_dump_json(indent=2) + "\n")
