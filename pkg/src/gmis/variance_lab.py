"""Reproducible variance and uniformity experiments over the six MIS schemes."""

from __future__ import annotations

import csv
import io
import logging
import math
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.stats import chi2

from .errors import ImageIOError, ParameterError
from .mis_core import (
    Mixture,
    MisScheme,
    Normal,
    ProposalSet,
    SelectionStrategy,
    StrategyLike,
    Target,
    Uniform,
    analytic_variance,
    sample_variance_stderr,
    select_indices,
    summarize,
    trial_estimates,
    variance_integrals,
)
from .models import (
    DensitySpec,
    LabConfig,
    LabReport,
    LabRow,
    OrderingVerdict,
    RowCheck,
    UniformityReport,
)
from .params import build_model, directives, require_count
from .rng import substream

logger = logging.getLogger(__name__)

LAB_CSV_HEADER = [
    "scheme",
    "analytic_var",
    "empirical_var",
    "empirical_mean",
    "stderr",
    "trials",
    "seed",
]
UNIFORMITY_CSV_HEADER = ["index", "slot", "frequency"]

ANALYTIC_TOLERANCE = 1e-8
EMPIRICAL_SIGMAS = 3.0
ROW_SIGMAS = 4.0
MIN_UNIFORMITY_CYCLES = 1_000

# (left, relation, right, gated)
OUTER_CHAIN = [("R1", "=", "N1", True), ("N1", ">=", "R3", True), ("R3", ">=", "N3", True)]
INNER_CHAIN = [
    ("R1", "=", "N1", True),
    ("N1", ">=", "R2", True),
    ("R1", ">=", "N2", True),
    # the N2 analytic value is the martingale variance (sum of per-slot conditional
    # variances), not a closed form that must match R2, so this relation is informational
    ("R2", "=", "N2", False),
    ("R2", ">=", "N3", True),
    ("N2", ">=", "N3", True),
]


# ---------------------------------------------------------------------------
# Config files
# ---------------------------------------------------------------------------


def _floats(tokens: list[str], lineno: int) -> list[float]:
    try:
        return [float(t) for t in tokens]
    except ValueError as exc:
        text = " ".join(tokens)
        raise ParameterError(f"expected numbers, got {text!r} at line {lineno}") from exc


def parse_lab_config(text: str) -> LabConfig:
    """Parse the line-oriented lab grammar into a validated LabConfig."""

    fields: dict[str, object] = {}
    proposals: list[DensitySpec] = []
    for lineno, tokens, _ in directives(text):
        head, rest = tokens[0], tokens[1:]
        if head in ("target", "proposal"):
            if not rest:
                raise ParameterError(f"{head} needs a family at line {lineno}")
            spec = build_model(DensitySpec, family=rest[0], params=_floats(rest[1:], lineno))
            if head == "target":
                fields["target"] = spec
            else:
                proposals.append(spec)
        elif head == "domain":
            if len(rest) != 2:
                raise ParameterError(f"domain takes LO HI at line {lineno}")
            lo, hi = _floats(rest, lineno)
            fields["domain"] = (lo, hi)
        elif head == "schemes":
            fields["schemes"] = rest
        elif head in ("trials", "samples", "seed"):
            if len(rest) != 1 or not rest[0].isdigit():
                raise ParameterError(f"{head} takes one non-negative integer at line {lineno}")
            fields[head] = int(rest[0])
        else:
            raise ParameterError(f"unknown directive {head!r} at line {lineno}")
    if "target" not in fields:
        raise ParameterError("lab config has no target")
    fields["proposals"] = proposals
    return build_model(LabConfig, **fields)


def load_lab_config(path: str | Path) -> LabConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ImageIOError(f"cannot read lab config {path}: {exc}") from exc
    return parse_lab_config(text)


def bundled_lab_config(name: str) -> LabConfig:
    """A config shipped in ``gmis/fixtures``: ``canonical``, ``identical`` or ``bimodal``."""

    filename = name if name.endswith(".lab") else f"{name}.lab"
    ref = resources.files("gmis") / "fixtures" / filename
    if not ref.is_file():
        raise ParameterError(f"no bundled lab config named {name!r}")
    return parse_lab_config(ref.read_text(encoding="utf-8"))


def build_target(spec: DensitySpec) -> Target:
    if spec.family == "normal":
        return Normal(*spec.params)
    if spec.family == "uniform":
        return Uniform(*spec.params)
    triples = [spec.params[i : i + 3] for i in range(0, len(spec.params), 3)]
    return Mixture(tuple(t[0] for t in triples), tuple(Normal(t[1], t[2]) for t in triples))


def build_proposals(config: LabConfig) -> ProposalSet:
    members = [
        Normal(*p.params) if p.family == "normal" else Uniform(*p.params) for p in config.proposals
    ]
    return ProposalSet(members, config.domain)


# ---------------------------------------------------------------------------
# Ordering experiment
# ---------------------------------------------------------------------------


def _verdicts(
    relations: list[tuple[str, str, str, bool]], rows: dict[str, LabRow]
) -> list[OrderingVerdict]:
    out: list[OrderingVerdict] = []
    for left, rel, right, gated in relations:
        if left not in rows or right not in rows:
            continue
        a, b = rows[left], rows[right]
        scale = max(1.0, abs(a.analytic_var), abs(b.analytic_var))
        tol = ANALYTIC_TOLERANCE * scale
        combined = EMPIRICAL_SIGMAS * math.hypot(a.var_stderr, b.var_stderr)
        if rel == "=":
            analytic_margin = tol - abs(a.analytic_var - b.analytic_var)
            empirical_margin = combined - abs(a.empirical_var - b.empirical_var)
        else:
            analytic_margin = (a.analytic_var - b.analytic_var) + tol
            empirical_margin = (a.empirical_var - b.empirical_var) + combined
        out.append(
            OrderingVerdict(
                relation=f"{left} {rel} {right}",
                passed=analytic_margin >= 0 and empirical_margin >= 0,
                analytic_margin=analytic_margin,
                empirical_margin=empirical_margin,
                gated=gated,
            )
        )
    return out


def _sigmas(gap: float, stderr: float) -> float:
    if stderr > 0:
        return gap / stderr
    return 0.0 if gap <= ANALYTIC_TOLERANCE else float("inf")


def row_checks(rows: list[LabRow], integral: float) -> list[RowCheck]:
    """Each row's empirical variance against its analytic one, its mean against the integral.

    A check fails when the gap exceeds ``ROW_SIGMAS`` standard errors.
    """

    out: list[RowCheck] = []
    for row in rows:
        variance = _sigmas(abs(row.empirical_var - row.analytic_var), row.var_stderr)
        mean = _sigmas(abs(row.empirical_mean - integral), row.stderr)
        out.append(
            RowCheck(
                scheme=row.scheme,
                quantity="variance",
                gap_sigmas=variance,
                passed=variance <= ROW_SIGMAS,
            )
        )
        out.append(
            RowCheck(scheme=row.scheme, quantity="mean", gap_sigmas=mean, passed=mean <= ROW_SIGMAS)
        )
    return out


def run_ordering_experiment(config: LabConfig, *, workers: int = 1) -> LabReport:
    """Run every configured scheme and check the two variance orderings.

    Each scheme's trials come from their own substreams of ``config.seed``, so the
    report is identical for any ``workers``.
    """

    target = build_target(config.target)
    proposals = build_proposals(config)
    m = config.samples_per_run
    cache = variance_integrals(target, proposals)
    rows: dict[str, LabRow] = {}
    for tag in config.schemes:
        scheme = MisScheme.canonical(tag)
        estimates = trial_estimates(
            scheme, target, proposals, m, config.trials, config.seed, workers=workers
        )
        summary = summarize(estimates)
        row = LabRow(
            scheme=tag,
            analytic_var=analytic_variance(scheme, target, proposals, m, integrals=cache),
            empirical_var=summary.sample_variance,
            empirical_mean=summary.sample_mean,
            stderr=summary.standard_error,
            trials=summary.trials,
            seed=config.seed,
            var_stderr=sample_variance_stderr(estimates),
        )
        logger.info(
            "%s analytic=%.6g empirical=%.6g mean=%.6g (gap %.2f se)",
            tag,
            row.analytic_var,
            row.empirical_var,
            row.empirical_mean,
            row.variance_gap,
        )
        rows[tag] = row
    report = LabReport(
        integral=cache.integral,
        rows=list(rows.values()),
        outer_chain=_verdicts(OUTER_CHAIN, rows),
        inner_chain=_verdicts(INNER_CHAIN, rows),
        row_checks=row_checks(list(rows.values()), cache.integral),
    )
    for v in report.outer_chain + report.inner_chain:
        if v.gated and not v.passed:
            logger.warning(
                "ordering %s failed (analytic %.3g, empirical %.3g)",
                v.relation,
                v.analytic_margin,
                v.empirical_margin,
            )
    for c in report.row_checks:
        if not c.passed:
            logger.warning("%s %s is %.2f se off", c.scheme, c.quantity, c.gap_sigmas)
    return report


def report_csv(report: LabReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(LAB_CSV_HEADER)
    for row in report.rows:
        values = row.model_dump()
        writer.writerow(
            [repr(v) if isinstance(v, float) else v for v in (values[k] for k in LAB_CSV_HEADER)]
        )
    return buf.getvalue()


def write_report_csv(report: LabReport, path: str | Path) -> Path:
    path = Path(path)
    try:
        path.write_text(report_csv(report), encoding="utf-8")
    except OSError as exc:
        raise ImageIOError(f"cannot write {path}: {exc}") from exc
    return path


# ---------------------------------------------------------------------------
# Uniformity
# ---------------------------------------------------------------------------


def run_uniformity_test(
    strategy: StrategyLike, N: int, cycles: int, seed: int
) -> UniformityReport:
    """Per-index selection frequencies over ``cycles`` cycles of N indices.

    S1 is tested on every draw, S2 on the first slot of each cycle (the full cycle
    is a permutation, so its totals are exact) and S3 is exact by construction.
    """

    strategy = SelectionStrategy(strategy)
    require_count("N", N)
    require_count("cycles", cycles, minimum=MIN_UNIFORMITY_CYCLES)
    idx = select_indices(strategy, N, N * cycles, substream(seed, 0)).reshape(cycles, N)
    counts = np.bincount(idx.ravel() - 1, minlength=N)
    frequencies = (counts / idx.size).tolist()
    slots = [
        (np.bincount(idx[:, s] - 1, minlength=N) / cycles).tolist() for s in range(N)
    ]
    if strategy is SelectionStrategy.S3 or N == 1:
        stat, p_value = 0.0, 1.0
    else:
        observed = counts if strategy is SelectionStrategy.S1 else np.bincount(
            idx[:, 0] - 1, minlength=N
        )
        expected = observed.sum() / N
        stat = float(((observed - expected) ** 2 / expected).sum())
        p_value = float(chi2.sf(stat, N - 1))
    return UniformityReport(
        strategy=strategy.value,
        n=N,
        cycles=cycles,
        frequencies=frequencies,
        slot_frequencies=slots,
        chi_square=stat,
        p_value=p_value,
    )


def uniformity_csv(report: UniformityReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(UNIFORMITY_CSV_HEADER)
    for slot, freqs in enumerate(report.slot_frequencies, start=1):
        for index, f in enumerate(freqs, start=1):
            writer.writerow([index, slot, repr(float(f))])
    return buf.getvalue()
