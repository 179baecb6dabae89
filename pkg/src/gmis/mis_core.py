"""Generalized multiple importance sampling over low-dimensional targets.

A run draws ``M = kN`` samples from a set of ``N`` proposal densities. Each sample
gets a proposal index from a selection strategy and is weighted by the target
divided by a denominator chosen by a weighting function. The fifteen
(strategy, weighting) cells collapse onto six distinct estimators, R1-R3 (with
replacement) and N1-N3 (without replacement).

Indices are 1-based in every public value (``select_indices``, ``MisSample``) and
0-based internally.
"""

from __future__ import annotations

import itertools
import logging
import math
import warnings
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Protocol, Union

import numpy as np
from numpy.random import Generator
from scipy import integrate
from scipy.special import ndtri

from .errors import (
    CapabilityError,
    DivergenceError,
    DomainError,
    EstimatorValidityError,
    ParameterError,
)
from .models import ALL_SCHEMES, EstimatorReport
from .params import require_count, require_cycles
from .rng import substream

logger = logging.getLogger(__name__)

Target = Callable[[np.ndarray], np.ndarray]
Interval = tuple[float, float]
Box = tuple[Interval, Interval]

_SQRT_2PI = math.sqrt(2.0 * math.pi)
NORMALIZATION_TOLERANCE = 1e-6
MAX_ENUMERATED_N = 6
TRIAL_CHUNK = 1024


class Density(Protocol):
    dim: int

    def pdf(self, x: np.ndarray) -> np.ndarray: ...

    def sample(self, u: np.ndarray) -> np.ndarray: ...

    def support(self) -> tuple[np.ndarray, np.ndarray]: ...

    def breakpoints(self) -> list[np.ndarray]: ...


# ---------------------------------------------------------------------------
# Built-in families
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class Normal:
    mu: float
    sigma: float
    dim: int = field(default=1, init=False)

    def __post_init__(self) -> None:
        if not self.sigma > 0 or not math.isfinite(self.mu):
            raise ParameterError(
                f"Normal needs finite mu and sigma > 0, got ({self.mu}, {self.sigma})"
            )

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.pdf(x)

    def pdf(self, x: np.ndarray) -> np.ndarray:
        z = (np.asarray(x, dtype=float) - self.mu) / self.sigma
        return np.exp(-0.5 * z * z) / (self.sigma * _SQRT_2PI)

    def sample(self, u: np.ndarray) -> np.ndarray:
        # u == 0 would map to -inf
        return self.mu + self.sigma * ndtri(np.maximum(u, np.finfo(float).tiny))

    def support(self) -> tuple[np.ndarray, np.ndarray]:
        return np.array([-np.inf]), np.array([np.inf])

    def breakpoints(self) -> list[np.ndarray]:
        return [np.array([self.mu - self.sigma, self.mu, self.mu + self.sigma])]


@dataclass(frozen=True, slots=True)
class Uniform:
    a: float
    b: float
    dim: int = field(default=1, init=False)

    def __post_init__(self) -> None:
        if not (math.isfinite(self.a) and math.isfinite(self.b) and self.a < self.b):
            raise ParameterError(f"Uniform needs finite a < b, got ({self.a}, {self.b})")

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.pdf(x)

    def pdf(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        inside = (x >= self.a) & (x <= self.b)
        return np.where(inside, 1.0 / (self.b - self.a), 0.0)

    def sample(self, u: np.ndarray) -> np.ndarray:
        return self.a + (self.b - self.a) * np.asarray(u, dtype=float)

    def support(self) -> tuple[np.ndarray, np.ndarray]:
        return np.array([self.a]), np.array([self.b])

    def breakpoints(self) -> list[np.ndarray]:
        return [np.array([self.a, self.b])]


@dataclass(frozen=True, slots=True)
class _Product2D:
    """Axis-aligned product of two 1D densities; points have a trailing axis of 2."""

    first: Normal | Uniform
    second: Normal | Uniform
    dim: int = field(default=2, init=False)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.pdf(x)

    def pdf(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.first.pdf(x[..., 0]) * self.second.pdf(x[..., 1])

    def sample(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        return np.stack([self.first.sample(u[..., 0]), self.second.sample(u[..., 1])], axis=-1)

    def support(self) -> tuple[np.ndarray, np.ndarray]:
        (lo0,), (hi0,) = self.first.support()
        (lo1,), (hi1,) = self.second.support()
        return np.array([lo0, lo1]), np.array([hi0, hi1])

    def breakpoints(self) -> list[np.ndarray]:
        return self.first.breakpoints() + self.second.breakpoints()


def Normal2D(mu: Sequence[float], sigma: Sequence[float]) -> _Product2D:
    return _Product2D(Normal(mu[0], sigma[0]), Normal(mu[1], sigma[1]))


def Uniform2D(lo: Sequence[float], hi: Sequence[float]) -> _Product2D:
    return _Product2D(Uniform(lo[0], hi[0]), Uniform(lo[1], hi[1]))


@dataclass(frozen=True, slots=True)
class Mixture:
    """Weighted sum of 1D normals; an unnormalized target with ``Z = sum(weights)``."""

    weights: tuple[float, ...]
    components: tuple[Normal, ...]
    dim: int = field(default=1, init=False)

    def __post_init__(self) -> None:
        if len(self.weights) != len(self.components) or not self.weights:
            raise ParameterError("Mixture needs one weight per component")
        if any(w < 0 for w in self.weights):
            raise ParameterError("Mixture weights must be non-negative")

    @property
    def normalizer(self) -> float:
        return math.fsum(self.weights)

    def pdf(self, x: np.ndarray) -> np.ndarray:
        out = np.zeros_like(np.asarray(x, dtype=float))
        for w, c in zip(self.weights, self.components):
            out = out + w * c.pdf(x)
        return out

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.pdf(x)

    def breakpoints(self) -> list[np.ndarray]:
        return [np.concatenate([c.breakpoints()[0] for c in self.components])]


# ---------------------------------------------------------------------------
# Proposal sets
# ---------------------------------------------------------------------------


class ProposalSet:
    """Ordered proposals ``q_1..q_N`` over a common interval or box."""

    def __init__(
        self,
        proposals: Sequence[Density],
        domain: Interval | Box | None = None,
        *,
        check_normalization: bool = True,
    ) -> None:
        if len(proposals) < 1:
            raise ParameterError("a proposal set needs at least one density")
        dims = {p.dim for p in proposals}
        if len(dims) != 1:
            raise ParameterError(f"proposals mix dimensions {sorted(dims)}")
        self.proposals: tuple[Density, ...] = tuple(proposals)
        self.dim: int = dims.pop()
        self.lo, self.hi = self._resolve_domain(domain)
        if check_normalization:
            self._check_normalization()

    def __len__(self) -> int:
        return len(self.proposals)

    def __repr__(self) -> str:
        lo, hi = self.lo.tolist(), self.hi.tolist()
        return f"ProposalSet({list(self.proposals)!r}, lo={lo}, hi={hi})"

    @property
    def n(self) -> int:
        return len(self.proposals)

    @property
    def domain(self) -> Interval | Box:
        if self.dim == 1:
            return (float(self.lo[0]), float(self.hi[0]))
        box = tuple((float(a), float(b)) for a, b in zip(self.lo, self.hi))
        return box  # type: ignore[return-value]

    def _resolve_domain(self, domain: Interval | Box | None) -> tuple[np.ndarray, np.ndarray]:
        if domain is not None:
            arr = np.asarray(domain, dtype=float).reshape(self.dim, 2)
            lo, hi = arr[:, 0], arr[:, 1]
            if not np.all(np.isfinite(arr)) or np.any(lo >= hi):
                raise ParameterError(f"invalid domain {domain!r}")
            return lo, hi
        lows, highs = [], []
        for p in self.proposals:
            lo, hi = p.support()
            pts = p.breakpoints()
            # normal breakpoints are mu +- sigma; mu +- 13 sigma leaves < 1e-38 outside
            lows.append([lo[a] if np.isfinite(lo[a]) else 7 * pts[a][0] - 6 * pts[a][-1]
                         for a in range(self.dim)])
            highs.append([hi[a] if np.isfinite(hi[a]) else 7 * pts[a][-1] - 6 * pts[a][0]
                          for a in range(self.dim)])
        return np.min(np.asarray(lows), axis=0), np.max(np.asarray(highs), axis=0)

    def _check_normalization(self) -> None:
        quad = Quadrature(self)
        for i, p in enumerate(self.proposals):
            mass = quad.integrate(p.pdf)
            if abs(mass - 1.0) > NORMALIZATION_TOLERANCE:
                raise ParameterError(
                    f"proposal {i + 1} integrates to {mass:.9f} over the domain, not 1"
                )

    def contains(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.dim == 1:
            return (x >= self.lo[0]) & (x <= self.hi[0])
        return np.all((x >= self.lo) & (x <= self.hi), axis=-1)

    def evaluate_all(self, x: np.ndarray) -> np.ndarray:
        """``q_k(x)`` for every proposal, stacked on a new last axis."""

        return np.stack([p.pdf(x) for p in self.proposals], axis=-1)

    def mixture(self, x: np.ndarray) -> np.ndarray:
        """The equal-weight mixture ``psi``, composed from member evaluations."""

        return self.evaluate_all(x).sum(axis=-1) / self.n

    def sample_indexed(self, index: np.ndarray, u: np.ndarray) -> np.ndarray:
        """Sample ``x`` from ``q_index`` (0-based) for every entry of ``index``."""

        shape = index.shape + ((self.dim,) if self.dim > 1 else ())
        x = np.empty(shape, dtype=float)
        for k, p in enumerate(self.proposals):
            mask = index == k
            if mask.any():
                x[mask] = p.sample(u[mask])
        return x

    def breakpoints(self) -> list[np.ndarray]:
        per_axis: list[list[np.ndarray]] = [[] for _ in range(self.dim)]
        for p in self.proposals:
            for axis, pts in enumerate(p.breakpoints()):
                per_axis[axis].append(pts)
        return [np.unique(np.concatenate(pts)) for pts in per_axis]


def mixture_pdf(proposals: ProposalSet, x: float | np.ndarray) -> float | np.ndarray:
    """``psi(x) = (1/N) * sum_n q_n(x)``; raises DomainError outside the domain."""

    arr = np.asarray(x, dtype=float)
    if not np.all(proposals.contains(arr)):
        raise DomainError(f"point {x!r} lies outside the proposal domain", point=x)
    out = proposals.mixture(arr)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# Strategies, weightings and schemes
# ---------------------------------------------------------------------------


class SelectionStrategy(str, Enum):
    S1 = "S1"  # random, with replacement
    S2 = "S2"  # random, without replacement (one permutation per cycle)
    S3 = "S3"  # deterministic cycle 1..N


class WeightingFunction(str, Enum):
    W1 = "W1"  # conditional density given the earlier indices
    W2 = "W2"  # the selected proposal q_{j_n}
    W3 = "W3"  # marginal density of x_n
    W4 = "W4"  # mixture over the realized index multiset
    W5 = "W5"  # the full mixture psi


StrategyLike = Union[SelectionStrategy, str]
WeightingLike = Union[WeightingFunction, str]

S1, S2, S3 = SelectionStrategy.S1, SelectionStrategy.S2, SelectionStrategy.S3
W1, W2, W3, W4, W5 = (
    WeightingFunction.W1,
    WeightingFunction.W2,
    WeightingFunction.W3,
    WeightingFunction.W4,
    WeightingFunction.W5,
)

SCHEME_TABLE: dict[tuple[SelectionStrategy, WeightingFunction], str] = {
    (S1, W1): "R3",
    (S1, W2): "R1",
    (S1, W3): "R3",
    (S1, W4): "R2",
    (S1, W5): "R3",
    (S2, W1): "N2",
    (S2, W2): "N1",
    (S2, W3): "N3",
    (S2, W4): "N3",
    (S2, W5): "N3",
    (S3, W1): "N1",
    (S3, W2): "N1",
    (S3, W3): "N1",
    (S3, W4): "N3",
    (S3, W5): "N3",
}

CANONICAL_PAIRS: dict[str, tuple[SelectionStrategy, WeightingFunction]] = {
    "R1": (S1, W2),
    "R2": (S1, W4),
    "R3": (S1, W5),
    "N1": (S3, W2),
    "N2": (S2, W1),
    "N3": (S2, W5),
}


@dataclass(frozen=True, slots=True)
class MisScheme:
    tag: str
    selection: SelectionStrategy
    weighting: WeightingFunction

    def __post_init__(self) -> None:
        try:
            selection = SelectionStrategy(self.selection)
            weighting = WeightingFunction(self.weighting)
        except ValueError as exc:
            raise ParameterError(str(exc)) from exc
        object.__setattr__(self, "selection", selection)
        object.__setattr__(self, "weighting", weighting)
        expected = SCHEME_TABLE[(selection, weighting)]
        if expected != self.tag:
            raise ParameterError(
                f"({selection.value}, {weighting.value}) realizes {expected}, not {self.tag}"
            )

    @classmethod
    def canonical(cls, tag: str) -> MisScheme:
        if tag not in CANONICAL_PAIRS:
            raise ParameterError(f"unknown scheme {tag!r}; expected one of {ALL_SCHEMES}")
        selection, weighting = CANONICAL_PAIRS[tag]
        return cls(tag, selection, weighting)

    @property
    def index(self) -> int:
        return ALL_SCHEMES.index(self.tag)  # type: ignore[arg-type]


def table_scheme(selection: StrategyLike, weighting: WeightingLike) -> MisScheme:
    """The scheme realized by one cell of the combination table."""

    try:
        s, w = SelectionStrategy(selection), WeightingFunction(weighting)
    except ValueError as exc:
        raise ParameterError(str(exc)) from exc
    return MisScheme(SCHEME_TABLE[(s, w)], s, w)


def _as_scheme(scheme: MisScheme | str) -> MisScheme:
    return scheme if isinstance(scheme, MisScheme) else MisScheme.canonical(scheme)


# ---------------------------------------------------------------------------
# Selection
# ---------------------------------------------------------------------------


def _selection_block(strategy: SelectionStrategy, n: int, u: np.ndarray) -> np.ndarray:
    """0-based indices from a ``(T, M)`` block of uniforms.

    Every strategy consumes the same block so runs that differ only in strategy
    stay aligned on the stream.
    """

    trials, m = u.shape
    if strategy is SelectionStrategy.S1:
        return np.minimum((u * n).astype(np.int64), n - 1)
    k = m // n
    if strategy is SelectionStrategy.S2:
        perm = np.argsort(u.reshape(trials, k, n), axis=-1, kind="stable")
        return perm.reshape(trials, m).astype(np.int64)
    return np.broadcast_to(np.tile(np.arange(n, dtype=np.int64), k), (trials, m)).copy()


def select_indices(strategy: StrategyLike, N: int, M: int, rng: Generator) -> np.ndarray:
    """M proposal indices in ``1..N``.

    S1 draws iid uniform indices, S2 one random permutation per cycle of N and S3
    the fixed cycle ``1..N`` repeated. S2 and S3 need M to be a multiple of N.
    """

    strategy = SelectionStrategy(strategy)
    require_count("N", N)
    require_count("M", M)
    if strategy is not SelectionStrategy.S1:
        require_cycles(N, M)
    u = rng.random((1, M))
    return _selection_block(strategy, N, u)[0] + 1


# ---------------------------------------------------------------------------
# Weighting denominators
# ---------------------------------------------------------------------------


def weighting_denominator(
    weighting: WeightingLike,
    x: float | np.ndarray,
    history: Sequence[int],
    proposals: ProposalSet,
    *,
    strategy: StrategyLike = SelectionStrategy.S1,
) -> float:
    """Evaluate the denominator of one sample at ``x``.

    ``history`` is 1-based. For W1/W2 its last entry is the current index ``j_n``
    and the earlier entries are the preceding indices of the same cycle. For W4 it
    is the full realized index sequence the denominator averages over.
    W1 and W3 depend on ``strategy``.
    """

    weighting = WeightingFunction(weighting)
    strategy = SelectionStrategy(strategy)
    if len(history) == 0:
        raise ParameterError("history must be nonempty")
    idx = np.asarray(history, dtype=np.int64) - 1
    if idx.min() < 0 or idx.max() >= proposals.n:
        raise ParameterError(f"history {list(history)} has indices outside 1..{proposals.n}")
    arr = np.asarray(x, dtype=float)
    if not np.all(proposals.contains(arr)):
        raise DomainError(f"point {x!r} lies outside the proposal domain", point=x)
    q = proposals.evaluate_all(arr)
    n = proposals.n

    if weighting is WeightingFunction.W3:
        weighting = WeightingFunction.W2 if strategy is S3 else WeightingFunction.W5
    elif weighting is WeightingFunction.W1:
        if strategy is S1:
            weighting = WeightingFunction.W5
        elif strategy is S3:
            weighting = WeightingFunction.W2
        else:
            used = set(idx[:-1].tolist())
            remaining = [k for k in range(n) if k not in used]
            if int(idx[-1]) not in remaining:
                raise ParameterError(f"history {list(history)} repeats an index within a cycle")
            return float(q[..., remaining].sum(axis=-1) / len(remaining))

    if weighting is WeightingFunction.W2:
        return float(q[..., int(idx[-1])])
    if weighting is WeightingFunction.W4:
        counts = np.bincount(idx, minlength=n).astype(float)
        return float((q * counts).sum(axis=-1) / len(idx))
    return float(q.sum(axis=-1) / n)


def _denominators(
    scheme: MisScheme, q: np.ndarray, index: np.ndarray, n: int
) -> np.ndarray:
    """Vectorized denominators for ``q`` of shape ``(T, M, N)`` and ``index`` ``(T, M)``."""

    weighting, strategy = scheme.weighting, scheme.selection
    if weighting is W3:
        weighting = W2 if strategy is S3 else W5
    elif weighting is W1 and strategy is not S2:
        weighting = W5 if strategy is S1 else W2

    if weighting is W2:
        return np.take_along_axis(q, index[..., None], axis=-1)[..., 0]
    if weighting is W5:
        return q.sum(axis=-1) / n

    trials, m, _ = q.shape
    k = m // n
    q4 = q.reshape(trials, k, n, n)
    onehot = (index.reshape(trials, k, n)[..., None] == np.arange(n)).astype(float)
    if weighting is W4:
        counts = onehot.sum(axis=2)
        return ((q4 * counts[:, :, None, :]).sum(axis=-1) / n).reshape(trials, m)
    # W1 under S2: mixture of the proposals not yet used earlier in the cycle
    used = np.cumsum(onehot, axis=2) - onehot
    remaining = (used == 0).astype(float)
    return ((q4 * remaining).sum(axis=-1) / remaining.sum(axis=-1)).reshape(trials, m)


# ---------------------------------------------------------------------------
# Estimation
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class MisSample:
    x: float | tuple[float, ...]
    index: int
    history: tuple[int, ...]
    denominator: float
    target_value: float


@dataclass(frozen=True, slots=True)
class _Draw:
    x: np.ndarray
    index: np.ndarray
    denominator: np.ndarray
    target_value: np.ndarray


def _draw(
    scheme: MisScheme, target: Target, proposals: ProposalSet, m: int, rng: Generator, trials: int
) -> _Draw:
    n = proposals.n
    require_cycles(n, m)
    u_sel = rng.random((trials, m))
    index = _selection_block(scheme.selection, n, u_sel)
    u_x = rng.random((trials, m) + ((proposals.dim,) if proposals.dim > 1 else ()))
    x = proposals.sample_indexed(index, u_x)
    q = proposals.evaluate_all(x)
    denom = _denominators(scheme, q, index, n)
    fx = np.asarray(target(x), dtype=float)
    bad = (fx != 0) & ~(denom > 0)
    if bad.any():
        where = np.argwhere(bad)[0]
        raise EstimatorValidityError(
            f"{scheme.tag}: zero denominator where target = {fx[tuple(where)]!r}",
            point=x[tuple(where)].tolist(),
            value=float(fx[tuple(where)]),
        )
    return _Draw(x, index, denom, fx)


def _ratios(draw: _Draw) -> np.ndarray:
    safe = np.where(draw.denominator > 0, draw.denominator, 1.0)
    return np.where(draw.target_value != 0, draw.target_value / safe, 0.0)


def draw_samples(
    scheme: MisScheme | str,
    target: Target,
    proposals: ProposalSet,
    M: int,
    rng: Generator,
) -> list[MisSample]:
    """Draw one run and return every sample with its index history and denominator."""

    scheme = _as_scheme(scheme)
    draw = _draw(scheme, target, proposals, M, rng, trials=1)
    n = proposals.n
    out: list[MisSample] = []
    for i in range(M):
        start = (i // n) * n
        hist = tuple(int(j) + 1 for j in draw.index[0, start : i + 1])
        xi = draw.x[0, i]
        point: float | tuple[float, ...] = (
            float(xi) if proposals.dim == 1 else tuple(float(v) for v in xi)
        )
        out.append(
            MisSample(
                x=point,
                index=hist[-1],
                history=hist,
                denominator=float(draw.denominator[0, i]),
                target_value=float(draw.target_value[0, i]),
            )
        )
    return out


def kahan_sum(values: np.ndarray | Sequence[float]) -> float:
    """Compensated, order-independent sum (exactly rounded)."""

    return math.fsum(np.asarray(values, dtype=float).ravel().tolist())


def summarize(estimates: np.ndarray) -> EstimatorReport:
    """EstimatorReport over independent estimates."""

    values = np.asarray(estimates, dtype=float).ravel()
    t = values.size
    mean = kahan_sum(values) / t
    var = kahan_sum((values - mean) ** 2) / (t - 1) if t > 1 else 0.0
    return EstimatorReport(
        estimate=mean,
        trials=t,
        sample_mean=mean,
        sample_variance=var,
        standard_error=math.sqrt(var / t),
    )


def sample_variance_stderr(estimates: np.ndarray) -> float:
    """Standard error of the unbiased sample variance.

    Uses the empirical fourth central moment, floored by the normal-theory value
    ``sqrt(2 / (T - 1)) * s^2``; ratio estimators are often heavy tailed.
    """

    values = np.asarray(estimates, dtype=float).ravel()
    t = values.size
    if t < 4:
        return math.inf
    mean = kahan_sum(values) / t
    dev2 = (values - mean) ** 2
    s2 = kahan_sum(dev2) / (t - 1)
    m4 = kahan_sum(dev2**2) / t
    moment = (m4 - s2**2 * (t - 3) / (t - 1)) / t
    return max(math.sqrt(max(moment, 0.0)), math.sqrt(2.0 / (t - 1)) * s2)


def run_estimator(
    scheme: MisScheme | str,
    target: Target,
    proposals: ProposalSet,
    M: int,
    rng: Generator,
) -> EstimatorReport:
    """One run of ``(1/M) * sum f(x_n) / denominator_n``.

    The k cycles of a run are independent, so ``trials`` is k and the variance is
    the spread of the cycle means (zero for a single cycle).
    """

    scheme = _as_scheme(scheme)
    draw = _draw(scheme, target, proposals, M, rng, trials=1)
    ratios = _ratios(draw)[0]
    estimate = kahan_sum(ratios) / M
    cycles = ratios.reshape(-1, proposals.n).mean(axis=-1)
    report = summarize(cycles)
    return report.model_copy(update={"estimate": estimate, "sample_mean": estimate})


def _estimate_chunk(
    scheme: MisScheme, target: Target, proposals: ProposalSet, m: int, rng: Generator, size: int
) -> np.ndarray:
    ratios = _ratios(_draw(scheme, target, proposals, m, rng, trials=size))
    return ratios.sum(axis=-1) / m


def trial_estimates(
    scheme: MisScheme | str,
    target: Target,
    proposals: ProposalSet,
    M: int,
    trials: int,
    seed: int,
    *,
    stream: int | None = None,
    workers: int = 1,
) -> np.ndarray:
    """``trials`` independent run estimates.

    Trials are drawn in chunks, each from the substream ``(stream, chunk)`` of
    ``seed``; the result does not depend on ``workers``.
    """

    scheme = _as_scheme(scheme)
    require_count("trials", trials)
    key = scheme.index if stream is None else stream
    chunks = [
        (c, min(TRIAL_CHUNK, trials - c * TRIAL_CHUNK))
        for c in range(math.ceil(trials / TRIAL_CHUNK))
    ]

    def run(chunk: tuple[int, int]) -> np.ndarray:
        c, size = chunk
        return _estimate_chunk(scheme, target, proposals, M, substream(seed, key, c), size)

    if workers <= 1 or len(chunks) == 1:
        parts = [run(c) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, chunks))
    return np.concatenate(parts)


def estimate_trials(
    scheme: MisScheme | str,
    target: Target,
    proposals: ProposalSet,
    M: int,
    trials: int,
    seed: int,
    *,
    stream: int | None = None,
    workers: int = 1,
) -> EstimatorReport:
    estimates = trial_estimates(
        scheme, target, proposals, M, trials, seed, stream=stream, workers=workers
    )
    return summarize(estimates)


# ---------------------------------------------------------------------------
# Analytic variances
# ---------------------------------------------------------------------------


class Quadrature:
    """Adaptive quadrature over a proposal set's domain."""

    GRID = 4097
    GRID_2D = 257

    def __init__(self, proposals: ProposalSet, extra_breakpoints: Sequence[np.ndarray] = ()):
        self.lo, self.hi = proposals.lo, proposals.hi
        self.dim = proposals.dim
        bps = proposals.breakpoints()
        for axis, pts in enumerate(extra_breakpoints):
            bps[axis] = np.unique(np.concatenate([bps[axis], pts]))
        self.breakpoints = [
            pts[(pts > self.lo[a]) & (pts < self.hi[a])] for a, pts in enumerate(bps)
        ]

    def grid(self) -> np.ndarray:
        if self.dim == 1:
            base = np.linspace(self.lo[0], self.hi[0], self.GRID)
            return np.unique(np.concatenate([base, self.breakpoints[0]]))
        axes = [np.linspace(self.lo[a], self.hi[a], self.GRID_2D) for a in range(2)]
        gx, gy = np.meshgrid(*axes, indexing="ij")
        return np.stack([gx.ravel(), gy.ravel()], axis=-1)

    def integrate(self, g: Callable[[np.ndarray], np.ndarray]) -> float:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            if self.dim == 1:
                value, _ = integrate.quad(
                    lambda t: float(g(np.asarray(t))),
                    float(self.lo[0]),
                    float(self.hi[0]),
                    points=self.breakpoints[0].tolist() or None,
                    limit=500,
                    epsabs=1e-14,
                    epsrel=1e-12,
                )
            else:
                value, _ = integrate.nquad(
                    lambda x0, x1: float(g(np.array([x0, x1]))),
                    [
                        [float(self.lo[0]), float(self.hi[0])],
                        [float(self.lo[1]), float(self.hi[1])],
                    ],
                    opts=[
                        {"points": self.breakpoints[0].tolist(), "limit": 200, "epsrel": 1e-10},
                        {"points": self.breakpoints[1].tolist(), "limit": 200, "epsrel": 1e-10},
                    ],
                )
        if not math.isfinite(value):
            raise DivergenceError("quadrature returned a non-finite value")
        return value


class _VarianceIntegrals:
    """Cached integrals of ``f^2 / phi_c`` and ``f q_k / phi_c``.

    ``phi_c`` is the mixture ``sum_k c_k q_k / sum_k c_k`` for a count vector c, so
    unit vectors give single proposals, all-ones gives psi and indicator vectors
    give subset mixtures.
    """

    def __init__(self, target: Target, proposals: ProposalSet) -> None:
        self.target = target
        self.proposals = proposals
        extra = getattr(target, "breakpoints", None)
        self.quad = Quadrature(proposals, extra() if callable(extra) else ())
        self._grid = self.quad.grid()
        self._grid_f = np.asarray(target(self._grid), dtype=float)
        self._grid_q = proposals.evaluate_all(self._grid)
        self._f2: dict[tuple[int, ...], float] = {}
        self._fq: dict[tuple[int, tuple[int, ...]], float] = {}
        self.integral = self.quad.integrate(lambda x: np.asarray(target(x), dtype=float))

    def _phi(self, q: np.ndarray, counts: tuple[int, ...]) -> np.ndarray:
        c = np.asarray(counts, dtype=float)
        return (q * c).sum(axis=-1) / c.sum()

    def _ratio(self, counts: tuple[int, ...], numerator: Callable[[np.ndarray], np.ndarray]):
        def g(x: np.ndarray) -> np.ndarray:
            phi = self._phi(self.proposals.evaluate_all(x), counts)
            num = numerator(x)
            if np.any((num != 0) & ~(phi > 0)):
                raise DivergenceError(f"mixture {counts} vanishes inside the target support")
            return np.where(num != 0, num / np.where(phi > 0, phi, 1.0), 0.0)

        return g

    def _check_support(self, counts: tuple[int, ...]) -> None:
        phi = self._phi(self._grid_q, counts)
        if np.any((self._grid_f != 0) & ~(phi > 0)):
            raise DivergenceError(
                f"proposal mixture {counts} does not cover the target support"
            )

    def f2_over(self, counts: tuple[int, ...]) -> float:
        if counts not in self._f2:
            self._check_support(counts)
            f = self.target
            self._f2[counts] = self.quad.integrate(
                self._ratio(counts, lambda x: np.asarray(f(x), dtype=float) ** 2)
            )
        return self._f2[counts]

    def fq_over(self, k: int, counts: tuple[int, ...]) -> float:
        key = (k, counts)
        if key not in self._fq:
            self._check_support(counts)
            f, p = self.target, self.proposals.proposals[k]
            self._fq[key] = self.quad.integrate(
                self._ratio(counts, lambda x: np.asarray(f(x), dtype=float) * p.pdf(x))
            )
        return self._fq[key]


def _unit(n: int, k: int) -> tuple[int, ...]:
    return tuple(1 if i == k else 0 for i in range(n))


def _variance_r1(v: _VarianceIntegrals, n: int) -> float:
    total = math.fsum(v.f2_over(_unit(n, k)) for k in range(n))
    return total / n**2 - v.integral**2 / n


def _variance_r3(v: _VarianceIntegrals, n: int) -> float:
    return (v.f2_over((1,) * n) - v.integral**2) / n


def _variance_n3(v: _VarianceIntegrals, n: int) -> float:
    ones = (1,) * n
    a2 = math.fsum(v.fq_over(k, ones) ** 2 for k in range(n))
    return v.f2_over(ones) / n - a2 / n**2


def _variance_r2(v: _VarianceIntegrals, n: int) -> float:
    terms: list[float] = []
    for combo in itertools.combinations_with_replacement(range(n), n):
        counts = tuple(combo.count(k) for k in range(n))
        multiplicity = math.factorial(n) / math.prod(math.factorial(c) for c in counts)
        spread = math.fsum(c * v.fq_over(k, counts) ** 2 for k, c in enumerate(counts) if c)
        terms.append(multiplicity * (n * v.f2_over(counts) - spread))
    total = math.fsum(terms) / n**n
    return total / n**2


def _variance_n2(v: _VarianceIntegrals, n: int) -> float:
    slots: list[float] = []
    for size in range(n, 0, -1):
        subsets = list(itertools.combinations(range(n), size))
        mean = math.fsum(
            v.f2_over(tuple(1 if k in s else 0 for k in range(n))) for s in subsets
        ) / len(subsets)
        slots.append(mean - v.integral**2)
    return math.fsum(slots) / n**2


_VARIANCE = {
    "R1": _variance_r1,
    "N1": _variance_r1,
    "R2": _variance_r2,
    "R3": _variance_r3,
    "N2": _variance_n2,
    "N3": _variance_n3,
}


def analytic_variance(
    scheme: MisScheme | str,
    target: Target,
    proposals: ProposalSet,
    M: int | None = None,
    *,
    integrals: _VarianceIntegrals | None = None,
) -> float:
    """Variance of one run estimate of ``scheme`` with ``M = kN`` samples.

    R2 averages over all ``N^N`` index sequences and N2 over every subset that can
    remain at each slot of a cycle; both are refused for N above 6.
    """

    scheme = _as_scheme(scheme)
    n = proposals.n
    k = require_cycles(n, M) if M is not None else 1
    if scheme.tag in ("R2", "N2") and n > MAX_ENUMERATED_N:
        raise CapabilityError(
            f"{scheme.tag} analytic variance enumerates index sequences;"
            f" N = {n} > {MAX_ENUMERATED_N}"
        )
    v = integrals if integrals is not None else _VarianceIntegrals(target, proposals)
    value = _VARIANCE[scheme.tag](v, n) / k
    logger.debug("analytic variance %s (N=%d, k=%d): %r", scheme.tag, n, k, value)
    return value


def variance_integrals(target: Target, proposals: ProposalSet) -> _VarianceIntegrals:
    """Shared integral cache so several schemes reuse one set of quadratures."""

    return _VarianceIntegrals(target, proposals)
