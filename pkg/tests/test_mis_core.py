from __future__ import annotations

import math

import numpy as np
import pytest
from scipy.stats import norm

from gmis.errors import (
    CapabilityError,
    DivergenceError,
    DomainError,
    EstimatorValidityError,
    ParameterError,
)
from gmis.mis_core import (
    SCHEME_TABLE,
    MisScheme,
    Mixture,
    Normal,
    Normal2D,
    ProposalSet,
    Uniform,
    Uniform2D,
    analytic_variance,
    draw_samples,
    estimate_trials,
    kahan_sum,
    mixture_pdf,
    run_estimator,
    sample_variance_stderr,
    select_indices,
    table_scheme,
    trial_estimates,
    variance_integrals,
    weighting_denominator,
)
from gmis.models import ALL_SCHEMES
from gmis.rng import substream


def linear_target(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return np.where((x >= 0) & (x <= 1), 2.0 * x, 0.0)


# mixture_pdf -----------------------------------------------------------------


def test_mixture_of_one_is_the_proposal() -> None:
    p = Normal(0.3, 0.7)
    ps = ProposalSet([p])
    xs = np.linspace(-2, 2, 17)
    assert np.array_equal(mixture_pdf(ps, xs), p.pdf(xs))


def test_mixture_of_two_uniforms(two_uniforms: ProposalSet) -> None:
    assert mixture_pdf(two_uniforms, 0.5) == pytest.approx(0.75, abs=1e-15)


def test_mixture_matches_density_sum_oracle(three_gaussians: ProposalSet) -> None:
    expected = (norm.pdf(1.0, 0, 1) + norm.pdf(1.0, 2, 1) + norm.pdf(1.0, 4, 1)) / 3
    assert abs(mixture_pdf(three_gaussians, 1.0) - expected) <= 1e-12


def test_mixture_rejects_points_outside_domain(two_uniforms: ProposalSet) -> None:
    with pytest.raises(DomainError):
        mixture_pdf(two_uniforms, 2.5)


def test_unnormalized_proposal_is_rejected() -> None:
    with pytest.raises(ParameterError):
        ProposalSet([Normal(0.0, 1.0)], (0.0, 5.0))


def test_default_domain_covers_normal_tails() -> None:
    ps = ProposalSet([Normal(0.0, 1.0), Uniform(-1.0, 30.0)])
    lo, hi = ps.domain
    assert lo == pytest.approx(-13.0)
    assert hi == pytest.approx(30.0)


def test_product_proposals_in_two_dimensions() -> None:
    ps = ProposalSet([Normal2D((0, 0), (1, 1)), Uniform2D((-1, -1), (1, 1))])
    x = np.array([0.5, -0.25])
    expected = (norm.pdf(0.5) * norm.pdf(-0.25) + 0.25) / 2
    assert mixture_pdf(ps, x) == pytest.approx(expected, rel=1e-12)


# select_indices --------------------------------------------------------------


@pytest.mark.parametrize(
    "strategy, n, m, expected",
    [
        ("S3", 3, 6, [1, 2, 3, 1, 2, 3]),
        ("S1", 1, 4, [1, 1, 1, 1]),
        ("S2", 1, 3, [1, 1, 1]),
        ("S3", 2, 2, [1, 2]),
    ],
)
def test_select_indices_fixed_outcomes(
    rng: np.random.Generator, strategy: str, n: int, m: int, expected: list[int]
) -> None:
    assert select_indices(strategy, n, m, rng).tolist() == expected


@pytest.mark.parametrize("strategy", ["S2", "S3"])
def test_cycle_strategies_need_whole_cycles(rng: np.random.Generator, strategy: str) -> None:
    with pytest.raises(ParameterError):
        select_indices(strategy, 3, 4, rng)


def test_s2_yields_a_permutation_per_cycle(rng: np.random.Generator) -> None:
    idx = select_indices("S2", 4, 4 * 500, rng).reshape(-1, 4)
    assert all(sorted(row) == [1, 2, 3, 4] for row in idx.tolist())


def test_s2_slot_frequencies_are_uniform(rng: np.random.Generator) -> None:
    cycles = 100_000
    idx = select_indices("S2", 3, 3 * cycles, rng).reshape(cycles, 3)
    bound = 4 * math.sqrt((1 / 3) * (2 / 3) / cycles)
    for slot in range(3):
        for k in (1, 2, 3):
            assert abs(np.mean(idx[:, slot] == k) - 1 / 3) <= bound


def test_s1_index_frequencies_are_uniform(rng: np.random.Generator) -> None:
    draws = 100_000
    idx = select_indices("S1", 4, draws, rng)
    bound = 4 * math.sqrt(0.25 * 0.75 / draws)
    for k in range(1, 5):
        assert abs(np.mean(idx == k) - 0.25) <= bound


# weighting_denominator -------------------------------------------------------


def test_w5_is_the_mixture(three_gaussians: ProposalSet) -> None:
    for x in (-1.0, 0.0, 2.5, 7.0):
        assert weighting_denominator("W5", x, [2], three_gaussians) == mixture_pdf(
            three_gaussians, x
        )


def test_w2_evaluates_the_selected_proposal(two_uniforms: ProposalSet) -> None:
    assert weighting_denominator("W2", 1.5, [2], two_uniforms) == pytest.approx(0.5)


def test_w4_over_a_full_cycle_equals_w5(three_gaussians: ProposalSet) -> None:
    xs = substream(7, 1).uniform(-4, 8, size=100)
    for x in xs:
        w4 = weighting_denominator("W4", x, [3, 1, 2], three_gaussians, strategy="S2")
        w5 = weighting_denominator("W5", x, [3, 1, 2], three_gaussians)
        assert abs(w4 - w5) <= 1e-12


def test_w4_averages_the_realized_multiset(two_uniforms: ProposalSet) -> None:
    # history (2, 2): only q2 was used
    assert weighting_denominator("W4", 0.5, [2, 2], two_uniforms) == pytest.approx(0.5)


@pytest.mark.parametrize(
    "strategy, history, expected",
    [
        ("S1", [1], 0.75),
        ("S3", [1], 1.0),
        ("S2", [1], 0.75),
        ("S2", [1, 2], 0.5),
        ("S2", [2, 1], 1.0),
    ],
)
def test_w1_is_the_conditional_density(
    two_uniforms: ProposalSet, strategy: str, history: list[int], expected: float
) -> None:
    value = weighting_denominator("W1", 0.5, history, two_uniforms, strategy=strategy)
    assert value == pytest.approx(expected)


@pytest.mark.parametrize("strategy, expected", [("S1", 0.75), ("S2", 0.75), ("S3", 0.5)])
def test_w3_is_the_marginal_density(
    two_uniforms: ProposalSet, strategy: str, expected: float
) -> None:
    value = weighting_denominator("W3", 0.5, [2], two_uniforms, strategy=strategy)
    assert value == pytest.approx(expected)


def test_denominator_rejects_bad_history(two_uniforms: ProposalSet) -> None:
    with pytest.raises(ParameterError):
        weighting_denominator("W2", 0.5, [], two_uniforms)
    with pytest.raises(ParameterError):
        weighting_denominator("W2", 0.5, [3], two_uniforms)


# schemes ---------------------------------------------------------------------


def test_combination_table_has_fifteen_cells_and_six_schemes() -> None:
    assert len(SCHEME_TABLE) == 15
    assert set(SCHEME_TABLE.values()) == set(ALL_SCHEMES)


@pytest.mark.parametrize("tag", ALL_SCHEMES)
def test_canonical_schemes_are_table_cells(tag: str) -> None:
    scheme = MisScheme.canonical(tag)
    assert table_scheme(scheme.selection, scheme.weighting) == scheme


def test_inconsistent_pair_is_rejected() -> None:
    with pytest.raises(ParameterError):
        MisScheme("R1", "S2", "W5")


# estimators ------------------------------------------------------------------


@pytest.mark.parametrize("m", [3, 6])
def test_target_equal_to_mixture_gives_exactly_one(
    three_gaussians: ProposalSet, rng: np.random.Generator, m: int
) -> None:
    report = run_estimator("N3", three_gaussians.mixture, three_gaussians, m, rng)
    assert report.estimate == 1.0
    assert report.sample_variance == 0.0


def test_single_proposal_collapses_every_scheme() -> None:
    ps = ProposalSet([Uniform(0.0, 1.0)])
    estimates = {
        tag: run_estimator(tag, linear_target, ps, 8, substream(99, 3)).estimate
        for tag in ALL_SCHEMES
    }
    assert len(set(estimates.values())) == 1


@pytest.mark.parametrize("tag", ALL_SCHEMES)
def test_linear_target_is_unbiased(tag: str) -> None:
    ps = ProposalSet([Uniform(0.0, 1.0)])
    report = estimate_trials(tag, linear_target, ps, 1, 100_000, seed=5)
    assert abs(report.estimate - 1.0) <= 4 * report.standard_error


@pytest.mark.slow
@pytest.mark.parametrize("tag", ALL_SCHEMES)
def test_gaussian_mixture_target_is_unbiased(tag: str, three_gaussians: ProposalSet) -> None:
    target = Mixture((0.6, 0.4), (Normal(0.5, 0.7), Normal(3.0, 0.8)))
    truth = variance_integrals(target, three_gaussians).integral
    report = estimate_trials(tag, target, three_gaussians, 3, 100_000, seed=11)
    assert abs(report.estimate - truth) <= 4 * report.standard_error


def test_trial_estimates_do_not_depend_on_worker_count(three_gaussians: ProposalSet) -> None:
    target = Normal(1.0, 0.5)
    one = trial_estimates("R2", target, three_gaussians, 3, 3000, seed=3, workers=1)
    many = trial_estimates("R2", target, three_gaussians, 3, 3000, seed=3, workers=4)
    assert np.array_equal(one, many)


class LeakyUniform(Uniform):
    """Samples all of [a, b] but reports zero density on its upper half."""

    def pdf(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.where(x < (self.a + self.b) / 2, super().pdf(x), 0.0)


def test_zero_denominator_with_nonzero_target_raises() -> None:
    leaky = ProposalSet([LeakyUniform(0.0, 1.0)], check_normalization=False)
    with pytest.raises(EstimatorValidityError):
        draw_samples("R1", lambda x: np.ones_like(x), leaky, 64, substream(1, 2))


def test_zero_target_outside_denominator_support_is_fine() -> None:
    leaky = ProposalSet([LeakyUniform(0.0, 1.0)], check_normalization=False)
    report = run_estimator("R1", lambda x: np.where(x < 0.5, 1.0, 0.0), leaky, 64, substream(1, 2))
    assert math.isfinite(report.estimate)


def test_draw_samples_records_history(three_gaussians: ProposalSet) -> None:
    samples = draw_samples("N3", three_gaussians.mixture, three_gaussians, 6, substream(4, 4))
    assert len(samples) == 6
    assert [len(s.history) for s in samples] == [1, 2, 3, 1, 2, 3]
    for cycle in (samples[:3], samples[3:]):
        assert sorted(s.index for s in cycle) == [1, 2, 3]
    assert all(s.denominator > 0 for s in samples)


def test_kahan_sum_is_order_independent() -> None:
    values = [1e16, 1.0, -1e16, 1.0] * 10
    assert kahan_sum(values) == 20.0
    assert kahan_sum(list(reversed(values))) == 20.0


# analytic variance -----------------------------------------------------------


def test_identical_proposals_collapse_all_schemes(canonical_target: Normal) -> None:
    q = Normal(1.5, 1.0)
    ps = ProposalSet([q, q, q], (-10.0, 14.0))
    single = ProposalSet([q], (-10.0, 14.0))
    reference = analytic_variance("R1", canonical_target, single) / 3
    for tag in ALL_SCHEMES:
        assert analytic_variance(tag, canonical_target, ps) == pytest.approx(reference, rel=1e-9)


def test_canonical_testbed_ordering(three_gaussians: ProposalSet, canonical_target: Normal) -> None:
    cache = variance_integrals(canonical_target, three_gaussians)
    var = {
        tag: analytic_variance(tag, canonical_target, three_gaussians, integrals=cache)
        for tag in ALL_SCHEMES
    }
    assert var["R1"] == var["N1"]
    assert var["R1"] >= var["R3"] >= var["N3"]
    assert var["R1"] >= var["R2"] >= var["N3"]
    assert var["R1"] >= var["N2"] >= var["N3"]
    assert var["N3"] == min(var.values())


def test_more_cycles_divide_the_variance(
    three_gaussians: ProposalSet, canonical_target: Normal
) -> None:
    one = analytic_variance("N3", canonical_target, three_gaussians, 3)
    two = analytic_variance("N3", canonical_target, three_gaussians, 6)
    assert two == pytest.approx(one / 2, rel=1e-12)


def test_enumeration_is_refused_above_six_proposals(canonical_target: Normal) -> None:
    ps = ProposalSet([Normal(float(mu), 1.0) for mu in range(7)], (-12.0, 20.0))
    for tag in ("R2", "N2"):
        with pytest.raises(CapabilityError):
            analytic_variance(tag, canonical_target, ps)


def test_uncovered_support_diverges() -> None:
    ps = ProposalSet([Uniform(0.0, 1.0), Uniform(1.0, 2.0)], (0.0, 2.0))
    with pytest.raises(DivergenceError):
        analytic_variance("N2", Uniform(0.0, 2.0), ps)


@pytest.mark.slow
@pytest.mark.parametrize("tag", ALL_SCHEMES)
def test_empirical_variance_matches_analytic(tag: str, three_gaussians: ProposalSet) -> None:
    target = Normal(2.0, 0.8)
    analytic = analytic_variance(tag, target, three_gaussians)
    estimates = trial_estimates(tag, target, three_gaussians, 3, 100_000, seed=21)
    empirical = float(np.var(estimates, ddof=1))
    assert abs(empirical - analytic) <= 5 * sample_variance_stderr(estimates)
