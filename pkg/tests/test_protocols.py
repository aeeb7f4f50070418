import itertools
import math
from collections import defaultdict
from fractions import Fraction

import numpy as np
import pytest
from scipy.stats import entropy as shannon_entropy

from src.core_logic.measures import conditional_mutual_information
from src.core_logic.protocols import (
    EXACT,
    MONTE_CARLO,
    binary_entropy,
    count_view_types,
    equality_filter,
    repeated_code_exact,
    repeated_code_monte_carlo,
)
from src.data_processing.distribution import JointDistribution
from src.data_processing.errors import BudgetExceededError, UsageError
from src.fixtures.tables import build


@pytest.fixture(scope="module")
def p1():
    return build("p1")


@pytest.fixture(scope="module")
def pmix():
    return build("pmix")


TRIPARTITE_WITH_EVE = [("A", 2, "honest"), ("B", 2, "honest"), ("C", 2, "honest"), ("E", 2, "eve")]


@pytest.fixture(scope="module")
def unanimous():
    """A = B = C always; Eve holds an independent fair bit."""
    rows = [((a, a, a, e), "1/4") for a in (0, 1) for e in (0, 1)]
    return JointDistribution.from_rows(TRIPARTITE_WITH_EVE, rows)


def pmix_accept(n: int) -> float:
    return (1 / 3) ** n + 3 * (2 / 9) ** n


def pmix_agree(n: int) -> float:
    return (2 / 6) ** n / ((2 / 6) ** n + 3 * (2 / 9) ** n)


def brute_force_repeated_code(d: JointDistribution, n: int):
    """Runs the protocol on every block and every masking bit; returns (accept, agree, Eve's information)."""
    a, b, c = (d.index_of(name) for name in d.honest_names)
    e = d.index_of(d.eve_name)
    accept = agree = 0.0
    joint = defaultdict(float)
    for block in itertools.product(d.pmf.items(), repeat=n):
        p = math.prod(mass for _, mass in block)
        for s in (0, 1):
            broadcast = tuple(outcome[a] ^ s for outcome, _ in block)
            bits_b = {outcome[b] ^ x for (outcome, _), x in zip(block, broadcast)}
            bits_c = {outcome[c] ^ x for (outcome, _), x in zip(block, broadcast)}
            if len(bits_b) > 1 or len(bits_c) > 1:
                continue
            accept += p / 2
            if bits_b == {s} and bits_c == {s}:
                agree += p / 2
            view = (tuple(outcome[e] for outcome, _ in block), broadcast)
            joint[(view, s)] += p / 2
    s_marginal, view_marginal = defaultdict(float), defaultdict(float)
    for (view, s), q in joint.items():
        s_marginal[s] += q
        view_marginal[view] += q
    information = (
        shannon_entropy(list(s_marginal.values()), base=2)
        + shannon_entropy(list(view_marginal.values()), base=2)
        - shannon_entropy(list(joint.values()), base=2)
    )
    return accept, agree / accept, information


# --- Equality filter ---

def test_equality_filter_on_p1(p1) -> None:
    result = equality_filter(p1, "B", "C")
    assert result.survival_probability == pytest.approx(1 / 3)
    assert dict(result.filtered.masses) == {(0, 0, 0, 0): Fraction(1, 2), (1, 1, 1, 0): Fraction(1, 2)}
    assert result.key_rate({"A"}, {"B", "C"}, "E") == pytest.approx(1 / 3, abs=1e-12)


def test_equality_filter_on_mixture(pmix) -> None:
    result = equality_filter(pmix, "B", "C")
    assert result.survival_probability == pytest.approx(5 / 9)
    # Eve still pins down 2/5 of the filtered events, so no one-way key survives
    assert conditional_mutual_information(result.filtered, {"A"}, {"B", "C"}, {"E"}) == pytest.approx(3 / 5)
    assert result.key_rate({"A"}, {"B", "C"}, "E") == pytest.approx(0.0, abs=1e-12)


def test_equality_filter_rejects_eve(p1) -> None:
    with pytest.raises(UsageError):
        equality_filter(p1, "B", "E")


def test_equality_filter_that_always_holds() -> None:
    d = JointDistribution.from_rows(
        TRIPARTITE_WITH_EVE,
        [((0, 0, 0, 0), "1/4"), ((0, 1, 1, 1), "1/4"), ((1, 0, 0, 1), "1/4"), ((1, 1, 1, 0), "1/4")],
    )
    result = equality_filter(d, "B", "C")
    assert result.survival_probability == 1.0
    assert dict(result.filtered.masses) == dict(d.masses)


# --- Repeated code, exact ---

def test_binary_entropy() -> None:
    assert binary_entropy(0.5) == pytest.approx(1.0)
    assert binary_entropy(0.0) == 0.0
    assert binary_entropy(1.0) == 0.0


def test_count_view_types() -> None:
    assert count_view_types(2, 7) == 28
    assert count_view_types(1, 3) == 3


def test_block_of_two_on_mixture(pmix) -> None:
    stats = repeated_code_exact(pmix, 2)
    assert stats.method == EXACT
    assert stats.accept_probability == pytest.approx(7 / 27, abs=1e-12)
    assert stats.agree_probability_given_accept == pytest.approx(3 / 7, abs=1e-12)
    assert stats.exact == {"accept_probability": "7/27", "agree_probability_given_accept": "3/7"}
    assert stats.std_error == 0.0


def test_single_realization_on_mixture(pmix) -> None:
    stats = repeated_code_exact(pmix, 1)
    assert stats.accept_probability == pytest.approx(1.0, abs=1e-12)
    assert stats.agree_probability_given_accept == pytest.approx(1 / 3, abs=1e-12)
    assert stats.eve_key_information == pytest.approx(2 / 3, abs=1e-12)
    assert stats.key_rate_lower_bound < 0


@pytest.mark.parametrize("n", range(1, 9))
def test_mixture_matches_closed_form(pmix, n) -> None:
    stats = repeated_code_exact(pmix, n)
    assert stats.accept_probability == pytest.approx(pmix_accept(n), abs=1e-12)
    assert stats.agree_probability_given_accept == pytest.approx(pmix_agree(n), abs=1e-12)
    # Eve knows s_A exactly on error patterns and nothing on the error-free one
    assert stats.eve_key_information == pytest.approx(1 - pmix_agree(n), abs=1e-9)


def test_mixture_improves_with_block_length(pmix) -> None:
    runs = [repeated_code_exact(pmix, n) for n in range(1, 9)]
    agree = [s.agree_probability_given_accept for s in runs]
    eve = [s.eve_key_information for s in runs]
    assert all(later >= earlier - 1e-12 for earlier, later in zip(agree, agree[1:]))
    assert all(later <= earlier + 1e-12 for earlier, later in zip(eve, eve[1:]))
    assert runs[-1].key_rate_lower_bound > 0


def test_mixture_thresholds(pmix) -> None:
    at_eight = repeated_code_exact(pmix, 8)
    assert at_eight.agree_probability_given_accept == pytest.approx(0.8953, abs=1e-4)
    at_thirteen = repeated_code_exact(pmix, 13)
    assert at_thirteen.agree_probability_given_accept >= 0.98
    assert at_thirteen.eve_key_information < 0.02


def test_single_realization_when_parties_always_agree(unanimous) -> None:
    stats = repeated_code_exact(unanimous, 1)
    assert stats.accept_probability == 1.0
    assert stats.agree_probability_given_accept == 1.0
    assert stats.exact == {"accept_probability": "1", "agree_probability_given_accept": "1"}
    assert stats.eve_key_information == pytest.approx(0.0, abs=1e-12)


def test_disagreement_per_party(pmix) -> None:
    stats = repeated_code_exact(pmix, 2)
    # patterns with B wrong: (1,0) and (1,1), each (2/9)^2 out of 7/27
    expected = 2 * (2 / 9) ** 2 / (7 / 27)
    assert stats.disagree_probabilities == pytest.approx({"B": expected, "C": expected})


@pytest.mark.parametrize("fixture_id", ["p1", "p2", "pmix"])
@pytest.mark.parametrize("n", [1, 2, 3])
def test_exact_matches_brute_force(fixture_id, n) -> None:
    d = build(fixture_id)
    accept, agree, information = brute_force_repeated_code(d, n)
    stats = repeated_code_exact(d, n)
    assert stats.accept_probability == pytest.approx(accept, abs=1e-12)
    assert stats.agree_probability_given_accept == pytest.approx(agree, abs=1e-12)
    assert stats.eve_key_information == pytest.approx(information, abs=1e-9)


def test_without_eve_analysis(pmix) -> None:
    stats = repeated_code_exact(pmix, 4, with_eve=False)
    assert stats.eve_key_information is None
    assert stats.key_rate_lower_bound is None


def test_exact_budget(pmix) -> None:
    with pytest.raises(BudgetExceededError):
        repeated_code_exact(pmix, 8, budget=10)


def test_block_length_must_be_positive(pmix) -> None:
    with pytest.raises(UsageError):
        repeated_code_exact(pmix, 0)


def test_needs_binary_parties() -> None:
    d = JointDistribution.from_rows([("A", 3, "honest"), ("B", 2, "honest")], [((2, 1), 1)])
    with pytest.raises(UsageError, match="binary"):
        repeated_code_exact(d, 2)


def test_floats_give_no_rational_strings(pmix) -> None:
    floats = JointDistribution(pmix.variables, pmix.pmf)
    assert repeated_code_exact(floats, 2, with_eve=False).exact == {}


# --- Repeated code, Monte Carlo ---

def deviations(exact, sampled):
    """|sampled - exact| in standard errors for acceptance, agreement and Eve's information."""
    pairs = [
        (sampled.accept_probability - exact.accept_probability, sampled.std_error),
        (sampled.agree_probability_given_accept - exact.agree_probability_given_accept, sampled.agree_std_error),
        (sampled.eve_posterior_information - exact.eve_key_information, sampled.eve_std_error),
    ]
    return [abs(gap) / se if se > 0 else (0.0 if abs(gap) <= 1e-12 else math.inf) for gap, se in pairs]


def test_monte_carlo_close_to_exact(pmix) -> None:
    stats = repeated_code_monte_carlo(pmix, 2, trials=100_000, seed=3)
    assert stats.method == MONTE_CARLO
    assert stats.eve_information_biased
    assert max(deviations(repeated_code_exact(pmix, 2), stats)) <= 3


def test_monte_carlo_when_parties_always_agree(unanimous) -> None:
    stats = repeated_code_monte_carlo(unanimous, 1, trials=2_000, seed=0)
    assert stats.accept_probability == 1.0
    assert stats.agree_probability_given_accept == 1.0
    assert stats.std_error == 0.0


def test_monte_carlo_is_reproducible(pmix) -> None:
    first = repeated_code_monte_carlo(pmix, 3, trials=5_000, seed=11)
    second = repeated_code_monte_carlo(pmix, 3, trials=5_000, seed=11)
    assert first.to_dict() == second.to_dict()


def test_monte_carlo_needs_trials(pmix) -> None:
    with pytest.raises(UsageError):
        repeated_code_monte_carlo(pmix, 2, trials=0)


def test_monte_carlo_without_acceptance() -> None:
    # A xor B is a fair coin, so a block of 40 is accepted with probability 2^-39
    d = JointDistribution.from_rows(
        [("A", 2, "honest"), ("B", 2, "honest"), ("E", 1, "eve")],
        [((0, 0, 0), "1/4"), ((0, 1, 0), "1/4"), ((1, 0, 0), "1/4"), ((1, 1, 0), "1/4")],
    )
    stats = repeated_code_monte_carlo(d, 40, trials=50, seed=0)
    assert stats.accept_probability == 0.0
    assert stats.agree_probability_given_accept == 0.0


@pytest.mark.slow
@pytest.mark.parametrize("fixture_id", ["p1", "p2", "p3", "pmix"])
def test_monte_carlo_agrees_with_exact(fixture_id) -> None:
    d = build(fixture_id)
    scores = []
    for n in (1, 2, 3):
        scores += deviations(repeated_code_exact(d, n), repeated_code_monte_carlo(d, n, trials=100_000, seed=0))
    # nine statistics: one 3-sigma excursion is plausible, two are not
    assert sum(score > 3 for score in scores) <= 1
    assert max(scores) < 5


def random_distribution(seed: int) -> JointDistribution:
    rng = np.random.default_rng(seed)
    weights = rng.integers(1, 10, size=(2, 2, 2, 3)).astype(float)
    weights /= weights.sum()
    variables = TRIPARTITE_WITH_EVE[:3] + [("E", 3, "eve")]
    return JointDistribution.from_rows(variables, [(index, float(weights[index])) for index in np.ndindex(weights.shape)])


@pytest.mark.slow
def test_monte_carlo_agrees_with_exact_on_random_tables() -> None:
    scores = []
    for seed in range(20):
        d = random_distribution(seed)
        for n in (1, 2, 3):
            scores += deviations(repeated_code_exact(d, n), repeated_code_monte_carlo(d, n, trials=100_000, seed=seed))
    # 180 statistics: about half a 3-sigma excursion is expected
    assert sum(score > 3 for score in scores) <= 4
    assert max(scores) < 5
