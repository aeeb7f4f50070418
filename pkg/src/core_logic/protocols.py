# src/core_logic/protocols.py

import itertools
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Dict, Iterable, List, Optional, Tuple

import numpy as np
from scipy.special import entr, gammaln, logsumexp
from scipy.stats import entropy as shannon_entropy

from config.settings import MONTE_CARLO_CHUNK, enumeration_budget
from src.core_logic.measures import Bits, ck_lower_bound, clamp_bits
from src.data_processing.distribution import JointDistribution, Mass, restrict
from src.data_processing.errors import BudgetExceededError, UsageError

logger = logging.getLogger(__name__)

EXACT = "exact"
MONTE_CARLO = "monte-carlo"

_LN2 = math.log(2.0)


def binary_entropy(p: float) -> float:
    return float(shannon_entropy([p, 1.0 - p], base=2))


@dataclass(frozen=True)
class ProtocolStats:
    """
    Outcome statistics of the repeated-code protocol at block length N.

    std_error / agree_std_error are binomial (normal-approximation) standard
    errors of accept_probability / agree_probability_given_accept; both are 0
    for exact analysis. Eve's information is always conditioned on acceptance.
    Monte Carlo runs also carry eve_posterior_information, the sample mean of
    1 - h(P(s_A | view)) over accepted blocks, with its standard error.
    """
    block_length: int
    accept_probability: float
    agree_probability_given_accept: float
    eve_key_information: Optional[Bits]
    method: str
    trials: int = 0
    std_error: float = 0.0
    agree_std_error: float = 0.0
    eve_information_biased: bool = False
    eve_posterior_information: Optional[Bits] = None
    eve_std_error: float = 0.0
    disagree_probabilities: Dict[str, float] = field(default_factory=dict)
    key_rate_lower_bound: Optional[Bits] = None
    exact: Dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "block_length": self.block_length,
            "method": self.method,
            "accept_probability": self.accept_probability,
            "agree_probability_given_accept": self.agree_probability_given_accept,
            "eve_key_information": self.eve_key_information,
            "eve_information_biased": self.eve_information_biased,
            "eve_posterior_information": self.eve_posterior_information,
            "eve_std_error": self.eve_std_error,
            "disagree_probabilities": dict(self.disagree_probabilities),
            "key_rate_lower_bound": self.key_rate_lower_bound,
            "trials": self.trials,
            "std_error": self.std_error,
            "agree_std_error": self.agree_std_error,
            "exact": dict(self.exact),
        }


@dataclass(frozen=True)
class FilterResult:
    filtered: JointDistribution
    survival_probability: float

    def key_rate(self, x: Iterable[str], y: Iterable[str], eve: str) -> Bits:
        """Key bits per original realization: survival times the one-way bound on the filtered events."""
        return self.survival_probability * ck_lower_bound(self.filtered, x, y, eve)


def equality_filter(d: JointDistribution, p: str, q: str) -> FilterResult:
    """
    Keeps the realizations where p and q publicly announce that they are equal.

    Eve learns the announcement, which is what conditioning on the event models;
    every variable (Eve's included) stays in the filtered distribution.
    """
    p_spec, q_spec = d.variable(p), d.variable(q)
    if p_spec.is_eve or q_spec.is_eve:
        raise UsageError("The equality filter runs between honest parties.")
    if p_spec.alphabet_size != q_spec.alphabet_size:
        raise UsageError(f"'{p}' and '{q}' have different alphabets ({p_spec.alphabet_size} vs {q_spec.alphabet_size}).")
    filtered, survival = restrict(d, lambda values: values[p] == values[q])
    logger.info("Equality filter %s=%s keeps %.6f of the realizations.", p, q, survival)
    return FilterResult(filtered, survival)


# --- Repeated-code protocol ---

@dataclass(frozen=True)
class _Layout:
    leader: int
    others: Tuple[int, ...]
    other_names: Tuple[str, ...]
    eve: Optional[int]
    eve_size: int


def _binary_layout(d: JointDistribution) -> _Layout:
    honest = d.honest_names
    if len(honest) < 2:
        raise UsageError("The repeated-code protocol needs at least two honest parties.")
    wide = [name for name in honest if d.variable(name).alphabet_size != 2]
    if wide:
        raise UsageError(f"The repeated-code protocol needs binary honest variables; {wide} are not binary.")
    eve = d.eve_name
    return _Layout(
        leader=d.index_of(honest[0]),
        others=tuple(d.index_of(name) for name in honest[1:]),
        other_names=honest[1:],
        eve=None if eve is None else d.index_of(eve),
        eve_size=1 if eve is None else d.variable(eve).alphabet_size,
    )


def _patterns(layout: _Layout) -> List[Tuple[int, ...]]:
    return list(itertools.product((0, 1), repeat=len(layout.others)))


def _pattern_masses(d: JointDistribution, layout: _Layout) -> Dict[Tuple[int, ...], Mass]:
    """Probability of each per-realization mismatch pattern (A xor B, A xor C, ...)."""
    masses: Dict[Tuple[int, ...], Mass] = {pattern: 0 for pattern in _patterns(layout)}
    for outcome, mass in d.masses.items():
        a = outcome[layout.leader]
        pattern = tuple(a ^ outcome[j] for j in layout.others)
        masses[pattern] += mass
    return masses


def _eve_symbol_likelihoods(d: JointDistribution, layout: _Layout) -> np.ndarray:
    """
    L[v, s, k] = P(Eve sees v = (e, x) in one realization, mismatch pattern k | s_A = s),
    where x = A xor s_A is the broadcast bit.
    """
    patterns = {pattern: k for k, pattern in enumerate(_patterns(layout))}
    likelihoods = np.zeros((layout.eve_size * 2, 2, len(patterns)))
    for outcome, p in d.pmf.items():
        a = outcome[layout.leader]
        k = patterns[tuple(a ^ outcome[j] for j in layout.others)]
        e = 0 if layout.eve is None else outcome[layout.eve]
        for s in (0, 1):
            likelihoods[2 * e + (a ^ s), s, k] += p
    return likelihoods


def _reduce_view(likelihoods: np.ndarray) -> np.ndarray:
    """
    Merges single-realization views whose likelihood vectors over (s_A, pattern)
    are proportional; the posterior of s_A only depends on the merged classes.
    """
    flat = likelihoods.reshape(likelihoods.shape[0], -1)
    classes: Dict[Tuple[float, ...], np.ndarray] = {}
    for row in flat:
        total = row.sum()
        if total <= 0:
            continue
        key = tuple(np.round(row / total, 12))
        classes[key] = classes.get(key, 0) + row
    return np.array(list(classes.values())).reshape(len(classes), *likelihoods.shape[1:])


def count_view_types(n: int, classes: int) -> int:
    return math.comb(n + classes - 1, classes - 1)


def _eve_information(d: JointDistribution, layout: _Layout, n: int, budget: Optional[int]) -> Tuple[Bits, float]:
    """
    I(s_A : Eve's view | both accepted), computed exactly.

    Eve's view is her N symbols, the broadcast string and the acceptance bits.
    Given acceptance the whole block shares one mismatch pattern, so a view's
    probability is a mixture over patterns of i.i.d. products and depends only on
    how many realizations fall in each reduced symbol class; the sum runs over
    those count vectors with multinomial weights.

    Returns:
        Tuple[Bits, float]: The information and P(accepted) as a cross-check.
    """
    weights = _reduce_view(_eve_symbol_likelihoods(d, layout))
    n_classes = weights.shape[0]
    types = count_view_types(n, n_classes)
    limit = enumeration_budget() if budget is None else budget
    if types > limit:
        raise BudgetExceededError(
            f"Eve's view at N={n} has {types} count types over {n_classes} classes, above the budget {limit}."
        )
    logger.info("Exact Eve analysis at N=%d over %d view types.", n, types)

    accepted = 0.0
    s_marginal = np.zeros(2)
    conditional_entropy = 0.0
    combos = itertools.combinations_with_replacement(range(n_classes), n)
    while True:
        chunk = np.array(list(itertools.islice(combos, 65536)), dtype=np.int64)
        if chunk.size == 0:
            break
        counts = (chunk[:, :, None] == np.arange(n_classes)[None, None, :]).sum(axis=1)
        multiplicity = np.exp(gammaln(n + 1) - gammaln(counts + 1).sum(axis=1))
        # joint[t, s] = P(s_A = s, one specific view sequence of type t, accepted)
        per_pattern = np.prod(weights[None, :, :, :] ** counts[:, :, None, None], axis=1)
        joint = 0.5 * per_pattern.sum(axis=2)
        view_mass = joint.sum(axis=1)
        posterior = np.divide(joint, view_mass[:, None], out=np.zeros_like(joint), where=view_mass[:, None] > 0)
        accepted += float(multiplicity @ view_mass)
        s_marginal += multiplicity @ joint
        conditional_entropy += float(multiplicity @ (view_mass * entr(posterior).sum(axis=1))) / _LN2

    prior = s_marginal / accepted
    information = float(shannon_entropy(prior, base=2)) - conditional_entropy / accepted
    return clamp_bits(information, "Eve's key information"), accepted


def _finish(
    n: int,
    accept: float,
    agree: float,
    disagree: Dict[str, float],
    eve: Optional[float],
    **extra: Any,
) -> ProtocolStats:
    rate = None
    if eve is not None and disagree:
        rate = min(1.0 - binary_entropy(p) for p in disagree.values()) - eve
    return ProtocolStats(
        block_length=n,
        accept_probability=accept,
        agree_probability_given_accept=agree,
        eve_key_information=eve,
        disagree_probabilities=disagree,
        key_rate_lower_bound=rate,
        **extra,
    )


def repeated_code_exact(
    d: JointDistribution, n: int, with_eve: bool = True, budget: Optional[int] = None
) -> ProtocolStats:
    """
    Exact statistics of the repeated-code protocol on blocks of n realizations.

    The first honest variable broadcasts X_i = A_i xor s_A; every other honest
    party accepts when its block xor X is constant. A block is accepted by all iff
    its mismatch pattern is the same in every realization, so acceptance and
    agreement follow from per-pattern powers.

    Args:
        d (JointDistribution): Distribution with binary honest variables.
        n (int): Block length N >= 1.
        with_eve (bool): Also compute Eve's information about s_A (exact enumeration
            of her reduced view; subject to the enumeration budget).
        budget (Optional[int]): Override of the enumeration budget.

    Returns:
        ProtocolStats: With rational strings in `exact` when d has exact masses.
    """
    if n < 1:
        raise UsageError(f"Block length must be at least 1, got {n}.")
    layout = _binary_layout(d)
    masses = _pattern_masses(d, layout)
    powered = {pattern: mass ** n for pattern, mass in masses.items()}
    accept_mass = sum(powered.values())
    agree_mass = powered[(0,) * len(layout.others)] / accept_mass
    disagree_mass = {
        name: sum(m for pattern, m in powered.items() if pattern[j]) / accept_mass
        for j, name in enumerate(layout.other_names)
    }

    exact: Dict[str, str] = {}
    if d.is_exact:
        exact = {
            "accept_probability": str(Fraction(accept_mass)),
            "agree_probability_given_accept": str(Fraction(agree_mass)),
        }
    eve = None
    if with_eve:
        eve, accepted = _eve_information(d, layout, n, budget)
        if abs(accepted - float(accept_mass)) > 1e-9:
            logger.warning("View enumeration mass %.12g differs from acceptance %.12g.", accepted, float(accept_mass))
    return _finish(
        n,
        float(accept_mass),
        float(agree_mass),
        {name: float(m) for name, m in disagree_mass.items()},
        eve,
        method=EXACT,
        exact=exact,
    )


def repeated_code_monte_carlo(
    d: JointDistribution, n: int, trials: int, seed: int = 0, chunk: int = MONTE_CARLO_CHUNK
) -> ProtocolStats:
    """
    Runs the repeated-code protocol on `trials` sampled blocks.

    Trials are processed in fixed-size chunks, chunk c drawing from a generator
    keyed by (seed, c), so results depend only on (d, n, trials, seed, chunk).
    Eve's information is a plug-in estimate over her empirical view distribution
    and is biased upwards at small sample sizes. The posterior estimate next to
    it averages 1 - h(P(s_A | view)) over the accepted blocks, using that s_A is
    uniform given acceptance; it is unbiased and comes with a standard error.
    """
    if n < 1:
        raise UsageError(f"Block length must be at least 1, got {n}.")
    if trials < 1:
        raise UsageError(f"Monte Carlo needs at least one trial, got {trials}.")
    layout = _binary_layout(d)
    outcomes, probabilities = d.support()
    probabilities = probabilities / probabilities.sum()
    with np.errstate(divide="ignore"):
        log_likelihoods = np.log(_eve_symbol_likelihoods(d, layout))

    accepted_count = 0
    agreed_count = 0
    disagree_counts = np.zeros(len(layout.others), dtype=np.int64)
    views: Counter = Counter()
    leftover_sum = leftover_squares = 0.0
    for index, start in enumerate(range(0, trials, chunk)):
        size = min(chunk, trials - start)
        rng = np.random.default_rng([seed, index])
        draws = rng.choice(len(probabilities), size=(size, n), p=probabilities)
        s = rng.integers(0, 2, size=size)
        samples = outcomes[draws]
        broadcast = samples[:, :, layout.leader] ^ s[:, None]
        accepted = np.ones(size, dtype=bool)
        keys = []
        for j in layout.others:
            decoded = samples[:, :, j] ^ broadcast
            accepted &= (decoded == decoded[:, :1]).all(axis=1)
            keys.append(decoded[:, 0])
        keys = np.stack(keys, axis=1)
        mismatch = keys[accepted] != s[accepted][:, None]
        accepted_count += int(accepted.sum())
        agreed_count += int((~mismatch.any(axis=1)).sum())
        disagree_counts += mismatch.sum(axis=0)

        eve = np.zeros((size, n), dtype=np.int64) if layout.eve is None else samples[:, :, layout.eve]
        rows = np.concatenate([eve, broadcast, s[:, None]], axis=1)[accepted]
        views.update(map(tuple, rows.tolist()))

        if accepted.any():
            # log P(s_A = s, view, accepted) up to a shared factor, summed over mismatch patterns
            symbols = 2 * eve[accepted] + broadcast[accepted]
            with np.errstate(divide="ignore", invalid="ignore"):
                log_joint = logsumexp(log_likelihoods[symbols].sum(axis=1), axis=2)
                posterior = np.exp(log_joint - logsumexp(log_joint, axis=1, keepdims=True))
            leftover = entr(posterior).sum(axis=1) / _LN2
            leftover_sum += float(leftover.sum())
            leftover_squares += float((leftover ** 2).sum())

    accept = accepted_count / trials
    std_error = math.sqrt(accept * (1.0 - accept) / trials)
    if accepted_count == 0:
        logger.warning("No block was accepted in %d trials; agreement and Eve information default to 0.", trials)
        agree, agree_se, eve_info, disagree = 0.0, 0.0, 0.0, {name: 0.0 for name in layout.other_names}
        posterior_info, eve_se = 0.0, 0.0
    else:
        agree = agreed_count / accepted_count
        agree_se = math.sqrt(agree * (1.0 - agree) / accepted_count)
        disagree = {name: float(c) / accepted_count for name, c in zip(layout.other_names, disagree_counts)}
        eve_info = _plugin_information(views)
        mean = leftover_sum / accepted_count
        spread = max(leftover_squares / accepted_count - mean ** 2, 0.0)
        if accepted_count > 1:
            spread *= accepted_count / (accepted_count - 1)
        posterior_info = clamp_bits(1.0 - mean, "Posterior Eve information")
        eve_se = math.sqrt(spread / accepted_count)
    return _finish(
        n,
        accept,
        agree,
        disagree,
        eve_info,
        method=MONTE_CARLO,
        trials=trials,
        std_error=std_error,
        agree_std_error=agree_se,
        eve_information_biased=True,
        eve_posterior_information=posterior_info,
        eve_std_error=eve_se,
    )


def _plugin_information(views: Counter) -> Bits:
    """Empirical I(s : view) from counts keyed by view + (s,)."""
    joint = np.array(list(views.values()), dtype=float)
    s_counts: Counter = Counter()
    view_counts: Counter = Counter()
    for key, count in views.items():
        s_counts[key[-1]] += count
        view_counts[key[:-1]] += count
    value = (
        shannon_entropy(list(s_counts.values()), base=2)
        + shannon_entropy(list(view_counts.values()), base=2)
        - shannon_entropy(joint, base=2)
    )
    return clamp_bits(float(value), "Plug-in Eve information")
