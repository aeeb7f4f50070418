# src/core_logic/certification.py

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, FrozenSet, List, Optional, Tuple

from config.settings import ACTIVATION_LENGTHS, ZERO_WITNESS_TOLERANCE
from src.core_logic.intrinsic import IntrinsicConfig, IntrinsicResult, cmi_after_channel, intrinsic_info
from src.core_logic.protocols import ProtocolStats, equality_filter, repeated_code_exact
from src.data_processing.distribution import JointDistribution
from src.data_processing.errors import BudgetExceededError, UsageError
from src.data_processing.variables import Splitting

logger = logging.getLogger(__name__)

BOUND_INFORMATION = "bound-information"
DISTILLABLE = "distillable"
NO_SECRET_CORRELATIONS = "no secret correlations"
INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class CertifyConfig:
    intrinsic: IntrinsicConfig = IntrinsicConfig(restarts=4, max_iters=50)
    zero_tolerance: float = ZERO_WITNESS_TOLERANCE
    activation_lengths: Tuple[int, ...] = ACTIVATION_LENGTHS


@dataclass(frozen=True)
class SplittingEvidence:
    splitting: Splitting
    intrinsic: IntrinsicResult
    zero_certified: bool

    def to_dict(self) -> Dict[str, Any]:
        return {
            "splitting": self.splitting.label,
            "side_x": sorted(self.splitting.side_x),
            "side_y": sorted(self.splitting.side_y),
            "eve": self.splitting.eve,
            "secret_key_rate_is_zero": self.zero_certified,
            "intrinsic_information": self.intrinsic.to_dict(),
        }


@dataclass(frozen=True)
class FilterEvidence:
    kept_equal: Tuple[str, str]
    survival_probability: float
    filtered_key_bound: float
    rate: float

    def to_dict(self) -> Dict[str, Any]:
        return {
            "announce_equal": list(self.kept_equal),
            "survival_probability": self.survival_probability,
            "filtered_key_lower_bound": self.filtered_key_bound,
            "key_rate_lower_bound": self.rate,
        }


@dataclass(frozen=True)
class Certificate:
    """
    Machine-checkable report on bound information for a tripartite distribution.

    pairwise: zero witnesses across {A,B}-{C} and {A,C}-{B} show that no pair of
        honest parties can distill a key (S <= intrinsic information).
    activation: evidence across {A}-{B,C}; a positive rate there means the
        distribution holds secret correlations and cannot be created by LOPC.
    repeated_code: protocol statistics used when a pairwise cut is not zero.
    """
    honest: Tuple[str, ...]
    eve: str
    pairwise: Tuple[SplittingEvidence, ...]
    activation: SplittingEvidence
    filter: Optional[FilterEvidence]
    repeated_code: Tuple[ProtocolStats, ...]
    bound_information: bool
    reason: str
    notes: Tuple[str, ...] = field(default_factory=tuple)

    @property
    def secret_correlations(self) -> bool:
        return self.reason in (BOUND_INFORMATION, DISTILLABLE)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "honest": list(self.honest),
            "eve": self.eve,
            "bound_information": self.bound_information,
            "reason": self.reason,
            "secret_correlations": self.secret_correlations,
            "pairwise_splittings": [e.to_dict() for e in self.pairwise],
            "activation_splitting": self.activation.to_dict(),
            "equality_filter": None if self.filter is None else self.filter.to_dict(),
            "repeated_code": [s.to_dict() for s in self.repeated_code],
            "notes": list(self.notes),
        }

    def recheck(self, d: JointDistribution, tolerance: float = ZERO_WITNESS_TOLERANCE) -> List[str]:
        """
        Re-evaluates every embedded witness on d.

        Returns:
            List[str]: One message per discrepancy; empty when the certificate holds.
        """
        problems = []
        for evidence in self.pairwise + (self.activation,):
            s = evidence.splitting
            value = cmi_after_channel(d, s.side_x, s.side_y, s.eve, evidence.intrinsic.witness)
            if abs(value - evidence.intrinsic.value) > tolerance:
                problems.append(f"{s.label}: witness gives {value!r}, certificate claims {evidence.intrinsic.value!r}")
            if evidence.zero_certified and value > tolerance:
                problems.append(f"{s.label}: claimed zero but witness gives {value!r}")
        if self.filter is not None:
            p, q = self.filter.kept_equal
            survival = equality_filter(d, p, q).survival_probability
            if abs(survival - self.filter.survival_probability) > tolerance:
                problems.append(f"filter {p}={q}: survival {survival!r} differs from {self.filter.survival_probability!r}")
        return problems


def _evidence(d: JointDistribution, x: FrozenSet[str], y: FrozenSet[str], eve: str, config: CertifyConfig):
    splitting = Splitting(x, y, eve)
    result = intrinsic_info(d, x, y, eve, config.intrinsic)
    logger.info("Intrinsic information across %s: %.12f (%s).", splitting.label, result.value, result.method)
    return SplittingEvidence(splitting, result, result.value <= config.zero_tolerance)


def certify(d: JointDistribution, config: Optional[CertifyConfig] = None) -> Certificate:
    """
    Checks the two defining conditions of multipartite bound information.

    (a) Every pair of honest parties has zero key rate: certified by zero
        intrinsic-information witnesses across {A,B}-{C} and {A,C}-{B}, since a
        key between any pair is a key across one of these cuts.
    (b) The correlations cannot be created by LOPC: certified by a positive
        key rate across {A}-{B,C} when B and C announce the realizations where
        they are equal.
    When (a) fails, the repeated-code protocol is run to show distillability.

    Args:
        d (JointDistribution): Three binary honest variables and one eavesdropper.
        config (Optional[CertifyConfig]): Search and protocol settings.

    Returns:
        Certificate: Verdict, reason and all numeric evidence.
    """
    config = config or CertifyConfig()
    honest = d.honest_names
    eve = d.eve_name
    if len(honest) != 3 or eve is None or any(d.variable(h).alphabet_size != 2 for h in honest):
        raise UsageError(
            "Certificates cover three binary honest parties plus one eavesdropper; "
            f"got honest variables {list(honest)} and eavesdropper {eve!r}."
        )
    a, b, c = honest
    pairwise = (
        _evidence(d, frozenset({a, b}), frozenset({c}), eve, config),
        _evidence(d, frozenset({a, c}), frozenset({b}), eve, config),
    )
    activation = _evidence(d, frozenset({a}), frozenset({b, c}), eve, config)

    notes: List[str] = []
    filter_evidence = None
    try:
        filtered = equality_filter(d, b, c)
        bound = filtered.key_rate({a}, {b, c}, eve) / filtered.survival_probability
        filter_evidence = FilterEvidence((b, c), filtered.survival_probability, bound, filtered.key_rate({a}, {b, c}, eve))
    except UsageError as e:
        notes.append(f"equality filter {b}={c} unavailable: {e}")

    all_zero = all(e.zero_certified for e in pairwise)
    positive_rate = filter_evidence is not None and filter_evidence.rate > config.zero_tolerance

    stats: List[ProtocolStats] = []
    if all_zero and positive_rate:
        reason = BOUND_INFORMATION
    else:
        if not all_zero:
            for n in config.activation_lengths:
                try:
                    stats.append(repeated_code_exact(d, n))
                except BudgetExceededError as e:
                    notes.append(f"repeated code stopped at N={n}: {e}")
                    break
        distillable = any(
            s.key_rate_lower_bound is not None and s.key_rate_lower_bound > config.zero_tolerance for s in stats
        )
        if distillable:
            reason = DISTILLABLE
        elif all_zero and not positive_rate and activation.zero_certified:
            reason = NO_SECRET_CORRELATIONS
        else:
            reason = INCONCLUSIVE
    logger.info("Certificate verdict: %s.", reason)
    return Certificate(
        honest=honest,
        eve=eve,
        pairwise=pairwise,
        activation=activation,
        filter=filter_evidence,
        repeated_code=tuple(stats),
        bound_information=reason == BOUND_INFORMATION,
        reason=reason,
        notes=tuple(notes),
    )
