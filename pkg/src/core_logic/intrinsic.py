# src/core_logic/intrinsic.py

import logging
from dataclasses import dataclass
from typing import Any, Dict, Iterable, Iterator, List, Optional, Tuple

import numpy as np
from scipy.optimize import minimize_scalar

from config.settings import (
    DEFAULT_MAX_ITERS,
    DEFAULT_RESTARTS,
    DEFAULT_SEED,
    IDENTITY_TOLERANCE,
    LINE_SEARCH_XATOL,
    SHORT_STEP,
    SWEEP_TOLERANCE,
    deterministic_search_budget,
)
from src.core_logic.measures import Bits, clamp_bits, cmi_array, cmi_batch
from src.data_processing.channel import Channel
from src.data_processing.distribution import JointDistribution
from src.data_processing.errors import BudgetExceededError, UsageError
from src.data_processing.variables import Splitting, names_in_order

logger = logging.getLogger(__name__)

EXHAUSTIVE = "exhaustive-deterministic"
LOCAL_SEARCH = "continuous-local-search"
COMBINED = "combined"


@dataclass(frozen=True)
class IntrinsicResult:
    """
    Best channel found for min over E -> E~ of I(x:y|E~).

    `value` is an upper bound on the intrinsic information; it is exact when a
    zero witness is found.
    """
    value: Bits
    witness: Channel
    method: str
    restarts_used: int
    converged: bool

    def to_dict(self) -> Dict[str, Any]:
        return {
            "value": self.value,
            "value_is_upper_bound": True,
            "method": self.method,
            "restarts_used": self.restarts_used,
            "converged": self.converged,
            "witness": self.witness.to_dict(),
            "witness_map": self.witness.as_map(),
        }


@dataclass(frozen=True)
class IntrinsicConfig:
    restarts: int = DEFAULT_RESTARTS
    seed: int = DEFAULT_SEED
    max_iters: int = DEFAULT_MAX_ITERS
    max_output_size: Optional[int] = None
    search_budget: Optional[int] = None
    deterministic: bool = True
    local: bool = True


def _joint_table(d: JointDistribution, x: Iterable[str], y: Iterable[str], eve: str) -> np.ndarray:
    """Dense P[x, y, e] with x and y flattened to composite symbols."""
    splitting = Splitting(frozenset(x), frozenset(y), eve)
    splitting.validate_for(d)
    return d.tensor([names_in_order(d.variables, splitting.side_x), names_in_order(d.variables, splitting.side_y), [eve]])


def _objective(pxye: np.ndarray, matrix: np.ndarray) -> float:
    return cmi_array(np.tensordot(pxye, matrix, axes=([2], [0])))


def cmi_after_channel(
    d: JointDistribution, x: Iterable[str], y: Iterable[str], eve: str, ch: Channel
) -> Bits:
    """I(x:y|E~) where E~ is Eve's variable passed through `ch`."""
    pxye = _joint_table(d, x, y, eve)
    if ch.input_size != pxye.shape[2]:
        raise UsageError(f"Channel takes {ch.input_size} inputs but '{eve}' has {pxye.shape[2]} symbols.")
    return clamp_bits(_objective(pxye, ch.matrix), "Conditional mutual information")


# --- Exhaustive search over deterministic maps ---

def count_partitions(n: int, max_blocks: int) -> int:
    """Number of partitions of an n-set into at most max_blocks blocks (sum of Stirling numbers)."""
    # stirling[k] holds S(i, k) for the current i
    stirling = [1] + [0] * max_blocks
    for _ in range(n):
        stirling = [0] + [k * stirling[k] + stirling[k - 1] for k in range(1, max_blocks + 1)]
    return sum(stirling)


def restricted_growth_strings(n: int, max_blocks: int) -> Iterator[Tuple[int, ...]]:
    """
    Yields every partition of range(n) into at most max_blocks blocks as its
    restricted growth string, in lexicographic order. Each string is the
    lexicographically smallest map in its relabelling class.
    """
    def extend(prefix: List[int], highest: int) -> Iterator[Tuple[int, ...]]:
        if len(prefix) == n:
            yield tuple(prefix)
            return
        for block in range(min(highest + 2, max_blocks)):
            prefix.append(block)
            yield from extend(prefix, max(highest, block))
            prefix.pop()

    if n == 0:
        return
    yield from extend([0], 0)


def min_over_deterministic(
    d: JointDistribution,
    x: Iterable[str],
    y: Iterable[str],
    eve: str,
    max_output_size: Optional[int] = None,
    budget: Optional[int] = None,
) -> IntrinsicResult:
    """
    Exact minimum of I(x:y|f(E)) over all functions f from Eve's alphabet to
    max_output_size symbols (default: Eve's alphabet size).

    Only one map per partition of Eve's alphabet is evaluated, since relabelling
    the outputs leaves the objective unchanged; ties keep the lexicographically
    smallest map.

    Raises:
        BudgetExceededError: When the number of partitions exceeds the budget.
    """
    pxye = _joint_table(d, x, y, eve)
    n_symbols = pxye.shape[2]
    outputs = n_symbols if max_output_size is None else int(max_output_size)
    if outputs < 1:
        raise UsageError("max_output_size must be at least 1.")
    limit = deterministic_search_budget() if budget is None else budget
    space = count_partitions(n_symbols, outputs)
    if space > limit:
        raise BudgetExceededError(
            f"Deterministic search over {space} partitions of Eve's {n_symbols} symbols exceeds the budget {limit}."
        )
    logger.info("Exhaustive search over %d partitions of %d Eve symbols.", space, n_symbols)

    best_value, best_map = np.inf, None
    for mapping in restricted_growth_strings(n_symbols, outputs):
        reduced = np.zeros(pxye.shape[:2] + (outputs,))
        for symbol, block in enumerate(mapping):
            reduced[:, :, block] += pxye[:, :, symbol]
        value = cmi_array(reduced)
        if value < best_value - IDENTITY_TOLERANCE:
            best_value, best_map = value, mapping

    witness = Channel.from_map(best_map, outputs)
    logger.info("Best deterministic map %s gives %.12f bits.", list(best_map), best_value)
    return IntrinsicResult(
        value=clamp_bits(best_value, "Intrinsic information"),
        witness=witness,
        method=EXHAUSTIVE,
        restarts_used=0,
        converged=True,
    )


# --- Continuous coordinate descent over stochastic channels ---

def _descend(pxye: np.ndarray, matrix: np.ndarray, max_iters: int) -> Tuple[float, np.ndarray, bool]:
    """
    Row-wise coordinate descent. Each row is nudged towards every simplex
    vertex (a short step and the full jump, evaluated as one batch); a bounded
    line search then follows the steepest of those directions. A move must
    improve by more than IDENTITY_TOLERANCE, and the descent stops after a
    sweep that gains less than SWEEP_TOLERANCE.

    Returns:
        Tuple[float, np.ndarray, bool]: Final value, channel matrix, and whether
            the descent settled before max_iters sweeps.
    """
    n_rows, n_cols = matrix.shape
    vertices = np.eye(n_cols)
    value = _objective(pxye, matrix)
    converged = value <= IDENTITY_TOLERANCE
    for _ in range(max_iters):
        if converged:
            break
        sweep_start = value
        mixed = np.tensordot(pxye, matrix, axes=([2], [0]))
        for row in range(n_rows):
            slice_e = pxye[:, :, row][:, :, None]
            if not slice_e.any():
                continue
            start = matrix[row].copy()
            rest = mixed - slice_e * start[None, None, :]

            candidates = np.vstack([(1.0 - SHORT_STEP) * start + SHORT_STEP * vertices, vertices])
            scores = cmi_batch(rest[None] + slice_e[None] * candidates[:, None, None, :])
            slopes, jumps = scores[:n_cols] - value, scores[n_cols:]
            best_k = int(np.argmin(jumps))
            best_value, best_row = float(jumps[best_k]), vertices[best_k]

            steepest = int(np.argmin(slopes))
            if slopes[steepest] < -IDENTITY_TOLERANCE:
                target = vertices[steepest]

                def along(t: float) -> float:
                    return cmi_array(rest + slice_e * ((1.0 - t) * start + t * target)[None, None, :])

                found = minimize_scalar(
                    along, bounds=(0.0, 1.0), method="bounded", options={"xatol": LINE_SEARCH_XATOL}
                )
                if found.fun < best_value:
                    best_value, best_row = float(found.fun), (1.0 - found.x) * start + found.x * target

            if best_value < value - IDENTITY_TOLERANCE:
                matrix[row] = best_row / best_row.sum()
                mixed = rest + slice_e * matrix[row][None, None, :]
                value = cmi_array(mixed)
        converged = sweep_start - value < SWEEP_TOLERANCE or value <= IDENTITY_TOLERANCE
    return value, matrix, converged


def local_search(
    d: JointDistribution,
    x: Iterable[str],
    y: Iterable[str],
    eve: str,
    restarts: int = DEFAULT_RESTARTS,
    seed: int = DEFAULT_SEED,
    max_iters: int = DEFAULT_MAX_ITERS,
    max_output_size: Optional[int] = None,
    include_deterministic: bool = True,
    budget: Optional[int] = None,
) -> IntrinsicResult:
    """
    Random-restart local search over row-stochastic channels on Eve's variable.

    Each restart draws its rows uniformly from the simplex (normalized
    exponentials) with a generator keyed by (seed, restart index), then runs
    coordinate descent. Restarts stop early once a zero witness is found.

    Args:
        d (JointDistribution): The distribution.
        x, y (Iterable[str]): The two honest sides.
        eve (str): The eavesdropper variable.
        restarts (int): Number of random starting channels (>= 1).
        seed (int): Base seed.
        max_iters (int): Maximum number of full sweeps per restart.
        max_output_size (Optional[int]): Output alphabet size, default Eve's alphabet size.
        include_deterministic (bool): Also run the exhaustive deterministic search
            when it fits its budget, and keep it if it is at least as good.
        budget (Optional[int]): Budget for that deterministic search.

    Returns:
        IntrinsicResult: The best channel over all restarts.
    """
    if restarts < 1:
        raise UsageError(f"local_search needs at least one restart, got {restarts}.")
    pxye = _joint_table(d, x, y, eve)
    n_symbols = pxye.shape[2]
    outputs = n_symbols if max_output_size is None else int(max_output_size)

    best: Optional[Tuple[float, np.ndarray, bool]] = None
    used = 0
    for restart in range(restarts):
        rng = np.random.default_rng([seed, restart])
        matrix = rng.exponential(size=(n_symbols, outputs))
        matrix /= matrix.sum(axis=1, keepdims=True)
        value, matrix, converged = _descend(pxye, matrix, max_iters)
        used += 1
        logger.info("Restart %d: %.12f bits (converged=%s).", restart, value, converged)
        if best is None or value < best[0]:
            best = (value, matrix.copy(), converged)
        if best[0] <= IDENTITY_TOLERANCE:
            break

    value, matrix, converged = best
    if not converged:
        logger.warning("Local search stopped after %d sweeps without converging.", max_iters)
    result = IntrinsicResult(
        value=clamp_bits(value, "Intrinsic information"),
        witness=Channel(matrix),
        method=LOCAL_SEARCH,
        restarts_used=used,
        converged=converged,
    )

    if include_deterministic:
        limit = deterministic_search_budget() if budget is None else budget
        if count_partitions(n_symbols, outputs) <= limit:
            exhaustive = min_over_deterministic(d, x, y, eve, outputs, limit)
            if exhaustive.value <= result.value + IDENTITY_TOLERANCE:
                result = IntrinsicResult(exhaustive.value, exhaustive.witness, COMBINED, used, converged)
    return result


def intrinsic_info(
    d: JointDistribution,
    x: Iterable[str],
    y: Iterable[str],
    eve: str,
    config: Optional[IntrinsicConfig] = None,
) -> IntrinsicResult:
    """
    The toolkit's intrinsic-information estimate: the better of the exhaustive
    deterministic search and the continuous local search.

    The reported value is an upper bound on the true minimum, exact whenever a
    zero witness is found. Ties go to the deterministic witness.
    """
    config = config or IntrinsicConfig()
    candidates: List[IntrinsicResult] = []
    if config.deterministic:
        try:
            candidates.append(
                min_over_deterministic(d, x, y, eve, config.max_output_size, config.search_budget)
            )
        except BudgetExceededError as e:
            if not config.local:
                raise
            logger.warning("Skipping the exhaustive search: %s", e)
    if config.local and not (candidates and candidates[0].value <= IDENTITY_TOLERANCE):
        candidates.append(
            local_search(
                d, x, y, eve,
                restarts=config.restarts,
                seed=config.seed,
                max_iters=config.max_iters,
                max_output_size=config.max_output_size,
                include_deterministic=False,
            )
        )
    if not candidates:
        raise UsageError("intrinsic_info needs at least one of the deterministic or local searches enabled.")

    winner = candidates[0]
    for candidate in candidates[1:]:
        if candidate.value < winner.value - IDENTITY_TOLERANCE:
            winner = candidate
    restarts_used = sum(c.restarts_used for c in candidates)
    return IntrinsicResult(winner.value, winner.witness, winner.method, restarts_used, winner.converged)
