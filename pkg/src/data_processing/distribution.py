# src/data_processing/distribution.py

import itertools
import logging
import math
from fractions import Fraction
from functools import cached_property
from types import MappingProxyType
from typing import Any, Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from config.settings import IDENTITY_TOLERANCE, NORMALIZATION_TOLERANCE, enumeration_budget
from src.data_processing.channel import Channel
from src.data_processing.errors import (
    BudgetExceededError,
    DistributionError,
    UnknownVariableError,
    UsageError,
)
from src.data_processing.variables import Role, VariableSpec

logger = logging.getLogger(__name__)

Outcome = Tuple[int, ...]
Mass = Union[float, Fraction]


def parse_probability(value: Any) -> Mass:
    """
    Reads a probability from a table cell or JSON field.

    Rational strings ("1/6") and Fractions stay exact; decimal strings and numbers
    become binary64 floats.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise DistributionError(f"Probability cannot be a boolean: {value!r}.")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        return value
    if isinstance(value, str):
        text = value.strip()
        try:
            return Fraction(text) if "/" in text else float(text)
        except (ValueError, ZeroDivisionError) as e:
            raise DistributionError(f"Cannot read probability '{value}'.") from e
    raise DistributionError(f"Cannot read probability {value!r}.")


def _ravel(symbols: Sequence[int], factors: Sequence[int]) -> int:
    index = 0
    for symbol, size in zip(symbols, factors):
        index = index * size + symbol
    return index


class JointDistribution:
    """
    Sparse probability mass function over an ordered tuple of finite variables.

    Immutable: every operation in this module returns a fresh distribution.
    Zero-probability outcomes are not stored. Masses are either all Fractions
    (exact, e.g. tables built from rationals) or floats; `pmf` always gives floats.
    """

    def __init__(self, variables: Iterable[VariableSpec], masses: Mapping[Outcome, Mass]):
        self._variables: Tuple[VariableSpec, ...] = tuple(variables)
        cleaned = {}
        for outcome, mass in masses.items():
            if mass != 0:
                cleaned[tuple(int(s) for s in outcome)] = mass
        if cleaned and any(isinstance(m, float) for m in cleaned.values()):
            cleaned = {k: float(m) for k, m in cleaned.items()}
        self._masses = MappingProxyType(dict(sorted(cleaned.items())))

    # --- Accessors ---

    @property
    def variables(self) -> Tuple[VariableSpec, ...]:
        return self._variables

    @property
    def masses(self) -> Mapping[Outcome, Mass]:
        return self._masses

    @cached_property
    def pmf(self) -> Dict[Outcome, float]:
        return {k: float(m) for k, m in self._masses.items()}

    @property
    def is_exact(self) -> bool:
        return bool(self._masses) and all(isinstance(m, Fraction) for m in self._masses.values())

    @property
    def names(self) -> Tuple[str, ...]:
        return tuple(v.name for v in self._variables)

    @property
    def honest_names(self) -> Tuple[str, ...]:
        return tuple(v.name for v in self._variables if not v.is_eve)

    @property
    def eve_name(self) -> Optional[str]:
        for v in self._variables:
            if v.is_eve:
                return v.name
        return None

    def index_of(self, name: str) -> int:
        for i, v in enumerate(self._variables):
            if v.name == name:
                return i
        raise UnknownVariableError(f"Unknown variable '{name}'; known variables are {list(self.names)}.")

    def variable(self, name: str) -> VariableSpec:
        return self._variables[self.index_of(name)]

    def indices(self, names: Iterable[str]) -> List[int]:
        """Positions of `names`, in the distribution's variable order."""
        wanted = set(names)
        for name in wanted:
            self.index_of(name)
        return [i for i, v in enumerate(self._variables) if v.name in wanted]

    def probability(self, **values: int) -> float:
        """P(name1=v1, name2=v2, ...) for any subset of variables."""
        positions = {self.index_of(n): s for n, s in values.items()}
        return float(sum(m for o, m in self._masses.items() if all(o[i] == s for i, s in positions.items())))

    def support(self) -> Tuple[np.ndarray, np.ndarray]:
        """Outcome array of shape (k, n_variables) and the matching probabilities."""
        outcomes = np.array(list(self._masses.keys()), dtype=np.int64).reshape(len(self._masses), len(self._variables))
        return outcomes, np.array(list(self.pmf.values()), dtype=float)

    def tensor(self, groups: Sequence[Sequence[str]], budget: Optional[int] = None) -> np.ndarray:
        """
        Dense array of the marginal over `groups`; axis g indexes the joint
        symbol of group g (lexicographic over its members in variable order).
        """
        positions = [self.indices(group) for group in groups]
        shape = tuple(math.prod(self._variables[i].alphabet_size for i in pos) for pos in positions)
        size = math.prod(shape)
        limit = enumeration_budget() if budget is None else budget
        if size > limit:
            raise BudgetExceededError(f"Dense table of {size} cells exceeds the enumeration budget {limit}.")
        factors = [[self._variables[i].alphabet_size for i in pos] for pos in positions]
        array = np.zeros(shape)
        for outcome, p in self.pmf.items():
            index = tuple(_ravel([outcome[i] for i in pos], f) for pos, f in zip(positions, factors))
            array[index] += p
        return array

    def allclose(self, other: "JointDistribution", tol: float = IDENTITY_TOLERANCE) -> bool:
        """Same variables (names, sizes, roles) and every probability within `tol`."""
        mine = [(v.name, v.alphabet_size, v.role) for v in self._variables]
        theirs = [(v.name, v.alphabet_size, v.role) for v in other.variables]
        if mine != theirs:
            return False
        keys = set(self.pmf) | set(other.pmf)
        return all(abs(self.pmf.get(k, 0.0) - other.pmf.get(k, 0.0)) <= tol for k in keys)

    def __repr__(self) -> str:
        spec = ", ".join(f"{v.name}:{v.alphabet_size}{'*' if v.is_eve else ''}" for v in self._variables)
        return f"JointDistribution([{spec}], {len(self._masses)} outcomes)"

    # --- Construction ---

    @classmethod
    def from_rows(
        cls,
        variables: Iterable[Union[VariableSpec, Tuple[str, int, str]]],
        rows: Iterable[Tuple[Sequence[int], Any]],
        check: bool = True,
    ) -> "JointDistribution":
        """
        Builds a distribution from (outcome, probability) rows.

        Args:
            variables: VariableSpec objects or (name, alphabet_size, role) triples.
            rows: Outcome tuples with probabilities; strings like "1/6" stay exact.
            check (bool): Raise DistributionError when the result fails validation.

        Returns:
            JointDistribution: The new distribution.
        """
        specs = [v if isinstance(v, VariableSpec) else VariableSpec(v[0], int(v[1]), Role(v[2])) for v in variables]
        masses: Dict[Outcome, Mass] = {}
        negatives = []
        for outcome, probability in rows:
            key = tuple(int(s) for s in outcome)
            if key in masses:
                raise DistributionError(f"Outcome {key} appears twice.")
            mass = parse_probability(probability)
            if mass < 0:
                negatives.append((key, mass))
            masses[key] = mass
        if negatives and check:
            key, mass = negatives[0]
            raise DistributionError(f"Probability of outcome {key} is negative ({float(mass)!r}).")
        d = cls(specs, masses)
        if check:
            check_valid(d)
        return d

    @classmethod
    def point_mass(cls, variables: Iterable[Union[VariableSpec, Tuple[str, int, str]]], outcome: Sequence[int]):
        return cls.from_rows(variables, [(outcome, Fraction(1))])


# --- Validation ---

def validate(d: JointDistribution) -> Optional[str]:
    """
    Checks every JointDistribution invariant.

    Returns:
        Optional[str]: None when the distribution is valid, otherwise a sentence
            naming the first violated invariant and the offending entry.
    """
    seen = set()
    eve_count = 0
    for v in d.variables:
        if not isinstance(v.name, str) or not v.name:
            return f"variable name {v.name!r} is not an identifier"
        if v.name in seen:
            return f"variable name '{v.name}' is not unique"
        seen.add(v.name)
        if not isinstance(v.alphabet_size, int) or v.alphabet_size < 1:
            return f"alphabet size of '{v.name}' is {v.alphabet_size!r}, must be a positive integer"
        eve_count += v.is_eve
    if eve_count > 1:
        return f"{eve_count} variables carry the eavesdropper role, at most one is allowed"

    total = 0.0
    for outcome, mass in d.masses.items():
        if len(outcome) != len(d.variables):
            return f"outcome {outcome} has {len(outcome)} symbols for {len(d.variables)} variables"
        for symbol, v in zip(outcome, d.variables):
            if not 0 <= symbol < v.alphabet_size:
                return f"outcome {outcome} uses symbol {symbol} outside the alphabet of '{v.name}'"
        p = float(mass)
        if not math.isfinite(p):
            return f"probability of outcome {outcome} is not finite"
        if p < 0:
            return f"probability of outcome {outcome} is negative ({p!r})"
        total += p
    if abs(total - 1.0) > NORMALIZATION_TOLERANCE:
        return f"sum ≠ 1: probabilities add up to {total!r}"
    return None


def check_valid(d: JointDistribution) -> JointDistribution:
    violation = validate(d)
    if violation is not None:
        raise DistributionError(f"Invalid distribution: {violation}.")
    return d


# --- Algebra ---

def marginalize(d: JointDistribution, keep: Iterable[str]) -> JointDistribution:
    """Sums out every variable not in `keep`; the kept variables stay in their order."""
    keep = set(keep)
    if not keep:
        raise UsageError("marginalize needs at least one variable to keep.")
    positions = d.indices(keep)
    masses: Dict[Outcome, Mass] = {}
    for outcome, mass in d.masses.items():
        key = tuple(outcome[i] for i in positions)
        masses[key] = masses.get(key, 0) + mass
    return JointDistribution([d.variables[i] for i in positions], masses)


def _renormalize(
    d: JointDistribution, selected: Dict[Outcome, Mass], drop: Optional[int], description: str
) -> Tuple[JointDistribution, float]:
    event = sum(selected.values())
    if float(event) <= 0:
        raise UsageError(f"Cannot condition on {description}: the event has probability zero.")
    variables = [v for i, v in enumerate(d.variables) if i != drop]
    masses = {
        (tuple(s for i, s in enumerate(o) if i != drop) if drop is not None else o): m / event
        for o, m in selected.items()
    }
    return JointDistribution(variables, masses), float(event)


def condition(d: JointDistribution, var: str, value: int) -> Tuple[JointDistribution, float]:
    """
    Conditions on var = value.

    Returns:
        Tuple[JointDistribution, float]: The renormalized distribution over the
            remaining variables and P(var = value).
    """
    position = d.index_of(var)
    size = d.variables[position].alphabet_size
    if not 0 <= value < size:
        raise UsageError(f"Value {value} is outside the alphabet of '{var}' (size {size}).")
    selected = {o: m for o, m in d.masses.items() if o[position] == value}
    return _renormalize(d, selected, position, f"{var}={value}")


def restrict(d: JointDistribution, predicate: Callable[[Dict[str, int]], bool]) -> Tuple[JointDistribution, float]:
    """Conditions on a public event, keeping every variable. Returns (distribution, P(event))."""
    names = d.names
    selected = {o: m for o, m in d.masses.items() if predicate(dict(zip(names, o)))}
    return _renormalize(d, selected, None, "the requested event")


def merge(d: JointDistribution, parts: Iterable[str], new_name: str) -> JointDistribution:
    """
    Replaces the honest variables `parts` by one composite variable.

    The composite sits where the first part was; its symbol is the lexicographic
    index of the parts' symbols (in variable order), and the decode table is kept
    in the new VariableSpec.
    """
    parts = set(parts)
    if not parts:
        raise UsageError("merge needs at least one variable.")
    positions = d.indices(parts)
    if any(d.variables[i].is_eve for i in positions):
        raise UsageError("The eavesdropper variable cannot be merged with honest variables.")
    if new_name in d.names and new_name not in parts:
        raise UsageError(f"Variable name '{new_name}' is already taken.")
    factors = tuple(d.variables[i].alphabet_size for i in positions)
    merged = VariableSpec(
        new_name,
        math.prod(factors),
        Role.HONEST,
        components=tuple(d.variables[i].name for i in positions),
        factors=factors,
    )
    first = positions[0]
    variables = [merged if i == first else v for i, v in enumerate(d.variables) if i == first or i not in positions]
    masses: Dict[Outcome, Mass] = {}
    for outcome, mass in d.masses.items():
        symbol = _ravel([outcome[i] for i in positions], factors)
        key = tuple(symbol if i == first else s for i, s in enumerate(outcome) if i == first or i not in positions)
        masses[key] = mass
    return JointDistribution(variables, masses)


def permute(d: JointDistribution, mapping: Mapping[str, str]) -> JointDistribution:
    """
    Relabels honest parties: the value held by v moves to mapping[v].

    With mapping A->B, B->C, C->A this gives P'(A,B,C,E) = P(B,C,A,E).
    Names missing from `mapping` stay in place.
    """
    honest = set(d.honest_names)
    unknown = (set(mapping) | set(mapping.values())) - honest
    if unknown:
        raise UsageError(f"Permutation mentions {sorted(unknown)}, which are not honest variables.")
    full = {name: mapping.get(name, name) for name in honest}
    if len(set(full.values())) != len(full):
        raise UsageError(f"Mapping {dict(mapping)} is not a bijection on the honest variables.")
    target = {d.index_of(src): d.index_of(dst) for src, dst in full.items()}
    variables = list(d.variables)
    for src, dst in target.items():
        variables[dst] = d.variables[src].renamed(d.variables[dst].name)
    masses: Dict[Outcome, Mass] = {}
    for outcome, mass in d.masses.items():
        moved = list(outcome)
        for src, dst in target.items():
            moved[dst] = outcome[src]
        masses[tuple(moved)] = mass
    return JointDistribution(variables, masses)


def mix(ds: Sequence[JointDistribution], weights: Sequence[Any]) -> JointDistribution:
    """
    Convex combination of distributions over the same honest variables.

    Eve's symbols are tagged with their source: the result's Eve alphabet is the
    disjoint union of the inputs', symbol tags[k] = (source index, original symbol),
    so Eve keeps knowing which distribution occurred.
    """
    if not ds or len(ds) != len(weights):
        raise UsageError("mix needs one weight per distribution.")
    weights = [parse_probability(w) for w in weights]
    if any(w < 0 for w in weights) or abs(float(sum(weights)) - 1.0) > NORMALIZATION_TOLERANCE:
        raise UsageError(f"Mixture weights {[float(w) for w in weights]} are not a probability vector.")
    layout = [(v.name, v.alphabet_size, v.role) for v in ds[0].variables if not v.is_eve]
    eve = ds[0].eve_name
    for d in ds[1:]:
        if [(v.name, v.alphabet_size, v.role) for v in d.variables if not v.is_eve] != layout or d.eve_name != eve:
            raise UsageError("All mixed distributions must share the same honest variables and alphabets.")
        if eve is not None and d.index_of(eve) != ds[0].index_of(eve):
            raise UsageError("All mixed distributions must place the eavesdropper at the same position.")

    masses: Dict[Outcome, Mass] = {}
    if eve is None:
        for d, w in zip(ds, weights):
            for outcome, mass in d.masses.items():
                masses[outcome] = masses.get(outcome, 0) + w * mass
        return JointDistribution(ds[0].variables, masses)

    position = ds[0].index_of(eve)
    tags: List[Any] = []
    offsets = []
    for source, d in enumerate(ds):
        offsets.append(len(tags))
        spec = d.variables[position]
        tags.extend((source, spec.decode(e)) for e in range(spec.alphabet_size))
    for d, w, offset in zip(ds, weights, offsets):
        for outcome, mass in d.masses.items():
            key = tuple(s + offset if i == position else s for i, s in enumerate(outcome))
            masses[key] = masses.get(key, 0) + w * mass
    eve_spec = VariableSpec(eve, len(tags), Role.EVE, tags=tuple(tags))
    variables = [eve_spec if i == position else v for i, v in enumerate(ds[0].variables)]
    return JointDistribution(variables, masses)


def _same_conditional(a: Dict[Outcome, float], b: Dict[Outcome, float]) -> bool:
    keys = set(a) | set(b)
    return all(abs(a.get(k, 0.0) - b.get(k, 0.0)) <= NORMALIZATION_TOLERANCE for k in keys)


def eve_canonicalize(d: JointDistribution) -> JointDistribution:
    """
    Merges Eve symbols that carry the same information about the honest parties.

    Two symbols are merged when P(honest | e) agree within 1e-9; zero-probability
    symbols disappear. Classes are numbered by the smallest honest outcome they
    support (ties: first original symbol), so P1's own labels are preserved.
    """
    eve = d.eve_name
    if eve is None:
        raise UsageError("eve_canonicalize needs a distribution with an eavesdropper variable.")
    position = d.index_of(eve)

    def rest(outcome: Outcome) -> Outcome:
        return outcome[:position] + outcome[position + 1:]

    by_symbol: Dict[int, Dict[Outcome, Mass]] = {}
    for outcome, mass in d.masses.items():
        by_symbol.setdefault(outcome[position], {})[rest(outcome)] = mass

    classes: List[Tuple[Dict[Outcome, float], List[int]]] = []
    for symbol in sorted(by_symbol):
        joint = by_symbol[symbol]
        total = float(sum(joint.values()))
        conditional = {k: float(m) / total for k, m in joint.items()}
        for representative, members in classes:
            if _same_conditional(representative, conditional):
                members.append(symbol)
                break
        else:
            classes.append((conditional, [symbol]))

    def sort_key(entry):
        conditional, members = entry
        return (min(k for k, p in conditional.items() if p > 0), members[0])

    ordered = sorted(classes, key=sort_key)
    relabel = {symbol: label for label, (_, members) in enumerate(ordered) for symbol in members}
    masses: Dict[Outcome, Mass] = {}
    for outcome, mass in d.masses.items():
        key = tuple(relabel[s] if i == position else s for i, s in enumerate(outcome))
        masses[key] = masses.get(key, 0) + mass
    variables = [v.plain(len(ordered)) if i == position else v for i, v in enumerate(d.variables)]
    logger.info("Eve alphabet canonicalized from %d to %d symbols.", d.variables[position].alphabet_size, len(ordered))
    return JointDistribution(variables, masses)


def iid_power(d: JointDistribution, n: int, budget: Optional[int] = None) -> JointDistribution:
    """
    n independent copies: each variable becomes the n-tuple of its copies.

    Raises:
        BudgetExceededError: When support_size ** n exceeds the enumeration budget.
    """
    if n < 1:
        raise UsageError(f"iid_power needs n >= 1, got {n}.")
    limit = enumeration_budget() if budget is None else budget
    count = len(d.masses) ** n
    if count > limit:
        raise BudgetExceededError(f"{n} copies give {count} outcomes, above the enumeration budget {limit}.")
    if n == 1:
        return d
    variables = [
        VariableSpec(v.name, v.alphabet_size ** n, v.role, factors=(v.alphabet_size,) * n) for v in d.variables
    ]
    sizes = [v.alphabet_size for v in d.variables]
    masses: Dict[Outcome, Mass] = {}
    items = list(d.masses.items())
    for combo in itertools.product(items, repeat=n):
        key = tuple(_ravel([o[i] for o, _ in combo], [sizes[i]] * n) for i in range(len(sizes)))
        masses[key] = math.prod(m for _, m in combo)
    return JointDistribution(variables, masses)


def apply_channel(d: JointDistribution, var: str, ch: Channel, new_name: Optional[str] = None) -> JointDistribution:
    """
    Passes `var` through a channel: P(..., e~) = sum_e P(..., e) ch[e][e~].

    The new variable keeps the role (and by default the name) of `var`.
    Deterministic entries keep exact masses exact.
    """
    position = d.index_of(var)
    spec = d.variables[position]
    if ch.input_size != spec.alphabet_size:
        raise UsageError(
            f"Channel takes {ch.input_size} inputs but '{var}' has an alphabet of {spec.alphabet_size}."
        )
    masses: Dict[Outcome, Mass] = {}
    for outcome, mass in d.masses.items():
        row = ch.matrix[outcome[position]]
        for symbol in np.flatnonzero(row):
            weight = row[symbol]
            key = outcome[:position] + (int(symbol),) + outcome[position + 1:]
            masses[key] = masses.get(key, 0) + (mass if weight == 1.0 else mass * float(weight))
    new_spec = VariableSpec(new_name or spec.name, ch.output_size, spec.role)
    variables = [new_spec if i == position else v for i, v in enumerate(d.variables)]
    return JointDistribution(variables, masses)
