from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, FrozenSet, Iterable, Tuple

import numpy as np

from src.data_processing.errors import UsageError


class Role(str, Enum):
    HONEST = "honest"
    EVE = "eve"


@dataclass(frozen=True)
class VariableSpec:
    """
    One finite-alphabet random variable of a joint distribution.

    Symbols are the integers 0..alphabet_size-1. Composite variables keep a decode
    table so the original symbols can be recovered:
      - `factors` (with `components` for merges): symbol is the lexicographic
        mixed-radix index of a tuple, as produced by merge and iid_power.
      - `tags`: symbol k stands for tags[k], e.g. (source index, original symbol)
        for the Eve variable of a mixture.
    """
    name: str
    alphabet_size: int
    role: Role = Role.HONEST
    components: Tuple[str, ...] = ()
    factors: Tuple[int, ...] = ()
    tags: Tuple[Any, ...] = field(default=(), compare=False)

    @property
    def is_eve(self) -> bool:
        return self.role is Role.EVE

    def decode(self, symbol: int) -> Any:
        """Returns what a symbol stands for: a tuple for composite variables, else the symbol."""
        if self.tags:
            return self.tags[symbol]
        if self.factors:
            return tuple(int(i) for i in np.unravel_index(symbol, self.factors))
        return symbol

    def renamed(self, name: str) -> "VariableSpec":
        return replace(self, name=name)

    def plain(self, alphabet_size: int = None) -> "VariableSpec":
        """Same name and role, no decode table."""
        return VariableSpec(self.name, self.alphabet_size if alphabet_size is None else alphabet_size, self.role)


def _parse_side(text: str) -> FrozenSet[str]:
    names = frozenset(part.strip() for part in text.split(",") if part.strip())
    if not names:
        raise UsageError(f"Empty side in splitting '{text}'.")
    return names


@dataclass(frozen=True)
class Splitting:
    """A bipartite cut of the honest parties, plus the eavesdropper variable."""
    side_x: FrozenSet[str]
    side_y: FrozenSet[str]
    eve: str

    def __post_init__(self):
        object.__setattr__(self, "side_x", frozenset(self.side_x))
        object.__setattr__(self, "side_y", frozenset(self.side_y))
        if not self.side_x or not self.side_y:
            raise UsageError("Both sides of a splitting must be nonempty.")
        if self.side_x & self.side_y:
            raise UsageError(f"Splitting sides overlap on {sorted(self.side_x & self.side_y)}.")
        if self.eve in self.side_x or self.eve in self.side_y:
            raise UsageError(f"Eavesdropper variable '{self.eve}' cannot sit on an honest side.")

    @classmethod
    def parse(cls, text: str, eve: str) -> "Splitting":
        """Parses 'A,B-C' (or 'A,B:C') into a splitting."""
        separator = "-" if "-" in text else ":"
        if text.count(separator) != 1:
            raise UsageError(f"Cannot parse splitting '{text}'; expected 'X1,X2-Y1'.")
        left, right = text.split(separator)
        return cls(_parse_side(left), _parse_side(right), eve)

    @property
    def label(self) -> str:
        return "".join(sorted(self.side_x)) + "-" + "".join(sorted(self.side_y))

    def validate_for(self, d) -> None:
        """Raises unless both sides are honest variables of d and `eve` is its eavesdropper."""
        honest = set(d.honest_names)
        unknown = (self.side_x | self.side_y) - honest
        if unknown:
            raise UsageError(f"Splitting names {sorted(unknown)} are not honest variables.")
        if d.eve_name != self.eve:
            raise UsageError(f"'{self.eve}' is not the eavesdropper variable of this distribution.")


def names_in_order(variables: Iterable[VariableSpec], wanted: Iterable[str]) -> Tuple[str, ...]:
    wanted = set(wanted)
    return tuple(v.name for v in variables if v.name in wanted)
