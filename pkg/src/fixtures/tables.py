# src/fixtures/tables.py

from fractions import Fraction
from typing import Callable, Dict, List, Literal, Tuple

from src.data_processing.distribution import JointDistribution, check_valid, eve_canonicalize, mix, permute
from src.data_processing.errors import UsageError
from src.data_processing.variables import Role, VariableSpec

FixtureId = Literal["p1", "p2", "p3", "pmix"]

SIXTH = Fraction(1, 6)
NINTH = Fraction(1, 9)

TRIPARTITE = (
    VariableSpec("A", 2),
    VariableSpec("B", 2),
    VariableSpec("C", 2),
)

# (A, B, C, E) rows; P1(0,1,1) = P1(1,0,0) = 0
P1_ROWS: List[Tuple[Tuple[int, int, int, int], Fraction]] = [
    ((0, 0, 0, 0), SIXTH),
    ((0, 0, 1, 1), SIXTH),
    ((0, 1, 0, 2), SIXTH),
    ((1, 0, 1, 3), SIXTH),
    ((1, 1, 0, 4), SIXTH),
    ((1, 1, 1, 0), SIXTH),
]

# Equal mixture of P1, P2, P3 as Eve effectively sees it
PMIX_ROWS: List[Tuple[Tuple[int, int, int, int], Fraction]] = [
    ((0, 0, 0, 0), SIXTH),
    ((0, 0, 1, 1), NINTH),
    ((0, 1, 0, 2), NINTH),
    ((0, 1, 1, 3), NINTH),
    ((1, 0, 0, 4), NINTH),
    ((1, 0, 1, 5), NINTH),
    ((1, 1, 0, 6), NINTH),
    ((1, 1, 1, 0), SIXTH),
]

CYCLE = {"A": "B", "B": "C", "C": "A"}


def _table(rows, eve_size: int) -> JointDistribution:
    variables = TRIPARTITE + (VariableSpec("E", eve_size, Role.EVE),)
    return JointDistribution.from_rows(variables, rows)


def p1() -> JointDistribution:
    """Six equiprobable rows: B and C agree with A except on the marked Eve symbols."""
    return _table(P1_ROWS, 5)


def p2() -> JointDistribution:
    """P2(A,B,C,E) = P1(B,C,A,E)."""
    return check_valid(permute(p1(), CYCLE))


def p3() -> JointDistribution:
    """P3(A,B,C,E) = P1(C,A,B,E)."""
    return check_valid(permute(permute(p1(), CYCLE), CYCLE))


def pmix() -> JointDistribution:
    """
    The equal mixture of P1, P2 and P3, with Eve's source tag kept and then her
    equivalent symbols merged. Eve symbol 0 covers (0,0,0) and (1,1,1); each
    other ABC string has its own symbol 1..6.
    """
    third = Fraction(1, 3)
    return check_valid(eve_canonicalize(mix([p1(), p2(), p3()], [third, third, third])))


def pmix_table() -> JointDistribution:
    """The mixture written out row by row, for comparison with pmix()."""
    return _table(PMIX_ROWS, 7)


_BUILDERS: Dict[str, Callable[[], JointDistribution]] = {
    "p1": p1,
    "p2": p2,
    "p3": p3,
    "pmix": pmix,
}

FIXTURE_IDS: Tuple[str, ...] = tuple(_BUILDERS)


def build(fixture_id: FixtureId) -> JointDistribution:
    """
    Builds one of the shipped distributions with exact rational masses.

    Args:
        fixture_id (FixtureId): One of "p1", "p2", "p3", "pmix".

    Returns:
        JointDistribution: The canonical distribution for that id.
    """
    try:
        builder = _BUILDERS[fixture_id]
    except KeyError:
        raise UsageError(f"Unknown fixture '{fixture_id}'; choose one of {list(FIXTURE_IDS)}.") from None
    return builder()
