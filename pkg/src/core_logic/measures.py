# src/core_logic/measures.py

import math
from typing import Iterable, Set

import numpy as np
from scipy.special import entr
from scipy.stats import entropy as shannon_entropy

from config.settings import IDENTITY_TOLERANCE
from src.data_processing.distribution import JointDistribution, marginalize
from src.data_processing.errors import InconsistencyError, UsageError

# Information in bits (log base 2). Plain floats; the alias documents the unit.
Bits = float

_LN2 = math.log(2.0)


def clamp_bits(value: float, what: str) -> Bits:
    """Clamps floating-point noise below zero; anything more negative is a bug."""
    if value < -IDENTITY_TOLERANCE:
        raise InconsistencyError(f"{what} came out negative ({value!r} bits).")
    return 0.0 if value < 0 else float(value)


def _names(d: JointDistribution, names: Iterable[str], label: str, allow_empty: bool = False) -> Set[str]:
    names = set(names)
    if not names and not allow_empty:
        raise UsageError(f"The {label} variable set must be nonempty.")
    for name in names:
        d.index_of(name)
    return names


def _disjoint(*sets: Set[str]) -> None:
    seen: Set[str] = set()
    for s in sets:
        overlap = seen & s
        if overlap:
            raise UsageError(f"Variable sets overlap on {sorted(overlap)}.")
        seen |= s


def _joint_entropy(d: JointDistribution, names: Set[str]) -> Bits:
    if not names:
        return 0.0
    values = np.fromiter(marginalize(d, names).pmf.values(), dtype=float)
    return float(shannon_entropy(values, base=2))


def entropy(d: JointDistribution, vars: Iterable[str]) -> Bits:
    """
    Shannon entropy of the marginal on `vars`, in bits (0 log 0 = 0).

    Args:
        d (JointDistribution): The distribution.
        vars (Iterable[str]): Nonempty set of variable names.

    Returns:
        Bits: H(vars).
    """
    return clamp_bits(_joint_entropy(d, _names(d, vars, "entropy")), "Entropy")


def mutual_information(d: JointDistribution, x: Iterable[str], y: Iterable[str]) -> Bits:
    """I(x:y) = H(x) + H(y) - H(x, y)."""
    x, y = _names(d, x, "first"), _names(d, y, "second")
    _disjoint(x, y)
    value = _joint_entropy(d, x) + _joint_entropy(d, y) - _joint_entropy(d, x | y)
    return clamp_bits(value, "Mutual information")


def conditional_mutual_information(
    d: JointDistribution, x: Iterable[str], y: Iterable[str], z: Iterable[str] = ()
) -> Bits:
    """
    I(x:y|z) = H(x,z) + H(y,z) - H(x,y,z) - H(z).

    An empty `z` gives the unconditioned mutual information.
    """
    x, y = _names(d, x, "first"), _names(d, y, "second")
    z = _names(d, z, "conditioning", allow_empty=True)
    _disjoint(x, y, z)
    if not z:
        return mutual_information(d, x, y)
    value = (
        _joint_entropy(d, x | z)
        + _joint_entropy(d, y | z)
        - _joint_entropy(d, x | y | z)
        - _joint_entropy(d, z)
    )
    return clamp_bits(value, "Conditional mutual information")


def ck_lower_bound(d: JointDistribution, x: Iterable[str], y: Iterable[str], eve: str) -> Bits:
    """
    One-way key-rate lower bound max(0, I(x:y) - I(x:eve), I(x:y) - I(y:eve)).

    This is the standard one-way (Csiszar-Korner) bound on the distillable key
    between the two sides, not an exact key rate.
    """
    x, y = _names(d, x, "first"), _names(d, y, "second")
    if d.eve_name != eve:
        raise UsageError(f"'{eve}' is not the eavesdropper variable of this distribution.")
    outsiders = sorted((x | y) - set(d.honest_names))
    if outsiders:
        raise UsageError(f"Both sides must be honest parties; {outsiders} are not.")
    _disjoint(x, y)
    shared = mutual_information(d, x, y)
    return max(0.0, shared - mutual_information(d, x, {eve}), shared - mutual_information(d, y, {eve}))


# --- Dense-array versions used by the optimizers ---

def entropy_array(p: np.ndarray) -> float:
    return float(entr(p).sum() / _LN2)


def cmi_array(pxyz: np.ndarray) -> float:
    """I(X:Y|Z) for a dense table indexed [x, y, z]; not clamped."""
    return (
        entropy_array(pxyz.sum(axis=1))
        + entropy_array(pxyz.sum(axis=0))
        - entropy_array(pxyz)
        - entropy_array(pxyz.sum(axis=(0, 1)))
    )


def cmi_batch(tables: np.ndarray) -> np.ndarray:
    """cmi_array over a stack of tables indexed [k, x, y, z]."""
    xz = entr(tables.sum(axis=2)).sum(axis=(1, 2))
    yz = entr(tables.sum(axis=1)).sum(axis=(1, 2))
    xyz = entr(tables).sum(axis=(1, 2, 3))
    z = entr(tables.sum(axis=(1, 2))).sum(axis=1)
    return (xz + yz - xyz - z) / _LN2
