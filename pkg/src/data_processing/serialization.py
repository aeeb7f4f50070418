import json
from fractions import Fraction
from typing import Any, Dict, List

from src.data_processing.distribution import JointDistribution, Mass, check_valid, parse_probability
from src.data_processing.errors import DistributionError
from src.data_processing.variables import Role, VariableSpec


def format_probability(mass: Mass) -> str:
    """Rational string for exact masses, 17 significant digits otherwise."""
    if isinstance(mass, Fraction):
        return str(mass)
    return f"{float(mass):.17g}"


def _to_tuple(value: Any) -> Any:
    if isinstance(value, list):
        return tuple(_to_tuple(v) for v in value)
    return value


def _to_list(value: Any) -> Any:
    if isinstance(value, tuple):
        return [_to_list(v) for v in value]
    return value


def distribution_to_dict(d: JointDistribution) -> Dict[str, Any]:
    variables: List[Dict[str, Any]] = []
    for v in d.variables:
        entry: Dict[str, Any] = {"name": v.name, "alphabet": v.alphabet_size, "role": v.role.value}
        if v.components:
            entry["components"] = list(v.components)
        if v.factors:
            entry["factors"] = list(v.factors)
        if v.tags:
            entry["tags"] = [_to_list(t) for t in v.tags]
        variables.append(entry)
    pmf = [{"outcome": list(outcome), "p": format_probability(mass)} for outcome, mass in d.masses.items()]
    return {"variables": variables, "pmf": pmf}


def dumps(d: JointDistribution) -> str:
    """Canonical JSON: variables in declared order, outcomes in lexicographic order."""
    return json.dumps(distribution_to_dict(d), indent=2, ensure_ascii=False) + "\n"


def distribution_from_dict(data: Any) -> JointDistribution:
    """
    Builds and validates a distribution from the canonical JSON structure.

    Raises:
        DistributionError: On missing fields, bad roles or invariant violations.
    """
    if not isinstance(data, dict) or "variables" not in data or "pmf" not in data:
        raise DistributionError("A distribution document needs 'variables' and 'pmf' fields.")
    if not isinstance(data["variables"], list) or not isinstance(data["pmf"], list):
        raise DistributionError("'variables' and 'pmf' must be lists.")
    for field, entries in (("variables", data["variables"]), ("pmf", data["pmf"])):
        for entry in entries:
            if not isinstance(entry, dict):
                raise DistributionError(f"Each '{field}' entry must be an object, got {entry!r}.")
    specs = []
    try:
        for entry in data["variables"]:
            role = entry.get("role", "honest")
            if role == "eavesdropper":
                role = "eve"
            specs.append(
                VariableSpec(
                    name=str(entry["name"]),
                    alphabet_size=int(entry["alphabet"]),
                    role=Role(role),
                    components=tuple(entry.get("components", ())),
                    factors=tuple(int(f) for f in entry.get("factors", ())),
                    tags=tuple(_to_tuple(t) for t in entry.get("tags", ())),
                )
            )
        rows = [(row["outcome"], row["p"]) for row in data["pmf"]]
    except (KeyError, TypeError, ValueError) as e:
        raise DistributionError(f"Malformed distribution document: {e!r}") from e
    for outcome, _ in rows:
        if not isinstance(outcome, list) or not all(isinstance(s, int) and not isinstance(s, bool) for s in outcome):
            raise DistributionError(f"Outcome {outcome!r} must be a list of integer symbols.")
    return JointDistribution.from_rows(specs, [(o, parse_probability(p)) for o, p in rows])


def loads(text: str) -> JointDistribution:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise DistributionError(f"Malformed JSON at line {e.lineno}, column {e.colno}: {e.msg}") from e
    return check_valid(distribution_from_dict(data))


def load(path: str) -> JointDistribution:
    with open(path, encoding="utf-8") as f:
        try:
            text = f.read()
        except UnicodeDecodeError as e:
            raise DistributionError(f"'{path}' is not UTF-8 text: {e.reason} at byte {e.start}.") from e
    return loads(text)
