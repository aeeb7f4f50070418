# src/ui/cli.py

import argparse
import json
import logging
import sys
from typing import Any, Callable, Dict, List, Optional, TextIO, Tuple

import pandas as pd

from config.settings import DEFAULT_MAX_ITERS, DEFAULT_RESTARTS, DEFAULT_SEED, DEFAULT_TRIALS, LOG_LEVEL
from src.core_logic.certification import CertifyConfig, certify
from src.core_logic.intrinsic import IntrinsicConfig, intrinsic_info
from src.core_logic.measures import conditional_mutual_information, ck_lower_bound, entropy, mutual_information
from src.core_logic.protocols import equality_filter, repeated_code_exact, repeated_code_monte_carlo
from src.data_processing.distribution import JointDistribution
from src.data_processing.errors import (
    BudgetExceededError,
    DistributionError,
    InconsistencyError,
    UnknownVariableError,
    UsageError,
)
from src.data_processing.serialization import distribution_to_dict, dumps, format_probability, load, loads
from src.data_processing.variables import Splitting
from src.fixtures.tables import FIXTURE_IDS, build

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INVALID = 2
EXIT_BUDGET = 3
EXIT_INTERNAL = 4

FIXTURE_PREFIX = "fixture:"


class _Parser(argparse.ArgumentParser):
    """argparse exits with status 2 on bad flags; here that is a usage error (exit 1)."""

    def error(self, message: str):
        raise UsageError(message)


# --- Input ---

def read_distribution(source: str, stdin: TextIO) -> JointDistribution:
    """
    Resolves --dist: 'fixture:<id>', '-' for standard input, or a JSON file path.
    """
    if source.startswith(FIXTURE_PREFIX):
        return build(source[len(FIXTURE_PREFIX):])
    if source == "-":
        try:
            text = stdin.read()
        except UnicodeDecodeError as e:
            raise DistributionError(f"Standard input is not UTF-8 text: {e.reason} at byte {e.start}.") from e
        return loads(text)
    try:
        return load(source)
    except OSError as e:
        raise UsageError(f"Cannot read '{source}': {e.strerror}.") from e


def _name_set(text: str) -> List[str]:
    names = [part.strip() for part in text.split(",") if part.strip()]
    if not names:
        raise UsageError(f"Empty variable set in measure '{text}'.")
    return names


def parse_measure(text: str) -> Tuple[str, List[str], List[str], List[str]]:
    """
    Parses the measure grammar 'X1,X2:Y1|Z1'.

    'X' is the entropy H(X), 'X|Z' the conditional entropy H(X|Z), 'X:Y' the
    mutual information and 'X:Y|Z' the conditional mutual information.

    Returns:
        Tuple: (kind, x, y, z) with kind one of "entropy", "mutual_information",
            "conditional_mutual_information".
    """
    if text.count("|") > 1 or text.count(":") > 1:
        raise UsageError(f"Cannot parse measure '{text}'; expected 'X1,X2:Y1|Z1'.")
    body, _, given = text.partition("|")
    z = _name_set(given) if "|" in text else []
    if ":" not in body:
        return "entropy", _name_set(body), [], z
    left, right = body.split(":")
    kind = "conditional_mutual_information" if z else "mutual_information"
    return kind, _name_set(left), _name_set(right), z


def evaluate_measure(d: JointDistribution, text: str) -> Dict[str, Any]:
    kind, x, y, z = parse_measure(text)
    if kind == "entropy":
        value = entropy(d, x) if not z else entropy(d, x + z) - entropy(d, z)
    elif kind == "mutual_information":
        value = mutual_information(d, x, y)
    else:
        value = conditional_mutual_information(d, x, y, z)
    return {"measure": text, "kind": kind, "x": x, "y": y, "z": z, "value": value}


# --- Subcommands ---

def _analyze(args: argparse.Namespace, d: JointDistribution) -> Dict[str, Any]:
    measures = args.measure or list(d.names)
    return {"measures": [evaluate_measure(d, m) for m in measures]}


def _intrinsic(args: argparse.Namespace, d: JointDistribution) -> Dict[str, Any]:
    eve = args.eve or d.eve_name
    if eve is None:
        raise UsageError("The distribution has no eavesdropper variable; pass --eve.")
    splitting = Splitting.parse(args.splitting, eve)
    config = IntrinsicConfig(
        restarts=args.restarts,
        seed=args.seed,
        max_iters=args.max_iters,
        max_output_size=args.max_output_size,
        deterministic=args.method in ("combined", "deterministic"),
        local=args.method in ("combined", "local"),
    )
    result = intrinsic_info(d, splitting.side_x, splitting.side_y, eve, config)
    return {"splitting": splitting.label, "eve": eve, **result.to_dict()}


def _repeated_code(args: argparse.Namespace, d: JointDistribution) -> Dict[str, Any]:
    if args.exact:
        try:
            return repeated_code_exact(d, args.n).to_dict()
        except BudgetExceededError as e:
            if args.strict:
                raise
            logger.warning("Exact analysis over budget (%s); falling back to Monte Carlo.", e)
    return repeated_code_monte_carlo(d, args.n, args.trials, args.seed).to_dict()


def _equality_filter(args: argparse.Namespace, d: JointDistribution) -> Dict[str, Any]:
    eve = d.eve_name
    if eve is None:
        raise UsageError("The equality filter needs a distribution with an eavesdropper variable.")
    rest = [name for name in d.honest_names if name not in (args.p, args.q)]
    if not rest:
        raise UsageError("The equality filter needs at least one honest party besides the two that compare.")
    result = equality_filter(d, args.p, args.q)
    bound = ck_lower_bound(result.filtered, rest, [args.p, args.q], eve)
    payload = {
        "announce_equal": [args.p, args.q],
        "side_x": rest,
        "side_y": [args.p, args.q],
        "survival_probability": result.survival_probability,
        "filtered_mutual_information": mutual_information(result.filtered, rest, [args.p, args.q]),
        "filtered_eve_information": mutual_information(result.filtered, rest, [eve]),
        "filtered_key_lower_bound": bound,
        "key_rate_lower_bound": result.survival_probability * bound,
        "filtered_distribution": distribution_to_dict(result.filtered),
    }
    if d.is_exact:
        total = sum(m for o, m in d.masses.items() if o[d.index_of(args.p)] == o[d.index_of(args.q)])
        payload["exact_survival_probability"] = format_probability(total)
    return payload


def _certify(args: argparse.Namespace, d: JointDistribution) -> Dict[str, Any]:
    config = CertifyConfig(intrinsic=IntrinsicConfig(restarts=args.restarts, seed=args.seed, max_iters=args.max_iters))
    certificate = certify(d, config)
    return {**certificate.to_dict(), "recheck_discrepancies": certificate.recheck(d)}


# --- Table rendering ---

def _frame(command: str, payload: Dict[str, Any]) -> pd.DataFrame:
    if command == "analyze":
        return pd.DataFrame(payload["measures"])[["measure", "kind", "value"]]
    if command == "intrinsic":
        keys = ("splitting", "value", "method", "restarts_used", "converged", "witness_map")
        return pd.DataFrame([{k: payload[k] for k in keys}])
    if command == "certify":
        rows = [
            {
                "splitting": e["splitting"],
                "intrinsic_information": e["intrinsic_information"]["value"],
                "zero": e["secret_key_rate_is_zero"],
                "witness_map": e["intrinsic_information"]["witness_map"],
            }
            for e in payload["pairwise_splittings"] + [payload["activation_splitting"]]
        ]
        frame = pd.DataFrame(rows)
        frame.attrs["title"] = f"bound_information={payload['bound_information']} reason={payload['reason']}"
        return frame
    if command == "equality-filter":
        return pd.DataFrame([{k: v for k, v in payload.items() if not isinstance(v, (dict, list))}])
    return pd.DataFrame([{k: v for k, v in payload.items() if not isinstance(v, dict)}])


def render(command: str, payload: Dict[str, Any], output_format: str) -> str:
    """Deterministic text for a result payload: indented JSON or a pandas table."""
    if output_format == "json":
        return json.dumps(payload, indent=2, ensure_ascii=False) + "\n"
    frame = _frame(command, payload)
    with pd.option_context("display.max_columns", None, "display.width", 200, "display.precision", 12):
        text = frame.to_string(index=False)
    title = frame.attrs.get("title")
    return (f"{title}\n{text}" if title else text) + "\n"


# --- Parser ---

def _add_dist(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--dist",
        required=True,
        help=f"Distribution JSON file, '-' for standard input, or {FIXTURE_PREFIX}<id> with id in {list(FIXTURE_IDS)}.",
    )
    parser.add_argument("--format", choices=("json", "table"), default="json", help="Output format (default: json).")


def _add_search(parser: argparse.ArgumentParser, restarts: int) -> None:
    parser.add_argument("--restarts", type=int, default=restarts, help=f"Local-search restarts (default: {restarts}).")
    parser.add_argument("--seed", type=int, default=DEFAULT_SEED, help=f"Base seed (default: {DEFAULT_SEED}).")
    parser.add_argument(
        "--max-iters", type=int, default=DEFAULT_MAX_ITERS, help=f"Sweeps per restart (default: {DEFAULT_MAX_ITERS})."
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="skat",
        description="Secret-correlation analysis of finite multipartite distributions.",
        epilog="Environment: SKAT_BUDGET (enumeration budget), SKAT_SEARCH_BUDGET (partition budget), SKAT_LOG_LEVEL.",
    )
    parser.add_argument("--log-level", default=LOG_LEVEL, help=f"Logging level on stderr (default: {LOG_LEVEL}).")
    commands = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    analyze = commands.add_parser("analyze", help="Entropies and (conditional) mutual informations.")
    _add_dist(analyze)
    analyze.add_argument(
        "--measure", "--cmi",
        dest="measure",
        action="append",
        help="'X1,X2:Y|Z' for I(X:Y|Z), 'X:Y' for I(X:Y), 'X' for H(X); repeatable (default: H of every variable).",
    )
    analyze.set_defaults(handler=_analyze)

    intrinsic = commands.add_parser("intrinsic", help="Intrinsic information across a splitting, with its witness.")
    _add_dist(intrinsic)
    intrinsic.add_argument("--splitting", required=True, help="Honest sides, e.g. 'A,B-C'.")
    intrinsic.add_argument("--eve", help="Eavesdropper variable (default: the distribution's).")
    intrinsic.add_argument(
        "--method",
        choices=("combined", "deterministic", "local"),
        default="combined",
        help="Search strategy (default: combined).",
    )
    intrinsic.add_argument("--max-output-size", type=int, help="Output alphabet of Eve's channel (default: hers).")
    _add_search(intrinsic, DEFAULT_RESTARTS)
    intrinsic.set_defaults(handler=_intrinsic)

    simulate = commands.add_parser("simulate", help="Key-distillation protocols.")
    protocols = simulate.add_subparsers(dest="protocol", required=True, parser_class=_Parser)

    repeated = protocols.add_parser("repeated-code", help="Repeated-code advantage distillation on blocks of N.")
    _add_dist(repeated)
    repeated.add_argument("--n", type=int, required=True, help="Block length N.")
    repeated.add_argument(
        "--trials", type=int, default=DEFAULT_TRIALS, help=f"Monte Carlo trials (default: {DEFAULT_TRIALS})."
    )
    repeated.add_argument("--seed", type=int, default=DEFAULT_SEED, help=f"Monte Carlo seed (default: {DEFAULT_SEED}).")
    repeated.add_argument("--exact", action="store_true", help="Exact analysis; Monte Carlo if over budget.")
    repeated.add_argument("--strict", action="store_true", help="With --exact, fail (exit 3) instead of falling back.")
    repeated.set_defaults(handler=_repeated_code)

    filtering = protocols.add_parser("equality-filter", help="Keep the realizations where two parties are equal.")
    _add_dist(filtering)
    filtering.add_argument("--p", default="B", help="First comparing party (default: B).")
    filtering.add_argument("--q", default="C", help="Second comparing party (default: C).")
    filtering.set_defaults(handler=_equality_filter)

    certify_cmd = commands.add_parser("certify", help="Bound-information certificate for three honest parties.")
    _add_dist(certify_cmd)
    _add_search(certify_cmd, CertifyConfig().intrinsic.restarts)
    certify_cmd.set_defaults(handler=_certify)

    fixture = commands.add_parser("fixture", help="Print a shipped distribution as canonical JSON.")
    fixture.add_argument("id", choices=FIXTURE_IDS)
    fixture.set_defaults(handler=None)
    return parser


def _configure_logging(level: str) -> None:
    logging.basicConfig(
        level=getattr(logging, str(level).upper(), logging.WARNING),
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )


def main(argv: Optional[List[str]] = None, stdin: Optional[TextIO] = None, stdout: Optional[TextIO] = None) -> int:
    """
    Runs one command and returns its exit code.

    Exit codes: 0 success, 1 usage error, 2 invalid input, 3 budget exceeded,
    4 internal inconsistency.
    """
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    try:
        args = build_parser().parse_args(argv)
        _configure_logging(args.log_level)
        if args.command == "fixture":
            stdout.write(dumps(build(args.id)))
            return EXIT_OK
        handler: Callable[[argparse.Namespace, JointDistribution], Dict[str, Any]] = args.handler
        d = read_distribution(args.dist, stdin)
        command = args.protocol if args.command == "simulate" else args.command
        stdout.write(render(command, handler(args, d), args.format))
        return EXIT_OK
    except (UsageError, UnknownVariableError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except DistributionError as e:
        print(f"invalid input: {e}", file=sys.stderr)
        return EXIT_INVALID
    except BudgetExceededError as e:
        print(f"budget exceeded: {e}", file=sys.stderr)
        return EXIT_BUDGET
    except InconsistencyError as e:
        print(f"internal error: {e}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
