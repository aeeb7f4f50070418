import os
from dotenv import load_dotenv

load_dotenv()

BASE_DIR = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))

SCHEMA_DIR = os.path.join(BASE_DIR, 'schemas')

LOG_LEVEL = os.getenv("SKAT_LOG_LEVEL", "WARNING")

# Tolerances (probabilities on input / internal identities / "zero" witnesses)
NORMALIZATION_TOLERANCE = 1e-9
IDENTITY_TOLERANCE = 1e-12
ZERO_WITNESS_TOLERANCE = 1e-6

# Intrinsic information search
DEFAULT_RESTARTS = 32
DEFAULT_MAX_ITERS = 200
DEFAULT_SEED = 0
SHORT_STEP = 1e-6
LINE_SEARCH_XATOL = 1e-8
SWEEP_TOLERANCE = 1e-9

# Protocol simulation
DEFAULT_TRIALS = 100_000
MONTE_CARLO_CHUNK = 4096
ACTIVATION_LENGTHS = tuple(range(1, 9))

_DEFAULT_ENUMERATION_BUDGET = 2 ** 24
_DEFAULT_SEARCH_BUDGET = 10 ** 7


def enumeration_budget() -> int:
    """Maximum number of outcome tuples (or view types) an exact computation may enumerate.

    Read on every call so that SKAT_BUDGET changes are picked up.
    """
    return int(os.getenv("SKAT_BUDGET", _DEFAULT_ENUMERATION_BUDGET))


def deterministic_search_budget() -> int:
    """Maximum number of Eve-alphabet partitions the exhaustive intrinsic search visits."""
    return int(os.getenv("SKAT_SEARCH_BUDGET", _DEFAULT_SEARCH_BUDGET))
