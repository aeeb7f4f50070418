from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from config.settings import NORMALIZATION_TOLERANCE
from src.data_processing.errors import DistributionError


@dataclass(frozen=True, eq=False)
class Channel:
    """
    Row-stochastic matrix mapping an input alphabet to an output alphabet.

    Row e is the distribution P(output | input = e). Used for Eve's
    post-processing E -> E~ and as intrinsic-information witnesses.
    """
    matrix: np.ndarray

    def __post_init__(self):
        matrix = np.array(self.matrix, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] < 1 or matrix.shape[1] < 1:
            raise DistributionError(f"Channel matrix must be a nonempty 2-D array, got shape {matrix.shape}.")
        if (matrix < 0).any():
            row = int(np.argwhere(matrix < 0)[0][0])
            raise DistributionError(f"Channel row {row} has a negative entry.")
        sums = matrix.sum(axis=1)
        bad = np.flatnonzero(np.abs(sums - 1.0) > NORMALIZATION_TOLERANCE)
        if bad.size:
            raise DistributionError(f"Channel row {int(bad[0])} sums to {sums[bad[0]]!r}, not 1.")
        matrix.setflags(write=False)
        object.__setattr__(self, "matrix", matrix)

    @property
    def input_size(self) -> int:
        return self.matrix.shape[0]

    @property
    def output_size(self) -> int:
        return self.matrix.shape[1]

    @property
    def is_deterministic(self) -> bool:
        return bool(np.all(np.sum(self.matrix == 1.0, axis=1) == 1))

    def as_map(self) -> Optional[List[int]]:
        """The function input -> output when deterministic, else None."""
        if not self.is_deterministic:
            return None
        return [int(i) for i in np.argmax(self.matrix, axis=1)]

    def compose(self, then: "Channel") -> "Channel":
        """Applying self first and `then` second."""
        if self.output_size != then.input_size:
            raise DistributionError(
                f"Cannot compose a channel with {self.output_size} outputs into one with {then.input_size} inputs."
            )
        return Channel(self.matrix @ then.matrix)

    def __eq__(self, other: Any) -> bool:
        return isinstance(other, Channel) and self.matrix.shape == other.matrix.shape and bool(
            np.array_equal(self.matrix, other.matrix)
        )

    def __hash__(self) -> int:
        return hash((self.matrix.shape, self.matrix.tobytes()))

    # --- Constructors ---

    @classmethod
    def identity(cls, size: int) -> "Channel":
        return cls(np.eye(size))

    @classmethod
    def constant(cls, input_size: int, output_size: int = 1, symbol: int = 0) -> "Channel":
        matrix = np.zeros((input_size, output_size))
        matrix[:, symbol] = 1.0
        return cls(matrix)

    @classmethod
    def from_map(cls, mapping: Sequence[int], output_size: Optional[int] = None) -> "Channel":
        """Deterministic channel sending input e to mapping[e]."""
        mapping = [int(m) for m in mapping]
        size = max(mapping) + 1 if output_size is None else output_size
        if min(mapping) < 0 or max(mapping) >= size:
            raise DistributionError(f"Map {mapping} leaves the output alphabet of size {size}.")
        matrix = np.zeros((len(mapping), size))
        matrix[np.arange(len(mapping)), mapping] = 1.0
        return cls(matrix)

    # --- JSON ---

    def to_dict(self) -> Dict[str, Any]:
        return {
            "input": self.input_size,
            "output": self.output_size,
            "rows": [[float(p) for p in row] for row in self.matrix],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Channel":
        try:
            rows = data["rows"]
            channel = cls(np.array(rows, dtype=float))
        except (KeyError, TypeError, ValueError) as e:
            if isinstance(e, DistributionError):
                raise
            raise DistributionError(f"Malformed channel document: {e}") from e
        if channel.input_size != data.get("input", channel.input_size) or channel.output_size != data.get(
            "output", channel.output_size
        ):
            raise DistributionError("Channel 'input'/'output' sizes do not match its rows.")
        return channel
