"""Model matrix and treatment combinations for 2^K factorial designs."""

from __future__ import annotations

import string
from dataclasses import dataclass
from functools import cached_property
from itertools import combinations

import numpy as np

from .errors import InvalidArgumentError

MAX_FACTORS = 16


@dataclass(frozen=True)
class TreatmentCombination:
    index: int  # 1-based, matches row `index` of the main-effect columns
    levels: tuple[int, ...]


@dataclass(frozen=True)
class ModelMatrix:
    """The J x J orthogonal +/-1 matrix of a 2^K design.

    Column 0 is the all-ones column; columns 1..K are the main effects and
    the remaining columns are interactions, one per factor subset of size
    two or more (ordered by cardinality, then lexicographically). Only the
    K main-effect columns are stored; other columns are products of them.
    """

    k: int
    subsets: tuple[tuple[int, ...], ...]  # subsets[l - 1] are the 0-based factors of column l

    @property
    def j(self) -> int:
        return 2**self.k

    @cached_property
    def main_effects(self) -> np.ndarray:
        """J x K matrix (h_1, ..., h_K)."""
        j = self.j
        out = np.empty((j, self.k), dtype=np.int8)
        for m in range(1, self.k + 1):
            block = 2 ** (self.k - m)
            pattern = np.concatenate([-np.ones(block, np.int8), np.ones(block, np.int8)])
            out[:, m - 1] = np.tile(pattern, 2 ** (m - 1))
        out.flags.writeable = False
        return out

    @cached_property
    def effect_labels(self) -> tuple[str, ...]:
        letters = string.ascii_uppercase
        return tuple("".join(letters[f] for f in s) for s in self.subsets)

    def column(self, l: int) -> np.ndarray:
        """Column h_l as an int8 vector of length J."""
        if not 0 <= l < self.j:
            raise InvalidArgumentError(f"column index {l} outside 0..{self.j - 1}")
        if l == 0:
            return np.ones(self.j, dtype=np.int8)
        return np.prod(self.main_effects[:, list(self.subsets[l - 1])], axis=1, dtype=np.int8)

    @cached_property
    def matrix(self) -> np.ndarray:
        """The full J x J matrix H = (h_0, ..., h_{J-1})."""
        h = np.empty((self.j, self.j), dtype=np.int8)
        for l in range(self.j):
            h[:, l] = self.column(l)
        h.flags.writeable = False
        return h

    @property
    def columns(self) -> list[np.ndarray]:
        return [self.matrix[:, l] for l in range(self.j)]

    def contrasts(self, effects: list[int] | None = None) -> np.ndarray:
        """Rows h_l / 2^(K-1) for the requested effect columns (default 1..J-1)."""
        if effects is None:
            effects = list(range(1, self.j))
        rows = np.array([self.column(l) for l in effects], dtype=float)
        return rows / 2 ** (self.k - 1)

    def label(self, l: int) -> str:
        if not 1 <= l < self.j:
            raise InvalidArgumentError(f"effect index {l} outside 1..{self.j - 1}")
        return self.effect_labels[l - 1]


def _ordered_subsets(k: int) -> tuple[tuple[int, ...], ...]:
    singletons = tuple((f,) for f in range(k))
    interactions = tuple(s for r in range(2, k + 1) for s in combinations(range(k), r))
    return singletons + interactions


def build_model_matrix(k: int) -> ModelMatrix:
    if isinstance(k, bool) or not isinstance(k, (int, np.integer)):
        raise InvalidArgumentError(f"k must be an integer, got {k!r}")
    if not 1 <= k <= MAX_FACTORS:
        raise InvalidArgumentError(f"k must be in 1..{MAX_FACTORS}, got {k}")
    return ModelMatrix(k=int(k), subsets=_ordered_subsets(int(k)))


def treatment_combinations(m: ModelMatrix) -> list[TreatmentCombination]:
    return [
        TreatmentCombination(index=i + 1, levels=tuple(int(v) for v in row))
        for i, row in enumerate(m.main_effects)
    ]


def k_from_arms(j: int) -> int:
    """Number of factors for J arms; J must be a power of two >= 2."""
    if j < 2 or j & (j - 1):
        raise InvalidArgumentError(f"number of arms {j} is not a power of two >= 2")
    return j.bit_length() - 1
