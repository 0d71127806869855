"""Complete randomization with fixed arm sizes, sampled or enumerated."""

from __future__ import annotations

import math
from collections.abc import Iterator, Sequence
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError, TooLargeError

RNG_ALGORITHM = "numpy PCG64 seeded by SeedSequence(entropy=seed, spawn_key=(replicate,))"
ENUMERATION_GUARD = 10**7
MIN_ARM_SIZE = 2


@dataclass(frozen=True, eq=False)
class Assignment:
    """Arm of each unit, 0-based (unit i receives z_{arm[i] + 1})."""

    arm: np.ndarray
    counts: tuple[int, ...]

    def __post_init__(self) -> None:
        arm = np.asarray(self.arm, dtype=np.intp)
        if arm.ndim != 1 or arm.min(initial=0) < 0:
            raise InvalidArgumentError("arm must be a vector of non-negative arm indices")
        observed = np.bincount(arm, minlength=len(self.counts))
        if len(observed) != len(self.counts) or any(
            int(c) != int(o) for c, o in zip(self.counts, observed)
        ):
            raise InvalidArgumentError("arm vector does not match counts")
        arm.flags.writeable = False
        object.__setattr__(self, "arm", arm)

    @property
    def n(self) -> int:
        return len(self.arm)

    @property
    def j(self) -> int:
        return len(self.counts)

    @property
    def proportions(self) -> np.ndarray:
        return np.asarray(self.counts, dtype=float) / self.n

    def indicator(self) -> np.ndarray:
        """N x J 0/1 matrix W with W[i, j] = 1 iff unit i is in arm j."""
        w = np.zeros((self.n, self.j), dtype=np.int8)
        w[np.arange(self.n), self.arm] = 1
        return w


def check_counts(n_total: int, counts: Sequence[int]) -> tuple[int, ...]:
    counts = tuple(int(c) for c in counts)
    if not counts:
        raise InvalidArgumentError("counts must be non-empty")
    if sum(counts) != n_total:
        raise InvalidArgumentError(f"counts sum to {sum(counts)}, expected N={n_total}")
    small = [j + 1 for j, c in enumerate(counts) if c < MIN_ARM_SIZE]
    if small:
        raise InvalidArgumentError(f"arm(s) {small} have fewer than {MIN_ARM_SIZE} units")
    return counts


def replicate_rng(seed: int, replicate: int = 0) -> np.random.Generator:
    """Independent stream for ``replicate`` under a master ``seed``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(replicate),))
    return np.random.Generator(np.random.PCG64(ss))


def draw_assignment(
    n_total: int, counts: Sequence[int], seed: int, replicate: int = 0
) -> Assignment:
    counts = check_counts(n_total, counts)
    multiset = np.repeat(np.arange(len(counts)), counts)
    # Generator.permutation is a Fisher-Yates shuffle of a copy
    arm = replicate_rng(seed, replicate).permutation(multiset)
    return Assignment(arm=arm, counts=counts)


def multinomial(counts: Sequence[int]) -> int:
    total, out = 0, 1
    for c in counts:
        total += c
        out *= math.comb(total, c)
    return out


def enumerate_assignments(
    n_total: int, counts: Sequence[int], guard: int = ENUMERATION_GUARD
) -> Iterator[Assignment]:
    """Every distinct assignment once, in lexicographic order of the arm vector."""
    counts = check_counts(n_total, counts)
    size = multinomial(counts)
    if size > guard:
        raise TooLargeError(f"{size} assignments exceed the enumeration guard {guard}", size)
    return _enumerate(n_total, counts)


def _enumerate(n_total: int, counts: tuple[int, ...]) -> Iterator[Assignment]:
    remaining = list(counts)
    arm = np.empty(n_total, dtype=np.intp)

    def fill(pos: int) -> Iterator[Assignment]:
        if pos == n_total:
            yield Assignment(arm=arm.copy(), counts=counts)
            return
        for j, left in enumerate(remaining):
            if left:
                remaining[j] -= 1
                arm[pos] = j
                yield from fill(pos + 1)
                remaining[j] += 1

    return fill(0)
