"""Dimension-indexed primitives shared by every estimator.

Coordinates are numbered 1..d (d <= 63 so a subset fits in one machine
word).  Points live in the half-open cube [0, 1)^d and are plain float64
numpy arrays whose last axis has length d; everything here broadcasts over
leading axes, so a single point of shape (d,) and a batch of shape (n, d)
go through the same code path.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

MAX_DIM = 63

#: vector roles of one sample block, in stream order
ROLES = ("x", "y", "z", "w")
_ROLE_INDEX = {role: i for i, role in enumerate(ROLES)}


class DimensionError(ValueError):
    """Raised when points or index sets disagree on the dimension d."""


@dataclass(frozen=True)
class IndexSet:
    """A subset of the coordinate indices {1, .., dim} stored as a bitmask.

    Bit j-1 of ``bits`` is set iff coordinate j is a member.  Instances are
    immutable and hashable, so they can key dictionaries of per-subset
    quantities.
    """

    bits: int
    dim: int

    def __post_init__(self) -> None:
        if not 1 <= self.dim <= MAX_DIM:
            raise DimensionError(f"dimension must be in 1..{MAX_DIM}, got {self.dim}")
        if self.bits < 0 or self.bits >> self.dim:
            raise ValueError(f"bitmask {self.bits:#x} has bits outside 1..{self.dim}")

    @classmethod
    def from_indices(cls, indices: Sequence[int], dim: int) -> "IndexSet":
        bits = 0
        for j in indices:
            if not 1 <= j <= dim:
                raise ValueError(f"coordinate {j} out of range for dimension {dim}")
            bits |= 1 << (j - 1)
        return cls(bits, dim)

    @classmethod
    def parse(cls, text: str, dim: int) -> "IndexSet":
        """Parse "1,3" or "{1,3}" (empty string means the empty set)."""
        body = text.strip().removeprefix("{").removesuffix("}").strip()
        if not body:
            return cls.empty(dim)
        return cls.from_indices([int(tok) for tok in body.split(",")], dim)

    @classmethod
    def empty(cls, dim: int) -> "IndexSet":
        return cls(0, dim)

    @classmethod
    def full(cls, dim: int) -> "IndexSet":
        return cls((1 << dim) - 1, dim)

    def complement(self) -> "IndexSet":
        return IndexSet(self.bits ^ (1 << self.dim) - 1, self.dim)

    def members(self) -> tuple[int, ...]:
        return tuple(j for j in range(1, self.dim + 1) if self.bits >> (j - 1) & 1)

    def mask(self) -> np.ndarray:
        """Boolean membership vector of shape (dim,)."""
        return np.array([self.bits >> j & 1 for j in range(self.dim)], dtype=bool)

    def subsets(self) -> Iterator["IndexSet"]:
        """All 2^|self| subsets, in increasing bitmask order."""
        sub = 0
        while True:
            yield IndexSet(sub, self.dim)
            if sub == self.bits:
                return
            # next submask of self.bits above sub
            sub = (sub - self.bits) & self.bits

    def union(self, other: "IndexSet") -> "IndexSet":
        self._check_same_dim(other)
        return IndexSet(self.bits | other.bits, self.dim)

    def intersection(self, other: "IndexSet") -> "IndexSet":
        self._check_same_dim(other)
        return IndexSet(self.bits & other.bits, self.dim)

    def isdisjoint(self, other: "IndexSet") -> bool:
        self._check_same_dim(other)
        return not self.bits & other.bits

    def issubset(self, other: "IndexSet") -> bool:
        self._check_same_dim(other)
        return self.bits & other.bits == self.bits

    def _check_same_dim(self, other: "IndexSet") -> None:
        if self.dim != other.dim:
            raise DimensionError(f"index sets on dimensions {self.dim} and {other.dim}")

    def __contains__(self, j: int) -> bool:
        return 1 <= j <= self.dim and bool(self.bits >> (j - 1) & 1)

    def __iter__(self) -> Iterator[int]:
        return iter(self.members())

    def __len__(self) -> int:
        return self.bits.bit_count()

    def __str__(self) -> str:
        return "{" + ",".join(str(j) for j in self.members()) + "}"


def as_point(coords, dim: int | None = None) -> np.ndarray:
    """Validate and return a float64 point in [0,1)^d."""
    x = np.asarray(coords, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionError(f"a point must be one-dimensional, got shape {x.shape}")
    if dim is not None and x.shape[0] != dim:
        raise DimensionError(f"expected dimension {dim}, got {x.shape[0]}")
    if x.shape[0] > MAX_DIM:
        raise DimensionError(f"dimension {x.shape[0]} exceeds the cap {MAX_DIM}")
    if np.any(x < 0.0) or np.any(x >= 1.0):
        raise ValueError("point coordinates must lie in [0, 1)")
    return x


def blend(x: np.ndarray, y: np.ndarray, u: IndexSet) -> np.ndarray:
    """Coordinate-blend two points: take x on u and y on the complement.

    Accepts arrays of shape (..., d); the subset mask broadcasts over any
    leading batch axes.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape[-1] != u.dim or y.shape[-1] != u.dim:
        raise DimensionError(
            f"blend on dimension {u.dim} got points of dimension "
            f"{x.shape[-1]} and {y.shape[-1]}"
        )
    return np.where(u.mask(), x, y)


def complement(u: IndexSet) -> IndexSet:
    return u.complement()


class EvalCounter:
    """Counts model evaluations.  One increment per point evaluated.

    Mutable; confine one counter to one thread and merge results, rather
    than sharing an instance across workers.
    """

    __slots__ = ("count",)

    def __init__(self, count: int = 0) -> None:
        self.count = count

    def add(self, k: int = 1) -> None:
        if k < 0:
            raise ValueError("eval counts never decrease")
        self.count += k

    def __repr__(self) -> str:
        return f"EvalCounter({self.count})"


@dataclass(frozen=True)
class RngSpec:
    """Addresses one reproducible random stream: (seed, replicate, role).

    Streams are realized with numpy's Philox counter generator keyed by a
    SeedSequence spawn key, so distinct (replicate, role) pairs give
    non-overlapping streams by construction and any stream can be recreated
    independently of the others.
    """

    seed: int
    replicate: int = 0

    def __post_init__(self) -> None:
        if self.seed < 0 or self.replicate < 0:
            raise ValueError("seed and replicate index must be nonnegative")

    def stream(self, role: str) -> np.random.Generator:
        if role not in _ROLE_INDEX:
            raise ValueError(f"unknown vector role {role!r}, expected one of {ROLES}")
        seq = np.random.SeedSequence(
            self.seed, spawn_key=(self.replicate, _ROLE_INDEX[role])
        )
        return np.random.Generator(np.random.Philox(seq))


@dataclass(frozen=True)
class SampleBlock:
    """One draw of the four independent input vectors."""

    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    w: np.ndarray


class BlockSampler:
    """Stateful sampler producing uniform [0,1)^d blocks from role streams.

    Two samplers built from the same RngSpec produce identical sequences;
    consuming a role does not advance the other roles' streams, so e.g. an
    estimator that needs only (x, y) sees the same x and y values as one
    that also consumes z.
    """

    def __init__(self, spec: RngSpec, dim: int) -> None:
        if not 1 <= dim <= MAX_DIM:
            raise DimensionError(f"dimension must be in 1..{MAX_DIM}, got {dim}")
        self.spec = spec
        self.dim = dim
        self._streams = {role: spec.stream(role) for role in ROLES}

    def draw_role(self, role: str, n: int) -> np.ndarray:
        """n points of shape (n, dim) from one role's stream."""
        return self._streams[role].random((n, self.dim))

    def draw_block(self) -> SampleBlock:
        return SampleBlock(*(self.draw_role(role, 1)[0] for role in ROLES))


def draw_block(spec: RngSpec, dim: int) -> SampleBlock:
    """One-shot convenience wrapper around BlockSampler."""
    return BlockSampler(spec, dim).draw_block()
