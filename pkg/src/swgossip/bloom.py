"""Bloom filters for cluster file-location knowledge.

A filter is an ``m``-bit vector probed at ``k`` positions per item. Positions
come from double hashing over two keyed 64-bit BLAKE2b digests::

    index_i = (h_a(x) + i * h_b(x)) mod m,   i = 0 .. k-1

The two hash keys are part of the parameters, so two filters can only be
OR-ed together when they agree on ``m``, ``k`` and both seeds.

Wire format (all header integers unsigned 64-bit little-endian)::

    magic(8) version m k seed_a seed_b inserted_count | ceil(m/8) payload bytes

Bit ``i`` lives in payload byte ``i // 8`` at bit position ``i % 8`` (LSB first).
"""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Union

import numpy as np

MAGIC = b"SWBLOOM\x00"
FORMAT_VERSION = 1
MAX_HASHES = 64
# keeps (a + i*b) below 2**63 for i < 64 with a, b already reduced mod m
MAX_BITS = 1 << 56

DEFAULT_SEED_A = 0x5EED_A11C_E000_0001
DEFAULT_SEED_B = 0x5EED_B0B0_0000_0002

_HEADER = struct.Struct("<8s6Q")

Item = Union[bytes, bytearray, memoryview, str]


class BloomError(ValueError):
    """Invalid filter parameters."""


class IncompatibleFilterError(BloomError):
    """Raised when combining filters built with different parameters."""


class BloomFormatError(BloomError):
    """Raised when decoding a malformed serialized filter."""


@dataclass(frozen=True)
class BloomParams:
    m: int
    k: int
    expected_n: int = 0
    seed_a: int = DEFAULT_SEED_A
    seed_b: int = DEFAULT_SEED_B

    def __post_init__(self) -> None:
        if self.m < 1 or self.m >= MAX_BITS:
            raise BloomError(f"m must be in [1, 2**56), got {self.m}")
        if not 1 <= self.k <= MAX_HASHES:
            raise BloomError(f"k must be in [1, {MAX_HASHES}], got {self.k}")
        if self.expected_n < 0:
            raise BloomError(f"expected_n must be non-negative, got {self.expected_n}")
        for name in ("seed_a", "seed_b"):
            seed = getattr(self, name)
            if not 0 <= seed < 1 << 64:
                raise BloomError(f"{name} must fit in 64 bits")

    @property
    def n_bytes(self) -> int:
        return (self.m + 7) // 8

    def compatible(self, other: "BloomParams") -> bool:
        # expected_n is advisory and does not affect bit positions
        return (self.m, self.k, self.seed_a, self.seed_b) == (
            other.m,
            other.k,
            other.seed_a,
            other.seed_b,
        )


def _as_bytes(item: Item) -> bytes:
    if isinstance(item, str):
        return item.encode("utf-8")
    return bytes(item)


def _keyed_hash(data: bytes, seed: int) -> int:
    key = seed.to_bytes(8, "little")
    return int.from_bytes(
        hashlib.blake2b(data, digest_size=8, key=key).digest(), "little"
    )


def hash_pair(item: Item, params: BloomParams) -> tuple[int, int]:
    data = _as_bytes(item)
    return _keyed_hash(data, params.seed_a), _keyed_hash(data, params.seed_b)


def indices(item: Item, params: BloomParams) -> list[int]:
    """Bit positions probed for ``item``."""
    h_a, h_b = hash_pair(item, params)
    m = params.m
    a, b = h_a % m, h_b % m
    return [(a + i * b) % m for i in range(params.k)]


def _indices_many(items: Iterable[Item], params: BloomParams) -> np.ndarray:
    """(len(items), k) array of positions, same values as :func:`indices`."""
    m = params.m
    pairs = [hash_pair(item, params) for item in items]
    if not pairs:
        return np.empty((0, params.k), dtype=np.uint64)
    arr = np.array(pairs, dtype=np.uint64)
    a = arr[:, 0] % np.uint64(m)
    b = arr[:, 1] % np.uint64(m)
    steps = np.arange(params.k, dtype=np.uint64)
    return (a[:, None] + steps[None, :] * b[:, None]) % np.uint64(m)


class BloomFilter:
    """Insert-only probabilistic set over byte strings.

    ``inserted_count`` counts calls to :meth:`add`, duplicates included, so it
    is an upper bound on the number of distinct members.
    """

    __slots__ = ("params", "_bits", "inserted_count")

    def __init__(self, params: BloomParams) -> None:
        self.params = params
        self._bits = np.zeros(params.n_bytes, dtype=np.uint8)
        self.inserted_count = 0

    @classmethod
    def new(cls, m: int, k: int, **kwargs) -> "BloomFilter":
        return cls(BloomParams(m=m, k=k, **kwargs))

    @classmethod
    def from_items(cls, params: BloomParams, items: Iterable[Item]) -> "BloomFilter":
        bf = cls(params)
        bf.update(items)
        return bf

    @property
    def m(self) -> int:
        return self.params.m

    @property
    def k(self) -> int:
        return self.params.k

    @property
    def bits(self) -> np.ndarray:
        """Read-only view of the packed bit vector."""
        view = self._bits.view()
        view.flags.writeable = False
        return view

    def copy(self) -> "BloomFilter":
        other = BloomFilter.__new__(BloomFilter)
        other.params = self.params
        other._bits = self._bits.copy()
        other.inserted_count = self.inserted_count
        return other

    def add(self, item: Item) -> None:
        bits = self._bits
        for idx in indices(item, self.params):
            bits[idx >> 3] |= 1 << (idx & 7)
        self.inserted_count += 1

    def update(self, items: Iterable[Item]) -> None:
        """Vectorised bulk insert; equivalent to calling :meth:`add` per item."""
        items = list(items)
        if not items:
            return
        idx = _indices_many(items, self.params).ravel()
        masks = np.left_shift(1, (idx & np.uint64(7)).astype(np.uint8)).astype(np.uint8)
        np.bitwise_or.at(self._bits, (idx >> np.uint64(3)).astype(np.intp), masks)
        self.inserted_count += len(items)

    def __contains__(self, item: Item) -> bool:
        return self.contains_positions(indices(item, self.params))

    def contains_positions(self, positions: Iterable[int]) -> bool:
        """Membership test from precomputed :func:`indices` output."""
        bits = self._bits
        for idx in positions:
            if not bits[idx >> 3] >> (idx & 7) & 1:
                return False
        return True

    might_contain = __contains__

    def contains_many(self, items: Iterable[Item]) -> np.ndarray:
        """Boolean array of membership answers, one per item."""
        idx = _indices_many(list(items), self.params)
        if idx.shape[0] == 0:
            return np.zeros(0, dtype=bool)
        byte = self._bits[(idx >> np.uint64(3)).astype(np.intp)]
        hit = (byte >> (idx & np.uint64(7)).astype(np.uint8)) & 1
        return hit.all(axis=1)

    def union(self, other: "BloomFilter") -> "BloomFilter":
        """New filter holding the bit-wise OR of both operands."""
        out = self.copy()
        out.union_update(other)
        return out

    def union_update(self, other: "BloomFilter") -> bool:
        """OR ``other`` into this filter in place; return True if any bit changed."""
        if not self.params.compatible(other.params):
            raise IncompatibleFilterError(
                f"cannot union {self.params} with {other.params}"
            )
        self.inserted_count += other.inserted_count
        return self.union_bits(other._bits)

    def union_bits(self, packed: np.ndarray) -> bool:
        """OR a packed bit vector of matching length in place; True if bits changed."""
        merged = self._bits | packed
        # byte-string comparison is several times cheaper than ndarray reductions
        if merged.tobytes() != self._bits.tobytes():
            self._bits = merged
            return True
        return False

    __or__ = union

    def popcount(self) -> int:
        return int(np.unpackbits(self._bits).sum())

    def is_empty(self) -> bool:
        return not self._bits.any()

    def same_bits(self, other: "BloomFilter") -> bool:
        return self.params.compatible(other.params) and np.array_equal(
            self._bits, other._bits
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BloomFilter):
            return NotImplemented
        return (
            self.params == other.params
            and self.inserted_count == other.inserted_count
            and np.array_equal(self._bits, other._bits)
        )

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        return (
            f"BloomFilter(m={self.m}, k={self.k}, "
            f"inserted={self.inserted_count}, set_bits={self.popcount()})"
        )

    def estimated_fp_rate(self) -> float:
        return false_positive_rate(self.inserted_count, self.m, self.k)

    def to_bytes(self) -> bytes:
        p = self.params
        header = _HEADER.pack(
            MAGIC, FORMAT_VERSION, p.m, p.k, p.seed_a, p.seed_b, self.inserted_count
        )
        return header + self._bits.tobytes()

    @classmethod
    def from_bytes(cls, data: bytes | memoryview) -> "BloomFilter":
        bf, used = cls.decode_prefix(data)
        if used != len(data):
            raise BloomFormatError(f"{len(data) - used} trailing bytes after filter")
        return bf

    @classmethod
    def decode_prefix(cls, data: bytes | memoryview, offset: int = 0) -> tuple["BloomFilter", int]:
        """Decode one filter starting at ``offset``; return it and the end offset."""
        if len(data) - offset < _HEADER.size:
            raise BloomFormatError("truncated header")
        magic, version, m, k, seed_a, seed_b, count = _HEADER.unpack_from(data, offset)
        if magic != MAGIC:
            raise BloomFormatError(f"bad magic {magic!r}")
        if version != FORMAT_VERSION:
            raise BloomFormatError(f"unsupported version {version}")
        params = _decoded_params(m, k, seed_a, seed_b)
        start = offset + _HEADER.size
        end = start + params.n_bytes
        if len(data) < end:
            raise BloomFormatError("truncated payload")
        bf = cls.__new__(cls)
        bf.params = params
        bf._bits = np.frombuffer(data, dtype=np.uint8, count=params.n_bytes, offset=start).copy()
        bf.inserted_count = count
        return bf, end


@lru_cache(maxsize=64)
def _decoded_params(m: int, k: int, seed_a: int, seed_b: int) -> BloomParams:
    try:
        return BloomParams(m=m, k=k, seed_a=seed_a, seed_b=seed_b)
    except BloomError as exc:
        raise BloomFormatError(str(exc)) from exc


def header_prefix(params: BloomParams) -> bytes:
    """Serialized header bytes up to (not including) ``inserted_count``."""
    return _HEADER.pack(
        MAGIC, FORMAT_VERSION, params.m, params.k, params.seed_a, params.seed_b, 0
    )[:-8]


HEADER_SIZE = _HEADER.size


def serialized_size(params: BloomParams) -> int:
    return _HEADER.size + params.n_bytes


def false_positive_rate(n: int, m: int, k: int) -> float:
    """Analytic false-positive probability ``(1 - exp(-k n / m)) ** k``."""
    if m < 1 or k < 1 or n < 0:
        raise BloomError(f"need m >= 1, k >= 1, n >= 0; got n={n}, m={m}, k={k}")
    if n == 0:
        return 0.0
    return (-math.expm1(-k * n / m)) ** k


def optimal_k(m: int, n: int) -> int:
    """Integer k in 1..64 minimising the false-positive rate (ties go low)."""
    if m < 1 or n < 1:
        raise BloomError(f"need m >= 1 and n >= 1; got m={m}, n={n}")
    best_k, best_p = 1, false_positive_rate(n, m, 1)
    for k in range(2, MAX_HASHES + 1):
        p = false_positive_rate(n, m, k)
        if p < best_p:
            best_k, best_p = k, p
    return best_k


def _fp_at_optimum(n: int, m: int) -> float:
    return false_positive_rate(n, m, optimal_k(m, n))


def size_for(n: int, target_fp: float, **seeds) -> BloomParams:
    """Smallest byte-aligned filter reaching ``target_fp`` for ``n`` items.

    The minimum over integer k of the false-positive rate is non-increasing
    in m, so a binary search over whole bytes finds the smallest size.
    """
    if n < 1:
        raise BloomError(f"n must be >= 1, got {n}")
    if not 0.0 < target_fp < 1.0:
        raise BloomError(f"target_fp must be in (0, 1), got {target_fp}")
    lo, hi = 1, 1
    while _fp_at_optimum(n, hi * 8) > target_fp:
        lo, hi = hi, hi * 2
        if hi * 8 >= MAX_BITS:
            raise BloomError("target unreachable below the maximum filter size")
    if _fp_at_optimum(n, lo * 8) <= target_fp:
        hi = lo
    while lo < hi:
        mid = (lo + hi) // 2
        if _fp_at_optimum(n, mid * 8) <= target_fp:
            hi = mid
        else:
            lo = mid + 1
    m = hi * 8
    return BloomParams(m=m, k=optimal_k(m, n), expected_n=n, **seeds)
