"""Gossip payload encoding.

Layout (little-endian)::

    "SWGP"  u16 version  u64 sender  u64 round  u32 n_members
    n_members x (u64 peer, u64 last_heard_round)
    u32 n_records
    n_records x (u64 contributor, u64 epoch, serialized Bloom filter)

Every record in a payload embeds a filter with the same parameters, so records
have a fixed size and the whole record block is read with one structured
``numpy.frombuffer``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ..bloom import HEADER_SIZE, MAGIC, BloomFilter, BloomParams, header_prefix, serialized_size

PAYLOAD_MAGIC = b"SWGP"
PAYLOAD_VERSION = 1

_HEAD = struct.Struct("<4sHQQI")
_COUNT = struct.Struct("<I")
MEMBER_DTYPE = np.dtype([("peer", "<u8"), ("heard", "<u8")])


class PayloadError(ValueError):
    pass


@lru_cache(maxsize=16)
def record_dtype(params: BloomParams) -> np.dtype:
    return np.dtype([
        ("contributor", "<u8"),
        ("epoch", "<u8"),
        ("header", "<u8", ((HEADER_SIZE - 8) // 8,)),
        ("count", "<u8"),
        ("bits", "u1", (params.n_bytes,)),
    ])


@lru_cache(maxsize=16)
def _expected_header(params: BloomParams) -> np.ndarray:
    return np.frombuffer(header_prefix(params), dtype="<u8")


def payload_size(n_members: int, n_records: int, params: BloomParams) -> int:
    return (
        _HEAD.size
        + n_members * MEMBER_DTYPE.itemsize
        + _COUNT.size
        + n_records * (16 + serialized_size(params))
    )


def encode(
    sender: int,
    rnd: int,
    peers: np.ndarray,
    heard: np.ndarray,
    contributors: list[int],
    epochs: list[int],
    counts: list[int],
    bits: np.ndarray,
    params: BloomParams,
) -> bytes:
    """Pack a payload; ``bits`` holds one packed filter per record row."""
    members = np.empty(len(peers), dtype=MEMBER_DTYPE)
    members["peer"] = peers
    members["heard"] = heard
    records = np.empty(len(contributors), dtype=record_dtype(params))
    if len(contributors):
        records["contributor"] = contributors
        records["epoch"] = epochs
        records["header"] = _expected_header(params)
        records["count"] = counts
        records["bits"] = bits
    return b"".join((
        _HEAD.pack(PAYLOAD_MAGIC, PAYLOAD_VERSION, sender, rnd, len(peers)),
        members.tobytes(),
        _COUNT.pack(len(contributors)),
        records.tobytes(),
    ))


def scan(data: bytes, params: BloomParams) -> tuple[int, int, np.ndarray, np.ndarray]:
    """Validate ``data``; return sender, round, member digest and record array.

    The returned arrays are read-only views into ``data``.
    """
    try:
        magic, version, sender, rnd, n_members = _HEAD.unpack_from(data, 0)
    except struct.error as exc:
        raise PayloadError(f"truncated payload header: {exc}") from exc
    if magic != PAYLOAD_MAGIC or version != PAYLOAD_VERSION:
        raise PayloadError("bad payload magic or version")
    off = _HEAD.size
    end = off + n_members * MEMBER_DTYPE.itemsize
    if end + _COUNT.size > len(data):
        raise PayloadError("truncated membership digest")
    members = np.frombuffer(data, dtype=MEMBER_DTYPE, count=n_members, offset=off)
    (n_records,) = _COUNT.unpack_from(data, end)
    off = end + _COUNT.size
    rdt = record_dtype(params)
    if len(data) - off != n_records * rdt.itemsize:
        if n_records and len(data) - off >= 16 + len(MAGIC):
            if data[off + 16:off + 16 + len(MAGIC)] == MAGIC:
                raise PayloadError("filter parameters differ from the cluster's")
        raise PayloadError("payload length does not match its record count")
    records = np.frombuffer(data, dtype=rdt, count=n_records, offset=off)
    if n_records:
        ok = (records["header"] == _expected_header(params)).all(axis=1)
        if not ok.all():
            head = records["header"][~ok][0].tobytes()
            if head[:len(MAGIC)] != MAGIC:
                raise PayloadError("bad filter header")
            raise PayloadError("filter parameters differ from the cluster's")
    return sender, rnd, members, records


@dataclass
class Payload:
    sender: int
    round: int
    members: list[tuple[int, int]]
    records: list[tuple[int, int, BloomFilter]]


def decode(data: bytes, params: BloomParams) -> Payload:
    """Fully decode a payload into plain Python objects."""
    sender, rnd, members, records = scan(data, params)
    out = []
    start = _HEAD.size + len(members) * MEMBER_DTYPE.itemsize + _COUNT.size
    size = record_dtype(params).itemsize
    for i, rec in enumerate(records):
        bf = BloomFilter.from_bytes(data[start + i * size + 16:start + (i + 1) * size])
        out.append((int(rec["contributor"]), int(rec["epoch"]), bf))
    return Payload(
        sender,
        rnd,
        [(int(p), int(h)) for p, h in zip(members["peer"], members["heard"])],
        out,
    )
