"""Sparse binary hypervectors: storage, token generation, binding and bundling.

Hypervectors are bit-packed into little-endian ``uint64`` words.  Bits past
``size`` in the last word are always zero, so word-level equality, OR, AND
and popcount need no masking.
"""

from __future__ import annotations

import hashlib
import json
import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field

import numpy as np

WORD_BITS = 64
CODEBOOK_VERSION = 1


class HypervectorError(ValueError):
    """Base class for hypervector algebra errors."""


class DimensionMismatchError(HypervectorError):
    pass


class EmptyInputError(HypervectorError):
    pass


class DuplicateTokenError(HypervectorError):
    pass


class ConfigurationError(HypervectorError):
    pass


def n_words(size: int) -> int:
    return (size + WORD_BITS - 1) // WORD_BITS


def pack_bits(bits: np.ndarray) -> np.ndarray:
    """Pack a boolean array along its last axis into uint64 words."""
    bits = np.asarray(bits, dtype=bool)
    size = bits.shape[-1]
    pad = n_words(size) * WORD_BITS - size
    if pad:
        bits = np.concatenate([bits, np.zeros(bits.shape[:-1] + (pad,), dtype=bool)], axis=-1)
    packed = np.packbits(bits, axis=-1, bitorder="little")
    return np.ascontiguousarray(packed).view("<u8").astype(np.uint64, copy=False)


def unpack_bits(words: np.ndarray, size: int) -> np.ndarray:
    """Inverse of :func:`pack_bits`; returns a bool array of length ``size`` on the last axis."""
    words = np.ascontiguousarray(words, dtype="<u8")
    raw = words.view(np.uint8)
    bits = np.unpackbits(raw, axis=-1, bitorder="little")
    return bits[..., :size].astype(bool)


@dataclass(frozen=True, eq=False)
class Hypervector:
    """Fixed-width Boolean vector, stored bit-packed."""

    size: int
    words: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        if self.size < 1:
            raise ConfigurationError(f"hypervector size must be positive, got {self.size}")
        words = np.ascontiguousarray(self.words, dtype=np.uint64)
        if words.shape != (n_words(self.size),):
            raise DimensionMismatchError(
                f"expected {n_words(self.size)} words for size {self.size}, got shape {words.shape}"
            )
        tail = self.size % WORD_BITS
        if tail and int(words[-1]) >> tail:
            raise HypervectorError("bits set beyond hypervector size")
        words = words.copy()
        words.setflags(write=False)
        object.__setattr__(self, "words", words)

    @classmethod
    def _trusted(cls, size: int, words: np.ndarray) -> Hypervector:
        # internal results that are valid by construction skip re-validation
        v = object.__new__(cls)
        words.setflags(write=False)
        object.__setattr__(v, "size", size)
        object.__setattr__(v, "words", words)
        return v

    @classmethod
    def zeros(cls, size: int) -> Hypervector:
        return cls(size, np.zeros(n_words(size), dtype=np.uint64))

    @classmethod
    def ones(cls, size: int) -> Hypervector:
        return cls.from_bits(np.ones(size, dtype=bool))

    @classmethod
    def from_bits(cls, bits: Sequence[bool] | np.ndarray) -> Hypervector:
        bits = np.asarray(bits, dtype=bool)
        if bits.ndim != 1 or bits.size == 0:
            raise EmptyInputError("hypervector needs a non-empty 1-D bit vector")
        return cls(bits.size, pack_bits(bits))

    @classmethod
    def from_positions(cls, size: int, positions: Iterable[int]) -> Hypervector:
        bits = np.zeros(size, dtype=bool)
        pos = np.fromiter((int(p) for p in positions), dtype=np.int64)
        if pos.size and (pos.min() < 0 or pos.max() >= size):
            raise HypervectorError(f"positions must lie in [0, {size})")
        bits[pos] = True
        return cls.from_bits(bits)

    def bits(self) -> np.ndarray:
        return unpack_bits(self.words, self.size)

    def positions(self) -> list[int]:
        return np.flatnonzero(self.bits()).tolist()

    def popcount(self) -> int:
        return int(np.bitwise_count(self.words).sum())

    def complement(self) -> Hypervector:
        return Hypervector.from_bits(~self.bits())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Hypervector):
            return NotImplemented
        return self.size == other.size and self.words.tobytes() == other.words.tobytes()

    def __hash__(self) -> int:
        return hash((self.size, self.words.tobytes()))

    def __or__(self, other: Hypervector) -> Hypervector:
        return bundle([self, other])

    def __and__(self, other: Hypervector) -> Hypervector:
        _check_same_size(self, other)
        return Hypervector._trusted(self.size, self.words & other.words)


def _check_same_size(a: Hypervector, b: Hypervector) -> None:
    if a.size != b.size:
        raise DimensionMismatchError(f"hypervector sizes differ: {a.size} vs {b.size}")


def rotate(v: Hypervector, k: int) -> Hypervector:
    """Cyclic shift: bit ``p`` of ``v`` lands at ``(p + k) mod D``."""
    D = v.size
    k %= D
    if k == 0:
        return v
    x = int.from_bytes(v.words.tobytes(), "little")
    x = ((x << k) | (x >> (D - k))) & ((1 << D) - 1)
    raw = x.to_bytes(8 * n_words(D), "little")
    return Hypervector._trusted(D, np.frombuffer(raw, dtype="<u8").astype(np.uint64))


def bind_role(v: Hypervector, role_index: int) -> Hypervector:
    """Attach a role by shifting; role 0 means the unshifted vector."""
    if role_index < 1:
        raise ConfigurationError("role_index must be >= 1; role 0 is the unshifted vector")
    return rotate(v, role_index)


def bundle(vs: Sequence[Hypervector]) -> Hypervector:
    """Elementwise OR."""
    vs = list(vs)
    if not vs:
        raise EmptyInputError("cannot bundle an empty list")
    size = vs[0].size
    for v in vs[1:]:
        _check_same_size(vs[0], v)
    out = vs[0].words.copy()
    for v in vs[1:]:
        out |= v.words
    return Hypervector._trusted(size, out)


def overlap(a: Hypervector, b: Hypervector) -> int:
    """Number of positions set in both vectors."""
    _check_same_size(a, b)
    return int(np.bitwise_count(a.words & b.words).sum())


def capacity(D: int, S: int) -> int:
    """Exact number of distinct supports with ``S`` set bits in ``D`` positions."""
    if D < 0 or S < 0 or S > D:
        raise HypervectorError(f"capacity needs 0 <= S <= D, got D={D}, S={S}")
    return math.comb(D, S)


def overlap_likelihood(D: int, P: int, T: int) -> float:
    """Collision likelihood ``1 - (1 - D**-P)**T`` for T tokens of P projection bits.

    Evaluated as ``-expm1(T * log1p(-q))`` with ``q = 1/D**P`` from a
    correctly rounded integer division; the naive form returns 0 once
    ``q`` drops below machine epsilon.
    """
    if D < 1 or P < 1 or T < 0:
        raise HypervectorError(f"overlap_likelihood needs D>=1, P>=1, T>=0, got {D}, {P}, {T}")
    if T == 0:
        return 0.0
    if D == 1:
        return 1.0
    q = 1 / D**P
    return -math.expm1(T * math.log1p(-q))


def _draw_positions(seed: int, token_id: str, size: int, nbits: int) -> list[int]:
    # Counter-mode blake2b with rejection: unbiased modulo, no repeated positions.
    limit = (1 << 64) - ((1 << 64) % size)
    key = seed.to_bytes(8, "little", signed=seed < 0)
    chosen: list[int] = []
    seen: set[int] = set()
    counter = 0
    while len(chosen) < nbits:
        h = hashlib.blake2b(token_id.encode("utf-8"), digest_size=8, key=key,
                            salt=counter.to_bytes(16, "little"))
        counter += 1
        x = int.from_bytes(h.digest(), "little")
        if x >= limit:
            continue
        p = x % size
        if p not in seen:
            seen.add(p)
            chosen.append(p)
    return sorted(chosen)


def random_token(size: int, nbits: int, seed: int, token_id: str) -> Hypervector:
    """The token hypervector for ``token_id``; a pure function of its arguments."""
    if nbits < 1 or nbits > size:
        raise ConfigurationError(f"nbits must be in [1, {size}], got {nbits}")
    if nbits == size:
        return Hypervector.ones(size)
    return Hypervector.from_positions(size, _draw_positions(seed, token_id, size, nbits))


class TokenCodebook:
    """Seeded map from token ids to sparse random hypervectors.

    Entries depend only on ``(size, nbits, seed, token_id)``, so two
    codebooks with the same parameters agree on every shared token
    regardless of insertion order.
    """

    def __init__(self, size: int, nbits: int, seed: int = 0):
        if size < 1:
            raise ConfigurationError(f"size must be positive, got {size}")
        if nbits < 1 or nbits > size:
            raise ConfigurationError(f"nbits must be in [1, {size}], got {nbits}")
        if not -(2**63) <= seed < 2**64:
            raise ConfigurationError("seed must fit in 64 bits")
        self.size = size
        self.nbits = nbits
        self.seed = seed
        self.entries: dict[str, Hypervector] = {}

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, token_id: str) -> bool:
        return token_id in self.entries

    def __getitem__(self, token_id: str) -> Hypervector:
        return self.entries[token_id]

    def __iter__(self):
        return iter(self.entries)

    def new_token(self, token_id: str) -> Hypervector:
        if token_id in self.entries:
            raise DuplicateTokenError(f"token {token_id!r} already in codebook")
        hv = random_token(self.size, self.nbits, self.seed, token_id)
        self.entries[token_id] = hv
        return hv

    def get_or_create(self, token_id: str) -> Hypervector:
        hv = self.entries.get(token_id)
        if hv is None:
            hv = self.new_token(token_id)
        return hv

    def get(self, token_id: str) -> Hypervector | None:
        return self.entries.get(token_id)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TokenCodebook):
            return NotImplemented
        return (
            (self.size, self.nbits, self.seed) == (other.size, other.nbits, other.seed)
            and list(self.entries) == list(other.entries)
            and all(self.entries[k] == other.entries[k] for k in self.entries)
        )

    def to_dict(self) -> dict:
        return {
            "version": CODEBOOK_VERSION,
            "size": self.size,
            "nbits": self.nbits,
            "seed": self.seed,
            "tokens": [{"id": k, "positions": v.positions()} for k, v in self.entries.items()],
        }

    @classmethod
    def from_dict(cls, d: dict) -> TokenCodebook:
        if d.get("version") != CODEBOOK_VERSION:
            raise ConfigurationError(f"unsupported codebook version {d.get('version')!r}")
        cb = cls(int(d["size"]), int(d["nbits"]), int(d["seed"]))
        for tok in d["tokens"]:
            if tok["id"] in cb.entries:
                raise DuplicateTokenError(f"token {tok['id']!r} repeated in serialized codebook")
            hv = Hypervector.from_positions(cb.size, tok["positions"])
            if hv.popcount() != cb.nbits:
                raise ConfigurationError(f"token {tok['id']!r} has {hv.popcount()} bits, expected {cb.nbits}")
            cb.entries[tok["id"]] = hv
        return cb

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    @classmethod
    def loads(cls, text: str) -> TokenCodebook:
        return cls.from_dict(json.loads(text))


def stack(vs: Sequence[Hypervector]) -> np.ndarray:
    """Unpack a list of equal-size hypervectors into an ``(n, D)`` uint8 matrix."""
    vs = list(vs)
    if not vs:
        raise EmptyInputError("nothing to stack")
    size = vs[0].size
    for v in vs:
        _check_same_size(vs[0], v)
    return unpack_bits(np.stack([v.words for v in vs]), size).astype(np.uint8)
