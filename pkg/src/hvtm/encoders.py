"""Booleanization front-ends: images, text, molecular fingerprints, raw bits."""

from __future__ import annotations

import logging
import string
from collections.abc import Iterable, Sequence
from dataclasses import asdict, dataclass

import numpy as np

from .hv_core import (
    ConfigurationError,
    HypervectorError,
    Hypervector,
    TokenCodebook,
    EmptyInputError,
    bundle,
    n_words,
    rotate,
)

log = logging.getLogger(__name__)

ROLE_SHIFTS = {"patch": 0, "row": 1, "column": 2, "position": 0}

# per-role seed offsets so that row "5" and column "5" get different tokens
_SEED_OFFSETS = {"patch": 0, "row": 1, "column": 2, "position": 3}


class EncodingError(HypervectorError):
    pass


def encode_vanilla(bits: Sequence[bool] | np.ndarray) -> Hypervector:
    """Wrap already-Booleanized features as a hypervector of width len(bits)."""
    bits = np.asarray(bits, dtype=bool)
    if bits.ndim != 1 or bits.size == 0:
        raise EmptyInputError("vanilla encoding needs a non-empty 1-D feature vector")
    return Hypervector.from_bits(bits)


def binarize(img: np.ndarray, threshold: int) -> np.ndarray:
    return np.asarray(img) > threshold


@dataclass
class ImageEncoderSpec:
    size: int
    nbits: int
    seed: int = 0
    patch_height: int = 10
    patch_width: int = 10
    stride: int = 1
    binarize_threshold: int = 75
    row_shift: int = ROLE_SHIFTS["row"]
    column_shift: int = ROLE_SHIFTS["column"]
    # drop patches whose binarized content is all zero
    skip_blank: bool = False
    # also OR in a token unique to each patch position
    position_tokens: bool = False

    def __post_init__(self) -> None:
        if min(self.patch_height, self.patch_width, self.stride) < 1:
            raise ConfigurationError("patch dimensions and stride must be positive")
        if not 0 <= self.binarize_threshold <= 255:
            raise ConfigurationError("binarize_threshold must lie in [0, 255]")

    def to_dict(self) -> dict:
        return asdict(self)


def patch_token_id(patch: np.ndarray) -> str:
    """Hex string of the row-major binarized patch bits."""
    flat = np.asarray(patch, dtype=bool).ravel()
    value = int.from_bytes(np.packbits(flat).tobytes(), "big") >> (-flat.size % 8)
    return f"{value:0{(flat.size + 3) // 4}x}"


class ImageEncoder:
    """Patch-content token OR row token (shifted) OR column token (shifted), bundled over patches."""

    def __init__(self, spec: ImageEncoderSpec, codebooks: dict[str, TokenCodebook] | None = None):
        self.spec = spec
        if codebooks is None:
            codebooks = {role: TokenCodebook(spec.size, spec.nbits, spec.seed + off)
                         for role, off in _SEED_OFFSETS.items()
                         if role != "position" or spec.position_tokens}
        for role, cb in codebooks.items():
            if (cb.size, cb.nbits) != (spec.size, spec.nbits):
                raise ConfigurationError(f"{role} codebook does not share size/nbits with the encoder")
        self.codebooks = codebooks
        self._shifted: dict[tuple[str, str], np.ndarray] = {}

    def role_shifts(self) -> dict[str, int]:
        shifts = {"patch": 0, "row": self.spec.row_shift, "column": self.spec.column_shift}
        if self.spec.position_tokens:
            shifts["position"] = 0
        return shifts

    def _grid(self, shape: tuple[int, int]) -> tuple[range, range]:
        h, w = shape
        ph, pw, st = self.spec.patch_height, self.spec.patch_width, self.spec.stride
        if ph > h or pw > w:
            raise EncodingError(f"patch {ph}x{pw} larger than image {h}x{w}")
        return range(0, h - ph + 1, st), range(0, w - pw + 1, st)

    def _role_words(self, role: str, token_id: str) -> np.ndarray:
        key = (role, token_id)
        words = self._shifted.get(key)
        if words is None:
            hv = self.codebooks[role].get_or_create(token_id)
            shift = self.role_shifts()[role]
            words = rotate(hv, shift).words if shift else hv.words
            self._shifted[key] = words
        return words

    def position_hv(self, content_id: str, r: int, c: int) -> Hypervector:
        """Hypervector contributed by one patch position."""
        acc = self._role_words("patch", content_id) | self._role_words("row", str(r)) \
            | self._role_words("column", str(c))
        if self.spec.position_tokens:
            acc = acc | self._role_words("position", f"{r},{c}")
        return Hypervector(self.spec.size, acc)

    def encode_words(self, img: np.ndarray) -> np.ndarray:
        img = np.asarray(img)
        if img.ndim != 2:
            raise EncodingError("images must be 2-D grayscale grids")
        bits = binarize(img, self.spec.binarize_threshold)
        rows, cols = self._grid(bits.shape)
        ph, pw = self.spec.patch_height, self.spec.patch_width
        acc = np.zeros(n_words(self.spec.size), dtype=np.uint64)
        for r in rows:
            for c in cols:
                patch = bits[r:r + ph, c:c + pw]
                if self.spec.skip_blank and not patch.any():
                    continue
                acc |= self._role_words("patch", patch_token_id(patch))
                acc |= self._role_words("row", str(r))
                acc |= self._role_words("column", str(c))
                if self.spec.position_tokens:
                    acc |= self._role_words("position", f"{r},{c}")
        return acc

    def encode(self, img: np.ndarray) -> Hypervector:
        return Hypervector(self.spec.size, self.encode_words(img))

    def encode_batch(self, imgs: Iterable[np.ndarray]) -> np.ndarray:
        """Packed words for many images, shape (S, ceil(D/64))."""
        return np.stack([self.encode_words(img) for img in imgs])


def encode_image(img: np.ndarray, encoder: ImageEncoder) -> Hypervector:
    return encoder.encode(img)


_PUNCT = str.maketrans("", "", string.punctuation)


def tokenize(text: str) -> list[str]:
    """Lowercase, strip ASCII punctuation, split on whitespace."""
    return text.lower().translate(_PUNCT).split()


@dataclass
class TextEncoderSpec:
    size: int
    nbits: int
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


class TextEncoder:
    """Bag-of-words: OR of the token hypervectors of every in-vocabulary word.

    In training mode unseen words are admitted to the vocabulary; in
    evaluation mode they are skipped.
    """

    def __init__(self, spec: TextEncoderSpec, vocabulary: TokenCodebook | None = None):
        self.spec = spec
        self.vocabulary = vocabulary or TokenCodebook(spec.size, spec.nbits, spec.seed)
        if (self.vocabulary.size, self.vocabulary.nbits) != (spec.size, spec.nbits):
            raise ConfigurationError("vocabulary does not match encoder size/nbits")

    @property
    def codebooks(self) -> dict[str, TokenCodebook]:
        return {"word": self.vocabulary}

    def encode(self, text: str, train: bool = False) -> Hypervector:
        tokens = tokenize(text)
        hvs = []
        for tok in dict.fromkeys(tokens):
            hv = self.vocabulary.get_or_create(tok) if train else self.vocabulary.get(tok)
            if hv is not None:
                hvs.append(hv)
        if not tokens:
            log.warning("text has no tokens after tokenization; encoding as the zero vector")
        if not hvs:
            return Hypervector.zeros(self.spec.size)
        return bundle(hvs)

    def encode_batch(self, texts: Iterable[str], train: bool = False) -> np.ndarray:
        return np.stack([self.encode(t, train).words for t in texts])


def encode_text(text: str, encoder: TextEncoder, train: bool = False) -> Hypervector:
    return encoder.encode(text, train)


@dataclass
class FingerprintEncoderSpec:
    size: int
    nbits: int
    seed: int = 0
    fingerprint_length: int = 4096

    def to_dict(self) -> dict:
        return asdict(self)


class FingerprintEncoder:
    """Each fingerprint bit position owns a token; a compound is the OR over its set bits."""

    def __init__(self, spec: FingerprintEncoderSpec, codebook: TokenCodebook | None = None):
        self.spec = spec
        if codebook is None:
            codebook = TokenCodebook(spec.size, spec.nbits, spec.seed)
            for p in range(spec.fingerprint_length):
                codebook.new_token(str(p))
        if len(codebook) != spec.fingerprint_length:
            raise ConfigurationError(
                f"position codebook has {len(codebook)} entries, expected {spec.fingerprint_length}")
        self.codebook = codebook
        self._table = np.stack([codebook[str(p)].words for p in range(spec.fingerprint_length)])

    @property
    def codebooks(self) -> dict[str, TokenCodebook]:
        return {"bit": self.codebook}

    def encode_words(self, positions: Iterable[int]) -> np.ndarray:
        pos = np.fromiter((int(p) for p in positions), dtype=np.int64)
        if pos.size and (pos.min() < 0 or pos.max() >= self.spec.fingerprint_length):
            raise EncodingError(f"fingerprint position outside [0, {self.spec.fingerprint_length})")
        if pos.size == 0:
            return np.zeros(n_words(self.spec.size), dtype=np.uint64)
        return np.bitwise_or.reduce(self._table[pos], axis=0)

    def encode(self, positions: Iterable[int]) -> Hypervector:
        return Hypervector(self.spec.size, self.encode_words(positions))

    def encode_batch(self, samples: Iterable[Iterable[int]]) -> np.ndarray:
        return np.stack([self.encode_words(p) for p in samples])


def encode_fingerprint(positions: Iterable[int], encoder: FingerprintEncoder) -> Hypervector:
    return encoder.encode(positions)
