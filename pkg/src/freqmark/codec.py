"""Watermark text <-> bitstring conversion (8-bit ASCII, MSB first)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EncodingError, LengthError


@dataclass(frozen=True)
class WatermarkBits:
    bits: np.ndarray
    source_text: str | None = None

    def __post_init__(self):
        b = np.asarray(self.bits)
        if b.ndim != 1 or b.size < 1:
            raise LengthError("a watermark needs at least one bit")
        if not np.all((b == 0) | (b == 1)):
            raise EncodingError("watermark bits must be 0 or 1")
        b = b.astype(np.uint8)
        b.setflags(write=False)
        object.__setattr__(self, "bits", b)
        if self.source_text is not None and b.size != 8 * len(self.source_text):
            raise LengthError("bit count does not match the source text")

    def __len__(self) -> int:
        return self.bits.size

    def __str__(self) -> str:
        return "".join("1" if v else "0" for v in self.bits)

    @classmethod
    def from_string(cls, s: str) -> "WatermarkBits":
        s = s.strip()
        if not s or set(s) - {"0", "1"}:
            raise EncodingError("bitstring must be a non-empty run of '0'/'1'")
        return cls(np.array([c == "1" for c in s], dtype=np.uint8))


def text_to_bits(text: str) -> WatermarkBits:
    if not text:
        raise EncodingError("empty watermark text")
    codes = []
    for ch in text:
        if ord(ch) > 127:
            raise EncodingError(f"non-ASCII character {ch!r}")
        codes.append(ord(ch))
    bits = np.unpackbits(np.array(codes, dtype=np.uint8))  # big-endian bit order
    return WatermarkBits(bits, text)


def bits_to_text(w: WatermarkBits) -> str:
    if len(w) % 8:
        raise LengthError(f"{len(w)} bits is not a whole number of bytes")
    codes = np.packbits(w.bits)
    if np.any(codes > 127):
        raise EncodingError("decoded byte outside ASCII range")
    return bytes(codes.tolist()).decode("ascii")


def random_bits(m: int, seed: int) -> WatermarkBits:
    if m < 1:
        raise LengthError("m must be >= 1")
    return WatermarkBits(np.random.default_rng(seed).integers(0, 2, size=m))


def bitwise_accuracy(w: WatermarkBits, w_hat: WatermarkBits) -> float:
    if len(w) != len(w_hat):
        raise LengthError(f"length mismatch: {len(w)} vs {len(w_hat)}")
    return float(np.mean(w.bits == w_hat.bits))
