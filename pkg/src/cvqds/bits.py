"""Bit vectors, random bit sources and hex serialization.

Bit vectors are 1-D ``numpy.uint8`` arrays holding 0/1.  When a bit vector
is read as an integer, index ``i`` carries weight ``2**i``.  Hex strings are
that integer written least-significant byte first, so bit ``i`` lives in byte
``i // 8`` at position ``i % 8``.

Byte documents are unpacked MSB-first per byte: the first byte's top bit
becomes bit 0 of the vector.
"""
from __future__ import annotations

import numpy as np

__all__ = [
    "InsufficientRandomness",
    "BitSource",
    "RandomBits",
    "FixedBits",
    "as_bits",
    "bits_to_int",
    "int_to_bits",
    "bytes_to_bits",
    "bits_to_bytes",
    "bits_to_hex",
    "hex_to_bits",
    "make_generator",
]


class InsufficientRandomness(RuntimeError):
    """Raised when a bit source cannot supply the requested bits."""

    def __init__(self, msg: str = "insufficient randomness"):
        super().__init__(msg)


def make_generator(seed) -> np.random.Generator:
    """Counter-based (Philox) generator for an int seed or a SeedSequence."""
    if isinstance(seed, np.random.Generator):
        return seed
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    return np.random.Generator(np.random.Philox(seed))


class BitSource:
    """Supplier of raw random bits; tracks how many have been consumed."""

    consumed: int = 0

    def take(self, n: int) -> np.ndarray:
        raise NotImplementedError


class RandomBits(BitSource):
    """Uniform bits from a seeded Philox stream."""

    def __init__(self, seed=None):
        self._rng = make_generator(seed)
        self.consumed = 0

    def take(self, n: int) -> np.ndarray:
        if n < 0:
            raise ValueError("negative bit count")
        self.consumed += n
        return self._rng.integers(0, 2, size=n, dtype=np.uint8)


class FixedBits(BitSource):
    """Replays a fixed bit string and raises once it runs dry."""

    def __init__(self, bits):
        self._bits = as_bits(bits)
        self.consumed = 0

    @property
    def remaining(self) -> int:
        return self._bits.size - self.consumed

    def take(self, n: int) -> np.ndarray:
        if n > self.remaining:
            raise InsufficientRandomness()
        out = self._bits[self.consumed:self.consumed + n].copy()
        self.consumed += n
        return out


def as_bits(x) -> np.ndarray:
    """Coerce a sequence of 0/1 values (or a '0101' string) to a bit vector."""
    if isinstance(x, str):
        x = [int(c) for c in x if c in "01"]
    arr = np.asarray(x, dtype=np.uint8).reshape(-1)
    if arr.size and arr.max() > 1:
        raise ValueError("bit vector entries must be 0 or 1")
    return arr


def bits_to_int(bits) -> int:
    bits = as_bits(bits)
    if bits.size == 0:
        return 0
    return int.from_bytes(np.packbits(bits, bitorder="little").tobytes(), "little")


def int_to_bits(value: int, n: int) -> np.ndarray:
    if value < 0:
        raise ValueError("negative value")
    if value >> n:
        raise ValueError(f"value does not fit in {n} bits")
    raw = np.frombuffer(value.to_bytes((n + 7) // 8, "little"), dtype=np.uint8)
    return np.unpackbits(raw, bitorder="little")[:n].copy()


def bytes_to_bits(data: bytes) -> np.ndarray:
    return np.unpackbits(np.frombuffer(data, dtype=np.uint8))


def bits_to_bytes(bits) -> bytes:
    bits = as_bits(bits)
    if bits.size % 8:
        raise ValueError("bit length is not a whole number of bytes")
    return np.packbits(bits).tobytes()


def bits_to_hex(bits) -> str:
    bits = as_bits(bits)
    return bits_to_int(bits).to_bytes((bits.size + 7) // 8, "little").hex()


def hex_to_bits(text: str, n: int) -> np.ndarray:
    raw = bytes.fromhex(text.strip())
    if len(raw) != (n + 7) // 8:
        raise ValueError(f"hex length {len(raw)} bytes does not match {n} bits")
    return int_to_bits(int.from_bytes(raw, "little"), n)
