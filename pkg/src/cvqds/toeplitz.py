"""LFSR-based Toeplitz hashing over GF(2).

The hash is fixed by a monic irreducible polynomial ``p`` of degree n and an
n-bit initial state ``s = (a_n, ..., a_1)`` (index 0 is the top of the
column).  One LFSR step shifts every element down by one and writes
``p_a . s`` on top, which is ``s -> W s`` for the companion matrix ``W``
whose first row is ``p_a``.  Column j of the n x m Toeplitz matrix is
``W^j s``, and message bit j multiplies column j, so the hash equals
``M(W) s`` with ``M(x) = sum_j M_j x^j``.  Hence ``p | M`` implies a zero
hash (Cayley-Hamilton, since ``p`` is the characteristic polynomial of W).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bits import as_bits, bits_to_int, int_to_bits
from .gf2poly import Gf2Poly, is_irreducible

__all__ = [
    "HashSpec",
    "lfsr_step",
    "toeplitz_hash",
    "hash_matrix_oracle",
    "companion_matrix",
    "matrix_poly_eval",
]


@dataclass(frozen=True)
class HashSpec:
    p: Gf2Poly
    s: np.ndarray = field(repr=False)
    check: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        s = as_bits(self.s)
        object.__setattr__(self, "s", s)
        if self.p.degree is None or self.p.degree < 1:
            raise ValueError("invalid degree")
        if s.size != self.p.degree:
            raise ValueError(f"state length {s.size} != degree {self.p.degree}")
        if self.check and not is_irreducible(self.p):
            raise ValueError("hash polynomial is not irreducible")

    @property
    def n(self) -> int:
        return self.s.size


def lfsr_step(state, p: Gf2Poly) -> np.ndarray:
    """One LFSR shift: new top element ``p_a . state``, the rest moves down."""
    state = as_bits(state)
    if state.size != p.degree:
        raise ValueError(f"state length {state.size} != degree {p.degree}")
    top = int(np.dot(p.tap_bits().astype(np.int64), state) & 1)
    return np.concatenate(([top], state[:-1])).astype(np.uint8)


def toeplitz_hash(spec: HashSpec, message) -> np.ndarray:
    """``H_nm . M`` by streaming the LFSR; the matrix is never formed.

    The state is held as an int (bit i = element i), so a step is a popcount
    parity, a shift and a mask, and accumulation is a single XOR.
    """
    msg = as_bits(message)
    if msg.size == 0:
        raise ValueError("empty message")
    n = spec.n
    mask = (1 << n) - 1
    taps = bits_to_int(spec.p.tap_bits())
    state = bits_to_int(spec.s)
    acc = 0
    for bit in msg.tolist():
        if bit:
            acc ^= state
        top = (state & taps).bit_count() & 1
        state = ((state << 1) & mask) | top
    return int_to_bits(acc, n)


def hash_matrix_oracle(spec: HashSpec, m: int) -> np.ndarray:
    """Materialize the n x m Toeplitz matrix column by column (tests only)."""
    if m < 1:
        raise ValueError("m must be positive")
    cols = np.empty((spec.n, m), dtype=np.uint8)
    col = spec.s
    for j in range(m):
        cols[:, j] = col
        col = lfsr_step(col, spec.p)
    return cols


def companion_matrix(p: Gf2Poly) -> np.ndarray:
    n = p.degree
    if n is None or n < 1:
        raise ValueError("invalid degree")
    w = np.zeros((n, n), dtype=np.uint8)
    w[0] = p.tap_bits()
    w[np.arange(1, n), np.arange(n - 1)] = 1
    return w


def matrix_poly_eval(q: Gf2Poly, w: np.ndarray) -> np.ndarray:
    """Evaluate ``q(W)`` over GF(2) by Horner's rule."""
    n = w.shape[0]
    out = np.zeros((n, n), dtype=np.int64)
    eye = np.eye(n, dtype=np.int64)
    w64 = w.astype(np.int64)
    for c in q.coeffs[::-1].tolist():
        out = (out @ w64) % 2
        if c:
            out = (out + eye) % 2
    return out.astype(np.uint8)
