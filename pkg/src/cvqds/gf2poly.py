"""Polynomials over GF(2).

A polynomial is stored as a Python int: bit ``i`` is the coefficient of
``x**i``.  Ints are canonical by construction (no stray high zero bits), and
the big-int XOR/shift primitives make products and reductions of degree
~10^4 polynomials cheap.

The LFSR hash addresses a monic degree-n polynomial by its tap vector
``p_a = (p_{n-1}, ..., p_1, p_0)``, i.e. the low coefficients listed from
high to low.  :meth:`Gf2Poly.tap_bits` and :meth:`Gf2Poly.from_tap_bits`
convert between the two.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .bits import BitSource, as_bits, bits_to_hex, bits_to_int, hex_to_bits, int_to_bits

__all__ = [
    "Gf2Poly",
    "add",
    "mulmod",
    "polymod",
    "polygcd",
    "is_irreducible",
    "random_irreducible",
    "count_irreducible",
]

# byte -> 16-bit word with a zero interleaved after every bit (squaring in GF(2))
_SPREAD = np.array(
    [sum(((b >> i) & 1) << (2 * i) for i in range(8)) for b in range(256)],
    dtype="<u2",
)


@dataclass(frozen=True)
class Gf2Poly:
    value: int = 0

    def __post_init__(self):
        if self.value < 0:
            raise ValueError("polynomial value must be non-negative")

    @property
    def degree(self) -> int | None:
        """Degree, or ``None`` for the zero polynomial."""
        return self.value.bit_length() - 1 if self.value else None

    @property
    def is_zero(self) -> bool:
        return self.value == 0

    @property
    def coeffs(self) -> np.ndarray:
        """Coefficient vector, constant term first."""
        if not self.value:
            return np.zeros(0, dtype=np.uint8)
        return int_to_bits(self.value, self.value.bit_length())

    @classmethod
    def from_coeffs(cls, coeffs) -> "Gf2Poly":
        return cls(bits_to_int(coeffs))

    @classmethod
    def from_exponents(cls, *exps: int) -> "Gf2Poly":
        v = 0
        for e in exps:
            v ^= 1 << e
        return cls(v)

    def tap_bits(self) -> np.ndarray:
        """The n-bit vector (p_{n-1}, ..., p_0) of a degree-n polynomial."""
        n = self.degree
        if n is None or n < 1:
            raise ValueError("invalid degree")
        low = self.value ^ (1 << n)
        return int_to_bits(low, n)[::-1].copy()

    @classmethod
    def from_tap_bits(cls, taps) -> "Gf2Poly":
        """Monic degree-n polynomial whose low coefficients are ``taps``."""
        taps = as_bits(taps)
        n = taps.size
        if n < 1:
            raise ValueError("invalid degree")
        return cls((1 << n) | bits_to_int(taps[::-1]))

    def to_hex(self) -> str:
        return bits_to_hex(self.coeffs)

    @classmethod
    def from_hex(cls, text: str, nbits: int) -> "Gf2Poly":
        return cls.from_coeffs(hex_to_bits(text, nbits))

    def __add__(self, other: "Gf2Poly") -> "Gf2Poly":
        return add(self, other)

    def __mul__(self, other: "Gf2Poly") -> "Gf2Poly":
        return mulmod(self, other)

    def __mod__(self, other: "Gf2Poly") -> "Gf2Poly":
        return polymod(self, other)

    def __str__(self) -> str:
        if not self.value:
            return "0"
        terms = []
        for i in range(self.value.bit_length() - 1, -1, -1):
            if (self.value >> i) & 1:
                terms.append("1" if i == 0 else "x" if i == 1 else f"x^{i}")
        return " + ".join(terms)


def _clmul(a: int, b: int) -> int:
    if a.bit_length() < b.bit_length():
        a, b = b, a
    c = 0
    while b:
        low = b & -b
        c ^= a << (low.bit_length() - 1)
        b ^= low
    return c


def _square(a: int) -> int:
    if not a:
        return 0
    raw = np.frombuffer(a.to_bytes((a.bit_length() + 7) // 8, "little"), dtype=np.uint8)
    return int.from_bytes(_SPREAD[raw].tobytes(), "little")


def _mod(a: int, m: int) -> int:
    n = m.bit_length() - 1
    while a.bit_length() > n:
        a ^= m << (a.bit_length() - 1 - n)
    return a


def _gcd(a: int, b: int) -> int:
    while b:
        a, b = b, _mod(a, b)
    return a


def _check_modulus(m: Gf2Poly) -> None:
    if m.value == 0:
        raise ZeroDivisionError("degenerate modulus")


def add(a: Gf2Poly, b: Gf2Poly) -> Gf2Poly:
    return Gf2Poly(a.value ^ b.value)


def polymod(a: Gf2Poly, m: Gf2Poly) -> Gf2Poly:
    _check_modulus(m)
    return Gf2Poly(_mod(a.value, m.value))


def mulmod(a: Gf2Poly, b: Gf2Poly, m: Gf2Poly | None = None) -> Gf2Poly:
    """Product ``a*b``, reduced modulo ``m`` when a modulus is given."""
    if m is not None:
        _check_modulus(m)
    prod = _square(a.value) if a.value == b.value else _clmul(a.value, b.value)
    return Gf2Poly(prod if m is None else _mod(prod, m.value))


def polygcd(a: Gf2Poly, b: Gf2Poly) -> Gf2Poly:
    return Gf2Poly(_gcd(a.value, b.value))


@lru_cache(maxsize=None)
def _prime_factors(n: int) -> tuple[int, ...]:
    out, d = [], 2
    while d * d <= n:
        if n % d == 0:
            out.append(d)
            while n % d == 0:
                n //= d
        d += 1
    if n > 1:
        out.append(n)
    return tuple(out)


def is_irreducible(p: Gf2Poly) -> bool:
    """Rabin's irreducibility test.

    ``p`` of degree n is irreducible iff ``x^(2^n) = x (mod p)`` and
    ``gcd(x^(2^(n/q)) - x, p) = 1`` for every prime ``q | n``.  The Frobenius
    powers are built by repeated squaring; a nontrivial ``gcd(x^(2^k) - x, p)``
    for a small ``k < n`` exposes a low-degree factor early and short-circuits
    most random reducible candidates.
    """
    n = p.degree
    if n is None or n < 1:
        raise ValueError("invalid degree")
    m = p.value
    if n > 1 and not (m & 1):
        return False  # divisible by x
    x = _mod(2, m)
    checkpoints = {n // q for q in _prime_factors(n)}
    early = min(n // 2, 16)
    t = x
    for k in range(1, n + 1):
        t = _mod(_square(t), m)
        if k < n and (k <= early or k in checkpoints):
            if _gcd(m, t ^ x) != 1:
                return False
    return t == x


def random_irreducible(n: int, source: BitSource) -> tuple[Gf2Poly, np.ndarray]:
    """Rejection-sample a uniform monic irreducible polynomial of degree n.

    Each round draws n bits as the tap vector ``p_a`` (leading coefficient
    fixed to 1) and keeps the first candidate that passes
    :func:`is_irreducible`.  Returns the polynomial and its ``p_a`` bits.
    Raises :class:`~cvqds.bits.InsufficientRandomness` if the source runs dry.
    """
    if n < 1:
        raise ValueError("invalid degree")
    while True:
        taps = source.take(n)
        cand = Gf2Poly.from_tap_bits(taps)
        if is_irreducible(cand):
            return cand, taps


def count_irreducible(n: int) -> int:
    """Number of monic irreducible degree-n polynomials (necklace formula)."""
    if n < 1:
        raise ValueError("invalid degree")
    total = 0
    for d in range(1, n + 1):
        if n % d == 0:
            total += _mobius(n // d) * (1 << d)
    return total // n


def _mobius(k: int) -> int:
    if k == 1:
        return 1
    primes = _prime_factors(k)
    prod = 1
    for q in primes:
        prod *= q
    return 0 if prod != k else (-1) ** len(primes)
