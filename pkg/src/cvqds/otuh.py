"""One-time universal hashing signatures among a signer and two recipients.

Key material: the signer holds ``X_a`` (n bits) and ``Y_a`` (2n bits); the
recipients hold shares with ``X_a = X_b ^ X_c`` and ``Y_a = Y_b ^ Y_c``, so
neither recipient alone learns anything about the signer's keys.

Signing draws a fresh irreducible polynomial ``p`` (tap bits ``p_a``),
hashes the document with the LFSR Toeplitz hash keyed by ``(p, X_a)``,
forms the digest ``hash || p_a`` (hash in bits ``0..n-1``, ``p_a`` in bits
``n..2n-1``) and one-time-pads it with ``Y_a``.

A :class:`KeyBundle` may be used for exactly one sign or verify call.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .bits import BitSource, RandomBits, as_bits, bits_to_hex, int_to_bits, make_generator
from .gf2poly import Gf2Poly, is_irreducible, mulmod, random_irreducible
from .toeplitz import HashSpec, toeplitz_hash

__all__ = [
    "SIGNER",
    "RECIPIENT_B",
    "RECIPIENT_C",
    "KeyReuseError",
    "KeyBundle",
    "MessagePacket",
    "ProtocolTranscript",
    "Tamper",
    "Forge",
    "keygen_split",
    "sign",
    "verify",
    "run_protocol",
    "forged_document",
    "forge_success_estimate",
]

SIGNER, RECIPIENT_B, RECIPIENT_C = "signer", "recipient-B", "recipient-C"
_ROLES = (SIGNER, RECIPIENT_B, RECIPIENT_C)


class KeyReuseError(RuntimeError):
    """A one-time key bundle was used a second time."""


@dataclass(eq=False)
class KeyBundle:
    X: np.ndarray
    Y: np.ndarray
    role: str
    used: bool = False

    def __post_init__(self):
        self.X, self.Y = as_bits(self.X), as_bits(self.Y)
        if self.role not in _ROLES:
            raise ValueError(f"unknown role {self.role!r}")
        if self.X.size < 1 or self.Y.size != 2 * self.X.size:
            raise ValueError("key bundle needs len(Y) == 2 * len(X) >= 2")

    @property
    def n(self) -> int:
        return self.X.size

    def shares(self) -> tuple[np.ndarray, np.ndarray]:
        """Copies of (X, Y) for handing to the other recipient."""
        return self.X.copy(), self.Y.copy()

    def consume(self) -> None:
        if self.used:
            raise KeyReuseError(f"{self.role} key bundle already consumed")
        self.used = True


@dataclass(frozen=True)
class MessagePacket:
    doc: np.ndarray
    sig: np.ndarray

    def with_doc(self, doc) -> "MessagePacket":
        return MessagePacket(as_bits(doc), self.sig)


def keygen_split(n: int, source: BitSource, max_retries: int = 64) -> tuple[KeyBundle, KeyBundle, KeyBundle]:
    """Draw the signer's keys and split them into two recipient shares.

    Redraws while ``X_a == X_b`` or ``Y_a == Y_b``, since then one recipient
    would hold the signer's key outright.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    for _ in range(max_retries):
        xa, ya = source.take(n), source.take(2 * n)
        xb, yb = source.take(n), source.take(2 * n)
        if np.array_equal(xa, xb) or np.array_equal(ya, yb):
            continue
        return (KeyBundle(xa, ya, SIGNER), KeyBundle(xb, yb, RECIPIENT_B),
                KeyBundle(xa ^ xb, ya ^ yb, RECIPIENT_C))
    raise RuntimeError(f"could not draw asymmetric keys in {max_retries} attempts")


def sign(doc, alice: KeyBundle, source: BitSource) -> tuple[MessagePacket, np.ndarray]:
    """Sign ``doc``; returns the packet and the tap bits of the fresh polynomial."""
    doc = as_bits(doc)
    if alice.role != SIGNER:
        raise ValueError("only the signer's bundle can sign")
    if doc.size == 0:
        raise ValueError("empty message")
    alice.consume()
    p, taps = random_irreducible(alice.n, source)
    digest_hash = toeplitz_hash(HashSpec(p, alice.X, check=False), doc)
    digest = np.concatenate([digest_hash, taps])
    return MessagePacket(doc, digest ^ alice.Y), taps


def verify(packet: MessagePacket, own: KeyBundle, peer_shares) -> bool:
    """Recipient check: rebuild the signer's keys, decrypt, rehash, compare.

    A decrypted polynomial that is not irreducible means the signature was
    tampered with and is rejected rather than raised.
    """
    if own.role not in (RECIPIENT_B, RECIPIENT_C):
        raise ValueError("only recipients verify")
    px, py = (as_bits(v) for v in peer_shares)
    if px.size != own.n or py.size != 2 * own.n or packet.sig.size != 2 * own.n:
        raise ValueError("key share or signature length mismatch")
    own.consume()
    n = own.n
    k_x, k_y = own.X ^ px, own.Y ^ py
    digest = packet.sig ^ k_y
    expected_hash, taps = digest[:n], digest[n:]
    p = Gf2Poly.from_tap_bits(taps)
    if not is_irreducible(p) or packet.doc.size == 0:
        return False
    actual = toeplitz_hash(HashSpec(p, k_x, check=False), packet.doc)
    return bool(np.array_equal(actual, expected_hash))


@dataclass(frozen=True)
class Tamper:
    """Flip one document bit on the given hop ('alice-bob' or 'bob-charlie')."""

    bit: int
    stage: str = "bob-charlie"


@dataclass(frozen=True)
class Forge:
    """Bob forwards ``doc ^ g`` with ``g`` a product of guessed polynomials.

    ``strategy`` is 'guess' (random irreducible guesses) or 'oracle' (Bob
    somehow knows the signer's polynomial; success is then certain).
    """

    strategy: str = "guess"
    seed: int = 0


@dataclass
class ProtocolTranscript:
    events: list = field(default_factory=list)
    bob_accept: bool | None = None
    charlie_accept: bool | None = None
    aborted: bool = False

    def log(self, **event) -> None:
        self.events.append(event)

    def to_jsonl(self) -> str:
        lines = [json.dumps(e, sort_keys=True) for e in self.events]
        lines.append(json.dumps({"bob_accept": self.bob_accept, "charlie_accept": self.charlie_accept,
                                 "aborted": self.aborted}, sort_keys=True))
        return "\n".join(lines) + "\n"


def forged_document(doc, guesses, m: int | None = None) -> np.ndarray:
    """``doc ^ g`` where ``g(x)`` is the product of the guessed polynomials.

    If the signer's polynomial is among the guesses, ``g`` is divisible by it,
    its hash is zero, and by linearity the forged document keeps the hash of
    ``doc``.
    """
    doc = as_bits(doc)
    m = doc.size if m is None else m
    g = Gf2Poly(1)
    for q in guesses:
        g = mulmod(g, q)
    if g.degree >= m:
        raise ValueError("product of guesses does not fit in the message length")
    return doc ^ int_to_bits(g.value, m)


@lru_cache(maxsize=256)
def _irreducible_pool(n: int, known: tuple) -> tuple:
    """All irreducible degree-n polynomials whose tap bits match ``known``."""
    fixed = dict(known)
    free = [i for i in range(n) if i not in fixed]
    pool = []
    for v in range(1 << len(free)):
        taps = np.zeros(n, dtype=np.uint8)
        for i, b in fixed.items():
            taps[i] = b
        for j, i in enumerate(free):
            taps[i] = (v >> j) & 1
        p = Gf2Poly.from_tap_bits(taps)
        if is_irreducible(p):
            pool.append(p)
    return tuple(pool)


def _guess_irreducibles(n: int, count: int, rng: np.random.Generator, known: dict[int, int] | None = None):
    """Up to ``count`` distinct random irreducible degree-n guesses agreeing with known tap bits.

    Small candidate sets are enumerated, so the result is shorter than
    ``count`` when fewer consistent irreducibles exist.
    """
    known = known or {}
    if n - len(known) <= 12:
        pool = _irreducible_pool(n, tuple(sorted(known.items())))
        return [pool[i] for i in rng.permutation(len(pool))[:count]]
    out, seen = [], set()
    while len(out) < count:
        taps = rng.integers(0, 2, size=n, dtype=np.uint8)
        for i, v in known.items():
            taps[i] = v
        p = Gf2Poly.from_tap_bits(taps)
        if p.value in seen or not is_irreducible(p):
            continue
        seen.add(p.value)
        out.append(p)
    return out


def _forge_guesses(n: int, m: int, rng, known=None):
    k = (m - 1) // n
    return _guess_irreducibles(n, k, rng, known) if k else []


def run_protocol(doc, bundles, adversary=None, source: BitSource | None = None) -> ProtocolTranscript:
    """Run the messaging stage end to end and record every message and decision.

    ``bundles`` is ``(alice, bob, charlie)``.  Charlie verifies only after Bob
    announces acceptance; a rejection by Bob aborts the protocol.
    """
    alice, bob, charlie = bundles
    if not (alice.n == bob.n == charlie.n):
        raise ValueError("inconsistent bundle sizes")
    doc = as_bits(doc)
    source = source or RandomBits(0)
    tr = ProtocolTranscript()
    packet, taps = sign(doc, alice, source)
    tr.log(step="sign", frm="alice", to="bob", doc=bits_to_hex(packet.doc), sig=bits_to_hex(packet.sig))

    received = packet
    if isinstance(adversary, Tamper) and adversary.stage == "alice-bob":
        received = packet.with_doc(_flip(packet.doc, adversary.bit))
        tr.log(step="tamper", hop="alice-bob", bit=adversary.bit)

    forwarded = received
    if isinstance(adversary, Tamper) and adversary.stage == "bob-charlie":
        forwarded = received.with_doc(_flip(received.doc, adversary.bit))
        tr.log(step="tamper", hop="bob-charlie", bit=adversary.bit)
    elif isinstance(adversary, Forge):
        if adversary.strategy == "oracle":
            guesses = [Gf2Poly.from_tap_bits(taps)]
        elif adversary.strategy == "guess":
            guesses = _forge_guesses(alice.n, doc.size, make_generator(adversary.seed))
        else:
            raise ValueError(f"unknown forging strategy {adversary.strategy!r}")
        if guesses and doc.size > alice.n:
            forwarded = received.with_doc(forged_document(received.doc, guesses))
        tr.log(step="forge", strategy=adversary.strategy, guesses=len(guesses))
    elif adversary is not None and not isinstance(adversary, Tamper):
        raise ValueError(f"unknown adversary {adversary!r}")

    xb, yb = bob.shares()
    tr.log(step="forward", frm="bob", to="charlie", doc=bits_to_hex(forwarded.doc),
           sig=bits_to_hex(forwarded.sig), X=bits_to_hex(xb), Y=bits_to_hex(yb))
    xc, yc = charlie.shares()
    tr.log(step="return-keys", frm="charlie", to="bob", X=bits_to_hex(xc), Y=bits_to_hex(yc))

    tr.bob_accept = verify(received, bob, (xc, yc))
    tr.log(step="verify", party="bob", accept=tr.bob_accept)
    if not tr.bob_accept:
        tr.aborted = True
        tr.log(step="abort", party="bob")
        return tr
    tr.charlie_accept = verify(forwarded, charlie, (xb, yb))
    tr.log(step="verify", party="charlie", accept=tr.charlie_accept)
    return tr


def _flip(bits: np.ndarray, i: int) -> np.ndarray:
    if not 0 <= i < bits.size:
        raise ValueError(f"bit index {i} outside document of {bits.size} bits")
    out = bits.copy()
    out[i] ^= 1
    return out


def forge_success_estimate(n: int, m: int, trials: int, secrecy_deficit: float = 0.0,
                           seed: int = 0) -> float:
    """Empirical success rate of the divisibility forgery at toy sizes.

    Each trial runs a fresh honest signing; the forger then learns
    ``floor(secrecy_deficit)`` of the signer's tap bits (modelling keys with
    ``n - deficit`` bits of unknown information), guesses ``(m-1)//n``
    distinct irreducible polynomials consistent with them, and submits
    ``doc ^ product(guesses)``.  Success means Charlie accepts.  Compare with
    ``m 2^(1 - (n - deficit))``.
    """
    if n > 20:
        raise ValueError("forging simulation is limited to n <= 20")
    if m <= n:
        raise ValueError("need m > n to fit a degree-n factor")
    leak = int(secrecy_deficit)
    if not 0 <= leak < n:
        raise ValueError("secrecy_deficit must lie in [0, n)")
    rng = make_generator(np.random.SeedSequence(seed, spawn_key=(1,)))
    source = RandomBits(np.random.SeedSequence(seed, spawn_key=(2,)))
    wins = 0
    for _ in range(trials):
        alice, bob, charlie = keygen_split(n, source)
        doc = source.take(m)
        packet, taps = sign(doc, alice, source)
        known = {i: int(taps[i]) for i in range(leak)}
        guesses = _forge_guesses(n, m, rng, known)
        forged = packet.with_doc(forged_document(packet.doc, guesses))
        if verify(forged, charlie, bob.shares()):
            wins += 1
    return wins / trials
