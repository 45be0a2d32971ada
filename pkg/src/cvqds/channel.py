"""Binary-modulated coherent-state channel: fidelity test, closed forms, sampler.

Quadratures are normalized so the vacuum homodyne variance is 1/4.  Bob's
received state for Alice's bit ``a`` is a coherent state of amplitude
``(-1)^a sqrt(eta mu)`` randomly displaced by a complex Gaussian whose real
and imaginary parts each have variance ``xi/4``.  Homodyne outcomes are
therefore ``N((-1)^a sqrt(eta mu), (1 + xi)/4)``; heterodyne outcomes follow
the Husimi function, with per-quadrature variance ``1/2 + xi/4``.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import erfc

from .bits import make_generator

__all__ = [
    "laguerre",
    "FidelityTestFn",
    "lambda_mr",
    "ChannelModel",
    "PulseParams",
    "RoundOutcome",
    "ExpectedStats",
    "SiftedData",
    "FidelityCheck",
    "sample_round",
    "expected_stats",
    "run_distribution",
    "coherent_fidelity",
    "heterodyne_sampler",
    "fidelity_bound_check",
    "q_minus",
]

LABELS = ("signal", "test", "trash")


def laguerre(n: int, k: int, x):
    """Associated Laguerre polynomial L_n^(k)(x) by the three-term recurrence."""
    if n < 0 or k < 0:
        raise ValueError("laguerre needs n >= 0 and k >= 0")
    x = np.asarray(x, dtype=float)
    prev = np.ones_like(x)
    if n == 0:
        return prev if prev.ndim else float(prev)
    cur = 1.0 + k - x
    for j in range(1, n):
        prev, cur = cur, ((2 * j + 1 + k - x) * cur - (j + k) * prev) / (j + 1)
    return cur if cur.ndim else float(cur)


@dataclass(frozen=True)
class FidelityTestFn:
    """The bounded test function Lambda_{m,r} applied to heterodyne data."""

    m: int = 1
    r: float = 0.412

    def __post_init__(self):
        if self.m < 0:
            raise ValueError("m must be non-negative")
        if self.r <= 0:
            raise ValueError("r must be positive")

    def __call__(self, nu):
        return lambda_mr(self, nu)

    @cached_property
    def extrema(self) -> tuple[float, float]:
        """(max, min) of Lambda over nu >= 0."""
        hi = (40.0 + 6.0 * self.m) / self.r
        grid = np.linspace(0.0, hi, 20001)
        vals = self(grid)
        step = grid[1] - grid[0]
        out = []
        for sign, idx in ((-1.0, int(np.argmax(vals))), (1.0, int(np.argmin(vals)))):
            lo_b, hi_b = max(0.0, grid[idx] - step), min(hi, grid[idx] + step)
            res = minimize_scalar(lambda v: sign * float(self(v)), bounds=(lo_b, hi_b),
                                  method="bounded", options={"xatol": 1e-12})
            best = min(sign * float(vals[idx]), res.fun)
            out.append(sign * best)
        # decays to 0 at infinity, so 0 bounds the range as well
        return max(out[0], 0.0), min(out[1], 0.0)

    @property
    def max(self) -> float:
        return self.extrema[0]

    @property
    def min(self) -> float:
        return self.extrema[1]


def lambda_mr(f: FidelityTestFn, nu):
    """``exp(-r nu) (1 + r) L_m^(1)((1 + r) nu)`` for ``nu >= 0``."""
    nu_arr = np.asarray(nu, dtype=float)
    if np.any(nu_arr < 0):
        raise ValueError("nu must be non-negative")
    val = np.exp(-f.r * nu_arr) * (1 + f.r) * laguerre(f.m, 1, (1 + f.r) * nu_arr)
    return val if np.ndim(val) else float(val)


@dataclass(frozen=True)
class ChannelModel:
    eta: float
    xi: float = 0.0

    def __post_init__(self):
        if not 0 < self.eta <= 1:
            raise ValueError(f"eta must lie in (0, 1], got {self.eta}")
        if self.xi < 0:
            raise ValueError(f"xi must be >= 0, got {self.xi}")


@dataclass(frozen=True)
class PulseParams:
    mu: float
    x_th: float
    beta: float

    def __post_init__(self):
        if self.mu < 0 or self.beta < 0:
            raise ValueError("mu and beta must be non-negative")
        if self.x_th < 0:
            raise ValueError("x_th must be non-negative")

    @classmethod
    def for_channel(cls, mu: float, x_th: float, ch: ChannelModel) -> "PulseParams":
        return cls(mu=mu, x_th=x_th, beta=math.sqrt(ch.eta * mu))


def q_minus(mu: float) -> float:
    """Probability of Alice's X-basis outcome '-' on the entangled source."""
    return -math.expm1(-2.0 * mu) / 2.0


@dataclass(frozen=True)
class RoundOutcome:
    label: str
    a: int
    x: float | None = None
    success: bool = False
    b: int | None = None
    omega: complex | None = None
    lam: float | None = None


@dataclass(frozen=True)
class ExpectedStats:
    P_plus: float
    P_minus: float
    E_b: float
    F_per_test: float
    fidelity_model: float
    q_minus: float

    @property
    def p_accept(self) -> float:
        return self.P_plus + self.P_minus


def expected_stats(params: PulseParams, ch: ChannelModel, f: FidelityTestFn) -> ExpectedStats:
    amp = math.sqrt(ch.eta * params.mu)
    scale = math.sqrt(2.0 / (1.0 + ch.xi))
    p_plus = 0.5 * erfc((params.x_th - amp) * scale)
    p_minus = 0.5 * erfc((params.x_th + amp) * scale)
    acc = p_plus + p_minus
    e_b = p_minus / acc if acc > 0 else 0.5
    half = ch.xi / 2.0
    fid = 1.0 / (1.0 + half)
    ratio = half / (1.0 + f.r * (1.0 + half))
    per_test = fid * (1.0 - (-1.0) ** (f.m + 1) * ratio ** (f.m + 1))
    return ExpectedStats(p_plus, p_minus, e_b, per_test, fid, q_minus(params.mu))


def _draw(rng: np.random.Generator, labels: np.ndarray, a: np.ndarray,
          params: PulseParams, ch: ChannelModel, f: FidelityTestFn):
    """Vectorized measurement of a batch of rounds with given labels and bits."""
    sign = 1.0 - 2.0 * a
    amp = math.sqrt(ch.eta * params.mu)
    n = labels.size
    x = rng.normal(sign * amp, math.sqrt((1.0 + ch.xi) / 4.0), size=n)
    sd = math.sqrt(0.5 + ch.xi / 4.0)
    om = rng.normal(sign * amp, sd, size=n) + 1j * rng.normal(0.0, sd, size=n)
    lam = f(np.abs(om - sign * params.beta) ** 2)
    success = (labels == 0) & (np.abs(x) >= params.x_th)
    b = (x <= 0).astype(np.uint8)
    return x, om, lam, success, b


def sample_round(params: PulseParams, ch: ChannelModel, label: str, a: int,
                 rng, f: FidelityTestFn | None = None) -> RoundOutcome:
    """Measure one received pulse according to its label."""
    if label not in LABELS:
        raise ValueError(f"unknown label {label!r}")
    rng = make_generator(rng)
    f = f or FidelityTestFn()
    if label == "trash":
        return RoundOutcome(label, a)
    x, om, lam, success, b = _draw(rng, np.array([LABELS.index(label)]),
                                   np.array([a], dtype=float), params, ch, f)
    if label == "signal":
        ok = bool(success[0])
        return RoundOutcome(label, a, x=float(x[0]), success=ok, b=int(b[0]) if ok else None)
    return RoundOutcome(label, a, omega=complex(om[0]), lam=float(lam[0]))


@dataclass
class SiftedData:
    N_suc: int = 0
    N_fail: int = 0
    N_test: int = 0
    N_trash: int = 0
    F_hat: float = 0.0
    alice_bits: np.ndarray = field(default_factory=lambda: np.zeros(0, np.uint8))
    bob_bits: np.ndarray = field(default_factory=lambda: np.zeros(0, np.uint8))
    bit_errors: int = 0

    @property
    def N(self) -> int:
        return self.N_suc + self.N_fail + self.N_test + self.N_trash

    @property
    def error_rate(self) -> float:
        return self.bit_errors / self.N_suc if self.N_suc else 0.0

    @classmethod
    def merge(cls, parts) -> "SiftedData":
        parts = list(parts)
        if not parts:
            return cls()
        return cls(
            N_suc=sum(p.N_suc for p in parts),
            N_fail=sum(p.N_fail for p in parts),
            N_test=sum(p.N_test for p in parts),
            N_trash=sum(p.N_trash for p in parts),
            # math.fsum keeps the merged sum independent of how rounds were sharded
            F_hat=math.fsum(p.F_hat for p in parts),
            alice_bits=np.concatenate([p.alice_bits for p in parts]),
            bob_bits=np.concatenate([p.bob_bits for p in parts]),
            bit_errors=sum(p.bit_errors for p in parts),
        )


def _run_chunk(n: int, probs, params, ch, f, seed_seq) -> SiftedData:
    rng = make_generator(seed_seq)
    labels = rng.choice(3, size=n, p=probs)
    a = rng.integers(0, 2, size=n, dtype=np.uint8)
    x, om, lam, success, b = _draw(rng, labels, a.astype(float), params, ch, f)
    n_sig = int(np.count_nonzero(labels == 0))
    test = labels == 1
    alice, bob = a[success], b[success]
    return SiftedData(
        N_suc=int(success.sum()),
        N_fail=n_sig - int(success.sum()),
        N_test=int(test.sum()),
        N_trash=int(np.count_nonzero(labels == 2)),
        F_hat=math.fsum(lam[test].tolist()),
        alice_bits=alice,
        bob_bits=bob,
        bit_errors=int(np.count_nonzero(alice != bob)),
    )


def run_distribution(N: int, probs, params: PulseParams, ch: ChannelModel,
                     f: FidelityTestFn | None = None, seed: int = 0, *,
                     workers: int = 1, chunk: int = 1 << 17) -> SiftedData:
    """Simulate N distribution rounds and tally the sifted data.

    Rounds are cut into fixed-size chunks, chunk ``c`` drawing from the
    Philox stream ``SeedSequence(seed, spawn_key=(c,))``.  The chunking does
    not depend on ``workers``, so any worker count gives identical output.
    """
    probs = np.asarray(probs, dtype=float)
    if probs.shape != (3,) or np.any(probs < 0) or not math.isclose(probs.sum(), 1.0, abs_tol=1e-12):
        raise ValueError("probs must be (p_sig, p_test, p_trash) summing to 1")
    probs = probs / probs.sum()
    f = f or FidelityTestFn()
    sizes = [min(chunk, N - s) for s in range(0, N, chunk)]
    seeds = [np.random.SeedSequence(seed, spawn_key=(c,)) for c in range(len(sizes))]
    jobs = [(n, probs, params, ch, f, ss) for n, ss in zip(sizes, seeds)]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda j: _run_chunk(*j), jobs))
    else:
        parts = [_run_chunk(*j) for j in jobs]
    return SiftedData.merge(parts)


def coherent_fidelity(alpha: complex, beta: complex, xi: float = 0.0) -> float:
    """<beta| rho |beta> for |alpha> displaced by Gaussian noise of excess xi."""
    s = 1.0 + xi / 2.0
    return math.exp(-abs(alpha - beta) ** 2 / s) / s


def heterodyne_sampler(alpha: complex, xi: float = 0.0):
    """Sampler of heterodyne outcomes for a noisy displaced coherent state."""
    sd = math.sqrt(0.5 + xi / 4.0)

    def sample(rng: np.random.Generator, size: int) -> np.ndarray:
        return (alpha.real + rng.normal(0.0, sd, size)) + 1j * (alpha.imag + rng.normal(0.0, sd, size))

    return sample


@dataclass(frozen=True)
class FidelityCheck:
    mean: float
    stderr: float
    true_fidelity: float
    passed: bool


def fidelity_bound_check(sampler, beta: complex, f: FidelityTestFn, true_fidelity: float,
                         samples: int, rng=None) -> FidelityCheck:
    """Monte Carlo check that E[Lambda(|w - beta|^2)] stays below the fidelity."""
    if f.m % 2 == 0:
        raise ValueError("the fidelity lower bound needs odd m")
    rng = make_generator(rng)
    vals = f(np.abs(sampler(rng, samples) - beta) ** 2)
    mean = float(np.mean(vals))
    se = float(np.std(vals, ddof=1) / math.sqrt(samples))
    return FidelityCheck(mean, se, true_fidelity, mean <= true_fidelity + 3 * se)
