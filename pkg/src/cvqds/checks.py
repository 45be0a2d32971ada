"""Quick oracle checks behind ``cvqds selftest``.

Each check compares a production routine against an independent reference
(brute force, explicit matrices, exact tails) at toy sizes and returns a
:class:`CheckResult`.  The whole suite runs in a few seconds.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import binom, hypergeom

from .bits import RandomBits, make_generator
from .bounds import DualCoeffs, cdv_quantities, delta2, gamma_U, operator_bound_B, sigma_sup_oracle
from .channel import ChannelModel, FidelityTestFn, PulseParams, expected_stats, run_distribution
from .gf2poly import Gf2Poly, count_irreducible, is_irreducible, random_irreducible
from .otuh import keygen_split, run_protocol
from .toeplitz import HashSpec, companion_matrix, hash_matrix_oracle, matrix_poly_eval, toeplitz_hash

__all__ = ["CheckResult", "run_all", "CHECKS"]


@dataclass(frozen=True)
class CheckResult:
    name: str
    ok: bool
    detail: str

    def __post_init__(self):
        object.__setattr__(self, "ok", bool(self.ok))


def _trial_division_irreducible(v: int) -> bool:
    deg = v.bit_length() - 1
    for d in range(2, 1 << (deg // 2 + 1)):
        if d.bit_length() - 1 < 1:
            continue
        # long division of v by d over GF(2)
        r = v
        while r and r.bit_length() >= d.bit_length():
            r ^= d << (r.bit_length() - d.bit_length())
        if r == 0:
            return False
    return True


def check_fidelity_extrema() -> CheckResult:
    hi, lo = FidelityTestFn(1, 0.412).extrema
    ok = abs(hi - 2.824) < 1e-3 and abs(lo + 0.9932) < 1e-3
    return CheckResult("fidelity-test extrema", ok, f"max={hi:.5f} min={lo:.5f}")


def check_irreducibility() -> CheckResult:
    bad = [v for v in range(2, 1 << 11) if is_irreducible(Gf2Poly(v)) != _trial_division_irreducible(v)]
    counts = all(sum(is_irreducible(Gf2Poly(v)) for v in range(1 << d, 1 << (d + 1))) == count_irreducible(d)
                 for d in range(1, 11))
    return CheckResult("irreducibility vs trial division", not bad and counts,
                       f"{len(bad)} mismatches up to degree 10")


def check_hash_oracle(cases: int = 200) -> CheckResult:
    src = RandomBits(11)
    rng = make_generator(12)
    mismatches = 0
    for _ in range(cases):
        n = int(rng.integers(2, 17))
        m = int(rng.integers(1, 65))
        p, _ = random_irreducible(n, src)
        spec = HashSpec(p, src.take(n))
        msg = src.take(m)
        ref = hash_matrix_oracle(spec, m) @ msg % 2
        mismatches += not np.array_equal(toeplitz_hash(spec, msg), ref.astype(np.uint8))
    cayley = sum(matrix_poly_eval(p, companion_matrix(p)).any()
                 for p, _ in (random_irreducible(int(rng.integers(2, 17)), src) for _ in range(20)))
    return CheckResult("streaming hash vs Toeplitz matrix", mismatches == 0 and cayley == 0,
                       f"{mismatches} hash mismatches, {cayley} nonzero p(W)")


def check_delta2() -> CheckResult:
    worst = 0.0
    for q in (0.1, 0.3, 0.5):
        for eps in (1e-2, 1e-4):
            for n in range(1, 31):
                d = delta2(eps, n, q)
                # P[X > q n + d] for X ~ Bin(n, q)
                tail = binom.sf(math.floor(q * n + d + 1e-9), n, q)
                worst = max(worst, tail / eps)
    return CheckResult("Chernoff margin vs exact binomial tail", worst <= 1.0, f"max tail/eps={worst:.3g}")


def check_gamma_u() -> CheckResult:
    n = k = 50
    worst = 0.0
    for lam in (0.1, 0.2, 0.3):
        for eps in (1e-2, 1e-3):
            g = gamma_U(n, k, lam, eps)
            errors = round(lam * (n + k))
            tail = hypergeom.sf(math.floor(n * (lam + g) + 1e-9), n + k, errors, n)
            worst = max(worst, tail / eps)
    return CheckResult("sampling bound vs exact hypergeometric tail", worst <= 1.0,
                       f"max tail/eps={worst:.3g}")


def check_operator_bound(points: int = 5) -> CheckResult:
    rng = make_generator(21)
    worst = math.inf
    for _ in range(points):
        beta, x_th = rng.uniform(0.1, 1.5), rng.uniform(0.4, 1.5)
        duals = DualCoeffs(*rng.uniform(0, 10, size=2))
        b = operator_bound_B(cdv_quantities(beta, x_th), duals)
        worst = min(worst, b - sigma_sup_oracle(beta, x_th, duals, n_max=40))
    return CheckResult("operator bound vs truncated Fock oracle", worst >= -1e-6, f"min slack={worst:.3g}")


def check_sampler(rounds: int = 200_000) -> CheckResult:
    ch = ChannelModel(eta=0.5, xi=0.01)
    params = PulseParams.for_channel(0.4, 0.5, ch)
    f = FidelityTestFn()
    probs = (0.6, 0.2, 0.2)
    data = run_distribution(rounds, probs, params, ch, f, seed=5)
    ex = expected_stats(params, ch, f)
    n_sig = data.N_suc + data.N_fail
    acc_p = ex.p_accept
    z_acc = (data.N_suc / n_sig - acc_p) / math.sqrt(acc_p * (1 - acc_p) / n_sig)
    z_err = (data.error_rate - ex.E_b) / math.sqrt(ex.E_b * (1 - ex.E_b) / data.N_suc)
    ok = abs(z_acc) < 4 and abs(z_err) < 4
    return CheckResult("distribution sampler vs closed forms", ok, f"z_accept={z_acc:.2f} z_error={z_err:.2f}")


def check_protocol(runs: int = 50) -> CheckResult:
    src = RandomBits(31)
    good = 0
    for _ in range(runs):
        tr = run_protocol(src.take(128), keygen_split(16, src), source=src)
        good += bool(tr.bob_accept and tr.charlie_accept)
    return CheckResult("honest protocol runs accept", good == runs, f"{good}/{runs}")


CHECKS = (
    check_fidelity_extrema,
    check_irreducibility,
    check_hash_oracle,
    check_delta2,
    check_gamma_u,
    check_operator_bound,
    check_sampler,
    check_protocol,
)


def run_all() -> list[CheckResult]:
    return [c() for c in CHECKS]
