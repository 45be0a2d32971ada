"""Finite-size security bounds for the binary-modulated distribution stage.

Everything here is a pure function of scalars.  The phase-error count of the
success rounds is bounded through a linear operator inequality with dual
weights ``kappa`` (fidelity) and ``gamma`` (trash-round X outcomes); Azuma
and Chernoff corrections turn the expectation bound into a finite-size one.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

from .channel import FidelityTestFn

__all__ = [
    "OperatorBoundInputs",
    "DualCoeffs",
    "FiniteSizeBudget",
    "SecrecyEstimate",
    "QdsEpsilons",
    "binary_entropy",
    "kl_divergence",
    "cdv_quantities",
    "operator_bound_B",
    "sigma_sup_oracle",
    "success_operator",
    "delta1",
    "delta2",
    "gamma_U",
    "phase_error_bound_U",
    "key_and_secrecy",
    "qds_epsilons",
]

_SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class OperatorBoundInputs:
    C_ev: float
    C_od: float
    D_ev: float
    D_od: float
    V_ev: float
    V_od: float


@dataclass(frozen=True)
class DualCoeffs:
    kappa: float = 0.0
    gamma: float = 0.0

    def __post_init__(self):
        if self.kappa < 0 or self.gamma < 0:
            raise ValueError("dual coefficients must be non-negative")


@dataclass(frozen=True)
class FiniteSizeBudget:
    """Failure probabilities and reconciliation efficiency.

    ``eps`` is split evenly between the Azuma and Chernoff corrections.
    ``eps_group`` is the failure probability of the random-grouping step and
    defaults to ``eps``.
    """

    eps: float = 2.0 ** -104
    eps_cor: float = 2.0 ** -51
    eps_prime: float = 1e-11
    security_bound: float = 1e-10
    f_ec: float = 1.1
    eps_group: float | None = None

    def __post_init__(self):
        for name in ("eps", "eps_cor", "eps_prime", "security_bound"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise ValueError(f"{name} must lie in (0, 1), got {v}")
        if self.eps_group is not None and not 0 < self.eps_group < 1:
            raise ValueError(f"eps_group must lie in (0, 1), got {self.eps_group}")
        if self.f_ec < 1:
            raise ValueError(f"f_ec must be >= 1, got {self.f_ec}")

    @property
    def group_eps(self) -> float:
        return self.eps if self.eps_group is None else self.eps_group


def binary_entropy(x: float) -> float:
    if not 0 <= x <= 1:
        raise ValueError(f"binary entropy argument {x} outside [0, 1]")
    if x == 0 or x == 1:
        return 0.0
    return -x * math.log2(x) - (1 - x) * math.log2(1 - x)


def kl_divergence(x: float, y: float) -> float:
    """Binary relative entropy D(x||y) in bits; +inf when y is a wrong certainty."""
    if not (0 <= x <= 1 and 0 <= y <= 1):
        raise ValueError("kl_divergence arguments must lie in [0, 1]")
    total = 0.0
    for p, q in ((x, y), (1 - x, 1 - y)):
        if p == 0:
            continue
        if q == 0:
            return math.inf
        total += p * math.log2(p / q)
    return max(total, 0.0)


def cdv_quantities(beta: float, x_th: float) -> OperatorBoundInputs:
    """Overlaps of |beta> with the parity-resolved success operators.

    At ``beta = 0`` the odd-parity ratios are 0/0; the returned D_od is the
    limit, i.e. the acceptance probability of the one-photon state.
    """
    if beta < 0 or x_th < 0:
        raise ValueError("beta and x_th must be non-negative")
    b2 = beta * beta
    c_ev = math.exp(-b2) * math.cosh(b2)
    c_od = math.exp(-b2) * math.sinh(b2)
    tail = erfc(_SQRT2 * (x_th - beta)) + erfc(_SQRT2 * (x_th + beta))
    cross = 2.0 * math.exp(-2.0 * b2) * erfc(_SQRT2 * x_th)
    d_ev = (tail + cross) / (4.0 * c_ev)
    if beta == 0:
        d_od = erfc(_SQRT2 * x_th) + 2.0 * _SQRT2 * x_th * math.exp(-2.0 * x_th ** 2) / math.sqrt(math.pi)
    elif b2 < 1e-4:
        d_od = _odd_acceptance_series(beta, x_th)
    else:
        d_od = (tail - cross) / (4.0 * c_od)
    d_ev, d_od = min(max(d_ev, 0.0), 1.0), min(max(d_od, 0.0), 1.0)
    return OperatorBoundInputs(c_ev, c_od, d_ev, d_od, d_ev - d_ev ** 2, d_od - d_od ** 2)


def _odd_acceptance_series(beta: float, x_th: float, n_max: int = 11) -> float:
    """D_od from the Fock expansion of the odd cat state.

    The erfc form divides two O(beta^2) quantities and loses all precision
    as beta -> 0; the odd amplitudes beta^n / sqrt(n!) converge fast there.
    """
    n = np.arange(1, n_max + 1, 2)
    log_fact = np.array([math.lgamma(k + 1) for k in n])
    amp = np.exp((n - 1) * math.log(beta) - log_fact / 2)
    amp /= np.linalg.norm(amp)
    m = success_operator(x_th, n_max)[np.ix_(n, n)]
    return float(amp @ m @ amp)


def _bound_matrices(q: OperatorBoundInputs, kappa: float, gamma: float):
    k = kappa
    s_eo = math.sqrt(q.C_ev * q.C_od)
    m4 = np.array([
        [1.0, math.sqrt(q.V_od), 0.0, 0.0],
        [math.sqrt(q.V_od), k * q.C_od + q.D_od, k * s_eo, 0.0],
        [0.0, k * s_eo, k * q.C_ev + q.D_ev - gamma, math.sqrt(q.V_ev)],
        [0.0, 0.0, math.sqrt(q.V_ev), 1.0 - gamma],
    ])
    m2 = np.array([[k * q.C_ev, k * s_eo], [k * s_eo, k * q.C_od - gamma]])
    return m4, m2


def operator_bound_B(q: OperatorBoundInputs, duals: DualCoeffs) -> float:
    """Largest eigenvalue over the 4x4 'error' and 2x2 'correct' blocks."""
    m4, m2 = _bound_matrices(q, duals.kappa, duals.gamma)
    # 2x2 top eigenvalue in closed form
    tr, det = m2[0, 0] + m2[1, 1], m2[0, 0] * m2[1, 1] - m2[0, 1] ** 2
    top2 = tr / 2 + math.sqrt(max(tr * tr / 4 - det, 0.0))
    return max(float(np.linalg.eigvalsh(m4)[-1]), top2)


def _hermite_functions(n_max: int, y: np.ndarray) -> np.ndarray:
    """Normalized Hermite functions h_0..h_{n_max} (unit-variance-1/2 convention)."""
    h = np.empty((n_max + 1, y.size))
    h[0] = math.pi ** -0.25 * np.exp(-y * y / 2)
    if n_max >= 1:
        h[1] = _SQRT2 * y * h[0]
    for n in range(1, n_max):
        h[n + 1] = math.sqrt(2.0 / (n + 1)) * y * h[n] - math.sqrt(n / (n + 1)) * h[n - 1]
    return h


def success_operator(x_th: float, n_max: int, nodes: int = 600) -> np.ndarray:
    """Fock matrix of ``2 int_{x_th}^inf |x><x| dx``, kept on same-parity pairs.

    The even-parity entries are M_ev^suc and the odd ones M_od^suc.  With the
    vacuum variance at 1/4, ``psi_n(x) = 2^(1/4) h_n(sqrt(2) x)`` so the
    integral runs over ``y >= sqrt(2) x_th`` against plain Hermite functions.
    """
    lo = _SQRT2 * x_th
    hi = max(lo, 0.0) + math.sqrt(2 * n_max + 1) + 14.0
    t, w = np.polynomial.legendre.leggauss(nodes)
    y = lo + (hi - lo) * (t + 1) / 2
    w = w * (hi - lo) / 2
    h = _hermite_functions(n_max, y)
    m = 2.0 * (h * w) @ h.T
    idx = np.arange(n_max + 1)
    m[(idx[:, None] + idx[None, :]) % 2 == 1] = 0.0
    return m


def sigma_sup_oracle(beta: float, x_th: float, duals: DualCoeffs, n_max: int = 40) -> float:
    """Top eigenvalue of ``M[kappa, gamma]`` compressed to Fock states <= n_max.

    Basis is qubit A (|0>, |1>) tensor Fock.  The compression can only lower
    the spectral supremum, so this is a lower bound on the exact value.
    """
    if n_max < 20:
        raise ValueError("n_max must be at least 20")
    m_suc = success_operator(x_th, n_max)
    parity = np.arange(n_max + 1) % 2
    m_ev = m_suc * np.outer(parity == 0, parity == 0)
    m_od = m_suc * np.outer(parity == 1, parity == 1)
    n = np.arange(n_max + 1)
    if beta > 0:
        log_fact = np.cumsum(np.log(np.maximum(n, 1)))
        amp = np.exp(-beta * beta / 2 + n * math.log(beta) - log_fact / 2)
    else:
        amp = (n == 0).astype(float)
    amp_neg = amp * (-1.0) ** n
    plus = np.array([[0.5, 0.5], [0.5, 0.5]])
    minus = np.array([[0.5, -0.5], [-0.5, 0.5]])
    zero = np.array([[1.0, 0.0], [0.0, 0.0]])
    one = np.array([[0.0, 0.0], [0.0, 1.0]])
    eye = np.eye(n_max + 1)
    mat = (np.kron(plus, m_od) + np.kron(minus, m_ev)
           + duals.kappa * (np.kron(zero, np.outer(amp, amp)) + np.kron(one, np.outer(amp_neg, amp_neg)))
           - duals.gamma * np.kron(minus, eye))
    return float(np.linalg.eigvalsh(mat)[-1])


def delta1(eps: float, N: float, probs, duals: DualCoeffs, f: FidelityTestFn) -> float:
    """Azuma correction ``(c_max - c_min) sqrt((N/2) ln(1/eps))``."""
    if not 0 < eps <= 1:
        raise ValueError("eps must lie in (0, 1]")
    p_sig, p_test, p_trash = probs
    k, g = duals.kappa, duals.gamma
    if p_sig <= 0 or (k > 0 and p_test <= 0) or (g > 0 and p_trash <= 0):
        raise ValueError("zero probability in a used denominator")
    test_lo = k * f.min / p_test if k > 0 else 0.0
    test_hi = k * f.max / p_test if k > 0 else 0.0
    trash_lo = -g / p_trash if g > 0 else 0.0
    c_min = min(test_lo, trash_lo, 0.0)
    c_max = max(1.0 / p_sig, test_hi, 0.0)
    return (c_max - c_min) * math.sqrt(N / 2.0 * math.log(1.0 / eps))


def delta2(eps: float, n: float, q: float) -> float:
    """Chernoff margin on the number of '-' outcomes among n trash rounds.

    Returns the saturating value ``(1 - q) n`` when ``eps <= q^n``; otherwise
    solves ``D(q + d/n || q) = -log2(eps)/n`` for d by bisection.
    """
    if not 0 < q < 1:
        raise ValueError("q_minus must lie in (0, 1)")
    if n < 0:
        raise ValueError("n must be non-negative")
    if n == 0:
        return 0.0
    if math.log2(eps) <= n * math.log2(q):
        return (1 - q) * n
    target = -math.log2(eps) / n
    lo, hi = 0.0, (1 - q) * n
    # D(q + d/n || q) is increasing in d on (0, (1-q) n), so bisect
    while hi - lo > 1e-10 * max(hi, 1e-300):
        mid = 0.5 * (lo + hi)
        if kl_divergence(q + mid / n, q) < target:
            lo = mid
        else:
            hi = mid
    return hi


def gamma_U(n: float, k: float, lam: float, eps: float) -> float:
    """Sampling-without-replacement deviation of a size-n subset's error rate."""
    if n < 1 or k < 1:
        raise ValueError("gamma_U needs n, k >= 1")
    if not 0 < lam < 1:
        raise ValueError("gamma_U needs lambda in (0, 1)")
    if not 0 < eps < 1:
        raise ValueError("gamma_U needs eps in (0, 1)")
    tot = n + k
    a = max(n, k)
    g = tot / (n * k) * (math.log(tot / (2 * math.pi * n * k * lam * (1 - lam))) - 2 * math.log(eps))
    if g <= 0:  # only when eps is close to 1; the closed form is undefined there
        return 0.0
    ag = a * g / tot
    num = (1 - 2 * lam) * ag + math.sqrt(ag * ag + 4 * lam * (1 - lam) * g)
    return num / (2 + 2 * a * ag / tot)


def phase_error_bound_U(F_hat: float, N_trash: float, duals: DualCoeffs, B: float,
                        d1: float, d2: float, probs, N: float, q_minus: float) -> float:
    """Upper bound on the phase-error count of the success rounds (unclamped)."""
    p_sig, p_test, p_trash = probs
    u = p_sig * N * B + p_sig * d1
    if duals.kappa:
        u -= p_sig / p_test * duals.kappa * F_hat
    if duals.gamma:
        u += p_sig / p_trash * duals.gamma * (q_minus * N_trash + d2)
    return u


@dataclass(frozen=True)
class SecrecyEstimate:
    N_fin: float
    E_phi_n: float
    H_n: float

    @property
    def has_keys(self) -> bool:
        return self.N_fin > 0

    @property
    def has_secrecy(self) -> bool:
        return self.H_n > 0


def key_and_secrecy(N_suc: float, E_b: float, budget: FiniteSizeBudget, e_ph: float,
                    n_group: float, *, sampling_correction: bool = True) -> SecrecyEstimate:
    """Final key count and the unknown information of one n-bit group.

    ``N_fin <= 0`` signals no keys; ``E_phi_n >= 1/2`` yields ``H_n = 0``.
    With ``sampling_correction=False`` the grouping deviation is dropped.
    A zero phase-error rate is floored at ``1/(2 N_fin)`` inside the sampling
    term, where the closed form has a log singularity.
    """
    if not 0 <= e_ph <= 0.5:
        raise ValueError(f"e_ph must lie in [0, 1/2], got {e_ph}")
    n_fin = N_suc * (1 - budget.f_ec * binary_entropy(E_b)) - math.log2(1 / budget.eps_cor)
    if n_fin <= 0:
        return SecrecyEstimate(n_fin, 0.5, 0.0)
    if n_group > n_fin:
        raise ValueError("group size exceeds the final key length")
    e = e_ph
    if sampling_correction:
        k = n_fin - n_group
        if k < 1:
            return SecrecyEstimate(n_fin, 0.5, 0.0)
        lam = min(max(e_ph, 1.0 / (2.0 * n_fin)), 1 - 1.0 / (2.0 * n_fin))
        e = e_ph + gamma_U(n_group, k, lam, budget.group_eps)
    if e >= 0.5:
        return SecrecyEstimate(n_fin, e, 0.0)
    return SecrecyEstimate(n_fin, e, n_group * (1 - binary_entropy(e)))


@dataclass(frozen=True)
class QdsEpsilons:
    eps_rob: float
    eps_rep: float
    eps_for: float

    @property
    def eps_total(self) -> float:
        return max(self.eps_rob, self.eps_rep, self.eps_for)


def qds_epsilons(budget: FiniteSizeBudget, m_bits: float, H_n: float) -> QdsEpsilons:
    """Robustness, repudiation and forgery failure probabilities."""
    if m_bits < 1 or H_n < 0:
        raise ValueError("need m_bits >= 1 and H_n >= 0")
    return QdsEpsilons(
        eps_rob=2 * budget.eps_cor + 2 * budget.eps_prime,
        eps_rep=2 * budget.eps_prime,
        # a bound above 1 is vacuous, so report it as 1
        eps_for=min(1.0, m_bits * 2.0 ** (1 - H_n)),
    )
