"""Signature-rate engine: expected-value pipeline, optimizers, curves.

The pipeline replaces every random count of the distribution stage by its
expectation under the channel model, bounds the phase-error rate with the
finite-size machinery of :mod:`cvqds.bounds`, and then searches the smallest
key group ``n`` whose forging probability ``m 2^(1 - H_n)`` meets the
security bound.  One signature consumes ``3n`` key bits per recipient
channel (``n`` for X plus ``2n`` for Y), so ``R = G / 3n`` with ``G`` the
final-key rate of one channel.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq, minimize
from scipy.stats import qmc

from .bounds import (
    DualCoeffs,
    FiniteSizeBudget,
    cdv_quantities,
    delta1,
    delta2,
    key_and_secrecy,
    operator_bound_B,
    phase_error_bound_U,
    qds_epsilons,
)
from .channel import ChannelModel, FidelityTestFn, PulseParams, expected_stats

__all__ = [
    "ProtocolParams",
    "RatePoint",
    "SearchConfig",
    "CompetitorModel",
    "eta_from_distance",
    "distance_from_eta",
    "optimize_duals",
    "minimal_group_size",
    "rate_pipeline",
    "optimize_point",
    "rate_curve",
    "competitor_length",
    "competitor_sections",
    "best_insert_period",
    "point_summary",
]

_LOSS_DB_PER_KM = 0.16


def eta_from_distance(d_km: float) -> float:
    if d_km < 0:
        raise ValueError("distance must be non-negative")
    return 10.0 ** (-_LOSS_DB_PER_KM / 10.0 * d_km)


def distance_from_eta(eta: float) -> float:
    return -10.0 * math.log10(eta) / _LOSS_DB_PER_KM


@dataclass(frozen=True)
class ProtocolParams:
    mu: float
    x_th: float
    p_sig: float
    p_test: float
    N: float = 1e11
    rep_rate_hz: float = 1e9
    f: FidelityTestFn = field(default_factory=FidelityTestFn)

    def __post_init__(self):
        if self.mu <= 0 or self.x_th <= 0:
            raise ValueError("mu and x_th must be positive")
        if self.p_sig <= 0 or self.p_test < 0 or self.p_sig + self.p_test > 1:
            raise ValueError("(p_sig, p_test, p_trash) must form a probability vector")
        if self.N <= 0 or self.rep_rate_hz <= 0:
            raise ValueError("N and rep_rate_hz must be positive")

    @property
    def p_trash(self) -> float:
        return 1.0 - self.p_sig - self.p_test

    @property
    def probs(self) -> tuple[float, float, float]:
        return (self.p_sig, self.p_test, self.p_trash)


@dataclass(frozen=True)
class RatePoint:
    eta: float
    xi: float
    params: ProtocolParams
    duals: DualCoeffs
    n_min: int
    N_suc: float
    N_fin: float
    E_b: float
    e_ph: float
    H_n: float
    rate_per_second: float
    distance_km: float | None = None
    m_bits: float = 1000
    reason: str = "ok"

    @property
    def signature_length(self) -> int:
        return 3 * self.n_min

    @property
    def ok(self) -> bool:
        return self.reason == "ok"

    def to_row(self) -> dict:
        p = self.params
        return {
            "distance_km": self.distance_km if self.distance_km is not None else distance_from_eta(self.eta),
            "eta": self.eta,
            "mu": p.mu,
            "x_th": p.x_th,
            "p_sig": p.p_sig,
            "p_test": p.p_test,
            "kappa": self.duals.kappa,
            "gamma": self.duals.gamma,
            "n_min": self.n_min,
            "N_fin": self.N_fin,
            "rate_per_s": self.rate_per_second,
            "sig_len": self.signature_length,
        }


@dataclass(frozen=True)
class _Observed:
    """Expected observations and the dual-independent parts of the U bound."""

    N_suc: float
    E_b: float
    F_hat: float
    N_trash: float
    q_minus: float
    d2: float


def _observe(params: ProtocolParams, ch: ChannelModel, budget: FiniteSizeBudget) -> _Observed:
    pulse = PulseParams.for_channel(params.mu, params.x_th, ch)
    st = expected_stats(pulse, ch, params.f)
    n_trash = params.p_trash * params.N
    d2 = delta2(budget.eps / 2, n_trash, st.q_minus) if n_trash > 0 else 0.0
    return _Observed(
        N_suc=params.p_sig * params.N * st.p_accept,
        E_b=st.E_b,
        F_hat=params.p_test * params.N * st.F_per_test,
        N_trash=n_trash,
        q_minus=st.q_minus,
        d2=d2,
    )


def _u_bound(params, ch, budget, obs: _Observed, q, duals: DualCoeffs) -> float:
    b = operator_bound_B(q, duals)
    d1 = delta1(budget.eps / 2, params.N, params.probs, duals, params.f)
    return phase_error_bound_U(obs.F_hat, obs.N_trash, duals, b, d1, obs.d2,
                               params.probs, params.N, obs.q_minus)


_KAPPA_GRID = (0.0, 0.3, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0)
_GAMMA_GRID = (0.0, 0.05, 0.15, 0.4, 1.0, 2.5, 6.0, 15.0)


def optimize_duals(params: ProtocolParams, ch: ChannelModel, budget: FiniteSizeBudget,
                   _obs: _Observed | None = None) -> tuple[DualCoeffs, float]:
    """Minimize the phase-error bound U over ``kappa, gamma >= 0``.

    U is convex in the duals, so a coarse grid pick followed by one bounded
    Nelder-Mead polish finds the minimum.
    """
    obs = _obs or _observe(params, ch, budget)
    q = cdv_quantities(math.sqrt(ch.eta * params.mu), params.x_th)
    usable_k = params.p_test > 0
    usable_g = params.p_trash > 0

    def u(x):
        k = max(x[0], 0.0) if usable_k else 0.0
        g = max(x[1], 0.0) if usable_g else 0.0
        return _u_bound(params, ch, budget, obs, q, DualCoeffs(k, g))

    start, best = (0.0, 0.0), math.inf
    for k in (_KAPPA_GRID if usable_k else (0.0,)):
        for g in (_GAMMA_GRID if usable_g else (0.0,)):
            val = u((k, g))
            if val < best:
                start, best = (k, g), val
    scale = max(obs.N_suc, 1.0)
    res = minimize(lambda x: u(x) / scale, np.asarray(start) + 1e-3, method="Nelder-Mead",
                   bounds=[(0, None), (0, None)],
                   options={"xatol": 1e-7, "fatol": 1e-12, "maxiter": 600})
    if res.fun * scale < best:
        start, best = tuple(res.x), res.fun * scale
    duals = DualCoeffs(max(float(start[0]), 0.0) if usable_k else 0.0,
                       max(float(start[1]), 0.0) if usable_g else 0.0)
    return duals, float(best)


def _required_entropy(budget: FiniteSizeBudget, m_bits: float) -> float:
    # m 2^(1 - H) <= bound  <=>  H >= 1 + log2(m / bound)
    return 1.0 + math.log2(m_bits / budget.security_bound)


def minimal_group_size(N_suc: float, E_b: float, e_ph: float, budget: FiniteSizeBudget,
                       m_bits: float, *, sampling_correction: bool = True,
                       continuous: bool = False) -> float | None:
    """Smallest group size meeting the forging bound, or None if infeasible.

    Uses doubling then bisection, which presumes ``H_n`` becomes and stays
    sufficient once past the threshold (the sampling correction shrinks with
    n).  With ``continuous=True`` the threshold is located as a real number,
    which gives the outer optimizer a smooth objective.
    """
    need = _required_entropy(budget, m_bits)

    def h(n):
        return key_and_secrecy(N_suc, E_b, budget, e_ph, n,
                               sampling_correction=sampling_correction).H_n

    n_fin = key_and_secrecy(N_suc, E_b, budget, e_ph, 1, sampling_correction=False).N_fin
    if n_fin <= 1:
        return None
    cap = n_fin / 2
    hi = max(math.ceil(need), 1)
    while h(hi) < need:
        hi *= 2
        if hi > cap:
            return None
    lo = hi // 2 if hi > 1 else 0
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if h(mid) >= need:
            hi = mid
        else:
            lo = mid
    if not continuous or lo < 1:
        return float(hi)
    return brentq(lambda n: h(n) - need, lo, hi, xtol=1e-9)


def rate_pipeline(params: ProtocolParams, ch: ChannelModel, duals: DualCoeffs | None = None,
                  budget: FiniteSizeBudget | None = None, m_bits: float = 1000, *,
                  distance_km: float | None = None, e_ph_override: float | None = None,
                  sampling_correction: bool = True) -> RatePoint:
    """Deterministic expected-value rate at one operating point.

    ``duals=None`` optimizes them.  ``e_ph_override`` forces the phase-error
    rate (used to reach the perfect-key limit).
    """
    budget = budget or FiniteSizeBudget()
    obs = _observe(params, ch, budget)
    if duals is None:
        duals, u = optimize_duals(params, ch, budget, obs)
    else:
        q = cdv_quantities(math.sqrt(ch.eta * params.mu), params.x_th)
        u = _u_bound(params, ch, budget, obs, q, duals)
    e_ph = min(max(u, 0.0), obs.N_suc) / obs.N_suc if obs.N_suc > 0 else 1.0
    if e_ph_override is not None:
        e_ph = e_ph_override
    base = dict(eta=ch.eta, xi=ch.xi, params=params, duals=duals, N_suc=obs.N_suc,
                E_b=obs.E_b, e_ph=e_ph, distance_km=distance_km, m_bits=m_bits)
    n_fin = key_and_secrecy(obs.N_suc, obs.E_b, budget, 0.0, 1, sampling_correction=False).N_fin
    if n_fin <= 0:
        return RatePoint(n_min=0, N_fin=n_fin, H_n=0.0, rate_per_second=0.0, reason="no keys", **base)
    if e_ph >= 0.5:
        return RatePoint(n_min=0, N_fin=n_fin, H_n=0.0, rate_per_second=0.0, reason="no secrecy", **base)
    n = minimal_group_size(obs.N_suc, obs.E_b, e_ph, budget, m_bits,
                           sampling_correction=sampling_correction)
    if n is None:
        return RatePoint(n_min=0, N_fin=n_fin, H_n=0.0, rate_per_second=0.0, reason="no secrecy", **base)
    n = int(n)
    sec = key_and_secrecy(obs.N_suc, obs.E_b, budget, e_ph, n, sampling_correction=sampling_correction)
    if qds_epsilons(budget, m_bits, sec.H_n).eps_total > budget.security_bound:
        return RatePoint(n_min=n, N_fin=n_fin, H_n=sec.H_n, rate_per_second=0.0,
                         reason="budget", **base)
    g = n_fin * params.rep_rate_hz / params.N
    return RatePoint(n_min=n, N_fin=n_fin, H_n=sec.H_n, rate_per_second=g / (3 * n), **base)


@dataclass(frozen=True)
class SearchConfig:
    """Outer search box and multi-start settings."""

    N: float = 1e11
    rep_rate_hz: float = 1e9
    mu: tuple[float, float] = (0.01, 2.0)
    x_th: tuple[float, float] = (0.3, 2.0)
    p_sig: tuple[float, float] = (0.05, 0.98)
    # fraction of the non-signal probability assigned to test rounds
    test_share: tuple[float, float] = (0.02, 0.98)
    starts: int = 6
    seed: int = 0
    maxiter: int = 300
    f: FidelityTestFn = field(default_factory=FidelityTestFn)


def _decode(z, cfg: SearchConfig) -> ProtocolParams:
    mu, x_th, p_sig, share = (float(v) for v in z)
    return ProtocolParams(mu=mu, x_th=x_th, p_sig=p_sig, p_test=share * (1 - p_sig),
                          N=cfg.N, rep_rate_hz=cfg.rep_rate_hz, f=cfg.f)


def _score(params, ch, budget, m_bits) -> float:
    """Smooth surrogate: -log of the rate with a real-valued group size."""
    obs = _observe(params, ch, budget)
    _, u = optimize_duals(params, ch, budget, obs)
    e_ph = min(max(u, 0.0), obs.N_suc) / obs.N_suc if obs.N_suc > 0 else 1.0
    n_fin = key_and_secrecy(obs.N_suc, obs.E_b, budget, 0.0, 1, sampling_correction=False).N_fin
    if n_fin <= 0:
        return 200.0 + obs.E_b
    if e_ph >= 0.5:
        return 100.0 + e_ph
    n = minimal_group_size(obs.N_suc, obs.E_b, e_ph, budget, m_bits, continuous=True)
    if n is None:
        return 100.0 + e_ph
    rate = n_fin * params.rep_rate_hz / params.N / (3 * n)
    return -math.log(rate)


def optimize_point(ch: ChannelModel, budget: FiniteSizeBudget | None = None, m_bits: float = 1000,
                   cfg: SearchConfig | None = None, *, distance_km: float | None = None) -> RatePoint:
    """Maximize the signature rate over (mu, x_th, p_sig, p_test).

    Multi-start bounded Nelder-Mead from a Latin-hypercube design plus a
    fixed central start; deterministic for a given ``cfg.seed``.  The best
    evaluated point is re-run through :func:`rate_pipeline` for reporting.
    """
    budget = budget or FiniteSizeBudget()
    cfg = cfg or SearchConfig()
    box = [cfg.mu, cfg.x_th, cfg.p_sig, cfg.test_share]
    lo = np.array([b[0] for b in box])
    hi = np.array([b[1] for b in box])
    lhs = qmc.LatinHypercube(d=4, seed=cfg.seed)
    design = qmc.scale(lhs.random(max(cfg.starts - 1, 1)), lo, hi)
    starts = np.vstack([[0.3, 0.5, 0.8, 0.5], design])[: max(cfg.starts, 1)]
    best_z, best_val = None, math.inf

    def objective(z):
        z = np.clip(z, lo, hi)
        return _score(_decode(z, cfg), ch, budget, m_bits)

    for z0 in starts:
        res = minimize(objective, z0, method="Nelder-Mead", bounds=list(zip(lo, hi)),
                       options={"xatol": 1e-4, "fatol": 1e-6, "maxiter": cfg.maxiter})
        for z, val in ((z0, objective(z0)), (res.x, res.fun)):
            if val < best_val:
                best_z, best_val = np.clip(z, lo, hi), val
    params = _decode(best_z, cfg)
    return rate_pipeline(params, ch, None, budget, m_bits, distance_km=distance_km)


def _curve_point(args):
    d, xi, budget, m_bits, cfg = args
    ch = ChannelModel(eta=eta_from_distance(d), xi=xi)
    return optimize_point(ch, budget, m_bits, cfg, distance_km=d)


def rate_curve(distances, xi: float = 0.0, budget: FiniteSizeBudget | None = None,
               m_bits: float = 1000, cfg: SearchConfig | None = None, *,
               workers: int = 1) -> list[RatePoint]:
    """Optimized rate at each distance, in grid order.

    Point ``i`` uses search seed ``cfg.seed + i`` whatever the worker count,
    so the output does not depend on ``workers``.
    """
    distances = list(distances)
    if not distances:
        raise ValueError("empty distance grid")
    budget = budget or FiniteSizeBudget()
    cfg = cfg or SearchConfig()
    jobs = [(d, xi, budget, m_bits, replace(cfg, seed=cfg.seed + i)) for i, d in enumerate(distances)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_curve_point, jobs))
    return [_curve_point(j) for j in jobs]


@dataclass(frozen=True)
class CompetitorModel:
    scheme: str
    l: int = 10_000
    c: int = 2
    x: int | None = None

    def __post_init__(self):
        if self.scheme not in ("append-ones", "insert-zeros"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.l < 1:
            raise ValueError("base section length l must be >= 1")
        if self.scheme == "append-ones" and self.c < 2:
            raise ValueError("append-ones needs c >= 2")
        if self.x is not None and self.x < 1:
            raise ValueError("insertion period x must be >= 1")


def best_insert_period(n_bits: int) -> int:
    """Insertion period minimizing ``n + floor(n/x) + 2x + 4``."""
    top = max(1, int(math.isqrt(max(n_bits, 1))) + 2)
    return min(range(1, top + 1), key=lambda x: (n_bits // x + 2 * x, x))


def competitor_sections(model: CompetitorModel, n_bits: int) -> list[int]:
    """Per-bit signature section lengths of the encoded message."""
    l = model.l
    if model.scheme == "append-ones":
        c = model.c
        head = [l + c - 3, l + c - 2, l + c - 2]
        body = [l + i * c for i in range(1, n_bits + 1)]
        tail = [l + n_bits * c + 1, l + n_bits * c + 2, l + n_bits * c + 3]
        return head + body + tail
    x = model.x or best_insert_period(n_bits)
    return [l] * (n_bits + n_bits // x + 2 * x + 4)


def competitor_length(model: CompetitorModel, n_bits: int) -> dict:
    """Encoded length h and total signature length, in closed form."""
    if n_bits < 0:
        raise ValueError("n_bits must be non-negative")
    l = model.l
    if model.scheme == "append-ones":
        c = model.c
        h = n_bits + 6
        total = (n_bits + 6) * l + c * (3 + n_bits * (n_bits + 1) // 2 + 3 * n_bits) - 1
        return {"h": h, "total": total}
    x = model.x or best_insert_period(n_bits)
    h = n_bits + n_bits // x + 2 * x + 4
    return {"h": h, "total": h * l, "x": x}


def point_summary(pt: RatePoint) -> dict:
    out = pt.to_row()
    out.update(xi=pt.xi, e_ph=pt.e_ph, E_b=pt.E_b, H_n=pt.H_n, m_bits=pt.m_bits, reason=pt.reason,
               p_trash=pt.params.p_trash)
    return out

