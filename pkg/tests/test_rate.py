from __future__ import annotations

import math

import numpy as np
import pytest

from cvqds.bounds import DualCoeffs, FiniteSizeBudget, key_and_secrecy, qds_epsilons
from cvqds.channel import ChannelModel
from cvqds.rate import (
    CompetitorModel,
    ProtocolParams,
    SearchConfig,
    best_insert_period,
    competitor_length,
    competitor_sections,
    distance_from_eta,
    eta_from_distance,
    minimal_group_size,
    optimize_duals,
    optimize_point,
    point_summary,
    rate_pipeline,
)

PARAMS = ProtocolParams(mu=0.3, x_th=0.5, p_sig=0.8, p_test=0.1, N=1e11)
CH = ChannelModel(eta=0.4, xi=1e-3)


def test_distance_conversion():
    assert eta_from_distance(0) == 1.0
    assert eta_from_distance(25) == pytest.approx(0.398, abs=1e-3)
    assert eta_from_distance(40) == pytest.approx(10 ** -0.64)
    assert distance_from_eta(eta_from_distance(33.3)) == pytest.approx(33.3)
    with pytest.raises(ValueError):
        eta_from_distance(-1)


def test_protocol_params_validation():
    with pytest.raises(ValueError):
        ProtocolParams(mu=0.3, x_th=0.5, p_sig=0.8, p_test=0.3)
    with pytest.raises(ValueError):
        ProtocolParams(mu=0.0, x_th=0.5, p_sig=0.8, p_test=0.1)
    assert PARAMS.p_trash == pytest.approx(0.1)


def test_pipeline_at_benchmark_point_has_secrecy():
    pt = rate_pipeline(PARAMS, CH)
    assert pt.ok and pt.e_ph < 0.5 and pt.rate_per_second > 0
    assert pt.signature_length == 3 * pt.n_min
    eps = qds_epsilons(FiniteSizeBudget(), pt.m_bits, pt.H_n)
    assert eps.eps_total <= 1e-10


def test_pipeline_rate_formula():
    pt = rate_pipeline(PARAMS, CH)
    assert pt.rate_per_second == pytest.approx(pt.N_fin * PARAMS.rep_rate_hz / PARAMS.N / (3 * pt.n_min))


def test_pipeline_group_size_is_minimal():
    pt = rate_pipeline(PARAMS, CH)
    budget = FiniteSizeBudget()
    need = 1 + math.log2(pt.m_bits / budget.security_bound)
    assert key_and_secrecy(pt.N_suc, pt.E_b, budget, pt.e_ph, pt.n_min).H_n >= need
    assert key_and_secrecy(pt.N_suc, pt.E_b, budget, pt.e_ph, pt.n_min - 1).H_n < need


def test_pipeline_deterministic():
    a, b = rate_pipeline(PARAMS, CH), rate_pipeline(PARAMS, CH)
    assert a == b


def test_perfect_key_limit_matches_direct_inequality():
    pt = rate_pipeline(PARAMS, CH, m_bits=1e6, e_ph_override=0.0, sampling_correction=False)
    assert pt.n_min == 55


def test_no_keys_gives_zero_rate():
    lossy = ChannelModel(eta=1e-4, xi=0.05)
    pt = rate_pipeline(ProtocolParams(mu=0.3, x_th=1.5, p_sig=0.8, p_test=0.1, N=1e6), lossy)
    assert pt.rate_per_second == 0.0 and not pt.ok
    assert pt.reason in ("no keys", "no secrecy")


def test_fixed_duals_give_no_lower_bound_than_optimized():
    duals, u = optimize_duals(PARAMS, CH, FiniteSizeBudget())
    for k, g in ((0.0, 0.0), (1.0, 1.0), (duals.kappa * 1.5, duals.gamma)):
        assert rate_pipeline(PARAMS, CH, DualCoeffs(k, g)).e_ph >= rate_pipeline(PARAMS, CH, duals).e_ph - 1e-12


def test_optimized_duals_are_local_minimum():
    budget = FiniteSizeBudget()
    duals, u = optimize_duals(PARAMS, CH, budget)
    for dk, dg in ((0.05, 0), (-0.05, 0), (0, 0.05), (0, -0.05)):
        k, g = max(duals.kappa + dk, 0), max(duals.gamma + dg, 0)
        other = rate_pipeline(PARAMS, CH, DualCoeffs(k, g)).e_ph * rate_pipeline(PARAMS, CH, duals).N_suc
        assert other >= u * (1 - 1e-9)


def test_rate_non_increasing_in_noise_and_message_size():
    rates = [rate_pipeline(PARAMS, ChannelModel(0.4, xi)).rate_per_second for xi in (0, 1e-3, 5e-3, 1e-2)]
    assert all(b <= a for a, b in zip(rates, rates[1:]))
    by_m = [rate_pipeline(PARAMS, CH, m_bits=m).rate_per_second for m in (10, 1e3, 1e6)]
    assert all(b <= a for a, b in zip(by_m, by_m[1:]))


def test_minimal_group_size_continuous_between_integers():
    pt = rate_pipeline(PARAMS, CH)
    budget = FiniteSizeBudget()
    cont = minimal_group_size(pt.N_suc, pt.E_b, pt.e_ph, budget, 1000, continuous=True)
    assert pt.n_min - 1 < cont <= pt.n_min


def test_row_and_summary_columns():
    pt = rate_pipeline(PARAMS, CH, distance_km=25.0)
    assert list(pt.to_row()) == ["distance_km", "eta", "mu", "x_th", "p_sig", "p_test", "kappa", "gamma",
                                 "n_min", "N_fin", "rate_per_s", "sig_len"]
    summary = point_summary(pt)
    assert summary["reason"] == "ok" and summary["distance_km"] == 25.0


def test_optimize_point_beats_central_start():
    cfg = SearchConfig(N=1e11, starts=2, maxiter=60, seed=3)
    best = optimize_point(CH, m_bits=1000, cfg=cfg)
    central = rate_pipeline(ProtocolParams(mu=0.3, x_th=0.5, p_sig=0.8, p_test=0.1, N=1e11), CH)
    assert best.ok
    assert best.rate_per_second >= central.rate_per_second
    p = best.params
    assert 0.01 <= p.mu <= 2 and 0.3 <= p.x_th <= 2 and p.p_sig + p.p_test <= 1


def test_optimize_point_deterministic():
    cfg = SearchConfig(N=1e11, starts=1, maxiter=30, seed=4)
    assert optimize_point(CH, cfg=cfg) == optimize_point(CH, cfg=cfg)


def test_competitor_sections_sum_to_closed_form():
    for n in (0, 1, 2, 7, 50):
        for c in (2, 3, 5):
            model = CompetitorModel("append-ones", l=100, c=c)
            res = competitor_length(model, n)
            secs = competitor_sections(model, n)
            assert len(secs) == res["h"] == n + 6
            assert sum(secs) == res["total"]
    model = CompetitorModel("insert-zeros", l=100, x=3)
    assert competitor_length(model, 10)["h"] == 23
    assert sum(competitor_sections(model, 10)) == 23 * 100


def test_append_ones_empty_message():
    assert competitor_length(CompetitorModel("append-ones"), 0)["h"] == 6


def test_best_insert_period_matches_brute_force():
    for n in (1, 10, 99, 1000, 12345):
        brute = min(range(1, n + 1), key=lambda x: (n + n // x + 2 * x + 4, x))
        assert n // best_insert_period(n) + 2 * best_insert_period(n) == n // brute + 2 * brute


def test_competitor_growth_ordering():
    def ratio(scheme):
        m = CompetitorModel(scheme)
        return competitor_length(m, 10 ** 6)["total"] / competitor_length(m, 10)["total"]

    quad, lin = ratio("append-ones"), ratio("insert-zeros")
    assert quad > lin > 1.5
    assert quad / lin > 5


def test_competitor_validation():
    with pytest.raises(ValueError):
        CompetitorModel("append-ones", c=1)
    with pytest.raises(ValueError):
        CompetitorModel("other")
    with pytest.raises(ValueError):
        CompetitorModel("insert-zeros", l=0)


def test_rate_positive_only_for_valid_budget():
    pt = rate_pipeline(PARAMS, CH, budget=FiniteSizeBudget(eps_prime=0.1))
    assert pt.reason == "budget" and pt.rate_per_second == 0.0
    assert np.isfinite(pt.H_n)
