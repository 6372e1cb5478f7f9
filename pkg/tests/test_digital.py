import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from airsgd.digital import (
    SCHEME_DDSGD,
    SCHEME_QSGD,
    SCHEME_SIGNSGD,
    DigitalBudget,
    ddsgd_bit_cost,
    ddsgd_quantize,
    digital_round,
    golomb_bit_cost,
    mac_capacity_bits,
    qsgd_bit_cost,
    qsgd_encode,
    select_q,
    signsgd_bit_cost,
    signsgd_encode,
)
from airsgd.numerics import SeededRng, log2_binomial


# --- capacity ----------------------------------------------------------------


def test_mac_capacity_hand_values():
    assert mac_capacity_bits(2, 1, 2.0, 1.0) == pytest.approx(1.0, abs=1e-12)
    assert mac_capacity_bits(3925, 25, 500.0, 1.0) == pytest.approx(162.1, abs=0.1)
    assert mac_capacity_bits(100, 4, 0.0, 1.0) == 0.0


def test_mac_capacity_errors():
    with pytest.raises(ValueError):
        mac_capacity_bits(0, 1, 1.0, 1.0)
    with pytest.raises(ValueError):
        mac_capacity_bits(2, 0, 1.0, 1.0)
    with pytest.raises(ValueError):
        mac_capacity_bits(2, 1, 1.0, 0.0)
    with pytest.raises(ValueError):
        mac_capacity_bits(2, 1, -1.0, 1.0)


# --- bit costs ---------------------------------------------------------------


def test_ddsgd_bit_cost_values():
    assert ddsgd_bit_cost(10, 3) == pytest.approx(math.log2(120) + 33, rel=1e-12)
    assert ddsgd_bit_cost(500, 0) == 33.0
    assert ddsgd_bit_cost(7850, 11) == pytest.approx(math.log2(math.comb(7850, 11)) + 33, rel=1e-12)


def test_baseline_bit_costs():
    assert signsgd_bit_cost(10, 2) == pytest.approx(math.log2(45) + 2, rel=1e-12)
    assert qsgd_bit_cost(10, 2, level_bits=2) == pytest.approx(32 + math.log2(45) + 6, rel=1e-12)


def test_position_cost_bounded_and_monotone():
    d = 200
    costs = [log2_binomial(d, q) for q in range(d // 2 + 1)]
    assert all(c <= d for c in costs)
    assert all(b >= a for a, b in zip(costs, costs[1:]))


def test_golomb_hand_values():
    # p = 0.5: the optimal run-length parameter collapses to b* = 0, cost 2
    assert golomb_bit_cost(0.5) == pytest.approx(2.0, abs=1e-12)
    # p = 0.1: b* = 3, cost 3 + 1/(1 - 0.9^8)
    assert golomb_bit_cost(0.1) == pytest.approx(3.0 + 1.0 / (1.0 - 0.9**8), rel=1e-12)
    assert golomb_bit_cost(0.1) == pytest.approx(4.755, abs=1e-3)
    # ratio form: q_t = 1 of d = 10 is the same success probability
    assert golomb_bit_cost(1, 10) == golomb_bit_cost(0.1)
    # p -> 1: one bit per always-successful distance
    assert golomb_bit_cost(1.0 - 1e-12) == pytest.approx(1.0, abs=1e-9)


def test_golomb_domain_errors():
    for p in [0.0, 1.0, -0.2, 1.3]:
        with pytest.raises(ValueError):
            golomb_bit_cost(p)


# --- budget selection --------------------------------------------------------


def test_select_q_spec_points():
    assert select_q(10, 40.0, SCHEME_DDSGD) == 3
    assert select_q(10, 33.0, SCHEME_DDSGD) == 0
    assert select_q(10, 7.5, SCHEME_SIGNSGD) == 2


def test_select_q_caps():
    # unlimited budget: the two-sided code stops at d/2, baselines at d
    assert select_q(10, 1e9, SCHEME_DDSGD) == 5
    assert select_q(10, 1e9, SCHEME_SIGNSGD) == 10
    assert select_q(10, 1e9, SCHEME_QSGD) == 10
    assert select_q(1, 1e9, SCHEME_DDSGD) == 0  # q <= d/2 leaves nothing


def test_select_q_errors():
    with pytest.raises(ValueError):
        select_q(10, -1.0, SCHEME_SIGNSGD)
    with pytest.raises(ValueError):
        select_q(10, 10.0, "morse")


def brute_force_q(d, budget, cost, cap):
    best = 0
    for q in range(1, cap + 1):
        if cost(q) <= budget:
            best = max(best, q)
    return best


@given(st.integers(2, 60), st.floats(0.0, 120.0))
@settings(max_examples=200, deadline=None)
def test_select_q_matches_brute_force(d, budget):
    cases = [
        (SCHEME_DDSGD, lambda q: ddsgd_bit_cost(d, q), d // 2),
        (SCHEME_SIGNSGD, lambda q: signsgd_bit_cost(d, q), d),
        (SCHEME_QSGD, lambda q: qsgd_bit_cost(d, q), d),
    ]
    for scheme, cost, cap in cases:
        got = select_q(d, budget, scheme)
        assert got == brute_force_q(d, budget, cost, cap), (scheme, d, budget)


@given(st.integers(2, 60), st.floats(0.0, 120.0))
@settings(max_examples=100, deadline=None)
def test_select_q_maximality(d, budget):
    for scheme, cost, cap in [
        (SCHEME_DDSGD, lambda q: ddsgd_bit_cost(d, q), d // 2),
        (SCHEME_SIGNSGD, lambda q: signsgd_bit_cost(d, q), d),
    ]:
        q = select_q(d, budget, scheme)
        if q:
            assert cost(q) <= budget
        if q < cap:
            assert cost(q + 1) > budget


# --- two-sided quantizer -----------------------------------------------------


def test_ddsgd_quantize_positive_group_wins():
    g = np.array([0.5, -0.2, 0.1, -0.4])
    payload, delta = ddsgd_quantize(g, np.zeros(4), 1)
    np.testing.assert_array_equal(payload.dense(), [0.5, 0, 0, 0])
    np.testing.assert_allclose(delta, [0, -0.2, 0.1, -0.4], atol=1e-15)
    assert payload.sign == 1
    assert payload.bit_cost == pytest.approx(ddsgd_bit_cost(4, 1))


def test_ddsgd_quantize_negative_group_wins():
    g = np.array([-3.0, -2.0, 1.0])
    payload, delta = ddsgd_quantize(g, np.zeros(3), 1)
    np.testing.assert_array_equal(payload.dense(), [-3, 0, 0])
    np.testing.assert_allclose(delta, [0, -2, 1], atol=1e-15)
    assert payload.sign == -1 and payload.magnitude == 3.0


def test_ddsgd_quantize_same_sign_input():
    # bottom group holds no negatives, so the positives survive by default
    payload, delta = ddsgd_quantize(np.array([3.0, 2.0, 1.0]), np.zeros(3), 1)
    np.testing.assert_array_equal(payload.dense(), [3, 0, 0])
    np.testing.assert_allclose(delta, [0, 2, 1], atol=1e-15)
    payload, _ = ddsgd_quantize(np.array([-3.0, -2.0, -1.0]), np.zeros(3), 1)
    np.testing.assert_array_equal(payload.dense(), [-3, 0, 0])


def test_ddsgd_quantize_tie_keeps_positives():
    payload, _ = ddsgd_quantize(np.array([2.0, -2.0]), np.zeros(2), 1)
    np.testing.assert_array_equal(payload.dense(), [2, 0])
    assert payload.sign == 1


def test_ddsgd_quantize_all_zero():
    payload, delta = ddsgd_quantize(np.zeros(4), np.zeros(4), 2)
    assert payload.magnitude == 0.0
    assert payload.bit_cost == 0.0
    assert len(payload.support) == 0
    np.testing.assert_array_equal(payload.dense(), np.zeros(4))
    np.testing.assert_array_equal(delta, np.zeros(4))


def test_ddsgd_quantize_memory_enters_selection():
    g = np.array([0.1, 0.1, 0.1, 0.1])
    memory = np.array([5.0, 0.0, 0.0, 0.0])
    payload, delta = ddsgd_quantize(g, memory, 1)
    np.testing.assert_array_equal(payload.dense(), [5.1, 0, 0, 0])
    np.testing.assert_allclose(delta, [0, 0.1, 0.1, 0.1], atol=1e-15)


def test_ddsgd_quantize_group_mean_spreads_over_support():
    # two positives kept: both transmitted at their common mean
    g = np.array([4.0, 2.0, -1.0, 0.5])
    payload, delta = ddsgd_quantize(g, np.zeros(4), 2)
    np.testing.assert_allclose(payload.dense(), [3, 3, 0, 0])
    np.testing.assert_allclose(payload.dense() + delta, g, atol=1e-15)


def test_ddsgd_quantize_errors():
    with pytest.raises(ValueError):
        ddsgd_quantize(np.zeros(4), np.zeros(4), 0)
    with pytest.raises(ValueError):
        ddsgd_quantize(np.zeros(4), np.zeros(4), 3)
    with pytest.raises(ValueError):
        ddsgd_quantize(np.zeros(4), np.zeros(3), 1)


@given(
    st.lists(st.floats(-50, 50, allow_nan=False), min_size=2, max_size=30),
    st.lists(st.floats(-50, 50, allow_nan=False), min_size=2, max_size=30),
    st.data(),
)
@settings(max_examples=200)
def test_ddsgd_quantize_properties(g_vals, mem_vals, data):
    d = min(len(g_vals), len(mem_vals))
    g = np.array(g_vals[:d])
    memory = np.array(mem_vals[:d])
    q_t = data.draw(st.integers(1, d // 2)) if d >= 2 else 1
    payload, delta = ddsgd_quantize(g, memory, q_t)
    dense = payload.dense()
    # conservation: transmitted plus remainder reconstructs g + memory
    np.testing.assert_allclose(dense + delta, g + memory, atol=1e-10)
    # at most q_t nonzeros, all sharing one value
    nonzero = dense[dense != 0]
    assert len(nonzero) <= q_t
    if len(nonzero):
        assert np.all(nonzero == nonzero[0])
        assert nonzero[0] == payload.sign * payload.magnitude
        assert payload.magnitude > 0


# --- baselines ---------------------------------------------------------------


def test_signsgd_encode_hand_case():
    # budget 7.5 over d=10 admits q=2 (log2 C(10,2) + 2 ~ 7.49) but not q=3
    g = np.array([0.1, -5.0, 3.0, -0.2, 0.01, 0.02, -0.01, 0.03, 0.015, -0.025])
    payload, mem = signsgd_encode(g, 7.5)
    assert payload.q == 2
    np.testing.assert_array_equal(payload.dense, [0, -1, 1, 0, 0, 0, 0, 0, 0, 0])
    assert payload.bit_cost == pytest.approx(signsgd_bit_cost(10, 2))
    assert mem is None


def test_signsgd_encode_dense_when_budget_allows():
    # cost(d) = d exactly, so a budget of d keeps every coordinate
    payload, _ = signsgd_encode(np.array([0.1, -5.0, 3.0, -0.2]), 4.0)
    assert payload.q == 4
    np.testing.assert_array_equal(payload.dense, [1, -1, 1, -1])
    assert payload.bit_cost == pytest.approx(4.0)


def test_signsgd_zero_budget():
    payload, _ = signsgd_encode(np.ones(8), 0.0)
    assert payload.q == 0
    assert payload.bit_cost == 0.0
    np.testing.assert_array_equal(payload.dense, np.zeros(8))


def test_signsgd_memory_mode():
    g = np.array([2.0, -0.5])
    payload, mem = signsgd_encode(g, 100.0, memory=np.array([0.0, 0.0]))
    np.testing.assert_array_equal(payload.dense, [1, -1])
    np.testing.assert_allclose(mem, [1.0, 0.5])


def test_qsgd_encode_levels_and_cost():
    g = np.array([3.0, -4.0, 0.1, 0.0])
    payload, mem = qsgd_encode(g, 200.0, SeededRng(5))
    assert mem is None
    assert payload.q == select_q(4, 200.0, SCHEME_QSGD)
    norm = np.linalg.norm(sorted(np.abs(g), reverse=True)[: payload.q])
    levels = 4
    on_support = payload.dense[payload.dense != 0]
    steps = np.abs(on_support) * levels / norm
    np.testing.assert_allclose(steps, np.round(steps), atol=1e-9)


def test_qsgd_encode_deterministic_per_stream():
    g = np.linspace(-1, 1, 20)
    a, _ = qsgd_encode(g, 120.0, SeededRng(7))
    b, _ = qsgd_encode(g, 120.0, SeededRng(7))
    np.testing.assert_array_equal(a.dense, b.dense)


def test_qsgd_unbiased_monte_carlo():
    g = np.array([0.7, -0.3, 0.2])
    total = np.zeros(3)
    n = 4000
    for i in range(n):
        payload, _ = qsgd_encode(g, 1000.0, SeededRng(i))
        total += payload.dense
    mc_mean = total / n
    # stochastic rounding is unbiased on the kept set; MC noise ~ norm/levels/sqrt(n)
    np.testing.assert_allclose(mc_mean, g, atol=4 * 0.8 / 4 / math.sqrt(n))


def test_qsgd_zero_vector_zero_budget():
    payload, _ = qsgd_encode(np.zeros(6), 1000.0, SeededRng(1))
    np.testing.assert_array_equal(payload.dense, np.zeros(6))
    payload, _ = qsgd_encode(np.ones(6), 0.0, SeededRng(1))
    assert payload.q == 0 and payload.bit_cost == 0.0


# --- round orchestration -----------------------------------------------------


def test_digital_round_identical_gradients():
    g = np.tile(np.array([0.5, -0.2, 0.1, -0.4, 0.0, 0.0]), (3, 1))
    memories = [np.zeros(6) for _ in range(3)]
    res = digital_round(g, SCHEME_DDSGD, s=300, p_t=100.0, noise_variance=1.0, memories=memories)
    assert res.budget.q_t >= 1
    assert res.budget.r_t <= res.budget.R_t
    # all devices transmit the same payload, so the average equals it
    assert len(res.per_device_bits) == 3
    assert np.count_nonzero(res.g_hat) <= res.budget.q_t


def test_digital_round_zero_budget_accumulates():
    g = np.ones((2, 50))
    memories = [np.zeros(50) for _ in range(2)]
    # tiny power: R_t < 33 so even q=1 is unaffordable
    res = digital_round(g, SCHEME_DDSGD, s=50, p_t=0.01, noise_variance=1.0, memories=memories)
    assert res.budget.q_t == 0
    assert res.budget.r_t == 0.0
    np.testing.assert_array_equal(res.g_hat, np.zeros(50))
    for mem in memories:
        np.testing.assert_array_equal(mem, np.ones(50))


def test_digital_round_baselines_and_errors():
    g = np.vstack([np.linspace(-1, 1, 30), np.linspace(1, -1, 30)])
    res = digital_round(g, SCHEME_SIGNSGD, s=300, p_t=50.0, noise_variance=1.0, memories=None)
    assert res.budget.r_t <= res.budget.R_t
    # opposite inputs: decoded signs cancel in the average
    np.testing.assert_allclose(res.g_hat, np.zeros(30), atol=1e-12)
    res = digital_round(
        g, SCHEME_QSGD, s=300, p_t=50.0, noise_variance=1.0, memories=None, rng=SeededRng(3)
    )
    assert res.budget.r_t <= res.budget.R_t
    with pytest.raises(ValueError, match="memories"):
        digital_round(g, SCHEME_DDSGD, s=300, p_t=50.0, noise_variance=1.0, memories=None)
    with pytest.raises(ValueError, match="rng"):
        digital_round(g, SCHEME_QSGD, s=300, p_t=50.0, noise_variance=1.0, memories=None)
    with pytest.raises(ValueError, match="unknown digital scheme"):
        digital_round(g, "pigeon", s=300, p_t=50.0, noise_variance=1.0, memories=None)


def test_digital_budget_rejects_overrun():
    with pytest.raises(ValueError, match="exceeds budget"):
        DigitalBudget(R_t=10.0, q_t=1, r_t=11.0)
