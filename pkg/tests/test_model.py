import math

import numpy as np
import pytest

from gesched.channel import ChannelParams
from gesched.model import (ArrivalDist, CostModel, State, SystemModel,
                           UnstableModelError, build_model,
                           instantaneous_cost, queue_next, reward,
                           stability_check, transition_law)


@pytest.fixture(scope="module")
def default_model():
    # p01=0.2, p11=0.9, p1=0.9, M_d=2, kappa=1, Q_max=10, K=10, b0=0.5
    return build_model(ChannelParams(0.2, 0.9), ArrivalDist((0.1, 0.9)),
                       CostModel.exponential(2, 1.0))


def test_arrival_dist_validation():
    with pytest.raises(ValueError):
        ArrivalDist((0.5, 0.6))
    with pytest.raises(ValueError):
        ArrivalDist((-0.1, 1.1))
    d = ArrivalDist((0.25, 0.5, 0.25))
    assert d.max_arrivals == 2
    assert d.mean() == pytest.approx(1.0)


def test_arrival_sampling_frequency():
    d = ArrivalDist((0.3, 0.5, 0.2))
    rng = np.random.default_rng(5)
    n = 200_000
    counts = np.bincount([d.sample(rng) for _ in range(n)], minlength=3)
    for i, p in enumerate(d.probs):
        assert counts[i] / n == pytest.approx(p, abs=3 * (p * (1 - p) / n) ** 0.5)


def test_cost_model_validation():
    with pytest.raises(ValueError):
        CostModel(kappa=1.0, c=(0.1, 1.0))    # c(0) != 0
    with pytest.raises(ValueError):
        CostModel(kappa=1.0, c=(0.0, 2.0, 1.0))  # not increasing
    with pytest.raises(ValueError):
        CostModel(kappa=-1.0, c=(0.0, 1.0))
    cm = CostModel.exponential(2, 1.0)
    assert cm.c[0] == 0.0
    assert cm.c[1] == pytest.approx(math.e - 1.0)
    assert cm.c[2] == pytest.approx(math.e**2 - 1.0)


def test_queue_next_examples():
    assert queue_next(5, 1, 2, 10) == 4
    assert queue_next(0, 1, 2, 10) == 1       # max(0, .) clamp
    assert queue_next(10, 1, 0, 10) == 10     # overflow dropped


def test_instantaneous_cost_examples():
    cm = CostModel.exponential(2, 1.0)
    assert instantaneous_cost(5, 0, cm) == pytest.approx(5.0)
    assert instantaneous_cost(5, 1, cm) == pytest.approx(5 + math.e - 1)      # 6.71828
    assert instantaneous_cost(0, 2, cm) == pytest.approx(math.e**2 - 1)      # 6.38906


def test_reward_examples(default_model):
    m = default_model
    # offset = Q_max + kappa*c(M_d) = 10 + (e^2 - 1)
    assert m.reward_offset == pytest.approx(10 + math.e**2 - 1)
    assert reward(5, 1, m) == pytest.approx((10 + math.e**2 - 1) - (5 + math.e - 1))
    assert reward(10, 2, m) == pytest.approx(0.0)
    assert reward(0, 0, m) == pytest.approx(10 + math.e**2 - 1)
    for q in range(m.Q_max + 1):
        for u in range(m.M_d + 1):
            assert 0.0 <= reward(q, u, m) <= m.reward_offset + 1e-12


class TestTransitionLaw:
    def test_idle_shallow_belief(self, default_model):
        m = default_model
        # Shallow belief: tau image is an exact grid point, two successors.
        succ = transition_law(State(5, m.beliefs.idx_p01), 0, m)
        assert len(succ) == 2
        probs = sorted(p for _, p in succ)
        assert probs == pytest.approx([0.1, 0.9])
        nb = {s.b_idx for s, _ in succ}
        assert nb == {int(m.beliefs.tau_next[m.beliefs.idx_p01])}

    def test_transmit_near_certain_belief(self):
        # Belief ~= 1: only the success branch has mass.
        ch = ChannelParams(0.5, 1 - 1e-12)
        m = build_model(ch, ArrivalDist((1.0,)), CostModel.exponential(1, 1.0),
                        Q_max=5, K=0, b0=1 - 1e-12)
        succ = transition_law(State(3, m.beliefs.idx_p11), 1, m)
        total_success = sum(p for s, p in succ if s.b_idx == m.beliefs.idx_p11)
        assert total_success == pytest.approx(1.0, abs=1e-11)

    def test_transmit_two_thirds_belief_no_arrivals(self):
        ch = ChannelParams(p01=0.2, p11=0.6)   # mu1 = 1/3... grid holds 2/3? build custom
        m = build_model(ChannelParams(0.2, 0.9), ArrivalDist((1.0,)),
                        CostModel.exponential(1, 1.0), Q_max=10, K=0, b0=2.0 / 3.0)
        bi = m.beliefs.idx_b0
        succ = dict(transition_law(State(4, bi), 1, m))
        assert succ[State(3, m.beliefs.idx_p11)] == pytest.approx(2.0 / 3.0)
        assert succ[State(4, m.beliefs.idx_p01)] == pytest.approx(1.0 / 3.0)

    def test_rows_sum_to_one_everywhere(self, default_model):
        m = default_model
        for q in range(m.Q_max + 1):
            for bi in range(m.n_beliefs):
                for u in range(m.M_d + 1):
                    succ = transition_law(State(q, bi), u, m)
                    assert sum(p for _, p in succ) == pytest.approx(1.0, abs=1e-12)
                    for s, p in succ:
                        assert 0 <= s.q <= m.Q_max
                        assert 0 <= s.b_idx < m.n_beliefs
                        assert p > 0

    def test_rejects_out_of_range(self, default_model):
        m = default_model
        with pytest.raises(ValueError):
            transition_law(State(m.Q_max + 1, 0), 0, m)
        with pytest.raises(ValueError):
            transition_law(State(0, 0), m.M_d + 1, m)


class TestStability:
    def test_margin_pass(self):
        # M_d=1, mu1=0.8, E[A]=0.7 -> margin 0.1
        m = build_model(ChannelParams(0.4, 0.9), ArrivalDist((0.3, 0.7)),
                        CostModel.exponential(1, 1.0))
        margin, ok = stability_check(m)
        assert margin == pytest.approx(0.1)
        assert ok

    def test_margin_fail(self):
        with pytest.raises(UnstableModelError):
            # mu1 = 0.5, E[A] = 0.6
            build_model(ChannelParams(0.5, 0.5), ArrivalDist((0.4, 0.6)),
                        CostModel.exponential(1, 1.0))

    def test_exact_equality_fails(self):
        # mu1 = 0.2/(0.2+0.2) = 0.5 exactly, E[A] = 0.5 exactly
        with pytest.raises(UnstableModelError):
            build_model(ChannelParams(0.2, 0.8), ArrivalDist((0.5, 0.5)),
                        CostModel.exponential(1, 1.0))

    def test_override(self):
        m = build_model(ChannelParams(0.5, 0.5), ArrivalDist((0.4, 0.6)),
                        CostModel.exponential(1, 1.0), allow_unstable=True)
        margin, ok = stability_check(m)
        assert not ok
        assert margin == pytest.approx(-0.1)
