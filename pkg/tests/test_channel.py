import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from gesched.channel import (ChannelParams, belief_update,
                             enumerate_belief_space, stationary_dist,
                             step_channel, tau_map)

CH = ChannelParams(p01=0.2, p11=0.9)


def test_params_validation():
    with pytest.raises(ValueError):
        ChannelParams(0.0, 0.9)
    with pytest.raises(ValueError):
        ChannelParams(0.2, 1.0)
    with pytest.raises(ValueError):
        ChannelParams(-0.1, 0.5)


def test_derived_accessors():
    assert CH.p10 == pytest.approx(0.1)
    assert CH.p00 == pytest.approx(0.8)


def test_stationary_closed_form():
    # mu1 = p01 / (p01 + p10)
    assert stationary_dist(CH)[1] == pytest.approx(2.0 / 3.0)
    assert stationary_dist(ChannelParams(0.4, 0.9))[1] == pytest.approx(0.8)
    mu0, mu1 = stationary_dist(CH)
    assert mu0 + mu1 == pytest.approx(1.0)


def test_stationary_iid_channel():
    # p01 = p11 = p makes the rows identical, so mu1 = p
    for p in (0.3, 0.5, 0.9):
        assert stationary_dist(ChannelParams(p, p))[1] == pytest.approx(p)


def test_tau_map_values():
    assert tau_map(0.5, CH) == pytest.approx(0.55)
    assert tau_map(0.0, CH) == pytest.approx(CH.p01)
    assert tau_map(CH.mu1, CH) == pytest.approx(CH.mu1)  # fixed point


def test_tau_map_rejects_bad_belief():
    with pytest.raises(ValueError):
        tau_map(-0.01, CH)
    with pytest.raises(ValueError):
        tau_map(1.01, CH)


@settings(max_examples=200)
@given(b=st.floats(0.0, 1.0),
       p01=st.floats(0.01, 0.99),
       p11=st.floats(0.01, 0.99))
def test_tau_contraction_identity(b, p01, p11):
    params = ChannelParams(p01, p11)
    lhs = abs(tau_map(b, params) - params.mu1)
    rhs = abs(p11 - p01) * abs(b - params.mu1)
    assert_allclose(lhs, rhs, rtol=1e-9, atol=1e-12)


@settings(max_examples=100)
@given(b1=st.floats(0.0, 1.0), b2=st.floats(0.0, 1.0))
def test_tau_monotone_when_positively_correlated(b1, b2):
    if b1 == b2:
        return
    lo, hi = min(b1, b2), max(b1, b2)
    assert tau_map(lo, CH) < tau_map(hi, CH)


def test_belief_update_branches():
    assert belief_update(0.7, 1, 1, CH) == pytest.approx(0.9)
    assert belief_update(0.7, 2, 0, CH) == pytest.approx(0.2)
    assert belief_update(0.5, 0, None, CH) == pytest.approx(tau_map(0.5, CH))


def test_belief_update_rejects_inconsistent_inputs():
    with pytest.raises(ValueError):
        belief_update(0.5, 0, 1, CH)      # observation without transmission
    with pytest.raises(ValueError):
        belief_update(0.5, 1, None, CH)   # transmission without observation
    with pytest.raises(ValueError):
        belief_update(0.5, 2, 7, CH)


class TestEnumerateBeliefSpace:
    def test_depth_one_grid(self):
        # One tau application per root: tau(0.5)=0.55, tau(0.2)=0.34, tau(0.9)=0.83
        space = enumerate_belief_space(CH, b0=0.5, K=1)
        assert_allclose(space.points, [0.2, 0.34, 0.5, 0.55, 0.83, 0.9], atol=1e-15)

    def test_depth_zero_is_roots_only(self):
        space = enumerate_belief_space(CH, b0=0.5, K=0)
        assert_allclose(space.points, [0.2, 0.5, 0.9], atol=1e-15)

    def test_duplicate_root_merged(self):
        space = enumerate_belief_space(CH, b0=0.2, K=0)
        assert_allclose(space.points, [0.2, 0.9], atol=1e-15)
        assert space.idx_b0 == space.idx_p01

    def test_size_bound_and_hull(self):
        for K in (0, 3, 10):
            space = enumerate_belief_space(CH, b0=0.5, K=K)
            assert len(space) <= 3 * (K + 1)
            lo = min(CH.p01, CH.p11, 0.5)
            hi = max(CH.p01, CH.p11, 0.5)
            assert space.points[0] >= lo - 1e-15
            assert space.points[-1] <= hi + 1e-15

    def test_contains_roots_and_sorted(self):
        space = enumerate_belief_space(CH, b0=0.37, K=10)
        for idx, val in ((space.idx_b0, 0.37), (space.idx_p01, 0.2),
                         (space.idx_p11, 0.9)):
            assert space.points[idx] == pytest.approx(val)
        assert np.all(np.diff(space.points) > 0)

    def test_tau_image_exact_below_depth_limit(self):
        space = enumerate_belief_space(CH, b0=0.5, K=10)
        for i in range(len(space)):
            if any(k < space.K for _, k in space.provenance[i]):
                j = int(space.tau_next[i])
                assert space.points[j] == pytest.approx(
                    tau_map(float(space.points[i]), CH), abs=1e-12)
                assert space.tau_lo[i] == space.tau_hi[i] == j

    def test_depth_limit_points_absorb_and_interpolate(self):
        space = enumerate_belief_space(CH, b0=0.5, K=2)
        deep = [i for i in range(len(space))
                if all(k == space.K for _, k in space.provenance[i])]
        assert deep
        for i in deep:
            assert space.tau_next[i] == i  # representative map absorbs
            t = tau_map(float(space.points[i]), CH)
            lo, hi = int(space.tau_lo[i]), int(space.tau_hi[i])
            w = float(space.tau_w[i])
            interp = (1 - w) * space.points[lo] + w * space.points[hi]
            assert interp == pytest.approx(t, abs=1e-12)

    def test_index_of(self):
        space = enumerate_belief_space(CH, b0=0.5, K=1)
        assert space.index_of(0.55) == 3
        with pytest.raises(KeyError):
            space.index_of(0.42)


class TestStepChannel:
    def test_near_absorbing_limits(self):
        rng = np.random.default_rng(0)
        stuck_bad = ChannelParams(p01=1e-12, p11=0.5)
        assert all(step_channel(0, stuck_bad, rng) == 0 for _ in range(1000))
        stuck_good = ChannelParams(p01=0.5, p11=1 - 1e-12)
        assert all(step_channel(1, stuck_good, rng) == 1 for _ in range(1000))

    def test_monte_carlo_frequency(self):
        # From the bad state, P(next good) = p01 = 0.4.
        params = ChannelParams(p01=0.4, p11=0.9)
        rng = np.random.default_rng(1234)
        n = 10**6
        hits = sum(step_channel(0, params, rng) for _ in range(n))
        sigma = (0.4 * 0.6 / n) ** 0.5
        assert abs(hits / n - 0.4) <= 3 * sigma

    def test_consumes_one_draw(self):
        r1 = np.random.default_rng(7)
        r2 = np.random.default_rng(7)
        step_channel(0, CH, r1)
        r2.random()
        assert r1.random() == r2.random()

    def test_rejects_bad_state(self):
        with pytest.raises(ValueError):
            step_channel(2, CH, np.random.default_rng(0))
