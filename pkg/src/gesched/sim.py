"""Monte-Carlo trajectory simulation of the true partially observed system.

The simulator holds the actual hidden channel state; policies only ever see
(queue, belief). The belief evolves exactly (continuous values), while a grid
index is tracked in parallel through the truncated propagation map so that
grid-based policy tables can be evaluated on the same trajectory.

Per-step draw order: action sampling (stochastic policies only), channel
transition, arrival. Replaying with the same RngSpec reproduces every
statistic bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .actor_critic import policy_probs, sample_action
from .channel import BeliefSpace, step_channel, tau_map
from .model import SystemModel, queue_next
from .policies import ThresholdPolicy


@dataclass(frozen=True)
class RngSpec:
    """Master seed plus run index; (seed, run_index) determines every draw."""

    seed: int
    run_index: int = 0

    def stream(self) -> np.random.Generator:
        return np.random.default_rng((self.seed, self.run_index))


def _as_generator(rng) -> np.random.Generator:
    if isinstance(rng, RngSpec):
        return rng.stream()
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


class TablePolicy:
    """Adapter for a dense (q, belief-index) action table."""

    def __init__(self, table: np.ndarray, beliefs: BeliefSpace):
        self.table = np.asarray(table, dtype=np.int64)
        self.beliefs = beliefs

    def act(self, q: int, b_idx: int, b: float, rng) -> int:
        return int(self.table[q, b_idx])


class ThresholdPolicyAdapter:
    """Adapter applying a ThresholdPolicy's interval rule to the exact belief."""

    def __init__(self, thresholds: ThresholdPolicy):
        self.thresholds = thresholds

    def act(self, q: int, b_idx: int, b: float, rng) -> int:
        return self.thresholds.action(q, b)


class ParametricPolicy:
    """Adapter for the sigmoid threshold parametrization; samples one action
    per step (consumes exactly one uniform draw)."""

    def __init__(self, theta: np.ndarray):
        self.theta = np.asarray(theta, dtype=float)

    def act(self, q: int, b_idx: int, b: float, rng) -> int:
        return sample_action(policy_probs(self.theta, q, b), rng)


def as_sim_policy(policy, model: SystemModel):
    """Wrap tables / thresholds / theta vectors in the act() protocol."""
    if hasattr(policy, "act"):
        return policy
    if isinstance(policy, ThresholdPolicy):
        return ThresholdPolicyAdapter(policy)
    arr = np.asarray(policy)
    if arr.ndim == 2:
        return TablePolicy(arr, model.beliefs)
    if arr.ndim == 1:
        return ParametricPolicy(arr)
    raise TypeError(f"cannot interpret {type(policy).__name__} as a policy")


@dataclass(frozen=True)
class RunStats:
    steps: int                    # steps counted after burn-in
    mean_reward: float
    mean_cost: float
    stderr_cost: float            # batch-means standard error (also of reward)
    mean_queue: float
    action_freqs: tuple[float, ...]
    success_rate: float           # delivered packets / attempted packets
    attempts: int
    deliveries: int
    max_queue_seen: int


def simulate(policy, model: SystemModel, T: int, rng, Q0: int = 5,
             b0: float | None = None, burn_in: float = 0.01,
             n_batches: int = 100) -> RunStats:
    """Simulate T slots of the hidden-state dynamics under a policy.

    The hidden channel starts from its stationary distribution; the belief
    starts at b0 (default: the grid's root belief). The first burn_in
    fraction of slots is excluded from the statistics, and the standard
    error of the mean cost comes from batch means to absorb autocorrelation.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    gen = _as_generator(rng)
    pol = as_sim_policy(policy, model)
    ch = model.channel
    beliefs = model.beliefs
    cost_c = model.cost.c
    kappa = model.cost.kappa
    tau_next = beliefs.tau_next

    if b0 is None:
        b = beliefs.b0
        b_idx = beliefs.idx_b0
    else:
        b = float(b0)
        b_idx = beliefs.index_of(b)
    q = int(Q0)
    if not (0 <= q <= model.Q_max):
        raise ValueError(f"Q0 must be in 0..{model.Q_max}")
    s = 1 if gen.random() < ch.mu1 else 0

    skip = int(burn_in * T)
    n_kept = T - skip
    batch_size = max(1, n_kept // n_batches)

    cost_sum = 0.0
    queue_sum = 0
    action_counts = np.zeros(model.M_d + 1, dtype=np.int64)
    attempts = 0
    deliveries = 0
    max_queue = q
    batch_means: list[float] = []
    batch_acc = 0.0
    batch_n = 0

    for t in range(T):
        u = pol.act(q, b_idx, b, gen)
        track = t >= skip
        if track:
            c = q + kappa * cost_c[u]
            cost_sum += c
            queue_sum += q
            action_counts[u] += 1
            attempts += u
            deliveries += min(q, u if s == 1 else 0)
            batch_acc += c
            batch_n += 1
            if batch_n == batch_size and len(batch_means) < n_batches - 1:
                batch_means.append(batch_acc / batch_n)
                batch_acc = 0.0
                batch_n = 0

        s_next = step_channel(s, ch, gen)
        a = model.arrivals.sample(gen)
        q = queue_next(q, a, u if s == 1 else 0, model.Q_max)
        if u > 0:
            b = ch.p11 if s == 1 else ch.p01
            b_idx = beliefs.idx_p11 if s == 1 else beliefs.idx_p01
        else:
            b = tau_map(b, ch)
            b_idx = int(tau_next[b_idx])
        s = s_next
        if q > max_queue:
            max_queue = q

    if batch_n:
        batch_means.append(batch_acc / batch_n)
    mean_cost = cost_sum / n_kept
    if len(batch_means) > 1:
        bm = np.asarray(batch_means)
        stderr = float(bm.std(ddof=1) / np.sqrt(len(bm)))
    else:
        stderr = float("nan")

    return RunStats(
        steps=n_kept,
        mean_reward=model.reward_offset - mean_cost,
        mean_cost=mean_cost,
        stderr_cost=stderr,
        mean_queue=queue_sum / n_kept,
        action_freqs=tuple(action_counts / n_kept),
        success_rate=deliveries / attempts if attempts else float("nan"),
        attempts=attempts,
        deliveries=deliveries,
        max_queue_seen=max_queue,
    )


@dataclass(frozen=True)
class CalibrationBin:
    lo: float
    hi: float
    samples: int
    mean_belief: float
    success_freq: float
    sigma: float                  # binomial sigma sqrt(b(1-b)/n)
    passed: bool                  # |freq - belief| <= 3 sigma


@dataclass(frozen=True)
class CalibrationReport:
    bins: tuple[CalibrationBin, ...]
    checked: int                  # bins with enough samples
    passed: bool


def belief_calibration(model: SystemModel, policy, T: int, bins: int = 20,
                       rng=0, Q0: int = 5, b0: float | None = None,
                       min_samples: int = 1000) -> CalibrationReport:
    """Check that the belief is a calibrated predictor of the hidden state.

    Pairs each slot's belief b(t) with the same slot's hidden state s(t),
    bins b into equal-width bins, and requires the empirical good-state
    frequency of every bin holding at least min_samples samples to sit
    within 3 binomial standard deviations of the bin's mean belief.
    """
    gen = _as_generator(rng)
    pol = as_sim_policy(policy, model)
    ch = model.channel
    beliefs = model.beliefs

    if b0 is None:
        b = beliefs.b0
        b_idx = beliefs.idx_b0
    else:
        b = float(b0)
        b_idx = beliefs.index_of(b)
    q = int(Q0)
    s = 1 if gen.random() < ch.mu1 else 0

    counts = np.zeros(bins, dtype=np.int64)
    good = np.zeros(bins, dtype=np.int64)
    belief_sum = np.zeros(bins)

    for _ in range(T):
        k = min(int(b * bins), bins - 1)
        counts[k] += 1
        good[k] += s
        belief_sum[k] += b

        u = pol.act(q, b_idx, b, gen)
        s_next = step_channel(s, ch, gen)
        a = model.arrivals.sample(gen)
        q = queue_next(q, a, u if s == 1 else 0, model.Q_max)
        if u > 0:
            b = ch.p11 if s == 1 else ch.p01
            b_idx = beliefs.idx_p11 if s == 1 else beliefs.idx_p01
        else:
            b = tau_map(b, ch)
            b_idx = int(beliefs.tau_next[b_idx])
        s = s_next

    rows = []
    all_ok = True
    for k in range(bins):
        n = int(counts[k])
        if n == 0:
            continue
        mean_b = belief_sum[k] / n
        freq = good[k] / n
        sigma = float(np.sqrt(max(mean_b * (1.0 - mean_b), 0.0) / n))
        enough = n >= min_samples
        ok = (abs(freq - mean_b) <= 3.0 * sigma) if enough else True
        all_ok &= ok
        rows.append(CalibrationBin(lo=k / bins, hi=(k + 1) / bins, samples=n,
                                   mean_belief=float(mean_b),
                                   success_freq=float(freq),
                                   sigma=sigma, passed=ok))
    checked = sum(1 for r in rows if r.samples >= min_samples)
    return CalibrationReport(bins=tuple(rows), checked=checked, passed=all_ok)
