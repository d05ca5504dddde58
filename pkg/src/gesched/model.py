"""Full system model on the truncated state space: queue recursion, arrival
distribution, transmission costs, stability gate, and the one-step transition
law shared by the DP solvers and the Monte-Carlo simulator.

A state is (q, b_idx): queue length in {0..Q_max} and an index into the
belief grid. The per-slot cost is q + kappa*c(u); the equivalent reward used
by learning code is reward_offset - cost with reward_offset = Q_max +
kappa*c(M_d), which is nonnegative on the truncated space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .channel import BeliefSpace, ChannelParams, enumerate_belief_space

PROB_TOL = 1e-12


class State(NamedTuple):
    q: int
    b_idx: int


class UnstableModelError(ValueError):
    """Raised when M_d * mu1 <= E[A] and the override flag is not set."""


@dataclass(frozen=True)
class ArrivalDist:
    """I.i.d. per-slot packet arrivals: probs[i] = P(A = i), i = 0..M_a."""

    probs: tuple[float, ...]
    _cum: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 1 or p.size == 0:
            raise ValueError("arrival probs must be a non-empty 1-D sequence")
        if np.any(p < 0.0):
            raise ValueError(f"arrival probs must be nonnegative, got {self.probs}")
        if abs(float(p.sum()) - 1.0) > PROB_TOL:
            raise ValueError(f"arrival probs must sum to 1, got sum={p.sum()!r}")
        object.__setattr__(self, "probs", tuple(float(x) for x in p))
        cum = np.cumsum(p)
        cum.setflags(write=False)
        object.__setattr__(self, "_cum", cum)

    @property
    def max_arrivals(self) -> int:
        return len(self.probs) - 1

    def mean(self) -> float:
        return float(sum(i * p for i, p in enumerate(self.probs)))

    def sample(self, rng: np.random.Generator) -> int:
        """Inverse-CDF sample; consumes exactly one uniform draw."""
        i = int(np.searchsorted(self._cum, rng.random(), side="right"))
        return min(i, self.max_arrivals)


@dataclass(frozen=True)
class CostModel:
    """Transmission cost table c(0..M_d) with weight kappa.

    c(0) = 0 and c is strictly increasing: transmitting more costs more.
    """

    kappa: float
    c: tuple[float, ...]

    def __post_init__(self):
        if self.kappa < 0.0:
            raise ValueError(f"kappa must be >= 0, got {self.kappa}")
        c = tuple(float(x) for x in self.c)
        if len(c) < 1 or c[0] != 0.0:
            raise ValueError("cost table must start with c(0) = 0")
        if any(c[i + 1] <= c[i] for i in range(len(c) - 1)):
            raise ValueError(f"cost table must be strictly increasing, got {c}")
        object.__setattr__(self, "c", c)

    @classmethod
    def exponential(cls, max_tx: int, kappa: float = 1.0) -> "CostModel":
        """c(u) = exp(u) - 1, the cost curve used throughout the experiments."""
        return cls(kappa=kappa, c=tuple(math.exp(u) - 1.0 for u in range(max_tx + 1)))

    @property
    def max_tx(self) -> int:
        return len(self.c) - 1


@dataclass(frozen=True)
class SystemModel:
    """Immutable bundle of channel, arrivals, cost and truncation limits."""

    channel: ChannelParams
    arrivals: ArrivalDist
    cost: CostModel
    Q_max: int
    beliefs: BeliefSpace

    @property
    def M_d(self) -> int:
        return self.cost.max_tx

    @property
    def M_a(self) -> int:
        return self.arrivals.max_arrivals

    @property
    def reward_offset(self) -> float:
        return self.Q_max + self.cost.kappa * self.cost.c[self.M_d]

    @property
    def n_beliefs(self) -> int:
        return len(self.beliefs)

    @property
    def n_states(self) -> int:
        return (self.Q_max + 1) * self.n_beliefs

    @property
    def shape(self) -> tuple[int, int]:
        return (self.Q_max + 1, self.n_beliefs)


def build_model(
    channel: ChannelParams,
    arrivals: ArrivalDist,
    cost: CostModel,
    Q_max: int = 10,
    K: int = 10,
    b0: float = 0.5,
    allow_unstable: bool = False,
) -> SystemModel:
    """Construct a SystemModel, enforcing the stability condition M_d*mu1 > E[A].

    allow_unstable skips the gate for exploratory runs; on the truncated
    state space every quantity stays finite regardless.
    """
    if Q_max < 0:
        raise ValueError(f"Q_max must be >= 0, got {Q_max}")
    beliefs = enumerate_belief_space(channel, b0, K)
    model = SystemModel(channel=channel, arrivals=arrivals, cost=cost,
                        Q_max=Q_max, beliefs=beliefs)
    margin, ok = stability_check(model)
    if not ok and not allow_unstable:
        raise UnstableModelError(
            f"stability condition violated: M_d*mu1 - E[A] = {margin:.6g} <= 0 "
            f"(M_d={model.M_d}, mu1={channel.mu1:.6g}, E[A]={arrivals.mean():.6g}); "
            "pass allow_unstable to override"
        )
    return model


def stability_check(model: SystemModel) -> tuple[float, bool]:
    """Return (margin, passed) with margin = M_d*mu1 - E[A]; pass iff > 0."""
    margin = model.M_d * model.channel.mu1 - model.arrivals.mean()
    return margin, margin > 0.0


def queue_next(q: int, a: int, d: int, Q_max: int) -> int:
    """Queue recursion min(Q_max, max(0, q - d) + a); overflow is dropped."""
    return min(Q_max, max(0, q - d) + a)


def instantaneous_cost(q: int, u: int, cost: CostModel) -> float:
    """Per-slot cost q + kappa*c(u)."""
    return q + cost.kappa * cost.c[u]


def reward(q: int, u: int, model: SystemModel) -> float:
    """Shifted reward reward_offset - (q + kappa*c(u)), >= 0 on the truncated space."""
    return model.reward_offset - instantaneous_cost(q, u, model.cost)


def transition_law(state: State, u: int, model: SystemModel) -> list[tuple[State, float]]:
    """Successor distribution of (q, b_idx) under action u.

    u = 0: arrivals only; the belief propagates through the grid image of the
    tau map (exact below the grid's depth limit; at the limit the image is
    spread over the two bracketing grid points with its interpolation weight,
    which keeps the solved value function concave along the grid).
    u >= 1: with probability b the attempt succeeds (u packets leave, belief
    jumps to p11), else nothing leaves and the belief jumps to p01.
    Duplicate successors are aggregated; probabilities sum to 1.
    """
    q, b_idx = state
    if not (0 <= q <= model.Q_max) or not (0 <= b_idx < model.n_beliefs):
        raise ValueError(f"state {state} outside the truncated space")
    if not (0 <= u <= model.M_d):
        raise ValueError(f"action {u} outside 0..{model.M_d}")

    beliefs = model.beliefs
    acc: dict[State, float] = {}
    if u == 0:
        lo, hi = int(beliefs.tau_lo[b_idx]), int(beliefs.tau_hi[b_idx])
        w_hi = float(beliefs.tau_w[b_idx])
        branches = [(lo, 1.0 - w_hi), (hi, w_hi)] if hi != lo else [(lo, 1.0)]
        for i, p_i in enumerate(model.arrivals.probs):
            if p_i == 0.0:
                continue
            q2 = queue_next(q, i, 0, model.Q_max)
            for nb, w in branches:
                if w == 0.0:
                    continue
                s2 = State(q2, nb)
                acc[s2] = acc.get(s2, 0.0) + p_i * w
    else:
        b = float(beliefs.points[b_idx])
        for i, p_i in enumerate(model.arrivals.probs):
            if p_i == 0.0:
                continue
            if b > 0.0:
                s2 = State(queue_next(q, i, u, model.Q_max), beliefs.idx_p11)
                acc[s2] = acc.get(s2, 0.0) + p_i * b
            if b < 1.0:
                s2 = State(queue_next(q, i, 0, model.Q_max), beliefs.idx_p01)
                acc[s2] = acc.get(s2, 0.0) + p_i * (1.0 - b)
    return sorted(acc.items())
