"""Two-state Markov (Gilbert-Elliott) channel: transition parameters, belief
recursion, and enumeration of the finite reachable belief grid.

State 1 is "good" (a transmission attempt succeeds), state 0 is "blocked".
The scheduler never observes the state directly; it tracks the belief
b(t) = P(channel good at t | ACK/NACK history), which moves on a finite grid
once the grid is truncated at iteration depth K.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Belief values closer than this are considered the same grid point.
DEDUP_TOL = 1e-12

# Root labels, in the lexicographic order used to break merge ties.
_ROOTS = ("b0", "p01", "p11")


@dataclass(frozen=True)
class ChannelParams:
    """Transition probabilities of the two-state channel chain.

    p01 = P(next good | now blocked), p11 = P(next good | now good).
    Both must lie strictly inside (0, 1) so the chain is ergodic.
    """

    p01: float
    p11: float

    def __post_init__(self):
        if not (0.0 < self.p01 < 1.0):
            raise ValueError(f"p01 must be in (0,1), got {self.p01}")
        if not (0.0 < self.p11 < 1.0):
            raise ValueError(f"p11 must be in (0,1), got {self.p11}")

    @property
    def p10(self) -> float:
        return 1.0 - self.p11

    @property
    def p00(self) -> float:
        return 1.0 - self.p01

    @property
    def mu1(self) -> float:
        """Stationary probability of the good state."""
        return self.p01 / (self.p01 + 1.0 - self.p11)

    @property
    def mu0(self) -> float:
        return 1.0 - self.mu1

    @property
    def memory(self) -> float:
        """|p11 - p01|: contraction rate of the belief map; 0 means i.i.d."""
        return abs(self.p11 - self.p01)


def stationary_dist(params: ChannelParams) -> tuple[float, float]:
    """Return (mu0, mu1) for the channel chain."""
    mu1 = params.mu1
    return 1.0 - mu1, mu1


def tau_map(b: float, params: ChannelParams) -> float:
    """One-step belief propagation with no observation: b -> b*p11 + (1-b)*p01."""
    if not (0.0 <= b <= 1.0):
        raise ValueError(f"belief must be in [0,1], got {b}")
    return b * params.p11 + (1.0 - b) * params.p01


def belief_update(b: float, u: int, s: int | None, params: ChannelParams) -> float:
    """Belief recursion after taking action u and (iff u > 0) observing state s.

    u > 0 resets the belief to p01 or p11 depending on the ACK/NACK outcome;
    u = 0 propagates the prior through the chain.
    """
    if u > 0:
        if s not in (0, 1):
            raise ValueError(f"u={u} > 0 requires an observed state in {{0,1}}, got {s}")
        return params.p11 if s == 1 else params.p01
    if s is not None:
        raise ValueError(f"u=0 yields no observation, got s={s}")
    return tau_map(b, params)


def step_channel(s: int, params: ChannelParams, rng: np.random.Generator) -> int:
    """Sample the next channel state; consumes exactly one uniform draw."""
    if s not in (0, 1):
        raise ValueError(f"channel state must be 0 or 1, got {s}")
    p_good = params.p11 if s == 1 else params.p01
    return 1 if rng.random() < p_good else 0


@dataclass(frozen=True)
class BeliefSpace:
    """Sorted, deduplicated grid of beliefs reachable within K no-observation steps.

    points[i] carries provenance: the sorted tuple of (root, k) pairs with
    tau^k(root) equal to points[i].

    Two grid images of the tau map are precomputed. tau_next[i] is a single
    representative index (exact tau image below depth K, the point itself at
    depth K); the simulator uses it to keep a grid index for table policies.
    The solvers instead spread the tau image over (tau_lo, tau_hi) with
    weight tau_w on the high side: exact below depth K, a linear value
    interpolation between the bracketing grid points at depth K. The
    interpolated form is what keeps the dynamic-programming value function
    concave along the grid; a self-absorbing rule at depth K kinks it near
    the stationary belief, where the three root chains crowd together.
    """

    params: ChannelParams
    K: int
    points: np.ndarray
    tau_next: np.ndarray
    tau_lo: np.ndarray
    tau_hi: np.ndarray
    tau_w: np.ndarray
    provenance: tuple[tuple[tuple[str, int], ...], ...]
    idx_b0: int
    idx_p01: int
    idx_p11: int

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def b0(self) -> float:
        return float(self.points[self.idx_b0])

    def index_of(self, value: float, atol: float = DEDUP_TOL) -> int:
        """Grid index of a belief value; KeyError if it is not a grid point."""
        i = int(np.searchsorted(self.points, value))
        for j in (i - 1, i):
            if 0 <= j < len(self) and abs(float(self.points[j]) - value) <= atol:
                return j
        raise KeyError(f"belief {value!r} is not in the grid (closure bug?)")


def enumerate_belief_space(params: ChannelParams, b0: float, K: int) -> BeliefSpace:
    """Build the truncated belief grid: {tau^k(r) : r in {b0, p01, p11}, k <= K}.

    Values within DEDUP_TOL are merged; the merged representative is the value
    whose (root, k) provenance is lexicographically smallest, which makes the
    construction deterministic under near-ties.
    """
    if K < 0:
        raise ValueError(f"K must be >= 0, got {K}")
    if not (0.0 <= b0 <= 1.0):
        raise ValueError(f"b0 must be in [0,1], got {b0}")

    roots = {"b0": b0, "p01": params.p01, "p11": params.p11}
    candidates = []  # (value, root, k)
    for name in _ROOTS:
        x = roots[name]
        for k in range(K + 1):
            candidates.append((x, name, k))
            x = tau_map(x, params)

    # Merge near-duplicates, anchoring each group at its first representative
    # so tolerance chains cannot drift.
    candidates.sort(key=lambda t: (t[0], t[1], t[2]))
    groups: list[list[tuple[float, str, int]]] = []
    for cand in candidates:
        if groups and abs(cand[0] - groups[-1][0][0]) <= DEDUP_TOL:
            groups[-1].append(cand)
        else:
            groups.append([cand])

    points = np.empty(len(groups))
    provenance = []
    prov_index: dict[tuple[str, int], int] = {}
    for i, grp in enumerate(groups):
        canonical = min(grp, key=lambda t: (t[1], t[2]))
        points[i] = canonical[0]
        prov = tuple(sorted((name, k) for _, name, k in grp))
        provenance.append(prov)
        for key in prov:
            prov_index[key] = i

    # Truncated propagation. Below depth K the tau image is an exact grid
    # point (follow any provenance one level deeper). At depth K: tau_next
    # falls back to the point itself, while (tau_lo, tau_hi, tau_w) bracket
    # the true image for value interpolation; tau contracts toward mu1, which
    # lies inside the grid hull, so a bracket always exists.
    n = len(groups)
    tau_next = np.empty(n, dtype=np.int64)
    tau_lo = np.empty(n, dtype=np.int64)
    tau_hi = np.empty(n, dtype=np.int64)
    tau_w = np.zeros(n)
    for i, prov in enumerate(provenance):
        shallow = [(name, k) for name, k in prov if k < K]
        if shallow:
            name, k = shallow[0]
            j = prov_index[(name, k + 1)]
            tau_next[i] = tau_lo[i] = tau_hi[i] = j
            continue
        tau_next[i] = i
        t = tau_map(float(points[i]), params)
        j = int(np.searchsorted(points, t))
        if j < n and abs(float(points[j]) - t) <= DEDUP_TOL:
            tau_lo[i] = tau_hi[i] = j
        elif j > 0 and abs(float(points[j - 1]) - t) <= DEDUP_TOL:
            tau_lo[i] = tau_hi[i] = j - 1
        else:
            lo, hi = j - 1, j
            if hi >= n or lo < 0:
                raise AssertionError("tau image escaped the grid hull")
            gap = float(points[hi]) - float(points[lo])
            tau_lo[i], tau_hi[i] = lo, hi
            tau_w[i] = (t - float(points[lo])) / gap

    for arr in (points, tau_next, tau_lo, tau_hi, tau_w):
        arr.setflags(write=False)
    space = BeliefSpace(
        params=params,
        K=K,
        points=points,
        tau_next=tau_next,
        tau_lo=tau_lo,
        tau_hi=tau_hi,
        tau_w=tau_w,
        provenance=tuple(provenance),
        idx_b0=prov_index[("b0", 0)],
        idx_p01=prov_index[("p01", 0)],
        idx_p11=prov_index[("p11", 0)],
    )
    assert np.all(np.diff(points) > DEDUP_TOL), "grid not strictly increasing"
    return space
