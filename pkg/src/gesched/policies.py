"""Threshold-policy machinery: structure verification for solved policies,
threshold extraction, the two suboptimal baselines, and numeric checks of the
value-function shape (concavity in belief, monotonicity in queue).

A policy table has threshold structure when every queue row, read along the
sorted belief grid, is a nondecreasing action sequence; that single condition
certifies both contiguity of each decision region and the "transmit more only
when the channel is more likely good" ordering.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .channel import BeliefSpace
from .model import SystemModel
from .solvers import rvi


class Violation(NamedTuple):
    q: int
    belief_index: int
    kind: str              # "non-contiguous" or "non-monotone"
    row: tuple[int, ...]   # full action pattern of the offending q-row


@dataclass(frozen=True)
class StructureReport:
    passed: bool                             # no violations for q < Q_max
    violations: tuple[Violation, ...]
    boundary_violations: tuple[Violation, ...]  # q = Q_max row, reported only


def _row_violations(q: int, row: np.ndarray) -> list[Violation]:
    out = []
    pattern = tuple(int(a) for a in row)
    for i in range(1, len(row)):
        if row[i] < row[i - 1]:
            # A decrease back into an action seen earlier splits that action's
            # decision region; a decrease to a fresh action violates ordering.
            kind = "non-contiguous" if row[i] in row[:i] else "non-monotone"
            out.append(Violation(q, i, kind, pattern))
    return out


def verify_threshold_structure(policy: np.ndarray, beliefs: BeliefSpace) -> StructureReport:
    """Check every q-row is nondecreasing along the sorted belief grid.

    The truncation boundary row q = Q_max is reported separately and does not
    affect the pass flag (truncation can distort structure there).
    """
    policy = np.asarray(policy)
    q_max = policy.shape[0] - 1
    violations: list[Violation] = []
    boundary: list[Violation] = []
    for q in range(policy.shape[0]):
        found = _row_violations(q, policy[q])
        (boundary if q == q_max else violations).extend(found)
    return StructureReport(passed=not violations,
                           violations=tuple(violations),
                           boundary_violations=tuple(boundary))


@dataclass(frozen=True)
class ThresholdPolicy:
    """Per-queue belief thresholds tau[q, j], j = 0..M_d+1.

    tau[q, 0] = 0 and tau[q, M_d+1] = 1; action j is used when the belief
    falls in [tau[q, j], tau[q, j+1]) (last interval closed at 1). brackets
    stores the two grid points each interior threshold was placed between
    (NaN when a region is empty or unbounded on the grid).
    """

    taus: np.ndarray       # (n_q, M_d + 2)
    brackets: np.ndarray = field(repr=False)   # (n_q, M_d, 2)

    @property
    def max_tx(self) -> int:
        return self.taus.shape[1] - 2

    def action(self, q: int, b: float) -> int:
        row = self.taus[q]
        u = 0
        for j in range(1, self.max_tx + 1):
            if b >= row[j]:
                u = j
        return u

    def as_table(self, beliefs: BeliefSpace) -> np.ndarray:
        """Re-materialize the policy on the belief grid via the interval rule."""
        n_q = self.taus.shape[0]
        table = np.empty((n_q, len(beliefs)), dtype=np.int64)
        for q in range(n_q):
            for bi, b in enumerate(beliefs.points):
                table[q, bi] = self.action(q, float(b))
        return table


def extract_thresholds(policy: np.ndarray, beliefs: BeliefSpace,
                       max_tx: int | None = None) -> ThresholdPolicy:
    """Recover thresholds from a structured policy table.

    tau[q, j] is the midpoint between the largest grid belief with action < j
    and the smallest with action >= j; 0 when every grid point acts >= j and
    1 when none does. Empty regions collapse to equal consecutive thresholds.
    max_tx defaults to the largest action present; pass the model's M_d when
    the policy may not exercise its full action range.
    """
    policy = np.asarray(policy)
    n_q, n_b = policy.shape
    report_rows = [q for q in range(n_q) if _row_violations(q, policy[q])]
    if report_rows:
        raise ValueError(f"policy is not threshold-structured (rows {report_rows})")

    m_d = max(int(policy.max()), 1) if max_tx is None else int(max_tx)
    if m_d < int(policy.max()):
        raise ValueError(f"max_tx={m_d} below largest action {int(policy.max())}")
    pts = beliefs.points
    taus = np.empty((n_q, m_d + 2))
    taus[:, 0] = 0.0
    taus[:, -1] = 1.0
    brackets = np.full((n_q, m_d, 2), np.nan)
    for q in range(n_q):
        row = policy[q]
        for j in range(1, m_d + 1):
            above = np.flatnonzero(row >= j)
            if above.size == 0:
                taus[q, j] = 1.0
            elif above[0] == 0:
                taus[q, j] = 0.0
            else:
                lo, hi = float(pts[above[0] - 1]), float(pts[above[0]])
                taus[q, j] = 0.5 * (lo + hi)
                brackets[q, j - 1] = (lo, hi)
    return ThresholdPolicy(taus=taus, brackets=brackets)


def baseline_always_one(model: SystemModel, idle_when_empty: bool = False) -> np.ndarray:
    """Suboptimal policy 1: one packet per slot regardless of the state.

    Taken literally, c(1) is paid even on an empty queue; idle_when_empty
    switches to the charitable reading that idles at q = 0.
    """
    if model.M_d < 1:
        raise ValueError("always-one baseline needs M_d >= 1")
    policy = np.ones(model.shape, dtype=np.int64)
    if idle_when_empty:
        policy[0, :] = 0
    return policy


def baseline_iid_mdp(model: SystemModel, tol: float = 1e-9,
                     max_iter: int = 100_000) -> np.ndarray:
    """Suboptimal policy 2: pretend the channel is i.i.d. with P(good) = mu1.

    Under that assumption the belief is constantly mu1 and the problem
    collapses to a queue-only average-cost MDP, solved here by RVI on a
    single-belief model; the resulting q -> u map is lifted belief-free.
    """
    from .channel import ChannelParams
    from .model import build_model

    mu1 = model.channel.mu1
    iid_model = build_model(
        channel=ChannelParams(p01=mu1, p11=mu1),
        arrivals=model.arrivals,
        cost=model.cost,
        Q_max=model.Q_max,
        K=0,
        b0=mu1,
        allow_unstable=True,   # same margin as the true model, already gated
    )
    assert iid_model.n_beliefs == 1
    res = rvi(iid_model, tol=tol, max_iter=max_iter)
    per_queue = res.policy[:, 0]
    return np.repeat(per_queue[:, None], model.n_beliefs, axis=1)


@dataclass(frozen=True)
class ValuePropertyReport:
    concave_in_belief: bool
    monotone_in_queue: bool
    concavity_violations: tuple[tuple[int, int, float], ...]  # (q, b_idx, defect)
    monotonicity_violations: tuple[tuple[int, int, float], ...]

    @property
    def passed(self) -> bool:
        return self.concave_in_belief and self.monotone_in_queue


def check_value_properties(V: np.ndarray, beliefs: BeliefSpace,
                           concavity_slack: float = 1e-8,
                           monotonicity_slack: float = 1e-10) -> ValuePropertyReport:
    """Numeric shape checks on a converged value table.

    Concavity: on each q-row, every interior grid value must sit on or above
    the chord through its neighbors (up to concavity_slack). Monotonicity:
    each belief column must be nondecreasing in q (up to monotonicity_slack).
    """
    V = np.asarray(V, dtype=float)
    b = np.asarray(beliefs.points, dtype=float)
    conc: list[tuple[int, int, float]] = []
    mono: list[tuple[int, int, float]] = []

    if V.shape[1] >= 3:
        b_lo, b_mid, b_hi = b[:-2], b[1:-1], b[2:]
        w = (b_mid - b_lo) / (b_hi - b_lo)
        for q in range(V.shape[0]):
            chord = (1.0 - w) * V[q, :-2] + w * V[q, 2:]
            defect = chord - V[q, 1:-1]
            for i in np.flatnonzero(defect > concavity_slack):
                conc.append((q, int(i) + 1, float(defect[i])))

    drops = V[:-1, :] - V[1:, :]
    for q, bi in zip(*np.nonzero(drops > monotonicity_slack)):
        mono.append((int(q) + 1, int(bi), float(drops[q, bi])))

    return ValuePropertyReport(
        concave_in_belief=not conc,
        monotone_in_queue=not mono,
        concavity_violations=tuple(conc),
        monotonicity_violations=tuple(mono),
    )
