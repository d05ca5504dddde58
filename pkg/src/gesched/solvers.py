"""Exact dynamic programming on the truncated (queue, belief) space.

Two solvers share one dense representation of the dynamics: discounted value
iteration for the beta-discounted problem, and relative value iteration (RVI)
for the long-run average cost. A policy-evaluation variant scores any fixed
stationary policy exactly, which is how the suboptimal baselines are ranked
without Monte-Carlo noise.

Tables are dense arrays indexed [q, belief_index] with the belief ordering of
the model's BeliefSpace. Argmin ties always break toward the smaller action.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import State, SystemModel, instantaneous_cost, transition_law


class SolverError(RuntimeError):
    """Iteration budget exhausted before reaching the requested tolerance."""


@dataclass(frozen=True)
class ViResult:
    values: np.ndarray      # (Q_max+1, n_beliefs), discounted optimal cost
    policy: np.ndarray      # (Q_max+1, n_beliefs), greedy action
    beta: float
    iterations: int
    residual: float         # final sup-norm successive difference


@dataclass(frozen=True)
class RviResult:
    h: np.ndarray           # relative values, h[ref] = 0
    zeta: float             # optimal average cost per slot
    policy: np.ndarray
    ref_state: State
    iterations: int
    residual: float         # ACOE residual max_s |min_u h~(s;u) - h(s) - zeta|


def dense_dynamics(model: SystemModel) -> tuple[np.ndarray, np.ndarray]:
    """Flatten the transition law to per-action matrices.

    Returns (P, c): P[u] is the (S, S) row-stochastic matrix and c[u] the
    S-vector of instantaneous costs, with S = (Q_max+1)*n_beliefs and flat
    index q*n_beliefs + b_idx.
    """
    nq, nb = model.shape
    S = nq * nb
    n_u = model.M_d + 1
    P = np.zeros((n_u, S, S))
    c = np.empty((n_u, S))
    for q in range(nq):
        for bi in range(nb):
            s_flat = q * nb + bi
            for u in range(n_u):
                c[u, s_flat] = instantaneous_cost(q, u, model.cost)
                for (q2, b2), p in transition_law(State(q, bi), u, model):
                    P[u, s_flat, q2 * nb + b2] += p
    return P, c


def discounted_backup(V: np.ndarray, q: int, b_idx: int, u: int, beta: float,
                      model: SystemModel) -> float:
    """One-state one-action discounted backup, straight from the recursion.

    u = 0:  q + beta * sum_i p_i V(Q+(q,i,0), tau(b))
    u >= 1: q + kappa*c(u) + beta * sum_i p_i [b V(Q+(q,i,u), p11)
                                               + (1-b) V(Q+(q,i,0), p01)]
    Kept scalar and explicit as the readable reference for the vectorized
    sweeps; both paths are asserted equal in the tests.
    """
    total = instantaneous_cost(q, u, model.cost)
    for (q2, b2), p in transition_law(State(q, b_idx), u, model):
        total += beta * p * V[q2, b2]
    return total


def _action_values(P: np.ndarray, c: np.ndarray, v_flat: np.ndarray,
                   beta: float) -> np.ndarray:
    """(n_u, S) array of one-step lookahead values c + beta * P v."""
    return c + beta * (P @ v_flat)


def value_iteration(model: SystemModel, beta: float, tol: float = 1e-9,
                    max_iter: int = 100_000) -> ViResult:
    """Discounted value iteration from V = 0 until the sup-norm successive
    difference drops to tol; the returned policy is greedy in the final backup."""
    if not (0.0 < beta < 1.0):
        raise ValueError(f"beta must be in (0,1), got {beta}")
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    P, c = dense_dynamics(model)
    v = np.zeros(model.n_states)
    for it in range(1, max_iter + 1):
        qv = _action_values(P, c, v, beta)
        v_new = qv.min(axis=0)
        diff = float(np.max(np.abs(v_new - v)))
        v = v_new
        if diff <= tol:
            policy = qv.argmin(axis=0)
            return ViResult(values=v.reshape(model.shape),
                            policy=policy.reshape(model.shape).astype(np.int64),
                            beta=beta, iterations=it, residual=diff)
    raise SolverError(
        f"value iteration did not reach tol={tol} in {max_iter} iterations "
        f"(last residual {diff:.3e})"
    )


def _span(x: np.ndarray) -> float:
    return float(np.max(x) - np.min(x))


def _rvi_core(P: np.ndarray, c: np.ndarray, ref_flat: int, tol: float,
              max_iter: int, what: str) -> tuple[np.ndarray, float, int]:
    """Shared RVI loop: h <- min_u(c + P h) - (value at ref).

    Stops on the span seminorm of successive h; since h is pinned to 0 at the
    reference state the span dominates the sup norm, avoiding offset drift.
    """
    h = np.zeros(c.shape[1])
    for it in range(1, max_iter + 1):
        hstar = _action_values(P, c, h, 1.0).min(axis=0)
        zeta = float(hstar[ref_flat])
        h_new = hstar - zeta
        sp = _span(h_new - h)
        h = h_new
        if sp <= tol:
            return h, zeta, it
    raise SolverError(
        f"{what} did not reach tol={tol} in {max_iter} iterations "
        f"(last span {sp:.3e})"
    )


def rvi(model: SystemModel, ref_state: State | None = None, tol: float = 1e-9,
        max_iter: int = 100_000) -> RviResult:
    """Relative value iteration for the average-cost optimality equation.

    Default reference state is (q=0, belief p01), which exists in every grid.
    The reported residual is the ACOE defect after one extra sweep.
    """
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    if ref_state is None:
        ref_state = State(0, model.beliefs.idx_p01)
    nb = model.n_beliefs
    ref_flat = ref_state.q * nb + ref_state.b_idx
    P, c = dense_dynamics(model)
    h, zeta, it = _rvi_core(P, c, ref_flat, tol, max_iter, "RVI")

    qv = _action_values(P, c, h, 1.0)
    residual = float(np.max(np.abs(qv.min(axis=0) - h - zeta)))
    policy = qv.argmin(axis=0)
    return RviResult(h=h.reshape(model.shape),
                     zeta=zeta,
                     policy=policy.reshape(model.shape).astype(np.int64),
                     ref_state=ref_state,
                     iterations=it,
                     residual=residual)


def evaluate_policy_exact(model: SystemModel, policy: np.ndarray,
                          ref_state: State | None = None, tol: float = 1e-9,
                          max_iter: int = 100_000) -> float:
    """Long-run average cost of a fixed policy, by RVI with the min replaced
    by the policy's action. Raises SolverError if the induced chain makes the
    iteration fail to settle (e.g. pathological reducibility)."""
    if ref_state is None:
        ref_state = State(0, model.beliefs.idx_p01)
    nb = model.n_beliefs
    ref_flat = ref_state.q * nb + ref_state.b_idx
    P, c = dense_dynamics(model)
    pol_flat = np.asarray(policy, dtype=np.int64).reshape(-1)
    if pol_flat.shape[0] != c.shape[1]:
        raise ValueError("policy shape does not match the model's state space")
    if pol_flat.min() < 0 or pol_flat.max() > model.M_d:
        raise ValueError("policy contains actions outside 0..M_d")
    idx = np.arange(c.shape[1])
    P_pi = P[pol_flat, idx, :]
    c_pi = c[pol_flat, idx]

    h = np.zeros(c.shape[1])
    for _ in range(1, max_iter + 1):
        hstar = c_pi + P_pi @ h
        zeta = float(hstar[ref_flat])
        h_new = hstar - zeta
        sp = _span(h_new - h)
        h = h_new
        if sp <= tol:
            return zeta
    raise SolverError(
        f"policy evaluation did not reach tol={tol} in {max_iter} iterations "
        f"(last span {sp:.3e}); the induced chain may be reducible"
    )


def greedy_policy_from_h(model: SystemModel, h: np.ndarray,
                         use_reward: bool = False) -> np.ndarray:
    """Greedy policy for relative values h, in cost (argmin) or equivalent
    reward (argmax of offset - cost) form; both must coincide state by state."""
    P, c = dense_dynamics(model)
    qv = _action_values(P, c, np.asarray(h, dtype=float).reshape(-1), 1.0)
    if use_reward:
        # reward-form lookahead: (offset - c) + P h_r with h_r = -h
        rv = (model.reward_offset - c) + P @ (-np.asarray(h, dtype=float).reshape(-1))
        pol = rv.argmax(axis=0)
    else:
        pol = qv.argmin(axis=0)
    return pol.reshape(model.shape).astype(np.int64)
