"""Model-free actor-critic learner over parametric threshold policies.

The actor parameter theta (length 3*M_d) encodes, for each boundary index
j = 1..M_d: an intercept theta[j-1], a queue slope theta[M_d+j-1] (boundary
tau_j(q) = intercept + slope*q) and a sigmoid sharpness theta[2*M_d+j-1].
The policy transmits according to soft indicator features
f_j = logistic((b - tau_j(q)) * sharpness_j), composed so that probabilities
always sum to one. The critic is linear in the compatible features
phi = grad log pi, trained by average-reward TD(1) with an eligibility trace
that resets whenever the chain revisits the recurrent state (q=2, b=p11).

The learner sees the true partially observed system: a hidden channel state
drives ACK/NACK outcomes, the belief evolves untruncated (continuous values),
and only the queue stays clipped at Q_max.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import step_channel, tau_map
from .model import SystemModel, queue_next

# Eligibility-trace reset state (q~, b~); the belief component is the
# channel's p11, compared at this absolute tolerance (post-transmission
# beliefs are exactly p01 or p11, so the test is effectively exact).
TRACE_RESET_Q = 2
TRACE_RESET_BELIEF_TOL = 1e-12


class NumericDivergenceError(RuntimeError):
    """A learner parameter became non-finite (step size too large, etc.)."""


def _logistic(x: float) -> float:
    # Branch on sign so extreme sharpness saturates to {0,1} without overflow.
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    z = math.exp(x)
    return z / (1.0 + z)


def _n_boundaries(theta: np.ndarray) -> int:
    m, rem = divmod(len(theta), 3)
    if rem != 0 or m < 1:
        raise ValueError(f"theta must have length 3*M_d, got {len(theta)}")
    return m


def boundary(theta: np.ndarray, q: float, j: int) -> float:
    """Linear decision boundary tau_j(q) = theta_j + theta_{M_d+j} * q."""
    m = _n_boundaries(theta)
    return float(theta[j - 1] + theta[m + j - 1] * q)


def sigmoid_feature(theta: np.ndarray, q: float, b: float, j: int) -> float:
    """Soft indicator f_j(q,b) = logistic((b - tau_j(q)) * sharpness_j)."""
    m = _n_boundaries(theta)
    if not (1 <= j <= m):
        raise ValueError(f"boundary index {j} outside 1..{m}")
    return _logistic((b - boundary(theta, q, j)) * float(theta[2 * m + j - 1]))


def policy_probs(theta: np.ndarray, q: float, b: float) -> np.ndarray:
    """Action distribution over {0..M_d}: pi(j) = f_j * prod_{i>j}(1 - f_i),
    pi(0) = prod_i (1 - f_i). Entries lie in [0,1] and sum to one."""
    m = _n_boundaries(theta)
    probs = np.empty(m + 1)
    tail = 1.0
    for j in range(m, 0, -1):
        f = sigmoid_feature(theta, q, b, j)
        probs[j] = f * tail
        tail *= 1.0 - f
    probs[0] = tail
    return probs


def _softplus(x: float) -> float:
    # log(1 + exp(x)) without overflow or cancellation.
    if x > 0.0:
        return x + math.log1p(math.exp(-x))
    return math.log1p(math.exp(x))


def log_policy_prob(theta: np.ndarray, q: float, b: float, u: int) -> float:
    """log pi(u|q,b) in the log domain: log f_j = -softplus(-x_j) and
    log(1 - f_j) = -softplus(x_j), so saturated sigmoids stay well
    conditioned (needed for clean finite-difference checks); -inf when
    pi(u) = 0 exactly."""
    m = _n_boundaries(theta)
    if not (0 <= u <= m):
        raise ValueError(f"action {u} outside 0..{m}")
    total = 0.0
    for j in range(max(u, 1), m + 1):
        x = (b - boundary(theta, q, j)) * float(theta[2 * m + j - 1])
        total += -_softplus(-x) if j == u else -_softplus(x)
    return total


def sample_action(probs: np.ndarray, rng: np.random.Generator) -> int:
    """Inverse-CDF draw consuming one uniform; zero-probability actions are
    never selected (the fallback lands on the last positive entry)."""
    r = rng.random()
    acc = 0.0
    last_pos = 0
    for u in range(len(probs)):
        p = probs[u]
        if p > 0.0:
            last_pos = u
            acc += p
            if r < acc:
                return u
    return last_pos


def _score_into(theta: np.ndarray, q: float, b: float, u: int,
                out: np.ndarray) -> None:
    """Closed-form grad log pi(u|q,b) written into out (length 3*M_d).

    Derivation: with x_j = (b - tau_j(q)) * s_j and f_j = logistic(x_j),
    log pi(u) = log f_u + sum_{j>u} log(1 - f_j)   (u >= 1)
    log pi(0) = sum_j log(1 - f_j)
    so d log pi / d x_j is (1 - f_u) at j = u, -f_j for j > u (all j when
    u = 0), and 0 for j < u; the theta components follow by the chain rule.
    This formula stays finite even where a saturated sigmoid makes pi(u) = 0.
    """
    m = _n_boundaries(theta)
    out[:] = 0.0
    for j in range(max(u, 1), m + 1):
        f = sigmoid_feature(theta, q, b, j)
        g = (1.0 - f) if j == u else -f
        s = float(theta[2 * m + j - 1])
        out[j - 1] = -g * s
        out[m + j - 1] = -g * s * q
        out[2 * m + j - 1] = g * (b - boundary(theta, q, j))


def score_features(theta: np.ndarray, q: float, b: float, u: int) -> np.ndarray:
    """Compatible features phi(q,b,u) = grad_theta log pi_theta(u|q,b).

    Rejects actions with zero probability, where log pi is undefined.
    """
    m = _n_boundaries(theta)
    if not (0 <= u <= m):
        raise ValueError(f"action {u} outside 0..{m}")
    if policy_probs(theta, q, b)[u] == 0.0:
        raise ValueError(f"action {u} has zero probability at (q={q}, b={b})")
    out = np.empty(3 * m)
    _score_into(theta, q, b, u, out)
    return out


def advantage_approx(w: np.ndarray, phi: np.ndarray) -> float:
    """Linear advantage estimate: inner product of critic weights and features."""
    return float(np.dot(w, phi))


@dataclass
class LearnerState:
    """Everything the online loop carries between steps.

    (q, b) is the current observed state, u the action pending execution,
    s_hidden the true channel state of the current slot, z the eligibility
    trace and r_hat the running average-reward estimate.
    """

    theta: np.ndarray
    w: np.ndarray
    r_hat: float
    z: np.ndarray
    q: int
    b: float
    u: int
    s_hidden: int
    t: int = 0


def ac_step(state: LearnerState, model: SystemModel, alpha_theta: float,
            alpha_w: float, rng: np.random.Generator) -> tuple[LearnerState, float]:
    """One iteration of the learning loop; returns (new state, observed reward).

    Executes the pending action, advances the true system (draw order per
    step: channel transition, arrival, action sampling), then applies the
    average-reward, critic, trace and actor updates in that order. Scores of
    zero-probability actions use the saturated-limit formula, which keeps
    every update finite.
    """
    if alpha_theta <= 0.0 or alpha_w <= 0.0:
        raise ValueError("step sizes must be positive")
    ch = model.channel
    cost = model.cost

    # Execute u(t-1) in slot t-1: the hidden state decides ACK vs NACK.
    r = model.reward_offset - (state.q + cost.kappa * cost.c[state.u])
    s_prev = state.s_hidden
    s_next = step_channel(s_prev, ch, rng)
    a = model.arrivals.sample(rng)
    delivered = state.u if s_prev == 1 else 0
    q_new = queue_next(state.q, a, delivered, model.Q_max)
    if state.u > 0:
        b_new = ch.p11 if s_prev == 1 else ch.p01
    else:
        b_new = tau_map(state.b, ch)

    theta, w = state.theta, state.w
    probs = policy_probs(theta, q_new, b_new)
    u_new = sample_action(probs, rng)

    n = len(theta)
    phi_new = np.empty(n)
    phi_old = np.empty(n)
    _score_into(theta, q_new, b_new, u_new, phi_new)
    _score_into(theta, state.q, state.b, state.u, phi_old)

    rho_new = advantage_approx(w, phi_new)
    rho_old = advantage_approx(w, phi_old)
    td = r - state.r_hat + rho_new - rho_old

    r_hat_new = state.r_hat + alpha_w * (r - state.r_hat)
    w_new = w + (alpha_w * td) * state.z
    if q_new == TRACE_RESET_Q and abs(b_new - ch.p11) <= TRACE_RESET_BELIEF_TOL:
        z_new = phi_new.copy()
    else:
        z_new = state.z + phi_new
    theta_new = theta + (alpha_theta * rho_new) * z_new

    if not (math.isfinite(r_hat_new)
            and np.isfinite(theta_new).all()
            and np.isfinite(w_new).all()
            and np.isfinite(z_new).all()):
        raise NumericDivergenceError(
            f"non-finite learner parameters (r_hat={r_hat_new!r}, "
            f"|theta|max={np.max(np.abs(theta_new)):.3e})"
        )

    new_state = LearnerState(theta=theta_new, w=w_new, r_hat=r_hat_new,
                             z=z_new, q=q_new, b=b_new, u=u_new,
                             s_hidden=s_next, t=state.t + 1)
    return new_state, r


@dataclass(frozen=True)
class TrainResult:
    theta: np.ndarray
    w: np.ndarray
    r_hat: float
    curve: np.ndarray              # rows (t, r_hat at t)
    boundaries: np.ndarray         # (Q_max+1, M_d): learned tau_j(q)
    final_window_reward: float     # mean observed reward over the last 10%
    steps: int
    seed: int


def train(model: SystemModel, T: int, alpha_theta: float, alpha_w: float,
          seed: int, Q0: int = 5, b0: float = 0.5, record_every: int = 100,
          window_frac: float = 0.1) -> TrainResult:
    """Run the full learning loop for T steps with a fixed seed.

    Initialization draws, in order: theta ~ U[0,1]^{3M_d}, w ~ U[0,1]^{3M_d},
    hidden channel state from the stationary distribution, then the first
    action. r_hat starts at 0. The average-reward curve is recorded every
    record_every steps (and at t = T), giving ceil(T / record_every) rows.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    m = model.M_d
    rng = np.random.default_rng(seed)
    theta0 = rng.random(3 * m)
    w0 = rng.random(3 * m)
    s0 = 1 if rng.random() < model.channel.mu1 else 0
    u0 = sample_action(policy_probs(theta0, Q0, b0), rng)
    z0 = np.empty(3 * m)
    _score_into(theta0, Q0, b0, u0, z0)
    state = LearnerState(theta=theta0, w=w0, r_hat=0.0, z=z0,
                         q=Q0, b=b0, u=u0, s_hidden=s0, t=0)

    window_start = T - max(1, int(round(window_frac * T)))
    window_sum = 0.0
    window_n = 0
    curve = []
    for t in range(1, T + 1):
        try:
            state, r = ac_step(state, model, alpha_theta, alpha_w, rng)
        except NumericDivergenceError as e:
            raise NumericDivergenceError(f"diverged at step {t}: {e}") from e
        if t > window_start:
            window_sum += r
            window_n += 1
        if t % record_every == 0 or t == T:
            curve.append((t, state.r_hat))

    qs = np.arange(model.Q_max + 1)
    boundaries = np.empty((model.Q_max + 1, m))
    for j in range(1, m + 1):
        boundaries[:, j - 1] = state.theta[j - 1] + state.theta[m + j - 1] * qs

    return TrainResult(theta=state.theta, w=state.w, r_hat=state.r_hat,
                       curve=np.asarray(curve), boundaries=boundaries,
                       final_window_reward=window_sum / window_n,
                       steps=T, seed=seed)
