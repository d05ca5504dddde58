"""Property suite behind the `verify` CLI command: threshold structure of the
solved policy, value-function shape, ACOE residual, policy-gradient checks,
and belief calibration. Each property yields one pass/fail line."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .actor_critic import log_policy_prob, policy_probs, score_features
from .model import SystemModel
from .policies import check_value_properties, verify_threshold_structure
from .sim import belief_calibration
from .solvers import RviResult, value_iteration


@dataclass(frozen=True)
class PropertyResult:
    name: str
    passed: bool
    detail: str


def gradient_check(n_cases: int = 100, seed: int = 0, step: float = 1e-6,
                   rel_tol: float = 1e-5, abs_floor: float = 1e-8,
                   max_tx: int = 2) -> tuple[bool, str]:
    """Analytic score features vs central finite differences of log pi.

    Differencing uses the log-domain policy (stable under saturation) and
    actions drawn from the policy itself with probability at least 1e-6.
    Components whose magnitude sits below 1e-3 are judged by the absolute
    gap instead: a 1e-6 step bounds central-difference resolution near 1e-9,
    so relative error is meaningless there.
    """
    rng = np.random.default_rng(seed)
    worst_rel = 0.0
    worst_abs = 0.0
    for _ in range(n_cases):
        m = int(rng.integers(1, max_tx + 1))
        theta = np.concatenate([
            rng.uniform(-1.0, 1.0, m),      # intercepts
            rng.uniform(-0.2, 0.2, m),      # slopes
            rng.uniform(0.0, 5.0, m),       # sharpness
        ])
        q = int(rng.integers(0, 11))
        b = float(rng.uniform(0.0, 1.0))
        probs = policy_probs(theta, q, b)
        candidates = np.flatnonzero(probs >= 1e-6)
        u = int(rng.choice(candidates))

        analytic = score_features(theta, q, b, u)
        for i in range(3 * m):
            tp, tm = theta.copy(), theta.copy()
            tp[i] += step
            tm[i] -= step
            fd = (log_policy_prob(tp, q, b, u)
                  - log_policy_prob(tm, q, b, u)) / (2.0 * step)
            gap = abs(analytic[i] - fd)
            scale = max(abs(fd), abs(analytic[i]))
            if scale >= 1e-3:
                worst_rel = max(worst_rel, gap / scale)
            else:
                worst_abs = max(worst_abs, gap)
    ok = worst_rel <= rel_tol and worst_abs <= abs_floor
    return ok, (f"max relative error {worst_rel:.3e} (tol {rel_tol:g}), "
                f"small-component gap {worst_abs:.3e} (floor {abs_floor:g})")


def score_identity_check(n_cases: int = 100, seed: int = 1,
                         tol: float = 1e-10) -> tuple[bool, str]:
    """E_{u~pi}[score(u)] must vanish at every (theta, q, b)."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_cases):
        m = int(rng.integers(1, 3))
        theta = np.concatenate([
            rng.uniform(-1.0, 1.0, m),
            rng.uniform(-0.5, 0.5, m),
            rng.uniform(0.0, 5.0, m),
        ])
        q = int(rng.integers(0, 11))
        b = float(rng.uniform(0.0, 1.0))
        probs = policy_probs(theta, q, b)
        total = np.zeros(3 * m)
        for u, p in enumerate(probs):
            if p > 0.0:
                total += p * score_features(theta, q, b, u)
        worst = max(worst, float(np.max(np.abs(total))))
    return worst <= tol, f"max |E[score]| {worst:.3e} (tol {tol:g})"


def run_property_suite(model: SystemModel, rvi_result: RviResult, tol: float,
                       beta: float = 0.95, calib_steps: int = 1_000_000,
                       calib_bins: int = 20, seed: int = 0) -> list[PropertyResult]:
    results: list[PropertyResult] = []

    report = verify_threshold_structure(rvi_result.policy, model.beliefs)
    results.append(PropertyResult(
        "threshold-structure", report.passed,
        f"{len(report.violations)} violations below the truncation boundary, "
        f"{len(report.boundary_violations)} at q=Q_max (reported only)"))

    vi = value_iteration(model, beta=beta, tol=tol)
    shape = check_value_properties(vi.values, model.beliefs)
    results.append(PropertyResult(
        "value-concavity-in-belief", shape.concave_in_belief,
        f"{len(shape.concavity_violations)} chord violations (beta={beta})"))
    results.append(PropertyResult(
        "value-monotonicity-in-queue", shape.monotone_in_queue,
        f"{len(shape.monotonicity_violations)} drops along queue axis"))

    acoe_ok = rvi_result.residual <= 10.0 * tol
    results.append(PropertyResult(
        "acoe-residual", acoe_ok,
        f"residual {rvi_result.residual:.3e} vs 10*tol {10.0 * tol:.1e}"))

    ok, detail = gradient_check(seed=seed)
    results.append(PropertyResult("score-gradient-vs-fd", ok, detail))
    ok, detail = score_identity_check(seed=seed + 1)
    results.append(PropertyResult("score-identity", ok, detail))

    calib = belief_calibration(model, rvi_result.policy, T=calib_steps,
                               bins=calib_bins, rng=seed)
    results.append(PropertyResult(
        "belief-calibration", calib.passed,
        f"{calib.checked} bins with enough samples, "
        f"{sum(1 for r in calib.bins if not r.passed)} out of tolerance"))
    return results
