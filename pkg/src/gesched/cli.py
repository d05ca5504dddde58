"""Experiment command line: solve | learn | simulate | sweep | verify.

Every command reads one YAML config (all blocks optional, defaults match the
reference setup), writes CSVs into --out, and returns a process exit code:
0 success, 1 property failure, 2 config error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .actor_critic import NumericDivergenceError, train
from .config import (ConfigError, ExperimentConfig, build_from_config,
                     load_config, parse_config, resolve_ref_state, to_dict)
from .csvio import config_hash, write_csv, table_rows
from .model import UnstableModelError
from .policies import (baseline_always_one, baseline_iid_mdp,
                       extract_thresholds, verify_threshold_structure)
from .sim import RngSpec, simulate
from .solvers import SolverError, evaluate_policy_exact, rvi, value_iteration
from .verify import run_property_suite

EXIT_OK = 0
EXIT_PROPERTY = 1
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

log = logging.getLogger("gesched")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gesched",
                                description="Transmission scheduling experiments "
                                            "on a two-state Markov channel")
    p.add_argument("--config", type=Path, default=None,
                   help="YAML experiment config (defaults used when omitted)")
    p.add_argument("--out", type=Path, default=None,
                   help="output directory (default: config output.dir)")
    p.add_argument("--seed", type=int, default=None,
                   help="override the learner/simulation master seed")
    p.add_argument("--allow-unstable", action="store_true",
                   help="run even when M_d*mu1 <= E[A]")
    p.add_argument("--workers", type=int, default=1,
                   help="parallel workers for sweep grid points")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("solve", help="exact DP solve (RVI, or VI with --beta)")
    sp.add_argument("--beta", type=float, default=None,
                    help="discount factor: solve the discounted problem instead")

    sub.add_parser("learn", help="actor-critic training run")

    sp = sub.add_parser("simulate", help="Monte-Carlo policy evaluation")
    sp.add_argument("--policy", required=True,
                    choices=["rvi", "vi", "always-one", "iid-mdp", "theta-file"])
    sp.add_argument("--theta-file", type=Path, default=None,
                    help="theta CSV from a learn run (policy=theta-file)")
    sp.add_argument("--beta", type=float, default=None,
                    help="discount factor for policy=vi")

    sub.add_parser("sweep", help="parameter sweep comparing policies")
    sub.add_parser("verify", help="run the numeric property suite")
    return p


def _meta(cfg: ExperimentConfig, seed: int) -> dict:
    return {"config": config_hash(to_dict(cfg)), "seed": seed}


def _solve_tables(cfg, model, beta, out, meta):
    """Solve, write value/policy/threshold/structure CSVs, return summary rows."""
    ref = resolve_ref_state(cfg, model)
    if beta is not None:
        res = value_iteration(model, beta=beta, tol=cfg.solver.tol,
                              max_iter=cfg.solver.max_iter)
        values, policy = res.values, res.policy
        summary = [("mode", "discounted-vi"), ("beta", beta),
                   ("iterations", res.iterations), ("residual", res.residual)]
    else:
        res = rvi(model, ref_state=ref, tol=cfg.solver.tol,
                  max_iter=cfg.solver.max_iter)
        values, policy = res.h, res.policy
        summary = [("mode", "rvi"), ("zeta", res.zeta),
                   ("avg_reward", model.reward_offset - res.zeta),
                   ("iterations", res.iterations), ("residual", res.residual),
                   ("ref_q", ref.q), ("ref_belief", float(model.beliefs.points[ref.b_idx]))]

    write_csv(out / "value.csv", ["q", "belief", "value"],
              table_rows(model, values), meta)
    write_csv(out / "policy.csv", ["q", "belief", "action"],
              table_rows(model, policy), meta)

    report = verify_threshold_structure(policy, model.beliefs)
    rows = [(v.q, v.belief_index, v.kind, "boundary" if bdry else "interior",
             "|".join(str(a) for a in v.row))
            for bdry, vs in ((False, report.violations), (True, report.boundary_violations))
            for v in vs]
    write_csv(out / "structure.csv",
              ["q", "belief_index", "kind", "region", "actions"], rows, meta)
    summary.append(("structure", "pass" if report.passed else "fail"))
    summary.append(("boundary_violations", len(report.boundary_violations)))

    if not report.violations and not report.boundary_violations:
        thr = extract_thresholds(policy, model.beliefs, max_tx=model.M_d)
        trows = [(q, j, float(thr.taus[q, j]))
                 for q in range(thr.taus.shape[0])
                 for j in range(thr.taus.shape[1])]
        write_csv(out / "thresholds.csv", ["q", "j", "tau"], trows, meta)
    return summary, report


def cmd_solve(cfg: ExperimentConfig, out: Path, args) -> int:
    model = build_from_config(cfg, allow_unstable=args.allow_unstable)
    beta = args.beta if args.beta is not None else cfg.solver.beta
    seed = args.seed if args.seed is not None else cfg.learner.seed
    meta = _meta(cfg, seed)
    summary, _ = _solve_tables(cfg, model, beta, out, meta)
    write_csv(out / "summary.csv", ["key", "value"], summary, meta)
    for k, v in summary:
        print(f"{k}: {v}")
    return EXIT_OK


def cmd_learn(cfg: ExperimentConfig, out: Path, args) -> int:
    model = build_from_config(cfg, allow_unstable=args.allow_unstable)
    lc = cfg.learner
    seed = args.seed if args.seed is not None else lc.seed
    meta = _meta(cfg, seed)
    result = train(model, T=lc.steps, alpha_theta=lc.alpha_theta,
                   alpha_w=lc.alpha_w, seed=seed, Q0=lc.q0, b0=lc.b0,
                   record_every=lc.record_every)
    write_csv(out / "learning_curve.csv", ["t", "r_hat"],
              [(int(t), float(r)) for t, r in result.curve], meta)
    write_csv(out / "theta.csv", ["index", "value"],
              list(enumerate(float(x) for x in result.theta)), meta)
    brows = [(q, j + 1, float(result.boundaries[q, j]))
             for q in range(result.boundaries.shape[0])
             for j in range(result.boundaries.shape[1])]
    write_csv(out / "boundaries.csv", ["q", "j", "tau"], brows, meta)
    summary = [("steps", result.steps), ("seed", seed),
               ("final_window_reward", result.final_window_reward),
               ("final_r_hat", result.r_hat)]
    write_csv(out / "summary.csv", ["key", "value"], summary, meta)
    print(f"final 10%-window mean reward: {result.final_window_reward:.6f}")
    return EXIT_OK


def _read_theta(path: Path) -> np.ndarray:
    values = {}
    for line in path.read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#") or line.startswith("index"):
            continue
        idx, val = line.split(",")
        values[int(idx)] = float(val)
    return np.array([values[i] for i in range(len(values))])


def _policy_for_simulation(cfg, model, args):
    if args.policy == "rvi":
        return rvi(model, ref_state=resolve_ref_state(cfg, model),
                   tol=cfg.solver.tol, max_iter=cfg.solver.max_iter).policy
    if args.policy == "vi":
        beta = args.beta if args.beta is not None else cfg.solver.beta
        if beta is None:
            raise ConfigError("policy=vi needs --beta or solver.beta")
        return value_iteration(model, beta=beta, tol=cfg.solver.tol,
                               max_iter=cfg.solver.max_iter).policy
    if args.policy == "always-one":
        return baseline_always_one(model)
    if args.policy == "iid-mdp":
        return baseline_iid_mdp(model, tol=cfg.solver.tol,
                                max_iter=cfg.solver.max_iter)
    if args.policy == "theta-file":
        if args.theta_file is None:
            raise ConfigError("policy=theta-file needs --theta-file")
        if not args.theta_file.exists():
            raise ConfigError(f"theta file not found: {args.theta_file}")
        return _read_theta(args.theta_file)
    raise ConfigError(f"unknown policy source {args.policy!r}")


def cmd_simulate(cfg: ExperimentConfig, out: Path, args) -> int:
    model = build_from_config(cfg, allow_unstable=args.allow_unstable)
    policy = _policy_for_simulation(cfg, model, args)
    sc = cfg.sim
    seed = args.seed if args.seed is not None else sc.seed
    meta = _meta(cfg, seed)
    header = ["run", "steps", "mean_reward", "mean_cost", "stderr_cost",
              "mean_queue", "success_rate"]
    header += [f"action_freq_{u}" for u in range(model.M_d + 1)]
    rows = []
    for run in range(sc.runs):
        st = simulate(policy, model, T=sc.steps, rng=RngSpec(seed, run),
                      Q0=sc.q0, burn_in=sc.burn_in)
        rows.append((run, st.steps, st.mean_reward, st.mean_cost,
                     st.stderr_cost, st.mean_queue, st.success_rate,
                     *st.action_freqs))
        print(f"run {run}: mean reward {st.mean_reward:.6f} "
              f"(+- {3 * st.stderr_cost:.6f} at 3 sigma)")
    write_csv(out / "runstats.csv", header, rows, meta)
    return EXIT_OK


def _apply_sweep_value(cfg: ExperimentConfig, param: str, v: float) -> ExperimentConfig:
    d = to_dict(cfg)
    if param == "kappa":
        d["model"]["kappa"] = float(v)
    elif param == "p1":
        if len(d["model"]["arrival_probs"]) != 2:
            raise ConfigError("a p1 sweep requires a two-point arrival "
                              "distribution (M_a = 1)")
        d["model"]["arrival_probs"] = [1.0 - float(v), float(v)]
    elif param == "delta_p":
        d["model"]["p01"] = d["model"]["p11"] - float(v)
    elif param == "p11":
        d["model"]["p11"] = float(v)
    else:
        raise ConfigError(f"unknown sweep parameter {param!r}")
    return parse_config(d)


def _sweep_point(payload: tuple) -> tuple[float, list[tuple], str | None]:
    """Evaluate one grid point; returns (value, rows, warning-or-None)."""
    cfg_dict, param, value, seed, include_ac, runs = payload
    cfg = parse_config(cfg_dict)
    try:
        point_cfg = _apply_sweep_value(cfg, param, value)
        model = build_from_config(point_cfg, allow_unstable=False)
    except UnstableModelError as e:
        return value, [], f"skipping {param}={value}: {e}"

    offset = model.reward_offset
    rows: list[tuple] = []
    res = rvi(model, tol=point_cfg.solver.tol, max_iter=point_cfg.solver.max_iter)
    rows.append((param, value, "optimal-rvi", offset - res.zeta, res.zeta, 0.0))
    for name, pol in (("always-one", baseline_always_one(model)),
                      ("iid-mdp", baseline_iid_mdp(model))):
        zeta = evaluate_policy_exact(model, pol, tol=point_cfg.solver.tol,
                                     max_iter=point_cfg.solver.max_iter)
        rows.append((param, value, name, offset - zeta, zeta, 0.0))
    if include_ac:
        lc = point_cfg.learner
        rewards = [train(model, T=lc.steps, alpha_theta=lc.alpha_theta,
                         alpha_w=lc.alpha_w, seed=seed + r, Q0=lc.q0,
                         b0=lc.b0, record_every=lc.record_every).final_window_reward
                   for r in range(runs)]
        mean_r = float(np.mean(rewards))
        stderr = float(np.std(rewards, ddof=1) / np.sqrt(len(rewards))) if len(rewards) > 1 else 0.0
        rows.append((param, value, "actor-critic", mean_r, offset - mean_r, stderr))
    return value, rows, None


def cmd_sweep(cfg: ExperimentConfig, out: Path, args) -> int:
    sw = cfg.sweep
    seed = args.seed if args.seed is not None else cfg.learner.seed
    meta = _meta(cfg, seed)
    payloads = [(to_dict(cfg), sw.parameter, float(v), seed, sw.include_ac,
                 sw.runs_per_point) for v in sw.values]
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            results = list(pool.map(_sweep_point, payloads))
    else:
        results = [_sweep_point(p) for p in payloads]

    rows = []
    for value, point_rows, warning in results:   # grid order is preserved
        if warning:
            log.warning(warning)
        rows.extend(point_rows)
    write_csv(out / "sweep.csv",
              ["parameter", "value", "policy", "avg_reward", "avg_cost", "stderr"],
              rows, meta)
    for r in rows:
        print(f"{r[0]}={r[1]:g} {r[2]}: avg reward {r[3]:.6f}")
    return EXIT_OK


def cmd_verify(cfg: ExperimentConfig, out: Path, args) -> int:
    model = build_from_config(cfg, allow_unstable=args.allow_unstable)
    seed = args.seed if args.seed is not None else cfg.learner.seed
    meta = _meta(cfg, seed)
    res = rvi(model, ref_state=resolve_ref_state(cfg, model),
              tol=cfg.solver.tol, max_iter=cfg.solver.max_iter)
    results = run_property_suite(model, res, tol=cfg.solver.tol,
                                 calib_steps=cfg.sim.steps,
                                 calib_bins=cfg.sim.bins, seed=seed)
    write_csv(out / "verify.csv", ["property", "passed", "detail"],
              [(r.name, r.passed, r.detail) for r in results], meta)
    all_ok = True
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name}: {r.detail}")
        all_ok &= r.passed
    return EXIT_OK if all_ok else EXIT_PROPERTY


_COMMANDS = {
    "solve": cmd_solve,
    "learn": cmd_learn,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "verify": cmd_verify,
}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else ExperimentConfig()
        out = args.out if args.out is not None else Path(cfg.output.dir)
        out.mkdir(parents=True, exist_ok=True)
        return _COMMANDS[args.command](cfg, out, args)
    except (ConfigError, UnstableModelError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, NumericDivergenceError) as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    sys.exit(main())
