"""Command-line front end for scenario files and batch runs.

Subcommands: ``check`` (validation + solvability), ``solve-periodic`` (true
state under a forcing), ``estimate`` (offline/online estimation with optional
trajectory dumps), ``simulate`` (synthetic observations), ``oracle`` (the
cross-validation battery), ``compare`` (Monte-Carlo guarantee check).

Reports are JSON on stdout or ``--out``; trajectories are CSV.  Exit codes:
0 success, 2 invalid input (scenario validation, mismatched data, budgets),
3 solvability or conditioning failures, 4 I/O and parse errors.
"""
from __future__ import annotations

import argparse
import concurrent.futures
import hashlib
import json
import os
import sys
import time

import numpy as np

from . import kernel
from .algebraic import compare_solutions, solve_pointwise
from .errors import (
    BudgetExceeded,
    DegenerateBVP,
    HasIntervals,
    NotSolvable,
    NumericalInconsistency,
    ObservationMismatch,
    PerimaxError,
    ScenarioFormatError,
    SingularFundamental,
    SingularReduction,
)
from .estimator import apply_estimator, solve_offline, solve_online
from .oracle import (
    brute_force_minimize,
    build_quadratic_model,
    generalized_cbs,
    worst_case_f,
    worst_case_noise,
)
from .providers import function_from_json
from .scenario import load_scenario, validate_scenario
from .sim import (
    make_observations,
    observations_from_dict,
    observations_to_dict,
    sample_f_in_G1,
    sample_noise,
    simulate_truth,
)
from .workspace import prepare

__all__ = ["run", "main"]

_EXIT_INVALID = 2
_EXIT_UNSOLVABLE = 3
_EXIT_IO = 4


def _pair(z) -> list:
    z = complex(z)
    return [float(z.real), float(z.imag)]


def _pairs(arr) -> list:
    arr = np.asarray(arr)
    stacked = np.stack([arr.real, arr.imag], axis=-1)
    return stacked.tolist()


class _Phases:
    """Wall-clock bookkeeping per named phase, in milliseconds."""

    def __init__(self):
        self.timings: dict[str, float] = {}
        self._t0 = time.perf_counter()

    def mark(self, name: str) -> None:
        now = time.perf_counter()
        self.timings[name] = round(1e3 * (now - self._t0), 3)
        self._t0 = now


def _digest(path: str) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def _load(path: str, base_steps):
    scenario = load_scenario(path)
    if base_steps is not None:
        scenario = scenario.with_base_steps(base_steps)
    return scenario


def _report(args, scenario, results: dict, phases: _Phases, extra_settings=None) -> dict:
    settings = {
        "base_steps": scenario.solver.base_steps,
        "singularity_tol": scenario.solver.singularity_tol,
        "backend": kernel.backend(),
    }
    settings.update(extra_settings or {})
    return {
        "scenario_digest": _digest(args.scenario),
        "solver_settings": settings,
        "results": results,
        "timings": phases.timings,
    }


def _emit(payload: dict, out: str | None) -> None:
    text = json.dumps(payload, indent=2) + "\n"
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _write_trajectory_csv(path: str, traj) -> None:
    """One row per node in time order; jump nodes twice (pre, then post)."""
    d = traj.dim
    header = ["t"]
    for c in range(d):
        header.extend([f"re(w_{c + 1})", f"im(w_{c + 1})"])
    header.append("post_jump")
    values = traj.values
    post = traj.post_jump_values
    lines = [",".join(header)]

    def row(t, vec, flag):
        cells = [f"{t:.17g}"]
        for v in vec:
            cells.extend([f"{v.real:.17g}", f"{v.imag:.17g}"])
        cells.append(str(flag))
        return ",".join(cells)

    nodes = traj.grid.nodes
    for idx in range(len(nodes)):
        lines.append(row(nodes[idx], values[idx], 0))
        if idx in post:
            lines.append(row(nodes[idx], post[idx], 1))
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def _validated_workspace(scenario):
    report = validate_scenario(scenario)
    if not report.ok:
        raise ScenarioValidationFailure(report)
    return prepare(scenario)


class ScenarioValidationFailure(Exception):
    def __init__(self, report):
        super().__init__("; ".join(report.violations))
        self.report = report


# -- subcommands -------------------------------------------------------------


def _cmd_check(args) -> int:
    phases = _Phases()
    scenario = _load(args.scenario, args.base_steps)
    phases.mark("load")
    validation = validate_scenario(scenario)
    phases.mark("validate")
    results: dict = {
        "valid": validation.ok,
        "violations": list(validation.violations),
        "solvability": None,
    }
    if not validation.ok:
        _emit(_report(args, scenario, results, phases), args.out)
        print("validation failed: " + "; ".join(validation.violations), file=sys.stderr)
        return _EXIT_INVALID
    ws = prepare(scenario)
    report = ws.solvability
    phases.mark("floquet")
    results["solvability"] = report.as_dict()
    _emit(_report(args, scenario, results, phases), args.out)
    if not report.solvable:
        print(
            f"not solvable: s_min below tolerance (s_min = {report.s_min:.3e}, "
            f"tol = {report.tol:g})",
            file=sys.stderr,
        )
        return _EXIT_UNSOLVABLE
    return 0


def _cmd_solve_periodic(args) -> int:
    phases = _Phases()
    scenario = _load(args.scenario, args.base_steps)
    ws = _validated_workspace(scenario)
    phases.mark("setup")
    if args.forcing:
        with open(args.forcing, "r", encoding="utf-8") as fh:
            try:
                spec = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ScenarioFormatError(f"cannot parse forcing file: {exc}") from exc
        forcing = function_from_json(spec, scenario.system.T, (scenario.system.r,))
    else:
        forcing = scenario.uncertainty.f0
    traj = simulate_truth(ws, forcing)
    phases.mark("solve")
    _write_trajectory_csv(args.out_csv, traj)
    phases.mark("write")
    results = {
        "csv": args.out_csv,
        "sup_norm": traj.sup_norm(),
        "periodic_residual": traj.periodic_residual(),
        "forcing": args.forcing or "f0",
    }
    _emit(_report(args, scenario, results, phases), args.out)
    return 0


def _cmd_estimate(args) -> int:
    phases = _Phases()
    scenario = _load(args.scenario, args.base_steps)
    ws = _validated_workspace(scenario)
    phases.mark("setup")

    results: dict = {"method": args.method}
    if args.method in ("bvp", "both"):
        minimax = solve_offline(ws)
    if args.method in ("algebraic", "both"):
        pointwise = solve_pointwise(ws)
        if args.method == "algebraic":
            minimax = pointwise
    if args.method == "both":
        deviation = compare_solutions(minimax, pointwise)
        results["dual_path_max_rel_dev"] = deviation["max_rel_dev"]
        results["dual_path_deviations"] = deviation
    phases.mark("offline")

    results.update({
        "sigma": minimax.sigma,
        "c_hat": _pair(minimax.c_hat),
        "u_hat_points": [_pairs(u) for u in minimax.u_hat.point_parts],
        "l_p": _pair(minimax.l_p),
        "cost_at_optimum": minimax.cost_at_optimum,
        "estimate": None,
        "l_xhat": None,
    })

    online = None
    if args.observations:
        with open(args.observations, "r", encoding="utf-8") as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ScenarioFormatError(f"cannot parse observation file: {exc}") from exc
        obs = observations_from_dict(data, ws)
        online = solve_online(ws, obs)
        estimate = apply_estimator(minimax, obs)
        results["estimate"] = _pair(estimate)
        results["l_xhat"] = _pair(online.estimate_value)
        phases.mark("online")

    if args.dump_trajectories:
        os.makedirs(args.dump_trajectories, exist_ok=True)
        _write_trajectory_csv(os.path.join(args.dump_trajectories, "zhat.csv"), minimax.z_hat)
        _write_trajectory_csv(os.path.join(args.dump_trajectories, "p.csv"), minimax.p)
        if online is not None:
            _write_trajectory_csv(os.path.join(args.dump_trajectories, "phat.csv"), online.p_hat)
            _write_trajectory_csv(os.path.join(args.dump_trajectories, "xhat.csv"), online.x_hat)
        phases.mark("dump")

    _emit(_report(args, scenario, results, phases, {"method": args.method}), args.out)
    return 0


def _cmd_simulate(args) -> int:
    phases = _Phases()
    scenario = _load(args.scenario, args.base_steps)
    ws = _validated_workspace(scenario)
    phases.mark("setup")
    if args.f_mode == "f0":
        f_tilde = scenario.uncertainty.f0
        f_prov: dict = {"kind": "f0"}
    else:
        f_tilde = sample_f_in_G1(ws, args.seed, boundary=(args.f_mode == "boundary"))
        f_prov = f_tilde.describe()
    truth = simulate_truth(ws, f_tilde)
    noise = sample_noise(ws, args.seed + 1, (args.budget_points, args.budget_intervals))
    obs = make_observations(ws, truth, noise, provenance={"f": f_prov, "seed": args.seed})
    phases.mark("simulate")
    _emit(observations_to_dict(obs), args.out)
    return 0


def _cmd_oracle(args) -> int:
    phases = _Phases()
    scenario = _load(args.scenario, args.base_steps)
    ws = _validated_workspace(scenario)
    phases.mark("setup")
    rng = np.random.default_rng(20260823)

    lemma1_pass = True
    for _ in range(1000):
        d = int(rng.integers(1, 7))
        M = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
        Q = M @ M.conj().T + np.eye(d)
        f = rng.standard_normal(d) + 1j * rng.standard_normal(d)
        g = rng.standard_normal(d) + 1j * rng.standard_normal(d)
        res = generalized_cbs(Q, f, g)
        eq = generalized_cbs(Q, f, res.equality_element)
        if not res.holds or abs(eq.lhs - eq.bound) > 1e-10 * max(eq.bound, 1.0):
            lemma1_pass = False
            break
    phases.mark("lemma1")

    minimax = solve_offline(ws)
    model = build_quadratic_model(ws)
    _, i_star = brute_force_minimize(model)
    sigma_sq = minimax.sigma ** 2
    denom = max(sigma_sq, abs(i_star), 1e-300)
    sigma_sq_rel_dev = abs(sigma_sq - i_star) / denom
    phases.mark("brute_force")

    dual_path_max_rel_dev = None
    if not scenario.scheme.intervals:
        dual_path_max_rel_dev = compare_solutions(minimax, solve_pointwise(ws))["max_rel_dev"]
    phases.mark("dual_path")

    # two-term decomposition: worst-case bias^2 + worst-case noise variance = sigma^2
    u_hat = minimax.u_hat
    try:
        wcf = worst_case_f(ws, u_hat)
        bias_sq = wcf.denom ** 2
    except PerimaxError:
        bias_sq = 0.0
    try:
        wcn = worst_case_noise(ws, u_hat)
        noise_var = wcn.point_norm_sq + wcn.interval_norm_sq
    except PerimaxError:
        noise_var = 0.0
    sandwich_rel_dev = abs(bias_sq + noise_var - sigma_sq) / max(sigma_sq, 1e-300)
    phases.mark("sandwich")

    guarantee_violations = 0
    rounds = args.guarantee_rounds
    for k in range(rounds):
        f_tilde = sample_f_in_G1(ws, 10_000 + k, boundary=True)
        x_true = simulate_truth(ws, f_tilde)
        obs = make_observations(ws, x_true, None)
        est = apply_estimator(minimax, obs)
        l_true = ws.pairing_sv(x_true.sv_values, ws.l0_sv)
        if abs(l_true - est) ** 2 > sigma_sq * (1.0 + 1e-6) + 1e-12:
            guarantee_violations += 1
    phases.mark("guarantee")

    results = {
        "lemma1_pass": lemma1_pass,
        "dual_path_max_rel_dev": dual_path_max_rel_dev,
        "sigma_sq_rel_dev": sigma_sq_rel_dev,
        "sandwich_rel_dev": sandwich_rel_dev,
        "guarantee_rounds": rounds,
        "guarantee_violations": guarantee_violations,
        "sigma": minimax.sigma,
    }
    _emit(_report(args, scenario, results, phases), args.out)
    ok = (
        lemma1_pass
        and sigma_sq_rel_dev <= 1e-6
        and sandwich_rel_dev <= 1e-6
        and guarantee_violations == 0
        and (dual_path_max_rel_dev is None or dual_path_max_rel_dev <= 1e-6)
    )
    return 0 if ok else 1


def _cmd_compare(args) -> int:
    phases = _Phases()
    scenario = _load(args.scenario, args.base_steps)
    ws = _validated_workspace(scenario)
    minimax = solve_offline(ws)
    phases.mark("offline")

    results: dict = {
        "sigma": minimax.sigma,
        "replications": args.replications,
        "f_mode": args.f_mode,
        "budget_points": args.budget_points,
        "budget_intervals": args.budget_intervals,
    }
    if args.replications > 0:
        root = np.random.SeedSequence(args.seed)
        children = root.spawn(args.replications)

        def one_round(child) -> float:
            f_seed, noise_seed = child.spawn(2)
            if args.f_mode == "f0":
                f_tilde = scenario.uncertainty.f0
            else:
                f_tilde = sample_f_in_G1(ws, f_seed, boundary=(args.f_mode == "boundary"))
            x_true = simulate_truth(ws, f_tilde)
            noise = sample_noise(ws, noise_seed, (args.budget_points, args.budget_intervals))
            obs = make_observations(ws, x_true, noise)
            est = apply_estimator(minimax, obs)
            l_true = ws.pairing_sv(x_true.sv_values, ws.l0_sv)
            return abs(l_true - est)

        workers = int(os.environ.get("PMX_THREADS", "0") or 0)
        if workers <= 0:
            workers = min(4, os.cpu_count() or 1)
        if workers > 1:
            with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
                errors = list(pool.map(one_round, children))
        else:
            errors = [one_round(child) for child in children]

        errors = np.asarray(errors)
        rmse = float(np.sqrt(np.mean(errors ** 2)))
        bound = minimax.sigma * (1.0 + 3.0 / np.sqrt(args.replications) + 0.05)
        results.update({
            "rmse": rmse,
            "mean_error": float(errors.mean()),
            "max_error": float(errors.max()),
            "guarantee_bound": bound,
            "guarantee_ok": bool(rmse <= bound + 1e-12),
        })
    phases.mark("rounds")
    _emit(_report(args, scenario, results, phases), args.out)
    return 0


# -- argument parsing and dispatch -------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="perimax",
        description="Guaranteed estimation of linear functionals of periodic solutions.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("scenario", help="scenario JSON file")
        p.add_argument("--base-steps", type=int, default=None,
                       help="override the scenario's base step count")
        p.add_argument("--out", default=None, help="write the report here instead of stdout")

    p = sub.add_parser("check", help="validate a scenario and test solvability")
    common(p)
    p.set_defaults(fn=_cmd_check)

    p = sub.add_parser("solve-periodic", help="solve the true periodic state under a forcing")
    common(p)
    p.add_argument("--forcing", default=None,
                   help="forcing spec JSON (coefficient form); default: the scenario's f0")
    p.add_argument("--out-csv", required=True, help="trajectory CSV output path")
    p.set_defaults(fn=_cmd_solve_periodic)

    p = sub.add_parser("estimate", help="offline estimator, optionally applied to data")
    common(p)
    p.add_argument("--observations", default=None, help="observation JSON file")
    p.add_argument("--method", choices=("bvp", "algebraic", "both"), default="bvp")
    p.add_argument("--dump-trajectories", default=None, metavar="DIR",
                   help="write zhat/p (and phat/xhat with data) CSVs into DIR")
    p.set_defaults(fn=_cmd_estimate)

    p = sub.add_parser("simulate", help="draw synthetic observations")
    common(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--boundary", dest="f_mode", action="store_const", const="boundary",
                   default="interior", help="draw the disturbance on the energy-ball boundary")
    p.add_argument("--f-mode", dest="f_mode", choices=("boundary", "interior", "f0"),
                   default=argparse.SUPPRESS)
    p.add_argument("--budget-points", type=float, default=0.0)
    p.add_argument("--budget-intervals", type=float, default=0.0)
    p.set_defaults(fn=_cmd_simulate)

    p = sub.add_parser("oracle", help="run the cross-validation battery")
    common(p)
    p.add_argument("--guarantee-rounds", type=int, default=20)
    p.set_defaults(fn=_cmd_oracle)

    p = sub.add_parser("compare", help="Monte-Carlo check of the guaranteed error")
    common(p)
    p.add_argument("--replications", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--budget-points", type=float, default=0.0)
    p.add_argument("--budget-intervals", type=float, default=0.0)
    p.add_argument("--f-mode", choices=("boundary", "interior", "f0"), default="boundary")
    p.set_defaults(fn=_cmd_compare)

    return parser


def run(argv=None) -> int:
    """Entry point returning the process exit code."""
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ScenarioValidationFailure as exc:
        print(f"validation failed: {exc}", file=sys.stderr)
        return _EXIT_INVALID
    except (ObservationMismatch, BudgetExceeded, HasIntervals) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return _EXIT_INVALID
    except (NotSolvable, DegenerateBVP, SingularFundamental,
            SingularReduction, NumericalInconsistency) as exc:
        print(f"not solvable: {exc}", file=sys.stderr)
        return _EXIT_UNSOLVABLE
    except ScenarioFormatError as exc:
        print(f"cannot read input: {exc}", file=sys.stderr)
        return _EXIT_IO
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return _EXIT_IO


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
