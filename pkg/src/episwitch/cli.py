"""Batch front-end: run declarative scenarios, emit CSV + report + SVG.

Usage:
    episwitch run <scenario.json> [--out DIR] [--seed N]
    episwitch plot <trajectory.csv> [--out FILE]

A scenario is a single JSON object naming the model family, one task and
its parameters; see README for the schema.  Exit codes: 0 success,
1 usage/parse errors, 2 hypothesis failures (the requested construction
does not apply to the given family).
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__, endemic, jle, markov, plotting
from .errors import EpiSwitchError, HypothesisError, ValidationError
from .model import SisModel, classify
from .signals import SwitchedSisModel, SwitchingSignal, periodic_from_weights
from .simulate import IntegratorConfig, Trajectory, integrate

TASKS = ("classify", "jle", "certify-dfe", "persist", "orbit",
         "stabilize", "markov", "simulate")

_RANDOMIZED_TASKS = ("jle", "certify-dfe", "markov")


def _fail(path: str, message: str) -> None:
    raise ValidationError(f"{path}: {message}")


def _get(obj: dict, key: str, path: str, required: bool = True, default=None):
    if key not in obj:
        if required:
            _fail(f"{path}.{key}", "missing required field")
        return default
    return obj[key]


def _number(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        _fail(path, f"expected a number, got {type(value).__name__}")
    if not np.isfinite(value):
        _fail(path, "must be finite")
    return float(value)


def _vector(value, path: str) -> np.ndarray:
    if not isinstance(value, list) or not value:
        _fail(path, "expected a non-empty array of numbers")
    return np.array([_number(v, f"{path}[{i}]") for i, v in enumerate(value)])


def _matrix(value, path: str) -> np.ndarray:
    if not isinstance(value, list) or not value:
        _fail(path, "expected a non-empty array of rows")
    rows = []
    width = None
    for i, row in enumerate(value):
        r = _vector(row, f"{path}[{i}]")
        if width is None:
            width = r.shape[0]
        elif r.shape[0] != width:
            _fail(f"{path}[{i}]", f"row has {r.shape[0]} entries, expected {width}")
        rows.append(r)
    return np.vstack(rows)


def load_family(scenario: dict) -> SwitchedSisModel:
    raw = _get(scenario, "models", "scenario")
    if not isinstance(raw, list) or not raw:
        _fail("scenario.models", "expected a non-empty array of models")
    mods = []
    for k, entry in enumerate(raw):
        path = f"scenario.models[{k}]"
        if not isinstance(entry, dict):
            _fail(path, "expected an object with fields D and B")
        d = _vector(_get(entry, "D", path), f"{path}.D")
        b = _matrix(_get(entry, "B", path), f"{path}.B")
        if np.min(d) <= 0.0:
            _fail(f"{path}.D", "diagonal recovery rates must be strictly positive")
        if np.min(b) < 0.0:
            _fail(f"{path}.B", "infection rates must be nonnegative")
        if b.shape[0] != d.shape[0]:
            _fail(f"{path}.B", f"B is {b.shape[0]}x{b.shape[1]} but D has {d.shape[0]} entries")
        mods.append(SisModel(d=d, b=b))
    try:
        return SwitchedSisModel(tuple(mods))
    except EpiSwitchError as exc:
        _fail("scenario.models", str(exc))


def _load_signal(obj, path: str, m: int) -> SwitchingSignal:
    if not isinstance(obj, dict):
        _fail(path, "expected an object describing the switching signal")
    if "weights" in obj:
        weights = _vector(obj["weights"], f"{path}.weights")
        period = _number(_get(obj, "period", path), f"{path}.period")
        try:
            return periodic_from_weights(weights, period)
        except EpiSwitchError as exc:
            _fail(path, str(exc))
    if "segments" in obj:
        kind = _get(obj, "kind", path, required=False, default="periodic")
        try:
            return SwitchingSignal.from_json({"kind": kind, "segments": obj["segments"]})
        except (EpiSwitchError, KeyError, TypeError) as exc:
            _fail(f"{path}.segments", str(exc))
    _fail(path, "signal needs either weights+period or segments")


def _weights_or_search(params, family, sign: str) -> np.ndarray:
    if "weights" in params:
        w = _vector(params["weights"], "scenario.params.weights")
        if w.shape[0] != family.m:
            _fail("scenario.params.weights",
                  f"got {w.shape[0]} weights for {family.m} models")
        return w
    comb = endemic.find_combination(family, sign)
    if comb is None:
        raise HypothesisError(
            f"no convex combination with {sign} spectral abscissa found; "
            "give explicit weights or change the family"
        )
    return comb.kappa


def _jsonable(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def _write_trajectory(traj: Trajectory, out_dir: Path, stem: str, title: str) -> dict:
    csv_path = out_dir / f"{stem}.csv"
    svg_path = out_dir / f"{stem}.svg"
    traj.to_csv(csv_path)
    plotting.render_trajectory(svg_path, traj.times, traj.states, traj.modes, title=title)
    return {f"{stem}_csv": csv_path.name, f"{stem}_svg": svg_path.name}


# ---------------------------------------------------------------------------
# Task handlers: each returns (results dict, artifacts dict)
# ---------------------------------------------------------------------------

def _task_classify(family, params, seed, out_dir):
    tol = _number(params.get("tol", 1e-10), "scenario.params.tol")
    index = int(params.get("model", 1))
    if not 1 <= index <= family.m:
        _fail("scenario.params.model", f"model index {index} not in 1..{family.m}")
    report = classify(family.constituent(index), tol=tol)
    return {
        "model": index,
        "r0": report.r0,
        "classification": report.classification.value,
        "dfe_gas": report.dfe_gas,
        "endemic": _jsonable(report.endemic),
        "endemic_residual_tolerance": tol,
    }, {}


def _task_simulate(family, params, seed, out_dir):
    sig = _load_signal(_get(params, "signal", "scenario.params"), "scenario.params.signal", family.m)
    x0 = _vector(_get(params, "x0", "scenario.params"), "scenario.params.x0")
    t_end = _number(_get(params, "t_end", "scenario.params"), "scenario.params.t_end")
    step = _number(params.get("step", 1e-3), "scenario.params.step")
    traj = integrate(family, sig, x0, t_end, IntegratorConfig(step=step))
    artifacts = _write_trajectory(traj, out_dir, "trajectory", "switched SIS trajectory")
    return {
        "t_end": t_end,
        "terminal": _jsonable(traj.terminal),
        "terminal_sup_norm": float(np.max(np.abs(traj.terminal))),
        "invariance_tolerance": IntegratorConfig(step=step).tol_drift,
        "signal": sig.to_json(),
    }, artifacts


def _task_jle(family, params, seed, out_dir):
    horizon = _number(params.get("horizon", 20.0), "scenario.params.horizon")
    budget = int(params.get("budget", 200))
    t_block = _number(params.get("t_block", 4.0), "scenario.params.t_block")
    depth = int(params.get("depth", 5))
    est = jle.estimate_jle(family, horizon=horizon, budget=budget, seed=seed,
                           t_block=t_block, depth=depth)
    return {
        "lower": est.lower,
        "upper": est.upper,
        "gap": est.upper - est.lower,
        "witness_signal": est.witness_signal.to_json(),
        "horizon": est.horizon,
        "samples": est.samples,
        "seed": seed,
    }, {}


def _task_certify_dfe(family, params, seed, out_dir):
    t_block = _number(params.get("t_block", 4.0), "scenario.params.t_block")
    depth = int(params.get("depth", 5))
    samples = int(params.get("samples", 400))
    trials = int(params.get("trials", 1000))
    shift = jle.jle_upper_bound(family, t_block=t_block, depth=depth)
    norm = jle.build_extremal_norm(family, shift=shift)
    nonstrict = jle.verify_nonstrict_lyapunov(family, norm, samples=samples, seed=seed)
    extremal = jle.check_extremal_inequality(family, norm, trials=trials, seed=seed + 1)
    decrease = jle.verify_nonlinear_decrease(
        family, norm,
        ell=_number(params.get("ell", 0.01), "scenario.params.ell"),
        big_l=_number(params.get("L", float(family.n)), "scenario.params.L"),
        eps=_number(params.get("eps", 1e-3), "scenario.params.eps"),
        samples=samples, seed=seed + 2)
    return {
        "shift_upper_bound": shift,
        "norm_rows": int(norm.rows.shape[0]),
        "grid_step": norm.delta,
        "nonstrict_max_value": nonstrict.max_value,
        "nonstrict_tolerance": nonstrict.tol,
        "nonstrict_ok": nonstrict.ok,
        "extremal_max_excess": extremal.max_value,
        "extremal_tolerance": extremal.tol,
        "extremal_ok": extremal.ok,
        "decrease_worst_margin": decrease.worst_margin,
        "decrease_ok": decrease.ok,
        "seed": seed,
    }, {}


def _task_persist(family, params, seed, out_dir):
    kappa = _weights_or_search(params, family, "positive")
    horizon = _number(params.get("horizon", 50.0), "scenario.params.horizon")
    res = endemic.persistence_construction(family, kappa)
    traj = integrate(family, res.signal, res.floor_point, horizon)
    artifacts = _write_trajectory(traj, out_dir, "trajectory", "persistent switched SIS trajectory")
    floor_after_start = float(np.min(traj.states))
    return {
        "kappa": _jsonable(res.kappa),
        "period": res.period,
        "delta": res.delta,
        "floor_point": _jsonable(res.floor_point),
        "observed_floor": floor_after_start,
        "floor_slack": 1e-6,
        "horizon": horizon,
    }, artifacts


def _task_orbit(family, params, seed, out_dir):
    kappa = _weights_or_search(params, family, "positive")
    tol = _number(params.get("tol", 1e-10), "scenario.params.tol")
    orbit = endemic.periodic_orbit(family, kappa, tol=tol)
    traj = integrate(family, orbit.signal, orbit.x_star, 3.0)
    artifacts = _write_trajectory(traj, out_dir, "trajectory", "periodic endemic orbit (3 periods)")
    closure = [
        float(np.max(np.abs(
            traj.states[int(np.argmin(np.abs(traj.times - k)))] - orbit.x_star)))
        for k in (1.0, 2.0, 3.0)
    ]
    return {
        "kappa": _jsonable(kappa),
        "x_star": _jsonable(orbit.x_star),
        "residual": orbit.residual,
        "residual_tolerance": tol,
        "interior_margin": orbit.interior_margin,
        "orbit_period": orbit.period,
        "signal_period": 1.0 / orbit.n0,
        "closure_gaps_t123": closure,
        "closure_tolerance": 1e-8,
    }, artifacts


def _task_stabilize(family, params, seed, out_dir):
    t_end = _number(params.get("t_end", 20.0), "scenario.params.t_end")
    res = endemic.stabilize(family)
    traj = integrate(family, res.signal, np.ones(family.n), t_end)
    artifacts = _write_trajectory(traj, out_dir, "trajectory", "stabilized switched SIS trajectory")
    return {
        "kappa": _jsonable(res.kappa),
        "period": res.period,
        "alpha": res.alpha,
        "alpha_bound": 1.0,
        "v": _jsonable(res.v),
        "terminal_sup_norm": float(np.max(np.abs(traj.terminal))),
        "terminal_tolerance": 1e-4,
        "t_end": t_end,
    }, artifacts


def _task_markov(family, params, seed, out_dir):
    pi = _matrix(_get(params, "pi", "scenario.params"), "scenario.params.pi")
    pi_bar = params.get("pi_bar")
    if pi_bar is not None:
        pi_bar = _matrix(pi_bar, "scenario.params.pi_bar")
    try:
        spec = markov.MarkovSpec(rates=pi, rates_bar=pi_bar)
    except EpiSwitchError as exc:
        _fail("scenario.params.pi", str(exc))
    x0 = _vector(_get(params, "x0", "scenario.params"), "scenario.params.x0")
    sigma0 = int(params.get("sigma0", 1))
    t_end = _number(params.get("t_end", 50.0), "scenario.params.t_end")
    points = int(params.get("points", 101))
    paths = int(params.get("paths", 10_000))
    grid = np.linspace(0.0, t_end, points)

    xi0 = np.zeros(family.m * family.n)
    xi0[(sigma0 - 1) * family.n:(sigma0) * family.n] = x0
    verdict = markov.l1_stability_test(family, spec, xi0)
    est = markov.monte_carlo_moments(family, spec, x0, sigma0, grid,
                                     paths=paths, seed=seed)
    bound = markov.integrate_linear_moment_bound(family, spec, xi0, grid)
    excess = float(np.max(est.xi_flat() - bound - 3.0 * est.ci_flat()))

    csv_path = out_dir / "moments.csv"
    _write_moments_csv(csv_path, grid, est, bound, family.m, family.n)
    svg_path = out_dir / "moments.svg"
    curves = []
    for i in range(family.m):
        for k in range(family.n):
            label = f"xi_{i + 1}" + (f"_{k + 1}" if family.n > 1 else "")
            curves.append((label, est.xi[:, i, k], est.ci95[:, i, k]))
            curves.append((label + "_bound", bound[:, i * family.n + k]))
    plotting.render_series(svg_path, grid, curves,
                           title="indicator moments vs linear bound",
                           ylabel="moment")
    results = {
        "hurwitz": verdict.hurwitz,
        "l1_stable": verdict.hurwitz,
        "l2_stable_implied": verdict.hurwitz,
        "l1_bound": _jsonable(verdict.l1_bound),
        "paths": paths,
        "seed": seed,
        "majorization_max_excess": excess,
        "majorization_tolerance": 0.0,
        "moment_matrix": _jsonable(verdict.a_pi_bar),
    }
    return results, {"moments_csv": csv_path.name, "moments_svg": svg_path.name}


def _write_moments_csv(path, grid, est, bound, m, n):
    cols = ["t"]
    for prefix in ("xi", "ci", "bound"):
        cols += [f"{prefix}_{i + 1}_{k + 1}" for i in range(m) for k in range(n)]
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(cols) + "\n")
        xi, ci = est.xi_flat(), est.ci_flat()
        for row in range(grid.shape[0]):
            vals = [f"{grid[row]:.17g}"]
            vals += [f"{v:.17g}" for v in xi[row]]
            vals += [f"{v:.17g}" for v in ci[row]]
            vals += [f"{v:.17g}" for v in bound[row]]
            fh.write(",".join(vals) + "\n")


_HANDLERS = {
    "classify": _task_classify,
    "simulate": _task_simulate,
    "jle": _task_jle,
    "certify-dfe": _task_certify_dfe,
    "persist": _task_persist,
    "orbit": _task_orbit,
    "stabilize": _task_stabilize,
    "markov": _task_markov,
}


def run_scenario(scenario_path: str, out_override: Optional[str] = None,
                 seed_override: Optional[int] = None) -> int:
    started = time.perf_counter()
    spath = Path(scenario_path)
    try:
        text = spath.read_text()
    except OSError as exc:
        print(f"error: cannot read scenario file: {exc}", file=sys.stderr)
        return 1
    try:
        scenario = json.loads(text)
    except json.JSONDecodeError as exc:
        print(f"error: {spath}: invalid JSON at line {exc.lineno}, column {exc.colno}: "
              f"{exc.msg}", file=sys.stderr)
        return 1

    try:
        if not isinstance(scenario, dict):
            _fail("scenario", "top level must be a JSON object")
        name = _get(scenario, "name", "scenario")
        if not isinstance(name, str) or not name:
            _fail("scenario.name", "expected a non-empty string")
        task = _get(scenario, "task", "scenario")
        if task not in TASKS:
            _fail("scenario.task", f"unknown task {task!r}; expected one of {', '.join(TASKS)}")
        family = load_family(scenario)
        params = scenario.get("params", {})
        if not isinstance(params, dict):
            _fail("scenario.params", "expected an object")
        seed = seed_override if seed_override is not None else scenario.get("seed")
        if seed is None and task in _RANDOMIZED_TASKS:
            _fail("scenario.seed", f"task {task!r} uses randomness and needs a seed")
        seed = int(seed) if seed is not None else 0

        out_dir = Path(out_override) if out_override else Path(
            scenario.get("out", f"{spath.stem}.out"))
        out_dir.mkdir(parents=True, exist_ok=True)

        results, artifacts = _HANDLERS[task](family, params, seed, out_dir)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except HypothesisError as exc:
        print(f"hypothesis failure: {exc}", file=sys.stderr)
        return 2
    except EpiSwitchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    report = {
        "tool": "episwitch",
        "version": __version__,
        "scenario": scenario,
        "task": task,
        "results": _jsonable(results),
        "artifacts": artifacts,
        "wall_clock_seconds": round(time.perf_counter() - started, 6),
    }
    report_path = out_dir / "report.json"
    with open(report_path, "w", newline="\n") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"{name}: {task} complete; report at {report_path}")
    return 0


def plot_csv(csv_path: str, out_path: Optional[str] = None) -> int:
    path = Path(csv_path)
    try:
        with open(path) as fh:
            header = fh.readline().strip().split(",")
            data = np.loadtxt(fh, delimiter=",", ndmin=2)
    except (OSError, ValueError) as exc:
        print(f"error: malformed trajectory CSV {path}: {exc}", file=sys.stderr)
        return 1
    if len(header) < 3 or header[0] != "t" or header[-1] != "sigma" or data.size == 0:
        print(f"error: {path}: expected header t,x1,...,xn,sigma", file=sys.stderr)
        return 1
    if data.shape[1] != len(header):
        print(f"error: {path}: rows have {data.shape[1]} fields, header has "
              f"{len(header)}", file=sys.stderr)
        return 1
    out = Path(out_path) if out_path else path.with_suffix(".svg")
    plotting.render_trajectory(out, data[:, 0], data[:, 1:-1],
                               data[:, -1].astype(int), title=path.stem)
    print(f"wrote {out}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="episwitch",
        description="Switched SIS epidemic model analysis toolkit",
    )
    parser.add_argument("--version", action="version", version=f"episwitch {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario file")
    p_run.add_argument("scenario", help="path to scenario JSON")
    p_run.add_argument("--out", help="output directory (overrides scenario)")
    p_run.add_argument("--seed", type=int, help="seed override")

    p_plot = sub.add_parser("plot", help="render a trajectory CSV to SVG")
    p_plot.add_argument("csv", help="trajectory CSV (t,x1,...,xn,sigma)")
    p_plot.add_argument("--out", help="output SVG path")

    args = parser.parse_args(argv)
    if args.command == "run":
        return run_scenario(args.scenario, args.out, args.seed)
    return plot_csv(args.csv, args.out)


if __name__ == "__main__":
    sys.exit(main())
