"""Batch experiment runner.

Subcommands
-----------
solve     run the deterministic or stochastic outer loop from a JSON config
sweep     run a geometric epsilon grid and fit log-log oracle-count slopes
certify   re-check a saved output point for near-stationarity
selftest  run quick invariant checks

Exit status is 0 on success, 1 when a certificate fails and 2 on a
configuration error.

Configs are JSON objects with flat dotted keys (nested objects are
flattened the same way)::

    {"problem.family": "finite_max", "problem.params": {"preset": "example2"},
     "solver.mode": "CaseI", "solver.epsilon": 0.1, "solver.seed": 0,
     "output.dir": "out/example2"}
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional

import numpy as np

from .apg import ConfigurationError
from .problem import OracleCounter, gaussian_oracle, q_value, smoothing_rho, wrap_counted
from .problems import FAMILIES, instance_from_dict
from .saddle import build_subproblem, solve_dual_case2_full
from .smoothing import (FrameworkFailure, _jsonable, config_for, near_stationarity_certificate,
                        run_framework)
from .stochastic import run_stochastic, stochastic_schedule

log = logging.getLogger("maxsmooth")

EXIT_OK, EXIT_CERT, EXIT_CONFIG = 0, 1, 2
MODES = ("CaseI", "CaseII", "stochastic")
LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
SWEEP_FIELDS = ["epsilon", "iterations", "primal_calls", "dual_calls", "elapsed_ms"]


class ConfigError(ValueError):
    """Malformed config; ``field`` names the offending key."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


# --------------------------------------------------------------------------
# config handling


def _flatten(d, prefix=""):
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        # problem.params stays a dict, it is handed to the family builder as is
        if isinstance(v, dict) and key != "problem.params":
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


def load_config(path) -> dict:
    """Read and flatten a JSON config; raises :class:`ConfigError`."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("--config", f"cannot read {path}: {exc.strerror}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"line {exc.lineno} column {exc.colno}", exc.msg) from None
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "top level must be a JSON object")
    return _flatten(raw)


def _positive(cfg, key, default=None, kind=float):
    v = cfg.get(key, default)
    if v is None:
        raise ConfigError(key, "is required")
    try:
        v = kind(v)
    except (TypeError, ValueError):
        raise ConfigError(key, f"expected a number, got {cfg.get(key)!r}") from None
    if not (v > 0 and math.isfinite(v)):
        raise ConfigError(key, f"must be positive and finite, got {v!r}")
    return v


def validate(cfg: dict, need_epsilon: bool = True) -> dict:
    """Fill defaults and check types; returns a normalized copy."""
    c = dict(cfg)
    fam = c.get("problem.family")
    if fam is None:
        raise ConfigError("problem.family", "is required")
    if fam not in FAMILIES:
        raise ConfigError("problem.family", f"unknown family {fam!r}; choose from {sorted(FAMILIES)}")
    params = c.setdefault("problem.params", {})
    if not isinstance(params, dict):
        raise ConfigError("problem.params", "must be an object")
    mode = c.get("solver.mode")
    if mode is not None and mode not in MODES:
        raise ConfigError("solver.mode", f"must be one of {list(MODES)}, got {mode!r}")
    if need_epsilon:
        c["solver.epsilon"] = _positive(c, "solver.epsilon")
    seed = c.setdefault("solver.seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError("solver.seed", f"must be a nonnegative integer, got {seed!r}")
    if "solver.sigma" in c:
        s = c["solver.sigma"]
        if not isinstance(s, (int, float)) or isinstance(s, bool) or s < 0:
            raise ConfigError("solver.sigma", f"must be a nonnegative number, got {s!r}")
    c.setdefault("output.dir", "out")
    if not isinstance(c["output.dir"], str):
        raise ConfigError("output.dir", "must be a string")
    return c


def build_instance(cfg: dict):
    try:
        return instance_from_dict(cfg["problem.family"], cfg["problem.params"])
    except (KeyError, ValueError, TypeError, ConfigurationError) as exc:
        raise ConfigError("problem.params", str(exc)) from None


def _mode_for(cfg, instance):
    mode = cfg.get("solver.mode")
    if mode:
        return mode
    c = instance.coupling
    return "CaseI" if (c.dual_argmax is not None or "case1_oracle" in instance.meta) else "CaseII"


def _x1(cfg, instance):
    x1 = cfg.get("solver.x1")
    if x1 is None:
        return np.asarray(instance.X.interior_point, float)
    try:
        x = np.asarray(x1, float).reshape(np.shape(instance.X.interior_point))
    except (TypeError, ValueError):
        raise ConfigError("solver.x1", "wrong shape for this problem") from None
    if not instance.X.membership(x):
        raise ConfigError("solver.x1", "is not a feasible primal point")
    return x


def _lower_bound(cfg, instance):
    lb = cfg.get("solver.q_star_lb")
    return instance.q_star_lower_bound if lb is None else float(lb)


# --------------------------------------------------------------------------
# runs


def solve(cfg: dict, out_dir: Path) -> tuple:
    """Run one configured solve; writes log.csv and summary.json. Returns (status, summary)."""
    base = build_instance(cfg)
    counter = OracleCounter()
    instance = wrap_counted(base, counter)
    eps = cfg["solver.epsilon"]
    mode = _mode_for(cfg, base)
    x1 = _x1(cfg, base)
    lb = _lower_bound(cfg, base)
    out_dir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    if mode == "stochastic":
        if base.coupling.grad_y is None:
            raise ConfigError("solver.mode", "stochastic runs need a smooth coupling in y")
        sigma = float(cfg.get("solver.sigma", 0.1))
        delta = q_value(base, x1, 1e-8) - lb
        if delta < 0:
            raise ConfigError("solver.q_star_lb", "exceeds q(x1)")
        sc = stochastic_schedule(base.coupling.gamma, eps, base.beta_X, base.Omega_Y,
                                 max(delta, 1e-12), cfg["solver.seed"])
        x_out, run_log = run_stochastic(instance, gaussian_oracle(instance, sigma, sigma), sc, x1)
        lam, k_bar = sc.lam, sc.K
        run_log.summary.pop("iterates", None)
    else:
        fc = config_for(base, eps, x1, mode, lb)
        lam, k_bar = fc.lam, fc.k_bar
        try:
            x_out, run_log = run_framework(instance, fc, x1)
        except FrameworkFailure as exc:
            run_log = exc.run_log
            run_log.write_csv(out_dir / "log.csv", include_seed=False)
            summary = dict(run_log.summary, certified=False, mode=mode, error=str(exc))
            _write_json(out_dir / "summary.json", summary)
            return EXIT_CERT, summary
    ok, diag = near_stationarity_certificate(base, x_out, lam, eps)
    summary = dict(run_log.summary)
    summary.update(mode=mode, epsilon=eps, lam=lam, k_bar=k_bar, certified=bool(ok),
                   x_out=np.asarray(x_out).tolist(), family=cfg["problem.family"],
                   certificate={k: v for k, v in diag.items() if k != "prox_point"},
                   wall_ms=1000.0 * (time.perf_counter() - t0))
    summary.pop("config", None)
    run_log.write_csv(out_dir / "log.csv", include_seed=(mode == "stochastic"))
    _write_json(out_dir / "summary.json", summary)
    return (EXIT_OK if ok else EXIT_CERT), summary


def sweep_point(cfg: dict, eps: float, target: str = "subproblem") -> dict:
    """Oracle counts for one epsilon.

    ``target="subproblem"`` solves the dual of one Case II saddle subproblem
    at x1 with rho = eps / (4 Omega_Y) over its full iteration budget;
    ``target="framework"`` runs the whole outer loop.
    """
    base = build_instance(cfg)
    counter = OracleCounter()
    instance = wrap_counted(base, counter)
    x1 = _x1(cfg, base)
    t0 = time.perf_counter()
    if target == "subproblem":
        lam = 1.0 / (2.0 * base.coupling.gamma)
        sub = build_subproblem(instance, x1, lam, smoothing_rho(eps / 4.0, base.Omega_Y))
        iterations = solve_dual_case2_full(sub, eps).iterations
    elif target == "framework":
        fc = config_for(base, eps, x1, _mode_for(cfg, base), _lower_bound(cfg, base))
        _, run_log = run_framework(instance, fc, x1)
        iterations = len(run_log)
    else:
        raise ConfigError("sweep.target", f"must be 'subproblem' or 'framework', got {target!r}")
    snap = counter.snapshot()
    return {"epsilon": eps, "iterations": iterations, "primal_calls": snap["primal_calls"],
            "dual_calls": snap["dual_calls"], "elapsed_ms": 1000.0 * (time.perf_counter() - t0)}


def sweep_epsilons(cfg: dict) -> list:
    if "sweep.epsilons" in cfg:
        eps = cfg["sweep.epsilons"]
        if not isinstance(eps, list) or not eps:
            raise ConfigError("sweep.epsilons", "must be a nonempty list")
        return sorted((_positive({"e": e}, "e") for e in eps), reverse=True)
    lo = _positive(cfg, "sweep.eps_min", 1e-3)
    hi = _positive(cfg, "sweep.eps_max", 1e-1)
    n = _positive(cfg, "sweep.points", 5, int)
    if lo > hi:
        raise ConfigError("sweep.eps_min", "exceeds sweep.eps_max")
    return sorted(np.geomspace(lo, hi, n).tolist(), reverse=True)


def loglog_slope(eps, calls) -> float:
    """Least-squares slope of log(calls) against log(1/eps)."""
    e = np.asarray(eps, float)
    c = np.asarray(calls, float)
    if len(e) < 2 or np.any(c <= 0):
        return float("nan")
    return float(np.polyfit(np.log(1.0 / e), np.log(c), 1)[0])


def _sweep_worker(args):
    cfg, eps, target = args
    return sweep_point(cfg, eps, target)


def sweep(cfg: dict, out_dir: Path, parallel: int = 1) -> dict:
    """Writes sweep.csv (one row per epsilon, largest first) and sweep.json."""
    epsilons = sweep_epsilons(cfg)
    target = cfg.get("sweep.target", "subproblem")
    jobs = [(cfg, e, target) for e in epsilons]
    if parallel > 1:
        with ProcessPoolExecutor(max_workers=parallel) as ex:
            rows = list(ex.map(_sweep_worker, jobs))
    else:
        rows = [_sweep_worker(j) for j in jobs]
    # merged in epsilon order whatever order the workers finished in
    rows.sort(key=lambda r: -r["epsilon"])
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_FIELDS)
        for r in rows:
            w.writerow([repr(r["epsilon"]), r["iterations"], r["primal_calls"],
                        r["dual_calls"], f"{r['elapsed_ms']:.3f}"])
    eps = [r["epsilon"] for r in rows]
    result = {"rows": rows, "target": target,
              "slope": {"dual_calls": loglog_slope(eps, [r["dual_calls"] for r in rows]),
                        "primal_calls": loglog_slope(eps, [r["primal_calls"] for r in rows])}}
    _write_json(out_dir / "sweep.json", result)
    return result


def certify(cfg: dict, point) -> tuple:
    base = build_instance(cfg)
    try:
        x = np.asarray(point, float).reshape(np.shape(base.X.interior_point))
    except (TypeError, ValueError):
        raise ConfigError("certify.point", "wrong shape for this problem") from None
    if not base.X.membership(x):
        raise ConfigError("certify.point", "is not a feasible primal point")
    lam = float(cfg.get("solver.lam", 1.0 / (2.0 * base.coupling.gamma)))
    ok, diag = near_stationarity_certificate(base, x, lam, cfg["solver.epsilon"])
    report = {"certified": bool(ok), "point": x.tolist(), "epsilon": cfg["solver.epsilon"],
              "lam": lam, **{k: v for k, v in diag.items()}}
    return (EXIT_OK if ok else EXIT_CERT), report


def _load_point(cfg, path_arg):
    if path_arg is None and "certify.point" in cfg:
        return cfg["certify.point"]
    path = Path(path_arg or cfg.get("certify.summary") or Path(cfg["output.dir"]) / "summary.json")
    try:
        data = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError("certify.summary", f"cannot read a point from {path}: {exc}") from None
    if isinstance(data, dict):
        if "x_out" not in data:
            raise ConfigError("certify.summary", f"{path} has no x_out")
        return data["x_out"]
    return data


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


# --------------------------------------------------------------------------
# selftest


def selftest() -> list:
    """Quick invariant checks; returns a list of (name, passed, detail)."""
    from .apg import APGObjective, apg_run
    from .geometry import (VectorSpaceGeometry, bregman_divergence, bpp_solve, make_dgf,
                           make_set, sample_set)
    from .problem import f_rho_solve
    from .problems import bilinear_toy, example2_toy

    rng = np.random.default_rng(0)
    results = []

    # Bregman strong convexity of the p-norm DGF with modulus p - 1
    geo = VectorSpaceGeometry(3, "p_norm", p=1.5)
    simplex = make_set("simplex", 3, norm_kind="p_norm", p=1.5)
    dgf = make_dgf("p_norm", geo, simplex)
    pts = sample_set(simplex, rng, 400)
    worst = min(bregman_divergence(dgf, u, v) - 0.25 * geo.norm(u - v) ** 2
                for u, v in zip(pts[:200], pts[200:]))
    results.append(("bregman_strong_convexity", worst >= -1e-12, f"min slack {worst:.2e}"))

    # box BPP matches the clipped gradient step
    box = make_set("box", 4, lo=-np.ones(4), hi=np.ones(4))
    e = make_dgf("euclidean", VectorSpaceGeometry(4))
    u, xi = rng.uniform(-1, 1, 4), rng.normal(size=4)
    err = np.max(np.abs(bpp_solve(e, box, None, xi, 0.7, u) - np.clip(u - 0.7 * xi, -1, 1)))
    results.append(("bpp_box_closed_form", err <= 1e-12, f"error {err:.2e}"))

    # Danskin: grad f_rho against central differences
    inst = example2_toy()
    rho, h = 0.05, 1e-6
    worst = 0.0
    for x in sample_set(inst.X, rng, 10):
        x = 0.9 * x
        g = inst.coupling.grad_x(x, f_rho_solve(inst, rho, x, 1e-13)[1])
        fd = np.array([(f_rho_solve(inst, rho, x + h * d, 1e-13)[0]
                        - f_rho_solve(inst, rho, x - h * d, 1e-13)[0]) / (2 * h)
                       for d in np.eye(2)])
        worst = max(worst, np.linalg.norm(fd - g) / max(1.0, np.linalg.norm(g)))
    results.append(("danskin_gradient", worst <= 1e-4, f"relative error {worst:.2e}"))

    # APG on a strongly convex quadratic reaches its minimizer
    A = np.diag([1.0, 10.0, 100.0])
    b = np.array([1.0, -2.0, 3.0])
    xs = np.linalg.solve(A, b)
    # h = x'(A - I)x / 2 - b'x, and the identity part is the mu w term
    obj = APGObjective(lambda x: A @ x - x - b, 99.0, 1.0, make_dgf("euclidean", VectorSpaceGeometry(3)),
                       make_set("box", 3, lo=-np.full(3, np.inf), hi=np.full(3, np.inf)), None, 0.0)
    run = apg_run(obj, 1e-10, np.zeros(3), k_max=2000)
    err = float(np.linalg.norm(run.u_bar - xs))
    results.append(("apg_quadratic", err <= 1e-4, f"distance {err:.2e}"))

    # Case II subproblem solve on the bilinear toy
    bt = bilinear_toy()
    sub = build_subproblem(bt, np.zeros(2), 1.0 / (2.0 * bt.coupling.gamma), 0.01)
    y = solve_dual_case2_full(sub, 1e-4).y
    results.append(("case2_dual_feasible", bool(bt.Y.membership(y)), f"y = {np.round(y, 4).tolist()}"))
    return results


# --------------------------------------------------------------------------
# entry point


def _parser():
    p = argparse.ArgumentParser(prog="maxsmooth", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (("solve", "run the outer loop from a config"),
                        ("sweep", "epsilon sweep with oracle-count slopes"),
                        ("certify", "re-check a saved output point"),
                        ("selftest", "run quick invariant checks")):
        s = sub.add_parser(name, help=help_)
        s.add_argument("--config", help="JSON config path", required=(name != "selftest"))
        s.add_argument("--out", help="output directory, overrides output.dir")
        s.add_argument("--seed", type=int, help="overrides solver.seed")
        s.add_argument("--parallel", type=int, default=1, help="worker processes for sweeps")
        if name == "certify":
            s.add_argument("--point", help="summary JSON or JSON list holding the point")
    return p


def _setup_logging():
    level = os.environ.get("MAXSMOOTH_LOG_LEVEL", "error").lower()
    if level not in LOG_LEVELS:
        raise ConfigError("MAXSMOOTH_LOG_LEVEL", f"must be one of {sorted(LOG_LEVELS)}, got {level!r}")
    logging.basicConfig(level=LOG_LEVELS[level], format="%(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr)


def run_cli(args=None) -> int:
    """Parse ``args`` (default ``sys.argv[1:]``), run, and return the exit status."""
    try:
        ns = _parser().parse_args(args)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        _setup_logging()
        if ns.command == "selftest":
            results = selftest()
            for name, ok, detail in results:
                print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
            return EXIT_OK if all(ok for _, ok, _ in results) else EXIT_CERT
        if ns.parallel is not None and ns.parallel < 1:
            raise ConfigError("--parallel", "must be at least 1")
        cfg = load_config(ns.config)
        if ns.seed is not None:
            cfg["solver.seed"] = ns.seed
        if ns.out is not None:
            cfg["output.dir"] = ns.out
        cfg = validate(cfg, need_epsilon=(ns.command != "sweep"))
        out_dir = Path(cfg["output.dir"])
        if ns.command == "solve":
            status, summary = solve(cfg, out_dir)
            print(json.dumps({"certified": summary["certified"],
                              "iterations": summary.get("iterations"),
                              "k_bar": summary.get("k_bar"), "out": str(out_dir)}))
            return status
        if ns.command == "sweep":
            result = sweep(cfg, out_dir, ns.parallel)
            print(json.dumps(_jsonable({"rows": len(result["rows"]), "slope": result["slope"],
                                        "out": str(out_dir)})))
            return EXIT_OK
        status, report = certify(cfg, _load_point(cfg, ns.point))
        print(json.dumps(_jsonable({k: v for k, v in report.items() if k != "prox_point"})))
        return status
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
