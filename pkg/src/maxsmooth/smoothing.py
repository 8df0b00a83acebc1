"""The deterministic outer loop: proximal point steps on the smoothed problem.

With lam = 1/(2 gamma), eta = eps^2 lam / (64 beta^2) and
rho = eta / (4 Omega_Y), each iteration solves

    x_{k+1} ~ argmin_x q_rho(x) + D(x, x_k) / lam

to accuracy eta and stops once ||x_{k+1} - x_k|| <= 4 sqrt(lam eta),
returning x_k. The output is eps-near-stationary: its Bregman proximal
point lies within eps lam / beta.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from .apg import ConfigurationError
from .geometry import bregman_divergence
from .problem import ProblemInstance, q_value, smoothing_rho
from .saddle import step2_solve

log = logging.getLogger(__name__)

CSV_FIELDS = ["k", "displacement", "eta", "primal_calls", "dual_calls", "elapsed_ms"]


class FrameworkFailure(RuntimeError):
    """The outer loop exceeded its iteration bound; carries the run log."""

    def __init__(self, message, run_log=None):
        super().__init__(message)
        self.run_log = run_log


@dataclass(frozen=True)
class FrameworkConfig:
    epsilon: float
    eta: float
    lam: float
    rho: float
    k_bar: int
    mode: str = "CaseII"
    gamma: float = 1.0
    beta_X: float = 1.0
    omega_Y: float = 1.0

    @property
    def stop_radius(self) -> float:
        """4 sqrt(lam eta)."""
        return 4.0 * math.sqrt(self.lam * self.eta)

    @property
    def target_radius(self) -> float:
        """eps lam / beta, the near-stationarity radius."""
        return self.epsilon * self.lam / self.beta_X


def schedule_params(gamma: float, epsilon: float, beta_X: float, omega_Y_sup: float,
                    q1: float, q_star_lb: float = 0.0, mode: str = "CaseII",
                    eta_divisor: float = 64.0) -> FrameworkConfig:
    """Fixed parameters of the outer loop.

    lam = 1/(2 gamma), eta = eps^2 lam / (64 beta^2), rho = eta / (4 Omega_Y)
    and k_bar = ceil(2 (q1 - q_lb) / (13 eta)), at least 1.
    """
    for name, v in (("gamma", gamma), ("epsilon", epsilon), ("beta_X", beta_X)):
        if not (v > 0 and math.isfinite(v)):
            raise ConfigurationError(f"{name} must be positive and finite, got {v}")
    if not (omega_Y_sup >= 0 and math.isfinite(omega_Y_sup)):
        raise ConfigurationError(f"omega_Y_sup must be nonnegative and finite, got {omega_Y_sup}")
    if q1 < q_star_lb:
        raise ConfigurationError(f"q(x1) = {q1:.6g} is below the lower bound {q_star_lb:.6g}")
    lam = 1.0 / (2.0 * gamma)
    eta = epsilon ** 2 * lam / (eta_divisor * beta_X ** 2)
    rho = smoothing_rho(eta / 4.0, omega_Y_sup)
    k_bar = max(1, math.ceil(2.0 * (q1 - q_star_lb) / (13.0 * eta)))
    return FrameworkConfig(epsilon, eta, lam, rho, k_bar, mode, gamma, beta_X, omega_Y_sup)


def config_for(instance: ProblemInstance, epsilon: float, x1, mode: str = "CaseII",
               q_star_lb: Optional[float] = None) -> FrameworkConfig:
    """Schedule for an instance; q(x1) is evaluated once at accuracy eta / 10."""
    gamma = instance.coupling.gamma
    beta = instance.beta_X
    lam = 1.0 / (2.0 * gamma)
    eta = epsilon ** 2 * lam / (64.0 * beta ** 2)
    q1 = q_value(instance, np.asarray(x1, float), eta / 10.0)
    lb = instance.q_star_lower_bound if q_star_lb is None else q_star_lb
    return schedule_params(gamma, epsilon, beta, instance.Omega_Y, q1, lb, mode)


# --------------------------------------------------------------------------
# run logs


@dataclass
class RunLog:
    """Per-iteration records plus a terminal summary."""

    records: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    seed: Optional[int] = None

    def __len__(self):
        return len(self.records)

    def append(self, **row):
        self.records.append(row)

    def write_csv(self, path, include_seed: Optional[bool] = None):
        """CSV with columns k,displacement,eta,primal_calls,dual_calls,elapsed_ms(,seed)."""
        with_seed = self.seed is not None if include_seed is None else include_seed
        fields = CSV_FIELDS + (["seed"] if with_seed else [])
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(fields)
            for r in self.records:
                row = [r["k"], repr(float(r["displacement"])), repr(float(r["eta"])),
                       r["primal_calls"], r["dual_calls"], f"{r['elapsed_ms']:.3f}"]
                if with_seed:
                    row.append(self.seed)
                w.writerow(row)

    def write_json(self, path):
        with open(path, "w") as fh:
            json.dump(_jsonable(self.summary), fh, indent=2, sort_keys=True)


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return [_jsonable(x) for x in v.tolist()]
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    return v


# --------------------------------------------------------------------------
# the outer loop


def run_framework(instance: ProblemInstance, config: FrameworkConfig, x1,
                  step_options: Optional[dict] = None,
                  on_iteration: Optional[Callable] = None):
    """Outer proximal loop with a fixed (lam, rho, eta).

    Returns ``(x_out, RunLog)``. ``x_out`` is the iterate *before* the
    update whose displacement fell below 4 sqrt(lam eta). Raises
    :class:`FrameworkFailure` if k_bar iterations pass without stopping.
    """
    x = np.asarray(x1, float)
    if not instance.X.membership(x):
        raise ConfigurationError("x1 must be a feasible primal point")
    geo = instance.X_dgf.geometry
    opts = dict(step_options or {})
    run_log = RunLog()
    t0 = time.perf_counter()
    radius = config.stop_radius
    for k in range(1, config.k_bar + 1):
        t_start = time.perf_counter()
        res = step2_solve(instance, x, config.lam, config.rho, config.eta, config.mode, **opts)
        disp = geo.norm(res.x - x)
        row = dict(k=k, displacement=disp, eta=config.eta,
                   primal_calls=res.counters.get("primal_calls", 0),
                   dual_calls=res.counters.get("dual_calls", 0),
                   elapsed_ms=1000.0 * (time.perf_counter() - t_start),
                   certified_gap=res.certified_gap)
        run_log.append(**row)
        log.info("k=%d displacement=%.3e certified_gap=%.3e", k, disp, res.certified_gap)
        if on_iteration is not None:
            on_iteration(k, x, res)
        if disp <= radius:
            run_log.summary = _summary(config, k, x, t0, run_log, stopped=True)
            return x, run_log
        x = res.x
    run_log.summary = _summary(config, config.k_bar, x, t0, run_log, stopped=False)
    raise FrameworkFailure(
        f"no stop within k_bar = {config.k_bar} iterations; the lower bound on q* may be "
        f"invalid or a subsolver is inaccurate", run_log)


def _summary(config, k, x, t0, run_log, stopped):
    return {
        "iterations": k, "k_bar": config.k_bar, "stopped": stopped,
        "x_out": np.asarray(x).tolist(), "config": asdict(config),
        "primal_calls": sum(r["primal_calls"] for r in run_log.records),
        "dual_calls": sum(r["dual_calls"] for r in run_log.records),
        "elapsed_ms": 1000.0 * (time.perf_counter() - t0),
    }


# --------------------------------------------------------------------------
# Bregman-Moreau envelope and the stationarity certificate


@dataclass(frozen=True)
class ProxResult:
    point: np.ndarray
    envelope_value: float
    radius: float
    certified_gap: float


def _default_mode(instance):
    if instance.coupling.dual_argmax is not None or "case1_oracle" in instance.meta:
        return "CaseI"
    return "CaseII"


def moreau_prox_full(instance: ProblemInstance, x, lam: float, tol: float,
                     mode: Optional[str] = None) -> ProxResult:
    x = np.asarray(x, float)
    rho = smoothing_rho(tol, instance.Omega_Y)
    res = step2_solve(instance, x, lam, rho, tol, mode or _default_mode(instance))
    mu = 1.0 / lam - instance.coupling.gamma
    # Q(x+) - min Q <= certified gap + rho Omega_Y, and Q is mu-strongly convex
    gap = res.certified_gap + rho * instance.Omega_Y
    radius = math.sqrt(2.0 * gap / mu)
    env = q_value(instance, res.x, tol) + bregman_divergence(instance.X_dgf, res.x, x) / lam
    return ProxResult(res.x, float(env), radius, gap)


def moreau_prox(instance: ProblemInstance, x, lam: float, tol: float, mode: Optional[str] = None):
    """(approximate prox(q, x, lam), approximate envelope value q^lam(x)).

    The prox point is within ``ProxResult.radius`` of the exact one, see
    :func:`moreau_prox_full`.
    """
    r = moreau_prox_full(instance, x, lam, tol, mode)
    return r.point, r.envelope_value


def near_stationarity_certificate(instance: ProblemInstance, x, lam: float, epsilon: float,
                                  beta_X: Optional[float] = None, tol: Optional[float] = None,
                                  mode: Optional[str] = None):
    """True iff ||x - prox|| + (prox accuracy radius) <= eps lam / beta.

    Returns ``(certified, diagnostics)``.
    """
    beta = instance.beta_X if beta_X is None else beta_X
    target = epsilon * lam / beta
    if tol is None:
        tol = (target ** 2) * (1.0 / lam - instance.coupling.gamma) / 200.0
    r = moreau_prox_full(instance, x, lam, tol, mode)
    dist = instance.X_dgf.geometry.norm(np.asarray(x, float) - r.point)
    ok = dist + r.radius <= target
    return ok, {"distance": dist, "radius": r.radius, "target": target,
                "prox_point": r.point, "envelope_value": r.envelope_value, "tol": tol}
