"""Stochastic outer loop: proximal point steps solved in expectation.

With eta = eps^2 lam / (24 beta^2) and K = ceil(16 beta^2 Delta / (lam eps^2)),
run K inexact proximal steps whose accuracy holds only in expectation and
return one of x_1..x_K chosen uniformly at random. Then
E ||x_out - prox(q, x_out, lam)|| <= eps lam / beta.

Each step solves the saddle subproblem with stochastic mirror-prox
(extragradient) on the pair (x, y), minibatches of size ceil(c_m / eta)
over ceil(c_T / eta) steps, so one step consumes O(eta^-2) samples.
"""

from __future__ import annotations

import logging
import math
import time
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .apg import ConfigurationError, make_prox_binding
from .geometry import bpp_solve
from .problem import ProblemInstance, StochasticOracle, smoothing_rho
from .saddle import build_subproblem
from .smoothing import RunLog

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class StochasticConfig:
    epsilon: float
    eta: float
    K: int
    lam: float
    rho: float
    seed: int = 0
    c_T: float = 4.0
    c_m: float = 1.0
    step_c: float = 2.0
    beta_X: float = 1.0
    delta_q: float = 1.0
    max_samples: Optional[int] = None

    def inner_steps(self, eta: Optional[float] = None) -> int:
        return max(1, math.ceil(self.c_T / (eta or self.eta)))

    def minibatch(self, eta: Optional[float] = None) -> int:
        return max(1, math.ceil(self.c_m / (eta or self.eta)))


def stochastic_schedule(gamma: float, epsilon: float, beta_X: float, omega_Y_sup: float,
                        delta_q: float, seed: int = 0, c_T: float = 4.0,
                        c_m: float = 1.0) -> StochasticConfig:
    """lam = 1/(2 gamma), eta = eps^2 lam / (24 beta^2), rho = eta / (4 Omega_Y),
    K = ceil(16 beta^2 Delta / (lam eps^2))."""
    for name, v in (("gamma", gamma), ("epsilon", epsilon), ("beta_X", beta_X),
                    ("delta_q", delta_q)):
        if not (v > 0 and math.isfinite(v)):
            raise ConfigurationError(f"{name} must be positive and finite, got {v}")
    if not (omega_Y_sup >= 0 and math.isfinite(omega_Y_sup)):
        raise ConfigurationError(f"omega_Y_sup must be nonnegative and finite, got {omega_Y_sup}")
    lam = 1.0 / (2.0 * gamma)
    eta = epsilon ** 2 * lam / (24.0 * beta_X ** 2)
    rho = smoothing_rho(eta / 4.0, omega_Y_sup)
    # guard against 127.99999 rounding up past the exact integer
    K = max(1, math.ceil(16.0 * beta_X ** 2 * delta_q / (lam * epsilon ** 2) - 1e-9))
    return StochasticConfig(epsilon, eta, K, lam, rho, int(seed), c_T, c_m, 2.0, beta_X, delta_q)


def stochastic_step2(instance: ProblemInstance, x_k, lam: float, rho: float, eta: float,
                     oracles: StochasticOracle, seed=0, c_T: float = 4.0, c_m: float = 1.0,
                     step_c: float = 2.0, y0=None, return_info: bool = False,
                     max_samples: Optional[int] = None):
    """One stochastic proximal step on the subproblem centred at ``x_k``.

    Stochastic mirror-prox on (x, y) in the metric mu ||dx||^2 + rho ||dy||^2:
    with scaled step a_t = min(1 / (2 L~), c / t), the x-step is a_t / mu and
    the y-step a_t / rho, where L~ bounds the Lipschitz constant of the
    saddle operator in that metric. The strongly convex term rho w_Y and g
    sit in the dual prox; r sits in the primal prox. The output averages
    the extrapolated primal points over the last half of the run.

    ``max_samples`` caps the oracle samples of this step; hitting the cap
    truncates the run with a warning instead of failing.
    """
    if oracles is None:
        raise ConfigurationError("stochastic_step2 needs stochastic oracles")
    sub = build_subproblem(instance, x_k, lam, rho)
    b = instance
    c = b.coupling
    mu = sub.mu
    L_tilde = (max(sub.L_xx_prime / mu, float(c.L_yy or 0.0) / rho)
               + c.L_xy / math.sqrt(mu * rho))
    T = max(1, math.ceil(c_T / eta))
    m = max(1, math.ceil(c_m / eta))
    capped = False
    if max_samples is not None and 4 * T * m > max_samples:
        T = max(2, max_samples // (4 * m))
        capped = True
        warnings.warn(f"stochastic step truncated to {T} steps by the sample budget "
                      f"{max_samples}", RuntimeWarning, stacklevel=2)
    rng = np.random.default_rng(seed) if not isinstance(seed, np.random.Generator) else seed
    w = b.X_dgf
    y_prox = make_prox_binding(b.Y_dgf, b.Y, b.g, rho)
    gc = sub.grad_w_center

    def Fx(x, y):
        gx = oracles.mean_grad_x(x, y, rng, m)
        return (w.gradient(x) - gc) / lam + gx

    def Fy(x, y):
        return -oracles.mean_grad_y(x, y, rng, m)

    def step(x, y, gx, gy, a):
        xn = bpp_solve(w, b.X, b.r, gx, a / mu, x)
        yn = y_prox(gy, y, rho / a)
        return xn, yn

    x = np.asarray(x_k, float)
    y = b.Y.interior_point if y0 is None else np.asarray(y0, float)
    start_avg = T // 2
    acc, n_acc = np.zeros_like(x), 0
    for t in range(1, T + 1):
        a = min(1.0 / (2.0 * L_tilde), step_c / t)
        xh, yh = step(x, y, Fx(x, y), Fy(x, y), a)
        x, y = step(x, y, Fx(xh, yh), Fy(xh, yh), a)
        if t > start_avg:
            acc += xh
            n_acc += 1
    x_out = b.X.project(acc / n_acc)
    if return_info:
        return x_out, {"steps": T, "minibatch": m, "samples": 4 * T * m, "L_tilde": L_tilde,
                       "y_last": y, "capped": capped}
    return x_out


def run_stochastic(instance: ProblemInstance, oracles: StochasticOracle,
                   config: StochasticConfig, x1):
    """K stochastic proximal steps, then a uniformly drawn iterate among x_1..x_K.

    Returns ``(x_out, RunLog)``; the log carries the chosen index and every
    iterate in its summary, and the CSV gains a seed column.
    """
    x = np.asarray(x1, float)
    if not instance.X.membership(x):
        raise ConfigurationError("x1 must be a feasible primal point")
    ss = np.random.SeedSequence(config.seed)
    child = ss.spawn(config.K + 1)
    geo = instance.X_dgf.geometry
    cnt = instance.counter
    run_log = RunLog(seed=config.seed)
    iterates = [x.copy()]
    t0 = time.perf_counter()
    for k in range(1, config.K + 1):
        before = cnt.snapshot() if cnt is not None else None
        ts = time.perf_counter()
        x_new = stochastic_step2(instance, x, config.lam, config.rho, config.eta, oracles,
                                 np.random.default_rng(child[k - 1]), config.c_T,
                                 config.c_m, config.step_c, max_samples=config.max_samples)
        after = cnt.snapshot() if cnt is not None else None
        d = {key: after[key] - before[key] for key in after} if before is not None else {}
        run_log.append(k=k, displacement=geo.norm(x_new - x), eta=config.eta,
                       primal_calls=d.get("stochastic_primal_calls", 0),
                       dual_calls=d.get("stochastic_dual_calls", 0),
                       elapsed_ms=1000.0 * (time.perf_counter() - ts))
        x = x_new
        if k < config.K:
            iterates.append(x.copy())
    pick = int(np.random.default_rng(child[config.K]).integers(1, config.K + 1))
    x_out = iterates[pick - 1]
    run_log.summary = {
        "iterations": config.K, "chosen_index": pick, "x_out": x_out.tolist(),
        "seed": config.seed, "eta": config.eta, "rho": config.rho, "lam": config.lam,
        "iterates": [v.tolist() for v in iterates],
        "primal_calls": sum(r["primal_calls"] for r in run_log.records),
        "dual_calls": sum(r["dual_calls"] for r in run_log.records),
        "elapsed_ms": 1000.0 * (time.perf_counter() - t0),
    }
    return x_out, run_log
