"""Inexact accelerated proximal gradient in non-Hilbertian geometry.

Solves  min_{u in U}  P(u) = h(u) + phi(u) + mu * w(u)  where h is convex and
L_h-smooth, phi is a simple convex term and w is a DGF on U. Only a
possibly inexact gradient of h is needed. One step reads

    u~  = alpha (u_{t-1} - u_{t-2}) + u_{t-1}
    u^  = (u~ + tau u^_{t-1}) / (1 + tau)
    u_t = argmin phi + mu w + <grad_hat h(u^), u> + eta D(u, u_{t-1})

and the output is the alpha^{-t}-weighted average of the u_t.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .geometry import bpp_solve, bregman_radius


class ConfigurationError(ValueError):
    """Invalid solver configuration (names the violated bound)."""


class AccuracyNotReached(RuntimeError):
    """An inner solve hit its iteration cap before certifying its tolerance."""

    def __init__(self, message, achieved=float("nan"), point=None):
        super().__init__(message)
        self.achieved = achieved
        self.point = point


@dataclass(frozen=True)
class APGConfig:
    L_h: float
    mu: float
    tau: float
    step_eta: float
    alpha: float

    def theta(self, t: int) -> float:
        """Averaging weight alpha^{-t} (overflows for large t, use the state)."""
        return self.alpha ** (-t)


def apg_schedule(L_h: float, mu: float) -> APGConfig:
    """tau = sqrt(L_h/mu), eta = sqrt(L_h mu), alpha = tau/(1+tau)."""
    if not (mu > 0):
        raise ConfigurationError("mu must be positive")
    if L_h < mu:
        raise ConfigurationError(f"need L_h >= mu, got L_h={L_h} < mu={mu}")
    tau = math.sqrt(L_h / mu)
    return APGConfig(L_h, mu, tau, mu * tau, tau / (1.0 + tau))


@dataclass(frozen=True)
class APGState:
    """Iterate memory of the method.

    The running average is kept renormalised: ``weighted_sum`` holds
    alpha^t * sum_s alpha^{-s} u_s and ``weight_total`` the matching
    alpha^t * sum_s alpha^{-s}, so neither overflows.
    """

    t: int
    u_prev: np.ndarray
    u_prev2: np.ndarray
    u_hat_prev: np.ndarray
    weighted_sum: np.ndarray
    weight_total: float
    u_tilde: Optional[np.ndarray] = None
    u_hat: Optional[np.ndarray] = None


def apg_init(u0) -> APGState:
    u0 = np.array(u0, dtype=float)
    return APGState(0, u0, u0, u0, np.zeros_like(u0), 0.0)


def make_prox_binding(dgf, fset, phi, mu: float) -> Callable:
    """BPP with phi and mu*w folded in.

    Returns ``prox(xi, center, eta)`` solving
    argmin phi + mu w + <xi, u> + eta D(u, center); the mu*w term is absorbed
    into a shifted linear term and a step of 1/(mu + eta).
    """
    def prox(xi, center, eta):
        if mu == 0.0:
            return bpp_solve(dgf, fset, phi, xi, 1.0 / eta, center)
        return bpp_solve(dgf, fset, phi, xi + mu * dgf.gradient(center), 1.0 / (mu + eta), center)
    return prox


def apg_step(state: APGState, config: APGConfig, grad_hat: Callable, bpp: Callable) -> APGState:
    """One iteration of the inexact APG; queries ``grad_hat`` exactly once."""
    a, tau = config.alpha, config.tau
    u_tilde = a * (state.u_prev - state.u_prev2) + state.u_prev
    u_hat = (u_tilde + tau * state.u_hat_prev) / (1.0 + tau)
    g = grad_hat(u_hat)
    u_new = bpp(g, state.u_prev, config.step_eta)
    return APGState(
        state.t + 1, u_new, state.u_prev, u_hat,
        a * state.weighted_sum + u_new, a * state.weight_total + 1.0,
        u_tilde, u_hat)


def apg_average(state: APGState) -> np.ndarray:
    """Weighted average of u_1..u_t with weights alpha^{-s}."""
    if state.t < 1:
        raise ValueError("no iterates to average yet")
    return state.weighted_sum / state.weight_total


def admissible_delta(epsilon: float, L_h: float, mu: float) -> float:
    """Largest gradient-error norm allowed by the iteration budget."""
    return (epsilon ** 0.5 * mu ** 0.75 * L_h ** -0.25
            / (14.0 * (1.0 + math.sqrt(L_h / mu))))


def iteration_budget(L_h: float, mu: float, D: float, epsilon: float) -> int:
    """K = ceil((sqrt(L_h/mu) + 1) log(108 L_h (L_h/mu)^{3/2} D / eps)), at least 1."""
    arg = 108.0 * L_h * (L_h / mu) ** 1.5 * D / epsilon
    if arg <= 1.0:
        return 1
    return max(1, math.ceil((math.sqrt(L_h / mu) + 1.0) * math.log(arg)))


def envelope_bound(k: int, config: APGConfig, D: float, delta: float = 0.0) -> float:
    """54 a^k L (L/mu)^{3/2} D + 24 delta^2 (1 - sqrt a)^{-2} mu^{-1} sqrt(L/mu)."""
    L, mu, a = config.L_h, config.mu, config.alpha
    transient = 54.0 * a ** k * L * (L / mu) ** 1.5 * D
    plateau = 24.0 * delta ** 2 / (1.0 - math.sqrt(a)) ** 2 / mu * math.sqrt(L / mu)
    return transient + plateau


@dataclass
class APGObjective:
    """Data of min h + phi + mu w over a set.

    ``grad`` returns the (possibly inexact) gradient of h and ``delta`` bounds
    the dual norm of its error. ``value`` (optional) evaluates P and is only
    used for run records.
    """

    grad: Callable
    L_h: float
    mu: float
    dgf: object
    fset: object
    phi: object = None
    delta: float = 0.0
    value: Optional[Callable] = None


@dataclass
class APGRun:
    u_bar: np.ndarray
    iterations: int
    state: APGState
    record: list = field(default_factory=list)
    stopped_by_callback: bool = False


def apg_run(objective: APGObjective, epsilon: Optional[float], u0, k_max: Optional[int] = None,
            D: Optional[float] = None, callback: Optional[Callable] = None,
            record_every: int = 0, config: Optional[APGConfig] = None,
            check_delta: bool = True) -> APGRun:
    """Run the APG with the standard schedule.

    With ``D`` (an upper bound on D(u*, u0)) and ``epsilon`` the iteration
    count is the budget that guarantees P(u_bar) - P* <= epsilon, and the
    gradient error bound must be admissible. ``D="auto"`` uses the
    Bregman radius of the feasible set. Without ``D`` the run lasts
    ``k_max`` iterations. ``callback(state)`` may return a point to stop
    early with that point as output.
    """
    cfg = config or apg_schedule(objective.L_h, objective.mu)
    if isinstance(D, str) and D == "auto":
        D = bregman_radius(objective.dgf, objective.fset, u0)
        if not math.isfinite(D):
            D = None
    if D is not None and epsilon is not None:
        if check_delta and objective.delta > 0:
            bound = admissible_delta(epsilon, cfg.L_h, cfg.mu)
            if objective.delta > bound:
                raise ConfigurationError(
                    f"gradient error {objective.delta:.3e} exceeds the admissible "
                    f"bound eps^(1/2) mu^(3/4) L^(-1/4) / (14 (1 + sqrt(L/mu))) = {bound:.3e}")
        K = iteration_budget(cfg.L_h, cfg.mu, D, epsilon)
        if k_max is not None:
            K = min(K, k_max)
    elif k_max is not None:
        K = int(k_max)
    else:
        raise ConfigurationError("apg_run needs a divergence bound D or k_max")

    bpp = make_prox_binding(objective.dgf, objective.fset, objective.phi, cfg.mu)
    state = apg_init(u0)
    record = []
    for _ in range(K):
        state = apg_step(state, cfg, objective.grad, bpp)
        if record_every and state.t % record_every == 0:
            entry = {"t": state.t, "u_bar": apg_average(state)}
            if objective.value is not None:
                entry["P"] = objective.value(entry["u_bar"])
            record.append(entry)
        if callback is not None:
            out = callback(state)
            if out is not None:
                return APGRun(np.asarray(out, float), state.t, state, record, True)
    return APGRun(apg_average(state), state.t, state, record)
