"""Problem instances of the form  min_x f(x) + r(x),  f(x) = max_y Phi(x, y) - g(y).

Also provides the dually smoothed function

    f_rho(x) = max_{y in Y} Phi(x, y) - g(y) - rho * w_Y(y)

with its maximiser y*_rho(x) and gradient grad_x Phi(x, y*_rho(x)), plus
thread-safe oracle counters.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .apg import APGObjective
from .geometry import DistanceGeneratingFunction, FeasibleSet
from .gradmap import solve_to_tolerance


# --------------------------------------------------------------------------
# composite terms


@dataclass(frozen=True)
class CompositeTerm:
    """A simple convex term r or g.

    ``kind`` selects the proximal route: ``zero``, ``linear`` (params ``c``)
    or ``l1`` (params ``weight``; closed form on boxes only).
    """

    kind: str = "zero"
    lipschitz_M: float = 0.0
    params: dict = field(default_factory=dict)

    @property
    def bpp_kind(self) -> str:
        return self.kind

    def value(self, u) -> float:
        if self.kind == "zero":
            return 0.0
        if self.kind == "linear":
            return float(np.dot(self.params["c"], u))
        return float(self.params["weight"] * np.abs(u).sum())


def zero_term() -> CompositeTerm:
    return CompositeTerm("zero", 0.0)


def linear_term(c, dual_norm: Callable = np.linalg.norm) -> CompositeTerm:
    c = np.asarray(c, float)
    return CompositeTerm("linear", float(dual_norm(c)), {"c": c})


def l1_term(weight: float, dimension: int) -> CompositeTerm:
    # Lipschitz w.r.t. the Euclidean norm
    return CompositeTerm("l1", weight * math.sqrt(dimension), {"weight": float(weight)})


# --------------------------------------------------------------------------
# couplings and instances


@dataclass(frozen=True)
class CouplingFunction:
    """Phi with its partial gradients and constants.

    ``gamma`` defaults to ``L_xx``. ``concavity_y`` is an optional modulus of
    strong concavity of Phi(x, .) relative to the dual DGF (0 if unknown).
    ``dual_argmax(x, rho)`` may return the exact maximiser of
    Phi(x, .) - g - rho * w_Y when it has a closed form.
    """

    value: Callable
    grad_x: Callable
    L_xx: float
    L_xy: float
    grad_y: Optional[Callable] = None
    L_yy: Optional[float] = None
    gamma: Optional[float] = None
    M_Y: Optional[float] = None
    concavity_y: float = 0.0
    dual_argmax: Optional[Callable] = None

    def __post_init__(self):
        if self.gamma is None:
            object.__setattr__(self, "gamma", float(self.L_xx))
        if not (0.0 <= self.gamma <= self.L_xx * (1 + 1e-12)):
            raise ValueError("gamma must lie in [0, L_xx]")


@dataclass
class OracleCounter:
    """Monotone counters of primal and dual gradient evaluations."""

    primal_calls: int = 0
    dual_calls: int = 0
    stochastic_primal_calls: int = 0
    stochastic_dual_calls: int = 0
    dual_solves: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def add(self, name: str, k: int = 1) -> None:
        with self._lock:
            setattr(self, name, getattr(self, name) + k)

    def snapshot(self) -> dict:
        with self._lock:
            return {"primal_calls": self.primal_calls, "dual_calls": self.dual_calls,
                    "stochastic_primal_calls": self.stochastic_primal_calls,
                    "stochastic_dual_calls": self.stochastic_dual_calls,
                    "dual_solves": self.dual_solves}


@dataclass(frozen=True)
class ProblemInstance:
    coupling: CouplingFunction
    r: CompositeTerm
    g: CompositeTerm
    X: FeasibleSet
    X_dgf: DistanceGeneratingFunction
    Y: FeasibleSet
    Y_dgf: DistanceGeneratingFunction
    q_star_lower_bound: float = 0.0
    name: str = ""
    meta: dict = field(default_factory=dict)
    counter: Optional[OracleCounter] = None

    def __post_init__(self):
        if not math.isfinite(self.Y.diameter):
            raise ValueError("the dual set must be compact")
        if self.Y_dgf.sup_abs_value is None or not math.isfinite(self.Y_dgf.sup_abs_value):
            raise ValueError("the dual DGF must have a finite sup |w_Y| on Y")

    @property
    def Omega_Y(self) -> float:
        return float(self.Y_dgf.sup_abs_value)

    @property
    def D_Y(self) -> float:
        return float(self.Y.diameter)

    @property
    def beta_X(self) -> float:
        return float(self.X_dgf.smoothness_beta)

    @property
    def M_omega_Y(self) -> Optional[float]:
        return self.Y_dgf.lipschitz_M

    def phi_D(self, x, y, rho: float) -> float:
        """Phi(x, y) - g(y) - rho w_Y(y)."""
        return (self.coupling.value(x, y) - self.g.value(y)
                - (rho * self.Y_dgf.value(y) if rho else 0.0))


def wrap_counted(instance: ProblemInstance, counter: OracleCounter) -> ProblemInstance:
    """Same instance, but every grad_x / grad_y evaluation bumps ``counter``."""
    c = instance.coupling
    gx, gy, am = c.grad_x, c.grad_y, c.dual_argmax

    def grad_x(x, y):
        counter.add("primal_calls")
        return gx(x, y)

    grad_y = None
    if gy is not None:
        def grad_y(x, y):
            counter.add("dual_calls")
            return gy(x, y)

    dual_argmax = None
    if am is not None:
        def dual_argmax(x, rho):
            counter.add("dual_solves")
            return am(x, rho)

    coupling = replace(c, grad_x=grad_x, grad_y=grad_y, dual_argmax=dual_argmax)
    return replace(instance, coupling=coupling, counter=counter)


# --------------------------------------------------------------------------
# stochastic oracles


@dataclass(frozen=True)
class StochasticOracle:
    """Unbiased noisy gradients with E||noise||_*^2 <= sigma^2."""

    sample_grad_x: Callable
    sample_grad_y: Callable
    sigma_x_sq: float
    sigma_y_sq: float
    batch_grad_x: Optional[Callable] = None
    batch_grad_y: Optional[Callable] = None

    def mean_grad_x(self, x, y, rng, m: int):
        """Average of ``m`` independent samples of the primal gradient."""
        if self.batch_grad_x is not None:
            return self.batch_grad_x(x, y, rng, m)
        return np.mean([self.sample_grad_x(x, y, rng) for _ in range(m)], axis=0)

    def mean_grad_y(self, x, y, rng, m: int):
        if self.batch_grad_y is not None:
            return self.batch_grad_y(x, y, rng, m)
        return np.mean([self.sample_grad_y(x, y, rng) for _ in range(m)], axis=0)


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def gaussian_oracle(instance: ProblemInstance, sigma_x: float, sigma_y: float) -> StochasticOracle:
    """Gradients plus isotropic Gaussian noise of total variance sigma^2.

    The variance is matched in the Euclidean norm of the flat vector.
    """
    c = instance.coupling
    dx, dy = instance.X.dimension, instance.Y.dimension
    counter = instance.counter

    def sgx(x, y, seed):
        if counter is not None:
            counter.add("stochastic_primal_calls")
        g = c.grad_x(x, y)
        if sigma_x == 0:
            return g
        return g + _rng(seed).normal(0.0, sigma_x / math.sqrt(dx), size=dx)

    def sgy(x, y, seed):
        if counter is not None:
            counter.add("stochastic_dual_calls")
        g = c.grad_y(x, y)
        if sigma_y == 0:
            return g
        return g + _rng(seed).normal(0.0, sigma_y / math.sqrt(dy), size=dy)

    def bgx(x, y, seed, m):
        # m samples share one exact gradient; only the noise is drawn m times
        if counter is not None:
            counter.add("stochastic_primal_calls", m)
        g = c.grad_x(x, y)
        if sigma_x == 0:
            return g
        return g + _rng(seed).normal(0.0, sigma_x / math.sqrt(dx), size=(m, dx)).mean(axis=0)

    def bgy(x, y, seed, m):
        if counter is not None:
            counter.add("stochastic_dual_calls", m)
        g = c.grad_y(x, y)
        if sigma_y == 0:
            return g
        return g + _rng(seed).normal(0.0, sigma_y / math.sqrt(dy), size=(m, dy)).mean(axis=0)

    return StochasticOracle(sgx, sgy, sigma_x ** 2, sigma_y ** 2, bgx, bgy)


# --------------------------------------------------------------------------
# smoothed function oracles


def inner_dual_objective(instance: ProblemInstance, rho: float, x) -> APGObjective:
    """min_y -Phi(x, y) + g(y) + rho w_Y(y) as an APG objective."""
    c = instance.coupling
    if c.grad_y is None:
        raise ValueError("no closed-form maximiser and no grad_y: cannot smooth")
    w = instance.Y_dgf
    kappa = float(c.concavity_y)
    mu = rho + kappa
    L_h = max(float(c.L_yy or 0.0), mu)
    x = np.asarray(x, float)

    if kappa:
        def grad(y):
            return -c.grad_y(x, y) - kappa * w.gradient(y)
    else:
        def grad(y):
            return -c.grad_y(x, y)
    return APGObjective(grad, L_h, mu, w, instance.Y, instance.g, 0.0)


def f_rho_solve(instance: ProblemInstance, rho: float, x, tol: float, y0=None,
                max_iter: int = 200_000):
    """(f_rho(x), y*_rho(x)) with value error at most ``tol``.

    Uses the coupling's closed-form maximiser when present, otherwise the
    APG on the rho-strongly concave inner problem stopped by a
    gradient-mapping certificate. ``y0`` warm-starts the inner solve.
    """
    if rho <= 0:
        raise ValueError("rho must be positive")
    if tol <= 0:
        raise ValueError("tol must be positive")
    c = instance.coupling
    if c.dual_argmax is not None:
        y = c.dual_argmax(x, rho)
    else:
        obj = inner_dual_objective(instance, rho, x)
        start = instance.Y.interior_point if y0 is None else y0
        y = solve_to_tolerance(obj, tol, start, max_iter).point
    return instance.phi_D(x, y, rho), y


def grad_f_rho(instance: ProblemInstance, rho: float, x, tol: float, y0=None):
    """grad_x Phi(x, y) at the approximate maximiser; error <= L_xy sqrt(2 tol / rho)."""
    _, y = f_rho_solve(instance, rho, x, tol, y0)
    return instance.coupling.grad_x(x, y)


def gradient_error_bound(L_xy: float, tol: float, rho: float) -> float:
    return L_xy * math.sqrt(2.0 * tol / rho)


def smoothing_rho(budget: float, omega: float) -> float:
    """rho with rho * omega = budget; a singleton Y (omega = 0) smooths exactly, so rho = 1."""
    return budget / omega if omega > 0 else 1.0


def q_value(instance: ProblemInstance, x, tol: float) -> float:
    """f(x) + r(x) within 2 tol, via f_rho with rho = tol / Omega_Y."""
    rho0 = smoothing_rho(tol, instance.Omega_Y)
    val, _ = f_rho_solve(instance, rho0, x, tol)
    return val + instance.r.value(x)
