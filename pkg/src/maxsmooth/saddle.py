"""The strongly-convex-concave saddle subproblem solved at each outer step.

Given a centre x_k and a prox parameter lam, set

    Psi(x, y) = w_X(x) / lam + Phi(x, y) - <grad w_X(x_k), x> / lam
    S_rho(x, y) = r(x) + Psi(x, y) - g(y) - rho w_Y(y)

so that p_rho(x) = max_y S_rho(x, y) equals the smoothed prox objective
Q_rho(x; x_k) up to a constant. Psi is mu-strongly convex in x relative to
w_X with mu = 1/lam - gamma. Two regimes are supported:

* Case I: an inexact maximiser of S_rho(x, .) is available. The APG runs
  on p_rho directly, splitting off mu w_X as the regulariser.
* Case II: grad_y Phi is available. The APG runs on the negated dual
  function -d_rho, each gradient coming from an inner primal solve.

Certificates come from gradient mappings, never from unknown optimal values.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .apg import (APGObjective, AccuracyNotReached, ConfigurationError, apg_average,
                  apg_run)
from .geometry import sample_set
from .gradmap import (CertifiedSolve, certify_suboptimality, gradient_mappings,
                      solve_to_tolerance)
from .problem import ProblemInstance, f_rho_solve

log = logging.getLogger(__name__)


class MissingConstantError(ValueError):
    """A constant needed by a tolerance formula is not available."""


class CertificateFailure(RuntimeError):
    """A gradient-mapping certificate could not be established."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


@dataclass(frozen=True)
class CaseIDualOracle:
    """Approximate maximiser of S_rho(x, .) with gap at most the requested epsilon.

    ``info`` may carry the last certified gap under the key ``"gap"``.
    """

    solve: Callable
    certificate: str = ""
    info: dict = field(default_factory=dict)


def exact_dual_oracle(instance: ProblemInstance, rho: float) -> CaseIDualOracle:
    """Dual oracle built on :func:`f_rho_solve` (closed form or certified APG)."""
    def solve(x, epsilon):
        return f_rho_solve(instance, rho, x, epsilon)[1]
    how = ("closed-form maximiser" if instance.coupling.dual_argmax is not None
           else "APG with gradient-mapping certificate")
    return CaseIDualOracle(solve, how)


# --------------------------------------------------------------------------
# the subproblem


@dataclass(frozen=True)
class SaddleSubproblem:
    base: ProblemInstance
    center: np.ndarray
    lam: float
    rho: float
    mu: float
    L_xx_prime: float
    L_rho_prime: float
    L_pi: Optional[float]
    grad_w_center: np.ndarray

    @property
    def lambda_(self) -> float:
        return self.lam

    # Psi and friends ---------------------------------------------------
    def psi(self, x, y) -> float:
        w = self.base.X_dgf
        return float((w.value(x) - np.dot(self.grad_w_center, x)) / self.lam
                     + self.base.coupling.value(x, y))

    def psi_grad_x(self, x, y):
        w = self.base.X_dgf
        return (w.gradient(x) - self.grad_w_center) / self.lam + self.base.coupling.grad_x(x, y)

    def psi_grad_y(self, x, y):
        gy = self.base.coupling.grad_y
        if gy is None:
            raise ConfigurationError("this instance has no grad_y oracle (Case II unavailable)")
        return gy(x, y)

    def psi_D(self, x, y) -> float:
        """Psi - g - rho w_Y."""
        b = self.base
        return self.psi(x, y) - b.g.value(y) - self.rho * b.Y_dgf.value(y)

    def psi_P(self, x, y) -> float:
        """Psi + r."""
        return self.psi(x, y) + self.base.r.value(x)

    def S(self, x, y) -> float:
        return self.psi_D(x, y) + self.base.r.value(x)

    def shift_constant(self) -> float:
        """Q_rho(x; x_k) - p_rho(x), independent of x."""
        w = self.base.X_dgf
        c = self.center
        return float((-w.value(c) + np.dot(self.grad_w_center, c)) / self.lam)

    # values -----------------------------------------------------------
    def primal_value(self, x, tol: float, y0=None):
        """(p_rho(x) within tol from below, approximate maximiser)."""
        val, y = f_rho_solve(self.base, self.rho, x, tol, y0)
        w = self.base.X_dgf
        lin = (w.value(x) - np.dot(self.grad_w_center, x)) / self.lam
        return float(val + lin + self.base.r.value(x)), y

    def dual_value(self, y, tol: float, x0=None):
        """(d_rho(y) within tol from above, approximate inner minimiser)."""
        x = inner_primal_solve(self, y, tol, x0)
        b = self.base
        return self.psi_P(x, y) - b.g.value(y) - self.rho * b.Y_dgf.value(y), x


def build_subproblem(instance: ProblemInstance, x_k, lam: float, rho: float) -> SaddleSubproblem:
    """Assemble the subproblem at centre ``x_k`` with its constants."""
    c = instance.coupling
    if not (lam > 0):
        raise ConfigurationError("lambda must be positive")
    if rho < 0:
        raise ConfigurationError("rho must be nonnegative")
    mu = 1.0 / lam - c.gamma
    if not (mu > 0):
        raise ConfigurationError(f"1/lambda = {1.0 / lam:.6g} must exceed gamma = {c.gamma:.6g}")
    x_k = np.asarray(x_k, float)
    if not instance.X.membership(x_k):
        raise ConfigurationError("the centre is not a feasible primal point")
    beta = instance.beta_X
    if not math.isfinite(beta):
        raise ConfigurationError("the primal DGF must have a Lipschitz gradient")
    L_xx_p = c.L_xx + beta / lam
    L_rho_p = L_xx_p + c.L_xy ** 2 / rho if rho > 0 else math.inf
    L_pi = None
    if c.grad_y is not None:
        L_pi = float(c.L_yy or 0.0) + c.L_xy ** 2 / mu
    return SaddleSubproblem(instance, x_k, float(lam), float(rho), float(mu), float(L_xx_p),
                            float(L_rho_p), L_pi, instance.X_dgf.gradient(x_k))


# --------------------------------------------------------------------------
# Case I


def delta_1(sub: SaddleSubproblem, epsilon: float) -> float:
    """Inner dual accuracy that keeps the gradient error admissible."""
    L, mu, rho, Lxy = sub.L_rho_prime, sub.mu, sub.rho, sub.base.coupling.L_xy
    if Lxy == 0:
        return math.inf
    return (epsilon * rho * mu ** 1.5
            / (392.0 * Lxy ** 2 * math.sqrt(L) * (1.0 + math.sqrt(L / mu)) ** 2))


def case1_epsilons(sub: SaddleSubproblem, epsilon: float):
    """(eps_1, eps_2): primal accuracy and the final dual-oracle accuracy."""
    b = sub.base
    M_Y, M_w = b.coupling.M_Y, b.M_omega_Y
    if M_Y is None:
        raise MissingConstantError("M_Y (Lipschitz constant of Phi(x, .)) is unknown")
    if M_w is None:
        raise MissingConstantError("M_omega_Y (Lipschitz constant of the dual DGF) is unknown")
    M = M_Y + b.g.lipschitz_M
    rho, mu, Lxy = sub.rho, sub.mu, b.coupling.L_xy
    inner = min(rho ** 2 / M ** 2 if M > 0 else math.inf,
                1.0 / M_w ** 2 if M_w > 0 else math.inf)
    eps1 = min(epsilon / 4.0, epsilon ** 2 * mu / (512.0 * Lxy ** 2) * inner)
    eps2 = epsilon ** 2 / 512.0 * min(rho / M ** 2 if M > 0 else math.inf,
                                      1.0 / (M_w ** 2 * rho) if M_w > 0 else math.inf)
    return eps1, eps2


def _case1_objective(sub: SaddleSubproblem, oracle: CaseIDualOracle, d1: float):
    w = sub.base.X_dgf
    Lxy = sub.base.coupling.L_xy
    obj = APGObjective(None, sub.L_rho_prime, sub.mu, w, sub.base.X, sub.base.r,
                       Lxy * math.sqrt(2.0 * d1 / sub.rho))

    def grad(x):
        y = oracle.solve(x, d1)
        got = oracle.info.get("gap")
        if got is not None and got > d1:
            # oracle stopped at its precision floor: widen the error bound
            obj.delta = max(obj.delta, Lxy * math.sqrt(2.0 * got / sub.rho))
        return sub.psi_grad_x(x, y) - sub.mu * w.gradient(x)

    obj.grad = grad
    return obj


def solve_primal_case1_full(sub: SaddleSubproblem, oracle: CaseIDualOracle, epsilon: float,
                            x0=None, max_iter: int = 200_000) -> CertifiedSolve:
    if sub.rho <= 0:
        raise ConfigurationError("Case I needs rho > 0")
    d1 = delta_1(sub, epsilon)
    obj = _case1_objective(sub, oracle, d1)
    start = sub.center if x0 is None else x0
    out = solve_to_tolerance(obj, epsilon, start, max_iter)
    if out.certified_gap > epsilon:
        raise CertificateFailure(
            f"Case I primal solve stalled at certified gap {out.certified_gap:.3e} > {epsilon:.3e}",
            {"certified_gap": out.certified_gap, "iterations": out.iterations})
    return out


def solve_primal_case1(sub: SaddleSubproblem, oracle: CaseIDualOracle, epsilon: float,
                       x0=None, max_iter: int = 200_000):
    """x with p_rho(x) - p*_rho <= epsilon, certified by a gradient mapping.

    Each APG gradient queries the dual oracle at accuracy delta_1, which
    bounds the gradient error by L_xy sqrt(2 delta_1 / rho). The run stops as
    soon as the certificate holds (typically well before the worst-case
    iteration budget).
    """
    return solve_primal_case1_full(sub, oracle, epsilon, x0, max_iter).point


def recover_dual_case1(sub: SaddleSubproblem, x_eps1, oracle: CaseIDualOracle, epsilon: float):
    """One oracle call at accuracy eps_2 turns an eps_1-primal point into a dual point."""
    _, eps2 = case1_epsilons(sub, epsilon)
    return oracle.solve(np.asarray(x_eps1, float), eps2)


# --------------------------------------------------------------------------
# Case II


def _inner_primal_objective(sub: SaddleSubproblem, y) -> APGObjective:
    w = sub.base.X_dgf
    mu = sub.mu
    y = np.asarray(y, float)

    def grad(x):
        return sub.psi_grad_x(x, y) - mu * w.gradient(x)

    return APGObjective(grad, sub.L_xx_prime, mu, w, sub.base.X, sub.base.r, 0.0)


def inner_primal_solve_full(sub: SaddleSubproblem, y, delta: float, x0=None,
                            max_iter: int = 200_000) -> CertifiedSolve:
    if not (delta > 0):
        raise ConfigurationError("delta must be positive")
    start = sub.center if x0 is None else x0
    return solve_to_tolerance(_inner_primal_objective(sub, y), delta, start, max_iter)


def inner_primal_solve(sub: SaddleSubproblem, y, delta: float, x0=None,
                       max_iter: int = 200_000):
    """x with psi_P(x, y) - min psi_P(., y) <= delta (exact-gradient APG, certified)."""
    return inner_primal_solve_full(sub, y, delta, x0, max_iter).point


def delta_2(sub: SaddleSubproblem, epsilon: float) -> float:
    """Inner primal accuracy for the dual APG."""
    L = max(sub.L_pi, sub.rho)
    rho, mu, Lxy = sub.rho, sub.mu, sub.base.coupling.L_xy
    if Lxy == 0:
        return math.inf
    return (epsilon * mu * rho ** 1.5
            / (392.0 * Lxy ** 2 * math.sqrt(L) * (1.0 + math.sqrt(L / rho)) ** 2))


@dataclass
class DualSolve:
    y: np.ndarray
    iterations: int
    x_last: Optional[np.ndarray]
    stopped_early: bool
    early_point: Optional[np.ndarray] = None


def solve_dual_case2_full(sub: SaddleSubproblem, epsilon: float, y0=None,
                          callback: Optional[Callable] = None,
                          k_max: Optional[int] = None, x0=None) -> DualSolve:
    if sub.base.coupling.grad_y is None:
        raise ConfigurationError("Case II needs grad_y")
    if sub.rho <= 0:
        raise ConfigurationError("Case II needs rho > 0")
    b = sub.base
    L_h = max(sub.L_pi, sub.rho)
    d2 = delta_2(sub, epsilon)
    err = b.coupling.L_xy * math.sqrt(2.0 * d2 / sub.mu) * (1.0 - 1e-12)
    warm = {"x": sub.center if x0 is None else np.asarray(x0, float)}

    def grad(y):
        x = inner_primal_solve(sub, y, d2, warm["x"])
        warm["x"] = x
        return -sub.psi_grad_y(x, y)

    obj = APGObjective(grad, L_h, sub.rho, b.Y_dgf, b.Y, b.g, err)
    start = b.Y.interior_point if y0 is None else np.asarray(y0, float)
    cb = None
    if callback is not None:
        def cb(state):
            return callback(state, warm["x"])
    run = apg_run(obj, epsilon, start, k_max=k_max, D="auto", callback=cb)
    if run.stopped_by_callback:
        return DualSolve(apg_average(run.state), run.iterations, warm["x"], True, run.u_bar)
    return DualSolve(run.u_bar, run.iterations, warm["x"], False)


def solve_dual_case2(sub: SaddleSubproblem, epsilon: float, y0=None,
                     k_max: Optional[int] = None):
    """y with d*_rho - d_rho(y) <= epsilon.

    Runs the APG on -d_rho = -pi + g + rho w_Y for the full iteration
    budget. Each gradient -grad_y Phi(x, y) uses an inner primal solve at
    accuracy delta_2, which keeps the gradient error admissible.
    """
    return solve_dual_case2_full(sub, epsilon, y0, None, k_max).y


def compute_B_bounds(sub: SaddleSubproblem, n_samples: int = 1000, seed: int = 0,
                     inflation: float = 2.0):
    """Upper bounds (B_f, B_omega) on ||grad f_bar_rho(x*_rho)|| and ||grad w_X(x*_rho)||.

    A bootstrap pair is computed once with rho = 1 and accuracies 1/2. The
    sup over Y of ||grad_x Psi(x_b, y)|| is estimated from random dual
    points plus the bootstrap dual point and multiplied by ``inflation``.
    """
    b = sub.base
    c = b.coupling
    sub1 = build_subproblem(b, sub.center, sub.lam, 1.0)
    y_b = solve_dual_case2(sub1, 0.5)
    x_b = inner_primal_solve(sub1, y_b, 0.5)
    geo = b.X_dgf.geometry
    rng = np.random.default_rng(seed)
    pts = list(sample_set(b.Y, rng, n_samples)) + [y_b]
    sup = max(geo.dual_norm(sub.psi_grad_x(x_b, y)) for y in pts) * inflation
    mu, rho, Om = sub.mu, sub.rho, b.Omega_Y
    Lxy, Lxx_p, L_rho_p, beta = c.L_xy, sub.L_xx_prime, sub.L_rho_prime, b.beta_X
    rm = math.sqrt(mu)
    B_f = (Lxy * b.D_Y + sup + Lxx_p / rm * (1.0 + Lxy / rm + 2.0 * math.sqrt(Om))
           + 2.0 * L_rho_p * math.sqrt(rho * Om / mu))
    B_w = (geo.dual_norm(b.X_dgf.gradient(x_b))
           + beta / rm * (1.0 + Lxy / rm + 2.0 * math.sqrt(Om) * (1.0 + math.sqrt(rho))))
    return float(B_f), float(B_w)


def case2_epsilons(sub: SaddleSubproblem, epsilon: float, B_f: float, B_omega: float):
    """(eps_3, eps_4): dual accuracy and the final inner primal accuracy."""
    b = sub.base
    Lxy, mu, rho = b.coupling.L_xy, sub.mu, sub.rho
    common = min(epsilon / (8.0 * (B_f + b.r.lipschitz_M + B_omega) ** 2),
                 1.0 / (sub.L_rho_prime + b.beta_X))
    eps3 = min(epsilon * mu ** 2 * rho / (64.0 * Lxy ** 2) * common, epsilon / 4.0)
    eps4 = epsilon * mu / 64.0 * common
    return eps3, eps4


def recover_primal_case2(sub: SaddleSubproblem, y_eps3, epsilon: float, B=None, x0=None):
    """One inner primal solve at accuracy eps_4 at the dual point."""
    B_f, B_w = compute_B_bounds(sub) if B is None else B
    _, eps4 = case2_epsilons(sub, epsilon, B_f, B_w)
    return inner_primal_solve(sub, y_eps3, eps4, x0)


# --------------------------------------------------------------------------
# duality gap


@dataclass(frozen=True)
class GapReport:
    """Computed p_rho(x) - d_rho(y); the true gap lies in [value, value + 2 tol]."""

    value: float
    tol: float
    primal: float
    dual: float

    @property
    def interval(self):
        return self.value, self.value + 2.0 * self.tol

    @property
    def upper(self) -> float:
        return self.value + 2.0 * self.tol

    def __float__(self):
        return self.value


def duality_gap(sub: SaddleSubproblem, x, y, tol: float) -> GapReport:
    """Delta_rho(x, y) = p_rho(x) - d_rho(y) with both sides solved to ``tol``.

    p_rho is computed from below and d_rho from above, so the true gap is
    at least the reported value and at most value + 2 tol.
    """
    p, _ = sub.primal_value(np.asarray(x, float), tol)
    d, _ = sub.dual_value(np.asarray(y, float), tol)
    return GapReport(p - d, tol, p, d)


# --------------------------------------------------------------------------
# the outer step


@dataclass
class Step2Result:
    x: np.ndarray
    certified_gap: float
    mode: str
    diagnostics: dict
    counters: dict


def primal_certificate(sub: SaddleSubproblem, x, epsilon: float):
    """Gradient-mapping certificate for p_rho at x (returns the mapping result).

    grad f_bar_rho(x) is formed from a dual solve accurate enough that the
    error term uses at most half of the certificate budget.
    """
    b = sub.base
    Lxy = b.coupling.L_xy
    tol_c = sub.rho * sub.mu * epsilon / (6.0 * Lxy ** 2) if Lxy > 0 else 1.0
    _, y = f_rho_solve(b, sub.rho, x, tol_c)
    e = Lxy * math.sqrt(2.0 * tol_c / sub.rho)
    g = sub.psi_grad_x(x, y)
    return gradient_mappings(sub, x, g, e)


def _counter_delta(before, after):
    if before is None:
        return {}
    return {k: after[k] - before[k] for k in after}


def step2_solve(instance: ProblemInstance, x_k, lam: float, rho: float, eta: float,
                mode: str = "CaseII", oracle: Optional[CaseIDualOracle] = None,
                early_stop: bool = True, check_every: Optional[int] = None) -> Step2Result:
    """x_{k+1} with Q_rho(x_{k+1}; x_k) - min Q_rho(.; x_k) <= eta, certified.

    Case I runs the primal APG with the instance's dual oracle (the
    ``case1_oracle`` factory in ``instance.meta`` when present). Case II
    runs the dual APG; with ``early_stop`` the primal certificate is
    checked every ``check_every`` iterations at the current dual average
    and the first certified point is returned. Otherwise the full
    eps_3 / eps_4 cascade is followed and its output certified.
    """
    cnt = instance.counter
    before = cnt.snapshot() if cnt is not None else None
    sub = build_subproblem(instance, x_k, lam, rho)
    diag = {"mu": sub.mu, "L_rho_prime": sub.L_rho_prime, "L_pi": sub.L_pi}
    mode_n = mode.replace(" ", "").lower()
    if mode_n in ("casei", "case1", "i"):
        if oracle is None:
            factory = instance.meta.get("case1_oracle", exact_dual_oracle)
            oracle = factory(instance, rho)
        out = solve_primal_case1_full(sub, oracle, eta)
        diag.update(iterations=out.iterations, at_precision_floor=out.at_precision_floor)
        x_next, gap, label = out.point, out.certified_gap, "CaseI"
    elif mode_n in ("caseii", "case2", "ii"):
        x_next, gap = _step2_case2(sub, eta, early_stop, check_every, diag)
        label = "CaseII"
    else:
        raise ConfigurationError(f"unknown mode {mode!r}; use CaseI or CaseII")
    after = cnt.snapshot() if cnt is not None else None
    diag["certified_gap"] = gap
    return Step2Result(x_next, gap, label, diag, _counter_delta(before, after))


def _step2_case2(sub, eta, early_stop, check_every, diag):
    found = {}
    callback = None
    if early_stop:
        every = check_every or max(1, int(math.ceil(math.sqrt(max(sub.L_pi, sub.rho) / sub.rho))))

        def callback(state, x_warm):
            if state.t % every:
                return None
            y = apg_average(state)
            x = inner_primal_solve(sub, y, sub.mu * eta / 64.0, x_warm)
            m = primal_certificate(sub, x, eta)
            if certify_suboptimality(m, sub.mu, eta):
                found["x"], found["gap"] = m.x_plus, m.certified_gap(sub.mu)
                return y
            return None

        B = None
        eps3 = eta / 4.0
        try:
            B = compute_B_bounds(sub)
            eps3, _ = case2_epsilons(sub, eta, *B)
        except AccuracyNotReached:
            log.warning("bootstrap for the B bounds failed; using eps_3 = eta / 4")
    else:
        B = compute_B_bounds(sub)
        eps3, _ = case2_epsilons(sub, eta, *B)
    diag["eps3"] = eps3
    ds = solve_dual_case2_full(sub, eps3, callback=callback)
    diag["dual_iterations"] = ds.iterations
    diag["stopped_early"] = ds.stopped_early
    if "x" in found:
        return found["x"], found["gap"]
    if B is None:
        B = compute_B_bounds(sub)
    x = recover_primal_case2(sub, ds.y, eta, B, ds.x_last)
    m = primal_certificate(sub, x, eta)
    gap = m.certified_gap(sub.mu)
    if not certify_suboptimality(m, sub.mu, eta):
        raise CertificateFailure(
            f"Case II step certificate failed: certified gap {gap:.3e} > eta = {eta:.3e}",
            dict(diag, certified_gap=gap))
    return m.x_plus, gap
