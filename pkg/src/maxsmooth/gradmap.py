"""Inexact gradient mappings and the suboptimality certificate they give.

For P = h + phi + mu*w with h convex and L-smooth, pick lam <= 1/L and set

    x+    = argmin <g, x> + phi(x) + mu w(x) + D(x, x_bar) / lam
    G     = (x_bar - x+) / lam
    G_bar = (grad w(x_bar) - grad w(x+)) / lam

where g approximates grad h(x_bar) with error at most ``error_bound`` in the
dual norm. If ||G_bar||_*^2 + ||G||^2 + error_bound^2 <= 2 mu eps / 3, then
P(x+) - min P <= eps. No optimal value is needed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .apg import make_prox_binding


@dataclass(frozen=True)
class GradientMappingResult:
    x_plus: np.ndarray
    G: np.ndarray
    G_bar: np.ndarray
    error_norm_bound: float
    G_norm: float
    G_bar_dual_norm: float
    lam: float

    @property
    def residual_sq(self) -> float:
        return self.G_bar_dual_norm ** 2 + self.G_norm ** 2 + self.error_norm_bound ** 2

    def certified_gap(self, mu: float) -> float:
        """Smallest eps this mapping certifies: 3 * residual / (2 mu)."""
        return 1.5 * self.residual_sq / mu


def composite_gradient_mapping(dgf, fset, phi, mu: float, L: float, x_bar, grad,
                               error_bound: float = 0.0, lam=None) -> GradientMappingResult:
    """Gradient mappings of h + phi + mu*w at ``x_bar`` given an approximate grad h."""
    lam = 1.0 / L if lam is None else float(lam)
    if not (0.0 < lam <= 1.0 / L * (1.0 + 1e-12)):
        raise ValueError(f"lam must lie in (0, 1/L] = (0, {1.0 / L:.6g}], got {lam:.6g}")
    x_bar = np.asarray(x_bar, float)
    prox = make_prox_binding(dgf, fset, phi, mu)
    x_plus = prox(np.asarray(grad, float), x_bar, 1.0 / lam)
    G = (x_bar - x_plus) / lam
    G_bar = (dgf.gradient(x_bar) - dgf.gradient(x_plus)) / lam
    geo = dgf.geometry
    return GradientMappingResult(x_plus, G, G_bar, float(error_bound),
                                 geo.norm(G), geo.dual_norm(G_bar), lam)


def gradient_mappings(sub, x_bar, grad_hat, error_bound: float, lam=None) -> GradientMappingResult:
    """Gradient mappings of the primal saddle objective at ``x_bar``.

    ``grad_hat`` approximates the gradient of the smoothed max-part at
    ``x_bar``. The strongly convex part mu*w_X is split off before
    linearising, so the smooth part has modulus at most ``sub.L_rho_prime``.
    """
    L = sub.L_rho_prime
    x_bar = np.asarray(x_bar, float)
    w = sub.base.X_dgf
    g = np.asarray(grad_hat, float) - sub.mu * w.gradient(x_bar)
    return composite_gradient_mapping(w, sub.base.X, sub.base.r, sub.mu, L, x_bar, g,
                                      error_bound, lam)


def certify_suboptimality(result: GradientMappingResult, mu: float, epsilon: float) -> bool:
    """True iff ||G_bar||_*^2 + ||G||^2 + e^2 <= 2 mu eps / 3."""
    return result.residual_sq <= 2.0 * mu * epsilon / 3.0


@dataclass
class CertifiedSolve:
    point: np.ndarray
    certified_gap: float
    iterations: int
    at_precision_floor: bool


def solve_to_tolerance(objective, tol: float, u0, max_iter: int = 200_000) -> CertifiedSolve:
    """Run the APG until a gradient-mapping certificate proves P(u) - P* <= tol.

    The certificate is evaluated at every extrapolated point using the
    gradient the method already computed there, so it costs one extra
    proximal step and no oracle calls. Because the extrapolated points lag
    behind the iterates when L_h/mu is large, the latest iterate and the
    weighted average are also checked every ceil(tau) iterations (one
    gradient call each). When the iterates stop moving at machine precision
    before any certificate passes, the best certified point is returned
    with ``at_precision_floor=True``. Hitting ``max_iter`` raises
    :class:`AccuracyNotReached`.
    """
    from .apg import AccuracyNotReached, apg_average, apg_init, apg_schedule, apg_step

    cfg = apg_schedule(objective.L_h, objective.mu)
    prox = make_prox_binding(objective.dgf, objective.fset, objective.phi, cfg.mu)
    last = {}

    def grad(u):
        g = objective.grad(u)
        last["u"], last["g"] = u, g
        return g

    dgf, geo = objective.dgf, objective.dgf.geometry
    thresh_factor = 2.0 * cfg.mu / 3.0
    L = objective.L_h
    best = [np.inf, None]

    def check(x_bar, g):
        x_plus = prox(g, x_bar, L)
        G_n = geo.norm(x_bar - x_plus) * L
        Gb_n = geo.dual_norm(dgf.gradient(x_bar) - dgf.gradient(x_plus)) * L
        # the gradient oracle may widen its error bound as it goes
        res = G_n * G_n + Gb_n * Gb_n + objective.delta ** 2
        gap = 1.5 * res / cfg.mu
        if gap < best[0]:
            best[0], best[1] = gap, x_plus
        return res <= thresh_factor * tol, x_plus, gap

    every = max(1, int(math.ceil(cfg.tau)))
    still = 0
    state = apg_init(u0)
    for _ in range(max_iter):
        state = apg_step(state, cfg, grad, prox)
        ok, x_plus, gap = check(last["u"], last["g"])
        if ok:
            return CertifiedSolve(x_plus, gap, state.t, False)
        step = np.abs(state.u_prev - state.u_prev2).max()
        scale = 1.0 + np.abs(state.u_prev).max()
        still = still + 1 if step <= 8 * np.finfo(float).eps * scale else 0
        if state.t % every == 0 or still >= 5:
            for cand in (state.u_prev, apg_average(state)):
                ok, x_plus, gap = check(cand, objective.grad(cand))
                if ok:
                    return CertifiedSolve(x_plus, gap, state.t, False)
        if still >= 5:
            return CertifiedSolve(best[1], best[0], state.t, True)
    raise AccuracyNotReached(
        f"no certificate for tol={tol:.3e} after {max_iter} iterations; "
        f"best certified gap {best[0]:.3e}", best[0], best[1])
