"""Benchmark problem families with their constants.

* distributionally robust risk minimisation over a total-variation ball
  inside the simplex (Huber or squared scenario losses),
* the pointwise maximum of finitely many smooth (possibly nonconvex)
  functions, written as a max over the simplex,
* the largest eigenvalue of a factorised matrix, written as a max over the
  spectraplex,
* a bilinear-plus-quadratic toy with box constraints on both sides.

Every constant handed to :class:`CouplingFunction` is a valid upper bound
derived in the docstring of its builder. Instances can also be built from
plain JSON-style dictionaries with :func:`instance_from_dict`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .geometry import (ENTROPY_CLAMP, VectorSpaceGeometry, make_dgf, make_set,
                       project_simplex, project_tv_simplex)
from .problem import CouplingFunction, ProblemInstance, zero_term

__all__ = [
    "ScenarioLosses", "huber_losses", "squared_losses", "make_dro_instance",
    "dro_dual_oracle", "QuadraticPieces", "FunctionPieces", "quadratic_pieces",
    "make_finite_max_instance", "make_eig_factor_instance",
    "make_bilinear_quadratic_instance", "instance_from_dict", "FAMILIES",
    "make_finite_max_instance_from_dim", "example2_toy", "example3_instance", "bilinear_toy",
    "dro_toy",
]


def _huber(t, kappa):
    a = np.abs(t)
    return np.where(a <= kappa, 0.5 * t * t, kappa * (a - 0.5 * kappa))


def _huber_prime(t, kappa):
    return np.clip(t, -kappa, kappa)


# --------------------------------------------------------------------------
# scenario losses for the DRO family


@dataclass(frozen=True)
class ScenarioLosses:
    """n scalar losses l_i(x) = s(<a_i, x> - b_i) evaluated together.

    ``shape`` is ``huber`` (with threshold ``kappa``) or ``squared``.
    Rows of ``A`` are the scenario vectors xi_i.
    """

    A: np.ndarray
    b: np.ndarray
    shape: str = "huber"
    kappa: float = 1.0

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def dim(self) -> int:
        return self.A.shape[1]

    def values(self, x) -> np.ndarray:
        t = self.A @ x - self.b
        if self.shape == "huber":
            return _huber(t, self.kappa)
        return 0.5 * t * t

    def jacobian(self, x) -> np.ndarray:
        t = self.A @ x - self.b
        d = _huber_prime(t, self.kappa) if self.shape == "huber" else t
        return d[:, None] * self.A

    @property
    def smoothness(self) -> np.ndarray:
        """Per-scenario smoothness L(xi_i) = ||a_i||^2."""
        return np.sum(self.A ** 2, axis=1)

    def residual_bound(self, radius_inf) -> np.ndarray:
        """sup |<a_i, x> - b_i| over a box of half-width ``radius_inf``."""
        return np.abs(self.A).sum(axis=1) * radius_inf + np.abs(self.b)

    def grad_bounds(self, radius_inf=math.inf) -> np.ndarray:
        """sup_x ||grad l_i(x)||_2, finite on all of R^d for Huber losses."""
        norms = np.linalg.norm(self.A, axis=1)
        if self.shape == "huber":
            t_max = np.minimum(self.kappa, self.residual_bound(radius_inf))
            return t_max * norms
        return self.residual_bound(radius_inf) * norms

    def value_bounds(self, radius_inf) -> np.ndarray:
        t = self.residual_bound(radius_inf)
        return _huber(t, self.kappa) if self.shape == "huber" else 0.5 * t * t


def huber_losses(A, b, kappa: float = 1.0) -> ScenarioLosses:
    return ScenarioLosses(np.atleast_2d(np.asarray(A, float)), np.asarray(b, float).ravel(),
                          "huber", float(kappa))


def squared_losses(A, b) -> ScenarioLosses:
    return ScenarioLosses(np.atleast_2d(np.asarray(A, float)), np.asarray(b, float).ravel(),
                          "squared")


def make_dro_instance(losses: ScenarioLosses, p_bar=None, alpha: float = 0.5,
                      dim: Optional[int] = None, radius: float = 2.0,
                      gamma: Optional[float] = None) -> ProblemInstance:
    """min_{x in [-R, R]^d} max_{p in P} sum_i p_i l_i(x), P = TV-ball in the simplex.

    The dual side uses the Euclidean DGF, so Omega_Y = 1/2 and M_w = 1 on
    the simplex. Constants, with ``g_i`` = sup ||grad l_i||:

    * L_xx = max_i ||a_i||^2 (each l_i is ||a_i||^2-smooth, p sums to one)
    * L_xy = sqrt(sum_i g_i^2) (Cauchy-Schwarz on sum_i (p_i - p'_i) grad l_i)
    * L_xp = max_i g_i in ``meta`` (the same cross term against ||p - p'||_1)
    * M_Y = sup_x ||l(x)||_2 over the box

    Huber losses have bounded derivatives on all of R^d, so ``radius`` may
    be infinite for them. Squared losses need a finite box.
    """
    n, d = losses.n, losses.dim
    if dim is not None and dim != d:
        raise ValueError(f"dim={dim} does not match the scenario data ({d})")
    if n < 2:
        raise ValueError("the DRO family needs at least two scenarios")
    if not (0.0 < alpha <= 1.0):
        raise ValueError("alpha must lie in (0, 1]")
    p_bar = np.full(n, 1.0 / n) if p_bar is None else np.asarray(p_bar, float)
    if p_bar.shape != (n,) or np.any(p_bar < 0) or abs(p_bar.sum() - 1.0) > 1e-9:
        raise ValueError("p_bar must be a point of the simplex")
    g_bounds = losses.grad_bounds(radius)
    if not np.all(np.isfinite(g_bounds)):
        raise ValueError("unbounded loss derivatives need a bounded primal box (finite radius)")
    if not math.isfinite(radius):
        # Huber losses: the smoothed problem is fine, but M_Y needs a box
        M_Y = None
    else:
        M_Y = float(np.linalg.norm(losses.value_bounds(radius)))

    L_xx = float(losses.smoothness.max())
    L_xy = float(np.linalg.norm(g_bounds))
    L_xp = float(g_bounds.max())

    X = make_set("box", d, lo=-radius, hi=radius)
    X_dgf = make_dgf("euclidean", VectorSpaceGeometry(d))
    Y = make_set("tv_ball_in_simplex", n, p_bar=p_bar, alpha=alpha)
    Y_dgf = make_dgf("euclidean", VectorSpaceGeometry(n), Y)

    def value(x, p):
        return float(p @ losses.values(x))

    def grad_x(x, p):
        return p @ losses.jacobian(x)

    def grad_y(x, p):
        return losses.values(x)

    def dual_argmax(x, rho):
        return project_tv_simplex(losses.values(x) / rho, p_bar, alpha)

    coupling = CouplingFunction(value, grad_x, L_xx, L_xy, grad_y, 0.0,
                                L_xx if gamma is None else gamma, M_Y, 0.0, dual_argmax)
    meta = {"family": "dro", "L_xp": L_xp, "losses": losses, "p_bar": p_bar, "alpha": alpha,
            "case1_oracle": dro_dual_oracle}
    return ProblemInstance(coupling, zero_term(), zero_term(), X, X_dgf, Y, Y_dgf, 0.0,
                           "dro", meta)


def dro_dual_oracle(instance: ProblemInstance, rho: float, max_iter: int = 10_000):
    """Inexact maximiser of sum_i p_i l_i(x) - (rho/2)||p||^2 over the TV-ball.

    Proximal gradient ascent on the rho-strongly concave objective, each
    step an exact Euclidean projection onto the TV-ball in the simplex.
    The gap is certified by the gradient-mapping bound with mu = rho and
    step 1/rho, so no optimal value is needed. The last certified gap is
    kept in ``oracle.info["gap"]``.
    """
    from .gradmap import composite_gradient_mapping
    from .saddle import CaseIDualOracle

    if instance.Y_dgf.kind != "euclidean":
        raise ValueError("the DRO oracle needs the Euclidean dual DGF")
    if rho <= 0:
        raise ValueError("rho must be positive")
    c = instance.coupling
    info = {"gap": math.inf, "steps": 0}

    def solve(x, epsilon):
        ell = c.grad_y(x, None)
        p = instance.Y.interior_point
        still = 0
        for it in range(1, max_iter + 1):
            m = composite_gradient_mapping(instance.Y_dgf, instance.Y, None, rho, rho, p, -ell)
            gap = m.certified_gap(rho)
            info["gap"], info["steps"] = gap, it
            if gap <= epsilon:
                return m.x_plus
            still = still + 1 if np.abs(m.x_plus - p).max() <= 1e-15 else 0
            if still >= 3:
                # the ascent has converged to rounding level
                return m.x_plus
            p = m.x_plus
        raise RuntimeError(f"DRO dual oracle: no certificate for eps={epsilon:.3e} "
                           f"after {max_iter} steps (gap {info['gap']:.3e})")

    return CaseIDualOracle(solve, "proximal gradient ascent; gap bounded by the "
                                  "strong-concavity gradient-mapping certificate", info)


# --------------------------------------------------------------------------
# finite max of smooth functions


@dataclass(frozen=True)
class QuadraticPieces:
    """l_i(x) = offset_i + (curv_i / 2) ||x - c_i||^2 (rows of ``centers``)."""

    centers: np.ndarray
    curvatures: np.ndarray
    offsets: np.ndarray

    @property
    def n(self) -> int:
        return self.centers.shape[0]

    @property
    def dim(self) -> int:
        return self.centers.shape[1]

    def values(self, x) -> np.ndarray:
        diff = x - self.centers
        return self.offsets + 0.5 * self.curvatures * np.sum(diff * diff, axis=1)

    def jacobian(self, x) -> np.ndarray:
        return self.curvatures[:, None] * (x - self.centers)

    def smoothness(self) -> np.ndarray:
        return np.abs(self.curvatures)

    def weak_convexity(self) -> float:
        return float(max(0.0, -self.curvatures.min()))

    def grad_bounds(self, lo, hi) -> np.ndarray:
        far = np.maximum(np.abs(hi - self.centers), np.abs(lo - self.centers))
        return np.abs(self.curvatures) * np.linalg.norm(far, axis=1)

    def value_bounds(self, lo, hi) -> np.ndarray:
        far = np.maximum(np.abs(hi - self.centers), np.abs(lo - self.centers))
        span = 0.5 * np.abs(self.curvatures) * np.sum(far * far, axis=1)
        return np.abs(self.offsets) + span


@dataclass(frozen=True)
class FunctionPieces:
    """Generic pieces from Python callables.

    ``grad_bounds`` (sup of ||grad l_i|| over X) and ``value_bounds``
    (sup |l_i| over X) must be supplied since they cannot be derived.
    """

    funcs: Sequence
    grads: Sequence
    lipschitz: np.ndarray
    grad_sup: np.ndarray
    value_sup: np.ndarray
    weak: float

    @property
    def n(self) -> int:
        return len(self.funcs)

    def values(self, x) -> np.ndarray:
        return np.array([f(x) for f in self.funcs], float)

    def jacobian(self, x) -> np.ndarray:
        return np.array([g(x) for g in self.grads], float)

    def smoothness(self) -> np.ndarray:
        return np.asarray(self.lipschitz, float)

    def weak_convexity(self) -> float:
        return float(self.weak)

    def grad_bounds(self, lo, hi) -> np.ndarray:
        return np.asarray(self.grad_sup, float)

    def value_bounds(self, lo, hi) -> np.ndarray:
        return np.asarray(self.value_sup, float)


def quadratic_pieces(centers, curvatures, offsets) -> QuadraticPieces:
    centers = np.atleast_2d(np.asarray(centers, float))
    return QuadraticPieces(centers, np.asarray(curvatures, float).ravel(),
                           np.asarray(offsets, float).ravel())


def _softmax(z):
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def make_finite_max_instance(pieces, radius: float = 1.0, dual_dgf: str = "entropy",
                             gamma: Optional[float] = None) -> ProblemInstance:
    """min_{x in [-R, R]^d} max_i l_i(x) as a max over the simplex.

    With the entropy DGF the dual space carries the l1 norm, so

    * L_xy = max_i sup ||grad l_i|| (l1/l-infinity pairing in both directions)
    * M_Y = max_i sup |l_i| (l-infinity norm of l(x))
    * Omega_Y = log n

    With the Euclidean dual DGF, L_xy = sqrt(sum_i sup ||grad l_i||^2) and
    M_Y uses the 2-norm instead. L_xx = max_i L_i and gamma defaults to L_xx.
    """
    n = pieces.n
    if n < 1:
        raise ValueError("need at least one piece")
    d = pieces.centers.shape[1] if isinstance(pieces, QuadraticPieces) else None
    if d is None:
        raise ValueError("generic pieces need make_finite_max_instance_from_dim")
    return _finite_max(pieces, d, radius, dual_dgf, gamma)


def _quadratic_lower_bound(pieces, lo, hi, max_dim=12):
    """A valid lower bound on min over the box of max_i l_i.

    Each piece is bounded below on the box in closed form and the max of
    those bounds is taken. When every piece is concave, any convex
    combination sum w_i l_i is concave too and attains its minimum at a
    vertex, so max_w min_vertex sum w_i l_i (a small LP) is also valid
    and usually much tighter.
    """
    c, curv = pieces.centers, pieces.curvatures
    near = np.clip(c, lo, hi) - c
    far = np.maximum(np.abs(hi - c), np.abs(lo - c))
    per_piece = pieces.offsets + 0.5 * curv * np.where(
        curv >= 0, np.sum(near * near, axis=1), np.sum(far * far, axis=1))
    lb = float(per_piece.max())
    d = c.shape[1]
    if np.all(curv <= 0) and d <= max_dim:
        from itertools import product
        from scipy.optimize import linprog

        verts = np.array(list(product(*zip(lo, hi))), float)
        V = np.array([pieces.values(v) for v in verts])   # vertices x pieces
        n = pieces.n
        # variables (w, t): maximize t, t <= V w, sum w = 1, w >= 0
        res = linprog(np.r_[np.zeros(n), -1.0],
                      A_ub=np.c_[-V, np.ones(len(verts))], b_ub=np.zeros(len(verts)),
                      A_eq=np.r_[np.ones(n), 0.0][None, :], b_eq=[1.0],
                      bounds=[(0, None)] * n + [(None, None)], method="highs")
        if res.status == 0:
            w = np.clip(res.x[:n], 0, None)
            w /= w.sum()
            # re-evaluate at the rounded weights so the bound stays rigorous
            lb = max(lb, float((V @ w).min()))
    return lb


def _finite_max(pieces, d, radius, dual_dgf, gamma):
    n = pieces.n
    lo, hi = np.full(d, -radius), np.full(d, radius)
    gb = pieces.grad_bounds(lo, hi)
    vb = pieces.value_bounds(lo, hi)
    L_xx = float(pieces.smoothness().max())
    if gamma is None:
        gamma = L_xx
    if gamma < pieces.weak_convexity() - 1e-12:
        raise ValueError("gamma is below the weak-convexity modulus of the pieces")

    X = make_set("box", d, lo=lo, hi=hi)
    X_dgf = make_dgf("euclidean", VectorSpaceGeometry(d))
    if dual_dgf == "entropy":
        Y = make_set("simplex", n, norm_kind="l1_dual_pairing")
        Y_dgf = make_dgf("entropy", VectorSpaceGeometry(n, "l1_dual_pairing"), Y)
        L_xy, M_Y = float(gb.max()), float(vb.max())

        def dual_argmax(x, rho):
            p = _softmax(pieces.values(x) / rho)
            return (1.0 - ENTROPY_CLAMP) * p + ENTROPY_CLAMP / n
    elif dual_dgf == "euclidean":
        Y = make_set("simplex", n)
        Y_dgf = make_dgf("euclidean", VectorSpaceGeometry(n), Y)
        L_xy, M_Y = float(np.linalg.norm(gb)), float(np.linalg.norm(vb))

        def dual_argmax(x, rho):
            return project_simplex(pieces.values(x) / rho)
    else:
        raise ValueError(f"unsupported dual DGF {dual_dgf!r}")

    def value(x, p):
        return float(p @ pieces.values(x))

    def grad_x(x, p):
        return p @ pieces.jacobian(x)

    def grad_y(x, p):
        return pieces.values(x)

    coupling = CouplingFunction(value, grad_x, L_xx, L_xy, grad_y, 0.0, gamma, M_Y, 0.0,
                                dual_argmax)
    if isinstance(pieces, QuadraticPieces):
        lb = _quadratic_lower_bound(pieces, lo, hi)
    else:
        # max_i l_i >= l_j >= -sup |l_j| for every j
        lb = -float(vb.min())
    meta = {"family": "finite_max", "pieces": pieces}
    return ProblemInstance(coupling, zero_term(), zero_term(), X, X_dgf, Y, Y_dgf,
                           lb, "finite_max", meta)


def make_finite_max_instance_from_dim(pieces: FunctionPieces, dim: int, radius: float = 1.0,
                                      dual_dgf: str = "entropy",
                                      gamma: Optional[float] = None) -> ProblemInstance:
    """Same as :func:`make_finite_max_instance` for callable pieces."""
    return _finite_max(pieces, dim, radius, dual_dgf, gamma)


def example2_toy() -> ProblemInstance:
    """Three concave-down quadratics in the plane, max is nonnegative on the box."""
    centers = [[0.6, 0.0], [-0.3, 0.5], [-0.3, -0.5]]
    return make_finite_max_instance(quadratic_pieces(centers, [-1.0, -1.0, -1.0],
                                                     [3.0, 3.0, 3.0]), radius=1.0)


# --------------------------------------------------------------------------
# factorised largest eigenvalue


def make_eig_factor_instance(B, alpha1: float = 1.0, alpha2: float = 1.0, k: int = 2,
                             gamma: Optional[float] = None) -> ProblemInstance:
    """min_{||U||_F <= a1, ||V||_F <= a2} lambda_max(sym(UV + B)).

    x stacks U (n x k) and V (k x n) row-major; the dual variable is a point
    of the spectraplex with the matrix-entropy DGF (nuclear norm). Then
    Phi(x, Y) = <sym(UV + B), Y> with

    * grad_U = Y V^T, grad_V = U^T Y (Y symmetric)
    * L_xx = 1, L_xy = sqrt(a1^2 + a2^2), L_yy = 0
    * M_Y = a1 a2 + ||B||_2 and Omega_Y = log n.

    The symmetric part of UV + B is used so the max over the spectraplex is
    exactly its largest eigenvalue.
    """
    B = np.asarray(B, float)
    n = B.shape[0]
    if B.shape != (n, n):
        raise ValueError("B must be square")
    if not (alpha1 > 0 and alpha2 > 0):
        raise ValueError("alphas must be positive")
    if not (1 <= k <= n):
        raise ValueError("need 1 <= k <= n")
    Bs = 0.5 * (B + B.T)
    nk = n * k
    X = make_set("frobenius_ball_product", 2 * nk, sizes=[nk, nk], radii=[alpha1, alpha2])
    X_dgf = make_dgf("euclidean", VectorSpaceGeometry(2 * nk))
    Y = make_set("spectraplex", n * n, side=n, norm_kind="nuclear")
    Y_dgf = make_dgf("matrix_entropy", VectorSpaceGeometry(n * n, "nuclear", side=n), Y)

    def split(x):
        return x[:nk].reshape(n, k), x[nk:].reshape(k, n)

    def M(x):
        U, V = split(x)
        P = U @ V
        return 0.5 * (P + P.T) + Bs

    def value(x, y):
        return float(np.sum(M(x) * y.reshape(n, n)))

    def grad_x(x, y):
        U, V = split(x)
        Ym = y.reshape(n, n)
        Ym = 0.5 * (Ym + Ym.T)
        return np.concatenate([(Ym @ V.T).ravel(), (U.T @ Ym).ravel()])

    def grad_y(x, y):
        return M(x).ravel()

    def dual_argmax(x, rho):
        w, Q = np.linalg.eigh(M(x))
        z = np.exp((w - w.max()) / rho)
        z = z / z.sum()
        z = (1.0 - ENTROPY_CLAMP) * z + ENTROPY_CLAMP / n
        return ((Q * z) @ Q.T).ravel()

    L_xy = math.sqrt(alpha1 ** 2 + alpha2 ** 2)
    M_Y = alpha1 * alpha2 + float(np.linalg.norm(Bs, 2))
    coupling = CouplingFunction(value, grad_x, 1.0, L_xy, grad_y, 0.0,
                                1.0 if gamma is None else gamma, M_Y, 0.0, dual_argmax)
    lam_min = float(np.linalg.eigvalsh(Bs).min())
    lb = lam_min - alpha1 * alpha2
    meta = {"family": "eig_factor", "B": Bs, "n": n, "k": k, "alphas": (alpha1, alpha2)}
    return ProblemInstance(coupling, zero_term(), zero_term(), X, X_dgf, Y, Y_dgf,
                           lb, "eig_factor", meta)


def example3_instance(n: int = 4, k: int = 2, alpha1: float = 1.0,
                      alpha2: float = 1.0) -> ProblemInstance:
    """Diagonal B with a spectral gap and lambda_min(B) >= a1 a2, so q >= 0."""
    base = np.array([5.0, 3.5, 2.5, 1.5, 1.25, 1.1, 1.05, 1.0])
    diag = np.interp(np.linspace(0, len(base) - 1, n), np.arange(len(base)), base)
    diag = np.maximum(diag, alpha1 * alpha2)
    return make_eig_factor_instance(np.diag(diag), alpha1, alpha2, k)


# --------------------------------------------------------------------------
# bilinear plus quadratic toy


def make_bilinear_quadratic_instance(A, Bc, C, c=None, d=None, x_radius: float = 1.0,
                                     y_radius: float = 1.0,
                                     gamma: Optional[float] = None) -> ProblemInstance:
    """Phi(x, y) = x^T A x / 2 + c^T x + x^T B y - y^T C y / 2 - d^T y on boxes.

    L_xx = ||A||_2, L_xy = ||B||_2, L_yy = ||C||_2 and Phi(x, .) is
    lambda_min(C)-strongly concave. gamma defaults to max(-lambda_min(A), 0)
    when A is indefinite and to L_xx otherwise. No closed-form maximiser is
    supplied, so smoothed values come from the inner APG.
    """
    A = np.atleast_2d(np.asarray(A, float))
    Bc = np.atleast_2d(np.asarray(Bc, float))
    C = np.atleast_2d(np.asarray(C, float))
    A = 0.5 * (A + A.T)
    C = 0.5 * (C + C.T)
    nx, ny = Bc.shape
    c = np.zeros(nx) if c is None else np.asarray(c, float)
    d = np.zeros(ny) if d is None else np.asarray(d, float)
    eC = np.linalg.eigvalsh(C)
    if eC.min() < -1e-12:
        raise ValueError("C must be positive semidefinite")
    eA = np.linalg.eigvalsh(A)
    L_xx = float(np.abs(eA).max())
    L_xy = float(np.linalg.norm(Bc, 2))
    L_yy = float(eC.max())
    if gamma is None:
        gamma = L_xx
    X = make_set("box", nx, lo=-x_radius, hi=x_radius)
    Y = make_set("box", ny, lo=-y_radius, hi=y_radius)
    X_dgf = make_dgf("euclidean", VectorSpaceGeometry(nx))
    Y_dgf = make_dgf("euclidean", VectorSpaceGeometry(ny), Y)

    def value(x, y):
        return float(0.5 * x @ A @ x + c @ x + x @ Bc @ y - 0.5 * y @ C @ y - d @ y)

    def grad_x(x, y):
        return A @ x + c + Bc @ y

    def grad_y(x, y):
        return Bc.T @ x - C @ y - d

    M_Y = (L_xy * x_radius * math.sqrt(nx) + L_yy * y_radius * math.sqrt(ny)
           + float(np.linalg.norm(d)))
    coupling = CouplingFunction(value, grad_x, L_xx, L_xy, grad_y, L_yy, gamma, M_Y,
                                float(max(eC.min(), 0.0)))
    meta = {"family": "bilinear_quadratic", "A": A, "B": Bc, "C": C, "c": c, "d": d}
    lb = -(0.5 * L_xx * nx * x_radius ** 2 + float(np.abs(c).sum()) * x_radius
           + L_xy * math.sqrt(nx * ny) * x_radius * y_radius
           + float(np.abs(d).sum()) * y_radius)
    return ProblemInstance(coupling, zero_term(), zero_term(), X, X_dgf, Y, Y_dgf,
                           lb, "bilinear_quadratic", meta)


def bilinear_toy() -> ProblemInstance:
    """Small convex-concave toy used by the Case II checks (dim 2 x 2)."""
    A = np.array([[1.0, 0.2], [0.2, 0.6]])
    Bc = np.array([[1.0, 0.3], [-0.4, 0.8]])
    C = np.array([[0.3, 0.0], [0.0, 0.2]])
    return make_bilinear_quadratic_instance(A, Bc, C, c=[0.3, -0.2], d=[0.1, 0.05])


# --------------------------------------------------------------------------
# dictionaries (JSON descriptors)


def dro_toy(alpha: float = 0.5) -> ProblemInstance:
    """Three Huber scenarios in the plane with a uniform nominal distribution."""
    A = [[1.0, 0.5], [-0.3, 1.0], [0.8, -0.6]]
    b = [0.5, -0.2, 0.1]
    return make_dro_instance(huber_losses(A, b, 1.0), alpha=alpha, radius=2.0)


def _dro_from_dict(p):
    if p.get("preset") == "toy" or "scenarios" not in p:
        return dro_toy(p.get("alpha", 0.5))
    shape = p.get("loss", "huber")
    if shape == "huber":
        losses = huber_losses(p["scenarios"], p["targets"], p.get("kappa", 1.0))
    else:
        losses = squared_losses(p["scenarios"], p["targets"])
    return make_dro_instance(losses, p.get("p_bar"), p.get("alpha", 0.5),
                             radius=p.get("radius", 2.0), gamma=p.get("gamma"))


def _finite_max_from_dict(p):
    if p.get("preset") == "example2":
        return example2_toy()
    pieces = quadratic_pieces(p["centers"], p["curvatures"], p["offsets"])
    return make_finite_max_instance(pieces, p.get("radius", 1.0), p.get("dual_dgf", "entropy"),
                                    p.get("gamma"))


def _eig_from_dict(p):
    if "B" not in p:
        return example3_instance(p.get("n", 4), p.get("k", 2), p.get("alpha1", 1.0),
                                 p.get("alpha2", 1.0))
    return make_eig_factor_instance(p["B"], p.get("alpha1", 1.0), p.get("alpha2", 1.0),
                                    p.get("k", 2), p.get("gamma"))


def _bq_from_dict(p):
    if p.get("preset") == "toy" or "A" not in p:
        return bilinear_toy()
    return make_bilinear_quadratic_instance(p["A"], p["B"], p["C"], p.get("c"), p.get("d"),
                                            p.get("x_radius", 1.0), p.get("y_radius", 1.0),
                                            p.get("gamma"))


FAMILIES = {
    "dro": _dro_from_dict,
    "finite_max": _finite_max_from_dict,
    "eig_factor": _eig_from_dict,
    "bilinear_quadratic": _bq_from_dict,
}


def instance_from_dict(family: str, params: dict) -> ProblemInstance:
    """Build an instance of a shipped family from plain data."""
    if family not in FAMILIES:
        raise KeyError(f"unknown problem family {family!r}; choose from {sorted(FAMILIES)}")
    return FAMILIES[family](dict(params or {}))
