"""Norms, feasible sets, distance-generating functions and Bregman proximal steps.

Every point is a flat ``numpy`` vector. Matrix-valued variables (the
spectraplex, products of Frobenius balls) are stored row-major and reshaped
on demand, so the solvers never need to know about shapes.

The workhorse is :func:`bpp_solve`, which returns

    argmin_{u' in U}  phi(u') + <xi, u'> + D(u', u) / lam

in closed form whenever the (set, DGF, composite) triple allows it.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

log = logging.getLogger(__name__)

NORM_KINDS = ("euclidean", "p_norm", "l1_dual_pairing", "nuclear")
SET_KINDS = ("box", "euclidean_ball", "simplex", "tv_ball_in_simplex",
             "frobenius_ball_product", "spectraplex")

# weight of the uniform point mixed into entropic iterates
ENTROPY_CLAMP = 1e-12


class NoClosedFormError(NotImplementedError):
    """Raised when a Bregman proximal step has no closed form.

    Use :func:`bpp_solve_iterative` for such combinations.
    """


class DomainError(ValueError):
    """A point sits outside the interior of a DGF domain."""


# --------------------------------------------------------------------------
# norms


@dataclass(frozen=True)
class VectorSpaceGeometry:
    """A finite-dimensional normed space with its dual norm.

    ``norm_kind`` is one of ``euclidean``, ``p_norm`` (needs ``p``),
    ``l1_dual_pairing`` (primal l1, dual l-infinity) or ``nuclear``
    (square matrices of side ``side``; dual is the spectral norm).
    """

    dimension: int
    norm_kind: str = "euclidean"
    p: Optional[float] = None
    side: Optional[int] = None

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("dimension must be positive")
        if self.norm_kind not in NORM_KINDS:
            raise ValueError(f"unknown norm kind {self.norm_kind!r}")
        if self.norm_kind == "p_norm":
            if self.p is None or not (1.0 < self.p <= 2.0):
                raise ValueError("p_norm needs 1 < p <= 2")
        if self.norm_kind == "nuclear":
            if self.side is None or self.side * self.side != self.dimension:
                raise ValueError("nuclear geometry needs side**2 == dimension")

    @property
    def q(self) -> float:
        """Conjugate exponent of ``p``."""
        return self.p / (self.p - 1.0)

    def norm(self, v) -> float:
        v = np.asarray(v, dtype=float).ravel()
        kind = self.norm_kind
        if kind == "euclidean":
            return float(np.linalg.norm(v))
        if kind == "p_norm":
            return float(np.linalg.norm(v, self.p))
        if kind == "l1_dual_pairing":
            return float(np.abs(v).sum())
        return float(np.linalg.norm(_as_sym(v, self.side), "nuc"))

    def dual_norm(self, xi) -> float:
        xi = np.asarray(xi, dtype=float).ravel()
        kind = self.norm_kind
        if kind == "euclidean":
            return float(np.linalg.norm(xi))
        if kind == "p_norm":
            return float(np.linalg.norm(xi, self.q))
        if kind == "l1_dual_pairing":
            return float(np.abs(xi).max())
        return float(np.linalg.norm(_as_sym(xi, self.side), 2))


def _as_sym(v, side):
    m = np.asarray(v, dtype=float).reshape(side, side)
    return 0.5 * (m + m.T)


# --------------------------------------------------------------------------
# projections used by the closed forms


def project_simplex(z, total=1.0):
    """Euclidean projection onto {p >= 0, sum p = total} (sort based)."""
    z = np.asarray(z, dtype=float)
    u = np.sort(z)[::-1]
    css = np.cumsum(u) - total
    ind = np.arange(1, z.size + 1)
    k = np.nonzero(u - css / ind > 0)[0][-1]
    theta = css[k] / (k + 1.0)
    return np.maximum(z - theta, 0.0)


def project_l1_ball(z, radius, center=None):
    """Euclidean projection onto {p : ||p - center||_1 <= radius}."""
    z = np.asarray(z, dtype=float)
    c = np.zeros_like(z) if center is None else center
    v = z - c
    if np.abs(v).sum() <= radius:
        return z.copy()
    w = project_simplex(np.abs(v), radius)
    return c + np.sign(v) * w


def _tv_prox_point(z, p_bar, theta, nu):
    w = z - theta
    return np.where(w > p_bar + nu, w - nu,
                    np.where(w < p_bar - nu, np.maximum(w + nu, 0.0), p_bar))


def _tv_theta(z, p_bar, nu):
    """Multiplier of the sum constraint for a fixed l1 multiplier ``nu``.

    The coordinate-wise solution is piecewise linear and nonincreasing in
    theta, so the root is found exactly from its breakpoints.
    """
    bps = np.unique(np.concatenate([z - p_bar - nu, z - p_bar + nu, z + nu]))
    w = z[None, :] - bps[:, None]
    pb = p_bar[None, :]
    P = np.where(w > pb + nu, w - nu, np.where(w < pb - nu, np.maximum(w + nu, 0.0), pb))
    S = P.sum(axis=1)
    n = z.size
    if S[0] <= 1.0:
        # left of every breakpoint all coordinates move with slope -1
        return bps[0] - (1.0 - S[0]) / n
    k = int(np.searchsorted(-S, -1.0, side="left"))
    if k >= bps.size:
        return bps[-1]
    lo, hi = bps[k - 1], bps[k]
    s_lo, s_hi = S[k - 1], S[k]
    if s_lo == s_hi:
        return hi
    return lo + (s_lo - 1.0) * (hi - lo) / (s_lo - s_hi)


def _project_tv_kkt(z, p_bar, alpha):
    from scipy.optimize import brentq

    radius = 2.0 * alpha

    def excess(nu):
        p = _tv_prox_point(z, p_bar, _tv_theta(z, p_bar, nu), nu)
        return np.abs(p - p_bar).sum() - radius

    hi = 1.0 + np.abs(z).max()
    while excess(hi) > 0:
        hi *= 2.0
    nu = brentq(excess, 0.0, hi, xtol=1e-16, rtol=4 * np.finfo(float).eps, maxiter=500)
    return _tv_prox_point(z, p_bar, _tv_theta(z, p_bar, nu), nu)


def _project_tv_dykstra(z, p_bar, radius, tol, max_iter):
    x = np.asarray(z, dtype=float).copy()
    p = np.zeros_like(x)
    q = np.zeros_like(x)
    for _ in range(max_iter):
        y = project_simplex(x + p)
        p = x + p - y
        x_new = project_l1_ball(y + q, radius, p_bar)
        q = y + q - x_new
        done = (np.abs(x_new - x).max() <= tol and np.abs(x_new - y).max() <= tol)
        x = x_new
        if done:
            break
    else:
        log.warning("Dykstra projection hit its iteration cap")
    return x


def project_tv_simplex(z, p_bar, alpha, tol=1e-13, max_iter=100_000, method="kkt"):
    """Projection onto {p in simplex : (1/2)||p - p_bar||_1 <= alpha}.

    ``method="kkt"`` solves the optimality conditions directly: for
    multipliers (theta, nu) of the sum and l1 constraints each coordinate
    is a clipped soft-threshold around p_bar, theta is exact for a given
    nu and nu is found by a scalar root search. ``method="dykstra"`` runs
    Dykstra's alternating projections between the simplex and the l1 ball
    instead. Either way the result is pulled back so both constraints hold.
    """
    z = np.asarray(z, dtype=float)
    p_bar = np.asarray(p_bar, dtype=float)
    radius = 2.0 * alpha
    y = project_simplex(z)
    if np.abs(y - p_bar).sum() <= radius:
        return y
    if method == "kkt":
        x = _project_tv_kkt(z, p_bar, alpha)
    elif method == "dykstra":
        x = _project_tv_dykstra(z, p_bar, radius, tol, max_iter)
    else:
        raise ValueError(f"unknown projection method {method!r}")
    y = np.maximum(x, 0.0)
    y = y / y.sum()
    dev = np.abs(y - p_bar).sum()
    if dev > radius:
        y = p_bar + (radius / dev) * (y - p_bar)
    return y


# --------------------------------------------------------------------------
# feasible sets


@dataclass(frozen=True)
class FeasibleSet:
    """A closed convex set with a Euclidean projection.

    ``params`` depends on ``kind``:

    * box: ``lo``, ``hi`` (arrays, may hold infinities)
    * euclidean_ball: ``center``, ``radius``
    * simplex: nothing
    * tv_ball_in_simplex: ``p_bar``, ``alpha`` (total-variation radius)
    * frobenius_ball_product: ``sizes``, ``radii`` (one ball per block)
    * spectraplex: ``side``

    ``diameter`` is measured in the norm named by ``norm_kind``.
    """

    kind: str
    dimension: int
    params: dict = field(default_factory=dict)
    norm_kind: str = "euclidean"

    def __post_init__(self):
        if self.kind not in SET_KINDS:
            raise ValueError(f"unknown set kind {self.kind!r}")

    # membership --------------------------------------------------------
    def membership(self, u, tol=1e-9) -> bool:
        u = np.asarray(u, dtype=float)
        if u.shape != (self.dimension,) or not np.all(np.isfinite(u)):
            return False
        k, P = self.kind, self.params
        if k == "box":
            return bool(np.all(u >= P["lo"] - tol) and np.all(u <= P["hi"] + tol))
        if k == "euclidean_ball":
            return bool(np.linalg.norm(u - P["center"]) <= P["radius"] + tol)
        if k in ("simplex", "tv_ball_in_simplex"):
            ok = bool(np.all(u >= -tol) and abs(u.sum() - 1.0) <= tol)
            if k == "tv_ball_in_simplex":
                ok = ok and 0.5 * np.abs(u - P["p_bar"]).sum() <= P["alpha"] + tol
            return ok
        if k == "frobenius_ball_product":
            return all(np.linalg.norm(b) <= r + tol
                       for b, r in zip(self.split(u), P["radii"]))
        m = u.reshape(P["side"], P["side"])
        if np.abs(m - m.T).max() > tol or abs(np.trace(m) - 1.0) > tol:
            return False
        return bool(np.linalg.eigvalsh(0.5 * (m + m.T)).min() >= -tol)

    def split(self, u):
        """Blocks of a point in a product of Frobenius balls."""
        out, start = [], 0
        for s in self.params["sizes"]:
            out.append(u[start:start + s])
            start += s
        return out

    # projection ---------------------------------------------------------
    def project(self, z):
        z = np.asarray(z, dtype=float)
        k, P = self.kind, self.params
        if k == "box":
            return np.clip(z, P["lo"], P["hi"])
        if k == "euclidean_ball":
            d = z - P["center"]
            n = np.linalg.norm(d)
            return z.copy() if n <= P["radius"] else P["center"] + d * (P["radius"] / n)
        if k == "simplex":
            return project_simplex(z)
        if k == "tv_ball_in_simplex":
            return project_tv_simplex(z, P["p_bar"], P["alpha"])
        if k == "frobenius_ball_product":
            blocks = []
            for b, r in zip(self.split(z), P["radii"]):
                n = np.linalg.norm(b)
                blocks.append(b if n <= r else b * (r / n))
            return np.concatenate(blocks)
        side = P["side"]
        w, V = np.linalg.eigh(_as_sym(z, side))
        lam = project_simplex(w)
        return ((V * lam) @ V.T).ravel()

    # geometry facts -----------------------------------------------------
    @property
    def interior_point(self):
        k, P = self.kind, self.params
        if k == "box":
            lo, hi = P["lo"], P["hi"]
            mid = np.where(np.isfinite(lo) & np.isfinite(hi), 0.5 * (lo + hi), 0.0)
            return np.clip(mid, lo, hi)
        if k == "euclidean_ball":
            return np.array(P["center"], dtype=float)
        if k == "simplex":
            return np.full(self.dimension, 1.0 / self.dimension)
        if k == "tv_ball_in_simplex":
            # nudge towards uniform so the point is relatively interior
            n = self.dimension
            t = min(0.5, P["alpha"])
            return (1 - t) * P["p_bar"] + t * np.full(n, 1.0 / n)
        if k == "frobenius_ball_product":
            return np.zeros(self.dimension)
        side = P["side"]
        return (np.eye(side) / side).ravel()

    @property
    def diameter(self) -> float:
        k, P, nk = self.kind, self.params, self.norm_kind
        if k == "box":
            return float(np.linalg.norm(P["hi"] - P["lo"]))
        if k == "euclidean_ball":
            return 2.0 * P["radius"]
        if k in ("simplex", "tv_ball_in_simplex"):
            # attained by two distinct vertices: ||e_i - e_j|| = 2^(1/p)
            if nk == "l1_dual_pairing":
                d = 2.0
            elif nk == "p_norm":
                d = 2.0 ** (1.0 / self.params.get("p", 2.0))
            else:
                d = math.sqrt(2.0)
            if k == "tv_ball_in_simplex":
                l1 = min(2.0, 4.0 * P["alpha"])
                d = min(d, l1)
            return d
        if k == "frobenius_ball_product":
            return 2.0 * math.sqrt(sum(r * r for r in P["radii"]))
        return 2.0 if nk == "nuclear" else math.sqrt(2.0)

    @property
    def sup_half_sq_norm(self) -> float:
        """sup of (1/2)||u||_2^2 over the set."""
        k, P = self.kind, self.params
        if k == "box":
            return 0.5 * float(np.sum(np.maximum(P["lo"] ** 2, P["hi"] ** 2)))
        if k == "euclidean_ball":
            return 0.5 * (np.linalg.norm(P["center"]) + P["radius"]) ** 2
        if k == "frobenius_ball_product":
            return 0.5 * sum(r * r for r in P["radii"])
        return 0.5


def make_set(kind: str, dimension: Optional[int] = None, norm_kind="euclidean",
             **params) -> FeasibleSet:
    """Build a :class:`FeasibleSet` with validated parameters.

    Sets measured in a p-norm (``norm_kind="p_norm"``) need ``p``.
    """
    p = params.pop("p", None)
    if kind == "box":
        lo = np.broadcast_to(np.asarray(params.get("lo", -np.inf), float), (dimension,)).copy()
        hi = np.broadcast_to(np.asarray(params.get("hi", np.inf), float), (dimension,)).copy()
        if np.any(lo > hi):
            raise ValueError("box needs lo <= hi")
        params = {"lo": lo, "hi": hi}
    elif kind == "euclidean_ball":
        c = params.get("center")
        c = np.zeros(dimension) if c is None else np.asarray(c, float)
        dimension = c.size
        params = {"center": c, "radius": float(params["radius"])}
    elif kind == "tv_ball_in_simplex":
        p_bar = np.asarray(params["p_bar"], float)
        alpha = float(params["alpha"])
        if not 0 < alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        if abs(p_bar.sum() - 1) > 1e-9 or np.any(p_bar < 0):
            raise ValueError("p_bar must be a probability vector")
        dimension = p_bar.size
        params = {"p_bar": p_bar, "alpha": alpha}
    elif kind == "frobenius_ball_product":
        sizes = tuple(int(s) for s in params["sizes"])
        radii = tuple(float(r) for r in params["radii"])
        dimension = sum(sizes)
        params = {"sizes": sizes, "radii": radii}
    elif kind == "spectraplex":
        side = int(params["side"])
        dimension = side * side
        params = {"side": side}
    elif kind == "simplex":
        params = {}
    if norm_kind == "p_norm":
        if p is None:
            raise ValueError("a p_norm set needs p")
        params["p"] = float(p)
    return FeasibleSet(kind, int(dimension), params, norm_kind)


# --------------------------------------------------------------------------
# distance-generating functions


@dataclass(frozen=True)
class DistanceGeneratingFunction:
    """A strongly convex reference function on a normed space.

    ``modulus`` is the strong-convexity modulus with respect to the geometry's
    norm (1 for everything except the raw p-norm DGF, where it is ``p - 1``).
    ``smoothness_beta`` is ``inf`` when the gradient is not Lipschitz,
    ``sup_abs_value`` and ``lipschitz_M`` are ``None`` when unknown.
    """

    kind: str
    geometry: VectorSpaceGeometry
    value: Callable
    gradient: Callable
    smoothness_beta: float = math.inf
    sup_abs_value: Optional[float] = None
    lipschitz_M: Optional[float] = None
    modulus: float = 1.0
    p: Optional[float] = None


def _entropy_value(u):
    u = np.asarray(u, float)
    pos = u > 0
    return float(np.sum(u[pos] * np.log(u[pos])))


def _entropy_grad(u):
    u = np.asarray(u, float)
    if np.any(u <= 0):
        raise DomainError("entropy gradient needs strictly positive entries")
    return 1.0 + np.log(u)


def _matrix_entropy_value(u, side):
    w = np.linalg.eigvalsh(_as_sym(u, side))
    w = w[w > 0]
    return float(np.sum(w * np.log(w)))


def _matrix_entropy_grad(u, side):
    w, V = np.linalg.eigh(_as_sym(u, side))
    if w.min() <= 0:
        raise DomainError("matrix entropy gradient needs a positive definite point")
    return (np.eye(side) + (V * np.log(w)) @ V.T).ravel()


def _pnorm_value(u, p):
    return 0.5 * float(np.linalg.norm(u, p)) ** 2


def _pnorm_grad(u, p):
    u = np.asarray(u, float)
    nrm = np.linalg.norm(u, p)
    if nrm == 0:
        return np.zeros_like(u)
    sgn = np.where(u >= 0, 1.0, -1.0)
    return nrm ** (2 - p) * np.abs(u) ** (p - 1) * sgn


def make_dgf(kind: str, geometry: VectorSpaceGeometry, fset: Optional[FeasibleSet] = None,
             p: Optional[float] = None, normalized: bool = False) -> DistanceGeneratingFunction:
    """Build a DGF and fill in its constants for the paired set.

    ``kind`` is ``euclidean``, ``entropy`` (simplex, l1 geometry),
    ``matrix_entropy`` (spectraplex, nuclear geometry) or ``p_norm``
    (``(1/2)||u||_p^2``). With ``normalized=True`` the p-norm DGF is divided
    by ``p - 1`` so that it is 1-strongly convex.
    """
    if kind == "euclidean":
        omega = None
        M = None
        if fset is not None:
            omega = fset.sup_half_sq_norm
            M = math.sqrt(2.0 * omega)
        return DistanceGeneratingFunction(
            "euclidean", geometry,
            lambda u: 0.5 * float(np.dot(u, u)),
            lambda u: np.array(u, dtype=float),
            1.0, omega, M)
    if kind == "entropy":
        if geometry.norm_kind != "l1_dual_pairing":
            raise ValueError("entropy DGF is paired with the l1 geometry")
        n = geometry.dimension
        omega = math.log(n) if fset is not None else None
        return DistanceGeneratingFunction("entropy", geometry, _entropy_value,
                                          _entropy_grad, math.inf, omega, None)
    if kind == "matrix_entropy":
        if geometry.norm_kind != "nuclear":
            raise ValueError("matrix entropy is paired with the nuclear norm")
        side = geometry.side
        omega = math.log(side) if fset is not None else None
        return DistanceGeneratingFunction(
            "matrix_entropy", geometry,
            lambda u: _matrix_entropy_value(u, side),
            lambda u: _matrix_entropy_grad(u, side), math.inf, omega, None)
    if kind == "p_norm":
        p = geometry.p if p is None else p
        if p is None or not (1.0 < p <= 2.0):
            raise ValueError("p_norm DGF needs 1 < p <= 2")
        scale = 1.0 / (p - 1.0) if normalized else 1.0
        omega = M = None
        if fset is not None and fset.kind in ("simplex", "tv_ball_in_simplex"):
            # ||y||_p <= ||y||_1 = 1 on the simplex, and ||grad||_q = ||y||_p
            omega = 0.5 * scale
            M = 1.0 * scale
        return DistanceGeneratingFunction(
            "p_norm", geometry,
            lambda u: scale * _pnorm_value(u, p),
            lambda u: scale * _pnorm_grad(u, p),
            math.inf, omega, M, (p - 1.0) * scale, p)
    raise ValueError(f"unknown DGF kind {kind!r}")


def bregman_divergence(dgf: DistanceGeneratingFunction, u_prime, u) -> float:
    """D(u', u) = w(u') - w(u) - <grad w(u), u' - u>."""
    u_prime = np.asarray(u_prime, float)
    u = np.asarray(u, float)
    if dgf.kind == "entropy":
        if np.any(u <= 0):
            raise DomainError("u must be strictly positive for the entropy DGF")
        # KL form, exact and free of cancellation
        pos = u_prime > 0
        val = np.sum(u_prime[pos] * np.log(u_prime[pos] / u[pos])) - u_prime.sum() + u.sum()
        return max(float(val), 0.0)
    g = dgf.gradient(u)
    return max(float(dgf.value(u_prime) - dgf.value(u) - np.dot(g, u_prime - u)), 0.0)


def bregman_radius(dgf: DistanceGeneratingFunction, fset: FeasibleSet, u0) -> float:
    """Upper bound on sup_{u in set} D(u, u0)."""
    u0 = np.asarray(u0, float)
    if dgf.kind == "euclidean":
        if fset.kind in ("simplex", "tv_ball_in_simplex", "spectraplex"):
            # ||u - u0||_2 <= sqrt(2) for any two probability vectors / densities
            return 1.0
        if fset.kind == "box":
            far = np.maximum(np.abs(fset.params["hi"] - u0), np.abs(fset.params["lo"] - u0))
            return 0.5 * float(np.dot(far, far))
        if fset.kind == "euclidean_ball":
            r = np.linalg.norm(u0 - fset.params["center"]) + fset.params["radius"]
            return 0.5 * r * r
        tot = 0.0
        for b, r in zip(fset.split(u0), fset.params["radii"]):
            tot += (np.linalg.norm(b) + r) ** 2
        return 0.5 * tot
    if dgf.kind == "entropy":
        return float(-np.log(u0.min()))
    if dgf.kind == "matrix_entropy":
        return float(-np.log(np.linalg.eigvalsh(_as_sym(u0, fset.params["side"])).min()))
    # generic: D(u,u0) <= 2*Omega + M*diam
    if dgf.sup_abs_value is None or dgf.lipschitz_M is None:
        return math.inf
    return 2.0 * dgf.sup_abs_value + dgf.lipschitz_M * fset.diameter


# --------------------------------------------------------------------------
# Bregman proximal projections


def _phi_kind(phi):
    return "zero" if phi is None else phi.kind


def _linear_part(phi):
    if phi is not None and phi.kind == "linear":
        return phi.params["c"]
    return None


def _clamp_simplex(u):
    n = u.size
    return (1.0 - ENTROPY_CLAMP) * u + ENTROPY_CLAMP / n


def bpp_solve(dgf: DistanceGeneratingFunction, fset: FeasibleSet, phi, xi, lam: float, u):
    """Bregman proximal projection.

    Returns argmin_{u' in set} phi(u') + <xi, u'> + D(u', u) / lam.

    Closed forms cover the Euclidean DGF on every shipped set (with ``phi``
    zero or linear, plus a weighted l1 term on boxes), the entropic step on
    the simplex and the matrix-entropy step on the spectraplex. The
    total-variation ball inside the simplex goes through
    :func:`project_tv_simplex`; other combinations raise
    :class:`NoClosedFormError`.
    """
    if lam <= 0:
        raise ValueError("lam must be positive")
    xi = np.asarray(xi, float)
    u = np.asarray(u, float)
    kind = _phi_kind(phi)
    if kind not in ("zero", "linear", "l1"):
        raise NoClosedFormError(f"composite term {kind!r}; use bpp_solve_iterative")
    c = _linear_part(phi)
    if c is not None:
        xi = xi + c

    if dgf.kind == "euclidean":
        z = u - lam * xi
        if kind == "l1":
            if fset.kind != "box":
                raise NoClosedFormError("l1 term only has a closed form on boxes; "
                                        "use bpp_solve_iterative")
            t = lam * phi.params["weight"]
            z = np.sign(z) * np.maximum(np.abs(z) - t, 0.0)
        return fset.project(z)
    if kind == "l1":
        raise NoClosedFormError("l1 term with a non-Euclidean DGF; use bpp_solve_iterative")
    if dgf.kind == "entropy" and fset.kind == "simplex":
        if np.any(u <= 0):
            raise DomainError("entropic step needs a strictly positive centre")
        w = np.log(u) - lam * xi
        w -= w.max()
        e = np.exp(w)
        return _clamp_simplex(e / e.sum())
    if dgf.kind == "matrix_entropy" and fset.kind == "spectraplex":
        side = fset.params["side"]
        wu, Vu = np.linalg.eigh(_as_sym(u, side))
        if wu.min() <= 0:
            raise DomainError("matrix entropic step needs a positive definite centre")
        logm = (Vu * np.log(wu)) @ Vu.T - lam * _as_sym(xi, side)
        w, V = np.linalg.eigh(0.5 * (logm + logm.T))
        e = np.exp(w - w.max())
        e = _clamp_simplex(e / e.sum())
        return ((V * e) @ V.T).ravel()
    raise NoClosedFormError(
        f"no closed form for dgf={dgf.kind!r} on set={fset.kind!r}; use bpp_solve_iterative")


def _phi_value(phi, u):
    return 0.0 if phi is None else float(phi.value(u))


def _phi_subgrad(phi, u):
    if phi is None or phi.kind == "zero":
        return np.zeros_like(u)
    if phi.kind == "linear":
        return np.asarray(phi.params["c"], float)
    if phi.kind == "l1":
        return phi.params["weight"] * np.sign(u)
    raise NoClosedFormError(f"no subgradient rule for {phi.kind!r}")


def bpp_solve_iterative(dgf: DistanceGeneratingFunction, fset: FeasibleSet, phi, xi,
                        lam: float, u, tol: float = 1e-10, max_iter: int = 100_000,
                        x0=None):
    """Projected gradient on the BPP objective, for any smooth DGF.

    The composite term must be zero or linear. Steps use Armijo
    backtracking and the set's Euclidean projection; iteration stops when
    the decrease of the objective and the step both fall below ``tol``.
    """
    if _phi_kind(phi) not in ("zero", "linear"):
        raise NoClosedFormError("iterative BPP handles zero or linear composites only")
    xi = np.asarray(xi, float)
    c = _linear_part(phi)
    if c is not None:
        xi = xi + c
    g_center = dgf.gradient(np.asarray(u, float))

    def obj(v):
        return float(np.dot(xi, v)) + (dgf.value(v) - float(np.dot(g_center, v))) / lam

    def grad(v):
        return xi + (dgf.gradient(v) - g_center) / lam

    x = fset.project(np.asarray(u if x0 is None else x0, float))
    fx = obj(x)
    step = lam
    for _ in range(max_iter):
        g = grad(x)
        while True:
            x_new = fset.project(x - step * g)
            f_new = obj(x_new)
            d = x_new - x
            if f_new <= fx + np.dot(g, d) + 0.5 / step * np.dot(d, d) + 1e-15 * abs(fx):
                break
            step *= 0.5
            if step < 1e-300:
                break
        moved = float(np.linalg.norm(d))
        gain = fx - f_new
        x, fx = x_new, f_new
        if moved <= tol * max(1.0, step) and gain <= tol:
            break
        step *= 1.5
    else:
        log.warning("iterative BPP reached its iteration cap")
    return x


def bpp_variational_slack(dgf, fset, phi, xi, lam, u, z, trials):
    """Smallest value of <xi + (grad w(z) - grad w(u))/lam + s, u' - z> over trial points."""
    g = np.asarray(xi, float) + (dgf.gradient(z) - dgf.gradient(u)) / lam + _phi_subgrad(phi, z)
    return min(float(np.dot(g, t - z)) for t in trials)


def sample_set(fset: FeasibleSet, rng: np.random.Generator, count: int) -> np.ndarray:
    """Random members of a bounded set (rows). Not uniform in general."""
    k, P, d = fset.kind, fset.params, fset.dimension
    if k == "box":
        lo = np.where(np.isfinite(P["lo"]), P["lo"], -1.0)
        hi = np.where(np.isfinite(P["hi"]), P["hi"], 1.0)
        return rng.uniform(lo, hi, size=(count, d))
    if k == "euclidean_ball":
        z = rng.normal(size=(count, d))
        z /= np.linalg.norm(z, axis=1, keepdims=True)
        rad = P["radius"] * rng.uniform(size=(count, 1)) ** (1.0 / d)
        return P["center"] + z * rad
    if k in ("simplex", "tv_ball_in_simplex"):
        s = rng.dirichlet(np.full(d, 0.5), size=count)
        if k == "tv_ball_in_simplex":
            dev = np.abs(s - P["p_bar"]).sum(axis=1, keepdims=True)
            t = np.minimum(1.0, 2.0 * P["alpha"] / np.maximum(dev, 1e-300))
            s = P["p_bar"] + t * (s - P["p_bar"])
        return s
    if k == "frobenius_ball_product":
        out = []
        for _ in range(count):
            blocks = []
            for s, r in zip(P["sizes"], P["radii"]):
                z = rng.normal(size=s)
                blocks.append(z / np.linalg.norm(z) * r * rng.uniform() ** (1.0 / s))
            out.append(np.concatenate(blocks))
        return np.array(out)
    side = P["side"]
    out = []
    for _ in range(count):
        G = rng.normal(size=(side, side))
        W = G @ G.T
        out.append((W / np.trace(W)).ravel())
    return np.array(out)
