import math

import numpy as np
import pytest

from maxsmooth.geometry import (DomainError, NoClosedFormError, VectorSpaceGeometry,
                                bpp_solve, bpp_solve_iterative, bpp_variational_slack,
                                bregman_divergence, make_dgf, make_set, project_tv_simplex,
                                sample_set)
from maxsmooth.problem import l1_term, linear_term


def _pairings():
    """Every shipped (dgf, set) pairing."""
    out = []
    for kind, d, kw in (("box", 4, {"lo": -np.ones(4), "hi": 2 * np.ones(4)}),
                        ("euclidean_ball", 3, {"radius": 1.5}),
                        ("simplex", 5, {}),
                        ("tv_ball_in_simplex", 4, {"p_bar": np.full(4, 0.25), "alpha": 0.3}),
                        ("frobenius_ball_product", 6, {"sizes": [4, 2], "radii": [1.0, 2.0]})):
        s = make_set(kind, d, **kw)
        out.append((f"euclidean-{kind}", make_dgf("euclidean", VectorSpaceGeometry(s.dimension), s), s))
    s = make_set("simplex", 5, norm_kind="l1_dual_pairing")
    out.append(("entropy-simplex", make_dgf("entropy", VectorSpaceGeometry(5, "l1_dual_pairing"), s), s))
    s = make_set("spectraplex", side=3, norm_kind="nuclear")
    out.append(("matrix_entropy-spectraplex",
                make_dgf("matrix_entropy", VectorSpaceGeometry(9, "nuclear", side=3), s), s))
    s = make_set("simplex", 4, norm_kind="p_norm", p=1.5)
    out.append(("p_norm-simplex", make_dgf("p_norm", VectorSpaceGeometry(4, "p_norm", p=1.5), s,
                                           normalized=True), s))
    return out


PAIRINGS = _pairings()


# --------------------------------------------------------------------------
# norms


@pytest.mark.parametrize("geo", [VectorSpaceGeometry(4), VectorSpaceGeometry(4, "p_norm", p=1.3),
                                 VectorSpaceGeometry(4, "l1_dual_pairing"),
                                 VectorSpaceGeometry(4, "nuclear", side=2)],
                         ids=["euclidean", "p_norm", "l1", "nuclear"])
def test_norm_axioms_and_hoelder(geo):
    rng = np.random.default_rng(0)
    assert geo.norm(np.zeros(4)) == 0.0
    for _ in range(200):
        u, v, w = rng.normal(size=(3, 4))
        a = rng.normal()
        assert geo.norm(a * u) == pytest.approx(abs(a) * geo.norm(u), rel=1e-12)
        assert geo.norm(u + v) <= geo.norm(u) + geo.norm(v) + 1e-12
        # pairing is the plain dot product, the nuclear geometry works on symmetric parts
        if geo.norm_kind == "nuclear":
            w = (w.reshape(2, 2) + w.reshape(2, 2).T).ravel() / 2
            u = (u.reshape(2, 2) + u.reshape(2, 2).T).ravel() / 2
        assert np.dot(w, u) <= geo.dual_norm(w) * geo.norm(u) + 1e-12


def test_p_norm_rejects_bad_exponent():
    with pytest.raises(ValueError):
        VectorSpaceGeometry(3, "p_norm", p=2.5)
    with pytest.raises(ValueError):
        make_dgf("p_norm", VectorSpaceGeometry(3), p=1.0)


# --------------------------------------------------------------------------
# Bregman divergences


def test_euclidean_divergence_value():
    dgf = make_dgf("euclidean", VectorSpaceGeometry(2))
    assert bregman_divergence(dgf, [1.0, 0.0], [0.0, 0.0]) == 0.5


@pytest.mark.parametrize("name,dgf,fset", PAIRINGS, ids=[p[0] for p in PAIRINGS])
def test_divergence_identity(name, dgf, fset):
    u = fset.interior_point
    assert bregman_divergence(dgf, u, u) == pytest.approx(0.0, abs=1e-14)


def test_entropy_divergence_is_kl():
    dgf = make_dgf("entropy", VectorSpaceGeometry(3, "l1_dual_pairing"))
    up = np.full(3, 1 / 3)
    u = np.array([0.5, 0.25, 0.25])
    kl = sum(a * math.log(a / b) for a, b in zip(up, u))
    assert bregman_divergence(dgf, up, u) == pytest.approx(kl, abs=1e-14)


def test_entropy_rejects_boundary_centre():
    dgf = make_dgf("entropy", VectorSpaceGeometry(3, "l1_dual_pairing"))
    with pytest.raises(DomainError):
        bregman_divergence(dgf, [0.2, 0.3, 0.5], [0.0, 0.5, 0.5])


@pytest.mark.parametrize("name,dgf,fset", PAIRINGS, ids=[p[0] for p in PAIRINGS])
def test_strong_convexity_on_pairing(name, dgf, fset):
    rng = np.random.default_rng(1)
    pts = sample_set(fset, rng, 2000)
    if dgf.kind in ("entropy", "matrix_entropy"):
        pts = np.array([fset.project(p) for p in pts]) if dgf.kind == "matrix_entropy" else pts
        pts = 0.999 * pts + 0.001 * fset.interior_point
    geo = dgf.geometry
    worst = min(bregman_divergence(dgf, a, b) - 0.5 * geo.norm(a - b) ** 2
                for a, b in zip(pts[:1000], pts[1000:]))
    assert worst >= -1e-10


def test_euclidean_gradient_lipschitz_beta():
    dgf = make_dgf("euclidean", VectorSpaceGeometry(5))
    rng = np.random.default_rng(2)
    for _ in range(100):
        u, v = rng.normal(size=(2, 5))
        assert np.linalg.norm(dgf.gradient(u) - dgf.gradient(v)) <= dgf.smoothness_beta * np.linalg.norm(u - v) + 1e-12


def test_make_dgf_constants():
    e = make_dgf("euclidean", VectorSpaceGeometry(4))
    u = np.array([1.0, -2.0, 0.5, 3.0])
    assert e.value(u) == 0.5 * np.dot(u, u)
    assert e.smoothness_beta == 1.0
    s = make_set("simplex", 4, norm_kind="p_norm", p=1.5)
    pn = make_dgf("p_norm", VectorSpaceGeometry(4, "p_norm", p=1.5), s)
    assert pn.lipschitz_M == 1.0
    assert math.isinf(pn.smoothness_beta)
    ent = make_dgf("entropy", VectorSpaceGeometry(4, "l1_dual_pairing"), make_set("simplex", 4))
    assert math.isinf(ent.smoothness_beta)
    assert ent.sup_abs_value == pytest.approx(math.log(4))


def test_p_norm_modulus_is_p_minus_one_on_simplex():
    geo = VectorSpaceGeometry(4, "p_norm", p=1.5)
    s = make_set("simplex", 4, norm_kind="p_norm", p=1.5)
    dgf = make_dgf("p_norm", geo, s)
    assert dgf.modulus == pytest.approx(0.5)
    rng = np.random.default_rng(3)
    pts = sample_set(s, rng, 200)
    for a, b in zip(pts[:100], pts[100:]):
        assert bregman_divergence(dgf, a, b) >= 0.25 * geo.norm(a - b) ** 2 - 1e-12


# --------------------------------------------------------------------------
# feasible sets


@pytest.mark.parametrize("name,dgf,fset", PAIRINGS, ids=[p[0] for p in PAIRINGS])
def test_interior_point_and_diameter(name, dgf, fset):
    assert fset.membership(fset.interior_point)
    rng = np.random.default_rng(4)
    pts = sample_set(fset, rng, 400)
    if fset.kind == "spectraplex":
        pts = np.array([fset.project(p) for p in pts])
    geo = dgf.geometry
    for a, b in zip(pts[:200], pts[200:]):
        assert fset.membership(a)
        assert geo.norm(a - b) <= fset.diameter + 1e-12


def test_tv_projection_kkt_matches_dykstra():
    rng = np.random.default_rng(5)
    for _ in range(100):
        n = rng.integers(2, 7)
        p_bar = rng.dirichlet(np.ones(n))
        alpha = rng.uniform(0.05, 1.0)
        z = rng.normal(size=n)
        a = project_tv_simplex(z, p_bar, alpha)
        b = project_tv_simplex(z, p_bar, alpha, method="dykstra")
        assert np.max(np.abs(a - b)) <= 1e-9
        assert abs(a.sum() - 1) <= 1e-10 and a.min() >= -1e-12
        assert 0.5 * np.abs(a - p_bar).sum() <= alpha + 1e-10


def test_tv_with_unit_radius_is_simplex():
    rng = np.random.default_rng(6)
    from maxsmooth.geometry import project_simplex
    for _ in range(20):
        z = rng.normal(size=4)
        assert np.allclose(project_tv_simplex(z, np.full(4, 0.25), 1.0), project_simplex(z), atol=1e-10)


# --------------------------------------------------------------------------
# Bregman proximal projections


def test_bpp_box_clip():
    rng = np.random.default_rng(7)
    box = make_set("box", 5, lo=-np.ones(5), hi=np.ones(5))
    dgf = make_dgf("euclidean", VectorSpaceGeometry(5))
    for _ in range(50):
        u = rng.uniform(-1, 1, 5)
        xi = rng.normal(size=5) * 3
        lam = rng.uniform(0.1, 2)
        assert np.allclose(bpp_solve(dgf, box, None, xi, lam, u), np.clip(u - lam * xi, -1, 1),
                           atol=0, rtol=0)


def test_bpp_entropic_step():
    rng = np.random.default_rng(8)
    s = make_set("simplex", 4, norm_kind="l1_dual_pairing")
    dgf = make_dgf("entropy", VectorSpaceGeometry(4, "l1_dual_pairing"), s)
    for _ in range(50):
        u = rng.dirichlet(np.ones(4))
        xi = rng.normal(size=4)
        lam = rng.uniform(0.1, 3)
        ref = u * np.exp(-lam * xi)
        ref /= ref.sum()
        assert np.allclose(bpp_solve(dgf, s, None, xi, lam, u), ref, atol=1e-11)


def _grid_simplex(h):
    k = int(round(1 / h))
    i, j = np.meshgrid(np.arange(k + 1), np.arange(k + 1), indexing="ij")
    mask = i + j <= k
    a, b = i[mask] * h, j[mask] * h
    return np.stack([a, b, 1 - a - b], axis=1)


def test_bpp_tv_ball_matches_grid_search():
    # spacing 5e-4 keeps the grid's own quantization error safely below 1e-3
    grid = _grid_simplex(5e-4)
    rng = np.random.default_rng(9)
    dgf = make_dgf("euclidean", VectorSpaceGeometry(3))
    for _ in range(3):
        p_bar = rng.dirichlet(np.ones(3) * 2)
        alpha = rng.uniform(0.1, 0.4)
        s = make_set("tv_ball_in_simplex", p_bar=p_bar, alpha=alpha)
        u = s.interior_point
        xi = rng.normal(size=3)
        z = bpp_solve(dgf, s, None, xi, 0.8, u)
        feas = grid[0.5 * np.abs(grid - p_bar).sum(axis=1) <= alpha]
        obj = feas @ xi + 0.5 * np.sum((feas - u) ** 2, axis=1) / 0.8
        ref = feas[np.argmin(obj)]
        assert np.linalg.norm(z - ref) <= 1e-3


@pytest.mark.parametrize("name,dgf,fset", PAIRINGS, ids=[p[0] for p in PAIRINGS])
def test_bpp_variational_inequality(name, dgf, fset):
    rng = np.random.default_rng(10)
    u = fset.interior_point
    trials = sample_set(fset, rng, 100)
    if fset.kind == "spectraplex":
        trials = np.array([fset.project(t) for t in trials])
        sym = rng.normal(size=(3, 3))
        xi = ((sym + sym.T) / 2).ravel()
    else:
        xi = rng.normal(size=fset.dimension)
    solve = bpp_solve_iterative if dgf.kind == "p_norm" else bpp_solve
    for lam in (0.1, 1.0, 5.0):
        z = solve(dgf, fset, None, xi, lam, u)
        assert fset.membership(z)
        assert bpp_variational_slack(dgf, fset, None, xi, lam, u, z, trials) >= -1e-6


def test_bpp_linear_and_l1_terms():
    rng = np.random.default_rng(11)
    box = make_set("box", 3, lo=-2 * np.ones(3), hi=2 * np.ones(3))
    dgf = make_dgf("euclidean", VectorSpaceGeometry(3))
    u, xi = rng.normal(size=(2, 3))
    c = np.array([0.3, -0.1, 0.2])
    assert np.allclose(bpp_solve(dgf, box, linear_term(c), xi, 0.5, u),
                       bpp_solve(dgf, box, None, xi + c, 0.5, u))
    z = bpp_solve(dgf, box, l1_term(0.4, 3), xi, 0.5, u)
    trials = sample_set(box, rng, 100)
    assert bpp_variational_slack(dgf, box, l1_term(0.4, 3), xi, 0.5, u, z, trials) >= -1e-6


def test_spectraplex_step_is_density():
    rng = np.random.default_rng(12)
    s = make_set("spectraplex", side=4, norm_kind="nuclear")
    dgf = make_dgf("matrix_entropy", VectorSpaceGeometry(16, "nuclear", side=4), s)
    u = s.interior_point
    for _ in range(20):
        a = rng.normal(size=(4, 4))
        z = bpp_solve(dgf, s, None, (a + a.T).ravel(), 2.0, u).reshape(4, 4)
        assert np.abs(z - z.T).max() <= 1e-9
        assert abs(np.trace(z) - 1) <= 1e-9
        assert np.linalg.eigvalsh(z).min() >= -1e-9
        u = z.ravel()


def test_no_closed_form_points_to_iterative():
    s = make_set("simplex", 3)
    dgf = make_dgf("p_norm", VectorSpaceGeometry(3, "p_norm", p=1.5), s)
    with pytest.raises(NoClosedFormError, match="bpp_solve_iterative"):
        bpp_solve(dgf, s, None, np.ones(3), 1.0, s.interior_point)
    xi = np.array([0.3, -0.2, 0.1])
    z = bpp_solve_iterative(dgf, s, None, xi, 1.0, s.interior_point)
    trials = sample_set(s, np.random.default_rng(0), 100)
    assert bpp_variational_slack(dgf, s, None, xi, 1.0, s.interior_point, z, trials) >= -1e-6


def test_bpp_rejects_nonpositive_step():
    s = make_set("simplex", 3)
    with pytest.raises(ValueError):
        bpp_solve(make_dgf("euclidean", VectorSpaceGeometry(3)), s, None, np.zeros(3), 0.0,
                  s.interior_point)
