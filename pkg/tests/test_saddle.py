import math

import numpy as np
import pytest
from scipy.optimize import minimize

from maxsmooth.apg import ConfigurationError, admissible_delta
from maxsmooth.problem import OracleCounter, f_rho_solve, wrap_counted
from maxsmooth.problems import bilinear_toy, dro_toy, example2_toy
from maxsmooth.saddle import (CaseIDualOracle, MissingConstantError, build_subproblem,
                              case1_epsilons, case2_epsilons, compute_B_bounds, delta_1, delta_2,
                              duality_gap, exact_dual_oracle, inner_primal_solve,
                              recover_dual_case1, recover_primal_case2, solve_dual_case2,
                              solve_primal_case1, step2_solve)

OPTS = {"ftol": 1e-16, "gtol": 1e-12, "maxiter": 20_000}


def _bounds(S):
    return list(zip(S.params["lo"], S.params["hi"]))


def _bilinear_y_star(sub, x):
    """argmax over the box of Phi(x, .) - rho |y|^2 / 2 for the bilinear toy."""
    m = sub.base.meta
    B, C, d = m["B"], m["C"], m["d"]
    H = C + sub.rho * np.eye(len(d))
    f = lambda y: 0.5 * y @ H @ y - (B.T @ x - d) @ y
    g = lambda y: H @ y - (B.T @ x - d)
    return minimize(f, np.zeros(len(d)), jac=g, bounds=_bounds(sub.base.Y), method="L-BFGS-B",
                    options=OPTS).x


def _y_star(sub, x):
    if sub.base.coupling.dual_argmax is not None:
        return f_rho_solve(sub.base, sub.rho, x, 1e-14)[1]
    return _bilinear_y_star(sub, x)


def _p(sub, x):
    y = _y_star(sub, x)
    return sub.psi_D(x, y), sub.psi_grad_x(x, y)


def _reference_saddle(sub):
    """(x*, p*) of min_x p_rho(x) by L-BFGS-B on the smooth primal."""
    res = minimize(lambda x: _p(sub, x)[0], sub.center, jac=lambda x: _p(sub, x)[1],
                   bounds=_bounds(sub.base.X), method="L-BFGS-B", options=OPTS)
    return res.x, res.fun


def _reference_inner(sub, y):
    f = lambda x: sub.psi(x, y)
    res = minimize(f, sub.center, jac=lambda x: sub.psi_grad_x(x, y),
                   bounds=_bounds(sub.base.X), method="L-BFGS-B", options=OPTS)
    return res.x, res.fun - sub.base.g.value(y) - sub.rho * sub.base.Y_dgf.value(y)


# --------------------------------------------------------------------------
# construction


def test_constants_examples():
    inst = example2_toy()  # gamma = 1, beta = 1
    sub = build_subproblem(inst, [0.1, 0.2], 0.5, 0.1)
    assert sub.mu == pytest.approx(1.0)
    assert sub.L_xx_prime == pytest.approx(1.0 + 1.0 / 0.5)
    assert sub.L_rho_prime == pytest.approx(3.0 + inst.coupling.L_xy ** 2 / 0.1)
    assert sub.L_pi == pytest.approx(0.0 + inst.coupling.L_xy ** 2 / 1.0)


def test_lipschitz_shift_example():
    # L_xx = 3, beta = 1, lambda = 1/2 gives L'_xx = 5
    inst = bilinear_toy()
    from dataclasses import replace
    c = replace(inst.coupling, L_xx=3.0, gamma=1.0)
    sub = build_subproblem(replace(inst, coupling=c), [0.0, 0.0], 0.5, 0.1)
    assert sub.L_xx_prime == pytest.approx(5.0)


def test_psi_spot_value():
    inst = example2_toy()
    xk = np.array([0.3, -0.2])
    sub = build_subproblem(inst, xk, 0.5, 0.1)
    x, y = np.array([0.1, 0.4]), np.array([0.2, 0.5, 0.3])
    expect = inst.coupling.value(x, y) + (0.5 * x @ x - xk @ x) / 0.5
    assert sub.psi(x, y) == pytest.approx(expect, abs=1e-14)
    # Q_rho and p_rho differ by a constant
    assert sub.shift_constant() == pytest.approx(0.5 * xk @ xk / 0.5, abs=1e-14)


def test_rejects_nonpositive_mu_and_bad_centre():
    inst = example2_toy()
    with pytest.raises(ConfigurationError):
        build_subproblem(inst, [0.0, 0.0], 1.0, 0.1)  # mu = 0
    with pytest.raises(ConfigurationError):
        build_subproblem(inst, [0.0, 0.0], 2.0, 0.1)
    with pytest.raises(ConfigurationError):
        build_subproblem(inst, [3.0, 0.0], 0.5, 0.1)


# --------------------------------------------------------------------------
# Case I


def test_delta_1_is_admissible():
    for inst, rho in ((dro_toy(), 0.05), (example2_toy(), 1e-3)):
        sub = build_subproblem(inst, inst.X.interior_point, 1 / (2 * inst.coupling.gamma), rho)
        for eps in (1e-1, 1e-3, 1e-6):
            d1 = delta_1(sub, eps)
            err = inst.coupling.L_xy * math.sqrt(2 * d1 / rho)
            assert err <= admissible_delta(eps, sub.L_rho_prime, sub.mu) * (1 + 1e-12)


def test_case1_epsilons_arithmetic():
    inst = dro_toy()
    sub = build_subproblem(inst, [0.1, -0.1], 0.4, 0.05)
    eps = 1e-3
    M = inst.coupling.M_Y + inst.g.lipschitz_M
    Mw = inst.M_omega_Y
    Lxy, mu, rho = inst.coupling.L_xy, sub.mu, sub.rho
    e1 = min(eps / 4, eps ** 2 * mu / (512 * Lxy ** 2) * min(rho ** 2 / M ** 2, 1 / Mw ** 2))
    e2 = eps ** 2 / 512 * min(rho / M ** 2, 1 / (Mw ** 2 * rho))
    got = case1_epsilons(sub, eps)
    assert got[0] == pytest.approx(e1, rel=1e-12) and got[1] == pytest.approx(e2, rel=1e-12)


def test_case1_needs_constants():
    inst = example2_toy()  # entropy on the simplex: no finite M_omega
    sub = build_subproblem(inst, [0.0, 0.0], 0.5, 0.1)
    with pytest.raises(MissingConstantError):
        case1_epsilons(sub, 1e-3)


def test_case1_solution_and_dual_recovery():
    inst = dro_toy()
    sub = build_subproblem(inst, [0.2, -0.1], 0.4, 0.05)
    eps = 1e-3
    seen = []
    exact = exact_dual_oracle(inst, sub.rho)

    def solve(x, delta):
        y = exact.solve(x, delta)
        seen.append((np.array(x), delta, y))
        return y

    oracle = CaseIDualOracle(solve)
    x = solve_primal_case1(sub, oracle, eps)
    x_ref, p_ref = _reference_saddle(sub)
    assert _p(sub, x)[0] - p_ref <= eps / 4 + 1e-12

    # every oracle answer keeps the gradient error within the bound
    Lxy, rho = inst.coupling.L_xy, sub.rho
    for xi, delta, yi in seen[:200]:
        g_true = inst.coupling.grad_x(xi, _y_star(sub, xi))
        assert np.linalg.norm(inst.coupling.grad_x(xi, yi) - g_true) <= Lxy * math.sqrt(2 * delta / rho) + 1e-12

    y = recover_dual_case1(sub, x, oracle, eps)
    _, d = _reference_inner(sub, y)
    assert p_ref - d <= eps / 4 + 1e-10
    gap = duality_gap(sub, x, y, 1e-10)
    assert gap.upper <= eps / 2


# --------------------------------------------------------------------------
# inner primal and the dual function


def test_inner_primal_matches_reference():
    inst = bilinear_toy()
    sub = build_subproblem(inst, [0.3, -0.2], 1 / (2 * inst.coupling.gamma), 0.05)
    rng = np.random.default_rng(0)
    for _ in range(5):
        y = rng.uniform(-1, 1, 2)
        x = inner_primal_solve(sub, y, 1e-12)
        x_ref, _ = _reference_inner(sub, y)
        assert np.linalg.norm(x - x_ref) <= 1e-5


def test_inner_minimiser_is_lipschitz_in_y():
    inst = bilinear_toy()
    sub = build_subproblem(inst, [0.3, -0.2], 1 / (2 * inst.coupling.gamma), 0.05)
    rng = np.random.default_rng(1)
    bound = inst.coupling.L_xy / sub.mu
    for _ in range(20):
        y1, y2 = rng.uniform(-1, 1, 2), rng.uniform(-1, 1, 2)
        x1, x2 = inner_primal_solve(sub, y1, 1e-13), inner_primal_solve(sub, y2, 1e-13)
        assert np.linalg.norm(x1 - x2) <= bound * np.linalg.norm(y1 - y2) * 1.01 + 1e-6


def test_pi_is_smooth_with_stated_modulus():
    inst = bilinear_toy()
    sub = build_subproblem(inst, [0.3, -0.2], 1 / (2 * inst.coupling.gamma), 0.05)

    def pi(y):
        return -_reference_inner(sub, y)[1] - sub.rho * 0.5 * y @ y  # undo the rho term

    def pi_grad(y):
        x = inner_primal_solve(sub, y, 1e-14)
        return -sub.psi_grad_y(x, y)

    rng = np.random.default_rng(2)
    h = 1e-5
    for _ in range(5):
        y = rng.uniform(-0.8, 0.8, 2)
        fd = np.array([(pi(y + h * e) - pi(y - h * e)) / (2 * h) for e in np.eye(2)])
        assert np.max(np.abs(fd - pi_grad(y))) <= 1e-4
    for _ in range(20):
        y1, y2 = rng.uniform(-1, 1, 2), rng.uniform(-1, 1, 2)
        ratio = np.linalg.norm(pi_grad(y1) - pi_grad(y2)) / np.linalg.norm(y1 - y2)
        assert ratio <= sub.L_pi * 1.01


# --------------------------------------------------------------------------
# Case II


def test_delta_2_arithmetic():
    inst = bilinear_toy()
    sub = build_subproblem(inst, [0.0, 0.0], 0.4, 0.05)
    eps = 1e-3
    L = max(sub.L_pi, sub.rho)
    Lxy = inst.coupling.L_xy
    expect = eps * sub.mu * 0.05 ** 1.5 / (392 * Lxy ** 2 * math.sqrt(L) * (1 + math.sqrt(L / 0.05)) ** 2)
    assert delta_2(sub, eps) == pytest.approx(expect, rel=1e-12)


def test_case2_epsilons_arithmetic():
    inst = bilinear_toy()
    sub = build_subproblem(inst, [0.0, 0.0], 0.4, 0.05)
    eps, Bf, Bw = 1e-2, 7.0, 3.0
    common = min(eps / (8 * (Bf + 0.0 + Bw) ** 2), 1 / (sub.L_rho_prime + 1.0))
    e3 = min(eps * sub.mu ** 2 * sub.rho / (64 * inst.coupling.L_xy ** 2) * common, eps / 4)
    e4 = eps * sub.mu / 64 * common
    assert case2_epsilons(sub, eps, Bf, Bw) == (pytest.approx(e3, rel=1e-12), pytest.approx(e4, rel=1e-12))


def test_B_bounds_dominate_and_ignore_epsilon():
    inst = bilinear_toy()
    sub = build_subproblem(inst, [0.3, -0.2], 1 / (2 * inst.coupling.gamma), 0.05)
    Bf, Bw = compute_B_bounds(sub)
    x_ref, _ = _reference_saddle(sub)
    g = inst.coupling.grad_x(x_ref, _y_star(sub, x_ref))
    assert np.linalg.norm(g) <= Bf
    assert np.linalg.norm(inst.X_dgf.gradient(x_ref)) <= Bw
    # no epsilon argument at all; a second call is identical
    assert compute_B_bounds(sub) == (Bf, Bw)


def test_case2_cascade_on_bilinear_toy():
    inst = bilinear_toy()
    sub = build_subproblem(inst, [0.3, -0.2], 1 / (2 * inst.coupling.gamma), 0.05)
    eps = 1e-3
    B = compute_B_bounds(sub)
    e3, e4 = case2_epsilons(sub, eps, *B)
    y = solve_dual_case2(sub, e3)
    x_ref, p_ref = _reference_saddle(sub)
    _, d = _reference_inner(sub, y)
    assert p_ref - d <= e3 + 1e-10
    assert inst.Y.membership(y)
    x = recover_primal_case2(sub, y, eps, B)
    x_in, _ = _reference_inner(sub, y)
    assert np.linalg.norm(x - x_in) <= math.sqrt(2 * e4 / sub.mu) + 1e-6
    assert _p(sub, x)[0] - p_ref <= eps / 4 + 1e-10
    assert duality_gap(sub, x, y, 1e-10).upper <= eps / 2


def test_duality_gap_properties():
    inst = bilinear_toy()
    sub = build_subproblem(inst, [0.3, -0.2], 1 / (2 * inst.coupling.gamma), 0.05)
    x_ref, p_ref = _reference_saddle(sub)
    y_ref = _y_star(sub, x_ref)
    tol = 1e-10
    assert abs(duality_gap(sub, x_ref, y_ref, tol).value) <= 1e-7
    rng = np.random.default_rng(3)
    for _ in range(10):
        x, y = rng.uniform(-1, 1, 2), rng.uniform(-1, 1, 2)
        gap = duality_gap(sub, x, y, tol)
        assert gap.value >= -4 * tol
        split = (_p(sub, x)[0] - p_ref) + (p_ref - _reference_inner(sub, y)[1])
        assert gap.value == pytest.approx(split, abs=1e-7)


# --------------------------------------------------------------------------
# the outer step


def test_step2_case2_on_example2():
    counter = OracleCounter()
    inst = wrap_counted(example2_toy(), counter)
    xk = np.array([0.3, -0.2])
    sub = build_subproblem(inst, xk, 0.5, 0.05)
    eta = 1e-4
    res = step2_solve(inst, xk, 0.5, 0.05, eta, "CaseII")
    assert res.mode == "CaseII"
    assert inst.X.membership(res.x)
    _, p_ref = _reference_saddle(sub)
    assert _p(sub, res.x)[0] - p_ref <= eta + 1e-12
    assert res.certified_gap <= eta
    assert res.counters["primal_calls"] > 0 and res.counters["dual_calls"] > 0


def test_step2_case1_matches_case2():
    inst = example2_toy()
    xk = np.array([0.3, -0.2])
    a = step2_solve(inst, xk, 0.5, 0.05, 1e-6, "CaseI")
    b = step2_solve(inst, xk, 0.5, 0.05, 1e-6, "CaseII")
    sub = build_subproblem(inst, xk, 0.5, 0.05)
    # both are within 1e-6 of the minimum, so mu |x - x*|^2 / 2 <= 1e-6 each
    assert np.linalg.norm(a.x - b.x) <= 2 * math.sqrt(2e-6 / sub.mu)
    with pytest.raises(ConfigurationError):
        step2_solve(inst, xk, 0.5, 0.05, 1e-6, "CaseIII")
