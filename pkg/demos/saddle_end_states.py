"""Both saddle-subproblem solvers at eps = 1e-3.

Case I runs the primal APG on the DRO toy with its inexact dual oracle;
Case II runs the dual APG on the bilinear toy and recovers a primal point.
The duality gap is then evaluated with tight inner solves.
"""

import numpy as np

from maxsmooth.problems import bilinear_toy, dro_toy
from maxsmooth.saddle import (build_subproblem, case2_epsilons, compute_B_bounds, duality_gap,
                              recover_dual_case1, recover_primal_case2, solve_dual_case2,
                              solve_primal_case1)


def main():
    eps = 1e-3

    inst = dro_toy()
    sub = build_subproblem(inst, np.array([0.2, -0.1]), 1 / (2 * inst.coupling.gamma),
                           eps / (4 * inst.Omega_Y))
    oracle = inst.meta["case1_oracle"](inst, sub.rho)
    x = solve_primal_case1(sub, oracle, eps)
    y = recover_dual_case1(sub, x, oracle, eps)
    gap = duality_gap(sub, x, y, 1e-10)
    print(f"Case I  (DRO):      x={x}  gap in [{gap.value:.2e}, {gap.upper:.2e}]  target {eps / 2:g}")

    inst = bilinear_toy()
    sub = build_subproblem(inst, np.array([0.3, -0.2]), 1 / (2 * inst.coupling.gamma),
                           eps / (4 * inst.Omega_Y))
    B = compute_B_bounds(sub)
    e3, e4 = case2_epsilons(sub, eps, *B)
    y = solve_dual_case2(sub, e3)
    x = recover_primal_case2(sub, y, eps, B)
    gap = duality_gap(sub, x, y, 1e-10)
    print(f"Case II (bilinear): x={x}  gap in [{gap.value:.2e}, {gap.upper:.2e}]  target {eps / 2:g}")
    print(f"                    eps_3={e3:.2e} eps_4={e4:.2e}  B_f={B[0]:.2f} B_omega={B[1]:.2f}")


if __name__ == "__main__":
    main()
