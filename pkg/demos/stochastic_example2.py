"""A few seeds of the stochastic variant with Gaussian gradient noise.

Each run draws its output uniformly from the iterates; the distance to
the proximal point is measured with a tight deterministic prox.
"""

import sys

import numpy as np

from maxsmooth.problem import gaussian_oracle, q_value
from maxsmooth.problems import example2_toy
from maxsmooth.smoothing import moreau_prox_full
from maxsmooth.stochastic import run_stochastic, stochastic_schedule


def main(seeds=3):
    inst = example2_toy()
    x1 = np.array([0.05, 0.02])
    eps, sigma = 0.5, 0.5
    delta = q_value(inst, x1, 1e-10) - inst.q_star_lower_bound
    for seed in range(seeds):
        sc = stochastic_schedule(inst.coupling.gamma, eps, inst.beta_X, inst.Omega_Y, delta, seed)
        x, log = run_stochastic(inst, gaussian_oracle(inst, sigma, sigma), sc, x1)
        prox = moreau_prox_full(inst, x, sc.lam, 1e-6)
        dist = np.linalg.norm(x - prox.point)
        print(f"seed={seed}  K={sc.K}  picked k={log.summary['chosen_index']}  "
              f"|x - prox|={dist:.3e}  target={eps * sc.lam / inst.beta_X:.3e}")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 3)
