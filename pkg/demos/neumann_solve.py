"""
Manufactured solution for the Neumann solver
============================================

u = cos(pi x1) cos(pi x2) has zero normal derivative on the unit square, so
-Lap u + u = (2 pi^2 + 1) u is a pure Neumann problem with known answer.
Q1 elements should converge at second order in L2 and first order in H1.
"""

import numpy as np

from homlab import HomogenizedSet, ProblemData, build_preset, solve_homogenized_problem
from homlab.domain_solver import gradient_error, l2_error

hom = HomogenizedSet.from_coefficients(build_preset("identity", d=2, lam=1.0))


def exact(x):
    return np.cos(np.pi * x[0]) * np.cos(np.pi * x[1])


def exact_grad(x):
    return -np.pi * np.stack([np.sin(np.pi * x[0]) * np.cos(np.pi * x[1]),
                              np.cos(np.pi * x[0]) * np.sin(np.pi * x[1])])


data = ProblemData(F=lambda x: (2 * np.pi**2 + 1) * exact(x))

ns, l2, h1 = [32, 64, 128, 256], [], []
for n in ns:
    res = solve_homogenized_problem(hom, data, n)
    l2.append(l2_error(res.u, exact))
    h1.append(gradient_error(res.u, exact_grad))
    print(f"n={n:4d}  L2 {l2[-1]:.3e}  H1-semi {h1[-1]:.3e}  residual {res.relative_residual:.1e}")

print("L2 order:", -np.polyfit(np.log(ns), np.log(l2), 1)[0])
print("H1 order:", -np.polyfit(np.log(ns), np.log(h1), 1)[0])
