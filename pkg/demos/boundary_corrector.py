"""
The Neumann boundary corrector
==============================

Psi solves a matrix Neumann problem whose data come from the potential V.
Its distance from the identity shrinks like eps log(1/eps).  In 1D it can
also be integrated by hand, which makes a handy check.
"""

import numpy as np

from homlab import build_preset, solve_boundary_corrector, solve_cell_problems
from homlab.domain_solver import psi_deviation

cs = build_preset("scalar1d", [2.0, 1.0, 1.0], lam=6.0)
_, hom = solve_cell_problems(cs)

for eps in (1 / 8, 1 / 16, 1 / 32, 1 / 64):
    n = int(32 / eps)
    psi = solve_boundary_corrector(cs, eps, hom, n)
    dev = psi_deviation(psi)
    print(f"eps={eps:.5f}  |Psi - I|_max = {dev:.3e}  scaled = {dev / (eps * np.log(1 / eps + 2)):.3f}")

# %%
# In 1D the conormal flux a Psi' + V is constant, equal to V_hat, so
# Psi' = (V_hat - V(x/eps)) / a(x/eps).
eps, n = 1 / 8, 1024
psi = solve_boundary_corrector(cs, eps, hom, n).values[0, 0]
x = np.linspace(0, 1, n + 1)
rate = (hom.V_hat.item() - np.cos(2 * np.pi * x / eps)) / (2 + np.cos(2 * np.pi * x / eps))
print("max |Psi' - closed form| =", np.max(np.abs(np.gradient(psi, x)[1:-1] - rate[1:-1])))
