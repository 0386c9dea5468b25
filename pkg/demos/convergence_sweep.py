"""
Rate of convergence in eps
==========================

Solve the oscillating problem for a handful of eps, compare with the
homogenized solution and fit log-log slopes.  The L2 difference should
decay like eps; the first-order corrected error like eps^(1/2).
"""

import tempfile

from homlab import SweepConfig, emit_report, run_convergence_sweep

cfg = SweepConfig(
    preset="scalar1d",
    params=(2.0, 1.0, 1.0),
    lam=6.0,
    eps=(1 / 8, 1 / 16, 1 / 32, 1 / 64),
    cells_per_eps=32,
    data="cosine",
    phi=("steklov", "double_smooth"),
)
report = run_convergence_sweep(cfg)

print(f"{'eps':>9} {'l2_diff':>10} {'h1_w':>10} {'layer':>10} {'psi_dev':>10}")
for row in report.rows:
    print(f"{row['eps']:9.5f} {row['l2_diff']:10.3e} {row['h1_w']:10.3e} "
          f"{row['layer_energy']:10.3e} {row['psi_dev']:10.3e}")

for name, fit in report.slopes.items():
    print(f"slope {name:22s} {fit.slope:6.3f}  95% [{fit.interval[0]:.3f}, {fit.interval[1]:.3f}]")

# quantities that should stay bounded across eps
for name, ratio in report.ratios.items():
    print(f"max/min {name}: {ratio:.3f}")

# %%
# The report can be written as CSV, JSON and an SVG log-log plot.
out = tempfile.mkdtemp(prefix="sweep-")
for path in emit_report(report, out, ("csv", "json", "svg")):
    print("wrote", path)
