"""
Observability along the zero stator speed line
==============================================

At omega_s = 0 the plain observability matrix loses one rank. The injected virtual measurement
restores it, but only when saturation makes the Hessian depend on the flux.
"""

# %%
import math

import numpy as np

from satim import TABLE_I, TABLE_II_LINEAR, TABLE_II_SATURATED
from satim.dynamics import equilibrium_with_load, equilibrium_zero_stator_speed
from satim.observability import PerUnitBase, analyze, build_O, condition_sweep, numerical_rank

nominal = 400 / (2 * math.pi * 50)
u = np.array([20.0, 0.0])

# %%
for ws in (0.0, 2 * math.pi, 2 * math.pi * 10):
    eq = equilibrium_with_load(nominal, ws, 2.0, TABLE_II_SATURATED, TABLE_I)
    print(f"omega_s = {ws:6.2f} rad/s   rank(O) = {numerical_rank(build_O(eq, TABLE_I))}")

# %% [markdown]
# With injection: Os has full column rank for the saturated model only.

# %%
eq_sat = equilibrium_zero_stator_speed(nominal, 2.0, TABLE_II_SATURATED, TABLE_I)
eq_lin = equilibrium_zero_stator_speed(nominal, 2.0, TABLE_II_LINEAR, TABLE_I)
for label, eq, model in (("saturated", eq_sat, TABLE_II_SATURATED), ("linear", eq_lin, TABLE_II_LINEAR)):
    rep = analyze(eq, model, TABLE_I, u)
    print(f"{label:9s}  rank(O) = {rep.rank_O}  rank(Os) = {rep.rank_Os}  cond(Os) = {rep.cond_Os:.3g}")

# %% [markdown]
# Condition numbers over load torque. The algebraic inversion (Os') is much worse conditioned
# than the observer form near the torque where its last row degenerates.

# %%
torques = np.round(np.arange(-5.0, 5.0 + 1e-9, 0.5), 12)
for pct in (50, 100, 150):
    rows = condition_sweep([nominal * pct / 100], list(torques), u, TABLE_II_SATURATED, TABLE_I)
    ratio = [r.cond_Os_prime / r.cond_Os for r in rows]
    k = int(np.argmax(ratio))
    print(f"{pct:4d}%  max cond(Os')/cond(Os) = {ratio[k]:8.2f} at Tl = {rows[k].Tl:+.1f} N m")

# %% [markdown]
# Per-unit scaling changes the numbers, not the ranks.

# %%
rep = analyze(eq_sat, TABLE_II_SATURATED, TABLE_I, u, per_unit=PerUnitBase())
print(f"per unit: cond(Os) = {rep.cond_Os:.3g}, cond(Os') = {rep.cond_Os_prime:.3g}")
