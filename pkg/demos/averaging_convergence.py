"""
How fast the averaged model takes over
======================================

The extraction error of the virtual current falls as 1/Omega^2: each doubling of the injection
frequency cuts it by about four.
"""

# %%
import math

import numpy as np

from satim import TABLE_I, TABLE_II_SATURATED, InjectionSpec
from satim.dynamics import equilibrium_locked_rotor
from satim.injection import ripple_amplitudes, run_injection

nominal = 400 / (2 * math.pi * 50)
eq = equilibrium_locked_rotor(np.array([nominal, 0.0]), 0.0, TABLE_II_SATURATED, TABLE_I)
pred = eq.Hss @ np.array([20.0, 0.0])

# %%
duration = 6 / 500.0
prev = None
for hz in (500.0, 1000.0, 2000.0, 4000.0):
    spec = InjectionSpec(omega_hz=hz)
    run = run_injection(eq, spec, TABLE_II_SATURATED, TABLE_I, periods=int(round(duration * hz)))
    err = np.max(np.linalg.norm(run.is_hf[run.settled] - pred, axis=-1)) / np.linalg.norm(pred)
    ripple, _, _ = ripple_amplitudes(run)
    note = "" if prev is None else f"   ratio {prev / err:.2f}"
    print(f"{hz:6.0f} Hz   error {err:.3e}   current ripple {ripple:.4f} A{note}")
    prev = err
