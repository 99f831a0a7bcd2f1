"""Conditional state of a room-temperature oscillator under continuous position measurement.

Run with ``python demos/conditional_state_tour.py``.
"""

# %% parameters of a 694 kHz oscillator at 300 K
import math

import numpy as np

from mechsqueeze.conditional import conditional_covariance, rwa_baseline, wigner
from mechsqueeze.params import OscillatorParams, classify, derive, squeezing_threshold, thermal_occupancy

omega = 2 * math.pi * 694e3
q_factor = 1e5
n_th = thermal_occupancy(omega, 300.0)
print(f"n_th at 300 K: {n_th:.4e}")

# %% the squeezing threshold and a cooperativity sweep across it
c_star = squeezing_threshold(q_factor, n_th, 1.0)
print(f"squeezing threshold (eta = 1): C = {c_star:.3e}")

print(f"{'C':>10} {'V_min':>10} {'V_rwa':>10} {'theta':>9} {'purity':>9}  regime")
for c in np.geomspace(1e-2, 1e9, 12):
    d = derive(OscillatorParams(omega=omega, gamma=omega / q_factor, eta=1.0, n_th=n_th, c=c))
    cov = conditional_covariance(d)
    label = classify(d, cov).label
    print(f"{c:10.3e} {cov.v_min:10.4g} {rwa_baseline(d):10.4g} {cov.theta:9.4f} {cov.purity:9.3e}  {label.numeral}")

# %% Wigner function of a squeezed conditional state
d = derive(OscillatorParams(omega=omega, gamma=omega / q_factor, eta=1.0, n_th=n_th, c=10 * c_star))
cov = conditional_covariance(d)
grid = wigner(cov)
e = grid.ellipse
print(f"\nC = {10 * c_star:.3e}: V_min = {cov.v_min:.3f}, tilt = {e.tilt:.4f} rad")
print(f"1/e contour semi-axes {e.semi_major:.3g} and {e.semi_minor:.3g} (ground state: {math.sqrt(2):.3g})")
print(f"grid integral {grid.integral():.9f}")
