"""Where the rotating-wave picture fails.

At fixed temperature and cooperativity, sweeping n_th means sweeping the
mechanical frequency. The RWA variance only grows; the full solution peaks
and then squeezes.

Run with ``python demos/rwa_breakdown.py``.
"""

# %%
import math
import warnings

import numpy as np

from mechsqueeze.conditional import conditional_covariance, rwa_baseline
from mechsqueeze.params import CONSTANTS, OscillatorParams, derive

temperature, c, gamma = 300.0, 5e3, 2 * math.pi * 3e3
kt_hbar = CONSTANTS.k_B * temperature / CONSTANTS.hbar

print(f"{'n_th':>9} {'Q':>9}" + "".join(f" {'full ' + str(e):>10} {'rwa ' + str(e):>10}" for e in (0.25, 1.0)))
for n_th in np.geomspace(1.0, 1e9, 10):
    omega = kt_hbar / n_th
    row = f"{n_th:9.2e} {omega / gamma:9.2e}"
    for eta in (0.25, 1.0):
        d = derive(OscillatorParams(omega=omega, gamma=gamma, eta=eta, n_th=n_th, c=c))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            v = conditional_covariance(d).v_min
        row += f" {v:10.4g} {rwa_baseline(d):10.4g}"
    print(row)
