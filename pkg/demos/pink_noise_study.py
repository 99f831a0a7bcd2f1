"""How much extra cooperativity does 1/f photocurrent noise cost?

The excess-aware Wiener filter weights low frequencies less, which keeps
squeezing reachable at a higher measurement strength.

Run with ``python demos/pink_noise_study.py``.
"""

# %% device and noise model
import math

import numpy as np

from mechsqueeze.params import OscillatorParams, derive, thermal_occupancy
from mechsqueeze.wiener import (
    ExcessNoiseModel,
    clean_squeezing_crossing,
    excess_conditional_covariance,
    excess_position_filter,
    excess_squeezing_threshold,
    position_filter,
)

omega = 2 * math.pi * 694e3
n_th = thermal_occupancy(omega, 300.0)
eta = 0.5
pink = ExcessNoiseModel.pink(omega)
print(pink.label)
print(f"DC excess {pink.dc_level_db():.1f} dB, falls to shot noise at {pink.unity_crossing() / (2 * math.pi):.3g} Hz")

# %% squeezing thresholds for a few assumed quality factors
print(f"\n{'Q':>8} {'clean C':>11} {'pink C':>11} {'factor':>7}")
for q in (1e4, 1e5, 1e6):
    p = OscillatorParams(omega=omega, gamma=omega / q, eta=eta, n_th=n_th, c=1.0)
    clean = clean_squeezing_crossing(q, n_th, eta)
    noisy = excess_squeezing_threshold(p, pink)
    print(f"{q:8.0e} {clean:11.4e} {noisy:11.4e} {noisy / clean:7.3f}")

# %% the same study with the excess level doubled
doubled = ExcessNoiseModel.pink(omega, level=0.2)
p = OscillatorParams(omega=omega, gamma=omega / 1e5, eta=eta, n_th=n_th, c=1.0)
ratio = excess_squeezing_threshold(p, doubled) / clean_squeezing_crossing(1e5, n_th, eta)
print(f"\nlevel 0.2: DC {doubled.dc_level_db():.1f} dB, crossing {doubled.unity_crossing() / (2 * math.pi):.3g} Hz, "
      f"factor {ratio:.3f} at Q = 1e5")

# %% filter redesign at the clean threshold
c = clean_squeezing_crossing(1e5, n_th, eta)
d = derive(OscillatorParams(omega=omega, gamma=omega / 1e5, eta=eta, n_th=n_th, c=c))
w = np.geomspace(1.0, 0.1 * omega, 6)
ratio = np.abs(excess_position_filter(d, pink, w)) / np.abs(position_filter(d)(w))
for wi, r in zip(w, ratio):
    print(f"w = {wi:9.3g} rad/s: |H_excess| / |H_clean| = {r:.4f}")
cov = excess_conditional_covariance(d, pink)
print(f"V_min with pink noise at the clean threshold: {cov.v_min:.4f}")
