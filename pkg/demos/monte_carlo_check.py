"""Simulate photocurrent records and check the Wiener filters against the closed form.

Run with ``python demos/monte_carlo_check.py``.
"""

# %% simulate 64 records
import time

from mechsqueeze.conditional import conditional_covariance
from mechsqueeze.montecarlo import SimulationConfig, apply_filter, error_statistics, simulate
from mechsqueeze.params import OscillatorParams, derive
from mechsqueeze.wiener import momentum_filter, position_filter

d = derive(OscillatorParams(omega=50.0, gamma=1.0, eta=1.0, n_th=100.0, c=500.0))
cfg = SimulationConfig.for_params(d, trajectories=64, seed=1)
print(f"dt = {cfg.dt:.3g} s, {cfg.steps} steps per record, {cfg.trajectories} records")

start = time.perf_counter()
record = simulate(d, cfg)
print(f"simulated in {time.perf_counter() - start:.1f} s")

# %% filter and compare
stats = error_statistics(record, apply_filter(record, position_filter(d)), apply_filter(record, momentum_filter(d)))
ref = conditional_covariance(d)
for name in ("v_qq", "v_pp", "c_qp"):
    got, want, se = getattr(stats, name), getattr(ref, name), getattr(stats, "se_" + name[2:])
    print(f"{name}: simulated {got:.5g} +- {se:.2g}, closed form {want:.5g} ({(got - want) / se:+.1f} se)")
