"""Classical-equivalent time-domain simulation of the monitored oscillator.

The photocurrent commutes with itself at all times, so a classical linear
SDE with the same spectra reproduces every record statistic:

    dq = Omega p dt
    dp = (-Omega q - Gamma p) dt + sqrt(4 Gamma n_tot) dW
    Y  = 2 sqrt(eta Gamma C) q + xi          (unit two-sided PSD for xi)

Sample ``y[k]`` is the record averaged over ``[t_k, t_k + dt)``; the state
arrays hold ``q(t_k)`` and ``p(t_k)``.  Both come from an exact
discretisation, so ``dt`` only limits how well the filter convolution is
resolved, not the dynamics.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import linalg, signal

from .params import DerivedQuantities
from .riccati import build_full_model, unconditional_covariance
from .wiener.excess import ExcessNoiseModel
from .wiener.filters import (
    FilterResponse,
    ImpulseResponse,
    cross_spectrum,
    measured_spectrum,
    momentum_filter,
    position_filter,
    wiener_from_spectra,
)
from .wiener.tables import frequency_grid

__all__ = [
    "SimulationConfig",
    "MeasurementRecord",
    "ErrorStatistics",
    "SimulationInstabilityError",
    "simulate",
    "apply_filter",
    "error_statistics",
    "run_filter_check",
    "sampled_excess_filter",
    "config_hash",
    "write_record_csv",
    "write_statistics_csv",
]

_TRUNCATION_TOL = 1e-4
_DRIFT_TOL = 1e-2
_MIN_BLOCKS = 100


class SimulationInstabilityError(ArithmeticError):
    """The discretised dynamics do not preserve the stationary covariance."""


@dataclass(frozen=True)
class SimulationConfig:
    """Time grid, ensemble size and seed of one Monte Carlo run.

    Statistics use ``duration`` seconds after ``burn_in + filter_truncation``;
    the simulated record is therefore ``burn_in + filter_truncation + duration``
    long.
    """

    dt: float
    duration: float
    burn_in: float
    trajectories: int
    seed: int = 0
    filter_truncation: float = 0.0

    def __post_init__(self):
        for name in ("dt", "duration", "burn_in", "filter_truncation"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and >= 0, got {v!r}")
        if not self.dt > 0 or not self.duration > 0:
            raise ValueError("dt and duration must be > 0")
        if int(self.trajectories) != self.trajectories or self.trajectories < 1:
            raise ValueError(f"trajectories must be a positive integer, got {self.trajectories!r}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @staticmethod
    def max_dt(derived: DerivedQuantities) -> float:
        return min(2.0 * math.pi / derived.omega_prime, 1.0 / derived.gamma_prime) / 20.0

    @staticmethod
    def min_truncation(derived: DerivedQuantities) -> float:
        return 2.0 * math.log(1.0 / _TRUNCATION_TOL) / derived.gamma_prime

    @staticmethod
    def min_burn_in(derived: DerivedQuantities) -> float:
        return max(10.0 / derived.gamma_prime, 10.0 / derived.gamma)

    @classmethod
    def for_params(cls, derived: DerivedQuantities, trajectories: int = 64, duration: float | None = None,
                   seed: int = 0, dt_fraction: float = 1.0) -> "SimulationConfig":
        """Defaults at the invariant bounds; ``duration`` defaults to ``2000 / Gamma'``."""
        trunc = cls.min_truncation(derived) * (1.0 + 1e-9)
        return cls(
            dt=cls.max_dt(derived) * dt_fraction,
            duration=2000.0 / derived.gamma_prime if duration is None else duration,
            burn_in=cls.min_burn_in(derived),
            trajectories=trajectories,
            seed=seed,
            filter_truncation=trunc,
        )

    def validate(self, derived: DerivedQuantities) -> None:
        """Raise ``ValueError`` naming the first violated invariant."""
        bound = self.max_dt(derived)
        if self.dt > bound * (1 + 1e-12):
            raise ValueError(f"dt = {self.dt:.4g} s exceeds min(2 pi/Omega', 1/Gamma')/20 = {bound:.4g} s")
        if self.burn_in < self.min_burn_in(derived) * (1 - 1e-12):
            raise ValueError(
                f"burn_in = {self.burn_in:.4g} s is shorter than max(10/Gamma', 10/Gamma) = "
                f"{self.min_burn_in(derived):.4g} s"
            )
        if self.filter_truncation < self.min_truncation(derived) * (1 - 1e-12):
            raise ValueError(
                f"filter_truncation = {self.filter_truncation:.4g} s leaves exp(-Gamma' T / 2) >= 1e-4; "
                f"need >= {self.min_truncation(derived):.4g} s"
            )

    @property
    def steps(self) -> int:
        return int(math.ceil((self.burn_in + self.filter_truncation + self.duration) / self.dt))

    @property
    def discard_steps(self) -> int:
        return int(math.ceil((self.burn_in + self.filter_truncation) / self.dt))

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class MeasurementRecord:
    """Photocurrent and latent trajectories, shape ``(trajectories, steps)``."""

    y_samples: np.ndarray
    q_true: np.ndarray
    p_true: np.ndarray
    dt: float
    seed: int
    config: SimulationConfig | None = None
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not (self.y_samples.shape == self.q_true.shape == self.p_true.shape):
            raise ValueError("y, q and p must have equal shapes")

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.y_samples.shape[-1]) * self.dt


@dataclass(frozen=True)
class ErrorStatistics:
    """Ensemble-and-time averages of the estimation errors with standard errors."""

    v_qq: float
    v_pp: float
    c_qp: float
    se_qq: float
    se_pp: float
    se_qp: float
    samples: int
    blocks: int

    def __post_init__(self):
        vals = (self.v_qq, self.v_pp, self.c_qp, self.se_qq, self.se_pp, self.se_qp)
        if not all(math.isfinite(v) for v in vals):
            raise ArithmeticError("non-finite error statistics")
        if min(self.se_qq, self.se_pp, self.se_qp) <= 0:
            raise ArithmeticError("standard errors must be > 0")

    def as_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------------------
# discretisation

def _discretise(derived: DerivedQuantities, dt: float):
    """Exact one-step maps for ``x = (q, p)`` and the step integral of ``q``.

    Returns ``(phi, row, cov)``: ``x' = phi x + w``, ``int q = row . x + v``,
    ``cov`` the 3x3 covariance of ``(w, v)`` (Van Loan).
    """
    model = build_full_model(derived)
    a = np.zeros((3, 3))
    a[:2, :2] = model.drift
    a[2, 0] = 1.0
    d = np.zeros((3, 3))
    d[:2, :2] = model.diffusion
    block = np.zeros((6, 6))
    block[:3, :3] = -a
    block[:3, 3:] = d
    block[3:, 3:] = a.T
    e = linalg.expm(block * dt)
    trans = e[3:, 3:].T
    cov = trans @ e[:3, 3:]
    cov = 0.5 * (cov + cov.T)
    return trans[:2, :2], trans[2, :2], cov, model


def _noise_factor(cov: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        w, v = np.linalg.eigh(cov)
        return v * np.sqrt(np.clip(w, 0.0, None))


def _check_stationarity(phi, cov2, p0):
    drift = phi @ p0 @ phi.T + cov2 - p0
    rel = np.abs(drift).max() / np.abs(p0).max()
    if not rel <= _DRIFT_TOL or np.abs(np.linalg.eigvals(phi)).max() >= 1.0:
        raise SimulationInstabilityError(
            f"one step moves the stationary covariance by {rel:.3g} (> {_DRIFT_TOL:g})"
        )


def _propagate(phi, x0, w):
    """``x[0] = x0``, ``x[k+1] = phi x[k] + w[k]`` via a modal recursion."""
    lam, vec = np.linalg.eig(phi)
    n = w.shape[0]
    if np.linalg.cond(vec) > 1e8:
        x = np.empty((n, 2))
        x[0] = x0
        for k in range(n - 1):
            x[k + 1] = phi @ x[k] + w[k]
        return x
    inv = np.linalg.inv(vec)
    z0 = inv @ x0
    u = w[: n - 1] @ inv.T
    z = np.empty((n, 2), dtype=complex)
    for m in range(2):
        drive = np.concatenate([[z0[m]], u[:, m]])
        z[:, m] = signal.lfilter([1.0], [1.0, -lam[m]], drive)
    return (z @ vec.T).real


def _excess_fir(excess: ExcessNoiseModel, dt: float, taps: int) -> np.ndarray:
    """Zero-phase FIR with ``|G(w)|^2 = s(w)`` on the sampling grid."""
    w = 2.0 * math.pi * np.fft.rfftfreq(taps, dt)
    g = np.fft.irfft(np.sqrt(excess(w)), n=taps)
    return np.roll(g, taps // 2)


def simulate(derived: DerivedQuantities, config: SimulationConfig,
             excess: ExcessNoiseModel | None = None, excess_taps: int | None = None) -> MeasurementRecord:
    """Simulate ``config.trajectories`` independent records.

    Trajectory ``k`` draws from ``numpy.random.default_rng(seed ^ k)``, so a
    trajectory does not depend on how many others are run.  With ``excess``
    the photocurrent gets additive coloured noise of PSD ``excess(w)``
    (white noise through a zero-phase FIR by overlap-add).
    """
    config.validate(derived)
    dt, n = config.dt, config.steps
    phi, row, cov, model = _discretise(derived, dt)
    p0 = unconditional_covariance(model)
    _check_stationarity(phi, cov[:2, :2], p0)
    chol = _noise_factor(cov)
    start = _noise_factor(p0)
    gain = derived.record_gain
    if excess is not None:
        taps = excess_taps or min(1 << int(math.ceil(math.log2(n))), 1 << 18)
        fir = _excess_fir(excess, dt, taps)

    y = np.empty((config.trajectories, n))
    q = np.empty_like(y)
    p = np.empty_like(y)
    for k in range(config.trajectories):
        rng = np.random.default_rng(int(config.seed) ^ k)
        x0 = start @ rng.standard_normal(2)
        noise = rng.standard_normal((n, 4))
        joint = noise[:, :3] @ chol.T
        x = _propagate(phi, x0, joint[:, :2])
        integral = x @ row + joint[:, 2]
        y[k] = gain * integral / dt + noise[:, 3] / math.sqrt(dt)
        if excess is not None:
            white = rng.standard_normal(n + fir.size - 1) / math.sqrt(dt)
            y[k] += signal.oaconvolve(white, fir, mode="valid")
        q[k], p[k] = x[:, 0], x[:, 1]
    meta = {"params": derived.as_dict(), "config": config.as_dict(),
            "excess": None if excess is None else excess.label}
    return MeasurementRecord(y, q, p, dt, int(config.seed), config, meta)


# ---------------------------------------------------------------------------
# filtering and statistics

def apply_filter(record: MeasurementRecord, filt: FilterResponse | ImpulseResponse,
                 truncation: float | None = None) -> np.ndarray:
    """Causal estimate ``x_est(t_k) = int_0^T h(s) Y(t_k - s) ds``.

    Only samples before ``t_k`` enter.  Each record interval is weighted by
    the trapezoid integral of ``h`` over it; a constant (delta) response
    returns the scaled most recent sample.  Estimates before a full kernel
    length of record are partial sums.
    """
    dt = record.dt
    if truncation is None:
        truncation = record.config.filter_truncation if record.config else None
    if isinstance(filt, ImpulseResponse):
        if not math.isclose(filt.dt, dt, rel_tol=1e-9):
            raise ValueError(f"impulse response dt {filt.dt:.6g} s does not match record dt {dt:.6g} s")
        h = filt.samples
    else:
        if filt.rational is not None and filt.rational.poles.size == 0:
            gain = filt.rational.gain
            if abs(gain.imag) > 1e-12 * abs(gain):
                raise ValueError("constant filter must be real")
            out = np.zeros_like(record.y_samples)
            out[:, 1:] = gain.real * record.y_samples[:, :-1]
            return out
        if truncation is None or truncation <= 0:
            raise ValueError("a truncation time is needed to sample the filter")
        h = filt.impulse_response(dt, truncation + dt).samples
    h = np.asarray(h, dtype=float)
    if h.size < 2:
        raise ValueError("impulse response needs at least two samples")
    weights = 0.5 * dt * (h[:-1] + h[1:])
    conv = signal.oaconvolve(record.y_samples, weights[None, :], mode="full", axes=1)
    out = np.zeros_like(record.y_samples)
    out[:, 1:] = conv[:, : record.y_samples.shape[1] - 1]
    return out


def error_statistics(record: MeasurementRecord, q_est: np.ndarray, p_est: np.ndarray,
                     block_length: float | None = None, discard: int | None = None,
                     resamples: int = 400, gamma_prime: float | None = None) -> ErrorStatistics:
    """Error moments with block-bootstrap standard errors.

    Blocks default to ``10 / Gamma'`` (from the record metadata or
    ``gamma_prime``); the bootstrap is seeded from the record seed.
    """
    if discard is None:
        discard = record.config.discard_steps if record.config else 0
    dq = record.q_true[:, discard:] - q_est[:, discard:]
    dp = record.p_true[:, discard:] - p_est[:, discard:]
    if block_length is None:
        gp = gamma_prime or record.metadata.get("params", {}).get("gamma_prime")
        if gp is None:
            raise ValueError("block_length or gamma_prime is required")
        block_length = 10.0 / gp
    m = max(1, int(round(block_length / record.dt)))
    nb = dq.shape[1] // m
    blocks = dq.shape[0] * nb
    if blocks < _MIN_BLOCKS:
        raise ValueError(f"only {blocks} independent blocks (need >= {_MIN_BLOCKS}); lengthen the run")
    cut = nb * m
    moments = np.stack([dq * dq, dp * dp, dq * dp])[:, :, :cut]
    means = moments.reshape(3, dq.shape[0], nb, m).mean(axis=3).reshape(3, blocks)
    est = means.mean(axis=1)
    rng = np.random.default_rng(record.seed)
    picks = rng.integers(0, blocks, size=(resamples, blocks))
    boot = means[:, picks].mean(axis=2)
    se = boot.std(axis=1, ddof=1)
    return ErrorStatistics(float(est[0]), float(est[1]), float(est[2]),
                           float(se[0]), float(se[1]), float(se[2]),
                           int(dq.size), int(blocks))


def sampled_excess_filter(derived: DerivedQuantities, excess: ExcessNoiseModel, dt: float,
                          points: int = 2**18) -> FilterResponse:
    """Tabulated excess-aware position filter whose time grid has step ``dt``.

    The frequency grid spans the Nyquist band of the record, so the
    impulse response can be sampled directly by :func:`apply_filter`.
    """
    omega = frequency_grid(points, 2.0 * math.pi / (points * dt))
    s_yy = measured_spectrum(derived, excess, omega=omega)
    return wiener_from_spectra(cross_spectrum(derived), s_yy, label=f"H_q[{excess.label}]")


def run_filter_check(derived: DerivedQuantities, config: SimulationConfig) -> ErrorStatistics:
    """Simulate, apply the optimal position and momentum filters, return statistics."""
    record = simulate(derived, config)
    q_est = apply_filter(record, position_filter(derived))
    p_est = apply_filter(record, momentum_filter(derived))
    return error_statistics(record, q_est, p_est)


# ---------------------------------------------------------------------------
# serialisation

def config_hash(*documents: dict) -> str:
    """Git blob hash of the canonical JSON of ``documents``."""
    body = json.dumps(documents, sort_keys=True, separators=(",", ":"), default=float).encode()
    return hashlib.sha1(b"blob %d\0" % len(body) + body).hexdigest()


def _header(fh, meta: dict):
    for key, value in meta.items():
        text = value if isinstance(value, str) else json.dumps(value, sort_keys=True, default=float)
        fh.write(f"# {key}: {text}\n")


def _record_meta(record: MeasurementRecord) -> dict:
    meta = dict(record.metadata)
    meta["seed"] = record.seed
    meta["config_hash"] = config_hash(meta.get("params", {}), meta.get("config", {}))
    return meta


def write_record_csv(record: MeasurementRecord, path, trajectory: int = 0) -> None:
    """One trajectory as ``t_s, y, q, p`` rows."""
    with open(path, "w", newline="") as fh:
        _header(fh, {**_record_meta(record), "trajectory": trajectory})
        out = csv.writer(fh)
        out.writerow(["t_s", "y", "q", "p"])
        for row in zip(record.times, record.y_samples[trajectory], record.q_true[trajectory],
                       record.p_true[trajectory]):
            out.writerow([repr(float(v)) for v in row])


def write_statistics_csv(stats: ErrorStatistics, path, metadata: dict | None = None) -> None:
    meta = dict(metadata or {})
    meta.setdefault("config_hash", config_hash(meta))
    with open(path, "w", newline="") as fh:
        _header(fh, meta)
        out = csv.writer(fh)
        out.writerow(["quantity", "estimate", "standard_error"])
        out.writerow(["v_qq", stats.v_qq, stats.se_qq])
        out.writerow(["v_pp", stats.v_pp, stats.se_pp])
        out.writerow(["c_qp", stats.c_qp, stats.se_qp])
        out.writerow(["samples", stats.samples, ""])
        out.writerow(["blocks", stats.blocks, ""])
