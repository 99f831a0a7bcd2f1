"""Optimal estimation with additive excess noise on the photocurrent.

With an excess PSD ``s(w)`` the record spectrum is ``S = S0 + s`` where
``S0 = |M0|^2`` is the clean (rational) spectrum.  Writing
``M = M0 exp(phi)`` with ``phi`` analytic in the lower half-plane, the
correction is fixed by ``2 Re phi = r = log(1 + s/S0)`` on the real axis:

    phi*(p) = r_inf/2 + (i/2pi) int_0^inf (r(t) - r_inf) 2p / (t^2 - p^2) dt

for ``Im p < 0`` (``r_inf`` is the limit of ``r`` at high frequency).  The
cross spectrum ``S_qY`` is rational with the mechanical poles ``p_j`` in the
lower half-plane, so ``[S_qY / M*]_+`` needs ``M*`` only at ``p_j``.  The
optimal error covariances then follow from a handful of one-dimensional
integrals, which keeps the method accurate for high-Q oscillators whose
linewidth cannot be resolved on an FFT grid.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, optimize

from ..conditional import ConditionalCovariance, _covariance_arrays
from ..params import DerivedQuantities, OscillatorParams, derive, squeezing_threshold, thermal_occupancy
from .filters import oscillator_poles
from .rational import RationalSpectrum
from .tables import read_table_csv

__all__ = [
    "ExcessNoiseModel",
    "PinkNoiseStudy",
    "clean_squeezing_crossing",
    "excess_conditional_covariance",
    "excess_position_filter",
    "excess_squeezing_threshold",
    "pink_noise_study",
]


@dataclass(frozen=True)
class ExcessNoiseModel:
    """Additive photocurrent noise PSD in units of the shot-noise level.

    ``psd`` maps angular frequency (rad/s, array) to a non-negative PSD; it
    is evaluated at ``|w|`` so the model is even by construction.
    ``breakpoints`` lists frequencies where the PSD changes character
    (used to place quadrature nodes).  ``rational`` carries an exact
    rational form when one exists.
    """

    psd: Callable[[np.ndarray], np.ndarray]
    label: str = "custom"
    breakpoints: tuple[float, ...] = ()
    rational: RationalSpectrum | None = field(default=None, repr=False)
    high_frequency_level: float = 0.0

    def __call__(self, omega) -> np.ndarray:
        w = np.abs(np.asarray(omega, dtype=float))
        out = np.asarray(self.psd(w), dtype=float)
        if np.any(out < 0) or not np.all(np.isfinite(out)):
            raise ValueError(f"excess PSD {self.label!r} must be finite and non-negative")
        return out

    @classmethod
    def pink(cls, omega_ref: float, level: float = 0.1, offset: float = 0.1) -> "ExcessNoiseModel":
        """``level * omega_ref / (|w| + offset)``; ``offset`` in rad/s keeps DC finite."""
        if not (omega_ref > 0 and level >= 0 and offset > 0):
            raise ValueError("pink model needs omega_ref > 0, level >= 0, offset > 0")
        scale = level * omega_ref
        return cls(lambda w: scale / (w + offset), f"pink({level:g} * {omega_ref:.6g} / (w + {offset:g}))",
                   (offset, scale))

    @classmethod
    def white(cls, level: float) -> "ExcessNoiseModel":
        if level < 0:
            raise ValueError("level must be >= 0")
        return cls(lambda w: np.full(np.shape(w), float(level)), f"white({level:g})", (),
                   RationalSpectrum.constant(level), float(level))

    @classmethod
    def lorentzian(cls, level: float, width: float) -> "ExcessNoiseModel":
        """``level * width^2 / (w^2 + width^2)``."""
        if not (level >= 0 and width > 0):
            raise ValueError("lorentzian needs level >= 0 and width > 0")
        rat = RationalSpectrum([], [1j * width, -1j * width], level * width * width)
        return cls(lambda w: level * width * width / (w * w + width * width),
                   f"lorentzian({level:g}, {width:g})", (width,), rat)

    @classmethod
    def from_table(cls, omega, psd, label: str = "table") -> "ExcessNoiseModel":
        """Linear interpolation in ``|w|``; held constant beyond the last point."""
        w = np.abs(np.asarray(omega, dtype=float))
        v = np.asarray(psd, dtype=float)
        if w.shape != v.shape or w.size < 2:
            raise ValueError("table needs matching omega/psd arrays with >= 2 points")
        if np.any(v < 0) or not np.all(np.isfinite(v)) or not np.all(np.isfinite(w)):
            raise ValueError("excess PSD table must be finite and non-negative")
        order = np.argsort(w, kind="stable")
        w, v = w[order], v[order]
        w, idx = np.unique(w, return_index=True)
        v = v[idx]
        if w.size < 2:
            raise ValueError("table needs at least two distinct |omega| values")
        top = float(v[-1])
        pos = w[w > 0]
        marks = tuple(np.geomspace(pos[0], pos[-1], 12)) if pos.size > 1 else ()
        return cls(lambda x: np.interp(x, w, v), label, marks, None, top)

    @classmethod
    def from_csv(cls, path) -> "ExcessNoiseModel":
        """Read an ``omega_rad_s,re[,im]`` table of PSD values (``im`` must vanish)."""
        omega, values, meta = read_table_csv(path)
        if np.any(np.abs(values.imag) > 1e-12 * max(np.abs(values.real).max(), 1.0)):
            raise ValueError("excess PSD must be real")
        return cls.from_table(omega, values.real, label=meta.get("label", str(path)))

    def dc_level_db(self) -> float:
        return 10.0 * math.log10(float(self(0.0)))

    def unity_crossing(self) -> float | None:
        """Lowest angular frequency where the PSD falls to the shot-noise level."""
        s0 = float(self(0.0))
        if s0 <= 1.0 or self.high_frequency_level >= 1.0:
            return None
        hi = 1.0
        while float(self(hi)) > 1.0:
            hi *= 10.0
            if hi > 1e30:
                return None
        lo = hi / 10.0 if hi > 1.0 else 0.0
        return optimize.brentq(lambda w: float(self(w)) - 1.0, lo, hi, xtol=1e-300, rtol=1e-12)


# ---------------------------------------------------------------------------
# core computation in units of the mechanical decay rate

class _Problem:
    """Clean spectra, factors and log-ratio integrals for one parameter set."""

    def __init__(self, derived: DerivedQuantities, excess: ExcessNoiseModel):
        g = derived.gamma
        self.derived = derived
        self.gamma = g
        self.q = derived.q_factor
        self.excess = excess
        self.x = 16.0 * derived.eta * derived.c * derived.n_tot * self.q**2
        self.wp2 = (derived.omega_prime / g) ** 2
        self.gp = derived.gamma_prime / g
        self.r_inf = math.log1p(excess.high_frequency_level)
        self.poles = oscillator_poles(self.q, 1.0)
        marks = [self.q, math.sqrt(self.wp2), self.gp, 1.0] + [b / g for b in excess.breakpoints if b > 0]
        self.lo = 1e-3 * min(marks)
        self.hi = 1e4 * max(marks)
        edges = set(np.geomspace(self.lo, self.hi, int(8 * math.log10(self.hi / self.lo)) + 2).tolist())
        for centre, width in ((self.q, 1.0), (math.sqrt(self.wp2), self.gp)):
            for k in (0.25, 1.0, 4.0, 16.0, 64.0):
                for e in (centre - k * width, centre + k * width):
                    if self.lo < e < self.hi:
                        edges.add(e)
        edges.update(m for m in marks if self.lo < m < self.hi)
        self.edges = np.array(sorted(edges | {0.0}))

    def clean_spectrum(self, t):
        t = np.asarray(t, dtype=float)
        d = (self.q * self.q - t * t) ** 2 + t * t
        return 1.0 + self.x / d

    def r_tilde(self, t):
        """``log(1 + s/S0) - r_inf`` at internal frequency ``t``."""
        t = np.asarray(t, dtype=float)
        return np.log1p(self.excess(t * self.gamma) / self.clean_spectrum(t)) - self.r_inf

    def _quad(self, func, a, b, **kw):
        return integrate.quad(func, a, b, limit=400, epsabs=1e-14, epsrel=1e-11, **kw)[0]

    def psi(self, p: complex) -> complex:
        """``log(M*/M0*)`` at a lower-half-plane point ``p`` (internal units)."""
        def part(t, which):
            v = self.r_tilde(t) * 2.0 * p / (t * t - p * p)
            return v.real if which == 0 else v.imag

        total = 0.0 + 0.0j
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            for a, b in zip(self.edges[:-1], self.edges[1:]):
                total += self._quad(part, a, b, args=(0,)) + 1j * self._quad(part, a, b, args=(1,))
            total += self._quad(part, self.hi, np.inf, args=(0,)) + 1j * self._quad(part, self.hi, np.inf, args=(1,))
        return 0.5 * self.r_inf + 1j * total / (2.0 * math.pi)

    def log_ratio_real_axis(self, t: float) -> complex:
        """``log(M/M0)`` on the real axis via a principal-value integral."""
        r_here = float(self.r_tilde(t)) + self.r_inf
        if t == 0.0:
            return 0.5 * r_here
        a, b = 0.5 * t, 2.0 * t

        def regular(u):
            return float(self.r_tilde(u)) * 2.0 * t / (u * u - t * t)

        def cauchy_part(u):
            return float(self.r_tilde(u)) * 2.0 * t / (u + t)

        pv = 0.0
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            pv += self._quad(cauchy_part, a, b, weight="cauchy", wvar=t)
            outer = [e for e in self.edges if e < a] + [a]
            for lo, hi in zip(outer[:-1], outer[1:]):
                pv += self._quad(regular, lo, hi)
            upper = [b] + [e for e in self.edges if e > b]
            for lo, hi in zip(upper[:-1], upper[1:]):
                pv += self._quad(regular, lo, hi)
            pv += self._quad(regular, max(upper[-1], b), np.inf)
        return 0.5 * r_here - 1j * pv / (2.0 * math.pi)

    def residue_weights(self, psis):
        """Coefficients of ``[S_qY / M*]_+ = sum_j c_j / (w - p_j)`` for q and p."""
        d = self.derived
        h = 2.0 * math.sqrt(d.eta * d.c)
        k = 4.0 * self.q * self.q * d.n_tot
        p1, p2 = self.poles
        res = (-1.0 / (p1 - p2), -1.0 / (p2 - p1))
        cq, cp = [], []
        for j, pj in enumerate(self.poles):
            m0c = (self.wp2 - pj * pj + 1j * self.gp * pj) / (self.q * self.q - pj * pj + 1j * pj)
            g0 = 1.0 / (2j * pj) / m0c * np.exp(-psis[j])
            cq.append(h * k * res[j] * g0)
            cp.append(h * k * res[j] * g0 * (-1j * pj / self.q))
        return cq, cp


def _check_inputs(derived: DerivedQuantities):
    if not derived.c > 0:
        raise ValueError("excess-noise filtering needs C > 0")


def excess_conditional_covariance(derived: DerivedQuantities, excess: ExcessNoiseModel) -> ConditionalCovariance:
    """Optimal conditional covariance when ``excess`` is added to the record.

    Returned as the clean closed-form covariance plus the exact change
    ``sum_jk c_j conj(c_k) (1 - exp(-psi_j - conj psi_k)) i / (conj p_k - p_j)``.
    """
    _check_inputs(derived)
    prob = _Problem(derived, excess)
    psis = [prob.psi(p) for p in prob.poles]
    cq, cp = prob.residue_weights([0.0, 0.0])
    p = prob.poles

    def change(ca, cb):
        tot = 0.0 + 0.0j
        for j in range(2):
            for k in range(2):
                tot += ca[j] * np.conj(cb[k]) * np.expm1(-psis[j] - np.conj(psis[k])) * 1j / (np.conj(p[k]) - p[j])
        return tot.real

    v_qq, v_pp, c_qp, _, _ = (float(a) for a in _covariance_arrays(derived.q_factor, derived.n_th, derived.eta, derived.c))
    return ConditionalCovariance(v_qq - change(cq, cq), v_pp - change(cp, cp), c_qp - change(cq, cp))


def excess_position_filter(derived: DerivedQuantities, excess: ExcessNoiseModel, omega) -> np.ndarray:
    """Optimal position filter ``H(w)`` with excess noise, at real frequencies ``omega`` (rad/s)."""
    _check_inputs(derived)
    prob = _Problem(derived, excess)
    psis = [prob.psi(p) for p in prob.poles]
    cq, _ = prob.residue_weights(psis)
    w = np.atleast_1d(np.asarray(omega, dtype=float))
    out = np.empty(w.shape, dtype=complex)
    g = derived.gamma
    log_cache: dict[float, complex] = {}
    for i, wi in enumerate(w.ravel()):
        t = wi / g
        key = abs(t)
        if key not in log_cache:
            log_cache[key] = prob.log_ratio_real_axis(key)
        lr = log_cache[key] if t >= 0 else np.conj(log_cache[key])
        m0 = (prob.wp2 - t * t - 1j * prob.gp * t) / (prob.q**2 - t * t - 1j * t)
        gq = sum(cq[j] / (t - prob.poles[j]) for j in range(2))
        # internal units: H carries 1/sqrt(gamma) from the record normalisation
        out.ravel()[i] = gq / (m0 * np.exp(lr)) / math.sqrt(g)
    return out.reshape(np.shape(omega)) if np.ndim(omega) else out[0]


def _v_min(derived, excess):
    return excess_conditional_covariance(derived, excess).v_min


def excess_squeezing_threshold(params: OscillatorParams, excess: ExcessNoiseModel,
                               rtol: float = 1e-6) -> float:
    """Cooperativity at which ``V_min = 1`` with ``excess`` on the record.

    The search starts at the clean crossing (excess noise can only raise
    the optimal variance) and brackets upward by factors of two.
    """
    q, n_th, eta = params.q_factor, params.occupancy, params.eta
    clean = clean_squeezing_crossing(q, n_th, eta)

    def f(log_c):
        c = math.exp(log_c)
        d = derive(_with_c(params, c))
        return _v_min(d, excess) - 1.0

    lo = math.log(clean)
    f_lo = f(lo)
    if f_lo <= 0:
        return clean
    hi = lo + math.log(2.0)
    while f(hi) > 0:
        lo, hi = hi, hi + math.log(2.0)
        if hi > math.log(1e18):
            raise ArithmeticError("no squeezing crossing below C = 1e18")
    return math.exp(optimize.brentq(f, lo, hi, xtol=rtol, rtol=1e-12))


def _with_c(params: OscillatorParams, c: float) -> OscillatorParams:
    return OscillatorParams(omega=params.omega, gamma=params.gamma, eta=params.eta,
                            n_th=params.occupancy, c=c, sideband_factor=params.sideband_factor)


def clean_squeezing_crossing(q_factor: float, n_th: float, eta: float) -> float:
    """Exact cooperativity where the closed-form ``V_min`` reaches 1."""
    def f(log_c):
        c = math.exp(log_c)
        v_qq, v_pp, c_qp, v_diff, det = _covariance_arrays(q_factor, n_th, eta, c)
        v_max = 0.5 * (v_qq + v_pp) + math.hypot(0.5 * v_diff, c_qp)
        return float(det / v_max) - 1.0

    guess = squeezing_threshold(q_factor, n_th, eta)
    lo, hi = math.log(guess) - 1.0, math.log(guess) + 1.0
    while f(lo) < 0:
        lo -= 1.0
    while f(hi) > 0:
        hi += 1.0
    return math.exp(optimize.brentq(f, lo, hi, xtol=1e-12, rtol=1e-14))


@dataclass(frozen=True)
class PinkNoiseStudy:
    """Squeezing-threshold penalty from pink photocurrent noise."""

    omega: float
    temperature: float
    q_factor: float
    eta: float
    n_th: float
    clean_threshold: float
    excess_threshold: float
    ratio: float
    fixed_point_threshold: float
    dc_level_db: float
    unity_crossing_hz: float | None
    excess_label: str
    nominal_ratio: float = 1.43

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def pink_noise_study(omega: float = 2.0 * math.pi * 694e3, temperature: float = 300.0,
                     q_factor: float = 1e5, eta: float = 0.5,
                     excess: ExcessNoiseModel | None = None) -> PinkNoiseStudy:
    """Compare the ``V_min = 1`` cooperativity with and without excess noise.

    The default excess model is the pink spectrum ``0.1 Omega / (|w| + 0.1)``
    with ``w`` in rad/s.
    """
    excess = ExcessNoiseModel.pink(omega) if excess is None else excess
    n_th = thermal_occupancy(omega, temperature)
    params = OscillatorParams(omega=omega, gamma=omega / q_factor, eta=eta, n_th=n_th, c=1.0)
    clean = clean_squeezing_crossing(q_factor, n_th, eta)
    noisy = excess_squeezing_threshold(params, excess)
    crossing = excess.unity_crossing()
    return PinkNoiseStudy(
        omega=omega,
        temperature=temperature,
        q_factor=q_factor,
        eta=eta,
        n_th=n_th,
        clean_threshold=clean,
        excess_threshold=noisy,
        ratio=noisy / clean,
        fixed_point_threshold=squeezing_threshold(q_factor, n_th, eta),
        dc_level_db=excess.dc_level_db(),
        unity_crossing_hz=None if crossing is None else crossing / (2.0 * math.pi),
        excess_label=excess.label,
    )
