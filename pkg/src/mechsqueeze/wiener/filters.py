"""Record spectra, causal Wiener filters and estimation-error integrals.

The photocurrent is ``Y = 2 sqrt(eta Gamma C) q + xi`` with unit-PSD white
noise ``xi``; ``q`` is driven by a force of PSD ``4 Gamma n_tot`` (thermal
plus backaction).  All spectra are two-sided with integrals over
``dw / 2pi`` and ``S_AB(w) = int <A(t) B(0)> exp(i w t) dt``.  With
``p = q' / Omega`` the momentum spectra follow from ``p(w) = -i w q(w) / Omega``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate

from ..params import DerivedQuantities
from .rational import RationalSpectrum
from .tables import SpectrumTable, frequency_grid

__all__ = [
    "FilterCoefficients",
    "FilterResponse",
    "ImpulseResponse",
    "NonConvergentIntegralError",
    "oscillator_poles",
    "mechanical_spectrum",
    "momentum_spectrum",
    "position_momentum_spectrum",
    "measured_spectrum",
    "measured_factor",
    "cross_spectrum",
    "momentum_cross_spectrum",
    "position_filter",
    "momentum_filter",
    "spectral_factor",
    "causal_part",
    "wiener_from_spectra",
    "fit_filter_coefficients",
    "error_variance",
    "error_covariance",
    "default_grid",
    "characteristic_frequencies",
]


class NonConvergentIntegralError(ArithmeticError):
    pass


def oscillator_poles(omega: float, gamma: float) -> np.ndarray:
    """Roots of ``omega**2 - w**2 - i gamma w`` (both in the lower half-plane)."""
    wd = np.sqrt(complex(omega * omega - 0.25 * gamma * gamma))
    return np.array([wd - 0.5j * gamma, -wd - 0.5j * gamma])


def _susceptibility_sq(derived: DerivedQuantities, gain: float, extra_zeros=()) -> RationalSpectrum:
    """``gain * |chi|^2`` times ``prod(w - extra_zeros)``."""
    p = oscillator_poles(derived.omega, derived.gamma)
    return RationalSpectrum(list(extra_zeros), np.concatenate([p, p.conj()]), gain)


def mechanical_spectrum(derived: DerivedQuantities) -> RationalSpectrum:
    """Position PSD ``4 Gamma Omega^2 n_tot |chi|^2``.

    The force PSD ``4 Gamma n_tot`` is thermal ``2 Gamma (2 n_th + 1)`` plus
    backaction ``4 Gamma C``.
    """
    g, w = derived.gamma, derived.omega
    return _susceptibility_sq(derived, 4.0 * g * w * w * derived.n_tot)


def momentum_spectrum(derived: DerivedQuantities) -> RationalSpectrum:
    """``S_pp = (w / Omega)^2 S_qq``."""
    g = derived.gamma
    return _susceptibility_sq(derived, 4.0 * g * derived.n_tot, (0.0, 0.0))


def position_momentum_spectrum(derived: DerivedQuantities) -> RationalSpectrum:
    """``S_qp = (i w / Omega) S_qq`` (purely imaginary, odd)."""
    g = derived.gamma
    return _susceptibility_sq(derived, 4j * g * derived.omega * derived.n_tot, (0.0,))


def cross_spectrum(derived: DerivedQuantities) -> RationalSpectrum:
    """``S_qY = 2 sqrt(eta Gamma C) S_qq``; the record noise is independent of ``q``."""
    if derived.c == 0:
        return RationalSpectrum.constant(0.0)
    g, w = derived.gamma, derived.omega
    return _susceptibility_sq(derived, derived.record_gain * 4.0 * g * w * w * derived.n_tot)


def momentum_cross_spectrum(derived: DerivedQuantities) -> RationalSpectrum:
    """``S_pY = (-i w / Omega) S_qY``."""
    if derived.c == 0:
        return RationalSpectrum.constant(0.0)
    g, w = derived.gamma, derived.omega
    return _susceptibility_sq(derived, -4j * derived.record_gain * g * w * derived.n_tot, (0.0,))


def measured_factor(derived: DerivedQuantities) -> RationalSpectrum:
    """Causal factor ``M_Y = (Omega'^2 - w^2 - i Gamma' w) / (Omega^2 - w^2 - i Gamma w)``."""
    return RationalSpectrum(
        oscillator_poles(derived.omega_prime, derived.gamma_prime),
        oscillator_poles(derived.omega, derived.gamma),
        1.0,
    )


def measured_spectrum(derived: DerivedQuantities, excess=None, omega=None):
    """Record PSD ``1 + 16 eta Gamma^2 C Omega^2 n_tot |chi|^2`` (+ excess).

    Without excess noise the result is the exact rational spectrum
    ``|M_Y|^2``.  An excess model with a rational form is added exactly;
    any other excess model is tabulated on ``omega`` (default grid if None).
    """
    m = measured_factor(derived)
    clean = RationalSpectrum(
        np.concatenate([m.zeros, m.zeros.conj()]), np.concatenate([m.poles, m.poles.conj()]), 1.0
    )
    if excess is None:
        return clean
    rational = getattr(excess, "rational", None)
    if rational is not None and omega is None:
        return clean + rational
    grid = default_grid(derived) if omega is None else np.asarray(omega, float)
    return SpectrumTable(grid, clean(grid).real + excess(grid), metadata={"kind": "S_YY with excess"})


# ---------------------------------------------------------------------------
# filters

@dataclass(frozen=True)
class FilterCoefficients:
    """``H(w) = A (1 - i B w) / (Omega'^2 - w^2 - i Gamma' w)``."""

    a: float
    b: float
    omega_prime: float
    gamma_prime: float


@dataclass(frozen=True)
class ImpulseResponse:
    """Samples ``h(k dt)``, ``k = 0..n-1``; ``samples[0]`` is the ``t -> 0+`` limit."""

    dt: float
    samples: np.ndarray

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.samples.size) * self.dt

    @property
    def truncation(self) -> float:
        return self.samples.size * self.dt


def _kernel(t, wp2: float, gp: float):
    """``chi'(t)`` and its derivative for ``t >= 0`` (complex roots handled)."""
    t = np.asarray(t, dtype=float)
    wd = np.sqrt(complex(wp2 - 0.25 * gp * gp))
    decay = np.exp(-0.5 * gp * t)
    if abs(wd) < 1e-12 * math.sqrt(wp2):
        sinc_t = t
        cos_t = np.ones_like(t)
    else:
        sinc_t = (np.sin(wd * t) / wd).real
        cos_t = np.cos(wd * t).real
    chi = decay * sinc_t
    dchi = decay * (cos_t - 0.5 * gp * sinc_t)
    return chi, dchi


@dataclass(frozen=True)
class FilterResponse:
    """A causal estimator ``x_est(w) = H(w) Y(w)``.

    Exactly one of ``rational`` or ``table`` carries the frequency response.
    ``kernel`` (optional) gives ``h(t)`` for ``t >= 0`` in closed form.
    """

    rational: RationalSpectrum | None = None
    table: SpectrumTable | None = None
    coefficients: FilterCoefficients | None = None
    kernel: Callable[[np.ndarray], np.ndarray] | None = None
    label: str = ""

    def __post_init__(self):
        if (self.rational is None) == (self.table is None):
            raise ValueError("give exactly one of rational or table")

    def __call__(self, omega) -> np.ndarray:
        if self.rational is not None:
            return self.rational(omega)
        return self.table(omega)

    @property
    def is_zero(self) -> bool:
        if self.rational is not None:
            return self.rational.is_zero
        return not np.any(self.table.values)

    def tabulate(self, omega) -> SpectrumTable:
        return SpectrumTable(np.asarray(omega, float), self(omega), metadata={"kind": self.label or "filter"})

    def impulse_response(self, dt: float, truncation: float) -> ImpulseResponse:
        """``h`` sampled at ``k dt`` up to ``truncation`` seconds.

        Closed-form or residue evaluation for analytic filters; for tables
        the grid must have time step ``dt`` (the FFT sample at ``t = 0`` is
        the midpoint of the jump and is doubled to the ``0+`` limit).
        """
        if not (dt > 0 and truncation > 0):
            raise ValueError("dt and truncation must be positive")
        n = max(1, int(math.ceil(truncation / dt)))
        t = np.arange(n) * dt
        if self.kernel is not None:
            return ImpulseResponse(dt, np.asarray(self.kernel(t), float))
        if self.rational is not None:
            if self.is_zero:
                return ImpulseResponse(dt, np.zeros(n))
            pf = self.rational.partial_fractions()
            if np.any(pf.poles.imag >= 0):
                raise ValueError("filter is not causal")
            if pf.direct != 0:
                raise ValueError("filter has a delta component at t = 0")
            h = (-1j * pf.residues[None, :] * np.exp(-1j * pf.poles[None, :] * t[:, None])).sum(axis=1)
            return ImpulseResponse(dt, h.real)
        table = self.table
        if not math.isclose(table.time_step, dt, rel_tol=1e-9):
            raise ValueError(f"table time step {table.time_step:.6g} s does not match dt = {dt:.6g} s")
        _, h = table.impulse_response(n)
        h = h.real.copy()
        h[0] *= 2.0
        return ImpulseResponse(dt, h)


def _coefficient_filter(coef: FilterCoefficients, label: str) -> RationalSpectrum:
    poles = oscillator_poles(coef.omega_prime, coef.gamma_prime)
    return RationalSpectrum([-1j / coef.b], poles, 1j * coef.a * coef.b)


def _require_measurement(derived: DerivedQuantities):
    if not derived.c > 0:
        raise ValueError("the filter needs C > 0 (no information without measurement)")
    if not derived.gamma_prime**2 > 0:
        raise ArithmeticError("Gamma'^2 <= 0: derived quantities are inconsistent")


def position_filter(derived: DerivedQuantities) -> FilterResponse:
    """Optimal causal position estimator ``H = A (1 - i B w) chi'(w)``."""
    _require_measurement(derived)
    coef = FilterCoefficients(derived.coef_a, derived.coef_b, derived.omega_prime, derived.gamma_prime)
    wp2, gp = derived.omega_prime**2, derived.gamma_prime
    a, b = coef.a, coef.b

    def kernel(t):
        chi, dchi = _kernel(t, wp2, gp)
        return a * (chi + b * dchi)

    return FilterResponse(_coefficient_filter(coef, "position"), None, coef, kernel, "H_q")


def momentum_filter(derived: DerivedQuantities) -> FilterResponse:
    """Optimal causal momentum estimator.

    ``H_p = -(A B / Omega) (Omega^2 + i w (Omega'^2 - Omega^2) / (Gamma' + Gamma)) chi'``;
    the bracket's slope simplifies to ``(Gamma' - Gamma) / 2``.
    """
    _require_measurement(derived)
    w = derived.omega
    kappa = 0.5 * derived.gamma_shift
    ab = derived.coef_a * derived.coef_b
    poles = oscillator_poles(derived.omega_prime, derived.gamma_prime)
    rational = RationalSpectrum([1j * w * w / kappa], poles, 1j * ab * kappa / w)
    wp2, gp = derived.omega_prime**2, derived.gamma_prime

    def kernel(t):
        chi, dchi = _kernel(t, wp2, gp)
        return -(ab / w) * (w * w * chi - kappa * dchi)

    return FilterResponse(rational, None, None, kernel, "H_p")


def fit_filter_coefficients(response: FilterResponse | RationalSpectrum) -> FilterCoefficients:
    """Recover ``(A, B, Omega', Gamma')`` from a one-zero, two-pole filter."""
    h = response.rational if isinstance(response, FilterResponse) else response
    if h is None or h.zeros.size != 1 or h.poles.size != 2:
        raise ValueError("filter is not of the one-zero, two-pole form")
    z = h.zeros[0]
    b = (-1j / z).real
    a = (h.gain / (1j * b)).real
    q1, q2 = h.poles
    return FilterCoefficients(a, b, math.sqrt((-(q1 * q2)).real), (1j * (q1 + q2)).real)


# ---------------------------------------------------------------------------
# generic synthesis

def spectral_factor(spectrum):
    """Causal, causally invertible factor ``M`` with ``|M|^2 = S``.

    Rational input: lower-half-plane zeros and poles go to ``M``; the gain
    is real and positive.  Table input: cepstral method.
    """
    if isinstance(spectrum, SpectrumTable):
        return spectrum.spectral_factor()
    if not isinstance(spectrum, RationalSpectrum):
        raise TypeError("spectrum must be a RationalSpectrum or SpectrumTable")
    z, p = spectrum.zeros, spectrum.poles
    scale = max(np.abs(np.concatenate([z, p])).max(initial=0.0), 1e-300)
    if np.any(np.abs(z.imag) <= 1e-12 * scale) or np.any(np.abs(p.imag) <= 1e-12 * scale):
        raise ValueError("spectrum has a zero or pole on the real axis")
    zl, pl = z[z.imag < 0], p[p.imag < 0]
    if 2 * zl.size != z.size or 2 * pl.size != p.size:
        raise ValueError("roots are not mirror-symmetric: not a power spectrum")
    m0 = RationalSpectrum(zl, pl, 1.0)
    probe = scale * np.array([0.0, 0.37, 1.3, 2.9])
    ratio = spectrum(probe) / np.abs(m0(probe)) ** 2
    if np.any(np.abs(ratio.imag) > 1e-8 * np.abs(ratio.real)) or np.any(ratio.real <= 0):
        raise ValueError("spectrum is not real and positive")
    return RationalSpectrum(zl, pl, math.sqrt(float(np.median(ratio.real))))


def causal_part(f):
    """``[f]_+``: the part of ``f`` whose inverse transform lives on ``t >= 0``."""
    if isinstance(f, (RationalSpectrum, SpectrumTable)):
        return f.causal_part()
    raise TypeError("expected a RationalSpectrum or SpectrumTable")


def wiener_from_spectra(s_xy, s_yy, label: str = "wiener", continuous: bool = True) -> FilterResponse:
    """Causal Wiener filter ``H = (1/M) [S_xY / M*]_+`` with ``S_YY = M M*``.

    Rational inputs give a rational filter; if either input is a table the
    other is evaluated on its grid and the tabulated route is used.

    ``continuous`` selects the table split (see
    :meth:`SpectrumTable.causal_part`).  The default approximates the
    continuous-frequency filter closely, but a kernel that jumps at
    ``t = 0`` then shows a Gibbs sample at ``t = -dt`` in its DFT.
    ``continuous=False`` is causal on the periodic grid to round-off, at
    the price of periodised-tail errors in the frequency response.
    """
    if isinstance(s_xy, RationalSpectrum) and isinstance(s_yy, RationalSpectrum):
        if s_xy.is_zero:
            return FilterResponse(RationalSpectrum.constant(0.0), label=label)
        m = spectral_factor(s_yy)
        g = (s_xy / m.conj()).causal_part()
        return FilterResponse((g / m).cancel(), label=label)

    grid_owner = s_yy if isinstance(s_yy, SpectrumTable) else s_xy
    if not isinstance(grid_owner, SpectrumTable):
        raise TypeError("inputs must be RationalSpectrum or SpectrumTable")
    omega = grid_owner.omega
    syy = s_yy if isinstance(s_yy, SpectrumTable) else SpectrumTable(omega, s_yy(omega))
    sxy = s_xy if isinstance(s_xy, SpectrumTable) else SpectrumTable(omega, s_xy(omega))
    syy._check_grid(sxy)
    m = syy.spectral_factor(continuous)
    h = (sxy / m.conj()).causal_part(continuous) / m
    return FilterResponse(None, h.with_values(h.values, kind=label), label=label)


def characteristic_frequencies(derived: DerivedQuantities) -> tuple[float, ...]:
    return (derived.omega, derived.gamma, derived.omega_prime, derived.gamma_prime)


def default_grid(derived: DerivedQuantities, points: int = 2**18, span: float = 200.0,
                 resolution: float = 0.125, max_points: int = 2**22) -> np.ndarray:
    """Grid of ``points`` spanning ``+-span * max(Omega', Gamma')``.

    ``points`` is doubled until the spacing resolves the mechanical
    linewidth (``dw <= resolution * Gamma``) or ``max_points`` is reached;
    a warning is issued when the linewidth stays unresolved.
    """
    top = span * max(derived.omega_prime, derived.gamma_prime)
    n = points
    while 2.0 * top / n > resolution * derived.gamma and n < max_points:
        n *= 2
    if 2.0 * top / n > resolution * derived.gamma:
        warnings.warn(
            f"grid spacing {2 * top / n:.3g} rad/s does not resolve the linewidth {derived.gamma:.3g} rad/s",
            RuntimeWarning,
            stacklevel=2,
        )
    return frequency_grid(n, 2.0 * top / n)


# ---------------------------------------------------------------------------
# variance integrals

def _collect_scales(items) -> list[float]:
    scales = []
    for it in items:
        r = it.rational if isinstance(it, FilterResponse) else it
        if isinstance(r, RationalSpectrum):
            for root in np.concatenate([r.poles, r.zeros]):
                for s in (abs(root.real), abs(root.imag)):
                    if s > 0 and np.isfinite(s):
                        scales.append(float(s))
    return scales


def _segments(scales, points, omega_max):
    edges = {0.0, omega_max}
    lo = min(scales) * 1e-3
    edges.update(np.geomspace(lo, omega_max, int(4 * math.log10(omega_max / lo)) + 2).tolist())
    for centre, width in points:
        for k in (0.25, 1.0, 4.0, 16.0, 64.0, 256.0):
            for e in (centre - k * width, centre + k * width):
                if 0 < e < omega_max:
                    edges.add(float(e))
    return sorted(edges)


def _peaks(items):
    out = []
    for it in items:
        r = it.rational if isinstance(it, FilterResponse) else it
        if isinstance(r, RationalSpectrum):
            for p in r.poles:
                if abs(p.imag) > 0:
                    out.append((abs(p.real), abs(p.imag)))
    return out


def error_covariance(h_a, h_b, s_ab, s_ay, s_by, s_yy, *, omega_max: float | None = None,
                     rtol: float = 1e-11, scales=None) -> float:
    """Covariance of the errors ``a - H_a Y`` and ``b - H_b Y``.

    ``int Re[S_ab - H_b* S_aY - H_a S_bY* + H_a H_b* S_YY] dw / 2pi``.  Every
    argument is a callable of real frequency (rational spectra, filters,
    tables or plain functions) describing real processes and real-kernel
    filters, so the integrand is even and only ``w >= 0`` is integrated
    for analytic inputs.  Analytic inputs are integrated adaptively
    on segments placed around their poles, with a ``1/w^2`` tail correction
    beyond ``omega_max``; table inputs use the trapezoid rule on their grid.

    Raises
    ------
    NonConvergentIntegralError
        If the integrand does not decay at least like ``1/w^2``.
    """
    items = (h_a, h_b, s_ab, s_ay, s_by, s_yy)

    def integrand(w):
        ha, hb = h_a(w), h_b(w)
        val = s_ab(w) - np.conj(hb) * s_ay(w) - ha * np.conj(s_by(w)) + ha * np.conj(hb) * s_yy(w)
        return val.real

    tables = [it.table if isinstance(it, FilterResponse) else it for it in items]
    tables = [t for t in tables if isinstance(t, SpectrumTable)]
    if tables:
        w = tables[0].omega
        f = integrand(w)
        core = float(np.trapezoid(f, w)) / (2.0 * math.pi)
        tail = (f[1] * w[1] ** 2 + f[-1] * w[-1] ** 2) / (2.0 * math.pi * abs(w[-1]))
        return core + tail

    found = _collect_scales(items) if scales is None else list(scales)
    if not found:
        found = [1.0]
    top = max(found)
    omega_max = 1e4 * top if omega_max is None else omega_max
    edges = _segments(found, _peaks(items), omega_max)
    # absolute tolerance from a coarse estimate of int |f|, shared over segments
    probe = np.unique(np.concatenate([np.linspace(a, b, 9) for a, b in zip(edges[:-1], edges[1:])]))
    magnitude = float(np.trapezoid(np.abs(integrand(probe)), probe))
    epsabs = rtol * magnitude / len(edges)
    total = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        for a, b in zip(edges[:-1], edges[1:]):
            val, _ = integrate.quad(integrand, a, b, epsabs=epsabs, epsrel=rtol, limit=200)
            total += val
    c1 = float(integrand(omega_max)) * omega_max**2
    c2 = float(integrand(2.0 * omega_max)) * (2.0 * omega_max) ** 2
    if abs(c2) > 1.5 * abs(c1) + 1e-300:
        raise NonConvergentIntegralError("integrand decays slower than 1/w^2")
    tail = c1 / omega_max
    result = (total + tail) / math.pi
    if abs(tail) > 1e-2 * max(abs(total), 1e-300) and abs(tail) > 1e-12:
        raise NonConvergentIntegralError(
            f"tail estimate {tail / math.pi:.3g} is not small against the integral {result:.3g}"
        )
    return result


def error_variance(h, s_xx, s_xy, s_yy, **kwargs) -> float:
    """``int [S_xx - 2 Re(H* S_xY) + |H|^2 S_YY] dw / 2pi``; see :func:`error_covariance`."""
    return error_covariance(h, h, s_xx, s_xy, s_xy, s_yy, **kwargs)
