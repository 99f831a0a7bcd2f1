"""Physical inputs, derived filter quantities and measurement-regime classification.

All rates are angular (rad/s).  Internally every rate is divided by the
mechanical decay rate so that the dimensionless groups (Q, C, n_th, eta)
carry the full dynamic range; results are converted back to SI.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

from scipy import constants as _sc
from scipy.optimize import brentq

if TYPE_CHECKING:
    from .conditional import ConditionalCovariance

__all__ = [
    "PhysicalConstants",
    "CONSTANTS",
    "HighOccupancyWarning",
    "OscillatorParams",
    "DerivedQuantities",
    "Regime",
    "RegimeLabel",
    "thermal_occupancy",
    "cooperativity",
    "derive",
    "classify",
    "squeezing_threshold",
]


@dataclass(frozen=True)
class PhysicalConstants:
    """CODATA 2018 values used for occupancy conversions."""

    k_B: float = _sc.k
    hbar: float = _sc.hbar


CONSTANTS = PhysicalConstants()


class HighOccupancyWarning(UserWarning):
    """The n_th = k_B T / (hbar Omega) approximation assumes n_th >> 1."""


def thermal_occupancy(omega: float, temperature: float) -> float:
    """Bath occupancy ``k_B T / (hbar omega)`` in the high-temperature limit.

    Parameters
    ----------
    omega : float
        Mechanical angular frequency in rad/s, must be positive.
    temperature : float
        Bath temperature in kelvin, non-negative.

    Returns
    -------
    float
        Mean thermal occupancy.  A :class:`HighOccupancyWarning` is emitted
        when the result is below 10.
    """
    if not omega > 0:
        raise ValueError(f"omega must be > 0 rad/s, got {omega!r}")
    if temperature < 0:
        raise ValueError(f"temperature must be >= 0 K, got {temperature!r}")
    n = CONSTANTS.k_B * temperature / (CONSTANTS.hbar * omega)
    if n < 10:
        warnings.warn(
            f"n_th = {n:.3g} < 10: high-occupancy approximation is strained",
            HighOccupancyWarning,
            stacklevel=2,
        )
    return n


def cooperativity(g: float, gamma: float, kappa: float) -> float:
    """Optomechanical cooperativity ``4 g**2 / (gamma * kappa)``."""
    for name, value in (("g", g), ("gamma", gamma), ("kappa", kappa)):
        if not value > 0:
            raise ValueError(f"{name} must be > 0, got {value!r}")
    return 4.0 * g * g / (gamma * kappa)


@dataclass(frozen=True)
class OscillatorParams:
    """The physical inputs of one monitored oscillator.

    Supply the bath either as ``n_th`` or ``temperature`` and the measurement
    strength either as ``c`` or as the pair ``(g, kappa)``.
    """

    omega: float
    gamma: float
    eta: float
    n_th: float | None = None
    temperature: float | None = None
    c: float | None = None
    g: float | None = None
    kappa: float | None = None
    sideband_factor: float = 10.0

    def __post_init__(self):
        if not self.omega > 0:
            raise ValueError(
                f"omega must be > 0 (free-mass limit omega = 0 is not supported), got {self.omega!r}"
            )
        if not self.gamma > 0:
            raise ValueError(f"gamma must be > 0, got {self.gamma!r}")
        if not 0 < self.eta <= 1:
            raise ValueError(f"eta must lie in (0, 1], got {self.eta!r}")
        if (self.n_th is None) == (self.temperature is None):
            raise ValueError("give exactly one of n_th or temperature")
        if self.n_th is not None and not self.n_th >= 0:
            raise ValueError(f"n_th must be >= 0, got {self.n_th!r}")
        if self.temperature is not None and not self.temperature >= 0:
            raise ValueError(f"temperature must be >= 0 K, got {self.temperature!r}")
        pair = (self.g is not None, self.kappa is not None)
        if self.c is not None:
            if any(pair):
                raise ValueError("give either c or (g, kappa), not both")
            if not self.c >= 0:
                raise ValueError(f"cooperativity c must be >= 0, got {self.c!r}")
        elif not all(pair):
            raise ValueError("give either c or both g and kappa")
        else:
            if self.kappa < self.sideband_factor * self.omega:
                raise ValueError(
                    f"kappa = {self.kappa:.4g} < {self.sideband_factor:g} * omega: "
                    "unresolved-sideband condition violated"
                )

    @property
    def occupancy(self) -> float:
        if self.n_th is not None:
            return float(self.n_th)
        return thermal_occupancy(self.omega, self.temperature)

    @property
    def cooperativity(self) -> float:
        if self.c is not None:
            return float(self.c)
        return cooperativity(self.g, self.gamma, self.kappa)

    @property
    def q_factor(self) -> float:
        return self.omega / self.gamma


@dataclass(frozen=True)
class DerivedQuantities:
    """Every symbol the filters and regime boundaries need, in SI units.

    ``omega_shift_sq`` (Omega'^2 - Omega^2) and ``gamma_shift`` (Gamma' - Gamma)
    are carried separately because recomputing them by subtraction loses all
    precision in the weak-measurement limit.
    """

    omega: float
    gamma: float
    eta: float
    c: float
    q_factor: float
    n_th: float
    n_tot: float
    mu: float
    gamma_th: float
    omega_prime: float
    gamma_prime: float
    coef_a: float
    coef_b: float
    omega_shift_sq: float = field(repr=False)
    gamma_shift: float = field(repr=False)

    @property
    def measurement_rate(self) -> float:
        """Squared record gain ``4 eta gamma C`` (rad/s)."""
        return 4.0 * self.eta * self.gamma * self.c

    @property
    def record_gain(self) -> float:
        """Amplitude of ``q`` in the photocurrent, ``2 sqrt(eta gamma C)``."""
        return 2.0 * math.sqrt(self.eta * self.gamma * self.c)

    @property
    def rwa_parameter(self) -> float:
        """``eta C n_tot / Q**2``; the rotating-wave approximation needs this << 1."""
        return self.eta * self.c * self.n_tot / self.q_factor**2

    def as_dict(self) -> dict:
        return {
            "omega": self.omega,
            "gamma": self.gamma,
            "eta": self.eta,
            "c": self.c,
            "q_factor": self.q_factor,
            "n_th": self.n_th,
            "n_tot": self.n_tot,
            "mu": self.mu,
            "gamma_th": self.gamma_th,
            "omega_prime": self.omega_prime,
            "gamma_prime": self.gamma_prime,
            "coef_a": self.coef_a,
            "coef_b": self.coef_b,
        }


def _scaled_shifts(q: float, eta_c: float, n_tot: float) -> tuple[float, float, float]:
    """Return (Omega'^2 - Omega^2, Gamma', Gamma' - Gamma) in units gamma = 1."""
    x = 16.0 * eta_c * n_tot / (q * q)
    shift_sq = q * q * x / (1.0 + math.sqrt(1.0 + x))
    gp = math.sqrt(1.0 + 2.0 * shift_sq)
    return shift_sq, gp, 2.0 * shift_sq / (gp + 1.0)


def derive(params: OscillatorParams) -> DerivedQuantities:
    """Compute all derived filter and boundary quantities for ``params``."""
    c = params.cooperativity
    if c < 0:
        raise ValueError(f"cooperativity must be >= 0, got {c!r}")
    n_th = params.occupancy
    gamma, omega, eta = params.gamma, params.omega, params.eta
    q = omega / gamma
    n_tot = n_th + c + 0.5

    shift_sq, gp, gshift = _scaled_shifts(q, eta * c, n_tot)
    wp2 = q * q + shift_sq
    coef_a = 8.0 * math.sqrt(eta * c) * n_tot * q * q / (q * q + wp2)
    coef_b = (1.0 + gp) / (shift_sq + 1.0 + gp)

    return DerivedQuantities(
        omega=omega,
        gamma=gamma,
        eta=eta,
        c=c,
        q_factor=q,
        n_th=n_th,
        n_tot=n_tot,
        mu=c * gamma,
        gamma_th=n_th * gamma,
        omega_prime=math.sqrt(wp2) * gamma,
        gamma_prime=gp * gamma,
        # A carries gamma^(3/2) from sqrt(gamma^3) and gamma^0 from the ratio
        coef_a=coef_a * gamma**1.5,
        coef_b=coef_b / gamma,
        omega_shift_sq=shift_sq * gamma * gamma,
        gamma_shift=gshift * gamma,
    )


def squeezing_threshold(q_factor: float, n_th: float, eta: float) -> float:
    """Cooperativity on the quantum-squeezing criterion ``C = n_tot^(1/3) Q^(2/3) / (4 eta)``.

    ``n_tot`` contains ``C`` itself, so the fixed point is bracketed on
    ``[0, 1e18]`` and located by bisection; the residual is convex in ``C``,
    hence the root is unique.
    """
    if not (q_factor > 0 and eta > 0 and n_th >= 0):
        raise ValueError("q_factor and eta must be positive and n_th non-negative")
    k = q_factor ** (2.0 / 3.0) / (4.0 * eta)

    def residual(c):
        return c - k * (n_th + c + 0.5) ** (1.0 / 3.0)

    hi = 1e18
    if residual(hi) < 0:
        raise ValueError("no squeezing threshold in [0, 1e18]")
    return brentq(residual, 0.0, hi, xtol=1e-300, rtol=1e-15, maxiter=500)


class Regime(str, enum.Enum):
    I_THERMAL_RWA = "I_thermal_rwa"
    II_GROUND_RWA = "II_ground_rwa"
    III_CLASSICAL_SQUEEZED = "III_classical_squeezed"
    IV_IMPURE_QUANTUM_SQUEEZED = "IV_impure_quantum_squeezed"
    V_PURE_QUANTUM_SQUEEZED = "V_pure_quantum_squeezed"

    @property
    def numeral(self) -> str:
        return self.value.split("_", 1)[0]


@dataclass(frozen=True)
class RegimeLabel:
    label: Regime
    rwa_valid: bool
    qco: bool
    backaction_dominated: bool


def regime_from_values(
    rwa_valid: bool, v_min: float, c: float, n_th: float, threshold_ground: float = 1.5
) -> Regime:
    if rwa_valid:
        return Regime.I_THERMAL_RWA if v_min >= threshold_ground else Regime.II_GROUND_RWA
    if v_min > 1.0:
        return Regime.III_CLASSICAL_SQUEEZED
    if c < n_th:
        return Regime.IV_IMPURE_QUANTUM_SQUEEZED
    return Regime.V_PURE_QUANTUM_SQUEEZED


def classify(
    derived: DerivedQuantities,
    cov: "ConditionalCovariance",
    threshold_ground: float = 1.5,
) -> RegimeLabel:
    """Assign one of the five measurement regimes.

    RWA validity uses ``eta C n_tot < Q**2``; squeezing means ``V_min <= 1``;
    region II is distinguished from I by ``V_min < threshold_ground``.
    """
    rwa_valid = derived.eta * derived.c * derived.n_tot < derived.q_factor**2
    label = regime_from_values(rwa_valid, cov.v_min, derived.c, derived.n_th, threshold_ground)
    return RegimeLabel(
        label=label,
        rwa_valid=rwa_valid,
        qco=derived.q_factor > derived.n_th,
        backaction_dominated=derived.c > derived.n_th,
    )
