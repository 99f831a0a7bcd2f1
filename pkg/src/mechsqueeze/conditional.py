"""Closed-form conditional state of the continuously measured oscillator.

Variances are in zero-point units (vacuum variance = 1, ``[q, p] = 2i``).
The textbook expressions for the covariances subtract nearly equal numbers
when the measurement is weak; everything here is evaluated through the
equivalent cancellation-free forms

    V_qq = 8 n_tot Q^2 / ((W'^2 + Q^2)(G' + 1))
    C_qp = 2 eta C V_qq^2 / Q
    V_pp = V_qq (1 + G'(G' - 1) / (2 Q^2))
    det  = V_qq^2 (W'^2 + Q^2) / (2 Q^2)

with every rate in units of the mechanical decay rate (W' = Omega'/Gamma,
G' = Gamma'/Gamma).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .params import DerivedQuantities, _scaled_shifts, regime_from_values

__all__ = [
    "ConditionalCovariance",
    "WignerGrid",
    "ContourEllipse",
    "BoundaryCurves",
    "conditional_covariance",
    "covariance_grid",
    "optimal_quadrature",
    "quoted_angle",
    "purity",
    "rwa_baseline",
    "gaussian_wigner",
    "wigner",
    "boundary_curves",
    "HEISENBERG_SLACK",
    "ModelValidityWarning",
    "THERMAL_CUTOFF",
]

HEISENBERG_SLACK = 1e-9
THERMAL_CUTOFF = 1e-12


class ModelValidityWarning(UserWarning):
    """The covariance falls below the uncertainty bound.

    The momentum-damped Langevin model is a high-temperature model; with
    ``n_th`` of order one, ``eta`` near one and a low Q it can undercut
    ``det V = 1`` slightly.  The numbers are still the exact optimum of
    that model.
    """


@dataclass(frozen=True)
class ConditionalCovariance:
    """Symmetric 2x2 conditional covariance ``[[v_qq, c_qp], [c_qp, v_pp]]``.

    ``det`` and ``v_diff`` (``v_pp - v_qq``) may be supplied when they are
    known in a better-conditioned form than the naive subtraction.
    """

    v_qq: float
    v_pp: float
    c_qp: float
    det: float | None = None
    v_diff: float | None = None

    def __post_init__(self):
        if self.det is None:
            object.__setattr__(self, "det", self.v_qq * self.v_pp - self.c_qp**2)
        if self.v_diff is None:
            object.__setattr__(self, "v_diff", self.v_pp - self.v_qq)

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.v_qq, self.c_qp], [self.c_qp, self.v_pp]])

    @property
    def v_max(self) -> float:
        mean = 0.5 * (self.v_qq + self.v_pp)
        return mean + math.hypot(0.5 * self.v_diff, self.c_qp)

    @property
    def v_min(self) -> float:
        return self.det / self.v_max

    @property
    def theta(self) -> float:
        # atan2 range (-pi, pi] halves to (-pi/2, pi/2]; a degenerate matrix gives 0
        theta = 0.5 * math.atan2(-2.0 * self.c_qp, self.v_diff)
        # atan2(-0.0, x<0) = -pi lands on the excluded endpoint
        return math.pi / 2 if theta <= -math.pi / 2 else theta

    @property
    def purity(self) -> float:
        return 1.0 / math.sqrt(self.det)

    def rotated(self, angle: float) -> "ConditionalCovariance":
        """Covariance of the state rotated by ``angle`` in phase space."""
        r = np.array([[math.cos(angle), -math.sin(angle)], [math.sin(angle), math.cos(angle)]])
        m = r @ self.matrix @ r.T
        return ConditionalCovariance(m[0, 0], m[1, 1], 0.5 * (m[0, 1] + m[1, 0]), det=self.det)


def _covariance_arrays(q, n_th, eta, c):
    """Vectorised conditional covariance in units gamma = 1.

    Returns ``(v_qq, v_pp, c_qp, v_diff, det)``; entries with
    ``c < THERMAL_CUTOFF`` are the unconditioned thermal state.
    """
    q, n_th, eta, c = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (q, n_th, eta, c)))
    n_tot = n_th + c + 0.5
    q2 = q * q
    x = 16.0 * eta * c * n_tot / q2
    shift_sq = q2 * x / (1.0 + np.sqrt(1.0 + x))
    gp = np.sqrt(1.0 + 2.0 * shift_sq)
    wp2 = q2 + shift_sq

    v_qq = 8.0 * n_tot * q2 / ((wp2 + q2) * (gp + 1.0))
    c_qp = 2.0 * eta * c * v_qq * v_qq / q
    v_pp = v_qq * (1.0 + gp * (gp - 1.0) / (2.0 * q2))
    v_diff = c_qp * gp / q
    det = v_qq * v_qq * (wp2 + q2) / (2.0 * q2)

    thermal = c < THERMAL_CUTOFF
    if np.any(thermal):
        v_th = 2.0 * n_tot
        v_qq = np.where(thermal, v_th, v_qq)
        v_pp = np.where(thermal, v_th, v_pp)
        c_qp = np.where(thermal, 0.0, c_qp)
        v_diff = np.where(thermal, 0.0, v_diff)
        det = np.where(thermal, v_th * v_th, det)
    return v_qq, v_pp, c_qp, v_diff, det


def conditional_covariance(derived: DerivedQuantities) -> ConditionalCovariance:
    """Steady-state covariance of the optimal position/momentum estimation errors."""
    v_qq, v_pp, c_qp, v_diff, det = (
        float(a) for a in _covariance_arrays(derived.q_factor, derived.n_th, derived.eta, derived.c)
    )
    if det < 1.0 - HEISENBERG_SLACK:
        warnings.warn(
            f"det V = {det:.12g} < 1: parameters outside the high-temperature model's validity",
            ModelValidityWarning,
            stacklevel=2,
        )
    return ConditionalCovariance(v_qq, v_pp, c_qp, det=det, v_diff=v_diff)


def covariance_grid(q_factor, n_th, eta, c, threshold_ground: float = 1.5) -> dict[str, np.ndarray]:
    """Broadcasting version of :func:`conditional_covariance` for parameter sweeps.

    Returns a dict of arrays: ``v_qq, v_pp, c_qp, det, v_min, v_max, theta,
    purity, rwa_valid, regime`` (regime as roman-numeral strings).
    """
    v_qq, v_pp, c_qp, v_diff, det = _covariance_arrays(q_factor, n_th, eta, c)
    v_max = 0.5 * (v_qq + v_pp) + np.hypot(0.5 * v_diff, c_qp)
    v_min = det / v_max
    q, n, e, cc = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (q_factor, n_th, eta, c)))
    rwa_valid = e * cc * (n + cc + 0.5) < q * q
    regime = np.empty(v_min.shape, dtype=object)
    for idx in np.ndindex(v_min.shape):
        regime[idx] = regime_from_values(
            bool(rwa_valid[idx]), float(v_min[idx]), float(cc[idx]), float(n[idx]), threshold_ground
        ).numeral
    return {
        "v_qq": v_qq,
        "v_pp": v_pp,
        "c_qp": c_qp,
        "det": det,
        "v_min": v_min,
        "v_max": v_max,
        "theta": 0.5 * np.arctan2(-2.0 * c_qp, v_diff),
        "purity": 1.0 / np.sqrt(det),
        "rwa_valid": rwa_valid,
        "regime": regime,
    }


def optimal_quadrature(cov: ConditionalCovariance) -> tuple[float, float, float]:
    """Angle of the minimum-variance quadrature and the two principal variances.

    The angle is that of the minimal eigenvector measured from the ``q`` axis,
    in ``(-pi/2, pi/2]``; it satisfies ``tan(2 theta) = 2 c_qp / (v_qq - v_pp)``.
    """
    return cov.theta, cov.v_min, cov.v_max


def quoted_angle(derived: DerivedQuantities) -> float:
    """The closed-form angle ``-arctan(Omega / Gamma') / 2`` quoted in the literature.

    Kept for comparison only; the eigen-decomposition of the covariance gives
    ``-arctan(2 Omega / Gamma') / 2`` (see :func:`optimal_quadrature`).
    """
    return -0.5 * math.atan(derived.omega / derived.gamma_prime)


def purity(cov: ConditionalCovariance) -> float:
    """Gaussian-state purity ``1 / sqrt(det V)``."""
    return cov.purity


def rwa_baseline(derived: DerivedQuantities) -> float:
    """Conditional variance under the rotating-wave approximation.

    Equal to ``(sqrt(1 + 16 eta C n_tot) - 1) / (4 eta C)``; the RWA state is
    ``(V, V, 0)``.
    """
    return 4.0 * derived.n_tot / (math.sqrt(1.0 + 16.0 * derived.eta * derived.c * derived.n_tot) + 1.0)


@dataclass(frozen=True)
class ContourEllipse:
    """The ``W = W_max / e`` contour: semi-axes along the principal directions."""

    semi_major: float
    semi_minor: float
    tilt: float


@dataclass(frozen=True)
class WignerGrid:
    """``density[i, j] = W(q_axis[i], p_axis[j])``."""

    q_axis: np.ndarray
    p_axis: np.ndarray
    density: np.ndarray
    ellipse: ContourEllipse

    def integral(self) -> float:
        return float(np.trapezoid(np.trapezoid(self.density, self.p_axis, axis=1), self.q_axis))


def gaussian_wigner(cov: ConditionalCovariance | np.ndarray, q, p) -> np.ndarray:
    """Zero-mean Gaussian Wigner function evaluated at points ``(q, p)``."""
    m = cov.matrix if isinstance(cov, ConditionalCovariance) else np.asarray(cov, dtype=float)
    det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    if not det > 0:
        raise np.linalg.LinAlgError("singular covariance matrix")
    inv = np.array([[m[1, 1], -m[0, 1]], [-m[1, 0], m[0, 0]]]) / det
    q, p = np.broadcast_arrays(np.asarray(q, float), np.asarray(p, float))
    quad = inv[0, 0] * q * q + (inv[0, 1] + inv[1, 0]) * q * p + inv[1, 1] * p * p
    return np.exp(-0.5 * quad) / (2.0 * math.pi * math.sqrt(det))


def wigner(cov: ConditionalCovariance, extent: float = 6.0, points: int = 257) -> WignerGrid:
    """Tabulate the Wigner function on a ``points x points`` grid.

    The q and p axes span ``+-extent`` marginal standard deviations
    (``sqrt(v_qq)`` and ``sqrt(v_pp)``), so a strongly squeezed minor axis is
    still resolved by the trapezoid rule.
    """
    if extent < 4.0:
        raise ValueError("grid must cover at least 4 marginal standard deviations")
    if not cov.det > 0:
        raise np.linalg.LinAlgError("singular covariance matrix")
    q_axis = np.linspace(-1.0, 1.0, points) * (extent * math.sqrt(cov.v_qq))
    p_axis = np.linspace(-1.0, 1.0, points) * (extent * math.sqrt(cov.v_pp))
    qq, pp = np.meshgrid(q_axis, p_axis, indexing="ij")
    ellipse = ContourEllipse(math.sqrt(2.0 * cov.v_max), math.sqrt(2.0 * cov.v_min), cov.theta)
    return WignerGrid(q_axis, p_axis, gaussian_wigner(cov, qq, pp), ellipse)


@dataclass(frozen=True)
class BoundaryCurves:
    """Regime-boundary cooperativities as functions of ``n_th``.

    ``rwa`` solves ``eta C n_tot = Q**2`` exactly; it is reported as ``i_iii``
    where it lies below ``C = n_th`` and as ``ii_v`` above (NaN elsewhere).
    ``iii_iv`` is the order-of-magnitude curve ``C = n_tot^(1/3) Q^(2/3) / eta``;
    ``squeezing`` carries the explicit ``1/(4 eta)`` prefactor and is the
    curve the classifier actually uses.
    """

    n_th: np.ndarray
    q_factor: np.ndarray
    rwa: np.ndarray
    i_iii: np.ndarray
    ii_v: np.ndarray
    iii_iv: np.ndarray
    iv_v: np.ndarray
    squeezing: np.ndarray


def _rwa_boundary(q, n_th, eta):
    b = eta * (n_th + 0.5)
    return 2.0 * q * q / (b + np.sqrt(b * b + 4.0 * eta * q * q))


def _cube_fixed_point(k, n_th):
    """Solve ``C = k (n_th + C + 1/2)^(1/3)`` elementwise by safeguarded Newton."""
    k, n = np.broadcast_arrays(np.asarray(k, float), np.asarray(n_th, float))
    u0 = n + 0.5
    # the root in u = n_tot lies between u0 and u0 + k u^(1/3) <= u0 + k max(u0, k^1.5)^(1/3) * 2
    hi = u0 + 2.0 * k * np.maximum(u0, k**1.5) ** (1.0 / 3.0)
    lo = u0.copy()
    u = hi.copy()
    for _ in range(200):
        f = u - u0 - k * np.cbrt(u)
        fp = 1.0 - k / (3.0 * np.cbrt(u) ** 2)
        lo = np.where(f < 0, u, lo)
        hi = np.where(f >= 0, u, hi)
        step = np.where(fp > 0, f / np.where(fp > 0, fp, 1.0), 0.0)
        cand = u - step
        bad = (fp <= 0) | (cand <= lo) | (cand >= hi)
        new = np.where(bad, 0.5 * (lo + hi), cand)
        if np.all(np.abs(new - u) <= 1e-15 * u):
            u = new
            break
        u = new
    return u - u0


def boundary_curves(q_factor, eta: float, n_th) -> BoundaryCurves:
    """Tabulate the five regime boundaries over ``n_th``.

    ``q_factor`` may be a scalar (fixed Q) or an array matching ``n_th``
    (for example a fixed decay rate at fixed temperature, where Q scales as
    ``1 / n_th``).
    """
    n = np.atleast_1d(np.asarray(n_th, dtype=float))
    q = np.broadcast_to(np.asarray(q_factor, dtype=float), n.shape).astype(float)
    rwa = _rwa_boundary(q, n, eta)
    below = rwa < n
    return BoundaryCurves(
        n_th=n,
        q_factor=q,
        rwa=rwa,
        i_iii=np.where(below, rwa, np.nan),
        ii_v=np.where(below, np.nan, rwa),
        iii_iv=_cube_fixed_point(q ** (2.0 / 3.0) / eta, n),
        iv_v=n.copy(),
        squeezing=_cube_fixed_point(q ** (2.0 / 3.0) / (4.0 * eta), n),
    )
