"""Steady-state Kalman-Bucy covariance as an independent check on the closed forms.

The filter Riccati equation

    A V + V A^T + D - (V H^T + S) R^-1 (H V + S^T) = 0

is solved for the 2x2 oscillator model by reducing it to one scalar
polynomial in ``v_qq`` (``c_qp`` and ``v_pp`` then follow in closed form).
Models without that structure fall back to a generic CARE solver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .params import DerivedQuantities

__all__ = [
    "StateSpaceModel",
    "SteadyStateCovariance",
    "RiccatiConvergenceError",
    "build_full_model",
    "build_rwa_model",
    "steady_state",
    "unconditional_covariance",
    "riccati_residual",
]


class RiccatiConvergenceError(ArithmeticError):
    pass


@dataclass(frozen=True)
class StateSpaceModel:
    """Linear model ``dx = drift x dt + dW``, record ``dy = rows x dt + dV``.

    ``diffusion`` is the process-noise intensity, ``measurement_noise_psd``
    the (scalar, per-row) record-noise intensity and ``noise_correlation`` the
    cross-intensity between process and record noise (rows x states).
    """

    drift: np.ndarray
    diffusion: np.ndarray
    measurement_rows: np.ndarray
    measurement_noise_psd: float = 1.0
    noise_correlation: np.ndarray | None = None

    def __post_init__(self):
        drift = np.atleast_2d(np.asarray(self.drift, float))
        diffusion = np.atleast_2d(np.asarray(self.diffusion, float))
        rows = np.atleast_2d(np.asarray(self.measurement_rows, float))
        n = drift.shape[0]
        if drift.shape != (n, n) or diffusion.shape != (n, n) or rows.shape[1] != n:
            raise ValueError("inconsistent model dimensions")
        if not np.allclose(diffusion, diffusion.T, rtol=1e-12, atol=0.0):
            raise ValueError("diffusion must be symmetric")
        if np.linalg.eigvalsh(diffusion).min() < -1e-12 * max(1.0, np.abs(diffusion).max()):
            raise ValueError("diffusion must be positive semidefinite")
        if not self.measurement_noise_psd > 0:
            raise ValueError("measurement_noise_psd must be > 0")
        corr = self.noise_correlation
        if corr is not None:
            corr = np.atleast_2d(np.asarray(corr, float))
            if corr.shape != rows.shape:
                raise ValueError("noise_correlation must have the shape of measurement_rows")
            if not np.any(corr):
                corr = None
        object.__setattr__(self, "drift", drift)
        object.__setattr__(self, "diffusion", diffusion)
        object.__setattr__(self, "measurement_rows", rows)
        object.__setattr__(self, "noise_correlation", corr)

    @property
    def measurement_row(self) -> np.ndarray:
        return self.measurement_rows[0]


@dataclass(frozen=True)
class SteadyStateCovariance:
    matrix: np.ndarray
    residual: float
    iterations: int = 0
    method: str = ""

    @property
    def v_qq(self) -> float:
        return float(self.matrix[0, 0])

    @property
    def v_pp(self) -> float:
        return float(self.matrix[1, 1])

    @property
    def c_qp(self) -> float:
        return float(0.5 * (self.matrix[0, 1] + self.matrix[1, 0]))

    @property
    def det(self) -> float:
        return float(np.linalg.det(self.matrix))


def build_full_model(derived: DerivedQuantities) -> StateSpaceModel:
    """Oscillator with thermal + backaction force noise and a position record."""
    w, g = derived.omega, derived.gamma
    return StateSpaceModel(
        drift=np.array([[0.0, w], [-w, -g]]),
        diffusion=np.array([[0.0, 0.0], [0.0, 4.0 * g * derived.n_tot]]),
        measurement_rows=np.array([[derived.record_gain, 0.0]]),
        measurement_noise_psd=1.0,
    )


def build_rwa_model(derived: DerivedQuantities) -> StateSpaceModel:
    """Rotating-frame model: both quadratures damped at gamma/2 and measured equally.

    Cycle-averaging a position record of rate ``4 eta gamma C`` leaves each
    quadrature with half of it, i.e. rows of strength ``sqrt(2 eta gamma C)``.
    """
    g = derived.gamma
    h = math.sqrt(2.0 * derived.eta * g * derived.c)
    return StateSpaceModel(
        drift=-0.5 * g * np.eye(2),
        diffusion=2.0 * g * derived.n_tot * np.eye(2),
        measurement_rows=h * np.eye(2),
        measurement_noise_psd=1.0,
    )


def riccati_residual(model: StateSpaceModel, v: np.ndarray) -> float:
    """Residual norm relative to the sum of the term norms."""
    a, d, h, r = model.drift, model.diffusion, model.measurement_rows, model.measurement_noise_psd
    s = model.noise_correlation
    vh = v @ h.T if s is None else v @ h.T + s.T
    terms = (a @ v + v @ a.T, d, vh @ vh.T / r)
    res = terms[0] + terms[1] - terms[2]
    scale = sum(np.linalg.norm(t) for t in terms)
    return float(np.linalg.norm(res) / scale) if scale > 0 else float(np.linalg.norm(res))


def unconditional_covariance(model: StateSpaceModel) -> np.ndarray:
    """Stationary covariance without measurement (Lyapunov equation)."""
    return linalg.solve_continuous_lyapunov(model.drift, -model.diffusion)


def _oscillator_structure(model: StateSpaceModel) -> bool:
    a, d, h = model.drift, model.diffusion, model.measurement_rows
    return (
        a.shape == (2, 2)
        and h.shape[0] == 1
        and model.noise_correlation is None
        and a[0, 0] == 0.0
        and a[0, 1] > 0
        and a[1, 0] < 0
        and a[1, 1] < 0
        and d[0, 0] == 0.0
        and d[0, 1] == 0.0
        and d[1, 1] > 0
        and h[0, 1] == 0.0
    )


class _Chain:
    """The reduced scalar problem ``F(v_qq) = 0`` for the oscillator structure.

    With ``c = alpha a^2`` and ``b = b3 a^3 + b2 a^2 + b1 a``, the remaining
    stationarity condition is a quartic with non-negative coefficients minus
    the force-noise intensity, so it is convex and increasing for ``a > 0``.
    """

    def __init__(self, model: StateSpaceModel):
        a12, a21, a22 = model.drift[0, 1], model.drift[1, 0], model.drift[1, 1]
        k = model.measurement_rows[0, 0] ** 2 / model.measurement_noise_psd
        self.a12, self.a21, self.a22, self.k = a12, a21, a22, k
        self.d = model.diffusion[1, 1]
        alpha = k / (2.0 * a12)
        self.alpha = alpha
        self.b3, self.b2, self.b1 = k * alpha / a12, -a22 * alpha / a12, -a21 / a12
        # F(a) = e4 a^4 + e3 a^3 + e2 a^2 + e1 a - d
        self.coeffs = {
            4: k * alpha * alpha,
            3: -2.0 * a22 * self.b3,
            2: -2.0 * a21 * alpha - 2.0 * a22 * self.b2,
            1: -2.0 * a22 * self.b1,
        }

    def f(self, a: float) -> tuple[float, float]:
        e = self.coeffs
        val = ((e[4] * a + e[3]) * a + e[2]) * a * a + e[1] * a - self.d
        der = ((4.0 * e[4] * a + 3.0 * e[3]) * a + 2.0 * e[2]) * a + e[1]
        return val, der

    def bracket(self) -> tuple[float, float]:
        # each positive monomial alone bounds the root from above; a quarter of
        # the force noise per monomial bounds it from below
        his, los = [], []
        for j, e in self.coeffs.items():
            if e > 0:
                his.append((self.d / e) ** (1.0 / j))
                los.append((self.d / (4.0 * e)) ** (1.0 / j))
        return min(los), min(his)

    def matrix(self, a: float) -> np.ndarray:
        c = self.alpha * a * a
        b = ((self.b3 * a + self.b2) * a + self.b1) * a
        return np.array([[a, c], [c, b]])


def _solve_newton(chain: _Chain, max_iter: int) -> tuple[float, int]:
    lo, hi = chain.bracket()
    a = hi
    for it in range(1, max_iter + 1):
        val, der = chain.f(a)
        if val == 0.0:
            return a, it
        if val > 0:
            hi = min(hi, a)
        else:
            lo = max(lo, a)
        cand = a - val / der if der > 0 else 0.5 * (lo + hi)
        if not lo <= cand <= hi:
            cand = 0.5 * (lo + hi)
        if abs(cand - a) <= 4e-16 * a:
            return cand, it
        a = cand
    raise RiccatiConvergenceError(f"Newton did not converge in {max_iter} iterations")


def _solve_bisection(chain: _Chain, max_iter: int) -> tuple[float, int]:
    lo, hi = chain.bracket()
    for it in range(1, max_iter + 1):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            return mid, it
        if chain.f(mid)[0] > 0:
            hi = mid
        else:
            lo = mid
        if hi - lo <= 2e-16 * hi:
            return 0.5 * (lo + hi), it
    raise RiccatiConvergenceError(f"bisection did not converge in {max_iter} iterations")


def steady_state(model: StateSpaceModel, method: str = "newton", max_iter: int = 200) -> SteadyStateCovariance:
    """Symmetric positive-definite stationary solution of the filter Riccati equation.

    Parameters
    ----------
    model : StateSpaceModel
    method : {"newton", "bisection"}
        Scalar solver for oscillator-structured models.  Newton is started
        from an upper bound of the root (where the residual is convex and
        increasing) and safeguarded by the running bracket; "bisection" works
        on the same bracket.
    max_iter : int
        Iteration cap for either scalar solver.
    """
    if not np.any(model.diffusion):
        raise ValueError("model has zero diffusion; the steady state is degenerate")

    if _oscillator_structure(model):
        chain = _Chain(model)
        if chain.k == 0.0:
            v = unconditional_covariance(model)
            return SteadyStateCovariance(v, riccati_residual(model, v), 0, "lyapunov")
        if method == "newton":
            a, it = _solve_newton(chain, max_iter)
        elif method == "bisection":
            a, it = _solve_bisection(chain, max_iter)
        else:
            raise ValueError(f"unknown method {method!r}")
        v = chain.matrix(a)
        used = method
    else:
        h = model.measurement_rows
        r = model.measurement_noise_psd * np.eye(h.shape[0])
        s = None if model.noise_correlation is None else model.noise_correlation.T
        v = linalg.solve_continuous_are(model.drift.T, h.T, model.diffusion, r, s=s)
        v = 0.5 * (v + v.T)
        it, used = 0, "care"

    if np.linalg.eigvalsh(v).min() <= 0:
        raise RiccatiConvergenceError("steady-state covariance is not positive definite")
    return SteadyStateCovariance(v, riccati_residual(model, v), it, used)
