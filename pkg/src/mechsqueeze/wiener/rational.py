"""Rational functions of real frequency in zero-pole-gain form.

Convention: ``F(w) = int f(t) exp(i w t) dt``.  A term ``r / (w - p)`` is the
transform of a causal exponential when ``Im p < 0`` and of an anti-causal one
when ``Im p > 0``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["RationalSpectrum", "PartialFractions"]

_CANCEL_RTOL = 1e-9


def _as_roots(values) -> np.ndarray:
    return np.atleast_1d(np.asarray(values, dtype=complex)).ravel()


def _trim(coeffs: np.ndarray, size=None, rtol: float = 1e-13) -> np.ndarray:
    """Drop leading coefficients that are cancellation residue.

    ``size`` holds, per power, the magnitude of the terms summed into that
    coefficient. Comparing against the largest coefficient instead would drop
    genuine leading terms of polynomials spanning many decades.
    """
    coeffs = np.asarray(coeffs, dtype=complex)
    size = np.zeros(coeffs.size) if size is None else np.asarray(size, dtype=float)
    nz = np.nonzero(np.abs(coeffs) > rtol * size)[0]
    if nz.size == 0 or not np.any(coeffs):
        return np.zeros(1, dtype=complex)
    return coeffs[nz[0]:]


@dataclass(frozen=True)
class PartialFractions:
    """``direct + sum_j residues[j] / (w - poles[j])``."""

    direct: complex
    residues: np.ndarray
    poles: np.ndarray


@dataclass(frozen=True)
class RationalSpectrum:
    """``gain * prod(w - zeros) / prod(w - poles)``.

    Used for power spectra, cross spectra, spectral factors and filter
    responses alike.  Instances are immutable; arithmetic returns new objects.
    """

    zeros: np.ndarray
    poles: np.ndarray
    gain: complex = 1.0

    def __post_init__(self):
        object.__setattr__(self, "zeros", _as_roots(self.zeros))
        object.__setattr__(self, "poles", _as_roots(self.poles))
        object.__setattr__(self, "gain", complex(self.gain))

    # construction -----------------------------------------------------

    @classmethod
    def constant(cls, value: complex) -> "RationalSpectrum":
        return cls([], [], value)

    @classmethod
    def from_coefficients(cls, numerator, denominator) -> "RationalSpectrum":
        """From polynomial coefficients in ``w``, highest power first."""
        num, den = _trim(numerator), _trim(denominator)
        if not np.any(den):
            raise ZeroDivisionError("zero denominator")
        if not np.any(num):
            return cls.constant(0.0)
        return cls(np.roots(num), np.roots(den), num[0] / den[0])

    @classmethod
    def from_partial_fractions(cls, pf: PartialFractions) -> "RationalSpectrum":
        poles = _as_roots(pf.poles)
        res = _as_roots(pf.residues)
        num = pf.direct * np.poly(poles) if poles.size else np.array([pf.direct], dtype=complex)
        size = np.abs(num)
        for j in range(poles.size):
            term = res[j] * np.poly(np.delete(poles, j))
            num = np.polyadd(num, term)
            size = np.polyadd(size, np.abs(term))
        # keep the given poles; re-rooting their polynomial would lose accuracy
        num = _trim(num, size)
        if not np.any(num):
            return cls.constant(0.0)
        return cls(np.roots(num), poles, num[0])

    # evaluation -------------------------------------------------------

    def __call__(self, omega) -> np.ndarray:
        if isinstance(omega, (float, int)):
            # scalar fast path for adaptive quadrature
            v = self.gain
            for z in self.zeros.tolist():
                v *= omega - z
            for p in self.poles.tolist():
                v /= omega - p
            return v
        w = np.asarray(omega, dtype=complex)[..., None]
        out = np.full(w.shape[:-1], self.gain, dtype=complex)
        if self.zeros.size:
            out = out * np.prod(w - self.zeros, axis=-1)
        if self.poles.size:
            out = out / np.prod(w - self.poles, axis=-1)
        return out

    @property
    def is_zero(self) -> bool:
        return self.gain == 0

    @property
    def relative_degree(self) -> int:
        """Denominator degree minus numerator degree."""
        return self.poles.size - self.zeros.size

    def numerator(self) -> np.ndarray:
        return self.gain * np.poly(self.zeros) if self.zeros.size else np.array([self.gain])

    def denominator(self) -> np.ndarray:
        return np.poly(self.poles) if self.poles.size else np.array([1.0 + 0j])

    # algebra ----------------------------------------------------------

    def _coerce(self, other) -> "RationalSpectrum":
        if isinstance(other, RationalSpectrum):
            return other
        if np.isscalar(other):
            return RationalSpectrum.constant(other)
        return NotImplemented

    def __mul__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        if self.is_zero or other.is_zero:
            return RationalSpectrum.constant(0.0)
        return RationalSpectrum(
            np.concatenate([self.zeros, other.zeros]),
            np.concatenate([self.poles, other.poles]),
            self.gain * other.gain,
        ).cancel()

    __rmul__ = __mul__

    def reciprocal(self) -> "RationalSpectrum":
        if self.is_zero:
            raise ZeroDivisionError("reciprocal of the zero function")
        return RationalSpectrum(self.poles, self.zeros, 1.0 / self.gain)

    def __truediv__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self * other.reciprocal()

    def __neg__(self):
        return RationalSpectrum(self.zeros, self.poles, -self.gain)

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        if self.is_zero:
            return other
        if other.is_zero:
            return self
        a = np.polymul(self.numerator(), other.denominator())
        b = np.polymul(other.numerator(), self.denominator())
        num = _trim(np.polyadd(a, b), np.polyadd(np.abs(a), np.abs(b)))
        den = np.polymul(self.denominator(), other.denominator())
        return RationalSpectrum.from_coefficients(num, den).cancel()

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def conj(self) -> "RationalSpectrum":
        """The function ``w -> conj(F(w))`` for real ``w``."""
        return RationalSpectrum(self.zeros.conj(), self.poles.conj(), np.conj(self.gain))

    def cancel(self, rtol: float = _CANCEL_RTOL) -> "RationalSpectrum":
        """Drop zero/pole pairs that coincide to relative ``rtol``."""
        zeros = list(self.zeros)
        poles = list(self.poles)
        kept = []
        for z in zeros:
            if poles:
                d = np.abs(np.asarray(poles) - z)
                j = int(np.argmin(d))
                if d[j] <= rtol * max(abs(z), abs(poles[j]), 1e-300):
                    poles.pop(j)
                    continue
            kept.append(z)
        return RationalSpectrum(kept, poles, self.gain)

    # decomposition ----------------------------------------------------

    def partial_fractions(self) -> PartialFractions:
        """Expansion over simple poles; the function must be proper."""
        if self.relative_degree < 0:
            raise ValueError("function grows at large |w|; not integrable")
        p = self.poles
        if p.size > 1:
            gaps = np.abs(p[:, None] - p[None, :])
            np.fill_diagonal(gaps, np.inf)
            if np.min(gaps) <= 1e-12 * max(np.abs(p).max(), 1e-300):
                raise ValueError("repeated poles are not supported")
        direct = self.gain if self.relative_degree == 0 else 0.0
        res = np.empty(p.size, dtype=complex)
        for j, pj in enumerate(p):
            r = self.gain
            if self.zeros.size:
                r *= np.prod(pj - self.zeros)
            others = np.delete(p, j)
            if others.size:
                r /= np.prod(pj - others)
            res[j] = r
        return PartialFractions(complex(direct), res, p.copy())

    def _split(self, keep_lower: bool) -> "RationalSpectrum":
        pf = self.partial_fractions()
        if np.any(pf.poles.imag == 0):
            raise ValueError("pole on the real axis: causal split undefined")
        mask = pf.poles.imag < 0 if keep_lower else pf.poles.imag > 0
        part = PartialFractions(0.5 * pf.direct, pf.residues[mask], pf.poles[mask])
        if not part.poles.size:
            return RationalSpectrum.constant(part.direct)
        return RationalSpectrum.from_partial_fractions(part)

    def causal_part(self) -> "RationalSpectrum":
        """Lower-half-plane pole terms plus half of any constant (t = 0 mass)."""
        return self._split(True)

    def anticausal_part(self) -> "RationalSpectrum":
        return self._split(False)

    def is_causal(self) -> bool:
        return bool(np.all(self.poles.imag < 0))

    def impulse_response(self, t) -> np.ndarray:
        """Inverse transform ``(1/2pi) int F(w) exp(-i w t) dw`` at ``t != 0``.

        The regular part only: a constant term (a delta at ``t = 0``) is not
        representable on samples and is omitted.
        """
        t = np.asarray(t, dtype=float)
        pf = self.partial_fractions()
        out = np.zeros(t.shape, dtype=complex)
        tt = t[..., None]
        lower = pf.poles.imag < 0
        upper = pf.poles.imag > 0
        if np.any(lower):
            e = np.exp(-1j * pf.poles[lower] * np.where(tt > 0, tt, 0.0))
            out += np.where(t > 0, -1j * (e * pf.residues[lower]).sum(axis=-1), 0.0)
        if np.any(upper):
            e = np.exp(-1j * pf.poles[upper] * np.where(tt < 0, tt, 0.0))
            out += np.where(t < 0, 1j * (e * pf.residues[upper]).sum(axis=-1), 0.0)
        return out
