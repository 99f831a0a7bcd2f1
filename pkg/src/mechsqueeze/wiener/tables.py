"""Uniformly sampled two-sided spectra and their FFT-based transformations.

A table holds ``N`` (even) samples on ``w_k = (k - N/2) dw``.  The first bin
is the Nyquist bin, its own mirror image under the periodic extension the
discrete transform imposes, so the remaining ``N - 1`` points are exactly
symmetric about zero.

Time samples follow ``f(t_n) = (dw / 2pi) sum_k F(w_k) exp(-i w_k t_n)`` with
``t_n = n dt`` and ``dt = 2 pi / (N dw)``, which is numpy's forward FFT of the
``ifftshift``-ed table.
"""

from __future__ import annotations

import io
import math
import os
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "SpectrumTable",
    "frequency_grid",
    "read_table_csv",
    "write_table_csv",
]


def _tail_images(omega: np.ndarray, period: float, d0: complex, d1: complex, d2: complex) -> np.ndarray:
    """Periodised images of the tail of a transform cut at ``t = 0``.

    A function ``g`` supported on ``t >= 0`` with ``g(0+) = d0``,
    ``g'(0+) = d1``, ``g''(0+) = d2`` has the transform tail
    ``i d0/w - d1/w^2 - i d2/w^3``.  The DFT returns that tail periodised
    with period ``P``; the images ``sum_{k != 0} (...)(w + kP)`` are summed in
    closed form (cotangent and its derivatives) so they can be removed.
    """
    w = np.asarray(omega, dtype=float)
    a = math.pi / period
    x = a * w
    s1 = np.empty(w.shape)
    s2 = np.empty(w.shape)
    s3 = np.empty(w.shape)
    small = np.abs(x) < 1e-3
    xs = x[small]
    s1[small] = a * (-xs / 3.0 - xs**3 / 45.0)
    s2[small] = a * a * (1.0 / 3.0 + xs**2 / 15.0 + 2.0 * xs**4 / 189.0)
    s3[small] = -(a**3) * (xs / 15.0 + 4.0 * xs**3 / 189.0)
    big = ~small
    xb, wb = x[big], w[big]
    sn, cs = np.sin(xb), np.cos(xb)
    s1[big] = a * cs / sn - 1.0 / wb
    s2[big] = a * a / sn**2 - 1.0 / wb**2
    s3[big] = a**3 * cs / sn**3 - 1.0 / wb**3
    return 1j * d0 * s1 - d1 * s2 - 1j * d2 * s3


def _derivatives_at_zero(f: np.ndarray, dt: float) -> tuple[complex, complex]:
    """Fourth-order central first and second derivatives at ``n = 0`` (FFT order)."""
    fm2, fm1, f0, f1, f2 = f[-2], f[-1], f[0], f[1], f[2]
    d1 = (fm2 - 8.0 * fm1 + 8.0 * f1 - f2) / (12.0 * dt)
    d2 = (-fm2 + 16.0 * fm1 - 30.0 * f0 + 16.0 * f1 - f2) / (12.0 * dt * dt)
    return d1, d2


def frequency_grid(points: int, spacing: float) -> np.ndarray:
    """``points`` samples ``(k - points/2) * spacing``; ``points`` must be even."""
    if points < 4 or points % 2:
        raise ValueError("number of grid points must be even and >= 4")
    if not spacing > 0:
        raise ValueError("grid spacing must be positive")
    return (np.arange(points) - points // 2) * spacing


@dataclass(frozen=True)
class SpectrumTable:
    """Complex samples of a function of angular frequency on a uniform grid."""

    omega: np.ndarray
    values: np.ndarray
    two_sided: bool = True
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        w = np.asarray(self.omega, dtype=float)
        v = np.asarray(self.values, dtype=complex)
        if w.ndim != 1 or v.shape != w.shape:
            raise ValueError("omega and values must be 1-D arrays of equal length")
        n = w.size
        if n < 4 or n % 2:
            raise ValueError("table length must be even and >= 4")
        dw = w[1] - w[0]
        if not dw > 0 or not np.allclose(np.diff(w), dw, rtol=1e-9, atol=0.0):
            raise ValueError("frequency grid must be uniform and increasing")
        if abs(w[n // 2]) > 1e-9 * dw or not np.allclose(w[1:], -w[1:][::-1], rtol=0, atol=1e-9 * dw * n):
            raise ValueError("frequency grid must be symmetric about zero")
        object.__setattr__(self, "omega", w)
        object.__setattr__(self, "values", v)

    # constructors -----------------------------------------------------

    @classmethod
    def from_function(cls, func, omega, **metadata) -> "SpectrumTable":
        w = np.asarray(omega, dtype=float)
        return cls(w, np.asarray(func(w), dtype=complex), metadata=metadata)

    @classmethod
    def from_time_samples(cls, samples: np.ndarray, omega: np.ndarray) -> "SpectrumTable":
        """Inverse of :meth:`time_samples`."""
        dw = omega[1] - omega[0]
        vals = (2.0 * math.pi / dw) * np.fft.fftshift(np.fft.ifft(samples))
        return cls(omega, vals)

    # basic properties -------------------------------------------------

    @property
    def spacing(self) -> float:
        return float(self.omega[1] - self.omega[0])

    @property
    def size(self) -> int:
        return self.omega.size

    @property
    def time_step(self) -> float:
        return 2.0 * math.pi / (self.size * self.spacing)

    def __call__(self, omega) -> np.ndarray:
        """Linear interpolation (zero outside the grid)."""
        w = np.asarray(omega, dtype=float)
        re = np.interp(w, self.omega, self.values.real, left=0.0, right=0.0)
        im = np.interp(w, self.omega, self.values.imag, left=0.0, right=0.0)
        return re + 1j * im

    def with_values(self, values, **metadata) -> "SpectrumTable":
        meta = dict(self.metadata)
        meta.update(metadata)
        return SpectrumTable(self.omega, values, self.two_sided, meta)

    def conj(self) -> "SpectrumTable":
        return self.with_values(self.values.conj())

    def _check_grid(self, other: "SpectrumTable"):
        if other.size != self.size or not np.allclose(other.omega, self.omega, rtol=1e-12, atol=0):
            raise ValueError("tables live on different frequency grids")

    def _binary(self, other, op):
        if isinstance(other, SpectrumTable):
            self._check_grid(other)
            other = other.values
        elif callable(other):
            other = np.asarray(other(self.omega), dtype=complex)
        return self.with_values(op(self.values, other))

    def __mul__(self, other):
        return self._binary(other, np.multiply)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self._binary(other, np.divide)

    def __add__(self, other):
        return self._binary(other, np.add)

    __radd__ = __add__

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    # transforms -------------------------------------------------------

    def time_samples(self) -> np.ndarray:
        """``f(t_n)`` for ``n = 0..N-1`` (FFT order: negative times in the upper half)."""
        return (self.spacing / (2.0 * math.pi)) * np.fft.fft(np.fft.ifftshift(self.values))

    def times(self) -> np.ndarray:
        """Sample times in FFT order, matching :meth:`time_samples`."""
        n = self.size
        return np.fft.fftfreq(n, d=1.0 / n) * self.time_step

    @property
    def period(self) -> float:
        """Frequency period ``N dw`` implied by the discrete transform."""
        return self.size * self.spacing

    def causal_part(self, continuous: bool = True) -> "SpectrumTable":
        """Zero the ``t < 0`` samples and halve the ``t = 0`` (and wrap-around) sample.

        With ``continuous`` the periodised images of the ``1/w`` tail created
        by the cut at ``t = 0`` are removed, which gives the causal part of
        the underlying continuous function rather than of its periodic
        extension.  ``continuous=False`` is the exact discrete-time split.
        """
        f = self.time_samples()
        n = self.size
        d0 = f[0]
        d1, d2 = _derivatives_at_zero(f, self.time_step)
        f[n // 2 + 1:] = 0.0
        f[0] *= 0.5
        f[n // 2] *= 0.5
        out = SpectrumTable.from_time_samples(f, self.omega)
        if continuous:
            out = out.with_values(out.values - _tail_images(self.omega, self.period, d0, d1, d2))
        return out

    def anticausal_part(self, continuous: bool = True) -> "SpectrumTable":
        return self - self.causal_part(continuous)

    def spectral_factor(self, continuous: bool = True) -> "SpectrumTable":
        """Minimum-phase factor ``M`` with ``|M|^2 = S`` by the cepstral method.

        The (time-domain) cepstrum of ``log S`` is folded onto ``t >= 0``:
        positive lags doubled, zero lag and the wrap-around lag kept once.
        The exponential of the folded transform has all singularities in
        the lower half-plane, so ``M`` and ``1/M`` are causal.  ``continuous``
        removes the periodised ``1/w`` tail of ``log M`` (see
        :meth:`causal_part`); it changes only the phase.
        """
        s = self.values
        if np.any(np.abs(s.imag) > 1e-12 * np.abs(s.real).max()):
            raise ValueError("spectrum is not real")
        s = s.real
        if np.any(~np.isfinite(s)) or np.any(s <= 0):
            raise ValueError("spectrum must be strictly positive on the whole grid")
        n = self.size
        log_s = np.log(s)
        # the high-frequency level is a delta in lag space, not a jump: factor it out
        level = 0.5 * (log_s[1] + log_s[-1])
        ceps = np.fft.fft(np.fft.ifftshift(log_s - level))
        if continuous:
            # log M is the causal part of log S in the sense of causal_part
            c = (self.spacing / (2.0 * math.pi)) * ceps
            d1, d2 = _derivatives_at_zero(c, self.time_step)
            images = _tail_images(self.omega, self.period, c[0], d1, d2)
        ceps[1:n // 2] *= 2.0
        ceps[n // 2 + 1:] = 0.0
        log_m = 0.5 * (np.fft.fftshift(np.fft.ifft(ceps)) + level)
        if continuous:
            log_m = log_m - images
        return self.with_values(np.exp(log_m))

    def impulse_response(self, length: int | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Times ``t >= 0`` and samples of the inverse transform there."""
        f = self.time_samples()
        n = self.size
        m = n // 2 if length is None else min(int(length), n // 2)
        return np.arange(m) * self.time_step, f[:m]

    def integral(self) -> complex:
        """``int F dw / 2pi`` by the trapezoid rule on the grid."""
        return complex(np.trapezoid(self.values, self.omega) / (2.0 * math.pi))


def write_table_csv(table: SpectrumTable, path, metadata: dict | None = None) -> None:
    """Write ``omega_rad_s,re,im`` rows preceded by ``#`` metadata lines."""
    meta = {"convention": "two-sided, F(w) = int f(t) exp(i w t) dt, integrals dw/2pi"}
    meta.update(table.metadata)
    if metadata:
        meta.update(metadata)
    buf = io.StringIO()
    for k, v in meta.items():
        buf.write(f"# {k}: {v}\n")
    buf.write("omega_rad_s,re,im\n")
    np.savetxt(buf, np.column_stack([table.omega, table.values.real, table.values.imag]),
               delimiter=",", fmt="%.17g")
    if hasattr(path, "write"):
        path.write(buf.getvalue())
    else:
        with open(os.fspath(path), "w", encoding="utf-8") as fh:
            fh.write(buf.getvalue())


def _parse_rows(lines):
    meta, header, rows = {}, None, []
    for lineno, raw in enumerate(lines, 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, sep, val = line[1:].partition(":")
            if sep:
                meta[key.strip()] = val.strip()
            continue
        if header is None:
            header = [h.strip() for h in line.split(",")]
            continue
        parts = line.split(",")
        if len(parts) != len(header):
            raise ValueError(f"line {lineno}: expected {len(header)} fields, got {len(parts)}")
        try:
            rows.append([float(x) for x in parts])
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
    if header is None:
        raise ValueError("missing header row")
    return meta, header, np.array(rows, dtype=float).reshape(-1, len(header))


def read_table_csv(path) -> tuple[np.ndarray, np.ndarray, dict]:
    """Read a ``omega_rad_s,re,im`` CSV (``im`` optional); returns (omega, values, metadata)."""
    if hasattr(path, "read"):
        lines = path.read().splitlines()
    else:
        with open(os.fspath(path), encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    meta, header, data = _parse_rows(lines)
    if header[:2] != ["omega_rad_s", "re"] or header[2:] not in ([], ["im"]):
        raise ValueError(f"header must be 'omega_rad_s,re[,im]', got {','.join(header)!r}")
    if data.shape[0] < 2:
        raise ValueError("table needs at least two rows")
    if not np.all(np.isfinite(data)):
        raise ValueError("non-finite values in table")
    values = data[:, 1] + (1j * data[:, 2] if data.shape[1] == 3 else 0.0)
    return data[:, 0], values, meta
