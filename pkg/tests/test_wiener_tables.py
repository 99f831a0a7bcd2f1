import io
import math
import warnings

import numpy as np
import pytest

from mechsqueeze.params import OscillatorParams, derive
from mechsqueeze.wiener import (
    FilterResponse,
    SpectrumTable,
    cross_spectrum,
    default_grid,
    error_variance,
    frequency_grid,
    measured_factor,
    measured_spectrum,
    mechanical_spectrum,
    momentum_cross_spectrum,
    momentum_filter,
    position_filter,
    read_table_csv,
    spectral_factor,
    wiener_from_spectra,
    write_table_csv,
)
from mechsqueeze.conditional import conditional_covariance


def make(omega=20.0, gamma=1.0, eta=0.7, n_th=10.0, c=5.0):
    return derive(OscillatorParams(omega=omega, gamma=gamma, eta=eta, n_th=n_th, c=c))


CASES = [dict(), dict(omega=100.0, n_th=1e3, c=50.0, eta=1.0), dict(omega=3.0, n_th=0.0, c=0.3)]


def tabulated(d, points=2**16, continuous=True):
    g = default_grid(d, points=points)
    syy = SpectrumTable(g, measured_spectrum(d)(g))
    return g, wiener_from_spectra(SpectrumTable(g, cross_spectrum(d)(g)), syy, continuous=continuous)


def interior(g, frac=0.8):
    return np.abs(g) <= frac * g.max()


# grid and table basics -----------------------------------------------------------

def test_frequency_grid_layout():
    g = frequency_grid(8, 0.5)
    assert g[0] == -2.0 and g[4] == 0.0 and g[-1] == 1.5
    with pytest.raises(ValueError):
        frequency_grid(7, 1.0)
    with pytest.raises(ValueError):
        frequency_grid(8, 0.0)


@pytest.mark.parametrize("omega", [np.linspace(-1, 1, 8), np.arange(7.0) - 3, np.array([0.0, 1.0, 3.0, 4.0]),
                                   np.zeros((2, 4))])
def test_table_validation(omega):
    with pytest.raises(ValueError):
        SpectrumTable(omega, np.ones(omega.shape))


def test_time_sample_round_trip_and_interpolation():
    g = frequency_grid(64, 0.25)
    t = SpectrumTable(g, np.exp(-g**2) + 0.1j * g)
    back = SpectrumTable.from_time_samples(t.time_samples(), g)
    assert np.allclose(back.values, t.values, atol=1e-14)
    assert t(g[10]) == pytest.approx(t.values[10])
    assert t(1e9) == 0
    assert t.time_step == pytest.approx(2 * math.pi / (64 * 0.25))


def test_gaussian_transform_pair():
    # F = exp(-w^2 / 2)  <->  f = exp(-t^2 / 2) / sqrt(2 pi)
    g = frequency_grid(2**12, 0.01)
    f = SpectrumTable(g, np.exp(-g**2 / 2)).time_samples()
    t = np.fft.fftfreq(g.size, d=1.0 / g.size) * (2 * math.pi / (g.size * 0.01))
    assert np.allclose(f.real, np.exp(-t**2 / 2) / math.sqrt(2 * math.pi), atol=1e-12)


def test_table_causal_split_identity():
    g = frequency_grid(2**12, 0.05)
    f = SpectrumTable(g, 1 / (4 - g**2 - 0.5j * g) + 1 / (9 - g**2 + 2j * g))
    for cont in (True, False):
        plus = f.causal_part(cont)
        assert np.max(np.abs(plus.values + f.anticausal_part(cont).values - f.values)) < 1e-12
    # causal part of a causal function is itself, up to grid accuracy
    c = SpectrumTable(g, 1 / (4 - g**2 - 0.5j * g))
    assert np.max(np.abs(c.causal_part().values - c.values)[interior(g)]) < 1e-5


def test_csv_round_trip(tmp_path):
    g = frequency_grid(16, 0.5)
    t = SpectrumTable(g, g**2 + 1j * g, metadata={"kind": "demo"})
    path = tmp_path / "t.csv"
    write_table_csv(t, path, {"source": "test"})
    w, v, meta = read_table_csv(path)
    assert np.array_equal(w, g) and np.array_equal(v, t.values)
    assert meta["kind"] == "demo" and meta["source"] == "test" and "two-sided" in meta["convention"]
    buf = io.StringIO()
    write_table_csv(t, buf)
    assert read_table_csv(io.StringIO(buf.getvalue()))[0].size == 16


@pytest.mark.parametrize("text", [
    "",
    "omega,re\n1,2\n3,4\n",
    "omega_rad_s,re\n1,2\n",
    "omega_rad_s,re\n1,2\n3,x\n",
    "omega_rad_s,re\n1,2\n3\n",
    "omega_rad_s,re\n1,2\n3,nan\n",
])
def test_csv_errors(text):
    with pytest.raises(ValueError):
        read_table_csv(io.StringIO(text))


def test_default_grid_refines_and_warns():
    d = make(omega=1e3)
    g = default_grid(d, points=2**10)
    assert g[1] - g[0] <= 0.125 * d.gamma
    with pytest.warns(RuntimeWarning):
        default_grid(make(omega=1e7), points=2**10, max_points=2**12)


# cepstral factorisation ------------------------------------------------------------

@pytest.mark.parametrize("kw", CASES)
def test_cepstral_factor_matches_rational(kw):
    d = make(**kw)
    g = default_grid(d, points=2**16)
    s = SpectrumTable(g, measured_spectrum(d)(g))
    m = spectral_factor(s)
    ref = measured_factor(d)(g)
    inner = interior(g)
    assert np.max(np.abs(np.abs(m.values[inner]) ** 2 - s.values.real[inner]) / s.values.real[inner]) < 1e-6
    assert np.max(np.abs(m.values[inner] - ref[inner]) / np.abs(ref[inner])) < 1e-6


def test_cepstral_flat_spectrum():
    g = frequency_grid(256, 0.1)
    m = SpectrumTable(g, np.full(g.size, 4.0)).spectral_factor()
    assert np.allclose(m.values, 2.0, atol=1e-14)


def test_cepstral_rejects_bad_spectra():
    g = frequency_grid(16, 1.0)
    with pytest.raises(ValueError):
        SpectrumTable(g, np.zeros(16)).spectral_factor()
    with pytest.raises(ValueError):
        SpectrumTable(g, np.ones(16) + 1j).spectral_factor()


# tabulated Wiener filters ---------------------------------------------------------------

@pytest.mark.parametrize("kw", CASES)
def test_tabulated_filter_matches_closed_form(kw):
    d = make(**kw)
    g, h = tabulated(d)
    ref = position_filter(d)(g)
    inner = interior(g)
    assert np.max(np.abs(h.table.values - ref)[inner]) < 1e-6 * np.max(np.abs(ref))


def test_tabulated_momentum_filter():
    d = make()
    g = default_grid(d, points=2**16)
    syy = SpectrumTable(g, measured_spectrum(d)(g))
    h = wiener_from_spectra(momentum_cross_spectrum(d), syy)
    ref = momentum_filter(d)(g)
    assert np.max(np.abs(h.table.values - ref)[interior(g)]) < 1e-6 * np.max(np.abs(ref))


@pytest.mark.parametrize("kw", CASES)
def test_grid_doubling_stability(kw):
    d = make(**kw)
    g1 = default_grid(d, points=2**16)
    g2 = frequency_grid(2 * g1.size, (g1[1] - g1[0]) / 2)
    assert np.allclose(g2[::2], g1)

    def synth(g):
        return wiener_from_spectra(SpectrumTable(g, cross_spectrum(d)(g)),
                                   SpectrumTable(g, measured_spectrum(d)(g))).table

    h1 = synth(g1)
    common = synth(g2).values[::2]
    inner = interior(g1)
    assert np.max(np.abs(common - h1.values)[inner]) < 1e-6 * np.max(np.abs(h1.values))


@pytest.mark.parametrize("kw", CASES)
def test_causality_leakage_on_discrete_route(kw):
    d = make(**kw)
    g, h = tabulated(d, continuous=False)
    f = h.table.time_samples()
    t = h.table.times()
    assert np.max(np.abs(f[t < 0])) < 1e-8 * np.max(np.abs(f))


def test_table_impulse_response_matches_kernel():
    d = make()
    g, h = tabulated(d)
    dt = h.table.time_step
    tab = h.impulse_response(dt, 2.0).samples
    exact = position_filter(d).impulse_response(dt, 2.0).samples
    # the table sample at t = 0 is the doubled jump midpoint
    assert tab[0] == pytest.approx(exact[0], rel=5e-3)
    # band-limited samples ring around the jump with alternating sign and ~1/n decay;
    # per-interval trapezoid averages (what the record convolution uses) converge ~1/n^2
    avg_tab, avg_exact = (tab[1:] + tab[:-1]) / 2, (exact[1:] + exact[:-1]) / 2
    err = np.abs(avg_tab - avg_exact) / np.abs(exact).max()
    assert np.max(err[20:]) < 1e-3 and np.max(err[200:]) < 1e-5
    assert np.sum(avg_tab) * dt == pytest.approx(np.sum(avg_exact) * dt, rel=3e-3)
    with pytest.raises(ValueError):
        h.impulse_response(2 * dt, 1.0)


def test_table_error_variance():
    d = make()
    g, h = tabulated(d, points=2**17)
    v = error_variance(h, SpectrumTable(g, mechanical_spectrum(d)(g)), SpectrumTable(g, cross_spectrum(d)(g)),
                       SpectrumTable(g, measured_spectrum(d)(g)))
    assert v == pytest.approx(conditional_covariance(d).v_qq, rel=1e-4)


def test_filter_response_tabulate():
    d = make()
    g = frequency_grid(64, 1.0)
    tab = position_filter(d).tabulate(g)
    assert isinstance(FilterResponse(table=tab)(g), np.ndarray)
    assert np.allclose(tab.values, position_filter(d)(g))
    assert FilterResponse(table=tab.with_values(np.zeros(64))).is_zero


def test_mixed_inputs_use_table_route():
    d = make()
    g = default_grid(d, points=2**14)
    h = wiener_from_spectra(cross_spectrum(d), SpectrumTable(g, measured_spectrum(d)(g)))
    assert h.table is not None and h.rational is None
    with pytest.raises(TypeError):
        wiener_from_spectra(lambda w: w, lambda w: w)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        wiener_from_spectra(SpectrumTable(g, cross_spectrum(d)(g)), measured_spectrum(d))
