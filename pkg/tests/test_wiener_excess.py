import math

import numpy as np
import pytest

from mechsqueeze.conditional import conditional_covariance
from mechsqueeze.params import OscillatorParams, derive, thermal_occupancy
from mechsqueeze.riccati import StateSpaceModel, steady_state
from mechsqueeze.wiener import (
    ExcessNoiseModel,
    SpectrumTable,
    clean_squeezing_crossing,
    cross_spectrum,
    default_grid,
    excess_conditional_covariance,
    excess_position_filter,
    excess_squeezing_threshold,
    frequency_grid,
    measured_spectrum,
    position_filter,
    write_table_csv,
    wiener_from_spectra,
)


def params(omega=20.0, gamma=1.0, eta=0.7, n_th=10.0, c=5.0):
    return OscillatorParams(omega=omega, gamma=gamma, eta=eta, n_th=n_th, c=c)


def augmented_oracle(d, level, width):
    """Kalman steady state with the Lorentzian excess as an extra OU state on the record."""
    w, g = d.omega, d.gamma
    drift = np.array([[0.0, w, 0.0], [-w, -g, 0.0], [0.0, 0.0, -width]])
    diffusion = np.diag([0.0, 4.0 * g * d.n_tot, level * width * width])
    rows = np.array([[d.record_gain, 0.0, 1.0]])
    ss = steady_state(StateSpaceModel(drift, diffusion, rows))
    assert ss.method == "care"
    return ss.matrix


@pytest.mark.parametrize("p, level, width", [
    (params(), 3.0, 2.0),
    (params(omega=100.0, n_th=1e3, c=50.0, eta=1.0), 50.0, 0.3),
    (params(omega=1e3, n_th=1e4, c=1e3, eta=0.5), 10.0, 1e3),
    (params(omega=1e4, n_th=1e5, c=1e5, eta=0.9), 1e3, 10.0),
])
def test_lorentzian_against_augmented_kalman(p, level, width):
    d = derive(p)
    cov = excess_conditional_covariance(d, ExcessNoiseModel.lorentzian(level, width))
    ref = augmented_oracle(d, level, width)
    assert cov.v_qq == pytest.approx(ref[0, 0], rel=1e-6)
    assert cov.v_pp == pytest.approx(ref[1, 1], rel=1e-6)
    assert cov.c_qp == pytest.approx(ref[0, 1], rel=1e-6)


@pytest.mark.parametrize("k", [0.0, 0.5, 3.0, 100.0])
def test_white_excess_equals_reduced_efficiency(k):
    p = params(omega=200.0, n_th=100.0, c=300.0, eta=0.8)
    cov = excess_conditional_covariance(derive(p), ExcessNoiseModel.white(k))
    # record noise 1 + k: same backaction, measurement rate scaled by 1/(1 + k)
    ref = conditional_covariance(derive(params(omega=200.0, n_th=100.0, c=300.0, eta=0.8 / (1 + k))))
    assert cov.v_qq == pytest.approx(ref.v_qq, rel=1e-8)
    assert cov.v_pp == pytest.approx(ref.v_pp, rel=1e-8)
    assert cov.c_qp == pytest.approx(ref.c_qp, rel=1e-8)


def test_zero_excess_is_clean():
    d = derive(params())
    zero = ExcessNoiseModel(lambda w: np.zeros_like(w), "zero")
    cov = excess_conditional_covariance(d, zero)
    ref = conditional_covariance(d)
    assert (cov.v_qq, cov.v_pp, cov.c_qp) == pytest.approx((ref.v_qq, ref.v_pp, ref.c_qp), rel=1e-12)
    w = np.linspace(-100, 100, 21)
    assert np.allclose(excess_position_filter(d, zero, w), position_filter(d)(w), rtol=1e-9)


def test_excess_raises_variance():
    d = derive(params())
    clean = conditional_covariance(d)
    for model in (ExcessNoiseModel.pink(d.omega, 1.0, 0.1), ExcessNoiseModel.white(0.2),
                  ExcessNoiseModel.lorentzian(5.0, 3.0)):
        noisy = excess_conditional_covariance(d, model)
        assert noisy.v_qq > clean.v_qq and noisy.v_pp > clean.v_pp
        assert noisy.det >= clean.det


def test_excess_filter_matches_rational_synthesis():
    # a Lorentzian excess keeps S_YY rational, so the exact Wiener filter and its
    # error variance are available in closed form
    from mechsqueeze.wiener import error_variance, mechanical_spectrum
    for p, level, width in ((params(), 20.0, 4.0), (params(omega=300.0, n_th=1e3, c=2e3, eta=0.4), 100.0, 30.0)):
        d = derive(p)
        model = ExcessNoiseModel.lorentzian(level, width)
        syy = measured_spectrum(d, model)
        exact = wiener_from_spectra(cross_spectrum(d), syy)
        probe = np.array([-3 * d.omega, -d.omega, -0.3 * width, 0.0, 0.1, width, 0.99 * d.omega, 5 * d.omega])
        semi = excess_position_filter(d, model, probe)
        assert np.max(np.abs(semi - exact(probe))) < 1e-8 * np.max(np.abs(exact(probe)))
        v = error_variance(exact, mechanical_spectrum(d), cross_spectrum(d), syy)
        assert v == pytest.approx(excess_conditional_covariance(d, model).v_qq, rel=1e-7)


def test_pink_excess_filter_against_table():
    # the |w| cusp of the pink model limits the FFT route to ~1e-4
    d = derive(params())
    model = ExcessNoiseModel.pink(d.omega, 1.0, 0.5)
    g = default_grid(d, points=2**16)
    tab = wiener_from_spectra(SpectrumTable(g, cross_spectrum(d)(g)), measured_spectrum(d, model, g))
    probe = np.array([-60.0, -21.0, -3.0, 0.0, 0.7, 5.0, 19.5, 20.0, 40.0, 150.0])
    semi = excess_position_filter(d, model, probe)
    assert np.max(np.abs(semi - tab(probe))) < 5e-4 * np.max(np.abs(position_filter(d)(probe)))


def test_pink_low_frequency_suppression_at_694_khz():
    omega = 2 * math.pi * 694e3
    n_th = thermal_occupancy(omega, 300.0)
    p = OscillatorParams(omega=omega, gamma=omega / 1e5, eta=0.5, n_th=n_th, c=2.5e5)
    d = derive(p)
    model = ExcessNoiseModel.pink(omega)
    w = np.concatenate([-np.geomspace(1.0, 0.099 * omega, 12), np.geomspace(1e-2, 0.099 * omega, 24)])
    noisy = np.abs(excess_position_filter(d, model, w))
    clean = np.abs(position_filter(d)(w))
    assert np.all(noisy < clean)
    # strongest suppression where the pink noise dominates
    ratio = noisy / clean
    assert ratio[w > 0][0] < 0.2


def test_threshold_ordering_and_clean_crossing():
    q, n_th, eta = 1e3, 1e5, 0.5
    clean = clean_squeezing_crossing(q, n_th, eta)
    d = derive(params(omega=q, n_th=n_th, eta=eta, c=clean))
    assert conditional_covariance(d).v_min == pytest.approx(1.0, abs=1e-9)
    p = params(omega=q, n_th=n_th, eta=eta, c=1.0)
    noisy = excess_squeezing_threshold(p, ExcessNoiseModel.white(0.5))
    assert noisy > clean
    # white excess = reduced efficiency, so the crossing matches the clean one at eta / 1.5
    assert noisy == pytest.approx(clean_squeezing_crossing(q, n_th, eta / 1.5), rel=1e-5)
    assert excess_squeezing_threshold(p, ExcessNoiseModel.white(0.0)) == pytest.approx(clean, rel=1e-6)


def test_needs_measurement():
    d = derive(params(c=0.0))
    with pytest.raises(ValueError):
        excess_conditional_covariance(d, ExcessNoiseModel.white(1.0))
    with pytest.raises(ValueError):
        excess_position_filter(d, ExcessNoiseModel.white(1.0), 1.0)


# noise models --------------------------------------------------------------------

def test_pink_levels_at_694_khz():
    omega = 2 * math.pi * 694e3
    pink = ExcessNoiseModel.pink(omega)
    assert pink.dc_level_db() == pytest.approx(10 * math.log10(0.1 * omega / 0.1), rel=1e-12)
    assert pink.dc_level_db() == pytest.approx(66.4, abs=0.05)
    assert pink.unity_crossing() / (2 * math.pi) == pytest.approx((0.1 * omega - 0.1) / (2 * math.pi), rel=1e-9)
    assert pink.unity_crossing() / (2 * math.pi) == pytest.approx(69.4e3, rel=1e-3)
    assert pink(np.array([-5.0]))[0] == pink(np.array([5.0]))[0]


def test_models_without_crossing():
    assert ExcessNoiseModel.white(0.5).unity_crossing() is None
    assert ExcessNoiseModel.white(2.0).unity_crossing() is None


def test_model_validation():
    with pytest.raises(ValueError):
        ExcessNoiseModel.pink(-1.0)
    with pytest.raises(ValueError):
        ExcessNoiseModel.pink(1.0, offset=0.0)
    with pytest.raises(ValueError):
        ExcessNoiseModel.white(-1.0)
    with pytest.raises(ValueError):
        ExcessNoiseModel.lorentzian(1.0, 0.0)
    with pytest.raises(ValueError):
        ExcessNoiseModel(lambda w: -np.ones_like(w))(np.array([1.0]))
    with pytest.raises(ValueError):
        ExcessNoiseModel.from_table([1.0], [1.0])
    with pytest.raises(ValueError):
        ExcessNoiseModel.from_table([1.0, -1.0], [1.0, 2.0])
    with pytest.raises(ValueError):
        ExcessNoiseModel.from_table([0.0, 1.0], [1.0, np.inf])


def test_table_model_and_csv(tmp_path):
    w = np.linspace(0, 100, 11)
    model = ExcessNoiseModel.from_table(w, 5.0 / (1 + w))
    assert model(np.array([-50.0]))[0] == pytest.approx(5.0 / 51)
    assert model(np.array([1e4]))[0] == pytest.approx(5.0 / 101)
    g = frequency_grid(22, 10.0)
    table = SpectrumTable(g, 5.0 / (1 + np.abs(g)))
    path = tmp_path / "noise.csv"
    write_table_csv(table, path, {"label": "bench"})
    read = ExcessNoiseModel.from_csv(path)
    assert read.label == "bench"
    assert read(np.array([30.0]))[0] == pytest.approx(5.0 / 31)
    bad = tmp_path / "bad.csv"
    bad.write_text("omega_rad_s,re,im\n0,1,1\n1,1,1\n")
    with pytest.raises(ValueError):
        ExcessNoiseModel.from_csv(bad)
