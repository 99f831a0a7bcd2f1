import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from mechsqueeze.conditional import ModelValidityWarning, conditional_covariance, rwa_baseline
from mechsqueeze.params import OscillatorParams, derive
from mechsqueeze.riccati import (
    RiccatiConvergenceError,
    StateSpaceModel,
    build_full_model,
    build_rwa_model,
    riccati_residual,
    steady_state,
    unconditional_covariance,
)


def make(omega=100.0, gamma=1.0, eta=1.0, n_th=10.0, c=1.0):
    return derive(OscillatorParams(omega=omega, gamma=gamma, eta=eta, n_th=n_th, c=c))


params = dict(
    q=st.floats(0.0, 7.0).map(lambda x: 10.0**x),
    n_th=st.floats(-3.0, 9.0).map(lambda x: 10.0**x) | st.just(0.0),
    eta=st.floats(-2.0, 0.0).map(lambda x: 10.0**x),
    c=st.floats(-3.0, 9.0).map(lambda x: 10.0**x),
)


def test_vacuum_diffusion():
    m = build_full_model(make(n_th=0.0, c=0.0))
    assert m.diffusion[1, 1] == 2.0
    assert np.count_nonzero(m.diffusion) == 1


@settings(max_examples=100, deadline=None)
@given(**params)
def test_diffusion_is_two_n_tot(q, n_th, eta, c):
    d = make(omega=q, n_th=n_th, eta=eta, c=c)
    assert build_full_model(d).diffusion[1, 1] / (2 * d.gamma) == pytest.approx(2 * d.n_tot, rel=1e-15)


def test_unconditional_variance_against_spectrum():
    d = make(omega=20.0, n_th=3.0, c=2.0)
    v = unconditional_covariance(build_full_model(d))
    assert v[0, 0] == pytest.approx(2 * 3.0 + 1 + 2 * 2.0, rel=1e-12)
    assert v[1, 1] == pytest.approx(v[0, 0], rel=1e-12)
    assert abs(v[0, 1]) < 1e-12
    # <q^2> = int S_qq dω / 2π over the real line
    def s(w):
        return 4 * d.gamma * d.omega**2 * d.n_tot / abs(d.omega**2 - w * w - 1j * d.gamma * w) ** 2

    total = sum(integrate.quad(s, a, b, limit=400)[0] for a, b in ((0, 19), (19, 21), (21, np.inf)))
    assert 2 * total / (2 * math.pi) == pytest.approx(v[0, 0], rel=1e-7)


def test_rwa_model_is_isotropic_and_matches_baseline():
    for n_th, c, eta in ((10.0, 3.0, 1.0), (1e4, 1e2, 0.25), (0.0, 1e5, 0.5)):
        d = make(omega=1e6, n_th=n_th, eta=eta, c=c)
        v = steady_state(build_rwa_model(d))
        assert v.c_qp == 0.0 or abs(v.c_qp) < 1e-12 * v.v_qq
        assert v.v_qq == pytest.approx(v.v_pp, rel=1e-12)
        assert v.v_qq == pytest.approx(rwa_baseline(d), rel=1e-9)


def test_rwa_model_weak_measurement():
    d = make(omega=1e6, n_th=42.0, c=1e-12)
    assert steady_state(build_rwa_model(d)).v_qq == pytest.approx(85.0, rel=1e-9)


@settings(max_examples=300, deadline=None)
@given(**params)
def test_oracle_equivalence(q, n_th, eta, c):
    d = make(omega=q, n_th=n_th, eta=eta, c=c)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ModelValidityWarning)
        cov = conditional_covariance(d)
    ss = steady_state(build_full_model(d))
    assert ss.v_qq == pytest.approx(cov.v_qq, rel=1e-9)
    assert ss.v_pp == pytest.approx(cov.v_pp, rel=1e-9)
    assert ss.c_qp == pytest.approx(cov.c_qp, rel=1e-9)
    # drift entries of size Q * V cancel in the residual; measured floor ~5e-17 * Q
    assert ss.residual < 1e-14 * max(q, 1.0)


@settings(max_examples=150, deadline=None)
@given(**params)
def test_newton_and_bisection_agree(q, n_th, eta, c):
    m = build_full_model(make(omega=q, n_th=n_th, eta=eta, c=c))
    a = steady_state(m, method="newton")
    b = steady_state(m, method="bisection")
    assert np.allclose(a.matrix, b.matrix, rtol=1e-9, atol=0.0)


def test_generic_care_path_agrees():
    # identical oscillator written with a zero-gain extra record row forces the CARE path
    d = make(omega=30.0, n_th=50.0, c=40.0)
    m = build_full_model(d)
    two_rows = StateSpaceModel(m.drift, m.diffusion, np.vstack([m.measurement_rows, [0.0, 1e-300]]))
    a = steady_state(m)
    b = steady_state(two_rows)
    assert b.method == "care"
    assert np.allclose(a.matrix, b.matrix, rtol=1e-9)


def test_correlated_noise_model_solves():
    d = make(omega=5.0, n_th=2.0, c=1.0)
    m = build_full_model(d)
    corr = StateSpaceModel(m.drift, m.diffusion, m.measurement_rows, 1.0, np.array([[0.0, 0.3]]))
    v = steady_state(corr)
    assert v.residual < 1e-10
    assert np.all(np.linalg.eigvalsh(v.matrix) > 0)


def test_heisenberg_at_high_temperature():
    for q, n_th, c in ((1e5, 9e6, 1e3), (1e3, 1e6, 1e8), (1e2, 1e4, 1e10)):
        assert steady_state(build_full_model(make(omega=q, n_th=n_th, c=c))).det >= 1 - 1e-9


def test_residual_helper():
    m = build_full_model(make())
    v = steady_state(m).matrix
    assert riccati_residual(m, v) < 1e-12
    assert riccati_residual(m, 1.1 * v) > 1e-3


def test_zero_diffusion_rejected():
    m = StateSpaceModel(np.array([[0.0, 1.0], [-1.0, -1.0]]), np.zeros((2, 2)), np.array([[1.0, 0.0]]))
    with pytest.raises(ValueError):
        steady_state(m)


def test_unknown_method():
    with pytest.raises(ValueError):
        steady_state(build_full_model(make()), method="secant")


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(drift=np.eye(2), diffusion=np.eye(3), measurement_rows=[[1.0, 0.0]]),
        dict(drift=np.eye(2), diffusion=[[1.0, 0.5], [0.0, 1.0]], measurement_rows=[[1.0, 0.0]]),
        dict(drift=np.eye(2), diffusion=-np.eye(2), measurement_rows=[[1.0, 0.0]]),
        dict(drift=np.eye(2), diffusion=np.eye(2), measurement_rows=[[1.0, 0.0]], measurement_noise_psd=0.0),
        dict(drift=np.eye(2), diffusion=np.eye(2), measurement_rows=[[1.0, 0.0]], noise_correlation=[1.0, 0.0, 0.0]),
    ],
)
def test_model_validation(kwargs):
    with pytest.raises(ValueError):
        StateSpaceModel(**kwargs)


def test_convergence_error_is_arithmetic():
    assert issubclass(RiccatiConvergenceError, ArithmeticError)
