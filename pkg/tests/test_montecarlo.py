import csv
import hashlib
import json
import math

import numpy as np
import pytest

from mechsqueeze.conditional import conditional_covariance
from mechsqueeze.params import OscillatorParams, derive
from mechsqueeze.riccati import build_full_model, unconditional_covariance
from mechsqueeze.montecarlo import (
    ErrorStatistics,
    MeasurementRecord,
    SimulationConfig,
    SimulationInstabilityError,
    _check_stationarity,
    apply_filter,
    config_hash,
    error_statistics,
    run_filter_check,
    sampled_excess_filter,
    simulate,
    write_record_csv,
    write_statistics_csv,
)
from mechsqueeze.wiener import (
    ExcessNoiseModel,
    FilterResponse,
    ImpulseResponse,
    RationalSpectrum,
    momentum_filter,
    position_filter,
)


def make(omega=5.0, gamma=1.0, eta=1.0, n_th=2.0, c=3.0):
    return derive(OscillatorParams(omega=omega, gamma=gamma, eta=eta, n_th=n_th, c=c))


def within(stat, se, target, k=3.0):
    return abs(stat - target) <= k * se


def raw_moments(record, d):
    """Statistics of the latent state itself (zero estimate)."""
    zero = np.zeros_like(record.q_true)
    return error_statistics(record, zero, zero, gamma_prime=d.gamma_prime)


# configuration ----------------------------------------------------------------------

def test_default_config_meets_invariants():
    d = make()
    cfg = SimulationConfig.for_params(d)
    cfg.validate(d)
    assert cfg.dt <= min(2 * math.pi / d.omega_prime, 1 / d.gamma_prime) / 20
    assert math.exp(-d.gamma_prime * cfg.filter_truncation / 2) < 1e-4
    assert cfg.burn_in >= 10 / d.gamma_prime and cfg.burn_in >= 10 / d.gamma
    assert cfg.discard_steps * cfg.dt >= cfg.burn_in + cfg.filter_truncation


@pytest.mark.parametrize("change, word", [
    (dict(dt_fraction=1.01), "dt"),
    (dict(burn_in=0.5), "burn_in"),
    (dict(filter_truncation=0.1), "filter_truncation"),
])
def test_config_violations_named(change, word):
    d = make()
    base = SimulationConfig.for_params(d, dt_fraction=change.pop("dt_fraction", 1.0))
    cfg = SimulationConfig(**{**base.as_dict(), **change})
    with pytest.raises(ValueError, match=word):
        cfg.validate(d)


@pytest.mark.parametrize("kw", [
    dict(dt=0.0), dict(duration=-1.0), dict(burn_in=math.nan), dict(trajectories=0),
    dict(trajectories=1.5), dict(seed=-1), dict(seed=2**64),
])
def test_config_field_validation(kw):
    good = dict(dt=1e-3, duration=1.0, burn_in=1.0, trajectories=2, seed=0, filter_truncation=1.0)
    with pytest.raises(ValueError):
        SimulationConfig(**{**good, **kw})


def test_record_shapes_checked():
    with pytest.raises(ValueError):
        MeasurementRecord(np.zeros((1, 3)), np.zeros((1, 3)), np.zeros((1, 2)), 0.1, 0)


def test_statistics_validation():
    with pytest.raises(ArithmeticError):
        ErrorStatistics(1.0, 1.0, 0.0, 0.1, 0.0, 0.1, 10, 10)
    with pytest.raises(ArithmeticError):
        ErrorStatistics(math.inf, 1.0, 0.0, 0.1, 0.1, 0.1, 10, 10)


def test_unstable_discretisation_detected():
    p0 = np.eye(2)
    with pytest.raises(SimulationInstabilityError):
        _check_stationarity(1.02 * np.eye(2), np.zeros((2, 2)), p0)
    _check_stationarity(np.zeros((2, 2)), p0, p0)


# simulation --------------------------------------------------------------------------

def test_same_seed_bit_identical_and_counter_seeding():
    d = make()
    cfg = SimulationConfig.for_params(d, trajectories=3, duration=20.0, seed=12345)
    a, b = simulate(d, cfg), simulate(d, cfg)
    assert np.array_equal(a.y_samples, b.y_samples) and np.array_equal(a.q_true, b.q_true)
    # trajectory k depends only on seed ^ k, not on the ensemble size
    one = simulate(d, SimulationConfig(**{**cfg.as_dict(), "trajectories": 1}))
    assert np.array_equal(one.y_samples[0], a.y_samples[0])
    other = simulate(d, SimulationConfig(**{**cfg.as_dict(), "seed": 12346}))
    assert not np.array_equal(other.y_samples, a.y_samples)


def test_thermal_equilibrium_without_measurement():
    d = make(n_th=5.0, c=0.0)
    cfg = SimulationConfig.for_params(d, trajectories=16, duration=400.0)
    s = raw_moments(simulate(d, cfg), d)
    assert within(s.v_qq, s.se_qq, 2 * 5.0 + 1)
    assert within(s.v_pp, s.se_pp, 2 * 5.0 + 1)
    assert within(s.c_qp, s.se_qp, 0.0)


@pytest.mark.parametrize("kw", [dict(), dict(omega=30.0, n_th=50.0, c=10.0), dict(omega=2.0, gamma=0.5, c=40.0)])
def test_unconditional_moments_match_lyapunov(kw):
    d = make(**kw)
    ref = unconditional_covariance(build_full_model(d))
    s = raw_moments(simulate(d, SimulationConfig.for_params(d, trajectories=16, duration=300.0)), d)
    assert within(s.v_qq, s.se_qq, ref[0, 0])
    assert within(s.v_pp, s.se_pp, ref[1, 1])
    assert within(s.c_qp, s.se_qp, ref[0, 1])


def test_shot_noise_floor():
    d = make(c=1e-10)
    cfg = SimulationConfig.for_params(d, trajectories=8, duration=200.0)
    r = simulate(d, cfg)
    y = r.y_samples[:, cfg.discard_steps:]
    assert np.var(y) * cfg.dt == pytest.approx(1.0, abs=4 * math.sqrt(2.0 / y.size))


def test_record_mean_follows_position():
    # regress the record on the mid-interval position: slope = record gain
    d = make(c=20.0)
    cfg = SimulationConfig.for_params(d, trajectories=4, duration=200.0)
    r = simulate(d, cfg)
    q_mid = 0.5 * (r.q_true[:, :-1] + r.q_true[:, 1:])
    slope = np.sum(q_mid * r.y_samples[:, :-1]) / np.sum(q_mid * q_mid)
    assert slope == pytest.approx(d.record_gain, rel=0.02)


# filtering ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def benchmark():
    d = make(omega=50.0, n_th=100.0, c=500.0)
    cfg = SimulationConfig.for_params(d, trajectories=64, seed=7)
    record = simulate(d, cfg)
    return d, record


def test_zero_filter_gives_zero_estimate(benchmark):
    _, record = benchmark
    zero = FilterResponse(rational=RationalSpectrum.constant(0.0))
    assert not np.any(apply_filter(record, zero))


def test_delta_filter_is_scaled_last_sample_and_suboptimal(benchmark):
    d, record = benchmark
    delta = FilterResponse(rational=RationalSpectrum.constant(1.0 / d.record_gain))
    est = apply_filter(record, delta)
    assert np.allclose(est[:, 1:], record.y_samples[:, :-1] / d.record_gain, rtol=1e-15, atol=0)
    assert not np.any(est[:, 0])
    s = error_statistics(record, est, apply_filter(record, momentum_filter(d)))
    assert s.v_qq > 10 * conditional_covariance(d).v_qq
    with pytest.raises(ValueError):
        apply_filter(record, FilterResponse(rational=RationalSpectrum.constant(1j)))


def test_dt_mismatch_rejected(benchmark):
    d, record = benchmark
    h = position_filter(d).impulse_response(2 * record.dt, 1.0)
    with pytest.raises(ValueError, match="dt"):
        apply_filter(record, h)
    with pytest.raises(ValueError):
        apply_filter(record, ImpulseResponse(record.dt, np.ones(1)))


def test_filter_is_causal(benchmark):
    d, record = benchmark
    # changing the record at and after sample k leaves estimates up to k untouched
    k = record.y_samples.shape[1] // 2
    altered = MeasurementRecord(record.y_samples.copy(), record.q_true, record.p_true, record.dt,
                                record.seed, record.config, record.metadata)
    altered.y_samples[:, k:] = 0.0
    a = apply_filter(record, position_filter(d))
    b = apply_filter(altered, position_filter(d))
    # FFT convolution: equal up to rounding of the full-record transform
    assert np.max(np.abs(a[:, : k + 1] - b[:, : k + 1])) < 1e-9 * np.max(np.abs(a))
    assert np.max(np.abs(a[:, k + 2:] - b[:, k + 2:])) > 1.0


def test_optimal_filters_reach_conditional_covariance(benchmark):
    d, record = benchmark
    s = error_statistics(record, apply_filter(record, position_filter(d)),
                         apply_filter(record, momentum_filter(d)))
    ref = conditional_covariance(d)
    assert within(s.v_qq, s.se_qq, ref.v_qq)
    assert within(s.v_pp, s.se_pp, ref.v_pp)
    assert within(s.c_qp, s.se_qp, ref.c_qp)
    assert s.c_qp > 0 and ref.c_qp > 0
    assert abs(s.v_qq / ref.v_qq - 1) < 0.05


def perturbed(rational, rng, size=0.15):
    """A real-kernel variant: scaled gain, zero and pole coordinates."""
    e = rng.uniform(-size, size, 4)
    poles = rational.poles.real * (1 + e[2]) + 1j * rational.poles.imag * (1 + e[3])
    return FilterResponse(rational=RationalSpectrum(rational.zeros * (1 + e[1]), poles,
                                                    rational.gain * (1 + e[0])))


def test_optimal_beats_perturbed_variants(benchmark):
    d, record = benchmark
    best = position_filter(d)
    p_est = np.zeros_like(record.q_true)
    opt = error_statistics(record, apply_filter(record, best), p_est)
    rng = np.random.default_rng(2024)
    for _ in range(20):
        s = error_statistics(record, apply_filter(record, perturbed(best.rational, rng)), p_est)
        assert opt.v_qq <= s.v_qq + 2 * s.se_qq


def test_standard_error_clt_scaling():
    d = make()
    stats = []
    for n in (16, 64):
        cfg = SimulationConfig.for_params(d, trajectories=n, duration=200.0, seed=3)
        stats.append(run_filter_check(d, cfg))
    # four times the data halves the standard error
    assert stats[0].se_qq / stats[1].se_qq == pytest.approx(2.0, rel=0.2)
    assert stats[0].se_pp / stats[1].se_pp == pytest.approx(2.0, rel=0.2)


def test_run_is_deterministic():
    d = make()
    cfg = SimulationConfig.for_params(d, trajectories=4, duration=100.0, seed=99)
    assert run_filter_check(d, cfg) == run_filter_check(d, cfg)


def test_too_few_blocks_rejected():
    d = make()
    cfg = SimulationConfig.for_params(d, trajectories=1, duration=50.0)
    r = simulate(d, cfg)
    with pytest.raises(ValueError, match="blocks"):
        error_statistics(r, r.q_true, r.p_true)
    bare = MeasurementRecord(r.y_samples, r.q_true, r.p_true, r.dt, r.seed)
    with pytest.raises(ValueError):
        error_statistics(bare, r.q_true, r.p_true)


@pytest.mark.slow
def test_excess_aware_filter_beats_clean_filter_under_pink_noise():
    d = make(omega=5.0, n_th=2.0, c=3.0)
    pink = ExcessNoiseModel.pink(d.omega, level=1.0)
    cfg = SimulationConfig.for_params(d, trajectories=32, duration=400.0, seed=5)
    record = simulate(d, cfg, excess=pink)
    zero = np.zeros_like(record.q_true)
    aware = error_statistics(record, apply_filter(record, sampled_excess_filter(d, pink, cfg.dt)), zero)
    clean = error_statistics(record, apply_filter(record, position_filter(d)), zero)
    assert aware.v_qq + 2 * aware.se_qq < clean.v_qq - 2 * clean.se_qq
    assert aware.v_qq > conditional_covariance(d).v_qq


# serialisation -----------------------------------------------------------------------

def test_config_hash_is_git_blob_of_canonical_json():
    doc = {"b": 1.5, "a": [1, 2]}
    body = b'[{"a":[1,2],"b":1.5}]'
    assert config_hash(doc) == hashlib.sha1(b"blob %d\0" % len(body) + body).hexdigest()
    assert config_hash({"a": [1, 2], "b": 1.5}) == config_hash(doc)
    assert config_hash({"a": 1}) != config_hash({"a": 2})


def read_with_header(path):
    meta, rows = {}, []
    with open(path) as fh:
        lines = fh.read().splitlines()
    for line in lines:
        if line.startswith("# "):
            key, value = line[2:].split(": ", 1)
            meta[key] = value
    rows = list(csv.reader(line for line in lines if not line.startswith("#")))
    return meta, rows


def test_record_and_statistics_csv(tmp_path):
    d = make()
    cfg = SimulationConfig.for_params(d, trajectories=2, duration=100.0, seed=11)
    r = simulate(d, cfg)
    write_record_csv(r, tmp_path / "rec.csv", trajectory=1)
    meta, rows = read_with_header(tmp_path / "rec.csv")
    assert rows[0] == ["t_s", "y", "q", "p"]
    assert len(rows) == r.y_samples.shape[1] + 1
    assert float(rows[5][1]) == r.y_samples[1, 4]
    assert json.loads(meta["seed"]) == 11 and len(meta["config_hash"]) == 40
    assert json.loads(meta["config"])["seed"] == 11

    s = run_filter_check(d, cfg)
    write_statistics_csv(s, tmp_path / "stats.csv", {"params": d.as_dict()})
    meta, rows = read_with_header(tmp_path / "stats.csv")
    assert rows[0] == ["quantity", "estimate", "standard_error"]
    assert float(rows[1][1]) == s.v_qq and float(rows[3][2]) == s.se_qp
    assert meta["config_hash"] == config_hash({"params": d.as_dict()})
