import math
from datetime import date

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import multivariate_normal

from harvestopt.core import DomainError
from harvestopt.forecast import (GduForecast, GduHistory, GPModel, KernelParams, SearchConfig,
                                 _sin2, fit_gpr, kernel_matrix, log_marginal_likelihood,
                                 naive_forecast, noleap_dates, predict_forecast,
                                 residual_diagnostics, sample_accumulation, year_time)

UNIT = KernelParams(1.0, 1.0, 1.0, 1.0, 1.0)


def history_from(fn, start_year, n_years, site=0):
    days = noleap_dates(date(start_year, 1, 1), 365 * n_years)
    return GduHistory(site, tuple(days), np.array([fn(year_time(d)) for d in days]))


def dense_lml(params, t, y):
    K = kernel_matrix(params, t, t, 0.5 * (t.min() + t.max()), add_noise=True)
    return multivariate_normal(mean=np.zeros(len(t)), cov=K).logpdf(y)


def test_year_time_is_shift_exact():
    assert year_time(date(2001, 3, 1)) - year_time(date(2000, 3, 1)) == 1.0
    assert year_time(date(2000, 1, 1)) == 0.0
    assert year_time(date(2000, 12, 31)) == 364 / 365


def test_history_drops_leap_days():
    obs = [(date(2012, 2, 28), 1.0), (date(2012, 2, 29), 2.0), (date(2012, 3, 1), 3.0)]
    h = GduHistory.from_observations(0, obs)
    assert h.dropped_leap_days == 1
    assert list(h.values) == [1.0, 3.0]
    with pytest.raises(DomainError):
        GduHistory(0, (date(2012, 2, 29),), np.array([1.0]))


def test_one_point_lml_closed_forms():
    # prior variance at t = center is periodic + bias + noise, linear term vanishes
    p = KernelParams(0.5, 1.0, 3.0, 0.25, 0.25)
    m = GPModel(p, [0.3], [0.0])
    assert m.log_marginal_likelihood() == pytest.approx(-0.5 * math.log(2 * math.pi), abs=1e-12)
    p = KernelParams(0.5, 1.0, 3.0, 0.25, 0.25)
    m = GPModel(p, [7.0], [1.0])
    assert m.log_marginal_likelihood() == pytest.approx(-0.5 * (1 + math.log(2 * math.pi)),
                                                         abs=1e-12)


def test_two_identical_observations_lml():
    t = np.array([0.0, 0.25])
    y = np.array([2.0, 2.0])
    m = GPModel(UNIT, t, y)
    K = np.empty((2, 2))
    c = 0.125
    for a in range(2):
        for b in range(2):
            K[a, b] = (math.exp(-2 * math.sin(math.pi * (t[a] - t[b])) ** 2)
                       + (t[a] - c) * (t[b] - c) + 1.0 + (a == b))
    det = K[0, 0] * K[1, 1] - K[0, 1] ** 2
    inv = np.array([[K[1, 1], -K[0, 1]], [-K[1, 0], K[0, 0]]]) / det
    expected = -0.5 * y @ inv @ y - 0.5 * math.log(det) - math.log(2 * math.pi)
    assert m.log_marginal_likelihood() == pytest.approx(expected, abs=1e-12)


@given(st.integers(2, 50), st.integers(0, 2**32 - 1))
def test_lml_matches_dense_density(n, seed):
    rng = np.random.default_rng(seed)
    t = np.sort(rng.uniform(0.0, 4.0, n))
    y = rng.normal(10.0, 5.0, n)
    p = KernelParams.from_log(rng.uniform(-2, 2, 5))
    m = GPModel(p, t, y)
    assert m.log_marginal_likelihood() == pytest.approx(dense_lml(p, t, y), abs=1e-6)


def test_lml_on_other_history_uses_that_history():
    hist = history_from(lambda t: 10 + 5 * math.sin(2 * math.pi * t), 2009, 1)
    other = history_from(lambda t: 3.0, 2012, 1)
    m = GPModel.from_history(hist, UNIT, stride=20)
    t = other.times()[::20]
    y = np.asarray(other.values)[::20]
    assert log_marginal_likelihood(m, other) == pytest.approx(dense_lml(UNIT, t, y), abs=1e-6)
    assert log_marginal_likelihood(m) == m.lml


def test_larger_noise_lowers_lml_of_interpolated_data():
    t = np.linspace(0.0, 2.0, 40, endpoint=False)
    y = 4.0 * np.sin(2 * np.pi * t) + 5.0
    base = dict(periodic_variance=16.0, periodic_lengthscale=1.0, linear_variance=1e-3,
                bias_variance=25.0)
    lml = [GPModel(KernelParams(**base, noise_variance=nv), t, y).lml
           for nv in (1e-6, 1e-3, 1e-1, 1.0)]
    assert all(a > b for a, b in zip(lml, lml[1:]))


def test_fit_periodic_signal_prefers_periodic_kernel():
    hist = history_from(lambda t: 10.0 * math.sin(math.pi * t) ** 2, 2009, 3)
    m = fit_gpr(hist, SearchConfig(stride=7, n_starts=3, seed=1))
    assert m.params.periodic_variance > 10 * m.params.linear_variance


def test_fit_constant_history():
    hist = history_from(lambda t: 7.5, 2009, 2)
    m = fit_gpr(hist, SearchConfig(stride=10, n_starts=2))
    mean, _ = m.predict(np.linspace(2008.0 - 2000, 2013.0 - 2000, 200))
    assert np.max(np.abs(mean - 7.5)) <= 1e-3


def test_fit_rejects_tiny_history():
    hist = GduHistory(0, (date(2010, 1, 1),), np.array([1.0]))
    with pytest.raises(DomainError):
        fit_gpr(hist)


def test_noiseless_interpolation_and_residuals():
    hist = history_from(lambda t: 10 + 6 * math.sin(2 * math.pi * t), 2009, 2)
    p = KernelParams(36.0, 1.0, 1e-4, 100.0, 1e-8)
    m = GPModel.from_history(hist, p, stride=9)
    mean, _ = m.predict(m.t, include_noise=False)
    assert np.max(np.abs(mean - m.y)) <= 3 * 1e-6
    res = residual_diagnostics(m)
    assert max(abs(r.residual) for r in res) <= 1e-6


def test_white_noise_posterior_std():
    # periodic and linear parts negligible: the model is bias plus white noise, and
    # the posterior variance of the shared bias has a closed form
    bias, noise = 2.0, 0.5
    p = KernelParams(1e-12, 1.0, 1e-12, bias, noise)
    t = np.linspace(0.0, 1.0, 10)
    m = GPModel(p, t, np.ones(10))
    _, std = m.predict(np.array([3.0, 5.5]))
    n = len(t)
    expected = math.sqrt(bias + noise - n * bias ** 2 / (noise + n * bias))
    assert std == pytest.approx([expected, expected], rel=1e-6)
    # with no conditioning data the prior value is recovered
    assert expected < math.sqrt(noise + bias)
    _, std0 = GPModel(p, [100.0], [0.0]).predict(np.array([100.0 + 1e-9]))
    prior1 = bias + noise - bias ** 2 / (bias + noise)
    assert std0[0] == pytest.approx(math.sqrt(prior1), rel=1e-6)


def test_predictive_std_floor():
    rng = np.random.default_rng(0)
    t = np.sort(rng.uniform(0, 3, 60))
    p = KernelParams(4.0, 0.8, 0.3, 2.0, 0.2)
    m = GPModel(p, t, rng.normal(size=60))
    _, std = m.predict(np.linspace(-1, 5, 300))
    assert np.all(std >= math.sqrt(0.2) - 1e-12)


def test_periodic_gram_translation_invariant():
    days = noleap_dates(date(2010, 1, 1), 400)
    t = np.array([year_time(d) for d in days])
    shifted = np.array([year_time(d.replace(year=d.year + 1)) for d in days])
    assert np.all(shifted - t == 1.0)
    assert np.allclose(_sin2(t, t), _sin2(shifted, shifted), rtol=0, atol=1e-12)


def test_extrapolation_quality():
    rng = np.random.default_rng(4)
    sigma = 1.0
    signal = lambda t: 8 * math.sin(2 * math.pi * t) + 0.4 * t + 12
    days = noleap_dates(date(2011, 1, 1), 365 * 4)
    hist = GduHistory(0, tuple(days), np.array([signal(year_time(d)) for d in days])
                      + rng.normal(0, sigma, len(days)))
    m = fit_gpr(hist, SearchConfig(stride=6, n_starts=2, seed=0))
    fc = predict_forecast(m, date(2015, 1, 1), 365)
    truth = np.array([signal(year_time(d)) for d in fc.dates()])
    assert math.sqrt(np.mean((fc.mean - truth) ** 2)) <= 1.5 * sigma
    res = residual_diagnostics(m)
    inside = np.mean([abs(r.residual) <= 2 * r.std for r in res])
    assert inside >= 0.9
    assert abs(np.mean([r.residual for r in res])) <= 0.1 * sigma


def test_predict_rejects_empty_horizon():
    m = GPModel(UNIT, [0.0, 0.5], [1.0, 2.0])
    with pytest.raises(DomainError):
        predict_forecast(m, date(2020, 1, 1), 0)


def test_forecast_skips_feb_29():
    m = GPModel(UNIT, [0.0, 0.5], [1.0, 2.0])
    fc = predict_forecast(m, date(2020, 2, 1), 60)
    assert all(not (d.month == 2 and d.day == 29) for d in fc.dates())
    assert fc.d_max == 60


def _two_year_history(jan2):
    obs = []
    for k, year in enumerate((2017, 2018)):
        for d in noleap_dates(date(year, 1, 1), 365):
            v = 5.0 if (d.month, d.day) == (1, 1) else 3.0
            if (d.month, d.day) == (1, 2):
                v = jan2[k]
            obs.append((d, v))
    return GduHistory.from_observations(0, obs)


def test_naive_forecast_examples():
    fc = naive_forecast(_two_year_history((4.0, 6.0)), date(2020, 1, 1), 366)
    assert fc.mean[0] == 5.0 and fc.std[0] == 0.0
    assert fc.mean[1] == 5.0 and fc.std[1] == 1.0 * math.sqrt(2)
    assert all(not (d.month == 2 and d.day == 29) for d in fc.dates())
    assert fc.dates()[59] == date(2020, 3, 1)


def test_naive_forecast_sample_std_hand_value():
    # {4, 6}: mean 5, deviations +-1, n-1 denominator gives variance 2
    fc = naive_forecast(_two_year_history((4.0, 6.0)), date(2021, 1, 2), 1)
    assert fc.std[0] == pytest.approx(np.std([4.0, 6.0], ddof=1))
    fc = naive_forecast(_two_year_history((4.5, 5.5)), date(2021, 1, 2), 1)
    assert fc.mean[0] == 5.0
    assert fc.std[0] == pytest.approx(math.sqrt(0.5))


def test_naive_forecast_needs_two_years():
    days = noleap_dates(date(2018, 1, 1), 365)
    hist = GduHistory(0, tuple(days), np.ones(365))
    with pytest.raises(DomainError):
        naive_forecast(hist, date(2020, 1, 1), 10)


def test_sample_accumulation_degenerate():
    fc = GduForecast(date(2020, 1, 1), np.array([-1.0, 0.0, 4.0]), np.zeros(3))
    assert list(sample_accumulation(fc, 0)) == [0.0, 0.0, 4.0]
    neg = GduForecast(date(2020, 1, 1), np.full(10, -5.0), np.zeros(10))
    assert np.all(sample_accumulation(neg, 1) == 0.0)


def test_sample_accumulation_moments_and_determinism():
    fc = GduForecast(date(2020, 1, 1), np.full(10**4, 10.0), np.full(10**4, 2.0))
    a = sample_accumulation(fc, np.random.default_rng(8))
    b = sample_accumulation(fc, np.random.default_rng(8))
    assert np.array_equal(a, b)
    assert abs(a.mean() - 10.0) <= 0.1
    assert np.all(a >= 0)


def test_forecast_validation():
    with pytest.raises(DomainError):
        GduForecast(date(2020, 1, 1), np.zeros(3), np.array([1.0, -1.0, 0.0]))
    with pytest.raises(DomainError):
        KernelParams(1.0, 0.0, 1.0, 1.0, 1.0)
