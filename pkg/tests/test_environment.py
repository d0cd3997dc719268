import math

import numpy as np
import pytest

from dsagg import environment as env
from dsagg import innovations as innov
from dsagg import processes as proc
from dsagg.errors import ConfigurationError


def spec_point(value=0.5):
    return env.EnvironmentSpec("point_mass", 1, {"value": [value]})


def spec_uniform(low=0.0, high=1.0):
    return env.EnvironmentSpec("uniform", 1, {"low": low, "high": high})


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

def test_point_mass_draw():
    draw = env.sample_environment(spec_point(0.5), 3, seed=1)
    assert draw.values.shape == (3, 1)
    assert (draw.values == 0.5).all()


def test_uniform_mean_within_closed_form_band():
    n = 10**4
    draw = env.sample_environment(spec_uniform(), n, seed=2)
    # Var(U[0,1]) = 1/12, so the sample-mean band is 3/sqrt(12 n)
    assert abs(draw.values.mean() - 0.5) <= 3.0 / math.sqrt(12 * n)


def test_same_seed_same_draw_bitwise():
    a = env.sample_environment(spec_uniform(), 100, seed=9)
    b = env.sample_environment(spec_uniform(), 100, seed=9)
    assert (a.values == b.values).all()
    c = env.sample_environment(spec_uniform(), 100, seed=10)
    assert not (a.values == c.values).all()


def test_family_parameter_validation():
    with pytest.raises(ConfigurationError):
        env.EnvironmentSpec("uniform", 1, {"low": 1.0, "high": 0.0})
    with pytest.raises(ConfigurationError):
        env.EnvironmentSpec("beta", 1, {"a": -1.0, "b": 2.0})
    with pytest.raises(ConfigurationError):
        env.EnvironmentSpec("truncated_normal", 1, {"mean": 0.0, "sd": 0.0, "low": -1, "high": 1})
    with pytest.raises(ConfigurationError):
        env.EnvironmentSpec("cauchy", 1, {})
    with pytest.raises(ConfigurationError):
        env.sample_environment(spec_uniform(), 0, seed=1)


def test_bounded_support_families_stay_in_bounds():
    b = env.EnvironmentSpec("beta", 1, {"a": 0.5, "b": 0.5, "low": 2.0, "high": 3.0})
    t = env.EnvironmentSpec("truncated_normal", 1, {"mean": 0.0, "sd": 1.0, "low": -1.0, "high": 2.0})
    for spec, lo, hi in ((b, 2.0, 3.0), (t, -1.0, 2.0)):
        vals = env.sample_environment(spec, 5000, seed=3).values
        assert vals.min() >= lo and vals.max() <= hi


def test_component_moments_against_quadrature():
    # independent oracle: Gauss-Legendre quadrature of x^m over each density
    from numpy.polynomial.legendre import leggauss

    nodes, weights = leggauss(400)
    specs = [spec_uniform(0.2, 1.7),
             env.EnvironmentSpec("beta", 1, {"a": 2.0, "b": 3.0, "low": -1.0, "high": 2.0})]
    for spec in specs:
        lo = float(spec.params["low"][0])
        hi = float(spec.params["high"][0])
        x = 0.5 * (hi - lo) * nodes + 0.5 * (hi + lo)
        if spec.family == "uniform":
            dens = np.full_like(x, 1.0 / (hi - lo))
        else:
            from scipy.special import beta as beta_fn

            a, b = spec.params["a"], spec.params["b"]
            u = (x - lo) / (hi - lo)
            dens = u ** (a - 1) * (1 - u) ** (b - 1) / (beta_fn(a, b) * (hi - lo))
        for power in (1, 2, 4):
            oracle = 0.5 * (hi - lo) * np.sum(weights * dens * x**power)
            assert spec.component_moments(0, power) == pytest.approx(oracle, rel=1e-8)


# ---------------------------------------------------------------------------
# existence conditions
# ---------------------------------------------------------------------------

def test_arch1_root_condition_fails():
    # sqrt(3) * 0.9 = 1.559 > 1, so the contraction fails at every mu-sample
    model = env.arch1_model(env.const_map(1.0), env.const_map(0.9), lambda1=1.0, lambda2=3.0)
    report = env.check_existence(model, spec_point(1.0), mc_samples=500, seed=0)
    assert report.verdict == "fail"
    assert "arch1.rms-contraction" in report.failing_ids()


def test_larch_degenerate_coefficients_pass():
    model = env.larch_model(env.const_map(1.0), env.zero_sequence())
    report = env.check_existence(model, spec_point(1.0), mc_samples=500, seed=0)
    assert report.verdict == "pass"
    moment = [c for c in report.conditions if c.condition_id == "larch.scale-moment"][0]
    assert moment.estimate == pytest.approx(1.0)
    contraction = [c for c in report.conditions if c.condition_id == "larch.sq-coef-contraction"][0]
    assert contraction.estimate == 0.0


def test_garch_pass_case_closed_forms():
    # alpha0=0.1, alpha=0.2, beta=0.3, lambda1=1, kappa^2=2 (lambda2=3):
    # rho = 0.5; rho^2 + kappa^2 alpha^2 = 0.25 + 0.08 = 0.33 < 1
    model = env.garch11_model(env.const_map(0.1), env.const_map(0.2), env.const_map(0.3),
                              lambda1=1.0, lambda2=3.0)
    assert model.kappa**2 == pytest.approx(2.0)
    report = env.check_existence(model, spec_point(1.0), mc_samples=200, seed=0)
    assert report.verdict == "pass"
    crit = [c for c in report.conditions if c.condition_id == "garch11.persistence-contraction"][0]
    assert crit.estimate == pytest.approx(0.33)


def test_arch1_monotone_flip_at_boundary():
    # increasing constant alpha through 1/sqrt(lambda2) flips pass -> fail
    lam2 = 2.0
    boundary = 1.0 / math.sqrt(lam2)
    verdicts = []
    for alpha in (0.8 * boundary, 1.2 * boundary):
        model = env.arch1_model(env.const_map(0.5), env.const_map(alpha),
                                lambda1=1.0, lambda2=lam2)
        verdicts.append(env.check_existence(model, spec_point(1.0), 200, 0).verdict)
    assert verdicts == ["pass", "fail"]


def test_garch_transfer_sum_matches_closed_form():
    # numeric sum of h_l^2 from the series route equals
    # lambda1^2 kappa^2 alpha^2 / (1 - rho^2) within the geometric tail
    rng = np.random.default_rng(4)
    for _ in range(10):
        alpha0, alpha, beta = rng.uniform(0.05, 0.5), rng.uniform(0.05, 0.4), rng.uniform(0.0, 0.5)
        lam1 = rng.uniform(0.5, 1.5)
        lam2 = lam1**2 * (1 + rng.uniform(0.1, 2.0))
        model = env.garch11_model(env.const_map(alpha0), env.const_map(alpha),
                                  env.const_map(beta), lambda1=lam1, lambda2=lam2)
        kappa = model.kappa
        rho = lam1 * alpha + beta
        if rho**2 + lam1**2 * kappa**2 * alpha**2 >= 1:
            continue
        m = 200
        b0, b, _ = proc.map_garch11(alpha0, alpha, beta, m)
        g = proc.invert_power_series(lam1 * b, m)
        h = kappa * g
        closed = lam1**2 * kappa**2 * alpha**2 / (1 - rho**2)
        tail = (lam1 * kappa * alpha) ** 2 * rho ** (2 * m) / (1 - rho**2)
        assert abs(np.sum(h[1:] ** 2) - closed) <= tail + 1e-12


def test_bilinear_conditions_run():
    model = env.bilinear_model(env.taps_sequence([1], [0.3]), env.taps_sequence([1], [0.4]),
                               env.const_map(1.0), lag_window=32)
    report = env.check_existence(model, spec_uniform(), mc_samples=2000, seed=0)
    assert report.verdict == "pass"


def test_unknown_tag_is_configuration_error():
    with pytest.raises(ConfigurationError):
        env.CoefficientModel(tag="arma")


# ---------------------------------------------------------------------------
# moment condition
# ---------------------------------------------------------------------------

def test_k2delta_gaussian_third_moment():
    # E|N(0,1)|^3 = 2 sqrt(2/pi)
    model = env.linear_model(env.taps_sequence([0], [1.0]), lag_window=2)
    rep = env.check_moment_k2delta(model, spec_point(1.0), innov.iid_noise(), delta=1.0,
                                   mc_samples=60_000, seed=3)
    target = 2.0 * math.sqrt(2.0 / math.pi)
    assert rep.verdict == "pass"
    assert abs(rep.estimate - target) <= 4.0 * rep.stderr


def test_k2delta_zero_process():
    model = env.linear_model(env.taps_sequence([0], [0.0]), lag_window=2)
    rep = env.check_moment_k2delta(model, spec_point(1.0), innov.iid_noise(), delta=1.0,
                                   mc_samples=2000, seed=3)
    assert rep.estimate == 0.0


def test_k2delta_product_factorization():
    # Z = y * eps with y ~ U[0,1] independent of eps ~ N(0,1):
    # E|Z|^4 = E[y^4] E[eps^4] = (1/5) * 3 = 0.6
    model = env.linear_model(env.taps_sequence([0], [1.0], scale=env.component_map(0)),
                             lag_window=2)
    rep = env.check_moment_k2delta(model, spec_uniform(), innov.iid_noise(), delta=2.0,
                                   mc_samples=120_000, seed=5)
    assert abs(rep.estimate - 0.6) <= 4.0 * rep.stderr


# ---------------------------------------------------------------------------
# dependence-control moment
# ---------------------------------------------------------------------------

def test_k5_geometric_linear_closed_form():
    # c_k(y) = y 2^{-|k|}: E||c||_2 = E[y] (sum 4^{-|k|})^{1/2} = 0.5 sqrt(5/3)
    lags = list(range(-12, 13))
    vals = [2.0 ** (-abs(l)) for l in lags]
    model = env.linear_model(env.taps_sequence(lags, vals, scale=env.component_map(0)),
                             lag_window=16)
    est, se = env.check_k5(model, spec_uniform(), mc_samples=100_000, seed=6)
    target = 0.5 * math.sqrt(5.0 / 3.0)
    assert abs(est - target) <= 3.0 * se + 1e-6


def test_k5_zero_shift():
    model = env.dsulbs_model("clipped_linear", env.taps_sequence([0], [0.0]))
    est, se = env.check_k5(model, spec_point(1.0), mc_samples=200, seed=0)
    assert est == 0.0


def test_k5_garch_matches_direct_summation():
    # closed form (effective noise constant)^2 G / (1-H) against the
    # enumerated expansion mass, at a handful of parameter points
    model = env.garch11_model(env.const_map(0.1), env.const_map(0.2), env.const_map(0.3),
                              lambda1=1.0, lambda2=3.0, k_max=16, lag_window=96)
    y = np.array([1.0])
    coeffs = proc.volterra_coefficients(model, y)
    closed = proc.closed_form_mass(model, y)
    assert coeffs.closed_total_mass == pytest.approx(closed)
    assert coeffs.enumerated_mass <= closed + 1e-12
    assert closed - coeffs.enumerated_mass <= 1e-9 * closed + 1e-12
    est, _ = env.check_k5(model, spec_point(1.0), mc_samples=50, seed=0)
    assert est == pytest.approx(math.sqrt(closed))
