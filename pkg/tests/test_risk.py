import math
import warnings

import numpy as np
import pytest
from scipy import optimize

from fdpwave import risk
from fdpwave.besov import BesovClass, bump_perturb, sample_besov_density, uniform_density
from fdpwave.errors import ArgumentError, ConfigurationError
from fdpwave.protocol import FederatedConfig
from fdpwave.wavelets import build_basis


# -- rates ---------------------------------------------------------------------------------


def test_global_rate_values():
    assert risk.theoretical_rate_global(1.0, 4, 256, math.inf) == pytest.approx(1024 ** (-2 / 3))
    assert risk.theoretical_rate_global(1.0, 4, 256, math.inf) == pytest.approx(9.843e-3, rel=1e-3)
    # pick epsilon so that m n^2 eps^2 / log N = 1e6
    m, n = 10, 100
    eps = math.sqrt(1e6 * math.log(m * n) / (m * n * n))
    total = risk.theoretical_rate_global(1.0, m, n, eps)
    assert total - (m * n) ** (-2 / 3) == pytest.approx(1e-3, rel=1e-9)


def test_global_rate_decreases_in_alpha():
    alphas = np.linspace(0.2, 4, 30)
    for m, n, eps in [(1, 4096, 1.0), (64, 64, 0.5), (4096, 1, 2.0), (16, 64, math.inf)]:
        r = [risk.theoretical_rate_global(a, m, n, eps) for a in alphas]
        assert all(b < a for a, b in zip(r, r[1:]))


def test_pointwise_rate_branches():
    N = 4096
    lg = math.log(N)
    cdp = risk.theoretical_rate_pointwise(1.0, 1, N, 1.0)
    assert cdp == pytest.approx((N / lg) ** (-2 / 3) + (N * N / (lg * lg)) ** (-0.5))
    ldp = risk.theoretical_rate_pointwise(1.0, N, 1, 1.0)
    assert ldp == pytest.approx((N / lg) ** (-2 / 3) + (N / lg) ** (-0.5))


def test_pointwise_rate_warns_out_of_scope():
    with pytest.warns(risk.OutOfScopeWarning):
        r = risk.theoretical_rate_pointwise(0.3, 1, 1024, 1.0)
    assert r > 0
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        risk.theoretical_rate_pointwise(0.7, 1, 1024, 1.0)


def test_oracle_level_range():
    for a in (0.5, 1.5, 3.0):
        L = risk.oracle_level(a, 16, 1024, 1.0, 0, 14)
        assert -1 <= L <= 14
    assert risk.oracle_level(0.8, 1, 1 << 14, math.inf, 0, 14) == round(14 / 2.6)


# -- fits ------------------------------------------------------------------------------------------


def test_fit_exact_power_laws():
    x = np.array([1e2, 1e3, 1e4, 1e5])
    f = risk.fit_rate_exponent(x, x ** -0.5)
    assert abs(f.slope + 0.5) <= 1e-12
    g = risk.fit_rate_exponent(x, 3.0 * x ** -0.8, target=-0.8)
    assert g.slope == pytest.approx(-0.8, abs=1e-12) and g.intercept == pytest.approx(math.log(3.0))
    assert g.passed and g.to_json()["verdict"] == "PASS"


def test_fit_noisy_power_law():
    x = 2.0 ** np.arange(10, 18)
    hits = 0
    for s in range(200):
        r = np.random.default_rng(s)
        y = x ** -0.7 * (1 + 0.2 * r.uniform(-1, 1, x.size))
        hits += abs(risk.fit_rate_exponent(x, y).slope + 0.7) <= 0.1
    assert hits >= 195


def test_fit_errors():
    with pytest.raises(ArgumentError):
        risk.fit_rate_exponent([1, 2, 3], [1, 2, 3])
    with pytest.raises(ArgumentError):
        risk.fit_rate_exponent([1, 3, 2, 4], [1, 1, 1, 1])
    with pytest.raises(ArgumentError):
        risk.fit_rate_exponent([1, 2, 3, 4], [1, 0, 1, 1])


# -- Monte Carlo risk -------------------------------------------------------------------------------------


@pytest.fixture(scope="module")
def haar_truth():
    basis = build_basis("haar")
    return sample_besov_density(BesovClass(0.8), basis, 8, np.random.default_rng(3))


def test_truth_passthrough_has_zero_risk(haar_truth):
    cfg = FederatedConfig(m=2, n=128, epsilon=1.0, mechanism="laplace")
    rep = risk.mc_global_risk(cfg, haar_truth.basis, haar_truth, risk.EstimatorSpec(kind="truth"), reps=50)
    assert rep.risk == pytest.approx(haar_truth.tail_energy(8), abs=1e-15)
    assert rep.risk == 0.0


def test_zero_detail_on_uniform(haar):
    cfg = FederatedConfig(m=2, n=128)
    rep = risk.mc_global_risk(cfg, haar, uniform_density(haar, 4), risk.EstimatorSpec(kind="zero-detail"), reps=50)
    assert rep.risk == 0.0


def test_truncated_variance_sum(haar):
    # With a uniform truth each kept Haar coefficient has variance 1/N.
    cfg = FederatedConfig(m=4, n=256, seed=5)
    La = 4
    rep = risk.mc_global_risk(cfg, haar, uniform_density(haar, 4), risk.EstimatorSpec(kind="lap-trunc", L_alpha=La),
                              reps=300)
    expected = (2 ** (La + 1) - 1) / cfg.N
    assert abs(rep.risk - expected) <= 3 * rep.stderr


def test_min_reps_and_exactness(haar, haar_truth):
    cfg = FederatedConfig(m=2, n=32)
    with pytest.raises(ArgumentError):
        risk.mc_global_risk(cfg, haar, haar_truth, reps=10)
    g = bump_perturb(uniform_density(haar, 4), 0.1, 8.0, 0.5)
    with pytest.raises(ConfigurationError):
        risk.mc_global_risk(cfg, haar, g, reps=50)


def test_global_risk_thread_invariant(haar_truth):
    cfg = FederatedConfig(m=4, n=64, epsilon=1.0, mechanism="laplace", seed=11)
    a = risk.mc_global_risk(cfg, haar_truth.basis, haar_truth, reps=50, threads=1)
    b = risk.mc_global_risk(cfg, haar_truth.basis, haar_truth, reps=50, threads=4)
    assert np.array_equal(a.losses, b.losses)
    assert a.theory == risk.theoretical_rate_global(0.8, 4, 64, 1.0)


def test_pointwise_trivial_cases(haar):
    cfg = FederatedConfig(m=1, n=256)
    f = uniform_density(haar, 4)
    assert risk.mc_pointwise_risk(cfg, haar, f, 0.3, risk.EstimatorSpec(kind="truth"), reps=50).risk == 0.0
    rep = risk.mc_pointwise_risk(cfg, haar, f, 0.3, risk.EstimatorSpec(kind="constant", constant=1.4), reps=50)
    assert rep.risk == pytest.approx(0.16, abs=1e-12)


def test_pointwise_ttpw_nonprivate_rate(db3):
    cls = BesovClass(1.5)
    f = sample_besov_density(cls, db3, 10, np.random.default_rng(4), profile="envelope")
    cfg = FederatedConfig(m=1, n=10_000, seed=1)
    rep = risk.mc_pointwise_risk(cfg, db3, f, 0.3, reps=50)
    N = cfg.N
    first = (math.log(N) / N) ** (2 * cls.nu / (2 * cls.nu + 1))
    assert rep.risk < 10 * first


# -- tails --------------------------------------------------------------------------------------------------


def test_layer_cake_matches_direct(rng):
    x = np.abs(rng.standard_cauchy(5000))
    for t in (0.0, 0.3, 1.0, 10.0, 1e9):
        direct = float(np.mean(x**2 * (x >= t)))
        assert risk.layer_cake_second_moment(x, t) == pytest.approx(direct, rel=1e-10, abs=1e-300)


def test_tail_bound_is_decreasing():
    b = [risk.surrogate_tail_bound(t, 1.0, 4, 16) for t in np.linspace(0, 20, 15)]
    assert all(y <= x * (1 + 1e-9) for x, y in zip(b, b[1:]))


def test_tail_report_basic(haar, rng):
    t = np.linspace(0, 40, 12)
    rep = risk.tail_empirics(haar, 6, 4, 4, 1.0, 1, t, 10_000, rng)
    assert rep.trunc2[0] == pytest.approx(rep.second_moment, rel=1e-12)
    assert np.all(np.diff(rep.trunc2) <= 0) and np.all(np.diff(rep.prob) <= 0)
    assert rep.below_bound().all()
    with pytest.raises(ArgumentError):
        risk.tail_empirics(haar, 6, 4, 4, 1.0, 1, t, 100, rng)


def test_averaging_thins_tails(haar, rng):
    # Matched variance: m = 16 at theta / 4 against m = 1 at theta.
    theta = 4.0
    one = risk.tail_empirics(haar, 6, 4, 1, theta, 1, [0.0], 60_000, rng)
    sig = math.sqrt(one.second_moment)
    t = sig * np.array([3.0, 4.0, 5.0])
    p1 = risk.tail_empirics(haar, 6, 4, 1, theta, 1, t, 60_000, rng).prob
    p16 = risk.tail_empirics(haar, 6, 4, 1, theta / 4, 16, t, 60_000, rng).prob
    assert np.all(p16 <= p1)


# -- oracle inequality ---------------------------------------------------------------------------------------


def test_oracle_inequality_trivial(rng):
    zero = lambda g, k: np.zeros((k, 3))
    rep = risk.oracle_inequality_check(np.zeros(3), 1e6, lambda g, k: g.normal(size=(k, 3)), 10_000, rng)
    assert rep.lhs == 0.0 and rep.rhs == 0.0 and rep.passed
    f = np.array([1.0, 2.0, 2.0])
    for tau in (0.5, 3.0, 5.0):
        rep = risk.oracle_inequality_check(f, tau, zero, 10_000, rng)
        expected = np.sum((risk.soft_threshold_risk_single(f, np.zeros(3), tau)))
        assert rep.lhs == pytest.approx(expected, abs=1e-12)
        assert rep.rhs == pytest.approx(min(9.0, 4 * tau * tau), abs=1e-12)
        assert rep.passed


def test_oracle_inequality_gaussian_d4():
    r = np.random.default_rng(12)
    for _ in range(20):
        f = r.standard_normal(4) * r.uniform(0, 2)
        tau = r.uniform(0.1, 3)
        s = r.uniform(0.2, 1.5)
        rep = risk.oracle_inequality_check(f, tau, lambda g, k: g.normal(0, s, (k, 4)), 10_000, r)
        assert rep.passed


def test_oracle_inequality_rejects_bad_input(rng):
    with pytest.raises(ArgumentError):
        risk.oracle_inequality_check(np.zeros(2), 1.0, lambda g, k: np.zeros((k, 2)), 100, rng)
    with pytest.raises(ArgumentError):
        risk.oracle_inequality_check(np.zeros(2), 1.0, lambda g, k: np.zeros((k, 3)), 10_000, rng)


# -- two-point demo ---------------------------------------------------------------------------------------------


def test_hodge_snaps_at_half():
    N = 4096
    rep = risk.hodge_demo(1, N, 1.0, C=5.0, p_grid=[0.5], reps=20_000, seed=1)
    assert rep.risk_at_half <= 1 / (4 * N)


def test_hodge_no_threshold_is_noisy_mean():
    m, n, eps = 4, 256, 1.0
    N = m * n
    rep = risk.hodge_demo(m, n, eps, C=0.0, p_grid=[0.3, 0.5], reps=40_000, seed=2)
    for p, r, s in zip(rep.p_grid, rep.risk, rep.stderr):
        assert abs(r - (p * (1 - p) / N + 8 / (m * n * n * eps * eps))) <= 4 * s


def test_hodge_noise_scale_halves():
    a = risk.hodge_demo(2, 64, 1.0, reps=100)
    b = risk.hodge_demo(2, 64, 2.0, reps=100)
    assert b.noise_scale == pytest.approx(a.noise_scale / 2)


def test_hodge_grid_and_errors():
    g = risk.hodge_grid(1, 1024, 1.0)
    assert g[0] == 0.5 and np.all(np.diff(g) >= 0) and g.max() <= 0.95
    with pytest.raises(ArgumentError):
        risk.hodge_demo(1, 10, 1.0, p_grid=[1.0])
    with pytest.raises(ArgumentError):
        risk.hodge_demo(1, 10, 0.0)
