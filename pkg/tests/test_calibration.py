import math

import numpy as np
import pytest
from scipy import stats

from fdpwave.calibration import (
    calibrate_privacy,
    calibrate_statistical,
    calibrated_schedule,
    gamma_difference_block_quantile,
    gamma_difference_sf,
    privacy_block_quantile,
)
from fdpwave.estimators import _log
from fdpwave.protocol import FederatedConfig, NoiseModel
from fdpwave.wavelets import MultiresIndexSet, build_basis


def test_gamma_difference_sf_is_laplace_for_m1():
    x = np.array([0.0, 0.5, 2.0, 10.0])
    assert np.allclose(gamma_difference_sf(x, 1), 0.5 * np.exp(-x), rtol=5e-4, atol=0)


def test_gamma_difference_sf_matches_monte_carlo():
    r = np.random.default_rng(0)
    m = 5
    z = r.gamma(m, size=400_000) - r.gamma(m, size=400_000)
    for x in (0.5, 2.0, 5.0):
        p = (z > x).mean()
        assert gamma_difference_sf(x, m)[0] == pytest.approx(p, abs=4 * math.sqrt(p / z.size))


@pytest.mark.parametrize("exceed", [1e-3, 1e-10])
def test_block_quantile_laplace_closed_form(exceed):
    # |Laplace(1)| exceeds x with probability e^{-x}.
    assert gamma_difference_block_quantile(1, 1, exceed) == pytest.approx(-math.log(exceed), rel=1e-3)


@pytest.mark.parametrize("m,b", [(1, 4), (8, 8), (16, 1)])
def test_block_quantile_matches_monte_carlo(m, b):
    r = np.random.default_rng(m * 100 + b)
    draws = 400_000
    z = r.gamma(m, size=(draws, b)) - r.gamma(m, size=(draws, b))
    nrm = np.linalg.norm(z, axis=1)
    q = gamma_difference_block_quantile(m, b, 1e-3)
    # empirical exceedance of the exact quantile is 1e-3 up to sampling error
    p = (nrm > q).mean()
    assert abs(p - 1e-3) <= 4 * math.sqrt(1e-3 / draws)


def test_statistical_kappa_is_deterministic_and_positive(haar):
    a = calibrate_statistical(haar, "global", 256, 2000, seed=1)
    b = calibrate_statistical(haar, "global", 256, 2000, seed=1)
    assert a == b and a > 0


def test_statistical_kappa_matches_gaussian_approximation(haar):
    # For Haar, N_ref * (coefficient)^2 is nearly chi-square with b degrees of freedom.
    N = 1024
    b = 8
    k1 = calibrate_statistical(haar, "global", N, 4000)
    q = math.sqrt(stats.chi2.ppf(1 - 1 / N, b))
    assert k1 == pytest.approx(q * q / math.log(N), rel=0.15)


def test_privacy_kappa_laplace_exact(haar):
    cfg = FederatedConfig(m=4, n=64, epsilon=1.0, mechanism="laplace")
    iset = MultiresIndexSet(0, cfg.L_star())
    noise = NoiseModel(cfg, haar, iset)
    q = privacy_block_quantile(noise, 3, 4, 1e-4)
    z = np.random.default_rng(0).gamma(4, size=(200_000, 4)) - np.random.default_rng(1).gamma(4, size=(200_000, 4))
    scale = noise.scales[iset.level_slice(3).start]
    emp = (np.linalg.norm(z, axis=1) * scale / 4 > q).mean()
    assert abs(emp - 1e-4) <= 4 * math.sqrt(1e-4 / 200_000)


def test_privacy_kappa_zero_without_privacy(haar):
    assert calibrate_privacy(FederatedConfig(m=2, n=8), haar, "global") == 0.0


def test_privacy_threshold_kills_noise_at_target_rate(haar):
    cfg = FederatedConfig(m=4, n=64, epsilon=1.0, mechanism="laplace")
    k2 = calibrate_privacy(cfg, haar, "global", power=1.0)
    # The largest level attains the bound exactly at exceedance 1/N.
    assert k2 > 0
    sched = calibrated_schedule(cfg, haar, "global", kappa1=1e-12)
    assert sched.kappa2 == calibrate_privacy(cfg, haar, "global")


def test_surrogate_kappa_fast_path_agrees_with_monte_carlo():
    basis = build_basis("haar")
    cfg = FederatedConfig(m=2, n=512, epsilon=1.0, mechanism="osc-surrogate")
    iset = MultiresIndexSet(0, cfg.L_star())
    noise = NoiseModel(cfg, basis, iset)
    exact = privacy_block_quantile(noise, 6, 8, 1e-2)
    r = np.random.default_rng(3)
    sl = iset.level_slice(6)
    mc = np.quantile([np.linalg.norm(noise.mean_noise(2, r)[1][sl][:8]) for _ in range(20_000)], 0.99)
    assert exact == pytest.approx(mc, rel=0.03)


def test_manual_schedule_provenance(haar):
    cfg = FederatedConfig(m=2, n=512, epsilon=1.0, mechanism="laplace")
    s = calibrated_schedule(cfg, haar, "global", kappa1=1.0, kappa2=2.0)
    assert s.provenance == "manual" and s.kappa1 == 1.0 and s.kappa2 == 2.0


def test_nonprivate_schedule_has_no_privacy_term(haar):
    cfg = FederatedConfig(m=2, n=512)
    s = calibrated_schedule(cfg, haar, "global", kappa1=2.0)
    assert s.level(0) == pytest.approx(math.sqrt(2.0 * _log(1024) / 1024))
    assert s.level(0) == s.level(cfg.L_star())
