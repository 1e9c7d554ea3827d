import math

import numpy as np
import pytest

from fdpwave import seeding
from fdpwave.besov import BesovClass, sample_besov_density, uniform_density
from fdpwave.errors import ConfigurationError, ProtocolError
from fdpwave.protocol import (
    FederatedConfig,
    NoiseModel,
    ServerTranscript,
    aggregate,
    choose_path,
    run_server,
    simulate_round,
)
from fdpwave.wavelets import MultiresCoefficients, MultiresIndexSet, build_basis, empirical_coefficients


@pytest.fixture(scope="module")
def truth():
    basis = build_basis("haar")
    return sample_besov_density(BesovClass(0.8), basis, 8, np.random.default_rng(1))


@pytest.mark.parametrize("kwargs", [
    dict(m=0, n=1), dict(m=1, n=0), dict(m=1, n=1, mechanism="gauss"),
    dict(m=2, n=2, mechanism="laplace"), dict(m=2, n=2, mechanism="laplace", epsilon=-1.0),
    dict(m=2, n=2, mechanism="osc-surrogate", epsilon=math.inf), dict(m=2, n=2, round_mode="fast"),
    dict(m=2, n=2, seed=-1), dict(m=2, n=2, lstar_log_base=1.0),
])
def test_config_validation(kwargs):
    with pytest.raises(ConfigurationError):
        FederatedConfig(**kwargs)


def test_L_star():
    assert FederatedConfig(m=4, n=256).L_star() == 10
    assert FederatedConfig(m=3, n=341).L_star() == 10  # N = 1023
    assert FederatedConfig(m=4, n=256, L_star_override=6).L_star() == 6
    assert FederatedConfig(m=4, n=256, lstar_log_base=math.e).L_star() == 7
    assert FederatedConfig(m=1, n=1).L_star(2) == 2


def test_uniform_transcript_clt():
    basis = build_basis("haar")
    n = 10_000
    cfg = FederatedConfig(m=1, n=n, seed=3)
    iset = MultiresIndexSet(0, 6)
    t = run_server(cfg, basis, uniform_density(basis, 6), iset, 0)
    lv = iset.level_of_entries()
    # Haar coefficients carry 2^{l/2} in the generator; their sd is 1/sqrt(n).
    assert np.all(np.abs(t.coeffs.detail) <= 4 * 2 ** (lv / 2) / math.sqrt(n))


def test_server_determinism(truth):
    cfg = FederatedConfig(m=3, n=50, epsilon=1.0, mechanism="laplace", seed=9)
    iset = MultiresIndexSet(0, 5)
    a = run_server(cfg, truth.basis, truth, iset, 2)
    b = run_server(cfg, truth.basis, truth, iset, 2)
    assert np.array_equal(a.coeffs.detail, b.coeffs.detail)
    c = run_server(cfg, truth.basis, truth, iset, 1)
    assert not np.array_equal(a.coeffs.detail, c.coeffs.detail)
    with pytest.raises(ConfigurationError):
        run_server(cfg, truth.basis, truth, iset, 3)


def _transcript(basis, iset, v, j=0):
    return ServerTranscript(j, MultiresCoefficients(basis, iset, np.ones(1), v), "none")


def test_aggregate_identities(haar, rng):
    iset = MultiresIndexSet(0, 3)
    v = rng.standard_normal(iset.s_L)
    same = aggregate([_transcript(haar, iset, v, j) for j in range(5)])
    assert np.allclose(same.detail, v, rtol=0, atol=1e-15)
    assert np.array_equal(aggregate([_transcript(haar, iset, v), _transcript(haar, iset, -v)]).detail,
                          np.zeros(iset.s_L))
    V = rng.standard_normal((7, iset.s_L))
    agg = aggregate([_transcript(haar, iset, V[j], j) for j in range(7)])
    brute = [sum(V[j, i] for j in range(7)) / 7 for i in range(iset.s_L)]
    assert np.abs(agg.detail - brute).max() <= 1e-12


def test_aggregate_errors(haar, rng):
    with pytest.raises(ProtocolError):
        aggregate([])
    a = _transcript(haar, MultiresIndexSet(0, 2), np.zeros(7))
    b = _transcript(haar, MultiresIndexSet(0, 3), np.zeros(15))
    with pytest.raises(ProtocolError):
        aggregate([a, b])


def test_central_setting_is_single_transcript(truth):
    cfg = FederatedConfig(m=1, n=500, epsilon=1.0, mechanism="osc-surrogate", seed=4)
    agg, meta = simulate_round(cfg, truth.basis, truth)
    iset = MultiresIndexSet(0, cfg.L_star())
    t = run_server(cfg, truth.basis, truth, iset, 0)
    assert np.array_equal(agg.detail, t.coeffs.detail)
    assert meta.path == "servers" and meta.sampler == "surrogate"


def test_local_setting_runs(truth):
    cfg = FederatedConfig(m=256, n=1, epsilon=2.0, mechanism="laplace", seed=5)
    agg, meta = simulate_round(cfg, truth.basis, truth)
    assert meta.m == 256 and meta.n == 1 and meta.L_star == 8
    assert np.all(np.isfinite(agg.detail))


def test_nonprivate_round_equals_pooled_empirical(truth):
    cfg = FederatedConfig(m=6, n=40, seed=8)
    agg, _ = simulate_round(cfg, truth.basis, truth)
    xs = [truth.sample(cfg.n, seeding.stream(cfg.seed, seeding.TAG_SERVER, j)) for j in range(cfg.m)]
    pooled = empirical_coefficients(truth.basis, np.concatenate(xs), agg.index_set)
    assert np.abs(agg.detail - pooled.detail).max() <= 1e-12


@pytest.mark.parametrize("threads", [2, 5])
def test_threads_do_not_change_results(truth, threads):
    for mode in ("servers", "pooled"):
        cfg = FederatedConfig(m=9, n=30, epsilon=1.0, mechanism="laplace", seed=2, round_mode=mode)
        a, _ = simulate_round(cfg, truth.basis, truth, threads=1)
        b, _ = simulate_round(cfg, truth.basis, truth, threads=threads)
        assert np.array_equal(a.detail, b.detail)


@pytest.mark.parametrize("mechanism", ["laplace", "osc-surrogate"])
def test_paths_agree_in_distribution(truth, mechanism):
    base = FederatedConfig(m=8, n=16, epsilon=1.0, mechanism=mechanism)
    iset = MultiresIndexSet(0, base.L_star())
    noise = NoiseModel(base, truth.basis, iset)
    draws = {}
    for mode in ("servers", "pooled"):
        rows = []
        for r in range(400):
            cfg = FederatedConfig(m=8, n=16, epsilon=1.0, mechanism=mechanism, round_mode=mode, seed=1000 + r)
            rows.append(simulate_round(cfg, truth.basis, truth, index_set=iset, noise=noise)[0].detail)
        draws[mode] = np.array(rows)
    s, p = draws["servers"], draws["pooled"]
    se = np.sqrt((s.var(axis=0) + p.var(axis=0)) / 400)
    assert np.mean(np.abs(s.mean(axis=0) - p.mean(axis=0)) <= 3 * se) > 0.97
    assert abs(s.var(axis=0).sum() / p.var(axis=0).sum() - 1) < 0.1


def test_path_selection():
    iset = MultiresIndexSet(0, 4)
    assert choose_path(FederatedConfig(m=4, n=10), iset) == "servers"
    assert choose_path(FederatedConfig(m=1 << 16, n=100), iset) == "pooled"
    assert choose_path(FederatedConfig(m=4, n=10, round_mode="pooled"), iset) == "pooled"


def test_exact_mechanism_dimension_guard(haar):
    cfg = FederatedConfig(m=1, n=10, epsilon=1.0, mechanism="osc-exact")
    with pytest.raises(ConfigurationError):
        NoiseModel(cfg, haar, MultiresIndexSet(0, 7))


def test_exact_mechanism_round(haar):
    from fdpwave.oscnorm import MCMCSettings

    cfg = FederatedConfig(m=2, n=16, epsilon=1.0, mechanism="osc-exact", seed=3,
                          mcmc=MCMCSettings(burn_in=1000, thinning=10), L_star_override=2)
    agg, meta = simulate_round(cfg, haar, uniform_density(haar, 4))
    assert meta.sampler == "exact-mcmc" and agg.index_set.L == 2


def test_father_block_gets_noise_when_l0_positive():
    basis = build_basis("haar", 1, l0=2)
    iset = MultiresIndexSet(2, 4)
    for mech in ("laplace", "osc-surrogate"):
        cfg = FederatedConfig(m=1, n=10, epsilon=1.0, mechanism=mech, seed=1)
        noise = NoiseModel(cfg, basis, iset)
        assert noise.approx_scale > 0
    cfg = FederatedConfig(m=1, n=10, epsilon=1.0, mechanism="osc-surrogate")
    assert NoiseModel(cfg, basis, iset).detail_theta == pytest.approx(5.0)


def test_metadata_json(truth):
    cfg = FederatedConfig(m=2, n=8, epsilon=0.5, mechanism="laplace", seed=7)
    _, meta = simulate_round(cfg, truth.basis, truth)
    js = meta.to_json()
    assert js["epsilon"] == 0.5 and js["seed"] == 7 and js["mechanism"] == "laplace"
