"""One-shot federated protocol: m servers, n samples each, noisy transcripts,
central averaging.

Two execution paths produce the same distribution of the aggregate:

* ``servers``: every server samples its data, computes coefficients and adds
  its own noise from the stream ``(seed, SERVER, j)``; transcripts are
  averaged in server order.
* ``pooled``: the ``N = m n`` points are drawn in fixed-size chunks and the
  mean of the ``m`` noise vectors is drawn directly.  For Laplace noise, and
  for surrogate noise whenever its box constraint is inactive, the mean of
  ``m`` Laplace(b) variables equals ``(b/m)(G1 - G2)`` with ``G1, G2 ~ Gamma(m)``.

Worker threads only split fixed work units, so results never depend on the
thread count.
"""
from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import seeding
from .besov import DensityModel
from .errors import ConfigurationError, ProtocolError
from .mechanisms import (
    OscNoiseSampler,
    SurrogateBody,
    averaged_surrogate_noise,
    laplace_c_sens,
    laplace_scales,
)
from .oscnorm import MCMCSettings, NormOracle
from .wavelets import (
    MultiresCoefficients,
    MultiresIndexSet,
    WaveletBasis,
    _weighted_coefficients,
)

logger = logging.getLogger(__name__)

MECHANISMS = ("none", "laplace", "osc-exact", "osc-surrogate")
ROUND_MODES = ("auto", "servers", "pooled")
POOL_CHUNK = 1 << 16
EXACT_MAX_DIM = 127


@dataclass(frozen=True)
class FederatedConfig:
    m: int
    n: int
    epsilon: float = math.inf
    seed: int = 0
    mechanism: str = "none"
    L_star_override: Optional[int] = None
    lstar_log_base: float = 2.0
    laplace_rule: str = "composition"
    mcmc: MCMCSettings = field(default_factory=MCMCSettings)
    oracle_grid: int = 4096
    round_mode: str = "auto"
    C0: Optional[float] = None

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 1:
            raise ConfigurationError("m must be a positive integer")
        if int(self.n) != self.n or self.n < 1:
            raise ConfigurationError("n must be a positive integer")
        if self.mechanism not in MECHANISMS:
            raise ConfigurationError(f"mechanism must be one of {MECHANISMS}")
        if self.mechanism == "none":
            if not (self.epsilon > 0):
                raise ConfigurationError("epsilon must be positive")
        elif not (self.epsilon > 0 and math.isfinite(self.epsilon)):
            raise ConfigurationError("a private mechanism needs a finite epsilon > 0")
        if self.round_mode not in ROUND_MODES:
            raise ConfigurationError(f"round_mode must be one of {ROUND_MODES}")
        if self.lstar_log_base <= 1:
            raise ConfigurationError("lstar_log_base must exceed 1")
        if self.L_star_override is not None and self.L_star_override < 0:
            raise ConfigurationError("L_star_override must be nonnegative")
        if not 0 <= int(self.seed) < 1 << 64:
            raise ConfigurationError("seed must be an unsigned 64-bit integer")

    @property
    def N(self) -> int:
        return self.m * self.n

    @property
    def theta(self) -> float:
        return self.n * self.epsilon

    @property
    def private(self) -> bool:
        return self.mechanism != "none"

    def L_star(self, l0: int = 0) -> int:
        if self.L_star_override is not None:
            return max(l0, self.L_star_override)
        L = math.ceil(math.log(self.N) / math.log(self.lstar_log_base) - 1e-12) if self.N > 1 else 0
        return max(l0, L)

    def with_seed(self, seed: int) -> "FederatedConfig":
        from dataclasses import replace

        return replace(self, seed=seed)


@dataclass(frozen=True, eq=False)
class ServerTranscript:
    server: int
    coeffs: MultiresCoefficients
    mechanism: str
    noise_meta: dict = field(default_factory=dict)


@dataclass(frozen=True)
class RoundMetadata:
    m: int
    n: int
    epsilon: float
    mechanism: str
    L_star: int
    seed: int
    wall_ms: float
    path: str = "servers"
    sampler: str = ""

    def to_json(self) -> dict:
        return {
            "m": self.m,
            "n": self.n,
            "epsilon": None if math.isinf(self.epsilon) else self.epsilon,
            "mechanism": self.mechanism,
            "L_star": self.L_star,
            "seed": self.seed,
            "wall_ms": self.wall_ms,
        }


class NoiseModel:
    """Everything needed to add one round's privacy noise on ``V_{L*}``."""

    def __init__(self, config: FederatedConfig, basis: WaveletBasis, index_set: MultiresIndexSet):
        self.config = config
        self.basis = basis
        self.index_set = index_set
        self.mechanism = config.mechanism
        theta = config.theta
        # With l0 > 0 the father block is data dependent; it gets its own
        # Laplace release and half of the budget when the detail noise is osc.
        self.approx_scale = 0.0
        self.detail_theta = theta
        if config.mechanism == "laplace":
            c = laplace_c_sens(basis, index_set, config.laplace_rule)
            self.c_sens = c
            self.scales = laplace_scales(index_set, theta, c)
            if index_set.l0 > 0:
                self.approx_scale = c * 2.0 ** (index_set.l0 / 2.0) / theta
        elif config.mechanism.startswith("osc"):
            if index_set.l0 > 0:
                self.detail_theta = theta / 2.0
                self.approx_scale = 2.0 * basis.phi_row_sum() * 2.0 ** (index_set.l0 / 2.0) / (theta / 2.0)
            if config.mechanism == "osc-exact":
                if index_set.s_L > EXACT_MAX_DIM:
                    raise ConfigurationError(
                        f"osc-exact needs s_L <= {EXACT_MAX_DIM} (got {index_set.s_L}); use osc-surrogate"
                    )
                self.oracle = NormOracle(basis, index_set, config.oracle_grid)
            else:
                self.body = SurrogateBody(basis, index_set, config.C0)

    @property
    def sampler(self) -> str:
        return {"osc-exact": "exact-mcmc", "osc-surrogate": "surrogate", "laplace": "laplace"}.get(
            self.mechanism, "none"
        )

    def server_noise(self, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray, dict]:
        iset = self.index_set
        approx = np.zeros(iset.n_approx)
        if self.approx_scale > 0:
            approx = rng.laplace(0.0, self.approx_scale, iset.n_approx)
        if self.mechanism == "none":
            return approx, np.zeros(iset.s_L), {}
        if self.mechanism == "laplace":
            return approx, rng.laplace(0.0, 1.0, iset.s_L) * self.scales, {"c_sens": self.c_sens}
        if self.mechanism == "osc-exact":
            draw = OscNoiseSampler(self.oracle, self.detail_theta, rng, "exact", self.config.mcmc).draw()
        else:
            draw = OscNoiseSampler(self.body, self.detail_theta, rng, "surrogate").draw()
        return approx, draw.vector, {"radius": draw.radius, "theta": draw.theta}

    def mean_noise(self, m: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        """Mean of ``m`` independent server noise vectors, drawn directly."""
        iset = self.index_set
        approx = np.zeros(iset.n_approx)
        if self.approx_scale > 0:
            approx = (rng.gamma(m, 1.0, iset.n_approx) - rng.gamma(m, 1.0, iset.n_approx)) * (self.approx_scale / m)
        if self.mechanism == "none":
            return approx, np.zeros(iset.s_L)
        if self.mechanism == "laplace":
            g = rng.gamma(m, 1.0, iset.s_L) - rng.gamma(m, 1.0, iset.s_L)
            return approx, g * (self.scales / m)
        if self.mechanism == "osc-surrogate":
            return approx, averaged_surrogate_noise(self.body, self.detail_theta, m, rng, 1)[0]
        acc = np.zeros(iset.s_L)
        for j in range(m):
            acc += OscNoiseSampler(self.oracle, self.detail_theta, rng, "exact", self.config.mcmc).draw().vector
        return approx, acc / m


def run_server(
    config: FederatedConfig,
    basis: WaveletBasis,
    density: DensityModel,
    index_set: MultiresIndexSet,
    server_index: int,
    rng: Optional[np.random.Generator] = None,
    noise: Optional[NoiseModel] = None,
) -> ServerTranscript:
    """Sample ``n`` points, compute coefficients and add one noise draw."""
    if not 0 <= server_index < config.m:
        raise ConfigurationError(f"server index {server_index} outside 0..{config.m - 1}")
    if rng is None:
        rng = seeding.stream(config.seed, seeding.TAG_SERVER, server_index)
    noise = noise or NoiseModel(config, basis, index_set)
    x = density.sample(config.n, rng)
    w = np.full(config.n, 1.0 / config.n)
    emp = _weighted_coefficients(basis, index_set, x, w)
    na, nd, meta = noise.server_noise(rng)
    coeffs = emp.replace(approx=emp.approx + na, detail=emp.detail + nd)
    return ServerTranscript(server_index, coeffs, noise.sampler, meta)


def aggregate(transcripts: Sequence[ServerTranscript]) -> MultiresCoefficients:
    """Coordinatewise mean of the transcripts."""
    if len(transcripts) == 0:
        raise ProtocolError("no transcripts to aggregate")
    first = transcripts[0].coeffs
    for t in transcripts[1:]:
        if t.coeffs.index_set != first.index_set or t.coeffs.basis is not first.basis:
            raise ProtocolError("transcripts disagree on the index set")
    A = np.stack([t.coeffs.approx for t in transcripts])
    D = np.stack([t.coeffs.detail for t in transcripts])
    return first.replace(approx=A.mean(axis=0), detail=D.mean(axis=0))


def _pooled_coefficients(config, basis, density, index_set, threads) -> MultiresCoefficients:
    N = config.N
    bounds = list(range(0, N, POOL_CHUNK)) + [N]
    jobs = list(zip(bounds[:-1], bounds[1:]))

    def work(i):
        lo, hi = jobs[i]
        rng = seeding.stream(config.seed, seeding.TAG_POOLED_DATA, i)
        x = density.sample(hi - lo, rng)
        c = _weighted_coefficients(basis, index_set, x, np.full(hi - lo, 1.0 / N))
        return c.approx, c.detail

    parts = _map(work, range(len(jobs)), threads)
    approx = np.sum([p[0] for p in parts], axis=0)
    detail = np.sum([p[1] for p in parts], axis=0)
    return MultiresCoefficients(basis, index_set, approx, detail)


def _map(fn, items, threads: int):
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


def choose_path(config: FederatedConfig, index_set: MultiresIndexSet) -> str:
    if config.round_mode != "auto":
        return config.round_mode
    if config.mechanism == "osc-exact":
        return "servers"
    return "servers" if config.m * (index_set.s_L + config.n) <= (1 << 20) else "pooled"


def simulate_round(
    config: FederatedConfig,
    basis: WaveletBasis,
    density: DensityModel,
    threads: int = 1,
    index_set: Optional[MultiresIndexSet] = None,
    noise: Optional[NoiseModel] = None,
) -> tuple[MultiresCoefficients, RoundMetadata]:
    """Run all servers and aggregate.  Deterministic in ``config.seed``."""
    start = time.perf_counter()
    L_star = config.L_star(basis.l0)
    iset = index_set or MultiresIndexSet(basis.l0, L_star)
    noise = noise or NoiseModel(config, basis, iset)
    path = choose_path(config, iset)
    if path == "servers":
        transcripts = _map(
            lambda j: run_server(config, basis, density, iset, j, noise=noise), range(config.m), threads
        )
        agg = aggregate(transcripts)
    else:
        emp = _pooled_coefficients(config, basis, density, iset, threads)
        rng = seeding.stream(config.seed, seeding.TAG_POOLED_NOISE)
        na, nd = noise.mean_noise(config.m, rng)
        agg = emp.replace(approx=emp.approx + na, detail=emp.detail + nd)
    meta = RoundMetadata(
        m=config.m,
        n=config.n,
        epsilon=config.epsilon,
        mechanism=config.mechanism,
        L_star=iset.L,
        seed=int(config.seed),
        wall_ms=(time.perf_counter() - start) * 1e3,
        path=path,
        sampler=noise.sampler,
    )
    return agg, meta
