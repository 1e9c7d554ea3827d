"""Wavelet thresholding estimators and their threshold schedules.

All logarithms in thresholds, block sizes and the elbow factor are natural
unless ``log_base`` says otherwise.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ArgumentError, DomainError
from .wavelets import MultiresCoefficients, reconstruct_grid_at, reconstruct_point

TAGS = ("BTPW-soft", "BTPW-hard", "TTPW", "LAP-TRUNC", "NP-THRESH")


def _log(x: float, base: float = math.e) -> float:
    return math.log(x) / math.log(base)


def soft_threshold_block(y, tau: float) -> np.ndarray:
    """``(1 - tau/||y||)_+ y``."""
    if tau < 0:
        raise ArgumentError("tau must be nonnegative")
    y = np.asarray(y, dtype=np.float64)
    nrm = float(np.linalg.norm(y))
    if nrm <= tau or nrm == 0.0:
        return np.zeros_like(y)
    return (1.0 - tau / nrm) * y


def hard_threshold_block(y, tau: float) -> np.ndarray:
    if tau < 0:
        raise ArgumentError("tau must be nonnegative")
    y = np.asarray(y, dtype=np.float64)
    return y.copy() if np.linalg.norm(y) >= tau else np.zeros_like(y)


def soft_threshold_scalar(y, tau) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    return np.sign(y) * np.maximum(np.abs(y) - tau, 0.0)


@dataclass(frozen=True)
class BlockPartition:
    l0: int
    L_star: int
    sizes: tuple  # b_l for l = l0..L_star

    def size(self, l: int) -> int:
        return self.sizes[l - self.l0]

    def blocks(self, l: int) -> list[range]:
        """1-based shift ranges tiling ``1..2^l``."""
        b = self.size(l)
        return [range(j * b + 1, (j + 1) * b + 1) for j in range((1 << l) // b)]

    def n_blocks(self, l: int) -> int:
        return (1 << l) // self.size(l)

    def total_blocks(self) -> int:
        return sum(self.n_blocks(l) for l in range(self.l0, self.L_star + 1))


def block_target(N: int, log_base: float = math.e) -> int:
    return max(1, math.ceil(_log(N, log_base))) if N > 1 else 1


def build_blocks(L_star: int, N: int, l0: int = 0, log_base: float = math.e) -> BlockPartition:
    """Per level, the power-of-two divisor of ``2^l`` closest to ``ceil(log N)``
    (ties to the smaller)."""
    if L_star < l0:
        raise ArgumentError("L_star must be >= l0")
    target = block_target(N, log_base)
    sizes = []
    for l in range(l0, L_star + 1):
        divisors = [1 << i for i in range(l + 1)]
        sizes.append(min(divisors, key=lambda d: (abs(d - target), d)))
    return BlockPartition(l0, L_star, tuple(sizes))


def elbow_factor(m: int, N: int, log_base: float = math.e) -> float:
    """``log^2 N / m`` if ``m <= log N`` else ``log N``."""
    lg = _log(N, log_base)
    return lg * lg / m if m <= lg else lg


@dataclass(frozen=True)
class ThresholdSchedule:
    mode: str
    l0: int
    L_star: int
    tau: tuple
    kappa1: float
    kappa2: float
    elbow: float
    provenance: str = "manual"
    log_base: float = math.e

    def level(self, l: int) -> float:
        return self.tau[l - self.l0]

    def scaled(self, c: float) -> "ThresholdSchedule":
        from dataclasses import replace

        return replace(self, tau=tuple(c * t for t in self.tau))

    def to_json(self) -> dict:
        return {
            "mode": self.mode,
            "l0": self.l0,
            "L_star": self.L_star,
            "tau": list(self.tau),
            "kappa1": self.kappa1,
            "kappa2": self.kappa2,
            "elbow": self.elbow,
            "provenance": self.provenance,
            "log_base": self.log_base,
        }


def build_schedule(
    mode: str,
    m: int,
    n: int,
    epsilon: float,
    kappas: Sequence[float],
    L_star: int,
    l0: int = 0,
    provenance: str = "manual",
    log_base: float = math.e,
) -> ThresholdSchedule:
    """Per-level thresholds.

    ``global``:    tau_l^2 = k1 log N / N + k2 2^l log^2 N / (m n^2 eps^2)
    ``pointwise``: tau_l^2 = k1 log N / N + k2 2^l L_{m,N} / (m n^2 eps^2)

    ``epsilon = inf`` drops the privacy term.
    """
    if mode not in ("global", "pointwise"):
        raise ArgumentError("mode must be 'global' or 'pointwise'")
    if m < 1 or n < 1:
        raise ArgumentError("m and n must be >= 1")
    if not epsilon > 0:
        raise ArgumentError("epsilon must be positive")
    k1, k2 = (float(k) for k in kappas)
    if k1 <= 0 or (k2 <= 0 and math.isfinite(epsilon)):
        raise ArgumentError("kappa constants must be positive")
    N = m * n
    lg = _log(N, log_base) if N > 1 else 0.0
    elbow = elbow_factor(m, N, log_base) if N > 1 else 0.0
    priv_factor = lg * lg if mode == "global" else elbow
    taus = []
    for l in range(l0, L_star + 1):
        t2 = k1 * lg / N
        if math.isfinite(epsilon):
            t2 += k2 * (1 << l) * priv_factor / (m * n * n * epsilon * epsilon)
        taus.append(math.sqrt(t2))
    return ThresholdSchedule(mode, l0, L_star, tuple(taus), k1, k2, elbow, provenance, log_base)


@dataclass(frozen=True, eq=False)
class DensityEstimate:
    coeffs: MultiresCoefficients
    tag: str
    survivors: int = 0

    def __post_init__(self):
        if self.tag not in TAGS:
            raise ArgumentError(f"unknown estimator tag {self.tag!r}")

    def __call__(self, t):
        return reconstruct_point(self.coeffs, t)

    def grid(self, t: np.ndarray) -> np.ndarray:
        return reconstruct_grid_at(self.coeffs, t)


def _check_levels(agg: MultiresCoefficients, schedule: ThresholdSchedule) -> None:
    if agg.index_set.l0 != schedule.l0 or agg.index_set.L != schedule.L_star:
        raise ArgumentError("schedule levels do not match the coefficient index set")


def estimate_btpw(
    agg: MultiresCoefficients,
    schedule: ThresholdSchedule,
    blocks: BlockPartition,
    variant: str = "soft",
    tag: Optional[str] = None,
) -> DensityEstimate:
    """Block soft/hard thresholding of every detail block; approximation kept."""
    if schedule.mode != "global":
        raise ArgumentError("BTPW needs a global schedule")
    if variant not in ("soft", "hard"):
        raise ArgumentError("variant must be 'soft' or 'hard'")
    _check_levels(agg, schedule)
    if blocks.l0 != schedule.l0 or blocks.L_star != schedule.L_star:
        raise ArgumentError("block partition does not match the schedule")
    out = np.array(agg.detail)
    survivors = 0
    for l in agg.index_set.levels:
        sl = agg.index_set.level_slice(l)
        b = blocks.size(l)
        Y = out[sl].reshape(-1, b)
        nrm = np.linalg.norm(Y, axis=1)
        tau = schedule.level(l)
        if variant == "soft":
            with np.errstate(divide="ignore", invalid="ignore"):
                fac = np.where(nrm > tau, 1.0 - tau / np.where(nrm > 0, nrm, 1.0), 0.0)
            keep = nrm > tau
        else:
            fac = (nrm >= tau).astype(float)
            keep = nrm >= tau
        survivors += int(keep.sum())
        out[sl] = (Y * fac[:, None]).ravel()
    return DensityEstimate(agg.replace(detail=out), tag or f"BTPW-{variant}", survivors)


def ttpw_coefficients(agg: MultiresCoefficients, schedule: ThresholdSchedule) -> MultiresCoefficients:
    if schedule.mode != "pointwise":
        raise ArgumentError("TTPW needs a pointwise schedule")
    _check_levels(agg, schedule)
    taus = np.repeat(np.array(schedule.tau), [1 << l for l in agg.index_set.levels])
    return agg.replace(detail=soft_threshold_scalar(agg.detail, taus))


def estimate_ttpw_at(agg: MultiresCoefficients, schedule: ThresholdSchedule, t0: float) -> float:
    """Term-by-term soft thresholding evaluated at an interior point."""
    if not 0.0 < t0 < 1.0:
        raise DomainError("t0 must lie strictly inside (0, 1)")
    return float(reconstruct_point(ttpw_coefficients(agg, schedule), t0))


def estimate_truncated_laplace(agg: MultiresCoefficients, L_alpha: int) -> DensityEstimate:
    """Keep levels ``<= L_alpha``; ``L_alpha = l0 - 1`` keeps the approximation only."""
    iset = agg.index_set
    if L_alpha > iset.L:
        raise ArgumentError("L_alpha exceeds L*")
    if L_alpha < iset.l0 - 1:
        raise ArgumentError("L_alpha must be >= l0 - 1")
    out = np.array(agg.detail)
    if L_alpha < iset.L:
        out[iset.offset(L_alpha + 1):] = 0.0
    return DensityEstimate(agg.replace(detail=out), "LAP-TRUNC")
