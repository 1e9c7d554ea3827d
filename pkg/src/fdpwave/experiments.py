"""Experiment runners behind the command line.

Each runner takes an ``ExperimentConfig`` and an output directory, writes
CSV/JSON artifacts and returns the list of files written.  CSV bodies depend
only on the configuration (never on wall time or thread count); every row
carries the configuration hash.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import os
from typing import Iterable, Optional, Sequence

import numpy as np

from . import besov, risk, seeding
from .besov import BesovClass, DensityModel
from .calibration import calibrated_schedule
from .config import ExperimentConfig
from .errors import ConfigurationError
from .estimators import build_blocks, estimate_btpw, estimate_truncated_laplace, ttpw_coefficients
from .oscnorm import MCMCSettings, NormOracle, osc_norm, sensitivity_norm
from .protocol import FederatedConfig, simulate_round
from .wavelets import MultiresIndexSet, WaveletBasis, build_basis

logger = logging.getLogger(__name__)


# --------------------------------------------------------------------------- helpers


def fmt(v) -> str:
    """Deterministic text for CSV cells (shortest round-trip floats)."""
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return str(v)


def write_csv(path: str, header: Sequence[str], rows: Iterable[Sequence], config_hash: str) -> str:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(header) + ["config_hash"])
        for row in rows:
            w.writerow([fmt(v) for v in row] + [config_hash])
    return path


def write_json(path: str, obj) -> str:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
    return path


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(f"not JSON serializable: {type(o)!r}")


def basis_from(cfg: ExperimentConfig) -> WaveletBasis:
    return build_basis(cfg.family, cfg.A, cfg.l0, cfg.cascade_depth)


def besov_from(cfg: ExperimentConfig) -> BesovClass:
    return BesovClass(cfg.alpha, cfg.p, cfg.q, cfg.R)


def federated_from(cfg: ExperimentConfig, m: int, n: int, epsilon: Optional[float], seed: int) -> FederatedConfig:
    eps = math.inf if epsilon is None or cfg.mechanism == "none" else float(epsilon)
    return FederatedConfig(
        m=m, n=n, epsilon=eps, seed=seed, mechanism=cfg.mechanism, L_star_override=cfg.L_star_override,
        lstar_log_base=cfg.lstar_log_base, laplace_rule=cfg.laplace_rule,
        mcmc=MCMCSettings(cfg.burn_in, cfg.thinning, cfg.chord_method), oracle_grid=cfg.oracle_grid,
        round_mode=cfg.round_mode, C0=cfg.C0,
    )


def make_truths(cfg: ExperimentConfig, basis: WaveletBasis) -> list[DensityModel]:
    """``n_truths`` Besov truths from the streams ``(seed, TRUTH, i)``."""
    cls = besov_from(cfg)
    C_R = cfg.C_R
    if C_R is None and cfg.profile == "envelope":
        C_R = besov.floor_C_R(cls, basis, cfg.L_gen)
    return [
        besov.sample_besov_density(cls, basis, cfg.L_gen, seeding.stream(cfg.seed, seeding.TAG_TRUTH, i), C_R=C_R,
                                   seed=i, profile=cfg.profile)
        for i in range(cfg.n_truths)
    ]


def estimator_spec(cfg: ExperimentConfig, kind: Optional[str] = None) -> risk.EstimatorSpec:
    return risk.EstimatorSpec(
        kind=kind or cfg.estimator, variant=cfg.variant, kappa1=cfg.kappa1, kappa2=cfg.kappa2,
        L_alpha=cfg.L_alpha, alpha=cfg.alpha, calib_draws=cfg.kappa_draws, calib_N_ref=cfg.kappa_N_ref,
        calib_power=cfg.kappa_power,
    )


def resolve_m(token, N: int, default: int) -> int:
    if token == "fixed":
        return default
    if token == "N":
        return N
    return int(token)


def sweep_points(cfg: ExperimentConfig) -> list[tuple[int, int, int, Optional[float], str]]:
    """``(N, m, n, epsilon, m_token)`` for every sweep cell, in file order."""
    eps_list = list(cfg.epsilon_list) or [cfg.epsilon]
    out = []
    for tok in cfg.m_list:
        for eps in eps_list:
            for N in cfg.N_list:
                m = resolve_m(tok, N, cfg.m)
                if m > N or N % m:
                    raise ConfigurationError(f"m={m} does not divide N={N}")
                out.append((N, m, N // m, eps, str(tok)))
    return out


# --------------------------------------------------------------------------- simulate


def run_simulate(cfg: ExperimentConfig, out: str, threads: int = 1) -> list[str]:
    basis = basis_from(cfg)
    truth = make_truths(cfg.replace(n_truths=1), basis)[0]
    fc = federated_from(cfg, cfg.m, cfg.n, cfg.epsilon, seeding.child_seed(cfg.seed, seeding.TAG_MISC, "simulate"))
    agg, meta = simulate_round(fc, basis, truth, threads)
    L = agg.index_set.L
    tr = truth.truth(L)
    est = agg
    if cfg.estimator in ("btpw", "np-thresh", "ttpw"):
        mode = "pointwise" if cfg.estimator == "ttpw" else "global"
        sched = calibrated_schedule(fc, basis, mode, cfg.kappa1, cfg.kappa2, cfg.kappa_N_ref, cfg.kappa_draws,
                                    log_base=cfg.threshold_log_base, power=cfg.kappa_power)
        if mode == "global":
            est = estimate_btpw(agg, sched, build_blocks(L, fc.N, basis.l0, cfg.threshold_log_base), cfg.variant).coeffs
        else:
            est = ttpw_coefficients(agg, sched)
    elif cfg.estimator == "lap-trunc":
        La = cfg.L_alpha
        if La is None:
            La = risk.oracle_level(cfg.alpha, fc.m, fc.n, fc.epsilon, basis.l0, L)
        est = estimate_truncated_laplace(agg, La).coeffs
    h = cfg.hash()
    tv = {(l, k): v for l, k, v in tr.rows()}
    ev = {(l, k): v for l, k, v in est.rows()}
    rows = [(l, k, v, ev[(l, k)], tv[(l, k)]) for l, k, v in agg.rows()]
    files = [write_csv(os.path.join(out, "coefficients.csv"), ["level", "k", "aggregate", "estimate", "truth"], rows, h)]
    meta_json = meta.to_json()
    meta_json["path"] = meta.path
    files.append(write_json(os.path.join(out, "round.json"), meta_json))
    loss = risk.l2_loss(est, truth)
    files.append(write_csv(os.path.join(out, "summary.csv"), ["m", "n", "epsilon", "mechanism", "estimator", "loss"],
                           [(fc.m, fc.n, fc.epsilon, fc.mechanism, cfg.estimator, loss)], h))
    return files


# --------------------------------------------------------------------------- sweeps


RISK_HEADER = ["N", "m", "n", "epsilon", "mechanism", "estimator", "risk", "stderr", "theory", "ratio"]


def _target(cfg: ExperimentConfig, pointwise: bool) -> float:
    if cfg.fit_target is not None:
        return cfg.fit_target
    a = besov_from(cfg).nu if pointwise else cfg.alpha
    return -2 * a / (2 * a + 1) if cfg.fit_x == "N" else -2 * a / (2 * a + 2)


def _fit_x(cfg: ExperimentConfig, N: int, m: int, n: int, eps: Optional[float]) -> float:
    if cfg.fit_x == "N":
        return float(N)
    if eps is None:
        raise ConfigurationError("fit_x=privacy needs a finite epsilon")
    return m * n * n * eps * eps / math.log(N)


def _sweep(cfg: ExperimentConfig, out: str, threads: int, pointwise: bool) -> list[str]:
    basis = basis_from(cfg)
    truths = make_truths(cfg, basis)
    spec = estimator_spec(cfg)
    rows, groups = [], {}
    for N, m, n, eps, tok in sweep_points(cfg):
        reports = []
        for i, truth in enumerate(truths):
            seed = seeding.child_seed(cfg.seed, seeding.TAG_MISC, "sweep", N, m, i)
            fc = federated_from(cfg, m, n, eps, seed)
            if pointwise:
                rep = risk.mc_pointwise_risk(fc, basis, truth, cfg.t0, spec, cfg.reps, threads)
            else:
                rep = risk.mc_global_risk(fc, basis, truth, spec, cfg.reps, threads)
            reports.append(rep)
        r = float(np.mean([x.risk for x in reports]))
        se = float(math.sqrt(sum(x.stderr**2 for x in reports)) / len(reports))
        theory = reports[0].theory
        ratio = r / theory if theory else None
        e = fc.epsilon
        rows.append((N, m, n, e, cfg.mechanism, cfg.estimator, r, se, theory, ratio))
        groups.setdefault((tok, eps), []).append((_fit_x(cfg, N, m, n, eps), r))
        logger.info("N=%d m=%d eps=%s risk=%.4g (se %.2g)", N, m, e, r, se)
    h = cfg.hash()
    name = "pointwise.csv" if pointwise else "risk.csv"
    files = [write_csv(os.path.join(out, name), RISK_HEADER, rows, h)]
    fits = []
    target = _target(cfg, pointwise)
    for (tok, eps), pts in groups.items():
        pts = sorted(pts)
        if len(pts) < 4:
            continue
        fit = risk.fit_rate_exponent([p[0] for p in pts], [p[1] for p in pts], target, cfg.fit_tolerance)
        d = fit.to_json()
        d.update(m=tok, epsilon=eps, fit_x=cfg.fit_x, config_hash=h)
        fits.append(d)
    if fits:
        files.append(write_json(os.path.join(out, "rate_fit.json"), fits))
    return files


def run_rate_sweep(cfg: ExperimentConfig, out: str, threads: int = 1) -> list[str]:
    return _sweep(cfg, out, threads, pointwise=False)


def run_pointwise_sweep(cfg: ExperimentConfig, out: str, threads: int = 1) -> list[str]:
    return _sweep(cfg, out, threads, pointwise=True)


# --------------------------------------------------------------------------- tails


def run_tails(cfg: ExperimentConfig, out: str, threads: int = 1) -> list[str]:
    basis = basis_from(cfg)
    jobs = [(m, b, l) for m in cfg.tail_m_list for b in cfg.tail_blocks for l in cfg.tail_levels]

    def one(i):
        m, b, l = jobs[i]
        iset = MultiresIndexSet(basis.l0, cfg.tail_L)
        from .mechanisms import SurrogateBody

        sigma = SurrogateBody(basis, iset).level_weight(l) / cfg.tail_theta
        # The t grid spans the bulk and the far tail of the averaged block norm.
        t_grid = np.linspace(0.0, 6.0 * sigma * math.sqrt(2.0 * b / m) + 2.0 * sigma * b / m, cfg.tail_t_points)
        rng = seeding.stream(cfg.seed, seeding.TAG_MISC, "tails", m, b, l)
        return risk.tail_empirics(basis, cfg.tail_L, l, b, cfg.tail_theta, m, t_grid, cfg.tail_draws, rng,
                                  cfg.tail_slack)

    from .protocol import _map

    reports = _map(one, range(len(jobs)), threads)
    rows = []
    for (m, b, l), rep in zip(jobs, reports):
        for r, ok in zip(rep.to_rows(), rep.below_bound()):
            rows.append((m, b, l, r["t"], r["prob"], r["prob_se"], r["trunc2"], r["trunc2_se"], r["bound"], bool(ok)))
    header = ["m", "b", "level", "t", "prob", "prob_se", "trunc2", "trunc2_se", "bound", "below_bound"]
    return [write_csv(os.path.join(out, "tails.csv"), header, rows, cfg.hash())]


# --------------------------------------------------------------------------- hodge


def run_hodge(cfg: ExperimentConfig, out: str, threads: int = 1) -> list[str]:
    eps = 1.0 if cfg.epsilon is None else cfg.epsilon
    rows, summary = [], []
    for tok in cfg.hodge_m_list:
        for N in cfg.hodge_N_list:
            m = resolve_m(tok, N, cfg.m)
            if N % m:
                raise ConfigurationError(f"m={m} does not divide N={N}")
            n = N // m
            seed = seeding.child_seed(cfg.seed, seeding.TAG_MISC, "hodge", N, m)
            rep = risk.hodge_demo(m, n, eps, cfg.hodge_C, None, cfg.hodge_reps, seed)
            for r in rep.to_rows():
                rows.append((N, m, n, eps, r["p"], r["risk"], r["stderr"], rep.threshold, rep.noise_scale))
            summary.append(dict(N=N, m=m, n=n, epsilon=eps, risk_half=rep.risk_at_half, sup_risk=rep.sup_risk,
                                ratio=rep.sup_risk / rep.risk_at_half if rep.risk_at_half > 0 else math.inf,
                                sup_scaled=rep.sup_risk * m * n * n * eps * eps,
                                threshold=rep.threshold, noise_scale=rep.noise_scale))
    h = cfg.hash()
    header = ["N", "m", "n", "epsilon", "p", "risk", "stderr", "threshold", "noise_scale"]
    files = [write_csv(os.path.join(out, "hodge.csv"), header, rows, h)]
    files.append(write_csv(os.path.join(out, "hodge_summary.csv"),
                           ["N", "m", "n", "epsilon", "risk_half", "sup_risk", "ratio", "sup_scaled"],
                           [(s["N"], s["m"], s["n"], s["epsilon"], s["risk_half"], s["sup_risk"], s["ratio"],
                             s["sup_scaled"]) for s in summary], h))
    return files


# --------------------------------------------------------------------------- verify


def verify_checks(cfg: ExperimentConfig) -> list[tuple[str, bool, str]]:
    """Property checks: sensitivity, norm axioms, oracle inequality, layer cake."""
    results = []
    rng = seeding.stream(cfg.seed, seeding.TAG_MISC, "verify")

    # Sensitivity of one changed point.
    worst, best = -math.inf, 0.0
    for family, A in (("haar", 1), ("daubechies", 2)):
        basis = build_basis(family, A)
        for L in (2, 4):
            oracle = NormOracle(basis, MultiresIndexSet(0, L))
            for n in (1, 10):
                for _ in range(max(1, cfg.verify_pairs // 8)):
                    x = rng.random(n)
                    xp = x.copy()
                    xp[rng.integers(n)] = rng.random()
                    v = sensitivity_norm(oracle, x, xp)
                    worst = max(worst, v - 1.0 / n)
                    best = max(best, v * n)
    results.append(("sensitivity", worst <= 1e-6 and best >= 0.9,
                    f"max(norm - 1/n)={worst:.2e}, max(n*norm)={best:.4f}"))

    # Norm axioms and the single-coefficient value.
    basis = build_basis("haar")
    iset = MultiresIndexSet(0, 3)
    oracle = NormOracle(basis, iset)
    e = np.zeros(iset.s_L)
    e[0] = 1.0
    single = osc_norm(oracle, e)
    ok = abs(single - 0.5) <= 1e-6
    for _ in range(20):
        u, v = rng.standard_normal((2, iset.s_L))
        c = float(rng.normal()) * 3
        nu, nv, nuv = osc_norm(oracle, u), osc_norm(oracle, v), osc_norm(oracle, u + v)
        ok &= abs(osc_norm(oracle, c * u) - abs(c) * nu) <= 1e-6 * max(1, abs(c) * nu)
        ok &= nuv <= nu + nv + 1e-6
        ok &= abs(osc_norm(oracle, -u) - nu) <= 1e-6
    results.append(("norm-axioms", bool(ok), f"single Haar coefficient norm {single:.9f}"))

    # Oracle inequality for three noise families.
    fails = 0
    total = 0
    for d in (1, 4, 16):
        for noise_name in ("gaussian", "laplace"):
            scale = float(rng.uniform(0.2, 1.5))
            f = rng.standard_normal(d) * float(rng.uniform(0, 2))
            tau = float(rng.uniform(0.1, 3.0))
            if noise_name == "gaussian":
                fn = lambda g, k, d=d, s=scale: g.normal(0, s, (k, d))
            else:
                fn = lambda g, k, d=d, s=scale: g.laplace(0, s, (k, d))
            rep = risk.oracle_inequality_check(f, tau, fn, cfg.verify_reps, rng)
            fails += not rep.passed
            total += 1
    results.append(("oracle-inequality", fails == 0, f"{total - fails}/{total} configurations"))

    # Layer-cake identity on a heavy-ish sample.
    x = np.abs(rng.laplace(0, 1, 20000))
    err = 0.0
    for t in (0.0, 0.5, 1.0, 3.0):
        direct = float(np.mean(x**2 * (x >= t)))
        err = max(err, abs(direct - risk.layer_cake_second_moment(x, t)) / max(direct, 1e-12))
    results.append(("layer-cake", err <= 1e-9, f"max relative gap {err:.2e}"))
    return results


def run_verify(cfg: ExperimentConfig, out: str, threads: int = 1) -> tuple[list[str], bool]:
    res = verify_checks(cfg)
    path = write_csv(os.path.join(out, "verify.csv"), ["check", "passed", "detail"], res, cfg.hash())
    return [path], all(r[1] for r in res)


RUNNERS = {
    "simulate": run_simulate,
    "rate-sweep": run_rate_sweep,
    "pointwise-sweep": run_pointwise_sweep,
    "tails": run_tails,
    "hodge": run_hodge,
}
