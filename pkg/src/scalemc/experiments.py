"""Experiment harness: builds models and samplers from an ExperimentConfig,
runs chains, and writes samples, skeletons and JSON reports.

Chain k draws from child k of ``SeedSequence(seed)``, so its output does not
depend on the number of chains or workers. Chains may run in a process pool;
results are merged in chain order.
"""
from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import classic_mcmc as cm
from . import diagnostics as dg
from . import grad_estimators as ge
from . import io, pdmp, sgmcmc, stein
from ._rng import chain_seeds
from .config import MH_SAMPLERS, PDMP_SAMPLERS, SG_SAMPLERS, ExperimentConfig, parse_number
from .errors import ConfigError, DivergenceError
from .models import CustomGaussian, load_model

KSD_MAX_POINTS = 5000


@dataclass
class ChainResult:
    states: np.ndarray
    accepted: np.ndarray
    skeleton: pdmp.Skeleton | None = None
    stats: dict | None = None


def build_model(config: ExperimentConfig):
    return load_model(config.model, config.model_params, np.random.default_rng(config.data_seed), config.data)


def initial_state(config: ExperimentConfig, target) -> np.ndarray:
    if config.theta0:
        if len(config.theta0) != target.dim:
            raise ConfigError(f"theta0 has {len(config.theta0)} entries, model dimension is {target.dim}", ["theta0"])
        return np.array(config.theta0, dtype=float)
    return np.zeros(target.dim)


def _opt(params: dict, key: str, default, kind=float):
    return parse_number(params[key], f"sampler.{key}", kind) if key in params else default


def _step(params, target):
    raw = params.get("step", "auto")
    if raw == "auto":
        return sgmcmc.auto_step(target)
    return parse_number(raw, "sampler.step")


def _sg_config(sampler: str, params: dict, target) -> sgmcmc.SgmcmcConfig:
    step = _step(params, target)
    n = target.n_data
    batch = _opt(params, "batch", max(1, n // 10) if n else None, int)
    base = sampler.split("-")[0]
    suffix = sampler[len(base) + 1 :]
    friction = _opt(params, "friction", 1.0) if base == "sghmc" else None
    if sampler == "ula":
        return sgmcmc.SgmcmcConfig(step)
    if not n:
        raise ConfigError(f"{sampler} needs a model with data", ["model", "sampler"])
    if suffix == "cv":
        return sgmcmc.SgmcmcConfig(step, batch, "cv", friction=friction, anchor=ge.build_anchor(target))
    if suffix == "ps":
        w = ge.preferential_weights(target, ge.find_mode(target))
        return sgmcmc.SgmcmcConfig(step, batch, "preferential", friction=friction, weights=w)
    return sgmcmc.SgmcmcConfig(step, batch, "simple", friction=friction)


def _default_pdmp_mode(target, sampler):
    if sampler == "boomerang":
        return None
    if isinstance(target, CustomGaussian):
        return "exact-gaussian"
    if target.hessian_bound() is not None:
        return "hessian-bound"
    return "cc"


def run_chain(config: ExperimentConfig, target, index: int, ss: np.random.SeedSequence) -> ChainResult:
    """One chain of the configured sampler, seeded by ``ss``."""
    p = config.sampler_params
    s = config.sampler
    rng = np.random.default_rng(ss)
    theta0 = initial_state(config, target)
    d = target.dim
    if s in MH_SAMPLERS:
        if s == "rwm":
            out = cm.run_mh(target, cm.RWM(_opt(p, "scale", 2.38 / math.sqrt(d))), theta0, config.iters, rng=rng)
        elif s == "mala":
            out = cm.run_mh(target, cm.MALA(_opt(p, "scale", 1.65 * d ** (-1 / 6))), theta0, config.iters, rng=rng)
        elif s == "hmc":
            out = cm.run_hmc(target, theta0, config.iters, _opt(p, "eps", 0.1), _opt(p, "steps", 10, int), rng=rng)
        elif s == "guided":
            out = cm.run_guided_rw(target, theta0, config.iters, _opt(p, "delta", 2.38 / math.sqrt(d)), rng=rng)
        elif s == "horowitz":
            out = cm.run_horowitz(target, theta0, config.iters, _opt(p, "gamma", 0.9), _opt(p, "eps", 0.1),
                                  _opt(p, "steps", 1, int), rng=rng)
        else:
            out = cm.run_dbps(target, theta0, config.iters, _opt(p, "delta", 0.5), _opt(p, "gamma", 0.9), rng=rng)
        acc = out.accepted if out.accepted is not None else np.ones(out.n, dtype=bool)
        return ChainResult(out.states, acc.astype(int))
    if s == "ring":
        S = _opt(p, "S", 100, int)
        law_name = p.get("law", "symmetric")
        if law_name not in ("symmetric", "biased"):
            raise ConfigError("sampler.law must be symmetric or biased", ["sampler.law"])
        law = cm.RingLaw.symmetric(_opt(p, "h", 1, int)) if law_name == "symmetric" else cm.RingLaw.biased()
        x = cm.ring_walk_run(_opt(p, "x0", 0, int), S, config.iters, law, rng)
        return ChainResult(x.reshape(-1, 1).astype(float), np.ones(config.iters, dtype=int))
    if s in SG_SAMPLERS:
        cfg = _sg_config(s, p, target)
        seed = ss
        if s.startswith("sghmc"):
            out = sgmcmc.run_sghmc(target, cfg, theta0, config.iters, seed=seed)
        else:
            out = sgmcmc.run_sgld(target, cfg, theta0, config.iters, seed=seed)
        return ChainResult(out.states, np.ones(out.n, dtype=int))
    mode = p.get("mode", _default_pdmp_mode(target, s))
    refresh = _opt(p, "refresh", 1.0)
    window = _opt(p, "window", 1.0)
    T = config.horizon
    if s == "zigzag":
        anchor = ge.build_anchor(target) if mode == "subsample-cv" else None
        sk = pdmp.zigzag_run(target, T, theta0, mode=mode, rng=rng, window=window, anchor=anchor,
                             bound_form=p.get("bound_form", "energy"))
    elif s == "bps":
        sk = pdmp.bps_run(target, T, theta0, refresh=refresh, rng=rng, mode=mode, window=window,
                          velocity_law=p.get("velocity", "gaussian"))
    elif s == "coord":
        sk = pdmp.coordinate_run(target, T, theta0, refresh=refresh, rng=rng, mode=mode, window=window)
    else:
        sk = pdmp.boomerang_run(target, T, theta0, refresh=refresh, rng=rng)
    X = sk.grid(config.grid, config.burn_in)
    return ChainResult(X, np.ones(X.shape[0], dtype=int), sk, _scalar_stats(sk.stats))


def _scalar_stats(stats: dict) -> dict:
    return {k: v for k, v in (stats or {}).items() if np.isscalar(v)}


def _run_one(args):
    config, index, ss = args
    return run_chain(config, build_model(config), index, ss)


def run_chains(config: ExperimentConfig) -> list[ChainResult]:
    seeds = chain_seeds(config.seed, config.chains)
    jobs = [(config, k, ss) for k, ss in enumerate(seeds)]
    if config.workers > 1 and config.chains > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            return list(pool.map(_run_one, jobs))
    target = build_model(config)
    return [run_chain(config, target, k, ss) for _, k, ss in jobs]


def skeleton_path(base: str, index: int, n_chains: int) -> Path:
    base = Path(base)
    if n_chains == 1:
        return base
    return base.with_name(f"{base.stem}.chain{index}{base.suffix}")


def compute_diagnostics(names, chains, target=None, burn_in: int = 0, ring_size: int | None = None,
                        grads=None) -> dict:
    """Diagnostics on a list of (n, d) chains after dropping ``burn_in`` rows.

    KSD uses ``grads`` (chains of gradients) if given, else ``target``, on at
    most KSD_MAX_POINTS evenly spaced pooled points.
    """
    kept = [c[burn_in:] for c in chains]
    out: dict = {}
    if "rhat" in names:
        if len(kept) < 2:
            raise ConfigError("rhat needs at least 2 chains", ["rhat"])
        A = io.stack_chains(kept)
        out["rhat"] = [dg.gelman_rubin(A, j) for j in range(A.shape[2])]
    if "ess" in names:
        out["ess"] = [float(sum(dg.ess(c[:, j]) for c in kept)) for j in range(kept[0].shape[1])]
    if "tvd" in names:
        if ring_size is None:
            raise ConfigError("tvd needs ring states and a ring size", ["tvd"])
        states = np.concatenate(kept)[:, 0]
        if np.any(states != np.round(states)) or states.min() < 0 or states.max() >= ring_size:
            raise ConfigError(f"tvd needs integer states in [0, {ring_size})", ["tvd"])
        out["tvd"] = dg.occupation_tvd(states.astype(np.int64), ring_size)
    if "ksd" in names:
        X = np.concatenate(kept)
        idx = np.unique(np.linspace(0, X.shape[0] - 1, min(X.shape[0], KSD_MAX_POINTS)).astype(int))
        if grads is not None:
            G = np.concatenate([g[burn_in:] for g in grads])
            if G.shape != X.shape:
                raise ConfigError("gradients do not match samples", ["grads"])
            G = G[idx]
        elif target is not None:
            G = target.grad_log_pdf_batch(X[idx])
        else:
            raise ConfigError("ksd needs a model or gradients", ["ksd"])
        out["ksd"] = stein.ksd(X[idx], G)
    return out


def run_sample(config: ExperimentConfig) -> dict:
    """Run the configured sampler, write outputs, and return the report."""
    config.validate()
    results = run_chains(config)
    io.write_samples(config.out, [r.states for r in results], [r.accepted for r in results])
    if config.skeleton_out is not None:
        for k, r in enumerate(results):
            if r.skeleton is None:
                raise ConfigError("skeleton_out is only available for PDMP samplers", ["skeleton_out"])
            r.skeleton.to_jsonl(skeleton_path(config.skeleton_out, k, len(results)))
    chains = []
    for k, r in enumerate(results):
        entry = {"chain": k, "n": int(r.states.shape[0]), "mean": r.states.mean(axis=0)}
        if config.sampler in MH_SAMPLERS:
            entry["acceptance_rate"] = float(r.accepted.mean())
        elif r.skeleton is not None:
            entry["events"] = int(r.skeleton.n_events)
            entry["stats"] = r.stats
        chains.append(entry)
    report = {"command": "sample", "config": config_dict(config), "chains": chains}
    if config.diagnostics:
        pdmp_run = config.sampler in PDMP_SAMPLERS
        burn = 0 if pdmp_run else int(config.burn_in)
        ring = _opt(config.sampler_params, "S", 100, int) if config.sampler == "ring" else None
        target = None if config.sampler == "ring" else build_model(config)
        report["diagnostics"] = compute_diagnostics(config.diagnostics, [r.states for r in results], target,
                                                    burn, ring)
    if config.report is not None:
        io.write_json(config.report, report)
    return report


def config_dict(config: ExperimentConfig) -> dict:
    d = asdict(config)
    return {f.name: d[f.name] for f in fields(config) if d[f.name] not in (None, ())}


# ---------------------------------------------------------------- presets


def _w2_to(target, X) -> float:
    return dg.w2_gaussian(X.mean(axis=0), np.atleast_2d(np.cov(X.T)), target.mean, target.cov)


def preset_gaussian_ula_vs_mala(config: ExperimentConfig, out_dir: Path) -> dict:
    """W2 of the pooled chains' Gaussian fit against the target, versus budget.

    Both samplers use the same step. ULA costs one gradient per iteration,
    MALA one gradient and one density. Measured wall-clock times go to a
    separate file because they are not reproducible.
    """
    p = config.sampler_params
    d = int(config.model_params.get("dim", 10))
    delta = _opt(p, "step", 0.5)
    n = config.iters if config.iters != ExperimentConfig.iters else 20000
    L = max(config.chains, 4)
    start = _opt(p, "start", 3.0)
    target = CustomGaussian(np.zeros(d), np.eye(d))
    theta0 = np.full(d, start)
    seeds = chain_seeds(config.seed, L)
    budgets = np.unique(np.geomspace(10, n, 20).astype(int))
    runs, secs = {}, {}
    t0 = time.perf_counter()
    runs["ula"] = [sgmcmc.run_ula(target, delta, theta0, n, seed=ss).states for ss in seeds]
    secs["ula"] = (time.perf_counter() - t0) / (L * n)
    t0 = time.perf_counter()
    runs["mala"] = [cm.run_mh(target, cm.MALA(math.sqrt(delta)), theta0, n, rng=np.random.default_rng(ss)).states
                    for ss in seeds]
    secs["mala"] = (time.perf_counter() - t0) / (L * n)
    evals = {"ula": 1, "mala": 2}
    rows, wall_rows = [], []
    for name, chains in runs.items():
        for k in budgets:
            w = _w2_to(target, np.concatenate([c[:k] for c in chains]))
            rows.append([name, int(k), int(k * evals[name]), w])
            wall_rows.append([name, int(k), k * L * secs[name], w])
    cols = ["sampler", "iters", "evals", "w2"]
    io.write_curve_csv(out_dir / "gaussian-ula-vs-mala.csv", cols, rows)
    io.write_curve_csv(out_dir / "gaussian-ula-vs-mala_wallclock.csv", ["sampler", "iters", "seconds", "w2"],
                       wall_rows)
    summary = {"dim": d, "step": delta, "chains": L, "ula_bias_w2": math.sqrt(d) * abs(
        math.sqrt(sgmcmc.ula_stationary_variance(1.0, delta)) - 1.0)}
    return {"command": "experiment", "preset": "gaussian-ula-vs-mala", "columns": cols, "rows": rows,
            "summary": summary}


def preset_sgld_step_grid(config: ExperimentConfig, out_dir: Path) -> dict:
    """SGLD (simple estimator) on the conjugate Gaussian model with
    uncorrelated observation covariance; W2 to the exact posterior per step."""
    p = config.sampler_params
    mp = {"n_data": "1000", "dim": "2", **config.model_params}
    target = load_model("gaussian-conjugate", mp, np.random.default_rng(config.data_seed))
    n = config.iters if config.iters != ExperimentConfig.iters else 1000
    batch = _opt(p, "batch", max(1, target.n_data // 10), int)
    reps = max(config.chains, 10)
    steps = 10.0 ** np.arange(-5, 0)
    theta0 = np.zeros(target.dim)
    seeds = chain_seeds(config.seed, reps)
    rows = []
    for delta in steps:
        ws = []
        for ss in seeds:
            try:
                X = sgmcmc.run_sgld(target, sgmcmc.SgmcmcConfig(float(delta), batch, "simple"), theta0, n,
                                    seed=ss).states
                ws.append(_w2_to(target, X))
            except DivergenceError:
                ws.append(math.inf)
        rows.append([float(delta), float(np.mean(ws)), int(np.sum(np.isinf(ws)))])
    w2 = np.array([r[1] for r in rows])
    best = float(steps[int(np.argmin(w2))])
    cols = ["step", "w2", "diverged"]
    io.write_curve_csv(out_dir / "sgld-step-grid.csv", cols, rows)
    summary = {"n_data": target.n_data, "batch": batch, "iters": n, "replicates": reps, "argmin_step": best,
               "inverse_n": 1.0 / target.n_data}
    return {"command": "experiment", "preset": "sgld-step-grid", "columns": cols, "rows": rows, "summary": summary}


PRESET_FUNCS = {"gaussian-ula-vs-mala": preset_gaussian_ula_vs_mala, "sgld-step-grid": preset_sgld_step_grid}


def run_experiment(config: ExperimentConfig, out_dir=".") -> dict:
    """Run a preset (``config.preset``) or a plain sampling experiment."""
    config.validate()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if config.preset is None:
        # relative output paths live under out_dir
        moved = {k: str(out_dir / v) for k in ("out", "report", "skeleton_out")
                 if (v := getattr(config, k)) is not None and not Path(v).is_absolute()}
        return run_sample(replace(config, **moved))
    report = PRESET_FUNCS[config.preset](config, out_dir)
    io.write_json(config.report or out_dir / f"{config.preset}.json", report)
    return report


def convert_skeleton(skeleton_file, n_grid: int, out, burn_in: float = 0.0) -> np.ndarray:
    """Grid samples from a skeleton file, written as a one-chain samples CSV."""
    sk = pdmp.Skeleton.from_jsonl(skeleton_file)
    X = sk.grid(n_grid, burn_in)
    io.write_samples(out, [X])
    return X
