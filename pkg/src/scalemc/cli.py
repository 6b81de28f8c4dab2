"""Command-line entry point: ``scalemc {sample,diagnose,weights,thin,convert,experiment}``.

Exit codes: 0 success, 2 configuration error, 3 numerical fault.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from . import experiments as ex
from . import io, stein
from .config import DIAGNOSTICS, MODELS, PRESETS, SAMPLERS, ExperimentConfig
from .errors import ConfigError, NumericalFault

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3

log = logging.getLogger("scalemc")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(f"{self.prog}: {message}", ["arguments"])


def _kv(items, flag):
    out = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigError(f"{flag} expects key=value, got {item!r}", [flag])
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _add_model_args(p, required=False):
    p.add_argument("--model", choices=MODELS, required=required)
    p.add_argument("--model-param", action="append", metavar="KEY=VALUE", help="model option, repeatable")
    p.add_argument("--data", help="CSV data file for data-driven models")
    p.add_argument("--data-seed", type=int, default=None, help="seed for synthetic data (default 0)")


def _model_from_args(args):
    if args.model is None:
        return None
    cfg = ExperimentConfig(model=args.model, model_params=_kv(args.model_param, "--model-param"), data=args.data,
                           data_seed=args.data_seed or 0)
    return ex.build_model(cfg)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="scalemc", description="Scalable Monte Carlo samplers and diagnostics.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("sample", help="run a sampler and write samples")
    s.add_argument("--config", help="key = value config file; flags override it")
    s.add_argument("--sampler", choices=SAMPLERS)
    _add_model_args(s)
    s.add_argument("--iters", type=int)
    s.add_argument("--horizon", type=float)
    s.add_argument("--grid", type=int, help="grid size for PDMP samples")
    s.add_argument("--burn-in", type=float)
    s.add_argument("--seed", type=int)
    s.add_argument("--chains", type=int)
    s.add_argument("--workers", type=int)
    s.add_argument("--theta0", help="comma separated start point")
    s.add_argument("--batch", help="minibatch size")
    s.add_argument("--step", help="step size or 'auto' (1/N)")
    s.add_argument("--refresh", help="PDMP refresh rate")
    s.add_argument("--mode", help="PDMP event-time mode")
    s.add_argument("--sampler-param", action="append", metavar="KEY=VALUE", help="sampler option, repeatable")
    s.add_argument("--out", help="samples CSV")
    s.add_argument("--skeleton-out", help="skeleton JSONL (PDMP samplers)")
    s.add_argument("--report", help="JSON report path")
    s.add_argument("--diagnostics", help=f"comma separated subset of {','.join(DIAGNOSTICS)}")
    s.add_argument("--write-config", help="also write the resolved config here")

    d = sub.add_parser("diagnose", help="diagnostics for a samples CSV")
    d.add_argument("samples")
    d.add_argument("--rhat", action="store_true")
    d.add_argument("--ess", action="store_true")
    d.add_argument("--tvd", action="store_true", help="ring occupation TVD; needs --ring-size")
    d.add_argument("--ring-size", type=int)
    d.add_argument("--ksd", action="store_true", help="needs --grads or --model")
    d.add_argument("--grads", help="gradient CSV matching the samples")
    d.add_argument("--burn-in", type=int, default=0)
    _add_model_args(d)
    d.add_argument("--out", help="JSON report path (default stdout)")

    for name, helptext in (("weights", "Stein-optimal weights"), ("thin", "greedy Stein thinning")):
        w = sub.add_parser(name, help=helptext)
        w.add_argument("samples")
        if name == "weights":
            w.add_argument("--mode", choices=("signed", "simplex"), default="simplex")
        else:
            w.add_argument("-m", type=int, required=True, help="number of points to select")
            w.add_argument("--samples-out", help="CSV of the selected rows")
        w.add_argument("--grads")
        w.add_argument("--kernel", choices=("imq", "tilted-imq"), default="imq")
        w.add_argument("--beta", type=float, default=0.5)
        w.add_argument("--no-standardize", action="store_true")
        _add_model_args(w)
        w.add_argument("--out", help="JSON output path (default stdout)")

    c = sub.add_parser("convert", help="skeleton JSONL to grid samples CSV")
    c.add_argument("skeleton")
    c.add_argument("--grid", type=int, required=True)
    c.add_argument("--burn-in", type=float, default=0.0)
    c.add_argument("--out", required=True)

    e = sub.add_parser("experiment", help="run a preset or a config file")
    e.add_argument("--preset", choices=PRESETS)
    e.add_argument("--config")
    e.add_argument("--seed", type=int)
    e.add_argument("--iters", type=int)
    e.add_argument("--out-dir", default=".")
    return parser


def _sample_config(args) -> ExperimentConfig:
    base = ExperimentConfig.from_file(args.config, validate=False) if args.config else ExperimentConfig()
    sp = _kv(args.sampler_param, "--sampler-param")
    for key in ("batch", "step", "refresh", "mode"):
        if getattr(args, key) is not None:
            sp[key] = getattr(args, key)
    theta0 = None
    if args.theta0 is not None:
        try:
            theta0 = tuple(float(x) for x in args.theta0.split(","))
        except ValueError as e:
            raise ConfigError(f"--theta0: {e}", ["theta0"]) from e
    diags = tuple(x.strip() for x in args.diagnostics.split(",") if x.strip()) if args.diagnostics else None
    return base.with_overrides(
        sampler=args.sampler, model=args.model, data=args.data, data_seed=args.data_seed, iters=args.iters,
        horizon=args.horizon, grid=args.grid, burn_in=args.burn_in, seed=args.seed, chains=args.chains,
        workers=args.workers, theta0=theta0, out=args.out, skeleton_out=args.skeleton_out, report=args.report,
        diagnostics=diags, model_params=_kv(args.model_param, "--model-param"), sampler_params=sp,
    ).validate()


def _emit(obj, path):
    if path:
        io.write_json(path, obj)
    else:
        print(json.dumps(io.jsonable(obj), indent=2, sort_keys=True))


def cmd_sample(args) -> None:
    cfg = _sample_config(args)
    if args.write_config:
        cfg.write(args.write_config)
    report = ex.run_sample(cfg)
    if cfg.report is None:
        _emit(report, None)


def cmd_diagnose(args) -> None:
    chains, _ = io.read_samples(args.samples)
    names = [n for n in DIAGNOSTICS if getattr(args, n)]
    if not names:
        raise ConfigError("choose at least one of --rhat --ess --tvd --ksd", ["diagnostics"])
    grads = io.read_gradients(args.grads) if args.grads else None
    target = _model_from_args(args)
    report = {"command": "diagnose", "n_chains": len(chains), "n_iter": min(c.shape[0] for c in chains),
              "dim": chains[0].shape[1]}
    report.update(ex.compute_diagnostics(names, chains, target, args.burn_in, args.ring_size, grads))
    _emit(report, args.out)


def _points_and_grads(args):
    chains, _ = io.read_samples(args.samples)
    X = np.concatenate(chains)
    if args.grads:
        G = np.concatenate(io.read_gradients(args.grads))
        if G.shape != X.shape:
            raise ConfigError("gradients do not match samples", ["grads"])
    else:
        target = _model_from_args(args)
        if target is None:
            raise ConfigError("pass --grads or --model", ["grads", "model"])
        G = target.grad_log_pdf_batch(X)
    cfg = stein.SteinKernelConfig(args.kernel, beta=args.beta, standardize=not args.no_standardize)
    return X, G, cfg


def cmd_weights(args) -> None:
    X, G, cfg = _points_and_grads(args)
    K = stein.stein_matrix(X, G, cfg)
    converged = True
    if args.mode == "signed":
        w = stein.optimal_weights_signed(K)
    else:
        res = stein.optimal_weights_simplex(K)
        w, converged = res.weights, res.converged
    u = np.full(len(w), 1.0 / len(w))
    _emit({"command": "weights", "mode": args.mode, "weights": w, "converged": converged,
           "ksd": float(np.sqrt(max(w @ K @ w, 0.0))), "ksd_uniform": float(np.sqrt(max(u @ K @ u, 0.0)))},
          args.out)


def cmd_thin(args) -> None:
    X, G, cfg = _points_and_grads(args)
    if args.m < 1:
        raise ConfigError("-m must be >= 1", ["m"])
    idx = stein.greedy_thin(X, G, args.m, cfg)
    w = stein.thinned_weights(idx, X.shape[0])
    if args.samples_out:
        io.write_samples(args.samples_out, [X[idx]])
    _emit({"command": "thin", "mode": "greedy", "indices": idx, "weights": w, "ksd": stein.ksd(X, G, w, cfg),
           "ksd_uniform": stein.ksd(X, G, None, cfg)}, args.out)


def cmd_convert(args) -> None:
    ex.convert_skeleton(args.skeleton, args.grid, args.out, args.burn_in)


def cmd_experiment(args) -> None:
    if (args.preset is None) == (args.config is None):
        raise ConfigError("give exactly one of --preset or --config", ["preset", "config"])
    cfg = ExperimentConfig.from_file(args.config, validate=False) if args.config else ExperimentConfig(
        preset=args.preset)
    cfg = cfg.with_overrides(seed=args.seed, iters=args.iters).validate()
    ex.run_experiment(cfg, args.out_dir)


COMMANDS = {"sample": cmd_sample, "diagnose": cmd_diagnose, "weights": cmd_weights, "thin": cmd_thin,
            "convert": cmd_convert, "experiment": cmd_experiment}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
        COMMANDS[args.command](args)
    except ConfigError as e:
        fields = f" [fields: {', '.join(e.fields)}]" if e.fields else ""
        print(f"config error: {e}{fields}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalFault as e:
        print(f"numerical fault: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except SystemExit as e:
        return int(e.code or 0)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
