"""Command-line entry point: ``python -m onebitcov <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 numerical failure, 3 acceptance
violation.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import bench, doa
from .errors import OneBitError
from .quantizer import (
    OneBitBatch,
    PairParams,
    ThresholdSchedule,
    quantize_complex,
    quantize_real,
    sample_complex_gaussian,
    sample_gaussian,
)
from .recovery import METHODS, recover_complex, recover_matrix
from .theory import predict_mse

EXIT_USAGE, EXIT_NUMERIC, EXIT_ACCEPT = 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _load_json(path):
    if path is None:
        return {}
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc


def _apply_overrides(cfg, pairs):
    for item in pairs or []:
        if "=" not in item:
            raise UsageError(f"override {item!r} is not key=value")
        key, raw = item.split("=", 1)
        try:
            val = json.loads(raw)
        except json.JSONDecodeError:
            val = raw
        cfg[key] = val
    return cfg


def _check_keys(cfg, allowed, what):
    extra = set(cfg) - set(allowed)
    if extra:
        raise UsageError(f"unknown {what} keys: {sorted(extra)}")


def _emit(text, out):
    if out:
        bench.atomic_write(out, text)
    else:
        sys.stdout.write(text)


def _params(d):
    d = dict(d)
    if "rho" in d:
        return PairParams.from_rho(d["sigma1"], d["sigma2"], d["rho"])
    return PairParams(**d)


# -- recover ----------------------------------------------------------------

RECOVER_KEYS = ("input", "params", "cov", "complex", "schedule", "seed", "method", "psd")


def _load_batch(cfg):
    if cfg.get("input"):
        path = Path(cfg["input"])
        if path.suffix == ".csv":
            return OneBitBatch.from_csv(path.read_text(), seed=int(cfg.get("seed", 0)))
        return OneBitBatch.from_bytes(path.read_bytes())
    if "schedule" not in cfg:
        raise UsageError("synthetic recovery needs a schedule")
    sched = ThresholdSchedule.from_dict(cfg["schedule"])
    seed = int(cfg.get("seed", 0))
    if "cov" in cfg:
        cov = np.array(cfg["cov"], dtype=complex if cfg.get("complex") else float)
    elif "params" in cfg:
        cov = _params(cfg["params"]).cov()
    else:
        raise UsageError("synthetic recovery needs params or cov")
    if cov.shape[0] != sched.n_channels:
        raise UsageError("covariance size does not match schedule n_channels")
    if cfg.get("complex"):
        return quantize_complex(sample_complex_gaussian(cov, sched.n_samples, seed), sched, seed)
    return quantize_real(sample_gaussian(cov.real, sched.n_samples, seed), sched, seed)


def cmd_recover(args):
    cfg = _load_json(args.config)
    _apply_overrides(cfg, args.set)
    if args.schedule:
        cfg["schedule"] = _load_json(args.schedule)
    if args.method:
        cfg["method"] = args.method
    if args.seed is not None:
        cfg["seed"] = args.seed
    cfg.setdefault("method", "time_varying")
    cfg.setdefault("psd", False)
    _check_keys(cfg, RECOVER_KEYS, "recover config")
    if cfg["method"] not in METHODS:
        raise UsageError(f"unknown method {cfg['method']!r}")
    batch = _load_batch(cfg)
    fn = recover_complex if batch.is_complex else recover_matrix
    est = fn(batch, cfg["method"], psd=bool(cfg["psd"]))
    head = f"# config={json.dumps(cfg, sort_keys=True)}\n"
    if args.out and args.out.endswith(".json"):
        _emit(json.dumps({"config": cfg, "estimate": est.to_dict()}, indent=2) + "\n", args.out)
    else:
        _emit(head + est.to_csv(), args.out)
    return 0


# -- predict ----------------------------------------------------------------

def cmd_predict(args):
    cfg = _load_json(args.config)
    _apply_overrides(cfg, args.set)
    if args.schedule:
        cfg["schedule"] = _load_json(args.schedule)
    if args.method:
        cfg["method"] = args.method
    _check_keys(cfg, ("params", "schedule", "method"), "predict config")
    if "params" not in cfg or "schedule" not in cfg:
        raise UsageError("predict needs params and a schedule")
    params = _params(cfg["params"])
    sched = ThresholdSchedule.from_dict(cfg["schedule"])
    rep = predict_mse(params, sched, cfg.get("method"))
    doc = {"config": cfg, "report": rep.to_dict()}
    _emit(json.dumps(doc, indent=2) + "\n", args.out)
    return EXIT_NUMERIC if rep.rank_deficient else 0


# -- bench ------------------------------------------------------------------

def cmd_bench(args):
    if bool(args.builtin) == bool(args.config):
        raise UsageError("bench needs exactly one of --builtin or --config")
    if args.builtin:
        try:
            cfg = bench.builtin(args.builtin)
        except KeyError as exc:
            raise UsageError(str(exc)) from exc
        d = cfg.to_dict()
    else:
        d = _load_json(args.config)
    _apply_overrides(d, args.set)
    if args.trials is not None:
        d["trials"] = args.trials
    if args.seed is not None:
        d["base_seed"] = args.seed
    if args.threads is not None:
        d["threads"] = args.threads
    if args.out:
        d["output"] = args.out
    cfg = bench.ExperimentConfig.from_dict(d)
    if cfg.name == "table1":
        rows, meta = bench.table1(cfg)
        _emit(bench.table1_csv(rows, meta, cfg), cfg.output)
        by_name = {r.parameter: r for r in rows}
        bad = []
        for e in cfg.expect:
            val = by_name[e["parameter"]].mse_separate
            if abs(val / e["target"] - 1) > e["rel_tol"]:
                bad.append(f"{e['parameter']}: {val:.4g} vs {e['target']:.4g}")
    else:
        rows = bench.run(cfg, write=False)
        _emit(bench.rows_to_csv(rows, cfg), cfg.output)
        bad = bench.check_expectations(rows, cfg.expect)
    for b in bad:
        print(f"acceptance band violated: {b}", file=sys.stderr)
    return EXIT_ACCEPT if bad else 0


# -- doa --------------------------------------------------------------------

def cmd_doa(args):
    cfg = _load_json(args.config)
    _apply_overrides(cfg, args.set)
    _check_keys(cfg, ("scenario", "trials", "seed", "methods"), "doa config")
    if args.trials is not None:
        cfg["trials"] = args.trials
    if args.seed is not None:
        cfg["seed"] = args.seed
    scen = doa.ArrayScenario(**cfg.get("scenario", {}))
    res = doa.doa_pipeline(scen, int(cfg.get("trials", 20)), int(cfg.get("seed", 0)),
                           cfg.get("methods", doa.DOA_METHODS), out=args.out)
    if not args.out:
        sys.stdout.write(res.rmse_csv())
    return 0


# -- selftest ---------------------------------------------------------------

def cmd_selftest(args):
    from .selftest import run_all

    failed = 0
    for name, ok, detail in run_all():
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
        failed += not ok
    return EXIT_ACCEPT if failed else 0


def build_parser():
    p = _Parser(prog="onebitcov", description="Covariance recovery from one-bit samples.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, *flags):
        sp.add_argument("--config", help="JSON config file")
        sp.add_argument("--out", help="output path (stdout if omitted)")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override a top-level config key (value parsed as JSON)")
        if "method" in flags:
            sp.add_argument("--method", choices=METHODS)
        if "schedule" in flags:
            sp.add_argument("--schedule", help="JSON threshold schedule file")
        if "seed" in flags:
            sp.add_argument("--seed", type=int)
        if "trials" in flags:
            sp.add_argument("--trials", type=int)

    common(sub.add_parser("recover", help="estimate a covariance matrix"), "method", "schedule", "seed")
    common(sub.add_parser("predict", help="theoretical MSE"), "method", "schedule")
    b = sub.add_parser("bench", help="Monte Carlo experiments")
    common(b, "seed", "trials")
    b.add_argument("--builtin", help="fig1 | fig2 | fig3 | fig4 | fig5 | table1")
    b.add_argument("--threads", type=int)
    common(sub.add_parser("doa", help="direction-of-arrival demo"), "seed", "trials")
    sub.add_parser("selftest", help="run the invariant suite")
    return p


HANDLERS = {
    "recover": cmd_recover,
    "predict": cmd_predict,
    "bench": cmd_bench,
    "doa": cmd_doa,
    "selftest": cmd_selftest,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return HANDLERS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OneBitError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, KeyError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
