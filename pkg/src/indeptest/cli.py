"""Command-line entry point: ``indeptest <subcommand> [options]``.

Exit codes: 0 success, 2 configuration error, 3 data error, 1 anything else
raised by the library.
"""

import argparse
import csv
import dataclasses
import json
import logging
import sys

from . import diffnet as dn
from .config import data_settings, load_config, run_config, sweep_config
from .datasets import load_paired_csv, make_sampler, shuffle_to_null, write_paired_csv
from .errors import ConfigError, DataError, IndepTestError
from .harness import curves_from_rows, perm_vs_asymptotics_report, power_sweep, read_sweep_csv, typeI_audit
from .methods import get_method
from .numkit import make_rng, stream_id
from .plotting import figure_path_for, plot_perm_report, plot_power_curves
from .testing import permutation_test, run_split_train_test, split_data, train

logger = logging.getLogger("indeptest")

RESULT_HEADER = ("method", "statistic", "p_value", "reject", "alpha", "n_perm", "seed")
AUDIT_HEADER = ("method", "dataset", "m", "n_datasets", "n_perm", "alpha", "rate", "stderr", "upper_band", "within_band")
DIAG_HEADER = ("m", "asymptotic", "simulated", "permutation", "sim_threshold", "stat_threshold_corr")


def _load_cfg(args):
    return load_config(args.config) if args.config else {}


def _dataset(cfg, args, n_default=1000):
    d = data_settings(cfg)
    for key in ("dataset", "param", "n", "seed", "csv"):
        v = getattr(args, key, None)
        if v is not None:
            d[key] = v
    if d.get("csv"):
        if not d.get("x_columns") or not d.get("y_columns"):
            raise ConfigError("CSV input needs x_columns and y_columns")
        return load_paired_csv(d["csv"], d["x_columns"], d["y_columns"])
    if "dataset" not in d:
        raise ConfigError("no dataset given: set [data] dataset or pass --dataset")
    sampler = make_sampler(d["dataset"], d.get("param", 4 if d["dataset"] == "hdgm" else 1))
    return sampler(d.get("n", n_default), make_rng(d.get("seed", 0), stream_id("data")))


def _sampler(cfg, args):
    d = data_settings(cfg)
    name = args.dataset or d.get("dataset")
    if name is None:
        raise ConfigError("no dataset given: set [data] dataset or pass --dataset")
    param = args.param if args.param is not None else d.get("param", 4 if name == "hdgm" else 1)
    return name, param, make_sampler(name, param)


def _write_rows(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=header)
        w.writeheader()
        for r in rows:
            w.writerow({k: r.get(k) for k in header})


def cmd_generate(args):
    cfg = _load_cfg(args)
    sample = _dataset(cfg, args)
    if args.null:
        sample = shuffle_to_null(sample, make_rng(args.seed or 0, stream_id("null")))
    write_paired_csv(args.out, sample)
    print(f"wrote {sample.m} rows to {args.out}")


def cmd_train(args):
    cfg = _load_cfg(args)
    rc = _override_run(run_config(cfg), args)
    method = get_method(rc.method)
    if not method.trainable:
        raise ConfigError(f"{method.name} has nothing to train")
    tr, va, _ = split_data(_dataset(cfg, args), rc.split)
    outcome = train(method, tr, rc.train, make_rng(rc.seed, stream_id("train", rc.method)), val_set=va)
    dn.save_params(args.checkpoint, outcome.params)
    print(f"trained {method.name} for {outcome.steps} steps; checkpoint {args.checkpoint}")


def _override_run(rc, args):
    kw = {}
    if getattr(args, "method", None):
        kw["method"] = args.method
    if getattr(args, "n_perm", None):
        kw["n_perm"] = args.n_perm
    if getattr(args, "alpha", None):
        kw["alpha"] = args.alpha
    if getattr(args, "seed", None) is not None:
        kw["seed"] = args.seed
    return dataclasses.replace(rc, **kw)


def cmd_test(args):
    cfg = _load_cfg(args)
    rc = _override_run(run_config(cfg), args)
    sample = _dataset(cfg, args)
    if args.checkpoint:
        # frozen parameters: test the whole sample, no split or training
        method = get_method(rc.method)
        params = dn.load_params(args.checkpoint)
        stat = method.statistic(params, rng=make_rng(rc.seed, stream_id("statistic", rc.method)))
        result = permutation_test(
            stat, sample, n_perm=rc.n_perm, alpha=rc.alpha, rng=make_rng(rc.seed, stream_id("permutation-test"))
        )
    else:
        manifest = args.out + ".manifest.json" if args.out else None
        _, result = run_split_train_test(rc, sample, manifest_path=manifest)
    row = {
        "method": rc.method,
        "statistic": result.statistic,
        "p_value": result.p_value,
        "reject": int(result.reject),
        "alpha": result.alpha,
        "n_perm": result.n_perm,
        "seed": rc.seed,
    }
    if args.out:
        _write_rows(args.out, RESULT_HEADER, [row])
    print(json.dumps(row))


def cmd_power_sweep(args):
    cfg = _load_cfg(args)
    sc = sweep_config(cfg)
    manifest = args.out + ".manifest.json"
    power_sweep(sc, args.out, manifest_path=manifest, resume=not args.fresh)
    curves = curves_from_rows(read_sweep_csv(args.out), sc.n_tests)
    fig = plot_power_curves(curves, figure_path_for(args.out), title=f"{sc.dataset}-{sc.dataset_param}")
    print(f"wrote {args.out} and {fig}")


def cmd_typeI_audit(args):
    cfg = _load_cfg(args)
    rc = _override_run(run_config(cfg), args)
    name, param, sampler = _sampler(cfg, args)
    method = get_method(rc.method)
    rng = make_rng(rc.seed, stream_id("typeI", rc.method))
    params = dn.load_params(args.checkpoint) if args.checkpoint else {}
    if method.trainable and not args.checkpoint:
        raise ConfigError(f"{method.name} needs --checkpoint for an audit")
    audit = typeI_audit(method.statistic(params, rng=rng), sampler, args.m, args.n_datasets, rng, rc.n_perm, rc.alpha)
    row = dict(audit, method=rc.method, dataset=f"{name}-{param}", m=args.m, n_perm=rc.n_perm)
    if args.out:
        _write_rows(args.out, AUDIT_HEADER, [row])
    print(json.dumps({k: row[k] for k in AUDIT_HEADER}))


def cmd_diagnose_perm(args):
    cfg = _load_cfg(args)
    rc = _override_run(run_config(cfg), args)
    _, _, sampler = _sampler(cfg, args)
    method = get_method(rc.method)
    if method.trainable and not args.checkpoint:
        raise ConfigError(f"{method.name} needs --checkpoint for diagnostics")
    params = dn.load_params(args.checkpoint) if args.checkpoint else {}
    rng = make_rng(rc.seed, stream_id("diagnose", rc.method))
    m_grid = [int(t) for t in args.m_grid.split(",")]
    report = perm_vs_asymptotics_report(
        method, params, sampler, m_grid, rng, n_tests=args.n_tests, n_perm=rc.n_perm, alpha=rc.alpha
    )
    _write_rows(args.out, DIAG_HEADER, report["rows"])
    fig = plot_perm_report(report, figure_path_for(args.out), title=method.name)
    print(f"wrote {args.out} and {fig}")


def build_parser():
    p = argparse.ArgumentParser(prog="indeptest", description="Learned-representation independence tests.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, data=True):
        sp.add_argument("--config", help="INI config file")
        sp.add_argument("--seed", type=int)
        if data:
            sp.add_argument("--dataset", choices=["hdgm", "sinusoid"])
            sp.add_argument("--param", type=int, help="HDGM dimension d or sinusoid frequency")
            sp.add_argument("--n", type=int, help="number of generated points")
            sp.add_argument("--csv", help="paired CSV input instead of a generator")

    g = sub.add_parser("generate", help="write a synthetic dataset to CSV")
    common(g)
    g.add_argument("--null", action="store_true", help="shuffle y to break dependence")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="train only and write a checkpoint")
    common(t)
    t.add_argument("--method")
    t.add_argument("--checkpoint", required=True)
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("test", help="split, train and permutation-test one dataset")
    common(s)
    s.add_argument("--method")
    s.add_argument("--n-perm", type=int)
    s.add_argument("--alpha", type=float)
    s.add_argument("--checkpoint", help="frozen parameters; skips splitting and training")
    s.add_argument("--out", help="result CSV")
    s.set_defaults(func=cmd_test)

    w = sub.add_parser("power-sweep", help="power versus test size, CSV plus figure")
    common(w, data=False)
    w.add_argument("--out", required=True)
    w.add_argument("--fresh", action="store_true", help="ignore existing rows instead of resuming")
    w.set_defaults(func=cmd_power_sweep)

    a = sub.add_parser("typeI-audit", help="rejection rate on shuffled null data")
    common(a)
    a.add_argument("--method")
    a.add_argument("--checkpoint")
    a.add_argument("--m", type=int, default=512)
    a.add_argument("--n-datasets", type=int, default=400)
    a.add_argument("--n-perm", type=int)
    a.add_argument("--alpha", type=float)
    a.add_argument("--out")
    a.set_defaults(func=cmd_typeI_audit)

    d = sub.add_parser("diagnose-perm", help="asymptotic vs simulated vs permutation power")
    common(d)
    d.add_argument("--method")
    d.add_argument("--checkpoint")
    d.add_argument("--m-grid", default="64,128,256,512")
    d.add_argument("--n-tests", type=int, default=200)
    d.add_argument("--n-perm", type=int)
    d.add_argument("--alpha", type=float)
    d.add_argument("--out", required=True)
    d.set_defaults(func=cmd_diagnose_perm)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except (IndepTestError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
