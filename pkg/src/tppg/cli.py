"""``tppg`` command line: simulate, fit, cv, evaluate, roc, bootstrap, reproduce.

Every command computes all of its outputs in memory before writing any of
them, then writes a ``<out>.manifest.json`` (files) or ``manifest.json``
(directories) recording the config, seed, version, wall time and digests.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path
from typing import Optional

import numpy as np

from tppg import __version__
from tppg import config as C
from tppg import io
from tppg.bootstrap import bootstrap_graph
from tppg.design import discretize
from tppg.estimate import fit, with_lambda
from tppg.experiments import (TABLES, filter_cells, format_records_csv, format_table_csv,
                              format_table_markdown, run_table, study_for_scale, summarize)
from tppg.metrics import rel_fro_error, rel_l1_error, roc_over_path, support_rates
from tppg.selection import cross_validate, lambda_grid, lambda_max
from tppg.simulate import SimConfig, simulate

log = logging.getLogger("tppg")


class CLIError(Exception):
    pass


def _manifest(command: str, cfg: Optional[C.RunConfig], seed, started: float, **extra) -> dict:
    return {"command": command, "config": cfg.snapshot() if cfg is not None else None, "seed": seed,
            "version": __version__, "wall_time_s": round(time.perf_counter() - started, 3), **extra}


def _emit_file(out: Path, text: str, manifest: dict) -> None:
    io.write_outputs({out: text}, manifest, out.with_name(out.name + ".manifest.json"))


def _emit_dir(out: Path, files: dict, manifest: dict) -> None:
    io.write_outputs({out / name: text for name, text in files.items()}, manifest, out / "manifest.json")


def _load(args) -> C.RunConfig:
    if args.config is None:
        raise CLIError("--config is required")
    return C.load_config(args.config)


def _read_data(args, cfg: C.RunConfig):
    if args.events is None:
        raise CLIError("an events file is required")
    return io.read_events(args.events, C.node_count(cfg), C.horizon(cfg))


def _design(cfg: C.RunConfig, data):
    kernel = C.kernel_spec(cfg)
    links = C.link_spec(cfg, data)
    return discretize(data, C.n_bins(cfg, data.horizon), kernel), links


def _roc_grid(cfg, design, links, fit_cfg):
    r = cfg.sections["roc"]
    if r["lambdas"] is not None:
        return np.asarray(r["lambdas"])
    return lambda_grid(lambda_max(design, links, fit_cfg.penalize_mu), r["n_lambdas"], r["ratio"])


def _num(v) -> str:
    """Shortest round-tripping decimal form of a float."""
    return repr(float(v))


# commands -------------------------------------------------------------------

def cmd_simulate(args) -> None:
    t0 = time.perf_counter()
    cfg = _load(args)
    model = C.model_spec(cfg)
    sim = cfg.sections["simulation"]
    seed = sim["seed"] if args.seed is None else args.seed
    data = simulate(model, SimConfig(C.horizon(cfg), seed=seed, burn_in=sim["burn_in"]))
    _emit_file(Path(args.out), io.format_events(data),
               _manifest("simulate", cfg, seed, t0, counts=data.counts()))


def _fit_lambda(cfg, design, links, fit_cfg, seed, threads):
    lam = cfg.sections["fit"]["lambda"]
    if lam != "cv":
        return float(lam), None
    cv = cross_validate(design, links, C.cv_config(cfg, seed), fit_cfg, threads)
    return cv.best_lambda, cv


def cmd_fit(args) -> None:
    t0 = time.perf_counter()
    cfg = _load(args)
    data = _read_data(args, cfg)
    design, links = _design(cfg, data)
    fit_cfg = C.fit_config(cfg)
    lam, cv = _fit_lambda(cfg, design, links, fit_cfg, args.seed, args.threads)
    res = fit(design, links, with_lambda(fit_cfg, lam))
    diag = {"lambda": lam, "weight_mode": res.weight_mode, "objective": res.objective,
            "iterations": res.iterations, "M": design.M, "T": design.horizon, "p": design.p}
    if cv is not None:
        diag["cv"] = {"lambdas": cv.lambdas, "mean": cv.mean, "se": cv.se}
    _emit_dir(Path(args.out), {"mu.csv": io.format_matrix(res.mu_hat[None, :]),
                               "B.csv": io.format_matrix(res.B_hat),
                               "diagnostics.json": io.dumps(diag)},
              _manifest("fit", cfg, args.seed, t0, events=str(args.events)))


def format_cv_curve(cv) -> str:
    lines = ["lambda,mean,se,selected"]
    for lam, m, s in zip(cv.lambdas, cv.mean, cv.se):
        lines.append(f"{_num(lam)},{_num(m)},{_num(s)},{int(lam == cv.best_lambda)}")
    return "\n".join(lines) + "\n"


def cmd_cv(args) -> None:
    t0 = time.perf_counter()
    cfg = _load(args)
    data = _read_data(args, cfg)
    design, links = _design(cfg, data)
    cv = cross_validate(design, links, C.cv_config(cfg, args.seed), C.fit_config(cfg), args.threads)
    print(f"selected lambda: {_num(cv.best_lambda)}")
    _emit_file(Path(args.out), format_cv_curve(cv),
               _manifest("cv", cfg, args.seed, t0, best_lambda=cv.best_lambda))


def format_metrics(B_hat, B_true) -> str:
    B_hat, B_true = np.asarray(B_hat), np.asarray(B_true)
    if B_hat.shape != B_true.shape:
        raise CLIError(f"dimension mismatch: fit {B_hat.shape} vs truth {B_true.shape}")
    tpr, fpr = support_rates(B_hat, B_true)
    rows = [("rel_l1", rel_l1_error(B_hat, B_true)), ("rel_fro", rel_fro_error(B_hat, B_true)),
            ("tpr", tpr), ("fpr", fpr)]
    return "metric,value\n" + "".join(f"{k},{_num(v)}\n" for k, v in rows)


def _fit_matrix(path) -> np.ndarray:
    path = Path(path)
    return io.read_matrix(path / "B.csv" if path.is_dir() else path)


def cmd_evaluate(args) -> None:
    t0 = time.perf_counter()
    if args.fit is None or args.truth is None:
        raise CLIError("evaluate needs --fit and --truth")
    text = format_metrics(_fit_matrix(args.fit), io.read_matrix(args.truth))
    _emit_file(Path(args.out), text, _manifest("evaluate", None, None, t0, fit=str(args.fit),
                                                truth=str(args.truth)))


def format_roc(roc) -> str:
    lines = ["fpr,tpr,lambda"]
    lines += [f"{_num(f)},{_num(t)},{'' if np.isnan(lam) else _num(lam)}"
              for f, t, lam in zip(roc.fpr.tolist(), roc.tpr.tolist(), roc.lambdas.tolist())]
    lines.append(f"# auc={_num(roc.auc)}")
    return "\n".join(lines) + "\n"


def cmd_roc(args) -> None:
    t0 = time.perf_counter()
    cfg = _load(args)
    data = _read_data(args, cfg)
    design, links = _design(cfg, data)
    B_true = io.read_matrix(args.truth) if args.truth is not None else C.transfer_matrix(cfg)
    if B_true.shape != (design.p, design.p):
        raise CLIError(f"dimension mismatch: truth {B_true.shape} vs p={design.p}")
    fit_cfg = C.fit_config(cfg)
    roc = roc_over_path(design, links, _roc_grid(cfg, design, links, fit_cfg), B_true, fit_cfg)
    print(f"auc: {roc.auc:.6f}")
    _emit_file(Path(args.out), format_roc(roc), _manifest("roc", cfg, args.seed, t0, auc=roc.auc))


def format_edges(result) -> tuple[str, str]:
    freq = result.frequencies
    lines = ["target,source,sign,frequency"]
    for j, k in zip(*np.nonzero(freq.sum(axis=2))):
        for idx, sign in ((0, 1), (1, -1)):
            if freq[j, k, idx] > 0:
                lines.append(f"{j},{k},{sign},{_num(freq[j, k, idx])}")
    kept = ["target,source,sign"] + [f"{j},{k},{s}" for j, k, s in sorted(result.graph.edges)]
    return "\n".join(lines) + "\n", "\n".join(kept) + "\n"


def cmd_bootstrap(args) -> None:
    t0 = time.perf_counter()
    cfg = _load(args)
    data = _read_data(args, cfg)
    design, links = _design(cfg, data)
    bcfg = C.bootstrap_config(cfg, args.seed)
    res = bootstrap_graph(design, links, bcfg, C.fit_config(cfg))
    edges, graph = format_edges(res)
    _emit_dir(Path(args.out), {"edges.csv": edges, "graph.csv": graph,
                               "lambdas.csv": "lambda\n" + "".join(f"{_num(v)}\n" for v in res.lambdas)},
              _manifest("bootstrap", cfg, bcfg.seed, t0, n_edges=len(res.graph)))


def cmd_reproduce(args) -> None:
    t0 = time.perf_counter()
    seed = 0 if args.seed is None else args.seed
    cells, study = study_for_scale(args.scale, seed, args.replicates)
    cells = filter_cells(cells, args.settings, args.structures)
    if not cells:
        raise CLIError("no cells left after filtering")
    _, methods = TABLES[args.table]
    methods = tuple(args.methods) if args.methods else methods
    records = run_table(args.table, cells, study, methods, threads=args.threads)
    rows = summarize(records, args.table)
    name = {"t1": "table1", "t2": "table2", "t3": "table3"}[args.table]
    _emit_dir(Path(args.out), {f"{name}.csv": format_table_csv(rows, args.table, methods),
                               f"{name}.md": format_table_markdown(rows, args.table, methods),
                               f"{name}_replicates.csv": format_records_csv(records, args.table)},
              _manifest("reproduce", None, seed, t0, table=args.table, scale=args.scale,
                        replicates=study.n_replicates, methods=list(methods)))


# argument parsing ------------------------------------------------------------

COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "cv": cmd_cv, "evaluate": cmd_evaluate,
            "roc": cmd_roc, "bootstrap": cmd_bootstrap, "reproduce": cmd_reproduce}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run configuration")
    common.add_argument("--seed", type=int, default=None, help="override the command's seed")
    common.add_argument("--threads", type=int, default=1, help="maximum worker count")
    common.add_argument("--out", required=True, help="output file or directory")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="tppg", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"tppg {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="simulate events to CSV")
    for name, text in (("fit", "fit mu and B"), ("cv", "cross-validate the penalty"),
                       ("bootstrap", "stability-selected signed graph")):
        sp = sub.add_parser(name, parents=[common], help=text)
        sp.add_argument("events", nargs="?", help="event CSV (node_id,time)")
    sp = sub.add_parser("roc", parents=[common], help="ROC over the penalty path")
    sp.add_argument("events", nargs="?")
    sp.add_argument("--truth", help="true B as CSV (default: the config's model)")
    sp = sub.add_parser("evaluate", parents=[common], help="error and support metrics")
    sp.add_argument("--fit", help="fit directory or B.csv")
    sp.add_argument("--truth", help="true B as CSV")
    sp = sub.add_parser("reproduce", parents=[common], help="simulation-study tables")
    sp.add_argument("--table", choices=sorted(TABLES), required=True)
    sp.add_argument("--scale", choices=("desk", "full"), default="desk")
    sp.add_argument("--replicates", type=int, default=None, help="override the replicate count")
    sp.add_argument("--settings", type=int, nargs="+", choices=(1, 2), default=None)
    sp.add_argument("--structures", nargs="+", choices=("block", "chain"), default=None)
    sp.add_argument("--methods", nargs="+", default=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 2
    try:
        COMMANDS[args.command](args)
    except C.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (CLIError, io.DataFormatError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
