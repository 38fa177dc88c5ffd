"""Simulation study: simulate, fit and score replicates, and tabulate results.

Tables follow the layout of the published study: one row per
(setting, structure, p, T) cell and one ``mean(se)`` column per method.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from tppg.core import KernelSpec, LinkSpec, ModelSpec
from tppg.design import choose_M, discretize
from tppg.estimate import FitConfig, fit
from tppg.metrics import make_structure, rel_fro_error, rel_l1_error, roc_over_path
from tppg.selection import CVConfig, fit_cv, lambda_grid, lambda_max
from tppg.simulate import SimConfig, recommended_burn_in, simulate

log = logging.getLogger(__name__)

ERROR_METHODS = ("Sparse-Naive", "Sparse-MLE", "vanilla-MLE")
AUC_METHODS = ("Sparse-Naive", "Sparse-MLE")
TABLES = {"t1": ("rel_l1", ERROR_METHODS), "t2": ("rel_fro", ERROR_METHODS), "t3": ("auc", AUC_METHODS)}
TITLES = {"t1": "Estimation accuracy of B: relative l1 error",
          "t2": "Estimation accuracy of B: relative l2 error",
          "t3": "Mean area under the ROC curves"}


def setting_specs(setting: int) -> tuple[KernelSpec, LinkSpec]:
    """Kernel and link of simulation setting 1 (arctan) or 2 (sigmoid)."""
    if setting == 1:
        return KernelSpec.restricted_linear(), LinkSpec.arctan()
    if setting == 2:
        return KernelSpec.exponential(), LinkSpec.sigmoid()
    raise ValueError(f"unknown setting {setting!r}; expected 1 or 2")


def setting_model(setting: int, structure: str, p: int, mu: float = 0.5) -> ModelSpec:
    kernel, link = setting_specs(setting)
    return ModelSpec(mu, make_structure(structure, p), kernel, link)


@dataclass(frozen=True)
class Cell:
    setting: int
    structure: str
    p: int
    T: int


@dataclass(frozen=True)
class StudyConfig:
    """Replicate protocol shared by every cell."""

    n_replicates: int = 5
    seed: int = 0
    M_multiplier: float = 10
    burn_in: Optional[float] = None  # None: recommended_burn_in of the kernel
    cv: CVConfig = CVConfig()
    n_roc_lambdas: int = 30
    roc_ratio: float = 1e-3


def desk_cells() -> list[Cell]:
    return [Cell(s, st, 30, 200) for s in (1, 2) for st in ("block", "chain")]


def full_cells() -> list[Cell]:
    return [Cell(s, st, p, T) for s in (1, 2) for st in ("block", "chain")
            for p in (30, 60) for T in (200, 400)]


def replicate_seed(base: int, r: int) -> int:
    """Simulation seed of replicate ``r``; shared by all cells and methods."""
    return int(np.random.SeedSequence([base, r]).generate_state(1)[0])


def simulate_cell(cell: Cell, seed: int, study: StudyConfig):
    model = setting_model(cell.setting, cell.structure, cell.p)
    burn = recommended_burn_in(model) if study.burn_in is None else study.burn_in
    data = simulate(model, SimConfig(cell.T, seed=seed, burn_in=burn))
    design = discretize(data, choose_M(cell.T, study.M_multiplier), model.kernels)
    return model, design


def error_replicate(cell: Cell, r: int, study: StudyConfig, methods: Sequence[str] = ERROR_METHODS) -> dict:
    """rel_l1 and rel_fro of each method on replicate ``r`` of ``cell``."""
    model, design = simulate_cell(cell, replicate_seed(study.seed, r), study)
    out = {}
    for method in methods:
        if method == "vanilla-MLE":
            res, lam = fit(design, model.links, FitConfig(lam=0.0, weight_mode="mle")), 0.0
        else:
            mode = "naive" if method == "Sparse-Naive" else "mle"
            res, cv = fit_cv(design, model.links, study.cv, FitConfig(weight_mode=mode))
            lam = cv.best_lambda
        out[method] = {"rel_l1": rel_l1_error(res.B_hat, model.B),
                       "rel_fro": rel_fro_error(res.B_hat, model.B), "lambda": lam}
    return out


def auc_replicate(cell: Cell, r: int, study: StudyConfig, methods: Sequence[str] = AUC_METHODS) -> dict:
    """Area under the lambda-path ROC curve of each method on replicate ``r``."""
    model, design = simulate_cell(cell, replicate_seed(study.seed, r), study)
    out = {}
    for method in methods:
        cfg = FitConfig(weight_mode="naive" if method == "Sparse-Naive" else "mle")
        grid = lambda_grid(lambda_max(design, model.links, cfg.penalize_mu), study.n_roc_lambdas,
                           study.roc_ratio)
        roc = roc_over_path(design, model.links, grid, model.B, cfg)
        out[method] = {"auc": roc.auc}
    return out


def _run(args):
    table, cell, r, study, methods = args
    fn = auc_replicate if table == "t3" else error_replicate
    return fn(cell, r, study, methods)


def run_table(table: str, cells: Sequence[Cell], study: StudyConfig,
              methods: Optional[Sequence[str]] = None, threads: int = 1) -> list[dict]:
    """One record per (cell, replicate, method) with the table's metric(s).

    Replicates run in worker processes when ``threads > 1``; results do not
    depend on the worker count.
    """
    if table not in TABLES:
        raise ValueError(f"unknown table {table!r}; expected one of {sorted(TABLES)}")
    allowed = TABLES[table][1]
    methods = tuple(allowed if methods is None else methods)
    bad = [m for m in methods if m not in allowed]
    if bad:
        raise ValueError(f"methods {bad} not available for {table}; expected a subset of {allowed}")
    jobs = [(table, c, r, study, methods) for c in cells for r in range(study.n_replicates)]
    if threads > 1:
        with ProcessPoolExecutor(threads) as pool:
            results = list(pool.map(_run, jobs))
    else:
        results = []
        for job in jobs:
            log.info("%s %s replicate %d", table, job[1], job[2])
            results.append(_run(job))
    records = []
    for (_, cell, r, _, _), res in zip(jobs, results):
        for method, metrics in res.items():
            records.append({"setting": cell.setting, "structure": cell.structure, "p": cell.p,
                            "T": cell.T, "replicate": r, "method": method, **metrics})
    return records


def mean_se(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=float)
    se = float(v.std(ddof=1) / np.sqrt(v.size)) if v.size > 1 else float("nan")
    return float(v.mean()), se


def summarize(records: list[dict], table: str) -> list[dict]:
    """Rows ``{setting, structure, p, T, <method>: (mean, se)}`` in cell order."""
    metric, _ = TABLES[table]
    rows: dict = {}
    for rec in records:
        key = (rec["setting"], rec["structure"], rec["p"], rec["T"])
        rows.setdefault(key, {}).setdefault(rec["method"], []).append(rec[metric])
    return [{"setting": k[0], "structure": k[1], "p": k[2], "T": k[3],
             **{m: mean_se(v) for m, v in methods.items()}} for k, methods in rows.items()]


def _fmt(mean: float, se: float, table: str) -> str:
    se_digits = 4 if table == "t3" else 3
    return f"{mean:.3f}({se:.{se_digits}f})"


def format_table_csv(rows: list[dict], table: str, methods: Sequence[str]) -> str:
    lines = ["setting,structure,p,T," + ",".join(methods)]
    for row in rows:
        cells = [_fmt(*row[m], table) if m in row else "" for m in methods]
        lines.append(f"{row['setting']},{row['structure'].capitalize()},{row['p']},{row['T']}," + ",".join(cells))
    return "\n".join(lines) + "\n"


def format_table_markdown(rows: list[dict], table: str, methods: Sequence[str]) -> str:
    head = ["Setting", "Structure", "p", "T", *methods]
    lines = [f"**{TITLES[table]}**", "", "| " + " | ".join(head) + " |",
             "|" + "---|" * len(head)]
    prev = (None, None, None)
    for row in rows:
        key = (row["setting"], row["structure"], row["p"])
        shown = [f"Setting {row['setting']}" if key[0] != prev[0] else "",
                 row["structure"].capitalize() if key[:2] != prev[:2] else "",
                 str(row["p"]) if key != prev else ""]
        cells = [_fmt(*row[m], table) if m in row else "" for m in methods]
        lines.append("| " + " | ".join(shown + [str(row["T"])] + cells) + " |")
        prev = key
    return "\n".join(lines) + "\n"


def format_records_csv(records: list[dict], table: str) -> str:
    metrics = ["auc"] if table == "t3" else ["rel_l1", "rel_fro", "lambda"]
    lines = ["setting,structure,p,T,replicate,method," + ",".join(metrics)]
    for rec in records:
        vals = ",".join(repr(float(rec[m])) for m in metrics)
        lines.append(f"{rec['setting']},{rec['structure']},{rec['p']},{rec['T']},{rec['replicate']},"
                     f"{rec['method']},{vals}")
    return "\n".join(lines) + "\n"


def study_for_scale(scale: str, seed: int, n_replicates: Optional[int] = None) -> tuple[list[Cell], StudyConfig]:
    """Cells and protocol of ``desk`` (p=30, T=200, 5 replicates) or ``full`` (50) scale."""
    if scale == "desk":
        cells, reps = desk_cells(), 5
    elif scale == "full":
        cells, reps = full_cells(), 50
    else:
        raise ValueError(f"unknown scale {scale!r}; expected 'desk' or 'full'")
    study = StudyConfig(n_replicates=reps if n_replicates is None else n_replicates, seed=seed)
    return cells, study


def filter_cells(cells: Sequence[Cell], settings=None, structures=None) -> list[Cell]:
    return [c for c in cells
            if (settings is None or c.setting in settings)
            and (structures is None or c.structure in structures)]


__all__ = [
    "AUC_METHODS", "Cell", "ERROR_METHODS", "StudyConfig", "TABLES", "auc_replicate", "desk_cells",
    "error_replicate", "filter_cells", "format_records_csv", "format_table_csv",
    "format_table_markdown", "full_cells", "mean_se", "replicate_seed", "run_table", "setting_model",
    "setting_specs", "simulate_cell", "study_for_scale", "summarize",
]
