"""Penalty grids and K-fold cross-validation over bins."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from tppg.core import LinkList, LinkSpec, as_link_list
from tppg.design import DesignMatrix
from tppg.estimate import FitConfig, FitResult, fit, node_ls_risk, node_loss, node_nll, with_lambda

log = logging.getLogger(__name__)

FOLD_SCHEMES = ("random_bins", "contiguous_blocks")


@dataclass(frozen=True)
class CVConfig:
    """K-fold settings. ``lambdas=None`` requests a log-spaced grid from lambda_max."""

    K: int = 5
    lambdas: Optional[Sequence[float]] = None
    n_lambdas: int = 30
    ratio: float = 1e-3
    fold_scheme: str = "random_bins"
    seed: int = 0
    rule: str = "min"

    def __post_init__(self):
        if self.K < 2:
            raise ValueError("K must be >= 2")
        if self.fold_scheme not in FOLD_SCHEMES:
            raise ValueError(f"fold_scheme must be one of {FOLD_SCHEMES}")
        if self.rule not in ("min", "1se"):
            raise ValueError("rule must be 'min' or '1se'")
        if self.lambdas is not None:
            lam = np.asarray(self.lambdas, dtype=float)
            if lam.ndim != 1 or lam.size == 0 or np.any(lam <= 0) or np.any(np.diff(lam) > 0):
                raise ValueError("lambdas must be a nonempty descending sequence of positive values")
            object.__setattr__(self, "lambdas", tuple(lam.tolist()))
        elif self.n_lambdas < 1 or not 0 < self.ratio < 1:
            raise ValueError("need n_lambdas >= 1 and 0 < ratio < 1")


@dataclass(frozen=True, eq=False)
class CVResult:
    best_lambda: float
    lambdas: np.ndarray
    mean: np.ndarray
    se: np.ndarray
    fold_losses: np.ndarray  # (K, n_lambdas)


def _links(links: LinkList, p: int):
    links = as_link_list(links, p)
    return [links if isinstance(links, LinkSpec) else links[j] for j in range(p)]


def _null_gradient(design: DesignMatrix, j: int, link: LinkSpec, lam: float, penalize_mu: bool,
                   bin_weights=None) -> float:
    """Largest |d loss / d beta_k| at the penalized intercept-only fit."""
    W = design.weights[j]
    c = np.ones(design.M) if bin_weights is None else np.asarray(bin_weights, dtype=float)
    a = c * W / (design.dt * c.sum())
    A = design.dt * a.sum()
    b = float(a @ design.y[j])
    g0 = A * float(link.h(0.0)) - b
    if penalize_mu and abs(g0) <= lam:
        h_star = float(link.h(0.0))
    else:
        shift = (np.sign(g0) * lam) if penalize_mu else 0.0
        h_star = float(np.clip((b + shift) / A, link.h_min, link.h_max))
    r = a * (design.dt * h_star - design.y[j])
    return float(np.max(np.abs(r @ design.x[j]))) if design.p else 0.0


def lambda_max(design: DesignMatrix, links: LinkList, penalize_mu: bool = True,
               bin_weights=None) -> float:
    """Smallest penalty at which the fitted transfer matrix is identically zero.

    For each node the intercept-only penalized fit is available in closed
    form; the beta-gradient there is compared with the penalty on a dense
    grid and the crossing refined by bisection.
    """
    if not np.any(design.x):
        log.warning("all covariates are zero; lambda_max is 0")
        return 0.0
    best = 0.0
    for j, link in enumerate(_links(links, design.p)):
        g = lambda lam: _null_gradient(design, j, link, lam, penalize_mu, bin_weights)
        if not penalize_mu:
            best = max(best, g(0.0))
            continue
        upper = max(g(0.0), 1e-300)
        while g(upper) > upper:
            upper *= 2.0
        grid = np.linspace(0.0, upper, 513)
        bad = [lam for lam in grid if g(lam) > lam]
        if not bad:
            continue
        lo, hi = max(bad), grid[grid > max(bad)][0]
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            lo, hi = (mid, hi) if g(mid) > mid else (lo, mid)
        best = max(best, hi)
    return best


def lambda_grid(lam_max: float, n: int = 30, ratio: float = 1e-3) -> np.ndarray:
    """``n`` log-spaced penalties from ``lam_max`` down to ``ratio * lam_max``."""
    if not lam_max > 0:
        raise ValueError("lambda_max must be positive to build a grid")
    return np.geomspace(lam_max, lam_max * ratio, n)


def make_folds(M: int, K: int, scheme: str = "random_bins", seed: int = 0) -> list[np.ndarray]:
    """Partition bin indices ``0..M-1`` into ``K`` sorted folds."""
    if K > M:
        raise ValueError(f"cannot split {M} bins into {K} nonempty folds")
    if scheme == "random_bins":
        perm = np.random.Generator(np.random.PCG64(seed)).permutation(M)
        folds = [np.sort(perm[k::K]) for k in range(K)]
    elif scheme == "contiguous_blocks":
        folds = np.array_split(np.arange(M), K)
    else:
        raise ValueError(f"unknown fold scheme {scheme!r}")
    if any(f.size == 0 for f in folds):
        raise ValueError("empty fold")
    return folds


def heldout_loss(design: DesignMatrix, links: LinkList, result: FitResult, mode: str, bin_weights) -> float:
    """Unpenalized loss summed over nodes on the bins selected by ``bin_weights``.

    ``naive`` uses the design-weighted loss, ``mle`` the negative
    log-likelihood and ``ls`` the least-squares risk.
    """
    total = 0.0
    for j, link in enumerate(_links(links, design.p)):
        params = result.node(j)
        if mode == "mle":
            total += node_nll(design, j, params, link, bin_weights)
        elif mode == "ls":
            total += node_ls_risk(design, j, params, link, bin_weights)
        else:
            total += node_loss(design, j, params, link, bin_weights)
    return total


def fit_path(design, links, lambdas, fit_cfg: FitConfig, bin_weights=None) -> list[FitResult]:
    """Warm-started fits along ``lambdas``; repeated values reuse the previous fit."""
    fits: list[FitResult] = []
    prev, prev_lam = None, None
    for lam in lambdas:
        if prev is not None and lam == prev_lam:
            fits.append(prev)
            continue
        prev = fit(design, links, with_lambda(fit_cfg, lam), init=prev, bin_weights=bin_weights)
        prev_lam = lam
        fits.append(prev)
    return fits


def resolve_lambdas(design, links, cfg: CVConfig, fit_cfg: FitConfig) -> np.ndarray:
    if cfg.lambdas is not None:
        return np.asarray(cfg.lambdas, dtype=float)
    return lambda_grid(lambda_max(design, links, fit_cfg.penalize_mu), cfg.n_lambdas, cfg.ratio)


def cross_validate(design: DesignMatrix, links: LinkList, cfg: CVConfig, fit_cfg: FitConfig,
                   threads: int = 1) -> CVResult:
    """K-fold CV over bins.

    Each fold fits on the remaining bins (loss normalized by the training
    time) along the whole grid and scores the held-out bins with the
    unpenalized loss normalized by held-out time.
    """
    if design.M < cfg.K:
        raise ValueError(f"M={design.M} bins is fewer than K={cfg.K} folds")
    lambdas = resolve_lambdas(design, links, cfg, fit_cfg)
    folds = make_folds(design.M, cfg.K, cfg.fold_scheme, cfg.seed)

    def run_fold(test_idx):
        test = np.zeros(design.M)
        test[test_idx] = 1.0
        fits = fit_path(design, links, lambdas, fit_cfg, bin_weights=1.0 - test)
        return [heldout_loss(design, links, f, fit_cfg.weight_mode, test) for f in fits]

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            losses = np.array(list(pool.map(run_fold, folds)))
    else:
        losses = np.array([run_fold(f) for f in folds])
    mean = losses.mean(axis=0)
    se = losses.std(axis=0, ddof=1) / np.sqrt(cfg.K)
    i_min = int(np.argmin(mean))
    if cfg.rule == "1se":
        ok = np.flatnonzero(mean <= mean[i_min] + se[i_min])
        i_best = int(ok[np.argmax(lambdas[ok])])
    else:
        i_best = i_min
    return CVResult(float(lambdas[i_best]), lambdas, mean, se, losses)


def fit_cv(design: DesignMatrix, links: LinkList, cfg: CVConfig, fit_cfg: FitConfig,
           threads: int = 1) -> tuple[FitResult, CVResult]:
    """Cross-validate, then refit on all bins at the selected penalty."""
    cv = cross_validate(design, links, cfg, fit_cfg, threads)
    return fit(design, links, with_lambda(fit_cfg, cv.best_lambda)), cv
