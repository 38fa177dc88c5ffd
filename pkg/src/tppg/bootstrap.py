"""Stability selection by resampling bins with replacement."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from tppg.core import LinkList
from tppg.design import DesignMatrix
from tppg.estimate import FitConfig, FitResult, fit, with_lambda
from tppg.metrics import SignedGraph
from tppg.selection import lambda_max

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class BootstrapConfig:
    n_replicates: int = 50
    n_bins_sampled: Optional[int] = None  # None: the number of bins M
    target_sparsity: float = 0.05
    keep_fraction: float = 0.5
    seed: int = 0
    retune_lambda: bool = True

    def __post_init__(self):
        if self.n_replicates < 1:
            raise ValueError("n_replicates must be >= 1")
        if self.n_bins_sampled is not None and self.n_bins_sampled < 1:
            raise ValueError("n_bins_sampled must be >= 1")
        if not 0 < self.target_sparsity <= 1:
            raise ValueError("target_sparsity must be in (0, 1]")
        if not self.keep_fraction > 0:
            raise ValueError("keep_fraction must be positive")


@dataclass(frozen=True, eq=False)
class BootstrapResult:
    graph: SignedGraph
    frequencies: np.ndarray  # (p, p, 2): [..., 0] excitatory, [..., 1] inhibitory
    lambdas: np.ndarray


def sparsity(B) -> float:
    B = np.asarray(B)
    return float(np.count_nonzero(B) / B.size)


def lambda_for_sparsity(design: DesignMatrix, links: LinkList, target: float, fit_cfg: FitConfig,
                        bin_weights=None, max_steps: int = 30, rel_tol: float = 0.1,
                        floor_ratio: float = 1e-4) -> float:
    """Penalty whose fit has a fraction ``target`` of nonzero entries in B.

    Bisection on ``log(lam)`` over ``[floor_ratio*lam_max, lam_max]``;
    stops once the sparsity is within ``rel_tol`` (relative) of ``target``
    and otherwise returns the closest penalty visited.
    """
    if not 0 < target <= 1:
        raise ValueError("target must be in (0, 1]")
    hi = lambda_max(design, links, fit_cfg.penalize_mu, bin_weights)
    if hi <= 0:
        log.warning("lambda_max is zero; returning 0")
        return 0.0
    lo = hi * floor_ratio
    cache: dict = {}

    def run(lam, init=None):
        res = fit(design, links, with_lambda(fit_cfg, lam), init=init, bin_weights=bin_weights)
        cache[lam] = (sparsity(res.B_hat), res)
        return cache[lam]

    s_lo, fit_lo = run(lo)
    if s_lo < target * (1 - rel_tol):
        log.warning("target sparsity %.3g unreachable (%.3g at lambda=%.3g)", target, s_lo, lo)
        return lo
    init = fit_lo
    for _ in range(max_steps):
        s, _ = cache[lo]
        if abs(s - target) <= rel_tol * target:
            return lo
        mid = float(np.sqrt(lo * hi))
        s_mid, init = run(mid, init)
        if s_mid > target:
            lo = mid
        elif s_mid < target:
            hi = mid
        else:
            return mid
        if abs(s_mid - target) <= rel_tol * target:
            return mid
    return min(cache, key=lambda lam: (abs(cache[lam][0] - target), -lam))


def bootstrap_weights(M: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """Multiplicities of ``n`` bins drawn with replacement from ``M``."""
    return np.bincount(rng.integers(0, M, size=n), minlength=M).astype(float)


def bootstrap_graph(design: DesignMatrix, links: LinkList, cfg: BootstrapConfig,
                    fit_cfg: FitConfig) -> BootstrapResult:
    """Signed edges that recur in at least ``keep_fraction`` of the replicates.

    Each replicate resamples bins with replacement (as integer weights in
    the loss), tunes the penalty to the target sparsity and records the
    signed support. Edge signs are counted separately; an edge is kept with
    the sign that alone passes the threshold.
    """
    p, M = design.p, design.M
    n = M if cfg.n_bins_sampled is None else cfg.n_bins_sampled
    counts = np.zeros((p, p, 2))
    lambdas = np.empty(cfg.n_replicates)
    frozen = None
    if not cfg.retune_lambda:
        frozen = lambda_for_sparsity(design, links, cfg.target_sparsity, fit_cfg)
    for r in range(cfg.n_replicates):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([cfg.seed, r])))
        c = bootstrap_weights(M, n, rng)
        try:
            lam = frozen if frozen is not None else lambda_for_sparsity(
                design, links, cfg.target_sparsity, fit_cfg, bin_weights=c)
            res: FitResult = fit(design, links, with_lambda(fit_cfg, lam), bin_weights=c)
        except (RuntimeError, FloatingPointError) as exc:
            raise type(exc)(f"replicate {r}: {exc}") from exc
        lambdas[r] = lam
        counts[..., 0] += res.B_hat > 0
        counts[..., 1] += res.B_hat < 0
    freq = counts / cfg.n_replicates
    return BootstrapResult(threshold_frequencies(freq, cfg.keep_fraction), freq, lambdas)


def threshold_frequencies(freq, keep_fraction: float) -> SignedGraph:
    """Signed edges whose per-sign frequency reaches ``keep_fraction``.

    An edge whose two sign frequencies tie is dropped.
    """
    freq = np.asarray(freq, dtype=float)
    pos, neg = freq[..., 0], freq[..., 1]
    S = np.where((pos >= keep_fraction) & (pos > neg), 1,
                 np.where((neg >= keep_fraction) & (neg > pos), -1, 0))
    return SignedGraph.from_matrix(S)
