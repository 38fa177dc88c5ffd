"""Estimation error, support recovery (ROC/AUC) and signed graph extraction."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from tppg.estimate import FitConfig
from tppg.selection import fit_path


@dataclass(frozen=True)
class SignedGraph:
    """Directed edges ``(target, source, sign)``; ``sign`` is +1 or -1."""

    p: int
    edges: frozenset

    def __post_init__(self):
        edges = frozenset((int(j), int(k), int(s)) for j, k, s in self.edges)
        pairs = [(j, k) for j, k, _ in edges]
        if len(set(pairs)) != len(pairs):
            raise ValueError("duplicate (target, source) pair")
        if any(s not in (1, -1) for _, _, s in edges):
            raise ValueError("edge signs must be +1 or -1")
        if any(not (0 <= j < self.p and 0 <= k < self.p) for j, k in pairs):
            raise ValueError("edge endpoint out of range")
        object.__setattr__(self, "edges", edges)

    def __len__(self) -> int:
        return len(self.edges)

    def to_matrix(self) -> np.ndarray:
        S = np.zeros((self.p, self.p), dtype=int)
        for j, k, s in self.edges:
            S[j, k] = s
        return S

    @classmethod
    def from_matrix(cls, S) -> "SignedGraph":
        S = np.asarray(S)
        j, k = np.nonzero(S)
        return cls(S.shape[0], frozenset(zip(j, k, np.sign(S[j, k]).astype(int))))


@dataclass(frozen=True, eq=False)
class ROCCurve:
    """ROC points sorted by false-positive rate, with trapezoidal AUC.

    ``lambdas`` holds the penalty behind each interior point (NaN for the
    (0, 0) and (1, 1) anchors), in the same order as ``fpr``/``tpr``.
    """

    fpr: np.ndarray
    tpr: np.ndarray
    lambdas: np.ndarray
    auc: float

    @property
    def points(self):
        return list(zip(self.fpr.tolist(), self.tpr.tolist()))


def _check_truth(B_true) -> np.ndarray:
    B_true = np.asarray(B_true, dtype=float)
    if not np.any(B_true):
        raise ValueError("B_true is identically zero")
    return B_true


def rel_l1_error(B_hat, B_true) -> float:
    """``sum |B_hat - B_true| / sum |B_true|``."""
    B_true = _check_truth(B_true)
    return float(np.abs(np.asarray(B_hat) - B_true).sum() / np.abs(B_true).sum())


def rel_fro_error(B_hat, B_true) -> float:
    """``||B_hat - B_true||_F^2 / ||B_true||_F^2``."""
    B_true = _check_truth(B_true)
    return float(np.square(np.asarray(B_hat) - B_true).sum() / np.square(B_true).sum())


def support_rates(B_hat, B_true) -> tuple[float, float]:
    """``(tpr, fpr)`` of the nonzero pattern over all p*p ordered pairs."""
    est = np.asarray(B_hat) != 0
    truth = np.asarray(B_true) != 0
    if not truth.any():
        raise ValueError("B_true has empty support")
    n_neg = (~truth).sum()
    tpr = (est & truth).sum() / truth.sum()
    fpr = (est & ~truth).sum() / n_neg if n_neg else 0.0
    return float(tpr), float(fpr)


def roc_from_supports(supports: Iterable, B_true, lambdas=None) -> ROCCurve:
    """Build an ROC curve from a sequence of estimated supports (or matrices)."""
    rates = [support_rates(S, B_true) for S in supports]
    lam = np.full(len(rates), np.nan) if lambdas is None else np.asarray(lambdas, dtype=float)
    tpr = np.array([0.0] + [r[0] for r in rates] + [1.0])
    fpr = np.array([0.0] + [r[1] for r in rates] + [1.0])
    lam = np.concatenate(([np.nan], lam, [np.nan]))
    order = np.lexsort((tpr, fpr))
    fpr, tpr, lam = fpr[order], tpr[order], lam[order]
    return ROCCurve(fpr, tpr, lam, auc_trapezoid(fpr, tpr))


def auc_trapezoid(fpr, tpr) -> float:
    fpr, tpr = np.asarray(fpr, dtype=float), np.asarray(tpr, dtype=float)
    return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))


def roc_over_path(design, links, lambda_grid, B_true, fit_cfg: FitConfig) -> ROCCurve:
    """ROC of the support of B_hat swept over a descending penalty grid."""
    lambda_grid = np.asarray(lambda_grid, dtype=float)
    if np.any(np.diff(lambda_grid) > 0):
        raise ValueError("lambda_grid must be descending")
    if not np.any(B_true):
        raise ValueError("B_true has empty support")
    fits = fit_path(design, links, lambda_grid, fit_cfg)
    return roc_from_supports([f.B_hat for f in fits], B_true, lambda_grid)


def extract_graph(B_hat, threshold: float = 0.0) -> SignedGraph:
    """Signed edges ``(j, k, sign(B_hat[j, k]))`` for ``|B_hat[j, k]| > threshold``."""
    if threshold < 0:
        raise ValueError("threshold must be nonnegative")
    B_hat = np.asarray(B_hat, dtype=float)
    return SignedGraph.from_matrix(np.where(np.abs(B_hat) > threshold, np.sign(B_hat), 0))


def _toeplitz_symmetric(first_row) -> np.ndarray:
    r = np.asarray(first_row, dtype=float)
    n = r.size
    idx = np.abs(np.subtract.outer(np.arange(n), np.arange(n)))
    return r[idx]


def make_structure(kind: str, p: int, weight: float = 0.3) -> np.ndarray:
    """Block or chain transfer matrix used in the simulation study.

    ``block``: ``p/5`` diagonal copies of the 5x5 symmetric Toeplitz matrix
    with first row ``(0, w, -w, w, -w)``. ``chain``: the p x p symmetric
    Toeplitz matrix with first row ``(0, w, -w, 0, ..., 0)``.
    """
    kind = kind.lower()
    if kind == "block":
        if p < 5 or p % 5:
            raise ValueError(f"block structure needs p divisible by 5, got {p}")
        block = _toeplitz_symmetric([0.0, weight, -weight, weight, -weight])
        return np.kron(np.eye(p // 5), block)
    if kind == "chain":
        if p < 1:
            raise ValueError("p must be positive")
        row = np.zeros(p)
        row[1:3] = [weight, -weight][: max(p - 1, 0)]
        return _toeplitz_symmetric(row)
    raise ValueError(f"unknown structure {kind!r}; expected 'block' or 'chain'")
