"""Binning of event data into counts and kernel covariates on a uniform grid."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from tppg.core import EventData, KernelGrid, KernelSpec, as_kernel_grid, kernel_eval

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class DesignMatrix:
    """Counts ``y[j, m]``, covariates ``x[j, m, k]`` and loss weights ``weights[j, m]``.

    ``x[j, m, k]`` is the influence of source ``k`` on target ``j`` at grid
    point ``m*T/M``. With a shared kernel all targets see the same panel and
    ``x`` is a read-only broadcast view of it.
    """

    horizon: float
    y: np.ndarray
    x: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        p, M = self.y.shape
        if self.x.shape != (p, M, p):
            raise ValueError(f"x must have shape {(p, M, p)}, got {self.x.shape}")
        if self.weights.shape != (p, M):
            raise ValueError(f"weights must have shape {(p, M)}, got {self.weights.shape}")
        if not np.all(self.weights > 0):
            raise ValueError("weights must be positive")

    @property
    def p(self) -> int:
        return self.y.shape[0]

    @property
    def M(self) -> int:
        return self.y.shape[1]

    @property
    def dt(self) -> float:
        return self.horizon / self.M

    @property
    def shared(self) -> bool:
        """True when every target node sees the same covariate panel."""
        return self.x.strides[0] == 0

    def with_weights(self, weights: np.ndarray) -> "DesignMatrix":
        return DesignMatrix(self.horizon, self.y, self.x, np.asarray(weights, dtype=float))

    def scaled(self, factor: float) -> "DesignMatrix":
        return DesignMatrix(self.horizon, self.y, self.x * factor, self.weights)

    def permuted(self, perm) -> "DesignMatrix":
        """Relabel nodes: new node ``i`` is old node ``perm[i]``."""
        perm = np.asarray(perm)
        x = self.x[perm][:, :, perm]
        return DesignMatrix(self.horizon, self.y[perm], x, self.weights[perm])


def grid_points(T: float, M: int) -> np.ndarray:
    # m*T/M rather than m*(T/M) keeps shared points bit-identical when M doubles
    return np.arange(M + 1) * float(T) / M


def bin_counts(times: np.ndarray, T: float, M: int) -> np.ndarray:
    """Events per bin ``[mT/M, (m+1)T/M)``; the last bin is closed."""
    edges = grid_points(T, M)
    idx = np.searchsorted(edges, times, side="right") - 1
    idx = np.minimum(idx, M - 1)
    return np.bincount(idx, minlength=M)


def influence_panel(times: np.ndarray, kernel: KernelSpec, grid: np.ndarray) -> np.ndarray:
    """``sum_{s < g, g - s <= support} kernel(g - s)`` at each grid point ``g``.

    Only events inside the kernel window of each grid point are visited.
    """
    lo = np.searchsorted(times, grid - kernel.support, side="left")
    hi = np.searchsorted(times, grid, side="left")
    n = hi - lo
    if n.sum() == 0:
        return np.zeros(grid.size)
    owner = np.repeat(np.arange(grid.size), n)
    start = np.repeat(lo - np.cumsum(n) + n, n)
    ev = start + np.arange(owner.size)
    vals = kernel_eval(kernel, grid[owner] - times[ev])
    return np.bincount(owner, weights=vals, minlength=grid.size)


def discretize(data: EventData, M: int, kernels: KernelGrid) -> DesignMatrix:
    """Bin ``data`` into ``M`` equal subintervals of ``[0, T]``."""
    if not isinstance(M, (int, np.integer)) or M < 1:
        raise ValueError(f"M must be a positive integer, got {M!r}")
    p, T = data.p, data.horizon
    kernels = as_kernel_grid(kernels, p)
    for j, s in enumerate(data.streams):
        if s.times.size and (s.times[0] < 0 or s.times[-1] > T):
            raise ValueError(f"stream {j} has events outside [0, {T}]")
    grid = grid_points(T, M)[:-1]
    y = np.stack([bin_counts(s.times, T, M) for s in data.streams])
    if isinstance(kernels, KernelSpec):
        panel = np.empty((M, p))
        for k, s in enumerate(data.streams):
            panel[:, k] = influence_panel(s.times, kernels, grid)
        panel.setflags(write=False)
        x = np.broadcast_to(panel, (p, M, p))
    else:
        x = np.empty((p, M, p))
        for j in range(p):
            for k, s in enumerate(data.streams):
                x[j, :, k] = influence_panel(s.times, kernels[j][k], grid)
    check_M(T, M, p)
    return DesignMatrix(T, y, x, np.ones((p, M)))


def choose_M(T: float, multiplier: float = 10) -> int:
    """Number of bins ``round(multiplier * T)``."""
    if not T > 0:
        raise ValueError("T must be positive")
    M = int(round(multiplier * T))
    if M < 1:
        raise ValueError(f"multiplier*T rounds to {M}; need at least one bin")
    return M


def recommended_M(T: float, p: int, s: float | None = None, tau: float = 1.0) -> float:
    """Bin count at which discretization error is of the order of the noise.

    ``tau**(1/4) * sqrt(s) * T**(5/4) * log(max(p, T))**2`` with the
    sparsity ``s`` defaulting to ``p``.
    """
    s = p if s is None else s
    return tau ** 0.25 * math.sqrt(s) * T ** 1.25 * math.log(max(p, T)) ** 2


def check_M(T: float, M: int, p: int, s: float | None = None, tau: float = 1.0) -> bool:
    """Log a warning when ``M`` is below :func:`recommended_M`. Advisory only."""
    ok = M >= recommended_M(T, p, s, tau)
    if not ok:
        log.warning(
            "M=%d is below the recommended %.0f bins for T=%g, p=%d; "
            "discretization error may not be negligible",
            M, recommended_M(T, p, s, tau), T, p,
        )
    return ok
