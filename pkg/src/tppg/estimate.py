"""Penalized estimation of (mu, B) from a binned design.

For node ``j`` the discretized loss is

    (1/T) * sum_m W_j(m) * (dt * H(u_m) - y[j, m] * u_m),  u_m = mu_j + <beta_j, x[j, m]>

and the estimator minimizes it plus ``lam * (|mu_j| + ||beta_j||_1)``. The
loss separates over nodes, so every node is an independent convex problem.

Optional ``bin_weights`` (nonnegative multiplicities per bin) restrict or
resample the sum; the loss is then normalized by the weighted observation
time ``dt * sum(bin_weights)`` so that all-ones weights give the plain loss.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from tppg.core import LinkList, LinkSpec, as_link_list
from tppg.design import DesignMatrix

WEIGHT_MODES = ("naive", "mle", "ls")


class DivergenceError(RuntimeError):
    """The solver failed its descent guarantee; indicates a bug or overflow."""


@dataclass(frozen=True)
class NodeParams:
    mu: float
    beta: np.ndarray

    def __post_init__(self):
        beta = np.array(self.beta, dtype=float)
        beta.setflags(write=False)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "mu", float(self.mu))
        if not (np.isfinite(self.mu) and np.all(np.isfinite(beta))):
            raise ValueError("node parameters must be finite")

    @classmethod
    def zeros(cls, p: int) -> "NodeParams":
        return cls(0.0, np.zeros(p))

    @property
    def theta(self) -> np.ndarray:
        return np.concatenate(([self.mu], self.beta))

    @classmethod
    def from_theta(cls, theta) -> "NodeParams":
        return cls(theta[0], theta[1:])


@dataclass(frozen=True)
class FitConfig:
    """Solver settings.

    ``weight_mode`` is ``naive`` (W = 1), ``mle`` (W = h'/h, refit
    iteratively) or ``ls`` (W = h', refit iteratively). The inner solver is
    an accelerated proximal gradient method with backtracking: the step
    starts at ``init_step`` and is multiplied by ``shrink`` until the
    quadratic upper bound holds.
    """

    lam: float = 0.0
    weight_mode: str = "naive"
    max_outer: int = 5
    max_inner: int = 2000
    tol: float = 1e-8
    init_step: float = 1.0
    shrink: float = 0.5
    penalize_mu: bool = True
    weight_bounds: tuple = (1e-6, 1e6)

    def __post_init__(self):
        if not (np.isfinite(self.lam) and self.lam >= 0):
            raise ValueError(f"lam must be >= 0, got {self.lam!r}")
        if self.weight_mode not in WEIGHT_MODES:
            raise ValueError(f"weight_mode must be one of {WEIGHT_MODES}, got {self.weight_mode!r}")
        if self.max_outer < 1 or self.max_inner < 1:
            raise ValueError("max_outer and max_inner must be >= 1")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if not self.init_step > 0 or not 0 < self.shrink < 1:
            raise ValueError("need init_step > 0 and 0 < shrink < 1")


@dataclass(frozen=True, eq=False)
class FitResult:
    mu_hat: np.ndarray
    B_hat: np.ndarray
    objective: np.ndarray
    iterations: np.ndarray
    lam: float
    weight_mode: str
    weights: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def p(self) -> int:
        return self.B_hat.shape[0]

    def node(self, j: int) -> NodeParams:
        return NodeParams(self.mu_hat[j], self.B_hat[j])


def soft_threshold(v, t):
    """``sign(v) * max(|v| - t, 0)``."""
    if np.any(np.asarray(t) < 0):
        raise ValueError("threshold must be nonnegative")
    out = np.sign(v) * np.maximum(np.abs(v) - t, 0.0)
    return out[()] if np.ndim(out) == 0 else out


class _NodeProblem:
    """Smooth part of one node's loss restricted to bins with positive weight."""

    def __init__(self, design: DesignMatrix, j: int, link: LinkSpec, weights=None, bin_weights=None):
        if not 0 <= j < design.p:
            raise IndexError(f"node {j} out of range for p={design.p}")
        W = design.weights[j] if weights is None else np.asarray(weights, dtype=float)
        dt = design.dt
        if bin_weights is None:
            self.X = np.ascontiguousarray(design.x[j])
            self.y = design.y[j].astype(float)
            self.a = W / (dt * design.M)
        else:
            c = np.asarray(bin_weights, dtype=float)
            if c.shape != (design.M,) or np.any(c < 0) or c.sum() <= 0:
                raise ValueError("bin_weights must be nonnegative with a positive sum")
            keep = np.flatnonzero(c)
            self.X = np.ascontiguousarray(design.x[j][keep])
            self.y = design.y[j][keep].astype(float)
            self.a = c[keep] * W[keep] / (dt * c.sum())
        self.dt = dt
        self.link = link
        self.p = design.p

    def u(self, theta):
        return theta[0] + self.X @ theta[1:]

    def value(self, u):
        val = float(np.dot(self.a, self.dt * self.link.H(u) - self.y * u))
        if not np.isfinite(val):
            raise FloatingPointError("non-finite loss value")
        return val

    def grad(self, u, h=None):
        h = self.link.h(u) if h is None else h
        r = self.a * (self.dt * h - self.y)
        return np.concatenate(([r.sum()], self.X.T @ r))

    def value_and_grad(self, u):
        h, H = self.link.h_and_H(u)
        val = float(np.dot(self.a, self.dt * H - self.y * u))
        if not np.isfinite(val):
            raise FloatingPointError("non-finite loss value")
        return val, self.grad(u, h)


def _as_params(params, p) -> np.ndarray:
    theta = params.theta if isinstance(params, NodeParams) else np.asarray(params, dtype=float)
    if theta.shape != (p + 1,):
        raise ValueError(f"expected {p + 1} parameters, got shape {theta.shape}")
    return theta


def node_loss(design: DesignMatrix, j: int, params, link: LinkSpec, bin_weights=None) -> float:
    """Weighted discretized loss of node ``j`` (unpenalized)."""
    prob = _NodeProblem(design, j, link, bin_weights=bin_weights)
    return prob.value(prob.u(_as_params(params, design.p)))


def node_gradient(design: DesignMatrix, j: int, params, link: LinkSpec, bin_weights=None):
    """Gradient of :func:`node_loss` as ``(d_mu, d_beta)``."""
    prob = _NodeProblem(design, j, link, bin_weights=bin_weights)
    g = prob.grad(prob.u(_as_params(params, design.p)))
    if not np.all(np.isfinite(g)):
        raise FloatingPointError("non-finite gradient")
    return float(g[0]), g[1:]


def node_nll(design: DesignMatrix, j: int, params, link: LinkSpec, bin_weights=None) -> float:
    """Discretized negative log-likelihood ``(1/T) sum (dt*h(u) - y*log h(u))``."""
    prob = _NodeProblem(design, j, link, weights=np.ones(design.M), bin_weights=bin_weights)
    u = prob.u(_as_params(params, design.p))
    h = link.h(u)
    return float(np.dot(prob.a, prob.dt * h - prob.y * np.log(h)))


def node_nll_gradient(design: DesignMatrix, j: int, params, link: LinkSpec):
    """Chain-rule gradient of :func:`node_nll`: ``(1/T) sum (dt*h' - y*h'/h) x``."""
    prob = _NodeProblem(design, j, link, weights=np.ones(design.M))
    u = prob.u(_as_params(params, design.p))
    h, hp = link.h(u), link.h_prime(u)
    r = prob.a * (prob.dt * hp - prob.y * hp / h)
    return float(r.sum()), prob.X.T @ r


def node_ls_risk(design: DesignMatrix, j: int, params, link: LinkSpec, bin_weights=None) -> float:
    """Discretized least-squares risk ``(1/T) sum (dt*h(u)**2 - 2*y*h(u))``."""
    prob = _NodeProblem(design, j, link, weights=np.ones(design.M), bin_weights=bin_weights)
    h = link.h(prob.u(_as_params(params, design.p)))
    return float(np.dot(prob.a, prob.dt * h * h - 2.0 * prob.y * h))


def node_ls_gradient(design: DesignMatrix, j: int, params, link: LinkSpec):
    """Chain-rule gradient of :func:`node_ls_risk`: ``(1/T) sum (2*dt*h*h' - 2*y*h') x``."""
    prob = _NodeProblem(design, j, link, weights=np.ones(design.M))
    u = prob.u(_as_params(params, design.p))
    h, hp = link.h(u), link.h_prime(u)
    r = prob.a * (2.0 * prob.dt * h * hp - 2.0 * prob.y * hp)
    return float(r.sum()), prob.X.T @ r


def loss_weights(design: DesignMatrix, j: int, params, link: LinkSpec, mode: str,
                 bounds=(1e-6, 1e6)) -> np.ndarray:
    """Reweighting that makes the loss gradient match the MLE (``h'/h``) or LS (``h'``) score."""
    X = design.x[j]
    theta = _as_params(params, design.p)
    u = theta[0] + X @ theta[1:]
    if mode == "mle":
        w = link.h_prime(u) / link.h(u)
    elif mode == "ls":
        w = link.h_prime(u)
    elif mode == "naive":
        w = np.ones(design.M)
    else:
        raise ValueError(f"unknown weight mode {mode!r}")
    return np.clip(w, *bounds)


def _penalty_vector(p: int, lam: float, penalize_mu: bool) -> np.ndarray:
    pen = np.full(p + 1, float(lam))
    if not penalize_mu:
        pen[0] = 0.0
    return pen


def _solve(prob: _NodeProblem, theta0: np.ndarray, pen: np.ndarray, cfg: FitConfig):
    """Accelerated proximal gradient with backtracking and adaptive restart.

    Momentum is reset whenever the extrapolated step fails to decrease the
    penalized objective, so accepted iterates are monotone. Stops when the
    decrease falls below ``tol * max(1, |F|)``. Also returns the final
    curvature estimate ``L``.
    """
    L = 1.0 / cfg.init_step
    grow = 1.0 / cfg.shrink
    x = theta0.copy()
    ux = prob.u(x)
    fx, gx = prob.value_and_grad(ux)
    Fx = fx + float(pen @ np.abs(x))
    y, uy, t = x, ux, 1.0
    at_x = True
    it = 0
    while it < cfg.max_inner:
        it += 1
        if at_x:
            fy, g = fx, gx if gx is not None else prob.grad(ux)
        else:
            fy, g = prob.value_and_grad(uy)
        slack = 1e-13 * max(1.0, abs(fy))
        while True:
            z = soft_threshold(y - g / L, pen / L)
            d = z - y
            uz = prob.u(z)
            fz = prob.value(uz)
            if fz <= fy + g @ d + 0.5 * L * (d @ d) + slack:
                break
            L *= grow
            if L > 1e30:
                raise DivergenceError("step size underflow in backtracking")
        Fz = fz + float(pen @ np.abs(z))
        gx = None
        if Fz > Fx:
            if at_x:
                if Fz > Fx + 1e-8 * max(1.0, abs(Fx)):
                    raise DivergenceError(f"objective increased from {Fx} to {Fz}")
                break
            y, uy, t, at_x = x, ux, 1.0, True
            continue
        decrease = Fx - Fz
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        m = (t - 1.0) / t_next
        y = z + m * (z - x)
        uy = uz + m * (uz - ux)
        at_x = m == 0.0
        x, ux, fx, Fx, t = z, uz, fz, Fz, t_next
        if decrease <= cfg.tol * max(1.0, abs(Fx)):
            break
    return x, Fx, it, L


class _Smooth:
    """Adapter giving a plain ``f(theta)``/``grad(theta)`` pair the solver interface."""

    def __init__(self, f, grad):
        self.f, self.g = f, grad

    def u(self, theta):
        return theta

    def value(self, theta):
        return float(self.f(theta))

    def grad(self, theta, h=None):
        return np.asarray(self.g(theta), dtype=float)

    def value_and_grad(self, theta):
        return self.value(theta), self.grad(theta)


def minimize_l1(f, grad, theta0, pen, cfg: FitConfig):
    """Minimize ``f(theta) + sum(pen * |theta|)`` with the node solver.

    Returns ``(theta, objective, iterations)``. After the accelerated phase,
    plain proximal gradient steps at the final curvature estimate run until
    the fixed-point residual is at round-off level. Near the optimum the
    objective is flat to machine precision while the gradient still carries
    information, so this pins down ``theta`` itself rather than only ``F``.
    """
    theta0 = np.asarray(theta0, dtype=float)
    pen = np.broadcast_to(np.asarray(pen, dtype=float), theta0.shape)
    prob = _Smooth(f, grad)
    x, _, it, L = _solve(prob, theta0, pen, cfg)
    for _ in range(cfg.max_inner):
        z = soft_threshold(x - prob.grad(x) / L, pen / L)
        step = np.max(np.abs(z - x), initial=0.0)
        x = z
        it += 1
        if step <= 4 * np.finfo(float).eps * max(1.0, np.max(np.abs(x), initial=0.0)):
            break
    return x, prob.value(x) + float(pen @ np.abs(x)), it


def _fit_one(design, j, link, cfg: FitConfig, theta0=None, bin_weights=None):
    p = design.p
    pen = _penalty_vector(p, cfg.lam, cfg.penalize_mu)
    theta = np.zeros(p + 1) if theta0 is None else np.array(theta0, dtype=float)
    W = design.weights[j]
    rounds = 1 if cfg.weight_mode == "naive" else cfg.max_outer
    total = 0
    obj = np.nan
    for r in range(rounds):
        prob = _NodeProblem(design, j, link, weights=W, bin_weights=bin_weights)
        new, obj, its, _ = _solve(prob, theta, pen, cfg)
        total += its
        change = np.max(np.abs(new - theta))
        theta = new
        if r > 0 and change < cfg.tol:
            break
        if r + 1 < rounds:
            W = loss_weights(design, j, theta, link, cfg.weight_mode, cfg.weight_bounds)
    return theta, obj, total, W


def fit_node(design: DesignMatrix, j: int, link: LinkSpec, cfg: FitConfig,
             init: Optional[NodeParams] = None, bin_weights=None) -> NodeParams:
    """Minimize node ``j``'s penalized loss under the design's fixed weights."""
    theta0 = None if init is None else _as_params(init, design.p)
    prob = _NodeProblem(design, j, link, bin_weights=bin_weights)
    pen = _penalty_vector(design.p, cfg.lam, cfg.penalize_mu)
    theta, _, _, _ = _solve(prob, np.zeros(design.p + 1) if theta0 is None else theta0, pen, cfg)
    return NodeParams.from_theta(theta)


def fit(design: DesignMatrix, links: LinkList, cfg: FitConfig,
        init: Optional[FitResult] = None, bin_weights=None) -> FitResult:
    """Fit every node; iterative modes alternate between fitting and reweighting.

    ``init`` warm-starts the solver (used along penalty paths); the
    default starts from zero.
    """
    p = design.p
    links = as_link_list(links, p)
    mu, B = np.zeros(p), np.zeros((p, p))
    obj, iters = np.zeros(p), np.zeros(p, dtype=int)
    W = np.empty((p, design.M))
    for j in range(p):
        link = links if isinstance(links, LinkSpec) else links[j]
        theta0 = None if init is None else np.concatenate(([init.mu_hat[j]], init.B_hat[j]))
        try:
            theta, obj[j], iters[j], W[j] = _fit_one(design, j, link, cfg, theta0, bin_weights)
        except (DivergenceError, FloatingPointError) as exc:
            raise type(exc)(f"node {j}: {exc}") from exc
        mu[j], B[j] = theta[0], theta[1:]
    return FitResult(mu, B, obj, iters, cfg.lam, cfg.weight_mode, W)


def kkt_residual(design: DesignMatrix, j: int, params, link: LinkSpec, lam: float,
                 penalize_mu: bool = True, bin_weights=None) -> float:
    """Largest violation of the lasso optimality conditions at ``params``."""
    d_mu, d_beta = node_gradient(design, j, params, link, bin_weights)
    g = np.concatenate(([d_mu], d_beta))
    theta = _as_params(params, design.p)
    pen = _penalty_vector(design.p, lam, penalize_mu)
    active = theta != 0
    res = np.where(active, np.abs(g + pen * np.sign(theta)), np.maximum(np.abs(g) - pen, 0.0))
    return float(res.max())


def with_lambda(cfg: FitConfig, lam: float) -> FitConfig:
    return replace(cfg, lam=float(lam))
