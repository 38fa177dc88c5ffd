"""Event streams, transfer kernels, link functions and the model intensity."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

KERNEL_KINDS = ("restricted_linear", "exponential", "indicator")
LINK_KINDS = ("arctan", "sigmoid", "scaled_arctan")


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class EventStream:
    """Strictly increasing event times of one node."""

    times: np.ndarray

    def __post_init__(self):
        t = _frozen(self.times)
        if t.ndim != 1:
            raise ValueError("event times must be one-dimensional")
        if not np.all(np.isfinite(t)):
            raise ValueError("event times must be finite")
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise ValueError("event times must be strictly increasing")
        object.__setattr__(self, "times", t)

    def __len__(self) -> int:
        return self.times.size


@dataclass(frozen=True, eq=False)
class EventData:
    """A p-variate realization observed on [0, horizon]."""

    streams: tuple
    horizon: float

    def __post_init__(self):
        streams = tuple(s if isinstance(s, EventStream) else EventStream(s) for s in self.streams)
        if len(streams) < 1:
            raise ValueError("need at least one stream")
        T = float(self.horizon)
        if not (np.isfinite(T) and T > 0):
            raise ValueError(f"horizon must be positive and finite, got {self.horizon!r}")
        for j, s in enumerate(streams):
            if s.times.size and (s.times[0] < 0 or s.times[-1] > T):
                raise ValueError(f"stream {j} has events outside [0, {T}]")
        object.__setattr__(self, "streams", streams)
        object.__setattr__(self, "horizon", T)

    @property
    def p(self) -> int:
        return len(self.streams)

    def counts(self) -> np.ndarray:
        return np.array([len(s) for s in self.streams])

    def __eq__(self, other):
        if not isinstance(other, EventData):
            return NotImplemented
        return (
            self.horizon == other.horizon
            and self.p == other.p
            and all(np.array_equal(a.times, b.times) for a, b in zip(self.streams, other.streams))
        )


@dataclass(frozen=True)
class KernelSpec:
    """A compactly supported transfer kernel.

    ``restricted_linear``: ``(1 - t/support)`` on ``[0, support]``.
    ``exponential``: ``exp(-rate*t)`` on ``[0, support]``.
    ``indicator``: ``1`` on ``[0, support]``.
    """

    kind: str = "restricted_linear"
    support: float = 1.0
    rate: float = 1.0

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}; expected one of {KERNEL_KINDS}")
        if not (np.isfinite(self.support) and self.support > 0):
            raise ValueError("kernel support must be positive and finite")
        if self.kind == "exponential" and not (np.isfinite(self.rate) and self.rate >= 0):
            raise ValueError("exponential kernel rate must be nonnegative")

    @classmethod
    def restricted_linear(cls, support: float = 1.0) -> "KernelSpec":
        return cls("restricted_linear", support)

    @classmethod
    def exponential(cls, rate: float = 1.0, support: float = 5.0) -> "KernelSpec":
        return cls("exponential", support, rate)

    @classmethod
    def indicator(cls, support: float = 0.25) -> "KernelSpec":
        return cls("indicator", support)

    @property
    def kappa_max(self) -> float:
        return 1.0


@dataclass(frozen=True)
class LinkSpec:
    """A bounded, strictly increasing link function with closed-form primitive.

    ``arctan``: ``offset + scale*arctan(u)``.
    ``sigmoid``: ``offset + scale*e^u/(1+e^u)``.
    ``scaled_arctan``: ``rate*(1 + 2*arctan(u)/pi)``.
    """

    kind: str = "arctan"
    offset: float = 4.0
    scale: float = 8.0 / np.pi
    rate: float = 1.0

    def __post_init__(self):
        if self.kind not in LINK_KINDS:
            raise ValueError(f"unknown link kind {self.kind!r}; expected one of {LINK_KINDS}")
        if self.kind == "scaled_arctan":
            if not (np.isfinite(self.rate) and self.rate > 0):
                raise ValueError("scaled_arctan link needs a positive rate")
            return
        if not (self.scale > 0 and np.isfinite(self.scale) and np.isfinite(self.offset)):
            raise ValueError("link scale must be positive and finite")
        low = self.offset - (self.scale * np.pi / 2 if self.kind == "arctan" else 0.0)
        if low < 0:
            raise ValueError("link must be nonnegative everywhere")

    @classmethod
    def arctan(cls, offset: float = 4.0, scale: float = 8.0 / np.pi) -> "LinkSpec":
        return cls("arctan", offset, scale)

    @classmethod
    def sigmoid(cls, offset: float = 1.0, scale: float = 4.0) -> "LinkSpec":
        return cls("sigmoid", offset, scale)

    @classmethod
    def scaled_arctan(cls, rate: float) -> "LinkSpec":
        return cls("scaled_arctan", rate=float(rate))

    def _arctan_coefs(self):
        if self.kind == "scaled_arctan":
            return self.rate, 2.0 * self.rate / np.pi
        return self.offset, self.scale

    @property
    def h_max(self) -> float:
        if self.kind == "sigmoid":
            return self.offset + self.scale
        a, b = self._arctan_coefs()
        return a + b * np.pi / 2

    @property
    def h_min(self) -> float:
        """Infimum of ``h`` (approached as ``u -> -inf``)."""
        if self.kind == "sigmoid":
            return self.offset
        a, b = self._arctan_coefs()
        return a - b * np.pi / 2

    @property
    def h_prime_max(self) -> float:
        if self.kind == "sigmoid":
            return self.scale / 4.0
        return self._arctan_coefs()[1]

    def h(self, u):
        if self.kind == "sigmoid":
            return self.offset + self.scale * _expit(u)
        a, b = self._arctan_coefs()
        return a + b * np.arctan(u)

    def h_prime(self, u):
        if self.kind == "sigmoid":
            s = _expit(u)
            return self.scale * s * (1.0 - s)
        b = self._arctan_coefs()[1]
        return b / (1.0 + np.square(u))

    def H(self, u):
        """Primitive of ``h`` normalized so that ``H(0) = 0``."""
        if self.kind == "sigmoid":
            return self.offset * u + self.scale * (np.logaddexp(0.0, u) - np.log(2.0))
        a, b = self._arctan_coefs()
        return a * u + b * (u * np.arctan(u) - 0.5 * np.log1p(np.square(u)))

    def h_and_H(self, u):
        """``(h(u), H(u))`` sharing the transcendental evaluations."""
        if self.kind == "sigmoid":
            return self.h(u), self.H(u)
        a, b = self._arctan_coefs()
        at = np.arctan(u)
        return a + b * at, a * u + b * (u * at - 0.5 * np.log1p(np.square(u)))

    def h_inverse(self, v):
        """Inverse of ``h``; values outside the range map to +-inf."""
        v = np.asarray(v, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            if self.kind == "sigmoid":
                q = (v - self.offset) / self.scale
                out = np.log(q) - np.log1p(-q)
                out = np.where(q <= 0, -np.inf, np.where(q >= 1, np.inf, out))
            else:
                a, b = self._arctan_coefs()
                r = (v - a) / b
                out = np.tan(r)
                out = np.where(r <= -np.pi / 2, -np.inf, np.where(r >= np.pi / 2, np.inf, out))
        return out[()] if out.ndim == 0 else out


def _expit(u):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(u)))


KernelGrid = Union[KernelSpec, Sequence[Sequence[KernelSpec]]]
LinkList = Union[LinkSpec, Sequence[LinkSpec]]


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """Background parameters ``mu``, transfer matrix ``B``, kernels and links.

    ``kernels`` is either one shared :class:`KernelSpec` or a p x p grid
    indexed ``[target][source]``; ``links`` is one shared :class:`LinkSpec`
    or one per node.
    """

    mu: np.ndarray
    B: np.ndarray
    kernels: KernelGrid = field(default_factory=KernelSpec)
    links: LinkList = field(default_factory=LinkSpec)

    def __post_init__(self):
        B = _frozen(np.atleast_2d(self.B))
        p = B.shape[0]
        if B.shape != (p, p):
            raise ValueError(f"B must be square, got shape {B.shape}")
        if not np.all(np.isfinite(B)):
            raise ValueError("B must have finite entries")
        mu = _frozen(np.broadcast_to(np.asarray(self.mu, dtype=float), (p,)))
        if not np.all(np.isfinite(mu)):
            raise ValueError("mu must be finite")
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "kernels", as_kernel_grid(self.kernels, p))
        object.__setattr__(self, "links", as_link_list(self.links, p))

    @property
    def p(self) -> int:
        return self.B.shape[0]

    def kernel(self, j: int, k: int) -> KernelSpec:
        return self.kernels if isinstance(self.kernels, KernelSpec) else self.kernels[j][k]

    def link(self, j: int) -> LinkSpec:
        return self.links if isinstance(self.links, LinkSpec) else self.links[j]

    @property
    def h_max(self) -> np.ndarray:
        return np.array([self.link(j).h_max for j in range(self.p)])


def as_kernel_grid(kernels: KernelGrid, p: int) -> KernelGrid:
    if isinstance(kernels, KernelSpec):
        return kernels
    grid = tuple(tuple(row) for row in kernels)
    if len(grid) != p or any(len(row) != p for row in grid):
        raise ValueError(f"kernel grid must be {p}x{p}")
    first = grid[0][0]
    if all(k == first for row in grid for k in row):
        return first
    return grid


def as_link_list(links: LinkList, p: int) -> LinkList:
    if isinstance(links, LinkSpec):
        return links
    links = tuple(links)
    if len(links) != p:
        raise ValueError(f"need {p} links, got {len(links)}")
    if all(lk == links[0] for lk in links):
        return links[0]
    return links


def kernel_eval(spec: KernelSpec, t):
    """Evaluate the kernel; exactly zero outside ``[0, support]``."""
    t = np.asarray(t, dtype=float)
    inside = (t >= 0) & (t <= spec.support)
    if spec.kind == "restricted_linear":
        val = 1.0 - t / spec.support
    elif spec.kind == "exponential":
        val = np.exp(-spec.rate * np.where(inside, t, 0.0))
    else:
        val = np.ones_like(t)
    out = np.where(inside, val, 0.0)
    return out[()] if out.ndim == 0 else out


def link_eval(spec: LinkSpec, u):
    """Return ``(h(u), h'(u), H(u))``."""
    return spec.h(u), spec.h_prime(u), spec.H(u)


def influence(model: ModelSpec, data: EventData, j: int, t: float) -> np.ndarray:
    """Kernel-weighted past of every source node seen by node ``j`` at time ``t``.

    Only events strictly before ``t`` contribute.
    """
    x = np.zeros(model.p)
    for k, stream in enumerate(data.streams):
        past = stream.times[stream.times < t]
        if past.size:
            x[k] = np.sum(kernel_eval(model.kernel(j, k), t - past))
    return x


def intensity(model: ModelSpec, data: EventData, j: int, t: float) -> float:
    """Conditional intensity of node ``j`` at time ``t``."""
    if not 0 <= j < model.p:
        raise IndexError(f"node {j} out of range for p={model.p}")
    if data.p != model.p:
        raise ValueError(f"data has {data.p} streams, model has p={model.p}")
    if not 0 <= t <= data.horizon:
        raise ValueError(f"t={t} outside [0, {data.horizon}]")
    u = model.mu[j] + float(np.dot(model.B[j], influence(model, data, j, t)))
    return float(model.link(j).h(u))
