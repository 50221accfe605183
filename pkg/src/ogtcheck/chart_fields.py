"""Metrics and covariant tensor fields on a single coordinate chart.

Every field is a point evaluator ``x -> array`` of shape ``(n,) * s``.  Fields
whose evaluator is written with ``jax.numpy`` are *traceable*: their partial
derivatives of any order are obtained by forward-mode autodiff, which is the
"analytic" path.  Anything else falls back to central finite differences.

Arrays of partial derivatives put the derivative indices first, so
``partial_derivatives(T, x, 2)[a, b, i, j] == d_a d_b T_ij``.  Batched
evaluation is supported everywhere: pass points with shape ``(N, n)`` and every
result gains a leading axis of length ``N``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional, Sequence

import jax
import numpy as np

jax.config.update("jax_enable_x64", True)
import jax.numpy as jnp  # noqa: E402

from .errors import (  # noqa: E402
    NonFiniteComponent,
    OrderExceeded,
    PointOutsideDomain,
    SignatureMismatch,
    SingularMetric,
    StencilOutOfDomain,
)

SYMMETRY_TOL = 1e-12


@dataclass(frozen=True)
class Box:
    """Axis-aligned coordinate box; periodic axes are unbounded (universal cover)."""

    lows: tuple
    highs: tuple
    periodic: tuple

    def __post_init__(self):
        if not (len(self.lows) == len(self.highs) == len(self.periodic)):
            raise ValueError("lows, highs and periodic must have equal length")
        if any(lo >= hi for lo, hi in zip(self.lows, self.highs)):
            raise ValueError("every axis needs low < high")

    @property
    def dim(self) -> int:
        return len(self.lows)

    def period(self, axis: int) -> Optional[float]:
        if not self.periodic[axis]:
            return None
        return self.highs[axis] - self.lows[axis]

    def margin(self, x, reach: float = 0.0) -> bool:
        """True if ``x +- reach`` stays inside the box along every bounded axis."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[-1] != self.dim:
            return False
        for ax in range(self.dim):
            if self.periodic[ax]:
                continue
            col = x[:, ax]
            if np.any(col - reach < self.lows[ax]) or np.any(col + reach > self.highs[ax]):
                return False
        return True

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(np.isfinite(x))) and self.margin(x)

    def check(self, x):
        if not self.contains(x):
            raise PointOutsideDomain(f"point {np.asarray(x).tolist()} outside chart box {self}")

    def grid(self, per_axis: int, inset: float = 0.0) -> np.ndarray:
        """Cell-centred grid with ``per_axis`` points per axis, shape ``(per_axis**n, n)``.

        Bounded axes are shrunk by ``inset`` on both sides first.
        """
        axes = []
        for ax in range(self.dim):
            lo, hi = self.lows[ax], self.highs[ax]
            if not self.periodic[ax]:
                lo, hi = lo + inset, hi - inset
            width = (hi - lo) / per_axis
            axes.append(lo + width * (np.arange(per_axis) + 0.5))
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def sample(self, count: int, seed: int = 0, inset: float = 0.0) -> np.ndarray:
        """Scrambled Halton points inside the box."""
        from scipy.stats import qmc

        unit = qmc.Halton(d=self.dim, seed=seed).random(count)
        lows = np.array([lo + (0 if p else inset) for lo, p in zip(self.lows, self.periodic)])
        highs = np.array([hi - (0 if p else inset) for hi, p in zip(self.highs, self.periodic)])
        return lows + unit * (highs - lows)


@dataclass(frozen=True)
class DerivativeConfig:
    """How partial derivatives are taken.

    ``scheme`` is ``"analytic"`` (analytic callbacks or autodiff when the field
    supports it, FD otherwise) or ``"fd"`` (always central differences).
    ``base_steps[k-1]`` is the step for order ``k``; the last entry covers all
    higher orders.
    """

    scheme: str = "analytic"
    base_steps: tuple = (1e-4, 1e-3, 5e-3)
    richardson: bool = False
    max_order: int = 6

    def __post_init__(self):
        if self.scheme not in ("analytic", "fd"):
            raise ValueError(f"unknown derivative scheme {self.scheme!r}")
        if not self.base_steps or any(h <= 0 for h in self.base_steps):
            raise ValueError("base steps must be positive")

    def step(self, order: int) -> float:
        return self.base_steps[min(order, len(self.base_steps)) - 1]


ANALYTIC = DerivativeConfig()
CENTRAL_FD = DerivativeConfig(scheme="fd")


def _bucketed(fn, points):
    """Evaluate a batched compiled function with the batch padded to a power of two.

    Keeps the number of distinct input shapes (and hence recompilations) small.
    """
    count = len(points)
    if count == 0:
        raise ValueError("empty batch of points")
    size = 8
    while size < count:
        size *= 2
    if size != count:
        pad = np.repeat(points[-1:], size - count, axis=0)
        points = np.concatenate([points, pad])
    return np.asarray(fn(points))[:count]


def _prepend_jacobian(fn):
    def wrapped(x):
        return jnp.moveaxis(jax.jacfwd(fn)(x), -1, 0)

    return wrapped


@dataclass(frozen=True, eq=False)
class TensorField:
    """Covariant (0, rank) tensor field on a chart of dimension ``dim``.

    ``fn`` maps a single point of shape ``(dim,)`` to an array of shape
    ``(dim,) * rank``.  If ``traceable`` it must be written with ``jax.numpy``.
    ``partials(x, order)`` is an optional analytic derivative callback and wins
    over autodiff when present.
    """

    dim: int
    rank: int
    fn: Callable
    domain: Box
    traceable: bool = True
    partials: Optional[Callable] = None
    max_order: int = 6
    name: str = ""
    _cache: dict = dc_field(default_factory=dict, repr=False, compare=False)

    @property
    def shape(self) -> tuple:
        return (self.dim,) * self.rank

    def _compiled(self, key, builder):
        try:
            return self._cache[key]
        except KeyError:
            out = self._cache[key] = builder()
            return out

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        self.domain.check(x)
        if self.traceable:
            if x.ndim == 1:
                f = self._compiled("eval", lambda: jax.jit(self.fn))
                return np.asarray(f(x))
            f = self._compiled("eval_batch", lambda: jax.jit(jax.vmap(self.fn)))
            return _bucketed(f, x)
        if x.ndim == 1:
            return np.asarray(self.fn(x), dtype=float).reshape(self.shape)
        return np.stack([np.asarray(self.fn(p), dtype=float).reshape(self.shape) for p in x])

    def autodiff(self, x, order: int) -> np.ndarray:
        """Exact partials of the given order via nested forward-mode autodiff."""
        def build(batch):
            f = self.fn
            for _ in range(order):
                f = _prepend_jacobian(f)
            return jax.jit(jax.vmap(f) if batch else f)

        batch = x.ndim == 2
        f = self._compiled(("partial", order, batch), lambda: build(batch))
        return _bucketed(f, x) if batch else np.asarray(f(x))


def constant_field(value, domain: Box, name: str = "") -> TensorField:
    value = np.asarray(value, dtype=float)
    n = domain.dim
    rank = value.ndim
    if value.shape != (n,) * rank:
        raise ValueError(f"constant of shape {value.shape} is not a tensor over dimension {n}")
    frozen = jnp.asarray(value)
    return TensorField(n, rank, lambda x: frozen + 0.0 * x[0], domain, name=name)


def _fd_partials(field: TensorField, x: np.ndarray, order: int, h: float) -> np.ndarray:
    if order == 0:
        return field(x)
    n = field.dim
    slabs = []
    for axis in range(n):
        e = np.zeros(n)
        e[axis] = h
        plus = _fd_partials(field, x + e, order - 1, h)
        minus = _fd_partials(field, x - e, order - 1, h)
        slabs.append((plus - minus) / (2.0 * h))
    return np.stack(slabs)


def _finite_difference(field: TensorField, x: np.ndarray, order: int, cfg: DerivativeConfig):
    h = cfg.step(order)
    if not field.domain.margin(x, order * h):
        raise StencilOutOfDomain(
            f"order-{order} stencil of half-width {order * h:g} leaves the chart at {x.tolist()}"
        )
    coarse = _fd_partials(field, x, order, h)
    if not cfg.richardson:
        return coarse
    fine = _fd_partials(field, x, order, h / 2.0)
    return (4.0 * fine - coarse) / 3.0


def partial_derivatives(field: TensorField, x, order: int, cfg: DerivativeConfig = ANALYTIC) -> np.ndarray:
    """All order-``order`` partials of ``field`` at ``x``: shape ``(n,)*order + (n,)*rank``."""
    x = np.asarray(x, dtype=float)
    if order < 0:
        raise ValueError("order must be non-negative")
    if order == 0:
        return field(x)
    if order > cfg.max_order or order > field.max_order:
        raise OrderExceeded(
            f"order {order} exceeds the declared maximum {min(cfg.max_order, field.max_order)}"
        )
    field.domain.check(x)
    if cfg.scheme == "analytic" and field.partials is not None:
        if x.ndim == 1:
            return np.asarray(field.partials(x, order), dtype=float)
        return np.stack([np.asarray(field.partials(p, order), dtype=float) for p in x])
    if cfg.scheme == "analytic" and field.traceable:
        return field.autodiff(x, order)
    if x.ndim == 1:
        return _finite_difference(field, x, order, cfg)
    return np.stack([_finite_difference(field, p, order, cfg) for p in x])


def max_asymmetry(arr: np.ndarray, axes: Sequence[int]) -> float:
    """Largest change of ``arr`` under any permutation of the listed axes."""
    worst = 0.0
    base = list(range(arr.ndim))
    for perm in itertools.permutations(axes):
        order = base.copy()
        for src, dst in zip(axes, perm):
            order[src] = dst
        worst = max(worst, float(np.max(np.abs(arr - np.transpose(arr, order)), initial=0.0)))
    return worst


@dataclass(frozen=True, eq=False)
class ChartMetric:
    """Pseudo-Riemannian metric given by its components on one chart.

    ``signature`` is the pair (number of positive, number of negative
    eigenvalues).  The components live in ``field`` as a symmetric (0,2) field,
    so everything that works on tensor fields works on the metric too.
    """

    field: TensorField
    signature: tuple
    name: str = ""
    det_floor: float = 1e-10

    def __post_init__(self):
        if self.field.rank != 2:
            raise ValueError("metric components must form a rank-2 field")
        if sum(self.signature) != self.field.dim:
            raise ValueError(f"signature {self.signature} does not match dimension {self.field.dim}")

    @classmethod
    def from_function(cls, fn, domain: Box, signature, *, name="", traceable=True,
                      partials=None, max_order=6, det_floor=1e-10) -> "ChartMetric":
        tf = TensorField(domain.dim, 2, fn, domain, traceable=traceable, partials=partials,
                         max_order=max_order, name=name)
        return cls(tf, tuple(signature), name=name, det_floor=det_floor)

    @property
    def dim(self) -> int:
        return self.field.dim

    @property
    def domain(self) -> Box:
        return self.field.domain

    @property
    def indefinite(self) -> bool:
        return self.signature[0] > 0 and self.signature[1] > 0

    def __call__(self, x) -> np.ndarray:
        return self.field(x)


def signature_of(g: np.ndarray) -> tuple:
    eig = np.linalg.eigvalsh(g)
    return int(np.sum(eig > 0)), int(np.sum(eig < 0))


def eval_metric(metric: ChartMetric, x) -> np.ndarray:
    """Metric matrix at one point with all component invariants checked."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != metric.dim:
        raise PointOutsideDomain(f"expected a point of dimension {metric.dim}")
    metric.domain.check(x)
    g = metric(x)
    if not np.all(np.isfinite(g)):
        raise NonFiniteComponent(f"metric {metric.name!r} is not finite at {x.tolist()}")
    if np.max(np.abs(g - g.T)) >= SYMMETRY_TOL:
        raise SignatureMismatch(f"metric {metric.name!r} is not symmetric at {x.tolist()}")
    if abs(np.linalg.det(g)) <= metric.det_floor:
        raise SingularMetric(f"metric {metric.name!r} is degenerate at {x.tolist()}")
    sig = signature_of(g)
    if sig != tuple(metric.signature):
        raise SignatureMismatch(f"signature {sig} at {x.tolist()}, declared {metric.signature}")
    return g


def metric_inverse(g, det_floor: float = 1e-10) -> np.ndarray:
    """Inverse metric ``g^{ij}``; works on a single matrix or a stack."""
    g = np.asarray(g, dtype=float)
    if np.any(np.abs(np.linalg.det(g)) <= det_floor):
        raise SingularMetric("metric matrix is (nearly) singular")
    inv = np.linalg.inv(g)
    return 0.5 * (inv + np.swapaxes(inv, -1, -2))
