"""Geodesics, null directions, and the pullback identity along geodesics.

Along a geodesic the m-fold covariant derivative of a scalar contracted with
the velocity m times equals the m-th time derivative of the scalar restricted
to the curve.  For a null geodesic every metric term of the third-order
equation (and of every E_p) contracts to zero, so the equation reduces to an
ordinary differential equation in t.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import jax
import jax.numpy as jnp
import numpy as np

from .chart_fields import ANALYTIC, ChartMetric, DerivativeConfig, TensorField, signature_of
from .connection import christoffel_field, covariant_power
from .errors import DefiniteSignature, LeftDomain, RankDeficient, StepTooLarge, TraceTooShort

DEFAULT_STEP = 1e-3
DEFAULT_DRIFT_LIMIT = 1e-6

# (spacing, accuracy order) of the central stencil used for d^m/dt^m on a trace
TIME_STENCILS = {1: (5e-3, 8), 2: (5e-3, 8), 3: (1e-2, 8), 4: (1e-2, 8)}
TIME_STENCIL_DEFAULT = (2e-2, 10)


@dataclass(frozen=True)
class GeodesicState:
    x: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float))
        object.__setattr__(self, "v", np.asarray(self.v, dtype=float))
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.v))):
            raise ValueError("geodesic state must be finite")


@dataclass(frozen=True)
class GeodesicTrace:
    times: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    norm_drift: float

    @property
    def step(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def states(self) -> list:
        return [GeodesicState(x, v) for x, v in zip(self.positions, self.velocities)]

    def __len__(self):
        return len(self.times)

    def truncated(self, count: int) -> "GeodesicTrace":
        return GeodesicTrace(self.times[:count], self.positions[:count], self.velocities[:count],
                             self.norm_drift)


@dataclass(frozen=True)
class PolyFit:
    degree: int
    coefficients: np.ndarray   # const_0 ... const_degree
    fit_residual: float


def _rk4_scan(gamma_fn, steps: int, h: float):
    def accel(x, v):
        return -jnp.einsum("ijk,j,k->i", gamma_fn(x), v, v)

    def step(state, _):
        x, v = state
        k1x, k1v = v, accel(x, v)
        k2x, k2v = v + 0.5 * h * k1v, accel(x + 0.5 * h * k1x, v + 0.5 * h * k1v)
        k3x, k3v = v + 0.5 * h * k2v, accel(x + 0.5 * h * k2x, v + 0.5 * h * k2v)
        k4x, k4v = v + h * k3v, accel(x + h * k3x, v + h * k3v)
        x = x + h / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x)
        v = v + h / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
        return (x, v), (x, v)

    @jax.jit
    def run(x0, v0):
        _, (xs, vs) = jax.lax.scan(step, (x0, v0), None, length=steps)
        return xs, vs

    return run


_INTEGRATORS: dict = {}


def _rk4_numpy(gamma_field, x, v, steps, h):
    def accel(x, v):
        return -np.einsum("ijk,j,k->i", gamma_field(x), v, v)

    xs, vs = [], []
    for _ in range(steps):
        k1x, k1v = v, accel(x, v)
        k2x, k2v = v + 0.5 * h * k1v, accel(x + 0.5 * h * k1x, v + 0.5 * h * k1v)
        k3x, k3v = v + 0.5 * h * k2v, accel(x + 0.5 * h * k2x, v + 0.5 * h * k2v)
        k4x, k4v = v + h * k3v, accel(x + h * k3x, v + h * k3v)
        x = x + h / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x)
        v = v + h / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
        xs.append(x)
        vs.append(v)
    return np.array(xs), np.array(vs)


def quadratic_form(metric: ChartMetric, x, v) -> np.ndarray:
    """g(v, v) at x; batched over leading axes."""
    return np.einsum("...ij,...i,...j->...", metric(x), v, v)


def integrate_geodesic(metric: ChartMetric, s0: GeodesicState, t_end: float,
                       step: float = DEFAULT_STEP, cfg: DerivativeConfig = ANALYTIC,
                       drift_limit: float = DEFAULT_DRIFT_LIMIT) -> GeodesicTrace:
    """Fixed-step classical RK4 for x'' = -Gamma(x)(x', x') on t in [0, t_end].

    The step is shrunk slightly so that it divides ``t_end``.  Raises
    ``LeftDomain`` (carrying the in-domain prefix) when the curve leaves the
    chart and ``StepTooLarge`` when g(v, v) drifts by more than ``drift_limit``.
    """
    if step <= 0 or t_end <= 0:
        raise ValueError("step and t_end must be positive")
    metric.domain.check(s0.x)
    steps = max(1, math.ceil(t_end / step - 1e-9))
    h = t_end / steps
    gamma = christoffel_field(metric, cfg)
    if gamma.traceable:
        key = (metric, cfg, steps, h)
        run = _INTEGRATORS.get(key)
        if run is None:
            run = _INTEGRATORS[key] = _rk4_scan(gamma.fn, steps, h)
        xs, vs = (np.asarray(a) for a in run(jnp.asarray(s0.x), jnp.asarray(s0.v)))
    else:
        xs, vs = _rk4_numpy(gamma, s0.x, s0.v, steps, h)
    positions = np.vstack([s0.x[None], xs])
    velocities = np.vstack([s0.v[None], vs])
    times = h * np.arange(steps + 1)

    finite = np.all(np.isfinite(positions), axis=1) & np.all(np.isfinite(velocities), axis=1)
    inside = np.array([metric.domain.contains(p) for p in positions]) & finite
    if not inside.all():
        first_out = int(np.argmin(inside))
        partial = _with_drift(metric, times[:first_out], positions[:first_out], velocities[:first_out])
        raise LeftDomain(f"geodesic left the chart at t={times[first_out]:.6g}", trace=partial)

    trace = _with_drift(metric, times, positions, velocities)
    if trace.norm_drift > drift_limit:
        raise StepTooLarge(f"g(v,v) drifted by {trace.norm_drift:.3g} (limit {drift_limit:g}); "
                           f"reduce the step")
    return trace


def _with_drift(metric, times, positions, velocities) -> GeodesicTrace:
    if len(times) == 0:
        return GeodesicTrace(times, positions, velocities, 0.0)
    norms = quadratic_form(metric, positions, velocities)
    return GeodesicTrace(times, positions, velocities, float(np.max(np.abs(norms - norms[0]))))


def null_seed(counter: int, n: int) -> np.ndarray:
    """Deterministic seed vector number ``counter`` (counter-based Philox stream)."""
    rng = np.random.Generator(np.random.Philox(key=counter))
    return rng.normal(size=n)


def _canonical_sign(vec):
    k = int(np.argmax(np.abs(vec)))
    return vec if vec[k] >= 0 else -vec


def null_direction(metric: ChartMetric, x, seed) -> np.ndarray:
    """Unit (Euclidean) vector v with g(v, v) = 0 at x.

    The seed is split into its components along the positive and negative
    eigenspaces of g(x); each part is normalised to g = +1 and g = -1 and the
    two are added.  If the seed has no component along one eigenspace, the
    eigenvector of that sign with the smallest index is used instead.
    """
    x = np.asarray(x, dtype=float)
    g = metric(x)
    seed = np.asarray(seed, dtype=float)
    eigval, eigvec = np.linalg.eigh(g)
    pos, neg = eigvec[:, eigval > 0], eigvec[:, eigval < 0]
    if pos.shape[1] == 0 or neg.shape[1] == 0:
        raise DefiniteSignature(f"metric {metric.name!r} has definite signature "
                                f"{signature_of(g)} at {x.tolist()}: no null directions")

    def part(basis):
        u = basis @ (basis.T @ seed)
        if np.linalg.norm(u) < 1e-12 * max(1.0, np.linalg.norm(seed)):
            u = _canonical_sign(basis[:, 0])
        return u

    u, w = part(pos), part(neg)
    u = u / np.sqrt(u @ g @ u)
    w = w / np.sqrt(-(w @ g @ w))
    v = u + w
    return v / np.linalg.norm(v)


def central_weights(m: int, accuracy: int):
    """Offsets and weights of the central stencil for d^m/dt^m of the given even accuracy."""
    half = (m - 1) // 2 + accuracy // 2
    offsets = np.arange(-half, half + 1)
    vander = np.vander(offsets, increasing=True).T.astype(float)
    rhs = np.zeros(len(offsets))
    rhs[m] = math.factorial(m)
    return offsets, np.linalg.solve(vander, rhs)


def time_derivative(values: np.ndarray, dt: float, m: int, stride: int = 1, accuracy: int = 8):
    """Central-difference d^m/dt^m of uniformly sampled values.

    Returns ``(indices, derivative)`` for the sample indices where the stencil fits.
    """
    offsets, weights = central_weights(m, accuracy)
    reach = int(offsets[-1]) * stride
    idx = np.arange(reach, len(values) - reach)
    if idx.size == 0:
        raise TraceTooShort(f"{len(values)} samples cannot hold a stencil of half-width {reach}")
    out = np.zeros((idx.size,) + values.shape[1:])
    for off, w in zip(offsets, weights):
        out += w * values[idx + off * stride]
    return idx, out / (stride * dt) ** m


def _stencil_for(m: int, dt: float):
    spacing, accuracy = TIME_STENCILS.get(m, TIME_STENCIL_DEFAULT)
    return max(1, int(round(spacing / dt))), accuracy


def contract_velocity(tensor: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Full contraction of a batched rank-m array with v in every slot."""
    out = tensor
    while out.ndim > 1:
        out = np.einsum("...i,...i->...", out, v[(slice(None),) + (None,) * (out.ndim - 2)])
    return out


def pullback_derivative_residual(metric: ChartMetric, f: TensorField, trace: GeodesicTrace, m: int,
                                 cfg: DerivativeConfig = ANALYTIC, stride: Optional[int] = None,
                                 accuracy: Optional[int] = None, tensor: Optional[TensorField] = None,
                                 return_series: bool = False):
    """max_t |<D^m f, v^m> - d^m/dt^m f(gamma(t))| over the interior of the trace.

    ``tensor`` replaces D^m f by any rank-m field (e.g. an equation residual);
    the time derivative is always taken of ``f`` along the curve.
    """
    if m < 1:
        raise ValueError("m must be at least 1")
    dt = trace.step
    d_stride, d_acc = _stencil_for(m, dt)
    stride = stride or d_stride
    accuracy = accuracy or d_acc
    values = np.asarray(f(trace.positions), dtype=float)
    idx, dmf = time_derivative(values, dt, m, stride, accuracy)
    field = tensor if tensor is not None else covariant_power(f, metric, m, cfg)
    contracted = contract_velocity(np.asarray(field(trace.positions[idx])), trace.velocities[idx])
    if return_series:
        return trace.times[idx], contracted, dmf
    return float(np.max(np.abs(contracted - dmf)))


def fit_polynomial(trace: GeodesicTrace, f, degree: int) -> PolyFit:
    """Least-squares polynomial in t fitted to f(gamma(t)); ``f`` is a field or an array of samples."""
    t = np.asarray(trace.times, dtype=float)
    if isinstance(f, TensorField):
        y = np.asarray(f(trace.positions), dtype=float)
    else:
        y = np.asarray(f, dtype=float)
    if len(t) < degree + 2:
        raise TraceTooShort(f"need at least {degree + 2} samples for a degree-{degree} fit")
    design = np.vander(t, degree + 1, increasing=True)
    coef, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
    if rank < degree + 1:
        raise RankDeficient(f"degenerate time grid for a degree-{degree} fit")
    resid = y - design @ coef
    return PolyFit(degree, coef, float(np.sqrt(np.mean(resid ** 2))))
