"""Metric cone dx0^2 + x0^2 g over a chart metric and parallel symmetric tensors on it.

The cone direction is coordinate 0; base coordinates follow at indices 1..n.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional

import jax.numpy as jnp
import numpy as np

from .chart_fields import ANALYTIC, Box, ChartMetric, DerivativeConfig, TensorField
from .connection import christoffel, covariant_derivative, covariant_power
from .equations import ResidualReport
from .errors import PointOutsideDomain

DEFAULT_X0_RANGE = (0.25, 4.0)
RADIAL_DEGREES = (0, 1, 2)


def _cone_box(base: Box, x0_range) -> Box:
    lo, hi = x0_range
    if not 0 < lo < hi:
        raise PointOutsideDomain(f"cone radial range {x0_range} must lie inside (0, inf)")
    return Box((float(lo),) + tuple(base.lows), (float(hi),) + tuple(base.highs),
               (False,) + tuple(base.periodic))


def _radial_factor(x0, r):
    # d^r/dx0^r of x0^2
    return (x0 ** 2, 2.0 * x0, 2.0)[r] if r < 3 else 0.0


@dataclass(frozen=True, eq=False)
class ConeMetric(ChartMetric):
    base: Optional[ChartMetric] = None
    x0_range: tuple = DEFAULT_X0_RANGE


def cone_metric(base: ChartMetric, x0_range=DEFAULT_X0_RANGE) -> ConeMetric:
    """Cone metric of dimension n+1 with signature (p+1, q)."""
    n = base.dim
    box = _cone_box(base.domain, x0_range)
    bfield = base.field
    p, q = base.signature
    name = f"cone({base.name})"

    if bfield.traceable and bfield.partials is None:
        gfn = bfield.fn

        def fn(X):
            block = X[0] ** 2 * gfn(X[1:])
            out = jnp.zeros((n + 1, n + 1), dtype=block.dtype)
            return out.at[0, 0].set(1.0).at[1:, 1:].set(block)

        tf = TensorField(n + 1, 2, fn, box, max_order=bfield.max_order, name=name)
    else:
        def fn_np(X):
            out = np.zeros((n + 1, n + 1))
            out[0, 0] = 1.0
            out[1:, 1:] = X[0] ** 2 * bfield(X[1:])
            return out

        partials = None
        if bfield.partials is not None:
            def partials(X, order):
                x0, x = X[0], X[1:]
                base_d = {k: (bfield(x) if k == 0 else np.asarray(bfield.partials(x, k)))
                          for k in range(order + 1)}
                out = np.zeros((n + 1,) * (order + 2))
                for idx in itertools.product(range(n + 1), repeat=order):
                    r = idx.count(0)
                    factor = _radial_factor(x0, r)
                    if factor == 0.0:
                        continue
                    spatial = tuple(i - 1 for i in idx if i != 0)
                    out[idx + (slice(1, None), slice(1, None))] = factor * base_d[order - r][spatial]
                return out

        tf = TensorField(n + 1, 2, fn_np, box, traceable=False, partials=partials,
                         max_order=bfield.max_order, name=name)
    return ConeMetric(tf, (p + 1, q), name=name, det_floor=base.det_floor, base=base,
                      x0_range=tuple(x0_range))


def cone_christoffel_table(base: ChartMetric, x, cfg: DerivativeConfig = ANALYTIC) -> np.ndarray:
    """Expected cone Christoffels at x0 = 1 from the base metric and its Christoffels."""
    x = np.asarray(x, dtype=float)
    n = base.dim
    out = np.zeros((n + 1,) * 3)
    out[0, 1:, 1:] = -base(x)
    for j in range(1, n + 1):
        out[j, 0, j] = out[j, j, 0] = 1.0
    out[1:, 1:, 1:] = christoffel(base, x, cfg).gamma
    return out


def verify_cone_christoffels(base: ChartMetric, x, cfg: DerivativeConfig = ANALYTIC,
                             tolerance: float = 1e-8, cone: Optional[ConeMetric] = None) -> ResidualReport:
    """Compare computed cone Christoffels at (1, x) with the closed-form table, all components."""
    cone = cone or cone_metric(base)
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    diffs = []
    for p in pts:
        hat_x = np.concatenate(([1.0], p))
        diffs.append(christoffel(cone, hat_x, cfg).gamma - cone_christoffel_table(base, p, cfg))
    return ResidualReport.from_residuals("cone-christoffel", pts, np.stack(diffs), tolerance)


@dataclass(frozen=True)
class HatTensorParts:
    """Blocks of a symmetric cone tensor at x0 = 1: hat_a_00 = mu, hat_a_0i = lam_i, hat_a_ij = a_ij."""

    mu: TensorField
    lam1: TensorField
    a: TensorField
    radial_degrees: tuple = RADIAL_DEGREES

    def __post_init__(self):
        if (self.mu.rank, self.lam1.rank, self.a.rank) != (0, 1, 2):
            raise ValueError("parts must have ranks (0, 1, 2)")
        if tuple(self.radial_degrees) != RADIAL_DEGREES:
            raise ValueError("only the radial degrees (0, 1, 2) give a parallel extension")


def _traceable(*fields):
    return all(f.traceable for f in fields)


def build_parallel_from_solution(metric: ChartMetric, lam: TensorField, C: float = 0.0,
                                 cfg: DerivativeConfig = ANALYTIC) -> HatTensorParts:
    """Parts (2 lam + C, nabla lam, D^2 lam + (2 lam + C) g) of a candidate parallel tensor."""
    C = float(C)
    grad = covariant_derivative(lam, metric, cfg)
    hess = covariant_power(lam, metric, 2, cfg)
    dom, n = metric.domain, metric.dim
    if _traceable(lam, hess, metric.field):
        lfn, hfn, gfn = lam.fn, hess.fn, metric.field.fn
        mu = TensorField(n, 0, lambda x: 2.0 * lfn(x) + C, dom, max_order=lam.max_order, name="mu")
        a = TensorField(n, 2, lambda x: hfn(x) + (2.0 * lfn(x) + C) * gfn(x), dom,
                        max_order=hess.max_order, name="a")
    else:
        mu = TensorField(n, 0, lambda x: 2.0 * float(lam(x)) + C, dom, traceable=False,
                         max_order=lam.max_order, name="mu")
        a = TensorField(n, 2, lambda x: hess(x) + (2.0 * float(lam(x)) + C) * metric(x), dom,
                        traceable=False, max_order=hess.max_order, name="a")
    return HatTensorParts(mu, grad, a)


def assemble_hat_tensor(parts: HatTensorParts, x0_range=DEFAULT_X0_RANGE) -> TensorField:
    """Cone tensor with hat_a_00 = mu, hat_a_0i = x0 lam_i, hat_a_ij = x0^2 a_ij."""
    n = parts.a.dim
    box = _cone_box(parts.a.domain, x0_range)
    order = min(parts.mu.max_order, parts.lam1.max_order, parts.a.max_order)
    if _traceable(parts.mu, parts.lam1, parts.a):
        mfn, lfn, afn = parts.mu.fn, parts.lam1.fn, parts.a.fn

        def fn(X):
            x0, x = X[0], X[1:]
            edge = x0 * lfn(x)
            out = jnp.zeros((n + 1, n + 1), dtype=edge.dtype)
            out = out.at[0, 0].set(mfn(x)).at[0, 1:].set(edge).at[1:, 0].set(edge)
            return out.at[1:, 1:].set(x0 ** 2 * afn(x))

        return TensorField(n + 1, 2, fn, box, max_order=order, name="hat_a")

    def fn_np(X):
        x0, x = X[0], X[1:]
        out = np.zeros((n + 1, n + 1))
        out[0, 0] = parts.mu(x)
        out[0, 1:] = out[1:, 0] = x0 * parts.lam1(x)
        out[1:, 1:] = x0 ** 2 * parts.a(x)
        return out

    return TensorField(n + 1, 2, fn_np, box, traceable=False, max_order=order, name="hat_a")


def split_hat_tensor(hat_a, x):
    """(mu, lam_i, a_ij) values of a cone (0,2) tensor at the cone point (1, x)."""
    x = np.asarray(x, dtype=float)
    if isinstance(hat_a, TensorField):
        value = hat_a(np.concatenate(([1.0], x)))
    else:
        value = np.asarray(hat_a, dtype=float)
    return float(value[0, 0]), value[0, 1:].copy(), value[1:, 1:].copy()


def hat_parallel_residual(cone: ConeMetric, hat_a: TensorField, x_hat, cfg: DerivativeConfig = ANALYTIC):
    """hat_nabla_k hat_a_ij laid out as [k, i, j]."""
    return covariant_derivative(hat_a, cone, cfg)(np.asarray(x_hat, dtype=float))


def residual_blocks(res) -> dict:
    """Split a cone residual [k, i, j] into the blocks matching the first-order system at x0 = 1."""
    return {
        "B": res[..., 1:, 1:, 1:],      # nabla_k a_ij + lam_i g_jk + lam_j g_ik
        "V": res[..., 1:, 1:, 0],       # nabla_j lam_i - a_ij + mu g_ij, indexed [j, i]
        "M": res[..., 1:, 0, 0],        # nabla_i mu - 2 lam_i
        "radial": res[..., 0, :, :],    # hat_nabla_0 hat_a
    }

