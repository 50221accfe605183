"""Levi-Civita connection of a chart metric.

Index conventions: ``gamma[i, j, k]`` is Gamma^i_{jk}; the covariant derivative
puts its new index first, ``(nabla T)[k, i1, ..., is] = nabla_k T_{i1...is}``,
so the m-fold derivative of a scalar is ``D^m f[a1, ..., am] =
nabla_a1 ... nabla_am f``.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Optional

import jax
import jax.numpy as jnp
import numpy as np

from .chart_fields import (
    ANALYTIC,
    ChartMetric,
    DerivativeConfig,
    TensorField,
    metric_inverse,
    partial_derivatives,
)


@dataclass(frozen=True)
class ChristoffelAt:
    gamma: np.ndarray
    point: np.ndarray
    dgamma: Optional[np.ndarray] = None


def _christoffel_from(ginv, dg, xp):
    # dg[l, a, b] = d_l g_ab
    first = xp.einsum("...ih,...kjh->...ijk", ginv, dg)
    second = xp.einsum("...ih,...jhk->...ijk", ginv, dg)
    third = xp.einsum("...ih,...hjk->...ijk", ginv, dg)
    return 0.5 * (first + second - third)


def _uses_autodiff(*fields: TensorField, cfg: DerivativeConfig) -> bool:
    return cfg.scheme == "analytic" and all(f.traceable and f.partials is None for f in fields)


@functools.lru_cache(maxsize=256)
def _christoffel_field(metric, cfg):
    gfield = metric.field
    if _uses_autodiff(gfield, cfg=cfg):
        gfn = gfield.fn

        def fn(x):
            dg = jnp.moveaxis(jax.jacfwd(gfn)(x), -1, 0)
            return _christoffel_from(jnp.linalg.inv(gfn(x)), dg, jnp)

        return TensorField(metric.dim, 3, fn, metric.domain, max_order=gfield.max_order - 1,
                           name=f"Gamma[{metric.name}]")

    def fn_np(x):
        dg = partial_derivatives(gfield, x, 1, cfg)
        return _christoffel_from(metric_inverse(gfield(x), metric.det_floor), dg, np)

    return TensorField(metric.dim, 3, fn_np, metric.domain, traceable=False,
                       max_order=gfield.max_order - 1, name=f"Gamma[{metric.name}]")


def christoffel_field(metric: ChartMetric, cfg: DerivativeConfig = ANALYTIC) -> TensorField:
    """Gamma^i_jk as an evaluable array field (rank 3, *not* a covariant tensor)."""
    return _christoffel_field(metric, cfg)


def covariant_derivative(field: TensorField, metric: ChartMetric,
                         cfg: DerivativeConfig = ANALYTIC) -> TensorField:
    """nabla T as a new (0, s+1) field that differentiates ``field`` lazily.

    Repeated calls with the same arguments return the same object, so compiled
    evaluators are shared.
    """
    return _covariant_derivative(field, metric, cfg)


def laplacian_field(f: TensorField, metric: ChartMetric, cfg: DerivativeConfig = ANALYTIC) -> TensorField:
    """Delta f = g^{ij} (D^2 f)_{ij} as a scalar field."""
    return _laplacian_field(f, metric, cfg)


def christoffel(metric: ChartMetric, x, cfg: DerivativeConfig = ANALYTIC,
                with_derivative: bool = False) -> ChristoffelAt:
    """Christoffel symbols at ``x`` (optionally with ``dgamma[l, i, j, k] = d_l Gamma^i_jk``)."""
    x = np.asarray(x, dtype=float)
    gfield = metric.field
    dg = partial_derivatives(gfield, x, 1, cfg)
    gamma = _christoffel_from(metric_inverse(gfield(x), metric.det_floor), dg, np)
    dgamma = None
    if with_derivative:
        dgamma = partial_derivatives(christoffel_field(metric, cfg), x, 1, cfg)
    return ChristoffelAt(gamma=gamma, point=x, dgamma=dgamma)


def _connection_terms(gamma, t, rank, xp):
    """sum over slots a of Gamma^h_{k i_a} T_{i1..h..is}, new index k first."""
    total = 0.0
    for a in range(rank):
        moved = xp.moveaxis(t, a, 0)
        term = xp.einsum("hkb,h...->kb...", gamma, moved)
        total = total + xp.moveaxis(term, 1, a + 1)
    return total


@functools.lru_cache(maxsize=1024)
def _covariant_derivative(field, metric, cfg):
    if field.dim != metric.dim:
        raise ValueError("field and metric live on charts of different dimension")
    rank = field.rank
    order = min(field.max_order, metric.field.max_order) - 1
    name = f"nabla({field.name})"
    gamma_field = christoffel_field(metric, cfg)

    if _uses_autodiff(field, metric.field, cfg=cfg):
        tfn, gfn = field.fn, gamma_field.fn

        def fn(x):
            dt = jnp.moveaxis(jax.jacfwd(tfn)(x), -1, 0)
            if rank == 0:
                return dt
            return dt - _connection_terms(gfn(x), tfn(x), rank, jnp)

        return TensorField(field.dim, rank + 1, fn, field.domain, max_order=order, name=name)

    def fn_np(x):
        dt = partial_derivatives(field, x, 1, cfg)
        if rank == 0:
            return dt
        return dt - _connection_terms(gamma_field(x), field(x), rank, np)

    return TensorField(field.dim, rank + 1, fn_np, field.domain, traceable=False,
                       max_order=order, name=name)


def covariant_power(field: TensorField, metric: ChartMetric, m: int,
                    cfg: DerivativeConfig = ANALYTIC) -> TensorField:
    """m-fold covariant derivative, ``D^m`` for a scalar."""
    out = field
    for _ in range(m):
        out = covariant_derivative(out, metric, cfg)
    return out


@functools.lru_cache(maxsize=256)
def _laplacian_field(f, metric, cfg):
    if f.rank != 0:
        raise ValueError("the Laplacian acts on scalar fields")
    hess = covariant_power(f, metric, 2, cfg)
    gfn = metric.field.fn
    if hess.traceable and metric.field.traceable:
        hfn = hess.fn

        def fn(x):
            return jnp.einsum("ij,ij->", jnp.linalg.inv(gfn(x)), hfn(x))

        return TensorField(f.dim, 0, fn, f.domain, max_order=hess.max_order,
                           name=f"Delta({f.name})")

    def fn_np(x):
        return np.einsum("ij,ij->", metric_inverse(metric(x), metric.det_floor), hess(x))

    return TensorField(f.dim, 0, fn_np, f.domain, traceable=False, max_order=hess.max_order,
                       name=f"Delta({f.name})")


def laplacian(f: TensorField, metric: ChartMetric, x, cfg: DerivativeConfig = ANALYTIC):
    """Laplacian of ``f`` at ``x``; an array if ``x`` is a batch of points."""
    x = np.asarray(x, dtype=float)
    hess = covariant_power(f, metric, 2, cfg)(x)
    ginv = metric_inverse(metric(x), metric.det_floor)
    out = np.einsum("...ij,...ij->...", ginv, hess)
    return float(out) if out.ndim == 0 else out
