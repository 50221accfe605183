"""Residual tensors of the third-order equation, its trace, the first-order
system for the parts of a parallel cone tensor, and the higher equations E_p.

All residual functions accept a single point ``(n,)`` or a batch ``(N, n)``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from typing import Sequence

import jax.numpy as jnp
import numpy as np

from .chart_fields import ANALYTIC, ChartMetric, DerivativeConfig, TensorField, metric_inverse
from .connection import covariant_derivative, covariant_power, laplacian, laplacian_field
from .errors import InvalidCoefficients


def _tanno_metric_terms(dl, g, xp=np):
    """2 dl_k g_ij + dl_i g_jk + dl_j g_ik, laid out as [..., k, i, j]."""
    return (2.0 * xp.einsum("...k,...ij->...kij", dl, g)
            + xp.einsum("...i,...jk->...kij", dl, g)
            + xp.einsum("...j,...ik->...kij", dl, g))


def tanno_residual(metric: ChartMetric, lam: TensorField, x, cfg: DerivativeConfig = ANALYTIC):
    """R[k, i, j] = nabla_k nabla_j nabla_i lam + 2 lam_k g_ij + lam_i g_jk + lam_j g_ik."""
    x = np.asarray(x, dtype=float)
    d3 = covariant_power(lam, metric, 3, cfg)(x)
    dl = covariant_derivative(lam, metric, cfg)(x)
    return np.swapaxes(d3, -1, -2) + _tanno_metric_terms(dl, metric(x))


def tanno_residual_field(metric: ChartMetric, lam: TensorField,
                         cfg: DerivativeConfig = ANALYTIC) -> TensorField:
    """The residual R[k, i, j] as a rank-3 field (for contraction along curves)."""
    d3 = covariant_power(lam, metric, 3, cfg)
    dl = covariant_derivative(lam, metric, cfg)
    name = f"tanno({lam.name})"
    if d3.traceable and metric.field.traceable:
        d3fn, dlfn, gfn = d3.fn, dl.fn, metric.field.fn

        def fn(x):
            return jnp.swapaxes(d3fn(x), -1, -2) + _tanno_metric_terms(dlfn(x), gfn(x), jnp)

        return TensorField(metric.dim, 3, fn, metric.domain, max_order=d3.max_order, name=name)
    return TensorField(metric.dim, 3, lambda x: tanno_residual(metric, lam, x, cfg), metric.domain,
                       traceable=False, max_order=d3.max_order, name=name)


def trace_residual(metric: ChartMetric, lam: TensorField, x, cfg: DerivativeConfig = ANALYTIC):
    """T[k] = nabla_k(Delta lam) + 2(n+1) nabla_k lam."""
    x = np.asarray(x, dtype=float)
    n = metric.dim
    grad_lap = covariant_derivative(laplacian_field(lam, metric, cfg), metric, cfg)(x)
    return grad_lap + 2.0 * (n + 1) * covariant_derivative(lam, metric, cfg)(x)


def contract_metric(metric: ChartMetric, residual, x):
    """g^{ij} R[k, i, j] for residuals in the [k, i, j] layout."""
    ginv = metric_inverse(metric(np.asarray(x, dtype=float)), metric.det_floor)
    return np.einsum("...ij,...kij->...k", ginv, residual)


def eigen_residual(metric: ChartMetric, lam: TensorField, x, cfg: DerivativeConfig = ANALYTIC,
                   shift: float = 0.0):
    """Delta(lam + C) + 2(n+1)(lam + C), pointwise."""
    n = metric.dim
    return laplacian(lam, metric, x, cfg) + 2.0 * (n + 1) * (lam(np.asarray(x, dtype=float)) + shift)


def eigen_shift_constant(metric: ChartMetric, lam: TensorField, points,
                         cfg: DerivativeConfig = ANALYTIC) -> float:
    """Constant C making lam + C an eigenfunction with eigenvalue -2(n+1), averaged over ``points``."""
    n = metric.dim
    defect = eigen_residual(metric, lam, np.atleast_2d(points), cfg)
    return float(-np.mean(defect) / (2.0 * (n + 1)))


def lemma1_residuals(metric: ChartMetric, mu: TensorField, lam1: TensorField, a: TensorField,
                     x, cfg: DerivativeConfig = ANALYTIC):
    """Defects of the first-order system satisfied by the parts of a parallel cone tensor.

    Returns ``(B, V, M)`` with
    ``B[k,i,j] = nabla_k a_ij + lam_i g_jk + lam_j g_ik``,
    ``V[j,i] = nabla_j lam_i - a_ij + mu g_ij`` and
    ``M[i] = nabla_i mu - 2 lam_i``.
    """
    x = np.asarray(x, dtype=float)
    g = metric(x)
    l1 = lam1(x)
    b = (covariant_derivative(a, metric, cfg)(x)
         + np.einsum("...i,...jk->...kij", l1, g)
         + np.einsum("...j,...ik->...kij", l1, g))
    mu_val = np.asarray(mu(x))
    v = (covariant_derivative(lam1, metric, cfg)(x) - np.swapaxes(a(x), -1, -2)
         + mu_val[..., None, None] * np.swapaxes(g, -1, -2))
    m = covariant_derivative(mu, metric, cfg)(x) - 2.0 * l1
    return b, v, m


def reconstruct_lambda(metric: ChartMetric, a, x):
    """-1/2 g^{ij} a_ij at ``x``; ``a`` is a (0,2) field or its value at ``x``."""
    x = np.asarray(x, dtype=float)
    a_val = a(x) if isinstance(a, TensorField) else np.asarray(a, dtype=float)
    ginv = metric_inverse(metric(x), metric.det_floor)
    out = -0.5 * np.einsum("...ij,...ij->...", ginv, a_val)
    return float(out) if out.ndim == 0 else out


def reconstructed_field(metric: ChartMetric, a: TensorField) -> TensorField:
    """The scalar field x -> -1/2 g^{ij}(x) a_ij(x)."""
    gfn, afn = metric.field.fn, a.fn
    if metric.field.traceable and a.traceable:
        def fn(x):
            return -0.5 * jnp.einsum("ij,ij->", jnp.linalg.inv(gfn(x)), afn(x))

        return TensorField(metric.dim, 0, fn, metric.domain, max_order=a.max_order,
                           name=f"reconstruct({a.name})")
    return TensorField(metric.dim, 0, lambda x: reconstruct_lambda(metric, a, x), metric.domain,
                       traceable=False, max_order=a.max_order, name=f"reconstruct({a.name})")


# --- higher equations E_p -------------------------------------------------------


@dataclass(frozen=True)
class GallotCoefficients:
    """Coefficient table of an equation E_p.

    Each term is ``(s, sigma, value)`` with ``1 <= s <= (p+1)//2`` and ``sigma`` a
    1-based permutation of ``1..p+1``; it contributes
    ``value * (g^s (x) D^{p+1-2s} f)(Y_sigma(1), ..., Y_sigma(p+1))``.
    """

    p: int
    terms: tuple = field(default=())

    def __post_init__(self):
        if self.p < 1:
            raise InvalidCoefficients("p must be a positive integer")
        clean = []
        for term in self.terms:
            try:
                s, sigma, value = term
            except (TypeError, ValueError):
                raise InvalidCoefficients(f"malformed term {term!r}") from None
            sigma = tuple(int(v) for v in sigma)
            if not 1 <= s <= (self.p + 1) // 2:
                raise InvalidCoefficients(f"s={s} outside 1..{(self.p + 1) // 2}")
            if sorted(sigma) != list(range(1, self.p + 2)):
                raise InvalidCoefficients(f"{sigma} is not a permutation of 1..{self.p + 1}")
            clean.append((int(s), sigma, float(value)))
        object.__setattr__(self, "terms", tuple(clean))

    @classmethod
    def loads(cls, text: str, p: int = None) -> "GallotCoefficients":
        """Parse lines ``s sigma(1) ... sigma(p+1) value``; ``#`` starts a comment."""
        terms = []
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) < 4:
                raise InvalidCoefficients(f"line {lineno}: expected s, a permutation and a value")
            try:
                s = int(parts[0])
                sigma = tuple(int(v) for v in parts[1:-1])
                value = float(Fraction(parts[-1]))
            except ValueError as exc:
                raise InvalidCoefficients(f"line {lineno}: {exc}") from None
            line_p = len(sigma) - 1
            if p is None:
                p = line_p
            elif line_p != p:
                raise InvalidCoefficients(f"line {lineno}: permutation length {len(sigma)}, expected {p + 1}")
            terms.append((s, sigma, value))
        if p is None:
            raise InvalidCoefficients("empty table: p must be given explicitly")
        return cls(p, tuple(terms))

    def dumps(self) -> str:
        lines = [f"# E_{self.p}: s  sigma(1..{self.p + 1})  value"]
        for s, sigma, value in self.terms:
            lines.append(f"{s}  {' '.join(map(str, sigma))}  {value!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def random(cls, p: int, rng: np.random.Generator, n_terms: int = 4) -> "GallotCoefficients":
        terms = []
        for _ in range(n_terms):
            s = int(rng.integers(1, (p + 1) // 2 + 1))
            sigma = tuple(int(v) + 1 for v in rng.permutation(p + 1))
            terms.append((s, sigma, float(rng.normal())))
        return cls(p, tuple(terms))


def _outer(a, b):
    """Batched outer product; both arrays carry a leading batch axis."""
    ra, rb = a.ndim - 1, b.ndim - 1
    return a.reshape(a.shape + (1,) * rb) * b.reshape(b.shape[:1] + (1,) * ra + b.shape[1:])


def gallot_term(g, dk, s: int, sigma: Sequence[int]):
    """(g^s (x) D^k f) with slots permuted by ``sigma``; batched inputs."""
    t = dk if dk.ndim > 1 else dk.reshape(dk.shape[:1])
    for _ in range(s):
        t = _outer(g, t) if t.ndim > 1 else g * t[:, None, None]
    inverse = np.argsort(np.asarray(sigma) - 1)
    return np.transpose(t, (0,) + tuple(1 + inverse))


def gallot_residual(metric: ChartMetric, f: TensorField, x, coeffs: GallotCoefficients,
                    cfg: DerivativeConfig = ANALYTIC):
    """D^{p+1} f plus the coefficient-weighted metric terms, indices i1..i_{p+1}."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = np.atleast_2d(x)
    order = coeffs.p + 1
    out = covariant_power(f, metric, order, cfg)(pts)
    if coeffs.terms:
        g = metric(pts)
        cache = {}
        for s, sigma, value in coeffs.terms:
            k = order - 2 * s
            if k not in cache:
                cache[k] = covariant_power(f, metric, k, cfg)(pts)
            out = out + value * gallot_term(g, cache[k], s, sigma)
    return out[0] if single else out


def _gallot_term_single(g, dk, s, sigma, xp):
    t = dk
    for _ in range(s):
        t = xp.tensordot(g, t, axes=0)
    inverse = np.argsort(np.asarray(sigma) - 1)
    return xp.transpose(t, tuple(int(i) for i in inverse))


def gallot_residual_field(metric: ChartMetric, f: TensorField, coeffs: GallotCoefficients,
                          cfg: DerivativeConfig = ANALYTIC) -> TensorField:
    """The E_p residual as a rank-(p+1) field."""
    order = coeffs.p + 1
    top = covariant_power(f, metric, order, cfg)
    lower = {order - 2 * s: covariant_power(f, metric, order - 2 * s, cfg) for s, _, _ in coeffs.terms}
    name = f"E{coeffs.p}({f.name})"
    if top.traceable and metric.field.traceable and all(d.traceable for d in lower.values()):
        topfn, gfn = top.fn, metric.field.fn
        lowfn = {k: d.fn for k, d in lower.items()}

        def fn(x):
            out = topfn(x)
            g = gfn(x)
            for s, sigma, value in coeffs.terms:
                out = out + value * _gallot_term_single(g, lowfn[order - 2 * s](x), s, sigma, jnp)
            return out

        return TensorField(metric.dim, order, fn, metric.domain, max_order=top.max_order, name=name)
    return TensorField(metric.dim, order, lambda x: gallot_residual(metric, f, x, coeffs, cfg),
                       metric.domain, traceable=False, max_order=top.max_order, name=name)


TANNO_TABLE_RESOURCE = "tanno_e2.txt"


def derive_tanno_table(seed: int = 0, dim: int = 3) -> GallotCoefficients:
    """Coefficients of E_2 that reproduce the third-order equation, by term matching.

    The E_2 residual in slots (i1, i2, i3) is compared with R[k, i, j] under
    (i1, i2, i3) = (k, j, i).  Each canonical s=1 term (sigma(1) < sigma(2),
    since g is symmetric) is evaluated on random symmetric g and random
    gradients, and the metric part of R is fitted by least squares.
    """
    rng = np.random.default_rng(seed)
    candidates = [sig for sig in itertools.permutations((1, 2, 3)) if sig[0] < sig[1]]
    rows, target = [], []
    for _ in range(4):
        g = rng.normal(size=(dim, dim))
        g = g + g.T
        dl = rng.normal(size=dim)
        want = np.swapaxes(_tanno_metric_terms(dl, g), -1, -2)
        cols = [gallot_term(g[None], dl[None], 1, sig)[0].ravel() for sig in candidates]
        rows.append(np.stack(cols, axis=-1))
        target.append(want.ravel())
    design, rhs = np.concatenate(rows), np.concatenate(target)
    coef, *_ = np.linalg.lstsq(design, rhs, rcond=None)
    if np.max(np.abs(design @ coef - rhs)) > 1e-9:
        raise InvalidCoefficients("the third-order equation is not an E_2 instance")
    terms = []
    for sig, c in zip(candidates, coef):
        c = float(Fraction(float(c)).limit_denominator(1000))
        if c != 0.0:
            terms.append((1, sig, c))
    return GallotCoefficients(2, tuple(terms))


def tanno_table() -> GallotCoefficients:
    """The shipped E_2 fixture equivalent to the third-order equation."""
    text = resources.files("ogtcheck.data").joinpath(TANNO_TABLE_RESOURCE).read_text()
    return GallotCoefficients.loads(text)


def tanno_in_gallot_layout(residual):
    """Reorder R[k, i, j] into the E_2 slot order (k, j, i)."""
    return np.swapaxes(residual, -1, -2)


# --- reporting ---------------------------------------------------------------


@dataclass
class ResidualReport:
    """Per-point max-abs residuals of one check.

    With ``expect="below"`` the check passes iff the largest per-point norm is
    at most ``tolerance``; with ``expect="above"`` (negative controls) it
    passes iff the smallest per-point norm exceeds it.
    """

    check_name: str
    points: list
    per_point_norm: list
    tolerance: float
    expect: str = "below"
    max: float = field(init=False)
    mean: float = field(init=False)
    min: float = field(init=False)
    passed: bool = field(init=False)

    def __post_init__(self):
        norms = np.asarray(self.per_point_norm, dtype=float)
        self.per_point_norm = [float(v) for v in norms]
        self.points = [[float(c) for c in np.atleast_1d(p)] for p in self.points]
        self.max = float(norms.max()) if norms.size else 0.0
        self.mean = float(norms.mean()) if norms.size else 0.0
        self.min = float(norms.min()) if norms.size else 0.0
        if self.expect == "below":
            self.passed = bool(self.max <= self.tolerance)
        elif self.expect == "above":
            self.passed = bool(norms.size > 0 and self.min > self.tolerance)
        else:
            raise ValueError(f"expect must be 'below' or 'above', not {self.expect!r}")

    @classmethod
    def from_residuals(cls, name, points, residuals, tolerance, expect="below"):
        """``residuals`` is one array or a tuple of arrays, each with a leading point axis."""
        if not isinstance(residuals, (tuple, list)):
            residuals = (residuals,)
        points = np.atleast_2d(points)
        norms = np.zeros(len(points))
        for r in residuals:
            r = np.asarray(r, dtype=float).reshape(len(points), -1)
            norms = np.maximum(norms, np.max(np.abs(r), axis=1, initial=0.0))
        return cls(name, list(points), list(norms), tolerance, expect)

    def as_dict(self) -> dict:
        return {
            "check": self.check_name,
            "expect": self.expect,
            "tolerance": float(self.tolerance),
            "passed": self.passed,
            "max": self.max,
            "mean": self.mean,
            "min": self.min,
            "points": [{"index": i, "x": p, "norm": v}
                       for i, (p, v) in enumerate(zip(self.points, self.per_point_norm))],
        }
