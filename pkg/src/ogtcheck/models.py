"""Concrete metrics and fields every identity is exercised on.

All evaluators are written with ``jax.numpy`` so their derivatives of every
order come from autodiff.  Spheres use spherical coordinates
``(theta_1, ..., theta_{n-1}, phi)`` with the polar angles kept a margin away
from the coordinate singularities.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import jax.numpy as jnp
import numpy as np

from .chart_fields import Box, ChartMetric, TensorField, constant_field
from .errors import UnknownName, UnsupportedModel

DEFAULT_MARGIN = 0.1
TWO_PI = 2.0 * np.pi


def torus_box(n: int) -> Box:
    return Box((0.0,) * n, (1.0,) * n, (True,) * n)


def make_flat_torus(n: int, signs) -> ChartMetric:
    """Constant diagonal metric ``diag(signs)`` on the unit-period n-torus."""
    signs = [float(s) for s in signs]
    if not signs:
        raise UnsupportedModel("the sign list is empty")
    if n < 1 or len(signs) != n:
        raise UnsupportedModel(f"need n >= 1 and {n} signs, got {len(signs)}")
    if any(s not in (1.0, -1.0) for s in signs):
        raise UnsupportedModel("signs must be +1 or -1")
    diag = jnp.asarray(signs)

    def fn(x):
        return jnp.diag(diag + 0.0 * x[0])

    p = sum(s > 0 for s in signs)
    label = "".join("+" if s > 0 else "-" for s in signs)
    return ChartMetric.from_function(fn, torus_box(n), (p, n - p), name=f"flat-torus[{label}]")


def make_warped_lorentz_torus(amplitude: float = 0.2) -> ChartMetric:
    """Curved periodic Lorentz metric diag(1 + a sin 2pi y, -(1 + a cos 2pi x))."""
    if not 0 <= amplitude < 1:
        raise UnsupportedModel("amplitude must lie in [0, 1)")

    def fn(x):
        return jnp.diag(jnp.array([1.0 + amplitude * jnp.sin(TWO_PI * x[1]),
                                   -(1.0 + amplitude * jnp.cos(TWO_PI * x[0]))]))

    return ChartMetric.from_function(fn, torus_box(2), (1, 1), name="warped-lorentz-torus")


def sphere_box(n: int, margin: float = DEFAULT_MARGIN) -> Box:
    polar = n - 1
    return Box((margin,) * polar + (0.0,), (np.pi - margin,) * polar + (TWO_PI,),
               (False,) * polar + (True,))


def make_round_sphere(n: int, margin: float = DEFAULT_MARGIN) -> ChartMetric:
    """Unit round sphere S^n (n = 2 or 3) in spherical coordinates."""
    if n == 2:
        def fn(x):
            return jnp.diag(jnp.array([1.0, jnp.sin(x[0]) ** 2]))
    elif n == 3:
        def fn(x):
            s1 = jnp.sin(x[0]) ** 2
            return jnp.diag(jnp.array([1.0, s1, s1 * jnp.sin(x[1]) ** 2]))
    else:
        raise UnsupportedModel(f"round spheres are provided for n in (2, 3), not {n}")
    return ChartMetric.from_function(fn, sphere_box(n, margin), (n, 0), name=f"sphere-{n}")


def negated(metric: ChartMetric) -> ChartMetric:
    """The metric -g on the same chart."""
    gfn = metric.field.fn
    p, q = metric.signature
    return ChartMetric.from_function(lambda x: -gfn(x), metric.domain, (q, p),
                                     name=f"-{metric.name}", traceable=metric.field.traceable,
                                     max_order=metric.field.max_order)


def embed_sphere(n: int, x):
    """Ambient Cartesian coordinates of a chart point, as a dict of named components."""
    if n == 2:
        th, ph = x[0], x[1]
        return {"x": jnp.sin(th) * jnp.cos(ph), "y": jnp.sin(th) * jnp.sin(ph), "z": jnp.cos(th)}
    if n == 3:
        t1, t2, ph = x[0], x[1], x[2]
        s = jnp.sin(t1) * jnp.sin(t2)
        return {"x": s * jnp.cos(ph), "y": s * jnp.sin(ph),
                "z": jnp.sin(t1) * jnp.cos(t2), "w": jnp.cos(t1)}
    raise UnsupportedModel(f"no embedding for S^{n}")


# Harmonic polynomials on R^{n+1}; restricted to the unit sphere they are
# Laplace eigenfunctions with eigenvalue -k(k+n-1).
_HARMONICS = {
    1: {
        "x": lambda c, n: c["x"],
        "y": lambda c, n: c["y"],
        "z": lambda c, n: c["z"],
        "w": lambda c, n: c["w"],
    },
    2: {
        "x2-y2": lambda c, n: c["x"] ** 2 - c["y"] ** 2,
        "xy": lambda c, n: 2.0 * c["x"] * c["y"],
        "xz": lambda c, n: c["x"] * c["z"],
        "zz": lambda c, n: (n + 1) * c["z"] ** 2 - 1.0,
    },
}


def make_harmonic(sphere_dim: int, degree: int, variant: str,
                  margin: float = DEFAULT_MARGIN) -> TensorField:
    """Restriction of a degree-1 or degree-2 harmonic polynomial to S^n."""
    if sphere_dim not in (2, 3):
        raise UnsupportedModel(f"no sphere of dimension {sphere_dim}")
    try:
        poly = _HARMONICS[degree][variant]
    except KeyError:
        raise UnsupportedModel(f"no degree-{degree} harmonic named {variant!r}") from None
    if variant == "w" and sphere_dim != 3:
        raise UnsupportedModel("the w coordinate exists only on S^3")

    def fn(x):
        return poly(embed_sphere(sphere_dim, x), sphere_dim)

    return TensorField(sphere_dim, 0, fn, sphere_box(sphere_dim, margin),
                       name=f"harmonic[{degree},{variant}]")


def make_trig_field(domain: Box, terms, name: str = "trig") -> TensorField:
    """Scalar sum of ``amp * cos(2 pi k.x + phase)`` over ``terms = [(amp, k, phase), ...]``."""
    amps = jnp.asarray([t[0] for t in terms], dtype=float)
    waves = jnp.asarray([t[1] for t in terms], dtype=float).reshape(len(terms), domain.dim)
    phases = jnp.asarray([t[2] for t in terms], dtype=float)

    def fn(x):
        return jnp.sum(amps * jnp.cos(TWO_PI * (waves @ x) + phases))

    return TensorField(domain.dim, 0, fn, domain, name=name)


def random_trig_field(domain: Box, rng: np.random.Generator, n_terms: int = 3,
                      kmax: int = 1, amplitude: float = 1.0) -> TensorField:
    """Random nonconstant trigonometric polynomial with integer wave vectors."""
    terms = []
    while len(terms) < n_terms:
        k = rng.integers(-kmax, kmax + 1, size=domain.dim)
        if not np.any(k):
            continue
        terms.append((amplitude * rng.uniform(0.2, 1.0), k.tolist(), rng.uniform(0, TWO_PI)))
    return make_trig_field(domain, terms, name="random-trig")


@dataclass(frozen=True)
class ModelCatalogEntry:
    name: str
    metric: ChartMetric
    fields: dict
    notes: dict = field(default_factory=dict)
    probes: tuple = ()

    def get_field(self, name: str) -> TensorField:
        try:
            return self.fields[name]
        except KeyError:
            raise UnknownName(f"model {self.name!r} has no field {name!r}; "
                              f"available: {sorted(self.fields)}") from None


def _torus_entry(name, signs, notes):
    metric = make_flat_torus(len(signs), signs)
    box = metric.domain
    n = box.dim
    k2 = [1, 1] + [0] * (n - 2)
    fields = {
        "const": constant_field(3.0, box, name="const"),
        "wave": make_trig_field(box, [(1.0, [1] + [0] * (n - 1), -np.pi / 2), (0.5, k2, 0.0)],
                                name="wave"),
    }
    return ModelCatalogEntry(name, metric, fields, notes)


def _sphere_entry(name, n, metric=None, notes=None, probes=()):
    metric = metric or make_round_sphere(n)
    fields = {"const": constant_field(3.0, metric.domain, name="const"),
              "h1": make_harmonic(n, 1, "w" if n == 3 else "z"),
              "h1-x": make_harmonic(n, 1, "x"),
              "h2": make_harmonic(n, 2, "x2-y2"),
              "h2-xy": make_harmonic(n, 2, "xy"),
              "h2-xz": make_harmonic(n, 2, "xz"),
              "h2-zz": make_harmonic(n, 2, "zz")}
    return ModelCatalogEntry(name, metric, fields, notes or {}, probes)


def _build_catalog() -> dict:
    entries = [
        _torus_entry("flat-torus-2", [1, 1], {"const": "solution", "wave": "non-solution"}),
        _torus_entry("flat-torus-3", [1, 1, 1], {"const": "solution", "wave": "non-solution"}),
        _torus_entry("lorentz-torus-2", [1, -1], {"const": "solution", "wave": "non-solution"}),
        _torus_entry("lorentz-torus-3", [1, 1, -1], {"const": "solution", "wave": "non-solution"}),
        _torus_entry("negdef-torus-2", [-1, -1], {"const": "solution", "wave": "non-solution"}),
        ModelCatalogEntry(
            "warped-lorentz-torus-2", make_warped_lorentz_torus(),
            {"const": constant_field(3.0, torus_box(2), name="const"),
             "wave": make_trig_field(torus_box(2), [(1.0, [1, 0], -np.pi / 2), (0.5, [1, 1], 0.0)],
                                     name="wave")},
            {"const": "solution", "wave": "non-solution"}),
        _sphere_entry("sphere-2", 2, probes=((np.pi / 4, 0.0),),
                      notes={"h2*": "solution (second eigenvalue)", "h1*": "non-solution",
                             "const": "solution"}),
        _sphere_entry("sphere-3", 3, probes=((np.pi / 4, np.pi / 2, 0.0),),
                      notes={"h2*": "solution (second eigenvalue)", "h1*": "non-solution",
                             "const": "solution"}),
        _sphere_entry("negdef-sphere-2", 2, metric=negated(make_round_sphere(2)),
                      probes=((np.pi / 4, 0.0),),
                      notes={"h2*": "non-solution", "h1*": "non-solution", "const": "solution"}),
    ]
    return {e.name: e for e in entries}


CATALOG = _build_catalog()


def list_catalog(filter_text: Optional[str] = None) -> list:
    """Catalog ids in a stable order, optionally restricted to those containing ``filter_text``."""
    names = list(CATALOG)
    if filter_text:
        names = [n for n in names if filter_text in n]
    return names


def get_model(name: str) -> ModelCatalogEntry:
    try:
        return CATALOG[name]
    except KeyError:
        raise UnknownName(f"unknown model {name!r}; see list_catalog()") from None
