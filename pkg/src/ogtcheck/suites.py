"""Named verification suites over sample grids, and the report they produce."""
from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np
import yaml

from .chart_fields import ANALYTIC, DerivativeConfig, TensorField
from .cone import (assemble_hat_tensor, build_parallel_from_solution, cone_metric,
                   hat_parallel_residual, verify_cone_christoffels)
from .connection import covariant_derivative
from .equations import (GallotCoefficients, ResidualReport, gallot_residual_field, lemma1_residuals,
                        reconstructed_field, tanno_residual, tanno_residual_field, trace_residual)
from .errors import GeometryError, UnknownName
from .geodesics import (GeodesicState, integrate_geodesic, null_direction, null_seed,
                        pullback_derivative_residual)
from .models import ModelCatalogEntry, get_model, random_trig_field

SCHEMA_VERSION = 1
WORKERS_ENV = "OGTCHECK_WORKERS"
CONE_RADII = (0.5, 1.0, 2.0)
GEODESIC_SPAN = 1.0

DEFAULT_TOLERANCES = {
    "tanno": 1e-6,
    "trace": 1e-6,
    "lemma1": 1e-6,
    "reconstruct": 1e-6,
    "cone-christoffel": 1e-8,
    "cone-parallel": 1e-5,
    "null-reduction": 1e-4,
    "ep-reduction": 1e-3,
    "negative-control": 1e-2,
}
NEEDS_FIELD = {"tanno", "trace", "lemma1", "reconstruct", "cone-parallel"}


@dataclass(frozen=True)
class SuiteConfig:
    suite: str
    metric: str
    field: Optional[str] = None
    grid: int = 8
    seed: int = 0
    tolerance: Optional[float] = None
    fd_steps: Optional[tuple] = None
    output: Optional[str] = None

    def __post_init__(self):
        if self.grid < 2:
            raise ValueError("grid must be at least 2 points per axis")
        if self.tolerance is not None and self.tolerance <= 0:
            raise ValueError("tolerance must be positive")

    @property
    def tol(self) -> float:
        return self.tolerance if self.tolerance is not None else DEFAULT_TOLERANCES[self.suite]

    @property
    def derivatives(self) -> DerivativeConfig:
        if self.fd_steps:
            return DerivativeConfig(scheme="fd", base_steps=tuple(self.fd_steps))
        return ANALYTIC


@dataclass
class RunReport:
    suite: str
    config: dict
    checks: list
    wall_time: float
    verdict: str = field(init=False)

    def __post_init__(self):
        self.verdict = "pass" if self.checks and all(c.passed for c in self.checks) else "fail"

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def body(self) -> dict:
        """Everything except the wall time; identical for identical configurations."""
        return {
            "schema_version": SCHEMA_VERSION,
            "suite": self.suite,
            "config": self.config,
            "verdict": self.verdict,
            "checks": [c.as_dict() for c in self.checks],
        }

    def to_yaml(self) -> str:
        doc = self.body()
        doc["wall_time"] = round(self.wall_time, 6)
        return yaml.safe_dump(doc, sort_keys=False, default_flow_style=None, width=100)


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def map_points(fn: Callable, points: np.ndarray, workers: Optional[int] = None) -> np.ndarray:
    """Apply a batched evaluator chunk-wise over a worker pool; results keep point order."""
    workers = workers or worker_count()
    if workers == 1 or len(points) < 2 * workers:
        return np.asarray(fn(points))
    chunks = np.array_split(points, workers)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(fn, chunks))
    return np.concatenate(parts)


def sample_points(entry: ModelCatalogEntry, grid: int) -> np.ndarray:
    pts = entry.metric.domain.grid(grid)
    if entry.probes:
        pts = np.vstack([np.asarray(entry.probes, dtype=float), pts])
    return pts


def _field(entry, cfg) -> Optional[TensorField]:
    return entry.get_field(cfg.field) if cfg.field else None


def _suite_tanno(entry, cfg):
    pts = sample_points(entry, cfg.grid)
    lam = _field(entry, cfg)
    res = map_points(lambda p: tanno_residual(entry.metric, lam, p, cfg.derivatives), pts)
    return [ResidualReport.from_residuals("tanno", pts, res, cfg.tol)]


def _suite_trace(entry, cfg):
    pts = sample_points(entry, cfg.grid)
    lam = _field(entry, cfg)
    res = map_points(lambda p: trace_residual(entry.metric, lam, p, cfg.derivatives), pts)
    return [ResidualReport.from_residuals("trace", pts, res, cfg.tol)]


def _suite_lemma1(entry, cfg):
    pts = sample_points(entry, cfg.grid)
    parts = build_parallel_from_solution(entry.metric, _field(entry, cfg), 0.0, cfg.derivatives)
    b, v, m = lemma1_residuals(entry.metric, parts.mu, parts.lam1, parts.a, pts, cfg.derivatives)
    return [ResidualReport.from_residuals("lemma1-basic", pts, b, cfg.tol),
            ResidualReport.from_residuals("lemma1-gradient", pts, v, cfg.tol),
            ResidualReport.from_residuals("lemma1-mu", pts, m, cfg.tol)]


def _suite_reconstruct(entry, cfg):
    pts = sample_points(entry, cfg.grid)
    lam = _field(entry, cfg)
    metric = entry.metric
    parts = build_parallel_from_solution(metric, lam, 0.0, cfg.derivatives)
    rec = reconstructed_field(metric, parts.a)
    if rec.traceable and lam.traceable:
        rfn, lfn = rec.fn, lam.fn
        diff = TensorField(metric.dim, 0, lambda x: rfn(x) - lfn(x), metric.domain, name="rec-diff")
    else:
        diff = TensorField(metric.dim, 0, lambda x: rec(x) - lam(x), metric.domain, traceable=False)
    res = covariant_derivative(diff, metric, cfg.derivatives)(pts)
    return [ResidualReport.from_residuals("reconstruct", pts, res, cfg.tol)]


def _suite_cone_christoffel(entry, cfg):
    pts = sample_points(entry, cfg.grid)
    return [verify_cone_christoffels(entry.metric, pts, cfg.derivatives, cfg.tol)]


def _suite_cone_parallel(entry, cfg):
    base_pts = sample_points(entry, cfg.grid)
    cone = cone_metric(entry.metric)
    parts = build_parallel_from_solution(entry.metric, _field(entry, cfg), 0.0, cfg.derivatives)
    hat_a = assemble_hat_tensor(parts, cone.x0_range)
    pts = np.vstack([np.column_stack([np.full(len(base_pts), r), base_pts]) for r in CONE_RADII])
    res = map_points(lambda p: hat_parallel_residual(cone, hat_a, p, cfg.derivatives), pts)
    return [ResidualReport.from_residuals("cone-parallel", pts, res, cfg.tol)]


def _geodesic_fields(entry, cfg, count):
    if cfg.field:
        return [entry.get_field(cfg.field)]
    rng = np.random.default_rng(cfg.seed)
    return [random_trig_field(entry.metric.domain, rng) for _ in range(count)]


def _null_traces(entry, cfg):
    metric = entry.metric
    starts = metric.domain.sample(cfg.grid, seed=cfg.seed)
    traces = []
    for i, x in enumerate(starts):
        v = null_direction(metric, x, null_seed(1000 * cfg.seed + i, metric.dim))
        traces.append(integrate_geodesic(metric, GeodesicState(x, v), GEODESIC_SPAN, cfg=cfg.derivatives))
    return starts, traces


def _suite_null_reduction(entry, cfg):
    starts, traces = _null_traces(entry, cfg)
    reports = []
    for j, f in enumerate(_geodesic_fields(entry, cfg, 3)):
        rfield = tanno_residual_field(entry.metric, f, cfg.derivatives)
        norms = [pullback_derivative_residual(entry.metric, f, tr, 3, cfg.derivatives, tensor=rfield)
                 for tr in traces]
        reports.append(ResidualReport(f"null-reduction[{cfg.field or f'random-{j}'}]",
                                      list(starts), norms, cfg.tol))
    return reports


def _suite_ep_reduction(entry, cfg):
    starts, traces = _null_traces(entry, cfg)
    rng = np.random.default_rng(cfg.seed + 1)
    reports = []
    for p in (1, 2, 3):
        coeffs = GallotCoefficients.random(p, rng)
        for j, f in enumerate(_geodesic_fields(entry, cfg, 1)):
            efield = gallot_residual_field(entry.metric, f, coeffs, cfg.derivatives)
            norms = [pullback_derivative_residual(entry.metric, f, tr, p + 1, cfg.derivatives, tensor=efield)
                     for tr in traces]
            reports.append(ResidualReport(f"ep-reduction[p={p},{cfg.field or f'random-{j}'}]",
                                          list(starts), norms, cfg.tol))
    return reports


def _suite_negative_control(entry, cfg):
    pts = sample_points(entry, cfg.grid)
    fields = _geodesic_fields(entry, cfg, 20)
    worst_points, norms = [], []
    for f in fields:
        res = tanno_residual(entry.metric, f, pts, cfg.derivatives)
        per_point = np.max(np.abs(res.reshape(len(pts), -1)), axis=1)
        k = int(np.argmax(per_point))
        worst_points.append(pts[k])
        norms.append(per_point[k])
    return [ResidualReport("negative-control", worst_points, norms, cfg.tol, expect="above")]


SUITES = {
    "tanno": _suite_tanno,
    "trace": _suite_trace,
    "lemma1": _suite_lemma1,
    "reconstruct": _suite_reconstruct,
    "cone-christoffel": _suite_cone_christoffel,
    "cone-parallel": _suite_cone_parallel,
    "null-reduction": _suite_null_reduction,
    "ep-reduction": _suite_ep_reduction,
    "negative-control": _suite_negative_control,
}


def resolve(cfg: SuiteConfig) -> ModelCatalogEntry:
    """Check that every name in the configuration exists; raises ``UnknownName``."""
    if cfg.suite not in SUITES:
        raise UnknownName(f"unknown suite {cfg.suite!r}; choose from {', '.join(SUITES)}")
    entry = get_model(cfg.metric)
    if cfg.field is not None:
        entry.get_field(cfg.field)
    elif cfg.suite in NEEDS_FIELD:
        raise UnknownName(f"suite {cfg.suite!r} needs --field (one of {sorted(entry.fields)})")
    return entry


def run_suite(cfg: SuiteConfig) -> RunReport:
    """Run one suite deterministically and, if ``cfg.output`` is set, write the report there."""
    entry = resolve(cfg)
    echo = {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(cfg).items() if k != "output"}
    echo["tolerance"] = cfg.tol
    start = time.perf_counter()
    try:
        checks = SUITES[cfg.suite](entry, cfg)
    except GeometryError as exc:
        checks = [ResidualReport(f"{cfg.suite}: {type(exc).__name__}: {exc}", [], [np.inf], cfg.tol)]
    report = RunReport(cfg.suite, echo, checks, time.perf_counter() - start)
    if cfg.output:
        with open(cfg.output, "w", encoding="utf-8") as fh:
            fh.write(report.to_yaml())
    return report
