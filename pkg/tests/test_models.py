import numpy as np
import pytest

from ogtcheck.chart_fields import eval_metric
from ogtcheck.connection import laplacian
from ogtcheck.equations import tanno_residual
from ogtcheck.errors import UnknownName, UnsupportedModel
from ogtcheck.models import (CATALOG, embed_sphere, get_model, list_catalog, make_flat_torus,
                             make_harmonic, make_round_sphere, make_trig_field,
                             make_warped_lorentz_torus, negated, random_trig_field, torus_box)


def test_flat_torus_examples():
    m = make_flat_torus(3, [1, 1, -1])
    assert m.signature == (2, 1) and m.indefinite
    np.testing.assert_array_equal(eval_metric(m, [0.2, 0.4, 0.6]), np.diag([1.0, 1.0, -1.0]))
    for bad in ((2, []), (2, [1]), (2, [1, 2]), (0, [])):
        with pytest.raises(UnsupportedModel):
            make_flat_torus(*bad)


def test_warped_torus():
    m = make_warped_lorentz_torus(0.2)
    np.testing.assert_allclose(m([0.0, 0.25]), np.diag([1.2, -1.2]))
    with pytest.raises(UnsupportedModel):
        make_warped_lorentz_torus(1.0)


def test_round_spheres():
    s3 = make_round_sphere(3)
    np.testing.assert_allclose(s3([np.pi / 2, np.pi / 6, 0.0]), np.diag([1.0, 1.0, 0.25]), atol=1e-15)
    with pytest.raises(UnsupportedModel):
        make_round_sphere(4)
    assert negated(s3).signature == (0, 3)


def test_embedding_lands_on_unit_sphere():
    for n in (2, 3):
        pts = make_round_sphere(n).domain.sample(20)
        for p in pts:
            c = embed_sphere(n, p)
            assert sum(float(v) ** 2 for v in c.values()) == pytest.approx(1.0, abs=1e-14)


def test_harmonic_examples():
    h = make_harmonic(2, 2, "xy")
    th, ph = 0.8, 0.3
    assert h([th, ph]) == pytest.approx(np.sin(th) ** 2 * np.sin(2 * ph), abs=1e-15)
    zz = make_harmonic(2, 2, "zz")
    assert zz([th, ph]) == pytest.approx(3 * np.cos(th) ** 2 - 1, abs=1e-15)
    with pytest.raises(UnsupportedModel):
        make_harmonic(2, 3, "x")
    with pytest.raises(UnsupportedModel):
        make_harmonic(2, 1, "w")


@pytest.mark.parametrize("n", [2, 3])
@pytest.mark.parametrize("degree,variants", [(1, ("x", "z")), (2, ("x2-y2", "xy", "xz", "zz"))])
def test_harmonics_are_eigenfunctions(n, degree, variants):
    metric = make_round_sphere(n)
    pts = metric.domain.sample(30, seed=n)
    eig = degree * (degree + n - 1)
    for v in variants:
        h = make_harmonic(n, degree, v)
        np.testing.assert_allclose(laplacian(h, metric, pts), -eig * h(pts), atol=1e-12)


def test_trig_fields():
    f = make_trig_field(torus_box(2), [(2.0, [1, 0], 0.0), (1.0, [0, 1], np.pi / 2)])
    assert f([0.0, 0.0]) == pytest.approx(2.0)
    rng = np.random.default_rng(0)
    g = random_trig_field(torus_box(3), rng, n_terms=4)
    a, b = np.array([0.1, 0.2, 0.3]), np.array([1.1, -0.8, 2.3])
    assert g(a) == pytest.approx(g(b), abs=1e-12)
    vals = g(torus_box(3).sample(50))
    assert np.ptp(vals) > 0.1


def test_catalog_listing():
    names = list_catalog()
    assert names[:3] == ["flat-torus-2", "flat-torus-3", "lorentz-torus-2"]
    assert "sphere-2" in names and "warped-lorentz-torus-2" in names
    assert list_catalog("sphere") == ["sphere-2", "sphere-3", "negdef-sphere-2"]
    assert list_catalog("no-such") == []
    with pytest.raises(UnknownName):
        get_model("klein-bottle")
    with pytest.raises(UnknownName):
        get_model("sphere-2").get_field("h7")
    with pytest.raises(KeyError):
        get_model("klein-bottle")


@pytest.mark.parametrize("name", list(CATALOG))
def test_catalog_notes_are_accurate(name):
    entry = CATALOG[name]
    pts = entry.metric.domain.grid(5)
    for field_name, f in entry.fields.items():
        key = field_name if field_name in entry.notes else field_name[:2] + "*"
        note = entry.notes.get(key)
        if note is None:
            continue
        worst = np.max(np.abs(tanno_residual(entry.metric, f, pts)))
        if note.startswith("solution"):
            assert worst < 1e-10, (field_name, worst)
        else:
            assert worst > 0.01, (field_name, worst)


def test_probes_inside_domain():
    for entry in CATALOG.values():
        for p in entry.probes:
            assert entry.metric.domain.contains(p)
