import itertools

import numpy as np
import pytest
import sympy as sp

import oracles
from ogtcheck.chart_fields import (CENTRAL_FD, ChartMetric, DerivativeConfig, TensorField,
                                   constant_field, eval_metric)
from ogtcheck.cone import (HatTensorParts, assemble_hat_tensor, build_parallel_from_solution,
                           cone_christoffel_table, cone_metric, hat_parallel_residual,
                           residual_blocks, split_hat_tensor, verify_cone_christoffels)
from ogtcheck.connection import christoffel, christoffel_field
from ogtcheck.equations import lemma1_residuals
from ogtcheck.errors import PointOutsideDomain
from ogtcheck.models import (make_flat_torus, make_harmonic, make_round_sphere, make_trig_field,
                             make_warped_lorentz_torus, random_trig_field, torus_box)

SPHERE2 = make_round_sphere(2)
LORENTZ = make_flat_torus(2, [1, -1])
WARPED = make_warped_lorentz_torus()
H1 = make_harmonic(2, 1, "z")
H2 = make_harmonic(2, 2, "x2-y2")


def test_cone_metric_components_and_signature():
    cone = cone_metric(LORENTZ)
    assert cone.dim == 3 and cone.signature == (2, 1)
    np.testing.assert_allclose(eval_metric(cone, [2.0, 0.3, 0.4]), np.diag([1.0, 4.0, -4.0]))
    sphere_cone = cone_metric(SPHERE2)
    assert sphere_cone.signature == (3, 0)
    np.testing.assert_allclose(sphere_cone([1.0, 0.7, 0.1])[1:, 1:], SPHERE2([0.7, 0.1]))
    with pytest.raises(PointOutsideDomain):
        cone_metric(LORENTZ, x0_range=(0.0, 1.0))
    with pytest.raises(PointOutsideDomain):
        cone([5.0, 0.3, 0.4])


def test_christoffel_table_example_on_lorentz_torus():
    table = cone_christoffel_table(LORENTZ, [0.2, 0.2])
    assert table[0, 1, 1] == -1.0 and table[0, 2, 2] == 1.0
    assert table[1, 0, 1] == table[1, 1, 0] == table[2, 0, 2] == 1.0
    got = christoffel(cone_metric(LORENTZ), [1.0, 0.2, 0.2]).gamma
    np.testing.assert_allclose(got, table, atol=1e-15)


@pytest.mark.parametrize("base", [make_flat_torus(2, [1, 1]), LORENTZ, SPHERE2, WARPED])
def test_cone_christoffels_match_table(base):
    pts = base.domain.grid(5)
    assert verify_cone_christoffels(base, pts).max < 1e-12
    fd = DerivativeConfig(scheme="fd", base_steps=(1e-5,))
    assert verify_cone_christoffels(base, pts, fd, tolerance=1e-5).passed


@pytest.mark.parametrize("name", ["sphere", "warped"])
def test_cone_christoffels_match_symbolic_oracle_at_every_radius(name):
    g, coords, base = {
        "sphere": (oracles.SPHERE2_METRIC, oracles.SPHERE2, SPHERE2),
        "warped": (oracles.WARPED_METRIC, oracles.TORUS2, WARPED),
    }[name]
    big, hat_coords = oracles.cone(g, coords)
    gam = oracles.christoffel(big, hat_coords)
    table = {idx: gam[idx[0]][idx[1]][idx[2]] for idx in itertools.product(range(3), repeat=3)}
    oracle = oracles.to_numeric(table, 3, hat_coords)
    x0 = hat_coords[0]
    # closed forms at a general radius
    for j, k in itertools.product(range(1, 3), repeat=2):
        assert sp.simplify(gam[0][j][k] + x0 * g[j - 1, k - 1]) == 0
        assert sp.simplify(gam[j][0][k] - (1 / x0 if j == k else 0)) == 0
        assert sp.simplify(gam[j][k][0] - (1 / x0 if j == k else 0)) == 0
    for i in range(3):
        assert gam[i][0][0] == 0
    cone = cone_metric(base)
    field = christoffel_field(cone)
    base_pts = base.domain.sample(10, seed=4)
    for r in (0.5, 1.0, 2.0, 3.5):
        pts = np.column_stack([np.full(len(base_pts), r), base_pts])
        np.testing.assert_allclose(field(pts), np.stack([oracle(p) for p in pts]), atol=1e-12)


def test_radial_degrees_are_forced_by_parallelism():
    # hat_a_00 = mu x0^d0, hat_a_0i = lam_i x0^d1, hat_a_ij = a_ij x0^d2 on the cone over a
    # one-dimensional base: the radial part of hat_nabla hat_a vanishes only for degrees (0, 1, 2)
    x0, y = sp.symbols("x0 y", positive=True)
    mu, lam, a = sp.symbols("mu lam a")
    coords = (x0, y)
    big = sp.diag(1, x0 ** 2)
    gam = oracles.christoffel(big, coords)

    def radial(d0, d1, d2):
        t = {(0, 0): mu * x0 ** d0, (0, 1): lam * x0 ** d1, (1, 0): lam * x0 ** d1, (1, 1): a * x0 ** d2}
        nab = oracles.covariant_derivative(t, 2, gam, coords)
        return [sp.simplify(nab[(0, i, j)]) for i, j in ((0, 0), (0, 1), (1, 1))]

    assert radial(0, 1, 2) == [0, 0, 0]
    for degs in ((1, 1, 2), (0, 0, 2), (0, 1, 1), (0, 2, 2)):
        assert any(e != 0 for e in radial(*degs))


def test_parts_of_parallel_tensor_from_h2():
    parts = build_parallel_from_solution(SPHERE2, H2, C=0.5)
    x = np.array([0.9, 0.4])
    assert parts.mu(x) == pytest.approx(2 * H2(x) + 0.5)
    hat_a = assemble_hat_tensor(parts)
    mu, lam1, a = split_hat_tensor(hat_a, x)
    assert mu == pytest.approx(parts.mu(x))
    np.testing.assert_allclose(lam1, parts.lam1(x))
    np.testing.assert_allclose(a, parts.a(x))
    value = hat_a([2.0, 0.9, 0.4])
    np.testing.assert_allclose(value[0, 1:], 2.0 * parts.lam1(x))
    np.testing.assert_allclose(value[1:, 1:], 4.0 * parts.a(x))
    np.testing.assert_allclose(value, value.T)


def test_hat_tensor_parallel_for_solution():
    cone = cone_metric(SPHERE2)
    hat_a = assemble_hat_tensor(build_parallel_from_solution(SPHERE2, H2, 0.0))
    base_pts = SPHERE2.domain.sample(20, seed=1)
    for r in (0.5, 1.0, 2.0):
        pts = np.column_stack([np.full(len(base_pts), r), base_pts])
        assert np.max(np.abs(hat_parallel_residual(cone, hat_a, pts))) < 1e-12


def test_hat_tensor_not_parallel_for_non_solution():
    cone = cone_metric(SPHERE2)
    hat_a = assemble_hat_tensor(build_parallel_from_solution(SPHERE2, H1, 0.0))
    res = hat_parallel_residual(cone, hat_a, [1.0, np.pi / 4, 0.0])
    assert np.max(np.abs(res)) == pytest.approx(3 * np.sqrt(2) / 2, rel=1e-10)


def test_defect_example_mu_two_on_flat_torus():
    # mu = 2, lam = 0, a = 0: only the block V = mu g is nonzero
    box = LORENTZ.domain
    parts = HatTensorParts(constant_field(2.0, box), constant_field(np.zeros(2), box),
                           constant_field(np.zeros((2, 2)), box))
    res = hat_parallel_residual(cone_metric(LORENTZ), assemble_hat_tensor(parts), [1.0, 0.3, 0.6])
    blocks = residual_blocks(res)
    np.testing.assert_allclose(blocks["V"], 2.0 * np.diag([1.0, -1.0]), atol=1e-14)
    np.testing.assert_allclose(res[1:, 0, 1:], 2.0 * np.diag([1.0, -1.0]), atol=1e-14)
    assert np.abs(blocks["B"]).max() == 0.0 and np.abs(blocks["M"]).max() == 0.0
    assert np.abs(blocks["radial"]).max() == 0.0


def _random_parts(rng, base):
    box = base.domain
    n = base.dim
    scalars = [random_trig_field(box, rng) for _ in range(1 + n + n * (n + 1) // 2)]
    fns = [s.fn for s in scalars]
    import jax.numpy as jnp

    def lam_fn(x):
        return jnp.stack([fns[1 + i](x) for i in range(n)])

    def a_fn(x):
        vals = iter(fns[1 + n:])
        rows = [[None] * n for _ in range(n)]
        for i in range(n):
            for j in range(i, n):
                rows[i][j] = rows[j][i] = next(vals)(x)
        return jnp.array(rows)

    return HatTensorParts(scalars[0], TensorField(n, 1, lam_fn, box), TensorField(n, 2, a_fn, box))


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_cone_blocks_equal_first_order_system(seed):
    # for arbitrary (mu, lam, a) the blocks of hat_nabla hat_a at x0 = 1 are the system's defects
    rng = np.random.default_rng(seed)
    base = WARPED
    parts = _random_parts(rng, base)
    cone = cone_metric(base)
    hat_a = assemble_hat_tensor(parts)
    pts = base.domain.sample(10, seed=seed)
    res = hat_parallel_residual(cone, hat_a, np.column_stack([np.ones(len(pts)), pts]))
    blocks = residual_blocks(res)
    b, v, m = lemma1_residuals(base, parts.mu, parts.lam1, parts.a, pts)
    assert np.abs(b).max() > 0.1
    np.testing.assert_allclose(blocks["B"], b, atol=1e-11)
    np.testing.assert_allclose(blocks["V"], v, atol=1e-11)
    np.testing.assert_allclose(blocks["M"], m, atol=1e-11)
    assert np.abs(blocks["radial"]).max() < 1e-11


def test_proportional_case_constant_lambda():
    for lam_value, C in ((3.0, 0.0), (-1.25, 0.7)):
        lam = constant_field(lam_value, SPHERE2.domain)
        cone = cone_metric(SPHERE2)
        hat_a = assemble_hat_tensor(build_parallel_from_solution(SPHERE2, lam, C))
        pts = np.column_stack([np.repeat([0.5, 1.0, 2.0], 4), np.tile(SPHERE2.domain.sample(4), (3, 1))])
        np.testing.assert_allclose(hat_a(pts), (2 * lam_value + C) * cone(pts), atol=1e-12)


def test_split_assemble_round_trip():
    rng = np.random.default_rng(6)
    parts = _random_parts(rng, LORENTZ)
    hat_a = assemble_hat_tensor(parts)
    for x in LORENTZ.domain.sample(5, seed=3):
        mu, lam1, a = split_hat_tensor(hat_a, x)
        assert mu == pytest.approx(float(parts.mu(x)), abs=1e-14)
        np.testing.assert_allclose(lam1, parts.lam1(x), atol=1e-14)
        np.testing.assert_allclose(a, parts.a(x), atol=1e-14)
        again = split_hat_tensor(hat_a([1.0, *x]), x)
        assert again[0] == mu


def test_parts_validation():
    box = LORENTZ.domain
    s, v, m = (constant_field(1.0, box), constant_field(np.zeros(2), box),
               constant_field(np.zeros((2, 2)), box))
    with pytest.raises(ValueError):
        HatTensorParts(v, s, m)
    with pytest.raises(ValueError):
        HatTensorParts(s, v, m, radial_degrees=(0, 1, 1))


def test_numpy_base_with_callbacks():
    # a base metric without autodiff but with explicit derivative callbacks
    def g_np(x):
        return np.diag([1.0, np.sin(x[0]) ** 2])

    def partials(x, order):
        out = np.zeros((2,) * (order + 2))
        th = x[0]
        # d^k/dth^k sin^2 = -(2^(k-1)) cos(2 th + k pi/2)
        out[(0,) * order + (1, 1)] = -(2.0 ** (order - 1)) * np.cos(2 * th + order * np.pi / 2)
        return out

    base = ChartMetric.from_function(g_np, SPHERE2.domain, (2, 0), traceable=False, partials=partials)
    pts = SPHERE2.domain.sample(6, seed=1)
    assert verify_cone_christoffels(base, pts).max < 1e-12
    cone = cone_metric(base)
    hat = np.column_stack([np.full(6, 1.7), pts])
    np.testing.assert_allclose(christoffel_field(cone)(hat), christoffel_field(cone_metric(SPHERE2))(hat),
                               atol=1e-12)
