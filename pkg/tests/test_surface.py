import math

import numpy as np
import pytest

from srminimal.errors import CharacteristicPointError, InvalidSurfaceError
from srminimal.mesh import parametric_mesh
from srminimal.surface import (
    LevelSurface,
    angle_field,
    area_first_variation,
    boundary_bump,
    characteristic_matrix,
    classify_characteristic_point,
    cylinder_volume_rate,
    find_characteristic_points,
    horizontal_area,
    horizontal_flux,
    horizontal_normal,
    minimal_residual,
    minimal_residual_batch,
    normal_field,
    sample_surface_points,
    trace_singular_curve,
)

XYZ = ["x", "y", "z"]
# 12 / (10 sqrt 10): hand expansion, confirmed by the finite-difference oracle below
SADDLE_RESIDUAL = 0.37947331922020550


def surf(src, level=0.0):
    return LevelSurface.parse(src, XYZ, level)


# -- horizontal normal ----------------------------------------------------------

def test_normal_on_heisenberg_plane(h1):
    d = horizontal_normal(h1, surf("z"), [1, 0, 0])
    assert (d.x1f, d.x2f, d.d1) == (0.0, -0.5, 0.5)
    assert d.nu == (0.0, -1.0)
    assert np.allclose(d.nu_chart, [0, -1, 0.5])
    assert not d.characteristic


def test_characteristic_flag(h1):
    d = horizontal_normal(h1, surf("z"), [0, 0, 0])
    assert d.characteristic and d.nu is None


def test_normal_is_unit(e2, rng):
    S = surf("x*cos(z) + y*sin(z)")
    for q in sample_surface_points(e2, S, 20, [[-2, 2], [-2, 2], [-3, 3]]):
        d = horizontal_normal(e2, S, q)
        assert math.hypot(*d.nu) == pytest.approx(1.0, abs=1e-15)
        assert d.d0 >= d.d1


def test_invalid_surface(h1):
    with pytest.raises(InvalidSurfaceError):
        horizontal_normal(h1, surf("x^2"), [0, 1, 1])
    with pytest.raises(InvalidSurfaceError):
        horizontal_normal(h1, surf("z"), [0, 0, 1])


# -- minimal surface residual ------------------------------------------------------

def _oracle_residual(q, F, frame, c12, h=1e-4):
    """Mean curvature from central differences only (no symbolic derivatives)."""

    def along(i, f):
        def g(p):
            X = frame(p)[:, i]
            return (f(p + h * X) - f(p - h * X)) / (2 * h)
        return g

    X1F, X2F = along(0, F), along(1, F)
    a, b = X1F(q), X2F(q)
    x11, x22 = along(0, X1F)(q), along(1, X2F)(q)
    x12, x21 = along(0, X2F)(q), along(1, X1F)(q)
    d1 = math.hypot(a, b)
    return (x11 * b * b + x22 * a * a - a * b * (x12 + x21)) / d1 ** 3 + (c12[1] * a - c12[0] * b) / d1


def test_saddle_oracle_agrees_with_frozen_value():
    def frame(p):
        x, y, _ = p
        return np.array([[1, 0], [0, 1], [y / 2, -x / 2]], float)

    val = _oracle_residual(np.array([1.0, 1.0, 1.0]), lambda p: p[2] - p[0] * p[1], frame, (0.0, 0.0))
    assert val == pytest.approx(SADDLE_RESIDUAL, abs=1e-6)
    assert SADDLE_RESIDUAL == pytest.approx(12 / (10 * math.sqrt(10)), abs=1e-15)


def test_saddle_residual(h1):
    assert abs(minimal_residual(h1, surf("z - x*y"), [1, 1, 1]) - SADDLE_RESIDUAL) <= 1e-9


def test_rototranslation_residual_matches_oracle(e2):
    # a non-minimal surface, so both constant terms and second derivatives matter
    F = lambda p: p[1] - p[0] ** 2 - 0.3 * math.sin(p[2])

    def frame(p):
        z = p[2]
        return np.array([[math.cos(z), 0], [math.sin(z), 0], [0, 1]])

    q = np.array([0.4, 0.16 + 0.3 * math.sin(0.8), 0.8])
    want = _oracle_residual(q, F, frame, (0.0, 0.0))
    got = minimal_residual(e2, surf("y - x^2 - 0.3*sin(z)"), q)
    assert got == pytest.approx(want, abs=1e-6)
    assert abs(got) > 0.1


MINIMAL = [
    ("h1", "z", [[-2, 2], [-2, 2], [-1, 1]]),
    ("e2", "y - x - 0.7*(sin(z) + cos(z)) - 0.3", [[-2, 2], [-2, 2], [-3, 3]]),
    ("e2", "2*x - sin(z)", [[-2, 2], [-2, 2], [-3, 3]]),
    ("e2", "-3*x + 0.5*sin(z) - 1", [[-2, 2], [-2, 2], [-3, 3]]),
    ("e2", "x*cos(z) + y*sin(z)", [[-2, 2], [-2, 2], [-3, 3]]),
]


@pytest.mark.parametrize("which,src,box", MINIMAL)
def test_minimal_surfaces(which, src, box, request):
    S = request.getfixturevalue(which)
    W = surf(src)
    pts = sample_surface_points(S, W, 200, box, seed=5, min_d1=0.1)
    assert len(pts) == 200
    assert np.max(np.abs(minimal_residual_batch(S, W, pts))) <= 1e-10


def test_residual_refuses_characteristic_points(h1):
    with pytest.raises(CharacteristicPointError):
        minimal_residual(h1, surf("z"), [0, 0, 0])


# -- area ------------------------------------------------------------------------

def disk(r0=0.05, nr=120, nth=240):
    return parametric_mesh(lambda r, t: np.stack([r * np.cos(t), r * np.sin(t), 0 * r], -1),
                           (r0, 1.0), (0.0, 2 * np.pi), nr, nth)


ANNULUS = math.pi / 3 * (1 - 0.05 ** 3)


def test_area_density_on_heisenberg_plane(h1, rng):
    # i_nu mu = (r/2) dx^dy on z = 0
    for x, y in rng.uniform(-1, 1, (10, 2)):
        d = horizontal_normal(h1, surf("z"), [x, y, 0])
        F = h1.frame_matrix([x, y, 0])
        dens = np.linalg.det(np.column_stack([d.nu_chart, [1, 0, 0], [0, 1, 0]])) / np.linalg.det(F)
        assert abs(dens) == pytest.approx(math.hypot(x, y) / 2, rel=1e-12)


def test_empty_mesh_has_no_area(h1):
    assert horizontal_area(h1, np.zeros((0, 0, 3))) == 0.0
    assert horizontal_area(h1, np.zeros((1, 5, 3))) == 0.0


def test_disk_area(h1):
    m = disk()
    a = horizontal_area(h1, m)
    assert abs(a - ANNULUS) / ANNULUS < 1e-3
    assert horizontal_area(h1, m, surf("z")) == pytest.approx(a, rel=1e-12)


def test_cylinder_rate_matches_area(h1):
    m = disk()
    rate = cylinder_volume_rate(h1, m, normal_field(h1, surf("z")), 1e-3, surf("z"))
    assert abs(rate - math.pi / 3) < 2e-3
    assert abs(rate - horizontal_area(h1, m)) / rate < 5e-3


def test_cylinder_rate_converges(e2):
    W = surf("x*cos(z) + y*sin(z)")
    m = parametric_mesh(lambda s, z: np.stack([s * np.sin(z), -s * np.cos(z), z], -1), (0.5, 1.5), (-1, 1), 40, 40)
    field = normal_field(e2, W)
    r = [cylinder_volume_rate(e2, m, field, eps, W) for eps in (1e-2, 5e-3, 2.5e-3)]
    d1, d2 = r[0] - r[1], r[1] - r[2]
    # halving eps at least halves the error (observed: quarters it)
    assert abs(d2) <= 0.55 * abs(d1)
    order = math.log2(d1 / d2)
    limit = r[2] + d2 / (2 ** order - 1)
    assert limit == pytest.approx(horizontal_area(e2, m, W), rel=5e-3)


def test_normal_maximises_flux_and_rate(h1, e2, rng):
    m = disk(nr=40, nth=80)
    best = horizontal_area(h1, m)
    rate = cylinder_volume_rate(h1, m, normal_field(h1, surf("z")), 1e-3, surf("z"))
    for phi in rng.uniform(0, 2 * np.pi, 10):
        assert horizontal_flux(h1, m, angle_field(phi), surf("z")) < best
        assert cylinder_volume_rate(h1, m, angle_field(phi), 1e-3, surf("z")) <= rate + 1e-6
    W = surf("x*cos(z) + y*sin(z)")
    p = parametric_mesh(lambda s, z: np.stack([s * np.sin(z), -s * np.cos(z), z], -1), (0.5, 1.5), (-1, 1), 30, 30)
    best = horizontal_area(e2, p, W)
    for phi in rng.uniform(0, 2 * np.pi, 20):
        assert horizontal_flux(e2, p, angle_field(phi), W) < best


# -- variation of area ---------------------------------------------------------------

PATCHES = {
    "h1 plane": ("h1", lambda x, y: np.stack([x, y, 0 * x], -1), (0.5, 1.5), (-0.5, 0.5)),
    "e2 a)": ("e2", lambda x, z: np.stack([x, x + 0.7 * (np.sin(z) + np.cos(z)), z], -1), (-1, 1), (1, 3)),
    "e2 b)": ("e2", lambda y, z: np.stack([0.5 * np.sin(z) + 1, y, z], -1), (-1, 1), (-1, 1)),
    "e2 c)": ("e2", lambda s, z: np.stack([s * np.sin(z), -s * np.cos(z), z], -1), (0.5, 1.5), (-1, 1)),
}


@pytest.mark.parametrize("name", sorted(PATCHES))
def test_minimal_patches_are_critical(name, request):
    which, fn, ur, vr = PATCHES[name]
    S = request.getfixturevalue(which)
    m = parametric_mesh(fn, ur, vr, 61, 61)
    a0 = horizontal_area(S, m)
    rng = np.random.default_rng(2)
    for _ in range(5):
        V = boundary_bump(m.shape, rng)
        assert abs(area_first_variation(S, m, V)) <= 1e-3 * a0


def test_saddle_is_not_critical(h1):
    m = parametric_mesh(lambda x, y: np.stack([x, y, x * y], -1), (0.5, 1.5), (-0.5, 0.5), 61, 61)
    a0 = horizontal_area(h1, m)
    rng = np.random.default_rng(2)
    worst = max(abs(area_first_variation(h1, m, boundary_bump(m.shape, rng))) for _ in range(5))
    assert worst > 1e-3 * a0


# -- characteristic points -------------------------------------------------------------

def test_heisenberg_plane_has_one_characteristic_point(h1):
    roots = find_characteristic_points(h1, surf("z"), [[-1, 1]] * 3)
    assert len(roots) == 1 and np.allclose(roots[0], 0, atol=1e-12)


def test_rototranslation_singular_lines(e2):
    W = surf("x + sin(z)")
    roots = find_characteristic_points(e2, W, [[-2, 2], [-1, 1], [-math.pi, math.pi]], resolution=15)
    assert roots
    for q in roots:
        assert abs(math.cos(q[2])) < 1e-10
        assert q[0] == pytest.approx(-math.sin(q[2]), abs=1e-10)
        rep = classify_characteristic_point(e2, W, q)
        assert rep.kind == "singular-curve-candidate" and rep.index is None
        assert abs(rep.detA) <= 1e-9
    assert {round(math.copysign(1, q[2])) for q in roots} == {1, -1}


def test_helicoid_has_no_characteristic_points(e2):
    assert find_characteristic_points(e2, surf("x*cos(z) + y*sin(z)"), [[-2, 2], [-2, 2], [-3, 3]]) == []


def test_heisenberg_plane_classification(h1):
    rep = classify_characteristic_point(h1, surf("z"), [0, 0, 0])
    assert np.allclose(rep.A, [[0, 0.5], [-0.5, 0]], atol=1e-9)
    assert rep.detA == pytest.approx(0.25)
    assert rep.kind == "isolated" and rep.index == 1
    # the trace can vanish at an isolated point of a minimal surface
    assert rep.traceA == 0.0
    d = rep.to_dict()
    assert set(d) == {"location", "A", "detA", "traceA", "kind", "index"}


def test_index_does_not_depend_on_basis_order(h1):
    W = surf("z")
    H = h1.horizontal_matrix(np.zeros(3))
    swapped = classify_characteristic_point(h1, W, [0, 0, 0], basis=(H[:, 1], H[:, 0]))
    assert swapped.index == 1
    assert swapped.detA == pytest.approx(0.25)  # A -> P A P with P the swap


@pytest.mark.parametrize("which,src", [
    ("h1", "z - 0.3*x + 0.2*y - 1"),
    ("h1", "z + 2*x"),
    ("h1_mirror", "z - 0.5*y"),
])
def test_isolated_points_of_minimal_surfaces_have_index_one(which, src, request):
    S = request.getfixturevalue(which)
    W = surf(src)
    roots = find_characteristic_points(S, W, [[-5, 5]] * 3)
    assert len(roots) == 1
    rep = classify_characteristic_point(S, W, roots[0])
    assert rep.kind == "isolated" and rep.index == 1


def test_saddle_point_has_index_minus_one(h1):
    # non-minimal, for contrast: det A < 0 at the origin
    W = surf("z + x*y/2 - x^2/2 + y^2/2")
    roots = find_characteristic_points(h1, W, [[-1, 1]] * 3)
    assert len(roots) == 1
    rep = classify_characteristic_point(h1, W, roots[0])
    assert rep.detA < 0 and rep.index == -1


def test_singular_curve_tracing(e2):
    path = trace_singular_curve(e2, surf("x + sin(z)"), [-1, 0, math.pi / 2], steps=20)
    assert len(path) == 21
    assert np.allclose(path[:, 0], -1) and np.allclose(path[:, 2], math.pi / 2)
    assert np.ptp(path[:, 1]) == pytest.approx(0.2, rel=1e-6)


def test_characteristic_matrix_rank_one_on_singular_line(e2):
    A, _ = characteristic_matrix(e2, surf("x + sin(z)"), [-1, 0.3, math.pi / 2])
    assert np.linalg.matrix_rank(A, tol=1e-9) == 1
