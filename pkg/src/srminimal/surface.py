"""Level surfaces ``W = {F = c}`` in a three-dimensional sub-Riemannian chart.

Horizontal normal, sub-Riemannian mean curvature (the minimal-surface residual),
horizontal area of meshed patches with a cylinder-volume oracle, and detection
and classification of characteristic points (where ``X_1 F = X_2 F = 0``).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
from scipy.ndimage import minimum_filter

from .errors import CharacteristicPointError, GeometryError, InvalidSurfaceError
from .expr import DomainError, Expr, compile_exprs, gradient, parse_expression
from .mesh import SurfaceMesh, cell_geometry
from .structure import SRStructure, apply_field, canonical_volume_batch

log = logging.getLogger(__name__)

# characteristic threshold on D1
EPS_C = 1e-8
# relative threshold for det A (scaled by the Frobenius norm of A)
EPS_A = 1e-6


@dataclass(frozen=True)
class LevelSurface:
    F: Expr
    level: float = 0.0

    @classmethod
    def parse(cls, src: str, chart: Sequence[str], level: float = 0.0) -> "LevelSurface":
        return cls(parse_expression(src, chart), float(level))

    def __str__(self):
        return f"{{{self.F} = {self.level!r}}}"


@dataclass
class HorizontalNormalData:
    x1f: float
    x2f: float
    d1: float
    nu: tuple  # coefficients in (X_1, X_2); None at characteristic points
    nu_chart: np.ndarray | None
    x3f: float
    d0: float
    characteristic: bool


@dataclass
class CharPointReport:
    location: np.ndarray
    A: np.ndarray
    detA: float
    traceA: float
    kind: str  # "isolated" | "singular-curve-candidate"
    index: int | None

    def to_dict(self) -> dict:
        return {
            "location": [float(v) for v in self.location],
            "A": [[float(v) for v in row] for row in self.A],
            "detA": float(self.detA),
            "traceA": float(self.traceA),
            "kind": self.kind,
            "index": self.index,
        }


class SurfaceCalculus:
    """Symbolic derivatives of ``F`` along the frame, compiled once per (structure, surface)."""

    def __init__(self, structure: SRStructure, surface: LevelSurface):
        if structure.n != 3:
            raise ValueError("level-surface routines need a three-dimensional chart")
        self.structure = structure
        self.surface = surface
        F = surface.F
        X1, X2 = structure.frame
        self.x1f = apply_field(X1, F)
        self.x2f = apply_field(X2, F)
        self.second_exprs = (
            apply_field(X1, self.x1f),  # X1 X1 F
            apply_field(X2, self.x2f),  # X2 X2 F
            apply_field(X1, self.x2f),  # X1 X2 F
            apply_field(X2, self.x1f),  # X2 X1 F
        )
        self._first = compile_exprs([F, self.x1f, self.x2f, *gradient(F, 3)], 3)
        self._second = compile_exprs(list(self.second_exprs), 3)

    @cached_property
    def _x3f(self):
        return compile_exprs([apply_field(self.structure.reeb, self.surface.F)], 3)

    @cached_property
    def _jac(self):
        # rows: grad(F - c), grad(X1 F), grad(X2 F)
        F = self.surface.F
        return compile_exprs(gradient(F, 3) + gradient(self.x1f, 3) + gradient(self.x2f, 3), 3)

    def first(self, points):
        """``(F - c, X1F, X2F, grad F)`` at points."""
        v = self._first.batch(points)
        return v[..., 0] - self.surface.level, v[..., 1], v[..., 2], v[..., 3:6]

    def second(self, points):
        return self._second.batch(points)

    def jacobian(self, points):
        P = np.asarray(points, float)
        return self._jac.batch(P).reshape(P.shape[:-1] + (3, 3))


_CALC_CACHE: dict = {}


def calculus(structure: SRStructure, surface: LevelSurface) -> SurfaceCalculus:
    key = (id(structure), surface)
    calc = _CALC_CACHE.get(key)
    if calc is None or calc.structure is not structure:
        calc = SurfaceCalculus(structure, surface)
        _CALC_CACHE[key] = calc
    return calc


def _check_on_surface(fc, grad, tol):
    g = np.linalg.norm(grad, axis=-1)
    if np.any(g == 0.0):
        raise InvalidSurfaceError("dF vanishes at an evaluated point")
    if np.any(np.abs(fc) > tol * np.maximum(1.0, g)):
        raise InvalidSurfaceError("point is not on the level surface")


def horizontal_normal(structure: SRStructure, surface: LevelSurface, q,
                      tol: float = 1e-8) -> HorizontalNormalData:
    calc = calculus(structure, surface)
    q = np.asarray(q, float)
    fc, x1f, x2f, grad = calc.first(q)
    _check_on_surface(fc, grad, tol)
    x1f, x2f = float(x1f), float(x2f)
    d1 = math.hypot(x1f, x2f)
    x3f = float(calc._x3f.batch(q)[0])
    d0 = math.hypot(x1f, x2f, x3f)
    if d1 < EPS_C:
        return HorizontalNormalData(x1f, x2f, d1, None, None, x3f, d0, True)
    H = structure.horizontal_matrix(q)
    nu = (x1f / d1, x2f / d1)
    return HorizontalNormalData(x1f, x2f, d1, nu, H @ np.array(nu), x3f, d0, False)


def minimal_residual_batch(structure: SRStructure, surface: LevelSurface, points,
                           tol: float = 1e-8) -> np.ndarray:
    """Sub-Riemannian mean curvature of the level set at each point."""
    calc = calculus(structure, surface)
    P = np.asarray(points, float)
    fc, x1f, x2f, grad = calc.first(P)
    _check_on_surface(fc, grad, tol)
    d1 = np.hypot(x1f, x2f)
    if np.any(d1 < EPS_C):
        raise CharacteristicPointError("minimal residual requested at a characteristic point")
    s = calc.second(P)
    x11, x22, x12, x21 = s[..., 0], s[..., 1], s[..., 2], s[..., 3]
    H = x11 * x2f ** 2 + x22 * x1f ** 2 - x1f * x2f * (x12 + x21)
    c = structure.horizontal_constants(P)
    return H / d1 ** 3 + (c[..., 1] * x1f - c[..., 0] * x2f) / d1


def minimal_residual(structure: SRStructure, surface: LevelSurface, q, tol: float = 1e-8) -> float:
    return float(minimal_residual_batch(structure, surface, np.asarray(q, float)[None, :], tol)[0])


def project_to_surface(surface_or_calc, points, iterations: int = 30) -> np.ndarray:
    """Newton steps along ``grad F`` until ``F = c`` to machine precision."""
    calc = surface_or_calc
    P = np.array(points, float)
    for _ in range(iterations):
        fc, _, _, grad = calc.first(P)
        g2 = np.sum(grad ** 2, axis=-1)
        if np.any(g2 == 0.0):
            raise InvalidSurfaceError("dF vanishes during projection")
        P = P - (fc / g2)[..., None] * grad
        if np.max(np.abs(fc)) < 1e-15:
            break
    return P


def sample_surface_points(structure: SRStructure, surface: LevelSurface, count: int, box,
                          seed: int = 0, min_d1: float = 0.1) -> np.ndarray:
    """Random points of ``W`` (projected from the box) with ``D1 >= min_d1``."""
    calc = calculus(structure, surface)
    rng = np.random.default_rng(seed)
    box = np.asarray(box, float)
    found = []
    total = 0
    while total < count:
        P = rng.uniform(box[:, 0], box[:, 1], size=(4 * count, 3))
        P = project_to_surface(calc, P)
        fc, x1f, x2f, _ = calc.first(P)
        keep = (np.abs(fc) < 1e-12) & (np.hypot(x1f, x2f) >= min_d1)
        found.append(P[keep])
        total += int(keep.sum())
        if len(found) > 50:
            raise GeometryError("could not sample enough non-characteristic surface points")
    return np.concatenate(found)[:count]


# ---------------------------------------------------------------------------
# horizontal fields and area

UnitField = Callable[[np.ndarray], np.ndarray]


def angle_field(phi: float) -> UnitField:
    """Constant-angle horizontal field ``cos(phi) X_1 + sin(phi) X_2``."""
    u = np.array([math.cos(phi), math.sin(phi)])
    return lambda P: np.broadcast_to(u, np.shape(P)[:-1] + (2,))


def normal_field(structure: SRStructure, surface: LevelSurface) -> UnitField:
    """Horizontal normal of the level sets of ``F`` (defined off ``W`` too)."""
    calc = calculus(structure, surface)

    def field(P):
        _, x1f, x2f, _ = calc.first(P)
        d1 = np.hypot(x1f, x2f)
        if np.any(d1 < EPS_C):
            raise CharacteristicPointError("horizontal normal undefined at a characteristic point")
        return np.stack([x1f / d1, x2f / d1], axis=-1)

    return field


def _points_of(mesh) -> np.ndarray:
    return np.asarray(mesh.points if isinstance(mesh, SurfaceMesh) else mesh, float)


def _interior_products(structure, mid, ts, tt):
    """``mu(X_i, t_s, t_t)`` for i = 1, 2 at cell midpoints."""
    H = structure.horizontal_matrix(mid)
    return np.stack([canonical_volume_batch(structure, mid, H[..., :, i], ts, tt)
                     for i in range(2)], axis=-1)


def _cell_normals(structure, mesh, surface):
    """Unit horizontal normal coefficients per cell and the interior products."""
    P = _points_of(mesh)
    mid, ts, tt = cell_geometry(P)
    p = _interior_products(structure, mid, ts, tt)
    if surface is None:
        norm = np.linalg.norm(p, axis=-1)
        safe = np.where(norm > 0, norm, 1.0)
        return p / safe[..., None], p
    calc = calculus(structure, surface)
    _, x1f, x2f, _ = calc.first(P)
    if np.any(np.hypot(x1f, x2f) < EPS_C):
        raise CharacteristicPointError("mesh contains a characteristic vertex")
    return normal_field(structure, surface)(mid), p


def horizontal_area(structure: SRStructure, mesh, surface: LevelSurface | None = None) -> float:
    """Sum over cells of ``|mu(nu, t_s, t_t)|`` (midpoint rule).

    Without ``surface`` the normal of each cell is the unit horizontal vector
    maximising ``mu(., t_s, t_t)``; with it, the level-set normal is used.
    """
    P = _points_of(mesh)
    if P.shape[0] < 2 or P.shape[1] < 2:
        return 0.0
    nu, p = _cell_normals(structure, P, surface)
    return float(np.sum(np.abs(np.sum(nu * p, axis=-1))))


def horizontal_flux(structure: SRStructure, mesh, field: UnitField,
                    surface: LevelSurface | None = None) -> float:
    """``integral of i_X mu`` over the patch, oriented so that the normal has positive flux."""
    P = _points_of(mesh)
    if P.shape[0] < 2 or P.shape[1] < 2:
        return 0.0
    nu, p = _cell_normals(structure, P, surface)
    mid, _, _ = cell_geometry(P)
    orient = np.sign(np.sum(nu * p, axis=-1))
    return float(np.sum(orient * np.sum(field(mid) * p, axis=-1)))


def _flow(structure, field, P, eps, substeps):
    h = eps / substeps

    def velocity(Q):
        u = field(Q)
        H = structure.horizontal_matrix(Q)
        return np.einsum("...ij,...j->...i", H, u)

    Q = P.copy()
    for _ in range(substeps):
        k1 = velocity(Q)
        k2 = velocity(Q + 0.5 * h * k1)
        k3 = velocity(Q + 0.5 * h * k2)
        k4 = velocity(Q + h * k3)
        Q = Q + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return Q


def cylinder_volume_rate(structure: SRStructure, mesh, field: UnitField, eps: float,
                         surface: LevelSurface | None = None, substeps: int = 4) -> float:
    """``Vol(cylinder swept by the patch along field for time eps) / eps``.

    Every vertex is carried by the flow (RK4); each prism between a cell and its
    image contributes its canonical volume, signed by the patch orientation.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    P = _points_of(mesh)
    if P.shape[0] < 2 or P.shape[1] < 2:
        return 0.0
    try:
        Q = _flow(structure, field, P, eps, substeps)
    except DomainError as exc:
        raise GeometryError(f"flow leaves the chart domain: {exc}") from None
    nu, p = _cell_normals(structure, P, surface)
    orient = np.sign(np.sum(nu * p, axis=-1))

    def corners(X):
        return X[:-1, :-1], X[1:, :-1], X[:-1, 1:], X[1:, 1:]

    b00, b10, b01, b11 = corners(P)
    t00, t10, t01, t11 = corners(Q)
    a = 0.25 * ((b10 - b00) + (b11 - b01) + (t10 - t00) + (t11 - t01))
    b = 0.25 * ((b01 - b00) + (b11 - b10) + (t01 - t00) + (t11 - t10))
    c = 0.25 * ((t00 - b00) + (t10 - b10) + (t01 - b01) + (t11 - b11))
    centre = 0.125 * (b00 + b10 + b01 + b11 + t00 + t10 + t01 + t11)
    vol = canonical_volume_batch(structure, centre, c, a, b)
    return float(np.sum(orient * vol) / eps)


# ---------------------------------------------------------------------------
# characteristic points

def find_characteristic_points(structure: SRStructure, surface: LevelSurface, box,
                               resolution: int = 21, max_seeds: int = 400,
                               tol: float = 1e-10) -> list:
    """Roots of ``(F - c, X1F, X2F)`` in the box, seeded at grid minima of ``D1^2 + (F-c)^2``."""
    calc = calculus(structure, surface)
    box = np.asarray(box, float)
    axes = [np.linspace(lo, hi, resolution) for lo, hi in box]
    G = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    try:
        fc, x1f, x2f, _ = calc.first(G)
    except DomainError:
        raise GeometryError("surface not evaluable on the whole search box") from None
    merit = x1f ** 2 + x2f ** 2 + fc ** 2
    is_min = merit == minimum_filter(merit, size=3, mode="nearest")
    seeds = G[is_min]
    order = np.argsort(merit[is_min])
    seeds = seeds[order][:max_seeds]

    roots: list = []
    span = box[:, 1] - box[:, 0]
    for seed in seeds:
        q = _newton(calc, seed)
        if q is None:
            continue
        if np.any(q < box[:, 0] - 1e-9 * span) or np.any(q > box[:, 1] + 1e-9 * span):
            continue
        fc, x1f, x2f, _ = calc.first(q)
        if max(abs(fc), abs(x1f), abs(x2f)) > tol:
            log.debug("seed %s: residual too large", seed)
            continue
        if all(np.linalg.norm(q - r) > 1e-6 for r in roots):
            roots.append(q)
    return roots


def _newton(calc: SurfaceCalculus, q0, iterations: int = 50):
    q = np.array(q0, float)
    for _ in range(iterations):
        try:
            fc, x1f, x2f, _ = calc.first(q)
            J = calc.jacobian(q)
        except DomainError:
            log.debug("newton from %s left the domain", q0)
            return None
        g = np.array([fc, x1f, x2f])
        if np.max(np.abs(g)) < 1e-14:
            return q
        step = np.linalg.pinv(J, rcond=1e-10) @ g
        q = q - step
        if not np.all(np.isfinite(q)) or np.linalg.norm(q - q0) > 1e3:
            log.debug("newton from %s diverged", q0)
            return None
        if np.linalg.norm(step) < 1e-15:
            return q
    return q


def characteristic_matrix(structure: SRStructure, surface: LevelSurface, q, basis=None):
    """Jacobian ``A`` of ``(X1F, X2F)`` on ``T_q W`` together with the basis used.

    The default basis is ``(X_1(q), X_2(q))``, which spans ``T_q W`` at a
    characteristic point.  Entry ``A[i, j]`` is the i-th coordinate, in the basis,
    of the derivative of ``X1F X_1 + X2F X_2`` along basis vector j.
    """
    calc = calculus(structure, surface)
    q = np.asarray(q, float)
    H = structure.horizontal_matrix(q)
    B = H if basis is None else np.column_stack(basis)
    J = calc.jacobian(q)  # rows: grad F, grad X1F, grad X2F
    deriv = H @ (J[1:] @ B)  # columns: derivative of nu_0 along basis vectors
    A = np.linalg.lstsq(B, deriv, rcond=None)[0]
    return A, B


def _winding(structure, calc, q, B, radius, samples):
    theta = np.linspace(0.0, 2 * np.pi, samples, endpoint=False)
    loop = q + radius * (np.cos(theta)[:, None] * B[:, 0] + np.sin(theta)[:, None] * B[:, 1])
    fc, _, _, grad = calc.first(loop)
    loop = loop - (fc / np.sum(grad ** 2, axis=-1))[:, None] * grad
    _, x1f, x2f, grad = calc.first(loop)
    if np.any(np.hypot(x1f, x2f) < EPS_C):
        return None
    H = structure.horizontal_matrix(loop)
    nu0 = np.einsum("kij,kj->ki", H, np.stack([x1f, x2f], axis=-1))
    n = calc.first(q)[3]
    frame = np.column_stack([B[:, 0], B[:, 1], n])
    coords = np.linalg.solve(frame, nu0.T).T[:, :2]
    ang = np.arctan2(coords[:, 1], coords[:, 0])
    d = np.diff(np.concatenate([ang, ang[:1]]))
    d = (d + np.pi) % (2 * np.pi) - np.pi
    return int(round(d.sum() / (2 * np.pi)))


def classify_characteristic_point(structure: SRStructure, surface: LevelSurface, q,
                                  radius: float = 1e-2, basis=None,
                                  samples: int = 64) -> CharPointReport:
    calc = calculus(structure, surface)
    q = np.asarray(q, float)
    fc, x1f, x2f, _ = calc.first(q)
    if max(abs(fc), abs(x1f), abs(x2f)) > 1e-8:
        raise GeometryError(f"{q.tolist()} is not a characteristic point of the surface")
    A, B = characteristic_matrix(structure, surface, q, basis)
    detA = float(np.linalg.det(A))
    norm = float(np.linalg.norm(A))
    isolated = abs(detA) > EPS_A * norm and norm > 0
    index = None
    if isolated:
        index = _winding(structure, calc, q, B, radius, samples)
        if index is None:
            index = _winding(structure, calc, q, B, radius / 2, samples)
        if index is None:
            raise CharacteristicPointError("winding loop hits another characteristic point")
        if index != int(np.sign(detA)):
            log.warning("winding index %d disagrees with sign det A at %s", index, q)
    return CharPointReport(q, A, detA, float(np.trace(A)),
                           "isolated" if isolated else "singular-curve-candidate", index)


def trace_singular_curve(structure: SRStructure, surface: LevelSurface, q, steps: int = 50,
                         step: float = 1e-2) -> np.ndarray:
    """Predictor-corrector continuation of ``F = c, X1F = X2F = 0`` from ``q``.

    Diagnostic only: the curve direction is the null vector of the rank-two Jacobian.
    """
    calc = calculus(structure, surface)
    path = [np.asarray(q, float)]
    prev = None
    for _ in range(steps):
        J = calc.jacobian(path[-1])
        tangent = np.linalg.svd(J)[2][-1]
        if prev is not None and tangent @ prev < 0:
            tangent = -tangent
        nxt = _newton(calc, path[-1] + step * tangent)
        if nxt is None:
            break
        path.append(nxt)
        prev = tangent
    return np.array(path)


def area_first_variation(structure: SRStructure, mesh, V, eps: float = 1e-4) -> float:
    """Centred difference ``(A(eps) - A(-eps)) / (2 eps)`` of the horizontal area of
    the patch deformed to ``points + eps V``.  ``V`` has the shape of the vertex grid
    and should vanish on the boundary.
    """
    P = _points_of(mesh)
    V = np.asarray(V, float)
    return (horizontal_area(structure, P + eps * V) - horizontal_area(structure, P - eps * V)) / (2 * eps)


def boundary_bump(shape, rng, modes: int = 2) -> np.ndarray:
    """Random vector field on an ``(ns, nt)`` vertex grid that vanishes on the border."""
    ns, nt = shape
    u = np.linspace(0.0, 1.0, ns)[:, None]
    v = np.linspace(0.0, 1.0, nt)[None, :]
    a, b = rng.integers(1, modes + 1, 2)
    w = rng.normal(size=3)
    return (np.sin(np.pi * a * u) * np.sin(np.pi * b * v))[..., None] * w
