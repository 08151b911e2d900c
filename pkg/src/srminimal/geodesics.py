"""Normal geodesics of a three-dimensional structure and when characteristics are geodesics.

Geodesics are integrated in the reduced Hamiltonian form

    q' = cos(psi) X_1 + sin(psi) X_2,   psi' = -u3 - b,   u3' = a,

with ``a = c_31^1 (u1^2 - u2^2) + (c_32^1 + c_31^2) u1 u2`` and ``b = u1 c_12^1 + u2 c_12^2``.
A characteristic with angle phi is a geodesic iff ``a = 0`` and ``b + phi' = 0``
along it (identifying psi with phi and taking u3 = 0).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .characteristics import Trajectory, rk4_nodes, _step_nodes
from .errors import GeometryError, NonHorizontalError
from .expr import DomainError
from .structure import SRStructure, jacobi_residuals, lie_group_constants

TWO_PI = 2.0 * math.pi
# a coefficient group counts as vanishing below this
DEGENERATE_TOL = 1e-10


@dataclass
class GeodesicState:
    q: np.ndarray
    psi: float
    u3: float = 0.0

    def __post_init__(self):
        self.q = np.asarray(self.q, float)
        self.psi = float(self.psi)
        self.u3 = float(self.u3)

    @property
    def u(self):
        return math.cos(self.psi), math.sin(self.psi)


def _ab(c, u1, u2):
    """``(a, b)`` from structural constants ``c[..., i, j, k]`` (zero-based)."""
    a = c[..., 2, 0, 0] * (u1 ** 2 - u2 ** 2) + (c[..., 2, 1, 0] + c[..., 2, 0, 1]) * u1 * u2
    b = u1 * c[..., 0, 1, 0] + u2 * c[..., 0, 1, 1]
    return a, b


def geodesic_coefficients(structure: SRStructure, q, psi):
    c = structure.structural_constants(np.asarray(q, float))
    return _ab(c, np.cos(psi), np.sin(psi))


def geodesic_rhs(structure: SRStructure, state: GeodesicState):
    """``(q', psi', u3')`` at one state."""
    u1, u2 = state.u
    a, b = geodesic_coefficients(structure, state.q, state.psi)
    H = structure.horizontal_matrix(state.q)
    return H @ np.array([u1, u2]), -state.u3 - float(b), float(a)


def _batched_rhs(structure: SRStructure):
    def f(Y):
        Q, psi, u3 = Y[:, :3], Y[:, 3], Y[:, 4]
        u1, u2 = np.cos(psi), np.sin(psi)
        H = structure.horizontal_matrix(Q)
        a, b = _ab(structure.structural_constants(Q), u1, u2)
        out = np.empty_like(Y)
        out[:, :3] = H[..., 0] * u1[:, None] + H[..., 1] * u2[:, None]
        out[:, 3] = -u3 - b
        out[:, 4] = a
        return out

    return f


@dataclass
class GeodesicTrajectory(Trajectory):
    u3: np.ndarray | None = None

    def velocities(self, structure: SRStructure) -> np.ndarray:
        H = structure.horizontal_matrix(self.points)
        return H[..., 0] * np.cos(self.phi)[:, None] + H[..., 1] * np.sin(self.phi)[:, None]


def integrate_geodesic(structure: SRStructure, state0: GeodesicState, t_span, h: float = 1e-3,
                       box=None) -> GeodesicTrajectory:
    """RK4 polyline of the reduced Hamiltonian system; ``phi`` holds psi."""
    if structure.n != 3:
        raise ValueError("geodesic integration needs a three-dimensional chart")
    nodes = _step_nodes(t_span, h)
    y0 = np.concatenate([state0.q, [state0.psi, state0.u3]])[None, :]
    try:
        Y, trunc = rk4_nodes(_batched_rhs(structure), y0, nodes, h, box)
    except (DomainError, FloatingPointError) as exc:
        raise GeometryError(f"geodesic left the chart domain: {exc}") from None
    Y = Y[:, 0]
    return GeodesicTrajectory(nodes, Y[:, :3], Y[:, 3], bool(trunc[0]), u3=Y[:, 4])


def integrate_geodesics(structure: SRStructure, states, t_span, h: float = 1e-3,
                        box=None) -> list:
    """Batched :func:`integrate_geodesic` over many initial states."""
    if structure.n != 3:
        raise ValueError("geodesic integration needs a three-dimensional chart")
    nodes = _step_nodes(t_span, h)
    y0 = np.array([np.concatenate([s.q, [s.psi, s.u3]]) for s in states])
    try:
        Y, trunc = rk4_nodes(_batched_rhs(structure), y0, nodes, h, box)
    except (DomainError, FloatingPointError) as exc:
        raise GeometryError(f"geodesic left the chart domain: {exc}") from None
    return [GeodesicTrajectory(nodes, Y[:, i, :3], Y[:, i, 3], bool(trunc[i]), u3=Y[:, i, 4])
            for i in range(len(states))]


def sr_length(structure: SRStructure, times, points, velocities=None, tol: float = 1e-6) -> float:
    """Sub-Riemannian length by the trapezoidal rule.

    Velocities (chart components) default to finite differences of ``points``;
    each is decomposed in the canonical frame and must have no Reeb component.
    """
    t = np.asarray(times, float)
    P = np.asarray(points, float)
    if len(t) < 2:
        return 0.0
    V = np.gradient(P, t, axis=0, edge_order=2) if velocities is None else np.asarray(velocities, float)
    coeffs = np.linalg.solve(structure.frame_matrix(P), V[..., None])[..., 0]
    vertical = np.abs(coeffs[:, -1])
    if np.max(vertical) > tol:
        k = int(np.argmax(vertical))
        raise NonHorizontalError(f"velocity at t={float(t[k])!r} has Reeb component {vertical[k]:.3g}")
    speed = np.linalg.norm(coeffs[:, :-1], axis=-1)
    return float(np.trapezoid(speed, t) if hasattr(np, "trapezoid") else np.trapz(speed, t))


# ---------------------------------------------------------------------------
# which characteristics are geodesics

def angle_condition_residual(structure: SRStructure, q, phi: float) -> float:
    """``c_31^1 cos(2 phi) + (c_32^1 + c_31^2)/2 sin(2 phi)``."""
    c = structure.structural_constants(np.asarray(q, float))
    return float(c[2, 0, 0] * math.cos(2 * phi) + 0.5 * (c[2, 1, 0] + c[2, 0, 1]) * math.sin(2 * phi))


ALL_ANGLES = "all"


def _angles(values) -> list:
    out = []
    for v in sorted(float(v) % TWO_PI for v in values):
        v = 0.0 if TWO_PI - v < 1e-12 else v
        if not out or v - out[-1] > 1e-12:
            out.append(v)
    return sorted(out)


def phi_star_from_constants(c) -> list | str:
    s = c[2, 1, 0] + c[2, 0, 1]  # c_32^1 + c_31^2
    c131 = c[0, 2, 0]
    if abs(s) > DEGENERATE_TOL:
        base = -0.5 * math.atan(2.0 * c131 / (c[1, 2, 0] + c[0, 2, 1]))
        return _angles(base + k * math.pi / 2 for k in range(4))
    if abs(c131) > DEGENERATE_TOL:
        return _angles((2 * k + 1) * math.pi / 4 for k in range(4))
    return ALL_ANGLES


def phi_star(structure: SRStructure, q) -> list | str:
    """Zero set in ``[0, 2 pi)`` of the angle condition at ``q``, or ``"all"``."""
    return phi_star_from_constants(structure.structural_constants(np.asarray(q, float)))


def compatibility_residual(c) -> float:
    """``c_13^1 ((c_12^1)^2 - (c_12^2)^2) + c_12^1 c_12^2 (c_23^1 + c_13^2)``."""
    c121, c122 = c[0, 1, 0], c[0, 1, 1]
    return float(c[0, 2, 0] * (c121 ** 2 - c122 ** 2) + c121 * c122 * (c[1, 2, 0] + c[0, 2, 1]))


def classify_group_case(structure: SRStructure, samples: int = 10, box=None, seed: int = 0) -> dict:
    """Which characteristic directions of a Lie-group structure are geodesic.

    Cases: ``a`` (c_12^2 != 0), ``b`` (only c_12^1 != 0), ``c`` (both vanish, angles
    from the angle condition), ``d`` (both conditions degenerate: every direction).
    In case d ``phi_star`` is empty and ``all_angles`` is true.
    """
    c = lie_group_constants(structure, samples=samples, box=box, seed=seed)
    c121, c122 = c[0, 1, 0], c[0, 1, 1]
    if abs(c122) > DEGENERATE_TOL:
        case = "a"
        base = -math.atan(c121 / c122)
        angles = _angles(base + k * math.pi for k in range(2))
    elif abs(c121) > DEGENERATE_TOL:
        case = "b"
        angles = _angles([math.pi / 2, 3 * math.pi / 2])
    else:
        star = phi_star_from_constants(c)
        case, angles = ("d", []) if star == ALL_ANGLES else ("c", star)
    return {
        "case": case,
        "phi_star": angles,
        "all_angles": case == "d",
        "jacobi_residuals": list(jacobi_residuals(structure, samples=samples, box=box, seed=seed)),
        "sconst_residual": compatibility_residual(c),
    }


def is_characteristic_geodesic(structure: SRStructure, trajectory: Trajectory,
                               tol: float = 1e-8):
    """Whether a characteristic polyline is a geodesic, with ``(max |a|, max |b + phi'|)``."""
    t = np.asarray(trajectory.times, float)
    phi = np.unwrap(np.asarray(trajectory.phi, float))
    c = structure.structural_constants(trajectory.points)
    a, b = _ab(c, np.cos(phi), np.sin(phi))
    dphi = np.gradient(phi, t, edge_order=2) if len(t) > 2 else np.zeros_like(phi)
    ra, rb = float(np.max(np.abs(a))), float(np.max(np.abs(b + dphi)))
    return (ra <= tol and rb <= tol), (ra, rb)
