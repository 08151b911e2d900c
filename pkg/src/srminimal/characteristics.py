"""Characteristic curves of the minimal-surface equation in ``M x S^1``.

A minimal surface is swept by curves ``q' = e^phi(q)``, ``phi' = -cos(phi) c_12^1 - sin(phi) c_12^2``
with ``e^phi = cos(phi) X_1 + sin(phi) X_2``.  Sweeping a curve of initial
conditions ``(gamma(s), phi0(s))`` gives a surface mesh.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import GeometryError, SingularFrameError
from .expr import DomainError, compile_exprs, parse_expression
from .mesh import SurfaceMesh, cell_geometry
from .structure import SRStructure

log = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
# |c_12^1|, |c_12^2| below this on all samples means the ruled condition holds
RULED_TOL = 1e-10


def wrap_angle(phi):
    return np.mod(phi, TWO_PI)


@dataclass
class ExtendedState:
    q: np.ndarray
    phi: float

    def __post_init__(self):
        self.q = np.asarray(self.q, float)
        self.phi = float(wrap_angle(self.phi))

    def direction(self, structure: SRStructure) -> np.ndarray:
        """Chart components of ``e^phi`` at ``q``."""
        H = structure.horizontal_matrix(self.q)
        return H @ np.array([math.cos(self.phi), math.sin(self.phi)])


@dataclass
class Trajectory:
    times: np.ndarray
    points: np.ndarray  # (len(times), 3)
    phi: np.ndarray
    truncated: bool = False

    def states(self):
        return [ExtendedState(q, p) for q, p in zip(self.points, self.phi)]


def characteristic_rhs(structure: SRStructure, state: ExtendedState):
    """``(q', phi')`` at a single extended state."""
    q = state.q
    c1, c2 = structure.horizontal_constants(q)
    cp, sp = math.cos(state.phi), math.sin(state.phi)
    return state.direction(structure), -cp * c1 - sp * c2


def ruled_condition(structure: SRStructure, box=None, samples: int = 100, seed: int = 0) -> bool:
    """True when ``c_12^1 = c_12^2 = 0`` on every sampled point."""
    P = structure.sample_points(samples, box=box, seed=seed)
    try:
        c = structure.horizontal_constants(P)
    except (DomainError, SingularFrameError):
        return False
    return bool(np.all(np.isfinite(c)) and np.max(np.abs(c)) <= RULED_TOL)


def _ruled(structure: SRStructure) -> bool:
    cached = getattr(structure, "_ruled_cache", None)
    if cached is None:
        cached = ruled_condition(structure)
        structure._ruled_cache = cached
    return cached


def _batched_rhs(structure: SRStructure, ruled: bool) -> Callable:
    def f(Y):
        Q, phi = Y[:, :3], Y[:, 3]
        cp, sp = np.cos(phi), np.sin(phi)
        H = structure.horizontal_matrix(Q)
        out = np.empty_like(Y)
        out[:, :3] = H[..., 0] * cp[:, None] + H[..., 1] * sp[:, None]
        if ruled:
            out[:, 3] = 0.0
        else:
            c = structure.horizontal_constants(Q)
            out[:, 3] = -cp * c[:, 0] - sp * c[:, 1]
        return out

    return f


def rk4_nodes(f: Callable, y0: np.ndarray, nodes: np.ndarray, h: float, box=None,
              box_dims: int = 3):
    """Fixed-step RK4 of ``y' = f(y)`` for a batch ``y0`` of shape (B, d) given at time 0.

    Returns the states at every node (ascending times, 0 among them or at an end)
    and a per-row truncation flag.  Each node interval is split into equal steps no
    larger than ``h`` so node times are hit exactly.  Rows that leave ``box`` are
    frozen and reported as NaN from then on.
    """
    if h <= 0:
        raise ValueError("step must be positive")
    nodes = np.asarray(nodes, float)
    y0 = np.atleast_2d(np.asarray(y0, float))
    B = y0.shape[0]
    out = np.full((len(nodes), B, y0.shape[1]), np.nan)
    trunc = np.zeros(B, bool)
    zero = int(np.argmin(np.abs(nodes)))
    if nodes[zero] != 0.0:
        raise ValueError("integration nodes must contain t = 0")
    out[zero] = y0
    lo = hi = None
    if box is not None:
        box = np.asarray(box, float)
        lo, hi = box[:, 0], box[:, 1]

    for direction in (1, -1):
        y = y0.copy()
        dead = np.zeros(B, bool)
        idx = range(zero + 1, len(nodes)) if direction > 0 else range(zero - 1, -1, -1)
        t_prev = 0.0
        for k in idx:
            dt = nodes[k] - t_prev
            steps = max(1, math.ceil(abs(dt) / h - 1e-9))
            hs = dt / steps
            for _ in range(steps):
                k1 = f(y)
                k2 = f(y + 0.5 * hs * k1)
                k3 = f(y + 0.5 * hs * k2)
                k4 = f(y + hs * k3)
                y_new = y + (hs / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
                if lo is not None:
                    q = y_new[:, :box_dims]
                    left = np.any((q < lo) | (q > hi), axis=1) & ~dead
                    dead |= left
                y = np.where(dead[:, None], y, y_new)
            out[k] = np.where(dead[:, None], np.nan, y)
            t_prev = nodes[k]
        trunc |= dead
    return out, trunc


def _step_nodes(t_span, h):
    a, b = float(t_span[0]), float(t_span[1])
    if a > b:
        a, b = b, a
    if a > 0 or b < 0:
        raise ValueError("time span must contain t = 0 (the initial state)")
    neg = np.linspace(a, 0.0, max(1, math.ceil(-a / h - 1e-9)) + 1) if a < 0 else np.zeros(1)
    pos = np.linspace(0.0, b, max(1, math.ceil(b / h - 1e-9)) + 1) if b > 0 else np.zeros(1)
    return np.concatenate([neg[:-1], pos])


def integrate_characteristic(structure: SRStructure, state0: ExtendedState, t_span,
                             h: float = 1e-3, box=None, nodes=None,
                             ruled: bool | None = None) -> Trajectory:
    """RK4 polyline through ``state0`` (at t = 0) over ``t_span``, forward and backward.

    ``t_span`` may be one-sided, e.g. ``(0, 3)`` or ``(-2, 0)``.  Output is at every
    step unless explicit ``nodes`` are given.
    """
    if ruled is None:
        ruled = _ruled(structure)
    nodes = _step_nodes(t_span, h) if nodes is None else np.asarray(nodes, float)
    y0 = np.concatenate([state0.q, [state0.phi]])[None, :]
    try:
        Y, trunc = rk4_nodes(_batched_rhs(structure, ruled), y0, nodes, h, box)
    except (DomainError, FloatingPointError) as exc:
        raise GeometryError(f"characteristic left the chart domain: {exc}") from None
    return Trajectory(nodes, Y[:, 0, :3], Y[:, 0, 3], bool(trunc[0]))


def integrate_characteristics(structure: SRStructure, states: Sequence[ExtendedState], t_span,
                              h: float = 1e-3, box=None, ruled: bool | None = None) -> list:
    """Batched :func:`integrate_characteristic` sharing one set of time nodes."""
    if ruled is None:
        ruled = _ruled(structure)
    nodes = _step_nodes(t_span, h)
    y0 = np.array([np.concatenate([st.q, [st.phi]]) for st in states])
    try:
        Y, trunc = rk4_nodes(_batched_rhs(structure, ruled), y0, nodes, h, box)
    except (DomainError, FloatingPointError) as exc:
        raise GeometryError(f"characteristic left the chart domain: {exc}") from None
    return [Trajectory(nodes, Y[:, b, :3], Y[:, b, 3], bool(trunc[b])) for b in range(len(states))]


def closed_form_h1(q0, phi: float, t):
    """Heisenberg characteristics: straight lines with ``z`` linear in ``t``.

    ``z = (x0 sin(phi) - y0 cos(phi)) t / 2 + z0`` is exact for the realisation with
    ``z' = (x sin(phi) - y cos(phi))/2``, i.e. ``heisenberg(vertical=-1)``.  For the
    default preset use :func:`closed_form_h1_standard`.
    """
    x0, y0, z0 = (float(v) for v in q0)
    t = np.asarray(t, float)
    c, s = math.cos(phi), math.sin(phi)
    pts = np.stack([t * c + x0, t * s + y0, 0.5 * (x0 * s - y0 * c) * t + z0 + 0 * t], axis=-1)
    return pts


def closed_form_h1_standard(q0, phi: float, t):
    """Characteristics of ``heisenberg()``: the mirror ``z -> -z`` of :func:`closed_form_h1`."""
    x0, y0, z0 = (float(v) for v in q0)
    pts = closed_form_h1((x0, y0, -z0), phi, t)
    pts[..., 2] *= -1.0
    return pts


def closed_form_e2(q0, phi: float, t):
    """Roto-translation characteristics.

    With ``z = z0 + t sin(phi)``:
    ``x = x0 + cot(phi) (sin z - sin z0)``, ``y = y0 - cot(phi) (cos z - cos z0)``.
    Written via ``sinc`` the same expression is stable near ``sin(phi) = 0`` and
    reduces there to the straight line ``x0 + t cos(phi) cos z0``, ``y0 + t cos(phi) sin z0``.
    """
    x0, y0, z0 = (float(v) for v in q0)
    t = np.asarray(t, float)
    c, s = math.cos(phi), math.sin(phi)
    z = z0 + t * s
    mid = 0.5 * (z + z0)
    k = c * t * np.sinc(t * s / (2.0 * math.pi))  # np.sinc(x) = sin(pi x)/(pi x)
    return np.stack([x0 + k * np.cos(mid), y0 + k * np.sin(mid), z], axis=-1)


# ---------------------------------------------------------------------------
# sweeping a curve of initial conditions

def sweep_nodes(t_range, n_t: int) -> np.ndarray:
    """``n_t`` equispaced times over ``t_range`` with ``t = 0`` inserted if missing."""
    a, b = float(t_range[0]), float(t_range[1])
    if not a <= 0.0 <= b:
        raise ValueError("t range must contain 0 (the curve of initial conditions)")
    t = np.linspace(a, b, n_t) if n_t > 1 else np.zeros(1)
    if not np.any(t == 0.0):
        t = np.sort(np.concatenate([t, [0.0]]))
    return t


def _fold_flags(points: np.ndarray) -> np.ndarray:
    """Cells whose normal points against those of their s-neighbours."""
    ns, nt = points.shape[:2]
    if ns < 2 or nt < 2:
        return np.zeros((max(ns - 1, 0), max(nt - 1, 0)), bool)
    _, ts, tt = cell_geometry(points)
    n = np.cross(ts, tt)
    n_len = np.linalg.norm(n, axis=-1)
    degenerate = n_len < 1e-14 * (1.0 + np.linalg.norm(ts, axis=-1) * np.linalg.norm(tt, axis=-1))
    unit = np.where(n_len[..., None] > 0, n / np.where(n_len > 0, n_len, 1.0)[..., None], 0.0)
    flip_prev = np.zeros(n.shape[:2], bool)
    flip_next = np.zeros(n.shape[:2], bool)
    has_prev = np.zeros(n.shape[:2], bool)
    has_next = np.zeros(n.shape[:2], bool)
    if ns > 2:
        d = np.sum(unit[1:] * unit[:-1], axis=-1) < 0
        flip_prev[1:], has_prev[1:] = d, True
        flip_next[:-1], has_next[:-1] = d, True
    fold = (flip_prev | ~has_prev) & (flip_next | ~has_next) & (has_prev | has_next)
    return fold | degenerate


def sweep_surface(structure: SRStructure, gamma: Sequence, phi0, s_range, n_s: int, t_range,
                  n_t: int, h: float = 1e-3, surface=None, box=None) -> SurfaceMesh:
    """Integrate the characteristic through each ``(gamma(s_i), phi0(s_i))`` and assemble a mesh.

    ``gamma`` and ``phi0`` are expression strings (or parsed expressions) in ``s``.
    Strips that leave ``box`` or the chart domain are flagged in ``truncated``
    and padded with NaN.
    """
    if structure.n != 3:
        raise ValueError("sweeps need a three-dimensional chart")
    exprs = [parse_expression(g, ["s"]) if isinstance(g, str) else g for g in gamma]
    if len(exprs) != 3:
        raise ValueError("gamma needs three components")
    phi_e = parse_expression(phi0, ["s"]) if isinstance(phi0, str) else phi0
    init = compile_exprs(exprs + [phi_e], 1)
    s = np.linspace(float(s_range[0]), float(s_range[1]), n_s) if n_s > 1 else np.array([float(s_range[0])])
    y0 = init.batch(s[:, None])
    t = sweep_nodes(t_range, n_t)
    ruled = _ruled(structure)
    f = _batched_rhs(structure, ruled)
    try:
        Y, trunc = rk4_nodes(f, y0, t, h, box)
    except (DomainError, FloatingPointError):
        Y, trunc = _strip_by_strip(f, y0, t, h, box)
    Y = np.swapaxes(Y, 0, 1)  # (n_s, n_t, 4)
    pts = Y[..., :3]
    phi = np.where(np.isnan(Y[..., 3]), np.nan, wrap_angle(Y[..., 3]))
    d1 = None
    if surface is not None:
        from .surface import calculus
        calc = calculus(structure, surface)
        d1 = np.full(pts.shape[:2], np.nan)
        ok = ~np.any(np.isnan(pts), axis=-1)
        _, x1f, x2f, _ = calc.first(pts[ok])
        d1[ok] = np.hypot(x1f, x2f)
    fold = _fold_flags(np.nan_to_num(pts))
    meta = {"ruled": ruled, "h": h, "n_folds": int(fold.sum()), "n_truncated": int(trunc.sum())}
    if trunc.any():
        log.warning("%d of %d strips truncated", int(trunc.sum()), n_s)
    return SurfaceMesh(s, t, pts, phi=phi, d1=d1, fold=fold, truncated=trunc,
                       t0_index=int(np.flatnonzero(t == 0.0)[0]), meta=meta)


def _strip_by_strip(f, y0, t, h, box):
    outs, flags = [], []
    for row in y0:
        try:
            Y, tr = rk4_nodes(f, row[None, :], t, h, box)
        except (DomainError, FloatingPointError) as exc:
            log.warning("strip from %s failed: %s", row[:3], exc)
            Y, tr = np.full((len(t), 1, len(row)), np.nan), np.array([True])
        outs.append(Y)
        flags.append(tr)
    return np.concatenate(outs, axis=1), np.concatenate(flags)
