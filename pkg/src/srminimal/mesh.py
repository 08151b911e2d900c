"""(s, t)-indexed quad meshes and their OBJ / CSV export."""
from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Callable

import numpy as np


@dataclass
class SurfaceMesh:
    """Grid of chart points ``points[i, j]`` at parameters ``(s[i], t[j])``.

    For swept surfaces ``t`` is the characteristic time and ``phi`` the angle
    carried along each characteristic; for other patches ``phi`` is zero.
    """

    s: np.ndarray
    t: np.ndarray
    points: np.ndarray
    phi: np.ndarray | None = None
    d1: np.ndarray | None = None
    fold: np.ndarray | None = None
    truncated: np.ndarray | None = None
    t0_index: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.s = np.asarray(self.s, float)
        self.t = np.asarray(self.t, float)
        self.points = np.asarray(self.points, float)
        if self.points.shape[:2] != (len(self.s), len(self.t)):
            raise ValueError("points grid does not match the (s, t) parameters")
        if self.phi is None:
            self.phi = np.zeros(self.points.shape[:2])

    @property
    def shape(self):
        return self.points.shape[:2]

    def cells(self):
        """Cell midpoints and edge-averaged tangents ``(mid, t_s, t_t)``."""
        return cell_geometry(self.points)

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write("s,t,x,y,z,phi\n")
        pts = self.points
        for i, s in enumerate(self.s):
            for j, t in enumerate(self.t):
                row = (s, t, *pts[i, j], self.phi[i, j])
                out.write(",".join(fmt(v) for v in row) + "\n")
        return out.getvalue()

    def to_obj(self) -> str:
        ns, nt = self.shape
        out = io.StringIO()
        out.write(f"# srminimal mesh {ns}x{nt}\n")
        for i in range(ns):
            for j in range(nt):
                out.write("v " + " ".join(fmt(v) for v in self.points[i, j]) + "\n")
        for i in range(ns - 1):
            for j in range(nt - 1):
                a = i * nt + j + 1
                b = (i + 1) * nt + j + 1
                # counter-clockwise in (s, t)
                out.write(f"f {a} {b} {b + 1} {a + 1}\n")
        return out.getvalue()


def fmt(v: float) -> str:
    """Shortest round-trip representation, used for every float we write."""
    return repr(float(v))


def cell_geometry(points: np.ndarray):
    P = np.asarray(points, float)
    p00, p10 = P[:-1, :-1], P[1:, :-1]
    p01, p11 = P[:-1, 1:], P[1:, 1:]
    mid = 0.25 * (p00 + p10 + p01 + p11)
    ts = 0.5 * ((p10 - p00) + (p11 - p01))
    tt = 0.5 * ((p01 - p00) + (p11 - p10))
    return mid, ts, tt


def parametric_mesh(fn: Callable, u_range, v_range, n_u: int, n_v: int) -> SurfaceMesh:
    """Mesh of ``fn(u, v) -> (..., 3)`` sampled on a regular grid."""
    u = np.linspace(*u_range, n_u)
    v = np.linspace(*v_range, n_v)
    U, V = np.meshgrid(u, v, indexing="ij")
    return SurfaceMesh(u, v, np.asarray(fn(U, V), float))
