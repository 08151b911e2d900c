"""Canonical objects of a co-rank one sub-Riemannian structure.

A structure is given by an orthonormal horizontal frame ``X_1..X_{n-1}`` on an
``n``-dimensional chart.  From it we build, symbolically:

* the annihilating covector (cofactor form) and its normaliser,
* the canonical 1-form ``omega`` with ``sum_{i<j} d omega(X_i, X_j)^2 = 1``,
* the Reeb field (``omega(R) = 1``, ``d omega(X_i, R) = 0``),

and, numerically, structural constants ``[X_i, X_j] = -sum_k c_ij^k X_k`` of the
canonical frame ``(X_1, .., X_{n-1}, R)``.

Indices are zero-based in code: ``c[0, 1, 2]`` is the constant usually written c_12^3.
"""
from __future__ import annotations

from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import (
    DegenerateFrameError,
    NotBracketGeneratingError,
    NotLieGroupError,
    SingularFrameError,
)
from .expr import (
    ONE,
    ZERO,
    Expr,
    add,
    compile_exprs,
    div,
    func,
    mul,
    neg,
    parse_expression,
    sub,
    _d,
    _is,
)

VectorFieldExpr = tuple  # one Expr per chart coordinate

# below this the cofactor form / normaliser counts as vanishing
DEGENERACY_TOL = 1e-12


def apply_field(X: Sequence[Expr], f: Expr) -> Expr:
    """Directional derivative ``X f = sum_k X^k d_k f``."""
    out = ZERO
    for k, comp in enumerate(X):
        if _is(comp, 0.0):
            continue
        out = add(out, mul(comp, _d(f, k)))
    return out


def lie_bracket(X: Sequence[Expr], Y: Sequence[Expr]) -> VectorFieldExpr:
    if len(X) != len(Y):
        raise ValueError("vector fields live on charts of different dimension")
    return tuple(sub(apply_field(X, Y[k]), apply_field(Y, X[k])) for k in range(len(X)))


def symbolic_det(M: Sequence[Sequence[Expr]]) -> Expr:
    """Laplace expansion along the sparsest row or column, skipping constant zeros."""
    n = len(M)
    memo: dict = {}

    def det(rows: tuple, cols: tuple) -> Expr:
        key = (rows, cols)
        if key in memo:
            return memo[key]
        if len(rows) == 1:
            val = M[rows[0]][cols[0]]
        elif len(rows) == 2:
            (r0, r1), (c0, c1) = rows, cols
            val = sub(mul(M[r0][c0], M[r1][c1]), mul(M[r0][c1], M[r1][c0]))
        else:
            def zeros_row(r):
                return sum(_is(M[r][c], 0.0) for c in cols)

            def zeros_col(c):
                return sum(_is(M[r][c], 0.0) for r in rows)

            best_r = max(range(len(rows)), key=lambda a: zeros_row(rows[a]))
            best_c = max(range(len(cols)), key=lambda b: zeros_col(cols[b]))
            val = ZERO
            if zeros_row(rows[best_r]) >= zeros_col(cols[best_c]):
                a = best_r
                r = rows[a]
                for b, c in enumerate(cols):
                    entry = M[r][c]
                    if _is(entry, 0.0):
                        continue
                    term = mul(entry, det(rows[:a] + rows[a + 1:], cols[:b] + cols[b + 1:]))
                    val = add(val, term) if (a + b) % 2 == 0 else sub(val, term)
            else:
                b = best_c
                c = cols[b]
                for a, r in enumerate(rows):
                    entry = M[r][c]
                    if _is(entry, 0.0):
                        continue
                    term = mul(entry, det(rows[:a] + rows[a + 1:], cols[:b] + cols[b + 1:]))
                    val = add(val, term) if (a + b) % 2 == 0 else sub(val, term)
        memo[key] = val
        return val

    return det(tuple(range(n)), tuple(range(n)))


def _parse_field(field, chart) -> VectorFieldExpr:
    if len(field) != len(chart):
        raise ValueError(f"vector field has {len(field)} components, chart has {len(chart)}")
    return tuple(c if isinstance(c, Expr) else parse_expression(str(c), chart) for c in field)


class SRStructure:
    """Sub-Riemannian structure of co-rank one given by a horizontal frame.

    ``frame`` holds ``n-1`` vector fields, each a sequence of ``n`` expressions (or
    strings parsed over ``chart``).  ``orientation`` is ``"auto"`` (sign chosen so
    that the first non-zero ``d omega(X_i, X_j)`` is positive at the reference
    point) or an explicit ``+1`` / ``-1``.
    """

    def __init__(self, chart: Sequence[str], frame, orientation="auto",
                 reference_point=None, name: str | None = None):
        self.chart = tuple(chart)
        self.n = len(self.chart)
        if self.n < 2:
            raise ValueError("chart must have at least two coordinates")
        frame = [_parse_field(f, self.chart) for f in frame]
        if len(frame) != self.n - 1:
            raise ValueError(f"co-rank one frame needs {self.n - 1} fields, got {len(frame)}")
        self.frame = tuple(frame)
        if orientation not in ("auto", 1, -1):
            raise ValueError("orientation must be 'auto', 1 or -1")
        self._orientation = orientation
        ref = np.zeros(self.n) if reference_point is None else np.asarray(reference_point, float)
        if ref.shape != (self.n,):
            raise ValueError("reference point has wrong dimension")
        self.reference_point = ref
        self.name = name

    def __repr__(self):
        label = self.name or "custom"
        return f"SRStructure({label}, chart={self.chart})"

    # -- symbolic ---------------------------------------------------------

    @cached_property
    def cofactor_form(self) -> tuple:
        """Covector w with ``w(v) = det[X_1, .., X_{n-1}, v]``; annihilates the frame."""
        n = self.n
        rows = [[self.frame[j][k] for j in range(n - 1)] for k in range(n)]
        out = []
        for k in range(n):
            minor = rows[:k] + rows[k + 1:]
            d = symbolic_det(minor) if n > 1 else ONE
            # cofactor sign (-1)^((k+1)+n) with zero-based k
            out.append(d if (k + n) % 2 == 1 else neg(d))
        return tuple(out)

    @cached_property
    def horizontal_brackets(self) -> dict:
        m = self.n - 1
        return {(i, j): lie_bracket(self.frame[i], self.frame[j])
                for i in range(m) for j in range(i + 1, m)}

    @cached_property
    def normaliser_sq(self) -> Expr:
        """``sum_{i<j} w([X_i, X_j])^2`` for the cofactor form ``w``."""
        total = ZERO
        for B in self.horizontal_brackets.values():
            wB = _pair(self.cofactor_form, B)
            if _is(wB, 0.0):
                continue
            total = add(total, mul(wB, wB))
        return total

    @cached_property
    def orientation(self) -> int:
        q = self.reference_point
        w = self._cofactor_fn.point(q)
        if max(abs(v) for v in w) <= DEGENERACY_TOL:
            raise DegenerateFrameError(f"frame does not span a hyperplane at {q.tolist()}")
        vals = self._dw_pairs_fn.point(q)
        norm = sum(v * v for v in vals) ** 0.5
        if norm <= DEGENERACY_TOL:
            raise NotBracketGeneratingError(f"d omega vanishes on the distribution at {q.tolist()}")
        if self._orientation != "auto":
            return self._orientation
        for v in vals:
            if abs(v) > DEGENERACY_TOL * max(1.0, norm):
                return 1 if v > 0 else -1
        return 1

    @cached_property
    def unsigned_one_form(self) -> tuple:
        scale = func("sqrt", self.normaliser_sq)
        return tuple(div(w, scale) for w in self.cofactor_form)

    @cached_property
    def one_form(self) -> tuple:
        if self.orientation > 0:
            return self.unsigned_one_form
        return tuple(neg(c) for c in self.unsigned_one_form)

    @cached_property
    def d_one_form(self) -> tuple:
        """Antisymmetric matrix ``D[k][l] = d_k omega_l - d_l omega_k``."""
        return _exterior_d(self.one_form)

    @cached_property
    def reeb(self) -> VectorFieldExpr:
        """Reeb field by Cramer's rule on ``omega(R) = 1``, ``d omega(X_i, R) = 0``."""
        n = self.n
        D = self.d_one_form
        rows = [list(self.one_form)]
        for X in self.frame:
            rows.append([_sum(mul(X[k], D[k][l]) for k in range(n)) for l in range(n)])
        lower = rows[1:]
        cof = []
        for l in range(n):
            minor = [r[:l] + r[l + 1:] for r in lower]
            d = symbolic_det(minor) if n > 1 else ONE
            cof.append(d if l % 2 == 0 else neg(d))
        det_m = _sum(mul(rows[0][l], cof[l]) for l in range(n))
        return tuple(div(c, det_m) for c in cof)

    @cached_property
    def canonical_frame(self) -> tuple:
        return self.frame + (self.reeb,)

    @cached_property
    def brackets(self) -> dict:
        F = self.canonical_frame
        out = dict(self.horizontal_brackets)
        for i in range(self.n - 1):
            out[(i, self.n - 1)] = lie_bracket(F[i], F[-1])
        return out

    # -- compiled evaluators ---------------------------------------------

    @cached_property
    def _cofactor_fn(self):
        return compile_exprs(self.cofactor_form, self.n)

    @cached_property
    def _dw_pairs_fn(self):
        # d w(X_i, X_j) = -w([X_i, X_j]) since w(X_i) vanishes identically
        pairs = [neg(_pair(self.cofactor_form, B)) for B in self.horizontal_brackets.values()]
        return compile_exprs(pairs, self.n)

    @cached_property
    def _horizontal_fn(self):
        return compile_exprs([c for X in self.frame for c in X], self.n)

    @cached_property
    def _one_form_fn(self):
        return compile_exprs(self.one_form, self.n)

    @cached_property
    def _reeb_fn(self):
        return compile_exprs(self.reeb, self.n)

    @cached_property
    def _bracket_fn(self):
        keys = sorted(self.brackets)
        return keys, compile_exprs([c for k in keys for c in self.brackets[k]], self.n)

    @cached_property
    def _unsigned_fn(self):
        D = _exterior_d(self.unsigned_one_form)
        flat = list(self.unsigned_one_form) + [D[k][l] for k in range(self.n) for l in range(self.n)]
        return compile_exprs(flat, self.n)

    @cached_property
    def _dw_fn(self):
        D = self.d_one_form
        return compile_exprs([D[k][l] for k in range(self.n) for l in range(self.n)], self.n)

    # -- numeric ----------------------------------------------------------

    def horizontal_matrix(self, points) -> np.ndarray:
        """Frame fields as columns: shape ``(..., n, n-1)``."""
        P = np.asarray(points, float)
        vals = self._horizontal_fn.batch(P)
        return np.swapaxes(vals.reshape(P.shape[:-1] + (self.n - 1, self.n)), -1, -2)

    def frame_matrix(self, points) -> np.ndarray:
        """Canonical frame ``(X_1..X_{n-1}, R)`` as columns: shape ``(..., n, n)``."""
        P = np.asarray(points, float)
        H = self.horizontal_matrix(P)
        R = self._reeb_fn.batch(P)
        return np.concatenate([H, R[..., :, None]], axis=-1)

    def one_form_at(self, points) -> np.ndarray:
        return self._one_form_fn.batch(np.asarray(points, float))

    def d_one_form_at(self, points) -> np.ndarray:
        P = np.asarray(points, float)
        return self._dw_fn.batch(P).reshape(P.shape[:-1] + (self.n, self.n))

    def brackets_at(self, points) -> dict:
        P = np.asarray(points, float)
        keys, fn = self._bracket_fn
        vals = fn.batch(P).reshape(P.shape[:-1] + (len(keys), self.n))
        return {k: vals[..., a, :] for a, k in enumerate(keys)}

    def structural_constants(self, points) -> np.ndarray:
        """``c[..., i, j, k]`` with ``[X_i, X_j] = -sum_k c_ij^k X_k`` (zero-based)."""
        P = np.asarray(points, float)
        F = self.frame_matrix(P)
        B = self.brackets_at(P)
        keys = sorted(B)
        rhs = -np.stack([B[k] for k in keys], axis=-1)  # (..., n, npairs)
        try:
            sol = np.linalg.solve(F, rhs)
        except np.linalg.LinAlgError:
            raise SingularFrameError("canonical frame is singular at a sampled point") from None
        if not np.all(np.isfinite(sol)):
            raise SingularFrameError("canonical frame is singular at a sampled point")
        c = np.zeros(P.shape[:-1] + (self.n, self.n, self.n))
        for a, (i, j) in enumerate(keys):
            c[..., i, j, :] = sol[..., :, a]
            c[..., j, i, :] = -sol[..., :, a]
        return c

    def horizontal_constants(self, points) -> np.ndarray:
        """``(c_12^1, c_12^2)`` for n=3 without building brackets of the Reeb field."""
        if self.n != 3:
            raise ValueError("only defined for three-dimensional charts")
        P = np.asarray(points, float)
        F = self.frame_matrix(P)
        B = self.brackets_at_horizontal(P)
        sol = _solve3(F, -B)
        return sol[..., :2]

    def brackets_at_horizontal(self, points) -> np.ndarray:
        return self._x12_fn.batch(np.asarray(points, float))

    @cached_property
    def _x12_fn(self):
        return compile_exprs(self.horizontal_brackets[(0, 1)], self.n)

    def sample_points(self, count: int, box=None, seed: int = 0) -> np.ndarray:
        rng = np.random.default_rng(seed)
        lo, hi = _box(self, box)
        return rng.uniform(lo, hi, size=(count, self.n))


def _box(structure: SRStructure, box):
    if box is None:
        return structure.reference_point - 1.0, structure.reference_point + 1.0
    box = np.asarray(box, float)
    return box[:, 0], box[:, 1]


def _exterior_d(w: Sequence[Expr]) -> tuple:
    n = len(w)
    D = [[ZERO] * n for _ in range(n)]
    for k in range(n):
        for l in range(k + 1, n):
            v = sub(_d(w[l], k), _d(w[k], l))
            D[k][l] = v
            D[l][k] = neg(v)
    return tuple(tuple(r) for r in D)


def _sum(terms) -> Expr:
    out = ZERO
    for t in terms:
        out = add(out, t)
    return out


def _pair(form: Sequence[Expr], field: Sequence[Expr]) -> Expr:
    return _sum(mul(a, b) for a, b in zip(form, field))


def _solve3(F: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Batched 3x3 solve by the adjugate (cheaper than LAPACK for small batches)."""
    c0, c1, c2 = F[..., :, 0], F[..., :, 1], F[..., :, 2]
    r0 = np.cross(c1, c2)
    r1 = np.cross(c2, c0)
    r2 = np.cross(c0, c1)
    det = np.sum(c0 * r0, axis=-1)
    if np.any(np.abs(det) < 1e-300):
        raise SingularFrameError("canonical frame is singular")
    return np.stack([np.sum(r0 * b, -1), np.sum(r1 * b, -1), np.sum(r2 * b, -1)], -1) / det[..., None]


# ---------------------------------------------------------------------------
# operation-level API

def canonical_one_form(structure: SRStructure):
    """Return ``(coefficients, sigma)`` of the canonical 1-form."""
    return structure.one_form, structure.orientation


def reeb_field(structure: SRStructure) -> VectorFieldExpr:
    return structure.reeb


def structural_constants(structure: SRStructure, q) -> np.ndarray:
    return structure.structural_constants(np.asarray(q, float))


def contact_check(structure: SRStructure, q) -> float:
    """Degeneracy margin at ``q``; positive means contact.

    The margin is ``|det[X_1, .., X_{n-1}, R]|`` for the numerically built Reeb
    candidate ``R`` times the balance of the normalised ``d omega`` on the
    distribution (geometric-mean singular value over its value for a perfectly
    balanced contact form, so the factor is 1 for n=3).  It is 0 when the cofactor
    form or its differential vanishes on the distribution.
    """
    n = structure.n
    if n % 2 == 0:
        raise ValueError("contact structures need an odd-dimensional chart")
    q = np.asarray(q, float)
    w = np.asarray(structure._cofactor_fn.point(q))
    if np.max(np.abs(w)) <= DEGENERACY_TOL:
        return 0.0
    pairs = np.asarray(structure._dw_pairs_fn.point(q))
    norm = float(np.sqrt(np.sum(pairs ** 2)))
    if norm <= DEGENERACY_TOL:
        return 0.0
    m = n - 1
    omega_h = np.zeros((m, m))
    for a, (i, j) in enumerate(sorted(structure.horizontal_brackets)):
        omega_h[i, j] = pairs[a] / norm
        omega_h[j, i] = -pairs[a] / norm
    sv = np.linalg.svd(omega_h, compute_uv=False)
    if sv[-1] <= DEGENERACY_TOL:
        return 0.0
    balance = float(np.exp(np.mean(np.log(sv)))) / np.sqrt(2.0 / m)
    H = structure.horizontal_matrix(q)
    vals = np.asarray(structure._unsigned_fn.point(q))
    omega, dw = vals[:n], vals[n:].reshape(n, n)
    M = np.vstack([omega[None, :], H.T @ dw])
    try:
        R = np.linalg.solve(M, np.eye(n)[0])
    except np.linalg.LinAlgError:
        return 0.0
    det = abs(float(np.linalg.det(np.column_stack([H, R]))))
    return det * balance


def canonical_volume(structure: SRStructure, vectors, q) -> float:
    """``mu(v_1, .., v_n)`` for the canonical volume ``theta_1 ^ .. ^ theta_n``."""
    V = np.column_stack([np.asarray(v, float) for v in vectors])
    if V.shape != (structure.n, structure.n):
        raise ValueError(f"need {structure.n} vectors of dimension {structure.n}")
    F = structure.frame_matrix(np.asarray(q, float))
    return float(np.linalg.det(V) / np.linalg.det(F))


def canonical_volume_batch(structure: SRStructure, points, *vectors) -> np.ndarray:
    """Vectorised ``mu`` at many points: ``vectors`` are ``(..., n)`` arrays."""
    V = np.stack(vectors, axis=-1)
    F = structure.frame_matrix(points)
    return np.linalg.det(V) / np.linalg.det(F)


def lie_group_constants(structure: SRStructure, samples: int = 10, box=None,
                        seed: int = 0, tol: float = 1e-8) -> np.ndarray:
    """Structural constants when they do not depend on the point, else NotLieGroupError."""
    P = structure.sample_points(max(samples, 10), box=box, seed=seed)
    try:
        c = structure.structural_constants(P)
    except (SingularFrameError, ArithmeticError) as exc:
        raise NotLieGroupError(f"not a Lie-group structure: {exc}") from None
    spread = np.max(np.abs(c - c[0]))
    if spread > tol:
        raise NotLieGroupError(f"not a Lie-group structure: constants vary by {spread:.3g}")
    return c.mean(axis=0)


def jacobi_residuals(structure: SRStructure, samples: int = 10, box=None, seed: int = 0,
                     tol: float = 1e-8) -> tuple:
    """Residuals of the three Jacobi relations of a 3D Lie-group frame."""
    if structure.n != 3:
        raise ValueError("Jacobi relations are stated for three-dimensional charts")
    c = lie_group_constants(structure, samples, box, seed, tol)
    # zero-based: c[0,2,0] is c_13^1, etc.
    r1 = c[0, 2, 0] + c[1, 2, 1]
    r2 = c[0, 1, 0] * c[0, 2, 0] + c[0, 1, 1] * c[1, 2, 0]
    r3 = c[0, 1, 0] * c[0, 2, 1] + c[0, 1, 1] * c[1, 2, 1]
    return float(r1), float(r2), float(r3)
