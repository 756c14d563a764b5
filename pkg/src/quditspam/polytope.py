"""Small linear programs over polytopes ``{t : A @ t + b >= 0}``.

Low-dimensional problems (at most three variables) are solved exactly by
enumerating vertices; larger ones go through ``scipy.optimize.linprog``.
Callers are responsible for passing bounded polytopes.
"""

from __future__ import annotations

from itertools import combinations

import numpy as np
from scipy.optimize import linprog

from .exceptions import InfeasibleEstimate

VERTEX_MAX_DIM = 3


def reduce_constraints(A, b, tol: float = 0.0):
    """Merge duplicate rows keeping the tightest offset; drop zero rows.

    Raises InfeasibleEstimate when a zero row carries a negative offset
    beyond ``tol``.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    zero = ~np.any(A != 0, axis=1)
    if np.any(b[zero] < -tol):
        raise InfeasibleEstimate("constant constraint violated")
    A, b = A[~zero], b[~zero]
    if len(A) == 0:
        return A.reshape(0, A.shape[1] if A.ndim == 2 else 0), b
    uniq, inv = np.unique(A, axis=0, return_inverse=True)
    inv = np.asarray(inv).reshape(-1)
    tight = np.full(len(uniq), np.inf)
    np.minimum.at(tight, inv, b)
    return uniq, tight


def enumerate_vertices(A, b, tol: float = 1e-12) -> np.ndarray:
    """All vertices of ``{t : A t + b >= -tol}`` for dim(t) <= 3."""
    A, b = reduce_constraints(A, b, tol)
    m = A.shape[1]
    if m > VERTEX_MAX_DIM:
        raise ValueError(f"vertex enumeration limited to {VERTEX_MAX_DIM} variables")
    if len(A) < m:
        raise ValueError("polytope is unbounded")
    combos = np.array(list(combinations(range(len(A)), m)))
    sub_A = A[combos]  # (c, m, m)
    sub_b = b[combos]
    det = np.linalg.det(sub_A)
    ok = np.abs(det) > 1e-9
    sub_A, sub_b = sub_A[ok], sub_b[ok]
    if len(sub_A) == 0:
        raise ValueError("polytope has no vertices")
    pts = np.linalg.solve(sub_A, -sub_b[..., None])[..., 0]
    slack = pts @ A.T + b
    scale = max(1.0, float(np.abs(b).max()))
    feas = np.all(slack >= -tol * scale - 1e-12, axis=1)
    if not np.any(feas):
        raise InfeasibleEstimate("no feasible point")
    verts = pts[feas]
    # collapse numerically identical vertices
    key = np.round(verts, 13)
    _, first = np.unique(key, axis=0, return_index=True)
    return verts[np.sort(first)]


def linear_range(A, b, objectives, offsets=None, tol: float = 1e-12):
    """Minimum and maximum of each ``objectives[i] @ t + offsets[i]`` over the polytope.

    ``objectives`` has shape (k, m).  Returns two arrays of length k.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    C = np.atleast_2d(np.asarray(objectives, dtype=float))
    c0 = np.zeros(len(C)) if offsets is None else np.asarray(offsets, dtype=float)
    m = A.shape[1]
    if m <= VERTEX_MAX_DIM:
        V = enumerate_vertices(A, b, tol)
        vals = V @ C.T + c0
        return vals.min(axis=0), vals.max(axis=0)
    A_red, b_red = reduce_constraints(A, b, tol)
    lo = np.empty(len(C))
    hi = np.empty(len(C))
    bounds = [(None, None)] * m
    # A t + b >= 0  <=>  -A t <= b
    for i, c in enumerate(C):
        for sign, out in ((1.0, lo), (-1.0, hi)):
            res = linprog(sign * c, A_ub=-A_red, b_ub=b_red + tol, bounds=bounds,
                          method="highs")
            if res.status == 2:
                raise InfeasibleEstimate("no feasible point")
            if res.status != 0:
                raise RuntimeError(f"linprog failed: {res.message}")
            out[i] = sign * res.fun + c0[i]
    return lo, hi

