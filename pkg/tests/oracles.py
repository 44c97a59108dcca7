"""Independent reference computations used by the tests.

None of these call the LP code: they are brute-force grids or plain
enumeration, slow but easy to trust on tiny windows.
"""

from __future__ import annotations

import itertools
from functools import lru_cache

import numpy as np

GRID_STEP = 1e-2


def _norm_of_grid(points: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """max|f| + Lip(f) for each row of ``points`` (k columns), by direct evaluation."""
    sup = np.max(np.abs(points), axis=1)
    lip = np.zeros(len(points))
    k = rho.shape[0]
    for i in range(k):
        for j in range(i + 1, k):
            lip = np.maximum(lip, np.abs(points[:, i] - points[:, j]) / rho[i, j])
    return sup + lip


@lru_cache(maxsize=16)
def _ball_grid(rho_key: tuple, k: int, step: float) -> np.ndarray:
    """Grid points of the unit ball, one representative per shape.

    The KR objective ``(mu - nu) . f`` ignores constant shifts of ``f`` because
    ``mu - nu`` sums to zero, while ``max|f|`` is smallest when ``f`` is
    centered. So it suffices to grid shapes ``g`` with ``g_0 = 0`` and shift
    each to ``g - (max g + min g) / 2``.
    """
    rho = np.array(rho_key).reshape(k, k)
    if k == 1:
        return np.zeros((1, 1))
    # |g_i - g_0| <= Lip * rho and the spread of a unit-norm f is at most 2
    span = min(float(rho.max()), 2.0)
    axis = np.arange(-round(span / step), round(span / step) + 1) * step
    kept = []
    for first in axis:
        if k == 2:
            rest = np.zeros((1, 0))
        else:
            rest = np.stack(np.meshgrid(*([axis] * (k - 2)), indexing="ij"), axis=-1).reshape(-1, k - 2)
        g = np.hstack([np.zeros((len(rest), 1)), np.full((len(rest), 1), first), rest])
        f = g - (g.max(axis=1, keepdims=True) + g.min(axis=1, keepdims=True)) / 2
        kept.append(f[_norm_of_grid(f, rho) <= 1.0 + 1e-12])
    return np.vstack(kept)


def kr_grid(mu: np.ndarray, nu: np.ndarray, rho: np.ndarray, step: float = GRID_STEP) -> float:
    """Brute-force ``max_{||f|| <= 1} (mu - nu) . f`` over a grid of the unit ball."""
    rho = np.asarray(rho, dtype=float)
    pts = _ball_grid(tuple(np.round(rho, 12).ravel()), rho.shape[0], step)
    return float(np.max(pts @ (np.asarray(mu) - np.asarray(nu))))


def binary_model_distance_grid(mu1: float, lower: float, step: float = 1e-3) -> float:
    """Two-level grid for a one-step binary window and ``M = {nu : nu(1) >= lower}``.

    Outer level: ``nu(1)`` on a grid of ``[lower, 1]``. Inner level: the KR
    distance from a grid of test functions ``(f0, f1)`` in ``[-1, 1]^2`` with
    ``max|f| + |f0 - f1| <= 1`` (the two outcomes are at distance 1).
    """
    axis = np.arange(-1.0, 1.0 + step / 2, step)
    f0, f1 = np.meshgrid(axis, axis, indexing="ij")
    ok = np.maximum(np.abs(f0), np.abs(f1)) + np.abs(f0 - f1) <= 1.0 + 1e-12
    f0, f1 = f0[ok], f1[ok]
    best = np.inf
    for n1 in np.arange(lower, 1.0 + step / 2, step):
        d0, d1 = (1 - mu1) - (1 - n1), mu1 - n1
        best = min(best, float(np.max(d0 * f0 + d1 * f1)))
    return best


def polytope_vertices(A_ub: np.ndarray, b_ub: np.ndarray, k: int, tol: float = 1e-9) -> np.ndarray:
    """Vertices of ``{nu >= 0, sum nu = 1, A_ub nu <= b_ub}`` by trying every active set."""
    rows = [(-np.eye(k)[i], 0.0) for i in range(k)] + list(zip(np.atleast_2d(A_ub), np.atleast_1d(b_ub)))
    out = []
    for active in itertools.combinations(range(len(rows)), k - 1):
        M = np.vstack([np.ones(k)] + [rows[i][0] for i in active])
        rhs = np.array([1.0] + [rows[i][1] for i in active])
        if abs(np.linalg.det(M)) < 1e-12:
            continue
        x = np.linalg.solve(M, rhs)
        if all(a @ x <= c + tol for a, c in rows):
            if not any(np.allclose(x, v, atol=1e-9) for v in out):
                out.append(x)
    return np.array(out)


def fixed_point_boundary(residual, lo: float = 0.0, hi: float = 1.0, iters: int = 60) -> float:
    """Bisection for the smallest ``t`` with ``residual(t) <= 0`` (``residual`` nonincreasing)."""
    for _ in range(iters):
        mid = (lo + hi) / 2
        if residual(mid) > 0:
            lo = mid
        else:
            hi = mid
    return hi


def minmax_over_completions(payoffs, path, shapes):
    """SVM/SVX by enumerating every joint completion of the unrevealed positions.

    ``payoffs[m]`` is a tensor over positions ``m .. m + len(shape_m) - 1``;
    ``path`` holds the revealed symbols. Used to check the incremental ledger.
    """
    n = len(path)
    horizon = max((m + len(s) for m, s in enumerate(shapes)), default=n)
    free = list(range(n, max(horizon, n)))
    sizes = {}
    for m, s in enumerate(shapes):
        for d, size in enumerate(s):
            sizes[m + d] = size
    values = []
    for tail in itertools.product(*[range(sizes[p]) for p in free]):
        x = list(path) + list(tail)
        total = 0.0
        for m, (p, s) in enumerate(zip(payoffs, shapes)):
            idx = tuple(x[m : m + len(s)])
            total += float(np.asarray(p).reshape(s)[idx])
        values.append(total)
    return min(values), max(values)
