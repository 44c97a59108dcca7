"""Kantorovich-Rubinstein geometry on outcome windows, solved as small LPs.

The unit ball of the norm ``||f|| = max|f| + Lip_rho(f)`` is encoded with
variables ``(f, a, b)`` and constraints ``|f_i| <= a``,
``|f_i - f_j| <= b rho_ij``, ``a + b <= 1``. For tree-structured metrics
(the geometric default) the O(k^2) pairwise block is replaced by the
equivalent per-node range constraints: an ultrametric Lipschitz condition
holds iff, under every prefix node, ``max f - min f`` is at most ``b`` times
that node's height.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from ._lp import INF, LinearProgram
from .measure import FiniteMeasure
from .observation import DEFAULT_METRIC, MetricFamily, OutcomeWindow

NORM_TOL = 1e-9


def lipschitz_norm(f, window: OutcomeWindow, metric: MetricFamily | None = None) -> float:
    """Exact ``max|f| + max_{x != x'} |f(x) - f(x')| / rho(x, x')`` over the window."""
    metric = metric if metric is not None else DEFAULT_METRIC
    f = np.asarray(f, dtype=float).reshape(-1)
    if f.shape != (window.size,):
        raise ValueError(f"function of shape {f.shape} does not match window size {window.size}")
    if window.size == 0:
        raise ValueError("empty window")
    sup = float(np.max(np.abs(f)))
    if window.size == 1:
        return sup
    rho = metric.matrix(window)
    off = ~np.eye(window.size, dtype=bool)
    lip = np.abs(f[:, None] - f[None, :])[off] / rho[off]
    return sup + float(lip.max())


def verify_lipschitz_ball(
    f, bound: float, window: OutcomeWindow, metric: MetricFamily | None = None
) -> bool:
    return lipschitz_norm(f, window, metric) <= bound + NORM_TOL


@dataclass(frozen=True)
class LipschitzFunction:
    values: np.ndarray
    window: OutcomeWindow
    norm_bound: float

    @classmethod
    def from_values(cls, values, window, metric=None):
        values = np.asarray(values, dtype=float).reshape(-1)
        return cls(values, window, lipschitz_norm(values, window, metric))


# -- unit-ball constraint blocks ---------------------------------------------


def _ball_rows(window: OutcomeWindow, metric: MetricFamily):
    """Rows over variables ``[f (k), a, b, aux...]``; returns (rows, cols, vals, upper, n_aux)."""
    k = window.size
    ia, ib = k, k + 1
    rows, cols, vals, upper = [], [], [], []
    r = 0

    def add(entries, ub):
        nonlocal r
        for c, v in entries:
            rows.append(r)
            cols.append(c)
            vals.append(v)
        upper.append(ub)
        r += 1

    depth = window.depth
    if metric.tree_structured and depth >= 1:
        # aux columns: (u_v, l_v) per internal node, nodes ordered by depth then prefix
        shape = window.shape
        offsets, n_aux = [], 0
        for d in range(depth):
            offsets.append(n_aux)
            n_aux += 2 * int(np.prod(shape[:d], dtype=int))
        base = k + 2

        def node(d, idx):
            u = base + offsets[d] + 2 * idx
            return u, u + 1

        heights = metric.level_heights(depth)
        for d in range(depth):
            for idx in range(int(np.prod(shape[:d], dtype=int))):
                u, l = node(d, idx)
                add([(u, 1.0), (l, -1.0), (ib, -heights[d])], 0.0)
                if d > 0:
                    pu, pl = node(d - 1, idx // shape[d - 1])
                    add([(u, 1.0), (pu, -1.0)], 0.0)
                    add([(pl, 1.0), (l, -1.0)], 0.0)
        leaf_block = shape[-1]
        for i in range(k):
            u, l = node(depth - 1, i // leaf_block)
            add([(i, 1.0), (u, -1.0)], 0.0)
            add([(l, 1.0), (i, -1.0)], 0.0)
        ru, rl = node(0, 0)
        add([(ru, 1.0), (ia, -1.0)], 0.0)
        add([(rl, -1.0), (ia, -1.0)], 0.0)
    else:
        n_aux = 0
        rho = metric.matrix(window)
        for i in range(k):
            add([(i, 1.0), (ia, -1.0)], 0.0)
            add([(i, -1.0), (ia, -1.0)], 0.0)
        for i in range(k):
            for j in range(i + 1, k):
                add([(i, 1.0), (j, -1.0), (ib, -rho[i, j])], 0.0)
                add([(j, 1.0), (i, -1.0), (ib, -rho[i, j])], 0.0)
    add([(ia, 1.0), (ib, 1.0)], 1.0)
    return rows, cols, vals, upper, n_aux


_KR_CACHE: dict = {}


def _kr_program(window: OutcomeWindow, metric: MetricFamily) -> LinearProgram:
    key = metric.cache_key(window)
    prog = _KR_CACHE.get(key)
    if prog is None:
        rows, cols, vals, upper, n_aux = _ball_rows(window, metric)
        ncol = window.size + 2 + n_aux
        A = sp.coo_matrix((vals, (rows, cols)), shape=(len(upper), ncol))
        lo = np.full(ncol, -INF)
        lo[window.size : window.size + 2] = 0.0
        prog = LinearProgram(A, np.full(len(upper), -INF), upper, lo, np.full(ncol, INF))
        if len(_KR_CACHE) > 256:
            _KR_CACHE.clear()
        _KR_CACHE[key] = prog
    return prog


def kr_distance(mu: FiniteMeasure, nu: FiniteMeasure, metric: MetricFamily | None = None) -> float:
    """``sup_{||f|| <= 1} E_mu f - E_nu f`` on the shared window."""
    metric = metric if metric is not None else DEFAULT_METRIC
    if mu.window != nu.window:
        raise ValueError("measures live on different windows")
    win = mu.window
    prog = _kr_program(win, metric)
    cost = np.zeros(prog.shape[1])
    cost[: win.size] = mu.weights - nu.weights
    value, _ = prog.maximize(cost)
    return max(value, 0.0)


def kr_witness(mu, nu, metric=None) -> tuple[float, LipschitzFunction]:
    """KR distance together with an optimal test function."""
    metric = metric if metric is not None else DEFAULT_METRIC
    if mu.window != nu.window:
        raise ValueError("measures live on different windows")
    win = mu.window
    prog = _kr_program(win, metric)
    cost = np.zeros(prog.shape[1])
    cost[: win.size] = mu.weights - nu.weights
    value, x = prog.maximize(cost)
    f = _into_ball(x[: win.size], win, metric)
    return max(value, 0.0), f


def _into_ball(values, window, metric) -> LipschitzFunction:
    # LP feasibility is only up to solver tolerance; rescale so the norm is <= 1 exactly
    f = LipschitzFunction.from_values(values, window, metric)
    if f.norm_bound > 1.0:
        f = LipschitzFunction.from_values(f.values / f.norm_bound, window, metric)
    return f


# -- model polytopes -----------------------------------------------------------


class EmptyPolytopeError(ValueError):
    """A model polytope has no member measure."""


class ModelPolytope:
    """Convex set of measures on a window, given by linear constraints.

    Members are weight vectors ``nu`` on the simplex for which there exist
    auxiliary variables ``q >= 0`` (``n_aux`` of them, possibly none) with
    ``A_ub @ [nu, q] <= b_ub`` and ``A_eq @ [nu, q] == b_eq``. Auxiliary
    variables carry mixture weights when a set is given by its vertices.
    """

    def __init__(self, window: OutcomeWindow, A_ub=None, b_ub=None, A_eq=None, b_eq=None,
                 n_aux: int = 0, name: str = "", unbounded_update: bool = False):
        self.window = window
        self.n_aux = int(n_aux)
        width = window.size + self.n_aux
        self.A_ub = np.zeros((0, width)) if A_ub is None else np.asarray(A_ub, dtype=float).reshape(-1, width)
        self.b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float).reshape(-1)
        self.A_eq = np.zeros((0, width)) if A_eq is None else np.asarray(A_eq, dtype=float).reshape(-1, width)
        self.b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float).reshape(-1)
        if len(self.A_ub) != len(self.b_ub) or len(self.A_eq) != len(self.b_eq):
            raise ValueError("constraint matrices and bounds disagree in length")
        self.name = name
        #: True when the set is the full simplex because no information survives conditioning
        self.unbounded_update = unbounded_update
        self._member = self._find_member()
        self._programs: dict = {}
        self._memo = None

    @classmethod
    def simplex(cls, window, name="simplex", **kw):
        return cls(window, name=name, **kw)

    @classmethod
    def singleton(cls, mu: FiniteMeasure, name="singleton"):
        k = mu.window.size
        return cls(mu.window, A_eq=np.eye(k), b_eq=mu.weights, name=name)

    @classmethod
    def from_vertices(cls, window, vertices, name="hull"):
        """Convex hull of the given weight vectors, as a lifted polytope."""
        V = np.atleast_2d(np.asarray(vertices, dtype=float))
        k, p = window.size, len(V)
        if V.shape[1] != k:
            raise ValueError("vertex dimension does not match the window")
        A_eq = np.hstack([np.eye(k), -V.T])
        return cls(window, A_eq=A_eq, b_eq=np.zeros(k), n_aux=p, name=name)

    @property
    def is_empty(self) -> bool:
        return self._member is None

    @property
    def is_plain(self) -> bool:
        return self.n_aux == 0

    def member(self) -> FiniteMeasure:
        if self._member is None:
            raise EmptyPolytopeError(f"model polytope {self.name!r} is empty")
        return self._member

    def _bounds_lp(self):
        k = self.window.size
        A_eq = np.vstack([self.A_eq, np.r_[np.ones(k), np.zeros(self.n_aux)]])
        b_eq = np.r_[self.b_eq, 1.0]
        return A_eq, b_eq

    def _find_member(self):
        k = self.window.size
        A_eq, b_eq = self._bounds_lp()
        # maximize the smallest weight so the member is as interior as the constraints allow
        width = k + self.n_aux
        c = np.zeros(width + 1)
        c[-1] = -1.0
        A_ub = [np.hstack([self.A_ub, np.zeros((len(self.A_ub), 1))])] if len(self.A_ub) else []
        A_ub.append(np.hstack([-np.eye(k), np.zeros((k, self.n_aux)), np.ones((k, 1))]))
        res = linprog(
            c,
            A_ub=np.vstack(A_ub),
            b_ub=np.r_[self.b_ub, np.zeros(k)],
            A_eq=np.hstack([A_eq, np.zeros((len(A_eq), 1))]),
            b_eq=b_eq,
            bounds=[(0, None)] * width + [(0, None)],
            method="highs",
        )
        if res.status != 0:
            return None
        w = np.clip(res.x[:k], 0.0, None)
        return FiniteMeasure(self.window, w / w.sum())

    def violation(self, mu: FiniteMeasure) -> float:
        """Largest constraint violation of ``mu`` (zero iff member, up to solver tolerance)."""
        if mu.window != self.window:
            raise ValueError("measure and polytope live on different windows")
        w = mu.weights
        if self.is_plain:
            v = 0.0
            if len(self.A_ub):
                v = max(v, float(np.max(self.A_ub @ w - self.b_ub, initial=0.0)))
            if len(self.A_eq):
                v = max(v, float(np.max(np.abs(self.A_eq @ w - self.b_eq), initial=0.0)))
            return max(v, 0.0)
        # lifted: minimize the worst violation over the auxiliary variables
        k, p = self.window.size, self.n_aux
        Au, Ae = self.A_ub[:, k:], self.A_eq[:, k:]
        ru, re = self.b_ub - self.A_ub[:, :k] @ w, self.b_eq - self.A_eq[:, :k] @ w
        c = np.r_[np.zeros(p), 1.0]
        rows = [np.hstack([Au, -np.ones((len(Au), 1))]),
                np.hstack([Ae, -np.ones((len(Ae), 1))]),
                np.hstack([-Ae, -np.ones((len(Ae), 1))])]
        res = linprog(c, A_ub=np.vstack(rows), b_ub=np.r_[ru, re, -re],
                      bounds=[(0, None)] * (p + 1), method="highs")
        if res.status != 0:
            raise RuntimeError("violation LP failed")
        return max(float(res.fun), 0.0)

    def contains(self, mu: FiniteMeasure, tol: float = 1e-7) -> bool:
        return self.violation(mu) <= tol

    # -- distance LP ---------------------------------------------------------

    def _program(self, metric: MetricFamily) -> LinearProgram:
        key = metric.cache_key(self.window)
        prog = self._programs.get(key)
        if prog is not None:
            return prog
        win = self.window
        k, p = win.size, self.n_aux
        rows, cols, vals, upper, n_ball_aux = _ball_rows(win, metric)
        it = k + 2 + n_ball_aux
        il = it + 1
        m_ub, m_eq = len(self.A_ub), len(self.A_eq)
        ik = il + m_ub
        ncol = ik + m_eq
        r = len(upper)
        # dual feasibility of the inner minimization over the model
        for i in range(k + p):
            if i < k:
                rows += [r, r]
                cols += [it, i]
                vals += [1.0, -1.0]
            for j in np.flatnonzero(self.A_ub[:, i]):
                rows.append(r)
                cols.append(il + j)
                vals.append(-self.A_ub[j, i])
            for j in np.flatnonzero(self.A_eq[:, i]):
                rows.append(r)
                cols.append(ik + j)
                vals.append(self.A_eq[j, i])
            upper.append(0.0)
            r += 1
        A = sp.coo_matrix((vals, (rows, cols)), shape=(r, ncol))
        lo = np.full(ncol, -INF)
        lo[k : k + 2] = 0.0
        lo[il:ik] = 0.0
        prog = LinearProgram(A, np.full(r, -INF), upper, lo, np.full(ncol, INF))
        prog.layout = (k, it, il, ik)
        self._programs[key] = prog
        return prog

    def distance(self, mu: FiniteMeasure, metric: MetricFamily | None = None):
        """``(r, witness)`` with ``r = min_{nu in M} D_KR(mu, nu)``; see :func:`distance_to_model`."""
        metric = metric if metric is not None else DEFAULT_METRIC
        if mu.window != self.window:
            raise ValueError("measure and polytope live on different windows")
        if self.is_empty:
            raise EmptyPolytopeError(f"model polytope {self.name!r} is empty")
        memo_key = (metric.cache_key(self.window), mu.weights.tobytes())
        if self._memo is not None and self._memo[0] == memo_key:
            return self._memo[1]
        prog = self._program(metric)
        k, it, il, ik = prog.layout
        cost = np.zeros(prog.shape[1])
        cost[:k] = -mu.weights
        cost[it] = 1.0
        cost[il:ik] = -self.b_ub
        cost[ik:] = self.b_eq
        value, x = prog.maximize(cost)
        r = max(value, 0.0)
        witness = _into_ball(x[:k], self.window, metric)
        if r == 0.0:
            witness = LipschitzFunction(np.zeros(k), self.window, 0.0)
        out = (r, witness)
        self._memo = (memo_key, out)
        return out

    def __repr__(self):
        return (f"ModelPolytope({self.name!r}, {self.window!r}, ub={len(self.A_ub)}, "
                f"eq={len(self.A_eq)}, aux={self.n_aux})")


def distance_to_model(mu: FiniteMeasure, M: ModelPolytope, metric: MetricFamily | None = None):
    """KR distance from ``mu`` to the model set and a separating witness.

    Solves ``max_{||f|| <= 1} min_{nu in M} (E_nu f - E_mu f)`` in one LP by
    dualizing the inner minimization. The witness ``f`` satisfies
    ``E_nu f - E_mu f >= r`` for every ``nu`` in ``M``.
    """
    return M.distance(mu, metric)


def violation(mu: FiniteMeasure, M: ModelPolytope) -> float:
    return M.violation(mu)
