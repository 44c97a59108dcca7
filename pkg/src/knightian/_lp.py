"""Thin wrapper around HiGHS for small LPs whose objective changes between solves."""

from __future__ import annotations

import highspy
import numpy as np
import scipy.sparse as sp

INF = highspy.kHighsInf
LP_TOL = 1e-9


class SolverError(RuntimeError):
    """The LP backend did not report an optimal solution."""


class LinearProgram:
    """``max c.x  s.t.  row_lower <= A x <= row_upper,  col_lower <= x <= col_upper``.

    The constraint structure is fixed at construction. Every call to
    :meth:`maximize` is a cold solve, so results do not depend on the order
    of earlier calls.
    """

    def __init__(self, A, row_lower, row_upper, col_lower, col_upper):
        A = sp.csc_matrix(A, dtype=float)
        m, n = A.shape
        self.shape = (m, n)
        lp = highspy.HighsLp()
        lp.num_col_ = n
        lp.num_row_ = m
        lp.col_cost_ = np.zeros(n)
        lp.col_lower_ = np.asarray(col_lower, dtype=float)
        lp.col_upper_ = np.asarray(col_upper, dtype=float)
        lp.row_lower_ = np.asarray(row_lower, dtype=float)
        lp.row_upper_ = np.asarray(row_upper, dtype=float)
        lp.a_matrix_.format_ = highspy.MatrixFormat.kColwise
        lp.a_matrix_.start_ = A.indptr.astype(np.int32)
        lp.a_matrix_.index_ = A.indices.astype(np.int32)
        lp.a_matrix_.value_ = A.data
        lp.sense_ = highspy.ObjSense.kMaximize
        h = highspy.Highs()
        h.setOptionValue("output_flag", False)
        h.setOptionValue("threads", 1)
        h.setOptionValue("random_seed", 0)
        h.setOptionValue("presolve", "off")
        h.setOptionValue("primal_feasibility_tolerance", LP_TOL)
        h.setOptionValue("dual_feasibility_tolerance", LP_TOL)
        h.passModel(lp)
        self._h = h
        self._cols = np.arange(n, dtype=np.int32)

    def maximize(self, cost) -> tuple[float, np.ndarray]:
        h = self._h
        h.clearSolver()
        h.changeColsCost(self.shape[1], self._cols, np.asarray(cost, dtype=float))
        h.run()
        status = h.getModelStatus()
        if status != highspy.HighsModelStatus.kOptimal:
            raise SolverError(f"LP solve ended with status {h.modelStatusToString(status)}")
        x = np.array(h.getSolution().col_value)
        return float(h.getInfo().objective_function_value), x
