"""Bounded-variable LP kernel shared by both solvers.

A thin incremental model (columns with bounds, rows with senses) solved
through scipy's HiGHS interface. Duals are reported per row as objective
sensitivities to the right-hand side and reduced costs per column, which is
all the pricing and separation machinery needs. Row/column addition and
bound fixing implement delayed row generation, delayed column generation and
branching respectively.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy.optimize import linprog
from scipy.sparse import csr_matrix

INF = math.inf

FEAS_TOL = 1e-7
OPT_TOL = 1e-7
INT_TOL = 1e-6


class LpError(Exception):
    pass


@dataclass
class LpColumn:
    obj: float
    lower: float
    upper: float
    is_integer: bool = False
    name: str = ""


@dataclass
class LpRow:
    coeffs: dict[int, float]
    sense: str
    rhs: float
    name: str = ""


class LpModel:
    """Minimization LP over bounded columns; single-owner mutable state."""

    def __init__(self) -> None:
        self.columns: list[LpColumn] = []
        self.rows: list[LpRow] = []

    @property
    def n_cols(self) -> int:
        return len(self.columns)

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    def add_column(
        self,
        obj: float = 0.0,
        lower: float = 0.0,
        upper: float = INF,
        *,
        is_integer: bool = False,
        name: str = "",
        coeffs: Optional[Mapping[int, float]] = None,
    ) -> int:
        if lower > upper + 1e-12:
            raise LpError(f"column {name!r}: lower bound exceeds upper bound")
        j = len(self.columns)
        self.columns.append(LpColumn(obj, lower, upper, is_integer, name))
        for i, val in (coeffs or {}).items():
            if not 0 <= i < len(self.rows):
                raise LpError(f"column {name!r}: unknown row {i}")
            self.rows[i].coeffs[j] = val
        return j

    def add_row(
        self, coeffs: Mapping[int, float], sense: str, rhs: float, name: str = ""
    ) -> int:
        if sense not in ("<=", ">=", "="):
            raise LpError(f"row {name!r}: unknown sense {sense!r}")
        for j in coeffs:
            if not 0 <= j < len(self.columns):
                raise LpError(f"row {name!r}: unknown column {j}")
        self.rows.append(LpRow(dict(coeffs), sense, rhs, name))
        return len(self.rows) - 1

    def set_bounds(self, j: int, lower: float, upper: float) -> None:
        if lower > upper + 1e-12:
            raise LpError(f"column {j}: bound crossing ({lower} > {upper})")
        self.columns[j].lower = lower
        self.columns[j].upper = upper

    def bounds(self, j: int) -> tuple[float, float]:
        col = self.columns[j]
        return col.lower, col.upper


@dataclass
class LpSolution:
    status: str
    objective: Optional[float]
    x: np.ndarray
    duals: np.ndarray
    reduced_costs: np.ndarray
    dual_objective: Optional[float] = None
    lower_marginals: Optional[np.ndarray] = None
    upper_marginals: Optional[np.ndarray] = None

    def value(self, j: int) -> float:
        return float(self.x[j])

    def dual(self, i: int) -> float:
        return float(self.duals[i])

    def is_integral(self, model: LpModel, tol: float = INT_TOL) -> bool:
        for j, col in enumerate(model.columns):
            if col.is_integer and abs(self.x[j] - round(self.x[j])) > tol:
                return False
        return True


_STATUS = {0: "optimal", 1: "error", 2: "infeasible", 3: "unbounded", 4: "error"}


def lp_solve(model: LpModel, warm_basis=None) -> LpSolution:
    """Solve to a basic optimal solution; duals exposed for every row.

    Deterministic for identical input. ``warm_basis`` is accepted for
    interface compatibility but the backing solver refactorizes from scratch,
    which at this scale is indistinguishable and keeps resolves exactly
    equivalent to fresh solves.
    """
    n = model.n_cols
    if n == 0:
        return LpSolution("optimal", 0.0, np.zeros(0), np.zeros(len(model.rows)), np.zeros(0), 0.0)
    c = np.array([col.obj for col in model.columns])
    bounds = [(col.lower, None if math.isinf(col.upper) else col.upper) for col in model.columns]
    ub_rows: list[int] = []
    ub_sign: list[float] = []
    eq_rows: list[int] = []
    for i, row in enumerate(model.rows):
        if row.sense == "=":
            eq_rows.append(i)
        else:
            ub_rows.append(i)
            ub_sign.append(1.0 if row.sense == "<=" else -1.0)

    def _matrix(row_ids: Sequence[int], signs: Optional[Sequence[float]] = None):
        data, indices, indptr = [], [], [0]
        rhs = []
        for k, i in enumerate(row_ids):
            row = model.rows[i]
            sgn = signs[k] if signs is not None else 1.0
            for j, val in sorted(row.coeffs.items()):
                data.append(sgn * val)
                indices.append(j)
            indptr.append(len(data))
            rhs.append(sgn * row.rhs)
        mat = csr_matrix((data, indices, indptr), shape=(len(row_ids), n))
        return mat, np.array(rhs)

    a_ub = b_ub = a_eq = b_eq = None
    if ub_rows:
        a_ub, b_ub = _matrix(ub_rows, ub_sign)
    if eq_rows:
        a_eq, b_eq = _matrix(eq_rows)
    res = linprog(
        c,
        A_ub=a_ub,
        b_ub=b_ub,
        A_eq=a_eq,
        b_eq=b_eq,
        bounds=bounds,
        method="highs",
    )
    status = _STATUS.get(res.status, "error")
    if status != "optimal":
        return LpSolution(status, None, np.zeros(n), np.zeros(len(model.rows)), np.zeros(n))
    duals = np.zeros(len(model.rows))
    if ub_rows:
        for k, i in enumerate(ub_rows):
            duals[i] = ub_sign[k] * res.ineqlin.marginals[k]
    if eq_rows:
        for k, i in enumerate(eq_rows):
            duals[i] = res.eqlin.marginals[k]
    reduced = np.asarray(res.lower.marginals) + np.asarray(res.upper.marginals)
    dual_obj = 0.0
    for i, row in enumerate(model.rows):
        if duals[i] != 0.0:
            dual_obj += duals[i] * row.rhs
    for j, col in enumerate(model.columns):
        lo_m = float(res.lower.marginals[j])
        up_m = float(res.upper.marginals[j])
        if lo_m != 0.0 and math.isfinite(col.lower):
            dual_obj += lo_m * col.lower
        if up_m != 0.0 and math.isfinite(col.upper):
            dual_obj += up_m * col.upper
    return LpSolution(
        "optimal",
        float(res.fun),
        np.asarray(res.x),
        duals,
        reduced,
        dual_obj,
        np.asarray(res.lower.marginals),
        np.asarray(res.upper.marginals),
    )
