"""Conic problem exchange format and the bundled backends.

A :class:`ConicProblem` is::

    minimize    c'x
    subject to  A_eq x == b_eq
                A_ub x <= b_ub
                lb <= x <= ub
                ||P_k x + q_k||_2 <= r_k'x + t_k   for every cone block k

Two backends ship with the package: ``clarabel`` (interior point, handles cones)
and ``highs`` (LP only, through :func:`scipy.optimize.linprog`). The default
``auto`` picks HiGHS for cone-free problems. Set ``CCSCOPF_BACKEND`` to force one.
"""
from __future__ import annotations

import os
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
NUMERICAL = "numerical-failure"


class BackendError(RuntimeError):
    def __init__(self, result: "BackendResult"):
        super().__init__(f"backend returned {result.status}: {result.stats.get('raw_status')}")
        self.result = result


@dataclass(eq=False)
class SocBlock:
    P: sp.csr_matrix
    q: np.ndarray
    r: sp.csr_matrix  # 1 x n
    t: float = 0.0

    @property
    def dim(self) -> int:
        return self.P.shape[0]


@dataclass(eq=False)
class ConicProblem:
    c: np.ndarray
    A_eq: sp.csr_matrix
    b_eq: np.ndarray
    A_ub: sp.csr_matrix
    b_ub: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    cones: list[SocBlock] = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.c.size

    def check(self):
        n = self.n
        assert self.A_eq.shape == (self.b_eq.size, n)
        assert self.A_ub.shape == (self.b_ub.size, n)
        assert self.lb.shape == (n,) and self.ub.shape == (n,)
        for cone in self.cones:
            assert cone.P.shape[1] == n and cone.r.shape == (1, n) and cone.q.size == cone.dim


@dataclass(eq=False)
class BackendResult:
    status: str
    x: np.ndarray | None = None
    objective: float | None = None
    y_eq: np.ndarray | None = None  # equality multipliers
    y_ub: np.ndarray | None = None  # >= 0, one per inequality row
    stats: dict = field(default_factory=dict)


def solve_backend(problem: ConicProblem, warm_start: np.ndarray | None = None, backend: str | None = None) -> BackendResult:
    """Solve ``problem``; ``warm_start`` is accepted for interface stability and ignored by both backends.

    On a numerical failure the problem is retried once with rows normalized to
    unit infinity norm before giving up.
    """
    del warm_start
    name = (backend or os.environ.get("CCSCOPF_BACKEND", "auto")).lower()
    if name == "auto":
        name = "highs" if not problem.cones else "clarabel"
    if name == "highs" and problem.cones:
        raise ValueError("the HiGHS backend cannot handle cone constraints")
    solve = {"highs": _solve_highs, "clarabel": _solve_clarabel}[name]
    t0 = time.perf_counter()
    result = solve(problem)
    if result.status == NUMERICAL:
        scaled, row_scale = _row_normalized(problem)
        retry = solve(scaled)
        if retry.y_ub is not None:
            retry.y_ub = retry.y_ub * row_scale[1]
            retry.y_eq = retry.y_eq * row_scale[0]
        retry.stats["retried"] = True
        result = retry
    result.stats["backend"] = name
    result.stats["seconds"] = time.perf_counter() - t0
    return result


def _row_normalized(p: ConicProblem):
    def scale(A, b):
        norms = np.asarray(abs(A).max(axis=1).todense()).ravel() if A.shape[0] else np.zeros(0)
        norms[norms == 0] = 1.0
        D = sp.diags(1.0 / norms)
        return (D @ A).tocsr(), b / norms, 1.0 / norms

    A_eq, b_eq, s_eq = scale(p.A_eq, p.b_eq)
    A_ub, b_ub, s_ub = scale(p.A_ub, p.b_ub)
    return ConicProblem(p.c, A_eq, b_eq, A_ub, b_ub, p.lb, p.ub, p.cones), (s_eq, s_ub)


def _solve_highs(p: ConicProblem) -> BackendResult:
    from scipy.optimize import linprog

    bounds = np.column_stack([p.lb, p.ub])
    res = linprog(
        p.c,
        A_ub=p.A_ub if p.A_ub.shape[0] else None,
        b_ub=p.b_ub if p.A_ub.shape[0] else None,
        A_eq=p.A_eq if p.A_eq.shape[0] else None,
        b_eq=p.b_eq if p.A_eq.shape[0] else None,
        bounds=bounds,
        method="highs",
        options={"primal_feasibility_tolerance": 1e-9, "dual_feasibility_tolerance": 1e-9},
    )
    status = {0: OPTIMAL, 2: INFEASIBLE, 3: UNBOUNDED}.get(res.status, NUMERICAL)
    stats = {"raw_status": res.message, "iterations": getattr(res, "nit", None)}
    if status != OPTIMAL:
        return BackendResult(status, stats=stats)
    y_eq = -np.asarray(res.eqlin.marginals) if p.A_eq.shape[0] else np.zeros(0)
    y_ub = -np.asarray(res.ineqlin.marginals) if p.A_ub.shape[0] else np.zeros(0)
    return BackendResult(OPTIMAL, np.asarray(res.x), float(res.fun), y_eq, y_ub, stats)


def _solve_clarabel(p: ConicProblem) -> BackendResult:
    import clarabel

    n = p.n
    blocks_A = [p.A_eq, p.A_ub]
    blocks_b = [p.b_eq, p.b_ub]
    lo = np.flatnonzero(np.isfinite(p.lb))
    hi = np.flatnonzero(np.isfinite(p.ub))
    if lo.size:
        blocks_A.append(-sp.identity(n, format="csr")[lo])
        blocks_b.append(-p.lb[lo])
    if hi.size:
        blocks_A.append(sp.identity(n, format="csr")[hi])
        blocks_b.append(p.ub[hi])
    n_ineq = p.A_ub.shape[0] + lo.size + hi.size
    n_zero = p.A_eq.shape[0]
    cones = [clarabel.ZeroConeT(n_zero)] if n_zero else []
    if n_ineq:
        cones.append(clarabel.NonnegativeConeT(n_ineq))
    for blk in p.cones:
        blocks_A.append(-sp.vstack([blk.r, blk.P]))
        blocks_b.append(np.concatenate([[blk.t], blk.q]))
        cones.append(clarabel.SecondOrderConeT(blk.dim + 1))
    A = sp.vstack(blocks_A, format="csc")
    b = np.concatenate(blocks_b)
    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.tol_gap_abs = 1e-8
    settings.tol_gap_rel = 1e-8
    settings.tol_feas = 1e-9
    settings.tol_ktratio = 1e-7
    settings.max_iter = 400
    P = sp.csc_matrix((n, n))
    solver = clarabel.DefaultSolver(P, np.asarray(p.c, dtype=float), A, b, cones, settings)
    sol = solver.solve()
    raw = str(sol.status)
    stats = {"raw_status": raw, "iterations": sol.iterations}
    if raw.endswith("Solved") and not raw.endswith("AlmostSolved"):
        status = OPTIMAL
    elif raw.endswith("AlmostSolved"):
        status = OPTIMAL
        stats["inaccurate"] = True
    elif "PrimalInfeasible" in raw:
        status = INFEASIBLE
    elif "DualInfeasible" in raw:
        status = UNBOUNDED
    else:
        status = NUMERICAL
    if status != OPTIMAL:
        return BackendResult(status, stats=stats)
    z = np.asarray(sol.z)
    neq, nub = p.A_eq.shape[0], p.A_ub.shape[0]
    return BackendResult(OPTIMAL, np.asarray(sol.x), float(sol.obj_val), -z[:neq], z[n_zero : n_zero + nub], stats)
