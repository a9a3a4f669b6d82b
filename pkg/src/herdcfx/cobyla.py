"""Derivative-free constrained minimization (COBYLA).

Thin deterministic layer over Powell's linear-approximation trust-region
method as shipped in scipy. The wrapper adds the guarantees the
counterfactual engine relies on: an exact evaluation budget, recording of
every evaluated point so the returned solution is the best point actually
evaluated (feasibility first, then objective, then evaluation order), and
a defined degenerate outcome for non-finite function values.

Constraints use the g_i(x) >= 0 feasibility convention.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize as _scipy_minimize

FEASIBILITY_TOL = 1e-8


class OptError(ValueError):
    pass


class OptStatus(enum.Enum):
    Converged = "converged"
    MaxEvals = "max_evals"
    DegenerateSimplex = "degenerate"


@dataclass
class OptProblem:
    dimension: int
    objective: Callable[[np.ndarray], float]
    constraints: Sequence[Callable[[np.ndarray], float]] = ()
    x0: Sequence[float] = ()
    rho_begin: float = 0.25
    rho_end: float = 1e-6
    max_evals: int = 0

    def __post_init__(self) -> None:
        if self.dimension < 1:
            raise OptError("dimension must be >= 1")
        if not self.rho_begin > self.rho_end > 0:
            raise OptError("need rho_begin > rho_end > 0")
        if len(self.x0) == 0:
            self.x0 = np.zeros(self.dimension)
        self.x0 = np.asarray(self.x0, dtype=np.float64)
        if self.x0.shape != (self.dimension,):
            raise OptError(f"x0 must have shape ({self.dimension},)")
        if not np.all(np.isfinite(self.x0)):
            raise OptError("x0 must be finite")
        if self.max_evals <= 0:
            self.max_evals = 2000 * self.dimension


@dataclass
class OptResult:
    x_best: np.ndarray
    f_best: float
    max_violation: float
    status: OptStatus
    n_evals: int


class _BudgetExhausted(Exception):
    pass


class _NonFinite(Exception):
    pass


class _Recorder:
    """Evaluates objective + constraints once per distinct x and records all."""

    def __init__(self, problem: OptProblem):
        self.problem = problem
        self.cache: dict[bytes, tuple[float, list[float]]] = {}
        self.records: list[tuple[np.ndarray, float, float]] = []  # x, f, violation

    def evaluate(self, x: np.ndarray) -> tuple[float, list[float]]:
        key = np.asarray(x, dtype=np.float64).tobytes()
        hit = self.cache.get(key)
        if hit is not None:
            return hit
        if len(self.records) >= self.problem.max_evals:
            raise _BudgetExhausted
        xv = np.array(x, dtype=np.float64)
        f = float(self.problem.objective(xv))
        gs = [float(g(xv)) for g in self.problem.constraints]
        if not np.isfinite(f) or not all(np.isfinite(v) for v in gs):
            raise _NonFinite
        viol = max((max(0.0, -v) for v in gs), default=0.0)
        self.records.append((xv, f, viol))
        self.cache[key] = (f, gs)
        return f, gs

    def best(self) -> tuple[np.ndarray, float, float] | None:
        """Best recorded point: feasible-with-lowest-objective if any point
        is feasible within tolerance, else lowest violation; earlier
        evaluation wins ties."""
        if not self.records:
            return None
        feasible = [r for r in self.records if r[2] <= FEASIBILITY_TOL]
        if feasible:
            return min(feasible, key=lambda r: r[1])
        return min(self.records, key=lambda r: (r[2], r[1]))


def minimize(problem: OptProblem) -> OptResult:
    """Run COBYLA; deterministic for identical problems."""
    rec = _Recorder(problem)
    cons = [{"type": "ineq", "fun": (lambda x, i=i: rec.evaluate(x)[1][i])}
            for i in range(len(problem.constraints))]
    status = OptStatus.Converged
    try:
        res = _scipy_minimize(
            lambda x: rec.evaluate(x)[0],
            problem.x0,
            method="COBYLA",
            constraints=cons,
            options={
                "rhobeg": problem.rho_begin,
                "tol": problem.rho_end,
                "maxiter": problem.max_evals,
            },
        )
        if res.status == 1:
            status = OptStatus.Converged
        elif res.status == 2:
            status = OptStatus.MaxEvals
        else:
            status = OptStatus.DegenerateSimplex
    except _BudgetExhausted:
        status = OptStatus.MaxEvals
    except _NonFinite:
        status = OptStatus.DegenerateSimplex

    best = rec.best()
    if best is None:
        raise OptError("objective was never successfully evaluated")
    x_best, f_best, viol = best
    return OptResult(x_best=x_best, f_best=f_best, max_violation=viol,
                     status=status, n_evals=len(rec.records))


def check_feasible(problem: OptProblem, x, tol: float = 0.0) -> bool:
    xv = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(xv)):
        raise OptError("x must be finite")
    return all(g(xv) >= -tol for g in problem.constraints)
