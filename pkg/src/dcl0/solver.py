"""Penalized solver for support-measure constrained quadratic problems.

The support constraint (measure of the support of the piecewise linear
function at most K) is reformulated through per-element absolute-value sums
as a difference of the weighted L1 norm and the largest-K-norm, penalized
with a factor rho, and minimized by the DC iteration: each sweep picks a
knapsack selection for the largest-K term, tilts the convex remainder by the
corresponding subgradient, and solves the resulting weighted-L1 quadratic
subproblem with the semismooth Newton method.  A continuation schedule can
tighten the budget from the full domain measure down to K.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import dc
from .fem import FemSystem, w_of
from .measures import (DiscreteMeasureSpace, largest_k_auto, largest_k_exact,
                       largest_k_greedy, weighted_l0, weighted_l1)
from .problems import ProblemDef
from .ssn import L1Weights, default_tau, ssn_solve

__all__ = ["L0PenaltyConfig", "L0Solution", "IterationRow",
           "OptimalityReport", "solve_l0_penalized", "optimality_report",
           "penalty_sweep"]

ZERO_SIGN_POLICIES = ("zero", "plus", "minus", "sign_of_load")
U0_POLICIES = ("unconstrained_solve", "zero", "custom")


@dataclass
class L0PenaltyConfig:
    """Parameters of one penalized solve.

    ``K`` is the support-measure budget, ``rho`` the penalty factor.  With
    ``schedule_lambda`` set, the budget starts at the full domain measure
    and shrinks geometrically until it reaches ``K``; termination is only
    allowed afterwards.  ``zero_sign_policy`` chooses the subgradient sign
    on zero components, ``u0_policy`` the starting point.
    """

    K: float
    rho: float = 1e9
    schedule_lambda: float = None
    zero_sign_policy: str = "zero"
    u0_policy: str = "unconstrained_solve"
    u0: np.ndarray = None
    max_iter: int = 500
    fixed_point_tol: float = 0.0
    ssn_tol: float = 1e-14
    ssn_max_newton: int = 50
    subgrad_selection: str = "greedy"

    def validate(self, total_measure):
        if not 0.0 < self.K <= total_measure * (1.0 + 1e-12):
            raise ValueError(f"K={self.K} outside (0, {total_measure}]")
        if self.rho <= 0.0:
            raise ValueError("rho must be positive")
        if self.schedule_lambda is not None and not 0.0 < self.schedule_lambda < 1.0:
            raise ValueError("schedule_lambda must lie in (0, 1)")
        if self.zero_sign_policy not in ZERO_SIGN_POLICIES:
            raise ValueError(f"unknown zero_sign_policy {self.zero_sign_policy!r}")
        if self.u0_policy not in U0_POLICIES:
            raise ValueError(f"unknown u0_policy {self.u0_policy!r}")
        if self.u0_policy == "custom" and self.u0 is None:
            raise ValueError("u0_policy 'custom' needs an explicit u0")
        if self.subgrad_selection not in ("greedy", "exact"):
            raise ValueError("subgrad_selection must be 'greedy' or 'exact'")


@dataclass
class IterationRow:
    k: int
    K: float
    objective: float
    gap: float
    newton_iters: int
    ssn_residual: float
    step_norm: float


@dataclass
class OptimalityReport:
    """Discrete counterparts of the stationarity conditions of the penalized
    problem, from the scaled gradient ``ghat_j = grad_j / patch_measure_j``.

    ``support_in_selection_max`` should be near zero, ``support_off_selection_max``
    near zero as well (it measures ``|ghat + rho sign(u)|`` where the support
    leaks out of the selection), and ``off_support_max`` at most rho.  The
    exact-penalty flag checks ``rho > max_j |ghat_j|``.
    """

    pairing: float
    support_in_selection_max: float
    support_off_selection_max: float
    off_support_max: float
    max_scaled_gradient: float
    exact_penalty: bool
    selection_exact: bool


@dataclass
class L0Solution:
    u: np.ndarray
    objective: float
    penalized_objective: float
    l0: float
    gap: float
    gap_selection_exact: bool
    budget_exceeded: bool
    dc_iters: int
    newton_iters: int
    status: str
    schedule_steps: int
    diagnostics: OptimalityReport
    history: list[IterationRow] = field(default_factory=list)

    def max_ascent_at_target(self, K):
        """Largest objective increase between consecutive iterations whose
        budget already equals the target K."""
        vals = [row.objective for row in self.history if row.K == K]
        if len(vals) < 2:
            return 0.0
        return float(np.max(np.diff(vals), initial=0.0))


def _fill_budget(sel, elems, budget, values, zero_threshold=1e-10):
    """Extend a selection with zero-valued atoms (ascending index) while the
    budget permits; the extension does not change the attained value."""
    slack = budget + 1e-12 * elems.total_measure() - sel.weight
    if slack <= 0.0 or slack < float(elems.weights.min()):
        return sel.indices
    candidates = np.abs(values) <= zero_threshold
    candidates[sel.indices] = False
    extra = []
    for i in np.flatnonzero(candidates):
        if elems.weights[i] <= slack:
            extra.append(i)
            slack -= elems.weights[i]
            if slack <= 0.0:
                break
    if not extra:
        return sel.indices
    return np.sort(np.concatenate([sel.indices, np.array(extra, dtype=int)]))


class _BudgetSchedule:
    """Geometric continuation of the selection budget down to the target."""

    def __init__(self, total, target, lam):
        self.target = target
        self.lam = lam
        self.current = target if lam is None else total
        self.steps = 0

    @property
    def reached(self):
        return self.current == self.target

    def advance(self):
        if self.lam is None or self.reached:
            return
        self.current = max(self.lam * self.current, self.target)
        self.steps += 1


def _initial_point(problem: ProblemDef, cfg: L0PenaltyConfig):
    if cfg.u0_policy == "zero":
        return np.zeros(problem.system.mesh.num_nodes)
    if cfg.u0_policy == "custom":
        u0 = np.asarray(cfg.u0, dtype=float)
        if u0.size != problem.system.mesh.num_nodes:
            raise ValueError("custom u0 must be a full-length nodal vector")
        return u0.copy()
    return problem.unconstrained_minimizer()


def solve_l0_penalized(problem: ProblemDef, system: FemSystem,
                       cfg: L0PenaltyConfig) -> L0Solution:
    """Run the penalized DC iteration and assemble the solution report."""
    elems = DiscreteMeasureSpace(system.elem_measure)
    cfg.validate(elems.total_measure())
    free = system.free_nodes
    weights = L1Weights(cfg.rho * system.patch_measure[free])
    schedule = _BudgetSchedule(elems.total_measure(), cfg.K, cfg.schedule_lambda)
    select = largest_k_exact if cfg.subgrad_selection == "exact" else largest_k_greedy

    load_full = system.expand(problem.q_smooth)
    zero_signs = {
        "zero": lambda u: np.zeros_like(u),
        "plus": lambda u: np.ones_like(u),
        "minus": lambda u: -np.ones_like(u),
        "sign_of_load": lambda u: np.sign(load_full),
    }[cfg.zero_sign_policy]

    rows = []
    counters = {"newton": 0}

    def hook(k):
        schedule.advance()
        rows.append(IterationRow(k=k, K=schedule.current, objective=np.nan,
                                 gap=np.nan, newton_iters=0,
                                 ssn_residual=np.nan, step_norm=np.nan))

    def h_subgrad(u_full):
        w = w_of(u_full, system)
        sel = select(w, elems, schedule.current)
        # a maximizing set may be completed with zero-valued atoms at no
        # cost; without them the tilt vanishes on zero components and the
        # nonzero sign policies could never act from a zero iterate
        chosen = _fill_budget(sel, elems, schedule.current, w)
        r = np.zeros(elems.n)
        r[chosen] = elems.weights[chosen]
        a = np.sign(u_full)
        at_zero = u_full == 0.0
        a[at_zero] = zero_signs(u_full)[at_zero]
        return cfg.rho * ((system.incidence.T @ r) * a)

    def g_solve(s_full, warm_full):
        warm = system.restrict(warm_full)
        res = ssn_solve(problem.hessian, problem.q_smooth, weights,
                        tau=default_tau(warm, weights), tol=cfg.ssn_tol,
                        max_newton=cfg.ssn_max_newton, u0=warm,
                        tilt=s_full[free])
        counters["newton"] += res.iters
        rows[-1].newton_iters = res.iters
        rows[-1].ssn_residual = res.residual
        return system.expand(res.u), res.residual

    def objective(u_full):
        w = w_of(u_full, system)
        sel = select(w, elems, schedule.current)
        gap = weighted_l1(w, elems) - sel.value
        value = problem.smooth_value(u_full) + cfg.rho * gap
        if rows:
            rows[-1].gap = gap
        return value

    dc_problem = dc.DcProblem(g_solve=g_solve, h_subgrad=h_subgrad,
                              objective=objective)
    state = dc.dc_solve(dc_problem, _initial_point(problem, cfg),
                        max_iter=cfg.max_iter,
                        fixed_point_tol=cfg.fixed_point_tol,
                        iteration_hook=hook,
                        stop_allowed=lambda k: schedule.reached)
    if cfg.schedule_lambda is not None and not schedule.reached:
        raise dc.DcError("budget schedule never reached the target K",
                         state.k)

    for row, rec in zip(rows, state.history):
        row.objective = rec.objective
        row.step_norm = rec.step_norm

    w = w_of(state.u, system)
    final_sel = largest_k_auto(w, elems, cfg.K)
    gap = weighted_l1(w, elems) - final_sel.value
    l0 = weighted_l0(w, elems)
    report = optimality_report(state.u, problem, system, cfg.rho, cfg.K)
    return L0Solution(u=state.u,
                      objective=float(problem.smooth_value(state.u)),
                      penalized_objective=float(problem.smooth_value(state.u)
                                                + cfg.rho * gap),
                      l0=l0, gap=float(gap),
                      gap_selection_exact=final_sel.exact,
                      budget_exceeded=bool(
                          l0 > cfg.K + 1e-12 * elems.total_measure()),
                      dc_iters=state.k, newton_iters=counters["newton"],
                      status=state.status, schedule_steps=schedule.steps,
                      diagnostics=report, history=rows)


def optimality_report(u, problem: ProblemDef, system: FemSystem, rho,
                      K) -> OptimalityReport:
    """Evaluate the discrete stationarity conditions at a candidate ``u``."""
    u = np.asarray(u, dtype=float)
    elems = DiscreteMeasureSpace(system.elem_measure)
    sel = largest_k_auto(w_of(u, system), elems, K)
    grad_full = problem.smooth_grad(u)
    free = system.free_nodes
    ghat = grad_full[free] / system.patch_measure[free]
    pairing = float(grad_full @ u)

    selected = np.zeros(elems.n)
    selected[sel.indices] = 1.0
    covered = (system.incidence.T @ selected)[free]
    patch_count = (system.incidence.T @ np.ones(elems.n))[free]
    u_free = u[free]
    supported = u_free != 0.0
    fully_in = covered == patch_count
    none_in = covered == 0.0

    def max_over(mask, values):
        return float(np.max(np.abs(values[mask]))) if np.any(mask) else 0.0

    in_sel = max_over(supported & fully_in, ghat)
    off_sel = max_over(supported & none_in, ghat + rho * np.sign(u_free))
    off_supp = max_over(~supported, ghat)
    gmax = float(np.max(np.abs(ghat))) if ghat.size else 0.0
    return OptimalityReport(pairing=pairing, support_in_selection_max=in_sel,
                            support_off_selection_max=off_sel,
                            off_support_max=off_supp, max_scaled_gradient=gmax,
                            exact_penalty=bool(rho > gmax),
                            selection_exact=sel.exact)


def penalty_sweep(problem: ProblemDef, system: FemSystem,
                  cfg: L0PenaltyConfig, rhos) -> list[L0Solution]:
    """Solve for each penalty value in increasing order, warm-starting every
    solve from the previous solution."""
    rhos = [float(r) for r in rhos]
    if any(b <= a for a, b in zip(rhos, rhos[1:])):
        raise ValueError("penalty values must be strictly increasing")
    solutions = []
    current = cfg
    for rho in rhos:
        current = replace(current, rho=rho)
        sol = solve_l0_penalized(problem, system, current)
        solutions.append(sol)
        current = replace(current, u0_policy="custom", u0=sol.u,
                          schedule_lambda=None)
    return solutions
