"""Exact solvers for the per-step scenario-count maximization.

All solvers work on the reduced form: scenario s meets the goal iff
G(u) = sum(gains * u) >= theta_s. Among schedules with the largest satisfied
count they return the one with the fewest messages, then the lowest total
cost, then the lexicographically smallest binary schedule read row-major.
Depth-first search visits steps in order and branches per step on no message,
then type m, m-1, ..., 1, so the first schedule found under a tie is that
smallest one. Every solver applies the same order and returns identical
schedules, not merely equal counts.
"""
from __future__ import annotations

import logging
import math
from bisect import bisect_right
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from app.errors import SolverGuardError
from app.services.intervention.config.settings import (
    BIG_M_FLOOR,
    BOUND_TOL,
    BRUTE_FORCE_LIMIT,
    BUDGET_TOL,
)
from app.services.intervention.schemas.intervention_schemas import (
    BurdenConstraints,
    CostProfile,
    MilpProblem,
    ReducedProblem,
    RemainingBudget,
    Solution,
)
from app.services.intervention.utils.constraints import decisions_to_schedule
from app.services.intervention.utils.scenario import satisfied_count, schedule_gain

logger = logging.getLogger(__name__)


# -----------------------
# FORMULATION
# -----------------------
def box_minimum(gains: np.ndarray) -> float:
    """Smallest sum(gains * u) over the box relaxation u in [0, 1]."""
    return float(np.minimum(gains, 0.0).sum())


def formulate_big_m(
    reduced: ReducedProblem,
    cons: BurdenConstraints,
    costs: CostProfile,
    budget: Optional[RemainingBudget] = None,
) -> MilpProblem:
    """Attach big-M constants so that p_s = 0 never cuts a feasible schedule.

    M^s = max(1, theta_s - L) with L the box-relaxation minimum of G(u); then
    G(u) - theta_s >= M^s (p_s - 1) holds for every u whenever p_s = 0.
    """
    if budget is None:
        budget = RemainingBudget(messages_left=cons.alpha, cost_left=cons.beta, blocked_until=reduced.k_star)
    lower = box_minimum(reduced.gains)
    big_m = np.maximum(BIG_M_FLOOR, reduced.theta - lower)
    future_costs = np.asarray(costs.c[reduced.k_star - 1: reduced.T], dtype=float)
    return MilpProblem(reduced=reduced, constraints=cons, budget=budget, costs=future_costs, big_m=big_m)


def indicator_holds(problem: MilpProblem, s: int, gain: float, p_s: int) -> bool:
    """Big-M row of scenario s: G(u) - theta_s >= M^s (p_s - 1)."""
    return gain - problem.reduced.theta[s] >= problem.big_m[s] * (p_s - 1)


def milp_objective(problem: MilpProblem, decisions: Sequence[int]) -> Optional[int]:
    """Best sum(p_s) for a fixed schedule in the big-M program (None if no p fits).

    Each row involves only its own p_s, so the rows are optimized independently.
    """
    gain = schedule_gain(problem.reduced.gains, decisions)
    total = 0
    for s in range(problem.reduced.n_scenarios):
        if indicator_holds(problem, s, gain, 1):
            total += 1
        elif not indicator_holds(problem, s, gain, 0):
            return None
    return total


def _check_problem(problem: MilpProblem) -> None:
    reduced = problem.reduced
    if reduced.n_scenarios < 1:
        raise SolverGuardError("problem has no scenarios")
    if problem.big_m.shape != reduced.theta.shape:
        raise SolverGuardError("one big-M constant per scenario is required")
    if problem.costs.shape[0] != reduced.horizon:
        raise SolverGuardError(f"{problem.costs.shape[0]} step costs for a horizon of {reduced.horizon}")
    required = np.maximum(BIG_M_FLOOR, reduced.theta - box_minimum(reduced.gains))
    slack = 1e-9 * np.maximum(1.0, np.abs(required))
    if np.any(problem.big_m < required - slack):
        raise SolverGuardError("big-M constants too small to deactivate the goal rows")


# -----------------------
# SEARCH SUPPORT
# -----------------------
class _SearchTables:
    """Suffix tables for optimistic gain and cost bounds."""

    def __init__(self, problem: MilpProblem):
        reduced = problem.reduced
        self.gains = reduced.gains
        self.L = reduced.horizon
        self.m = reduced.channels
        self.costs = problem.costs
        self.theta_sorted = sorted(float(t) for t in reduced.theta)
        budget = problem.budget
        self.messages_left = max(0, budget.messages_left)
        self.cost_left = budget.cost_left
        self.spacing = problem.constraints.spacing_steps
        self.first_free = max(0, budget.blocked_until - reduced.k_star)

        best = self.gains.max(axis=1) if self.L else np.zeros(0)
        self.best_gain = [float(v) for v in best]
        self.top_cum: List[np.ndarray] = []
        self.cheap_cum: List[np.ndarray] = []
        for e in range(self.L + 1):
            positive = np.sort(best[e:][best[e:] > 0])[::-1]
            self.top_cum.append(np.concatenate(([0.0], np.cumsum(positive))))
            self.cheap_cum.append(np.concatenate(([0.0], np.cumsum(np.sort(self.costs[e:])))))

        # positions with a useful message, best value-per-cost first, per suffix
        ratio = [
            (self.best_gain[p] / self.costs[p]) if self.costs[p] > 0 else math.inf
            for p in range(self.L)
        ]
        order = sorted((p for p in range(self.L) if self.best_gain[p] > 0), key=lambda p: (-ratio[p], p))
        self.by_ratio = [
            [(self.best_gain[p], float(self.costs[p])) for p in order if p >= e] for e in range(self.L + 1)
        ]

    def capacity(self, p: int, next_free: int, used: int) -> tuple[int, int]:
        """(earliest sendable position, max further messages) from position p."""
        e = max(p, next_free)
        if e >= self.L:
            return self.L, 0
        room = (self.L - e + self.spacing - 1) // self.spacing
        return e, min(room, self.messages_left - used)

    def optimistic_gain(self, e: int, k: int, cost: float = 0.0) -> float:
        """Upper bound on the extra G from position e: min of count and budget relaxations."""
        cum = self.top_cum[e]
        by_count = float(cum[min(k, cum.shape[0] - 1)])
        room = max(0.0, self.cost_left - cost) + BUDGET_TOL
        by_budget = 0.0
        for value, c in self.by_ratio[e]:
            if c <= room:
                by_budget += value
                room -= c
            else:
                by_budget += value * room / c
                break
        return min(by_count, by_budget)

    def messages_needed(self, e: int, k: int, deficit: float, cost: float) -> Optional[int]:
        """Fewest further messages that could close ``deficit`` (None if impossible)."""
        if deficit <= BOUND_TOL:
            return 0
        if self.optimistic_gain(e, k, cost) < deficit - BOUND_TOL:
            return None
        cum = self.top_cum[e]
        r = int(np.searchsorted(cum, deficit - BOUND_TOL, side="left"))
        if r >= cum.shape[0] or r > k:
            return None
        return r

    def cheapest(self, e: int, r: int) -> float:
        cum = self.cheap_cum[e]
        return float(cum[min(r, cum.shape[0] - 1)])

    def can_send(self, p: int, next_free: int, used: int, cost: float) -> bool:
        return (
            p >= next_free
            and used < self.messages_left
            and cost + float(self.costs[p]) <= self.cost_left + BUDGET_TOL
        )

    def count(self, gain: float) -> int:
        return bisect_right(self.theta_sorted, gain)


@dataclass
class _Incumbent:
    satisfied: int = -1
    messages: int = 0
    cost: float = 0.0
    decisions: tuple = ()

    def improved_by(self, satisfied: int, messages: int, cost: float) -> bool:
        if satisfied != self.satisfied:
            return satisfied > self.satisfied
        if messages != self.messages:
            return messages < self.messages
        return cost < self.cost


def _build_solution(problem: MilpProblem, decisions: Sequence[int], nodes: int) -> Solution:
    reduced = problem.reduced
    decisions = tuple(int(d) for d in decisions)
    gain = schedule_gain(reduced.gains, decisions)
    count = satisfied_count(reduced, gain)
    total_cost = 0.0
    for p, d in enumerate(decisions):
        if d:
            total_cost = total_cost + float(problem.costs[p])
    return Solution(
        schedule=decisions_to_schedule(decisions, reduced.channels),
        decisions=decisions,
        satisfied_count=count,
        scenario_count=reduced.n_scenarios,
        objective=count / reduced.n_scenarios,
        message_count=sum(1 for d in decisions if d),
        total_cost=total_cost,
        node_count=nodes,
    )


# -----------------------
# SOLVERS
# -----------------------
def solve_branch_and_bound(problem: MilpProblem) -> Solution:
    """Depth-first branch and bound on the satisfied-scenario count."""
    _check_problem(problem)
    t = _SearchTables(problem)
    best = _Incumbent()
    nodes = 0
    path: List[int] = []

    def visit(p: int, gain: float, used: int, cost: float, next_free: int) -> None:
        nonlocal nodes, best
        nodes += 1
        if p == t.L:
            sat = t.count(gain)
            if best.improved_by(sat, used, cost):
                best = _Incumbent(sat, used, cost, tuple(path))
                logger.debug("B&B incumbent: satisfied=%d messages=%d cost=%.4f", sat, used, cost)
            return

        e, k = t.capacity(p, next_free, used)
        if best.satisfied >= 0:
            bound = t.count(gain + t.optimistic_gain(e, k, cost) + BOUND_TOL)
            if bound < best.satisfied:
                return
            if bound == best.satisfied:
                target = t.theta_sorted[best.satisfied - 1] if best.satisfied else -math.inf
                r = t.messages_needed(e, k, target - gain, cost)
                if r is None or used + r > best.messages:
                    return
                if used + r == best.messages and cost + t.cheapest(e, r) - BUDGET_TOL >= best.cost:
                    return

        path.append(0)
        visit(p + 1, gain, used, cost, next_free)
        path.pop()
        if t.can_send(p, next_free, used, cost):
            for j in range(t.m, 0, -1):
                g = float(t.gains[p, j - 1])
                # a message that does not raise G is dominated by skipping it
                if g <= 0:
                    continue
                path.append(j)
                visit(p + 1, gain + g, used + 1, cost + float(t.costs[p]), p + t.spacing)
                path.pop()

    visit(0, 0.0, 0, 0.0, t.first_free)
    logger.debug("B&B finished: %d nodes, satisfied=%d/%d", nodes, best.satisfied, problem.reduced.n_scenarios)
    return _build_solution(problem, best.decisions, nodes)


def _max_gain(t: _SearchTables) -> tuple[float, int]:
    """Largest reachable G(u); only the best type per step can matter."""
    best_gain = 0.0
    nodes = 0

    def visit(p: int, gain: float, used: int, cost: float, next_free: int) -> None:
        nonlocal nodes, best_gain
        nodes += 1
        if gain > best_gain:
            best_gain = gain
        if p == t.L:
            return
        e, k = t.capacity(p, next_free, used)
        if gain + t.optimistic_gain(e, k, cost) <= best_gain - BOUND_TOL:
            return
        g = t.best_gain[p]
        if g > 0 and t.can_send(p, next_free, used, cost):
            visit(p + 1, gain + g, used + 1, cost + float(t.costs[p]), p + t.spacing)
        visit(p + 1, gain, used, cost, next_free)

    visit(0, 0.0, 0, 0.0, t.first_free)
    return best_gain, nodes


def solve_shared_gain_fast_path(problem: MilpProblem) -> Solution:
    """Maximize G(u) first, then find the least-burden schedule reaching the same count.

    The satisfied count is nondecreasing in G(u) because every scenario shares
    the same gains, so the best count is the count at max G(u).
    """
    _check_problem(problem)
    t = _SearchTables(problem)
    top, nodes = _max_gain(t)
    target_count = t.count(top)
    if target_count == 0 or t.theta_sorted[target_count - 1] <= 0.0:
        logger.debug("Fast path: empty schedule already attains %d satisfied", target_count)
        return _build_solution(problem, (0,) * t.L, nodes)
    target = t.theta_sorted[target_count - 1]

    best = _Incumbent(satisfied=target_count, messages=t.L + 1, cost=math.inf)
    path: List[int] = []

    def visit(p: int, gain: float, used: int, cost: float, next_free: int) -> None:
        nonlocal nodes, best
        nodes += 1
        if p == t.L:
            if gain >= target and best.improved_by(target_count, used, cost):
                best = _Incumbent(target_count, used, cost, tuple(path))
                logger.debug("Fast path incumbent: messages=%d cost=%.4f", used, cost)
            return
        e, k = t.capacity(p, next_free, used)
        r = t.messages_needed(e, k, target - gain, cost)
        if r is None or used + r > best.messages:
            return
        if used + r == best.messages and cost + t.cheapest(e, r) - BUDGET_TOL >= best.cost:
            return

        path.append(0)
        visit(p + 1, gain, used, cost, next_free)
        path.pop()
        if t.can_send(p, next_free, used, cost):
            for j in range(t.m, 0, -1):
                g = float(t.gains[p, j - 1])
                if g <= 0:
                    continue
                path.append(j)
                visit(p + 1, gain + g, used + 1, cost + float(t.costs[p]), p + t.spacing)
                path.pop()

    visit(0, 0.0, 0, 0.0, t.first_free)
    if not best.decisions and t.L:
        raise SolverGuardError("fast path lost the maximizing schedule")
    logger.debug("Fast path finished: %d nodes, satisfied=%d", nodes, target_count)
    return _build_solution(problem, best.decisions, nodes)


def brute_force_oracle(problem: MilpProblem) -> Solution:
    """Exhaustive enumeration of feasible schedules (testing oracle)."""
    _check_problem(problem)
    t = _SearchTables(problem)
    if (t.m + 1) ** t.L > BRUTE_FORCE_LIMIT:
        raise SolverGuardError(f"{(t.m + 1) ** t.L} candidate schedules exceed the oracle limit {BRUTE_FORCE_LIMIT}")

    best = _Incumbent()
    candidates = 0
    path: List[int] = []

    def visit(p: int, gain: float, used: int, cost: float, next_free: int) -> None:
        nonlocal candidates, best
        if p == t.L:
            candidates += 1
            sat = t.count(gain)
            if best.improved_by(sat, used, cost):
                best = _Incumbent(sat, used, cost, tuple(path))
            return
        path.append(0)
        visit(p + 1, gain, used, cost, next_free)
        path.pop()
        if t.can_send(p, next_free, used, cost):
            for j in range(t.m, 0, -1):
                path.append(j)
                visit(p + 1, gain + float(t.gains[p, j - 1]), used + 1, cost + float(t.costs[p]), p + t.spacing)
                path.pop()

    visit(0, 0.0, 0, 0.0, t.first_free)
    return _build_solution(problem, best.decisions, candidates)


SOLVERS: Dict[str, Callable[[MilpProblem], Solution]] = {
    "fast": solve_shared_gain_fast_path,
    "branch_and_bound": solve_branch_and_bound,
    "brute_force": brute_force_oracle,
}


def solve(problem: MilpProblem, method: str = "fast") -> Solution:
    try:
        solver = SOLVERS[method]
    except KeyError:
        raise ValueError(f"unknown solver '{method}', expected one of {sorted(SOLVERS)}") from None
    return solver(problem)
