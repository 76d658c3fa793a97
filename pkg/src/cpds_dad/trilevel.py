"""Defender-attacker-defender game solved by column-and-constraint generation.

The defender picks lines to harden and switches to protect, the attacker
answers with the attack that minimizes expected resilience, and the
operator restores optimally in every outcome. The subproblem finds the
worst attack for a fixed defense by enumeration. The master problem
picks the defense that maximizes the worst expected resilience over the
attacks found so far.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Iterator, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import islice
from typing import Optional

from ._utils import Point, ScenarioCapError, vprint
from .attack import (
    AttackPlan,
    Budgets,
    DefensePlan,
    enumerate_attack_plans,
    enumerate_defense_plans,
)
from .milp import Constraint, Model, SolverError, SolverOptions, Status, solve
from .network import grid_positions
from .scenarios import ScenarioEngine, TargetKind

logger = logging.getLogger(__name__)

MONOMIAL_CAP = 1 << 12
TIE_BREAK_WEIGHT = 1e-9
SP_CHUNK = 64


########################################################################
# DOMAIN TYPES


@dataclass(frozen=True)
class IterationRecord:
    k: int
    upper_bound: float
    lower_bound: float
    attack: AttackPlan


@dataclass
class GameSolution:
    defense: DefensePlan
    worst_attack: AttackPlan
    value: float
    trace: list[IterationRecord] = field(default_factory=list)
    converged: bool = False


DefenseVar = tuple[TargetKind, str]


@dataclass
class MasterScenarioBlock:
    """One attack's contribution to the master problem.

    `coefficients` maps a bitmask over `variables` to the coefficient of
    the product of those defense binaries in the expected resilience.
    `values[mask]` is the expected resilience when exactly the
    variables in `mask` are defended.
    """

    attack: AttackPlan
    variables: list[DefenseVar]
    values: list[float]
    coefficients: dict[int, float]

    def linearized_value(self, defense: DefensePlan) -> float:
        mask = _defense_mask(self.variables, defense)
        return sum(c for m, c in self.coefficients.items() if m & mask == m)


def _defense_mask(variables: Sequence[DefenseVar], defense: DefensePlan) -> int:
    mask = 0
    for k, (kind, ident) in enumerate(variables):
        if kind is TargetKind.line:
            chosen = defense.hardened_lines
        else:
            chosen = defense.protected_rcs
        if ident in chosen:
            mask |= 1 << k
    return mask


def _plan_for_mask(variables: Sequence[DefenseVar], mask: int) -> DefensePlan:
    chosen = [
        (kind, ident) for k, (kind, ident) in enumerate(variables) if mask >> k & 1
    ]
    lines = [ident for kind, ident in chosen if kind is TargetKind.line]
    rcs = [ident for kind, ident in chosen if kind is TargetKind.rcs]
    return DefensePlan.of(lines, rcs)


########################################################################
# SUBPROBLEM


def _chunks(iterable, size: int) -> Iterator[list]:
    it = iter(iterable)
    while chunk := list(islice(it, size)):
        yield chunk


def solve_subproblem(
    engine: ScenarioEngine,
    defense: DefensePlan,
    budgets: Budgets,
    positions: Optional[Sequence[Point]] = None,
    include_no_fbs: bool = True,
) -> tuple[AttackPlan, float]:
    """Worst attack against `defense`, by enumeration.

    Ties go to the first plan in enumeration order.
    """
    if positions is None:
        positions = grid_positions(engine.network)
    plans = enumerate_attack_plans(
        engine.network, budgets.attack_lines, include_no_fbs, positions
    )

    def value(plan: AttackPlan) -> float:
        return engine.evaluate(defense, plan, parallel=False).value

    best: Optional[tuple[AttackPlan, float]] = None
    pool = ThreadPoolExecutor(engine.threads) if engine.threads > 1 else None
    try:
        for chunk in _chunks(plans, SP_CHUNK):
            values = list(pool.map(value, chunk)) if pool else [value(p) for p in chunk]
            for plan, v in zip(chunk, values):
                if best is None or v < best[1]:
                    best = (plan, v)
    finally:
        if pool is not None:
            pool.shutdown()
    assert best is not None
    return best


########################################################################
# MASTER PROBLEM


def linearize_product(
    model: Model, binaries: Sequence[int], name: str
) -> tuple[int, list[Constraint]]:
    """Continuous stand-in for the product of `binaries`.

    Adds f <= b_i for each i and f >= sum(b) - (n - 1), with f in [0, 1].
    A single binary is its own product.
    """
    if not binaries:
        raise ValueError("need at least one binary")
    if len(binaries) == 1:
        return binaries[0], []
    start = len(model.constrs)
    f = model.add_var(name, lb=0.0, ub=1.0)
    for k, b in enumerate(binaries):
        model.add_constr({f: 1.0, b: -1.0}, "<=", 0.0, name=f"{name}_ub{k}")
    model.add_constr(
        {f: 1.0, **{b: -1.0 for b in binaries}},
        ">=",
        -(len(binaries) - 1),
        name=f"{name}_lb",
    )
    return f, model.constrs[start:]


def _mobius(values: list[float], n_vars: int) -> list[float]:
    coefs = list(values)
    for k in range(n_vars):
        bit = 1 << k
        for mask in range(len(coefs)):
            if mask & bit:
                coefs[mask] -= coefs[mask ^ bit]
    return coefs


def block_for_attack(
    engine: ScenarioEngine, attack: AttackPlan, budgets: Budgets
) -> MasterScenarioBlock:
    """Expected resilience under `attack` as a polynomial in the defense.

    Only targets the defender can act on get a variable: attacked lines
    when lines can be hardened, and switches the FBS can reach when
    switches can be protected. The polynomial is fixed by its values on
    every subset of those variables.

    Raises:
        ScenarioCapError: If the block would need more than 4096
            monomials.
    """
    variables: list[DefenseVar] = []
    if budgets.defend_lines > 0:
        variables += [
            (TargetKind.line, line.id)
            for line in engine.network.lines
            if line.id in attack.attacked_lines
        ]
    if budgets.defend_rcs > 0:
        kept, _ = engine.cyber_targets(attack)
        variables += [(TargetKind.rcs, rcs) for rcs, _ in kept]
    if (1 << len(variables)) > MONOMIAL_CAP:
        raise ScenarioCapError(
            f"master block for {attack} needs 2^{len(variables)} monomials;"
            " tighten the truncation (raise eps_p or lower k_max)"
        )
    values = [
        engine.evaluate(_plan_for_mask(variables, mask), attack).value
        for mask in range(1 << len(variables))
    ]
    coefs = _mobius(values, len(variables))
    coefficients = {m: c for m, c in enumerate(coefs) if m == 0 or abs(c) > 1e-15}
    return MasterScenarioBlock(attack, variables, values, coefficients)


@dataclass
class MasterModel:
    model: Model
    eta: int
    line_vars: dict[str, int]
    rcs_vars: dict[str, int]


def build_master(
    engine: ScenarioEngine, blocks: Sequence[MasterScenarioBlock], budgets: Budgets
) -> MasterModel:
    if not blocks:
        raise ValueError("master problem needs at least one block")
    network = engine.network
    model = Model("master")
    line_vars = {
        line.id: model.add_var(f"Dp[{line.id}]", binary=True) for line in network.lines
    }
    rcs_vars = {
        rcs: model.add_var(f"Dc[{rcs}]", binary=True) for rcs in network.rcs_ids
    }
    eta = model.add_var("eta", lb=0.0, ub=1.0)
    model.add_constr(
        {v: 1.0 for v in line_vars.values()},
        "<=",
        budgets.defend_lines,
        name="budget_lines",
    )
    model.add_constr(
        {v: 1.0 for v in rcs_vars.values()}, "<=", budgets.defend_rcs, name="budget_rcs"
    )

    products: dict[frozenset[int], int] = {}
    for n, block in enumerate(blocks):
        binaries = [
            line_vars[ident] if kind is TargetKind.line else rcs_vars[ident]
            for kind, ident in block.variables
        ]
        terms: dict[int, float] = {eta: 1.0}
        for mask, coef in block.coefficients.items():
            if mask == 0:
                continue
            members = [binaries[k] for k in range(len(binaries)) if mask >> k & 1]
            key = frozenset(members)
            if key not in products:
                name = f"f{len(products)}"
                products[key], _ = linearize_product(model, sorted(members), name)
            aux = products[key]
            terms[aux] = terms.get(aux, 0.0) - coef
        # eta is bounded by every attack's expected resilience.
        model.add_constr(terms, "<=", block.coefficients.get(0, 0.0), name=f"block{n}")

    objective = {eta: 1.0}
    for k, var in enumerate([*line_vars.values(), *rcs_vars.values()]):
        objective[var] = -TIE_BREAK_WEIGHT * (k + 1)
    model.set_objective(objective, minimize=False)
    return MasterModel(model, eta, line_vars, rcs_vars)


def solve_master(
    engine: ScenarioEngine, blocks: Sequence[MasterScenarioBlock], budgets: Budgets
) -> tuple[DefensePlan, float]:
    master = build_master(engine, blocks, budgets)
    sol = solve(master.model, engine.solver)
    if sol.status is not Status.optimal:
        raise SolverError(f"master problem not solved: {sol.status.value}")
    defense = DefensePlan.of(
        [lid for lid, v in master.line_vars.items() if sol.x[v] > 0.5],
        [rcs for rcs, v in master.rcs_vars.items() if sol.x[v] > 0.5],
    )
    return defense, float(sol.x[master.eta])


########################################################################
# C&CG LOOP


def solve_ccg(
    engine: ScenarioEngine,
    budgets: Budgets,
    eps: float = 1e-4,
    max_iter: int = 50,
    positions: Optional[Sequence[Point]] = None,
) -> GameSolution:
    """Solve the defender-attacker-defender game.

    Each iteration finds the worst attack on the current defense, which
    can only raise the lower bound, then adds that attack to the master
    problem, which can only lower the upper bound. Stops when the bounds
    meet within `eps`, when an attack repeats, or after `max_iter`
    iterations (with `converged` False).
    """
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    if positions is None:
        positions = grid_positions(engine.network)

    defense = DefensePlan()
    lower, upper = -math.inf, math.inf
    best: Optional[tuple[DefensePlan, AttackPlan]] = None
    blocks: list[MasterScenarioBlock] = []
    seen: set[AttackPlan] = set()
    trace: list[IterationRecord] = []
    converged = False

    for k in range(1, max_iter + 1):
        attack, value = solve_subproblem(engine, defense, budgets, positions)
        if value > lower:
            lower, best = value, (defense, attack)
        if attack in seen or upper - lower <= eps:
            trace.append(IterationRecord(k, upper, lower, attack))
            converged = True
            break
        seen.add(attack)
        blocks.append(block_for_attack(engine, attack, budgets))
        defense, upper = solve_master(engine, blocks, budgets)
        trace.append(IterationRecord(k, upper, lower, attack))
        vprint(f"+ CCG k={k} UB={upper:.6f} LB={lower:.6f} {attack}")
        logger.debug("iteration %d: UB %.9f LB %.9f next %s", k, upper, lower, defense)
        if upper - lower <= eps:
            converged = True
            break

    assert best is not None
    return GameSolution(best[0], best[1], lower, trace, converged)


def exhaustive_defense(
    engine: ScenarioEngine,
    budgets: Budgets,
    positions: Optional[Sequence[Point]] = None,
) -> tuple[DefensePlan, AttackPlan, float]:
    """Max-min value by trying every feasible defense."""
    if positions is None:
        positions = grid_positions(engine.network)
    best: Optional[tuple[DefensePlan, AttackPlan, float]] = None
    for defense in enumerate_defense_plans(engine.network, budgets):
        attack, value = solve_subproblem(engine, defense, budgets, positions)
        if best is None or value > best[2]:
            best = (defense, attack, value)
    assert best is not None
    return best
