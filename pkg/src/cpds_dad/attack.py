"""Defense and attack plans, and the success probability of each attack.

Physical attacks follow search theory: an attack on a line is detected
and deterred with a probability that decays exponentially in the line
length over the inspection intensity. Cyber attacks succeed when the FBS
captures a switch and any deployed protection fails.

>>> round(physical_success_prob(1.0, True, True, InspectionParams(1.0, 5.0, 0.9)), 4)
0.1813
>>> count_attack_plans(3, 2, 1, include_no_fbs=False)
6
"""

from __future__ import annotations

import math
from collections.abc import Iterator, Sequence
from dataclasses import dataclass
from itertools import combinations
from typing import Optional, Union

from ._utils import CPDSError, Point, fmt_ids
from .network import Line, Network, grid_positions


########################################################################
# DOMAIN TYPES


@dataclass(frozen=True)
class DefensePlan:
    hardened_lines: frozenset[str] = frozenset()
    protected_rcs: frozenset[str] = frozenset()

    @classmethod
    def of(cls, lines: Sequence[str] = (), rcs: Sequence[str] = ()) -> DefensePlan:
        return cls(frozenset(lines), frozenset(rcs))

    def __str__(self) -> str:
        lines, rcs = fmt_ids(self.hardened_lines), fmt_ids(self.protected_rcs)
        return f"harden={lines} protect={rcs}"


@dataclass(frozen=True)
class AttackPlan:
    attacked_lines: frozenset[str] = frozenset()
    fbs_position: Optional[Point] = None

    @classmethod
    def of(cls, lines: Sequence[str] = (), fbs: Optional[Point] = None) -> AttackPlan:
        return cls(frozenset(lines), fbs)

    def __str__(self) -> str:
        if self.fbs_position is None:
            fbs = "-"
        else:
            fbs = f"({self.fbs_position[0]:g},{self.fbs_position[1]:g})"
        return f"attack={fmt_ids(self.attacked_lines)} fbs={fbs}"


@dataclass(frozen=True)
class InspectionParams:
    zeta_a: float = 1.0  # km, normal inspection
    zeta_b: float = 5.0  # km, enhanced inspection
    p_defend: float = 0.9

    def __post_init__(self):
        if not (self.zeta_a > 0 and self.zeta_b > 0):
            raise CPDSError("inspection intensities must be positive")
        if not self.zeta_b > self.zeta_a:
            raise CPDSError(
                "enhanced inspection needs zeta_b > zeta_a,"
                f" got zeta_a={self.zeta_a}, zeta_b={self.zeta_b}"
            )
        if not 0 <= self.p_defend <= 1:
            raise CPDSError(f"p_defend must be a probability, got {self.p_defend}")


@dataclass(frozen=True)
class Budgets:
    defend_lines: int = 0  # N_d,p
    defend_rcs: int = 0  # N_d,c
    attack_lines: int = 0  # N_a,p

    def __post_init__(self):
        if min(self.defend_lines, self.defend_rcs, self.attack_lines) < 0:
            raise CPDSError(f"budgets must be non-negative: {self}")


########################################################################
# SUCCESS PROBABILITIES


def detection_probs(
    line: Union[Line, float], params: InspectionParams
) -> tuple[float, float]:
    """Detection probabilities `(p_a, p_b)` under normal and enhanced inspection.

    `line` may be a `Line` or a length in km.
    """
    length = line.length if isinstance(line, Line) else float(line)
    return math.exp(-length / params.zeta_a), math.exp(-length / params.zeta_b)


def physical_success_prob(
    line: Union[Line, float], attacked: bool, hardened: bool, params: InspectionParams
) -> float:
    if not attacked:
        return 0.0
    p_a, p_b = detection_probs(line, params)
    d = 1.0 if hardened else 0.0
    return 1 - (p_a - d * (p_a - p_b))


def cyber_success_prob(
    p_capture: float, protected: bool, params: InspectionParams
) -> float:
    if not 0 <= p_capture <= 1:
        raise CPDSError(f"capture probability out of range: {p_capture}")
    d = 1.0 if protected else 0.0
    return p_capture * (1 - d * params.p_defend)


########################################################################
# PLAN ENUMERATION


def _line_subsets(line_ids: Sequence[str], budget: int) -> Iterator[tuple[str, ...]]:
    for size in range(1, min(budget, len(line_ids)) + 1):
        yield from combinations(line_ids, size)


def count_attack_plans(
    n_lines: int, budget: int, n_grid: int, include_no_fbs: bool
) -> int:
    if budget == 0:
        return 1
    n_subsets = sum(math.comb(n_lines, k) for k in range(1, min(budget, n_lines) + 1))
    return n_subsets * (n_grid + int(include_no_fbs))


def enumerate_attack_plans(
    network: Network,
    budget: int,
    include_no_fbs: bool = True,
    positions: Optional[Sequence[Point]] = None,
) -> Iterator[AttackPlan]:
    """Yield every attack plan in a fixed order.

    Line subsets go by size, then in network line order. Each subset is
    paired with every grid position, then with no FBS when
    `include_no_fbs` is set. A zero budget yields only the empty plan.
    """
    if budget < 0:
        raise CPDSError(f"attack budget must be non-negative, got {budget}")
    if budget == 0:
        yield AttackPlan()
        return
    if positions is None:
        positions = grid_positions(network)
    fbs_options: list[Optional[Point]] = list(positions)
    if include_no_fbs:
        fbs_options.append(None)
    for subset in _line_subsets([line.id for line in network.lines], budget):
        for fbs in fbs_options:
            yield AttackPlan(frozenset(subset), fbs)


def enumerate_defense_plans(
    network: Network, budgets: Budgets
) -> Iterator[DefensePlan]:
    """Yield every defense plan that fits the budgets, smallest first."""
    line_ids = [line.id for line in network.lines]
    rcs_ids = network.rcs_ids
    line_sets = [
        subset
        for size in range(min(budgets.defend_lines, len(line_ids)) + 1)
        for subset in combinations(line_ids, size)
    ]
    rcs_sets = [
        subset
        for size in range(min(budgets.defend_rcs, len(rcs_ids)) + 1)
        for subset in combinations(rcs_ids, size)
    ]
    for lines in line_sets:
        for rcs in rcs_sets:
            yield DefensePlan(frozenset(lines), frozenset(rcs))


def plan_feasible(
    plan: Union[DefensePlan, AttackPlan],
    budgets: Budgets,
    positions: Optional[Sequence[Point]] = None,
) -> bool:
    if isinstance(plan, DefensePlan):
        return (
            len(plan.hardened_lines) <= budgets.defend_lines
            and len(plan.protected_rcs) <= budgets.defend_rcs
        )
    if len(plan.attacked_lines) > budgets.attack_lines:
        return False
    if positions is not None and plan.fbs_position is not None:
        return plan.fbs_position in positions
    return True
