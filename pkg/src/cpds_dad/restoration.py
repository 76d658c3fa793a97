"""Two-stage service restoration for one outcome scenario.

After an attack, operators restore service in two stages. In stage 1 the
switches whose remote control was hijacked keep their pre-event state.
In stage 2 control is back and every switch can be operated. Faulted
lines stay faulted until repair completes at the end of stage 2. Each
stage is a mixed-integer program minimizing weighted load shed subject
to radiality, fault isolation and linearized (LinDistFlow) power flow.
"""

from __future__ import annotations

import logging
import math
import threading
from collections.abc import Callable, Hashable
from dataclasses import dataclass, field
from typing import Optional

import networkx as nx
import numpy as np
from scipy.optimize import linprog

from ._utils import CPDSError, ScenarioCapError, fmt_ids
from .milp import Model, SolverError, SolverOptions, Status, solve
from .network import Network, TimeParams, feeders, total_weighted_load

logger = logging.getLogger(__name__)

# Weighted loss is minimized in kW. Absolute solver gaps must stay far
# below the 1e-6 MW reporting tolerance.
OBJECTIVE_SCALE = 1e3
# Per switch operation, in kW. Keeps optimal topologies free of loops
# inside the fault area, where closing a line costs nothing.
SWITCH_PENALTY = 1e-5
SQRT2_M1 = math.sqrt(2) - 1
# Octagon approximating |p + jq| <= s_max.
CAPACITY_FACES = [(SQRT2_M1, 1.0), (SQRT2_M1, -1.0), (1.0, SQRT2_M1), (1.0, -SQRT2_M1)]
BRUTE_FORCE_CAP = 15


########################################################################
# DOMAIN TYPES


@dataclass(frozen=True)
class OutcomeScenario:
    faulted_lines: frozenset[str] = frozenset()
    hijacked_rcs: frozenset[str] = frozenset()

    @classmethod
    def of(cls, faulted=(), hijacked=()) -> OutcomeScenario:
        return cls(frozenset(faulted), frozenset(hijacked))

    @property
    def key(self) -> tuple[frozenset[str], frozenset[str]]:
        return (self.faulted_lines, self.hijacked_rcs)

    def __str__(self) -> str:
        faults, hijacks = fmt_ids(self.faulted_lines), fmt_ids(self.hijacked_rcs)
        return f"faults={faults} hijacks={hijacks}"


@dataclass
class StageSolution:
    stage: int
    loss: float  # weighted MW
    closed: dict[str, bool]
    fault_area: dict[str, bool]
    p_shed: dict[str, float]
    q_shed: dict[str, float] = field(default_factory=dict)
    vflow: dict[tuple[str, str], bool] = field(default_factory=dict)
    dg_root: dict[str, bool] = field(default_factory=dict)
    p_flow: dict[str, float] = field(default_factory=dict)
    q_flow: dict[str, float] = field(default_factory=dict)
    u_sq: dict[str, float] = field(default_factory=dict)
    p_gen: dict[str, float] = field(default_factory=dict)
    q_gen: dict[str, float] = field(default_factory=dict)


@dataclass
class RestorationResult:
    stage0_loss: float
    stage1_loss: float
    stage2_loss: float
    resilience: float
    stage_solutions: tuple[StageSolution, StageSolution]

    @property
    def losses(self) -> tuple[float, float, float]:
        return (self.stage0_loss, self.stage1_loss, self.stage2_loss)


########################################################################
# SCALAR HELPERS


def resilience_of(
    stage0_loss: float,
    stage1_loss: float,
    stage2_loss: float,
    times: TimeParams,
    total_weighted_load: float,
) -> float:
    """Share of weighted energy served over the restoration horizon."""
    if not total_weighted_load > 0:
        raise CPDSError("resilience needs a positive total weighted load")
    lost = (
        (times.t_r1 - times.t_fault) * stage0_loss
        + (times.t_r2 - times.t_r1) * stage1_loss
        + (times.t_r3 - times.t_r2) * stage2_loss
    )
    return 1 - lost / ((times.t_r3 - times.t_fault) * total_weighted_load)


def stage0_loss(
    network: Network, scenario: OutcomeScenario, mode: str = "network"
) -> float:
    """Weighted load lost at the instant of the fault.

    In "network" mode any fault blacks out every load. In "feeder" mode
    only the feeders touched by a faulted line lose their load.
    """
    if not scenario.faulted_lines:
        return 0.0
    if mode == "network":
        return total_weighted_load(network)
    if mode != "feeder":
        raise CPDSError(f"unknown stage0 mode '{mode}'")
    feeder_of = feeders(network)
    hit = set()
    for line_id in scenario.faulted_lines:
        line = network.line_by_id[line_id]
        hit.add(feeder_of[line.from_node])
        hit.add(feeder_of[line.to_node])
    return sum(
        node.weight * node.p_load for node in network.nodes if feeder_of[node.id] in hit
    )


def big_m(network: Network) -> float:
    u_span = max(n.u_max for n in network.nodes) - min(n.u_min for n in network.nodes)
    max_rx = max((line.r + line.x for line in network.lines), default=0.0)
    s_total = sum(line.s_max for line in network.lines)
    return max(
        float(len(network.nodes)), u_span + 2 * max_rx * s_total / network.base_mva
    )


def forced_states(network: Network, scenario: OutcomeScenario) -> dict[str, bool]:
    """Stage-1 switch states pinned by hijacked switches.

    A hijacked sectionalizing switch stays closed; a hijacked tie switch
    stays open.
    """
    forced = {}
    for rcs_id in scenario.hijacked_rcs:
        line = network.line_by_rcs[rcs_id]
        forced[line.id] = not line.is_tie
    return forced


def _q_shed_bounds(q_load: float) -> tuple[float, float]:
    return (min(0.0, q_load), max(0.0, q_load))


########################################################################
# STAGE MODELS


@dataclass
class StageModel:
    network: Network
    scenario: OutcomeScenario
    stage: int
    model: Model
    c: dict[str, int] = field(default_factory=dict)
    x: dict[tuple[str, str], int] = field(default_factory=dict)
    lam: dict[str, int] = field(default_factory=dict)
    alpha: dict[str, int] = field(default_factory=dict)
    p: dict[str, int] = field(default_factory=dict)
    q: dict[str, int] = field(default_factory=dict)
    u: dict[str, int] = field(default_factory=dict)
    pg: dict[str, int] = field(default_factory=dict)
    qg: dict[str, int] = field(default_factory=dict)
    ps: dict[str, int] = field(default_factory=dict)
    qs: dict[str, int] = field(default_factory=dict)


def _build_stage_model(
    network: Network, scenario: OutcomeScenario, stage: int
) -> StageModel:
    model = Model(f"stage{stage} {scenario}")
    sm = StageModel(network, scenario, stage, model)
    bigm = big_m(network)
    n_nodes = len(network.nodes)
    forced = forced_states(network, scenario) if stage == 1 else {}
    commodity: dict[str, int] = {}
    supply: dict[str, int] = {}

    for line in network.lines:
        lid = line.id
        sm.c[lid] = model.add_var(f"c[{lid}]", binary=True)
        if lid in forced:
            model.fix(sm.c[lid], 1.0 if forced[lid] else 0.0)
        fwd = (line.from_node, line.to_node)
        rev = (line.to_node, line.from_node)
        sm.x[fwd] = model.add_var(f"X[{lid}+]", binary=True)
        sm.x[rev] = model.add_var(f"X[{lid}-]", binary=True)
        sm.p[lid] = model.add_var(f"P[{lid}]", lb=-line.s_max, ub=line.s_max)
        sm.q[lid] = model.add_var(f"Q[{lid}]", lb=-line.s_max, ub=line.s_max)
        commodity[lid] = model.add_var(f"F[{lid}]", lb=-n_nodes, ub=n_nodes)

    for node in network.nodes:
        j = node.id
        sm.lam[j] = model.add_var(f"lambda[{j}]", binary=True)
        sm.alpha[j] = model.add_var(f"alpha[{j}]", binary=True)
        if not node.is_dg:
            model.fix(sm.alpha[j], 0.0)
        sm.u[j] = model.add_var(f"U[{j}]", lb=node.u_min, ub=node.u_max)
        sm.pg[j] = model.add_var(f"PG[{j}]", ub=node.pg_max)
        sm.qg[j] = model.add_var(f"QG[{j}]", ub=node.qg_max)
        sm.ps[j] = model.add_var(f"PS[{j}]", ub=node.p_load)
        sm.qs[j] = model.add_var(f"QS[{j}]", *_q_shed_bounds(node.q_load))
        supply[j] = model.add_var(f"R[{j}]", ub=n_nodes if node.is_source else 0.0)

    incoming: dict[str, dict[int, float]] = {n.id: {} for n in network.nodes}
    p_net: dict[str, dict[int, float]] = {n.id: {} for n in network.nodes}
    q_net: dict[str, dict[int, float]] = {n.id: {} for n in network.nodes}
    f_net: dict[str, dict[int, float]] = {n.id: {} for n in network.nodes}
    fault_count = {n.id: 0 for n in network.nodes}
    fault_closed: dict[str, dict[int, float]] = {n.id: {} for n in network.nodes}
    for line in network.lines:
        i, j, lid = line.from_node, line.to_node, line.id
        incoming[j][sm.x[(i, j)]] = 1.0
        incoming[i][sm.x[(j, i)]] = 1.0
        p_net[i][sm.p[lid]] = 1.0
        p_net[j][sm.p[lid]] = -1.0
        q_net[i][sm.q[lid]] = 1.0
        q_net[j][sm.q[lid]] = -1.0
        f_net[i][commodity[lid]] = -1.0
        f_net[j][commodity[lid]] = 1.0
        if lid in scenario.faulted_lines:
            fault_count[j] += 1
            fault_closed[i][sm.c[lid]] = -1.0

    for node in network.nodes:
        j = node.id
        g = 1.0 if node.is_substation else 0.0
        lam, alpha = sm.lam[j], sm.alpha[j]
        # Radial virtual flow: one inflow per node unless root or faulted.
        model.add_constr(
            {**incoming[j], alpha: 1.0, lam: -bigm}, "<=", 1 - g, name=f"radial_ub[{j}]"
        )
        model.add_constr(
            {**incoming[j], alpha: 1.0, lam: bigm}, ">=", 1 - g, name=f"radial_lb[{j}]"
        )
        model.add_constr(
            {lam: bigm, **fault_closed[j]}, ">=", fault_count[j], name=f"fault[{j}]"
        )
        model.add_constr(
            {**p_net[j], sm.pg[j]: -1.0, sm.ps[j]: -1.0},
            "=",
            -node.p_load,
            name=f"pbal[{j}]",
        )
        model.add_constr(
            {**q_net[j], sm.qg[j]: -1.0, sm.qs[j]: -1.0},
            "=",
            -node.q_load,
            name=f"qbal[{j}]",
        )
        model.add_constr(
            {sm.ps[j]: 1.0, lam: -node.p_load}, ">=", 0.0, name=f"pshed[{j}]"
        )
        model.add_constr(
            {sm.qs[j]: 1.0, lam: -node.q_load},
            ">=" if node.q_load >= 0 else "<=",
            0.0,
            name=f"qshed[{j}]",
        )
        # Every energized node draws one unit of commodity from a root,
        # which rules out rootless loops.
        model.add_constr(
            {**f_net[j], supply[j]: 1.0, lam: 1.0}, "=", 1.0, name=f"commodity[{j}]"
        )
        if node.is_dg:
            model.add_constr(
                {supply[j]: 1.0, alpha: -n_nodes}, "<=", 0.0, name=f"root[{j}]"
            )

    for line in network.lines:
        i, j, lid = line.from_node, line.to_node, line.id
        c = sm.c[lid]
        model.add_constr(
            {sm.x[(i, j)]: 1.0, sm.x[(j, i)]: 1.0, c: -1.0},
            "=",
            0.0,
            name=f"dir[{lid}]",
        )
        model.add_constr(
            {sm.lam[i]: 1.0, sm.lam[j]: -1.0, c: 1.0}, "<=", 1.0, name=f"lam_ij[{lid}]"
        )
        model.add_constr(
            {sm.lam[j]: 1.0, sm.lam[i]: -1.0, c: 1.0}, "<=", 1.0, name=f"lam_ji[{lid}]"
        )
        drop = {
            sm.u[i]: 1.0,
            sm.u[j]: -1.0,
            sm.p[lid]: -2 * line.r / network.base_mva,
            sm.q[lid]: -2 * line.x / network.base_mva,
        }
        model.add_constr({**drop, c: bigm}, "<=", bigm, name=f"vdrop_ub[{lid}]")
        model.add_constr({**drop, c: -bigm}, ">=", -bigm, name=f"vdrop_lb[{lid}]")
        for k, (kp, kq) in enumerate(CAPACITY_FACES):
            face = {sm.p[lid]: kp, sm.q[lid]: kq}
            model.add_constr(
                {**face, c: -line.s_max}, "<=", 0.0, name=f"cap{k}_ub[{lid}]"
            )
            model.add_constr(
                {**face, c: line.s_max}, ">=", 0.0, name=f"cap{k}_lb[{lid}]"
            )
        model.add_constr(
            {commodity[lid]: 1.0, c: -n_nodes}, "<=", 0.0, name=f"fcap_ub[{lid}]"
        )
        model.add_constr(
            {commodity[lid]: 1.0, c: n_nodes}, ">=", 0.0, name=f"fcap_lb[{lid}]"
        )

    objective = {sm.ps[n.id]: OBJECTIVE_SCALE * n.weight for n in network.nodes}
    constant = 0.0
    for line in network.lines:
        if line.base_closed:
            objective[sm.c[line.id]] = -SWITCH_PENALTY
            constant += SWITCH_PENALTY
        else:
            objective[sm.c[line.id]] = SWITCH_PENALTY
    model.set_objective(objective, minimize=True, constant=constant)
    logger.debug("built %s", model.summary())
    return sm


def build_stage1_model(network: Network, scenario: OutcomeScenario) -> StageModel:
    return _build_stage_model(network, scenario, 1)


def build_stage2_model(network: Network, scenario: OutcomeScenario) -> StageModel:
    return _build_stage_model(network, scenario, 2)


def _stage_solution(sm: StageModel, x: np.ndarray) -> StageSolution:
    def flag(idx: int) -> bool:
        return bool(x[idx] > 0.5)

    p_shed = {j: float(x[i]) for j, i in sm.ps.items()}
    loss = sum(n.weight * p_shed[n.id] for n in sm.network.nodes)
    return StageSolution(
        stage=sm.stage,
        loss=loss,
        closed={lid: flag(i) for lid, i in sm.c.items()},
        fault_area={j: flag(i) for j, i in sm.lam.items()},
        p_shed=p_shed,
        q_shed={j: float(x[i]) for j, i in sm.qs.items()},
        vflow={arc: flag(i) for arc, i in sm.x.items()},
        dg_root={j: flag(i) for j, i in sm.alpha.items()},
        p_flow={lid: float(x[i]) for lid, i in sm.p.items()},
        q_flow={lid: float(x[i]) for lid, i in sm.q.items()},
        u_sq={j: float(x[i]) for j, i in sm.u.items()},
        p_gen={j: float(x[i]) for j, i in sm.pg.items()},
        q_gen={j: float(x[i]) for j, i in sm.qg.items()},
    )


def solve_stage(sm: StageModel, opts: Optional[SolverOptions] = None) -> StageSolution:
    """Solve a stage model to global optimality.

    Raises:
        SolverError: If the model is infeasible, or the time limit hits
            before optimality (the message carries the incumbent loss).
    """
    sol = solve(sm.model, opts)
    if sol.status is Status.infeasible:
        raise SolverError(
            f"stage {sm.stage} model infeasible for scenario {sm.scenario}"
        )
    result = _stage_solution(sm, sol.x)
    if sol.status is Status.limit:
        raise SolverError(
            f"stage {sm.stage} time limit reached for scenario {sm.scenario};"
            f" incumbent loss {result.loss:.6g} MW"
        )
    return result


########################################################################
# RESULT CACHE


class RestorationCache:
    """Thread-safe store of restoration results keyed by scenario.

    Stage solutions are stored too, so scenarios that share a fault set
    share their stage-2 solve.
    """

    def __init__(self):
        self._lock = threading.Lock()
        self._results: dict[Hashable, RestorationResult] = {}
        self._stages: dict[Hashable, StageSolution] = {}
        self.hits = 0
        self.misses = 0

    def __len__(self) -> int:
        return len(self._results)

    def get(self, key: Hashable) -> Optional[RestorationResult]:
        with self._lock:
            result = self._results.get(key)
            if result is None:
                self.misses += 1
            else:
                self.hits += 1
            return result

    def put(self, key: Hashable, result: RestorationResult):
        with self._lock:
            self._results.setdefault(key, result)

    def stage(
        self, key: Hashable, compute: Callable[[], StageSolution]
    ) -> StageSolution:
        with self._lock:
            cached = self._stages.get(key)
        if cached is not None:
            return cached
        solution = compute()
        with self._lock:
            return self._stages.setdefault(key, solution)


def _assemble(
    network: Network,
    scenario: OutcomeScenario,
    stage1: StageSolution,
    stage2: StageSolution,
    stage0: str,
) -> RestorationResult:
    loss0 = stage0_loss(network, scenario, stage0)
    resilience = resilience_of(
        loss0, stage1.loss, stage2.loss, network.times, total_weighted_load(network)
    )
    return RestorationResult(
        loss0, stage1.loss, stage2.loss, resilience, (stage1, stage2)
    )


def optimal_restoration(
    network: Network,
    scenario: OutcomeScenario,
    opts: Optional[SolverOptions] = None,
    cache: Optional[RestorationCache] = None,
    stage0: str = "network",
) -> RestorationResult:
    """Best restoration for `scenario` and its resilience.

    The two stages share no constraint, so each is solved on its own.
    """
    if cache is None:
        cache = RestorationCache()
    key = (scenario.key, stage0)
    result = cache.get(key)
    if result is not None:
        return result

    stage1 = cache.stage(
        (1, scenario.faulted_lines, scenario.hijacked_rcs),
        lambda: solve_stage(build_stage1_model(network, scenario), opts),
    )
    stage2 = cache.stage(
        (2, scenario.faulted_lines),
        lambda: solve_stage(build_stage2_model(network, scenario), opts),
    )
    result = _assemble(network, scenario, stage1, stage2, stage0)
    logger.debug("restored %s: losses %s", scenario, result.losses)
    cache.put(key, result)
    return result


########################################################################
# BRUTE FORCE ORACLE


@dataclass(frozen=True)
class _Island:
    loss: float
    p_shed: dict[str, float]
    q_shed: dict[str, float]


class BruteForceRestorer:
    """Exhaustive restoration over switch configurations.

    Every radial configuration honoring the stage's pinned switches is
    tried. Islands that cannot be energized shed all load; the others
    get a load-shed LP. LP results are memoized per island, so reuse one
    instance across scenarios.
    """

    def __init__(self, network: Network, max_switchable: int = BRUTE_FORCE_CAP):
        self.network = network
        self.max_switchable = max_switchable
        self._islands: dict[
            tuple[frozenset[str], frozenset[str]], Optional[_Island]
        ] = {}

    def _island_lp(
        self, nodes: frozenset[str], lines: frozenset[str]
    ) -> Optional[_Island]:
        key = (nodes, lines)
        if key not in self._islands:
            self._islands[key] = self._solve_island(nodes, lines)
        return self._islands[key]

    def _solve_island(
        self, nodes: frozenset[str], lines: frozenset[str]
    ) -> Optional[_Island]:
        net = self.network
        node_list = sorted(nodes)
        line_list = [net.line_by_id[lid] for lid in sorted(lines)]
        # Per node: PS, QS, PG, QG, U. Per line: P, Q.
        col = {j: 5 * k for k, j in enumerate(node_list)}
        base = 5 * len(node_list)
        lcol = {line.id: base + 2 * k for k, line in enumerate(line_list)}
        n_vars = base + 2 * len(line_list)

        cost = np.zeros(n_vars)
        bounds: list[tuple[float, float]] = [(0.0, 0.0)] * n_vars
        for j in node_list:
            node = net.node_by_id[j]
            cost[col[j]] = node.weight
            bounds[col[j]] = (0.0, node.p_load)
            bounds[col[j] + 1] = _q_shed_bounds(node.q_load)
            bounds[col[j] + 2] = (0.0, node.pg_max)
            bounds[col[j] + 3] = (0.0, node.qg_max)
            bounds[col[j] + 4] = (node.u_min, node.u_max)
        for line in line_list:
            bounds[lcol[line.id]] = (-line.s_max, line.s_max)
            bounds[lcol[line.id] + 1] = (-line.s_max, line.s_max)

        a_eq, b_eq, a_ub, b_ub = [], [], [], []
        for j in node_list:
            node = net.node_by_id[j]
            for offset, load in ((0, node.p_load), (1, node.q_load)):
                row = np.zeros(n_vars)
                row[col[j] + offset] = -1.0
                row[col[j] + 2 + offset] = -1.0
                for line in line_list:
                    if line.from_node == j:
                        row[lcol[line.id] + offset] += 1.0
                    elif line.to_node == j:
                        row[lcol[line.id] + offset] -= 1.0
                a_eq.append(row)
                b_eq.append(-load)
        for line in line_list:
            row = np.zeros(n_vars)
            row[col[line.from_node] + 4] = 1.0
            row[col[line.to_node] + 4] = -1.0
            row[lcol[line.id]] = -2 * line.r / net.base_mva
            row[lcol[line.id] + 1] = -2 * line.x / net.base_mva
            a_eq.append(row)
            b_eq.append(0.0)
            for kp, kq in CAPACITY_FACES:
                for sign in (1.0, -1.0):
                    row = np.zeros(n_vars)
                    row[lcol[line.id]] = sign * kp
                    row[lcol[line.id] + 1] = sign * kq
                    a_ub.append(row)
                    b_ub.append(line.s_max)

        res = linprog(
            cost,
            A_ub=np.array(a_ub) if a_ub else None,
            b_ub=np.array(b_ub) if b_ub else None,
            A_eq=np.array(a_eq),
            b_eq=np.array(b_eq),
            bounds=bounds,
            method="highs",
        )
        if res.status != 0:
            return None
        return _Island(
            float(res.fun),
            {j: float(res.x[col[j]]) for j in node_list},
            {j: float(res.x[col[j] + 1]) for j in node_list},
        )

    def solve_stage(self, scenario: OutcomeScenario, stage: int) -> StageSolution:
        net = self.network
        forced = forced_states(net, scenario) if stage == 1 else {}
        free = [line for line in net.lines if line.id not in forced]
        if len(free) > self.max_switchable:
            raise ScenarioCapError(
                f"brute force supports at most {self.max_switchable} switchable"
                f" lines, got {len(free)}"
            )
        always_closed = [lid for lid, closed in forced.items() if closed]

        best: Optional[StageSolution] = None
        for mask in range(1 << len(free)):
            closed = set(always_closed)
            closed.update(free[k].id for k in range(len(free)) if mask >> k & 1)
            candidate = self._evaluate(scenario, stage, closed)
            if candidate is None:
                continue
            if best is None or candidate.loss < best.loss - 1e-12:
                best = candidate
        assert best is not None, "shedding everything is always feasible"
        return best

    def _evaluate(
        self, scenario: OutcomeScenario, stage: int, closed: set[str]
    ) -> Optional[StageSolution]:
        net = self.network
        graph = nx.MultiGraph()
        graph.add_nodes_from(n.id for n in net.nodes)
        for lid in closed:
            line = net.line_by_id[lid]
            graph.add_edge(line.from_node, line.to_node, key=lid)
        if not nx.is_forest(graph):
            return None

        faulted_nodes = set()
        for lid in scenario.faulted_lines:
            line = net.line_by_id[lid]
            faulted_nodes.add(line.to_node)
            if lid in closed:
                faulted_nodes.add(line.from_node)

        fault_area: dict[str, bool] = {}
        p_shed: dict[str, float] = {}
        q_shed: dict[str, float] = {}
        loss = 0.0
        for comp in nx.connected_components(graph):
            nodes = [net.node_by_id[j] for j in comp]
            n_sub = sum(n.is_substation for n in nodes)
            has_dg = any(n.is_dg for n in nodes)
            island = None
            if not (comp & faulted_nodes) and (n_sub == 1 or (n_sub == 0 and has_dg)):
                lines = frozenset(
                    lid for lid in closed if net.line_by_id[lid].from_node in comp
                )
                island = self._island_lp(frozenset(comp), lines)
            for n in nodes:
                fault_area[n.id] = island is None
                p_shed[n.id] = n.p_load if island is None else island.p_shed[n.id]
                q_shed[n.id] = n.q_load if island is None else island.q_shed[n.id]
            if island is None:
                loss += sum(n.weight * n.p_load for n in nodes)
            else:
                loss += island.loss
        return StageSolution(
            stage=stage,
            loss=loss,
            closed={line.id: line.id in closed for line in net.lines},
            fault_area=fault_area,
            p_shed=p_shed,
            q_shed=q_shed,
        )

    def restore(
        self, scenario: OutcomeScenario, stage0: str = "network"
    ) -> RestorationResult:
        stage1 = self.solve_stage(scenario, 1)
        stage2 = self.solve_stage(scenario, 2)
        return _assemble(self.network, scenario, stage1, stage2, stage0)


def brute_force_restoration(
    network: Network, scenario: OutcomeScenario, stage0: str = "network"
) -> RestorationResult:
    return BruteForceRestorer(network).restore(scenario, stage0)


########################################################################
# STRUCTURAL CHECKS


def check_stage_solution(
    network: Network,
    scenario: OutcomeScenario,
    solution: StageSolution,
    stage: int,
    tol: float = 1e-6,
) -> list[str]:
    """List the structural properties `solution` violates.

    Checks radiality, pinned switch states, fault containment, shedding
    bounds, and (when present) voltage and line capacity limits.
    """
    problems: list[str] = []
    closed = {lid for lid, is_closed in solution.closed.items() if is_closed}
    lam = solution.fault_area

    graph = nx.MultiGraph()
    graph.add_nodes_from(n.id for n in network.nodes)
    for lid in closed:
        line = network.line_by_id[lid]
        graph.add_edge(line.from_node, line.to_node, key=lid)
    if not nx.is_forest(graph):
        problems.append("closed lines contain a cycle")

    if stage == 1:
        for lid, state in forced_states(network, scenario).items():
            if (lid in closed) != state:
                problems.append(f"line '{lid}': hijacked switch changed state")

    for lid in scenario.faulted_lines:
        line = network.line_by_id[lid]
        if not lam[line.to_node]:
            problems.append(f"line '{lid}': faulted line end outside fault area")
        if lid in closed and not lam[line.from_node]:
            problems.append(
                f"line '{lid}': closed faulted line head outside fault area"
            )
    for lid in closed:
        line = network.line_by_id[lid]
        if lam[line.from_node] != lam[line.to_node]:
            problems.append(f"line '{lid}': fault area split across closed line")

    for comp in nx.connected_components(graph):
        nodes = [network.node_by_id[j] for j in comp]
        if all(lam[n.id] for n in nodes):
            continue
        roots = sum(
            n.is_substation or (n.is_dg and solution.dg_root.get(n.id, True))
            for n in nodes
        )
        if solution.dg_root and roots != 1:
            problems.append(f"island {{{','.join(sorted(comp))}}}: {roots} roots")

    for node in network.nodes:
        j = node.id
        lo = node.p_load if lam[j] else 0.0
        if not lo - tol <= solution.p_shed[j] <= node.p_load + tol:
            problems.append(f"node '{j}': shed {solution.p_shed[j]:.6g} outside bounds")
        u_ok = node.u_min - tol <= solution.u_sq.get(j, node.u_min) <= node.u_max + tol
        if not u_ok:
            problems.append(f"node '{j}': voltage out of bounds")

    for line in network.lines:
        if line.id not in solution.p_flow:
            continue
        p, q = solution.p_flow[line.id], solution.q_flow[line.id]
        limit = line.s_max if line.id in closed else 0.0
        for kp, kq in CAPACITY_FACES:
            if abs(kp * p + kq * q) > limit + tol:
                problems.append(f"line '{line.id}': capacity exceeded")
                break
    return problems

