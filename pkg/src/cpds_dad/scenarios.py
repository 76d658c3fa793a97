"""Outcome scenarios of an attack and their expected resilience.

Every attacked line and every switch within reach of the FBS is a
target that independently succeeds or fails. One outcome scenario is
one joint realization; its probability is the product of the target
probabilities.

>>> targets = [
...     TargetOutcome("L1", TargetKind.line, 0.5, 0.5, 0.5),
...     TargetOutcome("L2", TargetKind.line, 0.5, 0.5, 0.5),
... ]
>>> [round(ws.prob, 2) for ws in enumerate_outcomes(targets)]
[0.25, 0.25, 0.25, 0.25]
"""

from __future__ import annotations

import logging
import threading
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import pandas as pd

from ._utils import Point, ScenarioCapError, fmt_ids
from .attack import (
    AttackPlan,
    DefensePlan,
    InspectionParams,
    cyber_success_prob,
    physical_success_prob,
)
from .capture import CaptureModel, capture_problem_for
from .milp import SolverOptions
from .network import Network, rcs_position
from .restoration import (
    OutcomeScenario,
    RestorationCache,
    RestorationResult,
    optimal_restoration,
)

logger = logging.getLogger(__name__)


########################################################################
# DOMAIN TYPES


class TargetKind(Enum):
    line = "line"
    rcs = "rcs"


@dataclass(frozen=True)
class TargetOutcome:
    """One attack target and its success probability.

    `p_undefended` and `p_defended` are the success probabilities
    without and with the matching defense (hardening for lines,
    protection for switches). `success_prob` is the one that applies
    under the evaluated defense. `deterministic` holds the forced outcome
    once thresholding has made the target certain.
    """

    target: str
    kind: TargetKind
    success_prob: float
    p_undefended: float
    p_defended: float
    deterministic: Optional[bool] = None


@dataclass(frozen=True)
class WeightedScenario:
    scenario: OutcomeScenario
    prob: float


@dataclass(frozen=True)
class TruncationPolicy:
    eps_p: float = 1e-3
    k_max: int = 6
    outcome_cap: int = 12


@dataclass(frozen=True)
class TruncationAudit:
    """Cyber targets removed or collapsed by the truncation policy."""

    below_eps: tuple[str, ...] = ()
    forced_capture: tuple[str, ...] = ()
    beyond_k_max: tuple[str, ...] = ()

    def as_dict(self) -> dict[str, list[str]]:
        return {
            "below_eps": list(self.below_eps),
            "forced_capture": list(self.forced_capture),
            "beyond_k_max": list(self.beyond_k_max),
        }


@dataclass
class Evaluation:
    defense: DefensePlan
    attack: AttackPlan
    targets: list[TargetOutcome]
    scenarios: list[WeightedScenario]
    results: list[RestorationResult]
    audit: TruncationAudit

    @property
    def value(self) -> float:
        pairs = zip(self.scenarios, self.results)
        return sum(ws.prob * r.resilience for ws, r in pairs)


########################################################################
# OUTCOME ENUMERATION


def enumerate_outcomes(
    targets: Sequence[TargetOutcome], cap: int = 12
) -> list[WeightedScenario]:
    """Expand targets into every joint outcome, in a canonical order.

    Deterministic targets take their forced outcome in every scenario.
    Scenario k realizes success for the probabilistic targets whose bit
    is set in k.

    Raises:
        ScenarioCapError: If more than `cap` targets are probabilistic.
    """
    fixed_lines, fixed_rcs = [], []
    uncertain = []
    for t in targets:
        if t.deterministic is None:
            uncertain.append(t)
        elif t.deterministic:
            (fixed_lines if t.kind is TargetKind.line else fixed_rcs).append(t.target)
    if len(uncertain) > cap:
        raise ScenarioCapError(
            f"{len(uncertain)} probabilistic targets exceed the cap of {cap};"
            " tighten the truncation (raise eps_p or lower k_max)"
        )

    scenarios = []
    for mask in range(1 << len(uncertain)):
        lines, rcs = list(fixed_lines), list(fixed_rcs)
        prob = 1.0
        for k, t in enumerate(uncertain):
            if mask >> k & 1:
                prob *= t.success_prob
                (lines if t.kind is TargetKind.line else rcs).append(t.target)
            else:
                prob *= 1 - t.success_prob
        scenarios.append(WeightedScenario(OutcomeScenario.of(lines, rcs), prob))
    return scenarios


def _settle(target: TargetOutcome) -> Optional[TargetOutcome]:
    # Certain outcomes become deterministic; certain failures vanish.
    p = target.success_prob
    if p <= 0:
        return None
    if p >= 1:
        return TargetOutcome(
            target.target,
            target.kind,
            1.0,
            target.p_undefended,
            target.p_defended,
            True,
        )
    return target


def scenario_table(
    scenarios: Sequence[WeightedScenario], results: Sequence[RestorationResult]
) -> pd.DataFrame:
    rows = [
        {
            "scenario": k,
            "faults": fmt_ids(ws.scenario.faulted_lines),
            "hijacks": fmt_ids(ws.scenario.hijacked_rcs),
            "prob": ws.prob,
            "stage0_loss": r.stage0_loss,
            "stage1_loss": r.stage1_loss,
            "stage2_loss": r.stage2_loss,
            "resilience": r.resilience,
        }
        for k, (ws, r) in enumerate(zip(scenarios, results))
    ]
    return pd.DataFrame(
        rows,
        columns=[
            "scenario",
            "faults",
            "hijacks",
            "prob",
            "stage0_loss",
            "stage1_loss",
            "stage2_loss",
            "resilience",
        ],
    )


def top_hijack_rcs(targets: Sequence[TargetOutcome], n: int = 3) -> list[TargetOutcome]:
    """The `n` switches most likely to be hijacked, most likely first."""
    cyber = [t for t in targets if t.kind is TargetKind.rcs]
    return sorted(cyber, key=lambda t: -t.success_prob)[:n]


########################################################################
# SCENARIO ENGINE


@dataclass
class ScenarioEngine:
    """Evaluates (defense, attack) pairs on one network.

    Capture probabilities are memoized per FBS position, and restoration
    results are shared through `cache` across every evaluation.
    """

    network: Network
    inspection: InspectionParams = field(default_factory=InspectionParams)
    policy: TruncationPolicy = field(default_factory=TruncationPolicy)
    capture: CaptureModel = field(default_factory=CaptureModel)
    solver: Optional[SolverOptions] = None
    cache: RestorationCache = field(default_factory=RestorationCache)
    stage0: str = "network"
    threads: int = 1
    s_ref_fbs: Optional[float] = None

    def __post_init__(self):
        self._capture_lock = threading.Lock()
        self._captures: dict[Point, list[float]] = {}

    def capture_probs(self, fbs_pos: Point) -> list[float]:
        """Capture probability of every switch, in network line order."""
        with self._capture_lock:
            cached = self._captures.get(fbs_pos)
        if cached is not None:
            return cached
        probs = [
            self.capture(
                capture_problem_for(
                    self.network,
                    rcs_position(self.network, line),
                    fbs_pos,
                    self.s_ref_fbs,
                )
            )
            for line in self.network.lines
        ]
        with self._capture_lock:
            return self._captures.setdefault(fbs_pos, probs)

    def cyber_targets(
        self, attack: AttackPlan
    ) -> tuple[list[tuple[str, float]], TruncationAudit]:
        """Switches the FBS can hijack, with thresholded capture probability.

        Thresholding looks only at the capture probability, so the kept
        set depends on the attack and not on the defense.
        """
        if attack.fbs_position is None:
            return [], TruncationAudit()
        eps = self.policy.eps_p
        below, forced = [], []
        kept: list[tuple[str, float]] = []
        uncertain: list[tuple[str, float]] = []
        for line, p in zip(self.network.lines, self.capture_probs(attack.fbs_position)):
            if p <= eps:
                below.append(line.rcs_id)
            elif p >= 1 - eps:
                forced.append(line.rcs_id)
                kept.append((line.rcs_id, 1.0))
            else:
                uncertain.append((line.rcs_id, p))
        ranked = sorted(uncertain, key=lambda item: -item[1])
        kept.extend(ranked[: self.policy.k_max])
        beyond = [rcs for rcs, _ in ranked[self.policy.k_max :]]
        order = {rcs: k for k, rcs in enumerate(self.network.rcs_ids)}
        kept.sort(key=lambda item: order[item[0]])
        return kept, TruncationAudit(tuple(below), tuple(forced), tuple(beyond))

    def targets(
        self, defense: DefensePlan, attack: AttackPlan
    ) -> tuple[list[TargetOutcome], TruncationAudit]:
        params = self.inspection
        out: list[TargetOutcome] = []
        for line in self.network.lines:
            if line.id not in attack.attacked_lines:
                continue
            undefended = physical_success_prob(line, True, False, params)
            defended = physical_success_prob(line, True, True, params)
            p = defended if line.id in defense.hardened_lines else undefended
            out.append(TargetOutcome(line.id, TargetKind.line, p, undefended, defended))
        kept, audit = self.cyber_targets(attack)
        for rcs_id, p_capture in kept:
            undefended = cyber_success_prob(p_capture, False, params)
            defended = cyber_success_prob(p_capture, True, params)
            p = defended if rcs_id in defense.protected_rcs else undefended
            out.append(TargetOutcome(rcs_id, TargetKind.rcs, p, undefended, defended))
        settled = [s for s in map(_settle, out) if s is not None]
        return settled, audit

    def restore(self, scenario: OutcomeScenario) -> RestorationResult:
        return optimal_restoration(
            self.network, scenario, self.solver, self.cache, self.stage0
        )

    def restore_all(
        self, scenarios: Sequence[WeightedScenario]
    ) -> list[RestorationResult]:
        items = [ws.scenario for ws in scenarios]
        if self.threads <= 1 or len(items) <= 1:
            return [self.restore(s) for s in items]
        with ThreadPoolExecutor(max_workers=self.threads) as pool:
            return list(pool.map(self.restore, items))

    def evaluate(
        self, defense: DefensePlan, attack: AttackPlan, parallel: bool = True
    ) -> Evaluation:
        targets, audit = self.targets(defense, attack)
        scenarios = enumerate_outcomes(targets, self.policy.outcome_cap)
        if parallel:
            results = self.restore_all(scenarios)
        else:
            results = [self.restore(ws.scenario) for ws in scenarios]
        logger.debug("%s %s: %d scenarios", defense, attack, len(scenarios))
        return Evaluation(defense, attack, targets, scenarios, results, audit)

    def expected_resilience(self, defense: DefensePlan, attack: AttackPlan) -> float:
        return self.evaluate(defense, attack).value


def target_probabilities(
    network: Network,
    defense: DefensePlan,
    attack: AttackPlan,
    params: InspectionParams,
    policy: Optional[TruncationPolicy] = None,
    capture: Optional[CaptureModel] = None,
    s_ref_fbs: Optional[float] = None,
) -> list[TargetOutcome]:
    engine = ScenarioEngine(
        network,
        inspection=params,
        policy=policy or TruncationPolicy(),
        capture=capture or CaptureModel(),
        s_ref_fbs=s_ref_fbs,
    )
    return engine.targets(defense, attack)[0]


def expected_resilience(
    network: Network,
    defense: DefensePlan,
    attack: AttackPlan,
    cache: Optional[RestorationCache] = None,
    opts: Optional[SolverOptions] = None,
    params: Optional[InspectionParams] = None,
    policy: Optional[TruncationPolicy] = None,
) -> float:
    engine = ScenarioEngine(
        network,
        inspection=params or InspectionParams(),
        policy=policy or TruncationPolicy(),
        solver=opts,
        cache=cache if cache is not None else RestorationCache(),
    )
    return engine.expected_resilience(defense, attack)
