"""Command-line front end for batch resilience studies.

Subcommands:
    run         solve one defender-attacker-defender game and write a
                report
    sweep       solve one game per cell of a grid of budgets
    fbs-study   solve the game for several FBS reference strengths
    validate    lint a case file
    dump-model  write a stage or master MILP in CPLEX LP format
    plot-data   write plot-ready CSV tables from a report

Exit codes: 0 on success, 1 on errors raised by the toolkit, 2 on I/O
errors, and 3 when the game solver stops before the bounds meet.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import math
import os
import sys
import time
from abc import ABC, abstractmethod
from argparse import ArgumentParser, ArgumentTypeError
from collections.abc import Sequence
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Any, Callable, Optional

import pandas as pd
import yaml

from . import _utils
from ._utils import CPDSError, PathLike, Point, vprint, vwritetext
from .attack import AttackPlan, Budgets, DefensePlan, InspectionParams
from .capture import CaptureModel, PolyCoefficients
from .milp import SolverOptions, write_lp
from .network import Network, load_network, validate_case
from .restoration import (
    OutcomeScenario,
    RestorationCache,
    build_stage1_model,
    build_stage2_model,
)
from .scenarios import (
    ScenarioEngine,
    TargetOutcome,
    TruncationAudit,
    TruncationPolicy,
    scenario_table,
    top_hijack_rcs,
)
from .trilevel import (
    GameSolution,
    IterationRecord,
    block_for_attack,
    build_master,
    solve_ccg,
    solve_subproblem,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_IO = 2
EXIT_NOT_CONVERGED = 3

REPORT_FORMATS = ("yaml", "csv")


########################################################################
# VALIDATION FUNCTIONS


def validate_string_non_empty(s: Any) -> Optional[str]:
    if not isinstance(s, str) or not s:
        return "must be a non-empty string"
    return None


def validate_non_negative(v: float) -> Optional[str]:
    if v < 0:
        return f"must be non-negative, got {v}"
    return None


def validate_positive(v: float) -> Optional[str]:
    if not v > 0:
        return f"must be positive, got {v}"
    return None


def validate_probability_threshold(v: float) -> Optional[str]:
    if not 0 < v < 0.5:
        return f"must be in (0, 0.5), got {v}"
    return None


def validate_stage0(s: str) -> Optional[str]:
    if s not in ("network", "feeder"):
        return f"expected 'network' or 'feeder', got '{s}'"
    return None


def validate_capture_method(s: str) -> Optional[str]:
    if s not in ("poly", "exact"):
        return f"expected 'poly' or 'exact', got '{s}'"
    return None


def validate_formats(s: str) -> Optional[str]:
    bad = [f for f in s.split(",") if f not in REPORT_FORMATS]
    if bad or not s:
        return f"formats must be a comma separated subset of {list(REPORT_FORMATS)}"
    return None


def validate_model_stage(s: str) -> Optional[str]:
    if s not in ("1", "2", "master"):
        return f"expected '1', '2' or 'master', got '{s}'"
    return None


def parse_int_list(s: str) -> list[int]:
    """Parse '2:4' as [2, 3, 4] and '1,3' as [1, 3].

    >>> parse_int_list("2:4")
    [2, 3, 4]
    >>> parse_int_list("0,2")
    [0, 2]
    """
    values: list[int] = []
    for part in s.split(","):
        lo, sep, hi = part.partition(":")
        if sep:
            values.extend(range(int(lo), int(hi) + 1))
        else:
            values.append(int(part))
    return values


def parse_float_list(s: str) -> list[float]:
    return [float(part) for part in s.split(",")]


def validate_int_list(s: str) -> Optional[str]:
    try:
        values = parse_int_list(s)
    except ValueError:
        return f"expected a range like '2:4' or a list like '1,3', got '{s}'"
    if not values:
        return "range is empty"
    if min(values) < 0:
        return "budgets must be non-negative"
    return None


def validate_float_list(s: str) -> Optional[str]:
    try:
        parse_float_list(s)
    except ValueError:
        return f"expected a comma separated list of numbers, got '{s}'"
    return None


def env_threads() -> int:
    raw = os.environ.get("CPDS_THREADS", "1")
    try:
        threads = int(raw)
    except ValueError:
        raise CPDSError(f"CPDS_THREADS must be an integer, got '{raw}'") from None
    if threads < 1:
        raise CPDSError(f"CPDS_THREADS must be at least 1, got {threads}")
    return threads


########################################################################
# CONFIG KEY SPECIFICATION
# Configuration keys implement the `ConfigKeySpec` interface, which
# adds an argument for the key to an `ArgumentParser`. A key without a
# default either is required, or falls back to the case file.


class ConfigKeySpec(ABC):
    @abstractmethod
    def add_arg_to_argparser(self, argparser: ArgumentParser) -> None:
        raise NotImplementedError


def _help_text(spec: Any) -> str:
    help_txt = spec.description
    if any(member.value is spec for member in CASE_DEFAULT_CONFIG_KEYS):
        help_txt += " [default: from case file]"
    elif spec.default is not None:
        help_txt += f" [default: '{spec.default}']"
    return help_txt


def _arg_name(name: str) -> str:
    return f"-{name}" if len(name) == 1 else f"--{name.replace('_', '-')}"


class StrConfigKeySpec(ConfigKeySpec):
    def __init__(
        self,
        name: str,
        description: str,
        default: Optional[str] = None,
        validator: Optional[Callable[[str], Optional[str]]] = None,
        required: bool = False,
    ):
        self.name = name
        self.description = description
        self.default = default
        self.validator = validator
        self.required = required

    def add_arg_to_argparser(self, argparser: ArgumentParser) -> None:
        def add_type(s: str) -> str:
            if self.validator is None:
                return s
            validation_error = self.validator(s)
            if validation_error is None:
                return s
            raise ArgumentTypeError(validation_error)

        argparser.add_argument(
            _arg_name(self.name),
            type=add_type,
            help=_help_text(self),
            default=self.default,
            required=self.required,
            dest=self.name,
        )


class NumConfigKeySpec(ConfigKeySpec):
    """Integer or float key, converted before it is validated."""

    def __init__(
        self,
        name: str,
        description: str,
        num_type: type,
        default: Optional[float] = None,
        validator: Optional[Callable[[Any], Optional[str]]] = None,
    ):
        self.name = name
        self.description = description
        self.num_type = num_type
        self.default = default
        self.validator = validator

    def add_arg_to_argparser(self, argparser: ArgumentParser) -> None:
        def add_type(s: str) -> Any:
            try:
                value = self.num_type(s)
            except ValueError:
                raise ArgumentTypeError(
                    f"expected {self.num_type.__name__}, got '{s}'"
                ) from None
            if isinstance(value, float) and not math.isfinite(value):
                raise ArgumentTypeError(f"expected a finite number, got '{s}'")
            if self.validator is not None:
                validation_error = self.validator(value)
                if validation_error is not None:
                    raise ArgumentTypeError(validation_error)
            return value

        argparser.add_argument(
            _arg_name(self.name),
            type=add_type,
            help=_help_text(self),
            default=self.default,
            dest=self.name,
        )


class IntConfigKeySpec(NumConfigKeySpec):
    def __init__(self, name: str, description: str, default=None, validator=None):
        super().__init__(name, description, int, default, validator)


class FloatConfigKeySpec(NumConfigKeySpec):
    def __init__(self, name: str, description: str, default=None, validator=None):
        super().__init__(name, description, float, default, validator)


########################################################################
# CONFIGURATION KEYS


class ConfigKey(Enum):
    case = StrConfigKeySpec(
        "case",
        "case file path, or a shipped case name (toy6, ieee33)",
        None,
        validate_string_non_empty,
        required=True,
    )
    out = StrConfigKeySpec("out", "output directory", "out", validate_string_non_empty)
    defend_lines = IntConfigKeySpec(
        "defend_lines", "lines the defender can harden", None, validate_non_negative
    )
    defend_rcs = IntConfigKeySpec(
        "defend_rcs", "switches the defender can protect", None, validate_non_negative
    )
    attack_lines = IntConfigKeySpec(
        "attack_lines", "lines the attacker can strike", None, validate_non_negative
    )
    s_ref = FloatConfigKeySpec("s_ref", "FBS reference signal strength in dB")
    grid_step = FloatConfigKeySpec(
        "grid_step", "FBS candidate grid spacing in m", None, validate_positive
    )
    eps_p = FloatConfigKeySpec(
        "eps_p", "capture probability threshold", None, validate_probability_threshold
    )
    k_max = IntConfigKeySpec(
        "k_max", "most uncertain cyber targets kept", None, validate_non_negative
    )
    outcome_cap = IntConfigKeySpec(
        "outcome_cap",
        "most probabilistic targets expanded",
        None,
        validate_non_negative,
    )
    stage0 = StrConfigKeySpec(
        "stage0",
        "load lost at the fault ('network' or 'feeder')",
        None,
        validate_stage0,
    )
    capture_method = StrConfigKeySpec(
        "capture_method",
        "capture probability method ('poly' or 'exact')",
        None,
        validate_capture_method,
    )
    eps = FloatConfigKeySpec("eps", "C&CG convergence gap", 1e-4, validate_positive)
    max_iter = IntConfigKeySpec(
        "max_iter", "C&CG iteration limit", 50, validate_positive
    )
    seed = IntConfigKeySpec("seed", "solver random seed", 0, validate_non_negative)
    time_limit = FloatConfigKeySpec(
        "time_limit", "per-MILP time limit in seconds", None, validate_positive
    )
    formats = StrConfigKeySpec(
        "formats", "report formats (comma separated)", "yaml,csv", validate_formats
    )
    sweep_defend_rcs = StrConfigKeySpec(
        "sweep_defend_rcs",
        "switch protection budgets to sweep",
        "2:4",
        validate_int_list,
    )
    sweep_defend_lines = StrConfigKeySpec(
        "sweep_defend_lines",
        "line hardening budgets to sweep",
        "2:4",
        validate_int_list,
    )
    sweep_attack_lines = StrConfigKeySpec(
        "sweep_attack_lines", "line attack budgets to sweep", "1:3", validate_int_list
    )
    s_refs = StrConfigKeySpec(
        "s_refs",
        "FBS reference strengths to study",
        "100,104,108,112",
        validate_float_list,
    )
    stage = StrConfigKeySpec(
        "stage", "model to dump ('1', '2' or 'master')", "2", validate_model_stage
    )
    faults = StrConfigKeySpec("faults", "faulted line ids (comma separated)", "")
    hijacks = StrConfigKeySpec("hijacks", "hijacked switch ids (comma separated)", "")
    lp = StrConfigKeySpec(
        "lp", "LP file to write", "model.lp", validate_string_non_empty
    )
    report = StrConfigKeySpec(
        "report", "report.yaml to read", None, validate_string_non_empty, required=True
    )


CASE_DEFAULT_CONFIG_KEYS = (
    ConfigKey.defend_lines,
    ConfigKey.defend_rcs,
    ConfigKey.attack_lines,
    ConfigKey.s_ref,
    ConfigKey.grid_step,
    ConfigKey.eps_p,
    ConfigKey.k_max,
    ConfigKey.outcome_cap,
    ConfigKey.stage0,
    ConfigKey.capture_method,
)

GAME_CONFIG_KEYS = (
    ConfigKey.case,
    ConfigKey.out,
    *CASE_DEFAULT_CONFIG_KEYS,
    ConfigKey.eps,
    ConfigKey.max_iter,
    ConfigKey.seed,
    ConfigKey.time_limit,
    ConfigKey.formats,
)

SUBCOMMAND_CONFIG_KEYS: dict[str, tuple[ConfigKey, ...]] = {
    "run": GAME_CONFIG_KEYS,
    "sweep": (
        *GAME_CONFIG_KEYS,
        ConfigKey.sweep_defend_rcs,
        ConfigKey.sweep_defend_lines,
        ConfigKey.sweep_attack_lines,
    ),
    "fbs-study": (*GAME_CONFIG_KEYS, ConfigKey.s_refs),
    "validate": (ConfigKey.case,),
    "dump-model": (
        *GAME_CONFIG_KEYS,
        ConfigKey.stage,
        ConfigKey.faults,
        ConfigKey.hijacks,
        ConfigKey.lp,
    ),
    "plot-data": (ConfigKey.report, ConfigKey.out),
}

SUBCOMMAND_HELP = {
    "run": "solve one game and write a report",
    "sweep": "solve one game per budget grid cell",
    "fbs-study": "solve the game for several FBS reference strengths",
    "validate": "check a case file",
    "dump-model": "write a stage or master MILP as an LP file",
    "plot-data": "write plot-ready CSV tables from a report",
}


########################################################################
# RUN CONFIGURATION


@dataclass(frozen=True)
class RunConfig:
    """Settings for one game; `None` fields fall back to the case file."""

    case: str
    out_dir: Path = Path("out")
    defend_lines: Optional[int] = None
    defend_rcs: Optional[int] = None
    attack_lines: Optional[int] = None
    s_ref: Optional[float] = None
    grid_step: Optional[float] = None
    eps_p: Optional[float] = None
    k_max: Optional[int] = None
    outcome_cap: Optional[int] = None
    stage0: Optional[str] = None
    capture_method: Optional[str] = None
    eps: float = 1e-4
    max_iter: int = 50
    seed: int = 0
    time_limit: Optional[float] = None
    formats: tuple[str, ...] = REPORT_FORMATS

    def __post_init__(self):
        for name in ("defend_lines", "defend_rcs", "attack_lines"):
            value = getattr(self, name)
            if value is not None and value < 0:
                raise CPDSError(f"{name} must be non-negative, got {value}")
        if not self.eps > 0:
            raise CPDSError(f"eps must be positive, got {self.eps}")
        if self.max_iter < 1:
            raise CPDSError(f"max_iter must be at least 1, got {self.max_iter}")
        bad = [f for f in self.formats if f not in REPORT_FORMATS]
        if bad:
            raise CPDSError(f"unknown report formats: {bad}")

    @classmethod
    def from_config(cls, config: dict[ConfigKey, Any]) -> RunConfig:
        return cls(
            case=config[ConfigKey.case],
            out_dir=Path(config[ConfigKey.out]),
            defend_lines=config[ConfigKey.defend_lines],
            defend_rcs=config[ConfigKey.defend_rcs],
            attack_lines=config[ConfigKey.attack_lines],
            s_ref=config[ConfigKey.s_ref],
            grid_step=config[ConfigKey.grid_step],
            eps_p=config[ConfigKey.eps_p],
            k_max=config[ConfigKey.k_max],
            outcome_cap=config[ConfigKey.outcome_cap],
            stage0=config[ConfigKey.stage0],
            capture_method=config[ConfigKey.capture_method],
            eps=config[ConfigKey.eps],
            max_iter=config[ConfigKey.max_iter],
            seed=config[ConfigKey.seed],
            time_limit=config[ConfigKey.time_limit],
            formats=tuple(config[ConfigKey.formats].split(",")),
        )

    def with_budgets(
        self, defend_lines: int, defend_rcs: int, attack_lines: int
    ) -> RunConfig:
        return dataclasses.replace(
            self,
            defend_lines=defend_lines,
            defend_rcs=defend_rcs,
            attack_lines=attack_lines,
        )

    def budgets(self, network: Network) -> Budgets:
        d = network.defaults
        return Budgets(
            defend_lines=_pick(self.defend_lines, d.defend_lines),
            defend_rcs=_pick(self.defend_rcs, d.defend_rcs),
            attack_lines=_pick(self.attack_lines, d.attack_lines),
        )

    def policy(self, network: Network) -> TruncationPolicy:
        d = network.defaults
        return TruncationPolicy(
            eps_p=_pick(self.eps_p, d.eps_p),
            k_max=_pick(self.k_max, d.k_max),
            outcome_cap=_pick(self.outcome_cap, d.outcome_cap),
        )

    def resolved(self, network: Network) -> dict[str, Any]:
        """Every setting after falling back to the case file."""
        d = network.defaults
        budgets = self.budgets(network)
        policy = self.policy(network)
        return {
            "case": str(self.case),
            "network": network.name,
            "defend_lines": budgets.defend_lines,
            "defend_rcs": budgets.defend_rcs,
            "attack_lines": budgets.attack_lines,
            "s_ref": float(_pick(self.s_ref, network.radio.s_ref)),
            "grid_step": float(network.grid_step),
            "eps_p": policy.eps_p,
            "k_max": policy.k_max,
            "outcome_cap": policy.outcome_cap,
            "stage0": _pick(self.stage0, d.stage0),
            "capture_method": _pick(self.capture_method, d.capture_method),
            "eps": self.eps,
            "max_iter": self.max_iter,
            "seed": self.seed,
            "time_limit": self.time_limit,
            "solver": SolverOptions().backend,
        }


def _pick(value: Any, fallback: Any) -> Any:
    return fallback if value is None else value


def load_case(config: RunConfig) -> Network:
    network = load_network(config.case)
    if config.grid_step is not None:
        network = network.with_grid_step(config.grid_step)
    return network


def make_engine(
    network: Network,
    config: RunConfig,
    cache: Optional[RestorationCache] = None,
    s_ref: Optional[float] = None,
) -> ScenarioEngine:
    d = network.defaults
    return ScenarioEngine(
        network,
        inspection=InspectionParams(d.zeta_a, d.zeta_b, d.p_defend),
        policy=config.policy(network),
        capture=CaptureModel(
            _pick(config.capture_method, d.capture_method),
            PolyCoefficients.from_overrides(d.poly),
        ),
        solver=SolverOptions(time_limit=config.time_limit, seed=config.seed),
        cache=cache if cache is not None else RestorationCache(),
        stage0=_pick(config.stage0, d.stage0),
        threads=env_threads(),
        s_ref_fbs=_pick(s_ref, config.s_ref),
    )


########################################################################
# REPORT


def _ids(ids) -> list[str]:
    return sorted(ids)


def _point_or_none(p: Optional[Sequence[float]]) -> Optional[Point]:
    return None if p is None else (float(p[0]), float(p[1]))


def _point_data(p: Optional[Point]) -> Optional[list[float]]:
    return None if p is None else [float(p[0]), float(p[1])]


def _native(value: Any) -> Any:
    # numpy scalars -> python scalars, for the YAML dumper.
    return value.item() if hasattr(value, "item") else value


def defense_data(defense: DefensePlan) -> dict[str, Any]:
    return {
        "hardened_lines": _ids(defense.hardened_lines),
        "protected_rcs": _ids(defense.protected_rcs),
    }


def attack_data(attack: AttackPlan) -> dict[str, Any]:
    return {
        "attacked_lines": _ids(attack.attacked_lines),
        "fbs_position": _point_data(attack.fbs_position),
    }


def defense_from_data(data: dict[str, Any]) -> DefensePlan:
    return DefensePlan.of(data["hardened_lines"], data["protected_rcs"])


def attack_from_data(data: dict[str, Any]) -> AttackPlan:
    return AttackPlan.of(data["attacked_lines"], _point_or_none(data["fbs_position"]))


@dataclass
class StrategyMap:
    defense: DefensePlan
    attack: AttackPlan
    top_hijack: list[tuple[str, float]]

    @classmethod
    def of(
        cls, solution: GameSolution, targets: Sequence[TargetOutcome]
    ) -> StrategyMap:
        top = [(t.target, t.success_prob) for t in top_hijack_rcs(targets, 3)]
        return cls(solution.defense, solution.worst_attack, top)

    def as_dict(self) -> dict[str, Any]:
        return {
            **defense_data(self.defense),
            **attack_data(self.attack),
            "top_hijack_rcs": [{"rcs": r, "prob": p} for r, p in self.top_hijack],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> StrategyMap:
        return cls(
            defense_from_data(data),
            attack_from_data(data),
            [(item["rcs"], float(item["prob"])) for item in data["top_hijack_rcs"]],
        )


SCENARIO_COLUMNS = [
    "scenario",
    "faults",
    "hijacks",
    "prob",
    "stage0_loss",
    "stage1_loss",
    "stage2_loss",
    "resilience",
]
TRACE_COLUMNS = ["k", "upper_bound", "lower_bound", "attacked_lines", "fbs_x", "fbs_y"]


@dataclass
class Report:
    """Everything one `run` produces.

    `generated` and `timing` are wall-clock values; the rest of the
    report depends only on the configuration.
    """

    config: dict[str, Any]
    solution: GameSolution
    scenarios: list[dict[str, Any]]
    strategy: StrategyMap
    audit: TruncationAudit
    timing: dict[str, float] = field(default_factory=dict)
    generated: str = ""

    def as_dict(self) -> dict[str, Any]:
        sol = self.solution
        return {
            "format_version": 1,
            "generated": self.generated,
            "config": dict(self.config),
            "solution": {
                "value": sol.value,
                "converged": sol.converged,
                "defense": defense_data(sol.defense),
                "worst_attack": attack_data(sol.worst_attack),
                "trace": [
                    {
                        "k": rec.k,
                        "upper_bound": rec.upper_bound,
                        "lower_bound": rec.lower_bound,
                        "attack": attack_data(rec.attack),
                    }
                    for rec in sol.trace
                ],
            },
            "scenarios": [dict(row) for row in self.scenarios],
            "strategy": self.strategy.as_dict(),
            "truncation": self.audit.as_dict(),
            "timing": dict(self.timing),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> Report:
        try:
            sol = data["solution"]
            trace = [
                IterationRecord(
                    int(rec["k"]),
                    float(rec["upper_bound"]),
                    float(rec["lower_bound"]),
                    attack_from_data(rec["attack"]),
                )
                for rec in sol["trace"]
            ]
            solution = GameSolution(
                defense_from_data(sol["defense"]),
                attack_from_data(sol["worst_attack"]),
                float(sol["value"]),
                trace,
                bool(sol["converged"]),
            )
            audit = data["truncation"]
            return cls(
                config=dict(data["config"]),
                solution=solution,
                scenarios=[dict(row) for row in data["scenarios"]],
                strategy=StrategyMap.from_dict(data["strategy"]),
                audit=TruncationAudit(
                    tuple(audit["below_eps"]),
                    tuple(audit["forced_capture"]),
                    tuple(audit["beyond_k_max"]),
                ),
                timing={k: float(v) for k, v in data["timing"].items()},
                generated=str(data["generated"]),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise CPDSError(f"malformed report: {e.__class__.__name__}: {e}") from None

    def scenario_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.scenarios, columns=SCENARIO_COLUMNS)

    def trace_frame(self) -> pd.DataFrame:
        rows = []
        for rec in self.solution.trace:
            fbs = rec.attack.fbs_position
            rows.append(
                {
                    "k": rec.k,
                    "upper_bound": rec.upper_bound,
                    "lower_bound": rec.lower_bound,
                    "attacked_lines": "+".join(_ids(rec.attack.attacked_lines)) or "-",
                    "fbs_x": None if fbs is None else fbs[0],
                    "fbs_y": None if fbs is None else fbs[1],
                }
            )
        return pd.DataFrame(rows, columns=TRACE_COLUMNS)

    def strategy_frame(self) -> pd.DataFrame:
        s = self.strategy
        rows: list[dict[str, Any]] = [
            {"role": role, "id": i, "value": None}
            for role, ids in (
                ("hardened_line", s.defense.hardened_lines),
                ("protected_rcs", s.defense.protected_rcs),
                ("attacked_line", s.attack.attacked_lines),
            )
            for i in _ids(ids)
        ]
        rows += [
            {"role": "top_hijack_rcs", "id": r, "value": p} for r, p in s.top_hijack
        ]
        return pd.DataFrame(rows, columns=["role", "id", "value"])


def dump_report(report: Report) -> str:
    return yaml.safe_dump(report.as_dict(), sort_keys=False)


def load_report(path: PathLike) -> Report:
    try:
        data = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as e:
        raise CPDSError(f"malformed report: {e}") from None
    if not isinstance(data, dict):
        raise CPDSError("malformed report: expected a mapping")
    return Report.from_dict(data)


def report_schema() -> dict[str, Any]:
    text = (resources.files(__package__) / "data" / "report.schema.json").read_text()
    return json.loads(text)


def vwritecsv(path: Path, frame: pd.DataFrame):
    vprint(f"+ WRITE {path}")
    frame.to_csv(path, index=False)


def write_report(
    report: Report, out_dir: PathLike, formats: Sequence[str]
) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    if "yaml" in formats:
        vwritetext(out_dir / "report.yaml", dump_report(report))
        written.append(out_dir / "report.yaml")
    if "csv" in formats:
        for name, frame in (
            ("scenarios.csv", report.scenario_frame()),
            ("trace.csv", report.trace_frame()),
        ):
            vwritecsv(out_dir / name, frame)
            written.append(out_dir / name)
    return written


########################################################################
# STUDIES


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def solve_game(
    network: Network, config: RunConfig, cache: Optional[RestorationCache] = None
) -> Report:
    start = time.perf_counter()
    engine = make_engine(network, config, cache)
    budgets = config.budgets(network)
    vprint(
        f"+ SOLVE {network.name or config.case} defend_lines={budgets.defend_lines}"
        f" defend_rcs={budgets.defend_rcs} attack_lines={budgets.attack_lines}"
    )
    solution = solve_ccg(engine, budgets, config.eps, config.max_iter)
    solved = time.perf_counter()
    evaluation = engine.evaluate(solution.defense, solution.worst_attack)
    table = scenario_table(evaluation.scenarios, evaluation.results)
    rows = [{k: _native(v) for k, v in row.items()} for row in table.to_dict("records")]
    logger.debug(
        "cache: %d results, %d hits, %d misses",
        len(engine.cache),
        engine.cache.hits,
        engine.cache.misses,
    )
    return Report(
        config=config.resolved(network),
        solution=solution,
        scenarios=rows,
        strategy=StrategyMap.of(solution, evaluation.targets),
        audit=evaluation.audit,
        timing={"solve_s": solved - start, "total_s": time.perf_counter() - start},
        generated=_now(),
    )


def run_game(config: RunConfig, write: bool = True) -> Report:
    """Load the case, solve the game, and write the report files."""
    network = load_case(config)
    report = solve_game(network, config)
    if write:
        write_report(report, config.out_dir, config.formats)
    return report


@dataclass(frozen=True)
class SweepGrid:
    defend_rcs: Sequence[int]
    defend_lines: Sequence[int]
    attack_lines: Sequence[int]

    def cells(self) -> list[tuple[int, int, int]]:
        return [
            (ndc, ndp, nap)
            for nap in self.attack_lines
            for ndp in self.defend_lines
            for ndc in self.defend_rcs
        ]


SWEEP_COLUMNS = [
    "defend_rcs",
    "defend_lines",
    "attack_lines",
    "resilience",
    "converged",
    "iterations",
    "error",
]


def run_sweep(config: RunConfig, grid: SweepGrid, write: bool = True) -> pd.DataFrame:
    """One game per grid cell, as a long-format table.

    A cell that fails gets a NaN resilience and its error message; the
    sweep moves on to the next cell.
    """
    cells = grid.cells()
    if not cells:
        raise CPDSError("sweep grid is empty")
    network = load_case(config)
    cache = RestorationCache()
    rows = []
    for ndc, ndp, nap in cells:
        cell = config.with_budgets(ndp, ndc, nap)
        try:
            report = solve_game(network, cell, cache)
        except CPDSError as e:
            logger.warning("sweep cell (%d, %d, %d) failed: %s", ndc, ndp, nap, e)
            rows.append([ndc, ndp, nap, math.nan, False, 0, str(e)])
            continue
        sol = report.solution
        rows.append([ndc, ndp, nap, sol.value, sol.converged, len(sol.trace), ""])
    frame = pd.DataFrame(rows, columns=SWEEP_COLUMNS)
    if write and "csv" in config.formats:
        config.out_dir.mkdir(parents=True, exist_ok=True)
        vwritecsv(config.out_dir / "sweep.csv", frame)
    return frame


FBS_STUDY_COLUMNS = [
    "s_ref",
    "fbs_x",
    "fbs_y",
    "attacked_lines",
    "resilience_loss",
    "no_fbs_loss",
    "error",
]


def run_fbs_power_study(
    config: RunConfig, s_refs: Sequence[float], write: bool = True
) -> pd.DataFrame:
    """Worst FBS placement and resilience loss for each reference strength.

    The no-FBS baseline is the worst attack without an FBS against the
    same defense, so it never exceeds the loss with an FBS.
    """
    if not s_refs:
        raise CPDSError("no reference strengths to study")
    network = load_case(config)
    budgets = config.budgets(network)
    cache = RestorationCache()
    rows = []
    for s_ref in s_refs:
        try:
            engine = make_engine(network, config, cache, s_ref=s_ref)
            vprint(f"+ SOLVE {network.name or config.case} s_ref={s_ref:g}")
            solution = solve_ccg(engine, budgets, config.eps, config.max_iter)
            _, baseline = solve_subproblem(
                engine, solution.defense, budgets, positions=[], include_no_fbs=True
            )
        except CPDSError as e:
            logger.warning("fbs study at s_ref=%g failed: %s", s_ref, e)
            rows.append([s_ref, None, None, "", math.nan, math.nan, str(e)])
            continue
        attack = solution.worst_attack
        fbs = attack.fbs_position
        rows.append(
            [
                s_ref,
                None if fbs is None else fbs[0],
                None if fbs is None else fbs[1],
                "+".join(_ids(attack.attacked_lines)) or "-",
                1 - solution.value,
                1 - baseline,
                "",
            ]
        )
    frame = pd.DataFrame(rows, columns=FBS_STUDY_COLUMNS)
    if write and "csv" in config.formats:
        config.out_dir.mkdir(parents=True, exist_ok=True)
        vwritecsv(config.out_dir / "fbs_study.csv", frame)
    return frame


def _split_ids(s: str) -> list[str]:
    return [part.strip() for part in s.split(",") if part.strip()]


def dump_model(
    config: RunConfig,
    stage: str,
    faults: Sequence[str],
    hijacks: Sequence[str],
    path: PathLike,
) -> Path:
    """Write the stage-1, stage-2 or first master MILP as an LP file.

    The master model holds the single block of the worst attack on the
    empty defense.
    """
    network = load_case(config)
    unknown = [lid for lid in faults if lid not in network.line_by_id]
    unknown += [rcs for rcs in hijacks if rcs not in network.line_by_rcs]
    if unknown:
        raise CPDSError(f"unknown line or switch ids: {unknown}")
    scenario = OutcomeScenario.of(faults, hijacks)
    if stage == "1":
        model = build_stage1_model(network, scenario).model
    elif stage == "2":
        model = build_stage2_model(network, scenario).model
    else:
        engine = make_engine(network, config)
        budgets = config.budgets(network)
        attack, _ = solve_subproblem(engine, DefensePlan(), budgets)
        block = block_for_attack(engine, attack, budgets)
        model = build_master(engine, [block], budgets).model
    vprint(f"+ WRITE {path}")
    return write_lp(model, path)


def write_plot_data(report_path: PathLike, out_dir: PathLike) -> list[Path]:
    report = load_report(report_path)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for name, frame in (
        ("scenarios.csv", report.scenario_frame()),
        ("trace.csv", report.trace_frame()),
        ("strategy.csv", report.strategy_frame()),
    ):
        vwritecsv(out_dir / name, frame)
        written.append(out_dir / name)
    return written


########################################################################
# SUBCOMMANDS


def _cmd_run(config: dict[ConfigKey, Any]) -> int:
    report = run_game(RunConfig.from_config(config))
    sol = report.solution
    vprint(f"+ RESULT value={sol.value:.6f} {sol.defense} {sol.worst_attack}")
    return EXIT_OK if sol.converged else EXIT_NOT_CONVERGED


def _cmd_sweep(config: dict[ConfigKey, Any]) -> int:
    grid = SweepGrid(
        parse_int_list(config[ConfigKey.sweep_defend_rcs]),
        parse_int_list(config[ConfigKey.sweep_defend_lines]),
        parse_int_list(config[ConfigKey.sweep_attack_lines]),
    )
    frame = run_sweep(RunConfig.from_config(config), grid)
    if (frame["error"] != "").any():
        return EXIT_ERROR
    return EXIT_OK if frame["converged"].all() else EXIT_NOT_CONVERGED


def _cmd_fbs_study(config: dict[ConfigKey, Any]) -> int:
    frame = run_fbs_power_study(
        RunConfig.from_config(config), parse_float_list(config[ConfigKey.s_refs])
    )
    return EXIT_ERROR if (frame["error"] != "").any() else EXIT_OK


def _cmd_validate(config: dict[ConfigKey, Any]) -> int:
    case = config[ConfigKey.case]
    messages = validate_case(case)
    for msg in messages:
        print(msg)
    if messages:
        return EXIT_ERROR
    vprint(f"+ OK {case}")
    return EXIT_OK


def _cmd_dump_model(config: dict[ConfigKey, Any]) -> int:
    dump_model(
        RunConfig.from_config(config),
        config[ConfigKey.stage],
        _split_ids(config[ConfigKey.faults]),
        _split_ids(config[ConfigKey.hijacks]),
        config[ConfigKey.lp],
    )
    return EXIT_OK


def _cmd_plot_data(config: dict[ConfigKey, Any]) -> int:
    write_plot_data(config[ConfigKey.report], config[ConfigKey.out])
    return EXIT_OK


SUBCOMMANDS: dict[str, Callable[[dict[ConfigKey, Any]], int]] = {
    "run": _cmd_run,
    "sweep": _cmd_sweep,
    "fbs-study": _cmd_fbs_study,
    "validate": _cmd_validate,
    "dump-model": _cmd_dump_model,
    "plot-data": _cmd_plot_data,
}


########################################################################
# MAIN


def parse_cmdline_args(
    argv: Optional[Sequence[str]] = None,
) -> tuple[str, dict[ConfigKey, Any]]:
    common = ArgumentParser(add_help=False)
    common.add_argument("-s", "--silent", help="suppress output", action="store_true")
    common.add_argument(
        "--debug", help="log debug messages to stderr", action="store_true"
    )

    argparser = ArgumentParser(
        prog="cpds-dad",
        description="Resilience studies of cyber-physical distribution systems.",
    )
    subparsers = argparser.add_subparsers(dest="command", required=True)
    for command, keys in SUBCOMMAND_CONFIG_KEYS.items():
        subparser = subparsers.add_parser(
            command, parents=[common], help=SUBCOMMAND_HELP[command]
        )
        for config_key in keys:
            config_key.value.add_arg_to_argparser(subparser)

    args = argparser.parse_args(argv)
    args_dict = vars(args)

    if args.silent:
        _utils.verbose = False
    if args.debug:
        logging.basicConfig(
            level=logging.DEBUG, stream=sys.stderr, format="%(name)s: %(message)s"
        )

    keys = SUBCOMMAND_CONFIG_KEYS[args.command]
    return args.command, {key: args_dict[key.value.name] for key in keys}


def main(argv: Optional[Sequence[str]] = None):
    command, config = parse_cmdline_args(argv)
    try:
        code = SUBCOMMANDS[command](config)
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        sys.exit(EXIT_IO)
    except (KeyboardInterrupt, CPDSError) as e:
        print(f"error: {e}", file=sys.stderr)
        sys.exit(EXIT_ERROR)
    sys.exit(code)
