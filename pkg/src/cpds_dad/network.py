"""Static cyber-physical network model and its YAML case-file format.

A case file holds one network: nodes, lines (each guarded by one
remote-controlled switch), legitimate base stations, radio and timing
parameters, the FBS deployment region, and default study parameters.

>>> net = parse_network(EXAMPLE_CASE)
>>> [n.id for n in net.nodes]
['1', '2']
>>> grid_positions(net)
[(0.0, 0.0), (50.0, 0.0), (0.0, 50.0), (50.0, 50.0)]
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import Any, Optional

import networkx as nx
import yaml

from ._utils import CPDSError, PathLike, Point

FORMAT_VERSION = 1
SHIPPED_CASES = ("toy6", "ieee33")


class NetworkError(CPDSError):
    pass


########################################################################
# DOMAIN TYPES


class SwitchClass(Enum):
    sectionalizing = "sectionalizing"
    tie = "tie"


@dataclass(frozen=True)
class Node:
    id: str
    is_substation: bool = False
    is_dg: bool = False
    p_load: float = 0.0  # MW
    q_load: float = 0.0  # MVAr
    weight: float = 1.0
    u_min: float = 0.9025  # squared p.u.
    u_max: float = 1.1025
    pg_max: float = 0.0  # MW
    qg_max: float = 0.0  # MVAr
    position: Point = (0.0, 0.0)  # m

    @property
    def is_source(self) -> bool:
        return self.is_substation or self.is_dg


@dataclass(frozen=True)
class Line:
    id: str
    from_node: str
    to_node: str
    length: float  # km
    r: float  # p.u.
    x: float  # p.u.
    s_max: float  # MVA
    switch_class: SwitchClass
    rcs_id: str
    base_closed: bool
    rcs_position: Optional[Point] = None

    @property
    def is_tie(self) -> bool:
        return self.switch_class is SwitchClass.tie

    def other(self, node_id: str) -> str:
        return self.to_node if node_id == self.from_node else self.from_node


@dataclass(frozen=True)
class BaseStation:
    id: str
    position: Point
    sigma: float  # dB
    s_ref: float = 100.0  # dB, reference strength at d0


@dataclass(frozen=True)
class RadioParams:
    s_ref: float = 100.0  # dB, FBS reference strength S(d_0)
    d0: float = 10.0  # m
    path_loss_exp: float = 3.0
    fbs_sigma: float = 4.0  # dB
    d_min: float = 1.0  # m


@dataclass(frozen=True)
class TimeParams:
    # Minutes; the case study uses stage durations of 1, 30 and 30.
    t_fault: float = 0.0
    t_r1: float = 1.0
    t_r2: float = 31.0
    t_r3: float = 61.0


@dataclass(frozen=True)
class Region:
    x_min: float
    y_min: float
    x_max: float
    y_max: float


@dataclass(frozen=True)
class CaseDefaults:
    """Study parameters stored alongside the network in a case file.

    These seed the run configuration; CLI flags override them.
    """

    zeta_a: float = 1.0  # km
    zeta_b: float = 5.0  # km
    p_defend: float = 0.9
    defend_lines: int = 0
    defend_rcs: int = 0
    attack_lines: int = 1
    eps_p: float = 1e-3
    k_max: int = 6
    outcome_cap: int = 12
    stage0: str = "network"
    capture_method: str = "poly"
    poly: Optional[dict[str, Any]] = None


@dataclass(frozen=True)
class Network:
    nodes: tuple[Node, ...]
    lines: tuple[Line, ...]
    base_stations: tuple[BaseStation, ...]
    radio: RadioParams
    times: TimeParams
    region: Region
    grid_step: float
    base_mva: float = 10.0
    name: str = ""
    defaults: CaseDefaults = field(default_factory=CaseDefaults)

    @cached_property
    def node_by_id(self) -> dict[str, Node]:
        return {node.id: node for node in self.nodes}

    @cached_property
    def line_by_id(self) -> dict[str, Line]:
        return {line.id: line for line in self.lines}

    @cached_property
    def line_by_rcs(self) -> dict[str, Line]:
        return {line.rcs_id: line for line in self.lines}

    @property
    def rcs_ids(self) -> list[str]:
        return [line.rcs_id for line in self.lines]

    def with_radio(self, **changes) -> Network:
        radio = RadioParams(**{**self.radio.__dict__, **changes})
        return Network(
            nodes=self.nodes,
            lines=self.lines,
            base_stations=self.base_stations,
            radio=radio,
            times=self.times,
            region=self.region,
            grid_step=self.grid_step,
            base_mva=self.base_mva,
            name=self.name,
            defaults=self.defaults,
        )

    def with_grid_step(self, grid_step: float) -> Network:
        return Network(
            nodes=self.nodes,
            lines=self.lines,
            base_stations=self.base_stations,
            radio=self.radio,
            times=self.times,
            region=self.region,
            grid_step=grid_step,
            base_mva=self.base_mva,
            name=self.name,
            defaults=self.defaults,
        )


########################################################################
# VALIDATION FUNCTIONS
# Each of these functions takes one element, and returns a validation
# error, or None if the element is valid.


def validate_node(node: Node) -> Optional[str]:
    if not node.u_min > 0:
        return "u_min must be positive"
    if not node.u_min < node.u_max:
        return "u_min must be less than u_max"
    if node.is_substation and node.is_dg:
        return "cannot be both substation and dg"
    if node.p_load < 0:
        return "p_load must be non-negative"
    if node.weight < 0:
        return "weight must be non-negative"
    if node.pg_max < 0 or node.qg_max < 0:
        return "generation limits must be non-negative"
    if not node.is_source and (node.pg_max != 0 or node.qg_max != 0):
        return "generation limits must be zero unless substation or dg"
    return None


def validate_line(line: Line) -> Optional[str]:
    if line.from_node == line.to_node:
        return "from and to must differ"
    if not line.length > 0:
        return "length must be positive"
    if line.r < 0 or line.x < 0:
        return "r and x must be non-negative"
    if not line.s_max > 0:
        return "s_max must be positive"
    if line.is_tie and line.base_closed:
        return "tie line cannot be closed in the base topology"
    if not line.is_tie and not line.base_closed:
        return "sectionalizing line must be closed in the base topology"
    return None


def validate_base_station(bs: BaseStation) -> Optional[str]:
    if not bs.sigma > 0:
        return "sigma must be positive"
    return None


def validate_radio(radio: RadioParams) -> Optional[str]:
    if not (radio.d0 > 0 and radio.d_min > 0):
        return "d0 and d_min must be positive"
    if not radio.d_min <= radio.d0:
        return "d_min must not exceed d0"
    if not radio.path_loss_exp > 0:
        return "path_loss_exp must be positive"
    if not radio.fbs_sigma > 0:
        return "fbs_sigma must be positive"
    return None


def validate_times(times: TimeParams) -> Optional[str]:
    if not times.t_fault < times.t_r1 < times.t_r2 < times.t_r3:
        return "need t_fault < t_r1 < t_r2 < t_r3"
    return None


def validate_defaults(defaults: CaseDefaults) -> Optional[str]:
    if not (defaults.zeta_a > 0 and defaults.zeta_b > 0):
        return "inspection intensities must be positive"
    # Enhanced inspection detects more, which needs a larger intensity.
    if not defaults.zeta_b > defaults.zeta_a:
        return "enhanced inspection needs zeta_b > zeta_a"
    if not 0 <= defaults.p_defend <= 1:
        return "p_defend must be a probability"
    if min(defaults.defend_lines, defaults.defend_rcs, defaults.attack_lines) < 0:
        return "budgets must be non-negative"
    if not 0 <= defaults.eps_p < 0.5:
        return "eps_p must be in [0, 0.5)"
    if defaults.k_max < 0 or defaults.outcome_cap < 0:
        return "truncation limits must be non-negative"
    if defaults.stage0 not in ("network", "feeder"):
        return "stage0 must be 'network' or 'feeder'"
    if defaults.capture_method not in ("poly", "exact"):
        return "capture_method must be 'poly' or 'exact'"
    return None


def _base_graph(network: Network) -> nx.MultiGraph:
    graph = nx.MultiGraph()
    graph.add_nodes_from(node.id for node in network.nodes)
    for line in network.lines:
        if line.base_closed:
            graph.add_edge(line.from_node, line.to_node, key=line.id)
    return graph


def validation_errors(network: Network) -> list[str]:
    errors: list[str] = []

    def check(kind: str, name: str, err: Optional[str]):
        if err is not None:
            errors.append(f"{kind} '{name}': {err}")

    for node in network.nodes:
        check("node", node.id, validate_node(node))
    for line in network.lines:
        check("line", line.id, validate_line(line))
    for bs in network.base_stations:
        check("base station", bs.id, validate_base_station(bs))
    check("radio", "radio", validate_radio(network.radio))
    check("times", "times", validate_times(network.times))
    check("defaults", "defaults", validate_defaults(network.defaults))
    if not network.grid_step > 0:
        errors.append("grid_step must be positive")
    if not network.base_mva > 0:
        errors.append("base_mva must be positive")
    if not network.base_stations:
        errors.append("need at least one base station")

    for kind, ids in [
        ("node", [n.id for n in network.nodes]),
        ("line", [ln.id for ln in network.lines]),
        ("rcs", [ln.rcs_id for ln in network.lines]),
        ("base station", [bs.id for bs in network.base_stations]),
    ]:
        seen = set()
        for elem_id in ids:
            if elem_id in seen:
                errors.append(f"{kind} '{elem_id}': duplicate id")
            seen.add(elem_id)

    node_ids = {node.id for node in network.nodes}
    dangling = False
    for line in network.lines:
        for end in (line.from_node, line.to_node):
            if end not in node_ids:
                errors.append(f"line '{line.id}': unknown node '{end}'")
                dangling = True
    if dangling:
        return errors

    ends: dict[frozenset[str], str] = {}
    for line in network.lines:
        pair = frozenset((line.from_node, line.to_node))
        if pair in ends:
            errors.append(f"line '{line.id}': parallel to line '{ends[pair]}'")
        ends.setdefault(pair, line.id)

    degree = {node_id: 0 for node_id in node_ids}
    for line in network.lines:
        degree[line.from_node] += 1
        degree[line.to_node] += 1
    if len(node_ids) > 1:
        for node in network.nodes:
            if degree[node.id] == 0:
                errors.append(f"node '{node.id}': isolated node")

    graph = _base_graph(network)
    if not nx.is_forest(graph):
        errors.append("base topology: closed lines contain a cycle")
    else:
        for tree in nx.connected_components(graph):
            n_sub = sum(network.node_by_id[j].is_substation for j in tree)
            if n_sub != 1:
                members = ",".join(sorted(tree))
                errors.append(
                    f"base topology: tree {{{members}}} has {n_sub} substations"
                )
    return errors


def validate_network(network: Network) -> Network:
    errors = validation_errors(network)
    if errors:
        raise NetworkError("invalid network:\n  " + "\n  ".join(errors))
    return network


########################################################################
# CASE FILE PARSING AND SERIALIZATION


def _point(data: dict[str, Any], xkey: str = "x", ykey: str = "y") -> Point:
    return (float(data[xkey]), float(data[ykey]))


def _from_dict(data: Any) -> Network:
    if not isinstance(data, dict):
        raise NetworkError("parse error: case file must be a mapping")
    version = data.get("format_version")
    if version != FORMAT_VERSION:
        raise NetworkError(
            f"parse error: unsupported format_version {version!r}"
            f" (expected {FORMAT_VERSION})"
        )
    try:
        nodes = tuple(
            Node(
                id=str(n["id"]),
                is_substation=bool(n.get("substation", False)),
                is_dg=bool(n.get("dg", False)),
                p_load=float(n.get("p_load", 0.0)),
                q_load=float(n.get("q_load", 0.0)),
                weight=float(n.get("weight", 1.0)),
                u_min=float(n.get("u_min", Node.u_min)),
                u_max=float(n.get("u_max", Node.u_max)),
                pg_max=float(n.get("pg_max", 0.0)),
                qg_max=float(n.get("qg_max", 0.0)),
                position=_point(n),
            )
            for n in data["nodes"]
        )
        lines = tuple(
            Line(
                id=str(ln["id"]),
                from_node=str(ln["from"]),
                to_node=str(ln["to"]),
                length=float(ln["length"]),
                r=float(ln["r"]),
                x=float(ln["x"]),
                s_max=float(ln["s_max"]),
                switch_class=SwitchClass(ln.get("class", "sectionalizing")),
                rcs_id=str(ln.get("rcs", f"S{ln['id']}")),
                base_closed=bool(ln["closed"]),
                rcs_position=(
                    _point(ln, "rcs_x", "rcs_y") if "rcs_x" in ln else None
                ),
            )
            for ln in data["lines"]
        )
        base_stations = tuple(
            BaseStation(
                id=str(bs["id"]),
                position=_point(bs),
                sigma=float(bs["sigma"]),
                s_ref=float(bs.get("s_ref", BaseStation.s_ref)),
            )
            for bs in data["base_stations"]
        )
        radio = RadioParams(**{k: float(v) for k, v in data["radio"].items()})
        times = TimeParams(**{k: float(v) for k, v in data["times"].items()})
        region = Region(**{k: float(v) for k, v in data["region"].items()})
        grid_step = float(data["grid_step"])
        base_mva = float(data.get("base_mva", 10.0))

        inspection = data.get("inspection", {})
        budgets = data.get("budgets", {})
        truncation = data.get("truncation", {})
        defaults = CaseDefaults(
            zeta_a=float(inspection.get("zeta_a", CaseDefaults.zeta_a)),
            zeta_b=float(inspection.get("zeta_b", CaseDefaults.zeta_b)),
            p_defend=float(inspection.get("p_defend", CaseDefaults.p_defend)),
            defend_lines=int(budgets.get("defend_lines", 0)),
            defend_rcs=int(budgets.get("defend_rcs", 0)),
            attack_lines=int(budgets.get("attack_lines", 1)),
            eps_p=float(truncation.get("eps_p", CaseDefaults.eps_p)),
            k_max=int(truncation.get("k_max", CaseDefaults.k_max)),
            outcome_cap=int(truncation.get("outcome_cap", CaseDefaults.outcome_cap)),
            stage0=str(data.get("restoration", {}).get("stage0", "network")),
            capture_method=str(data.get("capture_method", "poly")),
            poly=data.get("poly"),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise NetworkError(f"parse error: {e.__class__.__name__}: {e}") from None

    return Network(
        nodes=nodes,
        lines=lines,
        base_stations=base_stations,
        radio=radio,
        times=times,
        region=region,
        grid_step=grid_step,
        base_mva=base_mva,
        name=str(data.get("name", "")),
        defaults=defaults,
    )


def parse_network(text: str) -> Network:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise NetworkError(f"parse error: {e}") from None
    return validate_network(_from_dict(data))


def load_network(path: PathLike) -> Network:
    """Read, parse and validate a case file.

    Raises:
        OSError: If the file cannot be read.
        NetworkError: If the file is malformed, or violates a network
            invariant. The message names the invariant and element.
    """
    return parse_network(resolve_case(path).read_text())


def resolve_case(case: PathLike) -> Path:
    """Path of a case file, or of the shipped case named `case`.

    >>> resolve_case("toy6").name
    'toy6.yaml'
    """
    path = Path(case)
    if str(case) in SHIPPED_CASES and not path.exists():
        return Path(str(resources.files(__package__) / "cases" / f"{case}.yaml"))
    return path


def validate_case(path: PathLike) -> list[str]:
    try:
        load_network(path)
    except NetworkError as e:
        return [msg.strip() for msg in str(e).splitlines() if msg.strip()]
    return []


def _to_dict(network: Network) -> dict[str, Any]:
    d = network.defaults
    data: dict[str, Any] = {
        "format_version": FORMAT_VERSION,
        "name": network.name,
        "base_mva": network.base_mva,
        "region": dict(network.region.__dict__),
        "grid_step": network.grid_step,
        "radio": dict(network.radio.__dict__),
        "times": dict(network.times.__dict__),
        "nodes": [
            {
                "id": n.id,
                "substation": n.is_substation,
                "dg": n.is_dg,
                "p_load": n.p_load,
                "q_load": n.q_load,
                "weight": n.weight,
                "u_min": n.u_min,
                "u_max": n.u_max,
                "pg_max": n.pg_max,
                "qg_max": n.qg_max,
                "x": n.position[0],
                "y": n.position[1],
            }
            for n in network.nodes
        ],
        "lines": [],
        "base_stations": [
            {
                "id": bs.id,
                "x": bs.position[0],
                "y": bs.position[1],
                "sigma": bs.sigma,
                "s_ref": bs.s_ref,
            }
            for bs in network.base_stations
        ],
        "inspection": {"zeta_a": d.zeta_a, "zeta_b": d.zeta_b, "p_defend": d.p_defend},
        "budgets": {
            "defend_lines": d.defend_lines,
            "defend_rcs": d.defend_rcs,
            "attack_lines": d.attack_lines,
        },
        "truncation": {
            "eps_p": d.eps_p, "k_max": d.k_max, "outcome_cap": d.outcome_cap
        },
        "restoration": {"stage0": d.stage0},
        "capture_method": d.capture_method,
    }
    for line in network.lines:
        line_data: dict[str, Any] = {
            "id": line.id,
            "from": line.from_node,
            "to": line.to_node,
            "length": line.length,
            "r": line.r,
            "x": line.x,
            "s_max": line.s_max,
            "class": line.switch_class.value,
            "rcs": line.rcs_id,
            "closed": line.base_closed,
        }
        if line.rcs_position is not None:
            line_data["rcs_x"], line_data["rcs_y"] = line.rcs_position
        data["lines"].append(line_data)
    if d.poly is not None:
        data["poly"] = d.poly
    return data


def dump_network(network: Network) -> str:
    return yaml.safe_dump(_to_dict(network), sort_keys=False)


def save_network(network: Network, path: PathLike) -> Path:
    path = Path(path)
    path.write_text(dump_network(network))
    return path


########################################################################
# QUERIES


Incidence = tuple[Line, str]  # (line, other endpoint)


def adjacency(network: Network) -> dict[str, list[Incidence]]:
    adj: dict[str, list[Incidence]] = {node.id: [] for node in network.nodes}
    for line in network.lines:
        adj[line.from_node].append((line, line.to_node))
        adj[line.to_node].append((line, line.from_node))
    return adj


def _axis(lo: float, hi: float, step: float) -> list[float]:
    count = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return [lo + k * step for k in range(count)]


def grid_positions(network: Network) -> list[Point]:
    """Candidate FBS locations: lattice points of the region.

    Points are spaced `grid_step` apart starting at the lower-left
    corner, ordered row by row with ascending x inside each row.
    """
    region = network.region
    if not (region.x_max > region.x_min and region.y_max > region.y_min):
        raise NetworkError("degenerate region: need positive width and height")
    if not network.grid_step > 0:
        raise NetworkError("grid_step must be positive")
    xs = _axis(region.x_min, region.x_max, network.grid_step)
    ys = _axis(region.y_min, region.y_max, network.grid_step)
    return [(x, y) for y in ys for x in xs]


def rcs_position(network: Network, line: Line) -> Point:
    if line.rcs_position is not None:
        return line.rcs_position
    a = network.node_by_id[line.from_node].position
    b = network.node_by_id[line.to_node].position
    return ((a[0] + b[0]) / 2, (a[1] + b[1]) / 2)


def feeders(network: Network) -> dict[str, str]:
    """Map each node to the substation feeding it in the base topology."""
    result: dict[str, str] = {}
    for tree in nx.connected_components(_base_graph(network)):
        sub = next(j for j in sorted(tree) if network.node_by_id[j].is_substation)
        result.update({j: sub for j in tree})
    return result


def total_weighted_load(network: Network) -> float:
    return sum(node.weight * node.p_load for node in network.nodes)


def dist(a: Point, b: Point) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


EXAMPLE_CASE = """
format_version: 1
name: two-node
region: {x_min: 0, y_min: 0, x_max: 50, y_max: 50}
grid_step: 50
radio: {s_ref: 100, d0: 10, path_loss_exp: 3, fbs_sigma: 4, d_min: 1}
times: {t_fault: 0, t_r1: 1, t_r2: 31, t_r3: 61}
nodes:
  - {id: "1", substation: true, pg_max: 1, qg_max: 1, x: 0, y: 0}
  - {id: "2", p_load: 0.1, q_load: 0.05, x: 50, y: 0}
lines:
  - {id: L1-2, from: "1", to: "2", length: 1, r: 0.01, x: 0.01, s_max: 1,
     class: sectionalizing, rcs: S1-2, closed: true}
base_stations:
  - {id: BS1, x: 25, y: 50, sigma: 4, s_ref: 100}
"""
