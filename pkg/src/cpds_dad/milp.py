"""Small solver-agnostic MILP layer with pluggable backends.

Supported backends:
- ``highs``: HiGHS through `scipy.optimize.milp` (default).
- ``cbc``: COIN-OR CBC through python-mip (`pip install cpds-dad[cbc]`).

The backend comes from `SolverOptions.backend`, which defaults to the
`CPDS_SOLVER` environment variable.

>>> m = Model("demo")
>>> x = m.add_var("x", binary=True)
>>> y = m.add_var("y", ub=2.0)
>>> m.add_constr({x: 1.0, y: 1.0}, "<=", 2.5)
>>> m.set_objective({x: -1.0, y: -1.0})
>>> round(solve(m).objective, 6)
-2.5
"""

from __future__ import annotations

import logging
import math
import os
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import NamedTuple, Optional

import numpy as np
from scipy import sparse
from scipy.optimize import Bounds, LinearConstraint, milp

from ._utils import CPDSError, PathLike

logger = logging.getLogger(__name__)

INF = math.inf

Terms = dict[int, float]


class SolverError(CPDSError):
    pass


class Sense(Enum):
    le = "<="
    ge = ">="
    eq = "="


class Status(Enum):
    optimal = "optimal"
    infeasible = "infeasible"
    limit = "limit"


########################################################################
# MODEL


@dataclass
class Var:
    name: str
    lb: float
    ub: float
    integer: bool


@dataclass
class Constraint:
    name: str
    terms: Terms
    sense: Sense
    rhs: float


@dataclass
class Model:
    name: str
    vars: list[Var] = field(default_factory=list)
    constrs: list[Constraint] = field(default_factory=list)
    objective: Terms = field(default_factory=dict)
    objective_constant: float = 0.0
    minimize: bool = True

    def add_var(
        self, name: str, lb: float = 0.0, ub: float = INF, binary: bool = False
    ) -> int:
        if binary:
            lb, ub = max(lb, 0.0), min(ub, 1.0)
        self.vars.append(Var(name, lb, ub, binary))
        return len(self.vars) - 1

    def add_constr(
        self, terms: Terms, sense: str, rhs: float, name: Optional[str] = None
    ):
        terms = {i: c for i, c in terms.items() if c != 0}
        if name is None:
            name = f"c{len(self.constrs)}"
        self.constrs.append(Constraint(name, terms, Sense(sense), float(rhs)))

    def set_objective(
        self, terms: Terms, minimize: bool = True, constant: float = 0.0
    ):
        self.objective = {i: c for i, c in terms.items() if c != 0}
        self.minimize = minimize
        self.objective_constant = constant

    def fix(self, var: int, value: float):
        self.vars[var].lb = self.vars[var].ub = value

    @property
    def n_integer(self) -> int:
        return sum(v.integer for v in self.vars)

    def summary(self) -> str:
        return (
            f"{self.name}: {len(self.vars)} vars ({self.n_integer} integer),"
            f" {len(self.constrs)} constraints"
        )


class Solution(NamedTuple):
    x: np.ndarray
    objective: float
    status: Status


########################################################################
# SOLVER OPTIONS


def _env_backend() -> str:
    return os.environ.get("CPDS_SOLVER", "highs").lower()


@dataclass(frozen=True)
class SolverOptions:
    backend: str = field(default_factory=_env_backend)
    time_limit: Optional[float] = None  # seconds
    mip_rel_gap: float = 1e-9
    mip_abs_gap: float = 1e-7
    threads: int = 1
    seed: int = 0


def validate_backend(backend: str) -> Optional[str]:
    if backend not in _BACKENDS:
        expected = sorted(_BACKENDS)
        return f"unknown solver backend '{backend}' (expected one of {expected})"
    return None


# HiGHS settings that `scipy.optimize.milp` has no option for.
_HIGHS_UNSUPPORTED = ("mip_abs_gap", "seed", "threads")
_warned_highs: set[tuple[str, object]] = set()


def highs_ignored_options(opts: SolverOptions) -> list[str]:
    """Names of options in `opts` that the highs backend cannot apply.

    >>> highs_ignored_options(SolverOptions(backend="highs", seed=3))
    ['seed']
    """
    defaults = SolverOptions(backend=opts.backend)
    return [
        name
        for name in _HIGHS_UNSUPPORTED
        if getattr(opts, name) != getattr(defaults, name)
    ]


########################################################################
# BACKENDS


def _solve_highs(model: Model, opts: SolverOptions) -> Solution:
    for name in highs_ignored_options(opts):
        key = (name, getattr(opts, name))
        if key not in _warned_highs:
            _warned_highs.add(key)
            logger.warning(
                "highs backend ignores %s=%s; use the cbc backend to set it",
                name,
                key[1],
            )
    n = len(model.vars)
    c = np.zeros(n)
    for i, coef in model.objective.items():
        c[i] = coef
    if not model.minimize:
        c = -c
    lb = np.array([v.lb for v in model.vars])
    ub = np.array([v.ub for v in model.vars])
    integrality = np.array([1 if v.integer else 0 for v in model.vars])

    constraints = []
    if model.constrs:
        rows, cols, data = [], [], []
        lo = np.empty(len(model.constrs))
        hi = np.empty(len(model.constrs))
        for r, con in enumerate(model.constrs):
            for i, coef in con.terms.items():
                rows.append(r)
                cols.append(i)
                data.append(coef)
            lo[r] = -INF if con.sense is Sense.le else con.rhs
            hi[r] = INF if con.sense is Sense.ge else con.rhs
        a = sparse.csr_matrix((data, (rows, cols)), shape=(len(model.constrs), n))
        constraints.append(LinearConstraint(a, lo, hi))

    options: dict = {"disp": False, "mip_rel_gap": opts.mip_rel_gap}
    if opts.time_limit is not None:
        options["time_limit"] = opts.time_limit
    res = milp(
        c,
        integrality=integrality,
        bounds=Bounds(lb, ub),
        constraints=constraints or None,
        options=options,
    )
    if res.status == 2:
        return Solution(np.full(n, np.nan), math.nan, Status.infeasible)
    if res.x is None:
        raise SolverError(f"{model.name}: HiGHS failed: {res.message}")
    x = np.asarray(res.x, dtype=float)
    status = Status.optimal if res.status == 0 else Status.limit
    return Solution(x, _objective_value(model, x), status)


def _solve_cbc(model: Model, opts: SolverOptions) -> Solution:
    try:
        import mip
    except ImportError:
        raise SolverError(
            "backend 'cbc' needs python-mip: install cpds-dad[cbc]"
        ) from None

    m = mip.Model(model.name, sense=mip.MINIMIZE, solver_name=mip.CBC)
    m.verbose = 0
    m.threads = opts.threads
    m.seed = opts.seed
    m.max_mip_gap = opts.mip_rel_gap
    m.max_mip_gap_abs = opts.mip_abs_gap
    xs = [
        m.add_var(
            name=f"v{i}",
            lb=v.lb,
            ub=v.ub,
            var_type=mip.INTEGER if v.integer else mip.CONTINUOUS,
        )
        for i, v in enumerate(model.vars)
    ]
    for con in model.constrs:
        if not con.terms:
            if not _holds(0.0, con.sense, con.rhs):
                return Solution(np.full(len(xs), np.nan), math.nan, Status.infeasible)
            continue
        expr = mip.xsum(coef * xs[i] for i, coef in con.terms.items())
        if con.sense is Sense.le:
            m.add_constr(expr <= con.rhs, name=f"r{len(m.constrs)}")
        elif con.sense is Sense.ge:
            m.add_constr(expr >= con.rhs, name=f"r{len(m.constrs)}")
        else:
            m.add_constr(expr == con.rhs, name=f"r{len(m.constrs)}")
    sign = 1.0 if model.minimize else -1.0
    m.objective = mip.minimize(
        mip.xsum(sign * coef * xs[i] for i, coef in model.objective.items())
    )

    max_seconds = opts.time_limit if opts.time_limit is not None else mip.INF
    status = m.optimize(max_seconds=max_seconds)
    if status in (
        mip.OptimizationStatus.INFEASIBLE, mip.OptimizationStatus.INT_INFEASIBLE
    ):
        return Solution(np.full(len(xs), np.nan), math.nan, Status.infeasible)
    if status not in (mip.OptimizationStatus.OPTIMAL, mip.OptimizationStatus.FEASIBLE):
        raise SolverError(f"{model.name}: CBC failed with status {status.name}")
    x = np.array([var.x for var in xs], dtype=float)
    done = Status.optimal if status == mip.OptimizationStatus.OPTIMAL else Status.limit
    return Solution(x, _objective_value(model, x), done)


_BACKENDS = {"highs": _solve_highs, "cbc": _solve_cbc}


def _holds(lhs: float, sense: Sense, rhs: float, tol: float = 0.0) -> bool:
    if sense is Sense.le:
        return lhs <= rhs + tol
    if sense is Sense.ge:
        return lhs >= rhs - tol
    return abs(lhs - rhs) <= tol


def _objective_value(model: Model, x: np.ndarray) -> float:
    return model.objective_constant + sum(c * x[i] for i, c in model.objective.items())


def solve(model: Model, opts: Optional[SolverOptions] = None) -> Solution:
    """Solve `model` to global optimality with the configured backend.

    Infeasibility is reported through `Solution.status`; a time limit
    hit with an incumbent returns it with status `limit`.

    Raises:
        SolverError: If the backend is unknown or unavailable, or fails
            without a solution.
    """
    if opts is None:
        opts = SolverOptions()
    err = validate_backend(opts.backend)
    if err is not None:
        raise SolverError(err)
    logger.debug("solving %s with %s", model.summary(), opts.backend)
    return _BACKENDS[opts.backend](model, opts)


def violations(model: Model, x: np.ndarray, tol: float = 1e-6) -> list[str]:
    """Names of bounds and constraints that `x` violates."""
    bad = []
    for v, val in zip(model.vars, x):
        if val < v.lb - tol or val > v.ub + tol:
            bad.append(f"bound {v.name}")
        elif v.integer and abs(val - round(val)) > tol:
            bad.append(f"integrality {v.name}")
    for con in model.constrs:
        lhs = sum(c * x[i] for i, c in con.terms.items())
        if not _holds(lhs, con.sense, con.rhs, tol):
            bad.append(f"constraint {con.name}")
    return bad


########################################################################
# LP FILE OUTPUT


_LP_BAD_CHARS = re.compile(r"[^A-Za-z0-9_.()\[\]{}!\"#$%&/,;?@'`|~]")


def _lp_name(name: str) -> str:
    name = _LP_BAD_CHARS.sub("_", name)
    # Names may not start with a digit, a period or the letter 'e'.
    if not name or name[0].isdigit() or name[0] in ".eE":
        name = "_" + name
    return name


def _lp_expr(terms: Terms, names: list[str], per_line: int = 6) -> str:
    if not terms:
        return "0 " + names[0] if names else "0"
    parts = []
    for k, (i, coef) in enumerate(terms.items()):
        sign = "-" if coef < 0 else "+"
        term = f"{sign} {abs(coef):.12g} {names[i]}"
        if k and k % per_line == 0:
            term = "\n   " + term
        parts.append(term)
    return " ".join(parts)


def format_lp(model: Model) -> str:
    """Render `model` in CPLEX LP format."""
    names = [_lp_name(v.name) for v in model.vars]
    out = [f"\\ Problem: {model.name}"]
    out.append("Minimize" if model.minimize else "Maximize")
    out.append(f" obj: {_lp_expr(model.objective, names)}")
    if model.objective_constant:
        out.append(f"\\ objective constant: {model.objective_constant:.12g}")
    out.append("Subject To")
    for con in model.constrs:
        out.append(
            f" {_lp_name(con.name)}: {_lp_expr(con.terms, names)}"
            f" {con.sense.value} {con.rhs:.12g}"
        )
    out.append("Bounds")
    for name, v in zip(names, model.vars):
        if v.integer and v.lb == 0 and v.ub == 1:
            continue
        lb = "-inf" if v.lb == -INF else f"{v.lb:.12g}"
        ub = "+inf" if v.ub == INF else f"{v.ub:.12g}"
        out.append(f" {lb} <= {name} <= {ub}")
    binaries = [
        n for n, v in zip(names, model.vars) if v.integer and v.lb == 0 and v.ub == 1
    ]
    generals = [
        n
        for n, v in zip(names, model.vars)
        if v.integer and not (v.lb == 0 and v.ub == 1)
    ]
    if binaries:
        out.append("Binaries")
        out.extend(f" {n}" for n in binaries)
    if generals:
        out.append("Generals")
        out.extend(f" {n}" for n in generals)
    out.append("End")
    return "\n".join(out) + "\n"


def write_lp(model: Model, path: PathLike) -> Path:
    path = Path(path)
    path.write_text(format_lp(model))
    return path
