"""MIP formulations of Valued APEP, LP text export and point evaluation.

Two models: the naive one with x_{r,u} per (resource, user) pair, and the
user-profile one with x_{T,u} per (subset, user) pair and exactly one subset
per user. The quadratic user count z² is linearised by the chords f_i through
(i, i²) and (i+1, (i+1)²), which touch z² at every integer point.

Models are pulp problems. Every row whose first variable is not an x variable
defines that variable: ``eval_at`` fixes x from a relation, sets each head to
the smallest value its rows allow in insertion order, and lets pulp check the
rows and price the objective.
"""
from __future__ import annotations

import logging
import operator
import tempfile
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable

import pulp

from constraints import CardLB, CardUB, SoDU, UserCount
from errors import DomainError, GuardError, InfeasibleError
from model import AuthorizationRelation, Instance

log = logging.getLogger(__name__)

MAX_UP_VARIABLES = 10 ** 7
SENSES = {">=": operator.ge, "<=": operator.le, "=": operator.eq}


@dataclass(frozen=True)
class Row:
    name: str
    terms: tuple[tuple[str, int], ...]
    sense: str
    rhs: int


class Formulation:
    """A pulp problem plus the row records point evaluation walks."""

    def __init__(self, name: str):
        self.problem = pulp.LpProblem(name, pulp.LpMinimize)
        self.variables: dict[str, pulp.LpVariable] = {}
        self.rows: list[Row] = []
        self.objective: dict[str, int] = {}
        self.fixed: dict[str, tuple[int, int]] = {}

    @property
    def name(self) -> str:
        return self.problem.name

    def add_variable(self, name: str, binary: bool = False, upper: int | None = None,
                     fixes: tuple[int, int] | None = None) -> str:
        if name in self.variables:
            raise DomainError(f"variable {name!r} declared twice")
        if binary:
            var = pulp.LpVariable(name, lowBound=0, upBound=1, cat=pulp.LpBinary)
        else:
            var = pulp.LpVariable(name, lowBound=0, upBound=upper, cat=pulp.LpContinuous)
        self.variables[name] = var
        if fixes is not None:
            self.fixed[name] = fixes
        return name

    def add_row(self, name: str, terms: Iterable[tuple[str, int]], sense: str, rhs: int):
        terms = tuple((v, c) for v, c in terms if c)
        if sense not in SENSES:
            raise DomainError(f"unknown sense {sense!r}")
        unknown = [v for v, _ in terms if v not in self.variables]
        if unknown:
            raise DomainError(f"row {name!r} references undeclared {unknown}")
        if name in self.problem.constraints:
            raise DomainError(f"row {name!r} added twice")
        expr = pulp.LpAffineExpression([(self.variables[v], c) for v, c in terms])
        self.problem += SENSES[sense](expr, rhs), name
        self.rows.append(Row(name, terms, sense, rhs))

    def add_objective(self, var: str, coef: int):
        if var not in self.variables:
            raise DomainError(f"objective references undeclared {var!r}")
        if coef:
            self.objective[var] = self.objective.get(var, 0) + coef

    def finish(self) -> Formulation:
        self.problem.setObjective(pulp.LpAffineExpression(
            [(self.variables[v], c) for v, c in sorted(self.objective.items())]))
        return self

    def names_with_prefix(self, prefix: str) -> list[str]:
        return [v for v in self.variables if v.startswith(prefix)]


def parabola_cuts(n: int) -> list[tuple[int, int]]:
    """(slope, intercept) of f_i(z) = (2i+1)z - (i+1)i for i in [1, max(1, n-1)]."""
    return [(2 * i + 1, -(i + 1) * i) for i in range(1, max(2, n))]


def _check_families(instance: Instance):
    if not instance.auth_cost.additive:
        raise DomainError("formulations need an additive authorization cost")
    for c in instance.constraints:
        if isinstance(c, UserCount):
            continue
        if not isinstance(c, (SoDU, CardLB, CardUB)):
            raise DomainError(f"{c.family} has no MIP encoding here")
        if c.penalty.kind != "linear":
            raise DomainError(f"{c.family} needs a linear penalty in a formulation")


def _user_count_rows(f: Formulation, instance: Instance, idx: int, c: UserCount, binary_y: bool,
                     links: Iterable[tuple[str, str, str]]):
    n = instance.n
    if "z" not in f.variables:
        for j in range(n):
            f.add_variable(f"y_u{j}", binary=binary_y, upper=1)
        for row, y, x in links:
            f.add_row(row, [(y, 1), (x, -1)], ">=", 0)
        f.add_variable("z", upper=n)
        f.add_row("count", [("z", 1)] + [(f"y_u{j}", -1) for j in range(n)], "=", 0)
    p = f"p_c{idx}"
    if c.shape == "linear":
        f.add_row(f"c{idx}", [(p, 1), ("z", -c.coef)], ">=", 0)
        return
    for i, (slope, intercept) in enumerate(parabola_cuts(n), start=1):
        f.add_row(f"c{idx}_cut{i}", [(p, 1), ("z", -c.coef * slope)], ">=", c.coef * intercept)


def build_naive(instance: Instance) -> Formulation:
    _check_families(instance)
    n, k = instance.n, instance.k
    auth = instance.auth_cost
    f = Formulation("apep_naive")
    x = [[f.add_variable(f"x_r{i}_u{j}", binary=True, fixes=(j, 1 << i)) for j in range(n)]
         for i in range(k)]
    for idx in range(len(instance.constraints)):
        f.add_variable(f"p_c{idx}")
        f.add_objective(f"p_c{idx}", 1)
    for i in range(k):
        f.add_row(f"cover_r{i}", [(x[i][j], 1) for j in range(n)], ">=", 1)
        for j in range(n):
            if not auth.base[j] >> i & 1:
                f.add_objective(x[i][j], auth.penalty(j, i))
    for idx, c in enumerate(instance.constraints):
        p = f"p_c{idx}"
        if isinstance(c, UserCount):
            links = [(f"link_r{i}_u{j}", f"y_u{j}", x[i][j]) for j in range(n) for i in range(k)]
            _user_count_rows(f, instance, idx, c, True, links)
            continue
        slope = c.penalty.slope
        if isinstance(c, SoDU):
            a, b = instance.resource_index(c.r1), instance.resource_index(c.r2)
            for j in range(n):
                q = f.add_variable(f"q_c{idx}_u{j}", binary=True)
                f.add_row(f"c{idx}_u{j}", [(q, 1), (x[a][j], -1), (x[b][j], -1)], ">=", -1)
            f.add_row(f"c{idx}", [(p, 1)] + [(f"q_c{idx}_u{j}", -slope) for j in range(n)], ">=", 0)
            continue
        r = instance.resource_index(c.r)
        if isinstance(c, CardLB):
            f.add_row(f"c{idx}", [(p, 1)] + [(x[r][j], slope) for j in range(n)], ">=", slope * c.t)
        else:
            f.add_row(f"c{idx}", [(p, 1)] + [(x[r][j], -slope) for j in range(n)], ">=", -slope * c.t)
    log.debug("naive formulation: %d variables, %d rows", len(f.variables), len(f.rows))
    return f.finish()


def build_up(instance: Instance, max_variables: int = MAX_UP_VARIABLES) -> Formulation:
    _check_families(instance)
    n, k = instance.n, instance.k
    size = n << k
    if size > max_variables:
        log.warning("user-profile formulation refused: %d x variables", size)
        raise GuardError("n·2^k", size, max_variables, "use the naive formulation")
    f = Formulation("apep_up")
    subsets = range(1 << k)
    x = [[f.add_variable(f"xT{m}_u{j}", binary=True, fixes=(j, m)) for j in range(n)] for m in subsets]
    for idx in range(len(instance.constraints)):
        f.add_variable(f"p_c{idx}")
        f.add_objective(f"p_c{idx}", 1)
    for j in range(n):
        f.add_row(f"one_u{j}", [(x[m][j], 1) for m in subsets], "=", 1)
    for i in range(k):
        f.add_row(f"cover_r{i}", [(x[m][j], 1) for m in subsets if m >> i & 1 for j in range(n)], ">=", 1)
    for m in subsets:
        for j in range(n):
            f.add_objective(x[m][j], instance.omega_of(j, m))
    for idx, c in enumerate(instance.constraints):
        p = f"p_c{idx}"
        if isinstance(c, UserCount):
            links = [(f"link_T{m}_u{j}", f"y_u{j}", x[m][j]) for j in range(n) for m in subsets if m]
            _user_count_rows(f, instance, idx, c, False, links)
            continue
        slope = c.penalty.slope
        if isinstance(c, SoDU):
            both = (1 << instance.resource_index(c.r1)) | (1 << instance.resource_index(c.r2))
            terms = [(x[m][j], -slope) for m in subsets if m & both == both for j in range(n)]
            f.add_row(f"c{idx}", [(p, 1)] + terms, ">=", 0)
            continue
        bit = 1 << instance.resource_index(c.r)
        covered = [(m, j) for m in subsets if m & bit for j in range(n)]
        if isinstance(c, CardLB):
            f.add_row(f"c{idx}", [(p, 1)] + [(x[m][j], slope) for m, j in covered], ">=", slope * c.t)
        else:
            f.add_row(f"c{idx}", [(p, 1)] + [(x[m][j], -slope) for m, j in covered], ">=", -slope * c.t)
    log.debug("user-profile formulation: %d variables, %d rows", len(f.variables), len(f.rows))
    return f.finish()


# -- files ------------------------------------------------------------------------

def write_lp(f: Formulation, path) -> Path:
    path = Path(path)
    f.problem.writeLP(str(path))
    return path


def export_lp(f: Formulation) -> str:
    """LP text as pulp writes it: variables sorted by name, rows in insertion order."""
    with tempfile.TemporaryDirectory() as tmp:
        return write_lp(f, Path(tmp) / f"{f.name}.lp").read_text(encoding="utf-8")


def reread(f: Formulation) -> pulp.LpProblem:
    """The problem after a trip through an MPS file and pulp's reader."""
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / f"{f.name}.mps"
        f.problem.writeMPS(str(path))
        _, problem = pulp.LpProblem.fromMPS(str(path), sense=pulp.LpMinimize)
    return problem


# -- point evaluation -------------------------------------------------------------

def eval_at(f: Formulation, A: AuthorizationRelation) -> int:
    """Objective at the relation, other variables set as small as their rows allow."""
    values: dict[str, Fraction] = {}
    for name in f.variables:
        if name in f.fixed:
            j, mask = f.fixed[name]
            hit = A.masks[j] & mask == mask if name.startswith("x_r") else A.masks[j] == mask
            values[name] = Fraction(int(hit))
        else:
            values[name] = Fraction(0)
    for row in f.rows:
        head, coef = row.terms[0]
        if head in f.fixed:
            continue
        if coef <= 0 or row.sense == "<=":
            raise DomainError(f"row {row.name!r} does not define {head!r}")
        need = (row.rhs - sum(k * values[v] for v, k in row.terms[1:])) / coef
        values[head] = need if row.sense == "=" else max(values[head], need)
    for name, var in f.variables.items():
        var.varValue = values[name]
    broken = [name for name, c in f.problem.constraints.items() if not c.valid(0)]
    if broken:
        raise InfeasibleError(f"relation violates row {broken[0]!r}")
    total = pulp.value(f.problem.objective) or 0
    if Fraction(total).denominator != 1:
        raise InfeasibleError(f"objective {total} is not integral")
    return int(total)
