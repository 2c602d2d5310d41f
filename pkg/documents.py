"""JSON documents: instances, relations, solve results, workflows and plans.

Readers are strict: unknown fields, wrong types and unknown identifiers raise
DocumentError. Writers emit a fixed field order so equal inputs give
byte-identical files.
"""
from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any, Mapping

from constraints import (
    BoDE, BoDU, CardLB, CardUB, CustomConstraint, PenaltySpec, SoDE, SoDU, UserCount, linear, table,
)
from errors import DocumentError, DomainError
from model import AuthCost, AuthorizationRelation, Instance, SolveResult, bits, categorize
from resiliency import ExtendedPlan, extended_plan_from_relation
from wsp import DisjointSets, MustDiffer, MustEqual, Plan, WspInstance

log = logging.getLogger(__name__)

_PAIR_TYPES = {"sod_u": SoDU, "bod_u": BoDU, "sod_e": SoDE, "bod_e": BoDE}
_CARD_TYPES = {"card_ub": CardUB, "card_lb": CardLB}


def dumps(doc: Mapping) -> str:
    return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"


def write_json(doc: Mapping, path) -> None:
    Path(path).write_text(dumps(doc), encoding="utf-8")


def read_json(path) -> Any:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DocumentError(f"cannot read {path}: {exc.strerror}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise DocumentError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None


def _fields(doc, where: str, required=(), optional=()) -> dict:
    if not isinstance(doc, dict):
        raise DocumentError(f"{where}: expected an object")
    unknown = set(doc) - set(required) - set(optional)
    if unknown:
        raise DocumentError(f"{where}: unknown fields {sorted(unknown)}")
    missing = [f for f in required if f not in doc]
    if missing:
        raise DocumentError(f"{where}: missing fields {missing}")
    return doc


def _int(value, where: str, minimum: int = 0) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise DocumentError(f"{where}: expected an integer, got {value!r}")
    if value < minimum:
        raise DocumentError(f"{where}: must be at least {minimum}")
    return value


def _names(value, where: str) -> tuple[str, ...]:
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise DocumentError(f"{where}: expected a list of strings")
    return tuple(value)


# -- penalties and constraints ---------------------------------------------

def _penalty_from(value, where: str) -> PenaltySpec:
    if value is None:
        return linear()
    if isinstance(value, dict):
        body = _fields(value, where, ("values",), ("tail_slope",))
        values = [_int(v, f"{where}.values", 1) for v in body["values"]]
        return table(values, _int(body.get("tail_slope", 1), f"{where}.tail_slope", 1))
    return linear(_int(value, where, 1))


def _penalty_to(spec: PenaltySpec):
    if spec.kind == "linear":
        return spec.slope
    return {"values": list(spec.values), "tail_slope": spec.tail_slope}


def constraint_from_dict(doc, where: str = "constraint"):
    kind = doc.get("type") if isinstance(doc, dict) else None
    try:
        if kind in _PAIR_TYPES:
            cls = _PAIR_TYPES[kind]
            if kind in ("sod_e", "bod_e"):
                body = _fields(doc, where, ("type", "scope"), ("ell",))
                r1, r2 = _pair(body["scope"], where)
                return cls(r1, r2, _int(body.get("ell", 1), f"{where}.ell", 1))
            body = _fields(doc, where, ("type", "scope"), ("penalty", "slope"))
            r1, r2 = _pair(body["scope"], where)
            return cls(r1, r2, _penalty_from(body.get("penalty", body.get("slope")), f"{where}.penalty"))
        if kind in _CARD_TYPES:
            body = _fields(doc, where, ("type", "scope", "t"), ("penalty", "slope"))
            scope = _names(body["scope"], f"{where}.scope")
            if len(scope) != 1:
                raise DocumentError(f"{where}: cardinality scope must name one resource")
            return _CARD_TYPES[kind](scope[0], _int(body["t"], f"{where}.t", 1),
                                     _penalty_from(body.get("penalty", body.get("slope")), f"{where}.penalty"))
        if kind == "user_count":
            body = _fields(doc, where, ("type",), ("scope", "shape", "coef", "slope"))
            if body.get("scope"):
                raise DocumentError(f"{where}: user_count takes no scope")
            shape = body.get("shape", "quadratic")
            coef = body.get("coef", body.get("slope", 1))
            return UserCount(shape, _int(coef, f"{where}.coef", 1))
    except DomainError as exc:
        if isinstance(exc, DocumentError):
            raise
        raise DocumentError(f"{where}: {exc}") from None
    raise DocumentError(f"{where}: unknown constraint type {kind!r}")


def _pair(scope, where):
    names = _names(scope, f"{where}.scope")
    if len(names) != 2:
        raise DocumentError(f"{where}: scope must name two resources")
    return names


def constraint_to_dict(c) -> dict:
    if isinstance(c, CustomConstraint):
        raise DocumentError(f"custom constraint {c.name!r} has no JSON form")
    if isinstance(c, UserCount):
        return {"type": c.family, "shape": c.shape, "coef": c.coef}
    if isinstance(c, (SoDE, BoDE)):
        return {"type": c.family, "scope": list(c.scope), "ell": c.ell}
    if isinstance(c, (CardUB, CardLB)):
        return {"type": c.family, "scope": list(c.scope), "t": c.t, "penalty": _penalty_to(c.penalty)}
    return {"type": c.family, "scope": list(c.scope), "penalty": _penalty_to(c.penalty)}


# -- authorization ------------------------------------------------------------

def _auth_from(doc, users, targets, where) -> AuthCost:
    body = _fields(doc, where, (), ("pairs", "pair_penalty"))
    upos = {u: i for i, u in enumerate(users)}
    tpos = {t: i for i, t in enumerate(targets)}
    base = [0] * len(users)
    for pair in body.get("pairs", []):
        if not (isinstance(pair, list) and len(pair) == 2):
            raise DocumentError(f"{where}.pairs: each pair must be [user, resource]")
        user, target = pair
        if user not in upos or target not in tpos:
            raise DocumentError(f"{where}.pairs: unknown pair {pair!r}")
        base[upos[user]] |= 1 << tpos[target]
    penalty = body.get("pair_penalty", 1)
    if isinstance(penalty, list):
        if len(penalty) != len(users) or any(not isinstance(row, list) or len(row) != len(targets)
                                             for row in penalty):
            raise DocumentError(f"{where}.pair_penalty: matrix must be users × {len(targets)}")
        penalty = tuple(tuple(_int(p, f"{where}.pair_penalty") for p in row) for row in penalty)
    else:
        penalty = _int(penalty, f"{where}.pair_penalty")
    return AuthCost(tuple(base), penalty)


def _auth_to(auth: AuthCost, users, targets) -> dict:
    if not auth.additive:
        raise DocumentError("authorization costs given as a function have no JSON form")
    pairs = [[u, targets[r]] for u, b in zip(users, auth.base) for r in bits(b)]
    penalty = auth.pair_penalty
    if not isinstance(penalty, int):
        penalty = [list(row) for row in penalty]
    return {"pairs": pairs, "pair_penalty": penalty}


# -- instances ------------------------------------------------------------------

def instance_from_dict(doc) -> Instance:
    body = _fields(doc, "instance", ("resources", "users"), ("auth", "constraints", "meta"))
    resources = _names(body["resources"], "resources")
    users = _names(body["users"], "users")
    raw = body.get("constraints", [])
    if not isinstance(raw, list):
        raise DocumentError("constraints: expected a list")
    constraints = tuple(constraint_from_dict(c, f"constraints[{i}]") for i, c in enumerate(raw))
    meta = body.get("meta", {})
    if not isinstance(meta, dict):
        raise DocumentError("meta: expected an object")
    try:
        auth = _auth_from(body.get("auth", {}), users, resources, "auth")
        return Instance(users, resources, constraints, auth, meta)
    except DocumentError:
        raise
    except DomainError as exc:
        raise DocumentError(f"instance: {exc}") from None


def instance_to_dict(instance: Instance) -> dict:
    doc = {
        "resources": list(instance.resources),
        "users": list(instance.users),
        "auth": _auth_to(instance.auth_cost, instance.users, instance.resources),
        "constraints": [constraint_to_dict(c) for c in instance.constraints],
    }
    if instance.meta:
        doc["meta"] = dict(instance.meta)
    return doc


def load_instance(path) -> Instance:
    return instance_from_dict(read_json(path))


# -- relations and results ------------------------------------------------------

def relation_from_dict(instance: Instance, doc) -> AuthorizationRelation:
    body = _fields(doc, "relation", ("assignment",))
    assignment = body["assignment"]
    if not isinstance(assignment, dict):
        raise DocumentError("assignment: expected an object")
    try:
        return AuthorizationRelation.from_assignment(
            instance, {u: _names(rs, f"assignment.{u}") for u, rs in assignment.items()})
    except DocumentError:
        raise
    except DomainError as exc:
        raise DocumentError(f"relation: {exc}") from None


def relation_to_dict(A: AuthorizationRelation) -> dict:
    return {"assignment": {u: rs for u, rs in A.assignment().items() if rs}}


def result_to_dict(instance: Instance, result: SolveResult, timing: bool = False) -> dict:
    doc = {
        "total_weight": result.total_weight,
        "breakdown": {
            "authorizations": result.breakdown.omega,
            "constraints": list(result.breakdown.constraints),
            "categories": categorize(instance, result.relation),
        },
        "users_authorized": result.relation.user_count(),
        "meta": dict(result.meta),
        "assignment": relation_to_dict(result.relation)["assignment"],
    }
    if timing:
        doc["wall_time"] = round(result.wall_time, 6)
    return doc


# -- workflows and plans ------------------------------------------------------------

def wsp_from_dict(doc) -> WspInstance:
    body = _fields(doc, "workflow", ("steps", "users"), ("auth", "constraints", "meta"))
    steps = _names(body["steps"], "steps")
    users = _names(body["users"], "users")
    constraints = []
    for i, c in enumerate(body.get("constraints", [])):
        where = f"constraints[{i}]"
        kind = c.get("type") if isinstance(c, dict) else None
        try:
            if kind in ("must_equal", "must_differ"):
                item = _fields(c, where, ("type", "scope"), ("penalty",))
                s1, s2 = _pair(item["scope"], where)
                cls = MustEqual if kind == "must_equal" else MustDiffer
                constraints.append(cls(s1, s2, _int(item.get("penalty", 1), f"{where}.penalty", 1)))
            elif kind == "disjoint_sets":
                item = _fields(c, where, ("type", "scope"), ("penalty",))
                scope = item["scope"]
                if not isinstance(scope, list) or len(scope) != 2:
                    raise DocumentError(f"{where}: scope must hold two step lists")
                constraints.append(DisjointSets(_names(scope[0], f"{where}.scope"), _names(scope[1], f"{where}.scope"),
                                                _penalty_from(item.get("penalty"), f"{where}.penalty")))
            else:
                raise DocumentError(f"{where}: unknown workflow constraint type {kind!r}")
        except DocumentError:
            raise
        except DomainError as exc:
            raise DocumentError(f"{where}: {exc}") from None
    try:
        auth = _auth_from(body.get("auth", {}), users, steps, "auth")
        return WspInstance(steps, users, tuple(constraints), auth, body.get("meta", {}))
    except DocumentError:
        raise
    except DomainError as exc:
        raise DocumentError(f"workflow: {exc}") from None


def wsp_to_dict(w: WspInstance) -> dict:
    constraints = []
    for c in w.constraints:
        if isinstance(c, DisjointSets):
            constraints.append({"type": c.family, "scope": [list(c.first), list(c.second)],
                                "penalty": _penalty_to(c.penalty)})
        else:
            constraints.append({"type": c.family, "scope": [c.s1, c.s2], "penalty": c.penalty})
    doc = {"steps": list(w.steps), "users": list(w.users),
           "auth": _auth_to(w.auth_cost, w.users, w.steps), "constraints": constraints}
    if w.meta:
        doc["meta"] = dict(w.meta)
    return doc


def load_wsp(path) -> WspInstance:
    return wsp_from_dict(read_json(path))


def plan_to_dict(plan: Plan) -> dict:
    return {"plan": plan.as_dict()}


def plan_from_dict(w: WspInstance, doc) -> Plan:
    body = _fields(doc, "plan document", ("plan",))
    if not isinstance(body["plan"], dict):
        raise DocumentError("plan: expected an object")
    try:
        return Plan.from_mapping(w, body["plan"])
    except DomainError as exc:
        raise DocumentError(f"plan: {exc}") from None


def extended_plan_to_dict(ext: ExtendedPlan) -> dict:
    return ext.as_dict()


def extended_plan_from_dict(w: WspInstance, doc) -> ExtendedPlan:
    """Accepts ``{step: [users]}`` or a solve result / relation with an assignment."""
    if not isinstance(doc, dict):
        raise DocumentError("extended plan: expected an object")
    try:
        if "assignment" in doc:
            apep = Instance(w.users, w.steps)
            relation = relation_from_dict(apep, {"assignment": doc["assignment"]})
            return extended_plan_from_relation(relation)
        mapping = {s: _names(us, f"extended plan.{s}") for s, us in doc.items()}
        return ExtendedPlan.from_mapping(w, mapping)
    except DocumentError:
        raise
    except DomainError as exc:
        raise DocumentError(f"extended plan: {exc}") from None
