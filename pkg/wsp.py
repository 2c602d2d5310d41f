"""Valued WSP with (=), (≠) and disjoint-set constraints, and the reductions
that turn restricted Valued APEP instances into it.

A plan is scored from the partition of steps it induces: each block goes to
one distinct user, so the constraint part depends on the partition alone and
the authorization part is a min-cost assignment of blocks to users.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import ClassVar, Iterator, Mapping, Sequence

import numpy as np

from constraints import BoDE, BoDU, PenaltySpec, SoDU, linear
from errors import DomainError, GuardError, InfeasibleError
from matching import min_cost_assignment
from model import AuthCost, AuthorizationRelation, Instance, bits, check_weight

log = logging.getLogger(__name__)

MAX_WSP_STEPS = 12


def _check_steps(c):
    if c.s1 == c.s2:
        raise DomainError(f"{c.family} needs two distinct steps, got {c.s1!r} twice")
    if c.penalty < 1:
        raise DomainError("WSP constraint penalty must be positive")


@dataclass(frozen=True)
class MustEqual:
    """(s1, s2, =): penalty unless both steps go to the same user."""
    s1: str
    s2: str
    penalty: int = 1
    family: ClassVar[str] = "must_equal"

    def __post_init__(self):
        _check_steps(self)

    @property
    def scope(self):
        return (self.s1, self.s2)


@dataclass(frozen=True)
class MustDiffer:
    """(s1, s2, ≠): penalty when both steps go to the same user."""
    s1: str
    s2: str
    penalty: int = 1
    family: ClassVar[str] = "must_differ"

    def __post_init__(self):
        _check_steps(self)

    @property
    def scope(self):
        return (self.s1, self.s2)


@dataclass(frozen=True)
class DisjointSets:
    """(S1, S2, ∅): weight f(|π(S1) ∩ π(S2)|)."""
    first: tuple[str, ...]
    second: tuple[str, ...]
    penalty: PenaltySpec = field(default_factory=linear)
    family: ClassVar[str] = "disjoint_sets"

    def __post_init__(self):
        object.__setattr__(self, "first", tuple(self.first))
        object.__setattr__(self, "second", tuple(self.second))
        if not self.first or not self.second:
            raise DomainError("disjoint-set constraint needs two non-empty step sets")

    @property
    def scope(self):
        return self.first + self.second


WSP_FAMILIES = (MustEqual, MustDiffer, DisjointSets)


@dataclass(frozen=True)
class WspInstance:
    """Steps, users, constraints and ω over step sets (masks over ``steps``)."""
    steps: tuple[str, ...]
    users: tuple[str, ...]
    constraints: tuple = ()
    auth_cost: AuthCost = None
    meta: Mapping = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(str(s) for s in self.steps))
        object.__setattr__(self, "users", tuple(str(u) for u in self.users))
        object.__setattr__(self, "constraints", tuple(self.constraints))
        if not self.steps:
            raise DomainError("WSP instance needs at least one step")
        if not self.users:
            raise DomainError("WSP instance needs at least one user")
        if len(set(self.steps)) != len(self.steps) or len(set(self.users)) != len(self.users):
            raise DomainError("duplicate step or user identifier")
        if self.auth_cost is None:
            object.__setattr__(self, "auth_cost", AuthCost(base=(0,) * len(self.users)))
        if len(self.auth_cost.base) != len(self.users):
            raise DomainError("auth cost needs one base set per user")
        known = set(self.steps)
        for c in self.constraints:
            if not isinstance(c, WSP_FAMILIES):
                raise DomainError(f"unsupported WSP constraint {c!r}")
            missing = [s for s in c.scope if s not in known]
            if missing:
                raise DomainError(f"constraint {c!r} references unknown steps {missing}")

    @property
    def n(self) -> int:
        return len(self.users)

    @property
    def k(self) -> int:
        return len(self.steps)

    @cached_property
    def _step_pos(self) -> dict[str, int]:
        return {s: i for i, s in enumerate(self.steps)}

    def step_index(self, step: str) -> int:
        try:
            return self._step_pos[step]
        except KeyError:
            raise DomainError(f"unknown step {step!r}") from None

    def step_mask(self, steps: Sequence[str]) -> int:
        mask = 0
        for s in steps:
            mask |= 1 << self.step_index(s)
        return mask

    def omega_of(self, u: int, mask: int) -> int:
        return self.auth_cost.omega(u, mask)

    def authorized(self, u: int, s: int) -> bool:
        return self.omega_of(u, 1 << s) == 0


@dataclass(frozen=True)
class Plan:
    """π: one user index per step."""
    steps: tuple[str, ...]
    users: tuple[str, ...]
    assignment: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "assignment", tuple(int(u) for u in self.assignment))
        if len(self.assignment) != len(self.steps):
            raise DomainError("plan must map every step")
        if any(not 0 <= u < len(self.users) for u in self.assignment):
            raise DomainError("plan references an unknown user")

    @classmethod
    def from_mapping(cls, w: WspInstance, mapping: Mapping[str, str]) -> Plan:
        pos = {u: i for i, u in enumerate(w.users)}
        try:
            return cls(w.steps, w.users, tuple(pos[mapping[s]] for s in w.steps))
        except KeyError as exc:
            raise DomainError(f"plan has no valid user for {exc.args[0]!r}") from None

    def as_dict(self) -> dict[str, str]:
        return {s: self.users[u] for s, u in zip(self.steps, self.assignment)}


@dataclass(frozen=True)
class StepOrigin:
    """Which APEP resource each reduced step stands for."""
    resources: tuple[str, ...]
    step_resource: tuple[int, ...]

    @classmethod
    def identity(cls, resources: Sequence[str]) -> StepOrigin:
        return cls(tuple(resources), tuple(range(len(resources))))

    def steps_of(self, r: int) -> list[int]:
        return [s for s, res in enumerate(self.step_resource) if res == r]

    def resource_mask(self, step_mask: int) -> int:
        """R_T: the resources with at least one step in T."""
        out = 0
        for s in bits(step_mask):
            out |= 1 << self.step_resource[s]
        return out


def enumerate_partitions(size: int) -> Iterator[tuple[int, ...]]:
    """Restricted-growth strings of length ``size``, in lexicographic order."""
    if size <= 0:
        yield ()
        return
    a = [0] * size
    top = [0] * size          # top[i] = max(a[:i+1])
    while True:
        yield tuple(a)
        i = size - 1
        while i > 0 and a[i] > top[i - 1]:
            i -= 1
        if i == 0:
            return
        a[i] += 1
        top[i] = max(top[i - 1], a[i])
        for j in range(i + 1, size):
            a[j] = 0
            top[j] = top[i]


def _block_masks(rgs: Sequence[int]) -> list[int]:
    blocks = [0] * (max(rgs) + 1 if rgs else 0)
    for s, b in enumerate(rgs):
        blocks[b] |= 1 << s
    return blocks


class _Compiled:
    """Constraints turned into step-index form."""

    def __init__(self, w: WspInstance):
        self.items = []
        for c in w.constraints:
            if isinstance(c, DisjointSets):
                self.items.append((c, w.step_mask(c.first), w.step_mask(c.second)))
            else:
                self.items.append((c, w.step_index(c.s1), w.step_index(c.s2)))

    def weight(self, label: Sequence[int], blocks: Sequence[int]) -> int:
        """Constraint weight when step s lies in block (or goes to user) label[s]."""
        total = 0
        for c, a, b in self.items:
            if isinstance(c, MustEqual):
                total += c.penalty if label[a] != label[b] else 0
            elif isinstance(c, MustDiffer):
                total += c.penalty if label[a] == label[b] else 0
            else:
                shared = sum(1 for blk in blocks if blk & a and blk & b)
                total += c.penalty(shared)
        return total


def plan_weight(w: WspInstance, plan: Plan) -> int:
    """Valued WSP weight of a plan, read directly off π."""
    per_user: dict[int, int] = {}
    for s, u in enumerate(plan.assignment):
        per_user[u] = per_user.get(u, 0) | (1 << s)
    omega = sum(w.omega_of(u, m) for u, m in per_user.items())
    compiled = _Compiled(w)
    blocks = list(per_user.values())
    return check_weight(omega + compiled.weight(plan.assignment, blocks))


def solve_wsp(w: WspInstance, max_steps: int = MAX_WSP_STEPS) -> tuple[Plan, int]:
    """Minimum-weight plan over all partitions of the steps."""
    if w.k > max_steps:
        log.warning("WSP refused: %d steps", w.k)
        raise GuardError("step count K", w.k, max_steps, "set partitions are enumerated exhaustively")
    compiled = _Compiled(w)
    rows: dict[int, np.ndarray] = {}

    def omega_row(mask):
        row = rows.get(mask)
        if row is None:
            row = np.asarray([w.omega_of(u, mask) for u in range(w.n)], dtype=object)
            if row.max() < 2 ** 40:
                row = row.astype(np.int64)
            rows[mask] = row
        return row

    best = None
    seen = 0
    for rgs in enumerate_partitions(w.k):
        seen += 1
        blocks = _block_masks(rgs)
        if len(blocks) > w.n:
            continue
        cw = compiled.weight(rgs, blocks)
        if best is not None and cw >= best[0]:
            continue
        cost = [omega_row(m) for m in blocks]
        if best is not None and cw + sum(int(r.min()) for r in cost) >= best[0]:
            continue
        try:
            matched = min_cost_assignment(np.vstack(cost))
        except InfeasibleError:
            continue
        total = cw + matched.total
        if best is None or total < best[0]:
            best = (total, rgs, matched.slots)
    total, rgs, users = best
    plan = Plan(w.steps, w.users, tuple(users[b] for b in rgs))
    log.info("WSP: %d partitions, weight %d", seen, total)
    return plan, check_weight(total)


def reduce_sodu_bodu(apep: Instance) -> WspInstance:
    """⟨SoD_U, BoD_U⟩ APEP as WSP(=, ≠): one step per resource."""
    constraints = []
    for c in apep.constraints:
        if isinstance(c, SoDU):
            constraints.append(MustDiffer(c.r1, c.r2, c.penalty(1)))
        elif isinstance(c, BoDU):
            constraints.append(MustEqual(c.r1, c.r2, c.penalty(1)))
        else:
            raise DomainError(f"{c.family} is not reducible here; only sod_u and bod_u are")
    return WspInstance(apep.resources, apep.users, tuple(constraints), apep.auth_cost,
                       {"reduced_from": "sod_u/bod_u"})


def reduce_bode_sodu(apep: Instance) -> tuple[WspInstance, StepOrigin]:
    """⟨BoD_E, SoD_U⟩ APEP as WSP(=, ∅).

    Resource r_i becomes the steps s{i}_{j} for each BoD_E partner r_j, or a
    single step s{i} when it has none (indices 1-based).
    """
    k = apep.k
    partners: list[set[int]] = [set() for _ in range(k)]
    for c in apep.constraints:
        if isinstance(c, BoDE):
            i, j = apep.resource_index(c.r1), apep.resource_index(c.r2)
            partners[i].add(j)
            partners[j].add(i)
        elif not isinstance(c, SoDU):
            raise DomainError(f"{c.family} is not reducible here; only bod_e and sod_u are")
    steps, step_resource = [], []
    name_of: dict[tuple[int, int], str] = {}
    groups: list[list[str]] = []
    for i in range(k):
        group = []
        if not partners[i]:
            group.append(f"s{i + 1}")
        for j in sorted(partners[i]):
            name = f"s{i + 1}_{j + 1}"
            name_of[i, j] = name
            group.append(name)
        steps.extend(group)
        step_resource.extend([i] * len(group))
        groups.append(group)
    constraints = []
    for c in apep.constraints:
        i, j = apep.resource_index(c.r1), apep.resource_index(c.r2)
        if isinstance(c, BoDE):
            constraints.append(MustEqual(name_of[i, j], name_of[j, i], c.ell))
        else:
            constraints.append(DisjointSets(tuple(groups[i]), tuple(groups[j]), c.penalty))
    origin = StepOrigin(apep.resources, tuple(step_resource))
    base = tuple(sum(1 << s for s, r in enumerate(step_resource) if b >> r & 1)
                 for b in apep.auth_cost.base)
    auth = AuthCost(base, omega_fn=lambda u, mask: apep.omega_of(u, origin.resource_mask(mask)))
    log.debug("bod_e/sod_u reduction: %d resources -> %d steps", k, len(steps))
    return WspInstance(tuple(steps), apep.users, tuple(constraints), auth,
                       {"reduced_from": "bod_e/sod_u"}), origin


def lift_plan(plan: Plan, origin: StepOrigin) -> AuthorizationRelation:
    """A(r_i) = π(S^i)."""
    if len(origin.step_resource) != len(plan.steps):
        raise DomainError("plan and step origin disagree on the step count")
    masks = [0] * len(plan.users)
    for s, u in enumerate(plan.assignment):
        masks[u] |= 1 << origin.step_resource[s]
    return AuthorizationRelation(plan.users, origin.resources, tuple(masks))
