"""τ-resilient extended plans.

An extended plan gives every step a set of users Π(s). It is τ-resilient when,
after removing any τ users, some valid plan still picks π(s) ∈ Π(s) for each
step. ``encode_resilient`` states a sufficient condition as a Valued APEP
instance; ``check_tau_resilient`` decides the property exhaustively.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import combinations, islice
from typing import Iterable, Mapping, Sequence

from constraints import CardLB, SoDU, UserCount, linear
from errors import DomainError, GuardError
from model import AuthCost, AuthorizationRelation, Instance, bits
from wsp import DisjointSets, MustDiffer, MustEqual, Plan, WspInstance, plan_weight

log = logging.getLogger(__name__)

MAX_EXCLUSION_SETS = 10 ** 6
_BATCH = 256


@dataclass(frozen=True)
class ExtendedPlan:
    """Π: a non-empty user set per step, kept as user-position bit sets."""
    steps: tuple[str, ...]
    users: tuple[str, ...]
    sets: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "sets", tuple(int(s) for s in self.sets))
        if len(self.sets) != len(self.steps):
            raise DomainError("extended plan needs one user set per step")
        missing = [s for s, m in zip(self.steps, self.sets) if not m]
        if missing:
            raise DomainError(f"extended plan leaves steps without users: {missing}")
        if any(m >> len(self.users) for m in self.sets):
            raise DomainError("extended plan references unknown users")

    @classmethod
    def from_mapping(cls, w: WspInstance, mapping: Mapping[str, Iterable[str]]) -> ExtendedPlan:
        pos = {u: i for i, u in enumerate(w.users)}
        unknown = set(mapping) - set(w.steps)
        if unknown:
            raise DomainError(f"extended plan names unknown steps {sorted(unknown)}")
        sets = []
        for s in w.steps:
            mask = 0
            for u in mapping.get(s, ()):
                if u not in pos:
                    raise DomainError(f"unknown user {u!r}")
                mask |= 1 << pos[u]
            sets.append(mask)
        return cls(w.steps, w.users, tuple(sets))

    def users_of(self, step: str) -> list[str]:
        return [self.users[u] for u in bits(self.sets[self.steps.index(step)])]

    def as_dict(self) -> dict[str, list[str]]:
        return {s: [self.users[u] for u in bits(m)] for s, m in zip(self.steps, self.sets)}


def extended_plan_from_relation(A: AuthorizationRelation) -> ExtendedPlan:
    """Read a relation over steps as Π(s) = A(s)."""
    return ExtendedPlan(A.resources, A.users, A.columns)


def _check_plan(w: WspInstance, ext: ExtendedPlan):
    if ext.steps != w.steps or ext.users != w.users:
        raise DomainError("extended plan does not belong to this workflow")


def encode_resilient(wsp: WspInstance, tau: int, p_sod: int = 10, p_card: int = 10,
                     p_a: int = 1, coef: int = 1) -> Instance:
    """Valued APEP whose zero-penalty relations (apart from user count) are τ-resilient."""
    if tau < 0:
        raise DomainError("τ must be non-negative")
    if not wsp.auth_cost.additive:
        raise DomainError("only additive authorization costs can be encoded")
    constraints = []
    for c in wsp.constraints:
        if not isinstance(c, MustDiffer):
            raise DomainError(f"only separation-of-duty steps can be encoded, got {c.family}")
        constraints.append(SoDU(c.s1, c.s2, linear(p_sod)))
    constraints.extend(CardLB(s, tau + 1, linear(p_card)) for s in wsp.steps)
    constraints.append(UserCount("quadratic", coef))
    meta = dict(wsp.meta)
    meta.update({"tau": tau, "penalties": {"sod": p_sod, "card": p_card, "auth": p_a, "user_count": coef}})
    return Instance(wsp.users, wsp.steps, tuple(constraints), AuthCost(wsp.auth_cost.base, p_a), meta)


def is_valid_plan(wsp: WspInstance, plan: Plan) -> bool:
    return plan_weight(wsp, plan) == 0


def satisfies_encoding(wsp: WspInstance, ext: ExtendedPlan, tau: int) -> bool:
    """The sufficient condition: |Π(s)| > τ, Π(s) authorized, SoD sets disjoint."""
    _check_plan(wsp, ext)
    for s, users in enumerate(ext.sets):
        if users.bit_count() < tau + 1:
            return False
        if any(not wsp.authorized(u, s) for u in bits(users)):
            return False
    for c in wsp.constraints:
        if not isinstance(c, MustDiffer):
            raise DomainError(f"sufficient condition covers separation of duty only, got {c.family}")
        if ext.sets[wsp.step_index(c.s1)] & ext.sets[wsp.step_index(c.s2)]:
            return False
    return True


class _PlanSearch:
    """Backtracking search for a valid plan inside Π with some users removed."""

    def __init__(self, wsp: WspInstance, ext: ExtendedPlan):
        _check_plan(wsp, ext)
        k = wsp.k
        self.k = k
        self.allowed = [sum(1 << u for u in bits(ext.sets[s]) if wsp.authorized(u, s))
                        for s in range(k)]
        self.differ: list[list[int]] = [[] for _ in range(k)]
        self.equal: list[list[int]] = [[] for _ in range(k)]
        self.impossible = False
        for c in wsp.constraints:
            if isinstance(c, MustDiffer):
                a, b = wsp.step_index(c.s1), wsp.step_index(c.s2)
                self.differ[a].append(b)
                self.differ[b].append(a)
            elif isinstance(c, MustEqual):
                a, b = wsp.step_index(c.s1), wsp.step_index(c.s2)
                self.equal[a].append(b)
                self.equal[b].append(a)
            elif isinstance(c, DisjointSets):
                first = [wsp.step_index(s) for s in c.first]
                second = [wsp.step_index(s) for s in c.second]
                if set(first) & set(second):
                    self.impossible = True
                for a in first:
                    for b in second:
                        self.differ[a].append(b)
                        self.differ[b].append(a)

    def find(self, removed: int) -> list[int] | None:
        if self.impossible:
            return None
        cands = [m & ~removed for m in self.allowed]
        if not all(cands):
            return None
        order = sorted(range(self.k), key=lambda s: (cands[s].bit_count(), s))
        chosen = [-1] * self.k

        def place(depth):
            if depth == self.k:
                return True
            s = order[depth]
            for u in bits(cands[s]):
                if any(chosen[t] == u for t in self.differ[s]):
                    continue
                if any(chosen[t] not in (-1, u) for t in self.equal[s]):
                    continue
                chosen[s] = u
                if place(depth + 1):
                    return True
                chosen[s] = -1
            return False

        return chosen if place(0) else None


def check_tau_resilient(wsp: WspInstance, ext: ExtendedPlan, tau: int, threads: int = 1,
                        max_subsets: int = MAX_EXCLUSION_SETS) -> tuple[bool, tuple[str, ...] | None]:
    """(True, None) if Π survives every removal of τ users, else (False, first failing set)."""
    n = wsp.n
    if not 0 <= tau <= n:
        raise DomainError(f"τ must lie in [0, {n}], got {tau}")
    subsets = math.comb(n, tau)
    if subsets > max_subsets:
        log.warning("resiliency check refused: %d exclusion sets", subsets)
        raise GuardError("C(n, τ)", subsets, max_subsets, "use the sufficient-condition check instead")
    search = _PlanSearch(wsp, ext)

    def fails(removed_users: Sequence[int]) -> bool:
        removed = sum(1 << u for u in removed_users)
        return search.find(removed) is None

    stream = combinations(range(n), tau)
    checked = 0
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        while True:
            batch = list(islice(stream, _BATCH))
            if not batch:
                break
            results = list(pool.map(fails, batch)) if threads > 1 else [fails(b) for b in batch]
            for removed_users, failed in zip(batch, results):
                checked += 1
                if failed:
                    witness = tuple(wsp.users[u] for u in removed_users)
                    log.info("not %d-resilient: removing %s leaves no valid plan", tau, witness)
                    return False, witness
    log.info("%d-resilient: %d exclusion sets checked", tau, checked)
    return True, None
