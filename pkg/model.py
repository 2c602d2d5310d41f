"""Core Valued APEP types: instances, authorization relations, user profiles.

Resource subsets are int bit sets (bit i = i-th resource of the instance);
the users holding one resource are an int bit set over user positions.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Callable, Iterable, Iterator, Mapping

from constraints import eval_relation
from errors import ApepError, DomainError, WeightOverflowError

log = logging.getLogger(__name__)

MAX_RESOURCES = 30
WEIGHT_LIMIT = 2 ** 63


def bits(mask: int) -> Iterator[int]:
    """Indices of the set bits of ``mask``, ascending."""
    i = 0
    while mask:
        if mask & 1:
            yield i
        mask >>= 1
        i += 1


@lru_cache(maxsize=None)
def canonical_subsets(k: int) -> tuple[int, ...]:
    """All subsets of k resources ordered by (popcount, value); ∅ first."""
    return tuple(sorted(range(1 << k), key=lambda m: (m.bit_count(), m)))


def check_weight(value: int, what: str = "weight") -> int:
    if value >= WEIGHT_LIMIT:
        raise WeightOverflowError(f"{what} {value} reaches 2^63")
    return value


@dataclass(frozen=True)
class AuthCost:
    """Weighted authorization function ω, additive over unauthorized pairs.

    ``base[u]`` is the mask of resources user ``u`` holds in Â. ``pair_penalty``
    is either one integer p_A or a per-user row of per-resource penalties.
    ``omega_fn(u, mask)`` replaces the additive form for in-memory use; it must
    be monotone and return 0 on the empty set.
    """
    base: tuple[int, ...]
    pair_penalty: int | tuple[tuple[int, ...], ...] = 1
    omega_fn: Callable[[int, int], int] | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "base", tuple(int(b) for b in self.base))
        if isinstance(self.pair_penalty, int):
            if self.pair_penalty < 0:
                raise DomainError("pair penalty must be non-negative")
        else:
            rows = tuple(tuple(int(p) for p in row) for row in self.pair_penalty)
            if len(rows) != len(self.base):
                raise DomainError("pair penalty matrix needs one row per user")
            if any(p < 0 for row in rows for p in row):
                raise DomainError("pair penalty must be non-negative")
            object.__setattr__(self, "pair_penalty", rows)

    @property
    def additive(self) -> bool:
        return self.omega_fn is None

    def penalty(self, u: int, r: int) -> int:
        if isinstance(self.pair_penalty, int):
            return self.pair_penalty
        return self.pair_penalty[u][r]

    def omega(self, u: int, mask: int) -> int:
        if self.omega_fn is not None:
            return int(self.omega_fn(u, mask))
        extra = mask & ~self.base[u]
        if not extra:
            return 0
        if isinstance(self.pair_penalty, int):
            return self.pair_penalty * extra.bit_count()
        row = self.pair_penalty[u]
        return sum(row[r] for r in bits(extra))


@dataclass(frozen=True)
class Instance:
    """(R, U, C, ω). Immutable; safe to share across workers."""
    users: tuple[str, ...]
    resources: tuple[str, ...]
    constraints: tuple = ()
    auth_cost: AuthCost = None
    meta: Mapping = field(default_factory=dict, compare=False)

    def __post_init__(self):
        users = tuple(str(u) for u in self.users)
        resources = tuple(str(r) for r in self.resources)
        object.__setattr__(self, "users", users)
        object.__setattr__(self, "resources", resources)
        object.__setattr__(self, "constraints", tuple(self.constraints))
        if not users:
            raise DomainError("instance needs at least one user")
        if not resources:
            raise DomainError("instance needs at least one resource")
        if len(resources) > MAX_RESOURCES:
            raise DomainError(f"k = {len(resources)} exceeds {MAX_RESOURCES} resources")
        if len(set(users)) != len(users):
            raise DomainError("duplicate user identifier")
        if len(set(resources)) != len(resources):
            raise DomainError("duplicate resource identifier")
        if self.auth_cost is None:
            object.__setattr__(self, "auth_cost", AuthCost(base=(0,) * len(users)))
        if len(self.auth_cost.base) != len(users):
            raise DomainError("auth cost needs one base set per user")
        full = (1 << len(resources)) - 1
        if any(b & ~full for b in self.auth_cost.base):
            raise DomainError("auth cost references unknown resources")
        if not isinstance(self.auth_cost.pair_penalty, int):
            if any(len(row) != len(resources) for row in self.auth_cost.pair_penalty):
                raise DomainError("pair penalty rows must have one entry per resource")
        known = set(resources)
        for c in self.constraints:
            missing = [r for r in c.scope if r not in known]
            if missing:
                raise DomainError(f"constraint {c!r} references unknown resources {missing}")

    @property
    def n(self) -> int:
        return len(self.users)

    @property
    def k(self) -> int:
        return len(self.resources)

    @cached_property
    def _user_pos(self) -> dict[str, int]:
        return {u: i for i, u in enumerate(self.users)}

    @cached_property
    def _resource_pos(self) -> dict[str, int]:
        return {r: i for i, r in enumerate(self.resources)}

    def user_index(self, user: str) -> int:
        try:
            return self._user_pos[user]
        except KeyError:
            raise DomainError(f"unknown user {user!r}") from None

    def resource_index(self, resource: str) -> int:
        try:
            return self._resource_pos[resource]
        except KeyError:
            raise DomainError(f"unknown resource {resource!r}") from None

    def resource_mask(self, resources: Iterable[str]) -> int:
        mask = 0
        for r in resources:
            mask |= 1 << self.resource_index(r)
        return mask

    def resource_names(self, mask: int) -> list[str]:
        return [self.resources[i] for i in bits(mask)]

    def omega_of(self, u: int, mask: int) -> int:
        return self.auth_cost.omega(u, mask)


@dataclass(frozen=True)
class AuthorizationRelation:
    """A ⊆ U×R kept as one resource mask A(u) per user."""
    users: tuple[str, ...]
    resources: tuple[str, ...]
    masks: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "users", tuple(self.users))
        object.__setattr__(self, "resources", tuple(self.resources))
        object.__setattr__(self, "masks", tuple(int(m) for m in self.masks))
        if len(self.masks) != len(self.users):
            raise DomainError("relation needs one resource set per user")
        full = (1 << len(self.resources)) - 1
        if any(m < 0 or m & ~full for m in self.masks):
            raise DomainError("relation references unknown resources")

    @classmethod
    def empty(cls, instance: Instance) -> AuthorizationRelation:
        return cls(instance.users, instance.resources, (0,) * instance.n)

    @classmethod
    def from_masks(cls, instance: Instance, masks: Iterable[int]) -> AuthorizationRelation:
        return cls(instance.users, instance.resources, tuple(masks))

    @classmethod
    def from_assignment(cls, instance: Instance,
                        assignment: Mapping[str, Iterable[str]]) -> AuthorizationRelation:
        """Build from ``{user: [resources]}``; missing users get ∅."""
        masks = [0] * instance.n
        for user, resources in assignment.items():
            masks[instance.user_index(user)] |= instance.resource_mask(resources)
        return cls(instance.users, instance.resources, tuple(masks))

    @classmethod
    def from_columns(cls, instance: Instance,
                     columns: Mapping[str, Iterable[str]]) -> AuthorizationRelation:
        """Build from ``{resource: [users]}``, i.e. from the A(r) view."""
        masks = [0] * instance.n
        for resource, users in columns.items():
            r = instance.resource_index(resource)
            for user in users:
                masks[instance.user_index(user)] |= 1 << r
        return cls(instance.users, instance.resources, tuple(masks))

    @cached_property
    def columns(self) -> tuple[int, ...]:
        """A(r) per resource, as a bit set over user positions."""
        cols = [0] * len(self.resources)
        for u, mask in enumerate(self.masks):
            for r in bits(mask):
                cols[r] |= 1 << u
        return tuple(cols)

    @cached_property
    def _resource_pos(self) -> dict[str, int]:
        return {r: i for i, r in enumerate(self.resources)}

    def resource_index(self, resource: str) -> int:
        try:
            return self._resource_pos[resource]
        except KeyError:
            raise DomainError(f"unknown resource {resource!r}") from None

    def users_of(self, resource: str) -> frozenset[str]:
        col = self.columns[self.resource_index(resource)]
        return frozenset(self.users[u] for u in bits(col))

    @cached_property
    def _user_pos(self) -> dict[str, int]:
        return {u: j for j, u in enumerate(self.users)}

    def resources_of(self, user: str) -> frozenset[str]:
        try:
            u = self._user_pos[user]
        except KeyError:
            raise DomainError(f"unknown user {user!r}") from None
        return frozenset(self.resources[r] for r in bits(self.masks[u]))

    def is_complete(self) -> bool:
        return all(col != 0 for col in self.columns)

    def size(self) -> int:
        return sum(m.bit_count() for m in self.masks)

    def user_count(self) -> int:
        return sum(1 for m in self.masks if m)

    def permuted(self, perm: Iterable[int]) -> AuthorizationRelation:
        """σ(A): the resources of user u move to user perm[u]."""
        perm = list(perm)
        masks = [0] * len(self.masks)
        for u, mask in enumerate(self.masks):
            masks[perm[u]] = mask
        return AuthorizationRelation(self.users, self.resources, tuple(masks))

    def assignment(self) -> dict[str, list[str]]:
        return {u: [self.resources[r] for r in bits(m)]
                for u, m in zip(self.users, self.masks)}


@dataclass(frozen=True)
class UserProfile:
    """usr : 2^R → ℕ, stored as sorted (mask, count) pairs with count > 0."""
    k: int
    counts: tuple[tuple[int, int], ...]
    resources: tuple[str, ...] = ()

    def __post_init__(self):
        raw = dict(self.counts) if not isinstance(self.counts, Mapping) else self.counts
        limit = 1 << self.k
        clean = {}
        for mask, count in raw.items():
            mask, count = int(mask), int(count)
            if not 0 <= mask < limit:
                raise DomainError(f"subset {mask} outside 2^{self.k}")
            if count < 0:
                raise DomainError("profile counts must be non-negative")
            if count:
                clean[mask] = clean.get(mask, 0) + count
        items = sorted(clean.items(), key=lambda kv: (kv[0].bit_count(), kv[0]))
        object.__setattr__(self, "counts", tuple(items))

    @classmethod
    def from_mapping(cls, k: int, counts: Mapping[int, int],
                     resources: tuple[str, ...] = ()) -> UserProfile:
        return cls(k, tuple(counts.items()), tuple(resources))

    def __getitem__(self, mask: int) -> int:
        return dict(self.counts).get(mask, 0)

    def as_dict(self) -> dict[int, int]:
        return dict(self.counts)

    @property
    def n(self) -> int:
        return sum(c for _, c in self.counts)

    @property
    def assigned(self) -> int:
        return sum(c for m, c in self.counts if m)

    def coverage(self, r: int) -> int:
        """|A(r)| = Σ_{T∋r} usr(T)."""
        return sum(c for m, c in self.counts if m >> r & 1)

    def is_complete(self) -> bool:
        return all(self.coverage(r) >= 1 for r in range(self.k))

    def size(self) -> int:
        return sum(m.bit_count() * c for m, c in self.counts)

    def key(self) -> tuple[int, ...]:
        """Counts over the non-empty subsets in canonical order (tie-break key)."""
        d = dict(self.counts)
        return tuple(d.get(m, 0) for m in canonical_subsets(self.k)[1:])

    def slots(self) -> list[int]:
        """One entry per assigned user copy, non-empty subsets in canonical order."""
        out = []
        for m, c in self.counts:
            if m:
                out.extend([m] * c)
        return out


@dataclass(frozen=True)
class Breakdown:
    omega: int
    constraints: tuple[int, ...]

    @property
    def total(self) -> int:
        return self.omega + sum(self.constraints)


@dataclass(frozen=True)
class SolveResult:
    """A complete relation with its recomputed weight. Build with :meth:`build`."""
    relation: AuthorizationRelation
    total_weight: int
    breakdown: Breakdown
    meta: Mapping = field(default_factory=dict)
    wall_time: float = field(default=0.0, compare=False)

    def __post_init__(self):
        if self.total_weight != self.breakdown.total:
            raise ApepError("total weight does not match its breakdown")
        if not self.relation.is_complete():
            raise ApepError("solver returned an incomplete relation")

    @classmethod
    def build(cls, instance: Instance, relation: AuthorizationRelation,
              meta: Mapping | None = None, wall_time: float = 0.0) -> SolveResult:
        total, breakdown = total_weight(instance, relation)
        return cls(relation, total, breakdown, dict(meta or {}), wall_time)


def _check_relation(instance: Instance, A: AuthorizationRelation):
    if A.users != instance.users or A.resources != instance.resources:
        raise DomainError("relation does not belong to this instance")


def omega(instance: Instance, user: str, resources: Iterable[str]) -> int:
    """ω(u, T) for a user name and resource names."""
    return instance.omega_of(instance.user_index(user), instance.resource_mask(resources))


def big_omega(instance: Instance, A: AuthorizationRelation) -> int:
    """Ω(A) = Σ_u ω(u, A(u))."""
    _check_relation(instance, A)
    total = sum(instance.omega_of(u, m) for u, m in enumerate(A.masks) if m)
    return check_weight(total, "Ω(A)")


def total_weight(instance: Instance, A: AuthorizationRelation) -> tuple[int, Breakdown]:
    """w(A) = Ω(A) + Σ_c w_c(A), with the per-term breakdown."""
    om = big_omega(instance, A)
    parts = tuple(eval_relation(c, A) for c in instance.constraints)
    breakdown = Breakdown(om, parts)
    return check_weight(breakdown.total), breakdown


def profile_of(instance: Instance, A: AuthorizationRelation) -> UserProfile:
    """usr_A(T) = |{u : A(u) = T}|."""
    _check_relation(instance, A)
    counts: dict[int, int] = {}
    for m in A.masks:
        counts[m] = counts.get(m, 0) + 1
    return UserProfile(instance.k, tuple(counts.items()), instance.resources)


CATEGORIES = ("total", "cardinality", "user_count", "authorizations", "sod", "bod")
_FAMILY_CATEGORY = {
    "card_ub": "cardinality", "card_lb": "cardinality", "user_count": "user_count",
    "sod_u": "sod", "sod_e": "sod", "bod_u": "bod", "bod_e": "bod",
}


def categorize(instance: Instance, A: AuthorizationRelation) -> dict[str, int]:
    """Penalty totals per reporting category (custom constraints count as 'other')."""
    total, breakdown = total_weight(instance, A)
    out = dict.fromkeys(CATEGORIES, 0)
    out["total"] = total
    out["authorizations"] = breakdown.omega
    for c, w in zip(instance.constraints, breakdown.constraints):
        cat = _FAMILY_CATEGORY.get(c.family, "other")
        out[cat] = out.get(cat, 0) + w
    return out
