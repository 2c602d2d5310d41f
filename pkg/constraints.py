"""Weighted constraint catalog.

Every constraint can be evaluated on an authorization relation and, when it
is user-independent, on a user profile alone. The profile forms read these
aggregates:

    |A(r)|          = Σ_{T∋r} usr(T)
    |A(r)∩A(r')|    = Σ_{T⊇{r,r'}} usr(T)
    |A(r)\\A(r')|    = Σ_{T∋r, T∌r'} usr(T)
    |A(R)|          = Σ_{T≠∅} usr(T)
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import TYPE_CHECKING, Callable, ClassVar, Sequence

import numpy as np

from errors import DomainError

if TYPE_CHECKING:
    from model import AuthorizationRelation, UserProfile

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PenaltySpec:
    """Monotone f with f(z) = 0 for z ≤ 0.

    linear: f(z) = slope·z. table: f(z) = values[z-1] for 1 ≤ z ≤ len(values),
    then grows by tail_slope per unit.
    """
    kind: str = "linear"
    slope: int = 1
    values: tuple[int, ...] = ()
    tail_slope: int = 1

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(int(v) for v in self.values))
        if self.kind == "linear":
            if self.slope < 1:
                raise DomainError("linear penalty slope must be positive")
        elif self.kind == "table":
            if not self.values:
                raise DomainError("table penalty needs at least one value")
            if self.values[0] < 1:
                raise DomainError("table penalty must be positive from z = 1")
            if any(a > b for a, b in zip(self.values, self.values[1:])):
                raise DomainError("table penalty values must be non-decreasing")
            if self.tail_slope < 1:
                raise DomainError("table tail slope must be positive")
        else:
            raise DomainError(f"unknown penalty kind {self.kind!r}")

    def __call__(self, z: int) -> int:
        if z <= 0:
            return 0
        if self.kind == "linear":
            return self.slope * z
        size = len(self.values)
        if z <= size:
            return self.values[z - 1]
        return self.values[-1] + self.tail_slope * (z - size)

    def ceiling(self, z_max: int) -> int:
        """Bound on |f| and on every intermediate of :meth:`apply` for z ≤ z_max."""
        z_max = max(0, z_max)
        if self.kind == "linear":
            return self.slope * z_max
        return self.values[-1] + self.tail_slope * (z_max + len(self.values))

    def apply(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z)
        wide = z.dtype == object
        if not wide:
            z = z.astype(np.int64, copy=False)
        if self.kind == "linear":
            return self.slope * np.maximum(z, 0)
        vals = np.asarray(self.values, dtype=object if wide else np.int64)
        size = len(vals)
        pos = np.minimum(np.maximum(z - 1, 0), size - 1).astype(np.int64)
        beyond = vals[-1] + self.tail_slope * (z - size)
        return np.where(z <= 0, 0, np.where(z <= size, vals[pos], beyond))


def linear(slope: int = 1) -> PenaltySpec:
    return PenaltySpec("linear", slope=int(slope))


def table(values: Sequence[int], tail_slope: int = 1) -> PenaltySpec:
    return PenaltySpec("table", values=tuple(values), tail_slope=int(tail_slope))


def _check_pair(c):
    if c.r1 == c.r2:
        raise DomainError(f"{c.family} needs two distinct resources, got {c.r1!r} twice")


@dataclass(frozen=True)
class SoDU:
    """Universal separation of duty: weight f(|A(r1) ∩ A(r2)|)."""
    r1: str
    r2: str
    penalty: PenaltySpec = field(default_factory=linear)
    family: ClassVar[str] = "sod_u"

    def __post_init__(self):
        _check_pair(self)

    @property
    def scope(self):
        return (self.r1, self.r2)


@dataclass(frozen=True)
class BoDU:
    """Universal binding of duty: weight f(maxdiff(A, r1, r2))."""
    r1: str
    r2: str
    penalty: PenaltySpec = field(default_factory=linear)
    family: ClassVar[str] = "bod_u"

    def __post_init__(self):
        _check_pair(self)

    @property
    def scope(self):
        return (self.r1, self.r2)


@dataclass(frozen=True)
class SoDE:
    """Existential separation of duty: ell unless A(r1) ≠ A(r2)."""
    r1: str
    r2: str
    ell: int = 1
    family: ClassVar[str] = "sod_e"

    def __post_init__(self):
        _check_pair(self)
        if self.ell < 1:
            raise DomainError("existential penalty must be positive")

    @property
    def scope(self):
        return (self.r1, self.r2)


@dataclass(frozen=True)
class BoDE:
    """Existential binding of duty: ell unless A(r1) ∩ A(r2) ≠ ∅."""
    r1: str
    r2: str
    ell: int = 1
    family: ClassVar[str] = "bod_e"

    def __post_init__(self):
        _check_pair(self)
        if self.ell < 1:
            raise DomainError("existential penalty must be positive")

    @property
    def scope(self):
        return (self.r1, self.r2)


@dataclass(frozen=True)
class CardUB:
    """At most t users on r: weight f(|A(r)| - t)."""
    r: str
    t: int
    penalty: PenaltySpec = field(default_factory=linear)
    family: ClassVar[str] = "card_ub"

    def __post_init__(self):
        if self.t < 1:
            raise DomainError("cardinality threshold must be at least 1")

    @property
    def scope(self):
        return (self.r,)


@dataclass(frozen=True)
class CardLB:
    """At least t users on r: weight f(t - |A(r)|)."""
    r: str
    t: int
    penalty: PenaltySpec = field(default_factory=linear)
    family: ClassVar[str] = "card_lb"

    def __post_init__(self):
        if self.t < 1:
            raise DomainError("cardinality threshold must be at least 1")

    @property
    def scope(self):
        return (self.r,)


@dataclass(frozen=True)
class UserCount:
    """Weight f_Π(|A(R)|): coef·z² (quadratic) or coef·z (linear)."""
    shape: str = "quadratic"
    coef: int = 1
    family: ClassVar[str] = "user_count"

    def __post_init__(self):
        if self.shape not in ("quadratic", "linear"):
            raise DomainError(f"unknown user-count shape {self.shape!r}")
        if self.coef < 1:
            raise DomainError("user-count coefficient must be positive")

    @property
    def scope(self):
        return ()

    def f(self, z: int) -> int:
        z = max(0, z)
        return self.coef * (z * z if self.shape == "quadratic" else z)


@dataclass(frozen=True)
class CustomConstraint:
    """Library hook for constraints outside the catalog.

    ``relation_fn(A)`` is required. The profile solver also needs
    ``user_independent=True`` and ``profile_fn(usr)``.
    """
    name: str
    scope: tuple[str, ...]
    relation_fn: Callable[["AuthorizationRelation"], int] = field(compare=False)
    profile_fn: Callable[["UserProfile"], int] | None = field(default=None, compare=False)
    user_independent: bool = False
    family: ClassVar[str] = "custom"

    def __post_init__(self):
        object.__setattr__(self, "scope", tuple(self.scope))


TABLE1 = (SoDU, BoDU, SoDE, BoDE, CardUB, CardLB)
BUILTIN = TABLE1 + (UserCount,)


def profile_ready(c) -> bool:
    """Whether ``c`` can be evaluated from a user profile."""
    if isinstance(c, BUILTIN):
        return True
    return isinstance(c, CustomConstraint) and c.user_independent and c.profile_fn is not None


def _maxdiff(a: int, b: int) -> int:
    return max((a & ~b).bit_count(), (b & ~a).bit_count())


def eval_columns(c, idx: tuple[int, ...], cols: Sequence[int]) -> int:
    """Weight of a catalog constraint from A(r) user bit sets.

    ``idx`` holds the resource positions of ``c.scope``.
    """
    if isinstance(c, SoDU):
        return c.penalty((cols[idx[0]] & cols[idx[1]]).bit_count())
    if isinstance(c, BoDU):
        return c.penalty(_maxdiff(cols[idx[0]], cols[idx[1]]))
    if isinstance(c, SoDE):
        return 0 if cols[idx[0]] != cols[idx[1]] else c.ell
    if isinstance(c, BoDE):
        return 0 if cols[idx[0]] & cols[idx[1]] else c.ell
    if isinstance(c, CardUB):
        return c.penalty(cols[idx[0]].bit_count() - c.t)
    if isinstance(c, CardLB):
        return c.penalty(c.t - cols[idx[0]].bit_count())
    if isinstance(c, UserCount):
        union = 0
        for col in cols:
            union |= col
        return c.f(union.bit_count())
    raise DomainError(f"unsupported constraint {c!r}")


def eval_relation(c, A: "AuthorizationRelation") -> int:
    if isinstance(c, CustomConstraint):
        return int(c.relation_fn(A))
    idx = tuple(A.resource_index(r) for r in c.scope)
    return eval_columns(c, idx, A.columns)


def satisfies(c, A: "AuthorizationRelation") -> bool:
    """The unweighted predicate of ``c`` (w_c(A) = 0 exactly when this holds)."""
    if isinstance(c, UserCount):
        return A.user_count() == 0
    if isinstance(c, (CardUB, CardLB)):
        size = len(A.users_of(c.r))
        return size <= c.t if isinstance(c, CardUB) else size >= c.t
    first, second = A.users_of(c.r1), A.users_of(c.r2)
    if isinstance(c, SoDU):
        return not (first & second)
    if isinstance(c, BoDU):
        return first == second
    if isinstance(c, SoDE):
        return first != second
    if isinstance(c, BoDE):
        return bool(first & second)
    raise DomainError(f"no predicate for {c!r}")


def _positions(c, resources: Sequence[str]) -> tuple[int, ...]:
    pos = {r: i for i, r in enumerate(resources)}
    try:
        return tuple(pos[r] for r in c.scope)
    except KeyError as exc:
        raise DomainError(f"constraint {c!r} references unknown resource {exc.args[0]!r}") from None


def eval_profile(c, usr: "UserProfile", resources: Sequence[str] | None = None) -> int:
    """w_c computed from the profile only."""
    if isinstance(c, CustomConstraint):
        if not profile_ready(c):
            raise DomainError(f"custom constraint {c.name!r} has no profile form")
        return int(c.profile_fn(usr))
    resources = resources if resources is not None else usr.resources
    if len(resources) != usr.k:
        raise DomainError("profile and resource list disagree on k")
    idx = _positions(c, resources)

    def total(include: int, exclude: int = 0) -> int:
        return sum(n for m, n in usr.counts if m & include == include and not m & exclude)

    if isinstance(c, UserCount):
        return c.f(usr.assigned)
    if isinstance(c, (CardUB, CardLB)):
        size = total(1 << idx[0])
        return c.penalty(size - c.t) if isinstance(c, CardUB) else c.penalty(c.t - size)
    a, b = 1 << idx[0], 1 << idx[1]
    both = total(a | b)
    only_a, only_b = total(a, b), total(b, a)
    if isinstance(c, SoDU):
        return c.penalty(both)
    if isinstance(c, BoDU):
        return c.penalty(max(only_a, only_b))
    if isinstance(c, SoDE):
        return c.ell if only_a == 0 and only_b == 0 else 0
    if isinstance(c, BoDE):
        return 0 if both >= 1 else c.ell
    raise DomainError(f"unsupported constraint {c!r}")


@lru_cache(maxsize=None)
def _subset_columns(k: int, include: int, exclude: int) -> np.ndarray:
    masks = np.arange(1 << k, dtype=np.int64)
    keep = ((masks & include) == include) & ((masks & exclude) == 0)
    return np.flatnonzero(keep)


def eval_profile_batch(c, counts: np.ndarray, resources: Sequence[str]) -> np.ndarray:
    """w_c for many profiles at once.

    ``counts`` has one row per profile and one column per subset mask
    (column T holds usr(T)).
    """
    k = len(resources)
    if isinstance(c, CustomConstraint):
        raise DomainError("custom constraints have no batch form")
    idx = _positions(c, resources)

    def total(include: int, exclude: int = 0) -> np.ndarray:
        return counts[:, _subset_columns(k, include, exclude)].sum(axis=1)

    if isinstance(c, UserCount):
        z = counts[:, 1:].sum(axis=1)
        return c.coef * (z * z if c.shape == "quadratic" else z)
    if isinstance(c, (CardUB, CardLB)):
        size = total(1 << idx[0])
        return c.penalty.apply(size - c.t if isinstance(c, CardUB) else c.t - size)
    a, b = 1 << idx[0], 1 << idx[1]
    both = total(a | b)
    if isinstance(c, SoDU):
        return c.penalty.apply(both)
    if isinstance(c, BoDE):
        return np.where(both >= 1, 0, c.ell)
    only_a, only_b = total(a, b), total(b, a)
    if isinstance(c, BoDU):
        return c.penalty.apply(np.maximum(only_a, only_b))
    if isinstance(c, SoDE):
        return np.where((only_a == 0) & (only_b == 0), c.ell, 0)
    raise DomainError(f"unsupported constraint {c!r}")


def batch_ceiling(c, n: int) -> int:
    """Bound on every value :func:`eval_profile_batch` handles for profiles of n users."""
    if isinstance(c, UserCount):
        return c.f(n)
    if isinstance(c, (BoDE, SoDE)):
        return c.ell
    if isinstance(c, (CardUB, CardLB)):
        return c.penalty.ceiling(max(n, c.t))
    return c.penalty.ceiling(n)


def wbound_suggestion(constraints: Sequence, k: int, n: int | None = None) -> int:
    """A user cap ℓ under which some optimal complete relation exists.

    Table-1 families (plus user-count): max(3τ·C(k,2), τ) with τ the largest
    CardLB threshold (1 if none). Quadratic user-count with only SoDU, CardUB
    and linear CardLB beside it: ⌈(S/coef + 1)/2⌉ with S the sum of CardLB
    slopes. The smaller applicable cap wins; with neither, n.
    """
    constraints = list(constraints)
    caps = []
    if all(isinstance(c, BUILTIN) for c in constraints):
        tau = max((c.t for c in constraints if isinstance(c, CardLB)), default=1)
        caps.append(max(3 * tau * math.comb(k, 2), tau))
    quad = [c for c in constraints if isinstance(c, UserCount) and c.shape == "quadratic"]
    shrinkable = all(
        isinstance(c, (SoDU, CardUB, UserCount))
        or (isinstance(c, CardLB) and c.penalty.kind == "linear")
        for c in constraints
    )
    if quad and shrinkable:
        coef = sum(c.coef for c in quad)
        slopes = sum(c.penalty.slope for c in constraints if isinstance(c, CardLB))
        caps.append(math.ceil((Fraction(slopes, coef) + 1) / 2))
    if caps:
        return max(1, min(caps))
    if n is None:
        raise DomainError("no safe user cap for these constraints; pass n")
    log.info("no wboundedness cap applies; using n = %d", n)
    return n
