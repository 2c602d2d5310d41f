"""Exact solver by user-profile enumeration plus min-cost completion.

A profile with at most ℓ assigned users is enumerated by branching on
usr(T1), usr(T2), ... over the non-empty subsets in (popcount, value) order,
so profiles come out in ascending tie-break key order. Constraint weight is
read off the profile; the cheapest relation with that profile comes from a
min-cost assignment of subset copies to users.
"""
from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from itertools import islice
from typing import Iterable, Iterator, Sequence

import numpy as np

from constraints import (
    CustomConstraint, batch_ceiling, eval_profile, eval_profile_batch, profile_ready, wbound_suggestion,
)
from errors import ApepError, DomainError, GuardError
from matching import min_cost_assignment
from model import (
    AuthorizationRelation, Instance, SolveResult, UserProfile, canonical_subsets, check_weight,
)

log = logging.getLogger(__name__)

PROFILE_LIMIT = 2 * 10 ** 7
OMEGA_TABLE_LIMIT = 10 ** 7
CHUNK = 8192
WIDE_LIMIT = 2 ** 62


def count_profiles(k: int, ell: int) -> int:
    """C(ℓ + 2^k - 1, ℓ): profiles with at most ℓ users on non-empty subsets."""
    if k < 0 or ell < 0:
        raise DomainError("k and ℓ must be non-negative")
    return math.comb(ell + (1 << k) - 1, ell)


def _iter_counts(k: int, ell: int, require_complete: bool,
                 firsts: Iterable[int] | None = None) -> Iterator[tuple[int, ...]]:
    """Count vectors over the non-empty subsets, ascending lexicographically."""
    order = canonical_subsets(k)[1:]
    parts = len(order)
    full = (1 << k) - 1
    if parts == 0:
        yield ()
        return
    suffix = [0] * (parts + 1)
    for i in range(parts - 1, -1, -1):
        suffix[i] = suffix[i + 1] | order[i]
    counts = [0] * parts
    budget = [0] * (parts + 1)
    covered = [0] * (parts + 1)

    def viable(pos):
        if not require_complete:
            return True
        if covered[pos] | suffix[pos] != full:
            return False
        return budget[pos] > 0 or covered[pos] == full

    for first in (range(ell + 1) if firsts is None else firsts):
        if first > ell:
            continue
        counts[:] = [0] * parts
        counts[0] = first
        budget[1] = ell - first
        covered[1] = order[0] if first else 0
        if not viable(1):
            continue
        if parts == 1:
            yield tuple(counts)
            continue
        pos = 1
        counts[pos] = -1
        while pos >= 1:
            counts[pos] += 1
            c = counts[pos]
            if c > budget[pos]:
                counts[pos] = 0
                pos -= 1
                continue
            budget[pos + 1] = budget[pos] - c
            covered[pos + 1] = covered[pos] | (order[pos] if c else 0)
            if not viable(pos + 1):
                continue
            if pos + 1 == parts:
                yield tuple(counts)
                continue
            pos += 1
            counts[pos] = -1


def enumerate_profiles(k: int, ell: int, n: int, require_complete: bool = False,
                       resources: Sequence[str] = ()) -> Iterator[UserProfile]:
    """Every profile with Σ_{T≠∅} usr(T) ≤ ℓ; usr(∅) takes the remaining users."""
    if ell > n:
        raise DomainError(f"ℓ = {ell} exceeds n = {n}")
    if ell < 0:
        raise DomainError("ℓ must be non-negative")
    order = canonical_subsets(k)[1:]
    for vec in _iter_counts(k, ell, require_complete):
        counts = {0: n - sum(vec)}
        counts.update(zip(order, vec))
        yield UserProfile(k, tuple(counts.items()), tuple(resources))


def _slot_masks(usr: UserProfile, instance: Instance) -> list[int]:
    if usr.k != instance.k:
        raise DomainError("profile k does not match the instance")
    if usr.n != instance.n:
        raise DomainError(f"profile covers {usr.n} users, instance has {instance.n}")
    return usr.slots()


def _relation_from_slots(instance: Instance, slot_masks: Sequence[int],
                         users: Sequence[int]) -> AuthorizationRelation:
    masks = [0] * instance.n
    for mask, u in zip(slot_masks, users):
        masks[u] = mask
    return AuthorizationRelation(instance.users, instance.resources, tuple(masks))


def best_relation_for_profile(instance: Instance, usr: UserProfile):
    """Cheapest relation whose profile is ``usr``, with its total weight."""
    slots = _slot_masks(usr, instance)
    cost = [[instance.omega_of(u, mask) for u in range(instance.n)] for mask in slots]
    matched = min_cost_assignment(np.array(cost, dtype=object).reshape(len(slots), instance.n))
    relation = _relation_from_slots(instance, slots, matched.slots)
    resources = usr.resources or instance.resources
    weight = matched.total + sum(eval_profile(c, usr, resources) for c in instance.constraints)
    return relation, check_weight(weight)


def _omega_table(instance: Instance) -> np.ndarray:
    """ω(u, T) for every user and subset mask."""
    n, k = instance.n, instance.k
    if n << k > OMEGA_TABLE_LIMIT:
        raise GuardError("n·2^k", n << k, OMEGA_TABLE_LIMIT)
    auth = instance.auth_cost
    masks = np.arange(1 << k, dtype=np.int64)
    if auth.additive and isinstance(auth.pair_penalty, int):
        base = np.asarray(auth.base, dtype=np.int64)[:, None]
        extra = masks[None, :] & ~base
        ones = np.zeros_like(extra)
        for r in range(k):
            ones += (extra >> r) & 1
        if auth.pair_penalty * max(k, 1) < WIDE_LIMIT:
            return auth.pair_penalty * ones
        return ones.astype(object) * auth.pair_penalty
    table = np.zeros((n, 1 << k), dtype=object)
    for u in range(n):
        for m in range(1 << k):
            table[u, m] = instance.omega_of(u, m)
    if table.size and table.max() < 2 ** 40:
        return table.astype(np.int64)
    return table


class _Search:
    """Enumeration state shared by the workers; instance and tables are read-only."""

    def __init__(self, instance: Instance, ell: int):
        self.instance = instance
        self.ell = ell
        self.k = instance.k
        self.order = np.asarray(canonical_subsets(self.k)[1:], dtype=np.int64)
        self.table = _omega_table(instance)
        self.builtin = [c for c in instance.constraints if not isinstance(c, CustomConstraint)]
        self.custom = [c for c in instance.constraints if isinstance(c, CustomConstraint)]
        # int64 only while no profile weight or bound can reach 2^62
        reach = sum(batch_ceiling(c, instance.n) for c in self.builtin)
        reach += ell * int(self.table.max()) if self.table.size else 0
        self.wide = self.table.dtype == object or reach >= WIDE_LIMIT
        if self.wide:
            self.table = self.table.astype(object)
            log.debug("profile weights may pass 2^62; evaluating with Python integers")
        self.min_omega = self.table.min(axis=0)[self.order]

    def constraint_weights(self, vecs: np.ndarray) -> np.ndarray:
        rows = len(vecs)
        dtype = object if self.wide else np.int64
        counts = np.zeros((rows, 1 << self.k), dtype=dtype)
        counts[:, self.order] = vecs.astype(dtype)
        counts[:, 0] = self.instance.n - vecs.sum(axis=1)
        total = np.zeros(rows, dtype=object if self.custom or self.wide else np.int64)
        for c in self.builtin:
            total = total + eval_profile_batch(c, counts, self.instance.resources)
        for c in self.custom:
            extra = [eval_profile(c, UserProfile(self.k, tuple(enumerate(row)), self.instance.resources))
                     for row in counts]
            total = total + np.asarray(extra, dtype=object)
        return total

    def complete(self, vec: Sequence[int]):
        slots = []
        for mask, count in zip(self.order.tolist(), vec):
            slots.extend([mask] * count)
        cost = self.table[:, slots].T
        return slots, min_cost_assignment(cost)

    def run(self, firsts: Sequence[int]):
        best = None                      # (total, key, slots, users)
        enumerated = matched = 0
        stream = _iter_counts(self.k, self.ell, True, firsts)
        while True:
            chunk = list(islice(stream, CHUNK))
            if not chunk:
                break
            enumerated += len(chunk)
            vecs = np.asarray(chunk, dtype=np.int64).reshape(len(chunk), len(self.order))
            cw = self.constraint_weights(vecs)
            lb = cw + vecs @ self.min_omega
            rows = np.argsort(lb, kind="stable") if best is None else np.flatnonzero(lb <= best[0])
            if best is not None:
                rows = rows[np.argsort(lb[rows], kind="stable")]
            for i in rows.tolist():
                key = chunk[i]
                if best is not None and (int(lb[i]), key) > best[:2]:
                    continue
                slots, assigned = self.complete(key)
                matched += 1
                total = int(cw[i]) + assigned.total
                if best is None or (total, key) < best[:2]:
                    best = (total, key, slots, assigned.slots)
        return best, enumerated, matched


def _resolve_ell(instance: Instance, ell: int | None) -> int:
    n, k = instance.n, instance.k
    if ell is None:
        cap = wbound_suggestion(instance.constraints, k, n)
        return max(min(k, n), min(cap, n))
    if ell < 1:
        raise DomainError("ℓ must be at least 1")
    return min(ell, n)


def solve(instance: Instance, ell: int | None = None, threads: int = 1) -> SolveResult:
    """Minimum-weight complete relation among those authorizing at most ℓ users."""
    started = time.perf_counter()
    bad = [c for c in instance.constraints if not profile_ready(c)]
    if bad:
        raise DomainError(f"constraints without a user-independent profile form: {bad}")
    ell = _resolve_ell(instance, ell)
    total_profiles = count_profiles(instance.k, ell)
    if total_profiles > PROFILE_LIMIT:
        raise GuardError("profile count C(ℓ+2^k-1, ℓ)", total_profiles, PROFILE_LIMIT,
                         "lower --ell or use the MIP export")
    log.info("profile solver: k=%d n=%d ell=%d workers=%d", instance.k, instance.n, ell, threads)
    search = _Search(instance, ell)
    tasks = [[a] for a in range(ell + 1)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(search.run, tasks))
    else:
        outcomes = [search.run(t) for t in tasks]
    best = None
    enumerated = matched = 0
    for found, e, m in outcomes:
        enumerated += e
        matched += m
        if found is not None and (best is None or found[:2] < best[:2]):
            best = found
    if best is None:
        raise ApepError("no complete profile within the user cap")
    total, _, slots, users = best
    relation = _relation_from_slots(instance, slots, users)
    elapsed = time.perf_counter() - started
    result = SolveResult.build(instance, relation,
                               {"solver": "profile", "ell": ell, "profiles_enumerated": enumerated},
                               elapsed)
    if result.total_weight != total:
        raise ApepError(f"profile weight {total} disagrees with relation weight "
                        f"{result.total_weight}; a constraint is not user-independent")
    log.info("profile solver: %d profiles, %d matched, weight %d in %.3fs",
             enumerated, matched, total, elapsed)
    return result
