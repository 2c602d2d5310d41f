"""Exhaustive reference solver: every map u -> A(u) ⊆ R, complete ones only."""
from __future__ import annotations

import logging
import time
from itertools import product

from constraints import CustomConstraint, eval_columns
from errors import GuardError
from model import AuthorizationRelation, Instance, SolveResult, canonical_subsets, check_weight

log = logging.getLogger(__name__)

BRUTE_LIMIT = 2 ** 24


def tie_break_key(masks, k: int) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """(profile key, slot vector) of a relation given as per-user masks.

    Slots run over the non-empty subsets in canonical order; users sharing a
    subset are listed ascending, the lexicographically smallest arrangement.
    """
    groups: dict[int, list[int]] = {}
    for u, m in enumerate(masks):
        if m:
            groups.setdefault(m, []).append(u)
    key, slots = [], []
    for m in canonical_subsets(k)[1:]:
        users = groups.get(m, ())
        key.append(len(users))
        slots.extend(users)
    return tuple(key), tuple(slots)


def solve_exhaustive(instance: Instance, limit: int = BRUTE_LIMIT) -> SolveResult:
    n, k = instance.n, instance.k
    space = (1 << k) ** n
    if space > limit:
        log.warning("exhaustive search refused: %d relations", space)
        raise GuardError("(2^k)^n", space, limit, "use the profile solver")
    started = time.perf_counter()
    full = (1 << k) - 1
    omega = [[instance.omega_of(u, m) for m in range(1 << k)] for u in range(n)]
    builtin = []
    custom = []
    for c in instance.constraints:
        if isinstance(c, CustomConstraint):
            custom.append(c)
        else:
            builtin.append((c, tuple(instance.resource_index(r) for r in c.scope)))

    best = None
    best_masks = None
    searched = 0
    for masks in product(canonical_subsets(k), repeat=n):
        union = 0
        for m in masks:
            union |= m
        if union != full:
            continue
        searched += 1
        cols = [0] * k
        for u, m in enumerate(masks):
            bit = 1 << u
            r = 0
            while m:
                if m & 1:
                    cols[r] |= bit
                m >>= 1
                r += 1
        total = sum(omega[u][m] for u, m in enumerate(masks))
        total += sum(eval_columns(c, idx, cols) for c, idx in builtin)
        if custom:
            relation = AuthorizationRelation(instance.users, instance.resources, masks)
            total += sum(int(c.relation_fn(relation)) for c in custom)
        if best is not None and total > best[0]:
            continue
        candidate = (total, *tie_break_key(masks, k))
        if best is None or candidate < best:
            best, best_masks = candidate, masks
    check_weight(best[0])
    relation = AuthorizationRelation(instance.users, instance.resources, best_masks)
    elapsed = time.perf_counter() - started
    log.info("exhaustive search: %d complete relations, weight %d in %.3fs", searched, best[0], elapsed)
    return SolveResult.build(instance, relation, {"solver": "brute", "relations_searched": searched}, elapsed)
