from itertools import combinations, product

import numpy as np
import pytest

from constraints import CardLB, SoDU, UserCount, linear
from errors import DomainError, GuardError
from model import AuthCost, total_weight
from resiliency import (
    ExtendedPlan, check_tau_resilient, encode_resilient, extended_plan_from_relation, is_valid_plan,
    satisfies_encoding,
)
from solver_profile import solve
from wsp import DisjointSets, MustDiffer, MustEqual, Plan, WspInstance


def _workflow(k, n, differ=(), base=None):
    steps = [f"s{i}" for i in range(1, k + 1)]
    users = [f"u{j}" for j in range(1, n + 1)]
    base = base if base is not None else ((1 << k) - 1,) * n
    return WspInstance(steps, users, [MustDiffer(steps[a], steps[b]) for a, b in differ], AuthCost(base, 1))


def _random_case(seed, k_max=3, n_max=6, sod_only=False):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, k_max + 1))
    n = int(rng.integers(2, n_max + 1))
    steps = [f"s{i}" for i in range(1, k + 1)]
    constraints = []
    if k >= 2:
        for _ in range(int(rng.integers(0, 4))):
            a, b = (steps[int(i)] for i in rng.choice(k, size=2, replace=False))
            kind = 1 if sod_only else int(rng.integers(3))
            if kind == 0:
                constraints.append(MustEqual(a, b))
            elif kind == 1:
                constraints.append(MustDiffer(a, b))
            else:
                constraints.append(DisjointSets((a,), (b,)))
    full = (1 << k) - 1
    base = tuple(full if rng.random() < 0.6 else int(rng.integers(0, full + 1)) for _ in range(n))
    w = WspInstance(steps, [f"u{j}" for j in range(1, n + 1)], constraints, AuthCost(base, 1))
    sets = tuple(int(rng.integers(1, 1 << n)) for _ in range(k))
    return w, ExtendedPlan(w.steps, w.users, sets), int(rng.integers(0, 3))


def _flat_check(w, ext, tau):
    for removed in combinations(range(w.n), tau):
        options = [[u for u in range(w.n) if ext.sets[s] >> u & 1 and u not in removed] for s in range(w.k)]
        if not any(is_valid_plan(w, Plan(w.steps, w.users, p)) for p in product(*options)):
            return False, tuple(w.users[u] for u in removed)
    return True, None


def test_encoding_shape():
    w = _workflow(3, 4, differ=[(0, 1), (1, 2)])
    inst = encode_resilient(w, 2)
    assert inst.resources == w.steps and inst.users == w.users
    sod = [c for c in inst.constraints if isinstance(c, SoDU)]
    card = [c for c in inst.constraints if isinstance(c, CardLB)]
    assert [(c.r1, c.r2, c.penalty(1)) for c in sod] == [("s1", "s2", 10), ("s2", "s3", 10)]
    assert [(c.r, c.t, c.penalty(1)) for c in card] == [("s1", 3, 10), ("s2", 3, 10), ("s3", 3, 10)]
    assert inst.constraints[-1] == UserCount("quadratic", 1)
    assert inst.auth_cost.pair_penalty == 1
    assert inst.meta["tau"] == 2
    assert inst.meta["penalties"] == {"sod": 10, "card": 10, "auth": 1, "user_count": 1}


def test_tau_zero_thresholds_are_one():
    inst = encode_resilient(_workflow(2, 3), 0)
    assert {c.t for c in inst.constraints if isinstance(c, CardLB)} == {1}


def test_encoding_rejects_binding_constraints():
    w = WspInstance(["s1", "s2"], ["u1"], [MustEqual("s1", "s2")])
    with pytest.raises(DomainError):
        encode_resilient(w, 1)
    with pytest.raises(DomainError):
        encode_resilient(_workflow(2, 2), -1)


def test_tau_zero_is_plan_existence():
    w = _workflow(2, 2, differ=[(0, 1)])
    same = ExtendedPlan.from_mapping(w, {"s1": ["u1"], "s2": ["u1"]})
    apart = ExtendedPlan.from_mapping(w, {"s1": ["u1"], "s2": ["u2"]})
    assert check_tau_resilient(w, same, 0) == (False, ())
    assert check_tau_resilient(w, apart, 0) == (True, None)


def test_disjoint_sets_of_size_tau_plus_one():
    w = _workflow(2, 4)
    ext = ExtendedPlan.from_mapping(w, {"s1": ["u1", "u2"], "s2": ["u3", "u4"]})
    assert satisfies_encoding(w, ext, 1)
    assert check_tau_resilient(w, ext, 1) == (True, None)
    assert not satisfies_encoding(w, ext, 2)
    assert check_tau_resilient(w, ext, 2) == (False, ("u1", "u2"))


def test_failure_reports_the_first_removed_set():
    w = _workflow(2, 3, differ=[(0, 1)])
    ext = ExtendedPlan.from_mapping(w, {"s1": ["u1", "u2"], "s2": ["u1", "u2"]})
    assert check_tau_resilient(w, ext, 1) == (False, ("u1",))
    assert check_tau_resilient(w, ext, 1, threads=3) == (False, ("u1",))


def test_unauthorized_users_do_not_count():
    w = _workflow(1, 3, base=(1, 0, 1))
    ext = ExtendedPlan.from_mapping(w, {"s1": ["u1", "u2"]})
    assert not satisfies_encoding(w, ext, 1)
    assert check_tau_resilient(w, ext, 1) == (False, ("u1",))


@pytest.mark.parametrize("seed", range(60))
def test_agrees_with_flat_enumeration(seed):
    w, ext, tau = _random_case(seed)
    assert check_tau_resilient(w, ext, tau) == _flat_check(w, ext, tau)


@pytest.mark.parametrize("seed", range(30))
def test_sufficient_condition_implies_resilience(seed):
    w, ext, tau = _random_case(seed, sod_only=True)
    if satisfies_encoding(w, ext, tau):
        assert check_tau_resilient(w, ext, tau) == (True, None)


@pytest.mark.parametrize("seed", range(50))
def test_zero_penalty_solutions_are_resilient(seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, 4))
    tau = int(rng.integers(0, 3))
    n = min(8, (tau + 1) * k + int(rng.integers(0, 2)))
    pairs = [(a, b) for a in range(k) for b in range(a + 1, k) if rng.random() < 0.5]
    w = _workflow(k, n, differ=pairs)
    inst = encode_resilient(w, tau, p_sod=50, p_card=50)
    result = solve(inst, ell=n)
    _, breakdown = total_weight(inst, result.relation)
    penalties = breakdown.omega + sum(breakdown.constraints[:-1])
    ext = extended_plan_from_relation(result.relation)
    assert (penalties == 0) == satisfies_encoding(w, ext, tau)
    if penalties == 0:
        assert check_tau_resilient(w, ext, tau) == (True, None)


def test_tau_outside_the_user_range():
    w = _workflow(1, 2)
    ext = ExtendedPlan.from_mapping(w, {"s1": ["u1", "u2"]})
    assert check_tau_resilient(w, ext, 2) == (False, ("u1", "u2"))
    for tau in (-1, 3):
        with pytest.raises(DomainError):
            check_tau_resilient(w, ext, tau)


def test_exclusion_guard():
    w = _workflow(1, 30)
    ext = ExtendedPlan(w.steps, w.users, ((1 << 30) - 1,))
    with pytest.raises(GuardError, match="sufficient"):
        check_tau_resilient(w, ext, 10)


def test_extended_plan_validation():
    w = _workflow(2, 2)
    with pytest.raises(DomainError):
        ExtendedPlan.from_mapping(w, {"s1": ["u1"]})
    with pytest.raises(DomainError):
        ExtendedPlan.from_mapping(w, {"s1": ["u1"], "s2": ["u9"]})
    with pytest.raises(DomainError):
        ExtendedPlan.from_mapping(w, {"s1": ["u1"], "s2": ["u1"], "s3": ["u2"]})
    ext = ExtendedPlan.from_mapping(w, {"s1": ["u2", "u1"], "s2": ["u2"]})
    assert ext.as_dict() == {"s1": ["u1", "u2"], "s2": ["u2"]}
    assert ext.users_of("s2") == ["u2"]


def test_disjoint_sets_count_as_separation():
    w = WspInstance(["s1", "s2"], ["u1", "u2"], [DisjointSets(("s1",), ("s2",), linear(2))],
                    AuthCost((0b11, 0b11), 1))
    ext = ExtendedPlan.from_mapping(w, {"s1": ["u1"], "s2": ["u1", "u2"]})
    assert check_tau_resilient(w, ext, 0) == (True, None)
    assert check_tau_resilient(w, ext, 1) == (False, ("u1",))
