import numpy as np
import pytest

from constraints import BoDE, BoDU, CardLB, CardUB, SoDE, SoDU, UserCount, linear, table
from model import AuthCost, AuthorizationRelation, Instance

FAMILIES = ("sod_u", "bod_u", "sod_e", "bod_e", "card_ub", "card_lb", "user_count")


def _penalty(rng):
    if rng.random() < 0.25:
        first = int(rng.integers(1, 4))
        return table([first, first + int(rng.integers(0, 3))], int(rng.integers(1, 3)))
    return linear(int(rng.integers(1, 6)))


def random_constraint(rng, resources, family):
    if family == "user_count":
        return UserCount("quadratic" if rng.random() < 0.7 else "linear", int(rng.integers(1, 3)))
    if family in ("card_ub", "card_lb"):
        r = resources[int(rng.integers(len(resources)))]
        cls = CardUB if family == "card_ub" else CardLB
        return cls(r, int(rng.integers(1, 4)), _penalty(rng))
    a, b = (resources[int(i)] for i in rng.choice(len(resources), size=2, replace=False))
    if family == "sod_e":
        return SoDE(a, b, int(rng.integers(1, 5)))
    if family == "bod_e":
        return BoDE(a, b, int(rng.integers(1, 5)))
    return (SoDU if family == "sod_u" else BoDU)(a, b, _penalty(rng))


def build_random_instance(seed, n_max=5, k_max=3, families=FAMILIES, n_constraints=(0, 4), n_min=1, k_min=1):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(n_min, n_max + 1))
    k = int(rng.integers(k_min, k_max + 1))
    users = [f"u{j + 1}" for j in range(n)]
    resources = [f"r{i + 1}" for i in range(k)]
    usable = [f for f in families if k >= 2 or f not in ("sod_u", "bod_u", "sod_e", "bod_e")]
    constraints = []
    if usable:
        for _ in range(int(rng.integers(n_constraints[0], n_constraints[1] + 1))):
            family = usable[int(rng.integers(len(usable)))]
            constraints.append(random_constraint(rng, resources, family))
    base = tuple(int(rng.integers(0, 1 << k)) for _ in range(n))
    if rng.random() < 0.3:
        penalty = tuple(tuple(int(rng.integers(0, 4)) for _ in range(k)) for _ in range(n))
    else:
        penalty = int(rng.integers(1, 4))
    return Instance(users, resources, constraints, AuthCost(base, penalty))


def build_random_relation(instance, seed, complete=False):
    rng = np.random.default_rng(seed)
    full = (1 << instance.k) - 1
    while True:
        masks = [int(rng.integers(0, full + 1)) for _ in range(instance.n)]
        union = 0
        for m in masks:
            union |= m
        if not complete or union == full:
            return AuthorizationRelation.from_masks(instance, masks)


@pytest.fixture
def random_instance():
    return build_random_instance


@pytest.fixture
def random_relation():
    return build_random_relation


@pytest.fixture
def figure1():
    """Four resources, five users; u5 holds nothing."""
    instance = Instance([f"u{j}" for j in range(1, 6)], ["r1", "r2", "r3", "r4"])
    relation = AuthorizationRelation.from_columns(instance, {
        "r1": ["u1", "u2", "u3"],
        "r2": ["u2", "u3", "u4"],
        "r3": ["u4"],
        "r4": ["u4"],
    })
    return instance, relation


@pytest.fixture
def bode_sodu_example():
    """Three BoD_E and two SoD_U constraints over r1..r4 with unit weights."""
    users = ["u1", "u2", "u3", "u4"]
    resources = ["r1", "r2", "r3", "r4"]
    constraints = [
        BoDE("r1", "r2"), BoDE("r1", "r3"), BoDE("r3", "r4"),
        SoDU("r1", "r4", linear(1)), SoDU("r2", "r4", linear(1)),
    ]
    base = (0b0011, 0b0101, 0b0010, 0b1000)
    return Instance(users, resources, constraints, AuthCost(base, 1))
