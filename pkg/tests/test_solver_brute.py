import pytest

from conftest import build_random_instance
from errors import GuardError
from model import AuthCost, Instance, total_weight
from solver_brute import BRUTE_LIMIT, solve_exhaustive


def test_single_authorized_user():
    inst = Instance(["u1"], ["r1"], auth_cost=AuthCost((1,), 1))
    result = solve_exhaustive(inst)
    assert result.total_weight == 0
    assert result.relation.masks == (1,)


def test_nobody_authorized():
    inst = Instance(["u1", "u2"], ["r1"], auth_cost=AuthCost((0, 0), 3))
    result = solve_exhaustive(inst)
    assert result.total_weight == 3
    assert result.relation.masks == (1, 0)
    assert result.meta == {"solver": "brute", "relations_searched": 3}


@pytest.mark.parametrize("seed", range(30))
def test_result_is_complete_and_recomputes(seed):
    inst = build_random_instance(seed, n_max=4, k_max=3)
    result = solve_exhaustive(inst)
    assert result.relation.is_complete()
    assert total_weight(inst, result.relation)[0] == result.total_weight


def test_guard_refuses_large_spaces():
    inst = Instance([f"u{j}" for j in range(9)], ["r1", "r2", "r3"])
    assert (1 << 3) ** 9 > BRUTE_LIMIT
    with pytest.raises(GuardError, match="profile solver"):
        solve_exhaustive(inst)
