import numpy as np
import pytest

from conftest import build_random_relation
from constraints import BoDU, CardLB, CardUB, SoDU, UserCount, linear, table
from errors import DomainError, GuardError, InfeasibleError
from generator import GeneratorConfig, generate
from mipgen import Formulation, build_naive, build_up, eval_at, export_lp, parabola_cuts, reread
from model import AuthCost, AuthorizationRelation, Instance, total_weight


def _linear_instance(seed, n_max=5, k_max=3):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, n_max + 1))
    k = int(rng.integers(1, k_max + 1))
    resources = [f"r{i + 1}" for i in range(k)]
    constraints = []
    for _ in range(int(rng.integers(0, 5))):
        kind = int(rng.integers(4))
        r = resources[int(rng.integers(k))]
        slope = linear(int(rng.integers(1, 6)))
        if kind == 0 and k >= 2:
            a, b = (resources[int(i)] for i in rng.choice(k, size=2, replace=False))
            constraints.append(SoDU(a, b, slope))
        elif kind == 1:
            constraints.append(CardLB(r, int(rng.integers(1, 4)), slope))
        elif kind == 2:
            constraints.append(CardUB(r, int(rng.integers(1, 3)), slope))
        else:
            constraints.append(UserCount("quadratic" if rng.random() < 0.7 else "linear", int(rng.integers(1, 3))))
    base = tuple(int(rng.integers(0, 1 << k)) for _ in range(n))
    penalty = int(rng.integers(1, 4)) if rng.random() < 0.7 else \
        tuple(tuple(int(rng.integers(0, 4)) for _ in range(k)) for _ in range(n))
    return Instance([f"u{j + 1}" for j in range(n)], resources, constraints, AuthCost(base, penalty))


def _small_sodu():
    return Instance(["u1", "u2", "u3"], ["r1", "r2"], [SoDU("r1", "r2", linear(4))], AuthCost((1, 2, 3), 1))


def test_naive_variable_counts():
    f = build_naive(_small_sodu())
    assert len(f.names_with_prefix("x_r")) == 6
    assert len(f.names_with_prefix("q_c0_")) == 3
    assert f.names_with_prefix("p_c") == ["p_c0"]


def test_profile_variable_counts():
    assert len(build_up(_small_sodu()).names_with_prefix("xT")) == 12
    inst = Instance([f"u{j}" for j in range(10)], ["a", "b", "c"])
    assert len(build_up(inst).names_with_prefix("xT")) == 80


def test_parabola_envelope_is_exact_at_integers():
    for n in range(1, 65):
        cuts = parabola_cuts(n)
        for z in range(n + 1):
            assert max(0, max(a * z + b for a, b in cuts)) == z * z
        for z2 in range(2 * n + 1):
            z = z2 / 2
            assert max(0, max(a * z + b for a, b in cuts)) <= z * z + 0.25


@pytest.mark.parametrize("seed", range(100))
def test_both_models_price_a_relation_like_the_objective(seed):
    inst = _linear_instance(seed)
    A = build_random_relation(inst, seed + 50, complete=True)
    expected = total_weight(inst, A)[0]
    assert eval_at(build_naive(inst), A) == expected
    assert eval_at(build_up(inst), A) == expected


def test_generated_instance_prices_match():
    inst = generate(GeneratorConfig(12, k=3, tau=1, seed=2))
    A = AuthorizationRelation.from_masks(inst, [1 << (j % 3) for j in range(12)])
    expected = total_weight(inst, A)[0]
    assert eval_at(build_naive(inst), A) == expected
    assert eval_at(build_up(inst), A) == expected


def test_incomplete_relation_is_infeasible():
    inst = _small_sodu()
    with pytest.raises(InfeasibleError):
        eval_at(build_naive(inst), AuthorizationRelation.from_masks(inst, [1, 0, 0]))


def _rows(problem):
    rows = {}
    for name, c in problem.constraints.items():
        d = c.toDict()
        rows[name] = ({t["name"]: t["value"] for t in d["coefficients"]}, d["sense"], d["constant"])
    return rows


def _objective(problem):
    if problem.objective is None:
        return {}
    return {t["name"]: t["value"] for t in problem.objective.toDict() if t["value"]}


@pytest.mark.parametrize("seed", range(15))
def test_lp_model_survives_a_file_round_trip(seed):
    inst = _linear_instance(seed)
    for f in (build_naive(inst), build_up(inst)):
        again = reread(f)
        assert {v.name for v in again.variables()} == set(f.variables)
        assert _rows(again) == _rows(f.problem)
        assert _objective(again) == f.objective


def test_generated_export_parses_back():
    inst = generate(GeneratorConfig(10, k=3, tau=1, seed=4))
    naive, up = build_naive(inst), build_up(inst)
    assert len(reread(naive).variables()) == len(naive.variables)
    assert sum(v.name.startswith("xT") for v in reread(up).variables()) == 80


def test_export_is_deterministic():
    inst = _linear_instance(3)
    assert export_lp(build_naive(inst)) == export_lp(build_naive(inst))
    assert export_lp(build_up(inst)) == export_lp(build_up(inst))


def test_minimal_document():
    f = build_naive(Instance(["u1"], ["r1"], auth_cost=AuthCost((1,), 1)))
    assert f.objective == {}
    text = export_lp(f)
    assert text.startswith("\\* apep_naive *\\")
    assert "Minimize" in text and "Subject To" in text
    assert "cover_r0:" in text and "x_r0_u0" in text
    assert text.endswith("End\n")


def test_penalty_rows():
    inst = Instance(["u1", "u2"], ["r1"], [CardLB("r1", 2, linear(3))], AuthCost((0, 1), 2))
    f = build_naive(inst)
    assert f.objective == {"p_c0": 1, "x_r0_u0": 2}
    coefficients, sense, constant = _rows(f.problem)["c0"]
    assert coefficients == {"p_c0": 1, "x_r0_u0": 3, "x_r0_u1": 3}
    assert sense == 1 and constant == -6
    assert f.variables["p_c0"].lowBound == 0 and f.variables["p_c0"].upBound is None
    assert "c0:" in export_lp(f)


def test_rejects_unsupported_models():
    with pytest.raises(DomainError):
        build_naive(Instance(["u1"], ["r1", "r2"], [BoDU("r1", "r2")]))
    with pytest.raises(DomainError):
        build_up(Instance(["u1"], ["r1"], [CardLB("r1", 2, table([1, 5]))]))
    custom = AuthCost((0,), omega_fn=lambda u, mask: mask)
    with pytest.raises(DomainError):
        build_naive(Instance(["u1"], ["r1"], auth_cost=custom))


def test_profile_model_guard():
    inst = Instance([f"u{j}" for j in range(10)], ["a", "b", "c"])
    with pytest.raises(GuardError):
        build_up(inst, max_variables=50)


def test_formulation_bookkeeping_errors():
    f = Formulation("m")
    f.add_variable("x", binary=True)
    with pytest.raises(DomainError):
        f.add_variable("x")
    with pytest.raises(DomainError):
        f.add_row("r", [("y", 1)], ">=", 1)
    with pytest.raises(DomainError):
        f.add_row("r", [("x", 1)], "<>", 1)
    f.add_row("r", [("x", 1)], ">=", 1)
    with pytest.raises(DomainError):
        f.add_row("r", [("x", 1)], "<=", 1)
