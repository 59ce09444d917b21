import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ccscopf.formulation import (BASE, MODES, Formulation, ModeConfig, clamp_setpoints, constraint_records,
                                 dump_problem, quantile, saturated_setpoints)
from ccscopf.grid import ChanceParams
from ccscopf.solver import prepare, solve_full_ccscopf, solve_monolithic
from ccscopf.uncertainty import UncertaintyModel

from conftest import make_case, random_network


def _form(case, mode="e", symmetric=True, model=None):
    prep = prepare(case, model=model)
    return Formulation(prep.case, prep.sens, prep.model, MODES[mode] if isinstance(mode, str) else mode, symmetric)


def tri_congested(rating=60.0, sigma=(0.0, 4.0, 8.0), eps=0.01):
    return make_case([0, 40, 80], [(1, 2, 0.1, 200), (1, 3, 0.1, rating), (2, 3, 0.1, 200)],
                     [(1, 300, 10), (3, 300, 40)], sigma=list(sigma), rho=0.3, chance=ChanceParams(eps, eps, 0.001))


def test_layout_disjoint_and_contiguous():
    f = _form(random_network(3))
    for kl in f.contingencies[:2]:
        f.add_pair(0 if kl else 1, int(kl), soc=True)
    f.assemble()
    spans = sorted((s.start, s.stop) for s in f.layout.ranges.values())
    assert spans[0][0] == 0
    assert all(a[1] == b[0] for a, b in zip(spans, spans[1:]))
    assert spans[-1][1] == f.layout.size


def test_objective_energy_and_reserves():
    c = make_case([0, 30, 20], [(1, 2, 0.1, 999), (2, 3, 0.1, 999), (1, 3, 0.1, 999)], [(1, 100, 1), (2, 100, 1)])
    f = _form(c, "a")
    x = np.zeros(f.layout.size)
    x[f.layout["p_G"]] = [0.3, 0.2]
    assert f.cost(x) == pytest.approx(50.0)  # unit costs: objective equals total load
    x[f.layout["r_up"]] = [0.1, 0.0]
    assert f.cost(x) == pytest.approx(60.0)


def test_hvdc_incidence_signs():
    c = make_case([0, 10, 10], [(1, 2, 0.1, 99), (2, 3, 0.1, 99), (1, 3, 0.1, 99)], [(1, 50, 1)], hvdc=[(1, 3, 20)])
    f = _form(c, "a")
    assert f.sens.bundle.C_dc[:, 0].tolist() == [-1.0, 0.0, 1.0]


def test_balance_row_carries_pst_term():
    c = make_case([0, 10, 10], [(1, 2, 0.25, 99), (2, 3, 0.1, 99), (1, 3, 0.1, 99)], [(1, 50, 1)], psts=[(1, 10)])
    f = _form(c, "a")
    A = f.assemble().A_eq
    g = f.layout["gamma"].start
    assert A[0, g] == pytest.approx(-4.0) and A[1, g] == pytest.approx(4.0)


def test_single_generator_takes_all_balancing():
    c = make_case([0, 30], [(1, 2, 0.1, 999)], [(1, 100, 5)], sigma=[0, 3])
    sol = solve_full_ccscopf(prepare(c), "d")
    assert sol.alpha_G.tolist() == pytest.approx([1.0])


def test_zero_sigma_reserve_rows_vanish():
    c = make_case([0, 30], [(1, 2, 0.1, 999)], [(1, 100, 5), (2, 100, 6)], sigma=[0, 0])
    f = _form(c, "d")
    assert "reserve" not in [k for k, _ in f.static_ub]


def test_reserve_ratio_on_binding_units(compare118, prep118):
    sol = compare118[1]["d"]
    k = quantile(prep118.case.chance.eps_gen) * prep118.model.sigma_omega
    act = sol.alpha_G > 1e-6
    ratio = sol.r_up[act] / sol.alpha_G[act]
    assert np.all(ratio >= k * (1 - 1e-6))
    binding = ratio < k * (1 + 1e-4)
    assert binding.any()
    assert np.allclose(ratio[binding], k, rtol=1e-4)


def test_post_contingency_cap(case118):
    assert [h.delta_max for h in case118.hvdc] == [125.0, 50.0, 43.75]


def test_quantile_at_half_removes_margins():
    assert quantile(0.5) == 0.0
    c = replace(random_network(5), chance=ChanceParams(0.5, 0.5, 0.5))
    f = _form(c, "e")
    assert f.q_line == f.q_dev == f.q_gen == 0.0
    assert not f.static_cones and not f.has_line_soc


def test_zero_policy_margin_equals_ptdf_norm():
    # Sigma = I (in p.u.^2), all policies zero: required margin = q * ||M_ij||
    c = make_case([0, 1, 1, 1], [(1, 2, 0.1, 99), (2, 3, 0.2, 99), (3, 4, 0.1, 99), (4, 1, 0.3, 99)], [(1, 50, 1)],
                  sigma=[0, 1, 1, 1])
    model = UncertaintyModel.from_covariance(np.diag([0.0, 1.0, 1.0, 1.0]) * 100.0**2)
    f = _form(c, "e", model=model)
    x = np.zeros(f.layout.size)
    q = quantile(0.01)
    for ij in range(f.l):
        s, req = f.soc_row(x, ij, BASE)
        assert req == pytest.approx(q * np.linalg.norm(f.M[ij, 1:]), rel=1e-12)
        assert s == 0.0


def test_base_pair_has_no_lodf_term():
    f = _form(random_network(11), "c")
    for ij in range(f.l):
        cols, vals = f.pair_flow_coefficients(ij, BASE)
        x = np.random.default_rng(ij).normal(size=f.layout.size)
        assert float(vals @ x[cols]) == pytest.approx(f.base_flows(x)[ij])


def test_soc_row_feasible_point_has_no_violation():
    prep = prepare(tri_congested())
    sol_form, res = solve_monolithic(prep, "e")
    for (ij, kl), e in sol_form.pairs.items():
        s, req = sol_form.soc_row(res.x, ij, kl)
        assert req - s <= 1e-7


def test_clamp_and_saturation():
    lo, hi = np.array([-1.0, -2.0]), np.array([1.0, 2.0])
    req = np.array([[0.5, -1.0], [3.0, -5.0]])
    assert clamp_setpoints(req, lo, hi).tolist() == [[0.5, -1.0], [1.0, -2.0]]
    c = make_case([0, 20, 40, 10], [(1, 2, 0.1, 99), (2, 3, 0.1, 99), (3, 4, 0.1, 99), (4, 1, 0.1, 99)],
                  [(1, 200, 10)], hvdc=[(1, 3, 30)], psts=[(2, 10)], sigma=[0, 2, 4, 1])
    prep = prepare(c)
    sol = solve_full_ccscopf(prep, "e")
    p, g = saturated_setpoints(sol, prep.case, np.zeros(4))
    assert p.tolist() == pytest.approx(sol.p_dc.tolist()) and g.tolist() == pytest.approx(sol.gamma.tolist())
    big = np.zeros((1, 4))
    big[0, 2] = 1e9
    sol.alpha_dc[:] = -1.0  # huge request in the positive direction
    p, _ = saturated_setpoints(sol, prep.case, big)
    assert p[0, 0] == 30.0


def test_records_pair_cones_with_linear_rows():
    prep = prepare(tri_congested())
    form, _ = solve_monolithic(prep, "e")
    recs = constraint_records(form)
    lin = {(r.ij, r.kl) for r in recs if r.kind == "line-linear"}
    soc = [(r.ij, r.kl) for r in recs if r.kind == "line-soc"]
    assert soc and all(p in lin for p in soc)
    doc = dump_problem(form)
    assert len(doc["cones"]) == sum(1 for r in recs if r.block == "cone")
    assert doc["A_ub"]["shape"][0] == len(doc["b_ub"])


def test_symmetric_matches_direct_three_bus():
    prep = prepare(tri_congested())
    a, ra = solve_monolithic(prep, "e", symmetric=True)
    b, rb = solve_monolithic(prep, "e", symmetric=False)
    assert a.cost(ra.x) == pytest.approx(b.cost(rb.x), rel=1e-6)


def test_deterministic_limit_same_problem_size():
    c = random_network(8)
    prep = prepare(c, model=UncertaintyModel.zero(c.n_bus))
    fd = Formulation(prep.case, prep.sens, prep.model, MODES["d"])
    fc = Formulation(prep.case, prep.sens, prep.model, MODES["c"])
    for f in (fd, fc):
        for kl in f.contingencies:
            for ij in range(f.l):
                if ij != kl:
                    f.add_pair(ij, int(kl), soc=True)
    pd, pc = fd.assemble(), fc.assemble()
    assert not pd.cones and not pc.cones
    assert (pd.A_ub != pc.A_ub).nnz == 0 and np.array_equal(pd.b_ub, pc.b_ub)
    assert (pd.A_eq != pc.A_eq).nnz == 0 and np.array_equal(pd.c, pc.c)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6))
def test_margins_nonnegative(seed):
    f = _form(random_network(seed), "e")
    x = np.random.default_rng(seed).normal(size=f.layout.size)
    base, post = f.std_matrix(x)
    assert np.all(base >= 0) and np.all(post >= 0)
    for ij in range(f.l):
        assert f.soc_row(x, ij, BASE)[1] >= 0


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6))
def test_std_matrix_matches_pairwise(seed):
    f = _form(random_network(seed), "e")
    x = np.random.default_rng(seed).normal(size=f.layout.size)
    base, post = f.std_matrix(x)
    for ij in range(f.l):
        assert base[ij] == pytest.approx(f.pair_std(x, ij, BASE), rel=1e-9, abs=1e-12)
        for c, kl in enumerate(f.contingencies):
            if kl != ij:
                assert post[ij, c] == pytest.approx(f.pair_std(x, ij, int(kl)), rel=1e-7, abs=1e-10)


def test_custom_mode_without_security():
    mode = ModeConfig("x", uncertain=True, security=False, post_contingency_control=False, uncertainty_control=True)
    f = _form(tri_congested(), mode)
    assert len(f.contingencies) == 0 and "delta" not in f.layout
    with pytest.raises(ValueError):
        f.add_pair(0, 1, soc=True)
