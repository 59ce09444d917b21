from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ccscopf.sensitivity import (build_susceptance, compute_lodf, compute_ptdf, compute_sensitivities,
                                 contingency_list, dc_flows)

from conftest import make_case, oracle_bridges, oracle_dc_flows, random_network, triangle


def _ptdf(case):
    return compute_ptdf(build_susceptance(case))


def test_two_bus_susceptance():
    c = make_case([0, 10], [(1, 2, 0.5, 100)], [(1, 50, 1)])
    assert build_susceptance(c).B_bus.toarray().tolist() == [[2, -2], [-2, 2]]


def test_pst_susceptance_columns():
    c = make_case([0, 10, 5], [(1, 2, 0.25, 100), (2, 3, 0.1, 100), (1, 3, 0.1, 100)], [(1, 50, 1)], psts=[(1, 30)])
    b = build_susceptance(c)
    assert b.B_gamma[:, 0].tolist() == [4.0, -4.0, 0.0]
    assert b.b_gamma[:, 0].tolist() == [4.0, 0.0, 0.0]


def test_no_psts_zero_width():
    b = build_susceptance(triangle())
    assert b.B_gamma.shape == (3, 0) and b.b_gamma.shape == (3, 0)


def test_triangle_ptdf():
    # frozen from a direct solve of the reduced nodal equations with slack at bus 3
    c = replace(triangle(), slack_bus=3)
    M = _ptdf(c)
    row = {ln.id: k for k, ln in enumerate(c.lines)}
    assert M[row[2], 0] == pytest.approx(2 / 3, abs=1e-12)  # line 1-3
    assert M[row[1], 0] == pytest.approx(1 / 3, abs=1e-12)  # line 1-2
    flows = oracle_dc_flows(c, np.array([100.0, 0.0, -100.0]))
    assert flows[2] == pytest.approx(200 / 3, abs=1e-9) and flows[1] == pytest.approx(100 / 3, abs=1e-9)


def test_slack_column_zero():
    c = replace(triangle(), slack_bus=2)
    assert np.all(_ptdf(c)[:, 1] == 0)


def test_radial_ptdf():
    c = make_case([0, 10], [(1, 2, 0.3, 100)], [(1, 50, 1)], slack=2)
    assert _ptdf(c)[0, 0] == pytest.approx(1.0)


def test_lodf_diagonal_and_triangle():
    s = compute_sensitivities(triangle())
    assert np.all(np.diag(s.lodf) == -1)
    # outage of 1-2 pushes all of its flow onto 1-3 (oracle: residual path 1-3-2)
    assert s.lodf[1, 0] == pytest.approx(1.0, abs=1e-12)


def test_parallel_lines_mutual_lodf():
    c = make_case([0, 10, 5], [(1, 2, 0.2, 100), (1, 2, 0.2, 100), (2, 3, 0.1, 100)], [(1, 50, 1)])
    s = compute_sensitivities(c)
    assert s.lodf[0, 1] == pytest.approx(1.0) and s.lodf[1, 0] == pytest.approx(1.0)
    assert s.bridges.tolist() == [False, False, True]
    assert np.all(np.isnan(s.lodf[:, 2]))


def test_contingency_lists():
    assert compute_sensitivities(triangle()).contingencies.size == 3
    radial = make_case([0, 1, 1, 1], [(1, 2, 0.1, 9), (2, 3, 0.1, 9), (2, 4, 0.1, 9)], [(1, 9, 1)])
    assert compute_sensitivities(radial).contingencies.size == 0
    bridges = np.array([False, True, False])
    assert contingency_list(bridges, np.array([4, 5, 6]), excluded=(6,)).tolist() == [0]


def test_ieee118_contingency_count(prep118):
    c = prep118.case
    live = [ln.id for ln in c.lines if ln.in_service]
    expected = len(live) - len(oracle_bridges(c)) - len(c.excluded_outages)
    assert expected == 172  # 186 branches, 2 replaced by HVDC, 10 bridges, 2 excluded outages
    assert prep118.sens.contingencies.size == expected


def _injections(case, rng):
    p = rng.normal(0, 50, case.n_bus)
    return p


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6))
def test_ptdf_matches_direct_solve(seed):
    c = random_network(seed, devices=False)
    s = compute_sensitivities(c)
    rng = np.random.default_rng(seed)
    ids = s.bundle.line_ids
    for _ in range(100):
        p = _injections(c, rng)
        f = s.ptdf @ p
        ref = oracle_dc_flows(c, p)
        assert np.max(np.abs(f - np.array([ref[int(i)] for i in ids]))) < 1e-9 * max(1.0, np.abs(p).sum())


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6))
def test_lodf_matches_degraded_solve(seed):
    c = random_network(seed, devices=False)
    s = compute_sensitivities(c)
    assert set(int(i) for i in s.bundle.line_ids[s.bridges]) == oracle_bridges(c)
    p = _injections(c, np.random.default_rng(seed))
    f = s.ptdf @ p
    ids = [int(i) for i in s.bundle.line_ids]
    for k in s.contingencies:
        ref = oracle_dc_flows(c, p, outage=ids[k])
        post = f + s.lodf[:, k] * f[k]
        for r, lid in enumerate(ids):
            if r != k:
                assert abs(post[r] - ref[lid]) < 1e-9 * max(1.0, np.abs(p).sum())


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6))
def test_susceptance_reproduces_injections(seed):
    c = random_network(seed)
    b = build_susceptance(c)
    rng = np.random.default_rng(seed)
    theta = rng.normal(0, 0.1, c.n_bus)
    theta[b.slack] = 0.0
    gamma = rng.normal(0, 0.05, len(c.psts))
    flows = b.b_line * (b.incidence @ theta) + b.b_gamma @ gamma
    assert np.allclose(b.incidence.T @ flows, b.B_bus @ theta + b.B_gamma @ gamma, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6))
def test_reference_flows_with_pst(seed):
    c = random_network(seed)
    rng = np.random.default_rng(seed)
    p = rng.normal(0, 0.5, c.n_bus)
    p -= p.mean()
    g = rng.normal(0, 0.1, len(c.psts))
    a = dc_flows(c, p, g)
    ref = oracle_dc_flows(c, p * c.base_mva, g)
    for lid, v in a.items():
        assert v * c.base_mva == pytest.approx(ref[lid], abs=1e-9)
