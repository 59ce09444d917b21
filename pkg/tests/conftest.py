"""Shared builders, independent oracles and session fixtures."""
from __future__ import annotations

import math
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from ccscopf.grid import (Bus, ChanceParams, Generator, GridCase, HvdcLink, Line, Pst, ReserveRequirement, UncertaintySpec,
                          load_case)

DATA = Path(__file__).resolve().parents[1] / "src" / "ccscopf" / "data"
CASE118 = DATA / "pglib_opf_case118_ieee.m"
SIDE118 = DATA / "ieee118.json"
CASE300 = DATA / "pglib_opf_case300_ieee.m"
SIDE300 = DATA / "ieee300.json"
CASE2383 = DATA / "pglib_opf_case2383wp_k.m"
SIDE2383 = DATA / "polish2383.json"


def make_case(loads, lines, gens, hvdc=(), psts=(), sigma=None, rho=0.0, zones=None, chance=None, slack=None,
              name="toy", reserve=(0.0, 0.0)) -> GridCase:
    """Build a case from plain tuples.

    ``lines``: (from, to, x, rating MW); ``gens``: (bus, p_max, cost[, p_min]);
    ``hvdc``: (from, to, p_max[, delta_max]); ``psts``: (line id, angle_max deg[, delta_max]).
    Buses are numbered 1..n. The system reserve requirement defaults to zero and
    per-unit reserve caps to full capacity, so only the per-unit reserve chance
    constraints act.
    """
    n = len(loads)
    zones = zones or [1] * n
    buses = tuple(Bus(k + 1, float(d), zones[k], 3 if k == 0 else 1) for k, d in enumerate(loads))
    lns = tuple(Line(k + 1, int(f), int(t), float(x), float(r)) for k, (f, t, x, r) in enumerate(lines))
    gs = tuple(Generator(k + 1, int(g[0]), float(g[1]), float(g[3]) if len(g) > 3 else 0.0, float(g[2]),
                         reserve_up_max=float(g[1]), reserve_down_max=float(g[1]))
               for k, g in enumerate(gens))
    hv = tuple(HvdcLink(k + 1, int(h[0]), int(h[1]), -float(h[2]), float(h[2]),
                        float(h[3]) if len(h) > 3 else 0.25 * float(h[2])) for k, h in enumerate(hvdc))
    ps = tuple(Pst(k + 1, int(p[0]), -float(p[1]), float(p[1]), float(p[2]) if len(p) > 2 else 0.25 * float(p[1]))
               for k, p in enumerate(psts))
    lns = tuple(replace(ln, has_pst=True) if ln.id in {p.line_id for p in ps} else ln for ln in lns)
    unc = None if sigma is None else UncertaintySpec(tuple(float(s) for s in sigma), rho)
    res = None if reserve is None else ReserveRequirement(*reserve)
    return GridCase(name, buses, lns, gs, hv, ps, unc, chance or ChanceParams(), res, slack or 1)


def triangle(rating=1e4, x=0.1) -> GridCase:
    return make_case([0.0, 0.0, 0.0], [(1, 2, x, rating), (1, 3, x, rating), (2, 3, x, rating)],
                     [(1, 100.0, 10.0)])


def random_network(seed: int, n_max: int = 8, devices: bool = True, sigma_frac: float = 0.15) -> GridCase:
    """Connected random network with loops, linear costs and optional HVDC/PST devices."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, n_max + 1))
    edges = []
    order = rng.permutation(n) + 1
    for k in range(1, n):
        edges.append((int(order[rng.integers(0, k)]), int(order[k])))
    have = {tuple(sorted(e)) for e in edges}
    for _ in range(int(rng.integers(1, n + 1))):
        a, b = (int(v) for v in rng.choice(n, 2, replace=False) + 1)
        if tuple(sorted((a, b))) not in have:
            have.add(tuple(sorted((a, b))))
            edges.append((a, b))
    loads = np.round(rng.uniform(5.0, 60.0, n), 3)
    loads[0] = 0.0
    total = loads.sum()
    lines = [(a, b, float(np.round(rng.uniform(0.05, 0.4), 4)), float(np.round(rng.uniform(0.45, 1.0) * total, 3)))
             for a, b in edges]
    gbus = sorted({1, *(int(v) for v in rng.choice(n, int(rng.integers(1, 3)), replace=False) + 1)})
    gens = [(b, float(np.round(1.6 * total / len(gbus) + 20.0, 3)), float(np.round(rng.uniform(10, 50), 3)))
            for b in gbus]
    hvdc, psts = [], []
    if devices and n >= 4:
        a, b = (int(v) for v in rng.choice(n, 2, replace=False) + 1)
        hvdc.append((a, b, float(np.round(0.2 * total, 3))))
        psts.append((int(rng.integers(1, len(lines) + 1)), 20.0))
    sigma = [sigma_frac * d for d in loads]
    zones = [int(z) for z in rng.integers(1, 3, n)]
    return make_case(list(loads), lines, gens, hvdc, psts, sigma, rho=0.3, zones=zones, name=f"rand{seed}")


def oracle_dc_flows(case: GridCase, injections_mw: np.ndarray, gamma_rad=None, outage: int | None = None) -> dict:
    """Line flows in MW from a dense pseudo-inverse solve of the nodal equations (slack absorbs imbalance)."""
    ids = [b.id for b in case.buses]
    pos = {b: k for k, b in enumerate(ids)}
    lines = [ln for ln in case.lines if ln.in_service and ln.id != outage]
    m = len(ids)
    A = np.zeros((len(lines), m))
    for r, ln in enumerate(lines):
        A[r, pos[ln.from_bus]] = 1.0
        A[r, pos[ln.to_bus]] = -1.0
    b = np.array([1.0 / ln.x for ln in lines])
    shift = np.zeros(len(lines))
    if gamma_rad is not None:
        angle = {p.line_id: g for p, g in zip(case.psts, gamma_rad)}
        shift = np.array([angle.get(ln.id, 0.0) for ln in lines])
    p = np.asarray(injections_mw, dtype=float) / case.base_mva
    p = p.copy()
    s = pos[case.slack]
    p[s] -= p.sum()
    # flows f = diag(b)(A theta + shift); balance A^T f = p
    L = A.T @ (b[:, None] * A)
    rhs = p - A.T @ (b * shift)
    theta = np.linalg.pinv(L) @ rhs
    theta -= theta[s]
    f = b * (A @ theta + shift)
    return {ln.id: float(v) * case.base_mva for ln, v in zip(lines, f)}


def oracle_bridges(case: GridCase) -> set[int]:
    """Lines whose removal disconnects the in-service graph, by brute-force search."""
    ids = [b.id for b in case.buses]
    live = [ln for ln in case.lines if ln.in_service]

    def connected(skip):
        adj = {b: [] for b in ids}
        for ln in live:
            if ln.id != skip:
                adj[ln.from_bus].append(ln.to_bus)
                adj[ln.to_bus].append(ln.from_bus)
        seen, stack = {ids[0]}, [ids[0]]
        while stack:
            for v in adj[stack.pop()]:
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        return len(seen) == len(ids)

    return {ln.id for ln in live if not connected(ln.id)}


def oracle_norm_cdf(x: float) -> float:
    """Standard normal CDF by adaptive quadrature of the density."""
    from scipy.integrate import quad

    val, _ = quad(lambda t: math.exp(-0.5 * t * t) / math.sqrt(2 * math.pi), 0.0, abs(x), epsabs=1e-14, epsrel=1e-13, limit=200)
    return 0.5 + val if x >= 0 else 0.5 - val


def oracle_quantile(p: float) -> float:
    lo, hi = -10.0, 10.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if oracle_norm_cdf(mid) < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@pytest.fixture(scope="session")
def case118():
    return load_case(CASE118, SIDE118)


@pytest.fixture(scope="session")
def prep118(case118):
    from ccscopf.solver import prepare

    return prepare(case118)


@pytest.fixture(scope="session")
def samples118(prep118):
    from ccscopf.uncertainty import sample_normal

    return sample_normal(prep118.model, 2000, seed=1)


@pytest.fixture(scope="session")
def compare118(prep118, samples118):
    """Modes a-e on the 118-bus case with 2000 replayed samples: (costs, solutions, reports)."""
    from ccscopf.validation import compare_modes

    return compare_modes(prep118, samples118, "abcde")


ACCEPTANCE: list[tuple[str, bool, str]] = []


def record(criterion: str, ok: bool, detail: str) -> bool:
    """Remember one acceptance verdict; all verdicts are echoed in the terminal summary."""
    line = f"ACCEPTANCE {criterion}: {'PASS' if ok else 'FAIL'} | {detail}"
    print(line)
    ACCEPTANCE.append((criterion, ok, detail))
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, ok, detail in ACCEPTANCE:
        terminalreporter.write_line(f"{criterion}: {'PASS' if ok else 'FAIL'} | {detail}")
