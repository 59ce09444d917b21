"""Network case model: MATPOWER parsing, case scaling, device/uncertainty sidecars."""
from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .uncertainty import inv_norm_cdf

BASE_MVA = 100.0


class CaseError(ValueError):
    """Raised for malformed or inconsistent case input."""


@dataclass(frozen=True)
class Bus:
    id: int
    load: float  # MW
    zone: int = 1
    kind: int = 1  # MATPOWER type: 1 PQ, 2 PV, 3 reference, 4 isolated


@dataclass(frozen=True)
class Line:
    id: int  # 1-based position in the branch table
    from_bus: int
    to_bus: int
    x: float  # p.u., tap-adjusted; negative for series-compensated branches
    rating: float  # MW, math.inf when unrated
    in_service: bool = True
    has_pst: bool = False


@dataclass(frozen=True)
class Generator:
    id: int
    bus: int
    p_max: float
    p_min: float
    cost: float  # $/MWh
    cost_up: float | None = None  # $/MW, defaults to ``cost``
    cost_down: float | None = None
    reserve_up_max: float | None = None  # MW, None means unlimited
    reserve_down_max: float | None = None

    @property
    def c_up(self) -> float:
        return self.cost if self.cost_up is None else self.cost_up

    @property
    def c_down(self) -> float:
        return self.cost if self.cost_down is None else self.cost_down


@dataclass(frozen=True)
class HvdcLink:
    id: int
    from_bus: int
    to_bus: int
    p_min: float
    p_max: float
    delta_max: float  # MW, post-contingency set-point change cap
    replaces_line: int | None = None


@dataclass(frozen=True)
class Pst:
    id: int
    line_id: int
    angle_min: float  # degrees
    angle_max: float
    delta_max: float  # degrees


@dataclass(frozen=True)
class UncertaintySpec:
    """Per-bus standard deviations (MW, aligned with ``GridCase.buses``) and intra-zone correlation.

    ``covariance`` optionally overrides the zone construction with an explicit
    m x m matrix in MW^2, stored as nested tuples so the object stays hashable.
    """

    sigma: tuple[float, ...]
    rho: float = 0.0
    covariance: tuple[tuple[float, ...], ...] | None = None

    def __post_init__(self):
        if any(s < 0 or not math.isfinite(s) for s in self.sigma):
            raise CaseError("standard deviations must be finite and nonnegative")


@dataclass(frozen=True)
class ChanceParams:
    eps_line: float = 0.01
    eps_device: float = 0.01
    eps_gen: float = 0.001

    def __post_init__(self):
        for name in ("eps_line", "eps_device", "eps_gen"):
            v = getattr(self, name)
            if not 0.0 < v <= 0.5:
                raise CaseError(f"{name}={v} outside (0, 0.5]; the cone reformulation is only convex there")


@dataclass(frozen=True)
class ReserveRequirement:
    up: float  # MW
    down: float

    def __post_init__(self):
        if self.up < 0 or self.down < 0:
            raise CaseError("reserve requirements must be nonnegative")


@dataclass(frozen=True)
class GridCase:
    name: str
    buses: tuple[Bus, ...]
    lines: tuple[Line, ...]
    generators: tuple[Generator, ...]
    hvdc: tuple[HvdcLink, ...] = ()
    psts: tuple[Pst, ...] = ()
    uncertainty: UncertaintySpec | None = None
    chance: ChanceParams = field(default_factory=ChanceParams)
    reserve: ReserveRequirement | None = None
    slack_bus: int | None = None
    base_mva: float = BASE_MVA
    excluded_outages: tuple[int, ...] = ()  # line ids left out of the N-1 list

    @property
    def n_bus(self) -> int:
        return len(self.buses)

    @property
    def bus_index(self) -> dict[int, int]:
        return {b.id: k for k, b in enumerate(self.buses)}

    @property
    def line_by_id(self) -> dict[int, Line]:
        return {ln.id: ln for ln in self.lines}

    @property
    def active_lines(self) -> tuple[Line, ...]:
        return tuple(ln for ln in self.lines if ln.in_service)

    @property
    def loads(self) -> np.ndarray:
        return np.array([b.load for b in self.buses], dtype=float)

    @property
    def slack(self) -> int:
        if self.slack_bus is not None:
            return self.slack_bus
        refs = [b.id for b in self.buses if b.kind == 3]
        return refs[0] if refs else self.buses[0].id

    def with_uncertainty(self, spec: UncertaintySpec | None) -> "GridCase":
        return replace(self, uncertainty=spec)


# --------------------------------------------------------------------------
# MATPOWER parsing

_BLOCK_RE = re.compile(r"mpc\.(\w+)\s*=\s*\[")


def _matrix_blocks(text: str) -> dict[str, list[tuple[int, list[float]]]]:
    blocks: dict[str, list[tuple[int, list[float]]]] = {}
    lines = text.splitlines()
    i = 0
    while i < len(lines):
        m = _BLOCK_RE.search(lines[i].split("%")[0])
        if not m:
            i += 1
            continue
        name = m.group(1)
        rows: list[tuple[int, list[float]]] = []
        rest = lines[i].split("%")[0][m.end():]
        lineno = i + 1
        done = False
        while True:
            body = rest.split("%")[0]
            if "]" in body:
                body = body[: body.index("]")]
                done = True
            for chunk in body.split(";"):
                chunk = chunk.strip()
                if not chunk:
                    continue
                try:
                    rows.append((lineno, [float(v) for v in chunk.replace(",", " ").split()]))
                except ValueError as exc:
                    raise CaseError(f"line {lineno}: malformed row in mpc.{name}: {chunk!r}") from exc
            if done:
                break
            i += 1
            if i >= len(lines):
                raise CaseError(f"mpc.{name} block is not terminated")
            rest, lineno = lines[i], i + 1
        blocks[name] = rows
        i += 1
    return blocks


def _check_width(name, rows, width):
    for lineno, row in rows:
        if len(row) < width:
            raise CaseError(f"line {lineno}: mpc.{name} row has {len(row)} columns, expected at least {width}")


def parse_matpower(text: str, name: str = "case", quadratic: str = "error") -> GridCase:
    """Parse MATPOWER case text into a :class:`GridCase` without devices or uncertainty.

    Only in-service generators are kept. Out-of-service branches are kept with
    ``in_service=False`` so branch numbering matches the file. A zero ``rateA``
    is read as an unrated line.

    Parameters
    ----------
    quadratic : {"error", "linearize"}
        How to treat polynomial costs with a nonzero quadratic term. ``"linearize"``
        uses the marginal cost at the midpoint of the generator's range.
    """
    blocks = _matrix_blocks(text)
    for key in ("bus", "branch", "gen", "gencost"):
        if key not in blocks:
            raise CaseError(f"mpc.{key} block missing")
    m = re.search(r"mpc\.baseMVA\s*=\s*([0-9.eE+-]+)", text)
    base = float(m.group(1)) if m else BASE_MVA
    if base != BASE_MVA:
        raise CaseError(f"baseMVA={base} unsupported; only {BASE_MVA:g} MVA cases are handled")

    _check_width("bus", blocks["bus"], 11)
    _check_width("branch", blocks["branch"], 11)
    _check_width("gen", blocks["gen"], 10)
    _check_width("gencost", blocks["gencost"], 4)

    buses = tuple(
        Bus(id=int(r[0]), load=r[2], zone=int(r[10]), kind=int(r[1])) for _, r in blocks["bus"]
    )
    lines = []
    for k, (_, r) in enumerate(blocks["branch"], start=1):
        tap = r[8] if r[8] != 0 else 1.0
        lines.append(
            Line(
                id=k,
                from_bus=int(r[0]),
                to_bus=int(r[1]),
                x=r[3] * tap,
                rating=r[5] if r[5] > 0 else math.inf,
                in_service=r[10] > 0,
            )
        )
    if len(blocks["gencost"]) < len(blocks["gen"]):
        raise CaseError("mpc.gencost has fewer rows than mpc.gen")
    gens = []
    for k, ((_, g), (lineno, c)) in enumerate(zip(blocks["gen"], blocks["gencost"]), start=1):
        if g[7] <= 0:
            continue
        gens.append(
            Generator(id=k, bus=int(g[0]), p_max=g[8], p_min=g[9], cost=_linear_cost(k, lineno, c, g, quadratic))
        )
    slack = [b.id for b in buses if b.kind == 3]
    return GridCase(
        name=name,
        buses=buses,
        lines=tuple(lines),
        generators=tuple(gens),
        slack_bus=slack[0] if slack else None,
    )


def _linear_cost(gen_id, lineno, row, gen_row, quadratic):
    model, ncost = int(row[0]), int(row[3])
    coeffs = row[4 : 4 + ncost]
    if model != 2:
        raise CaseError(f"line {lineno}: generator {gen_id} uses cost model {model}; only polynomial (2) is supported")
    if len(coeffs) < ncost:
        raise CaseError(f"line {lineno}: generator {gen_id} declares {ncost} cost coefficients but has {len(coeffs)}")
    if ncost <= 1:
        return 0.0
    high = coeffs[: ncost - 2]  # degree >= 2, highest first
    c1 = coeffs[ncost - 2]
    if any(v != 0 for v in high):
        if quadratic != "linearize" or ncost > 3:
            raise CaseError(
                f"line {lineno}: generator {gen_id} has a nonlinear cost polynomial; only linear costs are supported"
            )
        return c1 + high[-1] * (gen_row[8] + gen_row[9])
    return c1


def write_matpower(case: GridCase) -> str:
    """Serialize the network part of ``case`` back to MATPOWER text."""
    out = [f"function mpc = {re.sub(r'[^0-9A-Za-z_]', '_', case.name)}", "mpc.version = '2';",
           f"mpc.baseMVA = {case.base_mva:.17g};", "", "mpc.bus = ["]
    slack = case.slack
    for b in case.buses:
        kind = 3 if b.id == slack else (1 if b.kind == 3 else b.kind)
        out.append(f"\t{b.id}\t{kind}\t{b.load:.17g}\t0\t0\t0\t1\t1\t0\t0\t{b.zone}\t1.1\t0.9;")
    out += ["];", "", "mpc.gen = ["]
    by_id = {g.id: g for g in case.generators}
    # offline placeholder rows keep generator ids equal to their row position
    slots = [by_id.get(k) for k in range(1, max(by_id, default=0) + 1)]
    for g in slots:
        if g is None:
            out.append(f"\t{case.slack}\t0\t0\t0\t0\t1\t{case.base_mva:g}\t0\t0\t0;")
        else:
            out.append(f"\t{g.bus}\t0\t0\t0\t0\t1\t{case.base_mva:g}\t1\t{g.p_max:.17g}\t{g.p_min:.17g};")
    out += ["];", "", "mpc.gencost = ["]
    for g in slots:
        out.append(f"\t2\t0\t0\t2\t{0.0 if g is None else g.cost:.17g}\t0;")
    out += ["];", "", "mpc.branch = ["]
    for ln in case.lines:
        rate = 0.0 if math.isinf(ln.rating) else ln.rating
        out.append(
            f"\t{ln.from_bus}\t{ln.to_bus}\t0\t{ln.x:.17g}\t0\t{rate:.17g}\t0\t0\t0\t0\t{int(ln.in_service)}\t-360\t360;"
        )
    out += ["];", ""]
    return "\n".join(out)


def load_matpower(path: str | Path, **kw) -> GridCase:
    path = Path(path)
    return parse_matpower(path.read_text(), name=path.stem, **kw)


# --------------------------------------------------------------------------
# Modifications


def apply_case_modifications(
    case: GridCase,
    load_scale: float = 1.0,
    gen_scale: float = 1.0,
    line_scale: float = 1.0,
    zero_pmin: bool = False,
) -> GridCase:
    """Scale loads, generator capacities and line ratings."""
    if min(load_scale, gen_scale, line_scale) <= 0:
        raise CaseError("scale factors must be positive")
    buses = tuple(replace(b, load=b.load * load_scale) for b in case.buses)
    gens = tuple(
        replace(g, p_max=g.p_max * gen_scale, p_min=0.0 if zero_pmin else g.p_min * gen_scale)
        for g in case.generators
    )
    lines = tuple(replace(ln, rating=ln.rating * line_scale) for ln in case.lines)
    return replace(case, buses=buses, generators=gens, lines=lines)


def _resolve_bus(case: GridCase, ref: int, mode: str) -> int:
    if mode == "position":
        if not 1 <= ref <= case.n_bus:
            raise CaseError(f"bus position {ref} out of range")
        return case.buses[ref - 1].id
    if ref not in case.bus_index:
        raise CaseError(f"bus {ref} not in case")
    return ref


def attach_devices_and_uncertainty(case: GridCase, sidecar: Mapping | str | None) -> GridCase:
    """Attach HVDC links, PSTs, uncertainty, chance and reserve settings from a sidecar document.

    The ``modifications`` key, when present, is applied first so that
    percentage-based standard deviations refer to the scaled loads. The schema
    is documented in ``docs/sidecar.md``.
    """
    if sidecar is None:
        return case
    doc = json.loads(sidecar) if isinstance(sidecar, str) else dict(sidecar)
    if not doc:
        return case
    mode = doc.get("bus_index_mode", "id")

    mods = doc.get("modifications")
    if mods:
        case = apply_case_modifications(
            case,
            load_scale=mods.get("load_scale", 1.0),
            gen_scale=mods.get("gen_scale", 1.0),
            line_scale=mods.get("line_scale", 1.0),
            zero_pmin=mods.get("zero_pmin", False),
        )

    lines = {ln.id: ln for ln in case.lines}
    hvdc = list(case.hvdc)
    for k, h in enumerate(doc.get("hvdc", []), start=len(hvdc) + 1):
        fb = _resolve_bus(case, int(h["from_bus"]), mode)
        tb = _resolve_bus(case, int(h["to_bus"]), mode)
        p_max = float(h["p_max"])
        p_min = float(h.get("p_min", -p_max))
        if "delta_max" in h:
            dmax = float(h["delta_max"])
        else:
            dmax = float(h.get("delta_max_frac", 0.25)) * p_max
        rep = h.get("replaces_line")
        if rep is not None:
            rep = int(rep)
            if rep not in lines:
                raise CaseError(f"HVDC {k}: replaced line {rep} does not exist")
            lines[rep] = replace(lines[rep], in_service=False)
        hvdc.append(HvdcLink(id=int(h.get("id", k)), from_bus=fb, to_bus=tb, p_min=p_min, p_max=p_max,
                             delta_max=dmax, replaces_line=rep))

    psts = list(case.psts)
    used = {p.line_id for p in psts}
    for k, p in enumerate(doc.get("pst", []), start=len(psts) + 1):
        lid = int(p["line"])
        if lid not in lines:
            raise CaseError(f"PST {k}: line {lid} does not exist")
        if lid in used:
            raise CaseError(f"PST {k}: line {lid} already carries a PST")
        used.add(lid)
        amax = float(p.get("angle_max", 30.0))
        amin = float(p.get("angle_min", -amax))
        dmax = float(p["delta_max"]) if "delta_max" in p else float(p.get("delta_max_frac", 0.25)) * amax
        psts.append(Pst(id=int(p.get("id", k)), line_id=lid, angle_min=amin, angle_max=amax, delta_max=dmax))
        lines[lid] = replace(lines[lid], has_pst=True)

    case = replace(case, lines=tuple(lines[ln.id] for ln in case.lines), hvdc=tuple(hvdc), psts=tuple(psts))

    if "uncertainty" in doc:
        case = replace(case, uncertainty=uncertainty_from_doc(case, doc["uncertainty"], mode))
    if "chance" in doc:
        c = doc["chance"]
        case = replace(case, chance=ChanceParams(
            eps_line=c.get("eps_l", 0.01), eps_device=c.get("eps", 0.01), eps_gen=c.get("eps_g", 0.001)))
    if "reserve" in doc:
        r = doc["reserve"]
        if "up" in r and "down" in r:
            case = replace(case, reserve=ReserveRequirement(float(r["up"]), float(r["down"])))
        if "cap_frac" in r:
            case = set_reserve_caps(case, float(r["cap_frac"]))
    if "exclude_outages" in doc:
        bad = [int(i) for i in doc["exclude_outages"] if int(i) not in lines]
        if bad:
            raise CaseError(f"excluded outage(s) {bad} are not lines of the case")
        case = replace(case, excluded_outages=tuple(sorted(int(i) for i in doc["exclude_outages"])))
    if "slack_bus" in doc:
        case = replace(case, slack_bus=_resolve_bus(case, int(doc["slack_bus"]), mode))
    return case


def uncertainty_from_doc(case: GridCase, u: Mapping, mode: str = "id") -> UncertaintySpec:
    """Build an :class:`UncertaintySpec` from the ``uncertainty`` sidecar object."""
    loads = case.loads
    sigma = np.zeros(case.n_bus)
    if "sigma_pct" in u:
        threshold = float(u.get("min_load", 0.0))
        mask = loads > threshold
        sigma[mask] = float(u["sigma_pct"]) / 100.0 * loads[mask]
    idx = case.bus_index
    for ref, val in u.get("per_bus", {}).items():
        sigma[idx[_resolve_bus(case, int(ref), mode)]] = float(val)
    cov = None
    if "covariance" in u:
        cov = tuple(tuple(float(v) for v in row) for row in u["covariance"])
    return UncertaintySpec(sigma=tuple(float(s) for s in sigma), rho=float(u.get("rho", 0.0)), covariance=cov)


def assign_zones(case: GridCase, zones: Mapping[int, Iterable[int]]) -> GridCase:
    """Relabel bus zones; buses not listed keep their current zone."""
    zone_of = {int(b): int(z) for z, members in zones.items() for b in members}
    return replace(case, buses=tuple(replace(b, zone=zone_of.get(b.id, b.zone)) for b in case.buses))


def set_reserve_caps(case: GridCase, frac: float) -> GridCase:
    gens = tuple(replace(g, reserve_up_max=frac * g.p_max, reserve_down_max=frac * g.p_max) for g in case.generators)
    return replace(case, generators=gens)


BUNDLED = {
    "ieee118": ("pglib_opf_case118_ieee.m", "ieee118.json"),
    "ieee300": ("pglib_opf_case300_ieee.m", "ieee300.json"),
    "polish2383": ("pglib_opf_case2383wp_k.m", "polish2383.json"),
}


def bundled_case(name: str) -> tuple[Path, Path]:
    """Paths of a shipped MATPOWER case and its sidecar: ``ieee118``, ``ieee300`` or ``polish2383``."""
    if name not in BUNDLED:
        raise KeyError(f"unknown bundled case {name!r}; choose from {sorted(BUNDLED)}")
    data = Path(__file__).resolve().parent / "data"
    m, side = BUNDLED[name]
    return data / m, data / side


def load_case(case_path: str | Path, sidecar_path: str | Path | None = None) -> GridCase:
    """Read a MATPOWER file and apply an optional JSON sidecar (zones included)."""
    case = load_matpower(case_path)
    if sidecar_path is None:
        return case
    doc = json.loads(Path(sidecar_path).read_text())
    zones = doc.get("uncertainty", {}).get("zones")
    if zones:
        mode = doc.get("bus_index_mode", "id")
        case = assign_zones(case, {int(z): [_resolve_bus(case, int(b), mode) for b in members]
                                   for z, members in zones.items()})
    return attach_devices_and_uncertainty(case, doc)


# --------------------------------------------------------------------------
# Reserves


def default_reserve_requirement(case: GridCase, sigma_omega: float) -> ReserveRequirement:
    """Reserve dimensioning from the total-mismatch standard deviation ``sigma_omega`` (MW).

    Down reserves cover the ``1 - eps_gen`` quantile of the total mismatch; up
    reserves cover the larger of that and the biggest unit.
    """
    down = inv_norm_cdf(1.0 - case.chance.eps_gen) * sigma_omega
    largest = max((g.p_max for g in case.generators), default=0.0)
    return ReserveRequirement(up=max(largest, down), down=down)


def with_default_reserves(case: GridCase, sigma_omega: float, cap_frac: float = 0.2) -> GridCase:
    """Fill in the reserve requirement and per-generator caps where the case leaves them unset."""
    if case.reserve is None:
        case = replace(case, reserve=default_reserve_requirement(case, sigma_omega))
    if any(g.reserve_up_max is None or g.reserve_down_max is None for g in case.generators):
        gens = tuple(
            replace(
                g,
                reserve_up_max=cap_frac * g.p_max if g.reserve_up_max is None else g.reserve_up_max,
                reserve_down_max=cap_frac * g.p_max if g.reserve_down_max is None else g.reserve_down_max,
            )
            for g in case.generators
        )
        case = replace(case, generators=gens)
    return case


# --------------------------------------------------------------------------
# Validation


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # "error" | "warning"
    message: str


def find_bridges(nodes: Sequence[int], edges: Sequence[tuple[int, int, int]]) -> set[int]:
    """Return ids of bridge edges in an undirected multigraph.

    ``edges`` holds ``(edge_id, u, v)``. Parallel edges are never bridges.
    """
    adj: dict[int, list[tuple[int, int]]] = {n: [] for n in nodes}
    for eid, u, v in edges:
        adj[u].append((v, eid))
        adj[v].append((u, eid))
    disc: dict[int, int] = {}
    low: dict[int, int] = {}
    bridges: set[int] = set()
    counter = 0
    for root in nodes:
        if root in disc:
            continue
        disc[root] = low[root] = counter
        counter += 1
        stack = [(root, -1, iter(adj[root]))]
        while stack:
            node, parent_edge, it = stack[-1]
            advanced = False
            for nxt, eid in it:
                if eid == parent_edge:
                    continue
                if nxt in disc:
                    low[node] = min(low[node], disc[nxt])
                else:
                    disc[nxt] = low[nxt] = counter
                    counter += 1
                    stack.append((nxt, eid, iter(adj[nxt])))
                    advanced = True
                    break
            if not advanced:
                stack.pop()
                if stack:
                    parent = stack[-1][0]
                    low[parent] = min(low[parent], low[node])
                    if low[node] > disc[parent]:
                        bridges.add(parent_edge)
    return bridges


def connected_components(nodes: Sequence[int], edges: Sequence[tuple[int, int, int]]) -> list[set[int]]:
    adj: dict[int, set[int]] = {n: set() for n in nodes}
    for _, u, v in edges:
        adj[u].add(v)
        adj[v].add(u)
    seen: set[int] = set()
    comps = []
    for n in nodes:
        if n in seen:
            continue
        comp, todo = set(), [n]
        while todo:
            k = todo.pop()
            if k in comp:
                continue
            comp.add(k)
            todo.extend(adj[k] - comp)
        seen |= comp
        comps.append(comp)
    return comps


def validate_case(case: GridCase) -> list[Diagnostic]:
    """Check type invariants and AC connectivity; the case is usable when no entry has severity "error"."""
    diags: list[Diagnostic] = []
    err = lambda msg: diags.append(Diagnostic("error", msg))  # noqa: E731
    ids = [b.id for b in case.buses]
    if len(set(ids)) != len(ids):
        err("bus ids are not unique")
    idset = set(ids)
    for b in case.buses:
        if not math.isfinite(b.load):
            err(f"bus {b.id}: load is not finite")
    for ln in case.lines:
        if ln.x == 0 or not math.isfinite(ln.x):
            err(f"line {ln.id}: reactance {ln.x} must be finite and nonzero")
        elif ln.x < 0:
            diags.append(Diagnostic("warning", f"line {ln.id}: negative reactance {ln.x} (series compensation)"))
        if not ln.rating > 0:
            err(f"line {ln.id}: rating {ln.rating} must be positive")
        if ln.from_bus == ln.to_bus:
            err(f"line {ln.id}: from and to bus are identical")
        if ln.from_bus not in idset or ln.to_bus not in idset:
            err(f"line {ln.id}: endpoint bus missing")
    for g in case.generators:
        if g.bus not in idset:
            err(f"generator {g.id}: bus {g.bus} missing")
        if g.p_min > g.p_max:
            err(f"generator {g.id}: p_min exceeds p_max")
        if min(g.cost, g.c_up, g.c_down) < 0:
            err(f"generator {g.id}: negative cost")
        for cap in (g.reserve_up_max, g.reserve_down_max):
            if cap is not None and cap < 0:
                err(f"generator {g.id}: negative reserve cap")
    for h in case.hvdc:
        if h.from_bus not in idset or h.to_bus not in idset:
            err(f"HVDC {h.id}: endpoint bus missing")
        if h.p_min > h.p_max:
            err(f"HVDC {h.id}: p_min exceeds p_max")
        if h.delta_max < 0:
            err(f"HVDC {h.id}: negative post-contingency cap")
    lines = case.line_by_id
    seen_pst: set[int] = set()
    for p in case.psts:
        if p.line_id not in lines:
            err(f"PST {p.id}: line {p.line_id} missing")
        elif not lines[p.line_id].in_service:
            err(f"PST {p.id}: line {p.line_id} is out of service")
        if p.line_id in seen_pst:
            err(f"PST {p.id}: second PST on line {p.line_id}")
        seen_pst.add(p.line_id)
        if p.angle_min > p.angle_max:
            err(f"PST {p.id}: angle_min exceeds angle_max")
        if p.delta_max < 0:
            err(f"PST {p.id}: negative post-contingency cap")
    if case.slack not in idset:
        err(f"slack bus {case.slack} missing")
    if case.uncertainty is not None and len(case.uncertainty.sigma) != case.n_bus:
        err(f"uncertainty has {len(case.uncertainty.sigma)} entries for {case.n_bus} buses")
    if any(d.severity == "error" for d in diags):
        return diags
    edges = [(ln.id, ln.from_bus, ln.to_bus) for ln in case.active_lines]
    comps = connected_components(ids, edges)
    if len(comps) > 1:
        main = max(comps, key=len)
        for comp in comps:
            if comp is main:
                continue
            names = ", ".join(str(b) for b in sorted(comp))
            err(f"bus(es) {names} disconnected from the AC network")
    return diags
