"""Sequential SOCP constraint generation for the chance-constrained SCOPF.

The driver keeps the conic problem small by adding line/outage pairs only when
they are violated at the current iterate:

1. a deterministic SCOPF gives a first guess of the binding pairs;
2. the base case is solved with all linear pre-outage limits, adding
   pre-outage cones until none is violated;
3. the seeded post-outage pairs are added, then linear post-outage sweeps and
   screened cone sweeps alternate with resolves until nothing is violated;
4. the pre-outage cones are rechecked (restarting at step 2 if needed) and a
   final unscreened sweep certifies the result.
"""
from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .conic import OPTIMAL, INFEASIBLE, BackendError, BackendResult, solve_backend
from .formulation import BASE, MODES, Formulation, ModeConfig
from .grid import GridCase, with_default_reserves
from .sensitivity import Sensitivities, compute_sensitivities
from .uncertainty import UncertaintyModel, build_covariance


class InfeasibleError(RuntimeError):
    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class SolverError(RuntimeError):
    """Iteration cap, oscillation or restart-cap failures of the driver."""


@dataclass
class SolverConfig:
    tol: float = 1e-6  # p.u.
    max_add: int = 50
    lodf_threshold: float = 1e-3
    max_outer: int = 500
    max_passes: int = 3
    warm_start: bool = True
    backend: str | None = None
    symmetric: bool = True
    log_path: str | None = None  # JSON-lines iteration log

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tolerance must be positive")
        if self.lodf_threshold < 0:
            raise ValueError("screening threshold must be nonnegative")
        if self.max_add < 1:
            raise ValueError("max_add must be at least 1")


@dataclass(frozen=True, order=True)
class Violation:
    magnitude: float  # p.u.
    ij: int  # bundle rows
    kl: int


@dataclass
class ActiveSetState:
    linear: set = field(default_factory=set)
    soc: set = field(default_factory=set)
    violated_lines: set = field(default_factory=set)  # bundle rows ever found violated
    log: list = field(default_factory=list)
    solves: int = 0
    soc_evaluations: int = 0
    certificate_rounds: int = 0
    passes: int = 0


# ----------------------------------------------------------------------------
# problem preparation


@dataclass(frozen=True, eq=False)
class Prepared:
    case: GridCase
    sens: Sensitivities
    model: UncertaintyModel


def prepare(case: GridCase, sens: Sensitivities | None = None, model: UncertaintyModel | None = None,
            cache_dir: str | None = None) -> Prepared:
    """Sensitivities, covariance and default reserves for a case."""
    if model is None:
        if case.uncertainty is None:
            model = UncertaintyModel.zero(case.n_bus)
        else:
            model = build_covariance(case.uncertainty, case)
    case = with_default_reserves(case, model.sigma_omega)
    if sens is None:
        sens = compute_sensitivities(case, cache_dir)
    return Prepared(case, sens, model)


# ----------------------------------------------------------------------------
# sweeps


def screen_pairs(lodf: np.ndarray, contingencies: np.ndarray, threshold: float,
                 hint_lines=(), rated: np.ndarray | None = None) -> list[tuple[int, int]]:
    """Post-outage pairs ``(ij, kl)`` worth checking, in (kl, ij) order.

    A pair qualifies when ``|LF[ij, kl]| >= threshold`` or when ``ij`` is among
    ``hint_lines``. The outaged line itself is never paired with its own outage.
    """
    l = lodf.shape[0]
    mask = np.abs(lodf[:, contingencies]) >= threshold
    hints = np.zeros(l, dtype=bool)
    hints[list(hint_lines)] = True
    mask |= hints[:, None]
    mask[contingencies, np.arange(len(contingencies))] = False
    if rated is not None:
        mask &= rated[:, None]
    ij, c = np.nonzero(mask.T)[::-1]
    order = np.lexsort((ij, contingencies[c]))
    return [(int(ij[k]), int(contingencies[c[k]])) for k in order]


def _ranked(mag: np.ndarray, ij: np.ndarray, kl: np.ndarray, line_ids: np.ndarray, tol: float) -> list[Violation]:
    keep = mag > tol
    mag, ij, kl = mag[keep], ij[keep], kl[keep]
    kl_id = np.where(kl == BASE, 0, line_ids[np.maximum(kl, 0)])
    order = np.lexsort((line_ids[ij], kl_id, -mag))
    return [Violation(float(mag[k]), int(ij[k]), int(kl[k])) for k in order]


def violation_sweep(form: Formulation, x: np.ndarray, kind: str, tol: float = 0.0,
                    exclude: set | None = None, candidates: list[tuple[int, int]] | None = None) -> list[Violation]:
    """Rank violated pairs at ``x`` by magnitude (p.u.), ties broken by (kl, ij) line ids.

    ``kind`` is ``base-linear``, ``post-linear``, ``base-soc`` or ``post-soc``.
    Linear sweeps compare nominal flows with the ratings and never evaluate
    norms; cone sweeps use ``|flow| + q * std - rating``.
    """
    exclude = exclude or set()
    rating = form.rating
    line_ids = form.sens.bundle.line_ids
    rated = np.isfinite(rating)
    soc = kind.endswith("soc")
    if kind.startswith("base"):
        f = form.base_flows(x)
        mag = np.abs(f) - rating
        if soc and form.has_line_soc:
            std, _ = form.std_matrix(x)
            mag = mag + form.q_line * std
        ij = np.flatnonzero(rated)
        mag = mag[ij]
        kl = np.full(ij.size, BASE)
    else:
        cont = form.contingencies
        if cont.size == 0:
            return []
        F = form.post_contingency_flows(x)
        if candidates is not None:
            if not candidates:
                return []
            ij = np.array([p[0] for p in candidates])
            kl = np.array([p[1] for p in candidates])
            cpos = np.array([form.cont_pos[k] for k in kl])
            mag = np.abs(F[ij, cpos]) - rating[ij]
            if soc and form.has_line_soc:
                SA = form.scaled_response(x)
                v = SA[ij] + form.LF[ij, kl][:, None] * SA[kl]
                mag = mag + form.q_line * np.linalg.norm(v, axis=1)
        else:
            mag = np.abs(F) - rating[:, None]
            if soc and form.has_line_soc:
                _, std = form.std_matrix(x)
                mag = mag + form.q_line * std
            mag[cont, np.arange(cont.size)] = -np.inf
            mag[~rated] = -np.inf
            ij, cpos = np.nonzero(mag > tol)
            mag = mag[ij, cpos]
            kl = cont[cpos]
    if exclude:
        keep = np.array([(int(a), int(b)) not in exclude for a, b in zip(ij, kl)], dtype=bool)
        mag, ij, kl = mag[keep], ij[keep], kl[keep]
    return _ranked(np.asarray(mag, dtype=float), np.asarray(ij), np.asarray(kl), line_ids, tol)


# ----------------------------------------------------------------------------
# solution container


@dataclass
class CcScopfSolution:
    """Optimal dispatch and policies in MW, degrees and MW/MW (deg/MW for PST responses)."""

    case_name: str
    mode: str
    cost: float  # $/h
    cost_breakdown: dict
    gen_ids: list
    p_G: np.ndarray
    r_up: np.ndarray
    r_down: np.ndarray
    alpha_G: np.ndarray
    p_dc: np.ndarray
    gamma: np.ndarray
    alpha_dc: np.ndarray  # h x m over all buses
    alpha_gamma: np.ndarray  # s x m
    contingency_ids: list  # outaged line ids, rows of the delta tables
    delta_dc: np.ndarray  # nc x h
    delta_gamma: np.ndarray  # nc x s
    line_ids: list
    flows: np.ndarray  # base-case flows, MW
    soc_pairs: list  # (line id, outage id or 0)
    linear_pairs: list
    pair_duals: dict = field(default_factory=dict)  # (line id, outage id) -> $/h per MW
    stats: dict = field(default_factory=dict)
    log: list = field(default_factory=list)
    status: str = "optimal"
    source: dict = field(default_factory=dict)  # case/sidecar paths and hash

    def to_json(self) -> str:
        def conv(v):
            if isinstance(v, np.ndarray):
                return v.tolist()
            return v

        doc = {k: conv(v) for k, v in self.__dict__.items()}
        doc["pair_duals"] = [[a, b, d] for (a, b), d in self.pair_duals.items()]
        doc["shapes"] = {k: list(v.shape) for k, v in self.__dict__.items() if isinstance(v, np.ndarray)}
        return json.dumps(doc, indent=1, sort_keys=True, default=_json_default)

    @classmethod
    def from_json(cls, text: str) -> "CcScopfSolution":
        doc = json.loads(text)
        shapes = doc.pop("shapes", {})
        for k in ("p_G", "r_up", "r_down", "alpha_G", "p_dc", "gamma", "flows", "alpha_dc", "alpha_gamma",
                  "delta_dc", "delta_gamma"):
            a = np.asarray(doc[k], dtype=float)
            doc[k] = a.reshape(shapes[k]) if k in shapes else a
        doc["soc_pairs"] = [tuple(p) for p in doc["soc_pairs"]]
        doc["linear_pairs"] = [tuple(p) for p in doc["linear_pairs"]]
        doc["pair_duals"] = {(int(a), int(b)): float(d) for a, b, d in doc["pair_duals"]}
        return cls(**doc)


def _json_default(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (set, tuple)):
        return list(v)
    raise TypeError(type(v))


def extract_solution(form: Formulation, x: np.ndarray, result: BackendResult, state: ActiveSetState) -> CcScopfSolution:
    case, L, base = form.case, form.layout, form.base
    ids = form.sens.bundle.line_ids
    pg = x[L["p_G"]] * base
    rup = x[L["r_up"]] * base
    rdn = x[L["r_down"]] * base
    ag = x[L["alpha_G"]].copy()
    if not form.has_line_soc and form.nu == 0:
        # no fluctuations were modeled; share them by scheduled up-reserve for replay
        total = rup.sum()
        ag = rup / total if total > 0 else np.full(form.ng, 1.0 / max(form.ng, 1))
    ag = np.clip(ag, 0.0, None)
    adev = form.alpha_dev(x)
    full = np.zeros((form.nd, form.m))
    full[:, form.U] = adev
    alpha_dc = full[: form.h]
    alpha_gamma = np.degrees(full[form.h :]) / base
    dl = form.deltas(x)
    c_energy = sum(g.cost * p for g, p in zip(case.generators, pg))
    c_up = sum(g.c_up * r for g, r in zip(case.generators, rup))
    c_dn = sum(g.c_down * r for g, r in zip(case.generators, rdn))
    duals = {}
    if result.y_ub is not None:
        for (ij, kl), entry in form.pairs.items():
            rows = form.pair_row_positions(entry)
            d = sum(result.y_ub[r] for r in rows if r >= 0)
            if d > 0:
                duals[(int(ids[ij]), 0 if kl == BASE else int(ids[kl]))] = float(d) / base * base
    pair_id = lambda ij, kl: (int(ids[ij]), 0 if kl == BASE else int(ids[kl]))  # noqa: E731
    return CcScopfSolution(
        case_name=case.name,
        mode=form.mode.name,
        cost=float(c_energy + c_up + c_dn),
        cost_breakdown={"energy": float(c_energy), "reserve_up": float(c_up), "reserve_down": float(c_dn),
                        "total": float(c_energy + c_up + c_dn)},
        gen_ids=[g.id for g in case.generators],
        p_G=pg,
        r_up=rup,
        r_down=rdn,
        alpha_G=ag,
        p_dc=x[L["p_dc"]] * base,
        gamma=np.degrees(x[L["gamma"]]),
        alpha_dc=alpha_dc,
        alpha_gamma=alpha_gamma,
        contingency_ids=[int(ids[k]) for k in form.contingencies],
        delta_dc=dl[:, : form.h] * base,
        delta_gamma=np.degrees(dl[:, form.h :]),
        line_ids=[int(i) for i in ids],
        flows=form.base_flows(x) * base,
        soc_pairs=sorted(pair_id(ij, kl) for (ij, kl), e in form.pairs.items() if e.soc),
        linear_pairs=sorted(pair_id(ij, kl) for (ij, kl) in form.pairs),
        pair_duals=duals,
        stats={
            "solves": state.solves,
            "soc_evaluations": state.soc_evaluations,
            "certificate_rounds": state.certificate_rounds,
            "passes": state.passes,
            "n_soc_pairs": sum(e.soc for e in form.pairs.values()),
            "n_linear_pairs": len(form.pairs),
            "n_variables": form.layout.size,
            "backend": result.stats.get("backend"),
            "inaccurate": bool(result.stats.get("inaccurate", False)),
        },
        log=list(state.log),
    )


# ----------------------------------------------------------------------------
# driver


class _Driver:
    def __init__(self, form: Formulation, config: SolverConfig, state: ActiveSetState | None = None):
        self.form = form
        self.config = config
        self.state = state or ActiveSetState()
        self.x = None
        self.result = None
        self._log_fh = open(config.log_path, "a") if config.log_path else None

    def close(self):
        if self._log_fh:
            self._log_fh.close()

    def log(self, **event):
        event.setdefault("mode", self.form.mode.name)
        self.state.log.append(event)
        if self._log_fh:
            self._log_fh.write(json.dumps(event, sort_keys=True, default=_json_default) + "\n")
            self._log_fh.flush()

    def solve(self, step: str):
        st = self.state
        if st.solves >= self.config.max_outer:
            raise SolverError(f"iteration cap of {self.config.max_outer} solves reached during step {step}")
        problem = self.form.assemble()
        res = solve_backend(problem, self.x if self.config.warm_start else None, self.config.backend)
        st.solves += 1
        if res.status == INFEASIBLE:
            raise InfeasibleError(f"problem infeasible at step {step}", diagnose(self.form, self.config))
        if res.status != OPTIMAL:
            raise BackendError(res)
        prev = None if self.result is None else self.form.cost(self.x)
        self.x, self.result = res.x, res
        cost = self.form.cost(res.x)
        self.log(event="solve", step=step, objective=cost, seconds=res.stats.get("seconds"),
                 n_pairs=len(self.form.pairs), n_soc=len(st.soc), backend=res.stats.get("backend"),
                 decreased=bool(prev is not None and cost < prev - 1e-6 * max(1.0, abs(prev))))

    def add(self, violations: list[Violation], soc: bool, step: str) -> int:
        picked = violations[: self.config.max_add]
        for v in picked:
            key = (v.ij, v.kl)
            if soc and key in self.state.soc:
                raise SolverError(f"pair {key} selected again after its cone was added (oscillation)")
            self.form.add_pair(v.ij, v.kl, soc=soc)
            self.state.linear.add(key)
            if soc and self.form.has_line_soc:
                self.state.soc.add(key)
            self.state.violated_lines.add(v.ij)
        self.log(event="add", step=step, count=len(picked), found=len(violations),
                 max_violation=violations[0].magnitude if violations else 0.0,
                 pairs=[[int(v.ij), int(v.kl)] for v in picked])
        return len(picked)

    def sweep(self, kind: str, step: str, candidates=None, exclude=None) -> list[Violation]:
        t0 = time.perf_counter()
        out = violation_sweep(self.form, self.x, kind, self.config.tol, exclude=exclude, candidates=candidates)
        self.log(event="sweep", step=step, kind=kind, found=len(out), seconds=time.perf_counter() - t0,
                 candidates=None if candidates is None else len(candidates))
        return out


def _rated_rows(form: Formulation) -> np.ndarray:
    return np.flatnonzero(np.isfinite(form.rating))


def solve_deterministic_scopf(prep: Prepared, mode: ModeConfig | str = "c", config: SolverConfig | None = None):
    """LP without fluctuations; returns ``(formulation, x, result, state, active_pairs)``.

    ``active_pairs`` are the line/outage pairs whose flow sits at its rating.
    """
    config = config or SolverConfig()
    mode = MODES[mode] if isinstance(mode, str) else mode
    mode = replace(mode, uncertain=False, uncertainty_control=False)
    form = Formulation(prep.case, prep.sens, prep.model, mode, symmetric=config.symmetric)
    drv = _Driver(form, config)
    try:
        for ij in _rated_rows(form):
            form.add_pair(int(ij), BASE, soc=False)
            drv.state.linear.add((int(ij), BASE))
        drv.solve("preprocess")
        while mode.security:
            found = drv.sweep("post-linear", "preprocess", exclude=drv.state.linear)
            if not found:
                break
            drv.add(found, soc=False, step="preprocess")
            drv.solve("preprocess")
    finally:
        drv.close()
    active = _binding_pairs(form, drv.x, config.tol)
    return form, drv.x, drv.result, drv.state, active


def _binding_pairs(form: Formulation, x: np.ndarray, tol: float) -> list[tuple[int, int]]:
    out = []
    f = form.base_flows(x)
    for ij in _rated_rows(form):
        if abs(f[ij]) >= form.rating[ij] - max(tol, 1e-7):
            out.append((int(ij), BASE))
    if form.contingencies.size:
        F = form.post_contingency_flows(x)
        for (ij, kl) in form.pairs:
            if kl != BASE and abs(F[ij, form.cont_pos[kl]]) >= form.rating[ij] - max(tol, 1e-7):
                out.append((ij, kl))
    return out


def solve_base_ccopf(drv: _Driver, seeds: list[tuple[int, int]], first: bool = True):
    """Steps 1(a)/(b): all pre-outage linear limits, seeded cones, then cone generation on the base case."""
    form = drv.form
    if first:
        seeded = {p for p in seeds if p[1] == BASE}
        for ij in _rated_rows(form):
            key = (int(ij), BASE)
            form.add_pair(*key, soc=key in seeded)
            drv.state.linear.add(key)
            if key in seeded and form.has_line_soc:
                drv.state.soc.add(key)
        drv.solve("1a")
    while True:
        found = drv.sweep("base-soc", "1b", exclude=drv.state.soc)
        if not found:
            return
        drv.add(found, soc=True, step="1b")
        drv.solve("1b")


def solve_full_ccscopf(prep: Prepared, mode: ModeConfig | str = "e", config: SolverConfig | None = None,
                       preprocessed=None) -> CcScopfSolution:
    """Run the whole constraint-generation algorithm for one mode.

    Modes without fluctuations reduce to the deterministic (SC)OPF. Raises
    :class:`InfeasibleError`, :class:`SolverError` or :class:`BackendError`.
    """
    config = config or SolverConfig()
    mode = MODES[mode] if isinstance(mode, str) else mode
    if not mode.uncertain or prep.model.uncertain.size == 0:
        form, x, res, state, _ = solve_deterministic_scopf(prep, mode, config)
        sol = extract_solution(form, x, res, state)
        sol.mode = mode.name
        return sol
    if preprocessed is None:
        preprocessed = solve_deterministic_scopf(prep, mode, config)
    seeds = preprocessed[4]
    form = Formulation(prep.case, prep.sens, prep.model, mode, symmetric=config.symmetric)
    drv = _Driver(form, config)
    st = drv.state
    t_start = time.perf_counter()
    try:
        drv.log(event="start", seeds=len(seeds), tol=config.tol, max_add=config.max_add,
                lodf_threshold=config.lodf_threshold)
        if not form.has_line_soc:
            # zero quantile: no cones, only the linear constraint generation remains
            pass
        solve_base_ccopf(drv, seeds, first=True)
        rated = np.isfinite(form.rating)
        for pass_no in range(config.max_passes):
            st.passes = pass_no + 1
            if not mode.security or form.contingencies.size == 0:
                break
            if pass_no == 0:
                post = [p for p in seeds if p[1] != BASE]
                for key in post:
                    form.add_pair(*key, soc=True)
                    st.linear.add(key)
                    if form.has_line_soc:
                        st.soc.add(key)
                if post:
                    drv.solve("2c")
            while True:
                # (d) linear security sweep over pairs not yet included
                while True:
                    found = drv.sweep("post-linear", "2d", exclude=st.linear)
                    if not found:
                        break
                    drv.add(found, soc=True, step="2d")
                    drv.solve("2d")
                if not form.has_line_soc:
                    break
                # (e) screened cone sweep
                cand = screen_pairs(form.LF, form.contingencies, config.lodf_threshold, st.violated_lines, rated)
                cand = [p for p in cand if p not in st.soc]
                st.soc_evaluations += 1
                found = drv.sweep("post-soc", "2e", candidates=cand)
                if found:
                    drv.add(found, soc=True, step="2e")
                    drv.solve("2e")
                    continue
                # certificate: unscreened sweep of every pair
                cert = drv.sweep("post-soc", "certificate", exclude=st.soc)
                if not cert:
                    break
                st.certificate_rounds += 1
                drv.add(cert, soc=True, step="certificate")
                drv.solve("certificate")
            base_left = drv.sweep("base-soc", "recheck", exclude=st.soc)
            if not base_left:
                break
            if pass_no + 1 == config.max_passes:
                raise SolverError(
                    f"pre-outage cones still violated after {config.max_passes} passes "
                    f"(max {base_left[0].magnitude:.3e} p.u.)")
            drv.add(base_left, soc=True, step="1b")
            drv.solve("1b")
            solve_base_ccopf(drv, seeds, first=False)
        else:
            pass
        cert_all = violation_sweep(form, drv.x, "post-soc", 0.0) if form.contingencies.size else []
        base_all = violation_sweep(form, drv.x, "base-soc", 0.0)
        worst = max([v.magnitude for v in cert_all + base_all], default=0.0)
        drv.log(event="done", objective=form.cost(drv.x), seconds=time.perf_counter() - t_start,
                certificate_max_violation=worst, soc_evaluations=st.soc_evaluations)
    finally:
        drv.close()
    sol = extract_solution(form, drv.x, drv.result, st)
    sol.stats["certificate_max_violation_mw"] = worst * form.base
    sol.stats["seconds"] = time.perf_counter() - t_start
    sol.stats["preprocess_cost"] = preprocessed[0].cost(preprocessed[1])
    sol.stats["formulation"] = form
    return sol


def solve_monolithic(prep: Prepared, mode: ModeConfig | str = "e", symmetric: bool = True,
                     backend: str | None = None) -> tuple[Formulation, BackendResult]:
    """All line/outage pairs with cones in one problem; the reference for small instances."""
    mode = MODES[mode] if isinstance(mode, str) else mode
    form = Formulation(prep.case, prep.sens, prep.model, mode, symmetric=symmetric)
    for ij in _rated_rows(form):
        form.add_pair(int(ij), BASE, soc=True)
        for kl in form.contingencies:
            if kl != ij:
                form.add_pair(int(ij), int(kl), soc=True)
    res = solve_backend(form.assemble(), backend=backend)
    if res.status == INFEASIBLE:
        raise InfeasibleError("monolithic problem infeasible")
    if res.status != OPTIMAL:
        raise BackendError(res)
    return form, res


def insecure_outages(prep: Prepared, mode: ModeConfig | str = "b", backend: str | None = None) -> list[int]:
    """Line ids whose outage alone makes the deterministic SCOPF of ``mode`` infeasible.

    Each contingency is tested in its own LP together with the base case, so
    the result lists outages that no dispatch can secure, independently of the
    others.
    """
    mode = MODES[mode] if isinstance(mode, str) else mode
    mode = replace(mode, uncertain=False, uncertainty_control=False, security=True)
    ids = prep.sens.bundle.line_ids
    out = []
    for kl in prep.sens.contingencies:
        form = Formulation(prep.case, prep.sens, prep.model, mode)
        for ij in _rated_rows(form):
            form.add_pair(int(ij), BASE, soc=False)
            if ij != kl:
                form.add_pair(int(ij), int(kl), soc=False)
        res = solve_backend(form.assemble(), backend=backend)
        if res.status != OPTIMAL:
            out.append(int(ids[kl]))
    return out


def diagnose(form: Formulation, config: SolverConfig) -> dict:
    """Locate the infeasibility: solve without line limits and report the worst excess per family."""
    from .formulation import Formulation as _F

    relaxed = _F(form.case, form.sens, form.model, form.mode, symmetric=form.symmetric)
    res = solve_backend(relaxed.assemble(), backend=config.backend)
    out = {"without_line_limits": res.status}
    if res.status != OPTIMAL:
        out["hint"] = "generation, reserve or device constraints are infeasible on their own"
        return out
    x = res.x
    base = violation_sweep(relaxed, x, "base-linear", 0.0)
    out["max_base_line_excess_mw"] = base[0].magnitude * form.base if base else 0.0
    if relaxed.contingencies.size:
        post = violation_sweep(relaxed, x, "post-linear", 0.0)
        out["max_post_line_excess_mw"] = post[0].magnitude * form.base if post else 0.0
    out["hint"] = "line limits cannot be met together with the generation and device constraints"
    return out


def save_solution(sol: CcScopfSolution, path: str | Path):
    stats = dict(sol.stats)
    stats.pop("formulation", None)
    Path(path).write_text(replace(sol, stats=stats).to_json())


def load_solution(path: str | Path) -> CcScopfSolution:
    return CcScopfSolution.from_json(Path(path).read_text())
