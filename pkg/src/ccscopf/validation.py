"""Monte Carlo replay of dispatch solutions, cost decomposition and parameter sweeps."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .conic import BackendError
from .formulation import MODES, clamp_setpoints
from .grid import ChanceParams, GridCase
from .solver import (CcScopfSolution, InfeasibleError, Prepared, SolverConfig, SolverError, prepare,
                     solve_deterministic_scopf, solve_full_ccscopf)
from .uncertainty import SampleSet

DEAD_BAND = 1e-6  # p.u.


@dataclass(eq=False)
class ViolationReport:
    """Empirical violation statistics of one solution over one sample set.

    ``line_counts[ij, c]`` counts samples whose flow on line row ``ij`` exceeds
    its rating in state ``c`` (column 0 is the pre-outage state, column
    ``k + 1`` the ``k``-th contingency). Joint statistics count each sample once.
    """

    mode: str
    n_samples: int
    saturation: bool
    line_ids: np.ndarray
    contingency_ids: np.ndarray
    line_counts: np.ndarray
    joint_line: int  # samples with any line violation in any state
    joint_any: int  # ... or any device-bound hit or reserve shortfall
    device_events: int  # samples where some device request left its bounds in some state
    reserve_events: int  # samples where some generator exceeded its reserve
    flow_mean: np.ndarray  # base-state flows, MW
    flow_std: np.ndarray
    analytic_std: np.ndarray
    provenance: str = "synthetic"

    @property
    def joint_fraction(self) -> float:
        return self.joint_line / self.n_samples if self.n_samples else 0.0

    def eps_emp(self) -> np.ndarray:
        return self.line_counts / max(self.n_samples, 1)

    def summary(self) -> dict:
        n = max(self.n_samples, 1)
        eps = self.eps_emp()
        return {
            "mode": self.mode,
            "n_samples": self.n_samples,
            "saturation": self.saturation,
            "provenance": self.provenance,
            "joint_line_violations": self.joint_line,
            "joint_line_fraction": self.joint_line / n,
            "joint_any_violations": self.joint_any,
            "device_bound_events": self.device_events,
            "reserve_events": self.reserve_events,
            "max_eps_emp": float(eps.max()) if eps.size else 0.0,
        }


@dataclass
class CostBreakdown:
    costs: dict  # mode -> $/h or None when infeasible
    status: dict = field(default_factory=dict)

    def get(self, mode):
        return self.costs.get(mode)

    @property
    def cost_of_security(self) -> float | None:
        a, b = self.costs.get("a"), self.costs.get("b")
        return None if a is None or b is None else b - a

    @property
    def cost_of_security_corrective(self) -> float | None:
        a, c = self.costs.get("a"), self.costs.get("c")
        return None if a is None or c is None else c - a

    @property
    def cost_of_uncertainty(self) -> float | None:
        c, d = self.costs.get("c"), self.costs.get("d")
        return None if c is None or d is None else d - c

    @property
    def cost_of_uncertainty_corrective(self) -> float | None:
        c, e = self.costs.get("c"), self.costs.get("e")
        return None if c is None or e is None else e - c

    def reduction_pct(self, without: str, with_: str) -> float | None:
        x, y = self.costs.get(without), self.costs.get(with_)
        return None if x is None or y is None else 100.0 * (x - y) / x

    def normalized(self) -> dict:
        a = self.costs.get("a")
        return {m: (None if c is None or not a else c / a) for m, c in self.costs.items()}


# ----------------------------------------------------------------------------
# replay


class _Replay:
    """Solution data converted to per unit / radians on the bus ordering of ``prep``."""

    def __init__(self, sol: CcScopfSolution, prep: Prepared):
        case, sens = prep.case, prep.sens
        if list(sens.bundle.line_ids) != list(sol.line_ids):
            raise ValueError("solution and case have different line sets")
        if len(sol.gen_ids) != len(case.generators):
            raise ValueError("solution and case have different generators")
        base = case.base_mva
        b = sens.bundle
        idx = case.bus_index
        self.base = base
        self.M = sens.ptdf
        self.LF = sens.lodf
        self.D = np.hstack([self.M @ b.C_dc, b.b_gamma - self.M @ b.B_gamma])
        h, s = len(case.hvdc), len(case.psts)
        self.h, self.s = h, s
        gen_bus = np.array([idx[g.bus] for g in case.generators], dtype=int)
        Cg = np.zeros((case.n_bus, len(case.generators)))
        Cg[gen_bus, np.arange(len(gen_bus))] = 1.0
        pg = sol.p_G / base
        self.sched = np.concatenate([sol.p_dc / base, np.radians(sol.gamma)])
        inj = Cg @ pg + b.C_dc @ self.sched[:h] - (case.loads - prep.model.mu) / base
        self.f0 = self.M @ inj + (b.b_gamma - self.M @ b.B_gamma) @ self.sched[h:]
        self.alpha_G = np.asarray(sol.alpha_G, dtype=float)
        self.gen_resp = self.M @ (Cg @ self.alpha_G)  # flow change per p.u. of total mismatch
        m = case.n_bus
        a_dc = np.asarray(sol.alpha_dc, float)
        a_g = np.asarray(sol.alpha_gamma, float)
        self.alpha_dev = np.vstack([a_dc.reshape(h, m) if a_dc.size else np.zeros((h, m)),
                                    np.radians(a_g.reshape(s, m)) * base if a_g.size else np.zeros((s, m))])
        self.lo = np.concatenate([[d.p_min / base for d in case.hvdc], [math.radians(p.angle_min) for p in case.psts]])
        self.hi = np.concatenate([[d.p_max / base for d in case.hvdc], [math.radians(p.angle_max) for p in case.psts]])
        self.cont = sens.contingencies
        self.cont_ids = b.line_ids[self.cont]
        delta_rows = {int(k): r for r, k in enumerate(sol.contingency_ids)}
        self.delta = np.zeros((self.cont.size, h + s))
        for c, lid in enumerate(self.cont_ids):
            r = delta_rows.get(int(lid))
            if r is not None and sol.delta_dc.size + sol.delta_gamma.size:
                self.delta[c] = np.concatenate([sol.delta_dc[r] / base, np.radians(sol.delta_gamma[r])])
        self.rating = np.array([case.line_by_id[int(i)].rating for i in b.line_ids]) / base
        self.r_up = sol.r_up / base
        self.r_down = sol.r_down / base
        self.model = prep.model
        self.l = b.n_lines

    def response(self) -> np.ndarray:
        """Unsaturated flow response A over all buses (l x m)."""
        return self.M - self.gen_resp[:, None] - self.D @ self.alpha_dev

    def analytic_std(self, ij: int, kl: int | None) -> float:
        """Flow standard deviation in MW for bundle rows (``kl`` None for the base state)."""
        u = self.model.uncertain
        if u.size == 0:
            return 0.0
        A = self.response()[:, u]
        v = A[ij] if kl is None else A[ij] + self.LF[ij, kl] * A[kl]
        return float(np.linalg.norm(self.model.reduced_factor @ v))

    def all_base_std(self) -> np.ndarray:
        u = self.model.uncertain
        if u.size == 0:
            return np.zeros(self.l)
        return np.linalg.norm(self.response()[:, u] @ self.model.reduced_factor, axis=1)


def analytic_flow_std(sol: CcScopfSolution, prep: Prepared, ij: int, kl: int = 0) -> float:
    """Standard deviation (MW) of line ``ij``'s flow after outage ``kl`` (line ids, 0 = none)."""
    rep = _Replay(sol, prep)
    row = prep.sens.bundle.line_row()
    return rep.analytic_std(row[ij], None if kl == 0 else row[kl])


def pair_statistics(sol: CcScopfSolution, prep: Prepared, pairs=None) -> list[dict]:
    """Expected flow, analytic std and remaining slack (MW) of line chance constraints.

    ``pairs`` are (line id, outage id) tuples and default to the solution's cone
    pairs. ``slack = rating - |mean| - q * std`` with ``q`` the line quantile, so a
    value near zero marks a tight chance constraint.
    """
    from .uncertainty import inv_norm_cdf

    rep = _Replay(sol, prep)
    row = prep.sens.bundle.line_row()
    q = inv_norm_cdf(1.0 - prep.case.chance.eps_line)
    cpos = {int(k): c for c, k in enumerate(rep.cont)}
    out = []
    for lid, kl in (sol.soc_pairs if pairs is None else pairs):
        i = row[int(lid)]
        if kl:
            k = row[int(kl)]
            dl = rep.delta[cpos[k]]
            f = rep.f0 + rep.D @ dl
            mean = f[i] + rep.LF[i, k] * f[k]
            std = rep.analytic_std(i, k)
        else:
            mean = rep.f0[i]
            std = rep.analytic_std(i, None)
        rating = rep.rating[i] * rep.base
        mean *= rep.base
        out.append({"line": int(lid), "outage": int(kl), "mean": float(mean), "std": std, "rating": float(rating),
                    "slack": float(rating - abs(mean) - q * std)})
    return out


def simulate(sol: CcScopfSolution, prep: Prepared, samples: SampleSet, use_saturation: bool = True,
             contingencies: bool = True, chunk: int = 500) -> ViolationReport:
    """Replay ``samples`` through the solution in the base state and every contingency state.

    Flows use the realized generator response ``-alpha_G * Omega`` and the realized
    device set-points, clamped at their bounds when ``use_saturation`` is set.
    """
    rep = _Replay(sol, prep)
    omega = np.asarray(samples.omega, dtype=float)
    m = prep.case.n_bus
    if omega.ndim != 2 or omega.shape[1] != m:
        raise ValueError(f"samples have shape {omega.shape}, expected (n, {m})")
    n = omega.shape[0]
    cont = rep.cont if contingencies else rep.cont[:0]
    nstate = 1 + cont.size
    counts = np.zeros((rep.l, nstate), dtype=np.int64)
    any_line = np.zeros(n, dtype=bool)
    dev_hit = np.zeros(n, dtype=bool)
    res_hit = np.zeros(n, dtype=bool)
    s1 = np.zeros(rep.l)
    s2 = np.zeros(rep.l)
    rating = rep.rating[:, None]
    finite = np.isfinite(rep.rating)
    for lo in range(0, n, chunk):
        w = (omega[lo : lo + chunk] - rep.model.mu[None, :]) / rep.base
        k = w.shape[0]
        Om = w.sum(axis=1)
        # generators: p - alpha_G * Omega must stay within scheduled reserves
        move = -np.outer(Om, rep.alpha_G)
        res_hit[lo : lo + k] |= np.any(move > rep.r_up + DEAD_BAND, axis=1) | np.any(-move > rep.r_down + DEAD_BAND, axis=1)
        fw = w @ rep.M.T - np.outer(Om, rep.gen_resp)  # k x l, network + balancing response
        dev_req = -w @ rep.alpha_dev.T  # k x nd, requested change before clamping
        for c in range(nstate):
            dl = np.zeros(rep.h + rep.s) if c == 0 else rep.delta[c - 1]
            sched = rep.sched + dl
            req = sched + dev_req
            hit = np.any((req < rep.lo - DEAD_BAND) | (req > rep.hi + DEAD_BAND), axis=1)
            dev_hit[lo : lo + k] |= hit
            real = clamp_setpoints(req, rep.lo, rep.hi) if use_saturation else req
            F = rep.f0 + rep.D @ dl + fw + (real - sched) @ rep.D.T
            if c == 0:
                s1 += F.sum(axis=0)
                s2 += (F**2).sum(axis=0)
            else:
                kl = cont[c - 1]
                F = F + rep.LF[:, kl][None, :] * F[:, [kl]]
                F[:, kl] = 0.0
            viol = (np.abs(F) > rep.rating + DEAD_BAND) & finite
            counts[:, c] += viol.sum(axis=0)
            any_line[lo : lo + k] |= viol.any(axis=1)
    mean = s1 / max(n, 1)
    var = s2 / max(n - 1, 1) - mean**2 * n / max(n - 1, 1)
    return ViolationReport(
        mode=sol.mode,
        n_samples=n,
        saturation=use_saturation,
        line_ids=prep.sens.bundle.line_ids.copy(),
        contingency_ids=prep.sens.bundle.line_ids[cont],
        line_counts=counts,
        joint_line=int(any_line.sum()),
        joint_any=int((any_line | dev_hit | res_hit).sum()),
        device_events=int(dev_hit.sum()),
        reserve_events=int(res_hit.sum()),
        flow_mean=mean * rep.base,
        flow_std=np.sqrt(np.maximum(var, 0.0)) * rep.base,
        analytic_std=rep.all_base_std(),
        provenance=samples.provenance,
    )


def pair_flow_samples(sol: CcScopfSolution, prep: Prepared, samples: SampleSet, ij: int, kl: int = 0,
                      use_saturation: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Realized flow (MW) on line ``ij`` after outage ``kl`` and the realized device set-points per sample.

    Device set-points are returned in MW for HVDC links and degrees for PSTs.
    """
    rep = _Replay(sol, prep)
    row = prep.sens.bundle.line_row()
    i = row[ij]
    w = (np.asarray(samples.omega, float) - rep.model.mu) / rep.base
    Om = w.sum(axis=1)
    dl = np.zeros(rep.h + rep.s)
    if kl:
        k = row[kl]
        dl = rep.delta[int(np.flatnonzero(rep.cont == k)[0])]
    sched = rep.sched + dl
    req = sched - w @ rep.alpha_dev.T
    real = clamp_setpoints(req, rep.lo, rep.hi) if use_saturation else req
    rows = [i] if not kl else [i, row[kl]]
    F = rep.f0[rows] + rep.D[rows] @ dl + w @ rep.M[rows].T - np.outer(Om, rep.gen_resp[rows]) + (real - sched) @ rep.D[rows].T
    flow = F[:, 0] + (rep.LF[i, row[kl]] * F[:, 1] if kl else 0.0)
    dev = np.concatenate([real[:, : rep.h] * rep.base, np.degrees(real[:, rep.h :])], axis=1)
    return flow * rep.base, dev


# ----------------------------------------------------------------------------
# mode comparison and sweeps


def _solve_or_none(prep, mode, config, preprocessed=None):
    try:
        return solve_full_ccscopf(prep, mode, config, preprocessed=preprocessed), "optimal"
    except InfeasibleError:
        return None, "infeasible"
    except (SolverError, BackendError) as exc:
        return None, f"failed: {exc}"


def compare_modes(prep: Prepared, samples: SampleSet | None = None, modes: str = "abcde",
                  config: SolverConfig | None = None, use_saturation: bool = True):
    """Solve the requested modes; returns ``(CostBreakdown, solutions, reports)``.

    ``reports[mode]`` holds ``(saturated, unsaturated)`` replays when samples are
    given. Infeasible modes are recorded and skipped.
    """
    config = config or SolverConfig()
    sols, status, reports = {}, {}, {}
    pre = {}
    for m in modes:
        mc = MODES[m]
        pre_key = (mc.security, mc.post_contingency_control)
        pp = None
        if mc.uncertain and prep.model.uncertain.size:
            if pre_key not in pre:
                try:
                    pre[pre_key] = solve_deterministic_scopf(prep, mc, config)
                except InfeasibleError:
                    pre[pre_key] = None
            pp = pre[pre_key]
            if pp is None:
                status[m] = "infeasible"
                continue
        sol, st = _solve_or_none(prep, m, config, pp)
        status[m] = st
        if sol is not None:
            sols[m] = sol
            if samples is not None:
                reports[m] = (simulate(sol, prep, samples, True), simulate(sol, prep, samples, False))
    costs = {m: (sols[m].cost if m in sols else None) for m in modes}
    return CostBreakdown(costs, status), sols, reports


def most_binding_pair(sol: CcScopfSolution) -> tuple[int, int] | None:
    """Post-outage (line id, outage id) pair with the largest multiplier in ``sol``."""
    post = {k: v for k, v in sol.pair_duals.items() if k[1] != 0}
    if not post:
        return None
    return max(sorted(post), key=lambda k: post[k])


def sensitivity_sweep(case: GridCase, eps_list=(0.1, 0.05, 0.02, 0.01, 0.001),
                      sigma_list=(5.0, 7.5, 10.0, 12.5), modes: str = "de", config: SolverConfig | None = None,
                      sigma_eps: float = 0.05, sigma_ref: float = 10.0) -> list[dict]:
    """Costs of ``modes`` while varying the line/device violation probability and the fluctuation level.

    ``case`` must carry its uncertainty spec at the reference level ``sigma_ref``
    (percent of load); the sigma rows scale it linearly and use
    ``eps_l = eps = sigma_eps``. Reserve requirements follow the scaled
    fluctuations.
    """
    config = config or SolverConfig()
    base = prepare(replace(case, reserve=None))
    rows = []

    def run(kind, value, c, model):
        prep = prepare(c, sens=base.sens, model=model)
        for m in modes:
            sol, st = _solve_or_none(prep, m, config)
            rows.append({"parameter": kind, "value": value, "mode": m,
                         "cost": None if sol is None else sol.cost, "status": st})

    for eps in eps_list:
        c = replace(case, reserve=None, chance=replace(case.chance, eps_line=eps, eps_device=eps))
        run("eps", eps, c, base.model)
    for sig in sigma_list:
        c = replace(case, reserve=None, chance=replace(case.chance, eps_line=sigma_eps, eps_device=sigma_eps))
        run("sigma", sig, c, base.model.scaled(sig / sigma_ref))
    return rows


def sigma_breakpoint(case: GridCase, start: float = 10.0, step: float = 2.5, stop: float = 30.0,
                     config: SolverConfig | None = None, sigma_ref: float = 10.0) -> dict:
    """Smallest sigma on the grid where mode (d) is infeasible, with the mode (e) result there."""
    config = config or SolverConfig()
    base = prepare(replace(case, reserve=None))
    sig = start
    while sig <= stop + 1e-9:
        prep = prepare(replace(case, reserve=None), sens=base.sens, model=base.model.scaled(sig / sigma_ref))
        d, st_d = _solve_or_none(prep, "d", config)
        if d is None:
            e, st_e = _solve_or_none(prep, "e", config)
            return {"sigma": sig, "d": st_d, "e": st_e, "e_cost": None if e is None else e.cost}
        sig += step
    return {"sigma": None}


# ----------------------------------------------------------------------------
# report files


def report_json(report: ViolationReport) -> str:
    return json.dumps(report.summary(), indent=1, sort_keys=True)


def eps_table_csv(report: ViolationReport, pairs: list[tuple[int, int]] | None = None,
                  analytic: dict | None = None) -> str:
    """Per-constraint empirical violation probabilities; ``pairs`` (line id, outage id) limit the rows."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["line", "outage", "eps_emp", "violations", "analytic_std_mw"])
    col = {0: 0, **{int(k): c + 1 for c, k in enumerate(report.contingency_ids)}}
    row = {int(i): r for r, i in enumerate(report.line_ids)}
    if pairs is None:
        ii, cc = np.nonzero(report.line_counts)
        inv_col = {v: k for k, v in col.items()}
        pairs = sorted((int(report.line_ids[i]), inv_col[c]) for i, c in zip(ii, cc))
    for lid, kl in pairs:
        if kl not in col:
            continue
        cnt = int(report.line_counts[row[lid], col[kl]])
        std = "" if analytic is None or (lid, kl) not in analytic else f"{analytic[(lid, kl)]:.6f}"
        w.writerow([lid, kl, f"{cnt / max(report.n_samples, 1):.6f}", cnt, std])
    return buf.getvalue()


def costs_csv(costs: CostBreakdown) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["mode", "cost", "normalized", "status"])
    norm = costs.normalized()
    for m, c in costs.costs.items():
        w.writerow([m, "" if c is None else f"{c:.4f}", "" if norm[m] is None else f"{norm[m]:.6f}",
                    costs.status.get(m, "")])
    return buf.getvalue()


def sweep_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["parameter", "value", "mode", "cost", "status"])
    for r in rows:
        w.writerow([r["parameter"], r["value"], r["mode"], "" if r["cost"] is None else f"{r['cost']:.4f}", r["status"]])
    return buf.getvalue()


def scatter_dat(flow: np.ndarray, setpoints: np.ndarray, header: str = "") -> str:
    """Whitespace-separated columns ``sample flow_mw setpoint...`` for plotting with gnuplot."""
    lines = [f"# {header}".rstrip(), "# sample flow_mw " + " ".join(f"device{k + 1}" for k in range(setpoints.shape[1]))]
    for k, (f, s) in enumerate(zip(flow, setpoints)):
        lines.append(f"{k} {f:.6f} " + " ".join(f"{v:.6f}" for v in s))
    return "\n".join(lines) + "\n"


def write_report_files(report: ViolationReport, out_dir: str | Path, stem: str, pairs=None, analytic=None):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{stem}.json").write_text(report_json(report))
    (out / f"{stem}_eps.csv").write_text(eps_table_csv(report, pairs, analytic))
