"""Assembly of the chance-constrained, security-constrained DC OPF with affine corrective control.

Internally everything is per unit on the case base with PST angles in radians.
Device set-points respond to the forecast error as ``p + delta - alpha @ omega``;
the line-flow response uses the same sign, so

    A = M (I - alpha_G 1') - D alpha_dev,    D = [M C_dc, b_gamma - M B_gamma]

where ``alpha_dev`` stacks the HVDC rows over the PST rows.

Each chance constraint on a line/outage pair ``(ij, kl)`` becomes, in the
default symmetric form, two linear rows sharing one margin ``s`` and a single
cone ``s >= q * ||S (A_ij + LF A_kl)'||``. The direct form keeps the upper and
lower constraint as two separate cones and exists for cross-checking.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .conic import ConicProblem, SocBlock
from .grid import GridCase
from .sensitivity import Sensitivities
from .uncertainty import UncertaintyModel, inv_norm_cdf

BASE = -1  # outage index of the pre-contingency state


@dataclass(frozen=True)
class ModeConfig:
    """Which parts of the problem are active.

    The five named configurations are available through :data:`MODES`.
    """

    name: str
    uncertain: bool = True  # use the forecast-error covariance
    security: bool = True  # N-1 line outages
    post_contingency_control: bool = True  # per-outage set-point changes
    uncertainty_control: bool = True  # affine HVDC/PST response to forecast errors


MODES = {
    "a": ModeConfig("a", uncertain=False, security=False, post_contingency_control=False, uncertainty_control=False),
    "b": ModeConfig("b", uncertain=False, security=True, post_contingency_control=False, uncertainty_control=False),
    "c": ModeConfig("c", uncertain=False, security=True, post_contingency_control=True, uncertainty_control=False),
    "d": ModeConfig("d", uncertain=True, security=True, post_contingency_control=True, uncertainty_control=False),
    "e": ModeConfig("e", uncertain=True, security=True, post_contingency_control=True, uncertainty_control=True),
    # full chance constraints and uncertainty control, but no per-outage set-point changes
    "s": ModeConfig("s", uncertain=True, security=True, post_contingency_control=False, uncertainty_control=True),
}


def quantile(eps: float) -> float:
    """``Phi^-1(1 - eps)``, exactly zero at ``eps = 0.5``."""
    return 0.0 if eps >= 0.5 else inv_norm_cdf(1.0 - eps)


class DecisionLayout:
    """Contiguous, disjoint index ranges for the decision variables."""

    def __init__(self):
        self.ranges: dict[str, slice] = {}
        self.size = 0

    def alloc(self, name: str, n: int) -> slice:
        if name in self.ranges:
            raise KeyError(f"{name} already allocated")
        sl = slice(self.size, self.size + n)
        self.ranges[name] = sl
        self.size += n
        return sl

    def __getitem__(self, name: str) -> slice:
        return self.ranges[name]

    def __contains__(self, name: str) -> bool:
        return name in self.ranges


@dataclass(eq=False)
class PairEntry:
    ij: int  # bundle row of the monitored line
    kl: int  # bundle row of the outaged line, BASE for pre-contingency
    soc: bool
    ub_rows: tuple[int, int] = (-1, -1)  # rows of the upper/lower linear constraints
    s: int = -1  # margin variable
    a: int = -1  # generator-participation sensitivity variable
    eq_row: int = -1  # position among the pair equalities
    cone_rows: tuple[int, ...] = ()  # positions among the pair cones


@dataclass(eq=False)
class _RowBlock:
    A: sp.csr_matrix
    b: np.ndarray


def _rows(n: int, parts: list[tuple[slice, sp.spmatrix | np.ndarray]], rhs: np.ndarray) -> _RowBlock:
    k = len(rhs)
    mats = []
    for sl, blk in parts:
        blk = sp.csr_matrix(blk)
        assert blk.shape == (k, sl.stop - sl.start), (blk.shape, sl)
        coo = blk.tocoo()
        mats.append(sp.csr_matrix((coo.data, (coo.row, coo.col + sl.start)), shape=(k, n)))
    A = mats[0]
    for extra in mats[1:]:
        A = A + extra
    return _RowBlock(A.tocsr(), np.asarray(rhs, dtype=float))


class Formulation:
    """Problem data and assembly for one case, uncertainty model and mode.

    Line/outage pairs are added incrementally with :meth:`add_pair`; every other
    constraint family is built once in the constructor.
    """

    def __init__(
        self,
        case: GridCase,
        sens: Sensitivities,
        model: UncertaintyModel,
        mode: ModeConfig,
        symmetric: bool = True,
    ):
        if case.reserve is None:
            raise ValueError("case has no reserve requirement; see grid.with_default_reserves")
        self.case = case
        self.sens = sens
        self.mode = mode
        self.symmetric = symmetric
        base = case.base_mva
        self.base = base
        if not mode.uncertain:
            model = UncertaintyModel.zero(case.n_bus)
        self.model = model
        idx = case.bus_index
        bundle = sens.bundle
        self.m = case.n_bus
        self.l = bundle.n_lines
        self.ng = len(case.generators)
        self.h = len(case.hvdc)
        self.s = len(case.psts)
        self.nd = self.h + self.s
        self.U = model.uncertain
        self.nu = self.U.size
        self.S = model.reduced_factor / base
        self.S1 = self.S @ np.ones(self.nu)
        self.sigma_omega = model.sigma_omega / base

        self.q_line = quantile(case.chance.eps_line)
        self.q_dev = quantile(case.chance.eps_device)
        self.q_gen = quantile(case.chance.eps_gen)

        self.gen_bus = np.array([idx[g.bus] for g in case.generators], dtype=int)
        self.Cg = sp.csr_matrix((np.ones(self.ng), (self.gen_bus, np.arange(self.ng))), shape=(self.m, self.ng))
        M = sens.ptdf
        self.M = M
        self.LF = sens.lodf
        self.D = np.hstack([M @ bundle.C_dc, bundle.b_gamma - M @ bundle.B_gamma])  # l x nd
        self.rating = np.array([case.line_by_id[int(i)].rating for i in bundle.line_ids]) / base
        self.from_pos = np.asarray(bundle.incidence.argmax(axis=1)).ravel()
        self.to_pos = np.asarray(bundle.incidence.argmin(axis=1)).ravel()
        self.pst_of_row = {}
        for k, pst in enumerate(case.psts):
            self.pst_of_row[bundle.line_row()[pst.line_id]] = k

        self.contingencies = sens.contingencies if mode.security else np.zeros(0, dtype=int)
        self.cont_pos = {int(r): k for k, r in enumerate(self.contingencies)}
        self.has_delta = mode.security and mode.post_contingency_control and self.nd > 0
        self.has_alpha = mode.uncertainty_control and self.nu > 0 and self.nd > 0
        self.has_line_soc = self.nu > 0 and self.q_line > 0

        self.layout = DecisionLayout()
        self._build_static()
        self.pairs: dict[tuple[int, int], PairEntry] = {}
        self._pair_eq: list[tuple] = []
        self._pair_ub: list[tuple | None] = []
        self._pair_cones: list[SocBlock] = []
        self._pair_lb: list[float] = []
        self._pair_ub_bounds: list[float] = []
        self._n_pair_rows = 0

    # ------------------------------------------------------------------
    # static constraint families

    def _build_static(self):
        case, L = self.case, self.layout
        base = self.base
        gens = case.generators
        ng, nd, nu, m = self.ng, self.nd, self.nu, self.m
        L.alloc("p_G", ng)
        L.alloc("r_up", ng)
        L.alloc("r_down", ng)
        L.alloc("alpha_G", ng)
        L.alloc("p_dc", self.h)
        L.alloc("gamma", self.s)
        L.alloc("theta", m)
        if self.has_alpha:
            L.alloc("alpha_dev", nd * nu)
            L.alloc("z_dev", nd * nu)
        if self.has_alpha and self.symmetric:
            L.alloc("s_dev", nd)
        nc = len(self.contingencies)
        if self.has_delta:
            L.alloc("delta", nc * nd)
        n = L.size

        lb = np.full(n, -np.inf)
        ub = np.full(n, np.inf)
        pmax = np.array([g.p_max for g in gens]) / base
        pmin = np.array([g.p_min for g in gens]) / base
        rup_max = np.array([np.inf if g.reserve_up_max is None else g.reserve_up_max for g in gens]) / base
        rdn_max = np.array([np.inf if g.reserve_down_max is None else g.reserve_down_max for g in gens]) / base
        lb[L["p_G"]], ub[L["p_G"]] = pmin, pmax
        lb[L["r_up"]], ub[L["r_up"]] = 0.0, rup_max
        lb[L["r_down"]], ub[L["r_down"]] = 0.0, rdn_max
        lb[L["alpha_G"]] = 0.0
        self.dev_min = np.concatenate(
            [[h.p_min / base for h in case.hvdc], [math.radians(p.angle_min) for p in case.psts]])
        self.dev_max = np.concatenate(
            [[h.p_max / base for h in case.hvdc], [math.radians(p.angle_max) for p in case.psts]])
        self.dev_delta = np.concatenate(
            [[h.delta_max / base for h in case.hvdc], [math.radians(p.delta_max) for p in case.psts]])
        lb[L["p_dc"]], ub[L["p_dc"]] = self.dev_min[: self.h], self.dev_max[: self.h]
        lb[L["gamma"]], ub[L["gamma"]] = self.dev_min[self.h :], self.dev_max[self.h :]
        th = L["theta"]
        lb[th.start + self.sens.bundle.slack] = ub[th.start + self.sens.bundle.slack] = 0.0
        if "s_dev" in L:
            lb[L["s_dev"]] = 0.0
            if self.q_dev == 0:
                ub[L["s_dev"]] = 0.0
        if self.has_delta:
            lb[L["delta"]] = -np.tile(self.dev_delta, nc)
            ub[L["delta"]] = np.tile(self.dev_delta, nc)
        self.lb, self.ub = lb, ub

        # objective in $/h divided by the base
        c = np.zeros(n)
        c[L["p_G"]] = [g.cost for g in gens]
        c[L["r_up"]] = [g.c_up for g in gens]
        c[L["r_down"]] = [g.c_down for g in gens]
        self.c = c
        self.records: dict[str, tuple[str, int]] = {}

        eq: list[tuple[str, _RowBlock]] = []
        ineq: list[tuple[str, _RowBlock]] = []
        b = self.sens.bundle
        d = self.case.loads / base
        mu = self.model.mu / base
        eq.append(("balance", _rows(n, [
            (L["p_G"], self.Cg),
            (L["p_dc"], b.C_dc),
            (th, -b.B_bus),
            (L["gamma"], -b.B_gamma),
        ], d - mu)))
        eq.append(("policy-simplex", _rows(n, [(L["alpha_G"], np.ones((1, ng)))], [1.0])))
        if self.has_alpha:
            blk = sp.kron(sp.identity(nd), sp.csr_matrix(self.S))
            eq.append(("policy-factor", _rows(n, [
                (L["z_dev"], sp.identity(nd * nu)),
                (L["alpha_dev"], -blk),
            ], np.zeros(nd * nu))))

        I = sp.identity(ng, format="csr")
        res = case.reserve
        ineq.append(("generator-capacity", _rows(n, [(L["p_G"], I), (L["r_up"], I)], pmax)))
        ineq.append(("generator-minimum", _rows(n, [(L["p_G"], -I), (L["r_down"], I)], -pmin)))
        ineq.append(("reserve-requirement", _rows(n, [(L["r_up"], -np.ones((1, ng)))], [-res.up / base])))
        ineq.append(("reserve-requirement", _rows(n, [(L["r_down"], -np.ones((1, ng)))], [-res.down / base])))
        k = self.q_gen * self.sigma_omega
        if k > 0:
            ineq.append(("reserve", _rows(n, [(L["alpha_G"], k * I), (L["r_up"], -I)], np.zeros(ng))))
            ineq.append(("reserve", _rows(n, [(L["alpha_G"], k * I), (L["r_down"], -I)], np.zeros(ng))))

        cones: list[SocBlock] = []
        dev = slice(L["p_dc"].start, L["gamma"].stop)  # p_dc and gamma are adjacent
        Id = sp.identity(nd, format="csr")
        margin = [(L["s_dev"], Id)] if "s_dev" in L else []
        neg_margin = margin
        ineq.append(("device-linear", _rows(n, [(dev, Id)] + margin, self.dev_max)))
        ineq.append(("device-linear", _rows(n, [(dev, -Id)] + neg_margin, -self.dev_min)))
        if self.has_delta:
            dl = L["delta"]
            for c_pos in range(nc):
                dsl = slice(dl.start + c_pos * nd, dl.start + (c_pos + 1) * nd)
                ineq.append(("device-linear", _rows(n, [(dev, Id), (dsl, Id)] + margin, self.dev_max)))
                ineq.append(("device-linear", _rows(n, [(dev, -Id), (dsl, -Id)] + neg_margin, -self.dev_min)))
        if self.has_alpha and self.q_dev > 0:
            z0 = L["z_dev"].start
            for dpos in range(nd):
                P = self._select(z0 + dpos * nu, nu, n)
                if self.symmetric:
                    r = sp.csr_matrix(([1.0 / self.q_dev], ([0], [L["s_dev"].start + dpos])), shape=(1, n))
                    cones.append(SocBlock(P, np.zeros(nu), r, 0.0))
                else:
                    states = [None] + (list(range(nc)) if self.has_delta else [])
                    for c_pos in states:
                        cols = [dev.start + dpos]
                        if c_pos is not None:
                            cols.append(L["delta"].start + c_pos * nd + dpos)
                        for sign, bound in ((-1.0, self.dev_max[dpos]), (1.0, -self.dev_min[dpos])):
                            r = sp.csr_matrix(
                                (np.full(len(cols), sign / self.q_dev), ([0] * len(cols), cols)), shape=(1, n))
                            cones.append(SocBlock(P, np.zeros(nu), r, bound / self.q_dev))
        self.static_eq = eq
        self.static_ub = ineq
        self.static_cones = cones
        self.n_static = n

    @staticmethod
    def _select(start: int, k: int, n: int) -> sp.csr_matrix:
        return sp.csr_matrix((np.ones(k), (np.arange(k), np.arange(start, start + k))), shape=(k, n))

    # ------------------------------------------------------------------
    # line/outage pairs

    def pair_flow_coefficients(self, ij: int, kl: int) -> tuple[np.ndarray, np.ndarray]:
        """Sparse coefficients (columns, values) of the pair's nominal post-outage flow."""
        L = self.layout
        th0, g0 = L["theta"].start, L["gamma"].start
        b = self.sens.bundle.b_line
        lf = 0.0 if kl == BASE else self.LF[ij, kl]
        coef: dict[int, float] = {}

        def add(col, val):
            coef[col] = coef.get(col, 0.0) + val

        for row, w in ((ij, 1.0), (kl, lf)):
            if row == BASE or w == 0.0:
                continue
            add(th0 + self.from_pos[row], w * b[row])
            add(th0 + self.to_pos[row], -w * b[row])
            if row in self.pst_of_row:
                add(g0 + self.pst_of_row[row], w * b[row])
        if kl != BASE and self.has_delta:
            dstart = L["delta"].start + self.cont_pos[kl] * self.nd
            drow = self.D[ij] + lf * self.D[kl]
            for dpos in range(self.nd):
                add(dstart + dpos, drow[dpos])
        cols = np.fromiter(coef.keys(), dtype=int)
        vals = np.fromiter(coef.values(), dtype=float)
        return cols, vals

    def pair_weights(self, ij: int, kl: int) -> tuple[np.ndarray, np.ndarray]:
        """Injection-sensitivity row ``M_ij + LF M_kl`` and device row ``D_ij + LF D_kl``."""
        if kl == BASE:
            return self.M[ij], self.D[ij]
        lf = self.LF[ij, kl]
        return self.M[ij] + lf * self.M[kl], self.D[ij] + lf * self.D[kl]

    def add_pair(self, ij: int, kl: int, soc: bool) -> PairEntry:
        """Include the pair's linear constraints, and its cone when ``soc`` is set.

        A pair already included without a cone is upgraded in place.
        """
        key = (ij, kl)
        if kl != BASE and kl not in self.cont_pos:
            raise ValueError(f"outage row {kl} is not a contingency (bridge or security disabled)")
        soc = soc and self.has_line_soc
        entry = self.pairs.get(key)
        if entry is not None:
            if entry.soc or not soc:
                return entry
            self._retire(entry)
        entry = PairEntry(ij, kl, soc)
        self.pairs[key] = entry
        self._emit(entry)
        return entry

    def _retire(self, entry: PairEntry):
        # a linear-only pair is upgraded by dropping its rows and emitting fresh ones
        for r in entry.ub_rows:
            self._pair_ub[r] = None

    def _emit(self, entry: PairEntry):
        L = self.layout
        ij, kl = entry.ij, entry.kl
        cols, vals = self.pair_flow_coefficients(ij, kl)
        rating = self.rating[ij]
        if entry.soc:
            entry.a = L.size
            L.alloc(f"a[{ij},{kl}]", 1)
            self._pair_lb.append(-np.inf)
            self._pair_ub_bounds.append(np.inf)
            if self.symmetric:
                entry.s = L.size
                L.alloc(f"s[{ij},{kl}]", 1)
                self._pair_lb.append(0.0)
                self._pair_ub_bounds.append(np.inf)
        if entry.soc and not self.symmetric:
            entry.ub_rows = (-1, -1)
        else:
            rows = []
            for sign in (1.0, -1.0):
                c = list(cols)
                v = list(sign * vals)
                if entry.soc:
                    c.append(entry.s)
                    v.append(1.0)
                rows.append(len(self._pair_ub))
                self._pair_ub.append((np.asarray(c), np.asarray(v, dtype=float), rating))
            entry.ub_rows = tuple(rows)
        if entry.soc:
            w, wd = self.pair_weights(ij, kl)
            gcols = L["alpha_G"].start + np.arange(self.ng)
            gvals = -w[self.gen_bus]
            entry.eq_row = len(self._pair_eq)
            entry.cone_rows = tuple(range(len(self._pair_cones), len(self._pair_cones) + (1 if self.symmetric else 2)))
            self._pair_eq.append((np.array([entry.a, *gcols]), np.array([1.0, *gvals]), 0.0))
            P_cols = [np.full(self.nu, entry.a)]
            P_rows = [np.arange(self.nu)]
            P_vals = [-self.S1]
            if self.has_alpha:
                z0 = L["z_dev"].start
                for dpos in range(self.nd):
                    if wd[dpos] == 0.0:
                        continue
                    P_cols.append(z0 + dpos * self.nu + np.arange(self.nu))
                    P_rows.append(np.arange(self.nu))
                    P_vals.append(np.full(self.nu, -wd[dpos]))
            P = (np.concatenate(P_rows), np.concatenate(P_cols), np.concatenate(P_vals))
            qv = self.S @ w[self.U]
            if self.symmetric:
                self._pair_cones.append(_LazyCone(P, qv, ([entry.s], [1.0 / self.q_line]), 0.0))
            else:
                for sign in (-1.0, 1.0):
                    self._pair_cones.append(
                        _LazyCone(P, qv, (list(cols), list(sign * vals / self.q_line)), rating / self.q_line))

    # ------------------------------------------------------------------

    def assemble(self) -> ConicProblem:
        n = self.layout.size
        self.n_static_ub = sum(b.A.shape[0] for _, b in self.static_ub)
        live = [k for k, r in enumerate(self._pair_ub) if r is not None]
        self._ub_keep = {k: self.n_static_ub + pos for pos, k in enumerate(live)}
        A_eq, b_eq = _stack([blk for _, blk in self.static_eq], self._pair_eq, n)
        A_ub, b_ub = _stack([blk for _, blk in self.static_ub], [self._pair_ub[k] for k in live], n)
        lb = np.concatenate([self.lb, self._pair_lb])
        ubd = np.concatenate([self.ub, self._pair_ub_bounds])
        c = np.concatenate([self.c, np.zeros(n - self.n_static)])
        cones = [_widen_cone(k, n) for k in self.static_cones] + [k.build(n) for k in self._pair_cones]
        return ConicProblem(c, A_eq, b_eq, A_ub, b_ub, lb, ubd, cones)

    def pair_row_positions(self, entry: PairEntry) -> tuple[int, int]:
        """Positions of the pair's linear rows inside the last assembled ``A_ub``."""
        return tuple(self._ub_keep.get(r, -1) if r >= 0 else -1 for r in entry.ub_rows)

    # ------------------------------------------------------------------
    # evaluation at a candidate point

    def cost(self, x: np.ndarray) -> float:
        """Objective in $/h."""
        return float(self.c @ x[: self.n_static]) * self.base

    def base_flows(self, x: np.ndarray) -> np.ndarray:
        L = self.layout
        th = x[L["theta"]]
        b = self.sens.bundle
        return b.b_line * (th[self.from_pos] - th[self.to_pos]) + b.b_gamma @ x[L["gamma"]]

    def deltas(self, x: np.ndarray) -> np.ndarray:
        """Per-contingency device set-point changes, shape (n_contingencies, nd)."""
        nc = len(self.contingencies)
        if not self.has_delta:
            return np.zeros((nc, self.nd))
        return x[self.layout["delta"]].reshape(nc, self.nd)

    def alpha_dev(self, x: np.ndarray) -> np.ndarray:
        """Device response matrix over the uncertain buses, shape (nd, nu)."""
        if not self.has_alpha:
            return np.zeros((self.nd, self.nu))
        return x[self.layout["alpha_dev"]].reshape(self.nd, self.nu)

    def state_flows(self, x: np.ndarray) -> np.ndarray:
        """Pre-outage flows in each contingency state including its set-point changes (l x nc)."""
        f = self.base_flows(x)
        return f[:, None] + self.D @ self.deltas(x).T

    def post_contingency_flows(self, x: np.ndarray) -> np.ndarray:
        """Nominal post-outage flows ``F[ij, c]`` for every contingency column ``c``."""
        if len(self.contingencies) == 0:
            return np.zeros((self.l, 0))
        Fs = self.state_flows(x)
        cont = self.contingencies
        LFc = self.LF[:, cont]
        return Fs + LFc * Fs[cont, np.arange(len(cont))][None, :]

    def response_matrix(self, x: np.ndarray) -> np.ndarray:
        """``A`` restricted to the uncertain buses (l x nu)."""
        ag = x[self.layout["alpha_G"]]
        Mg = self.M[:, self.gen_bus] @ ag
        return self.M[:, self.U] - Mg[:, None] - self.D @ self.alpha_dev(x)

    def scaled_response(self, x: np.ndarray) -> np.ndarray:
        """Rows ``S A_ij'`` as a matrix (l x nu); norms of its rows are flow standard deviations in p.u."""
        if self.nu == 0:
            return np.zeros((self.l, 0))
        return self.response_matrix(x) @ self.S

    def pair_std(self, x: np.ndarray, ij: int, kl: int, SA: np.ndarray | None = None) -> float:
        SA = self.scaled_response(x) if SA is None else SA
        v = SA[ij] if kl == BASE else SA[ij] + self.LF[ij, kl] * SA[kl]
        return float(np.linalg.norm(v))

    def std_matrix(self, x: np.ndarray, SA: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Flow standard deviations for all base pairs (l) and all post-outage pairs (l x nc), p.u."""
        SA = self.scaled_response(x) if SA is None else SA
        G = SA @ SA.T
        gd = np.diag(G)
        cont = self.contingencies
        LFc = self.LF[:, cont]
        var = gd[:, None] + 2.0 * LFc * G[:, cont] + LFc**2 * gd[cont][None, :]
        return np.sqrt(np.maximum(gd, 0.0)), np.sqrt(np.maximum(var, 0.0))

    def soc_row(self, x: np.ndarray, ij: int, kl: int) -> tuple[float, float]:
        """(current margin ``s``, required margin ``q * std``) for a pair; violation is their difference."""
        required = self.q_line * self.pair_std(x, ij, kl) if self.nu else 0.0
        entry = self.pairs.get((ij, kl))
        s = float(x[entry.s]) if entry is not None and entry.s >= 0 else 0.0
        return s, required


class _LazyCone:
    """Pair cone stored as triplets until the final column count is known."""

    def __init__(self, P, q, r, t):
        self.P, self.q, self.r, self.t = P, q, r, t

    def build(self, n: int) -> SocBlock:
        rows, cols, vals = self.P
        P = sp.csr_matrix((vals, (rows, cols)), shape=(self.q.size, n))
        rc, rv = self.r
        r = sp.csr_matrix((rv, ([0] * len(rc), rc)), shape=(1, n))
        return SocBlock(P, self.q, r, self.t)


def _stack(blocks: list[_RowBlock], triplets: list[tuple], n: int) -> tuple[sp.csr_matrix, np.ndarray]:
    mats = [_widen(b.A, n) for b in blocks]
    rhs = [b.b for b in blocks]
    if triplets:
        rows = np.concatenate([np.full(len(c), k) for k, (c, _, _) in enumerate(triplets)])
        cols = np.concatenate([c for c, _, _ in triplets])
        vals = np.concatenate([v for _, v, _ in triplets])
        mats.append(sp.csr_matrix((vals, (rows, cols)), shape=(len(triplets), n)))
        rhs.append(np.array([t for _, _, t in triplets], dtype=float))
    if not mats:
        return sp.csr_matrix((0, n)), np.zeros(0)
    return sp.vstack(mats, format="csr"), np.concatenate(rhs)


def _widen(A: sp.csr_matrix, n: int) -> sp.csr_matrix:
    if A.shape[1] == n:
        return A
    A = A.tocsr()
    return sp.csr_matrix((A.data, A.indices, A.indptr), shape=(A.shape[0], n))


def _widen_cone(k: SocBlock, n: int) -> SocBlock:
    return SocBlock(_widen(k.P, n), k.q, _widen(k.r, n), k.t)


def clamp_setpoints(request: np.ndarray, lower: np.ndarray, upper: np.ndarray) -> np.ndarray:
    """Device saturation: requested set-points limited to their bounds (works on any broadcastable shape)."""
    return np.minimum(np.maximum(request, lower), upper)


def saturated_setpoints(solution, case: GridCase, omega: np.ndarray, kl: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Realized HVDC flows (MW) and PST angles (deg) for fluctuation ``omega`` (MW, per bus) in state ``kl``.

    ``kl`` is an outaged line id, 0 for the pre-outage state. Requests are
    ``p + delta^kl - alpha @ omega`` limited to the device bounds.
    """
    omega = np.asarray(omega, dtype=float)
    p = np.asarray(solution.p_dc, dtype=float)
    g = np.asarray(solution.gamma, dtype=float)
    if kl:
        pos = list(solution.contingency_ids).index(kl) if kl in solution.contingency_ids else None
        if pos is not None:
            p = p + solution.delta_dc[pos]
            g = g + solution.delta_gamma[pos]
    m = omega.shape[-1]
    req_p = p - omega @ np.asarray(solution.alpha_dc, dtype=float).reshape(len(case.hvdc), m).T
    req_g = g - omega @ np.asarray(solution.alpha_gamma, dtype=float).reshape(len(case.psts), m).T
    lo_p = np.array([h.p_min for h in case.hvdc])
    hi_p = np.array([h.p_max for h in case.hvdc])
    lo_g = np.array([s.angle_min for s in case.psts])
    hi_g = np.array([s.angle_max for s in case.psts])
    return clamp_setpoints(req_p, lo_p, hi_p), clamp_setpoints(req_g, lo_g, hi_g)


@dataclass(frozen=True)
class ConstraintRecord:
    kind: str  # balance | reserve | generator-* | device-linear | device-soc | line-linear | line-soc | policy-*
    block: str  # eq | ub | cone
    start: int
    stop: int
    ij: int = 0  # line id where applicable
    kl: int = 0  # outaged line id, 0 for the pre-outage state


def constraint_records(form: Formulation) -> list[ConstraintRecord]:
    """Row ranges of every constraint family in the problem returned by the last ``assemble``."""
    ids = form.sens.bundle.line_ids
    out = []
    pos = 0
    for kind, blk in form.static_eq:
        out.append(ConstraintRecord(kind, "eq", pos, pos + blk.A.shape[0]))
        pos += blk.A.shape[0]
    pair_eq = pos
    pos = 0
    for kind, blk in form.static_ub:
        out.append(ConstraintRecord(kind, "ub", pos, pos + blk.A.shape[0]))
        pos += blk.A.shape[0]
    for k in range(len(form.static_cones)):
        out.append(ConstraintRecord("device-soc", "cone", k, k + 1))
    cone = len(form.static_cones)
    for (ij, kl), entry in sorted(form.pairs.items(), key=lambda kv: (kv[0][1], kv[0][0])):
        lid, oid = int(ids[ij]), 0 if kl == BASE else int(ids[kl])
        rows = [r for r in form.pair_row_positions(entry) if r >= 0]
        for r in rows:
            out.append(ConstraintRecord("line-linear", "ub", r, r + 1, lid, oid))
    for entry in form.pairs.values():
        if entry.soc:
            lid, oid = int(ids[entry.ij]), 0 if entry.kl == BASE else int(ids[entry.kl])
            out.append(ConstraintRecord("policy-sensitivity", "eq", pair_eq + entry.eq_row, pair_eq + entry.eq_row + 1,
                                        lid, oid))
            for k in entry.cone_rows:
                out.append(ConstraintRecord("line-soc", "cone", cone + k, cone + k + 1, lid, oid))
    return out


def dump_problem(form: Formulation) -> dict:
    """Self-describing JSON-ready dump: variable ranges, constraint records and matrices as triplets."""
    p = form.assemble()

    def coo(A):
        A = A.tocoo()
        return {"shape": list(A.shape), "row": A.row.tolist(), "col": A.col.tolist(), "val": A.data.tolist()}

    def num(v):
        return [None if not np.isfinite(a) else float(a) for a in np.asarray(v, dtype=float)]

    return {
        "mode": form.mode.name,
        "symmetric": form.symmetric,
        "units": {"power": "p.u.", "angle": "rad", "base_mva": form.base},
        "variables": {k: [s.start, s.stop] for k, s in form.layout.ranges.items()},
        "records": [r.__dict__ for r in constraint_records(form)],
        "c": num(p.c),
        "A_eq": coo(p.A_eq),
        "b_eq": num(p.b_eq),
        "A_ub": coo(p.A_ub),
        "b_ub": num(p.b_ub),
        "lb": num(p.lb),
        "ub": num(p.ub),
        "cones": [{"P": coo(k.P), "q": num(k.q), "r": coo(k.r), "t": float(k.t)} for k in p.cones],
    }
