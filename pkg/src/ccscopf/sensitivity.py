"""DC network matrices and injection/outage sensitivity factors."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .grid import CaseError, GridCase, connected_components, find_bridges


@dataclass(frozen=True, eq=False)
class SusceptanceBundle:
    """Network matrices over the in-service AC lines (rows ordered as ``line_ids``).

    All entries are per unit on the case base; PST columns act on angles in radians.
    """

    line_ids: np.ndarray  # l
    incidence: sp.csr_matrix  # l x m, +1 at from bus, -1 at to bus
    b_line: np.ndarray  # l, 1/x
    B_bus: sp.csr_matrix  # m x m
    B_gamma: np.ndarray  # m x s
    b_gamma: np.ndarray  # l x s
    C_dc: np.ndarray  # m x h, -1 where the link leaves, +1 where it enters
    slack: int  # bus position

    @property
    def n_lines(self) -> int:
        return self.line_ids.size

    def line_row(self) -> dict[int, int]:
        return {int(lid): k for k, lid in enumerate(self.line_ids)}


def build_susceptance(case: GridCase) -> SusceptanceBundle:
    idx = case.bus_index
    lines = case.active_lines
    m, l = case.n_bus, len(lines)
    rows = np.repeat(np.arange(l), 2)
    cols = np.array([[idx[ln.from_bus], idx[ln.to_bus]] for ln in lines], dtype=int).reshape(-1)
    vals = np.tile([1.0, -1.0], l)
    inc = sp.csr_matrix((vals, (rows, cols)), shape=(l, m))
    b = np.array([1.0 / ln.x for ln in lines])
    B_bus = (inc.T @ sp.diags(b) @ inc).tocsr()

    row_of = {ln.id: k for k, ln in enumerate(lines)}
    s = len(case.psts)
    B_gamma = np.zeros((m, s))
    b_gamma = np.zeros((l, s))
    for k, pst in enumerate(case.psts):
        r = row_of[pst.line_id]
        ln = lines[r]
        B_gamma[idx[ln.from_bus], k] = 1.0 / ln.x
        B_gamma[idx[ln.to_bus], k] = -1.0 / ln.x
        b_gamma[r, k] = 1.0 / ln.x

    C_dc = np.zeros((m, len(case.hvdc)))
    for k, h in enumerate(case.hvdc):
        C_dc[idx[h.from_bus], k] = -1.0
        C_dc[idx[h.to_bus], k] = 1.0

    return SusceptanceBundle(
        line_ids=np.array([ln.id for ln in lines], dtype=int),
        incidence=inc,
        b_line=b,
        B_bus=B_bus,
        B_gamma=B_gamma,
        b_gamma=b_gamma,
        C_dc=C_dc,
        slack=idx[case.slack],
    )


def compute_ptdf(bundle: SusceptanceBundle) -> np.ndarray:
    """Line flow sensitivities to nodal injections balanced at the slack bus (l x m)."""
    m = bundle.B_bus.shape[0]
    keep = np.delete(np.arange(m), bundle.slack)
    B_red = bundle.B_bus[keep][:, keep].tocsc()
    Bf = (sp.diags(bundle.b_line) @ bundle.incidence).tocsc()
    try:
        lu = splu(B_red)
    except RuntimeError as exc:
        raise CaseError("reduced susceptance matrix is singular; the network is not connected") from exc
    rhs = Bf[:, keep].T.toarray()
    X = lu.solve(rhs)
    if not np.all(np.isfinite(X)):
        raise CaseError("reduced susceptance matrix is singular; the network is not connected")
    M = np.zeros((bundle.n_lines, m))
    M[:, keep] = X.T
    return M


def bridge_rows(case: GridCase, bundle: SusceptanceBundle) -> np.ndarray:
    """Boolean mask over bundle rows marking lines whose outage islands the network."""
    edges = [(int(lid), ln.from_bus, ln.to_bus) for lid, ln in zip(bundle.line_ids, case.active_lines)]
    bridges = find_bridges([b.id for b in case.buses], edges)
    return np.array([int(lid) in bridges for lid in bundle.line_ids])


def compute_lodf(ptdf: np.ndarray, bundle: SusceptanceBundle, bridges: np.ndarray) -> np.ndarray:
    """Line outage distribution factors ``LF[ij, kl]`` (l x l).

    ``LF[kl, kl] = -1``; columns of bridge outages are NaN.
    """
    H = np.asarray(bundle.incidence @ ptdf.T).T  # H[ij, kl] = M[ij, k] - M[ij, l]
    denom = 1.0 - np.diag(H).copy()
    denom[bridges] = np.nan
    LF = H / denom[None, :]
    np.fill_diagonal(LF, -1.0)
    LF[:, bridges] = np.nan
    return LF


def contingency_list(bridges: np.ndarray, line_ids: np.ndarray | None = None, excluded=()) -> np.ndarray:
    """Bundle rows of non-islanding AC line outages, minus explicitly excluded line ids."""
    keep = ~bridges
    if line_ids is not None and len(excluded):
        keep &= ~np.isin(line_ids, list(excluded))
    return np.flatnonzero(keep)


@dataclass(frozen=True, eq=False)
class Sensitivities:
    bundle: SusceptanceBundle
    ptdf: np.ndarray
    lodf: np.ndarray
    bridges: np.ndarray
    contingencies: np.ndarray  # bundle rows

    @property
    def n_lines(self) -> int:
        return self.bundle.n_lines


def network_hash(case: GridCase) -> str:
    doc = {
        "buses": [b.id for b in case.buses],
        "lines": [(ln.id, ln.from_bus, ln.to_bus, repr(ln.x), ln.in_service) for ln in case.lines],
        "psts": [p.line_id for p in case.psts],
        "hvdc": [(h.from_bus, h.to_bus) for h in case.hvdc],
        "slack": case.slack,
    }
    return hashlib.sha256(json.dumps(doc).encode()).hexdigest()[:24]


def compute_sensitivities(case: GridCase, cache_dir: str | Path | None = None) -> Sensitivities:
    """Build the susceptance bundle, PTDF, LODF and contingency list for ``case``.

    With ``cache_dir`` the dense PTDF/LODF are stored in ``<hash>.npz`` and
    reused when the network content is unchanged.
    """
    ids = [b.id for b in case.buses]
    edges = [(ln.id, ln.from_bus, ln.to_bus) for ln in case.active_lines]
    if len(connected_components(ids, edges)) > 1:
        raise CaseError("AC network is not connected")
    bundle = build_susceptance(case)
    bridges = bridge_rows(case, bundle)
    path = None
    if cache_dir is not None:
        path = Path(cache_dir) / f"{network_hash(case)}.npz"
        if path.exists():
            data = np.load(path)
            return Sensitivities(bundle, data["ptdf"], data["lodf"], bridges,
                                 contingency_list(bridges, bundle.line_ids, case.excluded_outages))
    ptdf = compute_ptdf(bundle)
    lodf = compute_lodf(ptdf, bundle, bridges)
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        np.savez(path, ptdf=ptdf, lodf=lodf)
    return Sensitivities(bundle, ptdf, lodf, bridges, contingency_list(bridges, bundle.line_ids, case.excluded_outages))


def dc_flows(case: GridCase, injections: np.ndarray, gamma: np.ndarray | None = None,
             out_of_service: set[int] = frozenset()) -> dict[int, float]:
    """Reference DC power flow by direct solve of the reduced nodal equations.

    ``injections`` are per-unit nodal injections (the slack absorbs any imbalance);
    ``gamma`` holds PST angles in radians aligned with ``case.psts``. Returns
    flows by line id. Used as an independent check of the sensitivity factors.
    """
    idx = case.bus_index
    m = case.n_bus
    lines = [ln for ln in case.active_lines if ln.id not in out_of_service]
    B = np.zeros((m, m))
    for ln in lines:
        i, j, b = idx[ln.from_bus], idx[ln.to_bus], 1.0 / ln.x
        B[i, i] += b
        B[j, j] += b
        B[i, j] -= b
        B[j, i] -= b
    shift = np.zeros(m)
    pst_angle = {}
    if gamma is not None:
        for g, pst in zip(gamma, case.psts):
            if pst.line_id in {ln.id for ln in lines}:
                pst_angle[pst.line_id] = g
    for ln in lines:
        g = pst_angle.get(ln.id, 0.0)
        shift[idx[ln.from_bus]] += g / ln.x
        shift[idx[ln.to_bus]] -= g / ln.x
    s = idx[case.slack]
    keep = [k for k in range(m) if k != s]
    theta = np.zeros(m)
    theta[keep] = np.linalg.solve(B[np.ix_(keep, keep)], (np.asarray(injections) - shift)[keep])
    return {
        ln.id: (theta[idx[ln.from_bus]] - theta[idx[ln.to_bus]] + pst_angle.get(ln.id, 0.0)) / ln.x for ln in lines
    }
