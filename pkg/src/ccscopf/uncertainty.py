"""Forecast-error covariance, its symmetric square root, normal quantiles and sample sets."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Sequence

import numpy as np
from scipy.special import ndtri

if TYPE_CHECKING:
    from .grid import GridCase, UncertaintySpec

PSD_JITTER = 1e-10


class UncertaintyError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class UncertaintyModel:
    """Zero-mean normal fluctuation model over all buses, in MW.

    ``factor`` is the symmetric square root of ``cov`` (``factor @ factor == cov``).
    ``uncertain`` lists the bus positions with nonzero variance; the optimization
    works on that subset only.
    """

    mu: np.ndarray
    cov: np.ndarray
    factor: np.ndarray
    sigma_omega: float
    uncertain: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.uncertain is None:
            object.__setattr__(self, "uncertain", np.flatnonzero(np.diag(self.cov) > 0))

    @property
    def n(self) -> int:
        return self.cov.shape[0]

    @property
    def reduced_factor(self) -> np.ndarray:
        """Square root restricted to the uncertain buses."""
        u = self.uncertain
        return self.factor[np.ix_(u, u)]

    @classmethod
    def from_covariance(cls, cov: np.ndarray, mu: np.ndarray | None = None) -> "UncertaintyModel":
        cov = np.asarray(cov, dtype=float)
        cov = 0.5 * (cov + cov.T)
        one = np.ones(cov.shape[0])
        return cls(
            mu=np.zeros(cov.shape[0]) if mu is None else np.asarray(mu, dtype=float),
            cov=cov,
            factor=factorize(cov),
            sigma_omega=float(np.sqrt(max(one @ cov @ one, 0.0))),
        )

    def scaled(self, factor: float) -> "UncertaintyModel":
        return UncertaintyModel.from_covariance(self.cov * factor**2, self.mu)

    @classmethod
    def zero(cls, n: int) -> "UncertaintyModel":
        return cls.from_covariance(np.zeros((n, n)))


def build_covariance(spec: "UncertaintySpec", case: "GridCase") -> UncertaintyModel:
    """Covariance with intra-zone correlation ``spec.rho`` and independent zones."""
    n = case.n_bus
    if spec.covariance is not None:
        cov = np.array(spec.covariance, dtype=float)
        if cov.shape != (n, n):
            raise UncertaintyError(f"covariance override has shape {cov.shape}, expected {(n, n)}")
        if not np.allclose(cov, cov.T, rtol=0, atol=1e-12 * max(1.0, np.abs(cov).max())):
            raise UncertaintyError("covariance override is not symmetric")
        return UncertaintyModel.from_covariance(cov)
    sigma = np.asarray(spec.sigma, dtype=float)
    if sigma.shape != (n,):
        raise UncertaintyError(f"{sigma.size} standard deviations for {n} buses")
    zone = np.array([b.zone for b in case.buses])
    same = zone[:, None] == zone[None, :]
    cov = np.where(same, spec.rho, 0.0) * np.outer(sigma, sigma)
    np.fill_diagonal(cov, sigma**2)
    return UncertaintyModel.from_covariance(cov)


def factorize(cov: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root via eigen-decomposition.

    Negative eigenvalues down to ``-1e-10 * trace`` are clipped to zero; anything
    more negative means the input is not a covariance matrix.
    """
    cov = np.asarray(cov, dtype=float)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise UncertaintyError("covariance must be square")
    if not np.any(cov):
        return np.zeros_like(cov)
    sym = 0.5 * (cov + cov.T)
    w, v = np.linalg.eigh(sym)
    tol = PSD_JITTER * max(np.trace(sym), 0.0)
    if w.min() < -tol:
        raise UncertaintyError(f"covariance is indefinite (smallest eigenvalue {w.min():.3e})")
    w = np.clip(w, 0.0, None)
    root = (v * np.sqrt(w)) @ v.T
    return 0.5 * (root + root.T)


def inv_norm_cdf(p: float) -> float:
    """Standard normal quantile, computed on the lower tail so that q(1-p) = -q(p)."""
    p = float(p)
    if not 0.0 < p < 1.0:
        raise ValueError(f"probability {p} outside (0, 1)")
    if p > 0.5:
        return -float(ndtri(1.0 - p))
    return float(ndtri(p))


@dataclass(frozen=True, eq=False)
class SampleSet:
    omega: np.ndarray  # n x m, MW
    provenance: str = "synthetic"
    seed: int | None = None

    def __len__(self) -> int:
        return self.omega.shape[0]


SAMPLE_CHUNK = 4096


def sample_normal(model: UncertaintyModel, n: int, seed: int = 0) -> SampleSet:
    """Draw ``n`` realizations ``S z`` with ``z`` standard normal.

    Samples are generated in fixed-size chunks, each from its own child stream of
    ``seed``, so the result does not depend on how chunks are scheduled.
    """
    m = model.n
    if n == 0:
        return SampleSet(np.zeros((0, m)), "synthetic", seed)
    u = model.uncertain
    out = np.zeros((n, m))
    if u.size == 0:
        return SampleSet(out, "synthetic", seed)
    root = model.reduced_factor
    n_chunks = -(-n // SAMPLE_CHUNK)
    children = np.random.SeedSequence(seed).spawn(n_chunks)
    for k, child in enumerate(children):
        lo, hi = k * SAMPLE_CHUNK, min(n, (k + 1) * SAMPLE_CHUNK)
        z = np.random.default_rng(child).standard_normal((hi - lo, u.size))
        out[lo:hi, u] = z @ root
    out += model.mu
    return SampleSet(out, "synthetic", seed)


def rescale_historical(raw: np.ndarray, model: UncertaintyModel, columns: Sequence[int] | None = None) -> SampleSet:
    """Moment-match historical deviations to the model's mean and covariance.

    ``raw`` holds one row per sample; its columns map to the bus positions in
    ``columns`` (default: the model's uncertain buses, in order). The data is
    centered, whitened with its own empirical covariance (``ddof=1``) and colored
    with the model's square root, so the output's empirical covariance equals the
    target exactly up to rounding.
    """
    raw = np.asarray(raw, dtype=float)
    if raw.ndim != 2 or raw.shape[0] < 2:
        raise UncertaintyError("need at least two historical samples")
    cols = np.asarray(model.uncertain if columns is None else columns, dtype=int)
    if raw.shape[1] != cols.size:
        raise UncertaintyError(f"historical data has {raw.shape[1]} columns, expected {cols.size}")
    target = model.cov[np.ix_(cols, cols)]
    centered = raw - raw.mean(axis=0)
    emp = np.cov(centered, rowvar=False, ddof=1).reshape(cols.size, cols.size)
    w, v = np.linalg.eigh(0.5 * (emp + emp.T))
    tw = np.linalg.eigvalsh(target)
    tol_e = 1e-10 * max(w.max(initial=0.0), 1e-300)
    tol_t = 1e-10 * max(tw.max(initial=0.0), 1e-300)
    rank_emp = int((w > tol_e).sum())
    rank_target = int((tw > tol_t).sum())
    if rank_emp < rank_target:
        raise UncertaintyError(
            f"historical covariance has rank {rank_emp} but the target has rank {rank_target}"
        )
    keep = w > tol_e
    whiten = (v[:, keep] / np.sqrt(w[keep])) @ v[:, keep].T
    white = centered @ whiten
    colored = white @ factorize(target)
    out = np.zeros((raw.shape[0], model.n))
    out[:, cols] = colored + model.mu[cols]
    return SampleSet(out, "historical-rescaled", None)


def read_sample_csv(path: str | Path, bus_ids: Sequence[int]) -> tuple[np.ndarray, list[int]]:
    """Read a sample CSV (header of bus ids, one row per sample).

    Returns the raw matrix and the bus positions its columns refer to.
    """
    pos = {b: k for k, b in enumerate(bus_ids)}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        try:
            cols = [pos[int(h)] for h in header]
        except (KeyError, ValueError) as exc:
            raise UncertaintyError(f"unknown bus id in sample header: {exc}") from exc
        rows = [[float(v) for v in r] for r in reader if r]
    data = np.array(rows, dtype=float).reshape(len(rows), len(cols))
    return data, cols


def write_sample_csv(path: str | Path, samples: SampleSet, bus_ids: Sequence[int], columns: Sequence[int] | None = None):
    cols = list(range(samples.omega.shape[1])) if columns is None else list(columns)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([bus_ids[c] for c in cols])
        for row in samples.omega[:, cols]:
            w.writerow([repr(float(v)) for v in row])
