"""Model selection over the penalty and the number of groups."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .clustering import kmeans_init
from .errors import AllGridPointsFailedError, HgmError
from .model import DataMatrix, HgmState
from .precision import lambda_max, latent_gram
from .solver import SolverConfig, fit


@dataclass(frozen=True)
class BicRecord:
    """One fitted grid point and its score."""

    k: int
    lam: float
    bic: float
    neg_log_lik: float
    n_offdiag_nonzero: int
    converged: bool


def bic(state: HgmState, x: DataMatrix, k: int) -> float:
    """Score a fitted state: likelihood plus a dimension penalty.

    bic = L + (log p / n) * (s/2 + p + k (n + 2) - 1)

    where L is the state's negative log-likelihood, s counts nonzero
    off-diagonal precision entries, and the parenthesized term counts the
    free parameters (edges, noise-variance and mixture terms, latent
    signal values).  Lower is better.
    """
    s = state.precision.n_offdiag_nonzero
    return state.neg_log_lik + _bic_penalty(s, x.n, x.p, k)


def _bic_penalty(s: int, n: int, p: int, k: int) -> float:
    return (np.log(p) / n) * (s / 2.0 + p + k * (n + 2) - 1)


def default_lambda_grid(a: np.ndarray, num: int = 50) -> np.ndarray:
    """Log-spaced descending grid from lambda_max down to lambda_max / 100.

    ``lambda_max`` is the smallest penalty that already yields a fully
    diagonal estimate on the Gram matrix ``a``, so the grid spans the whole
    useful range.
    """
    if num < 1:
        raise ValueError(f"num must be >= 1, got {num}")
    top = lambda_max(a)
    if num == 1:
        return np.array([top])
    return np.geomspace(top, top / 100.0, num)


def _resolve_grid(x: DataMatrix, k: int, grid: Sequence[float] | int, cfg: SolverConfig):
    if isinstance(grid, (int, np.integer)):
        km = kmeans_init(x, k, cfg.seed, restarts=1)
        return default_lambda_grid(latent_gram(km.centers), int(grid))
    g = np.asarray(grid, dtype=np.float64)
    if g.ndim != 1 or g.size < 1 or (g <= 0).any():
        raise ValueError("lambda grid must be a non-empty sequence of positive values")
    return g


def select_lambda(
    x: DataMatrix,
    k: int,
    grid: Sequence[float] | int,
    cfg: SolverConfig,
) -> tuple[BicRecord, list[BicRecord]]:
    """Fit every penalty in ``grid`` at fixed k and keep the best BIC.

    ``grid`` may be an explicit sequence or an integer count, in which case
    the default grid is built from the Gram matrix of the k-means
    initialization.  Points run in descending order and each fit warm-starts
    the precision solver from the previous solution.  Ties in BIC go to the
    larger penalty.  A failing grid point is recorded with a warning; only
    all points failing raises.
    """
    grid = np.sort(_resolve_grid(x, k, grid, cfg))[::-1]
    path: list[BicRecord] = []
    failures: list[HgmError] = []
    best: BicRecord | None = None
    warm = None
    for lam in grid:
        cfg_l = replace(cfg, k=k, lam=float(lam))
        try:
            state, _ = fit(x, cfg_l, omega_init=warm)
        except HgmError as err:
            failures.append(err)
            warnings.warn(f"grid point lam={lam:.6g} failed: {err}", stacklevel=2)
            continue
        warm = state.precision.values
        rec = BicRecord(
            k=k,
            lam=float(lam),
            bic=bic(state, x, k),
            neg_log_lik=state.neg_log_lik,
            n_offdiag_nonzero=state.precision.n_offdiag_nonzero,
            converged=state.converged,
        )
        path.append(rec)
        if best is None or rec.bic < best.bic:
            best = rec
    if best is None:
        raise AllGridPointsFailedError(failures)
    return best, path


def select_k(
    x: DataMatrix,
    k_grid: Sequence[int],
    lambda_grid: Sequence[float] | int,
    cfg: SolverConfig,
) -> tuple[BicRecord, list[BicRecord]]:
    """Two-level grid search over group count and penalty.

    Returns the best record and the full path across every (k, lambda)
    pair.  Ties in BIC go to the smaller k (and, within a k, to the larger
    penalty via ``select_lambda``).
    """
    ks = sorted(set(int(k) for k in k_grid))
    if not ks:
        raise ValueError("k_grid must be non-empty")
    best: BicRecord | None = None
    path: list[BicRecord] = []
    failures: list[HgmError] = []
    for k in ks:
        try:
            rec, k_path = select_lambda(x, k, lambda_grid, cfg)
        except HgmError as err:
            failures.append(err)
            warnings.warn(f"k={k} failed: {err}", stacklevel=2)
            continue
        path.extend(k_path)
        if best is None or rec.bic < best.bic:
            best = rec
    if best is None:
        raise AllGridPointsFailedError(failures)
    return best, path
