"""Sparse precision estimation on the latent Gram matrix.

Both solvers target the penalized objective

    L(Omega) = tr(A Omega) - log det Omega + lam * sum_ij |Omega_ij|

where A is the K x K Gram matrix of the latent signals and the l1 norm
runs over ALL entries, diagonal included.

``glasso`` minimizes L directly by block coordinate descent on Omega:
one row/column at a time, each reduced to a lasso solved by coordinate
descent, with the inverse maintained through rank-one updates.  Working
on the primal makes L non-increasing across block iterates, which the
outer alternating solver relies on.

``scio`` solves the per-column surrogate

    min_beta  0.5 * beta' A beta - beta_i + lam * ||beta||_1

independently for each column i.  Its output is not symmetric in
general; pass it through ``symmetrize_and_refit``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.linalg import cho_factor, cho_solve

from .errors import (
    DimensionMismatchError,
    MaxIterExceededError,
    NonFiniteError,
    NotPositiveDefiniteError,
    ZeroDiagonalError,
)
from .model import PrecisionMatrix


@dataclass(frozen=True)
class SolverReport:
    """Diagnostics from one precision-solver call.

    ``gap`` is a duality gap for glasso and the final-sweep objective
    decrease (max over columns) for scio.
    """

    iterations: int
    kkt_residual: float
    gap: float
    refit_applied: bool = False
    ridge_added: float = 0.0


def latent_gram(z: np.ndarray) -> np.ndarray:
    """Gram matrix A = Z'Z / n of an n x K latent matrix, exactly symmetric."""
    n = z.shape[0]
    a = z.T @ z / n
    return (a + a.T) / 2.0


def _check_gram(a: np.ndarray) -> np.ndarray:
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatchError("Gram matrix must be square")
    if not np.isfinite(a).all():
        raise NonFiniteError("Gram matrix")
    if np.abs(a - a.T).max() > 1e-8:
        raise DimensionMismatchError("Gram matrix must be symmetric")
    return (a + a.T) / 2.0


def _pd_inverse(m: np.ndarray) -> np.ndarray:
    """Inverse via Cholesky; raises LinAlgError if not positive definite."""
    c, low = cho_factor(m, lower=True)
    inv = cho_solve((c, low), np.eye(m.shape[0]))
    return (inv + inv.T) / 2.0


def _kkt_violation(a: np.ndarray, omega: np.ndarray, w: np.ndarray, lam: float) -> float:
    """Max KKT violation of L at omega, given w = inv(omega)."""
    r = a - w
    nz = omega != 0
    viol = np.where(nz, np.abs(r + lam * np.sign(omega)), np.maximum(0.0, np.abs(r) - lam))
    return float(viol.max())


def kkt_residual(a: np.ndarray, omega: np.ndarray, lam: float) -> float:
    """Stationarity residual of the penalized objective at ``omega``.

    For nonzero entries the subgradient is |A_ij - inv(Omega)_ij +
    lam * sign(Omega_ij)|; at zeros the violation is the amount by which
    |A_ij - inv(Omega)_ij| exceeds lam.  Zero at an exact minimizer.
    """
    a = _check_gram(a)
    try:
        w = _pd_inverse(omega)
    except np.linalg.LinAlgError:
        raise NotPositiveDefiniteError("omega must be positive definite") from None
    return _kkt_violation(a, omega, w, lam)


@njit(cache=True)
def _lasso_cd(q, b, lam, beta, tol, max_sweeps):  # pragma: no cover - compiled
    """Cyclic coordinate descent for 0.5 b'Qb + b'beta + lam ||beta||_1.

    Updates ``beta`` in place.  Returns (sweeps, kkt, last objective drop).
    """
    k = beta.shape[0]
    v = np.dot(q, beta)
    last_obj = 0.5 * np.dot(beta, v) + np.dot(b, beta) + lam * np.abs(beta).sum()
    sweeps = 0
    kkt = np.inf
    obj_drop = np.inf
    while sweeps < max_sweeps:
        for j in range(k):
            old = beta[j]
            qjj = q[j, j]
            arg = -(b[j] + v[j] - qjj * old)
            if arg > lam:
                new = (arg - lam) / qjj
            elif arg < -lam:
                new = (arg + lam) / qjj
            else:
                new = 0.0
            if new != old:
                d = new - old
                for l in range(k):
                    v[l] += d * q[l, j]
                beta[j] = new
        sweeps += 1
        v = np.dot(q, beta)  # fresh product: kills incremental drift
        kkt = 0.0
        for j in range(k):
            g = v[j] + b[j]
            if beta[j] > 0.0:
                viol = abs(g + lam)
            elif beta[j] < 0.0:
                viol = abs(g - lam)
            else:
                viol = abs(g) - lam
                if viol < 0.0:
                    viol = 0.0
            if viol > kkt:
                kkt = viol
        obj = 0.5 * np.dot(beta, v) + np.dot(b, beta) + lam * np.abs(beta).sum()
        obj_drop = last_obj - obj
        last_obj = obj
        if kkt <= tol:
            break
    return sweeps, kkt, obj_drop


def glasso(
    a: np.ndarray,
    lam: float,
    tol: float = 1e-4,
    max_iter: int = 1000,
    omega_init: np.ndarray | None = None,
) -> tuple[PrecisionMatrix, SolverReport]:
    """Penalized precision estimate by block coordinate descent.

    Parameters
    ----------
    a : ndarray of shape (K, K)
        Symmetric positive semidefinite Gram matrix.
    lam : float
        l1 penalty weight, > 0.  The diagonal is penalized.
    tol : float
        Convergence threshold on the KKT residual.
    max_iter : int
        Maximum number of full block sweeps.
    omega_init : ndarray, optional
        Warm start; must be symmetric positive definite.  When it already
        satisfies the KKT condition the solver returns it with zero sweeps.

    Returns
    -------
    (PrecisionMatrix, SolverReport)

    Raises
    ------
    MaxIterExceededError
        If the residual is still above ``tol`` after ``max_iter`` sweeps;
        carries the last iterate and its residual.
    """
    a = _check_gram(a)
    if lam <= 0:
        raise ValueError(f"lam must be > 0, got {lam}")
    if (np.diag(a) < 0).any():
        raise NotPositiveDefiniteError("Gram diagonal has negative entries")
    k = a.shape[0]
    diag_pen = np.diag(a) + lam

    om = None
    if omega_init is not None:
        om = (np.asarray(omega_init, dtype=np.float64) + np.asarray(omega_init).T) / 2.0
        try:
            w = _pd_inverse(om)
        except np.linalg.LinAlgError:
            om = None  # unusable warm start, fall back to the cold one
        else:
            kkt = _kkt_violation(a, om, w, lam)
            if kkt <= tol:
                rep = SolverReport(0, kkt, _glasso_gap(a, om, lam))
                return PrecisionMatrix.from_dense(om), rep
    if om is None:
        om = np.diag(1.0 / diag_pen)
        w = np.diag(diag_pen)

    inner_tol = 0.1 * tol
    mask = np.ones(k, dtype=bool)
    kkt = np.inf
    sweeps = 0
    for sweep in range(max_iter):
        for j in range(k):
            mask[j] = False
            idx = np.flatnonzero(mask)
            mask[j] = True
            w12 = w[idx, j]
            b11 = w[np.ix_(idx, idx)] - np.outer(w12, w12) / w[j, j]
            beta = om[idx, j].copy()
            _lasso_cd((diag_pen[j]) * b11, a[idx, j], lam, beta, inner_tol, max_iter)
            s = 1.0 / diag_pen[j]
            u = b11 @ beta
            om[idx, j] = beta
            om[j, idx] = beta
            om[j, j] = s + beta @ u
            w[np.ix_(idx, idx)] = b11 + np.outer(u, u) / s
            w[idx, j] = -u / s
            w[j, idx] = -u / s
            w[j, j] = 1.0 / s
        sweeps = sweep + 1
        try:
            w = _pd_inverse(om)
        except np.linalg.LinAlgError:
            kkt = np.inf  # iterate not yet invertible to working accuracy
            continue
        kkt = _kkt_violation(a, om, w, lam)
        if kkt <= tol:
            break
    if kkt > tol:
        raise MaxIterExceededError(
            f"glasso did not reach tol={tol} in {max_iter} sweeps", best=om, residual=kkt
        )
    return PrecisionMatrix.from_dense(om), SolverReport(sweeps, kkt, _glasso_gap(a, om, lam))


def _glasso_gap(a: np.ndarray, om: np.ndarray, lam: float) -> float:
    """Duality gap tr(A Omega) + lam ||Omega||_1 - K at inv(Omega) dual-feasible."""
    return float(np.sum(a * om) + lam * np.abs(om).sum() - a.shape[0])


def scio(
    a: np.ndarray,
    lam: float,
    tol: float = 1e-4,
    max_iter: int = 1000,
    beta_init: np.ndarray | None = None,
) -> tuple[np.ndarray, SolverReport]:
    """Columnwise sparse precision estimate.

    Solves min 0.5 beta'A beta - beta_i + lam ||beta||_1 for every column i
    by coordinate descent.  Returns the raw (generally asymmetric) K x K
    matrix of stacked column solutions; see ``symmetrize_and_refit``.
    """
    a = _check_gram(a)
    if lam <= 0:
        raise ValueError(f"lam must be > 0, got {lam}")
    diag = np.diag(a)
    zero = np.flatnonzero(diag == 0)
    if zero.size:
        raise ZeroDiagonalError(zero[0])
    if (diag < 0).any():
        raise NotPositiveDefiniteError("Gram diagonal has negative entries")
    k = a.shape[0]
    raw = np.zeros((k, k))
    worst_kkt = 0.0
    worst_drop = 0.0
    most_sweeps = 0
    for i in range(k):
        b = np.zeros(k)
        b[i] = -1.0
        beta = np.ascontiguousarray(beta_init[:, i]) if beta_init is not None else np.zeros(k)
        sweeps, kkt, drop = _lasso_cd(a, b, lam, beta, tol, max_iter)
        raw[:, i] = beta
        if kkt > tol:
            raise MaxIterExceededError(
                f"scio column {i} did not reach tol={tol} in {max_iter} sweeps",
                best=raw,
                residual=kkt,
            )
        worst_kkt = max(worst_kkt, kkt)
        worst_drop = max(worst_drop, drop)
        most_sweeps = max(most_sweeps, sweeps)
    return raw, SolverReport(most_sweeps, worst_kkt, worst_drop)


def symmetrize_and_refit(raw: np.ndarray) -> tuple[PrecisionMatrix, SolverReport]:
    """Symmetrize a raw columnwise estimate and restore positive definiteness.

    For each pair, the entry of smaller magnitude wins (ties average, which
    leaves symmetric input unchanged).  If the symmetrized matrix has
    smallest eigenvalue sigma_min <= 0, (|sigma_min| + 1e-6) * I is added;
    the off-diagonal support is never altered.
    """
    if raw.ndim != 2 or raw.shape[0] != raw.shape[1]:
        raise DimensionMismatchError("raw estimate must be square")
    t = raw.T
    sym = np.where(
        np.abs(raw) < np.abs(t), raw, np.where(np.abs(raw) > np.abs(t), t, (raw + t) / 2.0)
    )
    sig_min = float(np.linalg.eigvalsh(sym)[0])
    ridge = 0.0
    if sig_min <= 0:
        ridge = abs(sig_min) + 1e-6
        sym = sym + ridge * np.eye(sym.shape[0])
    rep = SolverReport(0, float("nan"), float("nan"), refit_applied=True, ridge_added=ridge)
    return PrecisionMatrix.from_dense(sym), rep


def lambda_max(a: np.ndarray) -> float:
    """Smallest penalty that makes the glasso solution exactly diagonal.

    Equals the largest off-diagonal |A_ij|.  Falls back to 1e-2 when the
    Gram matrix is already diagonal (nothing to shrink).
    """
    a = _check_gram(a)
    k = a.shape[0]
    if k == 1:
        return 1e-2
    off = np.abs(a - np.diag(np.diag(a))).max()
    return float(off) if off > 0 else 1e-2
