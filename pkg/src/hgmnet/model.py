"""Core model: data containers and the conditional updates of the objective.

The model ties every observed column to one latent group signal,

    X[:, j] = Z[:, k] + noise,    j in group k,  noise ~ N(0, phi_k * I_n),

with the n rows of Z drawn iid from N(0, inv(Omega)) for a sparse K x K
precision matrix Omega.  The negative log-likelihood of one data matrix,
averaged over rows and dropping constants that do not involve the
parameters, is

    L = sum_k [ sum_{j in G_k} ||X[:, j] - Z[:, k]||^2 / (n phi_k)
                + |G_k| log phi_k ]
        + tr(Z Omega Z') / n - log det Omega + K log(2 pi)

and the fitting objective adds an l1 penalty lam * sum_ij |Omega_ij|
(diagonal included).  Each function below evaluates L or performs one
exact conditional minimization of it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConstantColumnError,
    DimensionMismatchError,
    NonFiniteError,
    NotPositiveDefiniteError,
    SingularSystemError,
)

# Noise variances are floored here to keep logs and divisions finite.
PHI_FLOOR = 1e-8

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True, eq=False)
class DataMatrix:
    """An n x p matrix of observations, columns are variables.

    ``standardized`` records whether columns have been centered and scaled;
    it travels with the values so downstream code can tell raw from
    standardized input.
    """

    values: np.ndarray
    standardized: bool = False

    def __post_init__(self):
        v = self.values
        if v.ndim != 2:
            raise DimensionMismatchError(f"data must be 2-D, got ndim={v.ndim}")
        if v.shape[0] < 2:
            raise DimensionMismatchError("need at least two rows")
        if v.shape[1] < 1:
            raise DimensionMismatchError("need at least one column")
        if not np.isfinite(v).all():
            i, j = np.argwhere(~np.isfinite(v))[0]
            raise NonFiniteError(f"row {i}, column {j}")

    @classmethod
    def from_array(cls, arr, standardized: bool = False) -> "DataMatrix":
        return cls(np.ascontiguousarray(arr, dtype=np.float64), standardized)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class GroupAssignment:
    """Maps each of p columns to one of k groups (labels 0..k-1, none empty)."""

    labels: np.ndarray
    k: int

    def __post_init__(self):
        lab = self.labels
        if lab.ndim != 1 or lab.size < 1:
            raise DimensionMismatchError("labels must be a non-empty 1-D array")
        if self.k < 1:
            raise DimensionMismatchError(f"k must be >= 1, got {self.k}")
        if lab.min() < 0 or lab.max() >= self.k:
            raise DimensionMismatchError("labels out of range")
        if (np.bincount(lab, minlength=self.k) == 0).any():
            raise DimensionMismatchError("every group must be non-empty")

    @classmethod
    def from_labels(cls, labels, k: int | None = None) -> "GroupAssignment":
        lab = np.asarray(labels, dtype=np.int64)
        if k is None:
            k = int(lab.max()) + 1 if lab.size else 0
        return cls(lab, int(k))

    @property
    def p(self) -> int:
        return self.labels.size

    @property
    def sizes(self) -> np.ndarray:
        """Group sizes |G_k|, length k."""
        return np.bincount(self.labels, minlength=self.k)

    def __eq__(self, other) -> bool:
        if not isinstance(other, GroupAssignment):
            return NotImplemented
        return self.k == other.k and np.array_equal(self.labels, other.labels)


@dataclass(frozen=True, eq=False)
class NoiseVariances:
    """Per-group noise variances phi_k > 0 with a record of floor clipping."""

    phi: np.ndarray
    floored: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.floored is None:
            object.__setattr__(self, "floored", np.zeros(self.phi.size, dtype=bool))
        if self.phi.ndim != 1 or (self.phi <= 0).any():
            raise DimensionMismatchError("phi must be a 1-D positive vector")

    @property
    def any_floored(self) -> bool:
        return bool(self.floored.any())


@dataclass(frozen=True, eq=False)
class PrecisionMatrix:
    """A symmetric positive definite K x K matrix with an explicit support mask."""

    values: np.ndarray
    support: np.ndarray

    def __post_init__(self):
        v = self.values
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise DimensionMismatchError("precision matrix must be square")
        if not np.array_equal(v, v.T):
            raise DimensionMismatchError("precision matrix must be exactly symmetric")
        if not np.array_equal(self.support, v != 0):
            raise DimensionMismatchError("support mask inconsistent with values")
        try:
            np.linalg.cholesky(v)
        except np.linalg.LinAlgError:
            raise NotPositiveDefiniteError("precision matrix is not positive definite") from None

    @classmethod
    def from_dense(cls, values) -> "PrecisionMatrix":
        v = np.ascontiguousarray(values, dtype=np.float64)
        return cls(v, v != 0)

    @property
    def k(self) -> int:
        return self.values.shape[0]

    @property
    def n_offdiag_nonzero(self) -> int:
        """Count of nonzero off-diagonal entries (both triangles)."""
        return int(self.support.sum() - np.diag(self.support).sum())


@dataclass(frozen=True, eq=False)
class HgmState:
    """One full parameter state plus its objective values."""

    z: np.ndarray
    groups: GroupAssignment
    precision: PrecisionMatrix
    noise: NoiseVariances
    neg_log_lik: float
    objective: float
    n_iter: int
    converged: bool


def standardize(x: DataMatrix) -> DataMatrix:
    """Center each column to mean 0 and scale to unit variance (n-1 denominator)."""
    v = x.values
    mu = v.mean(axis=0)
    sd = v.std(axis=0, ddof=1)
    zero = np.flatnonzero(sd == 0)
    if zero.size:
        raise ConstantColumnError(zero[0])
    return DataMatrix((v - mu) / sd, standardized=True)


def group_means(x: DataMatrix, groups: GroupAssignment) -> np.ndarray:
    """Column means per group: an n x k matrix whose column k averages X over G_k."""
    if groups.p != x.p:
        raise DimensionMismatchError(f"{groups.p} labels for {x.p} columns")
    sums = np.zeros((x.n, groups.k))
    np.add.at(sums.T, groups.labels, x.values.T)
    return sums / groups.sizes


def _log_det_pd(omega: np.ndarray) -> float:
    try:
        chol = np.linalg.cholesky(omega)
    except np.linalg.LinAlgError:
        raise NotPositiveDefiniteError("log det requires a positive definite matrix") from None
    return 2.0 * float(np.log(np.diag(chol)).sum())


def _residual_ss(x: DataMatrix, z: np.ndarray, groups: GroupAssignment) -> np.ndarray:
    """Per-group residual sums of squares sum_{j in G_k} ||X[:,j] - Z[:,k]||^2."""
    resid = x.values - z[:, groups.labels]
    per_col = np.einsum("ij,ij->j", resid, resid)
    out = np.zeros(groups.k)
    np.add.at(out, groups.labels, per_col)
    return out


def neg_log_likelihood(
    x: DataMatrix,
    z: np.ndarray,
    groups: GroupAssignment,
    omega: np.ndarray,
    phi: np.ndarray,
    lam: float,
) -> tuple[float, float]:
    """Evaluate the model objective at one parameter state.

    Returns ``(nll, penalized)`` where ``nll`` is the row-averaged negative
    log-likelihood defined in the module docstring and ``penalized`` adds
    ``lam`` times the entrywise l1 norm of ``omega`` (diagonal included).
    """
    n = x.n
    ss = _residual_ss(x, z, groups)
    noise_part = float((ss / (n * phi)).sum() + (groups.sizes * np.log(phi)).sum())
    latent_part = float(np.einsum("ik,kl,il->", z, omega, z)) / n
    nll = noise_part + latent_part - _log_det_pd(omega) + groups.k * LOG_2PI
    return nll, nll + lam * float(np.abs(omega).sum())


def update_latent(
    z_bar: np.ndarray,
    groups: GroupAssignment,
    omega: np.ndarray,
    phi: np.ndarray,
) -> np.ndarray:
    """Exact conditional minimizer of the objective in Z.

    Solves Z (D + Omega Phi) = Zbar D for Z, where D = diag(|G_k|) and
    Phi = diag(phi_k), via one linear solve; the system matrix is never
    inverted explicitly.
    """
    sizes = groups.sizes.astype(np.float64)
    system = np.diag(sizes) + omega * phi  # (D + Omega Phi), column k scaled by phi_k
    try:
        return np.linalg.solve(system.T, (z_bar * sizes).T).T
    except np.linalg.LinAlgError:
        raise SingularSystemError("latent update system could not be solved") from None


def update_noise_variances(
    x: DataMatrix,
    z: np.ndarray,
    groups: GroupAssignment,
    floor: float = PHI_FLOOR,
) -> NoiseVariances:
    """Exact conditional minimizer of the objective in the noise variances.

    phi_k = mean squared residual of group k's columns around Z[:, k],
    i.e. sum_{j in G_k} ||X[:,j] - Z[:,k]||^2 / (n |G_k|), clipped from
    below at ``floor``; the clip is recorded per group.
    """
    raw = _residual_ss(x, z, groups) / (x.n * groups.sizes)
    floored = raw < floor
    return NoiseVariances(np.maximum(raw, floor), floored)


def latent_gradient(
    x: DataMatrix,
    z: np.ndarray,
    groups: GroupAssignment,
    omega: np.ndarray,
    phi: np.ndarray,
) -> np.ndarray:
    """Gradient in Z of the Z-dependent part of the objective.

    The Z-dependent terms are sum_k sum_{j in G_k} ||X[:,j]-Z[:,k]||^2/(n phi_k)
    + tr(Z Omega Z')/n; the gradient is (2/n)(Z D inv(Phi) + Z Omega
    - Zbar D inv(Phi)).
    """
    n = x.n
    w = groups.sizes / phi  # D inv(Phi) diagonal
    z_bar = group_means(x, groups)
    return (2.0 / n) * (z * w + z @ omega - z_bar * w)
