"""Alternating conditional minimization of the penalized objective.

One iteration, starting from (Z, G, Omega, Phi):

  1. latent signals   Z <- exact conditional minimizer given (G, Omega, Phi)
  2. noise variances  Phi <- exact conditional minimizer given (Z, G)
  3. precision        Omega <- penalized estimate on the Gram of Z
                      (glasso directly; scio followed by symmetrize-and-refit)
  4. groups           G <- nearest-signal reassignment (skipped when the
                      caller fixes the grouping)

Steps 1-3 each minimize the penalized objective in their own block, so with
the glasso estimator the objective is non-increasing through them.  The run
stops when the relative Frobenius change of Z falls below ``e_tol`` and the
reassignment step changes nothing, or when the assignment oscillates with
period two for three consecutive checks (the better of the two alternating
states is returned, flagged as not converged).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .clustering import _nearest_labels, kmeans_init
from .errors import (
    AllRestartsFailedError,
    DimensionMismatchError,
    HgmError,
    MaxIterExceededError,
)
from .model import (
    DataMatrix,
    GroupAssignment,
    HgmState,
    NoiseVariances,
    PrecisionMatrix,
    group_means,
    neg_log_likelihood,
    update_latent,
    update_noise_variances,
)
from .precision import glasso, latent_gram, scio, symmetrize_and_refit

_ESTIMATORS = ("glasso", "scio")
_REASSIGN_METRICS = ("euclidean", "phi_weighted")


@dataclass(frozen=True)
class SolverConfig:
    """Knobs of one alternating fit.

    ``lam`` weights the l1 penalty on the latent precision matrix;
    ``e_tol`` is the relative-change convergence threshold; ``restarts``
    counts independent initializations (seeds ``seed``, ``seed+1``, ...).
    ``reassign_metric`` switches step 4 between plain Euclidean distance
    (default) and noise-weighted distance.
    """

    k: int
    lam: float
    e_tol: float = 1e-4
    max_iter: int = 100
    restarts: int = 10
    seed: int = 0
    estimator: str = "glasso"
    reassign_metric: str = "euclidean"

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if not self.lam > 0:
            raise ValueError(f"lam must be > 0, got {self.lam}")
        if not self.e_tol > 0:
            raise ValueError(f"e_tol must be > 0, got {self.e_tol}")
        if self.max_iter < 0:
            raise ValueError(f"max_iter must be >= 0, got {self.max_iter}")
        if self.restarts < 1:
            raise ValueError(f"restarts must be >= 1, got {self.restarts}")
        if self.estimator not in _ESTIMATORS:
            raise ValueError(f"estimator must be one of {_ESTIMATORS}, got {self.estimator!r}")
        if self.reassign_metric not in _REASSIGN_METRICS:
            raise ValueError(
                f"reassign_metric must be one of {_REASSIGN_METRICS}, got {self.reassign_metric!r}"
            )


@dataclass(frozen=True)
class IterationRecord:
    """Objective bookkeeping for one iteration.

    ``obj_start`` is the penalized objective entering the iteration (after
    any group reassignment of the previous one); the ``obj_after_*`` fields
    trace it through steps 1-3.  ``objective``/``neg_log_lik`` are the
    values after step 3.
    """

    objective: float
    neg_log_lik: float
    groups_changed: int
    z_delta: float
    obj_start: float
    obj_after_latent: float
    obj_after_noise: float
    obj_after_precision: float
    groups_repaired: int


@dataclass
class FitTrace:
    restart_seed: int
    records: list[IterationRecord] = field(default_factory=list)

    @property
    def n_iter(self) -> int:
        return len(self.records)


def converged(
    z_prev: np.ndarray,
    z_curr: np.ndarray,
    g_prev: GroupAssignment,
    g_curr: GroupAssignment,
    e_tol: float,
) -> bool:
    """Stopping rule: small relative change of Z and an unchanged grouping.

    True when ||Z_prev - Z_curr||_F / max(1, ||Z_prev||_F) < e_tol and the
    two assignments are identical.
    """
    return _z_delta(z_prev, z_curr) < e_tol and g_prev == g_curr


def _z_delta(z_prev: np.ndarray, z_curr: np.ndarray) -> float:
    num = float(np.linalg.norm(z_prev - z_curr))
    return num / max(1.0, float(np.linalg.norm(z_prev)))


def _estimate_precision(a, cfg: SolverConfig, omega_init):
    if cfg.estimator == "glasso":
        return glasso(a, cfg.lam, omega_init=omega_init)
    raw, _ = scio(a, cfg.lam, beta_init=omega_init)
    return symmetrize_and_refit(raw)


def fit_once(
    x: DataMatrix,
    cfg: SolverConfig,
    restart_seed: int,
    *,
    init_groups: GroupAssignment | None = None,
    update_groups: bool = True,
    omega_init: np.ndarray | None = None,
) -> tuple[HgmState, FitTrace]:
    """One alternating run from one initialization.

    ``init_groups`` bypasses the k-means initialization; with
    ``update_groups=False`` the reassignment step is skipped as well, so the
    grouping stays fixed for the whole run.  ``omega_init`` warm-starts the
    first precision estimate.

    Returns the final state and the per-iteration trace.  Identical inputs
    produce bitwise-identical results.

    If the precision solver runs out of sweeps mid-run, the best completed
    state (by penalized objective) is returned flagged non-converged instead
    of raising; only a failure before any iteration completes propagates.
    """
    if init_groups is not None:
        if init_groups.p != x.p:
            raise DimensionMismatchError("init_groups does not match the data columns")
        if init_groups.k != cfg.k:
            raise DimensionMismatchError("init_groups has a different k than the config")
        g = init_groups
        z = group_means(x, g)
    else:
        km = kmeans_init(x, cfg.k, restart_seed, restarts=1)
        g, z = km.groups, km.centers

    noise = update_noise_variances(x, z, g)
    prec, _ = _estimate_precision(latent_gram(z), cfg, omega_init)
    trace = FitTrace(restart_seed)

    is_converged = False
    # oscillation guard: assignment bouncing between two patterns
    labels_prev2: np.ndarray | None = None
    osc_checks = 0
    prev_end_state: tuple | None = None  # (penalized, nll, z, g, prec, noise)
    init_nll, init_obj = neg_log_likelihood(x, z, g, prec.values, noise.phi, cfg.lam)
    best_state = (init_obj, init_nll, z, g, prec, noise)

    for _t in range(cfg.max_iter):
        obj_start = neg_log_likelihood(x, z, g, prec.values, noise.phi, cfg.lam)[1]
        z_bar = group_means(x, g)
        z_new = update_latent(z_bar, g, prec.values, noise.phi)
        obj_z = neg_log_likelihood(x, z_new, g, prec.values, noise.phi, cfg.lam)[1]

        noise = update_noise_variances(x, z_new, g)
        obj_phi = neg_log_likelihood(x, z_new, g, prec.values, noise.phi, cfg.lam)[1]

        try:
            prec, _ = _estimate_precision(latent_gram(z_new), cfg, prec.values)
        except MaxIterExceededError:
            # the sweep budget ran out (typically a near-singular Gram after
            # heavy shrinkage); fall back to the best state seen so far
            _, _, z, g, prec, noise = best_state
            break
        nll, obj_om = neg_log_likelihood(x, z_new, g, prec.values, noise.phi, cfg.lam)

        if update_groups:
            labels_new, n_repaired = _nearest_labels(
                x, z_new, noise.phi if cfg.reassign_metric == "phi_weighted" else None
            )
            g_new = GroupAssignment(labels_new, cfg.k)
        else:
            g_new, n_repaired = g, 0

        changed = int((g_new.labels != g.labels).sum())
        delta = _z_delta(z, z_new)
        trace.records.append(
            IterationRecord(
                obj_om, nll, changed, delta, obj_start, obj_z, obj_phi, obj_om, n_repaired
            )
        )

        end_nll, end_obj = neg_log_likelihood(x, z_new, g_new, prec.values, noise.phi, cfg.lam)
        end_state = (end_obj, end_nll, z_new, g_new, prec, noise)
        best_state = min(best_state, end_state, key=lambda s: s[0])

        if delta < cfg.e_tol and changed == 0:
            z, g = z_new, g_new
            is_converged = True
            break

        if (
            labels_prev2 is not None
            and changed > 0
            and np.array_equal(g_new.labels, labels_prev2)
        ):
            osc_checks += 1
            if osc_checks >= 3:
                better = min(prev_end_state, end_state, key=lambda s: s[0])
                _, _, z, g, prec, noise = better
                break
        else:
            osc_checks = 0

        labels_prev2 = g.labels
        prev_end_state = end_state
        z, g = z_new, g_new
    else:
        # loop exhausted without convergence; keep the last state
        pass

    final_nll, final_obj = neg_log_likelihood(x, z, g, prec.values, noise.phi, cfg.lam)
    state = HgmState(
        z=z,
        groups=g,
        precision=prec,
        noise=noise,
        neg_log_lik=final_nll,
        objective=final_obj,
        n_iter=trace.n_iter,
        converged=is_converged,
    )
    return state, trace


def fit(
    x: DataMatrix,
    cfg: SolverConfig,
    *,
    init_groups: GroupAssignment | None = None,
    update_groups: bool = True,
    omega_init: np.ndarray | None = None,
) -> tuple[HgmState, list[FitTrace]]:
    """Multi-restart fit: best state by negative log-likelihood.

    Restarts run with seeds ``cfg.seed + i``; a fixed ``init_groups`` makes
    the initialization deterministic, so a single run is performed.  Ties in
    the likelihood go to the smallest restart index.  Raises
    ``AllRestartsFailedError`` only if every restart raised.
    """
    n_restarts = 1 if init_groups is not None else cfg.restarts
    best: HgmState | None = None
    traces: list[FitTrace] = []
    errors: list[HgmError] = []
    for r in range(n_restarts):
        try:
            state, trace = fit_once(
                x,
                cfg,
                cfg.seed + r,
                init_groups=init_groups,
                update_groups=update_groups,
                omega_init=omega_init,
            )
        except HgmError as err:
            errors.append(err)
            continue
        traces.append(trace)
        if best is None or state.neg_log_lik < best.neg_log_lik:
            best = state
    if best is None:
        raise AllRestartsFailedError(errors)
    return best, traces
