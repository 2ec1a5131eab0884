"""Ordinary Kriging of shadow fading under the correlation model.

For M tuning samples the weights solve the augmented system

    [ C   1 ] [ lambda ]   [ c0 ]
    [ 1^T 0 ] [  nu    ] = [ 1  ]

with C_ij = sigma2 * r_hat(i, j) + nugget * [i == j] and c0_i the model
covariance between tuning sample i and the target.  The unbiasedness row
forces the weights to sum to one; the predictor is lambda^T w and the
prediction variance is sigma2 - lambda^T c0 - nu, floored at zero.

The factorization uses dense LU with partial pivoting.  A solve whose
relative residual exceeds the acceptance threshold (or that fails
outright) retries with the diagonal nugget multiplied by 10, up to six
escalations; the nugget actually used is recorded on the system.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .correlation import (
    DEFAULT_NUGGET_FACTOR,
    CorrelationModel,
    check_mode,
    correlation_matrix,
)
from .errors import SingularSystemError, ValidationError
from .geometry import LinkGeometry
from .propagation import LinkBudget, two_ray_rsrp

RESIDUAL_TOL = 1.0e-8
MAX_ESCALATIONS = 6


@dataclass
class KrigingSystem:
    """One assembled (and optionally solved) ordinary Kriging system.

    ``cov`` includes the base nugget on its diagonal.  ``target_cov`` is an
    (M,) vector for a single target or an (M, k) matrix for a batch;
    ``weights``/``multiplier`` follow the same shape once solved.
    """

    cov: np.ndarray
    target_cov: np.ndarray
    train_w: np.ndarray
    sigma2: float
    nugget: float
    weights: np.ndarray | None = None
    multiplier: np.ndarray | float | None = None
    nugget_used: float | None = None


def dedup_training(samples) -> tuple[list[LinkGeometry], np.ndarray]:
    """Collapse exactly duplicated training geometries.

    The first occurrence keeps its position in the ordering and its SF
    value becomes the mean over all duplicates.
    """
    order: list[LinkGeometry] = []
    values: dict[tuple, list[float]] = {}
    for s in samples:
        g = s.geometry
        key = (g.east_m, g.north_m, g.up_m, g.theta_deg, g.theta_gs_deg, g.delta_deg)
        if key not in values:
            values[key] = []
            order.append(g)
        values[key].append(s.sf_db)
    w = np.array(
        [
            float(np.mean(values[(g.east_m, g.north_m, g.up_m, g.theta_deg, g.theta_gs_deg, g.delta_deg)]))
            for g in order
        ]
    )
    return order, w


def assemble_system(
    training,
    target: LinkGeometry,
    model: CorrelationModel,
    mode: str = "angle_aware",
) -> KrigingSystem:
    """Build the covariance blocks for one target.

    ``training`` is a list of SF samples; duplicates are collapsed first.
    """
    check_mode(mode)
    if len(training) == 0:
        raise ValidationError("need at least one training sample")
    geoms, w = dedup_training(training)
    cov = model.sigma2 * correlation_matrix(model, geoms, mode=mode)
    cov[np.diag_indices_from(cov)] += model.nugget
    c0 = model.sigma2 * correlation_matrix(model, geoms, [target], mode=mode)[:, 0]
    return KrigingSystem(
        cov=cov,
        target_cov=c0,
        train_w=w,
        sigma2=model.sigma2,
        nugget=model.nugget,
    )


def _solve_augmented(cov, rhs, sigma2, base_nugget):
    """LU solve with the escalation ladder; returns (solution, nugget)."""
    m = cov.shape[0]
    k = rhs.shape[1]
    a = np.zeros((m + 1, m + 1))
    a[:m, :m] = cov
    a[:m, m] = 1.0
    a[m, :m] = 1.0
    b = np.zeros((m + 1, k))
    b[:m, :] = rhs
    b[m, :] = 1.0
    b_scale = float(np.abs(b).max())

    nugget = base_nugget
    for attempt in range(MAX_ESCALATIONS + 1):
        a[np.diag_indices(m)] = np.diagonal(cov)[:m] + (nugget - base_nugget)
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
                x = scipy.linalg.solve(a, b, assume_a="gen")
        except (scipy.linalg.LinAlgError, ValueError):
            x = None
        if x is not None and np.all(np.isfinite(x)):
            residual = float(np.abs(a @ x - b).max()) / b_scale
            if residual < RESIDUAL_TOL:
                return x, nugget
        if nugget == 0.0:
            nugget = DEFAULT_NUGGET_FACTOR * sigma2
        else:
            nugget *= 10.0
    raise SingularSystemError(
        f"augmented system unsolvable after {MAX_ESCALATIONS} nugget escalations"
        f" (M={m}, final nugget={nugget:g})"
    )


def solve_ok(system: KrigingSystem) -> KrigingSystem:
    """Solve an assembled system in place and return it.

    Fills ``weights``, ``multiplier`` and ``nugget_used``; raises
    :class:`SingularSystemError` if the escalation ladder is exhausted.
    """
    single = system.target_cov.ndim == 1
    rhs = system.target_cov[:, None] if single else system.target_cov
    x, nugget = _solve_augmented(system.cov, rhs, system.sigma2, system.nugget)
    m = system.cov.shape[0]
    if single:
        system.weights = x[:m, 0]
        system.multiplier = float(x[m, 0])
    else:
        system.weights = x[:m, :]
        system.multiplier = x[m, :]
    system.nugget_used = nugget
    return system


@dataclass(frozen=True)
class Prediction:
    """Kriging output for one target."""

    w_hat_db: float
    z_hat_dbm: float | None
    variance_db2: float
    nugget_used: float


def predict_sf(system: KrigingSystem) -> Prediction:
    """Predictor and variance from a solved (or solvable) single system."""
    if system.target_cov.ndim != 1:
        raise ValidationError("predict_sf expects a single-target system")
    if system.weights is None:
        solve_ok(system)
    lam = system.weights
    w_hat = float(lam @ system.train_w)
    variance = system.sigma2 - float(lam @ system.target_cov) - float(system.multiplier)
    return Prediction(
        w_hat_db=w_hat,
        z_hat_dbm=None,
        variance_db2=max(variance, 0.0),
        nugget_used=float(system.nugget_used),
    )


def predict_sf_batch(
    training,
    targets,
    model: CorrelationModel,
    mode: str = "angle_aware",
) -> tuple[np.ndarray, np.ndarray, float]:
    """Kriging predictions for many targets off one factorization.

    Returns (w_hat, variance, nugget_used) with one entry per target.
    Identical inputs produce the same weights as the per-target path; the
    batch form just reuses the LU factors across right-hand sides.
    """
    check_mode(mode)
    if len(training) == 0:
        raise ValidationError("need at least one training sample")
    if len(targets) == 0:
        return np.empty(0), np.empty(0), model.nugget
    geoms, w = dedup_training(training)
    cov = model.sigma2 * correlation_matrix(model, geoms, mode=mode)
    cov[np.diag_indices_from(cov)] += model.nugget
    c0 = model.sigma2 * correlation_matrix(model, geoms, targets, mode=mode)
    x, nugget = _solve_augmented(cov, c0, model.sigma2, model.nugget)
    m = len(geoms)
    lam = x[:m, :]
    nu = x[m, :]
    w_hat = lam.T @ w
    variance = np.maximum(model.sigma2 - np.sum(lam * c0, axis=0) - nu, 0.0)
    return w_hat, variance, nugget


def predict_rsrp(
    training,
    target: LinkGeometry,
    budget: LinkBudget,
    model: CorrelationModel,
    mode: str = "angle_aware",
) -> Prediction:
    """Received-power prediction: two-ray estimate plus Kriged SF."""
    system = solve_ok(assemble_system(training, target, model, mode))
    sf = predict_sf(system)
    est = two_ray_rsrp(target, target.up_m, budget.antenna_height_m, budget)
    return Prediction(
        w_hat_db=sf.w_hat_db,
        z_hat_dbm=est + sf.w_hat_db,
        variance_db2=sf.variance_db2,
        nugget_used=sf.nugget_used,
    )
