"""Subsampled prediction-accuracy comparison across Kriging modes.

For each tuning-set size M the harness repeatedly draws M tuning samples
plus a disjoint block of test targets from the dataset, predicts RSRP at
the targets with each requested mode, and records one RMSE per trial.
Trials continue until the configured total number of test predictions is
reached.  Within a trial the tuning and test sets never overlap; across
trials rows may recur.  All modes see identical tuning/test draws so the
comparison is paired, and every trial's generator is derived from the
master seed plus the (M, trial) pair, which keeps runs reproducible and
lets trials run in any order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .correlation import MODES, CorrelationModel, check_mode
from .errors import ValidationError
from .kriging import predict_sf_batch

DEFAULT_M_VALUES = tuple(range(50, 451, 50))


@dataclass(frozen=True)
class EvalConfig:
    """Controls for one evaluation run."""

    m_values: tuple[int, ...] = DEFAULT_M_VALUES
    tests_per_trial: int = 100
    total_test_predictions: int = 100000
    seed: int = 0
    modes: tuple[str, ...] = ("baseline", "angle_aware")

    def __post_init__(self):
        if not self.m_values or any(m < 1 for m in self.m_values):
            raise ValidationError("m_values must be positive integers")
        if self.tests_per_trial < 1 or self.total_test_predictions < 1:
            raise ValidationError("test counts must be positive")
        if not self.modes:
            raise ValidationError("need at least one mode")
        for mode in self.modes:
            check_mode(mode)

    @property
    def n_trials(self) -> int:
        return math.ceil(self.total_test_predictions / self.tests_per_trial)


@dataclass(frozen=True)
class TrialRecord:
    m: int
    mode: str
    trial: int
    rmse_db: float
    nugget_used: float


@dataclass
class EvalResult:
    config: EvalConfig
    trials: list[TrialRecord] = field(default_factory=list)

    def rmse_values(self, m: int, mode: str) -> np.ndarray:
        return np.array(
            [t.rmse_db for t in self.trials if t.m == m and t.mode == mode]
        )

    def median_rmse(self, m: int, mode: str) -> float:
        return float(np.median(self.rmse_values(m, mode)))

    def summary(self) -> dict:
        """JSON-ready summary with per-(M, mode) medians and full RMSE lists."""
        results = []
        for m in self.config.m_values:
            for mode in self.config.modes:
                values = self.rmse_values(m, mode)
                results.append(
                    {
                        "m": m,
                        "mode": mode,
                        "trials": int(values.size),
                        "tests_per_trial": self.config.tests_per_trial,
                        "total_predictions": int(values.size)
                        * self.config.tests_per_trial,
                        "median_rmse_db": (
                            float(np.median(values)) if values.size else None
                        ),
                        "rmse_db": [float(v) for v in values],
                    }
                )
        return {
            "seed": self.config.seed,
            "tests_per_trial": self.config.tests_per_trial,
            "total_test_predictions": self.config.total_test_predictions,
            "results": results,
        }


def run_evaluation(
    samples,
    model: CorrelationModel,
    config: EvalConfig,
    progress=None,
) -> EvalResult:
    """Run the full trial grid over a decomposed dataset.

    ``samples`` are SF samples (measured RSRP plus its decomposition); the
    predicted z for a target reuses the target row's own two-ray estimate,
    so no link budget is needed here.  ``progress`` may be a callable
    invoked as progress(m, completed_trials, total_trials).
    """
    n = len(samples)
    needed = max(config.m_values) + config.tests_per_trial
    if n < needed:
        raise ValidationError(
            f"dataset has {n} rows; need at least {needed} for"
            f" M={max(config.m_values)} plus {config.tests_per_trial} tests"
        )
    geoms = [s.geometry for s in samples]
    z = np.array([s.rsrp_dbm for s in samples])
    pl_est = np.array([s.pl_est_dbm for s in samples])

    result = EvalResult(config=config)
    n_trials = config.n_trials
    for m in config.m_values:
        for trial in range(n_trials):
            rng = np.random.default_rng([config.seed, m, trial])
            draw = rng.choice(n, size=m + config.tests_per_trial, replace=False)
            train_idx = draw[:m]
            test_idx = draw[m:]
            train = [samples[i] for i in train_idx]
            test_geoms = [geoms[i] for i in test_idx]
            for mode in config.modes:
                w_hat, _var, nugget = predict_sf_batch(train, test_geoms, model, mode)
                z_hat = pl_est[test_idx] + w_hat
                rmse = float(np.sqrt(np.mean((z_hat - z[test_idx]) ** 2)))
                result.trials.append(
                    TrialRecord(
                        m=m, mode=mode, trial=trial, rmse_db=rmse, nugget_used=nugget
                    )
                )
            if progress is not None:
                progress(m, trial + 1, n_trials)
    return result
