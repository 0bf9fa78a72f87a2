"""Classical forecasters: constant velocity / constant scale, and a linear
Kalman filter with grid-tuned noise parameters.

The CV-CS baseline estimates per-frame centroid velocity from the last five
observed frames and extrapolates it linearly while freezing the box size at
the anchor frame (constant scale beats linear size extrapolation). The LKF
runs a standard constant-velocity filter over an 8-dimensional state
(position + size and their velocities, unit time step) and rolls the final
posterior forward for forecasting.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .core import FUTURE_LEN, Forecast, ObservationWindow, WindowSource, array_to_boxes
from .metrics import aggregate, evaluate_window

CV_CS_MODEL_ID = "cv_cs"
LKF_MODEL_ID = "lkf"

_STATE_DIM = 8
_OBS_DIM = 4


def cv_velocity(observed: np.ndarray) -> np.ndarray:
    """Per-frame centroid velocity from the last 5 observed frames: (c_t - c_{t-4}) / 4."""
    return (observed[-1, :2] - observed[-5, :2]) / 4.0


def cv_cs_extrapolate(window: ObservationWindow, horizon: int | None = None) -> np.ndarray:
    """Constant-velocity, constant-scale roll-out as a (horizon, 4) array.

    Row k holds the box at step k+1: centroid(anchor) + (k+1) * velocity,
    size frozen at the anchor frame. This is both the CV-CS forecast and the
    reference the learned model's residuals are added to.
    """
    if horizon is None:
        horizon = window.horizon
    observed = window.observed_array()
    vel = cv_velocity(observed)
    steps = np.arange(1, horizon + 1, dtype=np.float64)
    out = np.empty((horizon, 4), dtype=np.float64)
    out[:, :2] = observed[-1, :2] + steps[:, None] * vel
    out[:, 2:] = observed[-1, 2:]
    return out


def cv_cs_forecast(window: ObservationWindow) -> Forecast:
    """Constant-velocity, constant-scale forecast of one window."""
    boxes = array_to_boxes(cv_cs_extrapolate(window))
    return Forecast(source=window.source, boxes=boxes, model_id=CV_CS_MODEL_ID)


@dataclass(frozen=True)
class KalmanParams:
    """Noise configuration of the linear Kalman filter; all variances in px^2."""

    process_noise_pos: float
    process_noise_vel: float
    observation_noise: float
    initial_velocity_variance: float = 100.0

    def __post_init__(self):
        for name, v in asdict(self).items():
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"KalmanParams.{name} must be finite and > 0, got {v!r}")

    def to_file(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def from_file(cls, path: str | Path) -> "KalmanParams":
        return cls(**json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass(frozen=True)
class KalmanState:
    """Gaussian posterior over (cx, cy, w, h, v_cx, v_cy, v_w, v_h)."""

    mean: np.ndarray
    covariance: np.ndarray
    source: WindowSource

    def __post_init__(self):
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=np.float64))
        object.__setattr__(self, "covariance", np.asarray(self.covariance, dtype=np.float64))
        if self.mean.shape != (_STATE_DIM,) or self.covariance.shape != (_STATE_DIM, _STATE_DIM):
            raise ValueError("Kalman state must be 8-dimensional with an 8x8 covariance")


def _transition_matrix() -> np.ndarray:
    f = np.eye(_STATE_DIM)
    f[:_OBS_DIM, _OBS_DIM:] = np.eye(_OBS_DIM)
    return f


def lkf_filter(window: ObservationWindow, params: KalmanParams) -> KalmanState:
    """Run one predict/update cycle per observed frame and return the posterior.

    The state is initialized from the first observation with zero velocity
    (``initial_velocity_variance`` on the velocity terms), then filtered
    through all observed boxes with a constant-velocity transition and direct
    observation of (cx, cy, w, h). Covariance updates use the Joseph form,
    which keeps the posterior symmetric PSD.
    """
    observed = window.observed_array()
    f = _transition_matrix()
    h = np.zeros((_OBS_DIM, _STATE_DIM))
    h[:, :_OBS_DIM] = np.eye(_OBS_DIM)
    q = np.diag([params.process_noise_pos] * _OBS_DIM + [params.process_noise_vel] * _OBS_DIM)
    r = params.observation_noise * np.eye(_OBS_DIM)

    x = np.concatenate([observed[0], np.zeros(_OBS_DIM)])
    p = np.diag([params.observation_noise] * _OBS_DIM + [params.initial_velocity_variance] * _OBS_DIM)

    identity = np.eye(_STATE_DIM)
    for z in observed:
        x = f @ x
        p = f @ p @ f.T + q
        innovation = z - h @ x
        s = h @ p @ h.T + r
        gain = np.linalg.solve(s.T, (p @ h.T).T).T
        x = x + gain @ innovation
        ikh = identity - gain @ h
        p = ikh @ p @ ikh.T + gain @ r @ gain.T
        p = (p + p.T) / 2.0
    return KalmanState(mean=x, covariance=p, source=window.source)


def lkf_forecast(state: KalmanState, horizon: int = FUTURE_LEN) -> Forecast:
    """Roll the posterior mean forward with no updates; sizes clamped to 1 px."""
    f = _transition_matrix()
    x = state.mean.copy()
    rows = np.empty((horizon, 4), dtype=np.float64)
    for k in range(horizon):
        x = f @ x
        rows[k] = x[:_OBS_DIM]
    rows[:, 2:] = np.maximum(rows[:, 2:], 1.0)
    return Forecast(source=state.source, boxes=array_to_boxes(rows), model_id=LKF_MODEL_ID)


def lkf_forecast_window(window: ObservationWindow, params: KalmanParams) -> Forecast:
    """Filter then forecast, matching the window's own horizon."""
    return lkf_forecast(lkf_filter(window, params), horizon=window.horizon)


class TuneResult(NamedTuple):
    params: KalmanParams
    table: list[tuple[KalmanParams, float]]


def lkf_tune(val_windows: Sequence[ObservationWindow], grid: Sequence[KalmanParams]) -> TuneResult:
    """Pick the grid element with the lowest validation ADE.

    Ties break toward the earlier grid entry. The full (params, ADE) table is
    returned alongside the winner.
    """
    if not grid:
        raise ValueError("parameter grid is empty")
    if not val_windows:
        raise ValueError("validation set is empty")
    table = []
    best = None
    best_ade = math.inf
    for params in grid:
        evals = [
            evaluate_window(lkf_forecast_window(w, params), w.future) for w in val_windows
        ]
        ade = aggregate(evals).ade
        table.append((params, ade))
        if ade < best_ade:
            best, best_ade = params, ade
    return TuneResult(params=best, table=table)


def default_param_grid() -> list[KalmanParams]:
    """The stock tuning grid: 3 x 3 x 3 noise combinations, fixed initial velocity variance."""
    grid = []
    for pos, vel, obs in itertools.product((1e-4, 1e-2, 1.0), (1e-4, 1e-2, 1.0), (0.1, 1.0, 10.0)):
        grid.append(
            KalmanParams(
                process_noise_pos=pos,
                process_noise_vel=vel,
                observation_noise=obs,
                initial_velocity_variance=100.0,
            )
        )
    return grid


def save_param_grid(grid: Sequence[KalmanParams], path: str | Path) -> None:
    payload = [asdict(p) for p in grid]
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def load_param_grid(path: str | Path) -> list[KalmanParams]:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    return [KalmanParams(**entry) for entry in payload]
