"""Trajectory differencing, priming, teacher-forced history feeding and closed-loop rollout.

Networks operate on *differential* trajectory samples - consecutive position
differences - because those stay bounded regardless of how far a vehicle
travels.  Prediction runs in three phases:

  0. priming: the first history delta is fed repeatedly so the recurrent
     state reaches a steady state before real data arrives,
  1. teacher-forced: the true history deltas are fed in order; the output of
     the final step is the first horizon prediction,
  2. closed loop: the network's own previous output is fed back as the next
     input until the horizon is filled (parallel identification mode).

Absolute predicted positions are recovered by cumulative summation from the
last observed position, so horizon errors are never contaminated by history
reconstruction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DataError
from .network import NetworkParameters, forward_step, reset_state
from .training import LearningConfig, apply_gradients, compute_gradients

RECONSTRUCTION_TOL = 1e-9  # meters; differentiate/reconstruct round-trip guarantee


@dataclass
class Trajectory:
    """Absolute (x, y) positions of one vehicle, uniformly sampled.

    x is lateral offset in meters, y longitudinal distance in meters, in the
    vehicle-local frame.
    """

    vehicle_id: str
    sample_rate_hz: float
    points: np.ndarray  # shape (N, 2)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise DataError(f"points must have shape (N, 2), got {pts.shape}")
        if pts.shape[0] < 1:
            raise DataError(f"trajectory {self.vehicle_id!r} has no points")
        if not self.sample_rate_hz > 0:
            raise DataError(f"sample_rate_hz must be > 0, got {self.sample_rate_hz}")
        self.points = pts

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def duration_s(self) -> float:
        return (len(self) - 1) / self.sample_rate_hz


@dataclass
class DifferentialTrajectory:
    """Consecutive position differences plus the absolute anchor point."""

    vehicle_id: str
    sample_rate_hz: float
    deltas: np.ndarray  # shape (M, 2), meters per sample step
    anchor: np.ndarray  # shape (2,), absolute position the deltas start from

    def __post_init__(self):
        d = np.asarray(self.deltas, dtype=float)
        if d.ndim != 2 or d.shape[1] != 2:
            raise DataError(f"deltas must have shape (M, 2), got {d.shape}")
        self.deltas = d
        self.anchor = np.asarray(self.anchor, dtype=float).reshape(2)

    def __len__(self) -> int:
        return self.deltas.shape[0]


@dataclass(frozen=True)
class PredictionRequest:
    """How much history to consume and how far ahead to roll out."""

    history_seconds: float = 3.0
    horizon_seconds: float = 5.0
    prime_repeats: int = 50

    def __post_init__(self):
        if not self.history_seconds > 0 or not self.horizon_seconds > 0:
            raise ConfigurationError("history_seconds and horizon_seconds must be > 0")
        if self.prime_repeats < 0:
            raise ConfigurationError("prime_repeats must be >= 0")

    def history_steps(self, rate_hz: float) -> int:
        return int(np.floor(self.history_seconds * rate_hz))

    def horizon_steps(self, rate_hz: float) -> int:
        return int(np.floor(self.horizon_seconds * rate_hz))

    def to_dict(self) -> dict:
        return {
            "history_seconds": self.history_seconds,
            "horizon_seconds": self.horizon_seconds,
            "prime_repeats": self.prime_repeats,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PredictionRequest":
        return cls(
            history_seconds=float(d.get("history_seconds", 3.0)),
            horizon_seconds=float(d.get("horizon_seconds", 5.0)),
            prime_repeats=int(d.get("prime_repeats", 50)),
        )


def differentiate(traj: Trajectory) -> DifferentialTrajectory:
    """Consecutive differences: deltas[t] = points[t+1] - points[t]."""
    pts = traj.points
    if pts.shape[0] < 2:
        raise DataError(f"trajectory {traj.vehicle_id!r} needs >= 2 points to differentiate")
    return DifferentialTrajectory(
        vehicle_id=traj.vehicle_id,
        sample_rate_hz=traj.sample_rate_hz,
        deltas=np.diff(pts, axis=0),
        anchor=pts[0].copy(),
    )


def reconstruct(diff: DifferentialTrajectory) -> Trajectory:
    """Cumulative sum from the anchor; inverse of `differentiate`.

    An empty delta list yields the single-point trajectory at the anchor.
    """
    pts = np.vstack([diff.anchor[None, :], diff.anchor + np.cumsum(diff.deltas, axis=0)])
    return Trajectory(
        vehicle_id=diff.vehicle_id, sample_rate_hz=diff.sample_rate_hz, points=pts
    )


def last_position(diff: DifferentialTrajectory) -> np.ndarray:
    """Absolute position after the final delta."""
    return diff.anchor + diff.deltas.sum(axis=0)


def predict(
    params: NetworkParameters,
    request: PredictionRequest,
    history: DifferentialTrajectory,
    adapt: LearningConfig | None = None,
) -> DifferentialTrajectory:
    """Closed-loop look-ahead prediction from a differential history.

    Consumes exactly floor(history_seconds * rate) trailing history deltas
    and emits exactly floor(horizon_seconds * rate) predicted deltas.  The
    returned trajectory is anchored at the last observed absolute position,
    so `reconstruct` yields the predicted absolute path starting there.

    `predict` never mutates `params`.  If `adapt` is given, a private copy of
    the parameters continues to learn during the teacher-forced phase
    (online adaptation); the copy is discarded afterwards.
    """
    rate = history.sample_rate_hz
    n_hist = request.history_steps(rate)
    n_horizon = request.horizon_steps(rate)
    if n_hist < 1:
        raise ConfigurationError("history window shorter than one sample step")
    if len(history) < n_hist:
        raise DataError(
            f"history for {history.vehicle_id!r} has {len(history)} deltas, "
            f"needs >= {n_hist}"
        )

    if n_horizon < 1:
        raise ConfigurationError("horizon window shorter than one sample step")

    deltas = history.deltas[-n_hist:]
    net = params.copy() if adapt is not None else params
    state = reset_state(net.topology)

    # phase 0: repeat the first sample until the state settles
    first = deltas[0]
    for _ in range(request.prime_repeats):
        _, _, state = forward_step(net, state, first)

    # phase 1: replay the true history once; keep only the final output,
    # which is the one-step-ahead estimate for the first horizon step
    out = None
    for t in range(n_hist):
        out, trace, state = forward_step(net, state, deltas[t])
        if adapt is not None and t + 1 < n_hist:
            grads = compute_gradients(trace, deltas[t + 1])
            net, _ = apply_gradients(net, grads, adapt)

    # phase 2: feed the network its own previous output
    preds = np.empty((n_horizon, 2))
    preds[0] = out
    for k in range(1, n_horizon):
        out, _, state = forward_step(net, state, out)
        preds[k] = out

    return DifferentialTrajectory(
        vehicle_id=history.vehicle_id,
        sample_rate_hz=rate,
        deltas=preds,
        anchor=last_position(history),
    )


def predicted_positions(prediction: DifferentialTrajectory) -> np.ndarray:
    """Absolute horizon positions (excluding the anchor itself)."""
    return reconstruct(prediction).points[1:]


def constant_velocity_baseline(
    history: Trajectory, horizon_seconds: float, averaging_window_s: float = 0.5
) -> Trajectory:
    """Extrapolate the mean velocity of the trailing window; sanity reference only.

    Returns the horizon positions (the anchor point itself is not included).
    """
    rate = history.sample_rate_hz
    if len(history) < 2:
        raise DataError("constant-velocity baseline needs >= 2 history points")
    deltas = np.diff(history.points, axis=0)
    n_avg = max(1, int(np.floor(averaging_window_s * rate)))
    mean_delta = deltas[-n_avg:].mean(axis=0)
    n_horizon = max(1, int(np.floor(horizon_seconds * rate)))
    steps = np.arange(1, n_horizon + 1).reshape(-1, 1)
    pts = history.points[-1] + steps * mean_delta
    return Trajectory(
        vehicle_id=history.vehicle_id, sample_rate_hz=rate, points=pts
    )
