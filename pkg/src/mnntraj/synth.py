"""Deterministic synthetic trajectory generation.

Behavior classes: steady straight driving, smooth lane changes, constant-speed
arc turns, and "rogue" driving (sinusoidal in-lane zig-zag at high speed with
random speed spikes and optional abrupt lane offsets).  A trajectory covering
`duration_s` at `rate_hz` has round(duration_s * rate_hz) sample steps, i.e.
one more point than steps.  Zero-noise generation is an exact pure function of
the spec; Gaussian position noise, when enabled, is added after the clean path
and is deterministic per seed.

The rogue parameters (amplitude up to about half a lane, 2-6 s lateral period,
speed spikes up to 2x) are this toolkit's concrete instantiation of reckless
driving; they are declared here and in scenario files rather than hard-coded
into experiments.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace

import numpy as np

from .dataio import TrajectoryDatabase
from .errors import ConfigurationError
from .pipeline import Trajectory

STRAIGHT = "straight"
LANE_CHANGE = "lane_change"
ARC_TURN = "arc_turn"
ROGUE_ZIGZAG = "rogue_zigzag"
KINDS = (STRAIGHT, LANE_CHANGE, ARC_TURN, ROGUE_ZIGZAG)

DEFAULT_MIX = {STRAIGHT: 0.4, LANE_CHANGE: 0.25, ARC_TURN: 0.15, ROGUE_ZIGZAG: 0.2}

# zig-zag speed-spike segment lengths, seconds
_SEGMENT_RANGE = (2.0, 6.0)


@dataclass(frozen=True)
class ScenarioSpec:
    """One vehicle's behavior: kind, kinematics, noise and seed."""

    kind: str = STRAIGHT
    speed: float = 10.0
    duration_s: float = 60.0
    rate_hz: float = 20.0
    lane_width_m: float = 3.5
    lane_change_duration_s: float = 4.0
    turn_radius_m: float = 50.0
    zigzag_amplitude_m: float = 1.5
    zigzag_period_s: float = 4.0
    speed_spike_factor: float = 1.8
    abrupt_offset_prob: float = 0.0
    noise_sigma: float = 0.05
    seed: int = 0
    vehicle_id: str = "veh0"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown scenario kind {self.kind!r}; pick one of {KINDS}")
        if not self.duration_s > 0 or not self.rate_hz > 0:
            raise ConfigurationError("duration_s and rate_hz must be > 0")
        if self.speed < 0 or self.noise_sigma < 0:
            raise ConfigurationError("speed and noise_sigma must be >= 0")
        if self.kind == LANE_CHANGE and not self.lane_change_duration_s > 0:
            raise ConfigurationError("lane_change_duration_s must be > 0")
        if self.kind == ARC_TURN and not self.turn_radius_m > 0:
            raise ConfigurationError("turn_radius_m must be > 0")
        if self.kind == ROGUE_ZIGZAG:
            if not self.zigzag_period_s > 0:
                raise ConfigurationError("zigzag_period_s must be > 0")
            if self.zigzag_amplitude_m < 0:
                raise ConfigurationError("zigzag_amplitude_m must be >= 0")
            if self.speed_spike_factor < 1.0:
                raise ConfigurationError("speed_spike_factor must be >= 1")
            if not 0.0 <= self.abrupt_offset_prob <= 1.0:
                raise ConfigurationError("abrupt_offset_prob must be in [0, 1]")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioSpec":
        return cls(**d)


def n_steps(spec: ScenarioSpec) -> int:
    """Sample steps covering the duration; the trajectory has n_steps + 1 points."""
    return int(round(spec.duration_s * spec.rate_hz))


def max_axis_speed(spec: ScenarioSpec) -> tuple[float, float]:
    """Analytic per-axis speed bound of the zero-noise path (m/s).

    Differential samples of the clean trajectory are bounded by these values
    divided by the sample rate.
    """
    if spec.kind == STRAIGHT:
        return 0.0, spec.speed
    if spec.kind == LANE_CHANGE:
        # peak slope of the logistic ramp: 2 * lane_width / transition time
        return 2.0 * spec.lane_width_m / spec.lane_change_duration_s, spec.speed
    if spec.kind == ARC_TURN:
        return spec.speed, spec.speed
    vx = 2.0 * np.pi * spec.zigzag_amplitude_m / spec.zigzag_period_s
    if spec.abrupt_offset_prob > 0:
        vx += spec.lane_width_m * spec.rate_hz  # a lane offset lands within one step
    return vx, spec.speed * spec.speed_spike_factor


def generate(spec: ScenarioSpec) -> Trajectory:
    """Build one trajectory from a scenario spec."""
    n = n_steps(spec)
    if n < 1:
        raise ConfigurationError(
            f"duration {spec.duration_s}s at {spec.rate_hz} Hz yields no sample steps"
        )
    t = np.arange(n + 1) / spec.rate_hz
    rng = np.random.default_rng(spec.seed)

    if spec.kind == STRAIGHT:
        x = np.zeros_like(t)
        y = spec.speed * t
    elif spec.kind == LANE_CHANGE:
        mid = spec.duration_s / 2.0
        steepness = 8.0 / spec.lane_change_duration_s
        x = spec.lane_width_m / (1.0 + np.exp(-steepness * (t - mid)))
        y = spec.speed * t
    elif spec.kind == ARC_TURN:
        theta = spec.speed * t / spec.turn_radius_m
        x = spec.turn_radius_m * (1.0 - np.cos(theta))
        y = spec.turn_radius_m * np.sin(theta)
    else:
        x, y = _rogue_path(spec, t, rng)

    pts = np.column_stack([x, y])
    if spec.noise_sigma > 0:
        pts = pts + rng.normal(0.0, spec.noise_sigma, size=pts.shape)
    return Trajectory(spec.vehicle_id, spec.rate_hz, pts)


def _rogue_path(spec: ScenarioSpec, t: np.ndarray, rng: np.random.Generator):
    x = spec.zigzag_amplitude_m * np.sin(2.0 * np.pi * t / spec.zigzag_period_s)

    # piecewise-constant speed with random spike segments
    speed_factor = np.ones(len(t))
    offset = np.zeros(len(t))
    t_edge = 0.0
    lo, hi = _SEGMENT_RANGE
    while t_edge < spec.duration_s:
        seg_len = rng.uniform(lo, hi)
        factor = 1.0 if rng.random() < 0.5 else rng.uniform(1.2, spec.speed_spike_factor)
        in_seg = (t >= t_edge) & (t < t_edge + seg_len)
        speed_factor[in_seg] = factor
        t_edge += seg_len
        # abrupt, unindicated lane offset at some segment boundaries
        if t_edge < spec.duration_s and rng.random() < spec.abrupt_offset_prob:
            direction = 1.0 if rng.random() < 0.5 else -1.0
            offset[t >= t_edge] += direction * spec.lane_width_m

    v = spec.speed * speed_factor[:-1]
    y = np.concatenate([[0.0], np.cumsum(v) / spec.rate_hz])
    return x + offset, y


def generate_fleet(
    count: int,
    mix: dict[str, float] | None = None,
    seed: int = 0,
    duration_s: float = 60.0,
    rate_hz: float = 20.0,
    noise_sigma: float = 0.05,
) -> TrajectoryDatabase:
    """Reproducible fleet with an exact apportionment of behavior kinds.

    Kind counts follow the largest-remainder rule, so a 20% rogue share of
    100 vehicles yields exactly 20 rogue vehicles.  Per-vehicle randomness is
    derived from (seed, vehicle index), so generation order cannot change the
    output.  Every vehicle's scenario is recorded in the database metadata.
    """
    if count < 1:
        raise ConfigurationError(f"count must be >= 1, got {count}")
    mix = dict(mix) if mix else dict(DEFAULT_MIX)
    bad = [k for k in mix if k not in KINDS]
    if bad:
        raise ConfigurationError(f"unknown kinds in mix: {bad}")
    total = sum(mix.values())
    if not total > 0:
        raise ConfigurationError("mix weights must sum to a positive value")

    quotas = _apportion(count, {k: w / total for k, w in mix.items()})
    kinds: list[str] = []
    for kind in sorted(quotas):
        kinds.extend([kind] * quotas[kind])

    trajectories = {}
    meta = {}
    for idx, kind in enumerate(kinds):
        rng = np.random.default_rng([seed, idx])
        spec = _randomized_spec(kind, rng, duration_s, rate_hz, noise_sigma)
        spec = replace(spec, vehicle_id=f"v{idx:04d}_{kind}", seed=int(rng.integers(2**62)))
        traj = generate(spec)
        trajectories[spec.vehicle_id] = traj
        meta[spec.vehicle_id] = spec.to_dict()

    return TrajectoryDatabase(
        trajectories, rate_hz, provenance="synthetic", meta=meta
    )


def _apportion(count: int, shares: dict[str, float]) -> dict[str, int]:
    raw = {k: count * s for k, s in shares.items()}
    quotas = {k: int(np.floor(v)) for k, v in raw.items()}
    leftover = count - sum(quotas.values())
    # hand remaining seats to the largest fractional remainders, ties by name
    remainders = sorted(shares, key=lambda k: (-(raw[k] - quotas[k]), k))
    for k in remainders[:leftover]:
        quotas[k] += 1
    return quotas


def _randomized_spec(kind, rng, duration_s, rate_hz, noise_sigma) -> ScenarioSpec:
    if kind == STRAIGHT:
        return ScenarioSpec(
            kind=kind, speed=float(rng.uniform(8.0, 15.0)),
            duration_s=duration_s, rate_hz=rate_hz, noise_sigma=noise_sigma,
        )
    if kind == LANE_CHANGE:
        return ScenarioSpec(
            kind=kind, speed=float(rng.uniform(8.0, 15.0)),
            lane_change_duration_s=float(rng.uniform(2.5, 5.0)),
            duration_s=duration_s, rate_hz=rate_hz, noise_sigma=noise_sigma,
        )
    if kind == ARC_TURN:
        return ScenarioSpec(
            kind=kind, speed=float(rng.uniform(5.0, 12.0)),
            turn_radius_m=float(rng.uniform(30.0, 80.0)),
            duration_s=duration_s, rate_hz=rate_hz, noise_sigma=noise_sigma,
        )
    return ScenarioSpec(
        kind=kind, speed=float(rng.uniform(15.0, 25.0)),
        zigzag_amplitude_m=float(rng.uniform(0.8, 1.75)),
        zigzag_period_s=float(rng.uniform(2.0, 6.0)),
        abrupt_offset_prob=0.15,
        duration_s=duration_s, rate_hz=rate_hz, noise_sigma=noise_sigma,
    )
