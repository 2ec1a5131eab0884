"""Synthetic flights and Gaussian shadow-fading fields with known truth.

A simulated dataset is built in three steps: a deterministic waypoint
walk produces timestamped poses (lawnmower or random-waypoint at fixed
altitude, with per-leg uniform pitch/roll excitation and yaw following
the leg heading); a correlated Gaussian field drawn from the truth model
supplies the shadow fading; the two-ray estimate plus optional white
noise turns that into measured RSRP rows.

All randomness flows from numpy's PCG64 generator seeded from the config
seed with fixed per-purpose stream offsets (trajectory, field, noise), so
a config reproduces its dataset bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .correlation import CorrelationModel, correlation_matrix
from .errors import NotPositiveDefiniteError, ValidationError
from .geometry import MeasurementSample, compute_tilt, enu_to_geodetic
from .propagation import LinkBudget, two_ray_rsrp

RNG_ALGORITHM = "numpy-pcg64"
MAX_FIELD_SAMPLES = 5000
_STREAM_TRAJECTORY = 1
_STREAM_FIELD = 2
_STREAM_NOISE = 3


@dataclass(frozen=True)
class FlightSpec:
    """Fixed-altitude flight pattern inside an east/north box.

    ``path`` selects "lawnmower" (serpentine with ``n_passes`` parallel
    legs) or "waypoints" (uniform random waypoints).  Pitch and roll are
    redrawn per leg from zero-mean uniform distributions with the given
    half-amplitudes; yaw tracks the leg heading.
    """

    altitude_m: float = 28.0
    east_extent_m: tuple[float, float] = (-300.0, 300.0)
    north_extent_m: tuple[float, float] = (-300.0, 300.0)
    speed_mps: float = 10.0
    sample_interval_s: float = 1.0
    pitch_excitation_deg: float = 12.0
    roll_excitation_deg: float = 12.0
    path: str = "lawnmower"
    n_passes: int = 12

    def __post_init__(self):
        if self.path not in ("lawnmower", "waypoints"):
            raise ValidationError(f"unknown path kind: {self.path!r}")
        if not (self.east_extent_m[0] < self.east_extent_m[1]):
            raise ValidationError("east extent must be a non-empty interval")
        if not (self.north_extent_m[0] < self.north_extent_m[1]):
            raise ValidationError("north extent must be a non-empty interval")
        if self.speed_mps <= 0.0 or self.sample_interval_s <= 0.0:
            raise ValidationError("speed and sample interval must be positive")
        for amp in (self.pitch_excitation_deg, self.roll_excitation_deg):
            if not 0.0 <= amp <= 90.0:
                raise ValidationError(f"excitation amplitude outside [0, 90]: {amp}")
        if self.n_passes < 2:
            raise ValidationError("need at least 2 lawnmower passes")


@dataclass(frozen=True)
class SimConfig:
    """Everything needed to synthesize one dataset."""

    seed: int
    n_samples: int
    truth: CorrelationModel
    budget: LinkBudget
    flight: FlightSpec = field(default_factory=FlightSpec)
    noise_std_db: float = 0.0

    def __post_init__(self):
        if self.n_samples < 2:
            raise ValidationError("need at least 2 samples")
        if self.noise_std_db < 0.0:
            raise ValidationError("noise standard deviation must be non-negative")
        if self.flight.altitude_m <= self.budget.antenna_height_m:
            raise ValidationError(
                "flight altitude must clear the transmitter antenna"
            )


@dataclass(frozen=True)
class TrajectoryPoint:
    """Pose at one sample instant, before any RSRP is attached."""

    time_s: float
    lat_deg: float
    lon_deg: float
    alt_m: float
    yaw_deg: float
    pitch_deg: float
    roll_deg: float

    @property
    def position(self) -> tuple[float, float, float]:
        return (self.lat_deg, self.lon_deg, self.alt_m)


def _lawnmower_waypoints(spec: FlightSpec):
    e0, e1 = spec.east_extent_m
    rows = np.linspace(spec.north_extent_m[0], spec.north_extent_m[1], spec.n_passes)
    points = []
    for i, y in enumerate(rows):
        if i % 2 == 0:
            points.append((e0, y))
            points.append((e1, y))
        else:
            points.append((e1, y))
            points.append((e0, y))
    return points


def generate_trajectory(config: SimConfig) -> list[TrajectoryPoint]:
    """Deterministic pose sequence for the configured flight.

    The walk advances speed * interval meters per sample along the
    waypoint polyline (cycling when a lawnmower pattern is exhausted) and
    redraws pitch and roll each time a new leg starts.
    """
    spec = config.flight
    rng = np.random.default_rng([config.seed, _STREAM_TRAJECTORY])

    if spec.path == "lawnmower":
        pattern = _lawnmower_waypoints(spec)

        def next_waypoint(k):
            return pattern[k % len(pattern)]

    else:
        e0, e1 = spec.east_extent_m
        n0, n1 = spec.north_extent_m

        def next_waypoint(_k):
            return (rng.uniform(e0, e1), rng.uniform(n0, n1))

    def draw_attitude(heading_deg):
        pitch = rng.uniform(-spec.pitch_excitation_deg, spec.pitch_excitation_deg)
        roll = rng.uniform(-spec.roll_excitation_deg, spec.roll_excitation_deg)
        return heading_deg, pitch, roll

    pos = np.array(next_waypoint(0), dtype=float)
    wp_index = 1
    target = np.array(next_waypoint(wp_index), dtype=float)
    while np.allclose(target, pos):
        wp_index += 1
        target = np.array(next_waypoint(wp_index), dtype=float)
    heading = math.degrees(math.atan2(target[0] - pos[0], target[1] - pos[1]))
    yaw, pitch, roll = draw_attitude(heading)

    step = spec.speed_mps * spec.sample_interval_s
    points: list[TrajectoryPoint] = []
    for k in range(config.n_samples):
        lat, lon, alt = enu_to_geodetic(
            np.array([pos[0], pos[1], spec.altitude_m]), config.budget.origin
        )
        points.append(
            TrajectoryPoint(
                time_s=k * spec.sample_interval_s,
                lat_deg=lat,
                lon_deg=lon,
                alt_m=alt,
                yaw_deg=yaw,
                pitch_deg=pitch,
                roll_deg=roll,
            )
        )
        remaining = step
        while remaining > 0.0:
            leg = target - pos
            dist = float(np.hypot(leg[0], leg[1]))
            if dist <= remaining:
                pos = target.copy()
                remaining -= dist
                wp_index += 1
                target = np.array(next_waypoint(wp_index), dtype=float)
                while np.allclose(target, pos):
                    wp_index += 1
                    target = np.array(next_waypoint(wp_index), dtype=float)
                heading = math.degrees(
                    math.atan2(target[0] - pos[0], target[1] - pos[1])
                )
                yaw, pitch, roll = draw_attitude(heading)
            else:
                pos = pos + leg * (remaining / dist)
                remaining = 0.0
    return points


def sample_sf_field(
    geometries,
    truth: CorrelationModel,
    seed,
    mode: str = "angle_aware",
) -> np.ndarray:
    """Draw one realization of the SF field at the given geometries.

    Builds the dense covariance sigma2 * r_hat + nugget * I and factors it
    as L L^T: Cholesky when the matrix is positive definite, otherwise a
    spectral square root with tiny negative eigenvalues clipped to zero
    (exact for merely semidefinite covariances, e.g. perfectly correlated
    duplicate geometries with no nugget).  Matrices indefinite beyond
    rounding fall back to a diagonal jitter escalated by 10x up to six
    times.  Returns mu + L @ g with g standard normal from the seeded
    generator.
    """
    n = len(geometries)
    if n == 0:
        raise ValidationError("need at least one geometry")
    if n > MAX_FIELD_SAMPLES:
        raise ValidationError(
            f"field synthesis capped at {MAX_FIELD_SAMPLES} samples, got {n}"
        )
    cov = truth.sigma2 * correlation_matrix(truth, geometries, mode=mode)
    cov[np.diag_indices_from(cov)] += truth.nugget

    factor = None
    try:
        factor = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        eigvals, eigvecs = np.linalg.eigh(cov)
        min_eig = float(eigvals[0])
        if min_eig >= -1.0e-8 * truth.sigma2:
            factor = eigvecs * np.sqrt(np.clip(eigvals, 0.0, None))
    if factor is None:
        base = truth.nugget if truth.nugget > 0.0 else 1.0e-6 * truth.sigma2
        diag0 = np.diagonal(cov).copy()
        jitter = base
        for _attempt in range(6):
            cov[np.diag_indices_from(cov)] = diag0 + jitter
            try:
                factor = np.linalg.cholesky(cov)
                break
            except np.linalg.LinAlgError:
                jitter *= 10.0
        if factor is None:
            raise NotPositiveDefiniteError(
                f"covariance not factorizable after jitter escalation"
                f" (min eigenvalue {min_eig:g})"
            )
    g = np.random.default_rng(seed).standard_normal(n)
    return truth.mu + factor @ g


def synthesize_dataset(config: SimConfig) -> list[MeasurementSample]:
    """Full synthetic dataset: poses, truth SF field, two-ray RSRP, noise.

    The emitted samples carry z = rsrp_est + w + noise, so decomposing
    them against the same link budget recovers the synthesized shadow
    fading (exactly, when the noise is zero).
    """
    trajectory = generate_trajectory(config)
    tx_enu = np.array([0.0, 0.0, config.budget.antenna_height_m])
    geoms = [compute_tilt(p, tx_enu, config.budget.origin) for p in trajectory]
    w = sample_sf_field(geoms, config.truth, [config.seed, _STREAM_FIELD])
    if config.noise_std_db > 0.0:
        noise = np.random.default_rng([config.seed, _STREAM_NOISE]).normal(
            0.0, config.noise_std_db, len(trajectory)
        )
    else:
        noise = np.zeros(len(trajectory))

    samples = []
    for k, (point, geom) in enumerate(zip(trajectory, geoms)):
        est = two_ray_rsrp(
            geom, geom.up_m, config.budget.antenna_height_m, config.budget
        )
        samples.append(
            MeasurementSample(
                time_s=point.time_s,
                lat_deg=point.lat_deg,
                lon_deg=point.lon_deg,
                alt_m=point.alt_m,
                yaw_deg=point.yaw_deg,
                pitch_deg=point.pitch_deg,
                roll_deg=point.roll_deg,
                rsrp_dbm=est + float(w[k]) + float(noise[k]),
            )
        )
    return samples


def truth_sidecar(config: SimConfig) -> dict:
    """Sidecar document for a synthesized dataset.

    The top level is a valid model document (the truth model) extended
    with a ``sim`` section recording the seed and generator.
    """
    from .correlation import serialize_model

    doc = serialize_model(config.truth)
    doc["sim"] = {
        "seed": config.seed,
        "rng": RNG_ALGORITHM,
        "n_samples": config.n_samples,
        "noise_std_db": config.noise_std_db,
    }
    return doc
