"""Two-ray ground-reflection path model and shadow-fading decomposition.

The deterministic received-power estimate coherently sums the direct ray
and a single ground-reflected ray (flat earth, image source):

    E = sqrt(G_los) * exp(-j*k*d_los) / d_los
      + Gamma * sqrt(G_ref) * exp(-j*k*d_ref) / d_ref

    rsrp_est = P_tx + 20*log10(lambda / (4*pi)) + 20*log10(|E|)

with k = 2*pi*f0/c.  Per-ray gains combine the transmitter and UAV antenna
patterns evaluated at each ray's departure and arrival elevations.  With
Gamma = 0 this reduces exactly to free-space path loss; with Gamma = -1 the
far field rolls off at -40 dB per decade of horizontal distance.

Shadow fading is defined in the received-power domain as the residual
w = z - rsrp_est of the measured RSRP z against this estimate.
"""

from __future__ import annotations

import cmath
import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InsufficientDataError, SchemaError, ValidationError
from .geometry import LinkGeometry, MeasurementSample, compute_tilt, project_enu

SPEED_OF_LIGHT = 299792458.0


@dataclass(frozen=True)
class GainTable:
    """Antenna gain versus elevation angle, linearly interpolated.

    ``angles_deg`` must be strictly increasing and span [-90, 90] so any
    physical elevation can be looked up; table knots are reproduced exactly.
    """

    angles_deg: tuple[float, ...]
    gains_dbi: tuple[float, ...]

    def __post_init__(self):
        angles = np.asarray(self.angles_deg, dtype=float)
        gains = np.asarray(self.gains_dbi, dtype=float)
        if angles.ndim != 1 or angles.shape != gains.shape or angles.size < 2:
            raise ValidationError("gain table needs matching angle/gain vectors")
        if not (np.all(np.isfinite(angles)) and np.all(np.isfinite(gains))):
            raise ValidationError("gain table contains non-finite entries")
        if np.any(np.diff(angles) <= 0.0):
            raise ValidationError("gain table angles must be strictly increasing")
        if angles[0] > -90.0 or angles[-1] < 90.0:
            raise ValidationError("gain table must cover [-90, 90] degrees")
        object.__setattr__(self, "angles_deg", tuple(angles.tolist()))
        object.__setattr__(self, "gains_dbi", tuple(gains.tolist()))

    @classmethod
    def isotropic(cls, gain_dbi: float = 0.0) -> "GainTable":
        return cls(angles_deg=(-90.0, 90.0), gains_dbi=(gain_dbi, gain_dbi))

    @classmethod
    def from_csv(cls, path: str | Path) -> "GainTable":
        """Load a two-column CSV of (elevation_deg, gain_dbi) rows.

        A non-numeric first row is treated as a header and skipped.
        """
        angles: list[float] = []
        gains: list[float] = []
        with open(path, newline="") as fh:
            for i, row in enumerate(csv.reader(fh)):
                if not row or all(not cell.strip() for cell in row):
                    continue
                if len(row) < 2:
                    raise SchemaError(f"{path}: row {i + 1} has fewer than 2 columns")
                try:
                    angles.append(float(row[0]))
                    gains.append(float(row[1]))
                except ValueError:
                    if i == 0:
                        continue  # header row
                    raise SchemaError(f"{path}: non-numeric row {i + 1}")
        if len(angles) < 2:
            raise SchemaError(f"{path}: need at least two gain rows")
        return cls(angles_deg=tuple(angles), gains_dbi=tuple(gains))

    def lookup(self, elevation_deg):
        """Gain in dBi at the given elevation(s); exact at table knots."""
        return np.interp(elevation_deg, self.angles_deg, self.gains_dbi)


@dataclass(frozen=True)
class LinkBudget:
    """Transmitter-side constants of the propagation model.

    ``tx_alt_m`` is the ground altitude at the mast; the antenna phase
    center sits ``antenna_height_m`` above it.  ``reflection`` is the
    complex ground reflection coefficient (default -1, perfect reflector
    with phase inversion; 0 disables the reflected ray).
    """

    tx_lat_deg: float
    tx_lon_deg: float
    tx_alt_m: float = 0.0
    antenna_height_m: float = 1.5
    tx_power_dbm: float = 30.0
    freq_hz: float = 3.32e9
    reflection: complex = -1.0
    gain_tx: GainTable = field(default_factory=GainTable.isotropic)
    gain_uav: GainTable = field(default_factory=GainTable.isotropic)

    def __post_init__(self):
        if self.freq_hz <= 0.0:
            raise ValidationError(f"carrier frequency must be positive: {self.freq_hz}")
        if abs(self.reflection) > 1.0 + 1e-12:
            raise ValidationError(f"|reflection| must be <= 1: {self.reflection}")
        if self.antenna_height_m <= 0.0:
            raise ValidationError("antenna height must be positive")

    @property
    def origin(self) -> tuple[float, float, float]:
        return (self.tx_lat_deg, self.tx_lon_deg, self.tx_alt_m)

    @property
    def wavelength_m(self) -> float:
        return SPEED_OF_LIGHT / self.freq_hz


@dataclass(frozen=True)
class SfSample:
    """One measurement split into deterministic and shadow-fading parts.

    ``pl_est_dbm`` is the two-ray received-power estimate, so
    ``pl_est_dbm + sf_db`` reproduces the measured ``rsrp_dbm``.
    """

    geometry: LinkGeometry
    sf_db: float
    rsrp_dbm: float
    pl_est_dbm: float


def link_geometry(sample: MeasurementSample, budget: LinkBudget) -> LinkGeometry:
    """Geometry of one sample against the budget's transmitter."""
    tx_enu = np.array([0.0, 0.0, budget.antenna_height_m])
    return compute_tilt(sample, tx_enu, budget.origin)


def two_ray_rsrp(
    geometry: LinkGeometry,
    uav_alt_m: float,
    tx_alt_m: float,
    budget: LinkBudget,
) -> float:
    """Two-ray received power in dBm for one link.

    Parameters
    ----------
    geometry : LinkGeometry
        Supplies the horizontal and slant distances.
    uav_alt_m, tx_alt_m : float
        Antenna heights above the flat reflecting ground plane.
    budget : LinkBudget
        Power, carrier, reflection coefficient and antenna patterns.
    """
    if uav_alt_m <= 0.0 or tx_alt_m <= 0.0:
        raise ValidationError("antenna heights must be above the ground plane")
    d2d = geometry.d2d_m
    d_los = geometry.d3d_m
    if d_los <= 0.0:
        raise ValidationError("line-of-sight distance must be positive")
    d_ref = math.hypot(d2d, uav_alt_m + tx_alt_m)

    k = 2.0 * math.pi / budget.wavelength_m

    # Direct ray: the UAV sits at +theta_los from the transmitter and the
    # transmitter at -theta_los from the UAV.
    theta_los = math.degrees(math.atan2(uav_alt_m - tx_alt_m, d2d))
    g_los_db = budget.gain_tx.lookup(theta_los) + budget.gain_uav.lookup(-theta_los)
    # Reflected ray: both ends look down at the specular point with the
    # common grazing angle of the image construction.
    grazing = math.degrees(math.atan2(uav_alt_m + tx_alt_m, d2d))
    g_ref_db = budget.gain_tx.lookup(-grazing) + budget.gain_uav.lookup(-grazing)

    e_field = math.sqrt(10.0 ** (float(g_los_db) / 10.0)) * cmath.exp(-1j * k * d_los) / d_los
    if budget.reflection != 0.0:
        e_field += (
            budget.reflection
            * math.sqrt(10.0 ** (float(g_ref_db) / 10.0))
            * cmath.exp(-1j * k * d_ref)
            / d_ref
        )
    magnitude = abs(e_field)
    if magnitude == 0.0:
        raise ValidationError("two-ray field magnitude vanished (perfect null)")
    return (
        budget.tx_power_dbm
        + 20.0 * math.log10(budget.wavelength_m / (4.0 * math.pi))
        + 20.0 * math.log10(magnitude)
    )


def decompose_sf(
    sample: MeasurementSample,
    budget: LinkBudget,
    geometry: LinkGeometry | None = None,
) -> SfSample:
    """Split a measurement into the two-ray estimate and the SF residual."""
    geom = geometry if geometry is not None else link_geometry(sample, budget)
    uav_alt = geom.up_m  # height above the transmitter ground plane
    est = two_ray_rsrp(geom, uav_alt, budget.antenna_height_m, budget)
    return SfSample(
        geometry=geom,
        sf_db=sample.rsrp_dbm - est,
        rsrp_dbm=sample.rsrp_dbm,
        pl_est_dbm=est,
    )


def sf_statistics(samples) -> tuple[float, float]:
    """Mean and unbiased variance of the shadow-fading values.

    Raises :class:`InsufficientDataError` for fewer than two samples.
    """
    w = np.array([s.sf_db for s in samples], dtype=float)
    if w.size < 2:
        raise InsufficientDataError(f"need at least 2 SF samples, got {w.size}")
    return float(np.mean(w)), float(np.var(w, ddof=1))
