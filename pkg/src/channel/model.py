"""
Air-to-ground channel model.

Elevation angle, logistic LoS probability and the average path loss
expression. Angles are in DEGREES everywhere: the LoS logistic mixes the
elevation with the dimensionless constant `a`, so the fitted constants only
make sense in degrees.

The path loss keeps the written form
    PL = P_LoS(φ)·(η_LoS − η_NLoS) + 20·log10(r·sec φ) + 20·log10(λ) + 20·log10(4π/v_c) + η_NLoS
with r·sec φ used as the slant range proxy (no true 3-D distance substitution).
The channel gain is the negated path loss; a link fails when gain ≤ γ_th.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)


class ChannelDomainError(ValueError):
    """Input outside the domain of a channel formula."""


@dataclass(frozen=True)
class ChannelParams:
    a: float
    b: float
    eta_los: float
    eta_nlos: float
    wavelength: float
    light_speed: float
    coverage_radius: float
    gain_threshold: float
    max_elevation_deg: float

    def __post_init__(self):
        if self.a <= 0 or self.b <= 0:
            raise ChannelDomainError("Environment constants a and b must be positive")
        if self.eta_nlos < self.eta_los:
            raise ChannelDomainError("eta_nlos must be >= eta_los")
        if self.wavelength <= 0:
            raise ChannelDomainError("wavelength must be positive")
        if self.light_speed <= 0:
            raise ChannelDomainError("light_speed must be positive")
        if self.coverage_radius <= 0:
            raise ChannelDomainError("coverage_radius must be positive")
        if not 0 < self.max_elevation_deg < 90:
            raise ChannelDomainError("max_elevation_deg must lie in (0, 90)")

    @classmethod
    def from_config(cls, section, gain_threshold):
        return cls(
            a=float(section["a"]),
            b=float(section["b"]),
            eta_los=float(section["eta_los_db"]),
            eta_nlos=float(section["eta_nlos_db"]),
            wavelength=float(section["wavelength_m"]),
            light_speed=float(section["light_speed"]),
            coverage_radius=float(section["coverage_radius_m"]),
            gain_threshold=float(gain_threshold),
            max_elevation_deg=float(section["max_elevation_deg"]),
        )


@dataclass(frozen=True)
class LinkQuality:
    elevation_deg: float
    los_prob: float
    path_loss_db: float
    gain_db: float


def elevation_angle(uav_altitude, uav_xy, sensor_xy):
    """
    Elevation angle of a ground sensor seen from the UAV

    Args:
        uav_altitude: UAV height h in meters (> 0)
        uav_xy: UAV horizontal position (x, y)
        sensor_xy: Sensor position (x, y)

    Returns:
        arctan(h / d) in degrees, 90 when the UAV is straight overhead
    """
    if not uav_altitude > 0:
        raise ChannelDomainError(f"UAV altitude must be positive, got {uav_altitude}")
    d = math.hypot(uav_xy[0] - sensor_xy[0], uav_xy[1] - sensor_xy[1])
    if d == 0:
        return 90.0
    return math.degrees(math.atan2(uav_altitude, d))


def los_probability(elevation_deg, params):
    """Logistic LoS probability 1 / (1 + a·exp(−b·(φ − a)))."""
    if not 0 <= elevation_deg <= 90:
        raise ChannelDomainError(f"Elevation {elevation_deg} outside [0, 90] degrees")
    return 1.0 / (1.0 + params.a * math.exp(-params.b * (elevation_deg - params.a)))


def path_loss_db(elevation_deg, params):
    """
    Average path loss in dB

    Args:
        elevation_deg: Elevation angle in [0, 90)
        params: ChannelParams

    Returns:
        Path loss in dB (sec φ is singular at 90 degrees, rejected)
    """
    if not 0 <= elevation_deg < 90:
        raise ChannelDomainError(f"Path loss needs elevation in [0, 90), got {elevation_deg}")
    p_los = los_probability(elevation_deg, params)
    sec_phi = 1.0 / math.cos(math.radians(elevation_deg))
    return (
        p_los * (params.eta_los - params.eta_nlos)
        + 20.0 * math.log10(params.coverage_radius * sec_phi)
        + 20.0 * math.log10(params.wavelength)
        + 20.0 * math.log10(4.0 * math.pi / params.light_speed)
        + params.eta_nlos
    )


def link_from_elevation(elevation_deg, params):
    p_los = los_probability(elevation_deg, params)
    loss = path_loss_db(elevation_deg, params)
    return LinkQuality(
        elevation_deg=elevation_deg,
        los_prob=p_los,
        path_loss_db=loss,
        gain_db=-loss,
    )


def link_quality(uav, sensor, params):
    """Full link description between a UAV and a ground sensor (pure)."""
    phi = elevation_angle(uav.altitude, uav.xy, sensor.position)
    return link_from_elevation(phi, params)


def gain_grid_db(params, altitude, distances):
    """Vectorised gain for an array of horizontal distances, elevation capped."""
    d = np.asarray(distances, dtype=float)
    phi = np.degrees(np.arctan2(altitude, d))
    phi = np.minimum(phi, params.max_elevation_deg)
    p_los = 1.0 / (1.0 + params.a * np.exp(-params.b * (phi - params.a)))
    loss = (
        p_los * (params.eta_los - params.eta_nlos)
        + 20.0 * np.log10(params.coverage_radius / np.cos(np.radians(phi)))
        + 20.0 * math.log10(params.wavelength)
        + 20.0 * math.log10(4.0 * math.pi / params.light_speed)
        + params.eta_nlos
    )
    return -loss


def calibrate_gain_threshold(params, altitude, area, grid=21):
    """
    Median channel gain over the deployment area

    UAV and sensor positions both sweep a `grid` x `grid` lattice of the
    square area; the threshold is the median gain over all pairs.
    """
    if grid < 2:
        raise ChannelDomainError("Calibration grid needs at least 2 points per side")
    ticks = np.linspace(0.0, area, grid)
    xs, ys = np.meshgrid(ticks, ticks)
    points = np.column_stack([xs.ravel(), ys.ravel()])
    diff = points[:, None, :] - points[None, :, :]
    distances = np.hypot(diff[..., 0], diff[..., 1])
    threshold = float(np.median(gain_grid_db(params, altitude, distances)))
    logger.info("📡 Calibrated gain threshold: %.3f dB (altitude %.1f m, area %.1f m)", threshold, altitude, area)
    return threshold
