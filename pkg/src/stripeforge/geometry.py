"""Perspective geometry: sign position/size in scanlines, tracker, trajectory.

The pinhole model maps the sign (height H, center altitude difference Y_t,
horizontal distance Z_t) onto the sensor:

    n_sign = Z_f * (H / Z_t) * (R_s / h_s)
    n_up   = R_s/2 - (Y_t + H/2) * Z_f * R_s / (Z_t * h_s)

Camera pitch tilts the optical axis and is folded into an effective
Y_t' = Y_t - Z_t * tan(pitch); a road gradient can be folded into Y_t by the
caller the same way.  Both outputs are real-valued; rounding to integer
scanlines happens at the timing layer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .camera import CameraConfig
from .errors import ConfigError, DomainError, SignNotVisibleError


@dataclass(frozen=True)
class SignGeometry:
    h_sign: float   # vertical dimension of the sign plate, meters
    y_sign: float   # altitude of the sign center, meters

    def __post_init__(self) -> None:
        if self.h_sign <= 0:
            raise ConfigError("sign height must be positive")


@dataclass(frozen=True)
class TrackerConfig:
    """Roadside rangefinder geometry and noise."""

    d1: float                    # sign-to-tracker distance, meters
    d2: float                    # camera-to-vehicle-front distance, meters
    y_cam: float                 # camera altitude, meters
    range_noise_sd: float = 0.0  # rangefinder noise (1 sigma), meters

    def __post_init__(self) -> None:
        if self.d1 < 0 or self.d2 < 0 or self.range_noise_sd < 0:
            raise ConfigError("tracker distances and noise must be non-negative")


@dataclass(frozen=True)
class TrajectoryState:
    z_t: float      # sign-to-camera horizontal distance, meters
    y_t: float      # altitude difference sign minus camera, meters
    speed: float    # m/s
    t: float        # seconds since scenario start

    def __post_init__(self) -> None:
        if self.z_t <= 0:
            raise ConfigError("z_t must be positive")


def project_sign(cam: CameraConfig, sign: SignGeometry,
                 state: TrajectoryState) -> tuple[float, float]:
    """Sign projection (n_up, n_sign) in scanlines, real-valued.

    Raises SignNotVisibleError when the projected span does not fit fully
    inside [0, n_lines].
    """
    if state.z_t <= 0:
        raise DomainError("z_t must be positive")
    r_s = cam.n_lines
    scale = cam.z_f * r_s / (state.z_t * cam.h_s)
    y_eff = state.y_t - state.z_t * math.tan(math.radians(cam.pitch_deg))
    n_sign = sign.h_sign * scale
    n_up = 0.5 * r_s - (y_eff + 0.5 * sign.h_sign) * scale
    if n_up < 0.0 or n_up + n_sign > r_s:
        raise SignNotVisibleError(
            f"sign spans scanlines [{n_up:.1f}, {n_up + n_sign:.1f}] outside "
            f"[0, {r_s}] at z={state.z_t:.2f} m"
        )
    return n_up, n_sign


def tracker_estimate(cfg: TrackerConfig, sign: SignGeometry, d_est: float,
                     rng) -> tuple[float, float]:
    """Compose the tracker reading into camera-frame coordinates.

    z_t = d_est + noise + d1 + d2, y_t = y_sign - y_cam.  ``rng`` is a seed
    or a numpy Generator; noise is Normal(0, range_noise_sd).
    """
    if d_est < 0:
        raise DomainError("d_est must be non-negative")
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    noise = rng.normal(0.0, cfg.range_noise_sd) if cfg.range_noise_sd > 0 else 0.0
    return d_est + noise + cfg.d1 + cfg.d2, sign.y_sign - cfg.y_cam


def simulate_trajectory(start_z: float, end_z: float, speed: float,
                        cam: CameraConfig, y_t: float = 0.0) -> list[TrajectoryState]:
    """One state per frame period; z decreases by speed*t_frame per frame.

    The sequence covers [end_z, start_z]: the last state is the final frame
    whose distance is still >= end_z.
    """
    if not (start_z > end_z > 0):
        raise ConfigError("require start_z > end_z > 0")
    if speed <= 0:
        raise ConfigError("speed must be positive")
    dz = speed * cam.t_frame
    n_frames = int(math.floor((start_z - end_z) / dz + 1e-9)) + 1
    return [
        TrajectoryState(z_t=start_z - k * dz, y_t=y_t, speed=speed,
                        t=k * cam.t_frame)
        for k in range(n_frames)
    ]
