"""Attack timing: per-frame windows, replay offsets, signal scaling.

Each frame period splits into three windows steering the stripes onto the
sign's scanline span (N_up 1-based, N_sign scanlines):

    t_delay = (N_up - 1) * t_ro
    t_att   = N_sign * t_ro + t_exp
    t_calib = t_frame - t_delay - t_att

Replay modes:
  * primitive       back-to-back replay; the onset offset accumulates
                    delta_t = t_frame - t_cap per frame and wraps into
                    [-t_frame/2, t_frame/2]
  * freq_calibrated calibration padding freezes the offset at delta0
  * phase_synced    the sniffer aligns onset with the framing moment;
                    residual offset is seeded Normal(0, jitter_sd)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .camera import CameraConfig, FlickerSignal
from .errors import ConfigError, DomainError, WindowOverflowError

_SUM_TOL = 1e-12

PRIMITIVE = "primitive"
FREQ_CALIBRATED = "freq_calibrated"
PHASE_SYNCED = "phase_synced"


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class TimingSchedule:
    """Window lengths for one frame; delta is filled in by the scheduler."""

    t_delay: float
    t_att: float
    t_calib: float
    delta: float
    frame_index: int
    n_up: int = 0      # rounded 1-based top scanline the windows target
    n_sign: int = 0

    def __post_init__(self) -> None:
        t_frame = self.t_delay + self.t_att + self.t_calib
        if self.t_delay < 0 or self.t_att < 0 or self.t_calib < -_SUM_TOL:
            raise ConfigError("window lengths must be non-negative")
        if t_frame <= 0:
            raise ConfigError("windows must sum to a positive frame period")


@dataclass(frozen=True)
class ReplayPlan:
    """How the LED controller replays the attack signal across frames."""

    mode: str = FREQ_CALIBRATED
    delta0: float = 0.0
    jitter_sd: float = 0.0
    fill_windows: bool = True
    seed: int = 0

    def __post_init__(self) -> None:
        if self.mode not in (PRIMITIVE, FREQ_CALIBRATED, PHASE_SYNCED):
            raise ConfigError(f"unknown replay mode {self.mode!r}")
        if self.jitter_sd < 0:
            raise ConfigError("jitter_sd must be non-negative")


def compute_windows(n_up: float, n_sign: float, cam: CameraConfig,
                    frame_index: int = 0) -> TimingSchedule:
    """Window lengths for a sign spanning scanlines [n_up, n_up + n_sign).

    Real-valued inputs are rounded half-up to integer scanlines here; the
    geometry layer stays exact.
    """
    n_up_i = round_half_up(n_up)
    n_sign_i = round_half_up(n_sign)
    if n_up_i < 1:
        raise DomainError(f"n_up must round to >= 1, got {n_up}")
    if n_sign_i < 1:
        raise DomainError(f"n_sign must round to >= 1, got {n_sign}")
    if n_up_i + n_sign_i > cam.n_lines:
        raise DomainError(
            f"sign span [{n_up_i}, {n_up_i + n_sign_i}) exceeds {cam.n_lines} lines"
        )
    t_delay = (n_up_i - 1) * cam.t_ro
    t_att = n_sign_i * cam.t_ro + cam.t_exp
    t_calib = cam.t_frame - t_delay - t_att
    if t_calib < -_SUM_TOL:
        raise WindowOverflowError(
            f"sign too large for the frame budget: t_delay + t_att = "
            f"{(t_delay + t_att) * 1e3:.3f} ms > t_frame {cam.t_frame * 1e3:.3f} ms"
        )
    return TimingSchedule(t_delay=t_delay, t_att=t_att, t_calib=max(t_calib, 0.0),
                          delta=0.0, frame_index=frame_index,
                          n_up=n_up_i, n_sign=n_sign_i)


def wrap_offset(delta: float, t_frame: float) -> float:
    """Wrap an offset into [-t_frame/2, t_frame/2)."""
    return (delta + 0.5 * t_frame) % t_frame - 0.5 * t_frame


def replay_offset(plan: ReplayPlan, cam: CameraConfig, frame_index: int) -> float:
    """Effective onset offset of frame ``frame_index``, seconds."""
    if plan.mode == PRIMITIVE:
        dt_drift = cam.t_frame - cam.t_cap
        return wrap_offset(plan.delta0 + frame_index * dt_drift, cam.t_frame)
    if plan.mode == FREQ_CALIBRATED:
        return plan.delta0
    if plan.jitter_sd == 0.0:
        return 0.0
    rng = np.random.default_rng(np.random.SeedSequence((plan.seed, frame_index)))
    return float(rng.normal(0.0, plan.jitter_sd))


def scale_signal(f0: FlickerSignal, t_att0: float, t_att: float) -> FlickerSignal:
    """Time-stretch f0 from duration t_att0 up to t_att.

    Stripe count and relative layout are preserved; scaling down is refused
    (the sign would be smaller than the minimum attackable size).  The
    output keeps (approximately) the source sample_dt, adjusted so that the
    duration is exactly t_att.
    """
    if t_att0 <= 0:
        raise DomainError("t_att0 must be positive")
    if t_att < t_att0 * (1.0 - 1e-12):
        raise DomainError(
            f"refusing to scale down: t_att {t_att * 1e3:.3f} ms < "
            f"t_att0 {t_att0 * 1e3:.3f} ms"
        )
    if abs(t_att - t_att0) < 1e-15:
        return f0
    factor = t_att / t_att0
    n_new = max(1, int(round(t_att / f0.sample_dt)))
    dt_new = t_att / n_new
    mid = (np.arange(n_new) + 0.5) * dt_new / factor
    src = np.clip((mid / (f0.duration / f0.num_samples)).astype(int),
                  0, f0.num_samples - 1)
    return FlickerSignal(f0.channels[:, src], dt_new, periodic=f0.periodic)


def _cum_eval(f: FlickerSignal, cums: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Cumulative integral of f at clamped times t in [0, duration]."""
    j = np.clip(np.floor(t / f.sample_dt).astype(int), 0, f.num_samples - 1)
    return cums[:, j] + (t - j * f.sample_dt)[None, :] * f.channels[:, j]


def _cum_eval_periodic(f: FlickerSignal, cums: np.ndarray, t: np.ndarray) -> np.ndarray:
    d = f.duration
    k = np.floor(t / d)
    r = np.clip(t - k * d, 0.0, d)
    return k[None, :] * cums[:, -1:] + _cum_eval(f, cums, r)


def effective_waveform(schedule: TimingSchedule, plan: ReplayPlan,
                       f: FlickerSignal, frame_index: int, cam: CameraConfig,
                       delta: float | None = None,
                       oversample: int = 4) -> FlickerSignal:
    """Assemble the frame-period waveform the LED actually emits.

    The replay plan places ``f`` in the attack window; the delay and
    calibration windows carry darkness, or — when fill_windows is set — the
    cyclic continuation of ``f`` so no frame-rate on-off flicker appears.
    The whole pattern is shifted by the frame's replay offset.

    The returned waveform is the exact box-average of that piecewise plan on
    a grid of ``oversample`` samples per source sample, periodic with period
    t_frame, ready for gain evaluation.
    """
    if f.duration > cam.t_frame + 1e-12:
        raise DomainError("attack signal longer than the frame period")
    if delta is None:
        delta = replay_offset(plan, cam, frame_index)
    t_frame = cam.t_frame
    t_delay = schedule.t_delay
    cums = f.cumulative()

    base_dt = min(f.sample_dt, cam.t_ro)   # resolve both stripe and row scale
    n_w = max(1, int(round(oversample * t_frame / base_dt)))
    dt_w = t_frame / n_w

    def plan_cum(x: np.ndarray) -> np.ndarray:
        # integral of the plan over [0, x] for x within one frame period
        if plan.fill_windows:
            return (_cum_eval_periodic(f, cums, x - t_delay)
                    - _cum_eval_periodic(f, cums, np.array([-t_delay])))
        return _cum_eval(f, cums, np.clip(x - t_delay, 0.0, f.duration))

    edges = np.arange(n_w + 1) * dt_w - delta
    k = np.floor(edges / t_frame)
    r = edges - k * t_frame
    p_total = plan_cum(np.array([t_frame]))
    cum_edges = k[None, :] * p_total + plan_cum(r)
    w = np.diff(cum_edges, axis=1) / dt_w
    return FlickerSignal(np.clip(w, 0.0, 1.0), dt_w, periodic=True)


@dataclass
class ReplayScheduler:
    """Frame-by-frame attack controller state.

    Tracker/sniffer reports take effect with a latency of ``latency_frames``
    frame boundaries: the schedule for frame k is computed from the estimate
    reported at frame max(0, k - latency_frames).
    """

    cam: CameraConfig
    plan: ReplayPlan
    latency_frames: int = 1

    def __post_init__(self) -> None:
        if self.latency_frames < 0:
            raise ConfigError("latency_frames must be non-negative")
        self._history: list[tuple[float, float]] = []

    def observe(self, n_up: float, n_sign: float) -> None:
        """Record the estimate reported during the current frame."""
        self._history.append((n_up, n_sign))

    def schedule_for(self, frame_index: int) -> TimingSchedule:
        if not self._history:
            raise DomainError("no tracker estimate observed yet")
        idx = max(0, min(frame_index, len(self._history) - 1) - self.latency_frames)
        n_up, n_sign = self._history[idx]
        sched = compute_windows(n_up, n_sign, self.cam, frame_index=frame_index)
        return replace(sched, delta=replay_offset(self.plan, self.cam, frame_index))
