"""Framing-moment side channel: trace synthesis, spike detection, calibration.

A current transducer on the camera's power wire sees one spike per frame
period.  This module synthesizes such traces (triangular spikes on Gaussian
baseline noise), detects the spikes by thresholding, estimates the frame
rate from the highest non-DC peak of a Welch periodogram, and calibrates the
set-delay-to-scanline mapping that phase synchronization relies on.

The real wireless trigger link is abstracted away; its timing error shows up
as the replay plan's jitter in the timing module.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import welch

from .camera import CameraConfig, FlickerSignal, signal_gains
from .errors import (CalibrationError, ConfigError, DomainError,
                     EstimationError, NoSpikesError)

SPIKE_WIDTH_FRACTION = 0.02   # triangular spike width as fraction of t_frame
HUMP_WIDTH_FRACTION = 0.5     # broad per-frame current hump (exposure load)
HUMP_AMP_FRACTION = 0.15      # hump amplitude relative to the spike
_PEAK_OVER_MEDIAN = 50.0      # spectral peak must dominate the floor


@dataclass(frozen=True)
class CurrentTrace:
    """Sampled transducer signal, arbitrary units."""

    samples: np.ndarray
    sample_rate: float
    true_moments: np.ndarray | None = None   # synthetic traces only
    frame_rate_true: float | None = None

    def __post_init__(self) -> None:
        s = np.asarray(self.samples, dtype=np.float64)
        if s.ndim != 1 or s.size < 8:
            raise ConfigError("trace must be a 1-D array with >= 8 samples")
        if self.sample_rate <= 0:
            raise ConfigError("sample_rate must be positive")
        if (self.frame_rate_true is not None
                and self.sample_rate <= 2 * self.frame_rate_true * 10):
            raise ConfigError(
                "sample_rate too low to resolve the spike shape: need "
                "> 20x the frame rate"
            )
        object.__setattr__(self, "samples", s)

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    def times(self) -> np.ndarray:
        return np.arange(self.samples.size) / self.sample_rate


def synthesize_trace(cam: CameraConfig, duration: float, spike_amp: float = 1.0,
                     noise_sd: float = 0.05, spike_jitter_sd: float = 0.0,
                     seed: int = 0, sample_rate: float = 20000.0) -> CurrentTrace:
    """Synthetic trace: one current spike per frame period plus noise.

    Each frame contributes a sharp triangular spike at the framing moment
    (readout burst; this is what the detector localizes) riding on a broad
    low hump spanning the exposure-active part of the period, which packs
    the spectral power into the fundamental.  Ground-truth framing moments
    (un-jittered) are recorded for tests.
    """
    if duration < 3 * cam.t_frame:
        raise DomainError("trace duration must cover at least 3 frame periods")
    rng = np.random.default_rng(seed)
    n = int(round(duration * sample_rate))
    t = np.arange(n) / sample_rate
    x = rng.normal(0.0, noise_sd, size=n) if noise_sd > 0 else np.zeros(n)

    half = 0.5 * SPIKE_WIDTH_FRACTION * cam.t_frame
    hump_half = 0.5 * HUMP_WIDTH_FRACTION * cam.t_frame
    hump_amp = HUMP_AMP_FRACTION * spike_amp
    first = 0.6 * cam.t_frame
    moments = np.arange(first, duration, cam.t_frame)
    centers = moments + (rng.normal(0.0, spike_jitter_sd, size=moments.size)
                         if spike_jitter_sd > 0 else 0.0)
    for tc in centers:
        i0 = max(0, int(np.floor((tc - half) * sample_rate)))
        i1 = min(n, int(np.ceil((tc + half) * sample_rate)) + 1)
        seg = t[i0:i1]
        x[i0:i1] += spike_amp * np.clip(1.0 - np.abs(seg - tc) / half, 0.0, None)
        # raised-cosine hump centered a quarter period after the moment
        hc = tc + 0.25 * cam.t_frame
        j0 = max(0, int(np.floor((hc - hump_half) * sample_rate)))
        j1 = min(n, int(np.ceil((hc + hump_half) * sample_rate)) + 1)
        seg = t[j0:j1]
        inside = np.abs(seg - hc) < hump_half
        x[j0:j1] += hump_amp * 0.5 * (1.0 + np.cos(
            np.pi * (seg - hc) / hump_half)) * inside
    return CurrentTrace(x, sample_rate, true_moments=moments,
                        frame_rate_true=cam.frame_rate)


def detect_spikes(trace: CurrentTrace, threshold_factor: float = 4.0,
                  frame_rate_hint: float | None = None) -> np.ndarray:
    """Framing-moment estimates (seconds), ascending, one per detected spike.

    Threshold is mean + threshold_factor * sigma of the trace.  Candidate
    peaks closer than half a frame period keep only the taller one
    (refractory window); peak positions come from a lightly smoothed copy so
    sample noise does not shift the argmax.
    """
    if threshold_factor <= 1.0:
        raise DomainError("threshold_factor must exceed 1")
    rate = frame_rate_hint if frame_rate_hint else estimate_frame_rate(trace)
    t_frame = 1.0 / rate
    fs = trace.sample_rate
    x = trace.samples

    win = max(1, int(round(0.25 * SPIKE_WIDTH_FRACTION * t_frame * fs)))
    smooth = np.convolve(x, np.ones(win) / win, mode="same") if win > 1 else x
    thr = x.mean() + threshold_factor * x.std()

    above = smooth > thr
    if not above.any():
        raise NoSpikesError(f"no samples above threshold {thr:.4g}")
    edges = np.flatnonzero(np.diff(above.astype(np.int8)) == 1) + 1
    if above[0]:
        edges = np.concatenate([[0], edges])
    falls = np.flatnonzero(np.diff(above.astype(np.int8)) == -1) + 1
    if above[-1]:
        falls = np.concatenate([falls, [above.size]])

    refractory = 0.5 * t_frame
    peaks: list[tuple[float, float]] = []   # (time, height)
    for lo, hi in zip(edges, falls):
        i = lo + int(np.argmax(smooth[lo:hi]))
        cand = (i / fs, smooth[i])
        if peaks and cand[0] - peaks[-1][0] < refractory:
            if cand[1] > peaks[-1][1]:
                peaks[-1] = cand
        else:
            peaks.append(cand)
    return np.array([p[0] for p in peaks])


def estimate_frame_rate(trace: CurrentTrace) -> float:
    """Frame rate from the highest non-DC peak of the averaged periodogram."""
    fs = trace.sample_rate
    nperseg = min(trace.samples.size, int(round(8.0 * fs)))
    freqs, psd = welch(trace.samples, fs=fs, nperseg=nperseg,
                       detrend="constant")
    nondc = freqs > 0
    freqs, psd = freqs[nondc], psd[nondc]
    floor = np.median(psd)
    i = int(np.argmax(psd))
    if floor <= 0 or psd[i] < _PEAK_OVER_MEDIAN * floor:
        raise EstimationError("spectrum has no dominant peak (flat spectrum)")
    return float(freqs[i])


# ---------------------------------------------------------------------------
# Set-delay calibration
# ---------------------------------------------------------------------------

@dataclass
class SimulatedCamera:
    """Dark-room calibration harness around the rolling-shutter renderer.

    ``spike_bias`` is the (constant) amount by which the detected current
    spike *leads* the true framing moment; firing the LED ``t_set`` after a
    detected spike therefore lights the sensor from ``t_set - spike_bias``
    in frame time.
    """

    cam: CameraConfig
    spike_bias: float = 0.0
    pulse_margin_lines: int = 4          # pulse length = t_exp + margin*t_ro
    raster_dt_fraction: float = 0.125    # pulse raster step, fraction of t_ro

    def observe_top_row(self, t_set: float) -> int:
        """Top fully-exposed scanline (0-based) lit by a pulse at t_set."""
        cam = self.cam
        pulse_len = cam.t_exp + self.pulse_margin_lines * cam.t_ro
        start = t_set - self.spike_bias
        dt = cam.t_ro * self.raster_dt_fraction
        n = int(np.ceil(cam.t_frame / dt))
        ch = np.zeros((3, n))
        j0 = max(0, int(np.floor(start / dt)))
        j1 = min(n, int(np.ceil((start + pulse_len) / dt)))
        if j1 <= j0:
            raise CalibrationError(f"pulse at t_set={t_set * 1e3:.3f} ms out of frame")
        ch[:, j0:j1] = 1.0
        pulse = FlickerSignal(ch, dt, periodic=False)
        rows = np.arange(cam.n_lines)
        g = signal_gains(pulse, rows * cam.t_ro, cam.t_exp)[0]
        full = 1.0 - 0.5 * cam.t_ro / cam.t_exp
        lit = np.flatnonzero(g >= full)
        if lit.size == 0:
            raise CalibrationError("no fully lit scanline found")
        return int(lit[0])


@dataclass(frozen=True)
class DelayMapping:
    """Affine fit n_up = a * (t_set / t_ro) + b over calibration pairs."""

    t_set: np.ndarray
    n_up_observed: np.ndarray
    a: float
    b: float
    t_ro: float
    max_residual: float

    def predict_n_up(self, t_set: float) -> float:
        return self.a * (t_set / self.t_ro) + self.b

    def t_set_for(self, n_up_desired: float) -> float:
        """Inverse map: set delay that should light row ``n_up_desired``."""
        return (n_up_desired - self.b) / self.a * self.t_ro


def calibrate_delay_mapping(sim: SimulatedCamera,
                            n_set_grid) -> DelayMapping:
    """Fire a pulse t_set = (n_set - 1)*t_ro per grid point, fit the map.

    Raises CalibrationError on non-monotone observations or a fit residual
    above 2 scanlines.
    """
    n_set = np.asarray(list(n_set_grid), dtype=np.float64)
    if n_set.size < 2:
        raise ConfigError("need at least two calibration points")
    t_ro = sim.cam.t_ro
    t_sets = (n_set - 1.0) * t_ro
    obs = np.array([sim.observe_top_row(ts) for ts in t_sets], dtype=np.float64)
    if np.any(np.diff(obs) <= 0):
        raise CalibrationError("observed rows are not monotone in t_set")
    a, b = np.polyfit(t_sets / t_ro, obs, deg=1)
    resid = float(np.max(np.abs(a * (t_sets / t_ro) + b - obs)))
    if resid > 2.0:
        raise CalibrationError(f"fit residual {resid:.2f} rows exceeds 2")
    return DelayMapping(t_set=t_sets, n_up_observed=obs, a=float(a), b=float(b),
                        t_ro=t_ro, max_residual=resid)
