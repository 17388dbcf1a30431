"""Rolling-shutter image formation.

A CMOS sensor exposes scanline v during ``[v*t_ro, v*t_ro + t_exp]``
(relative to the framing moment).  A flickering light source modulates the
captured image row-wise: the pixel value decomposes into an ambient part and
an attack part weighted by the per-row gain

    g(v) = (1/t_exp) * integral of f(t) over the row's exposure window,

where ``f`` is the relative LED emission intensity in [0, 1].  Signals are
piecewise-constant waveforms, so the gain integral has a closed form (the
overlap-weighted sum of the samples covered by the exposure window); no
quadrature is involved.

Rendering uses the algebraically equivalent form
``I = I_amb*(1-g) + I_full*g`` instead of ``I_amb + I_att*g`` so that the
endpoint gains g=0 and g=1 reproduce I_amb / I_full bit-exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, DomainError

_EPS = 1e-12


@dataclass(frozen=True)
class CameraConfig:
    """Shutter and optics parameters of the victim camera.

    Units: seconds, meters.  ``t_cap = n_lines*t_ro + t_exp`` must fit into
    one frame period; configurations that pipeline exposure across frame
    boundaries are rejected.
    """

    t_ro: float
    t_exp: float
    n_lines: int
    n_cols: int
    frame_rate: float
    z_f: float = 0.012
    h_s: float = 0.00326
    pitch_deg: float = 0.0

    def __post_init__(self) -> None:
        if self.t_ro <= 0 or self.t_exp <= 0:
            raise ConfigError("t_ro and t_exp must be positive")
        if self.n_lines < 1 or self.n_cols < 1:
            raise ConfigError("n_lines and n_cols must be >= 1")
        if self.frame_rate <= 0:
            raise ConfigError("frame_rate must be positive")
        if self.t_cap > self.t_frame + _EPS:
            raise ConfigError(
                f"capture time {self.t_cap * 1e3:.3f} ms exceeds frame period "
                f"{self.t_frame * 1e3:.3f} ms; reduce t_exp, t_ro or n_lines"
            )

    @property
    def t_frame(self) -> float:
        return 1.0 / self.frame_rate

    @property
    def t_cap(self) -> float:
        return self.n_lines * self.t_ro + self.t_exp


@dataclass(frozen=True)
class FlickerSignal:
    """Per-channel LED emission waveform, piecewise constant at sample_dt.

    ``channels`` has shape (3, n) with values in [0, 1] (R, G, B).  A
    periodic signal repeats with period ``duration``; gain evaluation
    outside the domain of an aperiodic signal is a domain error.
    """

    channels: np.ndarray
    sample_dt: float
    periodic: bool = False

    def __post_init__(self) -> None:
        ch = np.asarray(self.channels, dtype=np.float64)
        if ch.ndim != 2 or ch.shape[0] != 3 or ch.shape[1] < 1:
            raise ConfigError(f"channels must have shape (3, n), got {ch.shape}")
        if self.sample_dt <= 0:
            raise ConfigError("sample_dt must be positive")
        if ch.min() < -1e-9 or ch.max() > 1.0 + 1e-9:
            raise ConfigError("signal samples must lie in [0, 1]")
        object.__setattr__(self, "channels", np.clip(ch, 0.0, 1.0))

    @property
    def num_samples(self) -> int:
        return self.channels.shape[1]

    @property
    def duration(self) -> float:
        return self.num_samples * self.sample_dt

    @classmethod
    def constant(cls, level, duration: float, sample_dt: float,
                 periodic: bool = False) -> "FlickerSignal":
        """Flat waveform; ``level`` is a scalar or an (R, G, B) triple."""
        n = max(1, int(round(duration / sample_dt)))
        lvl = np.broadcast_to(np.asarray(level, dtype=np.float64).reshape(-1, 1), (3, n))
        return cls(np.ascontiguousarray(lvl), duration / n, periodic=periodic)

    def as_periodic(self) -> "FlickerSignal":
        return self if self.periodic else replace(self, periodic=True)

    def cumulative(self) -> np.ndarray:
        """(3, n+1) running integral; entry j is the integral over [0, j*dt]."""
        out = np.zeros((3, self.num_samples + 1))
        np.cumsum(self.channels * self.sample_dt, axis=1, out=out[:, 1:])
        return out


def _windowed_overlaps(signal: FlickerSignal, starts: np.ndarray, t_exp: float):
    """Overlap (seconds) of each exposure window with the signal samples.

    Returns (jj, w): unwrapped sample indices (R, m) and the corresponding
    overlap lengths.  Rows with start time ``starts[i]`` integrate over
    ``[starts[i], starts[i] + t_exp]``.
    """
    dt = signal.sample_dt
    j0 = np.floor(starts / dt).astype(np.int64)
    m = int(np.ceil(t_exp / dt)) + 2
    jj = j0[:, None] + np.arange(m)[None, :]
    lo = np.maximum(jj * dt, starts[:, None])
    hi = np.minimum((jj + 1) * dt, (starts + t_exp)[:, None])
    w = np.clip(hi - lo, 0.0, None)
    return jj, w


def _resolve_columns(signal: FlickerSignal, jj: np.ndarray, w: np.ndarray) -> np.ndarray:
    n = signal.num_samples
    if signal.periodic:
        return np.mod(jj, n)
    bad = (w > 0) & ((jj < 0) | (jj >= n))
    if bad.any():
        raise DomainError(
            "exposure interval extends beyond the signal domain and the "
            "signal is not periodic"
        )
    return np.clip(jj, 0, n - 1)


def signal_gains(signal: FlickerSignal, starts: np.ndarray, t_exp: float) -> np.ndarray:
    """Per-channel exposure-averaged gains, shape (3, R).

    ``starts`` holds the exposure start times of the R rows.  The numerator
    and denominator are contracted with identical operations so that a
    constant signal of 1 yields gains of exactly 1.0.
    """
    starts = np.atleast_1d(np.asarray(starts, dtype=np.float64))
    jj, w = _windowed_overlaps(signal, starts, t_exp)
    cols = _resolve_columns(signal, jj, w)
    vals = signal.channels[:, cols]                      # (3, R, m)
    wb = w[None, :, :]
    num = (vals * wb).sum(axis=-1)
    den = (np.ones_like(vals) * wb).sum(axis=-1)
    return np.clip(num / den, 0.0, 1.0)


def exposure_weight_matrix(signal: FlickerSignal, starts: np.ndarray,
                           t_exp: float) -> np.ndarray:
    """Dense row-normalized weights W (R, n) with g[c] = channels[c] @ W.T.

    Used by the attack optimizer, where the gain must be an explicit linear
    map of the signal samples for gradient propagation.
    """
    starts = np.atleast_1d(np.asarray(starts, dtype=np.float64))
    jj, w = _windowed_overlaps(signal, starts, t_exp)
    cols = _resolve_columns(signal, jj, w)
    n = signal.num_samples
    W = np.zeros((starts.size, n))
    rows = np.broadcast_to(np.arange(starts.size)[:, None], jj.shape)
    np.add.at(W, (rows, cols), w)
    return W / W.sum(axis=1, keepdims=True)


@dataclass(frozen=True)
class RadiometricScene:
    """Ambient / fully-lit / attack image triplet, values in [0, 1].

    ``i_att = i_full - i_amb`` holds elementwise by construction.  When
    generated from parameters, ``i_amb = rho_texp*texture*alpha`` and
    ``i_full = rho_texp*texture*(alpha+beta)``, clamped to [0, 1].
    """

    i_amb: np.ndarray
    i_full: np.ndarray
    i_att: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        amb = np.asarray(self.i_amb, dtype=np.float64)
        full = np.asarray(self.i_full, dtype=np.float64)
        if amb.shape != full.shape or amb.ndim != 3 or amb.shape[2] != 3:
            raise ConfigError("scene images must share shape (rows, cols, 3)")
        for name, img in (("i_amb", amb), ("i_full", full)):
            if img.min() < -1e-9 or img.max() > 1.0 + 1e-9:
                raise ConfigError(f"{name} values must lie in [0, 1]")
        if (full - amb).min() < -1e-9:
            raise ConfigError("i_full must dominate i_amb elementwise")
        object.__setattr__(self, "i_amb", np.clip(amb, 0.0, 1.0))
        object.__setattr__(self, "i_full", np.clip(full, 0.0, 1.0))
        object.__setattr__(self, "i_att", self.i_full - self.i_amb)

    @property
    def shape(self) -> tuple:
        return self.i_amb.shape

    @classmethod
    def from_params(cls, texture: np.ndarray, alpha, beta,
                    rho_texp: float = 1.0) -> "RadiometricScene":
        """Generate the triplet from reflectance texture and light levels."""
        tex = np.asarray(texture, dtype=np.float64)
        if tex.ndim != 3 or tex.shape[2] != 3:
            raise ConfigError("texture must have shape (rows, cols, 3)")
        a = np.broadcast_to(np.asarray(alpha, dtype=np.float64).reshape(-1), (3,))
        b = np.broadcast_to(np.asarray(beta, dtype=np.float64).reshape(-1), (3,))
        amb = np.clip(rho_texp * tex * a, 0.0, 1.0)
        full = np.clip(rho_texp * tex * (a + b), 0.0, 1.0)
        return cls(amb, full)

    def crop(self, row0: int, rows: int, col0: int = 0,
             cols: int | None = None) -> "RadiometricScene":
        r, c, _ = self.shape
        cols = c - col0 if cols is None else cols
        if row0 < 0 or col0 < 0 or row0 + rows > r or col0 + cols > c:
            raise DomainError("crop exceeds scene bounds")
        sl = (slice(row0, row0 + rows), slice(col0, col0 + cols))
        return RadiometricScene(self.i_amb[sl], self.i_full[sl])

    def scaled_attack(self, factor: float) -> "RadiometricScene":
        """Scale the attack component by ``factor`` in [0, 1] (attenuation)."""
        if not 0.0 <= factor <= 1.0:
            raise DomainError("attack scale factor must lie in [0, 1]")
        return RadiometricScene(self.i_amb, self.i_amb + self.i_att * factor)


@dataclass(frozen=True)
class Frame:
    """Rendered frame; row 0 is the top scanline."""

    pixels: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "pixels",
                           np.clip(np.asarray(self.pixels, dtype=np.float64), 0.0, 1.0))


def scanline_gain(signal: FlickerSignal, cam: CameraConfig, v: float,
                  t_offset: float = 0.0) -> tuple:
    """Gain triple (g_R, g_G, g_B) of scanline v.

    Integrates the signal over ``[t_offset + v*t_ro, ... + t_exp]``.
    """
    if not 0 <= v < cam.n_lines:
        raise DomainError(f"scanline {v} outside [0, {cam.n_lines})")
    g = signal_gains(signal, np.array([t_offset + v * cam.t_ro]), cam.t_exp)
    return tuple(float(x) for x in g[:, 0])


def _compose(scene: RadiometricScene, g: np.ndarray) -> Frame:
    # g: (3, R); every pixel of a row shares the row's gain triple.
    gr = g.T[:, None, :]
    out = scene.i_amb * (1.0 - gr) + scene.i_full * gr
    return Frame(out)


def render_frame(scene: RadiometricScene, cam: CameraConfig,
                 signal: FlickerSignal, phi: float = 0.0) -> Frame:
    """Render a full frame: per pixel I = I_amb + I_att * g(v + phi).

    ``phi`` is a real-valued scanline offset; fractional values shift the
    gain evaluation time by ``phi * t_ro``.
    """
    r, c, _ = scene.shape
    if r != cam.n_lines or c != cam.n_cols:
        raise ConfigError(
            f"scene shape {(r, c)} does not match camera {(cam.n_lines, cam.n_cols)}"
        )
    starts = (np.arange(r) + phi) * cam.t_ro
    return _compose(scene, signal_gains(signal, starts, cam.t_exp))


def render_crop(scene_crop: RadiometricScene, cam: CameraConfig,
                signal: FlickerSignal, n_up: int, phi: float = 0.0) -> Frame:
    """Render a crop whose top row sits at absolute scanline ``n_up`` (0-based)."""
    rows = scene_crop.shape[0]
    if n_up < 0 or rows > cam.n_lines - n_up:
        raise DomainError(
            f"crop of {rows} rows at scanline {n_up} exceeds the "
            f"{cam.n_lines}-line frame"
        )
    starts = (n_up + np.arange(rows) + phi) * cam.t_ro
    return _compose(scene_crop, signal_gains(signal, starts, cam.t_exp))
