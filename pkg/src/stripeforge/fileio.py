"""File formats: PPM scenes, RSEIMG binaries, signal JSON, traces, run CSV.

All 8-bit image payloads map bytes to intensities as b/255 on read and
round(x*255) on write.  CSV writers use fixed float formatting so identical
runs produce byte-identical files.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .camera import FlickerSignal, RadiometricScene
from .errors import ConfigError
from .sniffer import CurrentTrace

RSEIMG_MAGIC = b"RSEIMG1\x00"   # 16-byte header: magic, u32 rows, u32 cols


# ---------------------------------------------------------------------------
# PPM (P6, 8-bit)
# ---------------------------------------------------------------------------

def write_ppm(path, image: np.ndarray) -> None:
    img = np.asarray(image)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ConfigError("PPM image must have shape (rows, cols, 3)")
    data = np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P6\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def read_ppm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.readline().strip()
        if magic != b"P6":
            raise ConfigError(f"{path}: not a binary PPM (P6) file")
        fields: list[int] = []
        while len(fields) < 3:
            line = fh.readline()
            if not line:
                raise ConfigError(f"{path}: truncated PPM header")
            if line.startswith(b"#"):
                continue
            fields.extend(int(tok) for tok in line.split())
        cols, rows, maxval = fields
        if maxval != 255:
            raise ConfigError(f"{path}: only 8-bit PPM supported")
        data = np.frombuffer(fh.read(rows * cols * 3), dtype=np.uint8)
    if data.size != rows * cols * 3:
        raise ConfigError(f"{path}: truncated PPM payload")
    return data.reshape(rows, cols, 3).astype(np.float64) / 255.0


# ---------------------------------------------------------------------------
# Scene triplets
# ---------------------------------------------------------------------------

def save_scene_ppm(scene: RadiometricScene, prefix) -> None:
    """Three PPM files: <prefix>_amb.ppm, _full.ppm, _att.ppm."""
    prefix = Path(prefix)
    write_ppm(prefix.with_name(prefix.name + "_amb.ppm"), scene.i_amb)
    write_ppm(prefix.with_name(prefix.name + "_full.ppm"), scene.i_full)
    write_ppm(prefix.with_name(prefix.name + "_att.ppm"), scene.i_att)


def load_scene_ppm(prefix) -> RadiometricScene:
    """Load a scene triplet; i_att is recomputed as i_full - i_amb so the
    triplet invariant survives 8-bit quantization."""
    prefix = Path(prefix)
    amb = read_ppm(prefix.with_name(prefix.name + "_amb.ppm"))
    full = read_ppm(prefix.with_name(prefix.name + "_full.ppm"))
    return RadiometricScene(np.minimum(amb, full), full)


def save_scene_rseimg(scene: RadiometricScene, path) -> None:
    """One flat binary: 16-byte header then amb, full, att planes (u8)."""
    rows, cols, _ = scene.shape
    with open(path, "wb") as fh:
        fh.write(RSEIMG_MAGIC)
        fh.write(struct.pack("<II", rows, cols))
        for img in (scene.i_amb, scene.i_full, scene.i_att):
            fh.write(np.round(img * 255.0).astype(np.uint8).tobytes())


def load_scene_rseimg(path) -> RadiometricScene:
    with open(path, "rb") as fh:
        header = fh.read(16)
        if len(header) != 16 or header[:8] != RSEIMG_MAGIC:
            raise ConfigError(f"{path}: not an RSEIMG1 file")
        rows, cols = struct.unpack("<II", header[8:])
        plane = rows * cols * 3
        data = np.frombuffer(fh.read(3 * plane), dtype=np.uint8)
    if data.size != 3 * plane:
        raise ConfigError(f"{path}: truncated RSEIMG1 payload")
    imgs = data.reshape(3, rows, cols, 3).astype(np.float64) / 255.0
    return RadiometricScene(np.minimum(imgs[0], imgs[1]), imgs[1])


# ---------------------------------------------------------------------------
# Signal JSON
# ---------------------------------------------------------------------------

def save_signal(signal: FlickerSignal, path, t_att0: float | None = None,
                metadata: dict | None = None) -> None:
    doc = {
        "sample_dt_us": signal.sample_dt * 1e6,
        "t_att0_us": (t_att0 if t_att0 is not None else signal.duration) * 1e6,
        "channels": {
            "r": [float(v) for v in signal.channels[0]],
            "g": [float(v) for v in signal.channels[1]],
            "b": [float(v) for v in signal.channels[2]],
        },
        "metadata": metadata or {},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_signal(path) -> tuple[FlickerSignal, dict]:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    try:
        ch = np.array([doc["channels"][c] for c in ("r", "g", "b")],
                      dtype=np.float64)
        signal = FlickerSignal(ch, doc["sample_dt_us"] * 1e-6)
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"{path}: malformed signal file: {exc}") from exc
    return signal, doc.get("metadata", {})


# ---------------------------------------------------------------------------
# Current traces: CSV (t_s,amps) or raw f32 + JSON sidecar
# ---------------------------------------------------------------------------

def save_trace_csv(trace: CurrentTrace, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("t_s,amps\n")
        for t, v in zip(trace.times(), trace.samples):
            fh.write(f"{t:.9f},{v:.9f}\n")


def load_trace_csv(path) -> CurrentTrace:
    data = np.genfromtxt(path, delimiter=",", skip_header=1)
    if data.ndim != 2 or data.shape[1] != 2 or data.shape[0] < 8:
        raise ConfigError(f"{path}: expected CSV with header t_s,amps")
    dt = np.diff(data[:, 0])
    if dt.min() <= 0:
        raise ConfigError(f"{path}: time column must be strictly increasing")
    return CurrentTrace(data[:, 1], 1.0 / float(np.mean(dt)))


def save_trace_f32(trace: CurrentTrace, path) -> None:
    path = Path(path)
    path.write_bytes(trace.samples.astype("<f4").tobytes())
    sidecar = {"sample_rate_hz": trace.sample_rate}
    path.with_suffix(path.suffix + ".json").write_text(
        json.dumps(sidecar) + "\n", encoding="utf-8")


def load_trace_f32(path) -> CurrentTrace:
    path = Path(path)
    sidecar = path.with_suffix(path.suffix + ".json")
    if not sidecar.exists():
        raise ConfigError(f"{sidecar}: sidecar with sample_rate_hz required")
    meta = json.loads(sidecar.read_text(encoding="utf-8"))
    samples = np.frombuffer(path.read_bytes(), dtype="<f4").astype(np.float64)
    return CurrentTrace(samples, float(meta["sample_rate_hz"]))


def load_trace(path) -> CurrentTrace:
    """Dispatch on extension: .csv or raw .f32/.bin with sidecar."""
    if str(path).endswith(".csv"):
        return load_trace_csv(path)
    return load_trace_f32(path)


# ---------------------------------------------------------------------------
# Run / comparison CSV
# ---------------------------------------------------------------------------

RUN_CSV_HEADER = "frame,t_s,z_m,n_up,n_sign,delta_us,pred,gt,conf"


def save_run_csv(run, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(RUN_CSV_HEADER + "\n")
        for r in run.records:
            fh.write(f"{r.frame_index},{r.t:.6f},{r.z_t:.6f},{r.n_up},"
                     f"{r.n_sign},{r.delta * 1e6:.3f},{r.pred},{r.gt},"
                     f"{r.conf:.6f}\n")


def load_run_csv(path) -> dict[str, np.ndarray]:
    """Columns of a run CSV as arrays (for reports and plots)."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != RUN_CSV_HEADER:
            raise ConfigError(f"{path}: unexpected run CSV header {header!r}")
        raw = np.genfromtxt(fh, delimiter=",")
    if raw.size == 0:
        raise ConfigError(f"{path}: empty run CSV")
    raw = np.atleast_2d(raw)
    cols = RUN_CSV_HEADER.split(",")
    return {name: raw[:, i] for i, name in enumerate(cols)}


def save_comparison_csv(result, path) -> None:
    cols = ("mode", "trial", "seed", "frames", "excluded", "mr", "pmcr",
            "primary_class", "mean_entropy")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(cols) + "\n")
        for row in result.rows:
            primary = row["primary_class"]
            fh.write(f"{row['mode']},{row['trial']},{row['seed']},"
                     f"{row['frames']},{row['excluded']},{row['mr']:.6f},"
                     f"{row['pmcr']:.6f},"
                     f"{'' if primary is None else primary},"
                     f"{row['mean_entropy']:.6f}\n")


def save_distance_profile_csv(bins, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("z_lo_m,z_hi_m,frames,mr,pmcr\n")
        for b in bins:
            fh.write(f"{b.z_lo:.3f},{b.z_hi:.3f},{b.frames},"
                     f"{b.mr:.6f},{b.pmcr:.6f}\n")
