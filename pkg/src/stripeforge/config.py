"""JSON scenario configuration.

Example (all keys optional except where noted; units in key names):

    {
      "seed": 7,
      "camera": {"t_ro_us": 30, "t_exp_us": 500, "fps": 30, "cols": 1928,
                 "t_exp_actual_us": 500},
      "geometry": {"focal_mm": 12.0, "sensor_h_mm": 3.26, "lines": 1088,
                   "sign_h_m": 0.9, "sign_alt_m": 2.0, "cam_alt_m": 1.3,
                   "d1_m": 5.0, "d2_m": 1.5, "pitch_deg": 0.0,
                   "start_z_m": 32.0, "end_z_m": 10.0, "speed_kmh": 10.0},
      "tracker": {"range_noise_sd_m": 0.05},
      "scene": {"alpha": 0.25, "beta": 0.75, "rho_texp": 1.0,
                "ambient_scale": 1.0, "attenuation_p": 0.0},
      "attack": {"mode": "gs2", "gt_class": 2, "target": 5, "n_sign0": 100,
                 "jitter_us": 60, "latency_frames": 1, "delta0_us": null,
                 "still_design_z_m": 20.0, "random_q": 8},
      "signal": {"file": "signal.json"},
      "signals": {"gs1": "gs1.json", "gs2": "gs2.json"},
      "classifier": {"seed": 11, "model_file": null, "hidden": [64],
                     "epochs": 150, "samples_per_class": 120}
    }

"signal" feeds `simulate`; "signals" (per mode) feeds `compare`.
"""

from __future__ import annotations

import json
from pathlib import Path

from .camera import CameraConfig, FlickerSignal
from .classifier import (SignDatasetSpec, SurrogateModel, TrainConfig,
                         generate_dataset, load_model, train)
from .errors import ConfigError
from .fileio import load_signal
from .geometry import SignGeometry, TrackerConfig
from .scenario import AttackParams, SceneParams, ScenarioConfig


def _section(doc: dict, name: str) -> dict:
    sec = doc.get(name, {})
    if not isinstance(sec, dict):
        raise ConfigError(f"config section {name!r} must be an object")
    return sec


def load_config(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc


def camera_from_config(doc: dict, actual: bool = False) -> CameraConfig:
    cam = _section(doc, "camera")
    geo = _section(doc, "geometry")
    t_exp_us = cam.get("t_exp_us", 500.0)
    if actual:
        t_exp_us = cam.get("t_exp_actual_us", t_exp_us)
    return CameraConfig(
        t_ro=cam.get("t_ro_us", 30.0) * 1e-6,
        t_exp=t_exp_us * 1e-6,
        n_lines=int(geo.get("lines", 1088)),
        n_cols=int(cam.get("cols", 1928)),
        frame_rate=cam.get("fps", 30.0),
        z_f=geo.get("focal_mm", 12.0) * 1e-3,
        h_s=geo.get("sensor_h_mm", 3.26) * 1e-3,
        pitch_deg=geo.get("pitch_deg", 0.0),
    )


def scenario_from_config(doc: dict, signal: FlickerSignal | None = None,
                         mode: str | None = None) -> ScenarioConfig:
    geo = _section(doc, "geometry")
    trk = _section(doc, "tracker")
    scn = _section(doc, "scene")
    atk = _section(doc, "attack")

    cam = camera_from_config(doc)
    cam_actual = camera_from_config(doc, actual=True)
    if cam_actual == cam:
        cam_actual = None

    sign = SignGeometry(h_sign=geo.get("sign_h_m", 0.9),
                        y_sign=geo.get("sign_alt_m", 2.0))
    tracker = TrackerConfig(d1=geo.get("d1_m", 5.0), d2=geo.get("d2_m", 1.5),
                            y_cam=geo.get("cam_alt_m", 1.3),
                            range_noise_sd=trk.get("range_noise_sd_m", 0.05))
    scene = SceneParams(alpha=scn.get("alpha", 0.25),
                        beta=scn.get("beta", 0.75),
                        rho_texp=scn.get("rho_texp", 1.0),
                        ambient_scale=scn.get("ambient_scale", 1.0),
                        attenuation_p=scn.get("attenuation_p", 0.0))
    delta0_us = atk.get("delta0_us")
    attack = AttackParams(
        mode=mode or atk.get("mode", "gs2"),
        gt_class=int(atk.get("gt_class", 2)),
        target=(None if atk.get("target") is None else int(atk["target"])),
        n_sign0=int(atk.get("n_sign0", 100)),
        jitter_sd=atk.get("jitter_us", 60.0) * 1e-6,
        latency_frames=int(atk.get("latency_frames", 1)),
        delta0=(None if delta0_us is None else delta0_us * 1e-6),
        still_design_z=atk.get("still_design_z_m"),
        random_q=int(atk.get("random_q", 8)),
    )
    if signal is None:
        sig_sec = _section(doc, "signal")
        if sig_sec.get("file"):
            signal, _ = load_signal(sig_sec["file"])
    return ScenarioConfig(
        cam=cam, sign=sign, tracker=tracker,
        start_z=geo.get("start_z_m", 32.0), end_z=geo.get("end_z_m", 10.0),
        speed=geo.get("speed_kmh", 10.0) / 3.6,
        static_frames=doc.get("static_frames"),
        scene=scene, attack=attack, signal=signal, cam_actual=cam_actual,
        seed=int(doc.get("seed", 0)),
    )


def signals_from_config(doc: dict) -> dict[str, FlickerSignal]:
    out: dict[str, FlickerSignal] = {}
    for mode, path in _section(doc, "signals").items():
        out[mode], _ = load_signal(path)
    sig_sec = _section(doc, "signal")
    if sig_sec.get("file") and not out:
        sig, meta = load_signal(sig_sec["file"])
        out[meta.get("mode", "gs1")] = sig
    return out


def model_from_config(doc: dict) -> SurrogateModel:
    """Load a serialized surrogate, or train one deterministically."""
    sec = _section(doc, "classifier")
    if sec.get("model_file"):
        path = Path(sec["model_file"])
        if not path.exists():
            raise ConfigError(f"model file not found: {path}")
        return load_model(path)
    seed = int(sec.get("seed", 11))
    spec = SignDatasetSpec(samples_per_class=int(sec.get("samples_per_class", 120)),
                           seed=seed)
    cfg = TrainConfig(hidden=tuple(sec.get("hidden", [64])),
                      epochs=int(sec.get("epochs", 150)))
    return train(generate_dataset(spec), cfg, seed=seed)
