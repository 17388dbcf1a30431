"""CLI surface: subcommands, exit codes, emitted files."""

import json

import numpy as np
import pytest

import stripeforge as sf
from stripeforge import fileio
from stripeforge.cli import main

from conftest import GT_CLASS, MODEL_SEED, TARGET_CLASS


@pytest.fixture(scope="module")
def cli_config(tmp_path_factory):
    """Small but real config: short approach, quickly trained classifier."""
    root = tmp_path_factory.mktemp("cli")
    doc = {
        "seed": 5,
        "camera": {"t_ro_us": 30, "t_exp_us": 500, "fps": 30, "cols": 1928},
        "geometry": {"focal_mm": 12.0, "sensor_h_mm": 3.26, "lines": 1088,
                     "sign_h_m": 0.9, "sign_alt_m": 2.0, "cam_alt_m": 1.3,
                     "d1_m": 5.0, "d2_m": 1.5, "pitch_deg": 0.0,
                     "start_z_m": 14.0, "end_z_m": 12.0, "speed_kmh": 10.0},
        "tracker": {"range_noise_sd_m": 0.05},
        "scene": {"alpha": 0.25, "beta": 0.75},
        "attack": {"mode": "random", "gt_class": GT_CLASS,
                   "target": TARGET_CLASS, "n_sign0": 100, "jitter_us": 60},
        "classifier": {"seed": MODEL_SEED, "samples_per_class": 40,
                       "epochs": 60},
    }
    path = root / "scenario.json"
    path.write_text(json.dumps(doc, indent=1))
    return path


def test_simulate_writes_run_csv(cli_config, tmp_path, capsys):
    out = tmp_path / "run.csv"
    rc = main(["simulate", "--config", str(cli_config), "--out", str(out)])
    assert rc == 0
    cols = fileio.load_run_csv(out)
    assert len(cols["frame"]) > 10
    assert "wrote" in capsys.readouterr().out


def test_simulate_frames_dir(cli_config, tmp_path):
    out = tmp_path / "run.csv"
    frames = tmp_path / "frames"
    rc = main(["simulate", "--config", str(cli_config), "--out", str(out),
               "--frames-dir", str(frames)])
    assert rc == 0
    ppms = sorted(frames.glob("frame_*.ppm"))
    assert len(ppms) > 10
    img = fileio.read_ppm(ppms[0])
    assert img.ndim == 3 and img.shape[2] == 3


def test_missing_config_exits_2(tmp_path, capsys):
    rc = main(["simulate", "--config", str(tmp_path / "nope.json"),
               "--out", str(tmp_path / "x.csv")])
    assert rc == 2
    assert "configuration error" in capsys.readouterr().err


def test_invalid_mode_field_exits_2(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"attack": {"mode": "warp-drive"}}))
    rc = main(["simulate", "--config", str(bad),
               "--out", str(tmp_path / "x.csv")])
    assert rc == 2


def test_optimize_whitebox_writes_signal(cli_config, tmp_path, capsys):
    out = tmp_path / "signal.json"
    rc = main(["optimize", "--config", str(cli_config), "--mode", "gs2",
               "--attack", "whitebox", "--target", str(TARGET_CLASS),
               "--out", str(out), "--steps", "12"])
    assert rc == 0
    sig, meta = fileio.load_signal(out)
    assert sig.channels.min() >= 0.0 and sig.channels.max() <= 1.0
    assert meta["mode"] == "gs2" and meta["attack"] == "whitebox"
    assert "achieved_loss" in meta


def test_simulate_gs2_with_signal_file(cli_config, tmp_path):
    sig_path = tmp_path / "signal.json"
    rc = main(["optimize", "--config", str(cli_config), "--mode", "gs2",
               "--attack", "whitebox", "--target", str(TARGET_CLASS),
               "--out", str(sig_path), "--steps", "40"])
    assert rc == 0
    doc = json.loads(cli_config.read_text())
    doc["signal"] = {"file": str(sig_path)}
    cfg2 = tmp_path / "gs2.json"
    cfg2.write_text(json.dumps(doc))
    out = tmp_path / "gs2_run.csv"
    rc = main(["simulate", "--config", str(cfg2), "--mode", "gs2",
               "--out", str(out)])
    assert rc == 0
    cols = fileio.load_run_csv(out)
    assert len(cols["frame"]) > 10


def test_sniff_reports_rate_and_spikes(tmp_path, capsys):
    cam = sf.CameraConfig(t_ro=30e-6, t_exp=0.5e-3, n_lines=1088, n_cols=1928,
                          frame_rate=30)
    trace = sf.synthesize_trace(cam, 3.0, noise_sd=0.1, seed=0)
    trace_path = tmp_path / "trace.csv"
    fileio.save_trace_csv(trace, trace_path)
    spikes_out = tmp_path / "spikes.csv"
    rc = main(["sniff", "--in", str(trace_path), "--fps-hint", "30",
               "--out", str(spikes_out)])
    assert rc == 0
    out = capsys.readouterr().out
    assert "frame_rate_hz=30.000" in out
    assert spikes_out.read_text().startswith("t_s\n")


def test_render_writes_ppm(cli_config, tmp_path):
    out = tmp_path / "frame.ppm"
    rc = main(["render", "--config", str(cli_config), "--out", str(out),
               "--frame", "3"])
    assert rc == 0
    img = fileio.read_ppm(out)
    assert img.shape == (1088, 1928, 3)


def test_report_renders_figures(cli_config, tmp_path):
    run_csv = tmp_path / "run.csv"
    assert main(["simulate", "--config", str(cli_config),
                 "--out", str(run_csv)]) == 0
    out_dir = tmp_path / "figs"
    rc = main(["report", "--run", str(run_csv), "--out-dir", str(out_dir)])
    assert rc == 0
    assert (out_dir / "timeline.png").stat().st_size > 0
    assert (out_dir / "sign_span.png").stat().st_size > 0
    assert (out_dir / "metrics.csv").read_text().startswith("frames,mr")


def test_compare_random_only(cli_config, tmp_path):
    out = tmp_path / "cmp.csv"
    rc = main(["compare", "--config", str(cli_config), "--modes", "random",
               "--trials", "2", "--out", str(out)])
    assert rc == 0
    lines = out.read_text().splitlines()
    assert lines[0].startswith("mode,trial,seed")
    assert len(lines) == 3
