"""Command line interface.

Subcommands: simulate, compare, optimize, sniff, render, report.
Exit codes: 0 success, 2 configuration error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import fileio, plots
from .camera import RadiometricScene, render_frame
from .classifier import draw_sign_texture, save_model
from .errors import ConfigError
from .geometry import project_sign
from .optimize import (UNTARGETED, attack_success_rate, make_objective_spec,
                       optimize_pgd, sweep_q)
from .scenario import (MODES, compare_modes, distance_profile, run_scenario)
from .sniffer import detect_spikes, estimate_frame_rate
from .timing import round_half_up, scale_signal, effective_waveform


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stripeforge",
                                description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run one drive-by scenario")
    sim.add_argument("--config", required=True)
    sim.add_argument("--out", required=True, help="run CSV path")
    sim.add_argument("--mode", choices=MODES, help="override config mode")
    sim.add_argument("--frames-dir", help="write per-frame crop PPMs here")
    sim.add_argument("--profile-out", help="also write a distance-profile CSV")

    cmp_ = sub.add_parser("compare", help="compare attack modes over trials")
    cmp_.add_argument("--config", required=True)
    cmp_.add_argument("--modes", default="gs1,gs2,primitive")
    cmp_.add_argument("--trials", type=int, default=10)
    cmp_.add_argument("--out", default="comparison.csv")

    opt = sub.add_parser("optimize", help="train the minimum attack signal f0")
    opt.add_argument("--config", required=True)
    opt.add_argument("--mode", choices=("gs1", "gs2"), required=True)
    opt.add_argument("--attack", choices=("whitebox", "blackbox"),
                     default="whitebox")
    opt.add_argument("--target", type=int, help="target class (gs2)")
    opt.add_argument("--out", required=True, help="signal JSON path")
    opt.add_argument("--steps", type=int, default=250)
    opt.add_argument("--budget", type=int, default=3000)
    opt.add_argument("--seed", type=int, default=0)
    opt.add_argument("--save-model", help="also serialize the surrogate")

    snf = sub.add_parser("sniff", help="detect framing moments in a trace")
    snf.add_argument("--in", dest="trace", required=True)
    snf.add_argument("--fps-hint", type=float)
    snf.add_argument("--threshold-factor", type=float, default=4.0)
    snf.add_argument("--out", help="write detected spike times as CSV")

    ren = sub.add_parser("render", help="render one attacked frame to PPM")
    ren.add_argument("--config", required=True)
    ren.add_argument("--out", required=True, help="output PPM path")
    ren.add_argument("--frame", type=int, default=0)
    ren.add_argument("--mode", choices=MODES)
    ren.add_argument("--scene-out", help="also save the scene triplet (prefix)")

    rep = sub.add_parser("report", help="render figures from CSV outputs")
    rep.add_argument("--run", help="run CSV from `simulate`")
    rep.add_argument("--compare", dest="comparison",
                     help="comparison CSV from `compare`")
    rep.add_argument("--out-dir", default="report")
    return p


def _cmd_simulate(args) -> int:
    doc = cfgmod.load_config(args.config)
    cfg = cfgmod.scenario_from_config(doc, mode=args.mode)
    model = cfgmod.model_from_config(doc)
    on_frame = None
    if args.frames_dir:
        frames_dir = Path(args.frames_dir)
        frames_dir.mkdir(parents=True, exist_ok=True)

        def on_frame(index: int, frame) -> None:
            fileio.write_ppm(frames_dir / f"frame_{index:05d}.ppm", frame.pixels)

    run = run_scenario(cfg, model, on_frame=on_frame)
    fileio.save_run_csv(run, args.out)
    if args.profile_out:
        fileio.save_distance_profile_csv(distance_profile(run), args.profile_out)
    s = run.summary()
    print(f"frames={s['frames']} excluded={s['excluded']} mr={s['mr']:.3f} "
          f"pmcr={s['pmcr']:.3f} mean_entropy={s['mean_entropy']:.3f} "
          f"primary={s['primary_class']}")
    print(f"wrote {args.out}")
    return 0


def _cmd_compare(args) -> int:
    doc = cfgmod.load_config(args.config)
    cfg = cfgmod.scenario_from_config(doc)
    model = cfgmod.model_from_config(doc)
    signals = cfgmod.signals_from_config(doc)
    modes = [m.strip() for m in args.modes.split(",") if m.strip()]
    result = compare_modes(cfg, modes, args.trials, model, signals)
    fileio.save_comparison_csv(result, args.out)
    for mode, s in result.summary.items():
        print(f"{mode:10s} mean_mr={s['mean_mr']:.3f} "
              f"mean_pmcr={s['mean_pmcr']:.3f} "
              f"mean_entropy={s['mean_entropy']:.3f}")
    print(f"wrote {args.out}")
    return 0


def _cmd_optimize(args) -> int:
    doc = cfgmod.load_config(args.config)
    cfg = cfgmod.scenario_from_config(doc)
    model = cfgmod.model_from_config(doc)
    atk = cfg.attack
    target = args.target if args.target is not None else \
        (atk.target if atk.target is not None else UNTARGETED)
    if args.mode == "gs2" and target == UNTARGETED:
        raise ConfigError("gs2 optimization requires --target")
    if args.mode == "gs1":
        target = UNTARGETED

    texture = draw_sign_texture(atk.gt_class, atk.n_sign0)
    crop = RadiometricScene.from_params(
        texture, cfg.scene.alpha * cfg.scene.ambient_scale, cfg.scene.beta,
        cfg.scene.rho_texp)
    spec = make_objective_spec(crop, cfg.cam, atk.n_sign0, args.mode,
                               gt_class=atk.gt_class, target_k=target)

    meta = {"seed": args.seed, "mode": args.mode, "attack": args.attack,
            "gt_class": atk.gt_class,
            "target": None if target == UNTARGETED else target}
    if args.attack == "whitebox":
        result = optimize_pgd(spec, model, steps=args.steps, seed=args.seed)
        signal, meta["achieved_loss"] = result.signal, result.best_loss
        meta["q"] = None
    else:
        sweep = sweep_q(spec, model, budget=args.budget, seed=args.seed)
        signal = sweep.best_vector.to_signal(spec.t_att0)
        meta["achieved_loss"] = sweep.best_loss
        meta["q"] = sweep.best_q
    meta["success_rate"] = attack_success_rate(signal, spec, model)

    fileio.save_signal(signal, args.out, t_att0=spec.t_att0, metadata=meta)
    if args.save_model:
        save_model(model, args.save_model)
    print(f"achieved_loss={meta['achieved_loss']:.4f} "
          f"success_rate={meta['success_rate']:.3f} q={meta['q']}")
    print(f"wrote {args.out}")
    return 0


def _cmd_sniff(args) -> int:
    trace = fileio.load_trace(args.trace)
    rate = args.fps_hint if args.fps_hint else estimate_frame_rate(trace)
    spikes = detect_spikes(trace, threshold_factor=args.threshold_factor,
                           frame_rate_hint=rate)
    est = estimate_frame_rate(trace)
    print(f"frame_rate_hz={est:.3f} n_spikes={len(spikes)} "
          f"first_spike_s={spikes[0]:.6f}")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write("t_s\n")
            for t in spikes:
                fh.write(f"{t:.9f}\n")
        print(f"wrote {args.out}")
    return 0


def _cmd_render(args) -> int:
    doc = cfgmod.load_config(args.config)
    cfg = cfgmod.scenario_from_config(doc, mode=args.mode)
    from .geometry import TrajectoryState
    from .scenario import _plan_for, _trajectory
    from .timing import ReplayScheduler

    cam = cfg.cam_actual or cfg.cam
    y_t = cfg.sign.y_sign - cfg.tracker.y_cam
    states = _trajectory(cfg, cam, y_t)
    k = max(0, min(args.frame, len(states) - 1))
    st = states[k]
    n_up, n_sign = project_sign(cam, cfg.sign, st)
    top0 = round_half_up(n_up) - 1
    rows = round_half_up(n_sign)

    plan = _plan_for(cfg)
    scheduler = ReplayScheduler(cfg.cam, plan,
                                latency_frames=cfg.attack.latency_frames)
    scheduler.observe(n_up, n_sign)
    schedule = scheduler.schedule_for(k)

    if cfg.signal is not None:
        f = scale_signal(cfg.signal, cfg.signal.duration,
                         max(schedule.t_att, cfg.signal.duration))
    else:
        rng = np.random.default_rng(cfg.seed)
        from .optimize import StripeVector
        f = StripeVector(rng.uniform(0, 1, (3, cfg.attack.random_q))) \
            .to_signal(schedule.t_att)
    waveform = effective_waveform(schedule, plan, f, k, cfg.cam,
                                  delta=schedule.delta)

    texture = np.full((cam.n_lines, cam.n_cols, 3), 0.35)
    sign_tex = draw_sign_texture(cfg.attack.gt_class, rows)
    col0 = (cam.n_cols - rows) // 2
    texture[top0:top0 + rows, col0:col0 + rows] = sign_tex
    scene = RadiometricScene.from_params(
        texture, cfg.scene.alpha * cfg.scene.ambient_scale, cfg.scene.beta,
        cfg.scene.rho_texp)
    frame = render_frame(scene, cam, waveform)
    fileio.write_ppm(args.out, frame.pixels)
    if args.scene_out:
        fileio.save_scene_ppm(scene, args.scene_out)
    print(f"frame {k}: z={st.z_t:.2f} m sign rows [{top0}, {top0 + rows}) "
          f"delta_us={schedule.delta * 1e6:.1f}")
    print(f"wrote {args.out}")
    return 0


def _cmd_report(args) -> int:
    if not args.run and not args.comparison:
        raise ConfigError("report needs --run and/or --compare input")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    if args.run:
        cols = fileio.load_run_csv(args.run)
        written.append(plots.plot_run_timeline(cols, out_dir / "timeline.png"))
        written.append(plots.plot_stripe_profile(cols, out_dir / "sign_span.png"))
        # per-distance metrics table alongside the figures
        metrics_csv = out_dir / "metrics.csv"
        mr = float(np.mean(cols["pred"] != cols["gt"]))
        with open(metrics_csv, "w", encoding="utf-8") as fh:
            fh.write("frames,mr\n")
            fh.write(f"{len(cols['frame'])},{mr:.6f}\n")
        written.append(metrics_csv)
    if args.comparison:
        summary = _summary_from_comparison_csv(args.comparison)
        written.append(plots.plot_mode_comparison(summary,
                                                  out_dir / "mode_comparison.png"))
    for path in written:
        print(f"wrote {path}")
    return 0


def _summary_from_comparison_csv(path) -> dict[str, dict]:
    rows: dict[str, list[dict]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        for line in fh:
            vals = dict(zip(header, line.strip().split(",")))
            rows.setdefault(vals["mode"], []).append(vals)
    return {
        mode: {
            "mean_mr": float(np.mean([float(v["mr"]) for v in vs])),
            "mean_pmcr": float(np.mean([float(v["pmcr"]) for v in vs])),
            "mean_entropy": float(np.mean([float(v["mean_entropy"]) for v in vs])),
        }
        for mode, vs in rows.items()
    }


_COMMANDS = {
    "simulate": _cmd_simulate,
    "compare": _cmd_compare,
    "optimize": _cmd_optimize,
    "sniff": _cmd_sniff,
    "render": _cmd_render,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
