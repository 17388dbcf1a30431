"""End-to-end drive-by simulation and attack metrics.

Per frame: the roadside tracker estimates the vehicle distance, the
projection maps it to an estimated sign span, the scheduler derives the
attack windows (with one-frame report latency by default), the signal is
stretched to the estimated window, the LED waveform is assembled under the
selected replay mode, the camera renders the *true* sign crop under that
waveform, and the surrogate classifier labels it.

Attack modes:
  random     fresh random stripes every frame, drifting replay
  primitive  fixed offset-robust signal, back-to-back replay (offset drifts)
  gs1        frequency-calibrated replay, stationary stripes, random offset
  gs2        phase-synchronized replay, targeted stripes at designed rows
  gs2-still  gs2 with the schedule frozen for one design distance

Metrics: misclassification rate (MR), primary-misclassification-class rate
(PMCR), and Shannon entropy of the predictions inside 1.5 s windows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .camera import (CameraConfig, FlickerSignal, RadiometricScene,
                     render_crop)
from .classifier import SurrogateModel, classify_crop_proba, draw_sign_texture
from .errors import (ConfigError, DomainError, EmptyRunError,
                     SignNotVisibleError, WindowOverflowError)
from .geometry import (SignGeometry, TrackerConfig, TrajectoryState,
                       project_sign, simulate_trajectory, tracker_estimate)
from .optimize import StripeVector
from .timing import (FREQ_CALIBRATED, PHASE_SYNCED, PRIMITIVE, ReplayPlan,
                     ReplayScheduler, round_half_up, scale_signal,
                     effective_waveform)

MODES = ("random", "primitive", "gs1", "gs2", "gs2-still")

_PLAN_FOR_MODE = {
    "random": (PRIMITIVE, True),
    "primitive": (PRIMITIVE, True),
    "gs1": (FREQ_CALIBRATED, True),
    "gs2": (PHASE_SYNCED, False),
    "gs2-still": (PHASE_SYNCED, False),
}

# sign crops recur across frames and trials; scenes are immutable, safe to share
_SCENE_CACHE: dict[tuple, RadiometricScene] = {}


def _sign_scene(gt_class: int, rows: int, alpha: float, beta: float,
                rho_texp: float) -> RadiometricScene:
    key = (gt_class, rows, alpha, beta, rho_texp)
    scene = _SCENE_CACHE.get(key)
    if scene is None:
        texture = draw_sign_texture(gt_class, rows)
        scene = RadiometricScene.from_params(texture, alpha, beta, rho_texp)
        if len(_SCENE_CACHE) > 4096:
            _SCENE_CACHE.clear()
        _SCENE_CACHE[key] = scene
    return scene


@dataclass(frozen=True)
class SceneParams:
    """Radiometry of the sign crop under ambient and attack light.

    The defaults put most of the illumination budget on the LED; the attack
    needs the modulated light to dominate the ambient level (strong ambient
    light washes the stripes out, which is what the ambient_scale sweep
    reproduces).
    """

    alpha: float = 0.25          # ambient intensity (per channel)
    beta: float = 0.75           # LED max intensity
    rho_texp: float = 1.0        # combined gain-exposure scale
    ambient_scale: float = 1.0   # lighting-condition sweep knob
    attenuation_p: float = 0.0   # attack light ~ (z_ref/z)^p, 0 disables


@dataclass(frozen=True)
class AttackParams:
    mode: str = "random"
    gt_class: int = 2
    target: int | None = None        # required for gs2 / gs2-still
    n_sign0: int = 100               # minimum attackable sign size, scanlines
    jitter_sd: float = 60e-6         # phase-sync timing jitter, seconds
    latency_frames: int = 1
    delta0: float | None = None      # None: seeded uniform for gs1, else 0
    still_design_z: float | None = None
    random_q: int = 8                # stripes per channel in random mode

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.mode in ("gs2", "gs2-still") and self.target is None:
            raise ConfigError(f"mode {self.mode} requires a target class")
        if self.mode == "gs2-still" and self.still_design_z is None:
            raise ConfigError("gs2-still requires still_design_z")


@dataclass(frozen=True)
class ScenarioConfig:
    cam: CameraConfig
    sign: SignGeometry
    tracker: TrackerConfig
    start_z: float = 32.0
    end_z: float = 10.0
    speed: float = 10.0 / 3.6
    static_frames: int | None = None     # static vehicle at start_z
    scene: SceneParams = SceneParams()
    attack: AttackParams = AttackParams()
    signal: FlickerSignal | None = None
    cam_actual: CameraConfig | None = None   # exposure-mismatch experiments
    seed: int = 0


@dataclass(frozen=True)
class FrameRecord:
    frame_index: int
    t: float
    z_t: float
    n_up: int
    n_sign: int
    delta: float
    pred: int
    gt: int
    conf: float


@dataclass(frozen=True)
class ExcludedFrame:
    frame_index: int
    z_t: float
    reason: str   # "oversized" or "not-visible"


@dataclass
class AttackRun:
    records: list[FrameRecord]
    excluded: list[ExcludedFrame]
    mode: str
    gt_class: int
    target: int | None
    frame_rate: float
    start_z: float
    end_z: float
    n_classes: int = 8

    @property
    def n_frames_total(self) -> int:
        return len(self.records) + len(self.excluded)

    def summary(self, window_s: float = 1.5) -> dict:
        primary, rate = pmcr(self, self.target if self.target is not None else "auto")
        ent = windowed_entropy(self, window_s)
        return {
            "mode": self.mode,
            "frames": len(self.records),
            "excluded": len(self.excluded),
            "mr": misclassification_rate(self),
            "pmcr": rate,
            "primary_class": primary,
            "mean_entropy": float(np.mean(ent)) if len(ent) else 0.0,
        }


def _plan_for(cfg: ScenarioConfig) -> ReplayPlan:
    mode, fill = _PLAN_FOR_MODE[cfg.attack.mode]
    delta0 = cfg.attack.delta0
    if delta0 is None:
        if cfg.attack.mode == "gs1":
            rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 2)))
            t_frame = cfg.cam.t_frame
            delta0 = float(rng.uniform(-0.5 * t_frame, 0.5 * t_frame))
        else:
            delta0 = 0.0
    jitter = cfg.attack.jitter_sd if mode == PHASE_SYNCED else 0.0
    return ReplayPlan(mode=mode, delta0=delta0, jitter_sd=jitter,
                      fill_windows=fill, seed=cfg.seed)


def _trajectory(cfg: ScenarioConfig, cam: CameraConfig,
                y_t: float) -> list[TrajectoryState]:
    if cfg.static_frames is not None:
        return [TrajectoryState(z_t=cfg.start_z, y_t=y_t, speed=0.0,
                                t=k * cam.t_frame)
                for k in range(cfg.static_frames)]
    return simulate_trajectory(cfg.start_z, cfg.end_z, cfg.speed, cam, y_t=y_t)


def run_scenario(cfg: ScenarioConfig, model: SurrogateModel,
                 on_frame=None) -> AttackRun:
    """Simulate one pass of the vehicle; deterministic given (config, seed).

    ``on_frame(frame_index, frame)`` is called with every rendered crop,
    e.g. to dump frames to disk.
    """
    atk = cfg.attack
    cam_plan = cfg.cam
    cam_act = cfg.cam_actual or cfg.cam
    if atk.mode != "random" and cfg.signal is None:
        raise ConfigError(f"mode {atk.mode} requires an optimized signal")

    y_t = cfg.sign.y_sign - cfg.tracker.y_cam
    states = _trajectory(cfg, cam_act, y_t)
    plan = _plan_for(cfg)
    scheduler = ReplayScheduler(cam_plan, plan, latency_frames=atk.latency_frames)

    f0 = cfg.signal
    t_att0 = f0.duration if f0 is not None else \
        atk.n_sign0 * cam_plan.t_ro + cam_plan.t_exp

    still_estimate: tuple[float, float] | None = None
    if atk.mode == "gs2-still":
        still_state = TrajectoryState(z_t=atk.still_design_z, y_t=y_t,
                                      speed=0.0, t=0.0)
        still_estimate = project_sign(cam_plan, cfg.sign, still_state)

    alpha = cfg.scene.alpha * cfg.scene.ambient_scale
    records: list[FrameRecord] = []
    excluded: list[ExcludedFrame] = []
    last_estimate: tuple[float, float] | None = None

    for k, st in enumerate(states):
        # --- attacker side: tracker report and schedule -------------------
        if still_estimate is not None:
            estimate = still_estimate
        else:
            rng_k = np.random.default_rng(np.random.SeedSequence((cfg.seed, 1, k)))
            d_est = max(0.0, st.z_t - cfg.tracker.d1 - cfg.tracker.d2)
            z_est, y_est = tracker_estimate(cfg.tracker, cfg.sign, d_est, rng_k)
            try:
                estimate = project_sign(
                    cam_plan, cfg.sign,
                    TrajectoryState(z_t=max(z_est, 1e-3), y_t=y_est,
                                    speed=st.speed, t=st.t))
            except SignNotVisibleError:
                estimate = last_estimate
        if estimate is None:
            excluded.append(ExcludedFrame(k, st.z_t, "not-visible"))
            continue
        last_estimate = estimate
        scheduler.observe(*estimate)

        # --- victim side: true geometry -----------------------------------
        try:
            n_up_true, n_sign_true = project_sign(cam_act, cfg.sign, st)
        except SignNotVisibleError:
            excluded.append(ExcludedFrame(k, st.z_t, "not-visible"))
            continue
        top0 = round_half_up(n_up_true) - 1
        rows = round_half_up(n_sign_true)
        if top0 < 0 or top0 + rows > cam_act.n_lines:
            excluded.append(ExcludedFrame(k, st.z_t, "not-visible"))
            continue

        try:
            schedule = scheduler.schedule_for(k)
        except (WindowOverflowError, DomainError):
            excluded.append(ExcludedFrame(k, st.z_t, "oversized"))
            continue

        # --- LED waveform ---------------------------------------------------
        if atk.mode == "random" and f0 is None:
            rng_s = np.random.default_rng(np.random.SeedSequence((cfg.seed, 4, k)))
            stripes = StripeVector(rng_s.uniform(0.0, 1.0, size=(3, atk.random_q)))
            f = stripes.to_signal(schedule.t_att)
        else:
            f = scale_signal(f0, t_att0, max(schedule.t_att, t_att0))
        waveform = effective_waveform(schedule, plan, f, k, cam_plan,
                                      delta=schedule.delta)

        # --- capture and classify -------------------------------------------
        scene = _sign_scene(atk.gt_class, rows, alpha, cfg.scene.beta,
                            cfg.scene.rho_texp)
        if cfg.scene.attenuation_p > 0:
            factor = min(1.0, (cfg.end_z / st.z_t) ** cfg.scene.attenuation_p)
            scene = scene.scaled_attack(factor)
        frame = render_crop(scene, cam_act, waveform, n_up=top0)
        if on_frame is not None:
            on_frame(k, frame)
        pred, probs = classify_crop_proba(model, frame.pixels)

        records.append(FrameRecord(
            frame_index=k, t=st.t, z_t=st.z_t,
            n_up=round_half_up(n_up_true), n_sign=rows,
            delta=schedule.delta, pred=pred, gt=atk.gt_class,
            conf=float(probs[pred])))

    if not records:
        raise EmptyRunError("sign never visible during the scenario")
    return AttackRun(records=records, excluded=excluded, mode=atk.mode,
                     gt_class=atk.gt_class, target=atk.target,
                     frame_rate=cam_act.frame_rate,
                     start_z=cfg.start_z, end_z=cfg.end_z,
                     n_classes=model.n_classes)


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

def misclassification_rate(run: AttackRun) -> float:
    """Fraction of evaluated frames predicted as a non-ground-truth class."""
    if not run.records:
        raise EmptyRunError("run has no evaluated frames")
    wrong = sum(r.pred != r.gt for r in run.records)
    return wrong / len(run.records)


def pmcr(run: AttackRun, target_or_auto="auto") -> tuple[int | None, float]:
    """Primary misclassification class and its frame fraction.

    With an explicit target class (targeted attack) the rate counts frames
    predicted as that class.  With "auto" (untargeted) the primary class is
    the modal wrong class; ties break toward the lowest class index; with
    zero misclassifications the primary class is undefined and the rate 0.
    """
    if not run.records:
        raise EmptyRunError("run has no evaluated frames")
    n = len(run.records)
    if target_or_auto != "auto":
        k = int(target_or_auto)
        return k, sum(r.pred == k for r in run.records) / n
    counts: dict[int, int] = {}
    for r in run.records:
        if r.pred != r.gt:
            counts[r.pred] = counts.get(r.pred, 0) + 1
    if not counts:
        return None, 0.0
    primary = min(counts, key=lambda c: (-counts[c], c))
    return primary, counts[primary] / n


def _entropy_bits(labels: np.ndarray) -> float:
    _, counts = np.unique(labels, return_counts=True)
    p = counts / counts.sum()
    return float(-(p * np.log2(p)).sum())


def windowed_entropy(run: AttackRun, window_s: float = 1.5) -> np.ndarray:
    """Shannon entropy (bits) of predictions per non-overlapping time window.

    Window length is round(window_s * fps) frames; a final partial window is
    included when at least half full.
    """
    w = max(1, round_half_up(window_s * run.frame_rate))
    preds = np.array([r.pred for r in run.records])
    ents = []
    for s in range(0, len(preds), w):
        chunk = preds[s:s + w]
        if len(chunk) < w and 2 * len(chunk) < w:
            break
        ents.append(_entropy_bits(chunk))
    return np.array(ents)


# ---------------------------------------------------------------------------
# Mode comparison and distance profile
# ---------------------------------------------------------------------------

@dataclass
class ComparisonResult:
    rows: list[dict]                 # one per (mode, trial)
    summary: dict[str, dict]         # per mode: mean/median MR, PMCR, entropy


def compare_modes(cfg_base: ScenarioConfig, modes, trials: int,
                  model: SurrogateModel, signals: dict[str, FlickerSignal],
                  seeds=None) -> ComparisonResult:
    """Run ``trials`` seeded scenarios per mode and tabulate the metrics.

    ``signals`` maps mode names to optimized signals; "primitive" falls back
    to the "gs1" signal (they share the offset-robust design), "random"
    needs none.
    """
    if trials < 1:
        raise ConfigError("need at least one trial per mode")
    if seeds is None:
        seeds = [cfg_base.seed + 101 * i for i in range(trials)]
    if len(seeds) != trials:
        raise ConfigError("len(seeds) must equal trials")
    rows = []
    summary: dict[str, dict] = {}
    for mode in modes:
        if mode not in MODES:
            raise ConfigError(f"unknown mode {mode!r}")
        sig = signals.get(mode)
        if sig is None and mode == "primitive":
            sig = signals.get("gs1")
        if sig is None and mode == "gs2-still":
            sig = signals.get("gs2")
        target = cfg_base.attack.target if mode in ("gs2", "gs2-still") else None
        per_mode = []
        for i, seed in enumerate(seeds):
            cfg = replace(
                cfg_base, seed=seed, signal=sig,
                attack=replace(cfg_base.attack, mode=mode, target=target))
            run = run_scenario(cfg, model)
            s = run.summary()
            s.update(trial=i, seed=seed)
            rows.append(s)
            per_mode.append(s)
        summary[mode] = {
            "mean_mr": float(np.mean([s["mr"] for s in per_mode])),
            "median_mr": float(np.median([s["mr"] for s in per_mode])),
            "mean_pmcr": float(np.mean([s["pmcr"] for s in per_mode])),
            "median_pmcr": float(np.median([s["pmcr"] for s in per_mode])),
            "mean_entropy": float(np.mean([s["mean_entropy"] for s in per_mode])),
        }
    return ComparisonResult(rows=rows, summary=summary)


@dataclass
class DistanceBin:
    z_lo: float
    z_hi: float
    frames: int
    mr: float
    pmcr: float


def distance_profile(run: AttackRun, bin_m: float = 1.0) -> list[DistanceBin]:
    """MR/PMCR per distance bin over [end_z, start_z]; bins partition frames."""
    if bin_m <= 0:
        raise ConfigError("bin_m must be positive")
    lo, hi = run.end_z, run.start_z
    n_bins = max(1, int(math.ceil((hi - lo) / bin_m - 1e-9)))
    target = run.target if run.target is not None else \
        pmcr(run, "auto")[0]
    bins = []
    for b in range(n_bins):
        z0, z1 = lo + b * bin_m, lo + (b + 1) * bin_m
        if b == n_bins - 1:
            z1 = max(z1, hi)
        recs = [r for r in run.records
                if (z0 <= r.z_t < z1) or (b == n_bins - 1 and r.z_t == z1)]
        if recs:
            mr = sum(r.pred != r.gt for r in recs) / len(recs)
            rate = (sum(r.pred == target for r in recs) / len(recs)
                    if target is not None else 0.0)
        else:
            mr = rate = 0.0
        bins.append(DistanceBin(z0, z1, len(recs), mr, rate))
    return bins
