"""StripeForge: rolling-shutter adversarial stripe attack simulation toolkit.

Renders rolling-shutter frames under modulated illumination, optimizes
flicker signals against a surrogate traffic-sign classifier, schedules the
attack against a simulated moving vehicle, and measures attack stability.
"""

from .camera import (CameraConfig, FlickerSignal, Frame, RadiometricScene,
                     render_crop, render_frame, scanline_gain)
from .classifier import (SignDatasetSpec, SurrogateModel, TrainConfig,
                         classify_crop, draw_sign_texture, generate_dataset,
                         input_gradient, load_model, save_model, train)
from .geometry import (SignGeometry, TrackerConfig, TrajectoryState,
                       project_sign, simulate_trajectory, tracker_estimate)
from .optimize import (AttackObjectiveSpec, StripeVector, UNTARGETED,
                       attack_success_rate, expected_loss, make_objective_spec,
                       minimize_blackbox, optimize_bo, optimize_pgd, sweep_q)
from .scenario import (AttackParams, AttackRun, SceneParams, ScenarioConfig,
                       compare_modes, distance_profile, misclassification_rate,
                       pmcr, run_scenario, windowed_entropy)
from .sniffer import (CurrentTrace, DelayMapping, SimulatedCamera,
                      calibrate_delay_mapping, detect_spikes,
                      estimate_frame_rate, synthesize_trace)
from .timing import (ReplayPlan, TimingSchedule, compute_windows,
                     effective_waveform, replay_offset, scale_signal)

__version__ = "0.1.0"
