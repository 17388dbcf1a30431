"""Shared fixtures: default camera, trained surrogate, optimized signals.

The expensive artifacts (model training, PGD runs) are session-scoped; every
test that needs them shares one deterministic instance.
"""

from __future__ import annotations

import numpy as np
import pytest

import stripeforge as sf
from stripeforge.scenario import AttackParams, SceneParams, ScenarioConfig

# Canonical desk-scale setup: AR023ZWDR-like shutter at 30 fps with the
# short exposure that fits t_cap into the frame period.
GT_CLASS = 2
TARGET_CLASS = 5
N_SIGN0 = 100
ALPHA = 0.25
BETA = 0.75
MODEL_SEED = 11


def default_camera(frame_rate: float = 30.0, t_exp: float = 0.5e-3) -> sf.CameraConfig:
    return sf.CameraConfig(t_ro=30e-6, t_exp=t_exp, n_lines=1088, n_cols=1928,
                           frame_rate=frame_rate)


@pytest.fixture(scope="session")
def cam() -> sf.CameraConfig:
    return default_camera()


@pytest.fixture(scope="session")
def dataset():
    return sf.generate_dataset(sf.SignDatasetSpec(seed=MODEL_SEED))


@pytest.fixture(scope="session")
def model(dataset):
    m = sf.train(dataset, sf.TrainConfig(), seed=MODEL_SEED)
    assert m.meta["holdout_accuracy"] >= 0.95, "fixture model failed to converge"
    return m


@pytest.fixture(scope="session")
def sign_crop(cam):
    texture = sf.draw_sign_texture(GT_CLASS, N_SIGN0)
    return sf.RadiometricScene.from_params(texture, ALPHA, BETA)


@pytest.fixture(scope="session")
def gs1_spec(sign_crop, cam):
    return sf.make_objective_spec(sign_crop, cam, N_SIGN0, "gs1",
                                  gt_class=GT_CLASS)


@pytest.fixture(scope="session")
def gs2_spec(sign_crop, cam):
    return sf.make_objective_spec(sign_crop, cam, N_SIGN0, "gs2",
                                  gt_class=GT_CLASS, target_k=TARGET_CLASS)


@pytest.fixture(scope="session")
def gs1_signal(gs1_spec, model):
    return sf.optimize_pgd(gs1_spec, model, steps=400, seed=0).signal


@pytest.fixture(scope="session")
def gs2_signal(gs2_spec, model):
    return sf.optimize_pgd(gs2_spec, model, steps=400, seed=0).signal


def base_scenario(cam, mode: str = "random", seed: int = 0, *,
                  signal=None, target=None, noise_sd: float = 0.05,
                  jitter_sd: float = 60e-6, **attack_kw) -> ScenarioConfig:
    return ScenarioConfig(
        cam=cam,
        sign=sf.SignGeometry(h_sign=0.9, y_sign=2.0),
        tracker=sf.TrackerConfig(d1=5.0, d2=1.5, y_cam=1.3,
                                 range_noise_sd=noise_sd),
        scene=SceneParams(alpha=ALPHA, beta=BETA),
        attack=AttackParams(mode=mode, gt_class=GT_CLASS, target=target,
                            n_sign0=N_SIGN0, jitter_sd=jitter_sd, **attack_kw),
        signal=signal,
        seed=seed,
    )


@pytest.fixture(scope="session")
def zero_signal(cam):
    return sf.FlickerSignal.constant(
        0.0, duration=N_SIGN0 * cam.t_ro + cam.t_exp, sample_dt=cam.t_ro)


def rand_signal(rng: np.random.Generator, n: int, dt: float,
                periodic: bool = True) -> sf.FlickerSignal:
    return sf.FlickerSignal(rng.uniform(0.0, 1.0, (3, n)), dt, periodic=periodic)


# ---------------------------------------------------------------------------
# One pass/fail line per acceptance criterion
# ---------------------------------------------------------------------------

def pytest_runtest_logreport(report):
    if report.when != "call" or "test_acceptance" not in report.nodeid:
        return
    name = report.nodeid.rsplit("::", 1)[-1]
    status = "PASS" if report.passed else "FAIL"
    print(f"\n[ACCEPTANCE] {status}  {name}  ({report.duration:.1f}s)")
