"""Offline optimization of the minimum attack signal f0.

The objective is the expected targeted classification loss over the
uncontrolled vertical offset phi (in scanlines):

    E_phi[ loss(M(I_sign^phi), k) ],   I_sign^phi = I_amb + I_att * g(v + phi)

with the expectation evaluated on a deterministic stratified grid.  The
wide-offset regime samples phi from [0, n_sign0] (frequency-calibrated,
untargeted); the narrow regime samples [-0.1, 0.1]*n_sign0 (phase-synced,
targeted).  The untargeted objective is the negative loss toward the ground
truth class (i.e. maximize it).

White-box: projected gradient descent on the signal samples, chaining the
model's input gradient through the bilinear resize and the linear
render-from-gain map.  Black-box: Bayesian optimization with a
squared-exponential Gaussian-process surrogate and expected-improvement
acquisition over a q-stripe parameterization (search dimension 3*q).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import ndtr

from .camera import (CameraConfig, FlickerSignal, RadiometricScene,
                     exposure_weight_matrix)
from .classifier import (SurrogateModel, _resize_matrix, apply_separable,
                         input_gradient)
from .errors import ConfigError, DomainError

UNTARGETED = -1   # sentinel for target_k


@dataclass(frozen=True)
class AttackObjectiveSpec:
    """Scene, camera and offset regime defining one attack objective."""

    scene_crop: RadiometricScene
    cam: CameraConfig
    target_k: int            # class index, or UNTARGETED
    gt_class: int
    phi_range: tuple[float, float]
    phi_samples: int
    t_att0: float
    n_sign0: int

    def __post_init__(self) -> None:
        lo, hi = self.phi_range
        if lo > hi or lo < -self.n_sign0 - 1e-9 or hi > self.n_sign0 + 1e-9:
            raise ConfigError("phi_range must lie within [-n_sign0, n_sign0]")
        if self.phi_samples < 1:
            raise ConfigError("phi_samples must be >= 1")
        if self.t_att0 <= 0:
            raise ConfigError("t_att0 must be positive")

    @property
    def targeted(self) -> bool:
        return self.target_k != UNTARGETED

    def phi_grid(self) -> np.ndarray:
        """Stratum midpoints of phi_samples equal strata over phi_range."""
        lo, hi = self.phi_range
        return lo + (np.arange(self.phi_samples) + 0.5) * (hi - lo) / self.phi_samples


def default_attack_window(n_sign0: int, cam: CameraConfig) -> float:
    """Minimum attack window for a sign of n_sign0 scanlines."""
    return n_sign0 * cam.t_ro + cam.t_exp


def make_objective_spec(scene_crop: RadiometricScene, cam: CameraConfig,
                        n_sign0: int, regime: str, gt_class: int,
                        target_k: int = UNTARGETED,
                        phi_samples: int | None = None) -> AttackObjectiveSpec:
    """Spec for the wide ('gs1') or narrow ('gs2') offset regime."""
    if regime == "gs1":
        phi_range = (0.0, float(n_sign0))
        samples = 16 if phi_samples is None else phi_samples
    elif regime == "gs2":
        phi_range = (-0.1 * n_sign0, 0.1 * n_sign0)
        samples = 5 if phi_samples is None else phi_samples
    else:
        raise ConfigError(f"unknown offset regime {regime!r}")
    return AttackObjectiveSpec(scene_crop=scene_crop, cam=cam, target_k=target_k,
                               gt_class=gt_class, phi_range=phi_range,
                               phi_samples=samples,
                               t_att0=default_attack_window(n_sign0, cam),
                               n_sign0=n_sign0)


@dataclass(frozen=True)
class StripeVector:
    """q equal-length stripes per channel; values shape (3, q) in [0, 1]."""

    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] != 3 or v.shape[1] < 1:
            raise ConfigError("stripe values must have shape (3, q)")
        if v.min() < -1e-9 or v.max() > 1.0 + 1e-9:
            raise ConfigError("stripe values must lie in [0, 1]")
        object.__setattr__(self, "values", np.clip(v, 0.0, 1.0))

    @property
    def q(self) -> int:
        return self.values.shape[1]

    def to_signal(self, t_att0: float) -> FlickerSignal:
        """Expand to a flicker signal of q equal-duration segments."""
        return FlickerSignal(self.values, t_att0 / self.q)

    @classmethod
    def from_flat(cls, x: np.ndarray, q: int) -> "StripeVector":
        return cls(np.asarray(x, dtype=np.float64).reshape(3, q))


# ---------------------------------------------------------------------------
# Objective evaluation
# ---------------------------------------------------------------------------

class _ObjectiveCache:
    """Precomputed linear maps shared across evaluations of one spec.

    For each phi on the grid the per-row gain is a fixed linear map
    W_phi (rows x samples) of the signal samples; the resize to the model
    input is the separable pair (R_r, R_c).
    """

    def __init__(self, spec: AttackObjectiveSpec, model: SurrogateModel,
                 n_samples: int):
        self.spec = spec
        rows = spec.scene_crop.shape[0]
        dt = spec.t_att0 / n_samples
        probe = FlickerSignal(np.zeros((3, n_samples)), dt, periodic=True)
        t_ro, t_exp = spec.cam.t_ro, spec.cam.t_exp
        self.weight_mats = [
            exposure_weight_matrix(probe, (np.arange(rows) + phi) * t_ro, t_exp)
            for phi in spec.phi_grid()
        ]
        h, w, _ = model.input_shape
        self.r_rows = _resize_matrix(rows, h)
        self.r_cols = _resize_matrix(spec.scene_crop.shape[1], w)

    def render(self, channels: np.ndarray, phi_idx: int) -> np.ndarray:
        """Crop image for signal ``channels`` at grid offset phi_idx."""
        spec = self.spec
        g = np.clip(channels @ self.weight_mats[phi_idx].T, 0.0, 1.0)  # (3, rows)
        gr = g.T[:, None, :]
        crop = spec.scene_crop.i_amb * (1.0 - gr) + spec.scene_crop.i_full * gr
        return apply_separable(self.r_rows, crop, self.r_cols)


def signal_sample_count(spec: AttackObjectiveSpec, cam: CameraConfig) -> int:
    """Default f0 discretization: one sample per scanline readout."""
    return max(1, int(round(spec.t_att0 / cam.t_ro)))


def _loss_from_probs(probs: np.ndarray, spec: AttackObjectiveSpec) -> float:
    if spec.targeted:
        return float(-np.log(max(probs[spec.target_k], 1e-300)))
    return float(np.log(max(probs[spec.gt_class], 1e-300)))


def expected_loss(f0: FlickerSignal, spec: AttackObjectiveSpec,
                  model: SurrogateModel,
                  cache: _ObjectiveCache | None = None) -> float:
    """Mean loss over the deterministic phi grid."""
    if abs(f0.duration - spec.t_att0) > 1e-9:
        raise DomainError("f0 duration must equal the minimum attack window")
    if cache is None:
        cache = _ObjectiveCache(spec, model, f0.num_samples)
    total = 0.0
    for i in range(spec.phi_samples):
        img = cache.render(f0.channels, i)
        probs = model.predict_proba(img)
        total += _loss_from_probs(probs, spec)
    return total / spec.phi_samples


def expected_loss_and_grad(f0: FlickerSignal, spec: AttackObjectiveSpec,
                           model: SurrogateModel,
                           cache: _ObjectiveCache) -> tuple[float, np.ndarray]:
    """White-box objective value and gradient w.r.t. the signal samples."""
    total = 0.0
    grad = np.zeros_like(f0.channels)
    sign = 1.0 if spec.targeted else -1.0
    k = spec.target_k if spec.targeted else spec.gt_class
    att = spec.scene_crop.i_att
    for i in range(spec.phi_samples):
        img = cache.render(f0.channels, i)
        probs = model.predict_proba(img)
        total += sign * float(-np.log(max(probs[k], 1e-300)))
        g_img = sign * input_gradient(model, img, k)
        g_crop = apply_separable(cache.r_rows.T, g_img, cache.r_cols.T)
        g_gain = np.einsum("rck,rck->kr", g_crop, att)
        grad += g_gain @ cache.weight_mats[i]
    return total / spec.phi_samples, grad / spec.phi_samples


def attack_success_rate(f0: FlickerSignal, spec: AttackObjectiveSpec,
                        model: SurrogateModel) -> float:
    """Fraction of the phi grid where the prediction satisfies the attack goal."""
    cache = _ObjectiveCache(spec, model, f0.num_samples)
    hits = 0
    for i in range(spec.phi_samples):
        pred = int(np.argmax(model.predict_proba(cache.render(f0.channels, i))))
        if spec.targeted:
            hits += pred == spec.target_k
        else:
            hits += pred != spec.gt_class
    return hits / spec.phi_samples


# ---------------------------------------------------------------------------
# White-box: projected gradient descent
# ---------------------------------------------------------------------------

@dataclass
class PGDResult:
    signal: FlickerSignal
    loss_history: list[float]
    best_loss: float
    converged: bool
    evaluations: int


def optimize_pgd(spec: AttackObjectiveSpec, model: SurrogateModel,
                 steps: int = 200, step_size: float = 0.05,
                 seed: int = 0, n_samples: int | None = None,
                 max_backtracks: int = 6) -> PGDResult:
    """Sign-of-gradient PGD with box projection onto [0, 1].

    Steps that increase the objective are retried with a halved step (up to
    ``max_backtracks`` times), so the recorded iterate history is
    non-increasing.  Returns the best iterate and its history either way.
    """
    rng = np.random.default_rng(seed)
    if n_samples is None:
        n_samples = signal_sample_count(spec, spec.cam)
    dt = spec.t_att0 / n_samples
    cache = _ObjectiveCache(spec, model, n_samples)

    x = rng.uniform(0.2, 0.8, size=(3, n_samples))
    loss, grad = expected_loss_and_grad(
        FlickerSignal(x, dt, periodic=True), spec, model, cache)
    evals = 1
    best_x, best_loss = x.copy(), loss
    history = [loss]
    improved_any = False
    for _ in range(steps):
        step = step_size
        accepted = False
        for _ in range(max_backtracks + 1):
            cand = np.clip(x - step * np.sign(grad), 0.0, 1.0)
            cand_loss, cand_grad = expected_loss_and_grad(
                FlickerSignal(cand, dt, periodic=True), spec, model, cache)
            evals += 1
            if cand_loss <= loss:
                x, loss, grad = cand, cand_loss, cand_grad
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        history.append(loss)
        if loss < best_loss - 1e-15:
            best_x, best_loss = x.copy(), loss
            improved_any = True
    return PGDResult(
        signal=FlickerSignal(best_x, dt, periodic=True),
        loss_history=history,
        best_loss=best_loss,
        converged=improved_any,
        evaluations=evals,
    )


# ---------------------------------------------------------------------------
# Black-box: Bayesian optimization (GP + expected improvement)
# ---------------------------------------------------------------------------

@dataclass
class BOResult:
    x_best: np.ndarray
    best_loss: float
    n_queries: int
    query_log: list[float] = field(repr=False, default_factory=list)


def minimize_blackbox(objective, dim: int, budget: int, seed: int = 0,
                      length_scale: float = 0.2, noise: float = 1e-8,
                      xi: float = 0.01, n_candidates: int = 192) -> BOResult:
    """Minimize a black-box function over the unit box [0, 1]^dim.

    Stationary squared-exponential kernel with fixed length scale (fraction
    of the box width), expected-improvement acquisition maximized by seeded
    random multi-start: uniform candidates plus Gaussian perturbations of the
    incumbent at three shrinking scales.  The Cholesky factor of the kernel
    matrix grows by rank-one updates, so the whole run is O(budget^3).
    """
    if budget < 2:
        raise ConfigError("budget must be >= 2")
    rng = np.random.default_rng(seed)

    n_init = min(budget, max(4, 2 * dim))
    xs = rng.uniform(0.0, 1.0, size=(n_init, dim))
    ys = np.array([objective(x) for x in xs])
    log = list(ys)

    # incremental Cholesky of K + noise*I
    chol = np.zeros((budget, budget))
    k_self = 1.0 + noise
    chol[0, 0] = math.sqrt(k_self)
    for i in range(1, n_init):
        _chol_append(chol, i, _se_kernel(xs[:i], xs[i:i + 1], length_scale)[:, 0],
                     k_self)

    n = n_init
    while n < budget:
        y_mean, y_sd = ys.mean(), max(ys.std(), 1e-12)
        y_std = (ys - y_mean) / y_sd
        lmat = chol[:n, :n]
        alpha = solve_triangular(lmat, y_std, lower=True)

        best = ys.min()
        x_inc = xs[int(np.argmin(ys))]
        cand = [rng.uniform(0.0, 1.0, size=(n_candidates // 2, dim))]
        for scale in (0.3, 0.1, 0.03, 0.01):
            cand.append(np.clip(
                x_inc + rng.normal(0.0, scale, size=(n_candidates // 8, dim)),
                0.0, 1.0))
        cand = np.vstack(cand)

        kc = _se_kernel(xs[:n], cand, length_scale)
        v = solve_triangular(lmat, kc, lower=True)
        mu = v.T @ alpha
        var = np.clip(1.0 - np.einsum("ij,ij->j", v, v), 1e-12, None)
        sd = np.sqrt(var)
        imp = (best - y_mean) / y_sd - mu - xi   # xi in standardized units
        z = imp / sd
        ei = imp * ndtr(z) + sd * np.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)
        x_new = cand[int(np.argmax(ei))]

        y_new = objective(x_new)
        _chol_append(chol, n, _se_kernel(xs[:n], x_new[None, :], length_scale)[:, 0],
                     k_self)
        xs = np.vstack([xs, x_new[None, :]])
        ys = np.append(ys, y_new)
        log.append(y_new)
        n += 1

    i_best = int(np.argmin(ys))
    return BOResult(x_best=xs[i_best].copy(), best_loss=float(ys[i_best]),
                    n_queries=n, query_log=[float(v) for v in log])


def _se_kernel(xa: np.ndarray, xb: np.ndarray, ls: float) -> np.ndarray:
    d2 = ((xa[:, None, :] - xb[None, :, :]) ** 2).sum(-1)
    return np.exp(-0.5 * d2 / (ls * ls))


def _chol_append(chol: np.ndarray, n: int, k_vec: np.ndarray, k_self: float) -> None:
    """Grow the lower Cholesky factor in-place by one row/column."""
    if n == 0:
        chol[0, 0] = math.sqrt(k_self)
        return
    w = solve_triangular(chol[:n, :n], k_vec, lower=True)
    chol[n, :n] = w
    chol[n, n] = math.sqrt(max(k_self - float(w @ w), 1e-12))


def optimize_bo(spec: AttackObjectiveSpec, model: SurrogateModel, q: int,
                budget: int, seed: int = 0) -> tuple[BOResult, StripeVector]:
    """Black-box attack-signal search in the 3*q stripe parameterization."""
    if not 1 <= q <= 16:
        raise ConfigError("q must lie in [1, 16]")
    if budget < 10 * 3 * q:
        raise ConfigError("budget must be at least 10 * (3*q) queries")
    cache = _ObjectiveCache(spec, model, q)

    def objective(x: np.ndarray) -> float:
        ch = x.reshape(3, q)
        total = 0.0
        for i in range(spec.phi_samples):
            probs = model.predict_proba(cache.render(ch, i))
            total += _loss_from_probs(probs, spec)
        return total / spec.phi_samples

    result = minimize_blackbox(objective, dim=3 * q, budget=budget, seed=seed)
    return result, StripeVector.from_flat(result.x_best, q)


@dataclass
class SweepResult:
    best_q: int
    best_vector: StripeVector
    best_loss: float
    per_q_loss: dict[int, float]
    total_queries: int


def sweep_q(spec: AttackObjectiveSpec, model: SurrogateModel,
            q_range=range(5, 11), budget: int = 3000, seed: int = 0) -> SweepResult:
    """Run the black-box search for each stripe count and keep the best.

    ``budget`` is the total query budget, split evenly across the stripe
    counts.
    """
    qs = list(q_range)
    if not qs:
        raise ConfigError("q_range must be non-empty")
    per_budget = budget // len(qs)
    per_loss: dict[int, float] = {}
    best = None
    total = 0
    for i, q in enumerate(qs):
        result, vec = optimize_bo(spec, model, q, per_budget,
                                  seed=seed + 1000 * i)
        per_loss[q] = result.best_loss
        total += result.n_queries
        if best is None or result.best_loss < best[2]:
            best = (q, vec, result.best_loss)
    return SweepResult(best_q=best[0], best_vector=best[1], best_loss=best[2],
                       per_q_loss=per_loss, total_queries=total)
