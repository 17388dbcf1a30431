"""Victim model: synthetic traffic-sign set and a small differentiable classifier.

Eight sign archetypes (plate shape x color scheme x glyph) stand in for a
real traffic-sign benchmark at desk scale.  The classifier is a plain
fully-connected tanh network with hand-written backpropagation, trained by
seeded mini-batch gradient descent — small enough that gradients can be
checked against finite differences and runs are bit-reproducible.

White-box access: predict() and input_gradient().  Black-box access uses
predict() only (label + confidence vector).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import ConfigError, DomainError

N_CLASSES_DEFAULT = 8
SGM_MAGIC = b"SGM1"


# ---------------------------------------------------------------------------
# Sign archetypes
# ---------------------------------------------------------------------------

_RED = (0.78, 0.09, 0.10)
_WHITE = (0.92, 0.92, 0.92)
_BLACK = (0.08, 0.08, 0.08)
_BLUE = (0.10, 0.25, 0.80)
_YELLOW = (0.95, 0.80, 0.12)
_GRAY = (0.35, 0.35, 0.35)


def _smoothstep(d: np.ndarray, edge: float) -> np.ndarray:
    # 0 -> 1 transition of width ~edge around d = 0 (d < 0 inside)
    t = np.clip(0.5 - d / (2.0 * edge), 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


def _paint(canvas: np.ndarray, mask: np.ndarray, color) -> None:
    canvas *= (1.0 - mask)[..., None]
    canvas += mask[..., None] * np.asarray(color)


def _regular_polygon_sdf(x, y, n_sides: int, radius: float, rot: float = 0.0):
    ang = np.arctan2(y, x) - rot
    sector = 2.0 * np.pi / n_sides
    ang = np.mod(ang + sector / 2.0, sector) - sector / 2.0
    r = np.hypot(x, y)
    return r * np.cos(ang) - radius * np.cos(sector / 2.0)


def draw_sign_texture(class_id: int, size: int,
                      offset: tuple[float, float] = (0.0, 0.0)) -> np.ndarray:
    """Reflectance texture of one sign archetype, shape (size, size, 3).

    ``offset`` displaces the plate center in units of the image size.
    Edges are smoothed over ~1 pixel so the drawing is consistent across
    resolutions (a high-res draw downsampled matches a low-res draw).
    """
    if not 0 <= class_id < N_CLASSES_DEFAULT:
        raise DomainError(f"class_id must be in [0, {N_CLASSES_DEFAULT})")
    if size < 4:
        raise DomainError("texture size must be >= 4")
    c = (size - 1) / 2.0
    yy, xx = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    x = (xx - c) / size - offset[0]
    y = (yy - c) / size - offset[1]
    edge = 1.0 / size
    canvas = np.empty((size, size, 3))
    canvas[:] = _GRAY

    def poly(n, r, rot=0.0):
        return _smoothstep(_regular_polygon_sdf(x, y, n, r, rot), edge)

    def circle(r):
        return _smoothstep(np.hypot(x, y) - r, edge)

    def box(cx, cy, hw, hh):
        d = np.maximum(np.abs(x - cx) - hw, np.abs(y - cy) - hh)
        return _smoothstep(d, edge)

    if class_id == 0:      # stop-like: red octagon, white border + bar
        _paint(canvas, poly(8, 0.46, np.pi / 8), _WHITE)
        _paint(canvas, poly(8, 0.40, np.pi / 8), _RED)
        _paint(canvas, box(0.0, 0.0, 0.28, 0.07), _WHITE)
    elif class_id == 1:    # yield-like: inverted triangle, thick red rim
        _paint(canvas, poly(3, 0.48, np.pi / 2), _RED)
        _paint(canvas, poly(3, 0.30, np.pi / 2), _WHITE)
    elif class_id in (2, 3, 4, 5):
        # speed-limit-like family: identical plate and palette, the glyph
        # bar's vertical position is the only separating feature (forces the
        # model to use row structure, the axis the rolling shutter modulates)
        _paint(canvas, circle(0.46), _RED)
        _paint(canvas, circle(0.36), _WHITE)
        bar_y = {2: -0.18, 3: -0.06, 4: 0.06, 5: 0.18}[class_id]
        _paint(canvas, box(0.0, bar_y, 0.20, 0.05), _BLACK)
    elif class_id == 6:    # mandatory-like: blue disc, white arrow
        _paint(canvas, circle(0.46), _BLUE)
        _paint(canvas, box(0.0, 0.08, 0.06, 0.22), _WHITE)
        _paint(canvas, poly(3, 0.20, -np.pi / 2) * _smoothstep(y + 0.08, edge), _WHITE)
    else:                  # priority-like: yellow diamond, white rim
        _paint(canvas, poly(4, 0.50, 0.0), _WHITE)
        _paint(canvas, poly(4, 0.36, 0.0), _YELLOW)
    return np.clip(canvas, 0.0, 1.0)


# ---------------------------------------------------------------------------
# Dataset generation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SignDatasetSpec:
    n_classes: int = N_CLASSES_DEFAULT
    image_size: int = 32
    samples_per_class: int = 120
    brightness_range: tuple[float, float] = (0.20, 1.00)
    offset_jitter: float = 0.04        # plate center jitter, fraction of size
    blur_sigma_max: float = 0.8        # pixels
    render_sizes: tuple[int, int] = (28, 144)  # draw-then-resize range
    seed: int = 0

    def __post_init__(self) -> None:
        if not 2 <= self.n_classes <= N_CLASSES_DEFAULT:
            raise ConfigError(f"n_classes must be in [2, {N_CLASSES_DEFAULT}]")
        if self.samples_per_class < 1 or self.image_size < 8:
            raise ConfigError("bad dataset dimensions")


@dataclass(frozen=True)
class SignDataset:
    images: np.ndarray   # (N, H, W, 3) in [0, 1]
    labels: np.ndarray   # (N,) int


def generate_dataset(spec: SignDatasetSpec) -> SignDataset:
    """Balanced, deterministic synthetic sign set.

    Augmentation per sample: draw at a random resolution, bilinear-resize to
    the model input size (covers the run-time crop-resize path), random
    plate offset, Gaussian blur, brightness scale.
    """
    rng = np.random.default_rng(spec.seed)
    n = spec.n_classes * spec.samples_per_class
    images = np.empty((n, spec.image_size, spec.image_size, 3))
    labels = np.empty(n, dtype=int)
    i = 0
    for cls in range(spec.n_classes):
        for _ in range(spec.samples_per_class):
            render = int(rng.integers(spec.render_sizes[0], spec.render_sizes[1] + 1))
            off = rng.uniform(-spec.offset_jitter, spec.offset_jitter, size=2)
            tex = draw_sign_texture(cls, render, offset=(off[0], off[1]))
            img = resize_bilinear(tex, spec.image_size, spec.image_size)
            sigma = rng.uniform(0.0, spec.blur_sigma_max)
            if sigma > 1e-3:
                img = gaussian_filter(img, sigma=(sigma, sigma, 0.0))
            img *= rng.uniform(*spec.brightness_range)
            images[i] = np.clip(img, 0.0, 1.0)
            labels[i] = cls
            i += 1
    return SignDataset(images, labels)


# ---------------------------------------------------------------------------
# Bilinear resize (align_corners=False, half-pixel centers)
# ---------------------------------------------------------------------------

def _resize_matrix(n_in: int, n_out: int) -> np.ndarray:
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1.0)
    j0 = np.floor(src).astype(int)
    j1 = np.minimum(j0 + 1, n_in - 1)
    frac = src - j0
    m = np.zeros((n_out, n_in))
    m[np.arange(n_out), j0] += 1.0 - frac
    m[np.arange(n_out), j1] += frac
    return m


def apply_separable(a_rows: np.ndarray, img: np.ndarray,
                    a_cols: np.ndarray) -> np.ndarray:
    """out[r, c, k] = sum_ij a_rows[r, i] * img[i, j, k] * a_cols[c, j]."""
    tmp = np.tensordot(a_rows, img, axes=(1, 0))      # (r, j, k)
    out = np.tensordot(tmp, a_cols, axes=(1, 1))      # (r, k, c)
    return np.ascontiguousarray(out.transpose(0, 2, 1))


def resize_bilinear(img: np.ndarray, rows: int, cols: int) -> np.ndarray:
    """Separable bilinear resize of an (R, C, 3) image."""
    mr = _resize_matrix(img.shape[0], rows)
    mc = _resize_matrix(img.shape[1], cols)
    return apply_separable(mr, img, mc)


# ---------------------------------------------------------------------------
# Model
# ---------------------------------------------------------------------------

@dataclass
class SurrogateModel:
    """Fully-connected tanh network ending in softmax.

    ``layer_sizes`` = (input_dim, *hidden, n_classes); ``weights[i]`` has
    shape (out, in).  Immutable after training by convention.
    """

    layer_sizes: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    input_shape: tuple[int, int, int] = (32, 32, 3)
    meta: dict = field(default_factory=dict)

    @property
    def n_classes(self) -> int:
        return self.layer_sizes[-1]

    def _forward(self, x_flat: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
        acts = [x_flat]
        a = x_flat
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            a = np.tanh(a @ w.T + b)
            acts.append(a)
        logits = a @ self.weights[-1].T + self.biases[-1]
        return acts, logits

    def predict_proba(self, images: np.ndarray) -> np.ndarray:
        """Softmax probabilities; accepts one image or a batch."""
        single = images.ndim == 3
        x = images[None] if single else images
        if x.shape[1:] != self.input_shape:
            raise DomainError(
                f"image shape {x.shape[1:]} does not match model input "
                f"{self.input_shape}"
            )
        _, logits = self._forward(x.reshape(x.shape[0], -1))
        p = _softmax(logits)
        return p[0] if single else p

    def predict(self, image: np.ndarray) -> tuple[int, np.ndarray]:
        """(argmax class, full probability vector)."""
        p = self.predict_proba(image)
        return int(np.argmax(p)), p


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(probs: np.ndarray, k: int) -> float:
    """Classification loss toward class k."""
    return float(-np.log(max(probs[..., k], 1e-300)))


def input_gradient(model: SurrogateModel, image: np.ndarray, target_k: int) -> np.ndarray:
    """Gradient of the cross-entropy loss to ``target_k`` w.r.t. the image."""
    if image.shape != model.input_shape:
        raise DomainError("image shape does not match model input")
    x = image.reshape(1, -1)
    acts, logits = model._forward(x)
    p = _softmax(logits)
    delta = p.copy()
    delta[0, target_k] -= 1.0                      # d loss / d logits
    grad = delta @ model.weights[-1]
    for i in range(len(model.weights) - 2, -1, -1):
        grad = grad * (1.0 - acts[i + 1] ** 2)
        grad = grad @ model.weights[i]
    return grad.reshape(model.input_shape)


@dataclass(frozen=True)
class TrainConfig:
    hidden: tuple[int, ...] = (64,)
    epochs: int = 150
    batch_size: int = 64
    learning_rate: float = 0.3
    holdout_fraction: float = 0.2
    target_accuracy: float = 0.95


def train(dataset: SignDataset, cfg: TrainConfig = TrainConfig(),
          seed: int = 0) -> SurrogateModel:
    """Seeded mini-batch gradient descent; fixed step, no adaptive optimizer.

    The held-out accuracy lands in ``meta['holdout_accuracy']``; if it trails
    ``cfg.target_accuracy`` after the epoch budget, ``meta['converged']`` is
    False (training-failure report) but the model is still returned.
    """
    rng = np.random.default_rng(seed)
    n = dataset.images.shape[0]
    n_classes = int(dataset.labels.max()) + 1
    img_shape = dataset.images.shape[1:]
    perm = rng.permutation(n)
    n_hold = max(1, int(round(cfg.holdout_fraction * n)))
    hold_idx, train_idx = perm[:n_hold], perm[n_hold:]

    x_all = dataset.images.reshape(n, -1)
    x_tr, y_tr = x_all[train_idx], dataset.labels[train_idx]
    x_ho, y_ho = x_all[hold_idx], dataset.labels[hold_idx]

    sizes = (x_all.shape[1], *cfg.hidden, n_classes)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    model = SurrogateModel(sizes, weights, biases, input_shape=img_shape)

    onehot = np.eye(n_classes)[y_tr]
    m = x_tr.shape[0]
    for epoch in range(cfg.epochs):
        order = rng.permutation(m)
        for s in range(0, m, cfg.batch_size):
            idx = order[s:s + cfg.batch_size]
            xb, yb = x_tr[idx], onehot[idx]
            acts, logits = model._forward(xb)
            p = _softmax(logits)
            delta = (p - yb) / xb.shape[0]
            for i in range(len(weights) - 1, -1, -1):
                gw = delta.T @ acts[i]
                gb = delta.sum(axis=0)
                if i > 0:
                    delta = (delta @ weights[i]) * (1.0 - acts[i] ** 2)
                weights[i] -= cfg.learning_rate * gw
                biases[i] -= cfg.learning_rate * gb

    acc_ho = _accuracy(model, x_ho, y_ho)
    model.meta.update(
        epochs=cfg.epochs,
        seed=seed,
        holdout_accuracy=acc_ho,
        train_accuracy=_accuracy(model, x_tr, y_tr),
        converged=bool(acc_ho >= cfg.target_accuracy),
    )
    return model


def _accuracy(model: SurrogateModel, x_flat: np.ndarray, y: np.ndarray) -> float:
    _, logits = model._forward(x_flat)
    return float(np.mean(np.argmax(logits, axis=1) == y))


def classify_crop(model: SurrogateModel, crop: np.ndarray) -> int:
    """Resize a crop to the model input (bilinear) and classify it."""
    cls, _ = classify_crop_proba(model, crop)
    return cls


def classify_crop_proba(model: SurrogateModel, crop: np.ndarray) -> tuple[int, np.ndarray]:
    if crop.size == 0:
        raise DomainError("empty crop")
    h, w, _ = model.input_shape
    img = crop if crop.shape == model.input_shape else resize_bilinear(crop, h, w)
    return model.predict(img)


# ---------------------------------------------------------------------------
# Serialization: magic "SGM1", u32 layer count, u32 dims, f32 LE parameters
# ---------------------------------------------------------------------------

def save_model(model: SurrogateModel, path) -> None:
    with open(path, "wb") as fh:
        fh.write(SGM_MAGIC)
        fh.write(struct.pack("<I", len(model.layer_sizes)))
        fh.write(struct.pack(f"<{len(model.layer_sizes)}I", *model.layer_sizes))
        fh.write(struct.pack("<III", *model.input_shape))
        for w, b in zip(model.weights, model.biases):
            fh.write(w.astype("<f4").tobytes(order="C"))
            fh.write(b.astype("<f4").tobytes(order="C"))


def load_model(path) -> SurrogateModel:
    with open(path, "rb") as fh:
        if fh.read(4) != SGM_MAGIC:
            raise ConfigError(f"{path}: not a surrogate model file")
        (n_dims,) = struct.unpack("<I", fh.read(4))
        sizes = struct.unpack(f"<{n_dims}I", fh.read(4 * n_dims))
        input_shape = struct.unpack("<III", fh.read(12))
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            w = np.frombuffer(fh.read(4 * fan_out * fan_in), dtype="<f4")
            b = np.frombuffer(fh.read(4 * fan_out), dtype="<f4")
            weights.append(w.astype(np.float64).reshape(fan_out, fan_in))
            biases.append(b.astype(np.float64))
    return SurrogateModel(tuple(sizes), weights, biases,
                          input_shape=tuple(input_shape),
                          meta={"loaded_from": str(path)})
