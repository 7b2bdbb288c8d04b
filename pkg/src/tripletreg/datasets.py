"""Desk-scale datasets: Gaussian mixtures, long-tail counts, motion videos and CSV."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyInput, EventTooShort, InvalidConfig, ParseError, PlacementFailure
from .tensor import make_rng

LUMA = np.array([0.299, 0.587, 0.114])
SOD_FRAMES = 6


@dataclass
class Dataset:
    """Inputs ``X`` (``N x d`` vectors or ``N x H x W x C`` images) with integer labels."""

    X: np.ndarray
    y: np.ndarray
    n_classes: int | None = None
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64).reshape(-1)
        if self.X.shape[0] != self.y.shape[0]:
            raise InvalidConfig("X and y differ in length")
        if self.n_classes is None:
            self.n_classes = int(self.y.max()) + 1 if self.y.size else 0

    def __len__(self):
        return self.y.shape[0]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.X[idx], self.y[idx], self.n_classes, dict(self.info))

    @property
    def input_shape(self) -> tuple:
        """Per-sample network input shape ``(H, W, C)``; vectors map to ``(1, 1, d)``."""
        if self.X.ndim == 2:
            return (1, 1, self.X.shape[1])
        return tuple(self.X.shape[1:])

    def as_images(self) -> np.ndarray:
        if self.X.ndim == 2:
            return self.X[:, None, None, :]
        return self.X


@dataclass
class SyntheticSpec:
    """Gaussian-mixture dataset description.

    ``dim`` is the latent dimension in which mode centers live. With
    ``image_shape`` set, each latent vector is rendered through a fixed bank of
    low-frequency cosine patterns (plus optional per-pixel noise) into an
    ``H x W x C`` image.
    """

    n_classes: int = 10
    modes_per_class: int = 1
    samples_per_class: int | list = 50
    dim: int = 2
    sigma: float = 0.1
    seed: int = 0
    image_shape: tuple | None = None
    box: float | None = None
    pixel_noise: float = 0.0

    def validate(self):
        if self.n_classes < 2:
            raise InvalidConfig("n_classes must be >= 2")
        if self.modes_per_class < 1:
            raise InvalidConfig("modes_per_class must be >= 1")
        if self.sigma <= 0:
            raise InvalidConfig("sigma must be positive")
        if self.dim < 1:
            raise InvalidConfig("dim must be >= 1")
        counts = self.class_counts()
        if len(counts) != self.n_classes or min(counts) < 1:
            raise InvalidConfig("one positive sample count per class is required")

    def class_counts(self) -> list[int]:
        if isinstance(self.samples_per_class, (list, tuple, np.ndarray)):
            return [int(c) for c in self.samples_per_class]
        return [int(self.samples_per_class)] * self.n_classes


def place_centers(n: int, dim: int, min_sep: float, rng, box: float | None = None,
                  max_tries: int = 20000) -> np.ndarray:
    """Rejection-sample ``n`` points in ``[0, box]^dim`` at least ``min_sep`` apart."""
    if box is None:
        # room for n balls of radius min_sep/2 with generous slack
        box = 2.0 * min_sep * max(1.0, n ** (1.0 / dim))
    pts = []
    tries = 0
    while len(pts) < n:
        if tries >= max_tries:
            raise PlacementFailure(f"placed {len(pts)} of {n} centers with separation {min_sep}")
        tries += 1
        cand = rng.uniform(0.0, box, size=dim)
        if all(np.sum((cand - p) ** 2) >= min_sep ** 2 for p in pts):
            pts.append(cand)
    return np.array(pts)


def _pattern_bank(dim: int, shape) -> np.ndarray:
    """``dim`` fixed low-frequency cosine patterns of the given ``(H, W, C)`` shape."""
    h, w, c = shape
    rows = np.arange(h)[:, None, None]
    cols = np.arange(w)[None, :, None]
    chans = np.arange(c)[None, None, :]
    freqs = [(u, v) for s in range(1, 8) for u in range(s + 1) for v in range(s + 1) if u + v == s]
    bank = []
    for i in range(dim):
        u, v = freqs[i % len(freqs)]
        phase = (i // len(freqs)) * np.pi / 2 + chans * np.pi / max(c, 1) * (i % 3)
        pat = np.cos(np.pi * u * (rows + 0.5) / h + np.pi * v * (cols + 0.5) / w + phase)
        bank.append(np.broadcast_to(pat, (h, w, c)))
    bank = np.array(bank)
    return bank / np.sqrt((bank ** 2).mean(axis=(1, 2, 3), keepdims=True))


def render_images(latent: np.ndarray, shape, rng=None, pixel_noise: float = 0.0) -> np.ndarray:
    bank = _pattern_bank(latent.shape[1], shape)
    imgs = np.tensordot(latent, bank, axes=(1, 0)) / np.sqrt(latent.shape[1])
    if pixel_noise > 0:
        imgs = imgs + rng.normal(0.0, pixel_noise, size=imgs.shape)
    return imgs


def gen_synthetic(spec: SyntheticSpec, rng=None) -> Dataset:
    """Sample a labelled Gaussian mixture.

    Mode centers are at least ``6 * sigma`` apart; samples of a class cycle
    through its modes round-robin. The result is deterministic in the seed.
    """
    spec.validate()
    rng = make_rng(spec.seed if rng is None else rng)
    n_modes = spec.n_classes * spec.modes_per_class
    centers = place_centers(n_modes, spec.dim, 6.0 * spec.sigma, rng, spec.box)
    centers = centers.reshape(spec.n_classes, spec.modes_per_class, spec.dim)
    xs, ys, modes = [], [], []
    for c, count in enumerate(spec.class_counts()):
        mode = np.arange(count) % spec.modes_per_class
        xs.append(centers[c, mode] + rng.normal(0.0, spec.sigma, size=(count, spec.dim)))
        ys.append(np.full(count, c))
        modes.append(mode)
    latent = np.concatenate(xs)
    y = np.concatenate(ys)
    info = {"centers": centers, "modes": np.concatenate(modes), "latent": latent}
    if spec.image_shape is not None:
        X = render_images(latent - centers.reshape(-1, spec.dim).mean(axis=0), spec.image_shape,
                          rng, spec.pixel_noise)
    else:
        X = latent
    return Dataset(X, y, spec.n_classes, info)


def train_test_split(data: Dataset, test_fraction: float, rng) -> tuple[Dataset, Dataset]:
    """Stratified split: every class keeps ``round(test_fraction * n_c)`` test samples."""
    rng = make_rng(rng)
    train, test = [], []
    for c in np.unique(data.y):
        idx = rng.permutation(np.flatnonzero(data.y == c))
        k = int(math.floor(test_fraction * idx.size + 0.5))
        test.extend(idx[:k].tolist())
        train.extend(idx[k:].tolist())
    return data.subset(sorted(train)), data.subset(sorted(test))


def gen_long_tail(n_classes: int, head_count: int, decay: float, rng=None) -> list[int]:
    """Class ``i`` gets ``max(1, round_half_up(head_count * decay**i))`` samples.

    ``rng`` is accepted for interface symmetry; the counts are deterministic.
    """
    if head_count < 1:
        raise InvalidConfig("head_count must be >= 1")
    if not 0.0 < decay <= 1.0:
        raise InvalidConfig("decay must lie in (0, 1]")
    return [max(1, int(math.floor(head_count * decay ** i + 0.5))) for i in range(n_classes)]


@dataclass
class VideoEvent:
    """Frames are ``H x W x 3`` uint8 arrays, ordered in time."""

    frames: list
    frame_rate: float
    label: int


def _gray(frame) -> np.ndarray:
    return np.rint(np.asarray(frame, dtype=np.float64)[..., :3] @ LUMA).astype(np.int64)


def sod_encode(event: VideoEvent, rng) -> np.ndarray:
    """Stack of differences over a random window of six consecutive frames.

    Channel ``k`` is ``gray(frame[k+1]) - gray(frame[k])`` with luma-weighted
    grayscale rounded to integers, so the result is an ``H x W x 5`` int64
    array with values in ``[-255, 255]``.
    """
    frames = event.frames
    if len(frames) < SOD_FRAMES:
        raise EventTooShort(f"need {SOD_FRAMES} frames, got {len(frames)}")
    start = int(make_rng(rng).integers(0, len(frames) - SOD_FRAMES + 1))
    gray = np.stack([_gray(f) for f in frames[start:start + SOD_FRAMES]], axis=-1)
    return np.diff(gray, axis=-1)


# (dy, dx) per frame for each motion class
MOTIONS = [(0, 0), (0, 1), (0, -1), (1, 0), (-1, 0), (1, 1), (-1, -1), (1, -1), (-1, 1)]


def gen_synthetic_video(n_classes: int, rng, n_per_class: int = 20, size: int = 16,
                        n_frames: int = 8, square: int = 4, frame_rate: float = 3.0) -> list[VideoEvent]:
    """Events of a bright square on a dark background moving in a class-specific way.

    Class 0 is static, class 1 moves right, class 2 left, 3 down, 4 up, then the
    diagonals; beyond nine classes the speed doubles, triples, and so on.
    """
    if n_classes < 2:
        raise InvalidConfig("n_classes must be >= 2")
    rng = make_rng(rng)
    events = []
    for label in range(n_classes):
        dy, dx = MOTIONS[label % len(MOTIONS)]
        speed = 1 + label // len(MOTIONS)
        dy, dx = dy * speed, dx * speed
        span_y, span_x = abs(dy) * (n_frames - 1), abs(dx) * (n_frames - 1)
        for _ in range(n_per_class):
            y0 = int(rng.integers(0, size - square - span_y + 1)) + (span_y if dy < 0 else 0)
            x0 = int(rng.integers(0, size - square - span_x + 1)) + (span_x if dx < 0 else 0)
            color = rng.integers(120, 256, size=3)
            background = int(rng.integers(0, 40))
            frames = []
            for t in range(n_frames):
                f = np.full((size, size, 3), background, dtype=np.uint8)
                yy, xx = y0 + dy * t, x0 + dx * t
                f[yy:yy + square, xx:xx + square] = color
                frames.append(f)
            events.append(VideoEvent(frames, frame_rate, label))
    return events


def sod_dataset(events: list[VideoEvent], rng, scale: float = 1.0 / 255.0) -> Dataset:
    """Encode every event once and scale the stacks into ``[-1, 1]``."""
    rng = make_rng(rng)
    X = np.stack([sod_encode(e, rng) for e in events]).astype(np.float64) * scale
    y = np.array([e.label for e in events])
    return Dataset(X, y)


def load_csv(path, header: bool = False) -> Dataset:
    """Rows are ``label, x_1, ..., x_d``. Raises :class:`ParseError` with the line number."""
    labels, rows = [], []
    width = None
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if header and lineno == 1:
                continue
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) < 2:
                raise ParseError("expected a label and at least one feature", lineno)
            try:
                label = int(row[0])
                values = [float(v) for v in row[1:]]
            except ValueError as exc:
                raise ParseError(str(exc), lineno) from None
            if width is None:
                width = len(values)
            elif len(values) != width:
                raise ParseError(f"expected {width} features, got {len(values)}", lineno)
            labels.append(label)
            rows.append(values)
    if not rows:
        raise EmptyInput(f"{path} has no data rows")
    return Dataset(np.array(rows), np.array(labels))


def save_csv(path, data: Dataset) -> None:
    X = data.X.reshape(len(data), -1)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for label, row in zip(data.y, X):
            writer.writerow([int(label)] + [repr(float(v)) for v in row])
