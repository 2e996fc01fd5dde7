"""Image ingestion, preprocessing, splitting and batching.

Images move through three representations:

* gray image -- ``uint8`` array of shape ``(H, W)``;
* image tensor -- ``float64`` array of shape ``(C, H, W)`` in ``[0, 1]``;
* :class:`LabeledDataset` -- a stack of image tensors plus integer labels.

The preprocessing chain is resize -> ``/255`` -> replicate to three channels,
already in channel-major order.
"""

from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image, UnidentifiedImageError

from . import rng
from .errors import ContractError, DatasetError, ImageFormatError

log = logging.getLogger(__name__)

DEFAULT_CLASS_NAMES = ("Normal", "Abnormal")
IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")


# -- single images --------------------------------------------------------------


def luminance(rgb: np.ndarray) -> np.ndarray:
    """BT.601 luma of an ``(H, W, 3)`` uint8 array, rounded half-up."""
    rgb = rgb.astype(np.int64)
    return ((299 * rgb[..., 0] + 587 * rgb[..., 1] + 114 * rgb[..., 2] + 500) // 1000).astype(np.uint8)


def load_image(path) -> np.ndarray:
    """Decode a PNG/JPEG file into a gray ``uint8`` image."""
    path = Path(path)
    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            if mode == "L":
                return np.asarray(im, dtype=np.uint8).copy()
            if mode == "LA":
                return np.asarray(im.getchannel("L"), dtype=np.uint8).copy()
            if mode.startswith("I"):
                wide = np.asarray(im, dtype=np.int64)
                return np.clip(wide >> 8, 0, 255).astype(np.uint8)
            if mode == "1":
                return np.asarray(im.convert("L"), dtype=np.uint8).copy()
            return luminance(np.asarray(im.convert("RGB"), dtype=np.uint8))
    except (UnidentifiedImageError, SyntaxError) as exc:
        raise ImageFormatError(f"cannot decode image {path}: {exc}") from exc
    except OSError as exc:
        if path.is_file():
            raise ImageFormatError(f"cannot decode image {path}: {exc}") from exc
        raise


def save_image(img: np.ndarray, path) -> None:
    Image.fromarray(np.asarray(img, dtype=np.uint8), mode="L").save(path, format="PNG")


def resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize with half-pixel centres and edge clamping.

    Output pixel ``(i, j)`` samples the source at
    ``((i + 0.5) * H / out_h - 0.5, (j + 0.5) * W / out_w - 0.5)``.
    """
    if out_h < 1 or out_w < 1:
        raise ContractError(f"resize target must be at least 1x1, got {out_h}x{out_w}")
    img = np.asarray(img)
    h, w = img.shape
    if (h, w) == (out_h, out_w):
        return img.astype(np.uint8, copy=True)

    def axis_weights(n_in, n_out):
        src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        src = np.clip(src, 0.0, n_in - 1)
        lo = np.floor(src).astype(np.int64)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, src - lo

    y0, y1, wy = axis_weights(h, out_h)
    x0, x1, wx = axis_weights(w, out_w)
    src = img.astype(np.float64)
    top = src[y0][:, x0] * (1 - wx) + src[y0][:, x1] * wx
    bottom = src[y1][:, x0] * (1 - wx) + src[y1][:, x1] * wx
    out = top * (1 - wy)[:, None] + bottom * wy[:, None]
    return np.floor(np.clip(out, 0, 255) + 0.5).astype(np.uint8)


def normalize(img: np.ndarray) -> np.ndarray:
    """Scale 8-bit intensities to ``[0, 1]``; returns shape ``(1, H, W)``."""
    return (np.asarray(img, dtype=np.float64) / 255.0)[None, :, :]


def replicate_channels(t: np.ndarray) -> np.ndarray:
    """Copy a single-channel ``(1, H, W)`` tensor into three identical planes."""
    t = np.asarray(t)
    if t.ndim != 3 or t.shape[0] != 1:
        raise ContractError(f"replicate_channels needs shape (1, H, W), got {t.shape}")
    return np.repeat(t, 3, axis=0)


def take_channel(t: np.ndarray, k: int) -> np.ndarray:
    return np.asarray(t)[k : k + 1].copy()


def preprocess(img: np.ndarray, image_size: int, standardize: tuple[float, float] | None = None) -> np.ndarray:
    """Resize -> normalize -> replicate. ``standardize`` is an opt-in ``(mean, std)``."""
    out = replicate_channels(normalize(resize_bilinear(img, image_size, image_size)))
    if standardize is not None:
        mean, std = standardize
        out = (out - mean) / std
    return out


# -- datasets -----------------------------------------------------------------


@dataclass
class LabeledDataset:
    images: np.ndarray
    labels: np.ndarray
    class_names: tuple[str, ...] = DEFAULT_CLASS_NAMES
    paths: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.class_names = tuple(self.class_names)
        if self.images.ndim != 4:
            raise DatasetError(f"images must be (n, C, H, W), got {self.images.shape}")
        if len(self.images) != len(self.labels):
            raise DatasetError("images and labels differ in length")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= len(self.class_names)):
            raise DatasetError("label outside the class list")

    def __len__(self) -> int:
        return len(self.labels)

    def __getitem__(self, i):
        return self.images[i], int(self.labels[i])

    def subset(self, indices: Sequence[int]) -> "LabeledDataset":
        idx = np.asarray(indices, dtype=np.int64)
        paths = [self.paths[i] for i in idx] if self.paths else []
        return LabeledDataset(self.images[idx], self.labels[idx], self.class_names, paths)


@dataclass(frozen=True)
class SplitIndices:
    train: list[int]
    test: list[int]
    ratio: float
    seed: int


def _train_count(ratio: float, n: int) -> int:
    # rounding guards against 0.8 * 4200 landing a hair under an integer
    return math.floor(round(ratio * n, 9))


def split_dataset(ds, ratio: float, seed: int, stratify: bool = False) -> SplitIndices:
    """Shuffle indices with SplitMix64 and cut the first ``floor(ratio*n)`` for training.

    ``ds`` may be a :class:`LabeledDataset` or a plain sample count. With
    ``stratify`` each class is cut separately, so ``|train|`` is the sum of the
    per-class floors rather than ``floor(ratio*n)``.
    """
    if not 0.0 < ratio < 1.0:
        raise ContractError(f"split ratio must lie in (0, 1), got {ratio}")
    n = ds if isinstance(ds, int) else len(ds)
    if n < 1:
        raise ContractError("cannot split an empty dataset")
    stream = rng.derive_seed(seed, rng.STREAM_SPLIT)
    if not stratify:
        order = rng.permutation(n, stream)
        k = _train_count(ratio, n)
        return SplitIndices(order[:k], order[k:], ratio, seed)
    if isinstance(ds, int):
        raise ContractError("stratified splitting needs labels")
    train, test = [], []
    for label in np.unique(ds.labels):
        members = [int(i) for i in np.flatnonzero(ds.labels == label)]
        rng.SplitMix64(rng.derive_seed(stream, int(label))).shuffle(members)
        k = _train_count(ratio, len(members))
        train += members[:k]
        test += members[k:]
    mixer = rng.SplitMix64(rng.derive_seed(stream, 1 << 32))
    mixer.shuffle(train)
    mixer.shuffle(test)
    return SplitIndices(train, test, ratio, seed)


def make_batches(indices: Sequence[int], batch_size: int, shuffle_seed: int | None = None) -> list[list[int]]:
    """Chunk ``indices`` into consecutive batches, optionally shuffling first."""
    if batch_size < 1:
        raise ContractError(f"batch_size must be >= 1, got {batch_size}")
    order = list(indices)
    if shuffle_seed is not None:
        rng.SplitMix64(shuffle_seed).shuffle(order)
    return [order[i : i + batch_size] for i in range(0, len(order), batch_size)]


# -- synthetic data -------------------------------------------------------------


def _disk_image(gen, h, w, bg, fg, cy, cx, radius):
    yy, xx = np.mgrid[0:h, 0:w]
    inside = (yy + 0.5 - cy) ** 2 + (xx + 0.5 - cx) ** 2 <= radius**2
    img = np.where(inside, fg, bg) + gen.normal(0.0, 10.0, size=(h, w))
    return np.floor(np.clip(img, 0, 255) + 0.5).astype(np.uint8)


def generate_synthetic_images(n_per_class: int, h: int, w: int, seed: int) -> list[tuple[np.ndarray, int]]:
    """Two-class gray images: class 0 is a bright centred disk on a dark field,
    class 1 a dark off-centre disk on a bright field, both with sigma=10 noise.
    """
    if n_per_class < 1:
        raise ContractError("n_per_class must be >= 1")
    gen = rng.numpy_generator(seed, rng.STREAM_SYNTH)
    side = min(h, w)
    out = []
    for label in (0, 1):
        for _ in range(n_per_class):
            if label == 0:
                bg, fg = gen.uniform(20, 60), gen.uniform(180, 230)
                cy = h / 2 + gen.uniform(-1, 1) * h / 16
                cx = w / 2 + gen.uniform(-1, 1) * w / 16
                radius = gen.uniform(0.2, 0.3) * side
            else:
                bg, fg = gen.uniform(170, 220), gen.uniform(30, 70)
                cy = h * (gen.uniform(0.25, 0.4) if gen.random() < 0.5 else gen.uniform(0.6, 0.75))
                cx = w * (gen.uniform(0.25, 0.4) if gen.random() < 0.5 else gen.uniform(0.6, 0.75))
                radius = gen.uniform(0.15, 0.25) * side
            out.append((_disk_image(gen, h, w, bg, fg, cy, cx, radius), label))
    return out


def generate_synthetic(n_per_class: int, h: int, w: int, seed: int, image_size: int | None = None) -> LabeledDataset:
    """Synthetic dataset, preprocessed exactly like files on disk."""
    pairs = generate_synthetic_images(n_per_class, h, w, seed)
    size = image_size or h
    images = np.stack([preprocess(img, size) for img, _ in pairs])
    return LabeledDataset(images, [label for _, label in pairs])


def write_image_dataset(pairs, root, class_names: Sequence[str] = DEFAULT_CLASS_NAMES) -> list[Path]:
    """Write ``(image, label)`` pairs as ``root/<ClassName>/<name>_NNNN.png``."""
    root = Path(root)
    counters = [0] * len(class_names)
    written = []
    for img, label in pairs:
        folder = root / class_names[label]
        folder.mkdir(parents=True, exist_ok=True)
        path = folder / f"{class_names[label].lower()}_{counters[label]:04d}.png"
        counters[label] += 1
        save_image(img, path)
        written.append(path)
    return written


def load_directory_dataset(
    root,
    image_size: int,
    class_names: Sequence[str] = DEFAULT_CLASS_NAMES,
    standardize: tuple[float, float] | None = None,
) -> LabeledDataset:
    """Load ``root/<ClassName>/*`` images in sorted order, labelled by class position."""
    root = Path(root)
    images, labels, paths = [], [], []
    for label, name in enumerate(class_names):
        folder = root / name
        if not folder.is_dir():
            log.warning("class directory %s is missing", folder)
            continue
        files = sorted(
            p for p in folder.iterdir() if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES
        )
        if not files:
            log.warning("class directory %s has no images", folder)
        for path in files:
            try:
                gray = load_image(path)
            except (ImageFormatError, OSError) as exc:
                log.warning("skipping %s: %s", path, exc)
                continue
            images.append(preprocess(gray, image_size, standardize))
            labels.append(label)
            paths.append(os.fspath(path))
    if not images:
        raise DatasetError(f"no decodable images found under {root}")
    return LabeledDataset(np.stack(images), labels, tuple(class_names), paths)
