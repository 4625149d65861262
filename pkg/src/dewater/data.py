"""Paired dataset preparation: scanning, quadrisection, resizing, targets,
train/test split, on-disk cache and mini-batch iteration.

Expected layout::

    root/<category>/underwater/<name>.png|jpg
    root/<category>/reference/<name>.png|jpg
"""

import hashlib
import io
import json
import logging
import math
import time
import zipfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from .errors import RejectedInputError
from .imageio import image_size, is_image, read_image
from .physics import estimate_transmission, estimate_veiling_light

log = logging.getLogger(__name__)

PIPELINE_VERSION = "1"
TRAIN_SIZE = 256
TRAIN_FRACTION = 0.8
VFLIP_P = 0.5
HFLIP_P = 0.3
GRAY_WORLD_SCALARS = (1.0, 1.0, 1.0)

UNDERWATER_DIR = "underwater"
REFERENCE_DIR = "reference"


@dataclass(frozen=True)
class RawPair:
    underwater_path: Path
    groundtruth_path: Path
    category: str

    @property
    def name(self):
        return f"{self.category}/{self.underwater_path.stem}"


def scan_dataset(root):
    """Find underwater/reference pairs under ``root``.

    Returns:
        ``(pairs, skipped)``: pairs sorted by (category, name), and the
        underwater files that had no reference partner.

    Raises:
        RejectedInputError: if ``root`` is not a directory, a file cannot be
            read, or a pair's two images differ in size.
    """
    root = Path(root)
    if not root.is_dir():
        raise RejectedInputError(f"dataset root {root} is not a directory")
    pairs, skipped = [], []
    for cat_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        uw_dir = cat_dir / UNDERWATER_DIR
        ref_dir = cat_dir / REFERENCE_DIR
        if not uw_dir.is_dir():
            continue
        refs = {p.stem: p for p in sorted(ref_dir.iterdir()) if is_image(p)} if ref_dir.is_dir() else {}
        for uw in sorted(p for p in uw_dir.iterdir() if is_image(p)):
            ref = refs.get(uw.stem)
            if ref is None:
                skipped.append(uw)
                log.warning("no reference image for %s", uw)
                continue
            if image_size(uw) != image_size(ref):
                raise RejectedInputError(f"size mismatch between {uw} and {ref}")
            pairs.append(RawPair(uw, ref, cat_dir.name))
    return pairs, skipped


def quadrisect(img):
    """Split into top-left, top-right, bottom-left, bottom-right quadrants.

    Each quadrant is floor(H/2) x floor(W/2); an odd last row/column is dropped.
    """
    img = np.asarray(img)
    h, w = img.shape[:2]
    if h < 2 or w < 2:
        raise RejectedInputError(f"cannot quadrisect an image of size {h}x{w}")
    hh, hw = h // 2, w // 2
    return [img[:hh, :hw], img[:hh, hw : 2 * hw], img[hh : 2 * hh, :hw], img[hh : 2 * hh, hw : 2 * hw]]


def resize_to_training(img, size=TRAIN_SIZE):
    """Bilinear resize to ``size`` x ``size`` (antialiased when shrinking)."""
    img = np.asarray(img, dtype=np.float64)
    if img.shape[0] < 2 or img.shape[1] < 2:
        raise RejectedInputError("image must be at least 2x2")
    if img.shape[:2] == (size, size):
        return img.copy()
    t = torch.from_numpy(np.ascontiguousarray(img.transpose(2, 0, 1)))[None]
    out = F.interpolate(t, size=(size, size), mode="bilinear", align_corners=False, antialias=True)
    return np.clip(out[0].numpy().transpose(1, 2, 0), 0.0, 1.0)


@dataclass
class PairedSample:
    """One training example; all arrays are (H, W, 3) float32."""

    x1: np.ndarray
    y1: np.ndarray
    t: np.ndarray
    a: np.ndarray
    sample_id: str

    @property
    def x2(self):
        return np.concatenate([self.t, self.a], axis=-1)


def precompute_targets(x1, y1, scalars=GRAY_WORLD_SCALARS, *, return_clamped=False):
    """Gray-world veiling light of ``x1`` and the transmission it implies."""
    if np.shape(x1) != np.shape(y1):
        raise RejectedInputError(f"shape mismatch: {np.shape(x1)} vs {np.shape(y1)}")
    a = estimate_veiling_light(x1, scalars)
    t, frac = estimate_transmission(x1, y1, a, return_clamped=True)
    return (t, a, frac) if return_clamped else (t, a)


def make_sample(sample_id, x1, y1):
    t, a = precompute_targets(x1, y1)
    f = lambda v: np.asarray(v, dtype=np.float32)  # noqa: E731
    return PairedSample(f(x1), f(y1), f(t), f(a), sample_id)


def apply_flips(sample, vflip, hflip):
    """Flip every array of ``sample`` the same way (rows for vflip, columns for hflip)."""
    def flip(arr):
        if vflip:
            arr = arr[::-1]
        if hflip:
            arr = arr[:, ::-1]
        return np.ascontiguousarray(arr)

    return PairedSample(flip(sample.x1), flip(sample.y1), flip(sample.t), flip(sample.a), sample.sample_id)


def augment_flips(sample, rng):
    """Random paired flips: vertical with p=0.5, horizontal with p=0.3.

    Two uniforms are drawn from ``rng`` (a numpy Generator) per call.
    """
    v = rng.random() < VFLIP_P
    h = rng.random() < HFLIP_P
    return apply_flips(sample, v, h)


def iter_samples(pairs, size=TRAIN_SIZE, split_quadrants=True, stats=None):
    """Yield PairedSamples for ``pairs`` in order.

    Each source pair gives four samples (``<category>/<name>_q0..q3``) when
    ``split_quadrants`` is set, otherwise one (``<category>/<name>``).
    Targets are computed after resizing. If ``stats`` is a list, the clamped
    fraction of every transmission map is appended to it.
    """
    for pair in pairs:
        uw = read_image(pair.underwater_path)
        ref = read_image(pair.groundtruth_path)
        if uw.shape != ref.shape:
            raise RejectedInputError(f"size mismatch in pair {pair.name}")
        if split_quadrants:
            parts = zip((f"{pair.name}_q{k}" for k in range(4)), quadrisect(uw), quadrisect(ref))
        else:
            parts = [(pair.name, uw, ref)]
        for sid, u, r in parts:
            x1 = resize_to_training(u, size)
            y1 = resize_to_training(r, size)
            t, a, frac = precompute_targets(x1, y1, return_clamped=True)
            if stats is not None:
                stats.append(frac)
            f = lambda v: np.asarray(v, dtype=np.float32)  # noqa: E731
            yield PairedSample(f(x1), f(y1), f(t), f(a), sid)


# --- split ------------------------------------------------------------------


@dataclass
class SplitManifest:
    train_ids: list
    test_ids: list
    seed: int
    created_at: str = field(default="", compare=False)

    def to_json(self):
        return json.dumps(
            {"train_ids": self.train_ids, "test_ids": self.test_ids, "seed": self.seed, "created_at": self.created_at},
            indent=2,
        ) + "\n"

    @classmethod
    def from_json(cls, text):
        obj = json.loads(text)
        return cls(list(obj["train_ids"]), list(obj["test_ids"]), int(obj["seed"]), obj.get("created_at", ""))

    def ids(self, split):
        if split == "train":
            return self.train_ids
        if split == "test":
            return self.test_ids
        raise RejectedInputError(f"unknown split {split!r}; expected 'train' or 'test'")


def make_split(samples, seed, train_fraction=TRAIN_FRACTION):
    """Seeded shuffle of sample ids into train/test with round(fraction * N) train.

    ``samples`` may be PairedSamples or plain id strings. With a fraction
    below 1 both sides get at least one sample.
    """
    ids = sorted(s if isinstance(s, str) else s.sample_id for s in samples)
    n = len(ids)
    if n < 2:
        raise RejectedInputError("need at least two samples to split")
    if len(set(ids)) != n:
        raise RejectedInputError("sample ids are not unique")
    n_train = int(math.floor(train_fraction * n + 0.5))
    n_train = min(max(n_train, 1), n if train_fraction >= 1 else n - 1)
    order = np.random.default_rng(seed).permutation(n)
    shuffled = [ids[i] for i in order]
    return SplitManifest(
        shuffled[:n_train], shuffled[n_train:], int(seed), time.strftime("%Y-%m-%dT%H:%M:%S%z")
    )


# --- cache ------------------------------------------------------------------

_ZIP_DATE = (1980, 1, 1, 0, 0, 0)


def _npy_bytes(arr):
    buf = io.BytesIO()
    np.save(buf, arr, allow_pickle=False)
    return buf.getvalue()


def save_sample(path, sample):
    """Write an .npz (x1, y1, t, a, sample_id) with fixed zip timestamps."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    members = {
        "x1": sample.x1,
        "y1": sample.y1,
        "t": sample.t,
        "a": sample.a,
        "sample_id": np.array(sample.sample_id),
    }
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        for name, arr in members.items():
            zf.writestr(zipfile.ZipInfo(f"{name}.npy", date_time=_ZIP_DATE), _npy_bytes(np.asarray(arr)))
    return path


def load_sample(path):
    with np.load(path, allow_pickle=False) as z:
        return PairedSample(z["x1"], z["y1"], z["t"], z["a"], str(z["sample_id"]))


class SampleCache:
    """Read access to a prepared cache directory, indexed by sample id."""

    def __init__(self, directory):
        self.directory = Path(directory)
        index_path = self.directory / "index.json"
        if not index_path.exists():
            raise RejectedInputError(f"no prepared sample cache at {self.directory}")
        self.index = json.loads(index_path.read_text())

    def __getitem__(self, sample_id):
        return load_sample(self.directory / self.index[sample_id])

    def __len__(self):
        return len(self.index)

    def __contains__(self, sample_id):
        return sample_id in self.index

    @property
    def manifest(self):
        return SplitManifest.from_json((self.directory / "manifest.json").read_text())


def cache_key(pairs, seed, size, split_quadrants, train_fraction):
    h = hashlib.sha256()
    h.update(json.dumps([PIPELINE_VERSION, seed, size, split_quadrants, train_fraction, GRAY_WORLD_SCALARS]).encode())
    for pair in pairs:
        for p in (pair.underwater_path, pair.groundtruth_path):
            h.update(f"{pair.category}/{p.parent.name}/{p.name}".encode())
            h.update(hashlib.sha256(p.read_bytes()).digest())
    return h.hexdigest()[:16]


@dataclass
class PreparedDataset:
    directory: Path
    manifest: SplitManifest
    report: dict
    cache_hit: bool


def prepare_dataset(root, cache_dir, seed=0, size=TRAIN_SIZE, split_quadrants=True, train_fraction=TRAIN_FRACTION):
    """Scan, process and cache a dataset; reuses an identical earlier run.

    The cache lives in ``cache_dir/<key>`` where the key hashes the source
    files and every pipeline setting.
    """
    pairs, skipped = scan_dataset(root)
    key = cache_key(pairs, seed, size, split_quadrants, train_fraction)
    out = Path(cache_dir) / key
    done = out / "report.json"
    if done.exists():
        log.info("cache hit: %s", out)
        report = json.loads(done.read_text())
        manifest = SplitManifest.from_json((out / "manifest.json").read_text()) if report["samples"] >= 2 else None
        return PreparedDataset(out, manifest, report, True)

    out.mkdir(parents=True, exist_ok=True)
    index, clamp = {}, []
    for k, sample in enumerate(iter_samples(pairs, size, split_quadrants, stats=clamp)):
        fname = f"samples/{k:06d}.npz"
        save_sample(out / fname, sample)
        index[sample.sample_id] = fname
    (out / "index.json").write_text(json.dumps(index, indent=2, sort_keys=True) + "\n")

    manifest = None
    if len(index) >= 2:
        manifest = make_split(list(index), seed, train_fraction)
        (out / "manifest.json").write_text(manifest.to_json())
    report = {
        "source_pairs": len(pairs),
        "samples": len(index),
        "train": len(manifest.train_ids) if manifest else 0,
        "test": len(manifest.test_ids) if manifest else 0,
        "skipped": [str(p) for p in skipped],
        "transmission_clamped_fraction": float(np.mean(clamp)) if clamp else 0.0,
        "image_size": size,
        "seed": seed,
    }
    done.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return PreparedDataset(out, manifest, report, False)


# --- batches ----------------------------------------------------------------


def collate(samples):
    batch = {k: np.stack([getattr(s, k) for s in samples]) for k in ("x1", "y1", "t", "a", "x2")}
    batch["ids"] = [s.sample_id for s in samples]
    return batch


def batch_iterator(
    source, store, batch_size, shuffle_seed=0, epoch=0, split="train", augment=None, merge_singleton=False
):
    """Yield one epoch of mini-batches.

    Args:
        source: a SplitManifest (``split`` selects the side) or a list of ids
            treated as the ``split`` side.
        store: mapping from sample id to PairedSample.
        batch_size: samples per batch; the last batch may be shorter.
        shuffle_seed, epoch: the training order and flips are drawn from
            ``default_rng(shuffle_seed + epoch)``.
        augment: apply random flips; defaults to True for the train split.
        merge_singleton: fold a trailing one-sample batch into the one before
            it. Batch norm cannot normalise a 1x1 bottleneck over one sample.

    Yields:
        dicts of stacked NHWC float32 arrays ``x1, y1, t, a, x2`` plus ``ids``.
    """
    if batch_size < 1:
        raise RejectedInputError("batch_size must be >= 1")
    if split not in ("train", "test"):
        raise RejectedInputError(f"unknown split {split!r}; expected 'train' or 'test'")
    ids = list(source.ids(split) if isinstance(source, SplitManifest) else source)
    if augment is None:
        augment = split == "train"
    rng = np.random.default_rng(shuffle_seed + epoch)
    if split == "train":
        ids = [ids[i] for i in rng.permutation(len(ids))]
    chunks = [ids[k : k + batch_size] for k in range(0, len(ids), batch_size)]
    if merge_singleton and len(chunks) > 1 and len(chunks[-1]) == 1:
        last = chunks.pop()
        chunks[-1] = chunks[-1] + last
    for chunk_ids in chunks:
        chunk = [store[i] for i in chunk_ids]
        if augment:
            chunk = [augment_flips(s, rng) for s in chunk]
        yield collate(chunk)
