"""8-bit image files to and from float RGB arrays in [0, 1]."""

from pathlib import Path

import numpy as np
from PIL import Image

from .errors import RejectedInputError

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")


def is_image(path):
    return Path(path).suffix.lower() in IMAGE_SUFFIXES


def read_image(path):
    """Decode a PNG/JPEG file to an (H, W, 3) float64 array (value / 255)."""
    try:
        with Image.open(path) as im:
            arr = np.asarray(im.convert("RGB"), dtype=np.float64)
    except (OSError, ValueError) as exc:
        raise RejectedInputError(f"cannot decode image {path}: {exc}") from exc
    return arr / 255.0


def image_size(path):
    """(width, height) from the file header, without decoding pixels."""
    try:
        with Image.open(path) as im:
            return im.size
    except (OSError, ValueError) as exc:
        raise RejectedInputError(f"cannot read image {path}: {exc}") from exc


def to_uint8(img):
    return np.round(np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0) * 255.0).astype(np.uint8)


def write_png(path, img):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(to_uint8(img), mode="RGB").save(path, format="PNG")
    return path


def pad_to_multiple(img, multiple):
    """Reflect-pad the bottom/right edges so H and W become multiples of ``multiple``.

    Returns:
        ``(padded, (H, W))`` with the original size for cropping back.
    """
    h, w = img.shape[:2]
    ph = -h % multiple
    pw = -w % multiple
    if ph == 0 and pw == 0:
        return img, (h, w)
    mode = "reflect" if min(h, w) > 1 else "edge"
    return np.pad(img, ((0, ph), (0, pw), (0, 0)), mode=mode), (h, w)
