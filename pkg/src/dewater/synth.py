"""Synthetic underwater/reference pairs generated from clean images.

A parameter file is flat ``key = value`` text. Keys apply to every image
unless prefixed with an image stem (``reef01.beta = 0.8, 0.3, 0.2``).

    mode            simple (default) or duntley
    category        output category directory (default "synthetic")
    beta            per-channel attenuation, simple mode
    veiling         per-channel veiling light A, simple mode
    depth           constant range in metres (default 1.0)
    depth_gradient  "top, bottom" range varying linearly down the image
    beta_jitter     relative uniform jitter of beta per image, drawn from the seed
    alpha, k, r, theta, background      duntley mode parameters
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import RejectedInputError
from .imageio import is_image, read_image, write_png
from .physics import DuntleyParams, compose_underwater, duntley_radiance, transmission_from_depth

VECTOR_KEYS = {"beta", "veiling", "alpha", "k", "background", "depth_gradient"}
SCALAR_KEYS = {"depth", "r", "theta", "beta_jitter"}
TEXT_KEYS = {"mode", "category"}
DEFAULTS = {
    "mode": "simple",
    "category": "synthetic",
    "beta": (0.0, 0.0, 0.0),
    "veiling": (0.0, 0.0, 0.0),
    "depth": 1.0,
    "beta_jitter": 0.0,
}


def _parse_value(key, raw, where):
    try:
        if key in VECTOR_KEYS:
            vals = tuple(float(v) for v in raw.split(","))
            want = 2 if key == "depth_gradient" else 3
            if len(vals) != want:
                raise ValueError(f"expected {want} comma-separated numbers")
            return vals
        if key in SCALAR_KEYS:
            return float(raw)
        return raw
    except ValueError as exc:
        raise RejectedInputError(f"{where}: bad value for {key!r}: {exc}") from exc


def parse_params(text, source="<params>"):
    """Parse a parameter file into ``(global, {stem: overrides})``."""
    glob, per_image = {}, {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        where = f"{source}:{lineno}"
        if "=" not in line:
            raise RejectedInputError(f"{where}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        stem = None
        if "." in key:
            stem, key = key.rsplit(".", 1)
        if key not in VECTOR_KEYS | SCALAR_KEYS | TEXT_KEYS:
            raise RejectedInputError(f"{where}: unknown key {key!r}")
        value = _parse_value(key, raw, where)
        (per_image.setdefault(stem, {}) if stem else glob)[key] = value
    return glob, per_image


@dataclass
class SynthSpec:
    params: dict

    def get(self, key):
        return self.params.get(key, DEFAULTS.get(key))


def depth_map(spec, h, w):
    grad = spec.get("depth_gradient")
    if grad is not None:
        return np.repeat(np.linspace(grad[0], grad[1], h)[:, None], w, axis=1)
    return np.full((h, w), spec.get("depth"))


def synthesize_image(clean, spec, rng=None):
    """Apply one parameter set to a clean image.

    Returns:
        ``(underwater, transmission)``; transmission is per-pixel in simple
        mode and the per-channel direct term in duntley mode.
    """
    h, w = clean.shape[:2]
    if spec.get("mode") == "duntley":
        try:
            p = DuntleyParams(
                spec.get("alpha"), spec.get("k"), spec.get("r"), spec.get("theta"), spec.get("background")
            )
        except TypeError as exc:
            raise RejectedInputError("duntley mode needs alpha, k, r, theta and background") from exc
        return duntley_radiance(clean, p), p.terms()[0]
    if spec.get("mode") != "simple":
        raise RejectedInputError(f"unknown mode {spec.get('mode')!r}")
    beta = np.asarray(spec.get("beta"), dtype=np.float64)
    jitter = spec.get("beta_jitter")
    if jitter and rng is not None:
        beta = beta * (1.0 + rng.uniform(-jitter, jitter, size=3))
    t = transmission_from_depth(depth_map(spec, h, w), beta)
    return compose_underwater(clean, t, spec.get("veiling")), t


def synthesize_dataset(clean_dir, params, out_dir, seed=0):
    """Write ``out_dir/<category>/{underwater,reference}/<stem>.png`` pairs.

    Args:
        clean_dir: directory of clean PNG/JPEG images.
        params: parameter file path or its parsed ``(global, per_image)`` form.
        seed: drives ``beta_jitter``.

    Returns:
        list of ``(stem, underwater_path, reference_path)``.
    """
    if isinstance(params, (str, Path)):
        params = parse_params(Path(params).read_text(), str(params))
    glob, per_image = params
    clean_dir, out_dir = Path(clean_dir), Path(out_dir)
    files = sorted(p for p in clean_dir.iterdir() if is_image(p))
    unknown = set(per_image) - {p.stem for p in files}
    if unknown:
        raise RejectedInputError(f"parameters given for missing images: {sorted(unknown)}")
    rng = np.random.default_rng(seed)
    written = []
    for path in files:
        spec = SynthSpec({**glob, **per_image.get(path.stem, {})})
        clean = read_image(path)
        underwater, _ = synthesize_image(clean, spec, rng)
        cat = out_dir / spec.get("category")
        uw = write_png(cat / "underwater" / f"{path.stem}.png", underwater)
        ref = write_png(cat / "reference" / f"{path.stem}.png", clean)
        written.append((path.stem, uw, ref))
    return written


def make_clean_images(n, size, seed=0):
    """Procedural clean scenes: a colour gradient with random discs and bars.

    Returns a list of (size, size, 3) float arrays in [0, 1].
    """
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size] / max(size - 1, 1)
    images = []
    for _ in range(n):
        c0, c1 = rng.uniform(0.1, 0.9, size=(2, 3))
        ang = rng.uniform(0, 2 * np.pi)
        s = np.clip(0.5 + 0.5 * (np.cos(ang) * (xx - 0.5) + np.sin(ang) * (yy - 0.5)) * 1.4, 0, 1)
        img = c0 * (1 - s[..., None]) + c1 * s[..., None]
        for _ in range(rng.integers(3, 7)):
            col = rng.uniform(0.0, 1.0, size=3)
            cx, cy = rng.uniform(0.1, 0.9, size=2)
            rad = rng.uniform(0.06, 0.25)
            mask = (xx - cx) ** 2 + (yy - cy) ** 2 < rad**2
            img[mask] = col
        for _ in range(rng.integers(1, 3)):
            col = rng.uniform(0.0, 1.0, size=3)
            x0 = rng.uniform(0, 0.8)
            wbar = rng.uniform(0.03, 0.15)
            img[(xx >= x0) & (xx < x0 + wbar)] = col
        images.append(np.clip(img, 0.0, 1.0))
    return images
