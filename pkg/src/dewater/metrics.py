"""Full-reference and no-reference image quality metrics.

Images are (H, W, 3) float arrays in [0, 1]. UIQM is evaluated on the
0-255 intensity scale its published coefficients were fitted on.
"""

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import RejectedInputError

PSNR_CAP = 100.0

SSIM_WIN = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03

UIQM_C1, UIQM_C2, UIQM_C3 = 0.0282, 0.2953, 3.5753
UICM_TRIM = 0.1
UIQM_BLOCK = 8
LUMA = np.array([0.299, 0.587, 0.114])
PLIP_GAMMA = 1026.0

COLUMNS = ("image_id", "ed_r", "ed_g", "ed_b", "ed_avg", "psnr_db", "ssim", "uiqm")


def _pair(pred, ref):
    pred = np.asarray(pred, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if pred.shape != ref.shape:
        raise RejectedInputError(f"shape mismatch: {pred.shape} vs {ref.shape}")
    if pred.ndim != 3 or pred.shape[-1] != 3:
        raise RejectedInputError(f"expected (H, W, 3) images, got {pred.shape}")
    return pred, ref


def euclidean_distance(pred, ref):
    """Per-channel RMS distance and its mean over channels.

    Returns:
        ``(ed_r, ed_g, ed_b, ed_avg)``
    """
    pred, ref = _pair(pred, ref)
    per_channel = np.sqrt(np.mean((pred - ref) ** 2, axis=(0, 1)))
    r, g, b = (float(v) for v in per_channel)
    return r, g, b, (r + g + b) / 3.0


def psnr(pred, ref):
    """Peak signal-to-noise ratio in dB with unit peak, capped at PSNR_CAP."""
    pred, ref = _pair(pred, ref)
    mse = float(np.mean((pred - ref) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(1.0 / mse))


def gaussian_window(size=SSIM_WIN, sigma=SSIM_SIGMA):
    """Normalised 1-D Gaussian taps."""
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(x**2) / (2.0 * sigma**2))
    return g / g.sum()


def _ssim_maps(x, y):
    g = gaussian_window()
    half = SSIM_WIN // 2

    def filt(img):
        out = ndimage.correlate1d(img, g, axis=0, mode="constant")
        out = ndimage.correlate1d(out, g, axis=1, mode="constant")
        return out[half:-half, half:-half]

    c1 = (SSIM_K1 * 1.0) ** 2
    c2 = (SSIM_K2 * 1.0) ** 2
    mx, my = filt(x), filt(y)
    sxx = filt(x * x) - mx * mx
    syy = filt(y * y) - my * my
    sxy = filt(x * y) - mx * my
    lum = (2 * mx * my + c1) / (mx * mx + my * my + c1)
    cs = (2 * sxy + c2) / (sxx + syy + c2)
    return lum, cs


def ssim(pred, ref, *, return_cs=False):
    """Mean SSIM over all valid 11x11 Gaussian windows, averaged over RGB.

    With ``return_cs`` the mean contrast-structure term (the luminance-free
    part of the index) is returned as well.
    """
    pred, ref = _pair(pred, ref)
    if min(pred.shape[:2]) < SSIM_WIN:
        raise RejectedInputError(f"image smaller than the {SSIM_WIN}x{SSIM_WIN} SSIM window")
    scores, cs_scores = [], []
    for c in range(3):
        lum, cs = _ssim_maps(pred[..., c], ref[..., c])
        scores.append(np.mean(lum * cs))
        cs_scores.append(np.mean(cs))
    score = float(np.mean(scores))
    return (score, float(np.mean(cs_scores))) if return_cs else score


# --- UIQM -----------------------------------------------------------------


def _trimmed_stats(values):
    v = np.sort(values.ravel())
    k = v.size
    lo = math.ceil(UICM_TRIM * k)
    hi = math.floor(UICM_TRIM * k)
    kept = v[lo : k - hi]
    mu = kept.mean()
    var = np.mean((v - mu) ** 2)
    return mu, var


def uicm(img255):
    """Colourfulness from alpha-trimmed opponent-channel statistics."""
    r, g, b = img255[..., 0], img255[..., 1], img255[..., 2]
    mu_rg, var_rg = _trimmed_stats(r - g)
    mu_yb, var_yb = _trimmed_stats((r + g) / 2.0 - b)
    return -0.0268 * math.sqrt(mu_rg**2 + mu_yb**2) + 0.1586 * math.sqrt(var_rg + var_yb)


def _blocks(ch, size=UIQM_BLOCK):
    h = (ch.shape[0] // size) * size
    w = (ch.shape[1] // size) * size
    b = ch[:h, :w].reshape(h // size, size, w // size, size)
    return b.max(axis=(1, 3)), b.min(axis=(1, 3))


def eme(ch):
    """Measure of enhancement over complete 8x8 blocks; degenerate blocks add 0."""
    bmax, bmin = _blocks(ch)
    ok = (bmax > 0) & (bmin > 0)
    ratio = np.divide(bmax, bmin, out=np.ones_like(bmax), where=ok)
    return 2.0 / bmax.size * float(np.sum(np.log(ratio)))


def _sobel_magnitude(ch):
    gx = ndimage.sobel(ch, axis=1, mode="reflect")
    gy = ndimage.sobel(ch, axis=0, mode="reflect")
    return np.hypot(gx, gy)


def uism(img255):
    """Sharpness: luminance-weighted EME of each channel's Sobel edge map."""
    return float(sum(w * eme(img255[..., c] * _sobel_magnitude(img255[..., c])) for c, w in enumerate(LUMA)))


def _plip_add(a, b):
    return a + b - a * b / PLIP_GAMMA


def _plip_sub(a, b):
    return PLIP_GAMMA * (a - b) / (PLIP_GAMMA - b)


def _plip_scale(c, a):
    return PLIP_GAMMA - PLIP_GAMMA * (1.0 - a / PLIP_GAMMA) ** c


def logamee(ch):
    """PLIP-based contrast over complete 8x8 blocks; degenerate blocks add 0."""
    bmax, bmin = _blocks(ch)
    top = _plip_sub(bmax, bmin)
    bottom = _plip_add(bmax, bmin)
    m = np.divide(top, bottom, out=np.zeros_like(top), where=bottom != 0)
    terms = np.where(m > 0, m * np.log(np.where(m > 0, m, 1.0)), 0.0)
    return float(_plip_scale(1.0 / bmax.size, float(np.sum(terms))))


def uiconm(img255):
    return logamee(img255 @ LUMA)


def uiqm(img, *, components=False):
    """No-reference underwater image quality measure.

    Args:
        img: (H, W, 3) image in [0, 1], at least one 8x8 block.
        components: also return ``(uicm, uism, uiconm)``.
    """
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[-1] != 3:
        raise RejectedInputError(f"expected (H, W, 3) image, got {img.shape}")
    if min(img.shape[:2]) < UIQM_BLOCK:
        raise RejectedInputError("image too small for one 8x8 block")
    x = img * 255.0
    parts = (uicm(x), uism(x), uiconm(x))
    score = UIQM_C1 * parts[0] + UIQM_C2 * parts[1] + UIQM_C3 * parts[2]
    return (score, parts) if components else score


# --- reports ----------------------------------------------------------------


@dataclass
class MetricsReport:
    """Per-image metric rows plus their column means.

    Each row is a dict keyed by COLUMNS; metrics that could not be computed
    (no reference image) are None.
    """

    rows: list
    dataset_id: str = ""
    method_id: str = ""
    aggregate: dict = field(init=False)

    def __post_init__(self):
        agg = {}
        for col in COLUMNS[1:]:
            vals = [r[col] for r in self.rows if r[col] is not None]
            agg[col] = float(np.mean(vals)) if vals else None
        self.aggregate = agg

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        fmt = lambda v: "" if v is None else repr(float(v))  # noqa: E731
        for row in self.rows:
            w.writerow([row["image_id"]] + [fmt(row[c]) for c in COLUMNS[1:]])
        w.writerow(["MEAN"] + [fmt(self.aggregate[c]) for c in COLUMNS[1:]])
        return buf.getvalue()

    def to_json(self):
        obj = {
            "dataset_id": self.dataset_id,
            "method_id": self.method_id,
            "per_image": self.rows,
            "aggregate": self.aggregate,
        }
        return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def image_row(image_id, pred, ref=None):
    row = dict.fromkeys(COLUMNS)
    row["image_id"] = image_id
    if ref is not None:
        ed = euclidean_distance(pred, ref)
        row.update(zip(("ed_r", "ed_g", "ed_b", "ed_avg"), ed))
        row["psnr_db"] = psnr(pred, ref)
        row["ssim"] = ssim(pred, ref)
    row["uiqm"] = uiqm(pred)
    return row


def build_report(pairs, dataset_id="", method_id=""):
    """Evaluate ``(image_id, pred, ref_or_None)`` triples into a report.

    Rows are sorted by image_id. Entries without a reference only get UIQM.
    """
    pairs = list(pairs)
    if not pairs:
        raise RejectedInputError("no images to evaluate")
    rows = [image_row(i, p, r) for i, p, r in sorted(pairs, key=lambda e: e[0])]
    return MetricsReport(rows, dataset_id=dataset_id, method_id=method_id)
