"""Underwater image formation model.

All images are float arrays shaped (H, W, 3) holding linear RGB intensities in
[0, 1]. Per-channel quantities (attenuation, veiling light) may be passed as a
length-3 vector and are broadcast over the image.

    I = J * T + A * (1 - T)          simplified formation model
    T = exp(-beta * d)               transmission from range
    T = (I - A) / (J - A)            transmission given a clear reference
"""

from dataclasses import dataclass

import numpy as np

from .errors import RejectedInputError

T_FLOOR = 1e-3
DENOM_EPS = 1e-3


def _as_image(x, name):
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[-1] != 3 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise RejectedInputError(f"{name} must have shape (H, W, 3), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise RejectedInputError(f"{name} contains non-finite values")
    return arr


def _broadcast_field(x, shape, name):
    arr = np.asarray(x, dtype=np.float64)
    if arr.shape == (3,):
        arr = np.broadcast_to(arr, shape)
    if arr.shape != shape:
        raise RejectedInputError(f"{name} shape {arr.shape} does not match image shape {shape}")
    return arr


def _clip(x, lo, hi):
    out = np.clip(x, lo, hi)
    return out, float(np.mean(out != x))


def compose_underwater(j, t, a, *, return_clamped=False):
    """Degrade a clear image with transmission ``t`` and veiling light ``a``.

    Args:
        j: clear scene radiance, (H, W, 3).
        t: transmission, (H, W, 3) or per-channel (3,).
        a: veiling light, (H, W, 3) or per-channel (3,).
        return_clamped: also return the fraction of output elements that
            had to be clipped into [0, 1].

    Returns:
        The underwater image, or ``(image, clamped_fraction)``.
    """
    j = _as_image(j, "j")
    t = _broadcast_field(t, j.shape, "t")
    a = _broadcast_field(a, j.shape, "a")
    out, frac = _clip(j * t + a * (1.0 - t), 0.0, 1.0)
    return (out, frac) if return_clamped else out


def transmission_from_depth(d, beta):
    """Per-channel exponential transmission ``exp(-beta_c * d)``.

    ``d`` is an (H, W) range map in metres and ``beta`` a length-3 vector of
    attenuation coefficients (1/m). Output is clipped to [T_FLOOR, 1].
    """
    d = np.asarray(d, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64).reshape(-1)
    if d.ndim != 2:
        raise RejectedInputError(f"depth map must be 2-D, got shape {d.shape}")
    if beta.shape != (3,):
        raise RejectedInputError("beta must have one coefficient per channel")
    if not (np.all(np.isfinite(d)) and np.all(np.isfinite(beta))):
        raise RejectedInputError("depth and beta must be finite")
    if np.any(d < 0):
        raise RejectedInputError("depth must be non-negative")
    if np.any(beta < 0):
        raise RejectedInputError("beta must be non-negative")
    t = np.exp(-d[..., None] * beta)
    return np.clip(t, T_FLOOR, 1.0)


@dataclass(frozen=True)
class DuntleyParams:
    """Physical parameters of the full radiance transfer model.

    ``alpha``, ``k`` and ``background`` are per-channel; ``r`` is the camera to
    object distance in metres and ``theta`` the zenith angle in radians.
    """

    alpha: tuple
    k: tuple
    r: float
    theta: float
    background: tuple

    def __post_init__(self):
        alpha = np.asarray(self.alpha, dtype=np.float64)
        k = np.asarray(self.k, dtype=np.float64)
        bg = np.asarray(self.background, dtype=np.float64)
        for name, v in (("alpha", alpha), ("k", k), ("background", bg)):
            if v.shape != (3,) or not np.all(np.isfinite(v)):
                raise RejectedInputError(f"{name} must be three finite values")
        if np.any(alpha < 0):
            raise RejectedInputError("alpha must be non-negative")
        if not (np.isfinite(self.r) and self.r >= 0):
            raise RejectedInputError("r must be a non-negative distance")
        if not (0.0 <= self.theta <= np.pi):
            raise RejectedInputError("theta must lie in [0, pi]")
        if np.any((bg < 0) | (bg > 1)):
            raise RejectedInputError("background radiance must lie in [0, 1]")
        # keeps the bracketed factor inside [0, 1]
        if np.any(alpha * self.r - k * self.r * np.cos(self.theta) < 0):
            raise RejectedInputError("alpha*r - K*r*cos(theta) must be non-negative per channel")

    def terms(self):
        """Return (direct transmission, additive veiling term) per channel."""
        alpha = np.asarray(self.alpha, dtype=np.float64)
        k = np.asarray(self.k, dtype=np.float64)
        bg = np.asarray(self.background, dtype=np.float64)
        kr = k * self.r * np.cos(self.theta)
        direct = np.exp(-alpha * self.r)
        veil = bg * np.exp(kr) * (1.0 - np.exp(-alpha * self.r + kr))
        return direct, veil


def duntley_radiance(object_radiance, p, *, clamp=True):
    """Apparent radiance of an object seen through a water path.

    Evaluates ``N0 * exp(-alpha r) + N * exp(K r cos theta) * (1 - exp(-alpha r + K r cos theta))``
    channel-wise. With ``K = 0`` this is exactly :func:`compose_underwater`
    with ``T = exp(-alpha r)`` and ``A = background``.
    """
    n0 = _as_image(object_radiance, "object_radiance")
    direct, veil = p.terms()
    out = n0 * direct + veil
    return np.clip(out, 0.0, 1.0) if clamp else out


def gray_world(i, scalars=(1.0, 1.0, 1.0)):
    """Scaled per-channel means of ``i``, clipped to [0, 1]."""
    i = _as_image(i, "i")
    s = np.asarray(scalars, dtype=np.float64)
    if s.shape != (3,) or np.any(s <= 0):
        raise RejectedInputError("gray-world scalars must be three positive numbers")
    return np.clip(s * i.reshape(-1, 3).mean(axis=0), 0.0, 1.0)


def estimate_veiling_light(i, scalars=(1.0, 1.0, 1.0)):
    """Spatially constant veiling light from the gray-world assumption.

    Returns an (H, W, 3) field in which every pixel carries the scaled channel
    means of ``i``.
    """
    a = gray_world(i, scalars)
    return np.broadcast_to(a, np.shape(i)).copy()


def estimate_transmission(i, i_hat, a, *, return_clamped=False):
    """Invert the formation model for transmission given a clear reference.

    Computes ``(i - a) / (i_hat - a)`` elementwise. Where ``|i_hat - a|`` is
    below DENOM_EPS the ratio is undefined and the pixel is set to T_FLOOR.
    The result is clipped to [T_FLOOR, 1]; ``return_clamped`` also returns
    the fraction of elements that were clipped or undefined.
    """
    i = _as_image(i, "i")
    i_hat = _as_image(i_hat, "i_hat")
    if i.shape != i_hat.shape:
        raise RejectedInputError(f"shape mismatch: {i.shape} vs {i_hat.shape}")
    a = _broadcast_field(a, i.shape, "a")
    denom = i_hat - a
    ok = np.abs(denom) >= DENOM_EPS
    t = np.full(i.shape, T_FLOOR)
    np.divide(i - a, denom, out=t, where=ok)
    out, frac = _clip(t, T_FLOOR, 1.0)
    frac += float(np.mean(~ok))
    return (out, frac) if return_clamped else out
