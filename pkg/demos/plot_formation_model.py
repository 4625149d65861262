"""
===================================
Composing and inverting underwater
===================================

An underwater photograph mixes the scene with light scattered along the line
of sight. Per pixel and per channel,

    I = J * T + A * (1 - T),    T = exp(-beta * d)

where J is the in-air radiance, T the transmission, A the veiling light and d
the range. Red is absorbed fastest, so distant objects drift towards A.

This script composes an underwater view of a procedural scene, estimates A
with the gray-world assumption, and inverts the model for T.
"""

import numpy as np

from dewater.physics import (
    DuntleyParams,
    compose_underwater,
    duntley_radiance,
    estimate_transmission,
    estimate_veiling_light,
    transmission_from_depth,
)
from dewater.synth import make_clean_images

###############################################################################
# A clean scene and a depth ramp from 0.5 m at the top to 3 m at the bottom.

j = make_clean_images(1, 64, seed=2)[0]
depth = np.repeat(np.linspace(0.5, 3.0, 64)[:, None], 64, axis=1)
beta = (0.9, 0.35, 0.2)
t = transmission_from_depth(depth, beta)
print("transmission at the top row   :", t[0, 0].round(3))
print("transmission at the bottom row:", t[-1, 0].round(3))

###############################################################################
# Compose. The veiling light is chosen so that the gray-world estimate of the
# underwater image lands exactly on it: A = mean(J T) / mean(T) per channel.

a = (j * t).mean(axis=(0, 1)) / t.mean(axis=(0, 1))
i = compose_underwater(j, t, a)
print("veiling light used   :", a.round(4))

a_hat = estimate_veiling_light(i)[0, 0]
print("gray-world estimate  :", a_hat.round(4))

###############################################################################
# Inverting for T needs the clean image as well; that is how training targets
# are made. Pixels whose radiance is close to A carry no information about T.

t_hat = estimate_transmission(i, j, a_hat)
informative = np.abs(j - a_hat) > 0.05
err = np.abs(t_hat - t)[informative]
print(f"recovered T on {informative.mean():.0%} of pixels, max error {err.max():.2e}")

###############################################################################
# The full Duntley model adds a view-angle dependent term. With the diffuse
# attenuation K at zero it is the model above with beta * d = alpha * r.

p = DuntleyParams(alpha=beta, k=(0.0, 0.0, 0.0), r=2.0, theta=0.3, background=a)
simple = compose_underwater(j, np.exp(-np.array(beta) * 2.0), a)
print("Duntley vs simple, K = 0:", np.abs(duntley_radiance(j, p, clamp=False) - simple).max())

p = DuntleyParams(alpha=beta, k=(0.1, 0.05, 0.02), r=2.0, theta=0.3, background=a)
direct, veil = p.terms()
print("with K > 0, direct term:", direct.round(3), " veil term:", veil.round(3))
