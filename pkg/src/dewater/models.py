"""Dual U-Net generators with residual skip units and a patch discriminator.

Generator layout for ``depth`` levels and encoder widths
``w_i = min(base_width * 2**i, 8 * base_width)``:

    level  encoder block                          skip
    0      Conv4x4/s2(in -> w0)                   DRU(w0) x n
    i      BN(w_{i-1}) ReLU Conv4x4/s2(-> w_i)    DRU(w_i) x n      (0 < i < depth-1)
    D-1    BN ReLU Conv4x4/s2(-> w_{D-1})         none (bottleneck)

    decoder block at level i consumes cat(previous decoder output, skip_i)
    and applies BN ReLU ConvT4x4/s2; the outermost maps 2*w0 -> out.

A DRU (deep residual unit) is ``x + Conv3x3(ReLU(BN(Conv3x3(ReLU(BN(x))))))``.
The three innermost decoder outputs pass through seeded dropout (p=0.5),
which is how the generators' noise input is realised; it stays active at
inference so outputs depend on ``noise_seed``.

The discriminator is the 70x70 PatchGAN: three stride-2 and two stride-1
4x4 convolutions over the 6-channel (condition, image) pair.
"""

from dataclasses import asdict, dataclass

import torch
import torch.nn.functional as F
from torch import nn

from .errors import RejectedInputError
from .physics import T_FLOOR

DROPOUT_RATE = 0.5
NOISY_DECODER_BLOCKS = 3
INIT_STD = 0.02


@dataclass(frozen=True)
class GeneratorConfig:
    in_channels: int = 3
    out_channels: int = 3
    base_width: int = 64
    depth: int = 8
    dru_blocks_per_skip: int = 1
    image_size: int = 256

    def __post_init__(self):
        if self.base_width < 1 or self.depth < 2:
            raise RejectedInputError("base_width must be >= 1 and depth >= 2")
        if self.dru_blocks_per_skip < 0:
            raise RejectedInputError("dru_blocks_per_skip must be >= 0")
        if 2**self.depth > self.image_size:
            raise RejectedInputError(
                f"2**depth = {2**self.depth} exceeds training image size {self.image_size}"
            )

    def widths(self):
        return [min(self.base_width * 2**i, 8 * self.base_width) for i in range(self.depth)]

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class DiscriminatorConfig:
    in_channels: int = 6
    base_width: int = 64

    def to_dict(self):
        return asdict(self)


class ResidualUnit(nn.Module):
    def __init__(self, channels):
        super().__init__()
        self.body = nn.Sequential(
            nn.BatchNorm2d(channels),
            nn.ReLU(),
            nn.Conv2d(channels, channels, 3, padding=1),
            nn.BatchNorm2d(channels),
            nn.ReLU(),
            nn.Conv2d(channels, channels, 3, padding=1),
        )

    def forward(self, x):
        return x + self.body(x)


def _down(cin, cout, first=False):
    conv = nn.Conv2d(cin, cout, 4, stride=2, padding=1)
    if first:
        return conv
    return nn.Sequential(nn.BatchNorm2d(cin), nn.ReLU(), conv)


def _up(cin, cout):
    return nn.Sequential(nn.BatchNorm2d(cin), nn.ReLU(), nn.ConvTranspose2d(cin, cout, 4, stride=2, padding=1))


def seeded_dropout(x, generator, p=DROPOUT_RATE):
    keep = torch.rand(x.shape, generator=generator, dtype=x.dtype, device=x.device) >= p
    return x * keep / (1.0 - p)


class UNetGenerator(nn.Module):
    def __init__(self, cfg: GeneratorConfig):
        super().__init__()
        self.cfg = cfg
        w = cfg.widths()
        d = cfg.depth
        self.down = nn.ModuleList(
            [_down(cfg.in_channels, w[0], first=True)] + [_down(w[i - 1], w[i]) for i in range(1, d)]
        )
        self.skips = nn.ModuleList(
            nn.Sequential(*[ResidualUnit(w[i]) for _ in range(cfg.dru_blocks_per_skip)]) for i in range(d - 1)
        )
        ups = [_up(w[d - 1], w[d - 2])]
        ups += [_up(2 * w[i], w[i - 1]) for i in range(d - 2, 0, -1)]
        ups.append(_up(2 * w[0], cfg.out_channels))
        self.up = nn.ModuleList(ups)

    def forward(self, x, noise_seed=0):
        if x.shape[1] != self.cfg.in_channels:
            raise RejectedInputError(f"expected {self.cfg.in_channels} input channels, got {x.shape[1]}")
        m = 2**self.cfg.depth
        if x.shape[-2] % m or x.shape[-1] % m:
            raise RejectedInputError(f"spatial dims {tuple(x.shape[-2:])} not divisible by {m}")
        gen = torch.Generator(device=x.device).manual_seed(int(noise_seed))
        feats = []
        h = x
        for block in self.down:
            h = block(h)
            feats.append(h)
        h = feats.pop()
        for k, block in enumerate(self.up):
            h = block(h)
            if k < len(self.up) - 1:
                if k < NOISY_DECODER_BLOCKS:
                    h = seeded_dropout(h, gen)
                h = torch.cat([h, self.skips[len(feats) - 1](feats.pop())], dim=1)
        return h


class PatchDiscriminator(nn.Module):
    def __init__(self, cfg: DiscriminatorConfig = DiscriminatorConfig()):
        super().__init__()
        self.cfg = cfg
        w = cfg.base_width
        self.net = nn.Sequential(
            nn.Conv2d(cfg.in_channels, w, 4, stride=2, padding=1),
            nn.LeakyReLU(0.2),
            nn.Conv2d(w, 2 * w, 4, stride=2, padding=1),
            nn.BatchNorm2d(2 * w),
            nn.LeakyReLU(0.2),
            nn.Conv2d(2 * w, 4 * w, 4, stride=2, padding=1),
            nn.BatchNorm2d(4 * w),
            nn.LeakyReLU(0.2),
            nn.Conv2d(4 * w, 8 * w, 4, stride=1, padding=1),
            nn.BatchNorm2d(8 * w),
            nn.LeakyReLU(0.2),
            nn.Conv2d(8 * w, 1, 4, stride=1, padding=1),
        )

    def forward(self, x, y):
        if x.shape != y.shape:
            raise RejectedInputError(f"shape mismatch: {tuple(x.shape)} vs {tuple(y.shape)}")
        return self.net(torch.cat([x, y], dim=1))


def init_weights(module, seed):
    """Gaussian(0, 0.02) convolution weights, Gaussian(1, 0.02) BN scales, zero biases."""
    gen = torch.Generator().manual_seed(int(seed))
    with torch.no_grad():
        for m in module.modules():
            if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d)):
                m.weight.copy_(torch.randn(m.weight.shape, generator=gen) * INIT_STD)
                m.bias.zero_()
            elif isinstance(m, nn.BatchNorm2d):
                m.weight.copy_(1.0 + torch.randn(m.weight.shape, generator=gen) * INIT_STD)
                m.bias.zero_()
    return module


def build_generator(cfg: GeneratorConfig, init_seed=0):
    return init_weights(UNetGenerator(cfg), init_seed)


def build_discriminator(cfg: DiscriminatorConfig = DiscriminatorConfig(), init_seed=0):
    return init_weights(PatchDiscriminator(cfg), init_seed)


def parameter_count(module):
    return sum(p.numel() for p in module.parameters())


def forward_g1(g1, x1, noise_seed=0):
    """Restored image in [0, 1] from an (N, 3, H, W) underwater batch."""
    return (torch.tanh(g1(x1, noise_seed)) + 1.0) / 2.0


def forward_g2(g2, x2, noise_seed=0):
    """Transmission and veiling-light heads from an (N, 6, H, W) [T | A] batch.

    Returns:
        ``(g2_t, g2_a)``, with g2_t in [T_FLOOR, 1] and g2_a in [0, 1].
    """
    if x2.shape[1] != 6:
        raise RejectedInputError(f"G2 expects 6 input channels, got {x2.shape[1]}")
    raw = g2(x2, noise_seed)
    return torch.sigmoid(raw[:, :3]).clamp_min(T_FLOOR), torch.sigmoid(raw[:, 3:])


def forward_discriminator(d, x1, y):
    """Raw patch logits, (N, 1, h, w)."""
    return d(x1, y)


def zero_parameters(module):
    with torch.no_grad():
        for p in module.parameters():
            p.zero_()
    return module
