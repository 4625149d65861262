"""
==============================
Training on a toy water column
==============================

The restoration network G1 is a U-Net trained against a patch discriminator
with an L1 term towards the clean image. A second U-Net, G2, learns the
transmission and veiling light; recombining its output with G1's restoration
must reproduce the underwater input, which ties G1 to the imaging physics.

Eight synthetic 64x64 pairs are small enough to fit in a few minutes on a
CPU. Pass ``--epochs`` to trade time for quality (200 epochs take about three
minutes on one core).
"""

import argparse
import tempfile
from pathlib import Path

import numpy as np

from dewater.cli import cmd_prepare_data, cmd_synthesize
from dewater.data import SampleCache
from dewater.imageio import write_png
from dewater.metrics import psnr, ssim
from dewater.synth import make_clean_images
from dewater.training import TrainConfig, dewater, train_loop

parser = argparse.ArgumentParser()
parser.add_argument("--epochs", type=int, default=60)
args = parser.parse_args()

work = Path(tempfile.mkdtemp(prefix="dewater-toy-"))
for k, img in enumerate(make_clean_images(8, 64, seed=7)):
    write_png(work / "clean" / f"img{k:02d}.png", img)
(work / "params.txt").write_text("beta = 0.9, 0.35, 0.2\nveiling = 0.1, 0.45, 0.55\ndepth = 1.5\ncategory = toy\n")
cmd_synthesize(work / "clean", work / "params.txt", work / "data", seed=0)
_, prepared = cmd_prepare_data(work / "data", work / "cache", seed=0, size=64, split_quadrants=False,
                               train_fraction=1.0)
store = SampleCache(prepared.directory)

###############################################################################
# Default optimiser settings and loss weights; only the network is shrunk:
# six levels for 64x64 inputs and 32 base channels.

cfg = TrainConfig(epochs=args.epochs, image_size=64, depth=6, base_width=32, disc_width=32, checkpoint_every=20)
latest, history = train_loop(store, prepared.manifest.train_ids, cfg, work / "run")
shown = history[:: max(1, len(history) // 6)]
if shown[-1] is not history[-1]:
    shown.append(history[-1])
for epoch, lb in shown:
    print(f"epoch {epoch:4d}  adv_d {lb.adv_d:.3f}  adv_g {lb.adv_g:.3f}  l1 {lb.l1_g1:.4f}  "
          f"l2 {lb.l2_g2:.4f}  total {lb.total_g:.3f}")

###############################################################################
# Restore the training images with G1 alone and compare against the input.

before, after = [], []
for sid in prepared.manifest.train_ids:
    s = store[sid]
    out = dewater(latest, s.x1, noise_seed=0)
    before.append((psnr(s.x1, s.y1), ssim(s.x1, s.y1)))
    after.append((psnr(out, s.y1), ssim(out, s.y1)))
    write_png(work / "restored" / f"{Path(sid).name}.png", out)
b, a = np.mean(before, axis=0), np.mean(after, axis=0)
print(f"underwater input: PSNR {b[0]:.2f} dB, SSIM {b[1]:.3f}")
print(f"restored        : PSNR {a[0]:.2f} dB, SSIM {a[1]:.3f}")
print("outputs in", work / "restored")
