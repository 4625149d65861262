"""Losses, the alternating optimisation step, the epoch loop and inference."""

import csv
import logging
import math
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from .errors import RejectedInputError, TrainingAbort
from .models import (
    DiscriminatorConfig,
    GeneratorConfig,
    build_discriminator,
    build_generator,
    forward_discriminator,
    forward_g1,
    forward_g2,
)

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "dgd-ckpt-v1"
HISTORY_COLUMNS = ("epoch", "adv_d", "adv_g", "l1_g1", "l2_g2", "total_g")


@dataclass
class TrainConfig:
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    batch_size: int = 5
    epochs: int = 850
    lambda1: float = 100.0
    lambda2: float = 0.5
    seed: int = 0
    checkpoint_every: int = 50
    detach_g1_in_l2: bool = False
    # architecture
    image_size: int = 256
    depth: int = 8
    base_width: int = 64
    disc_width: int = 64
    dru_blocks_per_skip: int = 1

    def __post_init__(self):
        for name in ("lr", "beta1", "beta2", "batch_size", "checkpoint_every"):
            if not getattr(self, name) > 0:
                raise RejectedInputError(f"{name} must be positive")
        if self.epochs < 0:
            raise RejectedInputError("epochs must be non-negative")
        for name in ("lambda1", "lambda2"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise RejectedInputError(f"{name} must be finite and non-negative")

    def g1_config(self):
        return GeneratorConfig(3, 3, self.base_width, self.depth, self.dru_blocks_per_skip, self.image_size)

    def g2_config(self):
        return GeneratorConfig(6, 6, self.base_width, self.depth, self.dru_blocks_per_skip, self.image_size)

    def d_config(self):
        return DiscriminatorConfig(6, self.disc_width)


@dataclass
class LossBreakdown:
    adv_d: float
    adv_g: float
    l1_g1: float
    l2_g2: float
    total_g: float

    def as_row(self):
        return [self.adv_d, self.adv_g, self.l1_g1, self.l2_g2, self.total_g]

    @classmethod
    def mean(cls, items):
        cols = np.mean([it.as_row() for it in items], axis=0)
        return cls(*(float(c) for c in cols))


# --- losses -----------------------------------------------------------------


def _check_same(a, b):
    if a.shape != b.shape:
        raise RejectedInputError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")


def adversarial_losses(d_logits_real, d_logits_fake):
    """Logit-space conditional GAN losses.

    Returns:
        ``(adv_d, adv_g)``: the discriminator loss, halved over its real and
        fake terms, and the non-saturating generator loss.
    """
    _check_same(d_logits_real, d_logits_fake)
    bce = F.binary_cross_entropy_with_logits
    adv_d = 0.5 * (
        bce(d_logits_real, torch.ones_like(d_logits_real)) + bce(d_logits_fake, torch.zeros_like(d_logits_fake))
    )
    adv_g = bce(d_logits_fake, torch.ones_like(d_logits_fake))
    return adv_d, adv_g


def l1_loss_g1(pred, gt):
    _check_same(pred, gt)
    return torch.mean(torch.abs(pred - gt))


def recompose(g1_out, g2_t, g2_a):
    """Underwater image implied by the restored radiance and G2's heads.

    ``g2_a`` already carries the whole additive veiling term, so there is no
    ``(1 - T)`` factor. Left unclamped on purpose.
    """
    _check_same(g1_out, g2_t)
    _check_same(g1_out, g2_a)
    return g1_out * g2_t + g2_a


def l2_loss_g2(n, x1):
    _check_same(n, x1)
    return torch.mean(torch.abs(n - x1))


# --- networks and optimisation ------------------------------------------------


class Networks:
    """The two generators, the discriminator and their optimisers."""

    def __init__(self, cfg: TrainConfig, dtype=torch.float32):
        self.cfg = cfg
        seeds = np.random.SeedSequence(cfg.seed).generate_state(3)
        self.g1 = build_generator(cfg.g1_config(), int(seeds[0])).to(dtype)
        self.g2 = build_generator(cfg.g2_config(), int(seeds[1])).to(dtype)
        self.d = build_discriminator(cfg.d_config(), int(seeds[2])).to(dtype)
        betas = (cfg.beta1, cfg.beta2)
        self.opt_g = torch.optim.Adam(list(self.g1.parameters()) + list(self.g2.parameters()), lr=cfg.lr, betas=betas)
        self.opt_d = torch.optim.Adam(self.d.parameters(), lr=cfg.lr, betas=betas)

    def train(self):
        for net in (self.g1, self.g2, self.d):
            net.train()

    def state_dict(self):
        return {
            "g1": self.g1.state_dict(),
            "g2": self.g2.state_dict(),
            "d": self.d.state_dict(),
            "opt_g": self.opt_g.state_dict(),
            "opt_d": self.opt_d.state_dict(),
        }

    def load_state_dict(self, state):
        self.g1.load_state_dict(state["g1"])
        self.g2.load_state_dict(state["g2"])
        self.d.load_state_dict(state["d"])
        self.opt_g.load_state_dict(state["opt_g"])
        self.opt_d.load_state_dict(state["opt_d"])


def step_seeds(seed, epoch, step):
    """Dropout seeds for (G1, G2) at a given optimisation step."""
    s = np.random.SeedSequence([seed, epoch, step]).generate_state(2)
    return int(s[0]), int(s[1])


def to_tensor(batch_hwc, dtype=torch.float32):
    """(N, H, W, C) numpy array to an (N, C, H, W) tensor."""
    return torch.from_numpy(np.ascontiguousarray(np.asarray(batch_hwc).transpose(0, 3, 1, 2))).to(dtype)


def generator_losses(nets, x1, y1, x2, seeds, cfg, fake=None):
    """Generator-side loss terms as tensors: ``(adv_g, l1, l2, total)``.

    ``fake`` is G1's output on ``x1``; it is computed here when not given.
    """
    if fake is None:
        fake = forward_g1(nets.g1, x1, seeds[0])
    logits = forward_discriminator(nets.d, x1, fake)
    adv_g = F.binary_cross_entropy_with_logits(logits, torch.ones_like(logits))
    l1 = l1_loss_g1(fake, y1)
    g2_t, g2_a = forward_g2(nets.g2, x2, seeds[1])
    radiance = fake.detach() if cfg.detach_g1_in_l2 else fake
    l2 = l2_loss_g2(recompose(radiance, g2_t, g2_a), x1)
    # accumulated in float64 so the weighted sum is exact at the reported precision
    total = adv_g.double() + cfg.lambda1 * l1.double() + cfg.lambda2 * l2.double()
    return adv_g, l1, l2, total


def train_step(nets, batch, cfg, seeds):
    """One discriminator update followed by one joint G1+G2 update.

    Args:
        nets: :class:`Networks`, updated in place.
        batch: mapping with NHWC arrays ``x1``, ``y1``, ``x2``.
        cfg: :class:`TrainConfig`.
        seeds: ``(g1_seed, g2_seed)`` dropout seeds.

    Returns:
        :class:`LossBreakdown` of this step.
    """
    dtype = next(nets.g1.parameters()).dtype
    x1 = to_tensor(batch["x1"], dtype)
    y1 = to_tensor(batch["y1"], dtype)
    x2 = to_tensor(batch["x2"], dtype)
    nets.train()

    fake = forward_g1(nets.g1, x1, seeds[0])
    nets.opt_d.zero_grad(set_to_none=True)
    adv_d, _ = adversarial_losses(
        forward_discriminator(nets.d, x1, y1), forward_discriminator(nets.d, x1, fake.detach())
    )
    adv_d.backward()
    nets.opt_d.step()

    nets.opt_g.zero_grad(set_to_none=True)
    adv_g, l1, l2, total = generator_losses(nets, x1, y1, x2, seeds, cfg, fake=fake)
    if not (torch.isfinite(total) and torch.isfinite(adv_d)):
        raise TrainingAbort(f"non-finite loss: adv_d={adv_d.item()}, total_g={total.item()}")
    total.backward()
    nets.d.zero_grad(set_to_none=True)
    nets.opt_g.step()

    return LossBreakdown(adv_d.item(), adv_g.item(), l1.item(), l2.item(), total.item())


# --- checkpoints ------------------------------------------------------------


def save_checkpoint(path, nets, epoch):
    cfg = nets.cfg
    payload = {
        "format": CHECKPOINT_FORMAT,
        "epoch": epoch,
        "train_config": asdict(cfg),
        "g1_config": cfg.g1_config().to_dict(),
        "g2_config": cfg.g2_config().to_dict(),
        "d_config": cfg.d_config().to_dict(),
        "seeds": {"seed": cfg.seed},
        "state": nets.state_dict(),
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp")
    torch.save(payload, tmp)
    tmp.replace(path)
    return path


def load_checkpoint(path):
    """Rebuild :class:`Networks` from a checkpoint file; returns ``(nets, epoch)``."""
    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as exc:
        raise RejectedInputError(f"cannot read checkpoint {path}: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("format") != CHECKPOINT_FORMAT:
        raise RejectedInputError(f"{path} is not a {CHECKPOINT_FORMAT} checkpoint")
    known = {f.name for f in fields(TrainConfig)}
    cfg = TrainConfig(**{k: v for k, v in payload["train_config"].items() if k in known})
    nets = Networks(cfg)
    nets.load_state_dict(payload["state"])
    return nets, int(payload["epoch"])


# --- loop -----------------------------------------------------------------------


def _write_history(path, history):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HISTORY_COLUMNS)
        for epoch, lb in history:
            w.writerow([epoch] + [repr(v) for v in lb.as_row()])


def read_history(path):
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append((int(row["epoch"]), LossBreakdown(*(float(row[c]) for c in HISTORY_COLUMNS[1:]))))
    return out


def train_loop(store, train_ids, cfg, out_dir, *, resume=False, step_log=None):
    """Train for ``cfg.epochs`` epochs over ``train_ids`` drawn from ``store``.

    Writes ``checkpoint_XXXX.pt`` every ``cfg.checkpoint_every`` epochs and at
    the end, keeps ``latest.pt`` current, and writes per-epoch mean losses to
    ``history.csv``. With ``resume`` the run continues after the epoch stored
    in ``latest.pt``.

    Args:
        step_log: optional list that receives every step's LossBreakdown.

    Returns:
        ``(latest checkpoint path, history)`` where history is a list of
        ``(epoch, LossBreakdown)``.
    """
    from .data import batch_iterator  # circular at import time

    train_ids = list(train_ids)
    if not train_ids:
        raise RejectedInputError("training split is empty")
    if len(train_ids) == 1 and 2**cfg.depth >= cfg.image_size:
        raise RejectedInputError("one training sample cannot be batch-normalised at a 1x1 bottleneck")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    latest = out_dir / "latest.pt"
    history_path = out_dir / "history.csv"

    if resume and latest.exists():
        nets, start = load_checkpoint(latest)
        history = [h for h in read_history(history_path) if h[0] <= start] if history_path.exists() else []
        log.info("resuming after epoch %d", start)
    else:
        nets, start, history = Networks(cfg), 0, []
        save_checkpoint(latest, nets, 0)
        _write_history(history_path, history)
    if resume:
        cfg = nets.cfg = replace(nets.cfg, epochs=cfg.epochs)

    for epoch in range(start + 1, cfg.epochs + 1):
        steps = []
        batches = batch_iterator(
            train_ids, store, cfg.batch_size, cfg.seed, epoch, augment=True, merge_singleton=True
        )
        for k, batch in enumerate(batches):
            try:
                lb = train_step(nets, batch, cfg, step_seeds(cfg.seed, epoch, k))
            except TrainingAbort as exc:
                raise TrainingAbort(f"epoch {epoch} step {k}: {exc}", last_checkpoint=latest) from exc
            steps.append(lb)
            if step_log is not None:
                step_log.append(lb)
        mean = LossBreakdown.mean(steps)
        history.append((epoch, mean))
        log.info("epoch %d %s", epoch, mean)
        if epoch % cfg.checkpoint_every == 0 or epoch == cfg.epochs:
            save_checkpoint(out_dir / f"checkpoint_{epoch:04d}.pt", nets, epoch)
            save_checkpoint(latest, nets, epoch)
            _write_history(history_path, history)
    _write_history(history_path, history)
    return latest, history


# --- inference ----------------------------------------------------------------


def dewater(checkpoint, img, noise_seed=0):
    """Restore one (H, W, 3) image with G1 in evaluation mode.

    ``checkpoint`` is a path or a :class:`Networks`. H and W must be multiples
    of ``2**depth``.
    """
    nets = load_checkpoint(checkpoint)[0] if isinstance(checkpoint, (str, Path)) else checkpoint
    img = np.asarray(img, dtype=np.float32)
    if img.ndim != 3 or img.shape[-1] != 3:
        raise RejectedInputError(f"expected (H, W, 3) image, got {img.shape}")
    g1 = nets.g1
    was_training = g1.training
    g1.eval()
    try:
        with torch.no_grad():
            out = forward_g1(g1, to_tensor(img[None], next(g1.parameters()).dtype), noise_seed)
    finally:
        g1.train(was_training)
    return out[0].permute(1, 2, 0).numpy().astype(np.float64)
