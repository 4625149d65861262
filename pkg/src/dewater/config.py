"""Flat ``key = value`` run configuration.

Every key has a default; unknown keys are rejected. ``DGD_CONFIG`` may name a
default file that is read before any file given on the command line.
"""

import os
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import RejectedInputError
from .training import TrainConfig

ENV_VAR = "DGD_CONFIG"


@dataclass
class RunConfig(TrainConfig):
    dataset_root: str = ""
    cache_dir: str = "cache"
    out_dir: str = "runs"
    checkpoint: str = ""
    split_quadrants: bool = True
    train_fraction: float = 0.8
    noise_seed: int = 0
    resume: bool = False

    def train_config(self):
        names = {f.name for f in fields(TrainConfig)}
        return TrainConfig(**{k: v for k, v in vars(self).items() if k in names})


HELP = {
    "lr": "Adam learning rate for G1, G2 and D",
    "beta1": "Adam first-moment decay",
    "beta2": "Adam second-moment decay",
    "batch_size": "mini-batch size",
    "epochs": "training epochs",
    "lambda1": "weight of the G1 L1 loss",
    "lambda2": "weight of the G2 recomposition loss",
    "seed": "seed for weight init, shuffling, flips and dropout noise",
    "checkpoint_every": "write a numbered checkpoint every N epochs",
    "detach_g1_in_l2": "stop the G2 loss gradient from reaching G1",
    "image_size": "training resolution (square)",
    "depth": "U-Net down/up levels; 2**depth must divide the image size",
    "base_width": "generator channels at the first encoder level",
    "disc_width": "discriminator channels at the first layer",
    "dru_blocks_per_skip": "residual units on each skip connection",
    "dataset_root": "paired dataset directory (prepare-data)",
    "cache_dir": "prepared sample cache directory",
    "out_dir": "output directory for checkpoints, history and images",
    "checkpoint": "checkpoint file for dewater",
    "split_quadrants": "cut each source pair into four quadrants",
    "train_fraction": "share of samples in the training split",
    "noise_seed": "dropout seed used at inference",
    "resume": "continue training from out_dir/latest.pt",
}


def _coerce(name, raw, default):
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(f"not a boolean: {raw!r}")
            return low in ("true", "1", "yes")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        return raw
    except ValueError as exc:
        raise RejectedInputError(f"bad value for {name}: {exc}") from exc


def parse_config_text(text, source="<config>"):
    defaults = {f.name: f.default for f in fields(RunConfig)}
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise RejectedInputError(f"{source}:{lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in defaults:
            raise RejectedInputError(f"{source}:{lineno}: unknown key {key!r}")
        out[key] = _coerce(key, raw, defaults[key])
    return out


def load_config(path=None, **overrides):
    """Defaults, then ``$DGD_CONFIG``, then ``path``, then keyword overrides."""
    values = {}
    for p in (os.environ.get(ENV_VAR), path):
        if p:
            values.update(parse_config_text(Path(p).read_text(), str(p)))
    values.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig(**values)


def describe_keys():
    lines = []
    for f in fields(RunConfig):
        lines.append(f"  {f.name} = {f.default!r:<10}  {HELP.get(f.name, '')}")
    return "\n".join(lines)
