"""``dewater`` command line: prepare-data, train, dewater, evaluate, synthesize.

Exit codes: 0 success, 1 fatal error, 2 finished with warnings.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

from . import data, metrics, synth
from .config import describe_keys, load_config
from .errors import RejectedInputError, TrainingAbort
from .imageio import is_image, pad_to_multiple, read_image, write_png
from .training import dewater, load_checkpoint, train_loop

log = logging.getLogger("dewater")

EXIT_OK, EXIT_FATAL, EXIT_WARN = 0, 1, 2
SUFFIX = "_dewatered"


def resolve_cache(cache_dir):
    """A prepared cache directory, or the one named by ``cache_dir/latest``."""
    cache_dir = Path(cache_dir)
    if (cache_dir / "index.json").exists():
        return cache_dir
    pointer = cache_dir / "latest"
    if pointer.exists():
        return cache_dir / pointer.read_text().strip()
    raise RejectedInputError(f"no prepared cache found in {cache_dir}; run prepare-data first")


def cmd_prepare_data(root, cache_dir, seed=0, size=data.TRAIN_SIZE, split_quadrants=True, train_fraction=0.8):
    """Prepare and cache a paired dataset. Returns ``(exit code, PreparedDataset)``."""
    prepared = data.prepare_dataset(root, cache_dir, seed, size, split_quadrants, train_fraction)
    (Path(cache_dir) / "latest").write_text(prepared.directory.name + "\n")
    r = prepared.report
    print(
        f"{r['samples']} samples from {r['source_pairs']} pairs "
        f"(train {r['train']}, test {r['test']}), cache {'hit' if prepared.cache_hit else 'written'}: "
        f"{prepared.directory}"
    )
    if r["skipped"] or r["samples"] == 0:
        for p in r["skipped"]:
            log.warning("skipped unpaired file %s", p)
        if r["samples"] == 0:
            log.warning("no samples found under %s", root)
        return EXIT_WARN, prepared
    return EXIT_OK, prepared


def cmd_train(cfg):
    """Train from a prepared cache. ``cfg`` is a RunConfig."""
    store = data.SampleCache(resolve_cache(cfg.cache_dir))
    tcfg = cfg.train_config()
    try:
        latest, history = train_loop(store, store.manifest.train_ids, tcfg, cfg.out_dir, resume=cfg.resume)
    except TrainingAbort as exc:
        log.error("%s (last good checkpoint: %s)", exc, exc.last_checkpoint)
        return EXIT_FATAL
    print(f"checkpoint: {latest}")
    for epoch, lb in history:
        print(
            f"epoch {epoch}: adv_d {lb.adv_d:.4f} adv_g {lb.adv_g:.4f} "
            f"l1 {lb.l1_g1:.4f} l2 {lb.l2_g2:.4f} total {lb.total_g:.4f}"
        )
    return EXIT_OK


def _inputs(path):
    path = Path(path)
    if path.is_dir():
        return sorted(p for p in path.iterdir() if is_image(p))
    return [path]


def cmd_dewater(checkpoint, inputs, out_dir, seed=0):
    """Restore every image in ``inputs`` (file or directory) into ``out_dir``."""
    nets, _ = load_checkpoint(checkpoint)
    multiple = 2**nets.cfg.depth
    done, failed = 0, 0
    for path in _inputs(inputs):
        try:
            img = read_image(path)
        except RejectedInputError as exc:
            log.warning("skipping %s: %s", path, exc)
            failed += 1
            continue
        padded, (h, w) = pad_to_multiple(img, multiple)
        out = dewater(nets, padded, seed)[:h, :w]
        write_png(Path(out_dir) / f"{path.stem}{SUFFIX}.png", out)
        done += 1
    if done == 0:
        log.error("no images processed")
        return EXIT_FATAL
    return EXIT_WARN if failed else EXIT_OK


def _by_stem(directory):
    out = {}
    for p in sorted(Path(directory).iterdir()):
        if is_image(p):
            stem = p.stem[: -len(SUFFIX)] if p.stem.endswith(SUFFIX) else p.stem
            out[stem] = p
    return out


def cmd_evaluate(pred_dir, ref_dir, out_path, dataset_id="", method_id=""):
    """Write ``<out>.csv`` and ``<out>.json`` metric reports."""
    preds = _by_stem(pred_dir)
    warn = False
    if ref_dir is None:
        entries = [(s, read_image(p), None) for s, p in preds.items()]
    else:
        refs = _by_stem(ref_dir)
        common = sorted(set(preds) & set(refs))
        leftovers = sorted(set(preds) ^ set(refs))
        if leftovers:
            warn = True
            log.warning("unmatched images ignored: %s", ", ".join(leftovers))
        entries = [(s, read_image(preds[s]), read_image(refs[s])) for s in common]
    if not entries:
        log.error("no images to evaluate")
        return EXIT_FATAL
    report = metrics.build_report(entries, dataset_id, method_id)
    out = Path(out_path)
    base = out.with_suffix("") if out.suffix in (".csv", ".json") else out
    base.parent.mkdir(parents=True, exist_ok=True)
    base.with_suffix(".csv").write_text(report.to_csv())
    base.with_suffix(".json").write_text(report.to_json())
    print(json.dumps(report.aggregate, indent=2))
    return EXIT_WARN if warn else EXIT_OK


def cmd_synthesize(clean_dir, params_file, out_dir, seed=0):
    written = synth.synthesize_dataset(clean_dir, params_file, out_dir, seed)
    print(f"wrote {len(written)} pairs under {out_dir}")
    return EXIT_OK if written else EXIT_WARN


def build_parser():
    parser = argparse.ArgumentParser(
        prog="dewater",
        description="Underwater image restoration with dual-generator conditional GANs.",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="config keys (key = value, one per line):\n" + describe_keys(),
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory")

    p = sub.add_parser("prepare-data", help="scan, quadrisect, resize and cache a paired dataset")
    common(p)
    p.add_argument("--root", help="dataset root (overrides dataset_root)")
    p.add_argument("--cache", help="cache directory (overrides cache_dir)")

    p = sub.add_parser("train", help="train the networks on a prepared cache")
    common(p)
    p.add_argument("--cache", help="prepared cache directory")
    p.add_argument("--epochs", type=int)
    p.add_argument("--resume", action="store_true", default=None)

    p = sub.add_parser("dewater", help="restore images with a trained checkpoint")
    common(p)
    p.add_argument("--checkpoint", help="checkpoint file")
    p.add_argument("input", help="image file or directory")

    p = sub.add_parser("evaluate", help="compute ED, PSNR, SSIM and UIQM reports")
    common(p)
    p.add_argument("pred_dir")
    p.add_argument("--ref", help="reference directory; omit for UIQM only")
    p.add_argument("--dataset-id", default="")
    p.add_argument("--method-id", default="")

    p = sub.add_parser("synthesize", help="make underwater/reference pairs from clean images")
    common(p)
    p.add_argument("clean_dir")
    p.add_argument("params_file")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config, seed=args.seed, out_dir=args.out)
        if args.command == "prepare-data":
            root = args.root or cfg.dataset_root
            if not root:
                raise RejectedInputError("no dataset root given (--root or dataset_root)")
            code, _ = cmd_prepare_data(
                root, args.cache or cfg.cache_dir, cfg.seed, cfg.image_size, cfg.split_quadrants, cfg.train_fraction
            )
            return code
        if args.command == "train":
            cfg = load_config(
                args.config, seed=args.seed, out_dir=args.out, cache_dir=args.cache, epochs=args.epochs,
                resume=args.resume,
            )
            return cmd_train(cfg)
        if args.command == "dewater":
            ckpt = args.checkpoint or cfg.checkpoint
            if not ckpt:
                raise RejectedInputError("no checkpoint given (--checkpoint or checkpoint)")
            seed = args.seed if args.seed is not None else cfg.noise_seed
            return cmd_dewater(ckpt, args.input, cfg.out_dir, seed)
        if args.command == "evaluate":
            out = Path(cfg.out_dir) / "metrics"
            return cmd_evaluate(args.pred_dir, args.ref, out, args.dataset_id, args.method_id)
        if args.command == "synthesize":
            return cmd_synthesize(args.clean_dir, args.params_file, cfg.out_dir, cfg.seed)
    except (RejectedInputError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_FATAL
    return EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())
