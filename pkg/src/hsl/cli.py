"""Command-line entry point ``hsl``.

Exit codes: 0 success, 2 validation or format error, 3 numeric degeneracy,
1 for a failed gradient check.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .core import (Config, DegenerateError, HSLError, LabelMask, ParameterError, Rng,
                   load_config, read_image, read_mask, read_tensor, write_image, write_mask,
                   write_tensor)

GRADCHECK_TOL = 1e-4


def parse_seeds(text: str) -> list[int]:
    """``"3"``, ``"0,2,5"`` or an inclusive range ``"0..4"``."""
    try:
        if ".." in text:
            lo, hi = (int(p) for p in text.split("..", 1))
            if hi < lo:
                raise ParameterError(f"empty seed range {text!r}")
            return list(range(lo, hi + 1))
        return [int(p) for p in text.split(",") if p.strip()]
    except ValueError as exc:
        raise ParameterError(f"bad seed list {text!r}") from exc


def _config(args) -> Config:
    cfg = load_config(args.config) if args.config else Config()
    if args.seed is not None and args.command != "eval":
        seeds = parse_seeds(args.seed)
        if len(seeds) != 1:
            raise ParameterError(f"{args.command} takes a single seed, got {args.seed!r}")
        cfg = cfg.replace(seed=seeds[0])
    return cfg


def _print_kv(values: dict) -> None:
    for k, v in values.items():
        print(f"{k}={v!r}" if isinstance(v, float) else f"{k}={v}")


def cmd_augment(args, cfg: Config) -> int:
    from .styler import foreground_style_randomize, global_style_randomize
    from .superpix import segment

    img = read_image(args.inp)
    rng = Rng(cfg.seed, "augment")
    out = img
    if args.stage in ("fg", "both"):
        if args.mask is None:
            raise ParameterError("--mask is required for the fg stage")
        mask = read_mask(args.mask)
        coarse = segment(img, min(cfg.superpixels_per_scale), cfg.spx_iters, cfg.spx_temp,
                         cfg.spx_stride)
        out = foreground_style_randomize(out, mask, coarse, cfg, rng.spawn("fg"))
    if args.stage in ("global", "both"):
        out = global_style_randomize(out, cfg, rng.spawn("global"))
    write_image(args.out, out)
    return 0


def cmd_superpixel(args, cfg: Config) -> int:
    from .superpix import boundary_map, segment

    img = read_image(args.inp)
    scales = [int(s) for s in args.scales.split(",")]
    iters = args.iters if args.iters is not None else cfg.spx_iters
    for n in scales:
        labels = segment(img, n, iters, cfg.spx_temp, cfg.spx_stride)
        write_tensor(f"{args.out_prefix}_{n}.hslt", labels.labels.astype(np.uint32))
        overlay = img.copy()
        edge = boundary_map(labels)
        overlay[:, edge] = np.array([1.0, 0.0, 0.0])[:, None]
        write_image(f"{args.out_prefix}_{n}.ppm", overlay)
        print(f"scale={n} regions_present={len(labels.present())}")
    return 0


def cmd_enhance(args, cfg: Config) -> int:
    from .hsm import HsmWeights, hsm_enhance
    from .superpix import SuperpixelStack

    f_l, f_h = read_tensor(args.feat_low), read_tensor(args.feat_high)
    if f_l.ndim != 3 or f_h.ndim != 3:
        raise ParameterError("feature tensors must be (C, H, W)")
    label_fields = [read_tensor(p) for p in args.labels.split(",")]
    if len(label_fields) == len(cfg.superpixels_per_scale):
        counts = cfg.superpixels_per_scale
    else:
        counts = tuple(int(lab.max()) + 1 for lab in label_fields)
    masks = tuple(LabelMask(lab.astype(np.int64), n) for lab, n in zip(label_fields, counts))
    cfg = cfg.replace(L=len(masks), superpixels_per_scale=tuple(counts))
    if args.alpha is not None:
        cfg = cfg.replace(alpha=args.alpha)
    c_l, c_h = f_l.shape[0], f_h.shape[0]
    if args.weights:
        weights = HsmWeights.unflatten(read_tensor(args.weights), c_l, c_h, cfg.msa_heads)
    else:
        weights = HsmWeights.init(c_l, c_h, cfg.msa_heads, Rng(cfg.seed, "hsm"))
    write_tensor(args.out, hsm_enhance(f_l, f_h, SuperpixelStack(masks, counts), weights, cfg))
    return 0


def cmd_loss(args, cfg: Config) -> int:
    from .harness.episode_io import read_episode_dir
    from .pipeline import episode_loss_terms

    _print_kv(episode_loss_terms(read_episode_dir(args.episode), cfg))
    return 0


def cmd_segment(args, cfg: Config) -> int:
    from .harness.episode_io import read_episode_dir
    from .pipeline import infer_episode

    episode = read_episode_dir(args.episode)
    inf = infer_episode(episode, cfg)
    write_mask(args.out, inf.predict(args.threshold_mode))
    if args.heatmap:
        write_mask(args.heatmap, (inf.conf + 2.0) / 4.0)
    _print_kv({"mode": args.threshold_mode, **inf.diagnostics()})
    return 0


def cmd_eval(args, cfg: Config) -> int:
    from .harness.evaluate import evaluate

    seeds = parse_seeds(args.seed) if args.seed is not None else [0]
    report = evaluate(args.episodes, seeds, cfg, args.threshold_mode, args.suite,
                      threads=args.threads)
    text = report.to_text()
    if args.report:
        Path(args.report).write_text(text)
    if args.csv:
        Path(args.csv).write_text(report.to_csv())
    sys.stdout.write(text)
    return 0


def cmd_gradcheck(args, cfg: Config) -> int:
    from .harness.gradcheck import episode_gradient_check

    worst = episode_gradient_check(args.episodes, cfg.seed, cfg)
    _print_kv({f"max_rel_err.{k}": v for k, v in worst.items()})
    ok = max(worst.values()) < GRADCHECK_TOL
    print(f"gradcheck={'pass' if ok else 'fail'}")
    return 0 if ok else 1


def cmd_make_episodes(args, cfg: Config) -> int:
    from .harness.episode_io import write_episode_dir
    from .harness.evaluate import suite_episode

    out = Path(args.out)
    for i in range(args.count):
        ep = suite_episode(args.suite, cfg.seed, i, cfg.image_size)
        if args.k_shot > 1:
            ep = _with_shots(args.suite, cfg, i, args.k_shot)
        print(write_episode_dir(ep, out / f"episode_{i:03d}"))
    return 0


def _with_shots(suite: str, cfg: Config, index: int, k_shot: int):
    from .harness.episodes import (make_ambiguous_episode, make_episode,
                                   make_separable_episode, random_spec)
    from .harness.evaluate import episode_seed

    s = episode_seed(cfg.seed, suite, index)
    if suite == "high-contrast":
        return make_separable_episode(s, k_shot=k_shot, size=cfg.image_size)
    if suite == "ambiguous":
        return make_ambiguous_episode(s, k_shot=k_shot, size=cfg.image_size)
    return make_episode(random_spec(Rng(s, "mixed"), (0.3, 1.0), cfg.image_size), k_shot)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value config file")
    common.add_argument("--seed", help="seed; eval also accepts lists 0,1,2 and ranges 0..4")
    common.add_argument("--threads", type=int, default=1, help="worker processes for eval")

    parser = argparse.ArgumentParser(prog="hsl", description="Few-shot segmentation toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("augment", parents=[common], help="style randomization of one image")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--mask")
    p.add_argument("--out", required=True)
    p.add_argument("--stage", choices=("fg", "global", "both"), default="both")
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("superpixel", parents=[common], help="multi-scale superpixels")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--scales", default="25,100,225,400")
    p.add_argument("--iters", type=int)
    p.add_argument("--out-prefix", required=True)
    p.set_defaults(func=cmd_superpixel)

    p = sub.add_parser("enhance", parents=[common], help="superpixel-guided feature enhancement")
    p.add_argument("--feat-low", required=True)
    p.add_argument("--feat-high", required=True)
    p.add_argument("--labels", required=True, help="comma-separated label tensors, one per scale")
    p.add_argument("--weights", help="flat weight vector tensor; seeded init if omitted")
    p.add_argument("--alpha", type=float)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_enhance)

    p = sub.add_parser("loss", parents=[common], help="term-wise losses of one episode")
    p.add_argument("--episode", required=True)
    p.set_defaults(func=cmd_loss)

    p = sub.add_parser("segment", parents=[common], help="segment the query of one episode")
    p.add_argument("--episode", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--heatmap")
    p.add_argument("--threshold-mode", choices=("pcmt", "fixed0", "otsu"), default="pcmt")
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("eval", parents=[common], help="mean IoU over synthetic episodes")
    p.add_argument("--episodes", type=int, default=100)
    p.add_argument("--suite", choices=("mixed", "high-contrast", "ambiguous"), default="mixed")
    p.add_argument("--threshold-mode", choices=("pcmt", "fixed0", "otsu"), default="pcmt")
    p.add_argument("--report", help="also write the key=value report here")
    p.add_argument("--csv", help="per-episode CSV output")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", parents=[common], help="analytic vs numeric loss gradients")
    p.add_argument("--episodes", type=int, default=20)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("make-episodes", parents=[common], help="write synthetic episode dirs")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--suite", choices=("mixed", "high-contrast", "ambiguous"), default="mixed")
    p.add_argument("--k-shot", type=int, default=1)
    p.set_defaults(func=cmd_make_episodes)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.threads < 1:
            raise ParameterError("--threads must be >= 1")
        return args.func(args, _config(args))
    except DegenerateError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (HSLError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
