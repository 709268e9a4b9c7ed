"""Command-line entry point: ``mscgm <subcommand> [flags]``.

Exit codes: 0 success, 1 runtime or validation failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import os
import sys
import time

import numpy as np

from . import __version__

BANNER = ("note: networks are miniature stand-ins (a few residual blocks per resolution) "
          "for the full-size UNet, generator and critic; expect desk-scale quality only.")


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _nonneg_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {v}")
    return v


def _float_list(text):
    try:
        vals = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not vals or any(v < 0 for v in vals):
        raise argparse.ArgumentTypeError("thresholds must be a non-empty list of values >= 0")
    return vals


def build_parser():
    p = argparse.ArgumentParser(prog="mscgm", description="Multi-scale wavelet bridge diffusion toolkit.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, metavar="command")

    a = sub.add_parser("analyze", help="per-scale subband statistics of a corpus")
    a.add_argument("--manifest", required=True)
    a.add_argument("--levels", type=_positive_int, default=4)
    a.add_argument("--thresholds", type=_float_list, default=[0.01])
    a.add_argument("--patch", type=_positive_int, default=None)
    a.add_argument("--patches-per-image", type=_positive_int, default=1)
    a.add_argument("--bins", type=_positive_int, default=64)
    a.add_argument("--column", choices=("target", "conditional"), default="target")
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--out", required=True)

    for name, helptext in (("train-bbdp", "train the coarse-band bridge predictor"),
                           ("train-gan", "train the multi-scale subband generator")):
        t = sub.add_parser(name, help=helptext)
        t.add_argument("--manifest", required=True)
        t.add_argument("--config", default=None, help="JSON training config; flags override it")
        t.add_argument("--out", required=True, help="checkpoint path")
        t.add_argument("--log", default=None, help="loss CSV path (default: <out>.loss.csv)")
        t.add_argument("--seed", type=int, default=None)
        t.add_argument("--steps", type=_nonneg_int, default=None)
        t.add_argument("--batch", type=_positive_int, default=None)
        t.add_argument("--levels", type=_positive_int, default=None)
        t.add_argument("--T", type=_positive_int, default=None)
        t.add_argument("--lr", type=float, default=None)
        t.add_argument("--patch", type=_positive_int, default=None)
        t.add_argument("--patches-per-image", type=_positive_int, default=1)
        t.add_argument("--degrade", default=None, help='e.g. "blur:2,noise:0.05" or "bicubic:4"')
        t.add_argument("--checkpoint-every", type=_nonneg_int, default=None)

    s = sub.add_parser("sample", help="restore one image")
    s.add_argument("--bbdp", required=True)
    s.add_argument("--gan", required=True)
    s.add_argument("--input", required=True)
    s.add_argument("--steps", type=_positive_int, default=None)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.add_argument("--trace", default=None, help="sidecar CSV path (default: <out>.csv)")

    m = sub.add_parser("metrics", help="PSNR/SSIM between two directories, paired by filename")
    m.add_argument("--pred", required=True)
    m.add_argument("--ref", required=True)
    m.add_argument("--out", required=True)
    m.add_argument("--allow-partial", action="store_true")

    v = sub.add_parser("verify", help="run the self-verification suites")
    v.add_argument("--suite", choices=("all", "wavelet", "bbdp", "grad", "duality"), default="all")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--report", default=None, help="CSV report path")

    g = sub.add_parser("gradcheck", help="finite-difference checks of every layer kind and the networks")
    g.add_argument("--repeats", type=_positive_int, default=20)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--report", default=None)
    return p


def _err(msg):
    print(f"error: {msg}", file=sys.stderr)
    return 1


# -- analyze -------------------------------------------------------------------


def cmd_analyze(args):
    from . import stats
    from .data import DataConfig, build_dataset, read_manifest
    from .imageio import read_image

    pairs = read_manifest(args.manifest)
    col = 1 if args.column == "target" else 0
    images, failures = [], []
    for pair in pairs:
        try:
            images.append(read_image(pair[col]))
        except (OSError, ValueError) as exc:
            failures.append(f"{pair[col]}: {exc}")
    if failures:
        return _err("could not read:\n  " + "\n  ".join(failures))
    if not images:
        return _err(f"{args.manifest}: no images listed")
    ds = build_dataset(images, images, DataConfig(patch=args.patch, patches_per_image=args.patches_per_image,
                                                  levels=args.levels, seed=args.seed),
                       sources=[p[col] for p in pairs])
    imgs = [ds.x0[i] for i in range(len(ds))]
    rows = stats.subband_scan(imgs, args.levels, args.thresholds, n_bins=args.bins)
    with open(args.out, "w", newline="") as fh:
        stats.write_scan_csv(rows, args.thresholds, fh)
    mom = stats.corpus_moments(imgs)
    print(f"wrote {len(rows)} rows to {args.out}")
    print("corpus summary")
    print(f"  images: {len(imgs)}  pixels: {mom['n_samples']}")
    print(f"  skewness: {mom['skewness']:.6f}")
    print(f"  excess_kurtosis: {mom['excess_kurtosis']:.6f}")
    return 0


# -- training ----------------------------------------------------------------


def _train_config(args, kind):
    from .train import TrainConfig

    base = TrainConfig.from_json(args.config).to_dict() if args.config else {}
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.levels is not None:
        over["levels"] = args.levels
    if args.T is not None:
        over["T"] = args.T
    if args.checkpoint_every is not None:
        over["checkpoint_every"] = args.checkpoint_every
    prefix = "bbdp" if kind == "bbdp" else "gan"
    if args.steps is not None:
        over[f"{prefix}_steps"] = args.steps
    if args.batch is not None:
        over[f"{prefix}_batch"] = args.batch
    if args.lr is not None:
        over["lr_bbdp" if kind == "bbdp" else "lr_g"] = args.lr
    base.update(over)
    return TrainConfig.from_dict(base)


def cmd_train(args, kind):
    from .checkpoint import save_checkpoint
    from .data import DataConfig, Degradation, load_dataset
    from .train import train_bbdp, train_msgan, write_loss_log

    cfg = _train_config(args, kind)
    print(f"seed: {cfg.seed}")
    print(BANNER)
    deg = Degradation.parse(args.degrade) if args.degrade else Degradation()
    ds = load_dataset(args.manifest, DataConfig(patch=args.patch, patches_per_image=args.patches_per_image,
                                                levels=cfg.levels, seed=cfg.seed, degradation=deg))
    print(f"dataset: {len(ds)} pairs of shape {ds.image_shape}")

    def periodic(ckpt):
        path = f"{args.out}.step{ckpt.step}"
        save_checkpoint(ckpt, path)
        print(f"checkpoint: {path}")

    log = []
    t0 = time.perf_counter()
    fn = train_bbdp if kind == "bbdp" else train_msgan
    ckpt = fn(ds, cfg, log, on_checkpoint=periodic)
    save_checkpoint(ckpt, args.out)
    log_path = args.log or f"{args.out}.loss.csv"
    with open(log_path, "w", newline="") as fh:
        write_loss_log(log, fh)
    final = log[-1]["loss"] if log else float("nan")
    print(f"trained {len(log)} steps in {time.perf_counter() - t0:.1f}s; final loss {final:.6g}")
    print(f"checkpoint: {args.out}\nloss log: {log_path}")
    return 0


# -- sampling ----------------------------------------------------------------


def cmd_sample(args):
    from .checkpoint import load_checkpoint
    from .core import Rng
    from .imageio import read_image, write_image
    from .sampling import SampleTrace, sample_full, write_trace_csv

    print(f"seed: {args.seed}")
    print(BANNER)
    cb, cg = load_checkpoint(args.bbdp), load_checkpoint(args.gan)
    y = read_image(args.input)
    trace = SampleTrace()
    out = sample_full(cb, cg, y, n_steps=args.steps, rng=Rng(args.seed), trace=trace)
    write_image(args.out, out, bits=16)
    trace_path = args.trace or f"{args.out}.csv"
    with open(trace_path, "w", newline="") as fh:
        write_trace_csv(trace, fh)
    print(f"wrote {args.out} ({len(trace.diffusion_pixels)} diffusion steps, "
          f"{sum(trace.diffusion_pixels)} pixel evaluations); trace: {trace_path}")
    return 0


# -- metrics -----------------------------------------------------------------

_IMAGE_EXT = (".png", ".pgm")


def _list_images(d):
    return {f for f in os.listdir(d) if f.lower().endswith(_IMAGE_EXT) and os.path.isfile(os.path.join(d, f))}


def cmd_metrics(args):
    from . import stats
    from .imageio import read_image

    pred, ref = _list_images(args.pred), _list_images(args.ref)
    common = sorted(pred & ref)
    unpaired = sorted(pred ^ ref)
    if unpaired:
        print("unpaired files:\n  " + "\n  ".join(unpaired), file=sys.stderr)
        if not args.allow_partial:
            return _err(f"{len(unpaired)} unpaired files (use --allow-partial to skip them)")
    if not common:
        return _err("no image pairs to compare")
    rows = []
    for name in common:
        a, b = read_image(os.path.join(args.pred, name)), read_image(os.path.join(args.ref, name))
        if a.shape != b.shape:
            return _err(f"{name}: shape {a.shape} vs {b.shape}")
        # images live in [-1, 1], so the peak-to-peak range is 2
        rows.append((name, stats.psnr(a, b, 2.0), stats.ssim(a, b, 2.0)))
    psnrs = np.array([r[1] for r in rows])
    mean_psnr = float("inf") if np.all(np.isinf(psnrs)) else float(np.mean(psnrs))
    mean_ssim = float(np.mean([r[2] for r in rows]))
    with open(args.out, "w") as fh:
        fh.write("file,psnr,ssim\n")
        for name, p, s in rows:
            fh.write(f"{name},{_fmt(p)},{s!r}\n")
        fh.write(f"mean,{_fmt(mean_psnr)},{mean_ssim!r}\n")
    print(f"{len(rows)} pairs: mean PSNR {_fmt(mean_psnr)} dB, mean SSIM {mean_ssim:.6f}")
    return 0


def _fmt(v):
    return "inf" if np.isinf(v) else repr(float(v))


# -- verification ------------------------------------------------------------


def _report(results, path):
    for r in results:
        print(r.line())
    if path:
        with open(path, "w") as fh:
            fh.write("suite,check,passed,value,tolerance,seconds\n")
            for r in results:
                fh.write(f"{r.suite},{r.name},{int(r.passed)},{r.value!r},{r.tolerance!r},{r.seconds:.4f}\n")
    failed = [f"{r.suite}/{r.name}" for r in results if not r.passed]
    if failed:
        return _err("failed invariants: " + ", ".join(failed))
    print(f"all {len(results)} checks passed")
    return 0


def cmd_verify(args):
    from .verify import run

    return _report(run(args.suite, args.seed), args.report)


def cmd_gradcheck(args):
    from .verify import network_checks, suite_grad

    results = suite_grad(args.seed, repeats=args.repeats) + network_checks(args.seed)
    return _report(results, args.report)


# -- entry point -------------------------------------------------------------


def _thread_limit():
    n = os.environ.get("MSCGM_THREADS")
    if not n:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=max(1, int(n)))


def main(argv=None):
    from .errors import MSCGMError

    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "analyze": cmd_analyze,
        "train-bbdp": lambda a: cmd_train(a, "bbdp"),
        "train-gan": lambda a: cmd_train(a, "gan"),
        "sample": cmd_sample,
        "metrics": cmd_metrics,
        "verify": cmd_verify,
        "gradcheck": cmd_gradcheck,
    }
    try:
        with _thread_limit():
            return handlers[args.command](args)
    except (MSCGMError, OSError, json.JSONDecodeError) as exc:
        return _err(str(exc))


if __name__ == "__main__":
    sys.exit(main())
