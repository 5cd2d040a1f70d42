"""Command-line entry points.

Every command exits 0 on success.  Failures print exactly one line of the form
``error: <kind>: <message>`` to stderr and exit with a kind-specific code.
"""
import argparse
import json
import logging
import os
import sys
import time
from contextlib import nullcontext
from pathlib import Path

import numpy as np

from .exceptions import ConfigError, DimensionError, FileFormatError, NumericError, VCSError

EXIT_USAGE, EXIT_DATA, EXIT_FILE, EXIT_NUMERIC, EXIT_CONFIG = 2, 3, 4, 5, 6


class CliError(Exception):
    def __init__(self, kind, message, code):
        super().__init__(message)
        self.kind = kind
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("usage", message, EXIT_USAGE)


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {text}")
    return v


def _tiles(text):
    try:
        r, c = (int(a) for a in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"tiles must look like RxC, got {text!r}") from None
    if r < 1 or c < 1:
        raise argparse.ArgumentTypeError(f"tile counts must be positive, got {text!r}")
    return r, c


def thread_limit():
    """Honour VCS_THREADS (0 or unset = library default)."""
    n = int(os.environ.get("VCS_THREADS", "0") or 0)
    if n <= 0:
        return nullcontext()
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=n)


def _load_array(path, preferred):
    from .io import read_vcub
    recs = read_vcub(path)
    if preferred in recs:
        return recs[preferred]
    if len(recs) == 1:
        return next(iter(recs.values()))
    raise FileFormatError(f"{path}: expected a record named {preferred!r}, found {sorted(recs)}")


# ---------------------------------------------------------------------------
# commands


def cmd_gen_masks(args):
    from .io import write_vcub
    from .sensing import generate_masks
    m = generate_masks(args.w, args.h, args.t, args.seed, args.kind)
    write_vcub(args.out, {"mask": m.data})


def cmd_simulate(args):
    from .io import write_vcub
    from .sensing import forward_measure, forward_measure_color
    x = _load_array(args.video, "x").astype(np.float64)
    m = _load_array(args.mask, "mask").astype(np.float64)
    vid_shape = x.shape[:3] if args.color else x.shape
    if vid_shape != m.shape:
        raise DimensionError(f"video shape {list(x.shape)} does not match mask shape {list(m.shape)}")
    rng = np.random.default_rng(args.seed)
    fn = forward_measure_color if args.color else forward_measure
    y = fn(x, m, args.sigma, rng)
    write_vcub(args.out, {"y": y.data})


def _reconstructor(args):
    if args.method == "gap-tv":
        from .gap_tv import GapTvConfig, gap_tv_reconstruct
        cfg = GapTvConfig()
        if args.iters is not None:
            cfg.iters = args.iters
        if args.tv_weight is not None:
            cfg.tv_weight = args.tv_weight
        GapTvConfig(**vars(cfg))
        return lambda y, m: gap_tv_reconstruct(y, m, cfg)
    if not args.model:
        raise CliError("usage", "--method unfold requires --model", EXIT_USAGE)
    from .io import load_checkpoint
    from .unfold_net import reconstruct
    model = load_checkpoint(args.model)
    return lambda y, m: reconstruct(model, y, m)[0]


def cmd_reconstruct(args):
    from .io import export_pgm_ppm, write_vcub
    from .metrics import tile_apply
    y = _load_array(args.y, "y").astype(np.float64)
    m = _load_array(args.mask, "mask").astype(np.float64)
    if y.shape != m.shape[:2]:
        raise DimensionError(f"measurement shape {list(y.shape)} does not match mask shape {list(m.shape)}")
    fn = _reconstructor(args)
    t0 = time.perf_counter()
    x = tile_apply(fn, y, m, args.tiles)
    seconds = time.perf_counter() - t0
    write_vcub(args.out, {"x": x})
    if args.export_dir:
        export_pgm_ppm(x, args.export_dir)
    print(f"seconds: {seconds:.6f}")


def cmd_train(args):
    from .io import RunConfig, save_checkpoint, write_vcub
    from .training import train
    from .unfold_net import UnfoldModel
    cfg = RunConfig.load(args.config)
    if cfg.model.mode != cfg.train.mode:
        raise ConfigError(f"model.mode={cfg.model.mode!r} but train.mode={cfg.train.mode!r}")
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(cfg.to_json())
    model = UnfoldModel(cfg.model)
    res = train(model, cfg.train, log_path=out / "loss.csv", checkpoint_dir=out)
    save_checkpoint(out / "model.vcub", model)
    write_vcub(out / "mask.vcub", {"mask": res.mask})
    print(f"seconds: {res.seconds:.3f}")
    print(f"final loss: {res.log[-1]['loss']:.6g}" if res.log else "final loss: n/a")


def cmd_synth(args):
    from .io import write_vcub
    from .training import TrainConfig, synth_dataset
    cfg = TrainConfig(frame_dims=(args.w, args.h, args.t), mode=args.mode, samples=args.count, seed=args.seed)
    write_vcub(args.out, {"scenes": np.stack(synth_dataset(cfg))})


def cmd_eval(args):
    from .io import load_checkpoint, read_vcub
    from .metrics import eval_flexibility_masks
    model = load_checkpoint(args.model)
    recs = read_vcub(args.suite)
    if "scenes" not in recs:
        raise FileFormatError(f"{args.suite}: no 'scenes' record")
    scenes = list(recs["scenes"].astype(np.float64))
    if args.mask:
        mask = _load_array(args.mask, "mask").astype(np.float64)
    elif "mask" in recs:
        mask = recs["mask"].astype(np.float64)
    else:
        raise CliError("usage", "no seen mask: pass --mask or include a 'mask' record in the suite", EXIT_USAGE)
    report = eval_flexibility_masks(model, scenes, mask, n_new=args.n_new, seed=args.seed)
    report.to_csv(args.report)
    print(report.to_table())


def cmd_export(args):
    from .io import export_pgm_ppm
    cube = _load_array(args.cube, args.record)
    paths = export_pgm_ppm(cube, args.dir, args.prefix)
    print(f"wrote {len(paths)} frames to {args.dir}")


def build_parser():
    p = _Parser(prog="vcsnet", description="Video snapshot compressive imaging toolkit")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen-masks", help="write a random mask cube")
    g.add_argument("--w", type=_positive_int, required=True)
    g.add_argument("--h", type=_positive_int, required=True)
    g.add_argument("--t", type=_positive_int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--kind", choices=["binary", "continuous"], default="binary")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_masks)

    s = sub.add_parser("simulate", help="simulate a snapshot measurement")
    s.add_argument("--video", required=True)
    s.add_argument("--mask", required=True)
    s.add_argument("--sigma", type=float, default=0.0)
    s.add_argument("--seed", type=int, default=0, help="noise seed")
    s.add_argument("--color", action="store_true", help="video is RGB and is Bayer-mosaicked first")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    r = sub.add_parser("reconstruct", help="reconstruct a video from a measurement")
    r.add_argument("--y", required=True)
    r.add_argument("--mask", required=True)
    r.add_argument("--method", choices=["gap-tv", "unfold"], default="gap-tv")
    r.add_argument("--model")
    r.add_argument("--out", required=True)
    r.add_argument("--tiles", type=_tiles, default=(1, 1), metavar="RxC")
    r.add_argument("--iters", type=_positive_int, help="GAP-TV outer iterations")
    r.add_argument("--tv-weight", type=float, help="GAP-TV regularization weight")
    r.add_argument("--export-dir", help="also write PGM/PPM frames here")
    r.set_defaults(func=cmd_reconstruct)

    t = sub.add_parser("train", help="stage-by-stage training on synthetic scenes")
    t.add_argument("--config", required=True)
    t.add_argument("--out-dir", required=True)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="seen / unseen mask evaluation")
    e.add_argument("--model", required=True)
    e.add_argument("--suite", required=True, help="VCUB file with a 'scenes' record")
    e.add_argument("--mask", help="seen (training) mask; defaults to the suite's 'mask' record")
    e.add_argument("--report", required=True, help="CSV output path")
    e.add_argument("--n-new", type=int, default=3)
    e.add_argument("--seed", type=int, default=1000)
    e.set_defaults(func=cmd_eval)

    y = sub.add_parser("synth", help="write a synthetic scene suite")
    y.add_argument("--count", type=_positive_int, default=20)
    y.add_argument("--w", type=_positive_int, default=32)
    y.add_argument("--h", type=_positive_int, default=32)
    y.add_argument("--t", type=_positive_int, default=4)
    y.add_argument("--mode", choices=["gray", "color"], default="gray")
    y.add_argument("--seed", type=int, default=999)
    y.add_argument("--out", required=True)
    y.set_defaults(func=cmd_synth)

    x = sub.add_parser("export", help="write cube frames as PGM/PPM")
    x.add_argument("--cube", required=True)
    x.add_argument("--record", default="x")
    x.add_argument("--dir", required=True)
    x.add_argument("--prefix", default="frame")
    x.set_defaults(func=cmd_export)
    return p


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        with thread_limit():
            args.func(args)
    except CliError as exc:
        _fail(exc.kind, str(exc), exc.code)
    except ConfigError as exc:
        _fail("config", str(exc), EXIT_CONFIG)
    except DimensionError as exc:
        _fail("data", str(exc), EXIT_DATA)
    except FileFormatError as exc:
        _fail("file", str(exc), EXIT_FILE)
    except NumericError as exc:
        _fail("numeric", str(exc), EXIT_NUMERIC)
    except (VCSError, ValueError) as exc:
        _fail("data", str(exc), EXIT_DATA)
    except OSError as exc:
        _fail("file", str(exc), EXIT_FILE)
    return 0


def _fail(kind, message, code):
    print(f"error: {kind}: {' '.join(str(message).split())}", file=sys.stderr)
    sys.exit(code)


if __name__ == "__main__":
    sys.exit(main())
