"""Command-line frontend.

Subcommands: ``gen`` (synthetic data), ``pvg`` (tracklet profiles),
``rerank`` (graph propagation), ``eval`` (CMC/mAP report), ``pipeline``
(profiles + propagation + before/after evaluation), ``project`` (2-D PCA
dump). Exit codes: 0 success, 1 validation error, 2 runtime/numeric error,
3 I/O error. ``--threads`` (or the GCR_THREADS environment variable) caps
the BLAS thread pool for the whole run.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

from threadpoolctl import threadpool_limits

from gcr.errors import GcrError, ValidationError
from gcr.evaluation import dump_ranked_csv, evaluate
from gcr.features import l2_normalize, load_features, save_features
from gcr.profiles import PvgConfig, mean_profile, pvg, save_profiles
from gcr.projection import write_projection_csv
from gcr.propagation import VARIANTS, GcrConfig, gcr
from gcr.synth import SynthConfig, generate

logger = logging.getLogger("gcr.cli")

_SYNTH_DEFAULTS = SynthConfig()
_GCR_DEFAULTS = GcrConfig()
_PVG_DEFAULTS = PvgConfig()


class _Parser(argparse.ArgumentParser):
    """argparse parser whose usage errors map to exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _common_flags():
    p = _Parser(add_help=False)
    p.add_argument("--threads", type=int, default=None,
                   help="BLAS thread cap (default: GCR_THREADS or all cores)")
    return p


def _input_flags(parser, required=True):
    parser.add_argument("--features", required=required, help="feature file path")
    parser.add_argument("--meta", required=required, help="metadata CSV path")


def _gcr_flags(parser):
    parser.add_argument("--k-g", dest="k_g", type=int, default=_GCR_DEFAULTS.k_g)
    parser.add_argument("--k-c", dest="k_c", type=int, default=_GCR_DEFAULTS.k_c)
    parser.add_argument("--gamma", type=float, default=_GCR_DEFAULTS.gamma)
    parser.add_argument("--alpha", type=float, default=_GCR_DEFAULTS.alpha)
    parser.add_argument("--iterations", type=int, default=_GCR_DEFAULTS.iterations)
    parser.add_argument("--variant", choices=VARIANTS, default=_GCR_DEFAULTS.variant)
    parser.add_argument("--renormalize", action=argparse.BooleanOptionalAction,
                        default=_GCR_DEFAULTS.renormalize)
    parser.add_argument("--pre-normalize", dest="pre_normalize",
                        action=argparse.BooleanOptionalAction,
                        default=_GCR_DEFAULTS.pre_normalize)


def _pvg_flags(parser):
    parser.add_argument("--pvg-method", dest="pvg_method", choices=("mean", "ridge"),
                        default=_PVG_DEFAULTS.method)
    parser.add_argument("--lambda-p", dest="lambda_p", type=float,
                        default=_PVG_DEFAULTS.lambda_p)


def _synth_flags(parser):
    parser.add_argument("--ids", type=int, default=_SYNTH_DEFAULTS.num_ids)
    parser.add_argument("--cameras", type=int, default=_SYNTH_DEFAULTS.cameras)
    parser.add_argument("--images", type=int,
                        default=_SYNTH_DEFAULTS.images_per_id_per_camera,
                        help="images per identity per camera (tracklet length)")
    parser.add_argument("--dim", type=int, default=_SYNTH_DEFAULTS.dim)
    parser.add_argument("--id-spread", dest="id_spread", type=float,
                        default=_SYNTH_DEFAULTS.id_spread)
    parser.add_argument("--noise", type=float, default=_SYNTH_DEFAULTS.noise)
    parser.add_argument("--camera-bias", dest="camera_bias", type=float,
                        default=_SYNTH_DEFAULTS.camera_bias)
    parser.add_argument("--distractor-fraction", dest="distractor_fraction",
                        type=float, default=_SYNTH_DEFAULTS.distractor_fraction)
    parser.add_argument("--seed", type=int, default=_SYNTH_DEFAULTS.seed)


def _report_flags(parser):
    parser.add_argument("--report", choices=("json", "table"), default="table")


def _build_parser():
    common = _common_flags()
    parser = _Parser(prog="gcr", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", parents=[common], help="write synthetic feature/meta files")
    _synth_flags(p)
    p.add_argument("--features", default="features.gcrf", help="output feature file")
    p.add_argument("--meta", default="features.csv", help="output metadata CSV")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("pvg", parents=[common], help="collapse tracklets to profile vectors")
    _input_flags(p)
    _pvg_flags(p)
    p.add_argument("--pre-normalize", dest="pre_normalize",
                   action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--out-features", default="profiles.gcrf")
    p.add_argument("--out-meta", default="profiles.csv")
    p.add_argument("--out-provenance", default="profiles.provenance.json")
    p.set_defaults(func=cmd_pvg)

    p = sub.add_parser("rerank", parents=[common], help="propagate features over k-NN graphs")
    _input_flags(p)
    _gcr_flags(p)
    p.add_argument("--out-features", default="reranked.gcrf")
    p.add_argument("--out-meta", default="reranked.csv")
    p.set_defaults(func=cmd_rerank)

    p = sub.add_parser("eval", parents=[common], help="evaluate retrieval quality")
    _input_flags(p)
    _report_flags(p)
    p.add_argument("--report-file", default=None, help="also write the JSON report here")
    p.add_argument("--ranked-csv", default=None, help="dump per-query ranked lists as CSV")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("pipeline", parents=[common],
                       help="profiles, propagation and before/after evaluation")
    _input_flags(p, required=False)
    p.add_argument("--synth", action="store_true",
                   help="generate the input instead of loading files")
    _synth_flags(p)
    _pvg_flags(p)
    _gcr_flags(p)
    _report_flags(p)
    p.add_argument("--baseline", choices=("pvg", "mean"), default="pvg",
                   help="profile method used for the 'before' evaluation")
    p.add_argument("--out-dir", dest="out_dir", default="gcr-out")
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("project", parents=[common], help="2-D PCA projection CSV")
    _input_flags(p)
    p.add_argument("--out", default="projection.csv")
    p.set_defaults(func=cmd_project)

    return parser


def _resolve_threads(args):
    threads = getattr(args, "threads", None)
    if threads is None:
        env = os.environ.get("GCR_THREADS")
        if env is not None:
            try:
                threads = int(env)
            except ValueError:
                raise ValidationError(f"GCR_THREADS must be an integer, got {env!r}") from None
    cores = os.cpu_count() or 1
    if threads is None:
        threads = cores
    if threads < 1:
        raise ValidationError(f"thread count must be positive, got {threads}")
    # growing a BLAS pool beyond the cores it was sized for is useless and
    # unstable in some OpenBLAS builds, so the cap never exceeds the machine
    if threads > cores:
        logger.warning("clamping thread cap %d to %d available cores", threads, cores)
        threads = cores
    return threads


def _log_config(args, threads):
    skip = {"func", "command"}
    resolved = {k: v for k, v in vars(args).items() if k not in skip}
    resolved["threads"] = threads
    line = " ".join(f"{k}={resolved[k]}" for k in sorted(resolved))
    logger.info("command=%s %s", args.command, line)


def _gcr_config(args):
    return GcrConfig(
        k_g=args.k_g,
        k_c=args.k_c,
        gamma=args.gamma,
        alpha=args.alpha,
        iterations=args.iterations,
        variant=args.variant,
        renormalize=args.renormalize,
        pre_normalize=args.pre_normalize,
    )


def _pvg_config(args):
    return PvgConfig(lambda_p=args.lambda_p, method=args.pvg_method)


def _synth_config(args):
    return SynthConfig(
        num_ids=args.ids,
        cameras=args.cameras,
        images_per_id_per_camera=args.images,
        dim=args.dim,
        id_spread=args.id_spread,
        noise=args.noise,
        camera_bias=args.camera_bias,
        distractor_fraction=args.distractor_fraction,
        seed=args.seed,
    )


def cmd_gen(args):
    fs = generate(_synth_config(args))
    save_features(fs, args.features, args.meta)
    logger.info("wrote %d x %d features to %s (meta %s)",
                fs.n, fs.dim, args.features, args.meta)
    return 0


def cmd_pvg(args):
    fs = load_features(args.features, args.meta)
    if args.pre_normalize:
        fs = l2_normalize(fs)
    profiles = pvg(fs, _pvg_config(args))
    save_profiles(profiles, args.out_features, args.out_meta, args.out_provenance)
    logger.info("wrote %d profiles from %d rows to %s",
                profiles.n, fs.n, args.out_features)
    return 0


def cmd_rerank(args):
    cfg = _gcr_config(args)
    fs = load_features(args.features, args.meta)
    if cfg.pre_normalize:
        fs = l2_normalize(fs)
    out = gcr(fs, cfg)
    save_features(out, args.out_features, args.out_meta)
    logger.info("wrote re-ranked features to %s", args.out_features)
    return 0


def cmd_eval(args):
    fs = load_features(args.features, args.meta)
    report = evaluate(fs)
    print(report.to_json() if args.report == "json" else report.format_table())
    if args.report_file:
        Path(args.report_file).write_text(report.to_json() + "\n", encoding="utf-8")
    if args.ranked_csv:
        dump_ranked_csv(fs, args.ranked_csv)
    return 0


def cmd_pipeline(args):
    has_files = args.features is not None or args.meta is not None
    if args.synth and has_files:
        raise ValidationError("choose exactly one input source: --synth or --features/--meta")
    if not args.synth and not (args.features and args.meta):
        raise ValidationError("provide --features and --meta, or pass --synth")
    gcr_cfg = _gcr_config(args)
    pvg_cfg = _pvg_config(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    stages = {}
    t0 = time.perf_counter()
    fs = generate(_synth_config(args)) if args.synth else load_features(args.features, args.meta)
    if gcr_cfg.pre_normalize:
        fs = l2_normalize(fs)
    stages["load"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    profiles = pvg(fs, pvg_cfg)
    save_profiles(profiles, out_dir / "profiles.gcrf", out_dir / "profiles.csv",
                  out_dir / "profiles.provenance.json")
    stages["pvg"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    before_features = mean_profile(fs).features if args.baseline == "mean" else profiles.features
    before = evaluate(before_features)
    stages["eval_before"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    reranked = gcr(profiles.features, gcr_cfg)
    stages["rerank"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    save_features(reranked, out_dir / "reranked.gcrf", out_dir / "reranked.csv")
    after = evaluate(reranked)
    stages["eval_after"] = time.perf_counter() - t0

    after.timings_ms.update({f"stage:{k}": v * 1e3 for k, v in stages.items()})
    (out_dir / "report_before.json").write_text(before.to_json() + "\n", encoding="utf-8")
    (out_dir / "report_after.json").write_text(after.to_json() + "\n", encoding="utf-8")

    if args.report == "json":
        print(json.dumps({"before": json.loads(before.to_json()),
                          "after": json.loads(after.to_json())}, sort_keys=True))
    else:
        print("before:")
        print(before.format_table())
        print()
        print("after:")
        print(after.format_table())
    logger.info("mAP %.6f -> %.6f, rank1 %.6f -> %.6f",
                before.mean_ap, after.mean_ap, before.rank1, after.rank1)
    return 0


def cmd_project(args):
    fs = load_features(args.features, args.meta)
    write_projection_csv(fs, args.out)
    logger.info("wrote projection for %d rows to %s", fs.n, args.out)
    return 0


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr)
    try:
        args = _build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        threads = _resolve_threads(args)
        _log_config(args, threads)
        with threadpool_limits(limits=threads):
            return args.func(args)
    except ValidationError as exc:
        logger.error("validation error: %s", exc)
        return exc.exit_code
    except GcrError as exc:
        logger.error("numeric error: %s", exc)
        return exc.exit_code
    except OSError as exc:
        logger.error("i/o error: %s", exc)
        return 3


if __name__ == "__main__":
    sys.exit(main())
