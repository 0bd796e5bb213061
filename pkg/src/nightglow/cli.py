"""Command-line entry point: ``nightglow <command> [flags]``.

Machine-readable results go to stdout (JSON or plain numbers), progress and
per-stage timing lines to stderr.
"""

import argparse
import functools
import io
import json
import logging
import sys
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from nightglow import apsf as apsf_mod
from nightglow import enhance as enhance_mod
from nightglow import glow, gradops, imgio, lightsource, metrics
from nightglow.config import resolve_config
from nightglow.errors import PARTIAL_FAILURE, NightglowError

log = logging.getLogger("nightglow")

@contextmanager
def stage(name):
    start = time.perf_counter()
    yield
    log.info("stage=%s ms=%.1f", name, (time.perf_counter() - start) * 1000.0)


def _emit(obj):
    print(json.dumps(metrics.json_safe(obj)))


def _flags(args, *names):
    return {n: getattr(args, n, None) for n in names}


APSF_FLAGS = ("T", "q", "terms", "angles", "lut")
MATTING_FLAGS = ("tau", "matting_window", "matting_eps", "matting_lambda", "cg_tol", "cg_max_iter", "half_resolution")
GLOW_FLAGS = APSF_FLAGS + MATTING_FLAGS + ("kernel_size", "noise_sigma", "alpha_noise_scale", "seed", "conv_mode")
BILATERAL_FLAGS = ("alpha1", "alpha2", "radius")
ENHANCE_FLAGS = ("gamma", "smooth_radius", "guided_eps")


def _config(args, names):
    return resolve_config(args.config, _flags(args, *names))


# --- command handlers -------------------------------------------------------

def cmd_apsf_kernel(args):
    cfg = _config(args, APSF_FLAGS + ("kernel_size",))
    lut = apsf_mod.lut_cache(cfg.lut, max_order=cfg.terms) if cfg.lut else None
    with stage("apsf-weights"):
        table = apsf_mod.apsf_weights(cfg.apsf_params(), lut=lut)
    with stage("apsf-kernel"):
        kernel = apsf_mod.apsf_kernel_2d(table, cfg.kernel_size, normalize=True)
    out = Path(args.out)
    imgio.save_image(kernel / kernel.max(), out)
    raw_path = Path(args.raw) if args.raw else out.with_suffix(".npy")
    buf = io.BytesIO()
    np.save(buf, kernel)
    imgio.atomic_write_bytes(raw_path, buf.getvalue())
    if args.figure:
        from nightglow.plotting import plot_apsf

        with stage("figure"):
            plot_apsf(table, kernel, args.figure)
    _emit({"size": kernel.shape[0], "peak": float(kernel.max()), "sum": float(kernel.sum()),
           "png": str(out), "raw": str(raw_path)})
    return 0


def cmd_detect_light(args):
    cfg = _config(args, MATTING_FLAGS)
    img = imgio.load_image(args.inp)
    with stage("detect-light"):
        res = lightsource.detect_light_sources(img, cfg.tau, cfg.matting())
    if args.out_matte:
        imgio.save_image(res.matte, args.out_matte)
    if args.out_light:
        imgio.save_image(res.light_image, args.out_light)
    print(f"{res.light_sz:.6f}")
    return 0


def cmd_render_glow(args):
    cfg = _config(args, GLOW_FLAGS)
    img = imgio.load_image(args.inp)
    with stage("render-glow"):
        res = glow.render_glow(img, cfg.recipe())
    imgio.save_image(res.glow_image, args.out)
    if args.out_layer:
        imgio.save_image(imgio.clamp01(res.glow_layer), args.out_layer)
    if args.out_matte:
        imgio.save_image(res.matte, args.out_matte)
    _emit({"light_sz": res.light_sz, "alpha": res.alpha, "epsilon": res.epsilon})
    return 0


def cmd_batch_render(args):
    cfg = _config(args, GLOW_FLAGS + ("jobs",))
    records = glow.read_manifest(args.manifest)
    out_dir = Path(args.out_dir)
    with stage("batch-render"):
        rows = glow.batch_render(records, cfg.recipe(), out_dir, jobs=cfg.jobs)
    report = Path(args.report) if args.report else out_dir / "report.jsonl"
    glow.write_report(rows, report)
    if args.figure:
        from nightglow.plotting import plot_batch_report

        plot_batch_report(rows, args.figure)
    failed = sum(r["status"] != "ok" for r in rows)
    log.info("batch done: %d records, %d failed, report %s", len(rows), failed, report)
    return PARTIAL_FAILURE if failed else 0


def cmd_edges(args):
    img = imgio.load_image(args.inp)
    with stage("edges"):
        edges = gradops.edge_map(img)
    imgio.save_image(edges, args.out)
    return 0


def cmd_texture(args):
    cfg = _config(args, BILATERAL_FLAGS)
    img = imgio.load_image(args.inp)
    with stage("texture"):
        tex = gradops.texture_map(img, cfg.bilateral())
    imgio.save_image(tex.visual, args.out)
    return 0


def cmd_enhance(args):
    cfg = _config(args, ENHANCE_FLAGS)
    dehazed = imgio.load_image(args.inp)
    haze = imgio.load_image(args.haze) if args.haze else dehazed
    params = cfg.enhance()
    with stage("attention"):
        att = enhance_mod.attention_map(haze, params)
    with stage("enhance"):
        out = enhance_mod.gamma_enhance(dehazed, att, params)
    imgio.save_image(out, args.out)
    if args.dump_attention:
        imgio.save_image(att, args.dump_attention)
    return 0


def cmd_metrics_compare(args):
    a, b = imgio.load_image(args.a), imgio.load_image(args.b)
    with stage("metrics"):
        result = metrics.compare(a, b)
    _emit(result)
    return 0


def cmd_metrics_consistency(args):
    cfg = _config(args, BILATERAL_FLAGS)
    a, b = imgio.load_image(args.a), imgio.load_image(args.b)
    matte = imgio.max_channel(imgio.load_image(args.matte))
    light = imgio.load_image(args.light)
    with stage("consistency"):
        result = gradops.consistency_metrics(a, b, matte, light, cfg.bilateral())
    _emit(result)
    return 0


def cmd_metrics_batch(args):
    a_dir, b_dir = Path(args.a_dir), Path(args.b_dir)
    names = sorted(p.name for p in a_dir.iterdir() if p.suffix.lower() in (".png", ".jpg", ".jpeg"))
    rows = []
    for name in names:
        if not (b_dir / name).exists():
            log.warning("no counterpart for %s in %s", name, b_dir)
            continue
        res = metrics.compare(imgio.load_image(a_dir / name), imgio.load_image(b_dir / name))
        rows.append({"name": name, **res})
    finite = [r["psnr"] for r in rows if np.isfinite(r["psnr"])]
    summary = {
        "pairs": len(rows),
        "psnr_mean": float(np.mean(finite)) if finite else None,
        "ssim_mean": float(np.mean([r["ssim"] for r in rows])) if rows else None,
    }
    if args.out:
        lines = "".join(json.dumps(metrics.json_safe(r)) + "\n" for r in rows)
        imgio.atomic_write_bytes(args.out, lines.encode("utf-8"))
    if args.figure and rows:
        from nightglow.plotting import plot_metric_pairs

        plot_metric_pairs(rows, args.figure)
    _emit(summary)
    return 0


# --- parser -------------------------------------------------------------------

def _common():
    p = argparse.ArgumentParser(add_help=False, allow_abbrev=False)
    p.add_argument("--config", help="flat TOML file of parameter defaults")
    p.add_argument("-v", "--verbose", action="store_true")
    p.add_argument("--quiet", action="store_true", help="only warnings on stderr")
    return p


def _apsf_args(p):
    p.add_argument("--T", type=float, help="optical thickness, > 0 (default 1.2)")
    p.add_argument("--q", type=float, help="forward scattering parameter in (0, 1) (default 0.9)")
    p.add_argument("--terms", type=int, help="Legendre terms (default 200)")
    p.add_argument("--angles", type=int, help="odd angular sample count (default 721)")
    p.add_argument("--lut", help="Legendre LUT cache file")


def _matting_args(p):
    p.add_argument("--tau", type=float, help="light threshold on the max channel (default 0.8)")
    p.add_argument("--matting-window", type=int)
    p.add_argument("--matting-eps", type=float)
    p.add_argument("--matting-lambda", type=float)
    p.add_argument("--cg-tol", type=float)
    p.add_argument("--cg-max-iter", type=int)
    p.add_argument("--half-resolution", action=argparse.BooleanOptionalAction, default=None,
                   help="solve the matte at half resolution (default: only above 1 MP)")


def _glow_args(p):
    _apsf_args(p)
    _matting_args(p)
    p.add_argument("--kernel-size", type=int, help="odd APSF kernel side (default 127)")
    p.add_argument("--noise-sigma", type=float, help="additive Gaussian noise sigma (default 0.01)")
    p.add_argument("--alpha-noise-scale", type=float, help="scale of the gain perturbation (default 0.05)")
    p.add_argument("--seed", type=int, help="RNG seed (default 0)")
    p.add_argument("--conv-mode", choices=("auto", "fft", "direct"))


def _bilateral_args(p):
    p.add_argument("--alpha1", type=float, help="color variance (default 0.02)")
    p.add_argument("--alpha2", type=float, help="spatial variance in px^2 (default (k/3)^2)")
    p.add_argument("--radius", type=int, help="window radius (default 5)")


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="nightglow", description=__doc__.splitlines()[0], allow_abbrev=False)
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.add_parser = functools.partial(sub.add_parser, allow_abbrev=False)

    p = sub.add_parser("apsf-kernel", parents=[common], help="compute and save an APSF kernel")
    _apsf_args(p)
    p.add_argument("--size", dest="kernel_size", type=int, help="odd kernel side (default 127)")
    p.add_argument("--out", required=True, help="kernel visualization PNG")
    p.add_argument("--raw", help="raw float64 sidecar (.npy; default next to --out)")
    p.add_argument("--figure", help="profile/kernel report figure PNG")
    p.set_defaults(func=cmd_apsf_kernel)

    p = sub.add_parser("detect-light", parents=[common], help="light-source matte and image")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out-matte")
    p.add_argument("--out-light")
    _matting_args(p)
    p.set_defaults(func=cmd_detect_light)

    p = sub.add_parser("render-glow", parents=[common], help="render APSF glow on one image")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--out-layer")
    p.add_argument("--out-matte")
    _glow_args(p)
    p.set_defaults(func=cmd_render_glow)

    p = sub.add_parser("batch-render", parents=[common], help="render a JSON-lines manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--report", help="report path (default OUT_DIR/report.jsonl)")
    p.add_argument("--figure", help="summary figure PNG")
    p.add_argument("--jobs", type=int, help="parallel workers (default 1)")
    _glow_args(p)
    p.set_defaults(func=cmd_batch_render)

    p = sub.add_parser("edges", parents=[common], help="pixel-difference edge map")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_edges)

    p = sub.add_parser("texture", parents=[common], help="bilateral texture residual")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    _bilateral_args(p)
    p.set_defaults(func=cmd_texture)

    p = sub.add_parser("enhance", parents=[common], help="attention-guided gamma enhancement")
    p.add_argument("--in", dest="inp", required=True, help="dehazed image")
    p.add_argument("--haze", help="haze input driving the attention map (default: --in)")
    p.add_argument("--out", required=True)
    p.add_argument("--gamma", type=float, help="exponent in (0, 1] (default 0.3)")
    p.add_argument("--smooth-radius", type=int)
    p.add_argument("--guided-eps", type=float)
    p.add_argument("--dump-attention")
    p.set_defaults(func=cmd_enhance)

    p = sub.add_parser("metrics", help="quality and consistency metrics")
    msub = p.add_subparsers(dest="metrics_command", metavar="mode")
    msub.add_parser = functools.partial(msub.add_parser, allow_abbrev=False)
    m = msub.add_parser("compare", parents=[common], help="PSNR and SSIM of two images")
    m.add_argument("--a", required=True)
    m.add_argument("--b", required=True)
    m.set_defaults(func=cmd_metrics_compare)
    m = msub.add_parser("consistency", parents=[common], help="light, gradient and bilateral consistency")
    m.add_argument("--a", required=True, help="output image")
    m.add_argument("--b", required=True, help="input image")
    m.add_argument("--matte", required=True)
    m.add_argument("--light", required=True)
    _bilateral_args(m)
    m.set_defaults(func=cmd_metrics_consistency)
    m = msub.add_parser("batch", parents=[common], help="PSNR/SSIM over same-named files in two directories")
    m.add_argument("--a-dir", required=True)
    m.add_argument("--b-dir", required=True)
    m.add_argument("--out", help="per-pair JSON-lines output")
    m.add_argument("--figure", help="per-pair figure PNG")
    m.set_defaults(func=cmd_metrics_batch)
    p.set_defaults(func=None, parser=p)
    return parser


def _setup_logging(args):
    level = logging.INFO
    if getattr(args, "verbose", False):
        level = logging.DEBUG
    elif getattr(args, "quiet", False):
        level = logging.WARNING
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    root = logging.getLogger("nightglow")
    root.handlers[:] = [handler]
    root.setLevel(level)
    root.propagate = False


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    if args.func is None:
        args.parser.print_usage(sys.stderr)
        return 2
    _setup_logging(args)
    try:
        return args.func(args)
    except NightglowError as exc:
        print(f"nightglow: error: {exc}", file=sys.stderr)
        return exc.exit_code


def run():
    sys.exit(main())


if __name__ == "__main__":
    run()
