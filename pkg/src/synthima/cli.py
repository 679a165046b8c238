"""Batch command-line front door.

Subcommands: transfer, reconstruct, composite (filter | blend | sketch),
ca, pattern, weights-info. Exit codes: 0 success, 2 argument errors (with
usage text), 1 runtime failures (with a diagnostic on stderr). All outputs
are written to a temp file and renamed, so failed runs leave nothing behind.

SYNTHIMA_THREADS caps internal BLAS parallelism; it must take effect before
numpy is first imported, which is why the heavy modules are imported inside
the command handlers rather than at module scope.
"""

from __future__ import annotations

import argparse
import os
import sys

_THREAD_VARS = (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
)


def _apply_thread_cap():
    cap = os.environ.get("SYNTHIMA_THREADS")
    if cap:
        for var in _THREAD_VARS:
            os.environ.setdefault(var, cap)


def _parse_layer_weights(text):
    """Parse 'conv1_1:0.2,conv2_1:0.2' (weight defaults to 1)."""
    table = {}
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        if ":" in item:
            name, w = item.rsplit(":", 1)
            table[name.strip()] = float(w)
        else:
            table[item] = 1.0
    if not table:
        raise ValueError(f"no layers in {text!r}")
    return table


def _setup_network(args, rng_seed):
    """Resolve --weights (or the seeded random toy fallback) plus preprocessing."""
    from . import image_io, network, vggw

    if args.weights:
        spec = network.vgg16_spec()
        store = network.bind_weights(spec, vggw.load_weights(args.weights))
        size = args.size or 224
        size = max(32, (size // 32) * 32)  # five pools need multiples of 32
        if args.size and size != args.size:
            print(f"note: --size {args.size} rounded to {size} (multiple of 32)", file=sys.stderr)
        pp = image_io.vgg16_preprocess(size=(size, size))
    else:
        print(
            "warning: no --weights given; using a seeded random-weight toy network",
            file=sys.stderr,
        )
        spec = network.toy_spec()
        store = network.random_weights(spec, seed=rng_seed)
        size = args.size or 64
        pp = image_io.toy_preprocess(size=(size, size))
    return spec, store, pp


def _run_synthesis(args, content_path, style_path):
    from . import image_io, style

    spec, store, pp = _setup_network(args, args.seed)
    content = style_img = None
    if content_path:
        content = image_io.preprocess(image_io.load_image(content_path), pp)
    if style_path:
        style_img = image_io.preprocess(image_io.load_image(style_path), pp)

    cfg = style.default_loss_config(spec, alpha=args.alpha, beta=args.beta)
    content_layers = dict(cfg.content_layers)
    style_layers = dict(cfg.style_layers)
    if getattr(args, "content_layers", None):
        content_layers = _parse_layer_weights(args.content_layers)
    if getattr(args, "style_layers", None):
        style_layers = _parse_layer_weights(args.style_layers)
    if content is None:
        content_layers = {}
    if style_img is None:
        style_layers = {}
    cfg = style.LossConfig(
        content_layers=content_layers,
        style_layers=style_layers,
        alpha=args.alpha,
        beta=args.beta,
    )

    opt = style.OptimizerParams(
        max_iters=args.iters,
        step=args.step,
        seed=args.seed,
        init_from_content=args.init_content,
        clamp_bounds=None if args.no_clamp else image_io.preprocessed_bounds(pp),
    )
    final, state = style.synthesize(spec, store, content, style_img, cfg, opt)
    image_io.save_image(args.out, image_io.deprocess(final, pp))
    csv_path = args.csv or os.path.splitext(args.out)[0] + ".loss.csv"
    style.write_loss_csv(csv_path, state)
    print(
        f"{state.iteration} iterations, loss {state.initial_loss[0]:.6g} -> "
        f"{(state.loss_history[-1][0] if state.loss_history else state.initial_loss[0]):.6g}, "
        f"wrote {args.out}"
    )
    return 0


def cmd_transfer(args):
    return _run_synthesis(args, args.content, args.style)


def cmd_reconstruct(args):
    if args.loss == "content":
        args.beta = 0.0
        return _run_synthesis(args, args.target, None)
    args.alpha = 0.0
    return _run_synthesis(args, None, args.target)


def cmd_composite_filter(args):
    from . import composite, image_io

    kernel = composite.named_kernel(args.kernel, radius=args.radius)
    out = composite.apply_filter(image_io.load_image(args.input), kernel)
    image_io.save_image(args.out, out)
    print(f"applied {kernel.name}, wrote {args.out}")
    return 0


def cmd_composite_blend(args):
    from . import composite, image_io

    out = composite.blend(image_io.load_image(args.a), image_io.load_image(args.b), args.alpha)
    image_io.save_image(args.out, out)
    print(f"blended alpha={args.alpha}, wrote {args.out}")
    return 0


def cmd_composite_sketch(args):
    from . import composite, image_io

    out = composite.pencil_sketch(image_io.load_image(args.input), args.radius)
    image_io.save_image(args.out, out)
    print(f"sketched radius={args.radius}, wrote {args.out}")
    return 0


def cmd_ca(args):
    import numpy as np

    from . import composite, image_io

    seed_row = None
    if args.init == "random":
        rng = np.random.default_rng(args.seed)
        seed_row = rng.integers(0, 2, size=args.width).astype(np.uint8)
    rule = composite.CaRule(args.rule, args.width, args.steps, seed=seed_row)
    grid = composite.ca_generate(rule)
    image_io.save_image(args.out, composite.ca_to_image(grid, cell_size=args.cell_size))
    print(f"rule {args.rule}: {args.steps}x{args.width} cells, wrote {args.out}")
    return 0


def cmd_pattern(args):
    from . import composite, image_io

    params = {"a": args.a, "b": args.b, "c": args.c}
    img = composite.math_pattern(args.width, args.height, args.formula, params)
    image_io.save_image(args.out, img)
    print(f"{args.formula} {args.width}x{args.height}, wrote {args.out}")
    return 0


def cmd_weights_info(args):
    from . import vggw

    store = vggw.load_weights(args.weights)
    total = 0
    for name, (kernels, bias) in store.items():
        shape = "x".join(str(d) for d in kernels.shape)
        total += kernels.size + bias.size
        print(f"{name:12s} kernels {shape:16s} bias {bias.size}")
    print(f"total parameters: {total}")
    if args.resave:
        vggw.save_weights(args.resave, store)
        print(f"re-saved to {args.resave}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="synthima",
        description="Image synthesis: composite filters, cellular automata, "
        "and feature-space style transfer.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_synth_args(p, with_layers=True):
        p.add_argument("--weights", help="VGGW weight file (omit for a random toy network)")
        p.add_argument("--out", required=True, help="output image (.png or .ppm)")
        p.add_argument("--csv", help="loss-history CSV path (default: <out>.loss.csv)")
        p.add_argument("--iters", type=int, default=200)
        p.add_argument("--step", type=float, default=1.0, help="initial descent step size")
        p.add_argument("--alpha", type=float, default=1.0, help="content weight")
        p.add_argument("--beta", type=float, default=1000.0, help="style weight")
        p.add_argument("--size", type=int, help="square working size (default 224 with weights, 64 toy)")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--init-content", action="store_true", dest="init_content",
                       help="start from the content image instead of noise")
        p.add_argument("--no-clamp", action="store_true", help="skip per-iteration pixel clamping")
        if with_layers:
            p.add_argument("--content-layers", help="e.g. conv4_2:1.0")
            p.add_argument("--style-layers", help="e.g. conv1_1:0.2,conv2_1:0.2")

    p = sub.add_parser("transfer", help="optimize an image against content + style targets")
    p.add_argument("--content", required=True)
    p.add_argument("--style", required=True)
    add_synth_args(p)
    p.set_defaults(func=cmd_transfer)

    p = sub.add_parser("reconstruct", help="content-only or style-only synthesis from noise")
    p.add_argument("--loss", choices=("content", "style"), required=True)
    p.add_argument("--target", required=True, help="image whose representation is matched")
    add_synth_args(p)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("composite", help="pixel-compositing models")
    csub = p.add_subparsers(dest="composite_command", required=True)

    pf = csub.add_parser("filter", help="apply a named convolution filter")
    pf.add_argument("--input", required=True)
    pf.add_argument("--kernel", required=True, help="identity|box3|sharpen|sobel-x|sobel-y|emboss|gaussian")
    pf.add_argument("--radius", type=float, default=1.0, help="gaussian radius")
    pf.add_argument("--out", required=True)
    pf.set_defaults(func=cmd_composite_filter)

    pb = csub.add_parser("blend", help="alpha-blend two images")
    pb.add_argument("--a", required=True)
    pb.add_argument("--b", required=True)
    pb.add_argument("--alpha", type=float, required=True)
    pb.add_argument("--out", required=True)
    pb.set_defaults(func=cmd_composite_blend)

    ps = csub.add_parser("sketch", help="pencil-sketch pipeline")
    ps.add_argument("--input", required=True)
    ps.add_argument("--radius", type=float, default=2.0)
    ps.add_argument("--out", required=True)
    ps.set_defaults(func=cmd_composite_sketch)

    p = sub.add_parser("ca", help="elementary cellular automaton pattern")
    p.add_argument("--rule", type=int, required=True)
    p.add_argument("--width", type=int, required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--init", choices=("center", "random"), default="center")
    p.add_argument("--seed", type=int, default=0, help="RNG seed for --init random")
    p.add_argument("--cell-size", type=int, default=1, dest="cell_size")
    p.set_defaults(func=cmd_ca)

    p = sub.add_parser("pattern", help="image from a registered pixel formula")
    p.add_argument("--formula", default="interference")
    p.add_argument("--width", type=int, default=256)
    p.add_argument("--height", type=int, default=256)
    p.add_argument("--a", type=float, default=0.35)
    p.add_argument("--b", type=float, default=0.35)
    p.add_argument("--c", type=float, default=0.1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pattern)

    p = sub.add_parser("weights-info", help="list layer names and shapes of a VGGW file")
    p.add_argument("--weights", required=True)
    p.add_argument("--resave", help="load and re-save the store (round-trip check)")
    p.set_defaults(func=cmd_weights_info)

    return parser


def main(argv=None) -> int:
    _apply_thread_cap()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, KeyError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
