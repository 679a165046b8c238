#!/usr/bin/env python3
"""End-to-end style transfer demo on synthetic inputs.

Builds a content image (cellular automaton) and a style image (interference
pattern), then optimizes a third image against both through a network: a
seeded random toy stack by default, or real VGG16 features when a VGGW
weight file is passed.

Usage: python3 scripts/style_transfer_demo.py [outdir] [vgg16.vggw]
"""

import sys
from pathlib import Path

from synthima.composite import CaRule, ca_generate, ca_to_image, math_pattern
from synthima.image_io import save_image
from synthima.cli import main as cli_main


def main():
    outdir = Path(sys.argv[1] if len(sys.argv) > 1 else "transfer-out")
    weights = sys.argv[2] if len(sys.argv) > 2 else None
    outdir.mkdir(parents=True, exist_ok=True)

    content = outdir / "content.png"
    style = outdir / "style.png"
    save_image(content, ca_to_image(ca_generate(CaRule(110, width=64, steps=64))))
    save_image(style, math_pattern(64, 64, "interference", {"a": 0.9, "b": 0.5, "c": 0.25}))

    args = [
        "transfer",
        "--content", str(content),
        "--style", str(style),
        "--out", str(outdir / "stylized.png"),
        "--csv", str(outdir / "loss.csv"),
        "--seed", "7",
    ]
    if weights:
        args += ["--weights", weights, "--size", "64", "--iters", "150"]
    else:
        args += ["--size", "64", "--iters", "300", "--beta", "100"]
    code = cli_main(args)
    if code == 0:
        print(f"outputs in {outdir}/")
    return code


if __name__ == "__main__":
    sys.exit(main())
