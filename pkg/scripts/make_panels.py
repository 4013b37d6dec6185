#!/usr/bin/env python3
"""Side-by-side reconstruction panels: truth, baseline, linear, trained DNN.

Optionally appends an externally produced estimate tensor (e.g. the offline
image-reconstruction model's output) as a final panel.
"""

import argparse
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from mapx import interchange
from mapx.harness import export_panels, make_scene, recon_snr, run_method
from mapx.scenario import load_config


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config", default=os.path.join(
        os.path.dirname(__file__), "..", "configs", "desk.cfg"))
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--budget", type=int, default=8)
    parser.add_argument("--extra", help="optional external estimate tensor (.f32)")
    parser.add_argument("--out", default="panels.png")
    parser.add_argument("--scale", type=int, default=6)
    args = parser.parse_args()

    config = load_config(args.config, seed=args.seed)
    scene = make_scene(config)
    panels = [(scene.truth, None)]
    for method in ("sblue", "linear", "dnn"):
        est = run_method(scene, method, args.budget)
        print(f"{method}: {recon_snr(est, scene.truth):.2f} dB")
        panels.append((est.values, est.valid))
    if args.extra:
        panels.append((interchange.read_tensor_file(args.extra), None))
    export_panels(panels, args.out, scale=args.scale)
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
