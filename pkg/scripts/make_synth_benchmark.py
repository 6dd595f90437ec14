#!/usr/bin/env python3
"""Generate a planted zero-shot benchmark (OSTE files + bank + manifest)."""

import argparse

from ost.evaluate import synth_benchmark


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", required=True, help="output directory")
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--classes", type=int, default=10)
    ap.add_argument("--items-per-class", type=int, default=20)
    ap.add_argument("--dim", type=int, default=32)
    ap.add_argument("--noise-frames", type=float, default=0.3)
    ap.add_argument("--noise-desc", type=float, default=0.2)
    ap.add_argument("--n-desc", type=int, default=4)
    ap.add_argument("--frames", type=int, default=8)
    args = ap.parse_args()

    manifest = synth_benchmark(
        seed=args.seed,
        n_classes=args.classes,
        items_per_class=args.items_per_class,
        dim=args.dim,
        noise_frames=args.noise_frames,
        noise_desc=args.noise_desc,
        out_dir=args.out,
        n_desc=args.n_desc,
        frames_per_item=args.frames,
    )
    print(manifest)


if __name__ == "__main__":
    main()
