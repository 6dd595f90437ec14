"""CLI: `ost-extract text` and `ost-extract frames`."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .encoders import EncoderLoadError, load_encoder
from .extract import extract_frames, extract_text


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ost-extract", description=__doc__)
    parser.add_argument(
        "--encoder", default="openai/clip-vit-base-patch16",
        help="checkpoint id, or 'toy' for the built-in deterministic encoder",
    )
    parser.add_argument("--no-normalize", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("text", help="encode a descriptor bank's texts")
    p.add_argument("--bank", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--raw-temporal", action="store_true",
                   help="encode raw instead of category-conditioned temporal texts")

    p = sub.add_parser("frames", help="encode per-video frame directories")
    p.add_argument("--in", dest="frames_dir", required=True)
    p.add_argument("--out", required=True)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO, format="%(message)s")
    args = build_parser().parse_args(argv)
    try:
        encoder = load_encoder(args.encoder)
    except EncoderLoadError as exc:
        print(f"encoder error: {exc}", file=sys.stderr)
        return 2
    normalize = not args.no_normalize
    if args.command == "text":
        bank_out = extract_text(
            args.bank, args.out, encoder, normalize=normalize,
            use_conditioned=not args.raw_temporal,
        )
        json.dump({"bank": str(bank_out)}, sys.stdout)
    else:
        fragments = extract_frames(args.frames_dir, args.out, encoder, normalize=normalize)
        json.dump({"videos": fragments}, sys.stdout)
    sys.stdout.write("\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
