"""Command-line entry: embsq-extract --model ID --source encoder|decoder ..."""

from __future__ import annotations

import argparse
import logging
import sys

from .extract import ExtractError, ExtractSpec, extract


def main(argv=None) -> int:
    p = argparse.ArgumentParser(
        prog="embsq-extract",
        description="export token-embedding corpora from a pretrained model")
    p.add_argument("--model", required=True, help="model id or local directory")
    p.add_argument("--source", choices=["encoder", "decoder"], default="encoder")
    p.add_argument("--in", dest="inp", required=True,
                   help="text dataset, one example per line")
    p.add_argument("--out", required=True, help="output .embsq path")
    p.add_argument("--max-len", type=int, default=512)
    p.add_argument("--targets", default=None,
                   help="reference targets for teacher-forced decoder states")
    p.add_argument("--layer", type=int, default=-1)
    p.add_argument("--batch-size", type=int, default=8)
    args = p.parse_args(argv)

    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    spec = ExtractSpec(model_id=args.model, source=args.source,
                       dataset_path=args.inp, max_len=args.max_len,
                       out_path=args.out, targets_path=args.targets,
                       layer=args.layer, batch_size=args.batch_size)
    try:
        n = extract(spec)
    except ExtractError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {n} sequences to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
