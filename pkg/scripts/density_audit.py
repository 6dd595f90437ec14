#!/usr/bin/env python3
"""Semantic-density audit: mean pairwise cosine of category embeddings vs
pooled per-class descriptor embeddings.

Inputs are OSTE files: one matrix of category embeddings (one row per class)
and, optionally, per-class descriptor matrices to pool.
"""

import argparse
import json

from ost.analysis import density_delta, mean_pairwise_cosine, pool_rows
from ost.core import read_embed_matrix


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--categories", required=True, help="OSTE matrix, one row per class")
    ap.add_argument(
        "--descriptors", nargs="*", default=[],
        help="per-class descriptor OSTE files (pooled to one row each)",
    )
    args = ap.parse_args()

    categories = read_embed_matrix(args.categories)
    if args.descriptors:
        pooled = pool_rows([read_embed_matrix(p) for p in args.descriptors])
        before, after = density_delta(categories, pooled)
        print(json.dumps({"before": before, "after": after}, indent=2))
    else:
        print(json.dumps(mean_pairwise_cosine(categories).to_json_dict(), indent=2))


if __name__ == "__main__":
    main()
