#!/usr/bin/env python3
"""Walk one attribute-feedback query through both retrieval methods.

    python3 scripts/query_demo.py --artifacts /tmp/artifacts \
        --item 12 --add long-sleeve
"""

import argparse

from conceptfind.service import load_bundle, run_query


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("--artifacts", required=True)
    parser.add_argument("--item", type=int, default=None,
                        help="query item id (default: first test item)")
    parser.add_argument("--add", default="long-sleeve",
                        help="attribute to add")
    parser.add_argument("--k", type=int, default=5)
    args = parser.parse_args()

    bundle = load_bundle(args.artifacts)
    ds = bundle.dataset
    item_id = args.item if args.item is not None else ds.splits["test"][0]
    labels = [ds.vocab[a] for a in ds.items[item_id].description]
    print(f"query item {item_id}: {', '.join(labels)}")
    print(f"feedback: + {args.add}\n")

    for method in ("baseline", "concept"):
        body = run_query(bundle, item_id, args.add, method, args.k)
        note = ""
        if method == "concept":
            if body["fallback"]:
                note = " (fell back to baseline)"
            else:
                note = f" (removed: {body['detected_negative']})"
        print(f"{method}{note}")
        for rank, row in enumerate(body["results"], start=1):
            desc = ", ".join(ds.vocab[a]
                             for a in ds.items[row["id"]].description)
            print(f"  {rank}. item {row['id']:5d} score={row['score']:.3f}  {desc}")
        print()


if __name__ == "__main__":
    main()
