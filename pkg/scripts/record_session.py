#!/usr/bin/env python3
"""Record a 3-step attribute-feedback session from a trained bundle.

The dump pairs every request with its response so the frontend replay
test can run against real recorded service output:

    python3 scripts/record_session.py --artifacts /tmp/artifacts \
        --out frontend/tests/fixtures/recorded_session.json
"""

import argparse
import json
from pathlib import Path

from conceptfind.service import load_bundle, run_query

K = 12


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("--artifacts", required=True)
    parser.add_argument("--out", required=True)
    args = parser.parse_args()

    bundle = load_bundle(args.artifacts)
    ds = bundle.dataset
    sleeveless = ds.attr_id("sleeveless")
    belt_labels = ("belted", "sashed", "corset", "ribbon", "chain")
    belt_ids = {ds.attr_id(a) for a in belt_labels}

    responses = {}
    history = []

    def step(item_id: int, add_attribute: str) -> dict:
        outcome = {}
        for method in ("baseline", "concept"):
            body = run_query(bundle, item_id, add_attribute, method, K)
            key = json.dumps({"image_id": item_id, "add_attribute": add_attribute,
                              "method": method, "k": K}, sort_keys=True)
            responses[key] = body
            outcome[method] = body
        history.append({"itemId": item_id, "addAttribute": add_attribute,
                        "detectedNegative": outcome["concept"]["detected_negative"]})
        return outcome

    # step 1: sleeveless item asks for long sleeves (exercises the w_n badge)
    first = next(i for i in ds.splits["test"]
                 if sleeveless in ds.items[i].description)
    outcome = step(first, "long-sleeve")

    # step 2: hop to the top concept result and change its color
    second = outcome["concept"]["results"][0]["id"]
    outcome = step(second, "green")

    # step 3: pick a beltless result and ask for a belt (exercises fallback)
    third = next(r["id"] for r in outcome["concept"]["results"]
                 if not belt_ids & set(ds.items[r["id"]].description))
    outcome = step(third, "sashed")
    assert outcome["concept"]["fallback"], "third step should fall back"

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps({
        "k": K,
        "history": history,
        "responses": responses,
        "final": outcome,
    }, indent=2, sort_keys=True) + "\n")
    print(f"recorded {len(history)} steps, {len(responses)} responses -> {out}")


if __name__ == "__main__":
    main()
