#!/usr/bin/env python3
"""Generate a synthetic event stream plus the nutrition label it implies.

Writes events.jsonl, outcomes.jsonl and label.json into --out, ready for
`fairgate ingest` / `PUT /v1/labels/{mv}`.  Optional prior or behaviour
shifts exercise the drift detectors.

Example:
    python scripts/generate_stream.py --out /tmp/stream --volume 20000 \
        --shift-onset 10000 --shift-priors a=0.89,b=0.11
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from fairgate.simulator import (
    DriftInjection,
    PopulationSpec,
    SubgroupBehavior,
    generate_population,
    label_from_spec,
)


def parse_shares(text: str) -> dict[str, float]:
    out = {}
    for part in text.split(","):
        name, value = part.split("=", 1)
        out[name.strip()] = float(value)
    return out


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--volume", type=int, default=10000)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--priors", default="a=0.95,b=0.05")
    parser.add_argument("--attribute", default="group")
    parser.add_argument("--model-version", default="sim-model")
    parser.add_argument("--label-prob", type=float, default=0.5)
    parser.add_argument("--tpr", type=float, default=0.9)
    parser.add_argument("--fpr", type=float, default=0.1)
    parser.add_argument("--outcome-lag", type=int, default=100)
    parser.add_argument("--shift-onset", type=int)
    parser.add_argument("--shift-priors", help="e.g. a=0.89,b=0.11")
    parser.add_argument("--shift-tpr", type=float,
                        help="post-onset TPR for the smallest subgroup")
    args = parser.parse_args()

    priors = parse_shares(args.priors)
    behaviors = {
        cat: SubgroupBehavior(args.label_prob, args.tpr, args.fpr) for cat in priors
    }
    spec = PopulationSpec(
        priors=priors,
        behaviors=behaviors,
        volume=args.volume,
        seed=args.seed,
        attribute=args.attribute,
        model_version=args.model_version,
        outcome_lag=args.outcome_lag,
    )

    injections = []
    if args.shift_onset is not None:
        if args.shift_priors:
            injections.append(
                DriftInjection(
                    kind="prior_shift",
                    onset=args.shift_onset,
                    priors=parse_shares(args.shift_priors),
                )
            )
        if args.shift_tpr is not None:
            smallest = min(priors, key=priors.get)
            injections.append(
                DriftInjection(
                    kind="concept_shift",
                    onset=args.shift_onset,
                    behaviors={
                        smallest: SubgroupBehavior(args.label_prob, args.shift_tpr, args.fpr)
                    },
                )
            )

    stream = generate_population(spec, injections)
    label = label_from_spec(spec, bands={})

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "events.jsonl").write_text(stream.event_lines(), encoding="utf-8")
    (out / "outcomes.jsonl").write_text(stream.outcome_lines(), encoding="utf-8")
    (out / "label.json").write_text(
        json.dumps(label.to_dict(), indent=2, sort_keys=True), encoding="utf-8"
    )
    print(f"wrote {len(stream.events)} events, {len(stream.outcomes)} outcomes "
          f"and label.json to {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
