#!/usr/bin/env python3
"""Seed a data directory with demo state for the operator console.

Creates: a nutrition label, a fixture window with parity gaps, one weak
window that lands in the review queue, the Tay rollback rollout (via the
simulator), and a freshly started rollout.  Then serve it:

    python scripts/seed_demo.py --data-dir demo-data
    fairgate serve --data-dir demo-data --port 8800
"""

from __future__ import annotations

import argparse
import sys
from datetime import datetime, timezone

sys.path.insert(0, "tests")

from fairgate.config import ServiceConfig
from fairgate.runtime import Runtime

from conftest import jsonl, records_from_counts, simple_label


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--data-dir", required=True)
    args = parser.parse_args()

    config = ServiceConfig.from_dict(
        {
            "data_dir": args.data_dir,
            "window_size": 200,
            "flag_rules": [
                {"metric": "f1", "scope": "per_window_subgroup", "delta": 0.04}
            ],
        }
    )
    runtime = Runtime(config)

    label = simple_label(
        {"a": 0.6, "b": 0.4},
        baselines={"a": {"f1": 0.88, "tpr": 0.9}, "b": {"f1": 0.88, "tpr": 0.9}},
        bands={"a": {"f1": [0.7, 1.0]}, "b": {"f1": [0.7, 1.0]}},
    ).to_dict()
    runtime.put_label("m1", label)

    # Fixture window: the canonical two-subgroup gaps (0.15 / 0.30 / 0.30),
    # then a weak second window for subgroup b that triggers flagging.
    records = records_from_counts({"a": (40, 5, 10, 45), "b": (20, 10, 20, 50)})
    weak = records_from_counts({"b": (50, 50, 50, 50)})
    now = datetime.now(timezone.utc).isoformat()
    events, outcomes = [], []
    for i, r in enumerate(records + weak):
        d = r.event.to_dict()
        d["event_id"] = f"demo-{i:05d}"
        d["timestamp"] = now
        events.append(d)
        outcomes.append(
            {"event_id": d["event_id"], "outcome_label": r.outcome_label, "observed_at": now}
        )
    runtime.ingest_text(jsonl(events))
    runtime.outcomes_text(jsonl(outcomes))

    # Tay rollback (terminal, with a failing gate in the log).
    runtime.simulate("tay", seed=1)

    # A running rollout the operator can advance or abort.
    runtime.create_rollout(
        {
            "rollout_id": "m2-canary",
            "model_version": "m1",
            "stages": [
                {"fraction": 0.05, "min_events": 0, "min_duration_seconds": 0},
                {"fraction": 0.25, "min_events": 0, "min_duration_seconds": 0},
                {"fraction": 1.0, "min_events": 0, "min_duration_seconds": 0},
            ],
            "max_parity_gap": {"equalized_odds": 0.2},
            "cohort_attributes": [],
        }
    )
    runtime.advance_rollout("m2-canary")

    pending = len(runtime.queue.pending())
    print(f"seeded {args.data_dir}: {len(events)} events, {pending} pending review "
          f"items, rollouts: tay-canary (rolled back), m2-canary (running)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
