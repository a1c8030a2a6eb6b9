#!/usr/bin/env python3
"""Run a registered scenario end-to-end and print its report.

Examples:
    python scripts/run_scenario.py vaccine
    python scripts/run_scenario.py tay --seed 3 --json
    python scripts/run_scenario.py --list
"""

from __future__ import annotations

import argparse
import json
import sys

from fairgate.simulator import list_scenarios, run_scenario


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("scenario", nargs="?", help="registered scenario name")
    parser.add_argument("--seed", type=int, help="override the fixture seed")
    parser.add_argument("--json", action="store_true")
    parser.add_argument("--list", action="store_true", help="list registered scenarios")
    args = parser.parse_args()

    if args.list or not args.scenario:
        for name in list_scenarios():
            print(name)
        return 0

    report = run_scenario(args.scenario, seed=args.seed)
    if args.json:
        print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
        return 0 if report.all_held else 1

    print(f"scenario {report.name} (seed {report.seed}, {report.volume} events)")
    print(f"  data drift:    {report.data_status}")
    print(f"  concept drift: {report.concept_status}")
    print(f"  triage hint:   {report.triage_hint}")
    if report.share_psi_max is not None:
        print(f"  max share PSI: {report.share_psi_max:.4f}")
    if report.canary:
        canary = report.canary
        print(
            f"  canary:        {canary['status']} "
            f"(max fraction {canary['max_fraction']}, "
            f"stage {canary['stages_reached']})"
        )
    print("  expectations:")
    for check in report.expectations:
        verdict = "held" if check["held"] else "VIOLATED"
        print(f"    {check['name']}: expected {check['expected']}, "
              f"observed {check['observed']} -> {verdict}")
    return 0 if report.all_held else 1


if __name__ == "__main__":
    sys.exit(main())
