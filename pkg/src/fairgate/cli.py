"""Command-line interface; every query subcommand mirrors an HTTP endpoint.

With --json the output is structurally identical to the corresponding
endpoint body for the same inputs.  Exit codes: 0 success, 1 domain error,
2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional

from .config import ServiceConfig
from .errors import BindError, FairgateError
from .runtime import Runtime


def _load_config(args) -> ServiceConfig:
    config = ServiceConfig.load(Path(args.config) if args.config else None)
    if args.data_dir:
        config.data_dir = Path(args.data_dir)
    return config


def _runtime(args, stateless: bool = False) -> Runtime:
    config = _load_config(args)
    runtime = Runtime(config, ephemeral=stateless)
    if stateless:
        label_path = getattr(args, "label", None)
        if label_path:
            doc = json.loads(Path(label_path).read_text(encoding="utf-8"))
            runtime.put_label(str(doc.get("model_version", "")), doc)
        events_path = getattr(args, "events", None)
        if events_path:
            runtime.ingest_text(Path(events_path).read_text(encoding="utf-8"))
        outcomes_path = getattr(args, "outcomes", None)
        if outcomes_path:
            runtime.outcomes_text(Path(outcomes_path).read_text(encoding="utf-8"))
    return runtime


def _is_stateless(args) -> bool:
    return bool(getattr(args, "events", None) or getattr(args, "label", None))


def _emit(args, payload: dict, human: Optional[str] = None) -> int:
    if args.json:
        print(json.dumps(payload, sort_keys=True, indent=2))
    else:
        print(human if human is not None else json.dumps(payload, sort_keys=True, indent=2))
    return 0


# ----------------------------------------------------------------- subcommands

def cmd_ingest(args) -> int:
    runtime = _runtime(args)
    out = runtime.ingest_text(Path(args.events).read_text(encoding="utf-8"))
    if args.outcomes:
        joined = runtime.outcomes_text(Path(args.outcomes).read_text(encoding="utf-8"))
        out = {**out, "joined": joined["joined"], "outcome_errors": joined["errors"]}
    return _emit(
        args, out,
        f"stored {out['stored']} events"
        + (f", joined {out.get('joined', 0)} outcomes" if args.outcomes else "")
        + (f", {len(out['errors'])} errors" if out["errors"] else ""),
    )


def cmd_metrics(args) -> int:
    runtime = _runtime(args, stateless=_is_stateless(args))
    out = runtime.stratified_metrics(
        args.model_version, args.attribute, args.window, args.window_size
    )
    return _emit(args, out)


def cmd_parity(args) -> int:
    runtime = _runtime(args, stateless=_is_stateless(args))
    out = runtime.parity(args.model_version, args.attribute, args.window, args.window_size)
    lines = []
    for report in out["reports"]:
        for pair in report["pairs"]:
            gaps = ", ".join(
                f"{name}={value:.4f}" if value is not None else f"{name}=insufficient"
                for name, value in sorted(pair["gaps"].items())
            )
            lines.append(
                f"{report['attribute']}: {report['reference_subgroup']} vs {pair['other']}: {gaps}"
            )
    return _emit(args, out, "\n".join(lines) if lines else "no subgroup pairs")


def cmd_drift(args) -> int:
    runtime = _runtime(args, stateless=_is_stateless(args))
    out = runtime.drift(args.model_version, args.window, args.window_size)
    human = (
        f"data drift: {out['data_status']}; concept drift: {out['concept_status']}; "
        f"triage: {out['triage_hint']}"
    )
    return _emit(args, out, human)


def cmd_rebalance(args) -> int:
    runtime = _runtime(args, stateless=True)
    rows = [
        json.loads(line)
        for line in Path(args.input).read_text(encoding="utf-8").splitlines()
        if line.strip()
    ]
    doc: dict = {
        "rows": rows,
        "attribute": args.attribute,
        "k": args.k,
        "seed": args.seed,
        "match_majority": args.match_majority,
    }
    if args.strategy:
        doc["strategy"] = args.strategy
        doc["target"] = dict(
            (pair.split("=", 1)[0], int(pair.split("=", 1)[1]))
            for pair in (args.target or [])
        )
    out = runtime.rebalance(doc)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            for row in out["rows"]:
                fh.write(json.dumps(row, sort_keys=True) + "\n")
    summary = (
        f"before {out['before']} -> after {out['after']} "
        f"({out['synthetic_count']} synthetic rows)"
    )
    return _emit(args, out, summary)


def cmd_rollout(args) -> int:
    runtime = _runtime(args)
    if args.action == "create":
        doc = json.loads(Path(args.plan).read_text(encoding="utf-8"))
        out = runtime.create_rollout(doc)
        return _emit(args, out, f"rollout {out['plan']['rollout_id']} created ({out['status']})")
    if args.action == "list":
        out = runtime.list_rollouts()
        human = "\n".join(
            f"{r['plan']['rollout_id']}: {r['status']} stage {r['current_stage_index']}"
            for r in out["rollouts"]
        )
        return _emit(args, out, human or "no rollouts")
    if not args.id:
        raise FairgateError("rollout id required")
    if args.action == "get":
        out = runtime.rollout_dict(args.id)
    elif args.action == "advance":
        out = runtime.advance_rollout(args.id)
    elif args.action == "abort":
        out = runtime.abort_rollout(args.id)
    else:  # pragma: no cover - argparse restricts choices
        raise FairgateError(f"unknown rollout action {args.action!r}")
    return _emit(
        args, out,
        f"rollout {args.id}: {out['status']} stage {out['current_stage_index']}",
    )


def cmd_review(args) -> int:
    runtime = _runtime(args)
    if args.action == "queue":
        out = runtime.review_queue(args.status)
        human = "\n".join(
            f"{i['item_id']}: {i['status']} "
            f"({i['trigger'].get('attribute')}={i['trigger'].get('category')} "
            f"{i['trigger'].get('rule', {}).get('metric')}="
            f"{i['trigger'].get('observed')})"
            for i in out["items"]
        )
        return _emit(args, out, human or "queue empty")
    if args.action == "decide":
        out = runtime.decide_review(
            args.id, args.decision, args.reviewer, args.corrected_label
        )
        return _emit(
            args, out,
            f"{args.id}: {out['item']['status']} (+{out['rows_added']} rows)",
        )
    if args.action == "export":
        text = runtime.export_retraining(args.tag)
        if args.output:
            Path(args.output).write_text(text, encoding="utf-8")
            return _emit(args, {"written": args.output, "rows": max(0, len(text.splitlines()) - 1)})
        sys.stdout.write(text)
        return 0
    raise FairgateError(f"unknown review action {args.action!r}")  # pragma: no cover


def cmd_simulate(args) -> int:
    runtime = _runtime(args, stateless=args.data_dir is None and args.config is None)
    out = runtime.simulate(args.scenario, seed=args.seed)
    held = sum(1 for e in out["expectations"] if e["held"])
    human = (
        f"scenario {out['name']} (seed {out['seed']}): "
        f"data={out['data_status']} concept={out['concept_status']} triage={out['triage_hint']}"
        + (
            f"; canary={out['canary']['status']} max_fraction={out['canary']['max_fraction']}"
            if out.get("canary")
            else ""
        )
        + f"; expectations {held}/{len(out['expectations'])} held"
    )
    return _emit(args, out, human)


def cmd_serve(args) -> int:
    import uvicorn

    from .api import create_app

    config = _load_config(args)
    if args.host:
        config.host = args.host
    if args.port:
        config.port = args.port
    runtime = Runtime(config)
    app = create_app(runtime)
    try:
        uvicorn.run(app, host=config.host, port=config.port, log_level="warning")
    except OSError as exc:
        raise BindError(f"cannot bind {config.host}:{config.port}: {exc}") from None
    return 0


# ----------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fairgate",
        description="Post-deployment fairness gatekeeper: metrics, drift, rollouts, review.",
    )
    parser.add_argument("--config", help="path to a service config JSON file")
    parser.add_argument("--data-dir", help="data directory (overrides config)")
    parser.add_argument("--json", action="store_true", help="machine-readable JSON output")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="append events (and outcomes) to the store")
    p.add_argument("--events", required=True, help="JSON-lines prediction events")
    p.add_argument("--outcomes", help="JSON-lines outcome events")
    p.set_defaults(func=cmd_ingest)

    def add_query_args(q, with_attribute=True):
        q.add_argument("--model-version")
        if with_attribute:
            q.add_argument("--attribute")
        q.add_argument("--window", default="latest", help="latest | all | index")
        q.add_argument("--window-size", type=int)
        q.add_argument("--events", help="stateless mode: JSON-lines events file")
        q.add_argument("--outcomes", help="stateless mode: JSON-lines outcomes file")
        q.add_argument("--label", help="stateless mode: nutrition label JSON file")

    p = sub.add_parser("metrics", help="per-subgroup confusion matrices and rates")
    add_query_args(p)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("parity", help="parity gaps vs the reference subgroup")
    add_query_args(p)
    p.set_defaults(func=cmd_parity)

    p = sub.add_parser("drift", help="data/concept drift report")
    add_query_args(p, with_attribute=False)
    p.set_defaults(func=cmd_drift)

    p = sub.add_parser("rebalance", help="SMOTE / Near-Miss resampling of a dataset")
    p.add_argument("--input", required=True, help="JSON-lines dataset rows")
    p.add_argument("--attribute", required=True)
    p.add_argument("--match-majority", action="store_true",
                   help="oversample every class up to the largest one")
    p.add_argument("--strategy", choices=["smote", "near_miss"],
                   help="explicit plan instead of equalizing")
    p.add_argument("--target", nargs="*", metavar="CLASS=COUNT")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", help="write rebalanced rows here")
    p.set_defaults(func=cmd_rebalance)

    p = sub.add_parser("rollout", help="canary rollout control")
    p.add_argument("action", choices=["create", "get", "advance", "abort", "list"])
    p.add_argument("id", nargs="?")
    p.add_argument("--plan", help="plan JSON file (create)")
    p.set_defaults(func=cmd_rollout)

    p = sub.add_parser("review", help="review queue operations")
    p.add_argument("action", choices=["queue", "decide", "export"])
    p.add_argument("id", nargs="?")
    p.add_argument("--status", help="filter queue by status")
    p.add_argument("--decision", choices=["approve", "prune", "nudge"])
    p.add_argument("--reviewer", default="")
    p.add_argument("--corrected-label", type=int, choices=[0, 1])
    p.add_argument("--tag", help="export filter: original | nudged")
    p.add_argument("--output", help="write export here")
    p.set_defaults(func=cmd_review)

    p = sub.add_parser("simulate", help="run a registered scenario")
    p.add_argument("--scenario", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FairgateError as exc:
        if args.json:
            print(json.dumps({"error": exc.to_dict()}, sort_keys=True, indent=2))
        else:
            print(f"error [{exc.code}]: {exc.message}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
