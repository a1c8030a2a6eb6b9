from __future__ import annotations

import json

import pytest

from fairgate.cli import main

from conftest import jsonl, records_from_counts, simple_label


@pytest.fixture
def fixture_files(tmp_path):
    records = records_from_counts({"a": (40, 5, 10, 45), "b": (20, 10, 20, 50)})
    events_path = tmp_path / "events.jsonl"
    outcomes_path = tmp_path / "outcomes.jsonl"
    label_path = tmp_path / "label.json"
    events_path.write_text(jsonl([r.event.to_dict() for r in records]))
    outcomes_path.write_text(
        jsonl(
            [
                {
                    "event_id": r.event.event_id,
                    "outcome_label": r.outcome_label,
                    "observed_at": r.event.to_dict()["timestamp"],
                }
                for r in records
            ]
        )
    )
    label_path.write_text(json.dumps(simple_label({"a": 0.6, "b": 0.4}).to_dict()))
    return events_path, outcomes_path, label_path


def run_cli(capsys, argv):
    code = main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_unknown_subcommand_exits_2(capsys):
    with pytest.raises(SystemExit) as excinfo:
        main(["definitely-not-a-command"])
    assert excinfo.value.code == 2


def test_missing_required_arg_exits_2(capsys):
    with pytest.raises(SystemExit) as excinfo:
        main(["simulate"])  # --scenario required
    assert excinfo.value.code == 2


def test_parity_stateless_json(capsys, fixture_files):
    events, outcomes, label = fixture_files
    code, out, _ = run_cli(
        capsys,
        ["--json", "parity", "--events", str(events), "--outcomes", str(outcomes),
         "--label", str(label)],
    )
    assert code == 0
    body = json.loads(out)
    gaps = body["reports"][0]["pairs"][0]["gaps"]
    assert gaps["demographic_parity"] == pytest.approx(0.15, abs=1e-12)
    assert gaps["equal_opportunity"] == pytest.approx(0.30, abs=1e-12)


def test_parity_human_output(capsys, fixture_files):
    events, outcomes, label = fixture_files
    code, out, _ = run_cli(
        capsys,
        ["parity", "--events", str(events), "--outcomes", str(outcomes),
         "--label", str(label)],
    )
    assert code == 0
    assert "a vs b" in out
    assert "equalized_odds=0.3000" in out


def test_drift_stateless(capsys, fixture_files):
    events, outcomes, label = fixture_files
    code, out, _ = run_cli(
        capsys,
        ["--json", "drift", "--events", str(events), "--outcomes", str(outcomes),
         "--label", str(label)],
    )
    assert code == 0
    body = json.loads(out)
    assert body["data"][0]["name"] == "subgroup_share:group"


def test_ingest_into_data_dir_then_query(capsys, fixture_files, tmp_path):
    events, outcomes, label = fixture_files
    data_dir = tmp_path / "data"
    code, out, _ = run_cli(
        capsys,
        ["--data-dir", str(data_dir), "--json", "ingest",
         "--events", str(events), "--outcomes", str(outcomes)],
    )
    assert code == 0
    assert json.loads(out)["stored"] == 200

    # Stateful query against the same data dir needs the label loaded.
    import shutil

    labels_dir = data_dir / "labels"
    labels_dir.mkdir(parents=True, exist_ok=True)
    shutil.copy(label, labels_dir / "m1.json")
    code, out, _ = run_cli(
        capsys, ["--data-dir", str(data_dir), "--json", "metrics", "--attribute", "group"]
    )
    assert code == 0
    body = json.loads(out)
    assert body["attributes"]["group"]["a"]["confusion"]["tp"] == 40


def test_rebalance_cli_match_majority(capsys, tmp_path):
    rows = []
    for i in range(95):
        rows.append({"values": [float(i), 0.0], "subgroup": {"g": "a"}, "label": 1})
    for i in range(5):
        rows.append({"values": [float(i), 9.0], "subgroup": {"g": "b"}, "label": 0})
    input_path = tmp_path / "rows.jsonl"
    output_path = tmp_path / "out.jsonl"
    input_path.write_text(jsonl(rows))
    code, out, _ = run_cli(
        capsys,
        ["--json", "rebalance", "--input", str(input_path), "--attribute", "g",
         "--match-majority", "--k", "3", "--output", str(output_path)],
    )
    assert code == 0
    body = json.loads(out)
    assert body["after"] == {"a": 95, "b": 95}
    written = [json.loads(line) for line in output_path.read_text().splitlines()]
    assert len(written) == 190


def test_rollout_cli_lifecycle(capsys, tmp_path):
    data_dir = tmp_path / "data"
    plan_path = tmp_path / "plan.json"
    plan_path.write_text(
        json.dumps(
            {
                "rollout_id": "cli-r1",
                "model_version": "m1",
                "stages": [{"fraction": 1.0, "min_events": 0, "min_duration_seconds": 0}],
                "max_parity_gap": {},
                "cohort_attributes": [],
            }
        )
    )
    code, out, _ = run_cli(
        capsys,
        ["--data-dir", str(data_dir), "--json", "rollout", "create", "--plan", str(plan_path)],
    )
    assert code == 0
    assert json.loads(out)["status"] == "pending"
    code, out, _ = run_cli(
        capsys, ["--data-dir", str(data_dir), "--json", "rollout", "advance", "cli-r1"]
    )
    assert json.loads(out)["status"] == "running"
    code, out, _ = run_cli(
        capsys, ["--data-dir", str(data_dir), "--json", "rollout", "list"]
    )
    listing = json.loads(out)["rollouts"]
    assert listing[0]["plan"]["rollout_id"] == "cli-r1"


def test_rollout_domain_error_exit_1(capsys, tmp_path):
    code, out, err = run_cli(
        capsys, ["--data-dir", str(tmp_path / "d"), "rollout", "get", "missing"]
    )
    assert code == 1
    assert "unknown_rollout" in err


def test_domain_error_json_payload(capsys, tmp_path):
    code, out, _ = run_cli(
        capsys, ["--data-dir", str(tmp_path / "d"), "--json", "rollout", "get", "missing"]
    )
    assert code == 1
    assert json.loads(out)["error"]["code"] == "unknown_rollout"


def test_simulate_cli_vaccine(capsys):
    code, out, _ = run_cli(capsys, ["--json", "simulate", "--scenario", "vaccine"])
    assert code == 0
    body = json.loads(out)
    assert body["share_psi_max"] == pytest.approx(0.0512, abs=0.01)
    assert body["data_status"] == "watch"
    assert body["all_held"] is True


def test_simulate_unknown_scenario_exit_1(capsys):
    code, _, err = run_cli(capsys, ["simulate", "--scenario", "nope"])
    assert code == 1
    assert "unknown_scenario" in err
