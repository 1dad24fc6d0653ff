import json

import pandas as pd

from storage.results_store import TOOL_NAME, TOOL_VERSION, ResultsStore


def test_csv_starts_with_a_provenance_comment(tmp_path):
    store = ResultsStore(str(tmp_path / "out"))
    frame = pd.DataFrame({"policy": ["greedy"], "mean_loss": [12.5]})
    path = store.write_csv_atomic(frame, "table.csv", seed=3, policy="greedy")
    with open(path, encoding="utf-8") as f:
        first = f.readline().rstrip("\n")
    assert first == f"# {TOOL_NAME} {TOOL_VERSION} seed=3 policy=greedy"
    back = pd.read_csv(path, comment="#")
    assert back.to_dict("records") == [{"policy": "greedy", "mean_loss": 12.5}]


def test_atomic_write_leaves_no_temp_files(tmp_path):
    store = ResultsStore(str(tmp_path))
    store.write_trace([{"n": 1}], "notes.jsonl")
    store.write_trace([{"n": 2}], "notes.jsonl")
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == ["notes.jsonl", "runs.db"]
    assert (tmp_path / "notes.jsonl").read_text(encoding="utf-8") == "{\"n\": 2}\n"


def test_trace_is_json_lines_with_sorted_keys(tmp_path):
    store = ResultsStore(str(tmp_path))
    path = store.write_trace([{"b": 1, "a": 2}, {"type": "step"}], "trace.jsonl")
    lines = open(path, encoding="utf-8").read().splitlines()
    assert lines[0] == '{"a": 2, "b": 1}'
    assert [json.loads(line) for line in lines] == [{"a": 2, "b": 1}, {"type": "step"}]


def test_run_index_records_and_aggregates(tmp_path):
    store = ResultsStore(str(tmp_path))
    episodes = pd.DataFrame([
        {"config": "default", "policy": "greedy", "seed": 0, "packet_loss": 10, "f_events": 1, "g_events": 2},
        {"config": "default", "policy": "greedy", "seed": 1, "packet_loss": 20, "f_events": 0, "g_events": 3},
        {"config": "default", "policy": "max_gain", "seed": 0, "packet_loss": 50, "f_events": 0, "g_events": 9},
    ])
    ids = store.add_runs("compare", episodes, "compare.csv")
    assert ids == [1, 2, 3]
    runs = store.get_all_runs()
    assert [r["policy"] for r in runs] == ["greedy", "greedy", "max_gain"]
    assert runs[0]["csv_path"] == "compare.csv"
    stats = store.get_run_stats()
    assert stats == {
        "greedy": {"runs": 2, "mean_packet_loss": 15.0},
        "max_gain": {"runs": 1, "mean_packet_loss": 50.0},
    }


def test_run_index_survives_reopening(tmp_path):
    ResultsStore(str(tmp_path)).add_run("simulate", "default", "greedy", 4, 7)
    assert len(ResultsStore(str(tmp_path)).get_all_runs()) == 1


def test_export_report(tmp_path):
    store = ResultsStore(str(tmp_path))
    store.add_run("simulate", "default", "random", 0, 33)
    path = store.export_report()
    report = json.loads(open(path, encoding="utf-8").read())
    assert report["statistics"]["random"]["runs"] == 1
    assert report["runs"][0]["seed"] == 0
