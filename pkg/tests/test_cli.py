import json

import pytest

from transitmcs.cli import main


@pytest.fixture
def schedule(tmp_path):
    p = tmp_path / "sched.txt"
    assert main(["synth-schedule", "--services", "1", "--segments", "4", "--journey-s", "120",
                 "--out", str(p)]) == 0
    return p


def test_generate_byte_identical(tmp_path, schedule):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for out in (a, b):
        assert main(["generate", "--schedule", str(schedule), "--out", str(out), "--seed", "7",
                     "--jitter", "1e-5", "--noise-fraction", "0.2"]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_generate_jitter_free_on_line(tmp_path):
    sched = tmp_path / "s.txt"
    sched.write_text("# transitmcs-schedule v1\nservice,A\nstop,A,a,40.0,-73.0\n"
                     "stop,A,b,40.01,-73.0\ntrip,A,A-1,0,60\n")
    out = tmp_path / "p.csv"
    assert main(["generate", "--schedule", str(sched), "--out", str(out), "--jitter", "0",
                 "--sensors-per-segment", "1"]) == 0
    rows = [ln.split(",") for ln in out.read_text().splitlines()[2:]]
    assert len(rows) == 7
    for _sid, t, lat, lon in rows:
        assert float(lon) == -73.0
        assert float(lat) == pytest.approx(40.0 + 0.01 * float(t) / 60, abs=1e-12)


def test_generate_ninety_services(tmp_path, capsys):
    sched = tmp_path / "s.txt"
    assert main(["synth-schedule", "--services", "90", "--segments", "2", "--journey-s", "60",
                 "--out", str(sched)]) == 0
    out = tmp_path / "p.csv"
    assert main(["generate", "--schedule", str(sched), "--out", str(out),
                 "--sensors-per-segment", "2"]) == 0
    assert "services=90" in capsys.readouterr().out


def _pings(tmp_path, schedule):
    p = tmp_path / "p.csv"
    assert main(["generate", "--schedule", str(schedule), "--out", str(p), "--sensors-per-segment", "20",
                 "--jitter", "0"]) == 0
    return p


def _clusters(tmp_path):
    return json.loads((tmp_path / "c.json").read_text())


def test_cluster_single_bus(tmp_path, schedule):
    p = _pings(tmp_path, schedule)
    assert main(["cluster", "--pings", str(p), "--out", str(tmp_path / "c.json")]) == 0
    slots = _clusters(tmp_path)["slots"]
    assert slots and all(len(s["clusters"]) == 1 for s in slots)


def test_cluster_min_s_one(tmp_path, schedule):
    p = _pings(tmp_path, schedule)
    assert main(["cluster", "--pings", str(p), "--out", str(tmp_path / "c.json"), "--min-s", "1",
                 "--epsilon", "1e-9"]) == 0
    assert all(len(s["clusters"]) >= 1 for s in _clusters(tmp_path)["slots"])


def test_cluster_epsilon_zero(tmp_path, schedule, capsys):
    p = tmp_path / "p.csv"
    assert main(["generate", "--schedule", str(schedule), "--out", str(p), "--jitter", "1e-5"]) == 0
    assert main(["cluster", "--pings", str(p), "--out", str(tmp_path / "c.json"), "--epsilon", "0",
                 "--min-s", "2"]) == 0
    assert sum(len(s["clusters"]) for s in _clusters(tmp_path)["slots"]) == 0
    assert "no clusters found" in capsys.readouterr().err


def test_bad_weights():
    with pytest.raises(SystemExit):
        main(["cluster", "--pings", "x", "--out", "y", "--weights", "1,2"])


def test_malformed_schedule_reports_line(tmp_path, capsys):
    sched = tmp_path / "s.txt"
    sched.write_text("# transitmcs-schedule v1\nservice,A\nstop,A,a,40.0\n")
    assert main(["generate", "--schedule", str(sched), "--out", str(tmp_path / "p.csv")]) == 1
    assert "error: line 3:" in capsys.readouterr().err


def test_malformed_pings_reports_line(tmp_path, capsys):
    p = tmp_path / "p.csv"
    p.write_text("# transitmcs-pings v1\nsensor_id,t,lat,lon\na,0,40,-73\na,x,40,-73\n")
    assert main(["cluster", "--pings", str(p), "--out", str(tmp_path / "c.json")]) == 1
    assert ":4:" in capsys.readouterr().err


def _generate_with_truth(tmp_path, schedule, jitter="0"):
    p, t = tmp_path / "p.csv", tmp_path / "t.json"
    assert main(["generate", "--schedule", str(schedule), "--out", str(p), "--truth", str(t),
                 "--sensors-per-segment", "20", "--jitter", jitter]) == 0
    return p, t


def test_evaluate_singletons_zero_sse(tmp_path, schedule):
    p, t = _generate_with_truth(tmp_path, schedule, jitter="1e-5")
    c = tmp_path / "c.json"
    assert main(["cluster", "--pings", str(p), "--out", str(c), "--min-s", "1", "--epsilon", "0"]) == 0
    slots = json.loads(c.read_text())["slots"]
    assert all(len(cl["members"]) == 1 for s in slots for cl in s["clusters"])
    r = tmp_path / "r.json"
    assert main(["evaluate", "--clusters", str(c), "--truth", str(t), "--out", str(r), "--format", "json"]) == 0
    doc = json.loads(r.read_text())
    assert doc["series"]["sse"] and all(v == 0 for v in doc["series"]["sse"])


def test_evaluate_ideal_fixture(tmp_path, schedule):
    p, t = _generate_with_truth(tmp_path, schedule)
    c = tmp_path / "c.json"
    assert main(["cluster", "--pings", str(p), "--out", str(c)]) == 0
    r = tmp_path / "r.json"
    assert main(["evaluate", "--clusters", str(c), "--truth", str(t), "--out", str(r), "--format", "json"]) == 0
    doc = json.loads(r.read_text())
    assert all(s["tra_xb"] is None and s["tra_xb_reason"] for s in doc["per_slot"])
    assert doc["aggregate"]["spatial_error"] == pytest.approx(0, abs=1e-9)
    assert doc["aggregate"]["temporal_error"] == pytest.approx(0, abs=1e-9)


def test_evaluate_slot_mismatch(tmp_path, schedule, capsys):
    p, t = _generate_with_truth(tmp_path, schedule)
    c = tmp_path / "c.json"
    assert main(["cluster", "--pings", str(p), "--out", str(c)]) == 0
    doc = json.loads(c.read_text())
    doc["slots"] = doc["slots"][1:]
    c.write_text(json.dumps(doc))
    assert main(["evaluate", "--clusters", str(c), "--truth", str(t)]) == 1
    assert "missing" in capsys.readouterr().err


def test_run_and_track(tmp_path, schedule, capsys):
    out = tmp_path / "out"
    assert main(["run", "--schedule", str(schedule), "--outdir", str(out), "--sensors-per-segment", "20"]) == 0
    names = sorted(f.name for f in out.iterdir())
    assert names == ["clusters.json", "pings.csv", "pings_raw.csv", "report.json", "truth.json", "vehicles.csv"]
    lines = (out / "vehicles.csv").read_text().splitlines()
    assert lines[1].startswith("slot,track_id,service_id")
    # one bus, one track, assigned to its service
    assert {ln.split(",")[1] for ln in lines[2:]} == {"0"}
    assert {ln.split(",")[2] for ln in lines[2:]} == {"S000"}
    assert "SSE" in capsys.readouterr().out
