"""Command-line front end: verbs, artifacts, exit codes, determinism."""

import json

from hamca.cli import main


def run(args):
    return main(args)


def test_build_and_orbit_round_trip(tmp_path, capsys):
    m = tmp_path / "m.json"
    assert run(["build-machine", "--inner", "halt_now", "--variant", "one-way-amp",
                "--out", str(m)]) == 0
    orb = tmp_path / "orbit.jsonl"
    stats = tmp_path / "stats.csv"
    assert run(["orbit", "--machine", str(m), "--L", "6", "--out", str(orb),
                "--stats-out", str(stats)]) == 0
    lines = orb.read_text().strip().split("\n")
    first = json.loads(lines[0])
    assert first["j"] == 1
    assert len(first["cells"]) == 7
    text = stats.read_text()
    assert text.startswith("# version: hamca")
    assert "j,n_a1,n_a2,n_a3" in text


def test_orbit_missing_machine_exit_2(capsys):
    assert run(["orbit", "--machine", "does-not-exist.json", "--L", "4"]) == 2
    assert "machine spec not found" in capsys.readouterr().err


def test_orbit_terminal_kinds(tmp_path, capsys):
    assert run(["orbit", "--inner", "halt_now", "--variant", "one-way-amp",
                "--no-decode", "--L", "6",
                "--out", str(tmp_path / "a.jsonl"),
                "--stats-out", str(tmp_path / "a.csv")]) == 0
    assert "dead_end" in capsys.readouterr().out


def test_gap_verb(tmp_path):
    out = tmp_path / "gap.json"
    assert run(["gap", "--inner", "halt_now", "--variant", "one-way-amp",
                "--no-decode", "--L", "5", "--out", str(out)]) == 0
    data = json.loads(out.read_text())
    assert data["satisfied"] is True


def test_evolve_deterministic(tmp_path):
    a, b, c = tmp_path / "a.csv", tmp_path / "b.csv", tmp_path / "c.csv"
    args = ["evolve", "--inner", "halt_now", "--variant", "one-way-amp",
            "--no-decode", "--L", "5", "--t-max", "4", "--t-steps", "6"]
    assert run(args + ["--out", str(a)]) == 0
    assert run(args + ["--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    # the parallelism cap never changes the bytes
    assert run(["--threads", "4"] + args + ["--out", str(c)]) == 0
    assert a.read_text().replace('"threads": 1', '"threads": 4') == c.read_text()
    body = a.read_text()
    assert "unhalved" in body
    assert "dist_to_a1" in body


def test_evolve_initial_distance_small(tmp_path):
    """At time zero the averaged state sits near the all-a1 site state."""
    out = tmp_path / "e.csv"
    assert run(["evolve", "--inner", "ping_pong", "--variant", "one-way-amp",
                "--no-decode", "--L", "40", "--t-max", "0", "--t-steps", "1",
                "--out", str(out)]) == 0
    row = out.read_text().strip().split("\n")[-1].split(",")
    assert float(row[5]) <= 2 / 41 + 1e-9


def test_timeavg_verb(tmp_path):
    out = tmp_path / "avg.json"
    assert run(["timeavg", "--inner", "halt_now", "--variant", "one-way-amp",
                "--no-decode", "--L", "4", "--out", str(out)]) == 0
    data = json.loads(out.read_text())
    assert abs(sum(row[i][0] for i, row in enumerate(data["state"])) - 1) < 1e-9


def test_decide_verb(tmp_path):
    inst = tmp_path / "inst.json"
    inst.write_text(json.dumps({
        "inner": "halt_now", "variant": "one-way-amp", "decode": False,
        "mode": "anchored", "L": 4, "alpha": [0, 1], "v": "1",
        "eta": 0.846, "eps1": 0.35, "t0_override": 200,
        "gap_floor_from_fixture": True,
    }))
    out = tmp_path / "verdict.json"
    assert run(["decide", str(inst), "--out", str(out)]) == 0
    data = json.loads(out.read_text())
    assert data["verdict"] == "yes"
    assert any(e["term"] == "grid_discretization" for e in data["error_ledger"])


def test_decide_malformed_instance(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run(["decide", str(bad)]) == 2


def test_sample_good_verb(tmp_path):
    out = tmp_path / "sg.json"
    assert run(["sample-good", "--samples", "5000", "--out", str(out)]) == 0
    data = json.loads(out.read_text())
    assert data["within_bound"] is True


def test_resource_guard_exit_3(capsys):
    # an orbit that cannot close within the step budget trips the guard
    assert run(["timeavg", "--inner", "ping_pong", "--variant", "one-way-amp",
                "--no-decode", "--L", "200", "--max-steps", "50"]) == 3
    assert "resource guard" in capsys.readouterr().err


def test_phase_decode_verb(tmp_path, capsys):
    assert run(["phase-decode", "--v", "1101", "--n-prime", "8", "--out", "-"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["bits"] == "1101"
    assert data["length"] == 4
    assert run(["phase-decode", "--beta", "1/3", "--n-prime", "4"]) == 2
