import json
import math
import struct

import numpy as np
import pytest

from superradiance import io
from superradiance.cli import RunConfig, main, parse_kd
from superradiance.estimator import FrameStack, synthesize_frames
from superradiance.exceptions import DomainError
from superradiance.model import CorrelationCurve, EmitterChain


def test_gmf_layout_and_round_trip(tmp_path):
    stack = synthesize_frames(EmitterChain(3, math.pi, "tls"), np.linspace(-0.5, 0.5, 7), 11, seed=1)
    path = tmp_path / "s.gmf"
    io.write_stack(path, stack, {"note": "x"})
    raw = path.read_bytes()
    assert raw[:4] == b"GMF1"
    assert struct.unpack("<III", raw[4:16]) == (1, 7, 11)
    assert len(raw) == 16 + 4 * 7 * 11
    first = struct.unpack("<7f", raw[16:44])
    assert np.array_equal(np.array(first, dtype=np.float32), stack.intensities[0])
    side = json.loads((tmp_path / "s.json").read_text())
    assert side["config"] == {"note": "x"}
    back = io.read_stack(path)
    assert np.array_equal(back.intensities, stack.intensities)
    assert np.array_equal(back.pixel_angles, stack.pixel_angles)


def test_gmf_rejects_bad_files(tmp_path):
    bad = tmp_path / "bad.gmf"
    bad.write_bytes(b"XXXX" + struct.pack("<III", 1, 2, 2) + bytes(16))
    with pytest.raises(DomainError):
        io.read_stack(bad)
    short = tmp_path / "short.gmf"
    short.write_bytes(b"GMF1" + struct.pack("<III", 1, 2, 2) + bytes(8))
    with pytest.raises(DomainError):
        io.read_stack(short)
    ver = tmp_path / "ver.gmf"
    ver.write_bytes(b"GMF1" + struct.pack("<III", 2, 1, 1) + bytes(4))
    with pytest.raises(DomainError):
        io.read_stack(ver)


def test_csv_round_trip_is_lossless(tmp_path, rng):
    x = np.sort(rng.uniform(-1, 1, 25))
    c = CorrelationCurve(x, rng.uniform(0, 9, 25), rng.uniform(0, 1, 25), {"m": 3})
    path = tmp_path / "c.csv"
    io.write_curve(path, c)
    assert path.read_text().splitlines()[0] == "theta2,value,stderr"
    back = io.read_curve(path)
    assert np.array_equal(back.theta2, c.theta2)
    assert np.array_equal(back.values, c.values)
    assert np.array_equal(back.stderr, c.stderr)
    assert back.meta["m"] == 3
    plain = CorrelationCurve(x, np.ones(25))
    io.write_curve(tmp_path / "p.csv", plain)
    assert io.read_curve(tmp_path / "p.csv").stderr is None


def test_parse_kd():
    assert parse_kd("pi") == math.pi
    assert parse_kd("2pi") == 2 * math.pi
    assert parse_kd("2*pi") == 2 * math.pi
    assert parse_kd("pi/2") == math.pi / 2
    assert parse_kd("1.5") == 1.5


def test_cli_analytic_ten_emitter_peak(tmp_path):
    out = tmp_path / "spe10.csv"
    rc = main(["analytic", "--model", "spe", "--n", "10", "--m", "10", "--kd", "pi",
               "--theta1", "0", "--grid", "-0.6:0.6:1201", "-o", str(out)])
    assert rc == 0
    c = io.read_curve(out)
    assert len(c) == 1201 and c.values.max() == 1.0
    assert c.theta2[np.argmax(c.values)] == 0.0
    assert c.meta["normalization"] == "max-normalized"


def test_cli_analytic_tls_unit_baseline(tmp_path):
    out = tmp_path / "tls8.csv"
    assert main(["analytic", "--model", "tls", "--n", "8", "--m", "8", "--grid", "-0.3:0.3:61",
                 "-o", str(out)]) == 0
    assert io.read_curve(out).values.max() == pytest.approx(8.0)
    assert main(["analytic", "--model", "tls", "--n", "8", "--m", "8", "--grid", "-0.3:0.3:61",
                 "--absolute-scale", "-o", str(out)]) == 0
    assert io.read_curve(out).values.max() == pytest.approx(8.0 * 5040)


def test_cli_first_order_flat(tmp_path, capsys):
    assert main(["analytic", "--n", "4", "--m", "1", "--grid", "-1:1:9"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "theta2,value"
    assert {float(r.split(",")[1]) for r in lines[1:]} == {1.0}


def test_cli_degrees(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    main(["analytic", "--n", "3", "--m", "2", "--grid", "-30:30:7", "--degrees", "-o", str(a)])
    main(["analytic", "--n", "3", "--m", "2", "--grid",
          f"{-math.pi / 6}:{math.pi / 6}:7", "-o", str(b)])
    assert np.allclose(io.read_curve(a).values, io.read_curve(b).values)


def test_cli_simulate_correlate_fit_report(tmp_path):
    frames = tmp_path / "s.gmf"
    assert main(["simulate", "--model", "tls", "--n", "4", "--frames", "4000", "--grid",
                 "-1.5:1.5:61", "--seed", "42", "-o", str(frames)]) == 0
    again = tmp_path / "t.gmf"
    main(["simulate", "--model", "tls", "--n", "4", "--frames", "4000", "--grid",
          "-1.5:1.5:61", "--seed", "42", "--workers", "4", "-o", str(again)])
    assert frames.read_bytes() == again.read_bytes()
    other = tmp_path / "u.gmf"
    main(["simulate", "--model", "tls", "--n", "4", "--frames", "4000", "--grid",
          "-1.5:1.5:61", "--seed", "43", "-o", str(other)])
    assert frames.read_bytes() != other.read_bytes()

    g4 = tmp_path / "g4.csv"
    assert main(["correlate", "--frames", str(frames), "--m", "4", "--ref", "auto", "-o", str(g4)]) == 0
    assert g4.read_text().splitlines()[0] == "theta2,value,stderr"

    report = tmp_path / "fit.json"
    assert main(["fit", "--data", str(g4), "--template", "eq5", "--n", "4", "--m", "4",
                 "-o", str(report)]) == 0
    fit = json.loads(report.read_text())
    alias = tmp_path / "fit_alias.json"
    main(["fit", "--data", str(g4), "--template", "tls", "--n", "4", "--m", "4", "-o", str(alias)])
    assert json.loads(alias.read_text())["prefactor"] == fit["prefactor"]
    assert {"offset", "prefactor", "residual_rms", "parameter_stderr"} <= fit.keys()

    metrics = tmp_path / "metrics.json"
    assert main(["report", "--data", str(g4), "-o", str(metrics)]) == 0
    m = json.loads(metrics.read_text())
    assert abs(m["peak_position"]) < 0.05 and 0 < m["visibility"] < 1


def test_cli_replay_reproduces_files(tmp_path):
    out = tmp_path / "q.csv"
    assert main(["quantum", "--n", "4", "--m", "3", "--grid", "-0.5:0.5:21", "-o", str(out)]) == 0
    copy = tmp_path / "q2.csv"
    assert main(["replay", str(tmp_path / "q.csv.json"), "-o", str(copy)]) == 0
    assert out.read_bytes() == copy.read_bytes()
    frames = tmp_path / "s.gmf"
    main(["simulate", "--model", "cls", "--n", "3", "--frames", "500", "--seed", "9", "-o", str(frames)])
    frames2 = tmp_path / "s2.gmf"
    assert main(["replay", str(tmp_path / "s.json"), "-o", str(frames2)]) == 0
    assert frames.read_bytes() == frames2.read_bytes()


def test_cli_quantum_engines_agree(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    args = ["quantum", "--n", "5", "--m", "3", "--grid", "-0.5:0.5:11"]
    main(args + ["--engine", "statevector", "-o", str(a)])
    main(args + ["--engine", "permanent", "-o", str(b)])
    assert np.allclose(io.read_curve(a).values, io.read_curve(b).values, rtol=1e-10)


def test_cli_seed_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("SUPERRADIANCE_SEED", "77")
    out = tmp_path / "e.gmf"
    main(["simulate", "--n", "2", "--frames", "50", "-o", str(out)])
    assert json.loads((tmp_path / "e.json").read_text())["config"]["seed"] == 77


def test_cli_exit_codes(tmp_path):
    assert main(["analytic", "--n", "3"]) == 2
    assert main(["analytic", "--n", "3", "--m", "2", "--kd", "-1"]) == 2
    assert main(["analytic", "--n", "3", "--m", "5"]) == 2
    assert main(["simulate", "--model", "spe", "--n", "2", "-o", str(tmp_path / "x.gmf")]) == 2
    assert main(["analytic", "--n", "3", "--m", "2", "-o", str(tmp_path / "no" / "x.csv")]) == 3
    assert main(["report", "--data", str(tmp_path / "missing.csv")]) == 3
    stack = FrameStack(np.column_stack([np.ones(30), np.zeros(30)]), [0.0, 0.1])
    io.write_stack(tmp_path / "z.gmf", stack)
    assert main(["correlate", "--frames", str(tmp_path / "z.gmf"), "--m", "2"]) == 4
    flat = tmp_path / "flat.csv"
    main(["analytic", "--n", "3", "--m", "1", "-o", str(flat)])
    assert main(["report", "--data", str(flat)]) == 4


def test_run_config_round_trip():
    cfg = RunConfig("analytic", model="spe", n=3, kd=math.pi, m=2, grid=[-1.0, 1.0, 5])
    assert RunConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg
    assert np.array_equal(cfg.grid_values(), np.linspace(-1, 1, 5))
