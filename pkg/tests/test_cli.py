import csv
import subprocess
import sys

import numpy as np
import pytest

from racekde.cli import main
from racekde.sketch import RaceSketch


@pytest.fixture
def data_dir(tmp_path):
    rng = np.random.default_rng(11)
    X = rng.normal(size=(60, 4))
    Q = rng.normal(size=(5, 4))
    dense = tmp_path / "data.txt"
    dense.write_text("\n".join(" ".join(repr(float(v)) for v in row) for row in X) + "\n")
    queries = tmp_path / "queries.txt"
    queries.write_text("\n".join(" ".join(repr(float(v)) for v in row) for row in Q) + "\n")
    return tmp_path


def _sketch_args(data_dir, out, seed=0, rows=40):
    return [
        "sketch",
        "--input", str(data_dir / "data.txt"),
        "--kind", "l2",
        "--sigma", "1.5",
        "--rows", str(rows),
        "--range", "16",
        "--seed", str(seed),
        "--output", str(out),
    ]


def test_sketch_then_query(data_dir, capsys):
    out = data_dir / "s.bin"
    assert main(_sketch_args(data_dir, out)) == 0
    captured = capsys.readouterr().out
    assert "items=60" in captured

    csv_out = data_dir / "est.csv"
    rc = main([
        "query",
        "--sketch", str(out),
        "--queries", str(data_dir / "queries.txt"),
        "--output", str(csv_out),
    ])
    assert rc == 0
    with open(csv_out) as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == 5
    assert all(r["exact"] == "" and r["rel_error"] == "" for r in rows)
    assert all(r["method"] == "race" for r in rows)


def test_sketch_deterministic_rerun(data_dir):
    a = data_dir / "a.bin"
    b = data_dir / "b.bin"
    assert main(_sketch_args(data_dir, a)) == 0
    assert main(_sketch_args(data_dir, b)) == 0
    assert a.read_bytes() == b.read_bytes()


def test_merge_matches_joint_sketch(data_dir, tmp_path):
    text = (data_dir / "data.txt").read_text().splitlines()
    half1 = tmp_path / "h1.txt"
    half2 = tmp_path / "h2.txt"
    half1.write_text("\n".join(text[:30]) + "\n")
    half2.write_text("\n".join(text[30:]) + "\n")
    for name in ("h1", "h2"):
        args = _sketch_args(data_dir, tmp_path / f"{name}.bin")
        args[2] = str(tmp_path / f"{name}.txt")
        assert main(args) == 0
    joint = tmp_path / "joint.bin"
    assert main(_sketch_args(data_dir, joint)) == 0
    merged = tmp_path / "merged.bin"
    rc = main([
        "merge", str(tmp_path / "h1.bin"), str(tmp_path / "h2.bin"),
        "--output", str(merged),
    ])
    assert rc == 0
    assert merged.read_bytes() == joint.read_bytes()


def test_merge_mismatched_configs_is_data_error(data_dir, capsys):
    a = data_dir / "a.bin"
    b = data_dir / "b.bin"
    assert main(_sketch_args(data_dir, a, seed=1)) == 0
    assert main(_sketch_args(data_dir, b, seed=2)) == 0
    rc = main(["merge", str(a), str(b), "--output", str(data_dir / "m.bin")])
    assert rc == 2
    assert "seed" in capsys.readouterr().err


def test_info_prints_header(data_dir, capsys):
    out = data_dir / "s.bin"
    main(_sketch_args(data_dir, out))
    capsys.readouterr()
    assert main(["info", str(out)]) == 0
    text = capsys.readouterr().out
    for line in ("kind: l2", "dim: 4", "rows: 40", "range: 16", "items: 60"):
        assert line in text


def test_eval_csv_budgets(data_dir):
    csv_out = data_dir / "eval.csv"
    rc = main([
        "eval",
        "--input", str(data_dir / "data.txt"),
        "--queries", str(data_dir / "queries.txt"),
        "--kind", "l2",
        "--sigma", "1.5",
        "--range", "16",
        "--groups", "5",
        "--sizes", "2000,8000",
        "--output", str(csv_out),
    ])
    assert rc == 0
    with open(csv_out) as f:
        rows = list(csv.DictReader(f))
    # 2 budgets x 2 methods x 5 queries
    assert len(rows) == 20
    assert {r["method"] for r in rows} == {"race", "rs"}
    for r in rows:
        assert r["exact"] != ""
        assert int(r["bytes"]) > 0
        if r["exact"] not in ("", "0"):
            expected = (float(r["estimate"]) - float(r["exact"])) / float(r["exact"])
            assert float(r["rel_error"]) == pytest.approx(expected, rel=1e-12)
    race_bytes = sorted({int(r["bytes"]) for r in rows if r["method"] == "race"})
    assert race_bytes[0] < race_bytes[1] <= 8000


def test_usage_errors_exit_one(data_dir, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["sketch", "--input", "x"])  # missing required flags
    assert exc.value.code == 1
    capsys.readouterr()
    rc = main([
        "eval",
        "--input", str(data_dir / "data.txt"),
        "--queries", str(data_dir / "queries.txt"),
        "--kind", "l2",
        "--range", "16",
        "--groups", "4",
        "--sizes", "2000",
        "--output", str(data_dir / "x.csv"),
    ])
    assert rc == 1  # even group count
    capsys.readouterr()
    args = _sketch_args(data_dir, data_dir / "s.bin")
    args[args.index("--kind") + 1] = "srp"
    assert main(args) == 1  # srp with range != 2**power
    capsys.readouterr()


def test_data_errors_exit_two(data_dir, tmp_path, capsys):
    assert main(["info", str(tmp_path / "missing.bin")]) == 2
    capsys.readouterr()

    bad = tmp_path / "bad.txt"
    bad.write_text("1 2 3\n4 5\n")
    args = _sketch_args(data_dir, tmp_path / "s.bin")
    args[2] = str(bad)
    assert main(args) == 2
    assert "line 2" in capsys.readouterr().err

    out = data_dir / "s.bin"
    main(_sketch_args(data_dir, out))
    corrupt = bytearray(out.read_bytes())
    corrupt[-1] ^= 0x40
    (tmp_path / "c.bin").write_bytes(bytes(corrupt))
    assert main(["info", str(tmp_path / "c.bin")]) == 2
    capsys.readouterr()

    wrongdim = tmp_path / "q2.txt"
    wrongdim.write_text("1 2 3 4 5\n")
    rc = main([
        "query", "--sketch", str(out),
        "--queries", str(wrongdim),
        "--output", str(tmp_path / "q.csv"),
    ])
    assert rc == 2
    capsys.readouterr()


def test_sparse_input_roundtrip(tmp_path, capsys):
    data = tmp_path / "sparse.txt"
    data.write_text("a 1:1.0 3:2.0\nb 2:1.5\nc 1:-1.0 4:0.5\n")
    out = tmp_path / "s.bin"
    rc = main([
        "sketch", "--input", str(data), "--format", "sparse", "--dim", "4",
        "--kind", "l2", "--sigma", "1.0", "--rows", "20", "--range", "8",
        "--output", str(out),
    ])
    assert rc == 0
    assert "items=3" in capsys.readouterr().out
    sketch = RaceSketch.deserialize(str(out))
    assert sketch.config.dim == 4
    assert sketch.items == 3

    rc = main([
        "sketch", "--input", str(data), "--format", "sparse",
        "--kind", "l2", "--sigma", "1.0", "--rows", "20", "--range", "8",
        "--output", str(out),
    ])
    assert rc == 1  # sparse without --dim
    capsys.readouterr()


def test_module_entrypoint_runs():
    proc = subprocess.run(
        [sys.executable, "-m", "racekde", "--help"],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0
    assert "sketch" in proc.stdout and "eval" in proc.stdout
