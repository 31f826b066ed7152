import json

import numpy as np
import pytest

from springrod import dataio
from springrod.errors import ParseError, SchemaError
from springrod.topology import icosahedron


def _lines(path):
    return path.read_text().splitlines()


def test_round_trip_bitwise(tmp_path, perturbed):
    _, _, data = perturbed
    from dataclasses import replace
    tr = replace(data[0], meta={"note": "x"})
    dataio.write_trajectory(tr, tmp_path / "a.jsonl")
    again = dataio.read_trajectory(tmp_path / "a.jsonl")
    assert again == tr
    assert again.meta["note"] == "x"
    # awkward doubles survive too
    weird = np.nextafter(tr.states.p, np.inf)
    from springrod.core import SystemState
    from springrod.integrator import Trajectory
    t2 = Trajectory(SystemState(weird, tr.states.v, tr.states.q, tr.states.w), tr.commands, tr.dt)
    dataio.write_trajectory(t2, tmp_path / "b.jsonl")
    assert dataio.read_trajectory(tmp_path / "b.jsonl") == t2


def test_record_layout(tmp_path, ico_data):
    tr = ico_data[0]
    path = tmp_path / "t.jsonl"
    dataio.write_trajectory(tr, path)
    lines = _lines(path)
    assert len(lines) == tr.n_steps + 2
    header = json.loads(lines[0])["header"]
    assert header["schema_version"] == 1 and header["n_rods"] == 6
    rec = json.loads(lines[1])
    assert rec["t"] == 0 and len(rec["rods"]) == 6 and set(rec["rods"][0]) == {"p", "v", "q", "w"}


def test_truncated_file(tmp_path, ico_data):
    path = tmp_path / "t.jsonl"
    dataio.write_trajectory(ico_data[0], path)
    lines = _lines(path)
    path.write_text("\n".join(lines[:10]) + "\n" + lines[10][: len(lines[10]) // 2])
    with pytest.raises(ParseError) as exc:
        dataio.read_trajectory(path)
    assert exc.value.line == 11
    path.write_text("\n".join(lines[:10]) + "\n")
    with pytest.raises(ParseError) as exc:
        dataio.read_trajectory(path)
    assert exc.value.line == 11


def test_non_unit_quaternion(tmp_path, ico_data):
    path = tmp_path / "t.jsonl"
    dataio.write_trajectory(ico_data[0], path)
    lines = _lines(path)
    rec = json.loads(lines[5])
    rec["rods"][2]["q"] = [0.9, 0.0, 0.0, 0.0]
    lines[5] = json.dumps(rec)
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(SchemaError, match="non-unit quaternion"):
        dataio.read_trajectory(path)


def test_rod_count_mismatch(tmp_path, ico_data):
    path = tmp_path / "t.jsonl"
    dataio.write_trajectory(ico_data[0], path)
    lines = _lines(path)
    rec = json.loads(lines[3])
    rec["rods"].pop()
    lines[3] = json.dumps(rec)
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(SchemaError, match="line 4"):
        dataio.read_trajectory(path)


def test_dataset_directory(tmp_path, ico, ico_data):
    topo, params = ico
    m = dataio.write_dataset(tmp_path / "ds", topo, {"train": ico_data[:3], "val": [], "test": ico_data[3:4]},
                             params, {"seed": 11})
    assert m["split"] == {"train": 3, "val": 0, "test": 1} and m["seed"] == 11
    ds = dataio.Dataset(tmp_path / "ds")
    assert ds.true_params == params
    train = ds.split("train")
    assert len(train) == 3 and train.step_counts == [120] * 3
    assert train[1] == ico_data[1] and train[-1] == ico_data[2]
    ds.check_topology(topo)
    with pytest.raises(SchemaError):
        ds.check_topology(topo.replace(dt=0.002))
    with pytest.raises(SchemaError):
        ds.check_topology(icosahedron(rest_length=0.6))


def test_missing_manifest(tmp_path):
    with pytest.raises(SchemaError):
        dataio.Dataset(tmp_path)


def test_csv_round_trip(tmp_path):
    rows = [{"a": 1, "b": 0.1 + 0.2}, {"a": 2, "b": 1e-300}]
    dataio.write_csv(rows, ["a", "b"], tmp_path / "x.csv")
    back = dataio.read_csv(tmp_path / "x.csv")
    assert float(back[0]["b"]) == 0.1 + 0.2 and float(back[1]["b"]) == 1e-300
    assert (tmp_path / "x.csv").read_text().splitlines()[0] == "a,b"
