import csv

import numpy as np
import pytest

from frontprop.eikonal import Trajectory
from frontprop.fpf1 import (load_field, read_fpf1, read_header, read_trajectory, write_csv, write_fpf1,
                            write_trajectory)
from frontprop.grid import Grid, ScalarField
from frontprop.reports import EstimateReport


def test_round_trip_bitwise(tmp_path):
    g = Grid((-1.5, 0.25), 0.05, (30, 12))
    vals = np.random.default_rng(0).normal(size=g.shape)
    p = write_fpf1(tmp_path / "f.fpf1", g, vals, 0.375)
    g2, v2, t = read_fpf1(p)
    assert g2 == g and t == 0.375
    assert np.array_equal(v2, vals)
    hdr = read_header(p)
    assert hdr["extents"] == (30, 12) and hdr["value_count"] == 360


def test_infinite_values_use_sentinel(tmp_path):
    g = Grid.box(0, 1, 0.1)
    vals = np.zeros(g.shape)
    vals[3, 4] = np.inf
    p = write_fpf1(tmp_path / "inf.fpf1", g, vals)
    assert "sentinel" in read_header(p)
    _, back, _ = read_fpf1(p)
    assert np.isposinf(back[3, 4]) and np.isfinite(back).sum() == vals.size - 1


def test_bad_header(tmp_path):
    (tmp_path / "x.fpf1").write_text("NOPE\n")
    with pytest.raises(ValueError):
        read_header(tmp_path / "x.fpf1")
    (tmp_path / "y.fpf1").write_text("FPF1\ndim: 2\nextents: 8 8\norigin: 0 0\nspacing: 1\nvalue_count: 63\n")
    with pytest.raises(ValueError):
        read_header(tmp_path / "y.fpf1")


def test_one_dimensional(tmp_path):
    g = Grid.box(-1, 1, 0.1, dim=1)
    f = ScalarField(g, g.axes()[0], 1.0)
    write_fpf1(tmp_path / "line.fpf1", g, f.values, 1.0)
    back = load_field(tmp_path / "line.fpf1")
    assert back.grid == g and np.array_equal(back.values, f.values)


def test_trajectory_directory(tmp_path):
    g = Grid.box(-1, 1, 0.1)
    fields = [ScalarField(g, np.full(g.shape, k * 0.5), k * 0.5) for k in range(3)]
    traj = Trajectory([0.0, 0.5, 1.0], fields)
    write_trajectory(tmp_path / "traj", traj)
    back = read_trajectory(tmp_path / "traj")
    assert back.times == traj.times
    assert all(np.array_equal(a.values, b.values) for a, b in zip(back.fields, traj.fields))


def test_report_csv(tmp_path):
    rep = EstimateReport("demo").add(0.0, 1.0, 2.0).add(0.5, 3.0, 2.0)
    assert not rep.passed and rep.worst.time == 0.5 and rep.slack == -1.0
    rep.to_csv(tmp_path / "r.csv")
    with open(tmp_path / "r.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["check_name", "time", "lhs", "rhs", "slack", "pass"]
    assert rows[2][-1] == "false"
    write_csv(tmp_path / "e.csv", ["a"], [])
    assert (tmp_path / "e.csv").read_text().strip() == "a"
