"""Experiment runners beyond the CLI basics: decay, coupling, compare, regularity."""

import json

import pytest

from kpzlab.experiments import ExperimentSpec, run
from kpzlab.localfn import dump_driving_json, site_fn


def driving_obj():
    return json.loads(dump_driving_json(site_fn(-1)))


def test_bg_decay_experiment(tmp_path):
    spec = ExperimentSpec(
        "bg-decay",
        {"driving": driving_obj(), "N_list": [16, 32], "horizon": 0.25, "grid_dump": 1},
        replicas=20,
        master_seed=3,
        threads=2,
    )
    assert run(spec, str(tmp_path)) == 0
    text = (tmp_path / "bg_decay.csv").read_text().splitlines()
    header = [l for l in text if not l.startswith("#")][0]
    assert header.startswith("N,replicas,mean_sup_upsilon_bg")
    out = json.loads((tmp_path / "bg_decay.json").read_text())
    assert "fitted_exponent" in out
    grid = (tmp_path / "bg_grid.csv").read_text().splitlines()
    hdr = [l for l in grid if not l.startswith("#")][0]
    assert hdr == "replica,t,x,upsilon_bg,upsilon_hl"


def test_coupling_experiment(tmp_path):
    spec = ExperimentSpec(
        "coupling",
        {"driving": driving_obj(), "N": 128, "ell": 2, "epsilon": 0.2,
         "tau": 128.0 ** (-4.0 / 3.0)},
        replicas=200,
        master_seed=4,
        threads=2,
    )
    assert run(spec, str(tmp_path)) == 0
    out = json.loads((tmp_path / "coupling.json").read_text())
    assert 0.0 <= out["p_hat"] <= 1.0
    rows = [l for l in (tmp_path / "coupling.csv").read_text().splitlines() if not l.startswith("#")]
    assert len(rows) == 201  # header + replicas


def test_kv2_experiment(tmp_path):
    spec = ExperimentSpec(
        "kv2",
        {"driving": driving_obj(), "N": 64.0, "half_width": 4},
        replicas=400,
        master_seed=5,
    )
    assert run(spec, str(tmp_path)) == 0
    out = json.loads((tmp_path / "kv2.json").read_text())
    assert out["ratio"] <= 100.0


def test_kpz_compare_experiment_small(tmp_path):
    spec = ExperimentSpec(
        "kpz-compare",
        {"driving": driving_obj(), "N_list": [16, 32], "M": 64, "dt": 5e-4,
         "horizon": 0.25, "she_replicas": 400, "times": [0.25]},
        replicas=400,
        master_seed=6,
        threads=2,
    )
    assert run(spec, str(tmp_path)) == 0
    out = json.loads((tmp_path / "kpz_compare.json").read_text())
    assert "gaps" in out and "martingale" in out
    gap = out["gaps"]["32"]["0.25"]["relative_var_gap"]
    assert gap < 1.0
    rows = [l for l in (tmp_path / "kpz_compare.csv").read_text().splitlines() if not l.startswith("#")]
    assert rows[0] == "time,x,mean_h,var_h,grid,ensemble"
    assert any(r.endswith("she") for r in rows[1:])
    assert any(r.endswith("particle") for r in rows[1:])


def test_regularity_experiment(tmp_path):
    spec = ExperimentSpec(
        "regularity",
        {"driving": driving_obj(), "N": 64, "horizon": 0.5},
        replicas=30,
        master_seed=7,
        threads=2,
    )
    assert run(spec, str(tmp_path)) == 0
    out = json.loads((tmp_path / "regularity.json").read_text())
    assert out["fraction_exceeded"] <= 0.2
    rows = [l for l in (tmp_path / "regularity.csv").read_text().splitlines() if not l.startswith("#")]
    assert rows[0].startswith("replica,sup_Z,sup_invZ")


def test_duality_experiment(tmp_path):
    spec = ExperimentSpec("duality", {"driving": driving_obj(), "N_list": [16]}, master_seed=8)
    assert run(spec, str(tmp_path)) == 0
    out = json.loads((tmp_path / "duality.json").read_text())
    assert out["results"][0]["split"] <= 1e-9


@pytest.mark.slow
def test_regularity_calibration_full_scale(tmp_path):
    """d = 0, N = 128, t <= 1: few replicas exceed the C = 10 thresholds."""
    from kpzlab.localfn import constant_fn, dump_driving_json as dump

    spec = ExperimentSpec(
        "regularity",
        {"driving": json.loads(dump(constant_fn(0.0))), "N": 128, "horizon": 1.0, "C": 10.0},
        replicas=500,
        master_seed=9,
        threads=8,
    )
    assert run(spec, str(tmp_path)) == 0
    out = json.loads((tmp_path / "regularity.json").read_text())
    assert out["fraction_exceeded"] <= 0.05
