import json

import numpy as np
import pytest
import yaml

from dcwelfare import ConfigError, DistributionCurve
from dcwelfare.cli import main, parse_config, parse_config_dict


def write(path, data):
    path.write_text(yaml.safe_dump(data))
    return path


MODEL = {"source": "logit", "alpha": [0.0, 0.5, 1.0], "draws": 20_000}
ANALYSIS = {"p": [1.0, 1.5, 2.0], "p_post": [1.0, 1.2, 1.6], "y": 10.0}


def test_minimal_config_gets_defaults(tmp_path):
    cfg = parse_config(write(tmp_path / "c.yaml", {
        "command": "simulate", "model": {"alpha": [0, 1]}, "analysis": {"p": [1, 2], "y": 5}}))
    assert cfg.analysis["grid_size"] == 512
    assert cfg.model["draws"] == 1_000_000
    assert cfg.seed == 0 and cfg.simulate["kind"] == "cross-section"


def test_config_reports_every_problem():
    with pytest.raises(ConfigError) as info:
        parse_config_dict({"command": "welfare", "model": {"alpha": [0, 1, 2]},
                           "analysis": {"p": [1, 2, 3], "p_post": [1, 2], "y": 1,
                                        "grid": [0.0, 2.0, 1.0], "quantity": "cv"},
                           "bogus": 1})
    errors = info.value.errors
    assert any("analysis.p has 3" in e and "analysis.p_post has 2" in e for e in errors)
    assert any("analysis.grid" in e for e in errors)
    assert any("bogus" in e for e in errors)


def test_config_canonical_roundtrip(tmp_path):
    cfg = parse_config(write(tmp_path / "c.yaml", {"command": "welfare", "model": MODEL,
                                                    "analysis": {**ANALYSIS, "quantity": "cv"}}))
    again = parse_config_dict(yaml.safe_load(cfg.to_yaml()), base_dir=cfg.base_dir)
    assert again == cfg


def test_estimate_needs_existing_data():
    with pytest.raises(ConfigError, match="file not found"):
        parse_config_dict({"command": "estimate", "model": {"source": "kernel", "data": "nope.csv"},
                           "analysis": ANALYSIS})


def test_welfare_step_at_income(tmp_path):
    cfg = write(tmp_path / "c.yaml", {"command": "welfare", "model": MODEL,
                                      "analysis": {**ANALYSIS, "mode": "conditional-on-own-choice",
                                                   "k": 1}})
    assert main(["welfare", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    curve = DistributionCurve.from_csv(tmp_path / "o" / "curve.csv")
    np.testing.assert_array_equal(curve.values, (curve.grid <= 10.0).astype(float))
    manifest = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert set(manifest["outputs"]) == {"curve.csv", "curve.json"}


def test_bounds_without_change_are_points(tmp_path):
    cfg = write(tmp_path / "c.yaml", {"command": "bounds", "model": MODEL,
                                      "analysis": {**ANALYSIS, "p_post": ANALYSIS["p"]}})
    assert main(["bounds", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    rows = (tmp_path / "o" / "bounds.csv").read_text().splitlines()[1:]
    for row in rows:
        i, j, lo, hi = row.split(",")
        assert lo == hi
        if i != j:
            assert float(lo) == 0.0


def test_failures_write_error_record(tmp_path):
    cfg = write(tmp_path / "c.yaml", {"command": "welfare", "model": MODEL,
                                      "analysis": {**ANALYSIS, "quantity": "cv",
                                                   "mode": "conditional-on-both", "i": 1, "j": 0}})
    out = tmp_path / "o"
    assert main(["welfare", "--config", str(cfg), "--out", str(out)]) == 1
    record = json.loads((out / "error.json").read_text())
    assert record["error"] == "DegenerateConditioningError"
    assert main(["welfare", "--config", str(tmp_path / "missing.yaml"), "--out", str(out)]) == 2
    assert json.loads((out / "error.json").read_text())["error"] == "ConfigError"


def test_seed_flag_overrides_config(tmp_path):
    cfg = write(tmp_path / "c.yaml", {"command": "simulate", "seed": 1, "model": MODEL,
                                      "analysis": ANALYSIS, "simulate": {"count": 200}})
    main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "a"), "--seed", "5"])
    main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "b")])
    assert json.loads((tmp_path / "a" / "manifest.json").read_text())["seed"] == 5
    assert (tmp_path / "a" / "data.csv").read_bytes() != (tmp_path / "b" / "data.csv").read_bytes()
