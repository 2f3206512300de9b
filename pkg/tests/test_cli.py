import csv
import json
import math

import pytest
import yaml

from collapselab import cli
from collapselab.experiments import REGISTRY, parse_number


def write(tmp_path, cfg, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(cfg))
    return str(p)


def test_parse_number():
    assert parse_number("pi/512") == pytest.approx(math.pi / 512)
    assert parse_number(3) == 3
    for bad in ("__import__('os')", "pi +", True, None):
        with pytest.raises(ValueError):
            parse_number(bad)


@pytest.mark.parametrize("name", sorted(REGISTRY))
def test_default_configs_are_valid(name):
    assert cli.validate({"experiment": name, "seed": 1}) == []


def test_shipped_configs_are_valid():
    from pathlib import Path
    configs = sorted((Path(__file__).parent.parent / "configs").glob("*.yaml"))
    assert len(configs) == len(REGISTRY)
    for path in configs:
        assert cli.validate(cli.load_config(path)) == []


def test_non_positive_step_is_one_violation_naming_the_field():
    v = cli.validate({"experiment": "zeno-scan", "params": {"dt_solver": 0}})
    assert len(v) == 1 and "dt_solver" in v[0]


def test_boundary_off_grid_cites_domain_invariant():
    v = cli.validate({"experiment": "diffusion-equivalence",
                      "params": {"grid": {"x_min": 0.0, "x_max": "pi", "n_points": 500}, "domain": [0.1, "pi"]}})
    assert any("DomainSpec" in s and "lower" in s for s in v)


def test_collects_every_violation():
    v = cli.validate({"experiment": "fleming-viot", "seed": -1, "colour": "red",
                      "params": {"dt": -1, "n_walkers": 1, "bogus": 2}})
    assert len(v) == 3  # seed, unknown top-level key, unknown param short-circuits the rest
    v = cli.validate({"experiment": "fleming-viot", "params": {"dt": -1, "n_walkers": 1}})
    assert len(v) == 2
    assert cli.validate({"experiment": "nope"})[0].startswith("experiment")


def test_validate_command_exit_codes(tmp_path, capsys):
    assert cli.main(["validate", "--config", write(tmp_path, {"experiment": "tail-fit"})]) == 0
    bad = write(tmp_path, {"experiment": "tail-fit", "params": {"n_samples": 1}}, "bad.yaml")
    assert cli.main(["validate", "--config", bad]) == 2
    assert cli.main(["run", "--config", bad]) == 2
    assert cli.main(["run", "--config", str(tmp_path / "missing.yaml")]) == 2


def test_list(capsys):
    assert cli.main(["list"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert [line.split()[0] for line in lines] == list(REGISTRY)


def test_figure1_outputs(tmp_path):
    cfg = write(tmp_path, {"experiment": "pmwf-figure1", "seed": 5})
    out = tmp_path / "out"
    assert cli.main(["run", "--config", cfg, "--out", str(out)]) == 0
    assert sorted(p.name for p in out.iterdir()) == ["figure1.csv", "figure1.plot", "manifest.json"]
    with open(out / "figure1.csv") as fh:
        header = next(csv.reader(fh))
    assert header == ["x [length]", "re_phi_I [1/sqrt(length)]", "im_phi_I [1/sqrt(length)]",
                      "re_phi_C [1/sqrt(length)]", "im_phi_C [1/sqrt(length)]"]
    m = json.loads((out / "manifest.json").read_text())
    assert m["status"] == "pass" and m["seed"] == 5
    for c in m["criteria"]:
        assert c["tolerance"] and c["oracle"]
    assert "figure1.csv" in (out / "figure1.plot").read_text()


def test_failing_criterion_exits_one(tmp_path):
    cfg = write(tmp_path, {"experiment": "interval-scaling"})
    assert cli.main(["run", "--config", cfg, "--out", str(tmp_path / "o")]) == 1
    m = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert m["status"] == "fail"


def test_numerical_guard_exits_three(tmp_path):
    cfg = write(tmp_path, {"experiment": "fleming-viot",
                           "params": {"domain": [0, 0.01], "n_walkers": 2, "dt": 1.0, "t_final": 2.0,
                                      "sample_times": [2.0], "burn_in": 0.0, "window_steps": 10}})
    assert cli.main(["run", "--config", cfg, "--out", str(tmp_path / "g")]) == 3
    m = json.loads((tmp_path / "g" / "manifest.json").read_text())
    assert m["status"] == "numerical-guard" and "EnsembleCollapseError" in m["error"]


def test_seed_override_and_byte_identical_csv(tmp_path):
    cfg = write(tmp_path, {"experiment": "fleming-viot", "seed": 1,
                           "params": {"n_walkers": 500, "dt": 1e-3, "t_final": 0.1, "sample_times": [0.1],
                                      "burn_in": 0.0, "window_steps": 10}})
    outs = []
    for i, extra in enumerate([[], [], ["--seed", "2"]]):
        d = tmp_path / f"r{i}"
        cli.main(["run", "--config", cfg, "--out", str(d)] + extra)
        outs.append((d / "histogram.csv").read_bytes() + (d / "kill_rate.csv").read_bytes())
    assert outs[0] == outs[1] and outs[0] != outs[2]
