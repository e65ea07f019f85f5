import json
import os

import pytest
import yaml

from stochrecon import CapabilityError, ValidationError
from stochrecon.cli import main, validate

BDG = {"version": 1, "kind": "bdg", "seed": 3, "paths": 200, "Ns": [4, 8, 16],
       "families": ["iid"], "ps": [2]}

COHERENCE = {"version": 1, "kind": "coherence-fit", "seed": 1, "paths": 10,
             "grid": {"lo": [0.0], "hi": [2.0], "level": 8},
             "germ": {"type": "noise-product", "alpha": 0.75, "adapted": [0]},
             "psi": {"type": "bump", "lo": [0.0], "hi": [1.0]}, "base_point": [1.0],
             "eps": [0.125, 0.0625, 0.03125], "distances": [0.5, 0.25, 0.125, 0.0625]}


def _write(tmp_path, cfg, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(cfg))
    return str(path)


def test_validate_fills_defaults():
    cfg = validate({"version": 1, "kind": "homogeneity", "lambdas": [1.0, 0.5]})
    assert cfg["seed"] == 0 and cfg["paths"] == 1000 and cfg["workers"] >= 1


@pytest.mark.parametrize("patch", [{"version": 2}, {"kind": "nope"}, {"colour": "red"},
                                   {"paths": 0}, {"Ns": "many"}, {"p": True}])
def test_validate_rejects(patch):
    with pytest.raises(ValidationError):
        validate(dict(BDG, **patch))


def test_validate_rejects_unknown_subfield():
    bad = dict(COHERENCE, grid={"lo": [0.0], "hi": [2.0], "level": 8, "pad": 1})
    with pytest.raises(ValidationError):
        validate(bad)


def test_validate_requires_fields():
    bad = dict(COHERENCE)
    del bad["psi"]
    with pytest.raises(ValidationError):
        validate(bad)


def test_conditional_mode_on_unadapted_field_is_capability_error():
    bad = dict(COHERENCE, mode="conditional",
               germ={"type": "noise-product", "alpha": 0.75, "adapted": []})
    with pytest.raises(CapabilityError):
        validate(bad)


def test_exit_code_validation(tmp_path):
    assert main(["run", _write(tmp_path, dict(BDG, extra=1))]) == 2
    assert main(["run", str(tmp_path / "missing.yaml")]) == 2
    (tmp_path / "broken.yaml").write_text("kind: [unclosed")
    assert main(["run", str(tmp_path / "broken.yaml")]) == 2


def test_exit_code_capability(tmp_path):
    bad = dict(COHERENCE, mode="conditional",
               germ={"type": "noise-product", "alpha": 0.75, "adapted": []})
    assert main(["run", _write(tmp_path, bad)]) == 3


def test_report_without_metrics_exits_one(tmp_path, capsys):
    assert main(["report", str(tmp_path)]) == 1
    assert "no metrics" in capsys.readouterr().out


def test_run_writes_csv_with_header(tmp_path):
    out = tmp_path / "out"
    assert main(["run", _write(tmp_path, BDG), "--out", str(out)]) == 0
    lines = (out / "bdg.csv").read_text().splitlines()
    header = dict(l[2:].split(": ", 1) for l in lines if l.startswith("# "))
    assert {"config_hash", "kind", "seed", "version", "rng", "schema"} <= set(header)
    assert header["seed"] == "3"
    data = json.loads((out / "bdg.json").read_text())
    assert data["config_hash"] == header["config_hash"] and data["metrics"]


def test_run_is_deterministic_across_workers(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    cfg = _write(tmp_path, BDG)
    assert main(["run", cfg, "--workers", "1", "--out", str(a)]) == 0
    assert main(["run", cfg, "--workers", "3", "--out", str(b)]) == 0
    assert (a / "bdg.csv").read_bytes() == (b / "bdg.csv").read_bytes()


def test_seed_override_changes_hash(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    cfg = _write(tmp_path, BDG)
    main(["run", cfg, "--out", str(a)])
    main(["run", cfg, "--seed", "4", "--out", str(b)])
    assert (a / "bdg.csv").read_text() != (b / "bdg.csv").read_text()


def test_report_summarizes(tmp_path, capsys):
    out = tmp_path / "out"
    main(["run", _write(tmp_path, BDG), "--out", str(out)])
    main(["run", _write(tmp_path, {"version": 1, "kind": "homogeneity",
                                   "lambdas": [1.0, 0.5, 0.25, 0.125]}, "h.yaml"),
          "--out", str(out)])
    capsys.readouterr()
    assert main(["report", str(out)]) == 0
    assert (out / "summary.csv").exists()
    assert any(name.startswith("plot_homogeneity") for name in os.listdir(out))


@pytest.mark.parametrize("name", sorted(os.listdir(os.path.join(os.path.dirname(__file__), "..",
                                                                  "configs"))))
def test_shipped_configs_validate(name):
    path = os.path.join(os.path.dirname(__file__), "..", "configs", name)
    with open(path) as fh:
        validate(yaml.safe_load(fh))
