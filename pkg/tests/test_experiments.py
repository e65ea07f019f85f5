import os

import numpy as np
import pytest
import yaml

from stochrecon.cli import validate
from stochrecon.experiments import config_hash, run_experiment

CONFIGS = os.path.join(os.path.dirname(__file__), "..", "configs")


def _cfg(name, **patch):
    with open(os.path.join(CONFIGS, name + ".yaml")) as fh:
        raw = yaml.safe_load(fh)
    raw.update(patch)
    return validate(raw)


def test_rate_family_tracks_theory_line():
    base = _cfg("reconstruction_rate")
    slopes = []
    for alpha in (0.5, 0.75, 1.0):
        raw = dict(base, paths=1000, conditional=False, workers=1)
        raw.pop("covariance_pairs")
        raw["germ"] = dict(base["germ"], alpha=alpha)
        m = run_experiment(validate(raw)).metrics
        assert m["theory"] == pytest.approx(alpha - 0.5)
        assert m["theory"] - 0.2 <= m["slope"] <= m["theory"] + 0.1
        slopes.append(m["slope"])
    assert slopes == sorted(slopes)


def test_constant_bdg_ratios_at_most_one():
    m = run_experiment(_cfg("bdg", families=["constant"], paths=100, workers=1)).metrics
    assert m["constant_p2_max_ratio"] <= 1 + 1e-12 and m["constant_p4_max_ratio"] <= 1 + 1e-12


def test_config_hash_ignores_workers():
    a = dict(_cfg("bdg"), workers=1)
    b = dict(a, workers=4)
    assert run_experiment(a).config_hash == run_experiment(b).config_hash
    assert config_hash({"a": 1}) != config_hash({"a": 2})


def test_young_and_sewing_germs_run():
    raw = dict(_cfg("reconstruction_rate"), paths=20, workers=1, conditional=False,
               germ={"type": "young", "g": [1.0, 0.5], "taylor_order": 1})
    raw.pop("covariance_pairs")
    m = run_experiment(validate(raw)).metrics
    assert np.isfinite(m["slope"])


def test_coherence_fit_config():
    m = run_experiment(_cfg("coherence_fit", paths=500, workers=1)).metrics
    assert abs(m["alpha_hat"] + 0.5) < 0.1 and m["r_squared"] > 0.9
