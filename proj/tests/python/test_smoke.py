import json
import math
from pathlib import Path

import numpy as np
import pytest

import roughflow

CONFIGS = Path(__file__).resolve().parents[2] / "configs"


def load(kind):
    return json.loads((CONFIGS / f"{kind}.json").read_text())


def test_kinds_and_models():
    assert "sweep" in roughflow.experiment_kinds()
    assert "linear-ou" in roughflow.builtin_model_names()


def test_fbm_shape_and_determinism():
    a = roughflow.sample_fbm(256, 0.4, dim=2, seed=3)
    b = roughflow.sample_fbm(256, 0.4, dim=2, seed=3)
    assert a.shape == (257, 2)
    assert np.array_equal(a, b)
    assert np.all(a[0] == 0.0)


def test_lift_areas_geometric_diagonal():
    inc, area = roughflow.lift(64, 0.4, d=1, e=1, refine=4, seed=1, ito=False)
    assert inc.shape == (64, 2)
    assert area.shape == (64, 4)
    np.testing.assert_allclose(area[:, 0], 0.5 * inc[:, 0] ** 2, atol=1e-12)
    np.testing.assert_allclose(area[:, 3], 0.5 * inc[:, 1] ** 2, atol=1e-12)


def test_run_sample_reproducible():
    config = load("sample")
    art1, resolved = roughflow.run(config)
    art2, _ = roughflow.run(config)
    assert roughflow.sha256_hex(art1["driver.csv"]) == roughflow.sha256_hex(art2["driver.csv"])
    assert resolved["hurst"]["H"] == 0.4
    lines = art1["driver.csv"].splitlines()
    assert lines[0] == "t,b_0,b_1,w_0"
    assert len(lines) == 258


def test_rate_value():
    artifacts, _ = roughflow.run(load("rate"))
    value = json.loads(artifacts["rate.json"])["value"]
    assert abs(value - 1.1565060571648938) / 1.1565060571648938 < 0.05


def test_config_error_names_field():
    config = load("slowfast")
    config["scales"]["delta"] = 0.5
    with pytest.raises(roughflow.ConfigError, match="scales"):
        roughflow.validate(config)
    config = load("sample")
    config["grid"]["extra"] = 1
    with pytest.raises(roughflow.ConfigError, match="grid.extra"):
        roughflow.run(config)


def test_infeasible_is_raised():
    config = load("rate")
    config["model"]["params"]["s1"] = 0.0
    config["optimizer"] = {"restarts": 1, "max_iters": 50}
    config["penalty"] = {"stages": 2}
    with pytest.raises(roughflow.InfeasibleError):
        roughflow.run(config)


def test_average_rows():
    config = load("average")
    config["n_mc"] = 4
    artifacts, resolved = roughflow.run(config, workers=2)
    rows = artifacts["averaging.csv"].splitlines()
    assert rows[0] == "eps,delta,Delta,metric,value,stderr,n_mc"
    assert len(rows) == 1 + 5 * len(config["scales"])
    assert all(math.isfinite(float(r.split(",")[4])) for r in rows[1:])
    assert resolved["n_mc"] == 4


def test_module_is_the_local_build():
    assert roughflow.__version__ == "0.1.0"
