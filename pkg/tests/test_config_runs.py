import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from varlab import config, parallel, runs

BASE = {"command": "phi-curve", "problem": {"kind": "toy", "name": "linear-quadratic"},
        "grid": {"start": 0.5, "stop": 8, "num": 5}}


def test_defaults_filled_and_canonical():
    cfg = config.validate(BASE)
    data = json.loads(config.canonical(cfg))
    assert data["window"] == 3 and data["seed"] == 0 and data["budget"] == 8
    assert config.grid_values(cfg.grid) == pytest.approx(list(np.geomspace(0.5, 8, 5)))


def test_key_order_does_not_change_hash():
    a = config.validate(BASE)
    b = config.validate(dict(reversed(list(BASE.items()))))
    assert runs.config_hash(a) == runs.config_hash(b)
    c = config.validate({**BASE, "seed": 1})
    assert runs.config_hash(a) != runs.config_hash(c)


def test_error_paths_are_dotted():
    with pytest.raises(config.ConfigError, match=r"problem\.name"):
        config.validate({**BASE, "problem": {"kind": "toy", "name": "nope"}})
    with pytest.raises(config.ConfigError, match=r"ladder"):
        config.validate({"command": "hunt", "problem": BASE["problem"], "mu": 1, "ladder": {}})


def test_seed_range():
    with pytest.raises(config.ConfigError):
        config.validate({**BASE, "seed": -1})
    config.validate({**BASE, "seed": 2**64 - 1})


def test_example1_model_encoding():
    cfg = config.validate({"command": "hunt", "problem": {"kind": "example1", "p": 2, "N": 8},
                           "mu": 1, "ladder": {"start": 1, "levels": 2}})
    m = config.build_model(cfg.problem)
    assert m.space.dim == 9
    assert str(m.sources[0][1]) == "distosc(2.0)"


@given(st.lists(st.integers(-1000, 1000), max_size=40), st.integers(1, 8))
def test_ordered_map_keeps_order(items, jobs):
    assert parallel.ordered_map(lambda v: v * v, items, jobs=jobs) == [v * v for v in items]


@given(st.integers(0, 2**64 - 1), st.integers(0, 100))
def test_rng_streams_are_reproducible(seed, key):
    a = parallel.rng_for(seed, key).standard_normal(3)
    b = parallel.rng_for(seed, key).standard_normal(3)
    assert np.array_equal(a, b)


@given(st.floats(allow_nan=True, allow_infinity=True))
def test_cells_round_trip(v):
    cell = runs._cell(v)
    if np.isfinite(v):
        assert float(cell) == v
        assert not cell.startswith("-0") or v != 0


def test_jsonable():
    out = runs.jsonable({"a": np.float64(np.inf), "b": np.arange(3), "c": np.bool_(True)})
    assert out == {"a": "inf", "b": [0, 1, 2], "c": True}
    json.dumps(out)


def test_run_dir_staging(tmp_path):
    cfg = config.validate(BASE)
    run = runs.RunDir(tmp_path, cfg)
    run.write_csv("t.csv", ["a", "b"], [{"a": 1.5, "b": None}, [True, "x"]])
    assert runs.list_runs(tmp_path) == []
    run.finish({"k": 1}, 0.5)
    (d,) = runs.list_runs(tmp_path)
    assert (d / "t.csv").read_bytes() == b"a,b\r\n1.5,\r\n1,x\r\n"
    names = [line.split("  ")[1] for line in (d / "MANIFEST").read_text().splitlines()]
    assert names == sorted(["config.json", "t.csv", "report.json"])
