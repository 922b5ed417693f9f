import json
import math

import numpy as np
import pytest

from sspe import jsonio


def test_floats_roundtrip_exactly():
    rng = np.random.default_rng(0)
    values = list(rng.standard_normal(200)) + [0.1, 1e-300, 1e300, -0.0, 3.0]
    doc = jsonio.dumps({"v": values})
    back = json.loads(doc)["v"]
    assert all(a == b for a, b in zip(back, values))


def test_seventeen_significant_digits():
    assert jsonio.format_float(0.1) == "0.10000000000000001"
    assert jsonio.format_float(1.0) == "1"


def test_non_finite_rejected():
    with pytest.raises(ValueError):
        jsonio.dumps({"x": math.inf})
    with pytest.raises(ValueError):
        jsonio.dumps({"x": math.nan})


def test_deterministic_bytes(tmp_path):
    doc = {"b": [1, 2.5, "x"], "a": {"nested": [True, None]}}
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    jsonio.dump(doc, a)
    jsonio.dump(doc, b)
    assert a.read_bytes() == b.read_bytes()
    assert json.loads(a.read_text()) == doc


def test_numpy_types_supported():
    doc = jsonio.dumps(
        {
            "arr": np.arange(3, dtype=np.int64),
            "f": np.float64(0.5),
            "flag": np.bool_(True),
        }
    )
    assert json.loads(doc) == {"arr": [0, 1, 2], "f": 0.5, "flag": True}


def test_jsonl_roundtrip(tmp_path):
    path = tmp_path / "r.jsonl"
    records = [{"i": i, "x": i * 0.1} for i in range(5)]
    assert jsonio.write_jsonl(records, path) == 5
    assert jsonio.read_jsonl(path) == records


def test_unserializable_rejected():
    with pytest.raises(TypeError):
        jsonio.dumps({"x": object()})
