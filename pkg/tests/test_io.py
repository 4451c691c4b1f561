import hashlib
import json
import math

import numpy as np

from membrane_sim.io import csv_text, json_text, write_atomic


def test_csv_round_trips_floats_and_quotes():
    text = csv_text(["a", "b"], [[np.float64(0.1), 'say "hi", twice'], [1e-300, True], [math.nan, 3]])
    lines = text.split("\r\n")
    assert lines[0] == "a,b"
    assert lines[1] == '0.1,"say ""hi"", twice"'
    assert lines[2] == "1e-300,true"
    assert lines[3] == "nan,3"
    assert float(lines[1].split(",")[0]) == 0.1


def test_json_is_stable_and_finite():
    a = json_text({"b": np.float64(1.5), "a": [np.int64(2), math.inf]})
    assert a == json_text({"a": [2, math.inf], "b": 1.5})
    assert json.loads(a) == {"a": [2, None], "b": 1.5}


def test_write_atomic_returns_hash_and_leaves_no_temp(tmp_path):
    target = tmp_path / "sub" / "x.csv"
    digest = write_atomic(target, "k\r\n1\r\n")
    assert digest == hashlib.sha256(b"k\r\n1\r\n").hexdigest()
    assert [p.name for p in target.parent.iterdir()] == ["x.csv"]
