import csv
import importlib.util
from pathlib import Path

import pytest

SCRIPT = Path(__file__).resolve().parents[1] / "scripts" / "long_loop_protection.py"


@pytest.fixture(scope="module")
def long_loop():
    spec = importlib.util.spec_from_file_location("long_loop_protection", SCRIPT)
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    return mod


def test_pure_parity_even_noise_leaves_pair_alone(long_loop):
    from membrane_sim import topo as tp

    q = tp.protected_qubit(long_loop.loop_winding(3, 5))
    assert long_loop.coherence(q, 0.0, 0.5, 200, range(20), "local") == pytest.approx(1.0, abs=1e-12)


def test_script_writes_csv(long_loop, tmp_path, capsys):
    out = tmp_path / "ll.csv"
    assert long_loop.main(["--segments", "3", "--seeds", "300", "--steps", "200", "--out", str(out)]) == 0
    rows = list(csv.DictReader(out.open(newline="")))
    assert len(rows) == 6
    for r in rows:
        c, e = float(r["coherence"]), float(r["gaussian_expectation"])
        assert abs(c - e) < 0.15
