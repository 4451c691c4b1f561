import math
from dataclasses import replace

import numpy as np
import pytest
from scipy import stats

from membrane_sim import placement as pl

SMALL = pl.PlacementConfig(schedule=(300, 150, 50))


def test_capture_fraction_edge_cases():
    sites = np.array([[5.0, 5.0], [15.0, 5.0]])
    box = (20.0, 20.0)
    assert pl.capture_fraction(np.zeros((0, 2)), sites, 1.0, box) == 0.0
    assert pl.capture_fraction([[5.0, 5.0]], np.zeros((0, 2)), 1.0, box) == 0.0
    assert pl.capture_fraction([[5.0, 5.5]], sites, 1.0, box) == 0.5
    assert pl.capture_fraction([[5.0, 5.5], [15.9, 5.0]], sites, 1.0, box) == 1.0
    # minimum image across the periodic edge
    assert pl.capture_fraction([[19.6, 0.2]], [[0.1, 19.9]], 1.0, box) == 1.0


def test_capture_matches_binomial_for_independent_positions():
    rng = np.random.default_rng(4)
    sites = np.array([[5.0, 5.0]])
    box, r, n = (20.0, 20.0), 1.5, 30
    hits = [pl.capture_fraction(rng.random((n, 2)) * 20.0, sites, r, box) for _ in range(20000)]
    p = pl.binomial_capture(n, r, box)
    assert np.mean(hits) == pytest.approx(p, abs=4 * math.sqrt(p * (1 - p) / 20000))


def test_gate_field_matches_image_sum():
    vertical = np.array([True])
    coord, lam, depth = np.array([5.0]), np.array([2.0]), np.array([0.5])
    for x in (5.0, 5.3, 7.0, 14.9):
        ex, ey = pl._gate_field(x, 3.0, vertical, coord, lam, depth, 20.0, 20.0)
        s = x - 5.0 + 20.0 * np.arange(-3, 4)
        assert ex == pytest.approx(np.sum(4.0 * s / (s ** 2 + 0.25)), abs=1e-12)
        assert ey == 0.0


def test_single_dipole_energy_is_minus_p_dot_e():
    cfg = pl.PlacementConfig(n_pc=1, n_background=0,
                             gates=(pl.Gate((0.0, 10.0), (20.0, 10.0), charge_density=1.5),))
    pos = np.array([[4.0, 10.7]])
    s = 0.7 + 20.0 * np.arange(-3, 4)
    ey = np.sum(3.0 * s / (s ** 2 + 0.25))
    for th in (0.0, 0.4, math.pi / 2, 2.5):
        e = pl.total_energy(cfg, pos, np.array([th]), np.array([True]))
        assert e == pytest.approx(-math.sin(th) * ey, abs=1e-12)


def test_dipole_pair_energy():
    cfg = pl.PlacementConfig(n_pc=2, n_background=0, gates=(), dd_strength=0.5)
    pos = np.array([[2.0, 2.0], [4.0, 2.0]])
    # head-to-tail along x: 0.5 * (1 - 3) / 8
    assert pl.total_energy(cfg, pos, np.zeros(2), np.ones(2, bool)) == pytest.approx(-0.125)
    # side by side, parallel along y: 0.5 * 1 / 8
    assert pl.total_energy(cfg, pos, np.full(2, math.pi / 2), np.ones(2, bool)) == pytest.approx(0.0625)
    far = np.array([[2.0, 2.0], [7.0, 2.0]])
    assert pl.total_energy(cfg, far, np.zeros(2), np.ones(2, bool)) == 0.0


def test_energy_trace_matches_recomputed_total():
    res = pl.anneal(SMALL)
    e = pl.total_energy(SMALL, res.positions, res.orientations, res.is_pc)
    assert res.energy[-1] == pytest.approx(e, rel=1e-9, abs=1e-9)


def test_no_overlaps_after_anneal():
    res = pl.anneal(SMALL)
    d = res.positions[:, None] - res.positions[None]
    d -= 20.0 * np.round(d / 20.0)
    r = np.hypot(d[..., 0], d[..., 1]) + np.eye(len(d)) * 99
    assert r.min() >= SMALL.disk_diameter


def test_anneal_deterministic():
    a, b = pl.anneal(SMALL), pl.anneal(SMALL)
    assert np.array_equal(a.positions, b.positions)
    assert np.array_equal(a.orientations, b.orientations)
    assert np.array_equal(a.energy, b.energy)
    c = pl.anneal(replace(SMALL, seed=1))
    assert not np.array_equal(a.positions, c.positions)


def test_anneal_many_independent_of_workers():
    seeds = [3, 1, 2]
    serial = pl.anneal_many(SMALL, seeds, workers=1)
    par = pl.anneal_many(SMALL, seeds, workers=2)
    for s, p, seed in zip(serial, par, seeds):
        assert s.seed == seed
        assert np.array_equal(s.positions, p.positions)


def test_positions_frozen_below_tc():
    res = pl.anneal(SMALL)
    cold = res.temperature < SMALL.T_c
    assert cold.any()
    first = np.argmax(cold)
    # displacement stops changing once translations are gated off
    assert np.all(res.displacement[first:] == res.displacement[first])
    # orientations still relax
    assert res.acceptance[first:].max() > 0


def test_kernel_frozen_when_run_entirely_below_tc():
    cfg = pl.PlacementConfig()
    rng = np.random.default_rng(0)
    n = cfg.n_pc + cfg.n_background
    pos = pl.random_placement(n, cfg.box, cfg.disk_diameter, rng)
    is_pc = pl._species(cfg, rng)
    theta = rng.random(n) * 2 * math.pi
    start = pos.copy()
    temps = np.full(40, 0.5 * cfg.T_c)
    vertical, coord, lam, depth = pl._gate_arrays(cfg)
    e0 = pl.total_energy(cfg, pos, theta, is_pc)
    pl._sweeps(pos, pos.copy(), theta, is_pc, temps, 0.0, cfg.T_c, rng.random((40, n, 5)), 1.0,
               cfg.dd_strength, cfg.dd_cutoff, cfg.disk_diameter, cfg.step_size, cfg.rotation_step,
               vertical, coord, lam, depth, 20.0, 20.0, e0, np.zeros(40), np.zeros(40),
               np.zeros(40), start)
    assert np.array_equal(pos, start)


def test_uniform_without_fields():
    # no gates and no dipole coupling: hot-phase positions are uniform
    cfg = pl.PlacementConfig(gates=(), dd_strength=0.0, schedule=(200, 0, 0))
    pts = np.concatenate([pl.anneal(replace(cfg, seed=s)).positions for s in range(20)])
    counts, _, _ = np.histogram2d(pts[:, 0], pts[:, 1], bins=5, range=[[0, 20], [0, 20]])
    _, p = stats.chisquare(counts.ravel())
    assert p > 1e-3


def test_zero_charge_matches_random_placement():
    cfg = SMALL.with_charge(0.0)
    runs = np.array([r.capture_fraction for r in pl.anneal_many(cfg, range(8))])
    ref = pl.uniform_capture_samples(cfg, 200, seed=99)
    se = math.sqrt(ref.var() / len(runs) + ref.var() / len(ref))
    assert abs(runs.mean() - ref.mean()) < 3 * se


def test_charge_raises_capture():
    lo = np.mean([r.capture_fraction for r in pl.anneal_many(SMALL.with_charge(0.0), range(4))])
    hi = np.mean([r.capture_fraction for r in pl.anneal_many(SMALL.with_charge(4.0), range(4))])
    assert hi > lo


def test_validate_catches_bad_configs():
    assert pl.PlacementConfig().validate() == []
    assert any("T_hot" in m for m in pl.PlacementConfig(T_hot=0.5).validate())
    assert any("packing" in m for m in pl.PlacementConfig(n_pc=400, n_background=400).validate())
    assert any("outside" in m for m in
               pl.PlacementConfig(gates=(pl.Gate((25.0, 0.0), (25.0, 5.0)),)).validate())
    with pytest.raises(pl.PlacementError):
        pl.anneal(pl.PlacementConfig(T_c=2.0))


def test_gate_checks():
    with pytest.raises(pl.PlacementError):
        pl.Gate((0.0, 0.0), (3.0, 4.0))
    with pytest.raises(pl.PlacementError):
        pl.Gate((1.0, 0.0), (1.0, 5.0), role="B")
    sites = pl.Gate((5.0, 0.0), (5.0, 10.0), n_sites=5).sites()
    assert np.allclose(sites[:, 1], [1, 3, 5, 7, 9]) and np.all(sites[:, 0] == 5.0)
    cfg = pl.PlacementConfig(gates=(pl.Gate((5.0, 0.0), (5.0, 10.0), role="J"),))
    assert cfg.target_sites().shape == (0, 2)


def test_placement_failure_raises():
    with pytest.raises(pl.PlacementError, match="overlap"):
        pl.random_placement(50, (3.0, 3.0), 1.0, np.random.default_rng(0), max_tries=50)


def test_snapshot_rows():
    res = pl.anneal(replace(SMALL, schedule=(5, 0, 0)))
    rows = res.snapshot_rows()
    assert len(rows) == 120
    assert sum(r[2] == "PC" for r in rows) == 60
    assert all(r[3] == 0.0 for r in rows if r[2] == "background")
