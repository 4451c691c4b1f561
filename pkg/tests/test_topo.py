import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from membrane_sim import topo as tp
from membrane_sim.geometry import Puncture, build_lattice, segment_loops

windings = st.lists(st.integers(-4, 4), min_size=1, max_size=4).map(tuple)


@st.composite
def states(draw):
    n = draw(st.integers(1, 3))
    support = draw(st.lists(st.lists(st.integers(-3, 3), min_size=n, max_size=n).map(tuple),
                            min_size=1, max_size=5, unique=True))
    amps = draw(st.lists(st.complex_numbers(min_magnitude=0.1, max_magnitude=2.0,
                                            allow_nan=False, allow_infinity=False),
                         min_size=len(support), max_size=len(support)))
    return tp.TopoState.superposition(dict(zip(support, amps)))


def test_basis_state_norm_and_total():
    s = tp.TopoState.basis((1, -2, 0))
    assert s.norm() == 1.0
    assert s.total_winding() == {-1: 1.0}


def test_rejects_unnormalized_and_cutoff():
    with pytest.raises(ValueError):
        tp.TopoState({(1,): 0.5}, 1)
    with pytest.raises(tp.WindingCutoffError):
        tp.TopoState.basis((9,))


@given(states(), st.integers(-2, 2))
def test_apply_winding_is_unitary_shift(state, delta):
    seg = 0
    shifted = tp.apply_winding(state, seg, delta)
    assert shifted.norm() == pytest.approx(1.0)
    back = tp.apply_winding(shifted, seg, -delta)
    assert back.fidelity(state) == pytest.approx(1.0)
    for w, a in state.amplitudes.items():
        assert shifted.amplitude((w[0] + delta,) + w[1:]) == a


def test_apply_winding_cutoff_and_index():
    s = tp.TopoState.basis((8, 0))
    with pytest.raises(tp.WindingCutoffError):
        tp.apply_winding(s, 0, 1)
    with pytest.raises(IndexError):
        tp.apply_winding(s, 2, 1)


@given(states())
def test_parity_is_an_involution(state):
    assert tp.parity(tp.parity(state)).amplitudes == state.amplitudes


@given(windings)
def test_parity_flips_total_winding(w):
    s = tp.parity(tp.TopoState.basis(w))
    assert s.total_winding() == {-sum(w): 1.0}


@given(windings)
def test_oddness_is_parity_invariant(w):
    neg = tuple(-x for x in w)
    assert tp.is_odd(w) == tp.is_odd(neg)
    assert tp.is_odd(w, "per_segment") == tp.is_odd(neg, "per_segment")


def test_odd_modes():
    assert tp.is_odd((1, 0)) and not tp.is_odd((1, 1))
    assert tp.is_odd((1, 3), "per_segment") and not tp.is_odd((1, 0), "per_segment")
    with pytest.raises(ValueError):
        tp.is_odd((1,), "bogus")


def test_projection_keeps_odd_part():
    s = tp.TopoState.superposition({(1,): 1.0, (2,): 1.0, (-3,): 1j})
    proj = tp.project_odd_channel(s)
    assert proj.weight == pytest.approx(2 / 3)
    assert set(proj.state.amplitudes) == {(1,), (-3,)}
    assert tp.project_odd_channel(tp.TopoState.basis((2,))) == (None, 0.0)


def test_holonomy_of_uniform_field_on_alpha_loops():
    lat = build_lattice(40, 16, punctures=[Puncture((20, 8), 1)])
    loops = segment_loops(lat)
    gauge = tp.GaugeFieldSample.uniform_phi(lat, 2 * math.pi * 3)
    for lp in loops.alpha:
        assert tp.line_integral(lp, gauge) == pytest.approx(6 * math.pi)
        assert tp.holonomy(lp, gauge) == pytest.approx(1.0)
    # uniform A_phi has no curl: beta loops see nothing
    assert tp.line_integral(loops.beta[0], gauge) == pytest.approx(0.0, abs=1e-12)


def test_beta_loop_obeys_discrete_stokes():
    lat = build_lattice(30, 16, punctures=[Puncture((15, 14), 2)])
    beta = segment_loops(lat).beta[0]
    nx, ny = lat.shape
    rng = np.random.default_rng(0)
    g = tp.GaugeFieldSample(rng.standard_normal((nx, ny)), rng.standard_normal((nx + 1, ny)))
    curl = (g.a_x + g.a_phi[1:] - np.roll(g.a_x, -1, axis=1) - g.a_phi[:-1])
    xs = [n[0] for n in beta.nodes]
    x0, x1 = min(xs), max(xs)
    y0 = beta.nodes[0][1]
    height = sum(1 for st_ in beta.steps if st_ == (0, 1))
    enclosed = sum(curl[i, (y0 + j) % ny] for i in range(x0, x1) for j in range(height))
    assert tp.line_integral(beta, g) == pytest.approx(enclosed, rel=1e-12)


def test_open_loop_rejected():
    lat = build_lattice(20, 8)
    lp = segment_loops(lat).alpha[0]
    broken = tp.Loop("alpha", lp.nodes[:-1], lp.steps[:-1])
    g = tp.GaugeFieldSample.uniform_phi(lat, 1.0)
    with pytest.raises(ValueError):
        tp.line_integral(broken, g)


def test_phase_holonomy():
    assert tp.phase_holonomy(math.pi) == pytest.approx(-1.0)


@given(st.lists(st.integers(-3, 3), min_size=1, max_size=3).filter(lambda w: any(w)),
       st.floats(0.0, 1.0), st.integers(0, 2 ** 32))
@settings(max_examples=40, deadline=None)
def test_parity_pair_immune_to_even_noise(w, strength, seed):
    q = tp.protected_qubit(w, 0.6, 0.8j)
    out = tp.parity_even_noise(q, strength, 200, seed)
    assert out.fidelity(q) == pytest.approx(1.0, abs=1e-12)


def test_noise_commutes_with_parity():
    s = tp.TopoState.superposition({(1, 2): 0.3, (2, 0): 0.5j, (0, -1): 1.0})
    a = tp.parity(tp.parity_even_noise(s, 0.4, 50, 9))
    b = tp.parity_even_noise(tp.parity(s), 0.4, 50, 9)
    for w in a.amplitudes:
        assert a.amplitude(w) == pytest.approx(b.amplitude(w))


def test_noise_is_seed_deterministic_and_zero_strength_identity():
    s = tp.TopoState.superposition({(1,): 1.0, (2,): 1.0})
    assert tp.parity_even_noise(s, 0.3, 10, 1).amplitudes == tp.parity_even_noise(s, 0.3, 10, 1).amplitudes
    assert tp.parity_even_noise(s, 0.0, 10, 1) is s
    assert np.all(tp.fidelity_trace(s, 0.0, 20, 0) == pytest.approx(1.0))


def test_odd_features_rejected():
    s = tp.TopoState.superposition({(1,): 1.0, (-1,): 1.0})
    with pytest.raises(ValueError, match="parity-even"):
        tp.noise_phases(s, 0.1, 5, 0, features=lambda w: np.asarray(w, float))


def test_averaged_coherence_matches_gaussian_oracle():
    # phase difference between (1,0) and (0,0) is a random walk with step variance strength^2
    s = tp.TopoState.superposition({(1, 0): 1.0, (0, 0): 1.0})
    strength, steps = 0.05, 100
    rho = tp.averaged_coherence(s, (1, 0), (0, 0), strength, steps, range(3000))
    expected = 0.5 * math.exp(-strength ** 2 * steps / 2)
    assert abs(rho) == pytest.approx(expected, rel=0.03)


def test_control_decays_protected_does_not():
    res = tp.channel_experiment(tp.protected_qubit((1, 0)),
                                tp.TopoState.superposition({(1, 0): 1.0, (0, 0): 1.0}), 0.3, 1000, 4)
    assert res["fidelity_protected"].min() > 1 - 1e-12
    assert res["fidelity_control"].min() < 0.5


def test_winding_segment_convention():
    assert tp.winding_segment(0) == 1 and tp.winding_segment(3) == 4


def test_protected_qubit_needs_nonzero_w():
    with pytest.raises(ValueError):
        tp.protected_qubit((0, 0))
    q = tp.protected_qubit((1, 2), 1.0, cmath.exp(0.3j))
    assert q.norm() == pytest.approx(1.0)
