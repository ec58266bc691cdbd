import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from itoenergy.processes import DualStepProcess, IncreasingDriver, MartingalePath
from itoenergy.scenario import (
    Scenario,
    mixed_scenario,
    normalise_mass,
    one_jump_scenario,
    random_scenario,
    regularity_process,
    regularity_terms,
    scaling_reduce,
)
from itoenergy.spaces import SpaceFamily

FAST = settings(max_examples=40, deadline=None)
SEEDS = st.integers(0, 2 ** 32 - 1)


def test_one_jump_values():
    s = one_jump_scenario()
    assert s.v(1.0)[0] == 1.0
    assert s.v_left(1.0)[0] == 0.0
    assert s.v(0.5)[0] == 0.0


def test_scaling_examples():
    s = one_jump_scenario()
    assert scaling_reduce(s, 1) is s
    assert scaling_reduce(s, 2).v(1.0)[0] == 0.5
    with pytest.raises(ValueError):
        scaling_reduce(s, 0)
    with pytest.raises(ValueError):
        scaling_reduce(s, -1.0)


def test_validation():
    S = SpaceFamily.uniform_lp(2, [2.0, 3.0])
    A = IncreasingDriver([1.0], [1.0])
    h = MartingalePath.constant([0.0, 0.0])
    d0 = DualStepProcess([], [[1.0, 0.0]], 0, S=S)
    d1 = DualStepProcess([], [[0.0, 1.0]], 1, S=S)
    Scenario(S, A, h, [d0, d1], 1.0)
    with pytest.raises(ValueError):
        Scenario(S, A, h, [d0], 1.0)
    with pytest.raises(ValueError):
        Scenario(S, A, h, [d1, d0], 1.0)
    with pytest.raises(ValueError):
        Scenario(S, A, MartingalePath.constant([0.0]), [d0, d1], 1.0)
    with pytest.raises(ValueError):
        Scenario(S, A, h, [d0, d1], 0.0)


@FAST
@given(SEEDS, st.booleans())
def test_state_matches_definition(seed, density):
    scn = random_scenario(seed, density=density)
    # v(t) = Σ_i ∫_(0,t] v_i* dA + h(t) evaluated by brute force over knots
    t = float(np.random.default_rng(seed).uniform(0, 1))
    direct = scn.h(t).copy()
    for dr in scn.drifts:
        for tj, a in zip(scn.A.jump_times, scn.A.jump_sizes):
            if tj <= t:
                direct += a * dr(tj)
        for a, b, c in scn.A.segments:
            lo, hi = a, min(b, t)
            if hi > lo:
                grid = np.unique(np.concatenate([[lo, hi], dr.breaks[(dr.breaks > lo) & (dr.breaks < hi)]]))
                for u, w in zip(grid[:-1], grid[1:]):
                    direct += c * (w - u) * dr(0.5 * (u + w))
    np.testing.assert_allclose(scn.v(t), direct, rtol=1e-10, atol=1e-10)


@FAST
@given(SEEDS)
def test_roundtrip_json(seed):
    scn = random_scenario(seed)
    text = json.dumps(scn.to_dict())
    back = Scenario.from_dict(json.loads(text), check=False)
    ts = np.concatenate([[0.0], scn.event_times])
    np.testing.assert_array_equal(back.v(ts), scn.v(ts))


def test_roundtrip_checks_eta():
    data = one_jump_scenario().to_dict()
    data["drifts"][0]["eta"] = [0.5]
    with pytest.raises(ValueError):
        Scenario.from_dict(data)


@FAST
@given(SEEDS)
def test_normalise_mass(seed):
    scn = random_scenario(seed)
    normed = normalise_mass(scn)
    assert normed.A.total_mass <= 1 + 1e-12
    t = scn.horizon
    np.testing.assert_allclose(normed.v(t) * max(scn.A.total_mass, 1.0), scn.v(t), rtol=1e-10, atol=1e-12)


def test_mixed_scenario_mass():
    assert mixed_scenario().A.total_mass == pytest.approx(1.0)


def test_regularity_one_jump():
    terms = regularity_terms(one_jump_scenario(), 1.0)
    # |h0| = 0, A = 1, v: (|1|^2 * 1)^(1/2) = 1, Q = (1^2 * 1)^(1/2) = 1, w = 0
    assert terms == pytest.approx({"h0": 0.0, "A": 1.0, "v": 1.0, "Q": 1.0, "w": 0.0})


@settings(max_examples=15, deadline=None)
@given(SEEDS, st.sampled_from([2.0, 10.0]))
def test_regularity_scaling_bound(seed, n):
    scn = random_scenario(seed, n_jumps=8)
    base = regularity_terms(scn, scn.horizon)
    scaled = regularity_terms(scaling_reduce(scn, n), scn.horizon)
    # h0, A, v, w terms shrink by 1/n; Q_i by n^(-1/q_i) (η unchanged, dA scaled)
    for key in ("h0", "A", "v", "w"):
        assert scaled[key] <= base[key] / n * (1 + 1e-9) + 1e-12
    q = np.array([s.q for s in scn.S.spaces])
    Qi = [float(dr.running_bound(scn.A, scn.horizon)) for dr in scn.drifts]
    expected = sum(Q * (n ** (-1.0 / qi) if np.isfinite(qi) else 1.0) for Q, qi in zip(Qi, q))
    assert scaled["Q"] == pytest.approx(expected, rel=1e-9)
    # the weakest per-term factor: n^(1/q_i), or 1 when some q_i is infinite
    factors = [n] + [n ** (1.0 / qi) if np.isfinite(qi) else 1.0 for qi in q]
    bound = sum(base.values()) / min(factors)
    assert regularity_process(scaling_reduce(scn, n), scn.horizon) <= bound * (1 + 1e-9)
