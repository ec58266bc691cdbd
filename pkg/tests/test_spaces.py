import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from itoenergy import spaces
from itoenergy.exceptions import BudgetExceededError, DimensionError, UnsupportedError
from itoenergy.spaces import SpaceDescriptor, SpaceFamily

EXPONENTS = st.sampled_from([1.0, 1.5, 2.0, 3.0])
FAST = settings(max_examples=40, deadline=None)


def family(d, exps, seed=0, w1p=False):
    rng = np.random.default_rng(seed)
    hw = rng.uniform(0.5, 2.0, d)
    descs = []
    for k, p in enumerate(exps):
        mu = rng.uniform(0.5, 2.0, d)
        if w1p and k == 0 and d >= 2:
            descs.append(SpaceDescriptor("W1p", p, mu, spacing=0.7))
        else:
            descs.append(SpaceDescriptor("Lp", p, mu))
    return SpaceFamily(hw, descs)


@st.composite
def lp_family(draw, max_d=4, max_m=3):
    d = draw(st.integers(1, max_d))
    exps = draw(st.lists(EXPONENTS, min_size=1, max_size=max_m))
    return family(d, exps, seed=draw(st.integers(0, 2 ** 32 - 1)))


def vec(d):
    return st.lists(st.floats(-10, 10, allow_nan=False), min_size=d, max_size=d).map(np.array)


def test_conjugate_exponent():
    assert spaces.conjugate_exponent(2) == 2
    assert spaces.conjugate_exponent(1.5) == pytest.approx(3.0)
    assert spaces.conjugate_exponent(1) == np.inf
    with pytest.raises(ValueError):
        spaces.conjugate_exponent(0.5)


def test_lp_norm_values():
    S = SpaceFamily([1.0, 1.0], [SpaceDescriptor("Lp", 2.0, [1.0, 1.0]), SpaceDescriptor("Lp", 1.0, [2.0, 2.0])])
    phi = np.array([3.0, 4.0])
    assert spaces.v_norm(phi, 0, S) == pytest.approx(5.0)
    assert spaces.v_norm(phi, 1, S) == pytest.approx(14.0)
    assert spaces.v_norm_sum(phi, S) == pytest.approx(19.0)
    assert spaces.h_norm(phi, S) == pytest.approx(5.0)


def test_w1p_norm_hand_value():
    # zero-padded differences of (1, 2) with spacing 1: (1, 1, -2)
    s = SpaceDescriptor("W1p", 1.0, [1.0, 1.0])
    assert s.norm([1.0, 2.0]) == pytest.approx(3.0 + 4.0)


def test_invalid_descriptors():
    with pytest.raises(ValueError):
        SpaceDescriptor("Lq", 2.0, [1.0])
    with pytest.raises(ValueError):
        SpaceDescriptor("Lp", 0.5, [1.0])
    with pytest.raises(ValueError):
        SpaceDescriptor("Lp", 2.0, [1.0, -1.0])
    with pytest.raises(DimensionError):
        SpaceFamily([1.0, 1.0], [SpaceDescriptor("Lp", 2.0, [1.0])])


def test_dimension_mismatch_raises():
    S = family(2, [2.0])
    with pytest.raises(DimensionError):
        spaces.h_inner([1.0], [1.0, 2.0], S)
    with pytest.raises(DimensionError):
        spaces.dual_norm_lp([1.0, 2.0, 3.0], 0, S)


@FAST
@given(lp_family(), st.data())
def test_basis_is_h_orthonormal(S, data):
    G = (S.basis * S.h_weights) @ S.basis.T
    np.testing.assert_allclose(G, np.eye(S.dim), atol=1e-12)
    assert np.all(np.diff(S.basis_constants) >= 0)


@FAST
@given(lp_family(), st.data())
def test_embedding_constant_bounds_h_norm(S, data):
    phi = data.draw(vec(S.dim))
    assert spaces.h_norm(phi, S) <= S.embedding_constant * spaces.v_norm_sum(phi, S) * (1 + 1e-12) + 1e-12


@FAST
@given(lp_family(), st.data())
def test_projection_idempotent_and_complete(S, data):
    phi = data.draw(vec(S.dim))
    k = data.draw(st.integers(0, S.dim))
    p = spaces.project(phi, k, S)
    np.testing.assert_allclose(spaces.project(p, k, S), p, atol=1e-10)
    np.testing.assert_allclose(spaces.project(phi, S.dim, S), phi, atol=1e-10)
    with pytest.raises(ValueError):
        spaces.project(phi, S.dim + 1, S)


@FAST
@given(lp_family(), st.data())
def test_lp_dual_norm_is_attained(S, data):
    w = data.draw(vec(S.dim))
    i = data.draw(st.integers(0, S.m - 1))
    value = spaces.dual_norm_lp(w, i, S)
    phi = spaces._extremal_lp(w, i, S)
    if value == 0:
        return
    assert spaces.v_norm(phi, i, S) == pytest.approx(1.0, rel=1e-9)
    assert spaces.duality_pair(w, phi, S) == pytest.approx(value, rel=1e-9)


@FAST
@given(lp_family(), st.data())
def test_holder_inequality(S, data):
    w = data.draw(vec(S.dim))
    phi = data.draw(vec(S.dim))
    for i in range(S.m):
        bound = spaces.dual_norm_lp(w, i, S) * spaces.v_norm(phi, i, S)
        assert abs(spaces.duality_pair(w, phi, S)) <= bound * (1 + 1e-12) + 1e-12


def test_analytic_one_dimensional_intersection():
    # norms a|x| and b|x| give the dual norm |w*| / (a + b)
    a, b = 2.0, 3.0
    S = SpaceFamily([1.0], [SpaceDescriptor("Lp", 1.0, [a]), SpaceDescriptor("Lp", 2.0, [b * b])])
    assert spaces.dual_norm_intersection([5.0], S) == pytest.approx(1.0, abs=1e-6)
    value, err = spaces.dual_norm_bruteforce([5.0], S, resolution=50)
    assert value == pytest.approx(1.0, abs=err + 1e-12)


@pytest.mark.parametrize("seed", range(8))
def test_intersection_against_search(seed):
    rng = np.random.default_rng(seed)
    S = family(2, [float(p) for p in rng.choice([1.0, 1.5, 2.0, 3.0], 2)], seed=seed)
    w = rng.normal(size=2)
    exact = spaces.dual_norm_intersection(w, S)
    brute, bound = spaces.dual_norm_bruteforce(w, S, resolution=200)
    assert brute - bound - 1e-6 <= exact <= brute + 1e-6


def test_intersection_below_each_constituent():
    S = family(3, [1.5, 3.0], seed=4)
    w = np.array([1.0, -2.0, 0.5])
    value = spaces.dual_norm_intersection(w, S)
    assert value <= min(spaces.dual_norm_lp(w, i, S) for i in range(S.m)) + 1e-8


def test_w1p_dual_norm_between_bounds():
    S = family(3, [2.0, 3.0], seed=1, w1p=True)
    w = np.array([0.3, -1.0, 2.0])
    exact = spaces.dual_norm(w, 0, S)
    upper = spaces.dual_norm_upper_bound(w, 0, S)
    assert 0 < exact <= upper + 1e-8
    # pairing with any vector respects the exact value
    rng = np.random.default_rng(0)
    for _ in range(50):
        phi = rng.normal(size=3)
        assert abs(spaces.duality_pair(w, phi, S)) <= exact * spaces.v_norm(phi, 0, S) * (1 + 1e-6)


def test_dual_norm_lp_rejects_w1p():
    S = family(2, [2.0], w1p=True)
    with pytest.raises(UnsupportedError):
        spaces.dual_norm_lp([1.0, 1.0], 0, S)
    with pytest.raises(UnsupportedError):
        spaces.dual_norm_bruteforce([1.0, 1.0], S)


def test_bruteforce_budget_guard():
    S = family(4, [2.0, 3.0, 1.5])
    with pytest.raises(BudgetExceededError):
        spaces.dual_norm_bruteforce(np.ones(4), S, resolution=64, budget=10_000)


def test_zero_functional():
    S = family(2, [2.0, 3.0])
    assert spaces.dual_norm_intersection(np.zeros(2), S) == pytest.approx(0.0, abs=1e-9)
    assert spaces.dual_norm_bruteforce(np.zeros(2), S) == (0.0, 0.0)


def test_family_roundtrip():
    S = family(3, [1.5, 2.0], seed=2, w1p=True)
    T = SpaceFamily.from_dict(S.to_dict())
    np.testing.assert_array_equal(T.h_weights, S.h_weights)
    phi = np.array([1.0, -2.0, 0.5])
    for i in range(S.m):
        assert T.spaces[i].norm(phi) == S.spaces[i].norm(phi)
    bad = S.to_dict()
    bad["dim"] = 5
    with pytest.raises(DimensionError):
        SpaceFamily.from_dict(bad)
