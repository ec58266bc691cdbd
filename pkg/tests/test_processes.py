import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from itoenergy import processes as pr
from itoenergy.exceptions import UnsupportedError
from itoenergy.processes import (
    DualStepProcess,
    IncreasingDriver,
    MartingalePath,
    StepFunction,
    TimeChange,
)
from itoenergy.spaces import SpaceFamily

FAST = settings(max_examples=60, deadline=None)
SEEDS = st.integers(0, 2 ** 32 - 1)


@pytest.fixture
def two_jumps():
    return IncreasingDriver([1.0, 3.0], [1.0, 2.0])


def identity_step(A):
    # x(s) = s sampled on the jump times, constant in between
    return StepFunction(A.jump_times[:-1], A.jump_times)


def test_eval_A_examples(two_jumps):
    A1 = IncreasingDriver([1.0], [1.0])
    assert pr.eval_A(A1, 0.5) == 0
    assert pr.eval_A(A1, 1.0) == 1
    assert pr.eval_A_left(A1, 1.0) == 0
    assert pr.eval_A(two_jumps, 3.0) == 3
    with pytest.raises(ValueError):
        pr.eval_A(A1, -0.1)


def test_driver_validation():
    with pytest.raises(ValueError):
        IncreasingDriver([1.0, 0.5], [1.0, 1.0])
    with pytest.raises(ValueError):
        IncreasingDriver([1.0], [-1.0])
    with pytest.raises(ValueError):
        IncreasingDriver([], [], segments=[(0, 2, 1), (1, 3, 1)])


def test_beta_examples(two_jumps):
    B = TimeChange(two_jumps)
    assert pr.time_change_beta(B, 0.0) == 0.0
    assert pr.time_change_beta(B, 0.5) == 1.0
    assert pr.time_change_beta(B, 1.5) == 3.0
    assert pr.time_change_beta(B, 3.1) == math.inf


def test_beta_on_density():
    A = IncreasingDriver([], [], segments=[(0.0, 1.0, 1.0)])
    np.testing.assert_allclose(TimeChange(A)(np.array([0.0, 0.25, 0.9])), [0.0, 0.25, 0.9])


@FAST
@given(SEEDS)
def test_beta_section_property(seed):
    rng = np.random.default_rng(seed)
    A = pr.random_driver(rng, density=bool(seed % 2))
    B = TimeChange(A)
    for t in A.jump_times:
        assert B(float(A(t))) <= t
    r = rng.uniform(0.0, A.total_mass, 50)
    assert np.all(A(B(r)) >= r - 1e-12 * A.total_mass)
    rs = np.sort(r)
    assert np.all(np.diff(B(rs)) >= 0)


def test_kappa():
    assert pr.kappa(2, 0.3, 1) == 0.25
    assert pr.kappa(2, 0.3, 2) == 0.5
    assert pr.kappa(3, 0.375, 1) == pr.kappa(3, 0.375, 2) == 0.375


@FAST
@given(st.integers(0, 20), st.floats(0, 100, allow_nan=False))
def test_kappa_brackets(n, t):
    lo, hi = pr.kappa(n, t, 1), pr.kappa(n, t, 2)
    assert lo <= t <= hi
    assert hi - lo <= 2.0 ** -n


def test_stieltjes_examples(two_jumps):
    x = identity_step(two_jumps)
    assert pr.stieltjes_integral(x, two_jumps, 3.0) == pytest.approx(7.0)
    assert pr.stieltjes_integral(x, two_jumps, 3.0, closed=False) == pytest.approx(1.0)
    assert pr.stieltjes_integral(StepFunction.constant(1.0), two_jumps, 3.0) == pytest.approx(3.0)
    with pytest.raises(UnsupportedError):
        pr.stieltjes_integral(lambda s: s, two_jumps, 3.0)


@FAST
@given(SEEDS)
def test_stieltjes_additivity(seed):
    rng = np.random.default_rng(seed)
    A = pr.random_driver(rng, density=True)
    x = pr.random_step(rng, A=A)
    s, t = np.sort(rng.uniform(0, 1.2, 2))
    whole = pr.stieltjes_integral(x, A, t)
    left = pr.stieltjes_integral(x, A, s)
    breaks = np.unique(np.concatenate([x.breaks, [s]]))
    # x restricted to (s, inf): zero on every piece ending at or before s
    values = x.values[np.searchsorted(x.breaks, breaks, side="left")]
    values = np.append(values, x.values[-1])
    values[: np.searchsorted(breaks, s) + 1] = 0.0
    right = pr.stieltjes_integral(StepFunction(breaks, values), A, t)
    assert whole == pytest.approx(left + right, rel=1e-12, abs=1e-12)


def test_substitution_examples(two_jumps):
    x = identity_step(two_jumps)
    assert pr.substitution_check(x, two_jumps, 3.0) == pytest.approx((7.0, 7.0))
    assert pr.substitution_check(x, two_jumps, 3.0, closed=False) == pytest.approx((1.0, 1.0))
    assert pr.substitution_check(StepFunction.constant(1.0), two_jumps, 2.0) == pytest.approx((1.0, 1.0))
    assert pr.substitution_check(x, two_jumps, 0.5) == pytest.approx((0.0, 0.0))


@FAST
@given(SEEDS, st.booleans())
def test_substitution_property(seed, closed):
    rng = np.random.default_rng(seed)
    A = pr.random_driver(rng, density=bool(rng.random() < 0.5))
    x = pr.random_step(rng, A=A)
    t = float(rng.uniform(0, 1.2))
    lhs, rhs = pr.substitution_check(x, A, t, closed=closed)
    assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs))


def test_lipschitz_examples(two_jumps):
    B = TimeChange(two_jumps)
    assert pr.lipschitz_check(B, 0.7, 0.7)
    assert pr.lipschitz_check(B, 0.5, 1.5)
    with pytest.raises(ValueError):
        pr.lipschitz_check(B, 1.0, 0.5)


@FAST
@given(SEEDS)
def test_lipschitz_property(seed):
    rng = np.random.default_rng(seed)
    A = pr.random_driver(rng, density=bool(seed % 3 == 0))
    B = TimeChange(A)
    for s, t in np.sort(rng.uniform(0, 1.1 * A.total_mass, (20, 2)), axis=1):
        assert pr.lipschitz_check(B, s, t)


def test_squared_increments_examples():
    A = IncreasingDriver([1.0], [1.0])
    assert np.all(pr.squared_increment_sums(StepFunction.constant(0.0), A, 5, 1.0) == 0)
    np.testing.assert_allclose(pr.squared_increment_sums(StepFunction.constant(3.0), A, 5, 1.0), 9.0)
    unit = IncreasingDriver([], [], segments=[(0.0, 1.0, 1.0)])
    sums = pr.squared_increment_sums(StepFunction.constant(1.0), unit, 12, 1.0)
    # n-th level: 2^n increments of size 2^-n
    np.testing.assert_allclose(sums, 2.0 ** -np.arange(1, 13), rtol=1e-12)
    assert np.all(np.diff(sums) < 0)


@FAST
@given(SEEDS)
def test_squared_increments_reach_jump_sum(seed):
    rng = np.random.default_rng(seed)
    A = pr.random_driver(rng, n_jumps=int(rng.integers(1, 12)))
    x = pr.random_step(rng, A=A)
    t = float(rng.uniform(0, 1.2))
    target = pr.jump_square_sum(x, A, t)
    sums = pr.squared_increment_sums(x, A, 14, t)
    assert abs(sums[-1] - target) <= 1e-12 * max(1.0, target)


def test_partitions_examples():
    P = pr.build_partitions(IncreasingDriver([1.0], [1.0]), 5)
    for n in range(1, 6):
        assert set(P.level(n)) == {0.0, 1.0, math.inf}
    U = pr.build_partitions(IncreasingDriver([], [], segments=[(0.0, 1.0, 1.0)]), 4)
    np.testing.assert_allclose(U.level(4)[:-1], np.arange(16) / 16)
    assert U.level(4)[-1] == math.inf
    with pytest.raises(ValueError):
        pr.build_partitions(IncreasingDriver([1.0], [2.0]), 3)
    with pytest.raises(ValueError):
        P.level(6)


@FAST
@given(SEEDS)
def test_partitions_nested_and_stagnation_free(seed):
    rng = np.random.default_rng(seed)
    A = pr.random_driver(rng, density=bool(seed % 2))
    A = A.scaled(1.0 / A.total_mass)
    P = pr.build_partitions(A, 6)
    assert P.is_nested()
    for n in range(1, 7):
        tau = P.level(n)
        assert tau[0] == 0.0 and tau[-1] == math.inf
        assert np.all(np.diff(tau) >= 0)
    # every jump whose level interval holds a dyadic point of level 6 is captured
    pts = P.points(6)
    for t, a in zip(A.jump_times, A.jump_sizes):
        lo, hi = float(A.left_limit(t)), float(A(t))
        if math.floor(hi * 64) / 64 > lo and math.floor(hi * 64) < 64:
            assert t in pts


def test_martingale_path_basics():
    h = MartingalePath.from_increments([1.0, 2.0], [[-1.0], [0.5]], [1.0])
    assert h(0.5)[0] == 1.0 and h(1.0)[0] == 0.0 and h.left_limit(1.0)[0] == 1.0
    assert h.quadratic_variation(2.0) == pytest.approx(1.25)
    assert h.quadratic_variation(1.5) == pytest.approx(1.0)
    g = MartingalePath.from_dict(h.to_dict())
    np.testing.assert_array_equal(g.values, h.values)


def test_dual_step_process_dominance():
    S = SpaceFamily.uniform_lp(2, [2.0])
    DualStepProcess([0.5], [[3.0, 4.0], [0.0, 1.0]], 0, S=S, eta=[5.0, 1.0])
    with pytest.raises(ValueError):
        DualStepProcess([0.5], [[3.0, 4.0], [0.0, 1.0]], 0, S=S, eta=[4.9, 1.0])
    d = DualStepProcess([0.5], [[3.0, 4.0], [0.0, 1.0]], 0, S=S)
    np.testing.assert_allclose(d.eta, [5.0, 1.0])


def test_running_bound_values():
    S = SpaceFamily.uniform_lp(1, [2.0, 1.0])
    A = IncreasingDriver([0.25, 0.75], [1.0, 2.0])
    d = DualStepProcess([0.5], [[1.0], [3.0]], 0, S=S)
    assert d.running_bound(A, 1.0) == pytest.approx(math.sqrt(1.0 + 9.0 * 2.0))
    e = DualStepProcess([0.5], [[1.0], [3.0]], 1, S=S)
    assert e.running_bound(A, 0.6) == pytest.approx(1.0)
    assert e.running_bound(A, 1.0) == pytest.approx(3.0)


def test_step_approximation_examples():
    S = SpaceFamily.uniform_lp(1, [2.0])
    unit = IncreasingDriver([], [], segments=[(0.0, 1.0, 1.0)])
    P = pr.build_partitions(unit, 8)
    const = lambda t: np.ones((np.size(t), 1))
    assert pr.step_approximation(const, P, 3, 2, S, unit).errors[0] == pytest.approx(0.0, abs=1e-14)

    def linear(t):
        return np.minimum(np.atleast_1d(t), 1.0).reshape(-1, 1)

    errs = [pr.step_approximation(linear, P, n, 2, S, unit, terminal_time=1.0).errors[0] for n in range(1, 9)]
    assert np.all(np.diff(errs) < 0)
    # right sampling error of t on dyadic cells: Σ ∫ (τ_{k+1} - t)^2 dt = 2^{-2n} / 3
    np.testing.assert_allclose(errs, 2.0 ** (-2 * np.arange(1, 9)) / 3, rtol=1e-10)


def test_step_approximation_exact_once_captured():
    S = SpaceFamily.uniform_lp(1, [1.5])
    A = IncreasingDriver([0.25, 0.5], [0.5, 0.5])
    P = pr.build_partitions(A, 4)
    v = StepFunction([0.25, 0.5], [[0.0], [2.0], [-1.0]], left_continuous=False)
    v.breakpoints = v.breaks
    for variant in (1, 2):
        assert pr.step_approximation(v, P, 2, variant, S, A).errors[0] == pytest.approx(0.0, abs=1e-14)


def test_ensemble_constant_and_coin_flip():
    rep = pr.ensemble_martingale_check(lambda rng: MartingalePath.constant([1.0]), 100)
    assert rep.passed

    def coin(rng, shift=0.0):
        return MartingalePath.from_increments([1.0, 2.0], rng.choice([-0.1, 0.1], (2, 1)) + shift, [0.0])

    assert pr.ensemble_martingale_check(coin, 10_000, seed=7).passed
    assert not pr.ensemble_martingale_check(lambda rng: coin(rng, 0.1), 10_000, seed=7).passed
    with pytest.raises(ValueError):
        pr.ensemble_martingale_check(coin, 50)


def test_ensemble_drifted_degenerate_fails():
    gen = lambda rng: MartingalePath.from_increments([1.0], [[0.2]], [0.0])
    assert not pr.ensemble_martingale_check(gen, 100).passed


def test_ensemble_reports_mean_qv():
    def coin(rng):
        return MartingalePath.from_increments([1.0, 2.0], rng.choice([-0.1, 0.1], (2, 1)), [0.0])

    rep = pr.ensemble_martingale_check(coin, 200)
    np.testing.assert_allclose(rep.mean_qv, [0.01, 0.02])
