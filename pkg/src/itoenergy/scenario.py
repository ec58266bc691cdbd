"""Scenarios ``v = Σ_i ∫ v_i* dA + h`` and their derived quantities."""

from __future__ import annotations

import numpy as np

from . import spaces
from .processes import (
    DualStepProcess,
    IncreasingDriver,
    MartingalePath,
    _IntegralTable,
    path_integral,
)
from .spaces import SpaceDescriptor, SpaceFamily

__all__ = [
    "Scenario",
    "StatePath",
    "scaling_reduce",
    "normalise_mass",
    "regularity_process",
    "regularity_terms",
    "random_scenario",
    "one_jump_scenario",
    "mixed_scenario",
]


class StatePath:
    """``v(t) = z(t) + h(t)`` evaluated from the running drift integral ``z``."""

    def __init__(self, scenario):
        self._s = scenario
        self.breakpoints = scenario.breakpoints

    def __call__(self, t):
        return self._s.v(t)

    def left_limit(self, t):
        return self._s.v_left(t)


class Scenario:
    """A semimartingale ``v`` of the form ``v(t) = Σ_i ∫_{(0,t]} v_i* dA + h(t)``.

    Parameters
    ----------
    S : SpaceFamily
    A : IncreasingDriver
    h : MartingalePath
    drifts : sequence of DualStepProcess
        One per constituent space, ``drifts[i].index == i``.
    horizon : float
        Evaluation window ``[0, horizon]``.
    """

    def __init__(self, S, A, h, drifts, horizon):
        drifts = tuple(drifts)
        if len(drifts) != S.m:
            raise ValueError(f"need {S.m} drifts, got {len(drifts)}")
        for i, dr in enumerate(drifts):
            if dr.index != i:
                raise ValueError(f"drift {i} carries index {dr.index}")
            if dr.values.shape[1:] != (S.dim,):
                raise ValueError(f"drift {i} has values of shape {dr.values.shape[1:]}, expected ({S.dim},)")
            dr.q = S.spaces[i].q
        if h.dim != S.dim:
            raise ValueError(f"martingale has dimension {h.dim}, expected {S.dim}")
        if horizon <= 0:
            raise ValueError("horizon must be positive")
        self.S = S
        self.A = A
        self.h = h
        self.drifts = drifts
        self.horizon = float(horizon)
        self._tables = [_IntegralTable(dr.step, A) for dr in drifts]
        bp = [A.knots[A.knots > 0], h.times] + [dr.breaks[dr.breaks > 0] for dr in drifts]
        self.breakpoints = np.unique(np.concatenate(bp))

    def __repr__(self):
        return (f"Scenario(d={self.S.dim}, m={self.S.m}, jumps={self.A.jump_times.size}, "
                f"h_events={self.h.times.size}, horizon={self.horizon:g})")

    @property
    def event_times(self):
        """Times in ``(0, horizon]`` where ``A``, ``h`` or a drift changes."""
        bp = self.breakpoints
        return bp[bp <= self.horizon]

    def z(self, t, closed=True):
        """Running drift integral: ``z^(2)`` (closed window) or ``z^(1)`` (open window)."""
        t = np.asarray(t, dtype=float)
        return sum(tab(t, closed=closed) for tab in self._tables)

    def v(self, t):
        return self.z(t) + self.h(t)

    def v_left(self, t):
        return self.z(t, closed=False) + self.h.left_limit(t)

    def v_star(self, t):
        """``v*(t) = Σ_i v_i*(t)``."""
        return sum(dr(t) for dr in self.drifts)

    @property
    def state(self):
        return StatePath(self)

    def to_dict(self):
        return {
            "space_family": self.S.to_dict(),
            "driver": self.A.to_dict(),
            "martingale": self.h.to_dict(),
            "drifts": [dr.to_dict() for dr in self.drifts],
            "horizon": self.horizon,
        }

    @classmethod
    def from_dict(cls, data, check=True):
        S = SpaceFamily.from_dict(data["space_family"])
        A = IncreasingDriver.from_dict(data["driver"])
        h = MartingalePath.from_dict(data["martingale"])
        drifts = [DualStepProcess.from_dict(d, S=S, check=check) for d in data["drifts"]]
        return cls(S, A, h, drifts, data["horizon"])


def scaling_reduce(scn, n):
    """Scenario with ``A``, ``h`` (hence ``v``) scaled by ``1/n``; drifts unchanged."""
    if not n > 0:
        raise ValueError("scaling factor must be positive")
    if n == 1:
        return scn
    drifts = [DualStepProcess(dr.breaks, dr.values, dr.index, eta=dr.eta, check=False) for dr in scn.drifts]
    return Scenario(scn.S, scn.A.scaled(1.0 / n), scn.h.scaled(1.0 / n), drifts, scn.horizon)


def normalise_mass(scn):
    """``scaling_reduce`` by the driver's total mass when it exceeds 1, else ``scn``."""
    mass = scn.A.total_mass
    return scaling_reduce(scn, mass) if mass > 1 else scn


def regularity_terms(scn, t):
    """The five groups of terms of ``r(t)``, each a float.

    Keys: ``h0``, ``A``, ``v`` (``Σ_i (∫‖v‖^{p_i} dA)^{1/p_i}``), ``Q``
    (``Σ_i Q_i(t)``) and ``w`` (``Σ_i Σ_k 2^{-c_k} (∫‖Π^k h‖^{p_i} dA)^{1/p_i}``,
    truncated at ``k = d``).
    """
    S, A = scn.S, scn.A
    bp = scn.breakpoints
    out = {"h0": spaces.h_norm(scn.h.h0, S), "A": float(A(t))}

    def norm_power_integral(path, i):
        space = S.spaces[i]

        def f(s):
            vals = np.asarray(path(np.atleast_1d(s)), dtype=float).reshape(-1, S.dim)
            return np.array([space.norm(row) ** space.p for row in vals])

        return float(path_integral(f, A, t, breakpoints=bp))

    out["v"] = sum(norm_power_integral(scn.v, i) ** (1.0 / s.p) for i, s in enumerate(S.spaces))
    out["Q"] = float(sum(np.asarray(dr.running_bound(A, t)) for dr in scn.drifts))
    w_total = 0.0
    for k in range(1, S.dim + 1):
        weight = 2.0 ** (-S.basis_constants[k - 1])

        def wk(s, k=k):
            vals = np.asarray(scn.h(np.atleast_1d(s)), dtype=float).reshape(-1, S.dim)
            return np.array([spaces.project(row, k, S) for row in vals])

        for i, s in enumerate(S.spaces):
            w_total += weight * norm_power_integral(wk, i) ** (1.0 / s.p)
    out["w"] = w_total
    return out


def regularity_process(scn, t):
    """``r(t) = |h(0)| + A(t) + v-terms + Σ_i Q_i(t) + w-terms``."""
    return float(sum(regularity_terms(scn, t).values()))


def one_jump_scenario(c=1.0):
    """``H = V = R`` (``m = 1``, ``p = 2``), ``v* ≡ c``, one unit jump of ``A`` at ``t = 1``, ``h ≡ 0``."""
    S = SpaceFamily.uniform_lp(1, [2.0])
    A = IncreasingDriver([1.0], [1.0])
    h = MartingalePath.constant([0.0])
    drift = DualStepProcess([], [[c]], 0, S=S)
    return Scenario(S, A, h, [drift], horizon=1.0)


def mixed_scenario():
    """Scalar ``v* ≡ 1`` with ``A`` = density 1/2 on ``[0, 1]`` plus a jump 1/2 at ``t = 1``; ``h ≡ 0``.

    ``K_n(1) = 1/4 + 1.5 · 2^{-n}``, so the gap halves with every level.
    """
    S = SpaceFamily.uniform_lp(1, [2.0])
    A = IncreasingDriver([1.0], [0.5], segments=[(0.0, 1.0, 0.5)])
    h = MartingalePath.constant([0.0])
    drift = DualStepProcess([], [[1.0]], 0, S=S)
    return Scenario(S, A, h, [drift], horizon=1.0)


def random_scenario(seed, n_jumps=None, m=None, exponents=None, d=None, horizon=1.0,
                    density=False, h_on_driver_jumps=False, w1p_prob=0.2):
    """Random pure-jump (or mixed, ``density=True``) scenario.

    Unspecified sizes are drawn from the desk ranges: ``d ∈ {1..4}``,
    ``m ∈ {1, 2, 3}``, ``p_i ∈ {1, 1.5, 2, 3}``, ``1..50`` jumps.  Drifts get
    ``0..5`` random breaks and ``η_i`` a random margin above the exact (``Lp``)
    or certified (``W1p``) dual norm.  With ``h_on_driver_jumps`` the
    martingale only jumps at jump times of ``A``.
    """
    rng = np.random.default_rng(seed)
    d = int(rng.integers(1, 5)) if d is None else int(d)
    if exponents is None:
        m = int(rng.integers(1, 4)) if m is None else int(m)
        exponents = rng.choice([1.0, 1.5, 2.0, 3.0], size=m).tolist()
    m = len(exponents)
    K = int(rng.integers(1, 51)) if n_jumps is None else int(n_jumps)

    hw = rng.uniform(0.5, 2.0, d)
    descs = []
    for p in exponents:
        mu = rng.uniform(0.5, 2.0, d)
        if d >= 2 and rng.random() < w1p_prob:
            descs.append(SpaceDescriptor("W1p", p, mu, spacing=float(rng.uniform(0.5, 2.0))))
        else:
            descs.append(SpaceDescriptor("Lp", p, mu))
    S = SpaceFamily(hw, descs)

    jt = np.unique(rng.uniform(0.0, horizon, K))
    jt = jt[jt > 0]
    A = IncreasingDriver(jt, rng.uniform(0.05, 1.0, jt.size),
                         segments=_random_segments(rng, horizon) if density else ())

    drifts = []
    for i, space in enumerate(S.spaces):
        nb = int(rng.integers(0, 6))
        breaks = np.unique(rng.uniform(0.0, horizon, nb))
        vals = rng.normal(0.0, 1.0, (breaks.size + 1, d))
        margin = 1.0 + rng.uniform(0.0, 0.5, breaks.size + 1)
        if space.kind == "Lp":
            base = np.array([spaces.dual_norm_lp(v, i, S) for v in vals])
        else:
            base = np.array([spaces._atom_dual(hw * v, space.p, space.weights) for v in vals])
        drifts.append(DualStepProcess(breaks, vals, i, S=S, eta=base * margin, check=False))

    h0 = rng.normal(0.0, 1.0, d)
    if h_on_driver_jumps:
        ht = jt[rng.random(jt.size) < 0.6]
    else:
        own = rng.uniform(0.0, horizon, int(rng.integers(0, 21)))
        shared = jt[rng.random(jt.size) < 0.3]
        ht = np.unique(np.concatenate([own, shared]))
        ht = ht[ht > 0]
    h = MartingalePath.from_increments(ht, rng.normal(0.0, 0.5, (ht.size, d)), h0)
    return Scenario(S, A, h, drifts, horizon)


def _random_segments(rng, horizon):
    cuts = np.sort(rng.uniform(0.0, horizon, 4))
    return [(cuts[0], cuts[1], float(rng.uniform(0.1, 1.0))), (cuts[2], cuts[3], float(rng.uniform(0.1, 1.0)))]
