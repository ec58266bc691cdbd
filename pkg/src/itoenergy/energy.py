"""Energy equality for ``|v|_H^2`` and the discrete identities behind it.

For a scenario ``v = Σ_i ∫ v_i* dA + h`` the ledger at time ``t`` splits

    |v(t)|^2 = |h(0)|^2 + 2 Σ_i ∫_{(0,t]} <v_i*, v> dA + 2 ∫_{(0,t]} (v(s-), dh(s))
               - ∫_{(0,t]} |v*|^2 ΔA dA + [h]_t

into its terms and reports the residual.  All terms are closed-form finite
sums: on each open interval between knots ``v`` is affine in time and the
drift pairing integrates exactly; at each knot the jumps of ``A`` and ``h``
contribute one term each.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .processes import MartingalePath, StepFunction, build_partitions, stieltjes_integral
from .scenario import scaling_reduce

__all__ = [
    "EnergyLedger",
    "CorrectionStudy",
    "TelescopingReport",
    "HomogeneityReport",
    "LEDGER_FIELDS",
    "cadlag_modification",
    "weak_jump_check",
    "energy_ledger",
    "ledger_table",
    "ledger_residual_ok",
    "telescoping_check",
    "stochastic_term_via_partition",
    "correction_study",
    "hilbert_ito_check",
    "homogeneity_check",
    "holder_bound",
]

LEDGER_FIELDS = ("t", "lhs", "term_h0", "term_drift", "term_stoch", "term_correction", "term_qv", "residual")


@dataclass
class EnergyLedger:
    """Both sides of the energy equality at one time ``t``."""

    t: float
    lhs: float
    term_h0: float
    term_drift: float
    term_stoch: float
    term_correction: float
    term_qv: float
    residual: float
    drift_by_space: np.ndarray = field(default=None, repr=False)

    @property
    def rhs(self):
        return self.term_h0 + self.term_drift + self.term_stoch - self.term_correction + self.term_qv

    def row(self):
        return [getattr(self, f) for f in LEDGER_FIELDS]

    def as_dict(self):
        out = {f: getattr(self, f) for f in LEDGER_FIELDS}
        if self.drift_by_space is not None:
            out["drift_by_space"] = np.asarray(self.drift_by_space).tolist()
        return out


def ledger_residual_ok(ledger, rtol=1e-9):
    """``|residual| <= rtol (1 + lhs)``."""
    return abs(ledger.residual) <= rtol * (1.0 + abs(ledger.lhs))


def cadlag_modification(scn):
    """``ṽ = z^(2) + h`` as a path with left limits ``ṽ(t-) = z^(1)(t) + h(t-)``."""
    return scn.state


def weak_jump_check(scn, t):
    """Jump of ``ṽ - h`` at an event time ``t`` and ``ΔA(t) Σ_i v_i*(t)``."""
    t = float(t)
    if t != 0.0 and not np.any(scn.breakpoints == t):
        raise ValueError(f"t={t} is not an event time of the scenario")
    lhs = scn.z(t) - scn.z(t, closed=False)
    rhs = float(scn.A.jump(t)) * scn.v_star(t)
    return lhs, rhs


def _ledger_arrays(scn, times):
    S, A, h = scn.S, scn.A, scn.h
    w = S.h_weights
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if np.any(times < 0) or np.any(times > scn.horizon * (1 + 1e-12)):
        raise ValueError(f"evaluation times must lie in [0, {scn.horizon}]")
    knots = np.unique(np.concatenate([[0.0], scn.breakpoints, times]))
    knots = knots[knots <= max(times.max(), 0.0)]
    v_r = scn.v(knots)
    v_l = scn.v_left(knots)
    dh = h(knots) - h.left_limit(knots)
    dA = A.jump(knots)
    # drift values on each knot and on the open interval before it
    mids = np.concatenate([[knots[0]], (knots[:-1] + knots[1:]) / 2])
    slope = A.density(mids)
    slope[0] = 0.0
    length = np.concatenate([[0.0], np.diff(knots)])
    v_start = np.vstack([v_r[:1], v_r[:-1]])
    vstar_mid = scn.v_star(mids)
    by_space = []
    for dr in scn.drifts:
        at_knot = dr(knots)
        at_mid = dr(mids)
        cont = (slope * length * np.sum(w * at_mid * v_start, axis=1)
                + 0.5 * (slope * length) ** 2 * np.sum(w * at_mid * vstar_mid, axis=1))
        jump = dA * np.sum(w * at_knot * v_r, axis=1)
        by_space.append(np.cumsum(2.0 * (cont + jump)))
    by_space = np.array(by_space)
    vstar_k = scn.v_star(knots)
    corr = np.cumsum(np.sum(w * vstar_k ** 2, axis=1) * dA ** 2)
    stoch = np.cumsum(2.0 * np.sum(w * v_l * dh, axis=1))
    qv = np.cumsum(np.sum(w * dh ** 2, axis=1))
    lhs = np.sum(w * v_r ** 2, axis=1)
    h0 = float(np.sum(w * h.h0 ** 2))
    drift = by_space.sum(axis=0)
    idx = np.searchsorted(knots, times)
    return {
        "t": times,
        "lhs": lhs[idx],
        "term_h0": np.full(times.size, h0),
        "term_drift": drift[idx],
        "term_stoch": stoch[idx],
        "term_correction": corr[idx],
        "term_qv": qv[idx],
        "residual": (lhs - (h0 + drift + stoch - corr + qv))[idx],
        "drift_by_space": by_space[:, idx].T,
    }


def energy_ledger(scn, t):
    """All terms of the energy equality at time ``t`` (``0 <= t <= horizon``)."""
    arr = _ledger_arrays(scn, [t])
    return EnergyLedger(**{k: (float(v[0]) if k != "drift_by_space" else v[0]) for k, v in arr.items()})


def ledger_table(scn, times=None):
    """Ledgers at ``times`` (default: ``0`` and every event time up to the horizon)."""
    if times is None:
        times = np.concatenate([[0.0], scn.event_times])
    arr = _ledger_arrays(scn, times)
    return [EnergyLedger(**{k: (float(v[j]) if k != "drift_by_space" else v[j]) for k, v in arr.items()})
            for j in range(len(arr["t"]))]


@dataclass
class TelescopingReport:
    """Discrete energy identity at the partition points of one level."""

    level: int
    taus: np.ndarray
    lhs: np.ndarray
    terms: dict
    defect: np.ndarray

    @property
    def max_defect(self):
        return float(self.defect.max()) if self.defect.size else 0.0

    @property
    def rhs(self):
        return sum(self.terms.values())


def _level_taus(scn, P, level):
    tau = P.level(level)
    tau = tau[np.isfinite(tau)]
    return tau[tau <= scn.horizon]


def telescoping_check(scn, P, level):
    """Check the seven-term identity for ``|v(τ_j)|^2`` at every ``τ_j``, ``j >= 1``.

    Terms (keys of ``report.terms``): ``h0``; ``drift`` ``2Σ_i∫⟨v_i*, v_n^(2)⟩dA``
    with ``v_n^(2) = v(τ_{k+1})`` on ``(τ_k, τ_{k+1}]``; ``stoch`` ``2Σ_{k>=1}(v(τ_k),
    h(τ_{k+1}) - h(τ_k))``; ``h0_cross`` ``2(h(0), h(τ_1) - h(0))``; ``h_qv``; ``first``
    ``-|v(τ_1) - h(τ_1)|^2``; ``drift_sq`` ``-Σ_{k>=1}|Δv - Δh|^2``.  The defect is
    ``|lhs - rhs|`` relative to the sum of absolute term values.
    """
    S, h = scn.S, scn.h
    w = S.h_weights
    tau = _level_taus(scn, P, level)
    if tau.size < 2:
        empty = np.zeros(0)
        return TelescopingReport(level, tau, empty, {}, empty)
    v_tau = scn.v(tau)
    h_tau = h(tau)

    def ip(a, b):
        return np.sum(w * a * b, axis=-1)

    # left-continuous sampled path v_n^(2) as a step function on the partition
    cuts = np.unique(tau[tau > 0])
    vn2 = StepFunction(cuts, np.vstack([scn.v(cuts), scn.v(cuts[-1:])]), left_continuous=True)
    drift_cum = np.zeros(tau.size)
    for dr in scn.drifts:
        breaks = np.unique(np.concatenate([cuts, dr.breaks]))
        reps = np.append(breaks, breaks[-1] + 1.0)
        pairing = StepFunction(breaks, ip(dr(reps), vn2(reps)), left_continuous=True)
        drift_cum = drift_cum + 2.0 * np.asarray(stieltjes_integral(pairing, scn.A, tau))

    dh = np.diff(h_tau, axis=0)
    dv = np.diff(v_tau, axis=0)
    J = tau.size
    stoch = np.concatenate([[0.0, 0.0], np.cumsum(2.0 * ip(v_tau[1:-1], dh[1:]))])[:J]
    h_qv = np.concatenate([[0.0], np.cumsum(ip(dh, dh))])
    drift_sq = np.concatenate([[0.0, 0.0], -np.cumsum(ip(dv[1:] - dh[1:], dv[1:] - dh[1:]))])[:J]
    g1 = v_tau[1] - h_tau[1]
    sl = slice(1, None)
    terms = {
        "h0": np.full(J - 1, ip(h.h0, h.h0)),
        "drift": drift_cum[sl],
        "stoch": stoch[sl],
        "h0_cross": np.full(J - 1, 2.0 * ip(h.h0, h_tau[1] - h.h0)),
        "h_qv": h_qv[sl],
        "first": np.full(J - 1, -ip(g1, g1)),
        "drift_sq": drift_sq[sl],
    }
    lhs = ip(v_tau, v_tau)[sl]
    rhs = sum(terms.values())
    scale = np.maximum(np.maximum(np.abs(lhs), sum(np.abs(x) for x in terms.values())), 1e-300)
    defect = np.abs(lhs - rhs) / scale
    return TelescopingReport(level, tau[sl], lhs, terms, defect)


def stochastic_term_via_partition(scn, P, level, t):
    """``2(h(0), h(τ_1) - h(0)) + 2∫_{(0,t]} v̄_n dh`` at a partition point ``t``.

    Equals the ledger's ``term_stoch`` whenever every jump time of ``h`` in
    ``(0, t]`` is a partition point.
    """
    tau = np.unique(_level_taus(scn, P, level))
    tau = tau[tau <= t]
    if tau.size < 2:
        return 0.0
    w = scn.S.h_weights
    v_tau = scn.v(tau)
    h_tau = scn.h(tau)
    dh = np.diff(h_tau, axis=0)
    first = 2.0 * np.sum(w * scn.h.h0 * (h_tau[1] - scn.h.h0))
    return float(first + 2.0 * np.sum(w * v_tau[1:-1] * dh[1:]))


@dataclass
class CorrectionStudy:
    """``K_n(t)`` per level against ``∫_{(0,t]} |v*|^2 ΔA dA``."""

    t: float
    levels: np.ndarray
    K: np.ndarray
    target: float
    gap: np.ndarray = field(init=False)

    def __post_init__(self):
        self.gap = np.abs(self.K - self.target)

    def rows(self):
        return [(int(n), float(k), float(g)) for n, k, g in zip(self.levels, self.K, self.gap)]


def correction_study(scn, P=None, t=None, max_level=10):
    """``K_n(t) = Σ_{τ_{k+1} <= t} |ṽ(τ_{k+1}) - ṽ(τ_k) - (h(τ_{k+1}) - h(τ_k))|^2``, ``n = 1..max_level``."""
    t = scn.horizon if t is None else float(t)
    if P is None or P.max_level < max_level:
        P = build_partitions(scn.A, max_level)
    w = scn.S.h_weights
    vt = cadlag_modification(scn)
    K = []
    for n in range(1, max_level + 1):
        tau = P.level(n)
        tau = tau[np.isfinite(tau) & (tau <= t)]
        d = np.diff(vt(tau) - scn.h(tau), axis=0)
        K.append(float(np.sum(w * d * d)))
    target = energy_ledger(scn, t).term_correction
    return CorrectionStudy(t, np.arange(1, max_level + 1), np.array(K), target)


def hilbert_ito_check(h, t, S=None):
    """``|h(t)|^2`` against ``|h(0)|^2 + 2∫(h(s-), dh(s)) + [h]_t`` for a pure-jump path."""
    if not isinstance(h, MartingalePath):
        raise TypeError("hilbert_ito_check needs a MartingalePath")
    w = np.ones(h.dim) if S is None else S.h_weights
    ht = h(t)
    lhs = float(np.sum(w * ht * ht))
    k = int(np.searchsorted(h.times, t, side="right"))
    before = h._step.values[:k]
    incr = h.increments[:k]
    stoch = 2.0 * float(np.sum(w * before * incr))
    rhs = float(np.sum(w * h.h0 ** 2)) + stoch + float(h.quadratic_variation(t, weights=w))
    return lhs, rhs


@dataclass
class HomogeneityReport:
    n: float
    t: float
    base: EnergyLedger
    scaled: EnergyLedger
    max_ratio_error: float

    @property
    def residual_base(self):
        return self.base.residual

    @property
    def residual_scaled(self):
        return self.scaled.residual


def homogeneity_check(scn, n, t):
    """Ledger of ``scaling_reduce(scn, n)`` against the base ledger divided by ``n^2``.

    ``max_ratio_error`` is ``max |scaled - base/n^2| / (|base|/n^2)`` over the
    nonzero terms (absolute for terms that vanish).
    """
    base = energy_ledger(scn, t)
    scaled = energy_ledger(scaling_reduce(scn, n), t)
    err = 0.0
    for f in LEDGER_FIELDS[1:-1]:
        b = getattr(base, f) / n ** 2
        s = getattr(scaled, f)
        err = max(err, abs(s - b) / abs(b) if b != 0 else abs(s))
    return HomogeneityReport(float(n), float(t), base, scaled, err)


def holder_bound(scn, t):
    """Per-space ``Q_i(t) (∫_{(0,t]} ||v||_{V_i}^{p_i} dA)^{1/p_i}``, bounding ``|∫⟨v_i*, v⟩ dA|``."""
    from .processes import path_integral

    S, A = scn.S, scn.A
    out = []
    for i, (space, dr) in enumerate(zip(S.spaces, scn.drifts)):
        def f(s, space=space):
            vals = np.asarray(scn.v(np.atleast_1d(s)), dtype=float).reshape(-1, S.dim)
            return np.array([space.norm(row) ** space.p for row in vals])

        integral = float(path_integral(f, A, t, breakpoints=scn.breakpoints))
        out.append(float(dr.running_bound(A, t)) * integral ** (1.0 / space.p))
    return np.array(out)
