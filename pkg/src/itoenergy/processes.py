"""Path-level machinery for step-valued semimartingales.

An increasing driver ``A`` is a finite list of jumps plus an optional
piecewise-constant density.  Integrands are step functions with finitely many
pieces, so every ``dA`` integral is a finite sum evaluated in closed form.
General (non-step) paths are only integrated in :func:`path_integral`, which
uses Gauss-Legendre quadrature on the absolutely continuous part.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import UnsupportedError

__all__ = [
    "kappa",
    "StepFunction",
    "IncreasingDriver",
    "TimeChange",
    "MartingalePath",
    "DualStepProcess",
    "PartitionHierarchy",
    "StepApproximation",
    "EnsembleReport",
    "eval_A",
    "eval_A_left",
    "time_change_beta",
    "stieltjes_integral",
    "path_integral",
    "substitution_check",
    "lipschitz_check",
    "squared_increment_sums",
    "jump_square_sum",
    "build_partitions",
    "step_approximation",
    "ensemble_martingale_check",
    "random_driver",
    "random_step",
]

_GAUSS_NODES, _GAUSS_WEIGHTS = np.polynomial.legendre.leggauss(12)


def kappa(n, t, variant=1):
    """Dyadic rounding of ``t`` at level ``n``: floor (variant 1) or ceiling (variant 2)."""
    if n < 0:
        raise ValueError("level n must be nonnegative")
    scale = 2.0 ** n
    if variant == 1:
        return np.floor(np.multiply(scale, t)) / scale
    if variant == 2:
        return np.ceil(np.multiply(scale, t)) / scale
    raise ValueError("variant must be 1 or 2")


class StepFunction:
    """Piecewise-constant function of time with finitely many pieces.

    ``values[k]`` is taken on the ``k``-th piece cut out by ``breaks``.  With
    ``left_continuous=True`` the pieces are ``(-inf, b_0], (b_0, b_1], ...``
    (the convention for drifts); otherwise ``[b_{k-1}, b_k)`` (cadlag).

    Values may be scalars or vectors; ``values`` has shape ``(len(breaks)+1, ...)``.
    """

    def __init__(self, breaks, values, left_continuous=True):
        breaks = np.asarray(breaks, dtype=float).ravel()
        values = np.asarray(values, dtype=float)
        if breaks.size and np.any(np.diff(breaks) <= 0):
            raise ValueError("breaks must be strictly increasing")
        if values.shape[0] != breaks.size + 1:
            raise ValueError(f"need {breaks.size + 1} values for {breaks.size} breaks, got {values.shape[0]}")
        if not np.all(np.isfinite(values)):
            raise ValueError("step values must be finite")
        self.breaks = breaks
        self.values = values
        self.left_continuous = bool(left_continuous)

    @classmethod
    def constant(cls, value, left_continuous=True):
        return cls([], np.asarray(value, dtype=float)[None, ...], left_continuous)

    def index(self, t):
        side = "left" if self.left_continuous else "right"
        return np.searchsorted(self.breaks, t, side=side)

    def __call__(self, t):
        return self.values[self.index(t)]

    @property
    def shape(self):
        return self.values.shape[1:]

    def scaled(self, factor):
        return StepFunction(self.breaks, self.values * factor, self.left_continuous)

    def __repr__(self):
        kind = "caglad" if self.left_continuous else "cadlag"
        return f"StepFunction({self.breaks.size + 1} pieces, {kind}, shape={self.shape})"


class IncreasingDriver:
    """Nondecreasing cadlag ``A`` with ``A(0) = 0``.

    Parameters
    ----------
    jump_times, jump_sizes : array_like
        Strictly increasing positive times and positive sizes.
    segments : sequence of (a, b, slope), optional
        Disjoint intervals ``[a, b)`` carrying density ``slope >= 0``.
    """

    def __init__(self, jump_times=(), jump_sizes=(), segments=()):
        jt = np.asarray(jump_times, dtype=float).ravel()
        js = np.asarray(jump_sizes, dtype=float).ravel()
        if jt.shape != js.shape:
            raise ValueError("jump_times and jump_sizes differ in length")
        if jt.size and (jt[0] <= 0 or np.any(np.diff(jt) <= 0)):
            raise ValueError("jump times must be positive and strictly increasing")
        if np.any(js <= 0) or not np.all(np.isfinite(js)):
            raise ValueError("jump sizes must be positive and finite")
        segs = sorted((float(a), float(b), float(c)) for a, b, c in segments)
        for k, (a, b, c) in enumerate(segs):
            if not (0 <= a < b < np.inf) or c < 0:
                raise ValueError(f"invalid density segment {(a, b, c)}")
            if k and segs[k - 1][1] > a:
                raise ValueError("density segments overlap")
        self.jump_times = jt
        self.jump_sizes = js
        self.segments = tuple(s for s in segs if s[2] > 0)
        self._cum = np.concatenate([[0.0], np.cumsum(js)])
        knots = [0.0, *jt.tolist()]
        for a, b, _ in self.segments:
            knots += [a, b]
        self.knots = np.unique(np.asarray(knots))
        self._knot_right = self(self.knots)
        self._knot_left = self.left_limit(self.knots)
        mids = np.append((self.knots[:-1] + self.knots[1:]) / 2, self.knots[-1] + 1.0)
        self._knot_slope = self.density(mids)

    @property
    def is_pure_jump(self):
        return not self.segments

    @property
    def total_mass(self):
        return float(self._cum[-1] + sum((b - a) * c for a, b, c in self.segments))

    @property
    def last_knot(self):
        return float(self.knots[-1])

    def density(self, t):
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        for a, b, c in self.segments:
            out = out + np.where((t >= a) & (t < b), c, 0.0)
        return out

    def _continuous(self, t):
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        for a, b, c in self.segments:
            out = out + c * np.clip(t - a, 0.0, b - a)
        return out

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return self._cum[np.searchsorted(self.jump_times, t, side="right")] + self._continuous(t)

    def left_limit(self, t):
        t = np.asarray(t, dtype=float)
        return self._cum[np.searchsorted(self.jump_times, t, side="left")] + self._continuous(t)

    def jump(self, t):
        """``ΔA(t)``; zero away from the jump times."""
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.jump_times, t)
        hit = (idx < self.jump_times.size) & (self.jump_times[np.minimum(idx, self.jump_times.size - 1)] == t) \
            if self.jump_times.size else np.zeros(t.shape, dtype=bool)
        sizes = np.append(self.jump_sizes, 0.0)
        return np.where(hit, sizes[np.minimum(idx, self.jump_sizes.size)], 0.0)

    def scaled(self, factor):
        """The driver ``factor * A``."""
        return IncreasingDriver(self.jump_times, self.jump_sizes * factor,
                                [(a, b, c * factor) for a, b, c in self.segments])

    def to_dict(self):
        return {
            "jump_times": self.jump_times.tolist(),
            "jump_sizes": self.jump_sizes.tolist(),
            "segments": [list(s) for s in self.segments],
        }

    @classmethod
    def from_dict(cls, data):
        return cls(data.get("jump_times", ()), data.get("jump_sizes", ()), data.get("segments", ()))

    def __repr__(self):
        return (f"IncreasingDriver({self.jump_times.size} jumps, {len(self.segments)} density segments, "
                f"mass={self.total_mass:g})")


def eval_A(A, t):
    if np.any(np.asarray(t) < 0):
        raise ValueError("time must be nonnegative")
    return A(t)


def eval_A_left(A, t):
    if np.any(np.asarray(t) < 0):
        raise ValueError("time must be nonnegative")
    return A.left_limit(t)


class TimeChange:
    """Generalised inverse ``β(r) = inf{t >= 0 : A(t) >= r}`` of a driver."""

    def __init__(self, A):
        self.A = A

    def __call__(self, r):
        A = self.A
        r = np.asarray(r, dtype=float)
        K, right, left, slope = A.knots, A._knot_right, A._knot_left, A._knot_slope
        idx = np.searchsorted(right, r, side="left")
        never = idx >= K.size
        idx_c = np.minimum(idx, K.size - 1)
        inside = (idx_c > 0) & (left[idx_c] >= r)
        prev = np.maximum(idx_c - 1, 0)
        with np.errstate(divide="ignore", invalid="ignore"):
            t_lin = K[prev] + (r - right[prev]) / slope[prev]
        out = np.where(inside, t_lin, K[idx_c])
        out = np.where(never, np.inf, out)
        return out if out.ndim else float(out)


def time_change_beta(B, r):
    if np.any(np.asarray(r) < 0):
        raise ValueError("level r must be nonnegative")
    return B(r)


class MartingalePath:
    """Cadlag pure-jump ``H``-valued path, constant between event times.

    Parameters
    ----------
    times : array_like, shape (K,)
        Strictly increasing positive event times.
    values : array_like, shape (K, d)
        ``h(t_k)``.
    h0 : array_like, shape (d,)
        ``h(0)``.
    """

    def __init__(self, times, values, h0):
        h0 = np.asarray(h0, dtype=float).ravel()
        times = np.asarray(times, dtype=float).ravel()
        values = np.asarray(values, dtype=float).reshape(times.size, h0.size)
        if times.size and (times[0] <= 0 or np.any(np.diff(times) <= 0)):
            raise ValueError("event times must be positive and strictly increasing")
        self.h0 = h0
        self.times = times
        self.values = values
        self._step = StepFunction(times, np.vstack([h0[None, :], values]), left_continuous=False)
        incr = np.diff(self._step.values, axis=0)
        self._incr = incr
        self._qv = np.concatenate([[0.0], np.cumsum(np.sum(incr * incr, axis=1))])

    @classmethod
    def constant(cls, h0):
        h0 = np.asarray(h0, dtype=float).ravel()
        return cls([], np.zeros((0, h0.size)), h0)

    @classmethod
    def from_increments(cls, times, increments, h0):
        h0 = np.asarray(h0, dtype=float).ravel()
        incr = np.asarray(increments, dtype=float).reshape(len(times), h0.size)
        return cls(times, h0 + np.cumsum(incr, axis=0), h0)

    @property
    def dim(self):
        return self.h0.size

    @property
    def breakpoints(self):
        return self.times

    @property
    def increments(self):
        """``Δh(t_k)``, shape ``(K, d)``."""
        return self._incr

    def __call__(self, t):
        return self._step(t)

    def left_limit(self, t):
        idx = np.searchsorted(self.times, t, side="left")
        return self._step.values[idx]

    def jump(self, t):
        return self(t) - self.left_limit(t)

    def quadratic_variation(self, t, weights=None):
        """``[h]_t = Σ_{s<=t} |Δh(s)|^2`` (Euclidean, or ``H``-weighted if ``weights`` given)."""
        idx = np.searchsorted(self.times, t, side="right")
        if weights is None:
            return self._qv[idx]
        w = np.asarray(weights, dtype=float)
        qv = np.concatenate([[0.0], np.cumsum(np.sum(w * self._incr ** 2, axis=1))])
        return qv[idx]

    def scaled(self, factor):
        return MartingalePath(self.times, self.values * factor, self.h0 * factor)

    def to_dict(self):
        return {"times": self.times.tolist(), "values": self.values.tolist(), "h0": self.h0.tolist()}

    @classmethod
    def from_dict(cls, data):
        h0 = np.asarray(data["h0"], dtype=float)
        return cls(data.get("times", ()), np.asarray(data.get("values", []), dtype=float).reshape(-1, h0.size), h0)

    def __repr__(self):
        return f"MartingalePath({self.times.size} events, d={self.dim})"


class DualStepProcess:
    """Step-valued ``V_i*`` drift with its dominating process ``η_i``.

    Values live on left-open pieces ``(b_{k-1}, b_k]``.  ``η`` must dominate the
    dual norm of the stored value on every piece; this is verified at
    construction when a :class:`~itoenergy.spaces.SpaceFamily` is given.

    Parameters
    ----------
    breaks : array_like, shape (L,)
    values : array_like, shape (L+1, d)
        ``H`` representatives of ``v_i*`` on each piece.
    eta : array_like, shape (L+1,), optional
        Dominating values.  Defaults to the exact dual norm (requires ``S``).
    index : int
        The constituent space ``i``.
    S : SpaceFamily, optional
    check : bool
        Verify ``η >= ||v_i*||_{V_i*}`` piece by piece.
    """

    def __init__(self, breaks, values, index, S=None, eta=None, check=True):
        from . import spaces

        self.index = int(index)
        self.q = S.spaces[self.index].q if S is not None else None
        self.step = StepFunction(breaks, np.atleast_2d(np.asarray(values, dtype=float)), left_continuous=True)
        if S is not None and self.step.shape != (S.dim,):
            raise ValueError(f"drift values must have shape (pieces, {S.dim})")
        if eta is None:
            if S is None:
                raise ValueError("eta defaults to the exact dual norm, which needs a SpaceFamily")
            eta = [spaces.dual_norm(v, self.index, S) for v in self.step.values]
            check = False
        eta = np.asarray(eta, dtype=float).ravel()
        if eta.shape != (self.step.values.shape[0],):
            raise ValueError("need one eta value per piece")
        if np.any(eta < 0) or not np.all(np.isfinite(eta)):
            raise ValueError("eta must be finite and nonnegative")
        self.eta_step = StepFunction(self.step.breaks, eta, left_continuous=True)
        if check and S is not None:
            for k, (v, e) in enumerate(zip(self.step.values, eta)):
                if not _dominates(e, v, self.index, S):
                    raise ValueError(f"eta={e:g} on piece {k} is below the dual norm of the drift value")

    @property
    def breaks(self):
        return self.step.breaks

    @property
    def values(self):
        return self.step.values

    @property
    def eta(self):
        return self.eta_step.values

    def __call__(self, t):
        return self.step(t)

    def running_bound(self, A, t):
        """``Q_i(t)``: ``(∫_{(0,t]} η^q dA)^{1/q}``, or the running ``dA``-ess sup when ``q = ∞``."""
        q = _space_q(self)
        if np.isinf(q):
            return _ess_sup(self.eta_step, A, t)
        powered = StepFunction(self.breaks, self.eta ** q, left_continuous=True)
        return np.asarray(stieltjes_integral(powered, A, t)) ** (1.0 / q)

    def to_dict(self):
        return {"index": self.index, "breaks": self.breaks.tolist(),
                "values": self.values.tolist(), "eta": self.eta.tolist()}

    @classmethod
    def from_dict(cls, data, S=None, check=True):
        return cls(data["breaks"], data["values"], data["index"], S=S, eta=data.get("eta"), check=check)

    def __repr__(self):
        return f"DualStepProcess(i={self.index}, pieces={self.values.shape[0]})"


def _space_q(proc):
    q = getattr(proc, "q", None)
    if q is None:
        raise ValueError("exponent unknown; attach the process to a Scenario first")
    return q


def _dominates(e, v, i, S):
    from . import spaces

    slack = 1e-9 * max(1.0, e)
    space = S.spaces[i]
    if spaces._atom_dual(S.h_weights * v, space.p, space.weights) <= e + slack:
        return True
    if spaces.dual_norm_upper_bound(v, i, S) <= e + slack:
        return True
    return spaces.dual_norm(v, i, S) <= e * (1 + 1e-6) + slack


def _ess_sup(eta_step, A, t):
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.zeros_like(t_arr)
    # candidate carriers of dA mass: jump times and density pieces
    pts = [(s, s) for s in A.jump_times]
    for a, b, _ in A.segments:
        cuts = np.concatenate([[a], eta_step.breaks[(eta_step.breaks > a) & (eta_step.breaks < b)], [b]])
        pts += [(lo, hi) for lo, hi in zip(cuts[:-1], cuts[1:])]
    for lo, hi in pts:
        val = float(eta_step(hi if lo == hi else 0.5 * (lo + hi)))
        reached = t_arr >= hi if lo == hi else t_arr > lo
        out = np.where(reached, np.maximum(out, val), out)
    return out if np.ndim(t) else float(out[0])


class _IntegralTable:
    """Running integral of a step integrand against ``A`` at all knots."""

    def __init__(self, x, A, extra=()):
        knots = np.unique(np.concatenate([A.knots, x.breaks[x.breaks > 0],
                                          np.asarray(extra, dtype=float).ravel()]))
        knots = knots[knots >= 0]
        self.knots = knots
        jump = A.jump(knots)
        xv = x(knots)
        shape = (-1,) + (1,) * (xv.ndim - 1)
        self.jump_part = xv * jump.reshape(shape)
        mids = np.append((knots[:-1] + knots[1:]) / 2, knots[-1] + 1.0)
        self.rate = x(mids) * A.density(mids).reshape(shape)
        lengths = np.diff(knots).reshape((-1,) + (1,) * (xv.ndim - 1))
        incr = self.rate[:-1] * lengths + self.jump_part[1:]
        self.right = np.concatenate([self.jump_part[:1], self.jump_part[:1] + np.cumsum(incr, axis=0)])

    def __call__(self, t, closed=True):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise ValueError("time must be nonnegative")
        idx = np.searchsorted(self.knots, t, side="right") - 1
        dt = (t - self.knots[idx]).reshape(t.shape + (1,) * (self.right.ndim - 1))
        rate = self.rate[idx]
        live = (dt > 0) & (rate != 0)
        out = self.right[idx] + np.where(live, rate * np.where(live, dt, 0.0), 0.0)
        if not closed:
            at_knot = (t == self.knots[idx]).reshape(dt.shape)
            out = out - np.where(at_knot, self.jump_part[idx], 0.0)
        return out


def stieltjes_integral(x, A, t, closed=True):
    """``∫_{(0,t]} x dA`` (``closed=True``) or ``∫_{(0,t)} x dA`` for a step integrand.

    Exact: a finite sum over the jumps of ``A`` plus closed-form integrals over
    the density segments.  ``t`` may be an array; vector-valued integrands give
    vector results.
    """
    if not isinstance(x, StepFunction):
        raise UnsupportedError("only StepFunction integrands are integrated exactly; "
                               "approximate with step_approximation or use path_integral")
    return _IntegralTable(x, A)(t, closed=closed)


def path_integral(f, A, t, breakpoints=()):
    """``∫_{(0,t]} f dA`` for a general callable ``f`` of time.

    Jumps are summed exactly; the density part uses 12-point Gauss-Legendre
    on every piece between ``breakpoints`` (which should contain every
    discontinuity of ``f``).
    """
    jt = A.jump_times[A.jump_times <= t]
    total = np.sum(np.asarray([f(s) for s in jt]).reshape(jt.size, -1) * A.jump_sizes[:jt.size, None], axis=0) \
        if jt.size else 0.0
    cuts_all = np.asarray(breakpoints, dtype=float).ravel()
    for a, b, c in A.segments:
        hi = min(b, t)
        if hi <= a:
            continue
        cuts = np.unique(np.concatenate([[a, hi], cuts_all[(cuts_all > a) & (cuts_all < hi)]]))
        lo, up = cuts[:-1], cuts[1:]
        half = (up - lo) / 2
        nodes = (lo[:, None] + up[:, None]) / 2 + half[:, None] * _GAUSS_NODES[None, :]
        vals = np.asarray(f(nodes.ravel()), dtype=float).reshape(nodes.size, -1)
        wts = (half[:, None] * _GAUSS_WEIGHTS[None, :]).ravel()
        total = total + c * np.sum(vals * wts[:, None], axis=0)
    total = np.asarray(total, dtype=float)
    return float(total.ravel()[0]) if total.size == 1 else total


def substitution_check(x, A, t, closed=True):
    """Both sides of the change of variables ``∫ x dA = ∫ x(β(r)) dr``.

    The left side is :func:`stieltjes_integral`.  The right side integrates the
    step function ``r ↦ x(β(r))`` over ``(0, A(t)]`` (or ``(0, A(t-)]`` for the
    open window) by locating its pieces in ``r`` directly.
    """
    lhs = stieltjes_integral(x, A, t, closed=closed)
    upper = float(A(t) if closed else A.left_limit(t))
    beta = TimeChange(A)
    # x∘β is constant between consecutive A-levels of all knots and x-breaks
    pts = np.concatenate([A.knots, x.breaks[x.breaks >= 0]])
    levels = np.concatenate([[0.0, upper], A(pts), A.left_limit(pts)])
    levels = np.unique(levels[(levels >= 0) & (levels <= upper)])
    if levels.size < 2:
        return float(np.sum(lhs)) if np.ndim(lhs) == 0 else lhs, 0.0 * lhs
    mids = (levels[:-1] + levels[1:]) / 2
    vals = x(beta(mids))
    widths = np.diff(levels).reshape((-1,) + (1,) * (vals.ndim - 1))
    rhs = np.sum(vals * widths, axis=0)
    return lhs, rhs


def lipschitz_check(B, s, t, tol=1e-12):
    """``A(β(t)-) - A(β(s)) <= t - s`` for ``0 <= s <= t``."""
    if not 0 <= s <= t:
        raise ValueError("need 0 <= s <= t")
    A = B.A
    bt, bs = B(t), B(s)
    a_t = A.total_mass if np.isinf(bt) else float(A.left_limit(bt))
    a_s = A.total_mass if np.isinf(bs) else float(A(bs))
    return bool(a_t - a_s <= (t - s) + tol * max(1.0, A.total_mass))


def jump_square_sum(x, A, t):
    """``Σ_{s<=t} |x(s)|^2 |ΔA(s)|^2`` for a step integrand."""
    jt = A.jump_times[A.jump_times <= t]
    if not jt.size:
        return 0.0
    vals = np.asarray(x(jt), dtype=float).reshape(jt.size, -1)
    return float(np.sum(np.sum(vals ** 2, axis=1) * A.jump_sizes[:jt.size] ** 2))


def squared_increment_sums(x, A, levels, t):
    """Per level ``n = 1..levels``: ``Σ_k |X(τ^n_{k+1}∧t) - X(τ^n_k∧t)|^2``.

    ``X(t) = ∫_{(0,t]} x dA`` and ``τ^n_k = β(k 2^-n)``; the grid covers
    ``[0, A(t)]`` plus one point beyond, whose time exceeds ``t``.
    """
    table = _IntegralTable(x, A, extra=[t])
    beta = TimeChange(A)
    At = float(A(t))
    out = []
    for n in range(1, int(levels) + 1):
        jmax = int(math.floor(At * 2 ** n)) + 1
        taus = beta(np.arange(jmax + 1) / 2.0 ** n)
        X = table(np.minimum(taus, t))
        inc = np.diff(X, axis=0).reshape(jmax, -1)
        out.append(float(np.sum(inc ** 2)))
    return np.array(out)


@dataclass(frozen=True)
class PartitionHierarchy:
    """Dyadic ``r``-grids on ``[0, 1]`` pulled back through ``β``.

    ``taus[n-1]`` holds ``τ^n_0 = 0, τ^n_1, ..., τ^n_N, τ^n_{N+1} = inf`` with
    ``N = 2^n - 1`` for level ``n = 1..max_level``.
    """

    r_grids: tuple
    taus: tuple
    max_level: int

    def level(self, n):
        if not 1 <= n <= self.max_level:
            raise ValueError(f"level {n} outside 1..{self.max_level}")
        return self.taus[n - 1]

    def points(self, n):
        """Distinct finite partition times ``τ^n_j > 0`` at level ``n``."""
        tau = self.level(n)
        tau = tau[np.isfinite(tau) & (tau > 0)]
        return np.unique(tau)

    def captures(self, times, n):
        """Whether every time in ``times`` is a partition point at level ``n``."""
        return bool(np.all(np.isin(np.asarray(times, dtype=float), self.points(n))))

    def capture_level(self, times):
        """Smallest level capturing all of ``times``, or ``None``."""
        for n in range(1, self.max_level + 1):
            if self.captures(times, n):
                return n
        return None

    def is_nested(self):
        for n in range(1, self.max_level):
            if not set(self.points(n)).issubset(set(self.points(n + 1))):
                return False
            if not set(self.r_grids[n - 1]).issubset(set(self.r_grids[n])):
                return False
        return True


def build_partitions(B, max_level, mass_tol=1e-12):
    """Nested dyadic partitions ``τ^n_j = β(j 2^-n)`` for ``n = 1..max_level``.

    Raises
    ------
    ValueError
        If the driver's total mass exceeds 1; rescale first
        (:func:`itoenergy.scenario.scaling_reduce`).
    """
    A = B.A if isinstance(B, TimeChange) else B
    B = TimeChange(A)
    if A.total_mass > 1 + mass_tol:
        raise ValueError(f"driver mass {A.total_mass:g} exceeds 1; normalise with scaling_reduce first")
    grids, taus = [], []
    for n in range(1, int(max_level) + 1):
        r = np.arange(2 ** n + 1) / 2.0 ** n
        tau = np.empty(r.size)
        tau[:-1] = B(r[:-1])
        tau[-1] = np.inf
        grids.append(r)
        taus.append(tau)
    return PartitionHierarchy(tuple(grids), tuple(taus), int(max_level))


@dataclass
class StepApproximation:
    """Left (variant 1) or right (variant 2) sampled step path at one level."""

    taus: np.ndarray
    samples: np.ndarray
    variant: int
    errors: np.ndarray = field(default=None)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.variant == 1:
            idx = np.searchsorted(self.taus, t, side="right") - 1
            vals = self.samples[np.maximum(idx, 0)]
            zero = (idx <= 0).reshape(idx.shape + (1,))
            return np.where(zero, 0.0, vals)
        idx = np.searchsorted(self.taus, t, side="left")
        return self.samples[np.minimum(idx, self.samples.shape[0] - 1)]


def step_approximation(v, P, level, variant, S, A, terminal_time=None):
    """Sampled step path ``v_n^{(l)}`` and its ``L^{p_i}(dA)`` errors.

    ``v`` is any callable of time returning ``(len(t), d)`` arrays; optional
    ``v.breakpoints`` lists its discontinuities for the quadrature.  The
    sentinel ``τ_{N+1} = inf`` is sampled at ``terminal_time`` (default: the
    last knot of ``A`` or of ``v``, whichever is later).

    Returns
    -------
    StepApproximation
        ``errors[i] = ∫_{(0,inf)} ||v - v_n^{(l)}||_{V_i}^{p_i} dA``.
    """
    if variant not in (1, 2):
        raise ValueError("variant must be 1 or 2")
    taus = P.level(level)
    bp = np.asarray(getattr(v, "breakpoints", ()), dtype=float).ravel()
    if terminal_time is None:
        terminal_time = max(A.last_knot, float(bp.max()) if bp.size else 0.0) + 1.0
    sample_t = np.where(np.isinf(taus), terminal_time, taus)
    samples = np.asarray(v(sample_t), dtype=float).reshape(taus.size, S.dim)
    approx = StepApproximation(taus, samples, variant)
    cuts = np.concatenate([bp, taus[np.isfinite(taus)]])
    errors = []
    for space in S.spaces:
        def f(t, space=space):
            t = np.atleast_1d(np.asarray(t, dtype=float))
            diff = np.asarray(v(t), dtype=float).reshape(t.size, S.dim) - approx(t).reshape(t.size, S.dim)
            return np.array([space.norm(row) ** space.p for row in diff])
        errors.append(float(path_integral(f, A, np.inf, breakpoints=cuts)))
    approx.errors = np.array(errors)
    return approx


@dataclass
class EnsembleReport:
    """Outcome of :func:`ensemble_martingale_check`."""

    passed: bool
    n_paths: int
    times: np.ndarray
    mean_increment: np.ndarray
    std_increment: np.ndarray
    max_z: float
    mean_qv: np.ndarray


def ensemble_martingale_check(generator, N, seed=0, sigmas=3.0):
    """3σ gate on the sample mean of increments of an ensemble of paths.

    Parameters
    ----------
    generator : callable
        ``generator(rng) -> MartingalePath``; all paths must share event times.
    N : int
        Ensemble size, at least 100.
    seed : int
        Root seed; path ``k`` uses the ``k``-th spawned child stream.

    Returns
    -------
    EnsembleReport
        ``mean_qv[k]`` is the empirical ``⟨h⟩`` at ``times[k]`` (mean of ``[h]``).
    """
    if N < 100:
        raise ValueError("ensemble size must be at least 100")
    children = np.random.SeedSequence(seed).spawn(N)
    incs, qvs, times = [], [], None
    for child in children:
        path = generator(np.random.default_rng(child))
        if times is None:
            times = path.times
        elif not np.array_equal(times, path.times):
            raise ValueError("ensemble paths must share event times")
        incs.append(path.increments)
        qvs.append(path.quadratic_variation(times))
    incs = np.asarray(incs)
    mean = incs.mean(axis=0)
    std = incs.std(axis=0, ddof=1)
    gate = sigmas * std / np.sqrt(N)
    scale = np.abs(incs).max() if incs.size else 0.0
    ok = np.abs(mean) <= gate + 1e-14 * scale
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(std > 0, np.abs(mean) * np.sqrt(N) / std, np.where(mean == 0, 0.0, np.inf))
    return EnsembleReport(
        passed=bool(np.all(ok)),
        n_paths=N,
        times=times,
        mean_increment=mean,
        std_increment=std,
        max_z=float(z.max()) if z.size else 0.0,
        mean_qv=np.asarray(qvs).mean(axis=0),
    )


def random_driver(rng, n_jumps=None, horizon=1.0, density=False):
    """Random driver on ``[0, horizon]``: ``1..50`` jumps, optionally two density segments."""
    K = int(rng.integers(1, 51)) if n_jumps is None else int(n_jumps)
    jt = np.unique(rng.uniform(0.0, horizon, K))
    jt = jt[jt > 0]
    segments = ()
    if density:
        cuts = np.sort(rng.uniform(0.0, horizon, 4))
        segments = [(cuts[0], cuts[1], float(rng.uniform(0.1, 1.0))),
                    (cuts[2], cuts[3], float(rng.uniform(0.1, 1.0)))]
    return IncreasingDriver(jt, rng.uniform(0.05, 1.0, jt.size), segments=segments)


def random_step(rng, horizon=1.0, max_breaks=8, A=None):
    """Random scalar left-continuous step function; with ``A``, half the breaks sit on its jumps."""
    nb = int(rng.integers(0, max_breaks + 1))
    breaks = rng.uniform(0.0, horizon, nb)
    if A is not None and A.jump_times.size:
        breaks = np.concatenate([breaks, rng.choice(A.jump_times, size=min(nb, A.jump_times.size))])
    breaks = np.unique(breaks)
    return StepFunction(breaks, rng.normal(0.0, 1.0, breaks.size + 1))
