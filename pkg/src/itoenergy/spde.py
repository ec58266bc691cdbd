"""Finite-difference Euler runs of a 1-D doubly nonlinear SPDE as scenarios.

The equation on ``(0, L)`` with zero boundary values is

    du = [ (|u_x|^{p1-2} u_x)_x + |u|^{p2-2} u ] dt + σ u dW + ∫ γ u / (1 + z) q(dt, dz)

with ``W`` a Wiener process per grid node and ``q`` a compensated Poisson
random measure with rate ``λ`` and marks uniform on ``{1, ..., M}``.  An
explicit Euler step is itself of the form ``v = Σ_i ∫ v_i* dA + h`` with ``A``
jumping by ``Δt`` at each step time, so every run is an exact scenario.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .exceptions import BlowUpError
from .processes import DualStepProcess, IncreasingDriver, MartingalePath
from .scenario import Scenario
from .spaces import SpaceDescriptor, SpaceFamily, _weighted_lp, conjugate_exponent

__all__ = [
    "SpdeConfig",
    "SpdeRun",
    "IntegrabilityReport",
    "space_family",
    "difference_operator",
    "p_laplacian",
    "power_drift",
    "flux",
    "drift_dual_bounds",
    "euler_run",
    "prescribed_run",
    "amplitude_ramp_run",
    "integrability_report",
    "noise_path_sampler",
    "linear_oracle",
]


@dataclass
class SpdeConfig:
    """Grid, exponents, time stepping and noise of one run.

    ``d`` counts interior nodes; the spacing is ``length / (d + 1)``.  The
    initial datum is ``amplitude * sin(π x / length)`` unless ``u0`` is given.
    """

    d: int = 32
    length: float = 2.0
    p1: float = 2.0
    p2: float = 3.0
    dt: float = 1e-3
    T: float = 0.1
    sigma: float = 0.5
    jump_rate: float = 50.0
    gamma: float = 0.5
    n_marks: int = 4
    amplitude: float = 1.0
    seed: int = 0
    blowup_cap: float = 1e6
    u0: list = field(default=None)

    def __post_init__(self):
        if self.d < 3:
            raise ValueError("grid needs at least 3 interior nodes")
        if not (self.p1 > 1 and self.p2 > 1):
            raise ValueError("exponents must exceed 1")
        if not self.dt > 0 or not self.T > 0 or not self.length > 0:
            raise ValueError("dt, T and length must be positive")
        if self.sigma < 0 or self.jump_rate < 0 or self.n_marks < 1:
            raise ValueError("noise parameters out of range")
        if self.u0 is not None and len(self.u0) != self.d:
            raise ValueError(f"u0 has length {len(self.u0)}, expected {self.d}")

    @property
    def dx(self):
        return self.length / (self.d + 1)

    @property
    def n_steps(self):
        return int(round(self.T / self.dt))

    @property
    def grid(self):
        return self.dx * np.arange(1, self.d + 1)

    def initial(self):
        if self.u0 is not None:
            return np.asarray(self.u0, dtype=float)
        return self.amplitude * np.sin(np.pi * self.grid / self.length)

    def noise_off(self):
        return SpdeConfig(**{**asdict(self), "sigma": 0.0, "jump_rate": 0.0})

    def to_json(self):
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data):
        known = set(cls.__dataclass_fields__)
        extra = set(data) - known
        if extra:
            raise ValueError(f"unknown SpdeConfig fields: {sorted(extra)}")
        return cls(**data)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def space_family(cfg):
    """``H = L2(dx)``, ``V_1 = W1p1`` (zero boundary), ``V_2 = Lp2`` on the grid."""
    w = np.full(cfg.d, cfg.dx)
    return SpaceFamily(w, [
        SpaceDescriptor("W1p", cfg.p1, w, stencil=(-1.0, 1.0), spacing=cfg.dx),
        SpaceDescriptor("Lp", cfg.p2, w),
    ])


def difference_operator(cfg):
    """Backward differences ``(u_k - u_{k-1}) / dx``, ``k = 0..d``, with ``u_{-1} = u_d = 0``."""
    d, dx = cfg.d, cfg.dx
    D = np.zeros((d + 1, d))
    idx = np.arange(d)
    D[idx, idx] = 1.0 / dx
    D[idx + 1, idx] = -1.0 / dx
    return D


def flux(u, p1, cfg):
    """``|Du|^{p1-2} Du`` on the ``d + 1`` cell faces."""
    g = difference_operator(cfg) @ np.asarray(u, dtype=float)
    return np.sign(g) * np.abs(g) ** (p1 - 1.0)


def p_laplacian(u, p1, cfg):
    """Discrete ``div(|∇u|^{p1-2} ∇u)`` on interior nodes with zero boundary values."""
    if not p1 > 1:
        raise ValueError("p1 must exceed 1")
    return -difference_operator(cfg).T @ flux(u, p1, cfg)


def power_drift(u, p2):
    """Pointwise ``|u|^{p2-2} u``."""
    u = np.asarray(u, dtype=float)
    return np.sign(u) * np.abs(u) ** (p2 - 1.0)


def drift_dual_bounds(u, cfg):
    """Dominators ``(η_1, η_2)`` for the two drift values at ``u``.

    ``η_1`` is the ``L_{q1}(dx)`` norm of the flux, which bounds the
    ``W1p1``-dual norm by summation by parts; ``η_2`` is the exact
    ``L_{p2}``-dual norm of the power drift.
    """
    w_face = np.full(cfg.d + 1, cfg.dx)
    w = np.full(cfg.d, cfg.dx)
    q1, q2 = conjugate_exponent(cfg.p1), conjugate_exponent(cfg.p2)
    eta1 = _weighted_lp(flux(u, cfg.p1, cfg), q1, w_face)
    eta2 = _weighted_lp(power_drift(u, cfg.p2), q2, w)
    return eta1, eta2


def _stable(u, cfg):
    if cfg.p1 < 2:
        return True
    g = np.abs(difference_operator(cfg) @ u)
    coeff = 4.0 * (cfg.p1 - 1.0) * (g.max() ** (cfg.p1 - 2.0) if cfg.p1 > 2 else 1.0)
    return cfg.dt * coeff / cfg.dx ** 2 <= 2.0


@dataclass
class SpdeRun:
    """Output of a run: step times, states, the scenario and per-step norms."""

    config: SpdeConfig
    times: np.ndarray
    u: np.ndarray
    scenario: Scenario
    norm_w: np.ndarray
    norm_l: np.ndarray
    eta: np.ndarray

    @property
    def n_steps(self):
        return self.times.size - 1


def _package(cfg, u, drift1, drift2, eta, increments):
    """Scenario with drift values on ``(t_k, t_{k+1}]`` and ``h`` from the increments."""
    K = drift1.shape[0]
    times = cfg.dt * np.arange(K + 1)
    S = space_family(cfg)
    A = IncreasingDriver(times[1:], np.full(K, cfg.dt))
    h = MartingalePath.from_increments(times[1:], increments, u[0])
    breaks = times[1:K]
    d1 = DualStepProcess(breaks, drift1, 0, S=S, eta=eta[:, 0], check=False)
    d2 = DualStepProcess(breaks, drift2, 1, S=S, eta=eta[:, 1], check=False)
    scn = Scenario(S, A, h, [d1, d2], horizon=times[-1])
    norm_w = np.array([S.spaces[0].norm(x) for x in u])
    norm_l = np.array([S.spaces[1].norm(x) for x in u])
    return SpdeRun(cfg, times, u, scn, norm_w, norm_l, eta)


def _noise(u, cfg, rng, mark_mean):
    """One step of multiplicative Wiener plus compensated Poisson noise."""
    out = np.zeros(cfg.d)
    if cfg.sigma > 0:
        out += cfg.sigma * u * rng.normal(0.0, np.sqrt(cfg.dt), cfg.d)
    if cfg.jump_rate > 0:
        count = rng.poisson(cfg.jump_rate * cfg.dt)
        marks = rng.integers(1, cfg.n_marks + 1, count)
        out += cfg.gamma * u * (np.sum(1.0 / (1.0 + marks)) - cfg.jump_rate * cfg.dt * mark_mean)
    return out


def _simulate(cfg, rng, with_eta=True):
    K = cfg.n_steps
    mark_mean = float(np.mean(1.0 / (1.0 + np.arange(1, cfg.n_marks + 1))))
    u = np.empty((K + 1, cfg.d))
    u[0] = cfg.initial()
    drift1 = np.empty((K, cfg.d))
    drift2 = np.empty((K, cfg.d))
    eta = np.empty((K, 2))
    incs = np.empty((K, cfg.d))
    for k in range(K):
        uk = u[k]
        if not _stable(uk, cfg):
            raise BlowUpError(f"explicit step unstable at step {k}; reduce dt", k)
        drift1[k] = p_laplacian(uk, cfg.p1, cfg)
        drift2[k] = power_drift(uk, cfg.p2)
        if with_eta:
            eta[k] = drift_dual_bounds(uk, cfg)
        incs[k] = _noise(uk, cfg, rng, mark_mean)
        u[k + 1] = uk + (drift1[k] + drift2[k]) * cfg.dt + incs[k]
        if not np.all(np.isfinite(u[k + 1])) or np.abs(u[k + 1]).max() > cfg.blowup_cap:
            raise BlowUpError(f"state exceeded cap {cfg.blowup_cap:g} at step {k + 1}", k + 1)
    return u, drift1, drift2, eta, incs


def euler_run(cfg, rng=None):
    """Explicit Euler run packaged as a :class:`Scenario`.

    Raises :class:`BlowUpError` with the step index when the state leaves
    ``blowup_cap`` in sup norm or the explicit step violates the stability
    bound of the linearised p-Laplacian (``p1 >= 2``).
    """
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    return _package(cfg, *_simulate(cfg, rng))


def prescribed_run(cfg, states):
    """Scenario along a prescribed state sequence ``u_0, ..., u_K``.

    The drifts are evaluated at ``u_k`` as in the Euler scheme; ``h`` takes up
    whatever the drift step does not explain, so ``v(t_k) = u_k`` exactly.
    """
    u = np.asarray(states, dtype=float)
    if u.ndim != 2 or u.shape[1] != cfg.d or u.shape[0] < 2:
        raise ValueError(f"states must have shape (K+1, {cfg.d}) with K >= 1")
    drift1 = np.array([p_laplacian(x, cfg.p1, cfg) for x in u[:-1]])
    drift2 = np.array([power_drift(x, cfg.p2) for x in u[:-1]])
    eta = np.array([drift_dual_bounds(x, cfg) for x in u[:-1]])
    incs = np.diff(u, axis=0) - (drift1 + drift2) * cfg.dt
    return _package(cfg, u, drift1, drift2, eta, incs)


def amplitude_ramp_run(cfg, a_min=1e-2, a_max=1e2, steps=None):
    """Prescribed run ``u_k = a_k ψ`` with ``a_k`` geometric from ``a_min`` to ``a_max``.

    ``ψ`` is the first sine mode of the grid.
    """
    K = cfg.n_steps if steps is None else int(steps)
    psi = np.sin(np.pi * cfg.grid / cfg.length)
    amps = np.geomspace(a_min, a_max, K + 1)
    return prescribed_run(cfg, amps[:, None] * psi[None, :])


@dataclass
class IntegrabilityReport:
    """Hypothesis integrals against the cross term ``‖u‖_{W1p1} ‖u‖_{Lp2}^{p2-1}``."""

    p1: float
    p2: float
    integral_v1: float
    integral_v2: float
    eta_norm1: float
    eta_norm2: float
    cross_integral: float
    ratio: np.ndarray
    young_slack: np.ndarray
    gap: bool

    @property
    def hypotheses_finite(self):
        vals = (self.integral_v1, self.integral_v2, self.eta_norm1, self.eta_norm2)
        return bool(np.all(np.isfinite(vals)))

    @property
    def ratio_growth(self):
        r = self.ratio[self.ratio > 0]
        return float(r[-1] / r[0]) if r.size >= 2 else 1.0

    @property
    def ratio_monotone(self):
        return bool(np.all(np.diff(self.ratio) >= -1e-12 * np.abs(self.ratio[1:])))

    def as_dict(self):
        return {
            "p1": self.p1,
            "p2": self.p2,
            "integral_v1": self.integral_v1,
            "integral_v2": self.integral_v2,
            "eta_norm1": self.eta_norm1,
            "eta_norm2": self.eta_norm2,
            "cross_integral": self.cross_integral,
            "ratio_first": float(self.ratio[0]) if self.ratio.size else 0.0,
            "ratio_last": float(self.ratio[-1]) if self.ratio.size else 0.0,
            "ratio_growth": self.ratio_growth,
            "ratio_monotone": self.ratio_monotone,
            "hypotheses_finite": self.hypotheses_finite,
            "gap": self.gap,
        }


def integrability_report(run):
    """Integrals over the run's ``dA = Δt`` steps, sampled at ``u_k`` (``k < K``).

    ``ratio[k] = X Y^{p2-1} / (X^{p1} + Y^{p2})`` with ``X = ‖u_k‖_{W1p1}``,
    ``Y = ‖u_k‖_{Lp2}``.  ``young_slack[k]`` is
    ``X^{p1}/p1 + (1 + Y^{p2})/q1 - X Y^{p2-1}``; it is never negative when
    ``p1 >= p2``, and ``gap`` records whether some step has it negative.
    """
    cfg = run.config
    p1, p2 = cfg.p1, cfg.p2
    q1, q2 = conjugate_exponent(p1), conjugate_exponent(p2)
    X, Y = run.norm_w[:-1], run.norm_l[:-1]
    dt = cfg.dt
    cross = X * Y ** (p2 - 1.0)
    hyp = X ** p1 + Y ** p2
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(hyp > 0, cross / np.where(hyp > 0, hyp, 1.0), 0.0)
    slack = X ** p1 / p1 + (1.0 + Y ** p2) / q1 - cross
    return IntegrabilityReport(
        p1=p1,
        p2=p2,
        integral_v1=float(np.sum(X ** p1) * dt),
        integral_v2=float(np.sum(Y ** p2) * dt),
        eta_norm1=float((np.sum(run.eta[:, 0] ** q1) * dt) ** (1.0 / q1)),
        eta_norm2=float((np.sum(run.eta[:, 1] ** q2) * dt) ** (1.0 / q2)),
        cross_integral=float(np.sum(cross) * dt),
        ratio=ratio,
        young_slack=slack,
        gap=bool(np.any(slack < 0)),
    )


def noise_path_sampler(cfg, shift=0.0):
    """``generator(rng) -> MartingalePath``: the noise path ``h`` of an Euler run.

    ``shift`` is added to every increment, for checking that the
    mean-increment gate rejects a drifted ensemble.
    """

    times = cfg.dt * np.arange(1, cfg.n_steps + 1)

    def generator(rng):
        u, _, _, _, incs = _simulate(cfg, rng, with_eta=False)
        return MartingalePath.from_increments(times, incs + shift, u[0])

    return generator


def linear_oracle(cfg):
    """Noise-free ``p1 = p2 = 2`` states ``(I + Δt(L + I))^k u_0`` by dense matrix powers."""
    D = difference_operator(cfg)
    M = np.eye(cfg.d) + cfg.dt * (-D.T @ D + np.eye(cfg.d))
    u = [cfg.initial()]
    for _ in range(cfg.n_steps):
        u.append(M @ u[-1])
    return np.array(u)
