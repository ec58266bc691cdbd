"""Finite-dimensional Gelfand triples ``V = V_1 ∩ ... ∩ V_m ⊂ H ⊂ V*``.

Every element of ``H``, ``V`` and ``V*`` is stored as a plain coefficient
vector of length ``d`` (an "H-vector").  A dual element ``w*`` acts on
``φ ∈ V`` through the weighted ``H`` inner product, ``<w*, φ> = (w*, φ)``,
which is the discrete Riesz representation.

Two kinds of constituent space are supported:

``"Lp"``
    ``||φ|| = (Σ_j μ_j |φ_j|^p)^(1/p)`` with positive quadrature weights ``μ``.
``"W1p"``
    The ``Lp`` norm above plus the ``Lp`` norm of a finite-difference image
    ``Dφ`` of the zero-padded vector (a discrete ``W^1_p`` norm with
    homogeneous Dirichlet boundary).

Dual norms are computed exactly for ``Lp`` (conjugate-exponent norm) and by a
convex program for everything else, using the decomposition formula
``||w*||_{V*} = inf { max_a ||g_a||_* : Σ_a M_a^T g_a = w* }`` over the
"atoms" ``(M_a, p_a, μ_a)`` of the sum norm.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, optimize

from .exceptions import BudgetExceededError, DimensionError, UnsupportedError

__all__ = [
    "SpaceDescriptor",
    "SpaceFamily",
    "h_inner",
    "h_norm",
    "duality_pair",
    "v_norm",
    "v_norm_sum",
    "dual_norm_lp",
    "dual_norm",
    "dual_norm_upper_bound",
    "dual_norm_intersection",
    "dual_norm_bruteforce",
    "project",
    "conjugate_exponent",
]

KINDS = ("Lp", "W1p")


def conjugate_exponent(p):
    """Return ``q = p / (p - 1)`` with the convention ``1/0 = inf``."""
    p = float(p)
    if p < 1:
        raise ValueError(f"exponent must be >= 1, got {p}")
    if p == 1:
        return np.inf
    return p / (p - 1.0)


def _weighted_lp(x, p, w):
    x = np.abs(np.asarray(x, dtype=float))
    if np.isinf(p):
        return float(x.max()) if x.size else 0.0
    # scale first so that large p does not overflow
    s = x.max() if x.size else 0.0
    if s == 0.0:
        return 0.0
    return float(s * np.sum(w * (x / s) ** p) ** (1.0 / p))


def _atom_dual(g, p, w):
    """Dual norm of a coefficient vector ``g`` acting on ``L_p(w)`` by ``Σ g_j φ_j``."""
    q = conjugate_exponent(p)
    return _weighted_lp(np.asarray(g) / w, q, w)


@dataclass(frozen=True, eq=False)
class SpaceDescriptor:
    """One constituent space ``V_i`` of the intersection.

    Parameters
    ----------
    kind : {"Lp", "W1p"}
    p : float
        Integrability exponent, ``p >= 1``.
    weights : array_like
        Positive quadrature weights ``μ`` (length ``d``).
    stencil : tuple of float, optional
        Difference stencil applied to the zero-padded vector (``W1p`` only).
        The default ``(-1, 1)`` is the forward/backward difference.
    spacing : float, optional
        Grid spacing; the difference image is divided by it and its
        quadrature weights equal it.
    """

    kind: str
    p: float
    weights: np.ndarray
    stencil: tuple = (-1.0, 1.0)
    spacing: float = 1.0
    _diff: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown space kind {self.kind!r}; expected one of {KINDS}")
        if not np.isfinite(self.p) or self.p < 1:
            raise ValueError(f"exponent p must lie in [1, inf), got {self.p}")
        w = np.array(self.weights, dtype=float).ravel()
        if w.size == 0 or not np.all(w > 0) or not np.all(np.isfinite(w)):
            raise ValueError("grid weights must be finite and strictly positive")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "p", float(self.p))
        object.__setattr__(self, "stencil", tuple(float(s) for s in self.stencil))
        object.__setattr__(self, "spacing", float(self.spacing))
        if self.kind == "W1p":
            if self.spacing <= 0:
                raise ValueError("spacing must be positive")
            if len(self.stencil) < 2:
                raise ValueError("a difference stencil needs at least two coefficients")
            diff = _difference_matrix(w.size, self.stencil, self.spacing)
        else:
            diff = np.zeros((0, w.size))
        diff.setflags(write=False)
        object.__setattr__(self, "_diff", diff)

    @property
    def q(self):
        return conjugate_exponent(self.p)

    @property
    def dim(self):
        return self.weights.size

    @property
    def difference_matrix(self):
        """Matrix ``D`` with ``(Dφ)`` the stencil image of the zero-padded ``φ``."""
        return self._diff

    def atoms(self):
        """``(M, p, weights)`` triples whose norms sum to this space's norm."""
        out = [(np.eye(self.dim), self.p, self.weights)]
        if self.kind == "W1p":
            nu = np.full(self._diff.shape[0], self.spacing)
            out.append((self._diff, self.p, nu))
        return out

    def norm(self, phi):
        phi = np.asarray(phi, dtype=float)
        val = _weighted_lp(phi, self.p, self.weights)
        if self.kind == "W1p":
            val += _weighted_lp(self._diff @ phi, self.p, np.full(self._diff.shape[0], self.spacing))
        return val

    def to_dict(self):
        out = {"kind": self.kind, "p": self.p, "weights": self.weights.tolist()}
        if self.kind == "W1p":
            out["stencil"] = list(self.stencil)
            out["spacing"] = self.spacing
        return out

    @classmethod
    def from_dict(cls, data):
        return cls(
            kind=data["kind"],
            p=data["p"],
            weights=data["weights"],
            stencil=tuple(data.get("stencil", (-1.0, 1.0))),
            spacing=data.get("spacing", 1.0),
        )


def _difference_matrix(d, stencil, spacing):
    L = len(stencil)
    D = np.zeros((d + L - 1, d))
    for k in range(d + L - 1):
        for l, s in enumerate(stencil):
            j = k + l - (L - 1)
            if 0 <= j < d:
                D[k, j] = s / spacing
    return D


class SpaceFamily:
    """The discrete triple: ``H`` weights, constituent spaces, basis and constants.

    Parameters
    ----------
    h_weights : array_like
        Positive weights of the ``H`` inner product ``(x, y) = Σ w_j x_j y_j``.
    spaces : sequence of SpaceDescriptor
        The ``m`` constituent spaces; all must have dimension ``d``.

    Attributes
    ----------
    basis : ndarray, shape (d, d)
        Row ``k`` is the basis vector ``e_{k+1}``, obtained by Gram-Schmidt in
        the ``H`` inner product from the coordinate indicators.
    basis_constants : ndarray, shape (d,)
        ``c_k = max_i Σ_{j<=k} ||e_j||_{V_i}^2``.
    embedding_constant : float
        A constant ``C`` with ``|φ|_H <= C ||φ||_V`` for all ``φ``.
    """

    def __init__(self, h_weights, spaces):
        w = np.array(h_weights, dtype=float).ravel()
        if w.size == 0 or not np.all(w > 0) or not np.all(np.isfinite(w)):
            raise ValueError("H weights must be finite and strictly positive")
        spaces = tuple(spaces)
        if not spaces:
            raise ValueError("at least one constituent space is required")
        for s in spaces:
            if s.dim != w.size:
                raise DimensionError(f"space of dimension {s.dim} in a family of dimension {w.size}")
        w.setflags(write=False)
        self.h_weights = w
        self.spaces = spaces
        self.basis = _gram_schmidt(np.eye(w.size), w)
        self.basis.setflags(write=False)
        sq = np.array([[s.norm(e) ** 2 for e in self.basis] for s in spaces])
        self.basis_constants = np.cumsum(sq, axis=1).max(axis=0)
        self.basis_constants.setflags(write=False)
        self.embedding_constant = min(_embedding_bound(s, w) for s in spaces)

    @property
    def dim(self):
        return self.h_weights.size

    @property
    def m(self):
        return len(self.spaces)

    @property
    def exponents(self):
        return tuple(s.p for s in self.spaces)

    def __repr__(self):
        kinds = ", ".join(f"{s.kind}(p={s.p:g})" for s in self.spaces)
        return f"SpaceFamily(d={self.dim}, spaces=[{kinds}])"

    def to_dict(self):
        return {
            "dim": self.dim,
            "h_weights": self.h_weights.tolist(),
            "spaces": [s.to_dict() for s in self.spaces],
        }

    @classmethod
    def from_dict(cls, data):
        fam = cls(data["h_weights"], [SpaceDescriptor.from_dict(s) for s in data["spaces"]])
        if "dim" in data and int(data["dim"]) != fam.dim:
            raise DimensionError(f"declared dim {data['dim']} does not match weights of length {fam.dim}")
        return fam

    @classmethod
    def uniform_lp(cls, d, exponents, weight=1.0):
        """Family of ``Lp`` spaces on a grid with constant weights."""
        w = np.full(d, float(weight))
        return cls(w, [SpaceDescriptor("Lp", p, w) for p in exponents])


def _gram_schmidt(vectors, w):
    out = []
    for v in vectors:
        u = np.array(v, dtype=float)
        for e in out:
            u = u - np.sum(w * u * e) * e
        out.append(u / np.sqrt(np.sum(w * u * u)))
    return np.array(out)


def _embedding_bound(space, w):
    # |φ|_H <= sqrt(max w) |φ|_2 <= sqrt(max w) d^(1/2-1/p)_+ |φ|_p <= ... / min(μ)^(1/p)
    d = w.size
    p = space.p
    return float(np.sqrt(w.max()) * d ** max(0.0, 0.5 - 1.0 / p) / space.weights.min() ** (1.0 / p))


def _check(x, S):
    x = np.asarray(x, dtype=float)
    if x.shape != (S.dim,):
        raise DimensionError(f"expected a vector of length {S.dim}, got shape {x.shape}")
    return x


def h_inner(x, y, S):
    """Weighted inner product ``(x, y)`` of ``H``."""
    x = _check(x, S)
    y = _check(y, S)
    return float(np.sum(S.h_weights * x * y))


def h_norm(x, S):
    return float(np.sqrt(max(h_inner(x, x, S), 0.0)))


def duality_pair(w_star, phi, S):
    """``<w*, φ>`` for a dual element given by its ``H`` representative."""
    return h_inner(w_star, phi, S)


def v_norm(phi, i, S):
    """Norm of ``φ`` in the constituent space ``V_i``."""
    return S.spaces[i].norm(_check(phi, S))


def v_norm_sum(phi, S):
    """Norm of ``φ`` in the intersection, ``Σ_i ||φ||_{V_i}``."""
    phi = _check(phi, S)
    return sum(s.norm(phi) for s in S.spaces)


def dual_norm_lp(w_star, i, S):
    """Closed-form dual norm ``||w*||_{V_i*}`` for an ``Lp`` space.

    The functional ``φ ↦ Σ_j w_j w*_j φ_j`` has dual norm
    ``|| w w* / μ ||_{L_q(μ)}`` with ``q`` the conjugate exponent.
    """
    w_star = _check(w_star, S)
    space = S.spaces[i]
    if space.kind != "Lp":
        raise UnsupportedError(
            f"space {i} is {space.kind}; no closed-form dual norm, use dual_norm or dual_norm_intersection"
        )
    return _atom_dual(S.h_weights * w_star, space.p, space.weights)


def _extremal_lp(w_star, i, S):
    """A unit vector of ``V_i`` (``Lp`` kind) attaining the dual norm of ``w*``."""
    space = S.spaces[i]
    c = S.h_weights * _check(w_star, S)
    mu = space.weights
    a = c / mu
    if not np.any(a):
        return np.zeros(S.dim)
    if space.p == 1:
        j = int(np.argmax(np.abs(a)))
        phi = np.zeros(S.dim)
        phi[j] = np.sign(a[j]) / mu[j]
        return phi
    q = space.q
    phi = np.sign(a) * np.abs(a) ** (q - 1.0)
    return phi / space.norm(phi)


def dual_norm(w_star, i, S, tol=1e-9):
    """Exact dual norm in ``V_i*`` for either kind of space."""
    space = S.spaces[i]
    if space.kind == "Lp":
        return dual_norm_lp(w_star, i, S)
    return _solve_decomposition(S.h_weights * _check(w_star, S), space.atoms(), tol)


def dual_norm_upper_bound(w_star, i, S):
    """Cheap certified upper bound on ``||w*||_{V_i*}``.

    For ``Lp`` spaces the exact value.  For ``W1p`` the smaller of two feasible
    decompositions: everything on the function atom, or everything on the
    difference atom (least-squares representer shifted optimally along the
    null space of ``D^T``).
    """
    space = S.spaces[i]
    c = S.h_weights * _check(w_star, S)
    if space.kind == "Lp":
        return _atom_dual(c, space.p, space.weights)
    bound = _atom_dual(c, space.p, space.weights)
    D = space.difference_matrix
    nu = np.full(D.shape[0], space.spacing)
    g0, *_ = np.linalg.lstsq(D.T, c, rcond=None)
    if not np.allclose(D.T @ g0, c, rtol=1e-10, atol=1e-12 * max(1.0, np.abs(c).max())):
        return bound
    N = linalg.null_space(D.T)
    if N.shape[1] == 0:
        return min(bound, _atom_dual(g0, space.p, nu))

    def f(a):
        return _atom_dual(g0 + N @ np.atleast_1d(a), space.p, nu)

    if N.shape[1] == 1:
        scale = 10.0 * (np.linalg.norm(g0) + np.linalg.norm(c)) * np.sqrt(g0.size) + 1e-300
        res = optimize.minimize_scalar(f, bounds=(-scale, scale), method="bounded",
                                       options={"xatol": 1e-12 * scale})
        best = min(res.fun, f(0.0))
    else:
        res = optimize.minimize(f, np.zeros(N.shape[1]), method="Powell")
        best = min(res.fun, f(np.zeros(N.shape[1])))
    return min(bound, float(best))


def _solve_decomposition(c, atoms, tol=1e-9):
    """``inf { max_a ||g_a||_* : Σ_a M_a^T g_a = c }`` as a conic program."""
    import cvxpy as cp

    c = np.asarray(c, dtype=float)
    scale = np.abs(c).max() if c.size else 0.0
    if scale == 0.0:
        return 0.0
    if len(atoms) == 1 and atoms[0][0].shape[0] == atoms[0][0].shape[1] and np.array_equal(atoms[0][0], np.eye(c.size)):
        M, p, w = atoms[0]
        return _atom_dual(c, p, w)
    t = cp.Variable()
    gs = [cp.Variable(M.shape[0]) for M, _, _ in atoms]
    cons = [sum(M.T @ g for (M, _, _), g in zip(atoms, gs)) == c / scale]
    for (M, p, w), g in zip(atoms, gs):
        q = conjugate_exponent(p)
        if np.isinf(q):
            cons.append(cp.norm_inf(cp.multiply(1.0 / w, g)) <= t)
        else:
            cons.append(cp.pnorm(cp.multiply(w ** (1.0 / q - 1.0), g), q) <= t)
    prob = cp.Problem(cp.Minimize(t), cons)
    try:
        prob.solve(solver=cp.CLARABEL, tol_gap_abs=tol, tol_gap_rel=tol, tol_feas=tol)
    except (cp.error.SolverError, TypeError):
        prob.solve(solver=cp.SCS, eps=tol)
    if prob.status not in ("optimal", "optimal_inaccurate"):
        raise RuntimeError(f"dual-norm program ended with status {prob.status}")
    # certify: evaluate the objective exactly at the returned decomposition
    vals = [_atom_dual(np.asarray(g.value), p, w) for (M, p, w), g in zip(atoms, gs)]
    resid = c / scale - sum(M.T @ np.asarray(g.value) for (M, _, _), g in zip(atoms, gs))
    if np.abs(resid).max() > 1e-6:
        raise RuntimeError("dual-norm program returned an infeasible decomposition")
    return float(max(vals)) * scale


def dual_norm_intersection(w_star, S, tol=1e-9):
    """Dual norm of ``w*`` in ``V*`` for ``V = V_1 ∩ ... ∩ V_m`` with the sum norm.

    Computes ``inf { max_i ||w_i*||_{V_i*} : w* = Σ_i w_i* }`` by solving the
    equivalent conic program over all norm atoms.  For ``m = 1`` with an
    ``Lp`` space the closed form is returned.
    """
    w_star = _check(w_star, S)
    if S.m == 1 and S.spaces[0].kind == "Lp":
        return dual_norm_lp(w_star, 0, S)
    atoms = [a for s in S.spaces for a in s.atoms()]
    return _solve_decomposition(S.h_weights * w_star, atoms, tol)


def dual_norm_bruteforce(w_star, S, resolution=32, budget=2_000_000):
    """Exhaustive grid search over decompositions ``w* = Σ_i w_i*``.

    Only ``Lp`` spaces.  Coordinate ``j`` of each part is restricted to
    fractions ``k / resolution`` of the coordinate ``j`` of ``w*`` (no loss,
    since moving a part away from ``[0, w*_j]`` increases every weighted norm).

    Returns
    -------
    value : float
        Smallest ``max_i ||w_i*||`` on the grid (an upper bound on the infimum).
    error_bound : float
        ``value - error_bound`` is a lower bound on the infimum.

    Raises
    ------
    BudgetExceededError
        If the grid has more than ``budget`` points.
    """
    w_star = _check(w_star, S)
    if any(s.kind != "Lp" for s in S.spaces):
        raise UnsupportedError("brute-force decomposition search supports Lp spaces only")
    c = S.h_weights * w_star
    m, d = S.m, S.dim
    if not np.any(c):
        return 0.0, 0.0
    if m == 1:
        return dual_norm_lp(w_star, 0, S), 0.0
    # fractions of each coordinate assigned to spaces 0..m-2 (rest to m-1)
    tuples = np.array([t for t in itertools.product(range(resolution + 1), repeat=m - 1)
                       if sum(t) <= resolution], dtype=float) / resolution
    n_points = tuples.shape[0] ** d
    if d * n_points > budget:
        raise BudgetExceededError(
            f"grid has {n_points} points in dimension {d} (budget {budget}); "
            "lower d, m or the resolution"
        )
    fracs = np.column_stack([tuples, 1.0 - tuples.sum(axis=1)])  # (T, m)
    norms = []
    for i, s in enumerate(S.spaces):
        q = s.q
        acc = np.zeros(())
        for j in range(d):
            a = np.abs(fracs[:, i] * c[j] / s.weights[j])
            contrib = a if np.isinf(q) else s.weights[j] * a ** q
            acc = (np.maximum if np.isinf(q) else np.add).outer(acc, contrib) if acc.ndim else contrib
        norms.append(acc if np.isinf(q) else acc ** (1.0 / q))
    value = float(np.max(np.stack(norms), axis=0).min())
    step = (m - 1) * np.abs(c) / resolution
    error_bound = max(_atom_dual(step, s.p, s.weights) for s in S.spaces)
    return value, float(error_bound)


def project(phi, k, S):
    """Orthogonal projection of ``φ`` onto ``span(e_1, ..., e_k)`` in ``H``."""
    phi = _check(phi, S)
    if not 0 <= k <= S.dim:
        raise ValueError(f"projection index k={k} outside [0, {S.dim}]")
    if k == 0:
        return np.zeros(S.dim)
    E = S.basis[:k]
    coeff = E @ (S.h_weights * phi)
    return coeff @ E
