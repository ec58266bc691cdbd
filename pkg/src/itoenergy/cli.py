"""Command-line runner for the verification suites.

Every subcommand writes CSV tables and a ``summary.json`` into ``--out`` and
exits with status 0 only when all of its tolerances hold.  Status 1 signals a
tolerance breach (the failing seeds are printed), 2 a malformed invocation or
config, 3 an aborted SPDE run.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import energy, spaces
from .exceptions import BlowUpError
from .io import write_csv, write_json
from .processes import (
    IncreasingDriver,
    StepFunction,
    TimeChange,
    build_partitions,
    jump_square_sum,
    lipschitz_check,
    random_driver,
    random_step,
    squared_increment_sums,
    step_approximation,
    substitution_check,
)
from .scenario import Scenario, normalise_mass, one_jump_scenario, random_scenario
from .spde import SpdeConfig, amplitude_ramp_run, euler_run, integrability_report

__all__ = ["RunSpec", "SUBCOMMANDS", "build_parser", "parse_spec", "run", "main"]

SUBCOMMANDS = (
    "verify-identity",
    "converge-partitions",
    "lemma1-suite",
    "spde-demo",
    "integrability-demo",
    "dual-norm",
)

DEFAULT_TOL = {
    "verify-identity": 1e-9,
    "converge-partitions": 1e-12,
    "lemma1-suite": 1e-12,
    "spde-demo": 1e-9,
    "integrability-demo": 0.0,
    "dual-norm": 1e-6,
}

# ledger route used by verify-identity; tests swap it to inject faults
_ledger_table = energy.ledger_table


class ConfigError(ValueError):
    """The configuration file is unreadable or does not match its schema."""


@dataclass(frozen=True)
class RunSpec:
    subcommand: str
    out: Path
    config: Path = None
    seed: int = None
    n: int = None
    tol: float = None
    levels: int = None

    @property
    def tolerance(self):
        return DEFAULT_TOL[self.subcommand] if self.tol is None else self.tol


@dataclass
class Outcome:
    ok: bool
    summary: dict
    failing: list


def build_parser():
    parser = argparse.ArgumentParser(prog="itoenergy", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="subcommand", required=True, metavar="SUBCOMMAND")
    helps = {
        "verify-identity": "energy ledger and telescoping identity on N random scenarios",
        "converge-partitions": "correction sums K_n and step-approximation errors per level",
        "lemma1-suite": "substitution, Lipschitz and squared-increment sweeps",
        "spde-demo": "Euler run of the SPDE with per-step energy ledgers",
        "integrability-demo": "hypothesis integrals against the cross term on an amplitude ramp",
        "dual-norm": "convex-program dual norms against exhaustive decomposition search",
    }
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, help=helps[name])
        p.add_argument("--config", type=Path, default=None, help="JSON config")
        p.add_argument("--seed", type=int, default=None, help="root seed (unsigned 64-bit)")
        p.add_argument("--out", type=Path, default=Path("out"), help="output directory")
        p.add_argument("--n", type=int, default=None, help="sweep size")
        p.add_argument("--tol", type=float, default=None, help="override the tolerance")
        p.add_argument("--levels", type=int, default=None, help="partition levels")
    return parser


def parse_spec(argv):
    args = build_parser().parse_args(argv)
    if args.seed is not None and not 0 <= args.seed < 2 ** 64:
        raise ConfigError("--seed must be an unsigned 64-bit integer")
    if args.n is not None and args.n < 0:
        raise ConfigError("--n must be nonnegative")
    if args.levels is not None and args.levels < 1:
        raise ConfigError("--levels must be at least 1")
    return RunSpec(args.subcommand, args.out, args.config, args.seed, args.n, args.tol, args.levels)


def _load_config(spec):
    if spec.config is None:
        return None
    try:
        return json.loads(Path(spec.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {spec.config}: {exc}") from exc


def _scenario_from_config(data):
    try:
        return Scenario.from_dict(data)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"config is not a valid scenario: {exc}") from exc


def _spde_from_config(data, seed, **defaults):
    try:
        cfg = SpdeConfig.from_dict({**defaults, **(data or {})})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"config is not a valid SpdeConfig: {exc}") from exc
    if seed is not None:
        cfg = SpdeConfig.from_dict({**cfg.__dict__, "seed": seed})
    return cfg


# --- verify-identity -------------------------------------------------------

def _verify_one(scn, levels):
    ledgers = _ledger_table(scn)
    rel = max((abs(l.residual) / (1.0 + abs(l.lhs)) for l in ledgers), default=0.0)
    normed = normalise_mass(scn)
    P = build_partitions(normed.A, max(levels))
    defect = max((energy.telescoping_check(normed, P, n).max_defect for n in levels), default=0.0)
    return len(ledgers), rel, defect


def _verify_identity(spec, data):
    tol = spec.tolerance
    levels = [3 * k for k in range(1, (spec.levels or 4) + 1)]
    rows, failing = [], []
    if data is not None:
        cases = [("config", _scenario_from_config(data))]
    else:
        seed0 = 42 if spec.seed is None else spec.seed
        n = 200 if spec.n is None else spec.n
        cases = ((seed0 + k, random_scenario(seed0 + k)) for k in range(n))
    max_res = max_def = 0.0
    for label, scn in cases:
        count, rel, defect = _verify_one(scn, levels)
        ok = rel <= tol and defect <= 1e-10
        if not ok:
            failing.append(label)
        max_res, max_def = max(max_res, rel), max(max_def, defect)
        rows.append((label, count, rel, defect, ok))
    write_csv(spec.out / "verify_identity.csv",
              ["seed", "n_ledgers", "max_rel_residual", "max_telescoping_defect", "ok"], rows)
    summary = {"count": len(rows), "max_rel_residual": max_res, "max_telescoping_defect": max_def,
               "levels": levels, "tol": tol, "failing_seeds": failing}
    return Outcome(not failing, summary, failing)


# --- converge-partitions ---------------------------------------------------

def _converge_partitions(spec, data):
    tol = spec.tolerance
    max_level = spec.levels or 10
    if data is not None:
        scn, label = _scenario_from_config(data), "config"
    elif spec.seed is not None:
        scn, label = random_scenario(spec.seed), spec.seed
    else:
        scn, label = one_jump_scenario(), "one-jump"
    scn = normalise_mass(scn)
    P = build_partitions(scn.A, max_level)
    study = energy.correction_study(scn, P, scn.horizon, max_level)
    write_csv(spec.out / "correction.csv", ["level", "K_n", "gap"], study.rows())
    err_rows = []
    for n in range(1, max_level + 1):
        approx = step_approximation(scn.state, P, n, 2, scn.S, scn.A, terminal_time=scn.horizon)
        err_rows += [(n, i, float(e), 0.0) for i, e in enumerate(approx.errors)]
    write_csv(spec.out / "step_errors.csv", ["level", "i", "error", "target"], err_rows)
    final_gap = float(study.gap[-1])
    if scn.A.is_pure_jump:
        jumps = scn.A.jump_times[scn.A.jump_times <= scn.horizon]
        captured = P.capture_level(jumps)
        ok = captured is not None and final_gap <= tol * (1.0 + study.target)
    else:
        captured = None
        ok = bool(study.gap[-1] <= study.gap[0])
    summary = {"scenario": label, "target": study.target, "final_gap": final_gap,
               "capture_level": captured, "max_level": max_level, "tol": tol}
    return Outcome(ok, summary, [] if ok else [label])


# --- lemma1-suite ----------------------------------------------------------

def lemma1_sweep(seed, n, tol=1e-12, levels=12):
    """Rows ``(check, count, max_error, ok)`` for the three sweeps plus failing case indices.

    Substitution (both windows) and the Lipschitz bound run on every case;
    squared-increment sums on every tenth case whose driver is pure-jump, at
    ``levels`` dyadic levels, against the jump-square target.
    """
    children = np.random.SeedSequence(seed).spawn(max(n, 1))[:n]
    sub_err, lip_bad, sq_err, failing = 0.0, 0, 0.0, []
    sq_count = 0
    for k, child in enumerate(children):
        rng = np.random.default_rng(child)
        A = random_driver(rng, density=bool(rng.random() < 0.3))
        x = random_step(rng, A=A)
        t = float(rng.uniform(0.0, 1.2))
        case_bad = False
        for closed in (True, False):
            lhs, rhs = substitution_check(x, A, t, closed=closed)
            err = abs(lhs - rhs) / max(1.0, abs(lhs))
            sub_err = max(sub_err, err)
            case_bad |= err > tol
        B = TimeChange(A)
        s, u = np.sort(rng.uniform(0.0, 1.1 * A.total_mass, 2))
        if not lipschitz_check(B, s, u):
            lip_bad += 1
            case_bad = True
        if A.is_pure_jump and k % 10 == 0:
            # unit mass keeps the finest grid at 2^levels points
            An = A.scaled(1.0 / A.total_mass) if A.total_mass > 1 else A
            sq_count += 1
            sums = squared_increment_sums(x, An, levels, t)
            target = jump_square_sum(x, An, t)
            err = abs(sums[-1] - target) / max(1.0, target)
            sq_err = max(sq_err, err)
            case_bad |= err > tol
        if case_bad:
            failing.append(k)
    unit = IncreasingDriver([], [], segments=[(0.0, 1.0, 1.0)])
    decay = float(squared_increment_sums(StepFunction.constant(1.0), unit, levels, 1.0)[-1])
    rows = [
        ("substitution", n, sub_err, sub_err <= tol),
        ("lipschitz", n, float(lip_bad), lip_bad == 0),
        ("squared_increments_jumps", sq_count, sq_err, sq_err <= tol),
        ("squared_increments_density", 1, decay, decay < 1e-3),
    ]
    return rows, failing


def _lemma1_suite(spec, data):
    seed = 0 if spec.seed is None else spec.seed
    n = 1000 if spec.n is None else spec.n
    rows, failing = lemma1_sweep(seed, n, spec.tolerance, spec.levels or 12)
    write_csv(spec.out / "lemma1.csv", ["check", "count", "max_error", "ok"], rows)
    ok = all(r[-1] for r in rows)
    summary = {"seed": seed, "count": n, "checks": {r[0]: {"max_error": r[2], "ok": r[3]} for r in rows},
               "failing_cases": failing}
    return Outcome(ok, summary, [f"{seed}:{k}" for k in failing] or ([] if ok else [seed]))


# --- spde ------------------------------------------------------------------

def spde_ledger_rows(run):
    ledgers = energy.ledger_table(run.scenario, run.times)
    rows = [(l.t, run.norm_w[k], run.norm_l[k], *l.row()[1:]) for k, l in enumerate(ledgers)]
    worst = max(abs(l.residual) / (1.0 + abs(l.lhs)) for l in ledgers)
    return rows, worst


def correction_halving_ratio(cfg):
    """``term_correction(Δt) / term_correction(Δt/2)`` on noise-free runs."""
    quiet = cfg.noise_off()
    half = SpdeConfig.from_dict({**quiet.__dict__, "dt": quiet.dt / 2})
    c1 = energy.energy_ledger(euler_run(quiet).scenario, quiet.n_steps * quiet.dt).term_correction
    c2 = energy.energy_ledger(euler_run(half).scenario, half.n_steps * half.dt).term_correction
    return c1 / c2 if c2 > 0 else float("inf")


def _spde_demo(spec, data):
    cfg = _spde_from_config(data, spec.seed)
    tol = spec.tolerance
    run = euler_run(cfg)
    rows, worst = spde_ledger_rows(run)
    write_csv(spec.out / "spde_steps.csv", ["t", "norm_w1p1", "norm_lp2", *energy.LEDGER_FIELDS[1:]], rows)
    ratio = correction_halving_ratio(cfg)
    ok = worst <= tol and ratio >= 1.8
    summary = {"config": cfg.__dict__, "n_steps": run.n_steps, "max_rel_residual": worst,
               "correction_halving_ratio": ratio, "tol": tol}
    return Outcome(ok, summary, [] if ok else [cfg.seed])


def _integrability_demo(spec, data):
    cfg = _spde_from_config(data, spec.seed, p1=1.5, p2=4.0, sigma=0.0, jump_rate=0.0)
    run = amplitude_ramp_run(cfg)
    rep = integrability_report(run)
    rows = [(k, run.times[k], run.norm_w[k], run.norm_l[k], rep.ratio[k], rep.young_slack[k])
            for k in range(rep.ratio.size)]
    write_csv(spec.out / "integrability.csv", ["step", "t", "norm_w1p1", "norm_lp2", "ratio", "young_slack"], rows)
    if cfg.p1 < cfg.p2:
        ok = rep.hypotheses_finite and rep.ratio_monotone and rep.ratio_growth >= 10.0
    else:
        ok = rep.hypotheses_finite and not rep.gap
    summary = {"config": cfg.__dict__, **rep.as_dict()}
    return Outcome(ok, summary, [] if ok else [cfg.seed])


# --- dual-norm -------------------------------------------------------------

def random_dual_instance(rng):
    """``(w*, S)`` with ``d ∈ {1, 2}`` and two ``Lp`` spaces."""
    d = int(rng.integers(1, 3))
    hw = rng.uniform(0.5, 2.0, d)
    exps = rng.choice([1.0, 1.5, 2.0, 3.0], size=2)
    S = spaces.SpaceFamily(hw, [spaces.SpaceDescriptor("Lp", float(p), rng.uniform(0.5, 2.0, d)) for p in exps])
    return rng.normal(0.0, 1.0, d), S


def dual_norm_sweep(seed, n, tol=1e-6, resolution=400):
    children = np.random.SeedSequence(seed).spawn(max(n, 1))[:n]
    rows, failing = [], []
    for k, child in enumerate(children):
        w_star, S = random_dual_instance(np.random.default_rng(child))
        exact = spaces.dual_norm_intersection(w_star, S)
        brute, bound = spaces.dual_norm_bruteforce(w_star, S, resolution=resolution)
        ok = brute - bound - tol <= exact <= brute + tol
        rows.append((k, S.dim, exact, brute, bound, ok))
        if not ok:
            failing.append(k)
    # 1-D analytic value |c| / (a + b) for the norms a|x| and b|x|
    a, b, w_star = 2.0, 3.0, 5.0
    S1 = spaces.SpaceFamily([1.0], [spaces.SpaceDescriptor("Lp", 1.0, [a]), spaces.SpaceDescriptor("Lp", 2.0, [b ** 2])])
    analytic = abs(w_star) / (a + b)
    value = spaces.dual_norm_intersection([w_star], S1)
    ok1 = abs(value - analytic) <= 1e-4
    rows.append(("analytic", 1, value, analytic, 0.0, ok1))
    if not ok1:
        failing.append("analytic")
    return rows, failing


def _dual_norm(spec, data):
    seed = 0 if spec.seed is None else spec.seed
    n = 30 if spec.n is None else spec.n
    rows, failing = dual_norm_sweep(seed, n, spec.tolerance, resolution=400)
    write_csv(spec.out / "dual_norm.csv", ["instance", "d", "convex", "search", "search_error_bound", "ok"], rows)
    summary = {"seed": seed, "count": n, "failing_instances": failing,
               "max_abs_difference": max((abs(r[2] - r[3]) for r in rows), default=0.0)}
    return Outcome(not failing, summary, [f"{seed}:{k}" for k in failing])


_HANDLERS = {
    "verify-identity": _verify_identity,
    "converge-partitions": _converge_partitions,
    "lemma1-suite": _lemma1_suite,
    "spde-demo": _spde_demo,
    "integrability-demo": _integrability_demo,
    "dual-norm": _dual_norm,
}


def run(spec):
    """Execute ``spec``; returns the exit status."""
    if spec.subcommand not in _HANDLERS:
        print(f"error: unknown subcommand {spec.subcommand!r}", file=sys.stderr)
        return 2
    try:
        data = _load_config(spec)
        Path(spec.out).mkdir(parents=True, exist_ok=True)
        outcome = _HANDLERS[spec.subcommand](spec, data)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except BlowUpError as exc:
        print(f"error: run aborted at step {exc.step}: {exc}", file=sys.stderr)
        return 3
    write_json(spec.out / "summary.json", {"subcommand": spec.subcommand, "ok": outcome.ok, **outcome.summary})
    if outcome.ok:
        print(f"{spec.subcommand}: ok")
        return 0
    print(f"{spec.subcommand}: tolerance breach; failing seed(s): {', '.join(map(str, outcome.failing))}",
          file=sys.stderr)
    return 1


def main(argv=None):
    try:
        spec = parse_spec(sys.argv[1:] if argv is None else argv)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:
        return int(exc.code or 0)
    return run(spec)


if __name__ == "__main__":
    sys.exit(main())
