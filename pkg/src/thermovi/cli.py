"""Command-line experiment runner.

Subcommands ``simulate``, ``compare``, ``regularity`` and ``verify-structure``
operate on the mass-spring-gas benchmark described by a YAML config or a
bundled preset.  Exit codes: 0 success, 2 config error, 3 solver failure,
4 verification failure.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
import time
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import geometry
from .config import RunConfig, dump_config, load_config, preset
from .continuous import (
    ExactSolutionParams,
    exact_entropy,
    exact_internal_energy,
    exact_position,
    exact_temperature,
    rk4_trajectory,
)
from .errors import AssumptionViolation, ConfigError, InputError, ModelError, RangeError, RegimeError, StepFailure
from .integrators import SchemeOps, build_scheme, initial_velocity, initialize, regularity_report, run, windows
from .models import ThermoState, mass_spring_gas_model
from .records import columns, write_csv

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_VERIFY = 4

REGULARITY_SAMPLES = 10

COMPARE_COLUMNS = ("k", "t", "x", "x_ref", "x_err", "S", "S_ref", "S_err", "T", "T_ref", "T_err", "U", "U_ref", "U_err")


# --------------------------------------------------------------------------
# library-level experiment drivers
# --------------------------------------------------------------------------


def make_scheme(cfg: RunConfig, h: Optional[float] = None) -> SchemeOps:
    model = mass_spring_gas_model(cfg.mass_spring, cfg.gas, cfg.external_force)
    return build_scheme(cfg.scheme, model, cfg.h if h is None else h)


def simulate(cfg: RunConfig):
    """Integrate ``cfg.steps`` windows; returns ``(records, summary dict)``."""
    sc = make_scheme(cfg)
    t0 = time.perf_counter()
    init = initialize(sc, cfg.x0, cfg.x1, cfg.S0)
    recs = run(sc, init, cfg.steps)
    wall = time.perf_counter() - t0
    summary = {
        "max_rel_energy_err": max(r.rel_energy_err for r in recs),
        "final_S": recs[-1].S,
        "final_T": recs[-1].T,
        "wall_time": wall,
    }
    return recs, summary


@dataclass(frozen=True)
class Comparison:
    h: float
    t: np.ndarray
    x: np.ndarray
    x_ref: np.ndarray
    S: np.ndarray
    S_ref: np.ndarray
    T: np.ndarray
    T_ref: np.ndarray
    U: np.ndarray
    U_ref: np.ndarray
    reference: str

    def max_errors(self) -> dict[str, float]:
        return {
            "x": float(np.max(np.abs(self.x - self.x_ref))),
            "S": float(np.max(np.abs(self.S - self.S_ref))),
            "T": float(np.max(np.abs(self.T - self.T_ref))),
            "U": float(np.max(np.abs(self.U - self.U_ref))),
        }


def compare_at(cfg: RunConfig, h: float, n_windows: int, notices: Optional[list] = None) -> Comparison:
    """Run the scheme with step ``h`` and evaluate the reference at the same times.

    The reference starts from the continuous velocity consistent with the
    discrete initial window (discrete Legendre transform); it is the closed-form
    solution when the motion is underdamped and unforced, RK4 otherwise.
    """
    sc = make_scheme(cfg, h)
    model = sc.model
    init = initialize(sc, cfg.x0, cfg.x1, cfg.S0)
    ws = windows(sc, init, n_windows)
    t = np.arange(n_windows) * h
    x = np.array([w.q0 for w in ws])
    S = np.array([w.S0 for w in ws])
    T = np.array([model.temperature(w.q0, w.S0) for w in ws])
    U = np.array([model.internal(w.q0, w.S0) for w in ws])
    v0 = float(initial_velocity(sc, init))
    try:
        if cfg.external_force is not None and not cfg.external_force.is_zero:
            raise RegimeError("closed form excludes external forcing")
        ex = ExactSolutionParams(cfg.mass_spring, cfg.gas, cfg.x0, v0)
        x_ref = exact_position(ex, t)[0]
        S_ref, T_ref, U_ref = exact_entropy(ex, t), exact_temperature(ex, t), exact_internal_energy(ex, t)
        reference = "exact"
    except RegimeError as exc:
        if notices is not None:
            notices.append(f"notice: closed-form solution unavailable ({exc}); using RK4 reference at h={h:g}")
        ref = columns(rk4_trajectory(model, ThermoState(cfg.x0, v0, cfg.S0), h, n_windows - 1))
        x_ref, S_ref, T_ref, U_ref = ref["q"], ref["S"], ref["T"], ref["U"]
        reference = "rk4"
    return Comparison(h, t, x, np.asarray(x_ref), S, np.asarray(S_ref), T, np.asarray(T_ref), U, np.asarray(U_ref), reference)


def convergence_orders(coarse: Comparison, fine: Comparison) -> dict[str, float]:
    ec, ef = coarse.max_errors(), fine.max_errors()
    ratio = coarse.h / fine.h
    out = {}
    for key in ec:
        if ec[key] > 0.0 and ef[key] > 0.0:
            out[key] = math.log(ec[key] / ef[key]) / math.log(ratio)
        else:
            out[key] = float("nan")
    return out


def write_comparison_csv(cmp: Comparison, stream) -> int:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(COMPARE_COLUMNS)
    for k in range(len(cmp.t)):
        row = [str(k)]
        for a, b in ((cmp.x, cmp.x_ref), (cmp.S, cmp.S_ref), (cmp.T, cmp.T_ref), (cmp.U, cmp.U_ref)):
            row += [format(float(a[k]), ".17g"), format(float(b[k]), ".17g"), format(float(abs(a[k] - b[k])), ".17g")]
        writer.writerow([row[0], format(float(cmp.t[k]), ".17g")] + row[1:])
    return len(cmp.t)


def regularity_scan(cfg: RunConfig, samples: int = REGULARITY_SAMPLES):
    """Regularity reports at the initial window and at ``samples`` windows along the run."""
    sc = make_scheme(cfg)
    ws = windows(sc, initialize(sc, cfg.x0, cfg.x1, cfg.S0), cfg.steps)
    idx = sorted(set(np.linspace(0, len(ws) - 1, samples + 1).round().astype(int).tolist()))
    return [(k, regularity_report(sc, ws[k])) for k in idx]


def verify_structure(cfg: RunConfig, N: int, trials: int, mechanical: bool = False):
    """Seeded structure-identity checks at the initial chart point."""
    sc = make_scheme(cfg)
    rng = np.random.default_rng(cfg.seed)
    chart = np.array([cfg.x0, cfg.x1, cfg.S0])
    pairs = geometry.random_tangent_pairs(rng, chart.size, trials, mechanical=mechanical)
    return geometry.structure_sweep(sc, chart, N, pairs)


# --------------------------------------------------------------------------
# command handlers
# --------------------------------------------------------------------------


@contextmanager
def _output(path: Optional[Path]):
    if path is None:
        yield sys.stdout
        return
    try:
        fh = open(path, "w", newline="")
    except OSError as exc:
        raise ConfigError(f"cannot open output {path}: {exc}") from exc
    with fh:
        yield fh


def _info(path: Optional[Path]):
    # keep stdout clean when it carries CSV
    return sys.stderr if path is None else sys.stdout


def cmd_simulate(cfg: RunConfig, args) -> int:
    recs, summary = simulate(cfg)
    with _output(cfg.output) as fh:
        write_csv(recs, fh)
    out = _info(cfg.output)
    print(f"scheme {cfg.scheme.value}, lambda={cfg.lam:g}, h={cfg.h:g}, rows={len(recs)}", file=out)
    print(f"max rel_energy_err = {summary['max_rel_energy_err']:.6e}", file=out)
    print(f"final S = {summary['final_S']!r} J/K", file=out)
    print(f"final T = {summary['final_T']!r} K", file=out)
    print(f"wall time = {summary['wall_time']:.3f} s", file=out)
    return EXIT_OK


def cmd_compare(cfg: RunConfig, args) -> int:
    notices: list[str] = []
    coarse = compare_at(cfg, cfg.h, cfg.steps, notices)
    fine = compare_at(cfg, cfg.h / 2.0, 2 * (cfg.steps - 1) + 1, notices)
    with _output(cfg.output) as fh:
        write_comparison_csv(coarse, fh)
    out = _info(cfg.output)
    for msg in notices:
        print(msg, file=sys.stderr)
    print(f"scheme {cfg.scheme.value}, lambda={cfg.lam:g}, reference={coarse.reference}, horizon={(cfg.steps - 1) * cfg.h:g} s", file=out)
    ec, ef = coarse.max_errors(), fine.max_errors()
    orders = convergence_orders(coarse, fine)
    for key in ("x", "S", "T", "U"):
        print(f"max |{key} err|: h={ec[key]:.6e}  h/2={ef[key]:.6e}  order={orders[key]:.3f}", file=out)
    return EXIT_OK


def _fmt_matrix(M: np.ndarray) -> str:
    return "\n".join("    [" + ", ".join(f"{x: .10e}" for x in row) + "]" for row in np.atleast_2d(M))


def cmd_regularity(cfg: RunConfig, args) -> int:
    reports = regularity_scan(cfg)
    flagged = 0
    for k, rep in reports:
        status = "ok" if rep.invertible else "NEAR-SINGULAR"
        flagged += not rep.invertible
        print(f"window k={k} (t={k * cfg.h:g} s): det={rep.determinant:.10e} schur={np.array2string(np.asarray(rep.schur_entry), precision=10)} A22={rep.constraint_slope:.10e} [{status}]")
        print(_fmt_matrix(rep.matrix))
    print(f"{len(reports)} windows checked, {flagged} flagged")
    return EXIT_VERIFY if flagged else EXIT_OK


def cmd_verify_structure(cfg: RunConfig, args) -> int:
    N = args.N if args.N is not None else cfg.verify_N
    trials = args.trials if args.trials is not None else cfg.verify_trials
    if N < 1 or trials < 1:
        raise ConfigError("--N and --trials must be >= 1")
    tol = geometry.IDENTITY_TOL
    reports = verify_structure(cfg, N, trials)
    worst = max(r.relative for r in reports)
    print(f"scheme {cfg.scheme.value}, lambda={cfg.lam:g}, N={N}, trials={trials}, seed={cfg.seed}")
    print(f"max residual/scale = {worst:.3e} (tolerance {tol:g})")
    ok = worst <= tol
    if cfg.lam == 0.0:
        mech = verify_structure(cfg, N, trials, mechanical=True)
        mworst = max(r.relative for r in mech)
        print(f"mechanical reduction (entropy directions excluded): max residual/scale = {mworst:.3e}")
        ok = ok and mworst <= tol
    print("PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_VERIFY


COMMANDS = {
    "simulate": cmd_simulate,
    "compare": cmd_compare,
    "regularity": cmd_regularity,
    "verify-structure": cmd_verify_structure,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    src = common.add_mutually_exclusive_group()
    src.add_argument("--config", type=Path, help="YAML run configuration")
    src.add_argument("--preset", choices=("case1", "case2"), help="bundled configuration (default case1)")
    common.add_argument("--scheme", type=int, choices=(1, 2, 3))
    common.add_argument("--lambda", dest="lam", type=float, help="friction coefficient")
    common.add_argument("--steps", type=int)
    common.add_argument("--out", type=Path, help="output path (default stdout)")
    common.add_argument("--seed", type=int)
    common.add_argument("--dump-config", action="store_true", help="print the resolved config and exit")

    parser = argparse.ArgumentParser(prog="thermovi", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="integrate and write the trajectory CSV")
    sub.add_parser("compare", parents=[common], help="compare with the closed-form solution at h and h/2")
    sub.add_parser("regularity", parents=[common], help="regularity matrices along the run")
    p = sub.add_parser("verify-structure", parents=[common], help="check the discrete structure identity")
    p.add_argument("--N", type=int, help="number of windows in the flow (default from config)")
    p.add_argument("--trials", type=int, help="random tangent pairs (default from config)")
    return parser


def resolve_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config is not None else preset(args.preset or "case1")
    return cfg.with_overrides(scheme=args.scheme, lam=args.lam, steps=args.steps, output=args.out, seed=args.seed)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
    except (ConfigError, InputError, ModelError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.dump_config:
        sys.stdout.write(dump_config(cfg))
        return EXIT_OK
    try:
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (StepFailure, AssumptionViolation, RangeError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except geometry.NumericalError as exc:
        print(f"verification failure: {exc}", file=sys.stderr)
        return EXIT_VERIFY


if __name__ == "__main__":
    sys.exit(main())
