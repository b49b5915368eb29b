"""Command-line front end.

    vhrd r0|equilibria|simulate|sweep|ode|verify --config FILE --out DIR

Exit codes: 0 success, 2 config error, 3 solver failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .dynamics import run_until_steady
from .equilibria import (EquilibriumSet, compute_endemic, compute_vhat, logistic_residual,
                         steady_residual)
from .errors import ConfigError, ConvergenceError, PositivityError, StepRejected
from .linalg import cooperative_principal_eigenvalue
from .ode import ode_equilibria, ode_r0, ode_run, ode_verdict
from .r0 import compute_r0_direct, diffusion_limit_references, spectral_report
from .scenario import Scenario, load_scenario
from .state import SimState

log = logging.getLogger("vhrd")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 2, 3
VERIFY_TOL = 1e-8

SWEEP_COLUMNS = ("value", "r0_direct", "kappa0", "verdict", "limit_large", "limit_small")
ODE_COLUMNS = ("t", "h_i", "v_u", "v_i", "v_dev")


def fmt(x) -> str:
    """17 significant digits, fixed layout."""
    return format(float(x), ".16e")


def write_csv(path: Path, header, rows, footer=()):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(v if isinstance(v, str) else fmt(v) for v in row))
    lines.extend(footer)
    path.write_text("\n".join(lines) + "\n")


def read_csv(path: Path) -> tuple[list[str], np.ndarray]:
    lines = [ln for ln in path.read_text().splitlines() if ln and not ln.startswith("#")]
    header = lines[0].split(",")
    data = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
    return header, data


def _coord_columns(grid):
    xy = grid.coordinates
    names = ["x", "y"][:grid.dim]
    return names, [xy[:, k] for k in range(grid.dim)]


def _equilibria(scn: Scenario, coeffs):
    tol = scn.solver.eq_tol
    vhat = compute_vhat(coeffs.delta2, coeffs.beta, coeffs.mu, tol=tol)
    r0 = compute_r0_direct(coeffs, vhat, tol=scn.solver.eig_tol)
    endemic = compute_endemic(coeffs, vhat, tol=tol, r0=r0)
    n = coeffs.grid.size
    e2 = None if endemic is None else SimState(endemic.h_i.values, endemic.v_u.values, endemic.v_i.values)
    eqs = EquilibriumSet(SimState.zeros(n), SimState(np.zeros(n), vhat.values, np.zeros(n)), e2, r0, vhat)
    return eqs, endemic


def cmd_r0(scn: Scenario, out: Path) -> int:
    coeffs = scn.build_coefficients()
    vhat = compute_vhat(coeffs.delta2, coeffs.beta, coeffs.mu, tol=scn.solver.eq_tol)
    row = spectral_report(coeffs, vhat, tol=scn.solver.eig_tol).as_row()
    write_csv(out / "r0.csv", list(row), [list(row.values())])
    for key, value in row.items():
        print(f"{key} = {value:.6f}")
    return EXIT_OK


def cmd_equilibria(scn: Scenario, out: Path) -> int:
    coeffs = scn.build_coefficients()
    eqs, endemic = _equilibria(scn, coeffs)
    names, cols = _coord_columns(coeffs.grid)
    header = names + ["vhat"]
    cols = cols + [eqs.vhat.values]
    if eqs.e2 is not None:
        header += ["h_i_hat", "v_u_hat", "v_i_hat"]
        cols += [eqs.e2.h_i, eqs.e2.v_u, eqs.e2.v_i]
    write_csv(out / "equilibria.csv", header, zip(*cols))
    meta = {"r0_direct": fmt(eqs.r0_context), "equilibria": list(eqs.candidates())}
    if endemic is not None:
        meta.update(iterations=endemic.iterations, c2=fmt(endemic.c2), residual=fmt(endemic.residual))
    (out / "equilibria.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    print(f"R0 = {eqs.r0_context:.6f}; equilibria: {', '.join(eqs.candidates())}")
    return EXIT_OK


def cmd_verify(scn: Scenario, out: Path) -> int:
    """Re-read ``equilibria.csv`` and check the steady-state residuals."""
    coeffs = scn.build_coefficients()
    path = out / "equilibria.csv"
    if not path.exists():
        raise ConfigError(f"{path}: not found; run 'vhrd equilibria' first")
    header, data = read_csv(path)
    if data.shape[0] != coeffs.grid.size:
        raise ConfigError(f"{path}: {data.shape[0]} rows, grid has {coeffs.grid.size} nodes")
    col = {name: data[:, k] for k, name in enumerate(header)}
    residuals = {"vhat": float(np.abs(logistic_residual(coeffs.delta2, coeffs.beta, coeffs.mu, col["vhat"])).max())}
    if "h_i_hat" in col:
        state = SimState(col["h_i_hat"], col["v_u_hat"], col["v_i_hat"])
        residuals["E2"] = float(steady_residual(coeffs, state).max())
    ok = all(r < VERIFY_TOL for r in residuals.values())
    for name, r in residuals.items():
        print(f"{name}: residual {r:.3e} {'ok' if r < VERIFY_TOL else 'FAIL'}")
    return EXIT_OK if ok else EXIT_SOLVER


def _nearest_snapshots(record, times):
    if not times:
        return []
    steps = sorted(record.snapshots)
    chosen = []
    for t in times:
        step = min(steps, key=lambda s: abs(record.snapshots[s].t - t))
        if step not in chosen:
            chosen.append(step)
    return chosen


def cmd_simulate(scn: Scenario, out: Path) -> int:
    grid = scn.build_grid()
    coeffs = scn.build_coefficients(grid)
    initial = scn.build_initial(grid)
    eqs, _ = _equilibria(scn, coeffs)
    sv = scn.solver
    record, verdict = run_until_steady(initial, coeffs, dt=sv.dt, horizon=sv.horizon, settle_tol=sv.settle_tol,
                                       equilibria=eqs, sample_every=sv.sample_every,
                                       keep_snapshots=bool(sv.snapshot_times), classify_tol=sv.classify_tol)
    write_csv(out / "trajectory.csv", record.COLUMNS, record.rows(), footer=[f"# verdict: {verdict}"])
    names, cols = _coord_columns(grid)
    for k, step in enumerate(_nearest_snapshots(record, sv.snapshot_times)):
        snap = record.snapshots[step]
        write_csv(out / f"snapshot_{k:03d}.csv", names + ["h_i", "v_u", "v_i"],
                  zip(*cols, snap.h_i, snap.v_u, snap.v_i), footer=[f"# t: {fmt(snap.t)}"])
    print(f"verdict: {verdict} at t = {record.final.t:.6g} ({'settled' if record.settled else 'horizon reached'})")
    return EXIT_OK


def _sweep_row(scn: Scenario, base, value: float):
    coeffs = scn.sweep_coefficients(base, value)
    sv = scn.solver
    vhat = compute_vhat(coeffs.delta2, coeffs.beta, coeffs.mu, tol=sv.eq_tol)
    r0 = compute_r0_direct(coeffs, vhat, tol=sv.eig_tol)
    kappa0 = cooperative_principal_eigenvalue(coeffs, vhat, tol=sv.eig_tol).value
    large, small = diffusion_limit_references(coeffs)
    verdict = "-"
    if scn.sweep.simulate:
        initial = scn.build_initial(coeffs.grid)
        endemic = compute_endemic(coeffs, vhat, tol=sv.eq_tol, r0=r0)
        n = coeffs.grid.size
        e2 = None if endemic is None else SimState(endemic.h_i.values, endemic.v_u.values, endemic.v_i.values)
        eqs = EquilibriumSet(SimState.zeros(n), SimState(np.zeros(n), vhat.values, np.zeros(n)), e2, r0, vhat)
        _, verdict = run_until_steady(initial, coeffs, dt=sv.dt, horizon=sv.horizon, settle_tol=sv.settle_tol,
                                      equilibria=eqs, sample_every=sv.sample_every, classify_tol=sv.classify_tol)
    return [value, r0, kappa0, verdict, large, small]


def sweep_threads() -> int:
    raw = os.environ.get("VHRD_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"VHRD_THREADS: not an integer: {raw!r}") from None
    if n < 1:
        raise ConfigError("VHRD_THREADS: must be >= 1")
    return n


def cmd_sweep(scn: Scenario, out: Path) -> int:
    if scn.sweep is None:
        raise ConfigError("sweep: this command needs a sweep block")
    if scn.sweep.simulate and scn.initial is None:
        raise ConfigError("sweep.simulate needs initial-condition profiles")
    base = scn.build_coefficients()
    values = [float(v) for v in scn.sweep.values]
    threads = min(sweep_threads(), len(values))
    if threads == 1:
        rows = [_sweep_row(scn, base, v) for v in values]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            # map preserves sweep order regardless of completion order
            rows = list(pool.map(lambda v: _sweep_row(scn, base, v), values))
    write_csv(out / "sweep.csv", SWEEP_COLUMNS, rows, footer=[f"# parameter: {scn.sweep.parameter}"])
    for row in rows:
        print(f"{scn.sweep.parameter}={row[0]:g}  R0={row[1]:.6f}  kappa0={row[2]:+.6f}  {row[3]}")
    return EXIT_OK


def cmd_ode(scn: Scenario, out: Path) -> int:
    p, state = scn.ode_setup()
    spec = scn.ode
    dt = spec.dt if spec else 0.01
    horizon = spec.horizon if spec else 200.0
    settle = spec.settle_tol if spec else 1e-10
    traj = ode_run(state, p, dt, horizon, settle_tol=settle)
    n = traj.states.sum(axis=1) - traj.states[:, 0]
    rows = [(t, *y, abs(nv - p.capacity)) for t, y, nv in zip(traj.times, traj.states, n)]
    threshold = 1e-6 if settle is None else max(1e-6, 20 * settle)
    verdict = ode_verdict(traj.final, p, threshold)
    write_csv(out / "ode_trajectory.csv", ODE_COLUMNS, rows,
              footer=[f"# r0: {fmt(ode_r0(p))}", f"# verdict: {verdict}"])
    ss2 = ode_equilibria(p)[2]
    print(f"R0 = {ode_r0(p):.6f}; verdict: {verdict}" + ("" if ss2 is None else
          f"; ss2 = ({ss2.h_i:.6f}, {ss2.v_u:.6f}, {ss2.v_i:.6f})"))
    return EXIT_OK


COMMANDS = {
    "r0": cmd_r0,
    "equilibria": cmd_equilibria,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "ode": cmd_ode,
    "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vhrd", description="Vector-host reaction-diffusion toolkit")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="scenario JSON file")
    parser.add_argument("--out", required=True, help="output directory (created if missing)")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        scn = load_scenario(args.config)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](scn, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConvergenceError, PositivityError, StepRejected) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
