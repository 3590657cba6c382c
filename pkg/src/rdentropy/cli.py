"""Command-line interface: ``rdentropy {analyze,equilibrium,simulate,probe,sweep}``.

Exit codes: 0 success, 2 invalid input, 3 numerical-quality failure,
4 solver failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .entropy import fit_decay_rate
from .equilibrium import EquilibriumError, complex_balance_residual, find_cbe, special_equilibrium
from .network import NetworkError, check_assumption_A, conserved_totals, linkage_decompose, profile_consistency
from .probes import SamplingError, SweepAborted, eed_ratio_probe, omega_sweep
from .scenario import PRESETS, Scenario, ScenarioError
from .simulate import NumericalQualityError, SolverBreakdown, StepRejected, epsilon_regularized_run, simulate

EXIT_OK, EXIT_INVALID, EXIT_QUALITY, EXIT_SOLVER = 0, 2, 3, 4

# steady state: sup-norm change per unit time below STEADY_RATE;
# spatially non-constant: some species varies by more than NONCONSTANT_RANGE
STEADY_RATE = 1e-8
NONCONSTANT_RANGE = 1e-3

log = logging.getLogger("rdentropy")


class CommandFailed(Exception):
    def __init__(self, code: int, message: str, results: dict | None = None):
        super().__init__(message)
        self.code = code
        self.results = results or {}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else str(f)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _equilibrium(scn: Scenario, net, totals):
    """(u_inf, details) using the closed form for the special network if asked."""
    res = find_cbe(net, totals)
    details = {"find_cbe": res.to_dict()}
    if scn.get("equilibrium.method", "cbe") == "special":
        if net.m != 3 or not np.allclose(net.cons_basis, [[4, 2, 1]]):
            raise ScenarioError("equilibrium.method = special needs the S1 <=> 2 S2, S2 <=> 2 S3 network")
        u = np.array(special_equilibrium(float(totals[0])))
        details["special"] = u.tolist()
        details["agreement"] = float(np.max(np.abs(u - res.u_inf)))
        return u, details
    if not res.converged:
        raise EquilibriumError(f"equilibrium solve did not converge (residual {res.cb_residual:.3e})")
    return res.u_inf, details


def _totals(scn: Scenario, res, override=None):
    if override is not None:
        return np.array(override, dtype=float)
    given = scn.floats("equilibrium.totals")
    if given is not None:
        return np.array(given)
    return conserved_totals(res.net, res.u0.u, res.grid)


def cmd_analyze(scn: Scenario, res, args) -> tuple[dict, list[str]]:
    net = res.net
    ok, bad = check_assumption_A(net)
    profiles = profile_consistency(net)
    warnings = []
    if not ok:
        warnings.append("assumption A fails: some reactions join different strongly connected components")
    inconsistent = {l: p for l, p in profiles.items() if len(p) != 1}
    if inconsistent:
        warnings.append("some linkage components mix several rate profiles")
    labels = linkage_decompose(net)
    comps = []
    for c in sorted(set(labels.tolist())):
        comps.append([net.complexes[i].label(net.species) for i in np.flatnonzero(labels == c)])
    results = {
        "species": list(net.species),
        "n_species": net.m,
        "n_complexes": len(net.complexes),
        "n_reactions": net.n_reactions,
        "reactions": [
            {"label": net.reaction_label(r), "beta": rx.beta, "profile": rx.profile_id, "component": rx.component}
            for r, rx in enumerate(net.reactions)
        ],
        "stoich_rank": int(np.linalg.matrix_rank(net.stoich)) if net.n_reactions else 0,
        "conservation_basis": net.cons_basis.tolist(),
        "linkage_classes": comps,
        "reaction_components": [[rng.start, rng.stop] for rng in net.components],
        "assumption_A": ok,
        "assumption_A_violations": [net.reaction_label(r) for r in bad],
        "profiles_per_component": {str(k): v for k, v in profiles.items()},
        "profiles_consistent": not inconsistent,
        "mask_measures": {p: m.measure for p, m in res.masks.items()},
    }
    return results, warnings


def cmd_equilibrium(scn: Scenario, res, args) -> tuple[dict, list[str]]:
    totals = _totals(scn, res, args.totals)
    u, details = _equilibrium(scn, res.net, totals)
    resid = complex_balance_residual(res.net, u)
    results = {
        "totals": totals.tolist(),
        "u_inf": u.tolist(),
        "cb_residual_max": float(np.max(np.abs(resid), initial=0.0)),
        "cons_residual_max": float(np.max(np.abs(res.net.cons_basis @ u - totals), initial=0.0)),
        "strictly_positive": bool(u.min() > 0),
        **details,
    }
    warnings = [] if u.min() > 0 else ["equilibrium is not strictly positive"]
    return results, warnings


def _summary(traj, fit_window=(0.2, 0.8)) -> dict:
    out = {
        "t_final": float(traj.times[-1]),
        "records": int(len(traj.times)),
        "E_initial": float(traj.E[0]),
        "E_final": float(traj.E[-1]),
        "final_l1_dist": traj.l1_dist[-1].tolist(),
        "conservation_drift": traj.conservation_drift(),
        "clamped_mass": float(traj.clamped_mass[-1]),
        "min_concentration": float(traj.min_u.min()),
        "final_change_rate": float(traj.change_rate[-1]),
        "final_spatial_range": (traj.final.u.max(axis=1) - traj.final.u.min(axis=1)).tolist(),
        "flag": traj.flag,
        "u_inf": traj.u_inf.tolist(),
    }
    spread = max(out["final_spatial_range"])
    out["steady_state"] = {
        "reached": out["final_change_rate"] < STEADY_RATE,
        "non_constant": out["final_change_rate"] < STEADY_RATE and spread > NONCONSTANT_RANGE,
    }
    try:
        out["decay_fit"] = fit_decay_rate(traj.times, traj.E, fit_window).to_dict()
    except ValueError as exc:
        out["decay_fit"] = None
        out["decay_fit_error"] = str(exc)
    return out


def cmd_simulate(scn: Scenario, res, args) -> tuple[dict, list[str]]:
    totals = _totals(scn, res)
    u_inf, _ = _equilibrium(scn, res.net, totals)
    out = Path(args.out) if args.out else None
    warnings = []
    if args.eps:
        eps_list = [float(e) for e in args.eps.split(",")]
    else:
        eps_list = scn.floats("eps.list") if args.eps_sweep else None

    if eps_list:
        species = res.net.species_index(scn.get("eps.species", res.net.species[-1]))
        trajs = epsilon_regularized_run(res.u0, res.net, res.fields, res.grid, res.cfg, eps_list, species, u_inf=u_inf)
        runs = []
        for eps, tr in zip(eps_list, trajs):
            if out:
                tr.to_csv(out / f"trajectory_eps{eps:g}.csv")
            runs.append({"eps": eps, **_summary(tr)})
        lams = [r["decay_fit"]["lambda"] for r in runs if r["decay_fit"]]
        results = {"runs": runs, "lambda_max_over_min": max(lams) / min(lams) if lams and min(lams) > 0 else None}
        flags = [tr.flag for tr in trajs if tr.flag]
    else:
        tr = simulate(res.u0, res.net, res.fields, res.grid, res.cfg, u_inf=u_inf)
        if out:
            tr.to_csv(out / "trajectory.csv")
            for snap in tr.snapshots:
                _write_snapshot(out / f"snapshot_{snap.t:.6g}.csv", res.grid, snap.u)
        results = _summary(tr)
        flags = [tr.flag] if tr.flag else []
        if results["steady_state"]["non_constant"]:
            warnings.append("run settled on a spatially non-constant steady state")
    if flags:
        raise CommandFailed(EXIT_QUALITY, f"entropy increased during the run ({flags[0]})", results)
    return results, warnings


def _write_snapshot(path, grid, u):
    cols = ["cell", "x"] + (["y"] if grid.dim == 2 else []) + [f"u_{i + 1}" for i in range(u.shape[0])]
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for c in range(grid.size):
            vals = [*grid.centers[c], *u[:, c]]
            fh.write(f"{c}," + ",".join(f"{v:.17g}" for v in vals) + "\n")


def cmd_probe(scn: Scenario, res, args) -> tuple[dict, list[str]]:
    totals = _totals(scn, res)
    u_inf, _ = _equilibrium(scn, res.net, totals)
    n = args.n if args.n is not None else scn.number("probe.n", 100, int)
    seed = args.seed if args.seed is not None else scn.number("probe.seed", 0, int)
    rough = scn.number("probe.roughness", 0.5)
    rep = eed_ratio_probe(res.net, res.grid, res.fields, u_inf, n, seed, rough, totals=totals)
    results = rep.to_dict()
    results["note"] = "min_ratio is an empirical upper estimate of the best constant, not the constant itself"
    return results, []


def cmd_sweep(scn: Scenario, res, args) -> tuple[dict, list[str]]:
    fractions = [float(f) for f in args.fractions.split(",")] if args.fractions else scn.floats("sweep.fractions")
    if not fractions:
        raise ScenarioError("no sweep fractions given")
    if args.seeds:
        seeds = [int(s) for s in args.seeds.split(",")]
    elif args.seed is not None:
        seeds = [args.seed]
    else:
        seeds = [int(s) for s in scn.floats("sweep.seeds", [11])]
    result = omega_sweep(
        scn,
        fractions,
        seeds,
        dt=scn.number("sweep.dt"),
        t_end=scn.number("sweep.t_end"),
        mode=scn.get("sweep.mode", "both"),
        workers=args.workers,
    )
    if args.out:
        result.to_csv(Path(args.out) / "sweep.csv")
    warnings = [] if result.monotone else ["fitted rates are not strictly decreasing in the set size"]
    return result.to_dict(), warnings


COMMANDS = {
    "analyze": cmd_analyze,
    "equilibrium": cmd_equilibrium,
    "simulate": cmd_simulate,
    "probe": cmd_probe,
    "sweep": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    src = common.add_mutually_exclusive_group(required=True)
    src.add_argument("--scenario", help="scenario file (section.key = value lines)")
    src.add_argument("--preset", choices=PRESETS, help="built-in scenario")
    common.add_argument("--out", help="directory for CSV and JSON outputs")
    common.add_argument("--seed", type=int, help="override the scenario seed")
    common.add_argument("--quiet", action="store_true", help="do not print the JSON report")

    ap = argparse.ArgumentParser(prog="rdentropy", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("analyze", parents=[common], help="network structure and assumption checks")
    p = sub.add_parser("equilibrium", parents=[common], help="positive complex balanced equilibrium")
    p.add_argument("--totals", type=lambda s: [float(x) for x in s.split(",")], help="conserved totals, comma separated")
    p = sub.add_parser("simulate", parents=[common], help="time integration with entropy diagnostics")
    p.add_argument("--eps", help="comma separated eps values for regularised runs")
    p.add_argument("--eps-sweep", action="store_true", help="run the scenario's eps.list")
    p = sub.add_parser("probe", parents=[common], help="sample D/E over conservation-compatible states")
    p.add_argument("--n", type=int, help="number of samples")
    p = sub.add_parser("sweep", parents=[common], help="decay rate against reaction-set size")
    p.add_argument("--fractions", help="comma separated set fractions")
    p.add_argument("--seeds", help="comma separated base seeds")
    p.add_argument("--workers", type=int, default=1)
    return ap


def run(argv=None) -> tuple[int, dict]:
    args = build_parser().parse_args(argv)
    report = {"command": args.command, "scenario_hash": None, "results": {}, "warnings": []}
    code = EXIT_OK
    try:
        scn = Scenario.preset(args.preset) if args.preset else Scenario.from_file(args.scenario)
        if args.seed is not None and args.command == "simulate" and scn.get("initial.kind") == "random":
            scn = scn.with_values({"initial.seed": str(args.seed)})
        report["scenario_hash"] = scn.hash()
        # the whole scenario is validated before any output is written
        res = scn.resolve()
        if args.out:
            Path(args.out).mkdir(parents=True, exist_ok=True)
        results, warnings = COMMANDS[args.command](scn, res, args)
        report["results"] = results
        report["warnings"] = warnings
    except (ScenarioError, NetworkError, KeyError, ValueError) as exc:
        code = EXIT_INVALID
        report["error"] = {"kind": "validation", "message": str(exc)}
    except CommandFailed as exc:
        code = exc.code
        report["results"] = exc.results
        report["error"] = {"kind": "numerical_quality", "message": str(exc)}
    except (NumericalQualityError, StepRejected, SweepAborted, SamplingError) as exc:
        code = EXIT_QUALITY
        report["error"] = {"kind": "numerical_quality", "message": str(exc)}
    except (SolverBreakdown, EquilibriumError) as exc:
        code = EXIT_SOLVER
        report["error"] = {"kind": "solver", "message": str(exc)}
    report = _jsonable(report)
    if args.out and code != EXIT_INVALID:
        name = "summary.json" if args.command == "simulate" else "report.json"
        with open(Path(args.out) / name, "w") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
    if not args.quiet or code != EXIT_OK:
        json.dump(report, sys.stdout, indent=2, sort_keys=True)
        sys.stdout.write("\n")
    return code, report


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    code, _ = run(argv)
    return code


if __name__ == "__main__":
    sys.exit(main())
