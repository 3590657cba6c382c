"""Simulate a preset, write the trajectory CSV and print the fitted decay rate.

    python3 scripts/decay_run.py thm2-measurable --out runs/thm2
"""

import argparse
from pathlib import Path

import numpy as np

from rdentropy import Scenario, fit_decay_rate, simulate, special_equilibrium
from rdentropy.network import conserved_totals


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("preset")
    ap.add_argument("--out", type=Path, default=Path("runs"))
    ap.add_argument("--t-end", type=float)
    ap.add_argument("--n", type=int, help="override grid.n")
    args = ap.parse_args()

    scn = Scenario.preset(args.preset)
    if args.n:
        scn = scn.with_values({"grid.n": str(args.n)})
    res = scn.resolve()
    cfg = scn.sim_config(t_end=args.t_end) if args.t_end else res.cfg
    u_inf = None
    if scn.get("equilibrium.method") == "special":
        u_inf = np.array(special_equilibrium(conserved_totals(res.net, res.u0.u, res.grid)[0]))
    traj = simulate(res.u0, res.net, res.fields, res.grid, cfg, u_inf=u_inf)

    args.out.mkdir(parents=True, exist_ok=True)
    traj.to_csv(args.out / "trajectory.csv")
    fit = fit_decay_rate(traj.times, traj.E)
    print(f"lambda = {fit.lam:.5f} +- {fit.stderr:.1e}  (r2 = {fit.r_squared:.6f}, window {fit.window})")
    print(f"conservation drift {traj.conservation_drift():.2e}, min u {traj.min_u.min():.4f}")
    if traj.flag:
        print(f"run stopped early: {traj.flag}")


if __name__ == "__main__":
    main()
