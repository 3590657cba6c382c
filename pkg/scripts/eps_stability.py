"""Fitted decay rate of the degenerate-diffusion preset as d3 is shifted by eps."""

import argparse

import numpy as np

from rdentropy import Scenario, epsilon_regularized_run, fit_decay_rate, simulate, special_equilibrium
from rdentropy.network import conserved_totals


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--preset", default="thm3-degenerate")
    ap.add_argument("--eps", default="1e-1,1e-2,1e-3,1e-4,1e-5")
    args = ap.parse_args()

    scn = Scenario.preset(args.preset)
    res = scn.resolve()
    u_inf = np.array(special_equilibrium(conserved_totals(res.net, res.u0.u, res.grid)[0]))
    species = res.net.species_index(scn.get("eps.species", res.net.species[-1]))
    eps = [float(e) for e in args.eps.split(",")]

    base = simulate(res.u0, res.net, res.fields, res.grid, res.cfg, u_inf=u_inf)
    print(f"eps = 0      lambda = {fit_decay_rate(base.times, base.E).lam:.5f}")
    for e, tr in zip(eps, epsilon_regularized_run(res.u0, res.net, res.fields, res.grid, res.cfg, eps, species, u_inf)):
        fit = fit_decay_rate(tr.times, tr.E)
        print(f"eps = {e:<6g} lambda = {fit.lam:.5f}  r2 = {fit.r_squared:.6f}")


if __name__ == "__main__":
    main()
