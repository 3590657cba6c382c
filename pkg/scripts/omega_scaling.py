"""Decay rate against reaction-set size, with the 1/lambda regression.

    python3 scripts/omega_scaling.py --fractions 0.8,0.4,0.2,0.1 --seeds 11,21,31 --workers 3
"""

import argparse
from pathlib import Path

from rdentropy import Scenario, omega_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--preset", default="thm2-measurable")
    ap.add_argument("--fractions", default="0.4,0.2,0.1")
    ap.add_argument("--seeds", default="11")
    ap.add_argument("--mode", choices=("both", "omega1"), default="both")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", type=Path, default=Path("runs/sweep.csv"))
    args = ap.parse_args()

    scn = Scenario.preset(args.preset)
    res = omega_sweep(
        scn,
        [float(f) for f in args.fractions.split(",")],
        [int(s) for s in args.seeds.split(",")],
        dt=scn.number("sweep.dt"),
        t_end=scn.number("sweep.t_end"),
        mode=args.mode,
        workers=args.workers,
    )
    args.out.parent.mkdir(parents=True, exist_ok=True)
    res.to_csv(args.out)
    print(f"{'|w1|':>6} {'|w2|':>6} {'lambda':>9} {'r2':>9}")
    for r in res.rows:
        print(f"{r.omega1_measure:6.3f} {r.omega2_measure:6.3f} {r.fitted_lambda:9.5f} {r.r_squared:9.6f}")
    print(f"1/lambda ~ {res.a:.4f} + {res.b:.4f} (1/|w1| + 1/|w2|); decreasing: {res.monotone}")


if __name__ == "__main__":
    main()
