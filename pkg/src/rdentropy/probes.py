"""Empirical probes of the entropy/entropy-dissipation inequality."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .entropy import entropy_dissipation, fit_decay_rate, relative_entropy
from .network import ReactionNetwork
from .simulate import State, simulate
from .spatial import Fields, Grid

log = logging.getLogger(__name__)


class SamplingError(RuntimeError):
    pass


class SweepAborted(RuntimeError):
    pass


def _scale_to_totals(Q: np.ndarray, a: np.ndarray, T: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Log-factors sigma with Q (a * exp(sigma)) = T and small sum(sigma^2).

    Phase 1 restricts sigma = Q^T c, where the constraint is the gradient of
    the strictly convex sum_i a_i exp((Q^T c)_i) - T.c; Newton with
    backtracking on that potential. Phase 2 polishes to the constrained
    minimum-norm point with Newton on the KKT system.
    """
    K, m = Q.shape
    if K == 0:
        return np.zeros(m)
    c = np.zeros(K)

    def potential(c):
        return float(a @ np.exp(Q.T @ c) - T @ c)

    for _ in range(200):
        w = a * np.exp(Q.T @ c)
        g = Q @ w - T
        if np.max(np.abs(g) / np.maximum(1.0, np.abs(T))) <= tol:
            break
        H = (Q * w) @ Q.T
        step = np.linalg.solve(H, -g)
        f0, t = potential(c), 1.0
        # near the solution rounding defeats the Armijo test, so a step that
        # shrinks the gradient is accepted as well
        gnorm = np.linalg.norm(g)
        while t > 1e-12:
            trial = c + t * step
            if potential(trial) <= f0 + 1e-4 * t * (g @ step):
                break
            if np.linalg.norm(Q @ (a * np.exp(Q.T @ trial)) - T) < gnorm:
                break
            t *= 0.5
        c = c + t * step
    else:
        raise SamplingError("totals not reachable by positive rescaling")
    sigma = Q.T @ c

    # KKT: sigma = J^T mu, g(sigma) = 0, J = Q diag(a e^sigma)
    J = Q * (a * np.exp(sigma))
    mu = np.linalg.lstsq(J.T, sigma, rcond=None)[0]
    x = np.concatenate([sigma, mu])
    for _ in range(50):
        s, mu = x[:m], x[m:]
        e = a * np.exp(s)
        J = Q * e
        F = np.concatenate([s - J.T @ mu, Q @ e - T])
        if np.max(np.abs(F[:m]), initial=0) <= 1e-13 and np.max(np.abs(F[m:]) / np.maximum(1.0, np.abs(T))) <= tol:
            return s
        A = np.block([[np.eye(m) - np.diag(J.T @ mu), -J.T], [J, np.zeros((K, K))]])
        try:
            x = x + np.linalg.solve(A, -F)
        except np.linalg.LinAlgError:
            break
        if not np.all(np.isfinite(x)):
            break
    # KKT polish failed; the phase-1 point is feasible
    return sigma


def sample_compatible_state(
    net: ReactionNetwork,
    grid: Grid,
    totals,
    seed,
    roughness: float,
    max_retries: int = 10,
) -> State:
    """Log-normal fields rescaled per species to hit the conserved totals.

    ``seed`` is an int or a tuple of ints (fed to numpy's SeedSequence).
    """
    totals = np.atleast_1d(np.asarray(totals, dtype=float))
    Q = net.cons_basis
    if totals.shape != (Q.shape[0],):
        raise ValueError(f"expected {Q.shape[0]} totals")
    for attempt in range(max_retries):
        rng = np.random.default_rng([*(int(x) for x in np.atleast_1d(seed)), attempt])
        v = np.exp(roughness * rng.standard_normal((net.m, grid.size)))
        try:
            sigma = _scale_to_totals(Q, grid.mean(v), totals)
        except (SamplingError, np.linalg.LinAlgError):
            continue
        u = v * np.exp(sigma)[:, None]
        got = Q @ grid.mean(u)
        if np.all(np.abs(got - totals) <= 1e-10 * np.maximum(1.0, np.abs(totals))) and (u > 0).all():
            return State(u)
    raise SamplingError(f"could not match totals {totals} after {max_retries} draws (seed {seed})")


@dataclass
class ProbeReport:
    n_samples: int
    min_ratio: float
    q05: float
    q50: float
    argmin: dict
    seed: int
    roughness: float
    skipped: int

    def to_dict(self) -> dict:
        return asdict(self)


def eed_ratio_probe(
    net: ReactionNetwork,
    grid: Grid,
    fields: Fields,
    u_inf,
    n: int,
    seed: int,
    roughness: float,
    totals=None,
) -> ProbeReport:
    """min, 5% and 50% quantiles of D(u)/E(u|u_inf) over sampled states.

    ``min_ratio`` only bounds the best constant from above; states exactly at
    the equilibrium (E = 0) are skipped.
    """
    u_inf = np.asarray(u_inf, dtype=float)
    if totals is None:
        totals = net.cons_basis @ u_inf
    ratios, info = [], []
    skipped = 0
    for i in range(n):
        st = sample_compatible_state(net, grid, totals, seed=(seed, i), roughness=roughness)
        E = relative_entropy(st.u, u_inf, grid)
        if E <= 0.0:
            skipped += 1
            continue
        D = entropy_dissipation(st.u, net, fields, u_inf, grid)
        ratios.append(D.total / E)
        info.append((i, E, D))
    if not ratios:
        raise ValueError("every sample sits at the equilibrium")
    ratios = np.array(ratios)
    j = int(np.argmin(ratios))
    i, E, D = info[j]
    st = sample_compatible_state(net, grid, totals, seed=(seed, i), roughness=roughness)
    argmin = {
        "index": i,
        "entropy": E,
        "dissipation": D.total,
        "fisher": D.fisher,
        "reaction": D.reaction,
        "mean": grid.mean(st.u).tolist(),
        "min": st.u.min(axis=1).tolist(),
        "max": st.u.max(axis=1).tolist(),
    }
    return ProbeReport(
        n_samples=len(ratios),
        min_ratio=float(ratios.min()),
        q05=float(np.quantile(ratios, 0.05)),
        q50=float(np.quantile(ratios, 0.5)),
        argmin=argmin,
        seed=int(seed),
        roughness=float(roughness),
        skipped=skipped,
    )


@dataclass
class SweepRow:
    fraction: float
    seed: int
    omega1_measure: float
    omega2_measure: float
    fitted_lambda: float
    r_squared: float
    stderr: float


@dataclass
class SweepResult:
    rows: list[SweepRow]
    a: float
    b: float
    monotone: bool
    per_fraction: list[dict]

    def to_dict(self) -> dict:
        return {
            "rows": [asdict(r) for r in self.rows],
            "fit": {"a": self.a, "b": self.b},
            "monotone_decreasing": self.monotone,
            "per_fraction": self.per_fraction,
        }

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("omega1,omega2,lambda,r2\n")
            for r in self.rows:
                fh.write(f"{r.omega1_measure:.17g},{r.omega2_measure:.17g},{r.fitted_lambda:.17g},{r.r_squared:.17g}\n")


def _sweep_member(args):
    scenario, fraction, seed, mode, dt, t_end = args
    profiles = scenario.network().profiles
    targets = profiles if mode == "both" else profiles[:1]
    updates = {f"profile.{p}.mask": f"random {fraction} {seed + j}" for j, p in enumerate(profiles) if p in targets}
    res = scenario.with_values(updates).resolve()
    cfg = scenario.sim_config(dt=dt, t_end=t_end)
    traj = simulate(res.u0, res.net, res.fields, res.grid, cfg)
    if traj.flag:
        raise SweepAborted(f"run fraction={fraction} seed={seed} failed: {traj.flag}")
    fit = fit_decay_rate(traj.times, traj.E)
    measures = [res.masks[p].measure for p in profiles] + [1.0, 1.0]
    return SweepRow(fraction, seed, measures[0], measures[1], fit.lam, fit.r_squared, fit.stderr)


def omega_sweep(
    scenario,
    fractions,
    seeds=(11,),
    dt: float | None = None,
    t_end: float | None = None,
    mode: str = "both",
    workers: int = 1,
) -> SweepResult:
    """Decay rate against reaction-set size.

    For each (fraction, seed) the reaction masks are redrawn as random sets
    of that fraction (profile j uses seed + j), the scenario is simulated and
    log E is fitted. 1/lambda is then regressed on 1/|w1| + 1/|w2|.
    """
    fractions = [float(f) for f in fractions]
    if mode not in ("both", "omega1"):
        raise ValueError(f"mode must be 'both' or 'omega1', got {mode!r}")
    jobs = [(scenario, f, int(s), mode, dt, t_end) for f in fractions for s in seeds]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            rows = list(ex.map(_sweep_member, jobs))
    else:
        rows = [_sweep_member(j) for j in jobs]

    per = []
    for f in fractions:
        sel = [r for r in rows if r.fraction == f]
        lam = float(np.mean([r.fitted_lambda for r in sel]))
        se = math.sqrt(sum(r.stderr**2 for r in sel)) / len(sel)
        per.append({"fraction": f, "lambda": lam, "stderr": se, "omega1": sel[0].omega1_measure, "omega2": sel[0].omega2_measure})

    order = sorted(per, key=lambda p: -p["fraction"])
    monotone = all(
        a["lambda"] - b["lambda"] > 2.0 * math.hypot(a["stderr"], b["stderr"]) for a, b in zip(order, order[1:])
    )
    x = np.array([1.0 / r.omega1_measure + 1.0 / r.omega2_measure for r in rows])
    y = np.array([1.0 / r.fitted_lambda if r.fitted_lambda > 0 else math.inf for r in rows])
    if len(set(x.tolist())) >= 2 and np.all(np.isfinite(y)):
        b, a = np.polyfit(x, y, 1)
    else:
        a, b = (float(y.mean()), math.nan)
    return SweepResult(rows, float(a), float(b), bool(monotone), per)
