"""Finite-volume IMEX integration of mass-action reaction-diffusion systems.

Each step applies the reaction explicitly in every cell and then solves
``(I - dt A_i) u_i = u_i^half`` for every species, where ``A_i`` is the
zero-flux diffusion operator with harmonic-mean face coefficients.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .entropy import entropy_dissipation, h_p, relative_entropy
from .equilibrium import find_cbe
from .network import ReactionNetwork, _rates, conserved_totals
from .spatial import DiffusionField, Fields, Grid, face_diffusivity, neumann_operator

log = logging.getLogger(__name__)


class StepRejected(RuntimeError):
    """The explicit reaction substep would leave the nonnegative cone."""


class SolverBreakdown(RuntimeError):
    pass


class NumericalQualityError(RuntimeError):
    pass


@dataclass
class State:
    u: np.ndarray  # (species, cells)
    t: float = 0.0

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float)
        if self.u.ndim != 2:
            raise ValueError("state must be a (species, cells) array")
        if not np.all(np.isfinite(self.u)):
            raise ValueError("state contains NaN or Inf")
        if (self.u < 0).any():
            raise ValueError("state must be nonnegative")


@dataclass
class SimConfig:
    dt: float = 1e-4
    t_end: float = 1.0
    record_every: int = 10
    scheme: str = "imex-be"
    positivity_floor: float = 0.0
    saturation_eps: float = 0.0
    hp_powers: tuple[int, ...] = ()
    check_entropy: bool = True
    snapshot_every: int = 0  # in records; 0 disables

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.t_end < self.dt:
            raise ValueError("t_end must be at least dt")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")
        if self.scheme not in ("imex-be", "explicit"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.saturation_eps < 0:
            raise ValueError("saturation_eps must be >= 0")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))


def diffusion_apply(grid: Grid, d: DiffusionField, u: np.ndarray) -> np.ndarray:
    """div(d grad u) with zero-flux boundary, harmonic-mean faces."""
    u = np.asarray(u, dtype=float)
    if u.shape[-1] != grid.size or d.values.size != grid.size:
        raise ValueError("field sizes do not match the grid")
    A = neumann_operator(grid, face_diffusivity(grid, d.values))
    return (A @ u.T).T if u.ndim == 2 else A @ u


def saturate(R: np.ndarray, eps: float) -> np.ndarray:
    """R / (1 + eps * sum_j |R_j|), cellwise."""
    if eps == 0:
        return R
    return R / (1.0 + eps * np.abs(R).sum(axis=0))


class Stepper:
    """Holds the factorised implicit diffusion operators for a fixed dt."""

    def __init__(self, net: ReactionNetwork, fields: Fields, grid: Grid, cfg: SimConfig):
        if len(fields.diffusion) != net.m:
            raise ValueError(f"need {net.m} diffusion fields, got {len(fields.diffusion)}")
        self.net, self.fields, self.grid, self.cfg = net, fields, grid, cfg
        self.W = net.stoich
        self.Y = net.reactant_matrix
        self.k = fields.rate_matrix(net, 0.0)
        self.time_dependent = bool(fields.modulation)
        self.ops = [neumann_operator(grid, face_diffusivity(grid, d.values)) for d in fields.diffusion]
        eye = sp.identity(grid.size, format="csc")
        self.lus = []
        if cfg.scheme == "imex-be":
            for A in self.ops:
                try:
                    self.lus.append(splu((eye - cfg.dt * A).tocsc()))
                except RuntimeError as exc:
                    raise SolverBreakdown(str(exc)) from exc

    def reaction(self, u: np.ndarray, t: float) -> np.ndarray:
        k = self.fields.rate_matrix(self.net, t) if self.time_dependent else self.k
        return saturate(_rates(self.W, self.Y, k, u), self.cfg.saturation_eps)

    def __call__(self, u: np.ndarray, t: float) -> tuple[np.ndarray, float]:
        """Advance one step; returns the new field and the clamped mass."""
        dt = self.cfg.dt
        floor = self.cfg.positivity_floor
        scale = max(1.0, float(u.max()))
        half = u + dt * self.reaction(u, t)
        if self.cfg.scheme == "explicit":
            half = half + dt * np.vstack([A @ ui for A, ui in zip(self.ops, u)])
        if half.min() < -1e-12 * scale:
            raise StepRejected(f"reaction substep reaches {half.min():.3e} at t={t:.6g}; shrink dt")
        clamped = np.maximum(floor - half, 0.0)
        half = half + clamped
        if self.cfg.scheme == "explicit":
            new = half
        else:
            new = np.empty_like(half)
            for i, lu in enumerate(self.lus):
                new[i] = lu.solve(half[i])
            if not np.all(np.isfinite(new)):
                raise SolverBreakdown(f"non-finite values after diffusion solve at t={t:.6g}")
        c2 = np.maximum(floor - new, 0.0)
        new = new + c2
        return new, float((clamped.sum() + c2.sum()) * self.grid.cell_measure)


def step(state: State, net: ReactionNetwork, fields: Fields, grid: Grid, cfg: SimConfig) -> State:
    """One IMEX step (builds the factorisation; use ``simulate`` for runs)."""
    u, _ = Stepper(net, fields, grid, cfg)(state.u, state.t)
    return State(u, state.t + cfg.dt)


@dataclass
class Trajectory:
    times: np.ndarray
    E: np.ndarray
    D: np.ndarray
    fisher: np.ndarray
    reaction: np.ndarray
    totals: np.ndarray  # (records, K)
    l1_dist: np.ndarray  # (records, m)
    min_u: np.ndarray
    clamped_mass: np.ndarray  # cumulative
    change_rate: np.ndarray  # sup-norm of (u_k - u_{k-1}) / (t_k - t_{k-1})
    hp: dict[int, np.ndarray]
    u_inf: np.ndarray
    final: State
    snapshots: list[State] = field(default_factory=list)
    flag: str | None = None

    def conservation_drift(self) -> float:
        """max_j max_t |total_j(t) - total_j(0)| / (1 + |total_j(0)|)."""
        if self.totals.shape[1] == 0:
            return 0.0
        ref = self.totals[0]
        return float(np.max(np.abs(self.totals - ref) / (1.0 + np.abs(ref))))

    def csv_header(self) -> str:
        K = self.totals.shape[1]
        m = self.l1_dist.shape[1]
        cols = ["t", "E", "D"] + [f"total_{j + 1}" for j in range(K)] + [f"l1_dist_{i + 1}" for i in range(m)]
        cols += ["min_u", "clamped_mass"] + [f"Hp_{p}" for p in sorted(self.hp)]
        return ",".join(cols)

    def csv_rows(self):
        for n in range(len(self.times)):
            vals = [self.times[n], self.E[n], self.D[n], *self.totals[n], *self.l1_dist[n], self.min_u[n], self.clamped_mass[n]]
            vals += [self.hp[p][n] for p in sorted(self.hp)]
            yield ",".join(f"{float(v):.17g}" for v in vals)

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.csv_header() + "\n")
            for row in self.csv_rows():
                fh.write(row + "\n")


def simulate(
    u0,
    net: ReactionNetwork,
    fields: Fields,
    grid: Grid,
    cfg: SimConfig,
    u_inf=None,
) -> Trajectory:
    """Integrate to ``cfg.t_end`` recording entropy diagnostics.

    ``u_inf`` defaults to the positive complex balanced equilibrium with the
    conserved totals of ``u0``. With ``cfg.check_entropy`` the run stops
    early (``flag = "entropy_increase"``) when E grows by more than 1e-6
    between records.
    """
    state = u0 if isinstance(u0, State) else State(np.asarray(u0, dtype=float))
    u = state.u.copy()
    if u.shape != (net.m, grid.size):
        raise ValueError(f"initial state has shape {u.shape}, expected ({net.m}, {grid.size})")
    if u_inf is None:
        res = find_cbe(net, conserved_totals(net, u, grid))
        if not res.converged:
            log.warning("equilibrium solve did not converge (residual %.3e)", res.cb_residual)
        u_inf = res.u_inf
    u_inf = np.asarray(u_inf, dtype=float)
    stepper = Stepper(net, fields, grid, cfg)

    rows: dict[str, list] = {k: [] for k in ("t", "E", "D", "F", "R", "tot", "l1", "min", "clamp", "rate")}
    hp: dict[int, list] = {p: [] for p in cfg.hp_powers}
    snapshots: list[State] = []
    clamped_total = 0.0
    flag = None
    t = state.t
    prev_u, prev_t = u.copy(), t

    def record():
        diss = entropy_dissipation(u, net, fields, u_inf, grid, t)
        rows["t"].append(t)
        rows["E"].append(relative_entropy(u, u_inf, grid))
        rows["D"].append(diss.total)
        rows["F"].append(diss.fisher)
        rows["R"].append(diss.reaction)
        rows["tot"].append(conserved_totals(net, u, grid))
        rows["l1"].append(np.abs(u - u_inf[:, None]).sum(axis=1) * grid.cell_measure)
        rows["min"].append(float(u.min()))
        rows["clamp"].append(clamped_total)
        rows["rate"].append(float(np.abs(u - prev_u).max() / (t - prev_t)) if t > prev_t else math.nan)
        for p in cfg.hp_powers:
            hp[p].append(h_p(u, p, grid))
        if cfg.snapshot_every and (len(rows["t"]) - 1) % cfg.snapshot_every == 0:
            snapshots.append(State(u.copy(), t))

    record()
    mass = max(float(np.abs(u).sum() * grid.cell_measure), 1e-300)
    for n in range(1, cfg.n_steps + 1):
        u, clamped = stepper(u, t)
        t = state.t + n * cfg.dt
        clamped_total += clamped
        if clamped > 1e-12 * mass:
            raise NumericalQualityError(f"clamped mass {clamped:.3e} at t={t:.6g} exceeds 1e-12 of total mass")
        if n % cfg.record_every == 0 or n == cfg.n_steps:
            record()
            prev_u, prev_t = u.copy(), t
            if cfg.check_entropy and len(rows["E"]) > 1 and rows["E"][-1] - rows["E"][-2] > 1e-6:
                flag = "entropy_increase"
                log.warning("entropy increased at t=%.6g; stopping", t)
                break

    K = net.n_conservation
    return Trajectory(
        times=np.array(rows["t"]),
        E=np.array(rows["E"]),
        D=np.array(rows["D"]),
        fisher=np.array(rows["F"]),
        reaction=np.array(rows["R"]),
        totals=np.array(rows["tot"]).reshape(len(rows["t"]), K),
        l1_dist=np.array(rows["l1"]),
        min_u=np.array(rows["min"]),
        clamped_mass=np.array(rows["clamp"]),
        change_rate=np.array(rows["rate"]),
        hp={p: np.array(v) for p, v in hp.items()},
        u_inf=u_inf,
        final=State(u, t),
        snapshots=snapshots,
        flag=flag,
    )


def epsilon_regularized_run(
    u0,
    net: ReactionNetwork,
    fields: Fields,
    grid: Grid,
    cfg: SimConfig,
    eps_list,
    species: int = -1,
    u_inf=None,
) -> list[Trajectory]:
    """One run per eps with the diffusivity of ``species`` replaced by d + eps."""
    eps_list = [float(e) for e in eps_list]
    if not eps_list or any(e <= 0 for e in eps_list):
        raise ValueError("eps values must be positive")
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps values must be strictly decreasing")
    species = species % net.m
    base = fields.diffusion[species]
    return [
        simulate(u0, net, fields.with_diffusion(species, base.shifted(eps)), grid, cfg, u_inf=u_inf)
        for eps in eps_list
    ]
