"""Entropy functionals: relative entropy, entropy dissipation and decay fits."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .network import ReactionNetwork, _rates, monomials
from .spatial import Fields, Grid, face_diffusivity

# phi(1+s) = (1+s) log(1+s) - s; below this |s| the Taylor series is used
_SERIES_CUTOFF = 1e-3


def _phi(r: np.ndarray) -> np.ndarray:
    """r log r - r + 1 for r >= 0, accurate near r = 1 (0 log 0 = 0)."""
    r = np.asarray(r, dtype=float)
    s = r - 1.0
    small = np.abs(s) < _SERIES_CUTOFF
    out = np.empty_like(r)
    ss = s[small]
    out[small] = ss * ss * (0.5 + ss * (-1 / 6 + ss * (1 / 12 + ss * (-1 / 20 + ss * (1 / 30)))))
    big = ~small
    rb = r[big]
    with np.errstate(divide="ignore", invalid="ignore"):
        val = np.where(rb > 0, rb * np.log(np.where(rb > 0, rb, 1.0)) - rb + 1.0, 1.0)
    out[big] = val
    return out


def psi_array(w: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Psi(w; z) elementwise; z = 0 gives +inf unless w = 0 as well."""
    w = np.asarray(w, dtype=float)
    z = np.asarray(z, dtype=float)
    w, z = np.broadcast_arrays(w, z)
    out = np.empty(w.shape)
    pos = z > 0
    out[pos] = z[pos] * _phi(w[pos] / z[pos])
    out[~pos] = np.where(w[~pos] > 0, np.inf, 0.0)
    return out


def psi(w: float, z: float) -> float:
    """w log(w/z) - w + z, with 0 log 0 = 0."""
    if z <= 0 or w < 0 or not (math.isfinite(w) and math.isfinite(z)):
        raise ValueError(f"psi requires w >= 0 and z > 0, got w={w}, z={z}")
    return float(psi_array(np.array([w]), np.array([z]))[0])


def _as_fields(u) -> np.ndarray:
    u = np.asarray(getattr(u, "u", u), dtype=float)
    return u if u.ndim == 2 else u[:, None]


def _check_uinf(u_inf) -> np.ndarray:
    u_inf = np.asarray(u_inf, dtype=float)
    if not (u_inf > 0).all():
        raise ValueError("equilibrium must be strictly positive")
    return u_inf


def relative_entropy(state, u_inf, grid: Grid) -> float:
    """sum_i int (u_i log(u_i/u_inf_i) - u_i + u_inf_i) dx."""
    u = _as_fields(state)
    u_inf = _check_uinf(u_inf)
    if (u < 0).any():
        raise ValueError("state must be nonnegative")
    dens = u_inf[:, None] * _phi(u / u_inf[:, None])
    return float(dens.sum() * grid.cell_measure)


def entropy_of_averages(state, u_inf, grid: Grid) -> float:
    """E([u]|u_inf) for the spatially averaged state."""
    avg = grid.mean(_as_fields(state))
    u_inf = _check_uinf(u_inf)
    return float((u_inf * _phi(avg / u_inf)).sum())


class Dissipation(NamedTuple):
    total: float
    fisher: float
    reaction: float


def fisher_information(u: np.ndarray, fields: Fields, grid: Grid) -> float:
    """sum_i int d_i |grad u_i|^2 / u_i, as 4 sum_faces d_f (delta sqrt u / h)^2 h^dim."""
    left, right = grid.faces
    root = np.sqrt(u)
    total = 0.0
    for i, d in enumerate(fields.diffusion):
        df = face_diffusivity(grid, d.values)
        jump = root[i, right] - root[i, left]
        total += 4.0 * float(np.sum(df * jump * jump)) / grid.h**2 * grid.cell_measure
    return total


def reaction_dissipation_density(net: ReactionNetwork, u: np.ndarray, u_inf: np.ndarray, k: np.ndarray) -> np.ndarray:
    """sum_r k_r u_inf^{y_r} Psi(u^{y_r}/u_inf^{y_r}; u^{y_r'}/u_inf^{y_r'}) per cell."""
    Y, Yp = net.reactant_matrix, net.product_matrix
    m_inf = monomials(u_inf, Y)
    mp_inf = monomials(u_inf, Yp)
    a = monomials(u, Y) / (m_inf[:, None] if u.ndim == 2 else m_inf)
    b = monomials(u, Yp) / (mp_inf[:, None] if u.ndim == 2 else mp_inf)
    weight = k * (m_inf[:, None] if u.ndim == 2 else m_inf)
    terms = psi_array(a, b)
    terms = np.where(weight > 0, weight * terms, 0.0)
    return terms.sum(axis=0)


def entropy_dissipation(state, net: ReactionNetwork, fields: Fields, u_inf, grid: Grid, t: float = 0.0) -> Dissipation:
    """Entropy dissipation split into its diffusion and reaction parts."""
    u = _as_fields(state)
    u_inf = _check_uinf(u_inf)
    if (u < 0).any():
        raise ValueError("state must be nonnegative")
    fisher = fisher_information(u, fields, grid)
    k = fields.rate_matrix(net, t)
    reaction = float(reaction_dissipation_density(net, u, u_inf, k).sum() * grid.cell_measure)
    return Dissipation(fisher + reaction, fisher, reaction)


def reaction_entropy_production_identity(net: ReactionNetwork, u, u_inf, k) -> tuple[float, float]:
    """(-sum_i R_i log(u_i/u_inf_i), sum_r k_r u_inf^{y_r} Psi(...)) at one point.

    The two agree whenever u_inf is complex balanced and the rate constants of
    each linkage component share a common spatial factor.
    """
    u = np.asarray(u, dtype=float)
    u_inf = _check_uinf(u_inf)
    k = np.asarray(k, dtype=float)
    if not (u > 0).all():
        raise ValueError("u must be strictly positive")
    R = _rates(net.stoich, net.reactant_matrix, k, u)
    lhs = -float(R @ np.log(u / u_inf))
    rhs = float(reaction_dissipation_density(net, u, u_inf, k))
    return lhs, rhs


def ckp_ratio(state, u_inf, grid: Grid) -> float:
    """E(u|u_inf) / sum_i ||u_i - u_inf_i||_1^2; +inf at the equilibrium."""
    u = _as_fields(state)
    u_inf = _check_uinf(u_inf)
    l1 = np.abs(u - u_inf[:, None]).sum(axis=1) * grid.cell_measure
    denom = float(np.sum(l1**2))
    if denom == 0.0:
        return math.inf
    return relative_entropy(u, u_inf, grid) / denom


def h_p(state, p: int, grid: Grid) -> float:
    """int 4/(p+1) u1^(p+1) + 2/(2p+1) u2^(2p+1) + 1/(4p+1) u3^(4p+1) dx."""
    u = _as_fields(state)
    if u.shape[0] != 3:
        raise ValueError(f"h_p needs exactly 3 species, got {u.shape[0]}")
    if p < 1:
        raise ValueError("p must be a positive integer")
    dens = 4.0 / (p + 1) * u[0] ** (p + 1) + 2.0 / (2 * p + 1) * u[1] ** (2 * p + 1) + 1.0 / (4 * p + 1) * u[2] ** (4 * p + 1)
    return float(dens.sum() * grid.cell_measure)


def special_dissipation_lower_bound(state, fisher: float, kappa: float, omega1, omega2, grid: Grid) -> float:
    """Fisher part + kappa * (int_w1 (u2 - sqrt u1)^2 + int_w2 (u3 - sqrt u2)^2).

    For S1 <=> 2 S2, S2 <=> 2 S3 with k1 >= kappa on w1 and k2 >= kappa on w2
    this bounds the entropy dissipation from below.
    """
    u = _as_fields(state)
    t1 = (u[1] - np.sqrt(u[0])) ** 2
    t2 = (u[2] - np.sqrt(u[1])) ** 2
    reac = kappa * (t1[omega1.member].sum() + t2[omega2.member].sum()) * grid.cell_measure
    return fisher + float(reac)


@dataclass
class DecayFit:
    lam: float
    intercept: float
    r_squared: float
    window: tuple[float, float]
    stderr: float
    n_points: int

    def to_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "intercept": self.intercept,
            "r_squared": self.r_squared,
            "window": list(self.window),
            "stderr": self.stderr,
            "n_points": self.n_points,
        }


def fit_decay_rate(times, entropies, window: tuple[float, float] = (0.2, 0.8), floor: float = 1e-13) -> DecayFit:
    """Least-squares line through (t, log E) on a fractional time window.

    Rows with E below ``floor`` are dropped. ``lam`` is minus the slope and
    ``stderr`` its standard error.
    """
    t = np.asarray(times, dtype=float)
    E = np.asarray(entropies, dtype=float)
    t0, t1 = t[0], t[-1]
    lo, hi = t0 + window[0] * (t1 - t0), t0 + window[1] * (t1 - t0)
    sel = (t >= lo) & (t <= hi) & (E >= floor) & (E > 0)
    n = int(sel.sum())
    if n < 4:
        raise ValueError(f"only {n} usable points in the fit window, need >= 4")
    x, y = t[sel], np.log(E[sel])
    xm, ym = x.mean(), y.mean()
    sxx = float(np.sum((x - xm) ** 2))
    slope = float(np.sum((x - xm) * (y - ym)) / sxx)
    intercept = float(ym - slope * xm)
    resid = y - (intercept + slope * x)
    ss_res = float(np.sum(resid**2))
    ss_tot = float(np.sum((y - ym) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else max(0.0, 1.0 - ss_res / ss_tot)
    stderr = math.sqrt(ss_res / (n - 2) / sxx)
    return DecayFit(-slope + 0.0, intercept, r2, (float(lo), float(hi)), stderr, n)
