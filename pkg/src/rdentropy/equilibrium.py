"""Strictly positive complex balanced equilibria."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .network import ReactionNetwork, monomials


class EquilibriumError(RuntimeError):
    pass


@dataclass
class EquilibriumResult:
    u_inf: np.ndarray
    cb_residual: float
    cons_residual: float
    iterations: int
    converged: bool

    def to_dict(self) -> dict:
        return {
            "u_inf": [float(x) for x in self.u_inf],
            "cb_residual": float(self.cb_residual),
            "cons_residual": float(self.cons_residual),
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
            "strictly_positive": bool(np.min(self.u_inf) > 0),
        }


def balance_index(net: ReactionNetwork) -> list[tuple[int, int]]:
    """(component, complex) pairs at which complex balance is evaluated."""
    pairs: list[tuple[int, int]] = []
    for l, rng in enumerate(net.components):
        seen: list[int] = []
        for r in rng:
            for c in (net.reactions[r].reactant, net.reactions[r].product):
                if c not in seen:
                    seen.append(c)
        pairs.extend((l, c) for c in sorted(seen))
    return pairs


def _balance_matrices(net: ReactionNetwork):
    """Out[i, r] = beta_r if reaction r leaves pair i, In[i, r] = beta_r if it enters."""
    pairs = balance_index(net)
    out = np.zeros((len(pairs), net.n_reactions))
    inn = np.zeros_like(out)
    for i, (l, c) in enumerate(pairs):
        for r in net.components[l]:
            rx = net.reactions[r]
            if rx.reactant == c:
                out[i, r] = rx.beta
            if rx.product == c:
                inn[i, r] = rx.beta
    return out, inn


def complex_balance_residual(net: ReactionNetwork, u) -> np.ndarray:
    """Outflow minus inflow at every complex of every linkage component.

    Entry i belongs to ``balance_index(net)[i]`` and equals
    ``u^y * sum_{y_j = y} beta_j - sum_{y_k' = y} beta_k u^{y_k}``.
    """
    u = np.asarray(u, dtype=float)
    if u.shape != (net.m,) or not (u > 0).all():
        raise ValueError("u must be a strictly positive vector of length m")
    out, inn = _balance_matrices(net)
    flux = monomials(u, net.reactant_matrix)
    return (out - inn) @ flux


def _residual(net, out_minus_in, Y, Q, totals, x):
    u = np.exp(x)
    flux = monomials(u, Y)
    cb = out_minus_in @ flux
    cons = Q @ u - totals
    # d flux_r / d x_i = flux_r * y_{r,i}
    J = np.vstack([out_minus_in @ (flux[:, None] * Y.T), Q * u[None, :]])
    return np.concatenate([cb, cons]), J, cb, cons


def find_cbe(
    net: ReactionNetwork,
    totals,
    init=None,
    tol: float = 1e-10,
    max_iter: int = 200,
) -> EquilibriumResult:
    """Damped Gauss-Newton in log-concentrations for the positive CBE.

    Unknowns are ``x = log u``; the residual stacks the complex-balance
    conditions and the conservation constraints ``q_j . u = totals_j``.
    If the direct solve stalls, a Newton homotopy from the initial state is
    tried in 10 steps.
    """
    if not tol > 0 or max_iter < 1:
        raise ValueError("tol must be positive and max_iter at least 1")
    totals = np.atleast_1d(np.asarray(totals, dtype=float))
    Q = net.cons_basis
    if totals.shape != (Q.shape[0],):
        raise ValueError(f"expected {Q.shape[0]} conserved totals, got {totals.shape[0]}")
    if init is None:
        c = 1.0
        if Q.shape[0] and Q[0].sum() > 0 and totals[0] > 0:
            c = totals[0] / Q[0].sum()
        x0 = np.full(net.m, math.log(c))
    else:
        init = np.asarray(init, dtype=float)
        if not (init > 0).all():
            raise ValueError("initial guess must be strictly positive")
        x0 = np.log(init)

    out, inn = _balance_matrices(net)
    D = out - inn
    Y = net.reactant_matrix

    def F(x):
        return _residual(net, D, Y, Q, totals, x)

    x, it, ok, cond = _gauss_newton(F, x0, tol, max_iter, offset=None)
    total_it = it
    if not ok:
        r0 = F(x0)[0]
        xh = x0
        for s in np.linspace(0.1, 1.0, 10):
            xh, it, ok, cond = _gauss_newton(F, xh, tol, max_iter, offset=(1.0 - s) * r0)
            total_it += it
        if ok:
            x = xh
    if not ok and cond is not None and cond > 1e14:
        raise EquilibriumError(f"Jacobian numerically singular (condition estimate {cond:.3e})")
    _, _, cb, cons = F(x)
    u = np.exp(x)
    return EquilibriumResult(
        u_inf=u,
        cb_residual=float(np.max(np.abs(cb), initial=0.0)),
        cons_residual=float(np.max(np.abs(cons), initial=0.0)),
        iterations=total_it,
        converged=bool(ok and u.min() > 0),
    )


def _gauss_newton(F, x, tol, max_iter, offset):
    """Returns (x, iterations, converged, condition estimate of last Jacobian)."""
    cond = None

    def eval_(x):
        r, J, cb, cons = F(x)
        if offset is not None:
            r = r - offset
        return r, J

    r, J = eval_(x)
    for it in range(1, max_iter + 1):
        if np.max(np.abs(r), initial=0.0) <= tol:
            # one extra Newton step, kept only if it reduces the residual
            step, *_ = np.linalg.lstsq(J, -r, rcond=None)
            rn, _ = eval_(x + step)
            if np.all(np.isfinite(rn)) and np.linalg.norm(rn) < np.linalg.norm(r):
                x = x + step
            return x, it - 1, True, cond
        sv = np.linalg.svd(J, compute_uv=False)
        cond = float(sv[0] / sv[-1]) if sv.size and sv[-1] > 0 else math.inf
        step, *_ = np.linalg.lstsq(J, -r, rcond=None)
        norm0 = np.linalg.norm(r)
        t = 1.0
        while True:
            xn = x + t * step
            # iterates must stay strictly positive after exponentiation
            if np.exp(xn).min() > 0 and np.isfinite(xn).all():
                rn, Jn = eval_(xn)
                if np.all(np.isfinite(rn)) and np.linalg.norm(rn) <= (1.0 - 1e-4 * t) * norm0:
                    break
            t *= 0.5
            if t < 2.0**-20:
                return x, it, False, cond
        x, r, J = xn, rn, Jn
    return x, max_iter, bool(np.max(np.abs(r), initial=0.0) <= tol), cond


def special_equilibrium(M: float) -> tuple[float, float, float]:
    """Equilibrium (z^4, z^2, z) of S1 <=> 2 S2, S2 <=> 2 S3 with 4u1 + 2u2 + u3 = M.

    z is the unique positive root of 4z^4 + 2z^2 + z = M: bisection to a
    tight bracket, then Newton polishing.
    """
    if not M > 0:
        raise ValueError(f"total mass must be positive, got {M}")

    def f(z):
        return 4 * z**4 + 2 * z**2 + z - M

    lo, hi = 0.0, max(M, 1.0)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if f(mid) > 0:
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-12 * hi:
            break
    z = 0.5 * (lo + hi)
    for _ in range(5):
        dz = f(z) / (16 * z**3 + 4 * z + 1)
        z -= dz
        if abs(dz) <= 1e-16 * z:
            break
    return z**4, z**2, z
