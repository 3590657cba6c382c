"""Unit-measure cell-centred grids, subdomain masks and coefficient fields."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import splu


@dataclass(frozen=True)
class Grid:
    """Uniform grid of n cells per axis on [0,1]^dim (total measure 1).

    Cells are flattened in C order, so in 2D cell ``(ix, iy)`` has index
    ``ix * n + iy``.
    """

    dim: int
    n: int

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if self.n < 2:
            raise ValueError(f"need at least 2 cells per axis, got {self.n}")

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def size(self) -> int:
        return self.n**self.dim

    @property
    def cell_measure(self) -> float:
        return self.h**self.dim

    @cached_property
    def centers(self) -> np.ndarray:
        """Cell centres, shape (size, dim)."""
        c = (np.arange(self.n) + 0.5) * self.h
        if self.dim == 1:
            return c[:, None]
        X, Y = np.meshgrid(c, c, indexing="ij")
        return np.column_stack([X.ravel(), Y.ravel()])

    @cached_property
    def faces(self) -> tuple[np.ndarray, np.ndarray]:
        """Interior faces as (left, right) cell index arrays."""
        n = self.n
        if self.dim == 1:
            left = np.arange(n - 1)
            return left, left + 1
        idx = np.arange(self.size).reshape(n, n)
        left = np.concatenate([idx[:-1, :].ravel(), idx[:, :-1].ravel()])
        right = np.concatenate([idx[1:, :].ravel(), idx[:, 1:].ravel()])
        return left, right

    def mean(self, values: np.ndarray) -> np.ndarray:
        """Integral over the unit domain along the last axis."""
        return np.asarray(values).sum(axis=-1) * self.cell_measure


def make_grid(dim: int, n: int) -> Grid:
    return Grid(dim, n)


@dataclass(frozen=True, eq=False)
class SubdomainMask:
    member: np.ndarray
    cell_measure: float

    @property
    def count(self) -> int:
        return int(self.member.sum())

    @property
    def measure(self) -> float:
        return self.count * self.cell_measure


def mask_full(grid: Grid) -> SubdomainMask:
    return SubdomainMask(np.ones(grid.size, dtype=bool), grid.cell_measure)


def mask_from_intervals(grid: Grid, intervals: Sequence) -> SubdomainMask:
    """Cells whose centres lie in a union of intervals (1D) or rectangles (2D).

    In 2D each entry is ``((ax, bx), (ay, by))``.
    """
    member = np.zeros(grid.size, dtype=bool)
    for box in intervals:
        if grid.dim == 1:
            box = (box,)
        if len(box) != grid.dim:
            raise ValueError(f"expected {grid.dim} interval(s) per box, got {box!r}")
        inside = np.ones(grid.size, dtype=bool)
        for axis, (a, b) in enumerate(box):
            if not 0.0 <= a <= b <= 1.0:
                raise ValueError(f"interval ({a}, {b}) not within [0, 1]")
            c = grid.centers[:, axis]
            inside &= (c >= a) & (c <= b)
        member |= inside
    if not member.any():
        raise ValueError("mask is empty")
    return SubdomainMask(member, grid.cell_measure)


def mask_random(grid: Grid, fraction: float, seed: int) -> SubdomainMask:
    """``round(fraction * size)`` cells drawn without replacement.

    For a fixed seed the masks are nested in ``fraction``: both draw a prefix
    of the same permutation.
    """
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must lie in (0, 1], got {fraction}")
    count = int(math.floor(fraction * grid.size + 0.5))
    if count < 1:
        raise ValueError(f"fraction {fraction} selects no cell on {grid.size} cells")
    perm = np.random.default_rng(seed).permutation(grid.size)
    member = np.zeros(grid.size, dtype=bool)
    member[perm[:count]] = True
    return SubdomainMask(member, grid.cell_measure)


@dataclass(frozen=True, eq=False)
class CoefficientField:
    """Reaction profile alpha_l(x) >= 0 with a lower bound on its mask."""

    values: np.ndarray
    lower_bound: float = 0.0
    mask: SubdomainMask | None = None

    def __post_init__(self):
        v = self.values
        if not np.all(np.isfinite(v)) or (v < 0).any():
            raise ValueError("coefficient values must be finite and >= 0")
        if self.mask is not None and (v[self.mask.member] < self.lower_bound).any():
            raise ValueError("coefficient below its declared lower bound on the mask")


def coefficient_field(grid: Grid, mask: SubdomainMask, inside: float, outside: float = 0.0) -> CoefficientField:
    values = np.where(mask.member, float(inside), float(outside))
    return CoefficientField(values, lower_bound=float(inside), mask=mask)


@dataclass(frozen=True, eq=False)
class DiffusionField:
    """Scalar diffusivity of one species, one value per cell."""

    values: np.ndarray
    kind: str = "constant"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)) or (self.values < 0).any():
            raise ValueError("diffusion values must be finite and >= 0")

    def shifted(self, eps: float) -> "DiffusionField":
        """d + eps, the regularised diffusivity."""
        if eps < 0:
            raise ValueError("eps must be >= 0")
        params = dict(self.params, base_kind=self.params.get("base_kind", self.kind))
        params["eps"] = params.get("eps", 0.0) + eps
        return DiffusionField(self.values + eps, "shifted", params)


def diffusion_constant(grid: Grid, value: float) -> DiffusionField:
    return DiffusionField(np.full(grid.size, float(value)), "constant", {"value": float(value)})


def diffusion_masked(grid: Grid, mask: SubdomainMask, inside: float, outside: float) -> DiffusionField:
    values = np.where(mask.member, float(inside), float(outside))
    return DiffusionField(values, "masked", {"inside": float(inside), "outside": float(outside)})


def diffusion_vanishing(grid: Grid, x0, p: float = 1.0) -> DiffusionField:
    """d(x) = |x - x0|^p evaluated at cell centres."""
    if p < 1:
        raise ValueError(f"exponent p must be >= 1, got {p}")
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if x0.shape != (grid.dim,) or (x0 < 0).any() or (x0 > 1).any():
        raise ValueError(f"x0 must be a point of [0,1]^{grid.dim}")
    dist = np.linalg.norm(grid.centers - x0, axis=1)
    return DiffusionField(dist**p, "vanishing", {"x0": x0.tolist(), "p": float(p)})


# ---------------------------------------------------------------------------
# finite-volume operators


def face_diffusivity(grid: Grid, d: np.ndarray) -> np.ndarray:
    """Harmonic mean of neighbouring cell values on every interior face."""
    left, right = grid.faces
    a, b = d[left], d[right]
    s = a + b
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(s > 0, 2.0 * a * b / np.where(s > 0, s, 1.0), 0.0)


def neumann_operator(grid: Grid, face_weights: np.ndarray) -> sp.csr_matrix:
    """Matrix A with (A u)_c = sum over faces of w_f (u_nb - u_c) / h^2.

    Zero flux on the boundary. A is symmetric, negative semidefinite and its
    columns sum to zero, so integrals of A u vanish.
    """
    left, right = grid.faces
    w = np.asarray(face_weights, dtype=float) / grid.h**2
    N = grid.size
    off = sp.coo_matrix((np.concatenate([w, w]), (np.concatenate([left, right]), np.concatenate([right, left]))), shape=(N, N))
    diag = np.bincount(left, w, N) + np.bincount(right, w, N)
    return (off - sp.diags(diag)).tocsr()


def poincare_constant(grid: Grid, mask: SubdomainMask, rtol: float = 1e-8, max_iter: int = 500) -> float:
    """Smallest nonzero eigenvalue of the Neumann Laplacian on the masked cells.

    Returns 0 when the masked cell graph is disconnected and ``inf`` for a
    single cell (no nonconstant function exists).
    """
    cells = np.flatnonzero(mask.member)
    if cells.size == 0:
        raise ValueError("mask is empty")
    if cells.size == 1:
        return math.inf
    left, right = grid.faces
    keep = mask.member[left] & mask.member[right]
    L = -neumann_operator(grid, keep.astype(float))[cells][:, cells]
    ncomp, _ = connected_components(L, directed=False)
    if ncomp > 1:
        return 0.0

    L = L.tocsc()
    shift = 1e-10 * float(L.diagonal().max())
    lu = splu((L + shift * sp.identity(cells.size, format="csc")).tocsc())
    rng = np.random.default_rng(0)
    x = rng.standard_normal(cells.size)
    x -= x.mean()
    x /= np.linalg.norm(x)
    lam = np.inf
    for _ in range(max_iter):
        y = lu.solve(x)
        y -= y.mean()
        y /= np.linalg.norm(y)
        new = float(y @ (L @ y))
        x = y
        if abs(new - lam) <= rtol * abs(new):
            return new
        lam = new
    return lam


# ---------------------------------------------------------------------------
# csv export


def field_to_csv(path, values: np.ndarray, header: str = "cell,value") -> None:
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for i, v in enumerate(np.asarray(values, dtype=float)):
            fh.write(f"{i},{v!r}\n")


@dataclass(frozen=True, eq=False)
class Fields:
    """Reaction profiles by id and one diffusivity per species.

    ``modulation`` maps a profile id to a factor g(t) so that
    alpha(x, t) = g(t) * alpha(x); none of the shipped scenarios use it.
    """

    alpha: dict[str, CoefficientField]
    diffusion: tuple[DiffusionField, ...]
    modulation: dict | None = None

    def rate_matrix(self, net, t: float = 0.0) -> np.ndarray:
        """k_r(x) = beta_r * alpha_{profile_r}(x), shape (R, cells)."""
        rows = []
        for rx in net.reactions:
            try:
                a = self.alpha[rx.profile_id].values
            except KeyError:
                raise KeyError(f"no coefficient field for profile {rx.profile_id!r}") from None
            g = self.modulation.get(rx.profile_id) if self.modulation else None
            rows.append(rx.beta * a * (g(t) if g is not None else 1.0))
        size = self.diffusion[0].values.size if self.diffusion else 0
        return np.array(rows).reshape(len(rows), size) if rows else np.zeros((0, size))

    def with_diffusion(self, species: int, d: DiffusionField) -> "Fields":
        diff = list(self.diffusion)
        diff[species] = d
        return Fields(self.alpha, tuple(diff), self.modulation)

    def with_alpha(self, profile: str, c: CoefficientField) -> "Fields":
        return Fields({**self.alpha, profile: c}, self.diffusion, self.modulation)
