"""Chemical reaction networks: parsing, stoichiometry, conservation laws and
the complex graph.

Text format, one reaction per line, ``#`` starts a comment::

    species: S1, S2, S3          # optional; fixes species order
    S1 <=> 2 S2 @ 1 k1            # reversible, shared rate constant
    S2 <=> 2 S3 @ 1,0.5 k2        # reversible, forward/backward constants
    S1 -> S2 + S3 @ 2.0 alpha1    # irreversible

The trailing identifier names the spatial profile ``alpha_l(x)`` the rate
constant multiplies, i.e. ``k_r(x) = beta_r * alpha_{profile_r}(x)``.
"""

from __future__ import annotations

import math
import re
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from functools import reduce
from typing import Iterable, Sequence

import numpy as np

from .graph import strongly_connected_components

COMPLEX_TOL = 1e-12


class NetworkError(ValueError):
    """Invalid network content (bad rate constant, duplicate reaction, ...)."""


class NetworkSyntaxError(NetworkError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


@dataclass(frozen=True, eq=False)
class Complex:
    """Formal nonnegative combination of species, stored sparsely."""

    coefficients: tuple[tuple[int, float], ...]

    @classmethod
    def from_mapping(cls, mapping: dict[int, float]) -> "Complex":
        for idx, c in mapping.items():
            if not c >= 0 or not math.isfinite(c):
                raise NetworkError(f"stoichiometric coefficient {c!r} for species {idx} must be finite and >= 0")
        return cls(tuple(sorted((i, float(c)) for i, c in mapping.items() if c != 0)))

    def as_dict(self) -> dict[int, float]:
        return dict(self.coefficients)

    def vector(self, m: int) -> np.ndarray:
        v = np.zeros(m)
        for i, c in self.coefficients:
            v[i] = c
        return v

    def matches(self, other: "Complex", tol: float = COMPLEX_TOL) -> bool:
        a, b = self.as_dict(), other.as_dict()
        return all(abs(a.get(k, 0.0) - b.get(k, 0.0)) <= tol for k in set(a) | set(b))

    def label(self, species: Sequence[str]) -> str:
        if not self.coefficients:
            return "0"
        parts = []
        for i, c in self.coefficients:
            parts.append(species[i] if c == 1 else f"{_fmt(c)} {species[i]}")
        return " + ".join(parts)


@dataclass(frozen=True)
class Reaction:
    reactant: int
    product: int
    beta: float
    profile_id: str
    component: int = -1


@dataclass(frozen=True, eq=False)
class ReactionNetwork:
    """Immutable reaction network with derived structure.

    Reactions are stored relabeled so that every linkage component occupies a
    contiguous index range ``components[l]``.
    """

    species: tuple[str, ...]
    complexes: tuple[Complex, ...]
    reactions: tuple[Reaction, ...]
    stoich: np.ndarray = field(repr=False)
    cons_basis: np.ndarray = field(repr=False)
    complex_component: np.ndarray = field(repr=False)
    components: tuple[range, ...] = ()

    @property
    def m(self) -> int:
        return len(self.species)

    @property
    def n_reactions(self) -> int:
        return len(self.reactions)

    @property
    def n_conservation(self) -> int:
        return self.cons_basis.shape[0]

    @property
    def profiles(self) -> tuple[str, ...]:
        seen: dict[str, None] = {}
        for r in self.reactions:
            seen.setdefault(r.profile_id, None)
        return tuple(seen)

    @property
    def betas(self) -> np.ndarray:
        return np.array([r.beta for r in self.reactions], dtype=float)

    @property
    def complex_matrix(self) -> np.ndarray:
        """Complexes as rows of an (n_complexes, m) matrix."""
        return np.array([c.vector(self.m) for c in self.complexes]).reshape(len(self.complexes), self.m)

    @property
    def reactant_matrix(self) -> np.ndarray:
        """Column r is y_r, shape (m, R)."""
        C = self.complex_matrix
        return C[[r.reactant for r in self.reactions]].T.reshape(self.m, self.n_reactions)

    @property
    def product_matrix(self) -> np.ndarray:
        C = self.complex_matrix
        return C[[r.product for r in self.reactions]].T.reshape(self.m, self.n_reactions)

    def species_index(self, name: str) -> int:
        try:
            return self.species.index(name)
        except ValueError:
            raise KeyError(f"unknown species {name!r}") from None

    def reaction_label(self, r: int) -> str:
        rx = self.reactions[r]
        return (
            f"{self.complexes[rx.reactant].label(self.species)} -> "
            f"{self.complexes[rx.product].label(self.species)}"
        )

    def to_text(self) -> str:
        """Serialize to the line format; ``parse_network`` round-trips it."""
        lines = ["species: " + ", ".join(self.species)]
        for r, rx in enumerate(self.reactions):
            lines.append(f"{self.reaction_label(r)} @ {rx.beta!r} {rx.profile_id}")
        return "\n".join(lines) + "\n"

    # ---- construction -------------------------------------------------
    @classmethod
    def build(
        cls,
        species: Sequence[str],
        reactions: Sequence[tuple[Complex, Complex, float, str]],
    ) -> "ReactionNetwork":
        """Validate raw reactions, relabel by linkage component, derive W and q."""
        species = tuple(species)
        if len(set(species)) != len(species):
            raise NetworkError("duplicate species names")
        raw: list[tuple[Complex, Complex, float, str]] = []
        for y, yp, beta, profile in reactions:
            if not (beta > 0 and math.isfinite(beta)):
                raise NetworkError(f"rate constant beta must be > 0, got {beta!r}")
            if y.matches(yp):
                raise NetworkError("reactant and product complexes coincide")
            for yy, yyp, _, _ in raw:
                if yy.matches(y) and yyp.matches(yp):
                    raise NetworkError(f"duplicate reaction {y.label(species)} -> {yp.label(species)}")
            raw.append((y, yp, float(beta), profile))

        # group reactions by the SCC of their reactant, groups ordered by
        # their smallest original reaction index (stable inside a group)
        cplx, edges = _index_complexes([(y, yp) for y, yp, _, _ in raw])
        labels = _scc_labels(len(cplx), edges)
        group_of_label: dict[int, int] = {}
        for a, _ in edges:
            group_of_label.setdefault(labels[a], len(group_of_label))
        order = sorted(range(len(raw)), key=lambda r: (group_of_label[labels[edges[r][0]]], r))
        raw = [raw[r] for r in order]

        cplx, edges = _index_complexes([(y, yp) for y, yp, _, _ in raw])
        labels = _scc_labels(len(cplx), edges)
        group_of_label = {}
        for a, _ in edges:
            group_of_label.setdefault(labels[a], len(group_of_label))
        rxns = tuple(
            Reaction(a, b, beta, profile, group_of_label[labels[a]])
            for (a, b), (_, _, beta, profile) in zip(edges, raw)
        )
        comps = []
        for g in range(len(group_of_label)):
            idx = [r for r, rx in enumerate(rxns) if rx.component == g]
            comps.append(range(idx[0], idx[-1] + 1))

        m = len(species)
        W = np.zeros((m, len(rxns)))
        for r, rx in enumerate(rxns):
            W[:, r] = cplx[rx.product].vector(m) - cplx[rx.reactant].vector(m)
        return cls(
            species=species,
            complexes=tuple(cplx),
            reactions=rxns,
            stoich=W,
            cons_basis=conservation_basis(W),
            complex_component=np.asarray(labels, dtype=int),
            components=tuple(comps),
        )


def _fmt(c: float) -> str:
    return str(int(c)) if float(c).is_integer() else repr(float(c))


def _index_complexes(pairs: Iterable[tuple[Complex, Complex]]) -> tuple[list[Complex], list[tuple[int, int]]]:
    cplx: list[Complex] = []

    def lookup(c: Complex) -> int:
        for i, d in enumerate(cplx):
            if d.matches(c):
                return i
        cplx.append(c)
        return len(cplx) - 1

    edges = []
    for y, yp in pairs:
        a = lookup(y)
        b = lookup(yp)
        edges.append((a, b))
    return cplx, edges


def _scc_labels(n: int, edges: Sequence[tuple[int, int]]) -> list[int]:
    """SCC id per vertex, components numbered by their lowest vertex index."""
    succ: list[list[int]] = [[] for _ in range(n)]
    for a, b in edges:
        succ[a].append(b)
    sccs = sorted((sorted(c) for c in strongly_connected_components(n, succ)), key=lambda c: c[0])
    labels = [0] * n
    for k, comp in enumerate(sccs):
        for v in comp:
            labels[v] = k
    return labels


# ---------------------------------------------------------------------------
# conservation laws


def conservation_basis(W: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Basis of ker(W^T) as rows of a (K, m) array, K = m - rank(W).

    Gauss-Jordan elimination on W^T with partial pivoting; a column is
    treated as free when its best remaining pivot is below ``tol`` times the
    largest entry of W. Vectors whose entries are rational with denominator
    <= 12 are rescaled to the smallest integer representative with a positive
    leading entry; others are normalized to unit length.
    """
    W = np.asarray(W, dtype=float)
    if W.ndim != 2:
        raise ValueError("W must be a 2-d array")
    if not np.all(np.isfinite(W)):
        raise ValueError("W must be finite")
    m = W.shape[0]
    A = W.T.copy()
    scale = max(1.0, float(np.abs(A).max(initial=0.0)))
    pivots: list[int] = []
    row = 0
    for col in range(m):
        if row >= A.shape[0]:
            break
        p = row + int(np.argmax(np.abs(A[row:, col])))
        if abs(A[p, col]) <= tol * scale:
            A[row:, col] = 0.0
            continue
        A[[row, p]] = A[[p, row]]
        A[row] /= A[row, col]
        others = np.arange(A.shape[0]) != row
        A[others] -= np.outer(A[others, col], A[row])
        pivots.append(col)
        row += 1
    free = [c for c in range(m) if c not in pivots]
    basis = []
    for f in free:
        q = np.zeros(m)
        q[f] = 1.0
        for r, pc in enumerate(pivots):
            q[pc] = -A[r, f]
        basis.append(_normalize_vector(q))
    return np.array(basis, dtype=float).reshape(len(basis), m)


def _normalize_vector(q: np.ndarray, max_den: int = 12) -> np.ndarray:
    fracs = [Fraction(float(x)).limit_denominator(max_den) for x in q]
    if all(abs(float(f) - x) <= 1e-9 * max(1.0, abs(x)) for f, x in zip(fracs, q)):
        lcm = reduce(lambda a, b: a * b // math.gcd(a, b), (f.denominator for f in fracs), 1)
        ints = [int(f * lcm) for f in fracs]
        g = reduce(math.gcd, (abs(i) for i in ints if i), 0) or 1
        out = np.array([i // g for i in ints], dtype=float)
    else:
        out = q / np.linalg.norm(q)
    nz = np.flatnonzero(out)
    if nz.size and out[nz[0]] < 0:
        out = -out
    return out + 0.0


# ---------------------------------------------------------------------------
# graph structure


def linkage_decompose(net: ReactionNetwork) -> np.ndarray:
    """SCC id of every complex; ids ordered by the lowest complex index."""
    edges = [(r.reactant, r.product) for r in net.reactions]
    return np.asarray(_scc_labels(len(net.complexes), edges), dtype=int)


def check_assumption_A(net: ReactionNetwork) -> tuple[bool, list[int]]:
    """True iff no reaction joins two different strongly connected components.

    Returns the verdict and the indices of offending reactions.
    """
    labels = linkage_decompose(net)
    bad = [r for r, rx in enumerate(net.reactions) if labels[rx.reactant] != labels[rx.product]]
    return not bad, bad


def profile_consistency(net: ReactionNetwork) -> dict[int, list[str]]:
    """Profiles used per reaction component; consistent when each has one."""
    return {l: sorted({net.reactions[r].profile_id for r in rng}) for l, rng in enumerate(net.components)}


# ---------------------------------------------------------------------------
# kinetics


def monomials(u: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """u^y for each column y of Y (m, n). ``u`` is (m,) or (m, N); 0^0 = 1."""
    u = np.asarray(u, dtype=float)
    out = np.ones((Y.shape[1],) + u.shape[1:])
    for j in range(Y.shape[1]):
        for i in np.flatnonzero(Y[:, j]):
            c = Y[i, j]
            out[j] = out[j] * (u[i] ** (int(c) if float(c).is_integer() else c))
    return out


def mass_action_rates(net: ReactionNetwork, k, u) -> np.ndarray:
    """Species production rates sum_r k_r (y_r' - y_r) u^{y_r}.

    ``k`` is (R,) or (R, N) and ``u`` is (m,) or (m, N).
    """
    k = np.asarray(k, dtype=float)
    u = np.asarray(u, dtype=float)
    if np.isnan(k).any() or np.isnan(u).any():
        raise ValueError("NaN in rate constants or concentrations")
    if (k < 0).any():
        raise ValueError("rate constants must be >= 0")
    if (u < 0).any():
        raise ValueError("concentrations must be >= 0")
    if k.shape[0] != net.n_reactions or u.shape[0] != net.m:
        raise ValueError("k or u has the wrong leading dimension")
    return _rates(net.stoich, net.reactant_matrix, k, u)


def _rates(W: np.ndarray, Y: np.ndarray, k: np.ndarray, u: np.ndarray) -> np.ndarray:
    flux = k * monomials(u, Y)
    return np.tensordot(W, flux, axes=(1, 0))


def conserved_totals(net: ReactionNetwork, u: np.ndarray, grid) -> np.ndarray:
    """Integrals of q_j . u over the unit-measure domain (cell quadrature)."""
    u = np.asarray(u, dtype=float)
    if u.shape != (net.m, grid.size):
        raise ValueError(f"state shape {u.shape} does not match ({net.m}, {grid.size})")
    means = u.sum(axis=1) * grid.cell_measure
    return net.cons_basis @ means


# ---------------------------------------------------------------------------
# parsing

_NAME = r"[A-Za-z][A-Za-z0-9_]*"
_NUM = r"(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][-+]?\d+)?"
_TERM = re.compile(rf"\s*(?:({_NUM})\s*)?({_NAME})\s*$")
_RATE = re.compile(rf"\s*([-+]?{_NUM})\s*(?:,\s*([-+]?{_NUM})\s*)?\s+({_NAME})\s*$")


def parse_network(text: str) -> ReactionNetwork:
    declared: list[str] | None = None
    found: list[str] = []
    raw: list[tuple[dict[str, float], dict[str, float], float, str]] = []

    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0]
        if not body.strip():
            continue
        stripped = body.strip()
        if stripped.lower().startswith("species:"):
            names = [s.strip() for s in stripped[len("species:"):].split(",") if s.strip()]
            for s in names:
                if not re.fullmatch(_NAME, s):
                    raise NetworkSyntaxError(f"bad species name {s!r}", lineno, body.index(s) + 1)
            declared = (declared or []) + names
            continue

        if "@" not in body:
            raise NetworkSyntaxError("missing '@ <beta> <profile>'", lineno, len(body.rstrip()) + 1)
        eq, rate = body.split("@", 1)
        rate_col = len(eq) + 2
        if "<=>" in eq:
            lhs, rhs = eq.split("<=>", 1)
            reversible = True
            arrow = "<=>"
        elif "->" in eq:
            lhs, rhs = eq.split("->", 1)
            reversible = False
            arrow = "->"
        else:
            raise NetworkSyntaxError("missing '->' or '<=>'", lineno, 1)
        lhs_d = _parse_side(lhs, lineno, 1)
        rhs_d = _parse_side(rhs, lineno, len(lhs) + len(arrow) + 1)

        mo = _RATE.match(rate)
        if not mo:
            raise NetworkSyntaxError("expected '<beta>[,<beta_back>] <profile_id>'", lineno, rate_col)
        b_fwd = float(mo.group(1))
        b_bwd = float(mo.group(2)) if mo.group(2) is not None else None
        profile = mo.group(3)
        if b_bwd is not None and not reversible:
            raise NetworkSyntaxError("two rate constants given for an irreversible reaction", lineno, rate_col)
        for b in (b_fwd, b_bwd):
            if b is not None and not b > 0:
                raise NetworkError(f"line {lineno}: rate constant beta must be > 0, got {b}")
        for side in (lhs_d, rhs_d):
            for s, c in side.items():
                if 0 < c < 1:
                    warnings.warn(f"line {lineno}: coefficient {c} of {s} lies in (0, 1)", stacklevel=2)
                if s not in found:
                    found.append(s)
        raw.append((lhs_d, rhs_d, b_fwd, profile))
        if reversible:
            raw.append((rhs_d, lhs_d, b_fwd if b_bwd is None else b_bwd, profile))

    if declared is not None:
        unknown = [s for s in found if s not in declared]
        if unknown:
            raise NetworkError(f"species {unknown} not declared in the species list")
        species = declared
    else:
        species = found
    index = {s: i for i, s in enumerate(species)}
    reactions = [
        (
            Complex.from_mapping({index[s]: c for s, c in y.items()}),
            Complex.from_mapping({index[s]: c for s, c in yp.items()}),
            beta,
            profile,
        )
        for y, yp, beta, profile in raw
    ]
    return ReactionNetwork.build(species, reactions)


def _parse_side(side: str, lineno: int, col0: int) -> dict[str, float]:
    out: dict[str, float] = {}
    offset = 0
    for term in side.split("+"):
        mo = _TERM.match(term)
        if not mo:
            raise NetworkSyntaxError(f"cannot parse term {term.strip()!r}", lineno, col0 + offset)
        coeff = float(mo.group(1)) if mo.group(1) else 1.0
        name = mo.group(2)
        out[name] = out.get(name, 0.0) + coeff
        offset += len(term) + 1
    return out
