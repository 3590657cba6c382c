"""Scenario files: ``section.key = value`` lines resolved into run inputs.

Keys (``<S>`` is a species name, ``<p>`` a profile id)::

    preset                  free-form name
    network.file            path to a network text file (relative to the scenario)
    network.line            one reaction line; repeatable, appended in order
    grid.dim, grid.n
    profile.<p>.mask        full | intervals a:b, c:d | rects ax:bx/ay:by, ... | random <fraction> <seed>
    profile.<p>.inside      value on the mask, also its lower bound (default 1)
    profile.<p>.outside     value off the mask (default 0)
    diffusion.<S>.kind      constant | masked | vanishing   (diffusion.default.* for the rest)
    diffusion.<S>.value     constant value
    diffusion.<S>.mask/.inside/.outside   masked profile
    diffusion.<S>.x0/.p     vanishing profile |x - x0|^p
    diffusion.<S>.eps       added shift d + eps (default 0)
    initial.kind            uniform | cosine | step | random
    initial.base            per-species values
    initial.amplitude       cosine: u = base * (1 + amplitude * cos(pi x) [cos(pi y)])
    initial.right, .split   step: base left of x = split, right beyond it
    initial.roughness, .seed   random: base * lognormal(roughness)
    sim.dt, sim.t_end, sim.record_every, sim.scheme, sim.positivity_floor,
    sim.saturation_eps, sim.hp_powers, sim.check_entropy, sim.snapshot_every
    equilibrium.method      cbe | special
    equilibrium.totals      conserved totals (default: from the initial data)
    probe.n, probe.seed, probe.roughness
    sweep.fractions, sweep.seeds, sweep.mode, sweep.dt, sweep.t_end
    eps.list, eps.species
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .network import ReactionNetwork, parse_network
from .spatial import (
    Fields,
    Grid,
    SubdomainMask,
    coefficient_field,
    diffusion_constant,
    diffusion_masked,
    diffusion_vanishing,
    make_grid,
    mask_from_intervals,
    mask_full,
    mask_random,
)
from .simulate import SimConfig, State

PRESETS = ("fig1a", "fig1b", "thm2-measurable", "thm3-degenerate", "remark-2x2-disjoint")

_KEY = re.compile(r"[a-z][a-z0-9_]*(\.[A-Za-z0-9_]+)*$")
_FIXED = {
    "preset", "network.file", "network.line", "grid.dim", "grid.n",
    "initial.kind", "initial.base", "initial.amplitude", "initial.right", "initial.split",
    "initial.roughness", "initial.seed",
    "sim.dt", "sim.t_end", "sim.record_every", "sim.scheme", "sim.positivity_floor",
    "sim.saturation_eps", "sim.hp_powers", "sim.check_entropy", "sim.snapshot_every",
    "equilibrium.method", "equilibrium.totals",
    "probe.n", "probe.seed", "probe.roughness",
    "sweep.fractions", "sweep.seeds", "sweep.mode", "sweep.dt", "sweep.t_end",
    "eps.list", "eps.species",
}
_PROFILE_KEYS = {"mask", "inside", "outside"}
_DIFFUSION_KEYS = {"kind", "value", "mask", "inside", "outside", "x0", "p", "eps"}


class ScenarioError(ValueError):
    pass


@dataclass
class Resolved:
    net: ReactionNetwork
    grid: Grid
    fields: Fields
    masks: dict[str, SubdomainMask]
    u0: State
    cfg: SimConfig


class Scenario:
    """Ordered key/value pairs; ``network.line`` may repeat."""

    def __init__(self, items: list[tuple[str, str]], base_dir: Path | None = None):
        self.items = list(items)
        self.base_dir = base_dir or Path.cwd()
        self._check_keys()

    # ---- loading -------------------------------------------------------
    @classmethod
    def from_text(cls, text: str, base_dir: Path | None = None) -> "Scenario":
        items = []
        for lineno, line in enumerate(text.splitlines(), 1):
            body = line.strip()
            if not body or body.startswith("#"):
                continue
            if "=" not in body:
                raise ScenarioError(f"line {lineno}: expected 'key = value'")
            key, value = body.split("=", 1)
            key = key.strip()
            value = value.split(" #", 1)[0].strip() if not key.startswith("network.line") else value.strip()
            if not _KEY.match(key):
                raise ScenarioError(f"line {lineno}: bad key {key!r}")
            items.append((key, value))
        return cls(items, base_dir)

    @classmethod
    def from_file(cls, path) -> "Scenario":
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ScenarioError(f"cannot read scenario {path}: {exc}") from exc
        return cls.from_text(text, path.parent)

    @classmethod
    def preset(cls, name: str) -> "Scenario":
        if name not in PRESETS:
            raise ScenarioError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
        text = resources.files("rdentropy").joinpath("presets").joinpath(f"{name}.scn").read_text()
        return cls.from_text(text)

    def _check_keys(self):
        seen = set()
        for key, _ in self.items:
            if key != "network.line" and key in seen:
                raise ScenarioError(f"duplicate key {key!r}")
            seen.add(key)
            parts = key.split(".")
            if key in _FIXED:
                continue
            if parts[0] == "profile" and len(parts) == 3 and parts[2] in _PROFILE_KEYS:
                continue
            if parts[0] == "diffusion" and len(parts) == 3 and parts[2] in _DIFFUSION_KEYS:
                continue
            raise ScenarioError(f"unknown key {key!r}")

    # ---- access --------------------------------------------------------
    def get(self, key: str, default=None):
        for k, v in self.items:
            if k == key:
                return v
        return default

    def floats(self, key: str, default=None) -> list[float] | None:
        v = self.get(key)
        if v is None:
            return default
        try:
            return [float(x) for x in v.replace(",", " ").split()]
        except ValueError:
            raise ScenarioError(f"{key}: expected numbers, got {v!r}") from None

    def number(self, key: str, default=None, kind=float):
        v = self.get(key)
        if v is None:
            return default
        try:
            return kind(v) if kind is not int else int(float(v))
        except ValueError:
            raise ScenarioError(f"{key}: expected a number, got {v!r}") from None

    def with_values(self, updates: dict[str, str]) -> "Scenario":
        items = [(k, updates.get(k, v)) for k, v in self.items]
        present = {k for k, _ in items}
        items += [(k, v) for k, v in updates.items() if k not in present]
        return Scenario(items, self.base_dir)

    @property
    def name(self) -> str:
        return self.get("preset", "custom")

    def canonical_text(self) -> str:
        lines = [f"{k} = {v}" for k, v in self.items if k == "network.line"]
        lines += sorted(f"{k} = {v}" for k, v in self.items if k != "network.line")
        return "\n".join(lines) + "\n"

    def hash(self) -> str:
        return hashlib.sha256(self.canonical_text().encode()).hexdigest()[:16]

    # ---- resolution ----------------------------------------------------
    def network(self) -> ReactionNetwork:
        lines = [v for k, v in self.items if k == "network.line"]
        path = self.get("network.file")
        if path and lines:
            raise ScenarioError("give network.file or network.line, not both")
        if path:
            p = Path(path)
            p = p if p.is_absolute() else self.base_dir / p
            try:
                text = p.read_text()
            except OSError as exc:
                raise ScenarioError(f"cannot read network file {p}: {exc}") from exc
        elif lines:
            text = "\n".join(lines)
        else:
            raise ScenarioError("scenario has no network")
        return parse_network(text)

    def grid(self) -> Grid:
        try:
            return make_grid(self.number("grid.dim", 1, int), self.number("grid.n", 100, int))
        except ValueError as exc:
            raise ScenarioError(str(exc)) from exc

    def sim_config(self, **overrides) -> SimConfig:
        hp = self.floats("sim.hp_powers", [])
        kw = dict(
            dt=self.number("sim.dt", 1e-4),
            t_end=self.number("sim.t_end", 1.0),
            record_every=self.number("sim.record_every", 10, int),
            scheme=self.get("sim.scheme", "imex-be"),
            positivity_floor=self.number("sim.positivity_floor", 0.0),
            saturation_eps=self.number("sim.saturation_eps", 0.0),
            hp_powers=tuple(int(p) for p in hp),
            check_entropy=_bool(self.get("sim.check_entropy", "true")),
            snapshot_every=self.number("sim.snapshot_every", 0, int),
        )
        kw.update({k: v for k, v in overrides.items() if v is not None})
        try:
            return SimConfig(**kw)
        except ValueError as exc:
            raise ScenarioError(str(exc)) from exc

    def resolve(self) -> Resolved:
        """Build every run input; raises ScenarioError before any work starts."""
        try:
            net = self.network()
            grid = self.grid()
            masks: dict[str, SubdomainMask] = {}
            alpha = {}
            for p in net.profiles:
                spec = self.get(f"profile.{p}.mask")
                if spec is None:
                    raise ScenarioError(f"profile {p!r} used by the network has no mask")
                masks[p] = parse_mask(grid, spec)
                alpha[p] = coefficient_field(
                    grid, masks[p], self.number(f"profile.{p}.inside", 1.0), self.number(f"profile.{p}.outside", 0.0)
                )
            for k, _ in self.items:
                parts = k.split(".")
                if parts[0] == "profile" and parts[1] not in net.profiles:
                    raise ScenarioError(f"profile {parts[1]!r} is not used by the network")
                if parts[0] == "diffusion" and parts[1] != "default" and parts[1] not in net.species:
                    raise ScenarioError(f"diffusion given for unknown species {parts[1]!r}")
            diffusion = tuple(self._diffusion(grid, s) for s in net.species)
            u0 = self._initial(net, grid)
            cfg = self.sim_config()
        except ScenarioError:
            raise
        except (ValueError, KeyError) as exc:
            raise ScenarioError(str(exc)) from exc
        return Resolved(net, grid, Fields(alpha, diffusion), masks, u0, cfg)

    def _dget(self, species: str, key: str):
        v = self.get(f"diffusion.{species}.{key}")
        return self.get(f"diffusion.default.{key}") if v is None else v

    def _diffusion(self, grid: Grid, species: str):
        kind = self._dget(species, "kind") or "constant"

        def num(key, default=None):
            v = self._dget(species, key)
            if v is None:
                if default is None:
                    raise ScenarioError(f"diffusion.{species}.{key} is required for kind {kind!r}")
                return default
            return float(v)

        if kind == "constant":
            d = diffusion_constant(grid, num("value"))
        elif kind == "masked":
            spec = self._dget(species, "mask")
            if spec is None:
                raise ScenarioError(f"diffusion.{species}.mask is required for kind 'masked'")
            d = diffusion_masked(grid, parse_mask(grid, spec), num("inside"), num("outside", 0.0))
        elif kind == "vanishing":
            x0 = self._dget(species, "x0")
            if x0 is None:
                raise ScenarioError(f"diffusion.{species}.x0 is required for kind 'vanishing'")
            d = diffusion_vanishing(grid, [float(x) for x in x0.replace(",", " ").split()], num("p", 1.0))
        else:
            raise ScenarioError(f"unknown diffusion kind {kind!r}")
        eps = num("eps", 0.0)
        return d.shifted(eps) if eps > 0 else d

    def _initial(self, net: ReactionNetwork, grid: Grid) -> State:
        kind = self.get("initial.kind", "uniform")
        base = np.array(self.floats("initial.base", [1.0] * net.m))
        if base.size != net.m:
            raise ScenarioError(f"initial.base needs {net.m} values")
        x = grid.centers
        if kind == "uniform":
            u = np.repeat(base[:, None], grid.size, axis=1)
        elif kind == "cosine":
            amp = np.array(self.floats("initial.amplitude", [0.5] * net.m))
            if amp.size != net.m:
                raise ScenarioError(f"initial.amplitude needs {net.m} values")
            shape = np.prod(np.cos(np.pi * x), axis=1)
            u = base[:, None] * (1.0 + amp[:, None] * shape[None, :])
        elif kind == "step":
            right = np.array(self.floats("initial.right", list(base)))
            split = self.number("initial.split", 0.5)
            u = np.where(x[:, 0][None, :] < split, base[:, None], right[:, None])
        elif kind == "random":
            rng = np.random.default_rng(self.number("initial.seed", 0, int))
            sigma = self.number("initial.roughness", 0.5)
            u = base[:, None] * np.exp(sigma * rng.standard_normal((net.m, grid.size)))
        else:
            raise ScenarioError(f"unknown initial.kind {kind!r}")
        return State(u)


def parse_mask(grid: Grid, spec: str) -> SubdomainMask:
    parts = spec.split(None, 1)
    kind = parts[0] if parts else ""
    rest = parts[1] if len(parts) > 1 else ""
    try:
        if kind == "full":
            return mask_full(grid)
        if kind == "intervals":
            ivs = [tuple(float(v) for v in item.split(":")) for item in rest.split(",") if item.strip()]
            if grid.dim != 1:
                raise ScenarioError("use 'rects' masks on 2D grids")
            return mask_from_intervals(grid, ivs)
        if kind == "rects":
            boxes = []
            for item in rest.split(","):
                if item.strip():
                    boxes.append(tuple(tuple(float(v) for v in ax.split(":")) for ax in item.split("/")))
            return mask_from_intervals(grid, boxes)
        if kind == "random":
            frac, seed = rest.split()
            return mask_random(grid, float(frac), int(seed))
    except ScenarioError:
        raise
    except ValueError as exc:
        raise ScenarioError(f"bad mask {spec!r}: {exc}") from exc
    raise ScenarioError(f"unknown mask kind in {spec!r}")


def _bool(v: str) -> bool:
    if v.lower() in ("1", "true", "yes", "on"):
        return True
    if v.lower() in ("0", "false", "no", "off"):
        return False
    raise ScenarioError(f"expected a boolean, got {v!r}")
