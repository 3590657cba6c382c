import json

import numpy as np
import pytest

from rdentropy import Scenario, ScenarioError
from rdentropy.cli import run
from rdentropy.scenario import PRESETS, parse_mask
from rdentropy import make_grid

SMALL = """
preset = small
network.line = S1 <=> 2 S2 @ 1 k1
network.line = S2 <=> 2 S3 @ 1 k2
grid.dim = 1
grid.n = 30
profile.k1.mask = random 0.3 4
profile.k2.mask = intervals 0.2:0.6
diffusion.default.kind = constant
diffusion.default.value = 1.0
initial.kind = random
initial.base = 2, 1, 1
initial.roughness = 0.3
initial.seed = 8
sim.dt = 1e-3
sim.t_end = 0.5
sim.record_every = 25
sim.hp_powers = 1
"""


@pytest.fixture
def small(tmp_path):
    path = tmp_path / "small.scn"
    path.write_text(SMALL)
    return path


@pytest.mark.parametrize("name", PRESETS)
def test_presets_resolve(name):
    res = Scenario.preset(name).resolve()
    assert res.u0.u.shape == (res.net.m, res.grid.size)


def test_unknown_preset():
    with pytest.raises(ScenarioError):
        Scenario.preset("nope")


@pytest.mark.parametrize(
    "extra, match",
    [
        ("bogus.key = 1", "unknown key"),
        ("grid.n = 40", "duplicate"),
        ("profile.k9.mask = full", "k9"),
        ("diffusion.S7.kind = constant", "S7"),
    ],
)
def test_scenario_validation(extra, match):
    with pytest.raises(ScenarioError, match=match):
        Scenario.from_text(SMALL + extra + "\n").resolve()


def test_missing_profile_mask():
    text = "\n".join(l for l in SMALL.splitlines() if not l.startswith("profile.k2"))
    with pytest.raises(ScenarioError):
        Scenario.from_text(text).resolve()


def test_hash_ignores_comments_and_order():
    a = Scenario.from_text(SMALL)
    lines = [l for l in SMALL.strip().splitlines()]
    b = Scenario.from_text("# note\n" + "\n".join(reversed(lines[3:])) + "\n" + "\n".join(lines[:3]))
    assert a.hash() == b.hash()
    assert a.with_values({"grid.n": "31"}).hash() != a.hash()


def test_parse_mask_variants():
    g = make_grid(1, 10)
    assert parse_mask(g, "full").count == 10
    assert parse_mask(g, "intervals 0:0.2, 0.8:1").count == 4
    assert parse_mask(g, "random 0.5 3").count == 5
    g2 = make_grid(2, 10)
    assert parse_mask(g2, "rects 0:0.5/0:0.5").count == 25
    with pytest.raises(ScenarioError):
        parse_mask(g, "circle 0.5")


def test_analyze_report(small):
    code, rep = run(["analyze", "--scenario", str(small), "--quiet"])
    assert code == 0
    assert set(rep) >= {"command", "scenario_hash", "results", "warnings"}
    assert rep["results"]["conservation_basis"] == [[4.0, 2.0, 1.0]]
    assert rep["results"]["assumption_A"] is True


def test_analyze_chain_warns(tmp_path):
    path = tmp_path / "chain.scn"
    path.write_text(
        "network.line = A -> B @ 1 p\nnetwork.line = B -> C @ 1 p\ngrid.dim = 1\ngrid.n = 4\n"
        "profile.p.mask = full\ndiffusion.default.kind = constant\ndiffusion.default.value = 1\n"
        "initial.kind = uniform\ninitial.base = 1, 1, 1\n"
    )
    code, rep = run(["analyze", "--scenario", str(path), "--quiet"])
    assert code == 0
    assert rep["results"]["assumption_A"] is False
    assert rep["warnings"]


def test_equilibrium_special_method():
    code, rep = run(["equilibrium", "--preset", "thm2-measurable", "--totals", "74", "--quiet"])
    assert code == 0
    np.testing.assert_allclose(rep["results"]["u_inf"], [16.0, 4.0, 2.0], rtol=1e-12)
    assert rep["results"]["agreement"] <= 1e-8


def test_simulate_outputs_are_deterministic(small, tmp_path):
    outs = []
    for tag in ("a", "b"):
        out = tmp_path / tag
        code, rep = run(["simulate", "--scenario", str(small), "--out", str(out), "--quiet"])
        assert code == 0
        outs.append((out / "trajectory.csv").read_bytes())
        assert json.loads((out / "summary.json").read_text())["results"]["decay_fit"]["lambda"] > 0
    assert outs[0] == outs[1]
    assert outs[0].splitlines()[0] == b"t,E,D,total_1,l1_dist_1,l1_dist_2,l1_dist_3,min_u,clamped_mass,Hp_1"


def test_seed_flag_changes_random_initial_data(small, tmp_path):
    run(["simulate", "--scenario", str(small), "--out", str(tmp_path / "a"), "--quiet"])
    run(["simulate", "--scenario", str(small), "--out", str(tmp_path / "b"), "--seed", "99", "--quiet"])
    assert (tmp_path / "a" / "trajectory.csv").read_bytes() != (tmp_path / "b" / "trajectory.csv").read_bytes()


def test_probe_and_sweep_commands(small, tmp_path):
    code, rep = run(["probe", "--scenario", str(small), "--n", "20", "--seed", "3", "--quiet"])
    assert code == 0 and rep["results"]["min_ratio"] > 0 and rep["results"]["seed"] == 3
    code, rep = run(
        ["sweep", "--scenario", str(small), "--fractions", "0.6,0.3", "--out", str(tmp_path / "s"), "--quiet"]
    )
    assert code == 0
    assert (tmp_path / "s" / "sweep.csv").read_text().startswith("omega1,omega2,lambda,r2\n")


def test_validation_exit_code_and_no_output(tmp_path, capsys):
    bad = tmp_path / "bad.scn"
    bad.write_text(SMALL + "grid.n = -3\n")
    out = tmp_path / "out"
    code, rep = run(["simulate", "--scenario", str(bad), "--out", str(out)])
    assert code == 2
    assert rep["error"]["kind"] == "validation"
    assert not out.exists()
    assert json.loads(capsys.readouterr().out)["error"]["kind"] == "validation"


def test_entropy_flag_exit_code(tmp_path):
    code, rep = run(["simulate", "--scenario", str(_disjoint_checked(tmp_path)), "--quiet"])
    assert code == 3
    assert rep["results"]["flag"] == "entropy_increase"


def _disjoint_checked(tmp_path):
    text = Scenario.preset("remark-2x2-disjoint").with_values(
        {"sim.check_entropy": "true", "sim.t_end": "5", "grid.n": "20"}
    ).canonical_text()
    path = tmp_path / "disjoint.scn"
    path.write_text(text)
    return path


def test_solver_failure_exit_code(tmp_path):
    text = Scenario.preset("fig1b").with_values({"equilibrium.totals": "0.5, 1.0"}).canonical_text()
    path = tmp_path / "f.scn"
    path.write_text(text)
    code, rep = run(["equilibrium", "--scenario", str(path), "--quiet"])
    assert code == 4
    assert rep["error"]["kind"] == "solver"


def test_disjoint_preset_flags_non_constant_steady_state():
    code, rep = run(["simulate", "--preset", "remark-2x2-disjoint", "--quiet"])
    assert code == 0
    assert rep["results"]["steady_state"]["non_constant"] is True
    assert any("non-constant" in w for w in rep["warnings"])
