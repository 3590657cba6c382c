import numpy as np
import pytest

from conftest import cosine_state, special_fields
from rdentropy import make_grid, parse_network
from rdentropy.entropy import fit_decay_rate
from rdentropy.simulate import (
    NumericalQualityError,
    SimConfig,
    State,
    StepRejected,
    diffusion_apply,
    epsilon_regularized_run,
    saturate,
    simulate,
    step,
)
from rdentropy.spatial import (
    Fields,
    coefficient_field,
    diffusion_constant,
    diffusion_vanishing,
    mask_from_intervals,
    mask_full,
)


def test_diffusion_apply_examples():
    g = make_grid(1, 4)
    one = diffusion_constant(g, 1.0)
    assert not diffusion_apply(g, one, np.full(4, 3.0)).any()
    assert not diffusion_apply(g, diffusion_constant(g, 0.0), np.array([0.0, 1.0, 5.0, 2.0])).any()
    out = diffusion_apply(g, one, np.array([0.0, 0.0, 1.0, 0.0]))
    assert abs(out.sum() * g.h) <= 1e-15
    np.testing.assert_allclose(out, [0.0, 16.0, -32.0, 16.0])
    with pytest.raises(ValueError):
        diffusion_apply(g, one, np.zeros(5))


def test_diffusion_apply_integral_zero_2d():
    g = make_grid(2, 7)
    d = diffusion_vanishing(g, (0.3, 0.6), 1)
    u = np.random.default_rng(0).random(g.size)
    assert abs(diffusion_apply(g, d, u).sum()) * g.cell_measure <= 1e-12


def test_state_validation():
    with pytest.raises(ValueError):
        State(np.array([[1.0, -1.0]]))
    with pytest.raises(ValueError):
        State(np.array([[1.0, np.nan]]))


def test_config_validation():
    with pytest.raises(ValueError):
        SimConfig(dt=0.0)
    with pytest.raises(ValueError):
        SimConfig(dt=1.0, t_end=0.5)
    with pytest.raises(ValueError):
        SimConfig(scheme="rk4")


def test_fixed_point(special):
    g = make_grid(1, 20)
    fields, _ = special_fields(g)
    u = np.tile([[16.0], [4.0], [2.0]], (1, 20))
    out = step(State(u), special, fields, g, SimConfig(dt=1e-3))
    assert np.abs(out.u - u).max() <= 1e-12


def test_heat_step_conserves(grid1d):
    net = parse_network("A -> B @ 1 p")
    fields = Fields(
        alpha={"p": coefficient_field(grid1d, mask_full(grid1d), 0.0)},
        diffusion=(diffusion_constant(grid1d, 1.0), diffusion_constant(grid1d, 0.5)),
    )
    u = np.random.default_rng(1).random((2, grid1d.size))
    out = step(State(u), net, fields, grid1d, SimConfig(dt=1e-2))
    np.testing.assert_allclose(grid1d.mean(out.u), grid1d.mean(u), rtol=1e-13)


def test_special_step_direction(special):
    g = make_grid(1, 10)
    full = mask_full(g)
    fields = Fields(
        alpha={"k1": coefficient_field(g, full, 1.0), "k2": coefficient_field(g, full, 0.0)},
        diffusion=tuple(diffusion_constant(g, 1.0) for _ in range(3)),
    )
    u = np.tile([[2.0], [1.0], [1.0]], (1, 10))
    out = step(State(u), special, fields, g, SimConfig(dt=1e-3))
    assert (out.u[0] < 2.0).all() and (out.u[1] > 1.0).all()


def test_too_large_step_rejected(special):
    g = make_grid(1, 10)
    fields, _ = special_fields(g, full=True)
    u = np.tile([[0.01], [10.0], [0.01]], (1, 10))
    with pytest.raises(StepRejected):
        step(State(u), special, fields, g, SimConfig(dt=1.0))


def test_saturation_bounds_rates():
    R = np.array([[3.0, -1.0], [-3.0, 1.0]])
    S = saturate(R, 0.5)
    assert (np.abs(S) < np.abs(R)).all()
    np.testing.assert_array_equal(saturate(R, 0.0), R)


def test_saturated_run_conserves(special):
    g = make_grid(1, 30)
    fields, _ = special_fields(g)
    u0 = cosine_state(g, (2, 0.5, 1), (0.5, -0.5, 0.5))
    tr = simulate(u0, special, fields, g, SimConfig(dt=1e-3, t_end=0.5, saturation_eps=0.1))
    assert tr.conservation_drift() <= 1e-8
    assert tr.flag is None


def test_equilibrium_start_is_constant(special):
    g = make_grid(1, 20)
    fields, _ = special_fields(g)
    tr = simulate(np.ones((3, 20)), special, fields, g, SimConfig(dt=1e-3, t_end=0.1))
    assert np.abs(tr.E).max() <= 1e-20
    assert np.abs(tr.final.u - 1.0).max() <= 1e-12


@pytest.fixture(scope="module")
def short_run():
    net = parse_network("S1 <=> 2 S2 @ 1 k1\nS2 <=> 2 S3 @ 1 k2")
    g = make_grid(1, 60)
    fields, _ = special_fields(g)
    u0 = cosine_state(g, (2, 0.5, 1), (0.5, -0.5, 0.5))
    cfg = SimConfig(dt=1e-3, t_end=6.0, record_every=20, hp_powers=(1, 2))
    return simulate(u0, net, fields, g, cfg), net, g


def test_trajectory_invariants(short_run):
    tr, net, g = short_run
    assert (np.diff(tr.times) > 0).all()
    assert len(tr.E) == len(tr.times) == len(tr.min_u) == tr.totals.shape[0]
    assert (np.diff(tr.E) <= 1e-12).all()
    assert tr.conservation_drift() <= 1e-8
    assert (tr.min_u >= 0).all()
    assert (tr.D[tr.E > 0] > 0).all()
    fit = fit_decay_rate(tr.times, tr.E)
    assert fit.lam > 0 and fit.r_squared > 0.99


def test_csv_layout(short_run, tmp_path):
    tr, net, g = short_run
    path = tmp_path / "traj.csv"
    tr.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,E,D,total_1,l1_dist_1,l1_dist_2,l1_dist_3,min_u,clamped_mass,Hp_1,Hp_2"
    assert len(lines) == len(tr.times) + 1
    first = lines[1].split(",")
    assert len(first) == 11
    assert float(first[1]) == tr.E[0]


def test_explicit_scheme_matches_imex(special):
    g = make_grid(1, 20)
    fields, _ = special_fields(g)
    u0 = cosine_state(g, (2, 0.5, 1), (0.5, -0.5, 0.5))
    a = simulate(u0, special, fields, g, SimConfig(dt=1e-4, t_end=0.2, scheme="explicit"))
    b = simulate(u0, special, fields, g, SimConfig(dt=1e-4, t_end=0.2))
    assert a.E[-1] == pytest.approx(b.E[-1], rel=1e-2)


def test_disjoint_supports_settle_non_constant():
    net = parse_network("S1 -> S2 @ 1 k1\nS2 -> S1 @ 1 k2")
    g = make_grid(1, 40)
    fields = Fields(
        alpha={
            "k1": coefficient_field(g, mask_from_intervals(g, [(0.0, 0.5)]), 1.0),
            "k2": coefficient_field(g, mask_from_intervals(g, [(0.5, 1.0)]), 1.0),
        },
        diffusion=(diffusion_constant(g, 1.0), diffusion_constant(g, 1.0)),
    )
    cfg = SimConfig(dt=1e-3, t_end=30.0, record_every=100, check_entropy=False)
    tr = simulate(np.ones((2, 40)), net, fields, g, cfg)
    assert tr.change_rate[-1] < 1e-8
    assert (tr.final.u.max(axis=1) - tr.final.u.min(axis=1)).max() > 1e-3
    assert tr.conservation_drift() <= 1e-10


def test_entropy_increase_is_flagged():
    # relative to a wrong reference state the entropy need not decrease
    net = parse_network("S1 -> S2 @ 1 k1\nS2 -> S1 @ 1 k2")
    g = make_grid(1, 20)
    fields = Fields(
        alpha={
            "k1": coefficient_field(g, mask_from_intervals(g, [(0.0, 0.5)]), 1.0),
            "k2": coefficient_field(g, mask_from_intervals(g, [(0.5, 1.0)]), 1.0),
        },
        diffusion=(diffusion_constant(g, 1.0), diffusion_constant(g, 1.0)),
    )
    tr = simulate(np.ones((2, 20)), net, fields, g, SimConfig(dt=1e-3, t_end=5.0, record_every=10))
    assert tr.flag == "entropy_increase"
    assert tr.times[-1] < 5.0


def test_clamping_beyond_tolerance_fails(special):
    g = make_grid(1, 10)
    fields, _ = special_fields(g, full=True)
    u = np.tile([[0.0], [0.0], [1.0]], (1, 10))
    u[2, 0] = 50.0
    with pytest.raises((NumericalQualityError, StepRejected)):
        simulate(u, special, fields, g, SimConfig(dt=0.05, t_end=1.0))


def test_eps_runs():
    net = parse_network("S1 <=> 2 S2 @ 1 k1\nS2 <=> 2 S3 @ 1 k2")
    g = make_grid(1, 40)
    fields, _ = special_fields(g, 0.25)
    fields = fields.with_diffusion(2, diffusion_vanishing(g, 0.5, 1))
    u0 = cosine_state(g, (2, 0.5, 1), (0.5, -0.5, 0.5))
    cfg = SimConfig(dt=1e-3, t_end=1.0, record_every=50)
    one = epsilon_regularized_run(u0, net, fields, g, cfg, [1e-2])
    assert len(one) == 1
    ref = simulate(u0, net, fields.with_diffusion(2, fields.diffusion[2].shifted(1e-2)), g, cfg)
    np.testing.assert_array_equal(one[0].E, ref.E)
    with pytest.raises(ValueError):
        epsilon_regularized_run(u0, net, fields, g, cfg, [1e-3, 1e-2])
    with pytest.raises(ValueError):
        epsilon_regularized_run(u0, net, fields, g, cfg, [0.0])


def test_huge_eps_matches_elliptic_rate():
    net = parse_network("S1 <=> 2 S2 @ 1 k1\nS2 <=> 2 S3 @ 1 k2")
    g = make_grid(1, 50)
    fields, _ = special_fields(g, 0.2)
    u0 = cosine_state(g, (2, 0.5, 1), (0.5, -0.5, 0.5))
    cfg = SimConfig(dt=1e-3, t_end=8.0, record_every=20)
    const = fields.with_diffusion(2, diffusion_constant(g, 1e3))
    lam_const = fit_decay_rate(*_te(simulate(u0, net, const, g, cfg))).lam
    degenerate = fields.with_diffusion(2, diffusion_vanishing(g, 0.5, 1))
    lam_eps = fit_decay_rate(*_te(epsilon_regularized_run(u0, net, degenerate, g, cfg, [1e3])[0])).lam
    assert lam_eps == pytest.approx(lam_const, rel=0.05)


def _te(tr):
    return tr.times, tr.E


@pytest.mark.slow
def test_grid_refinement_sanity():
    net = parse_network("S1 <=> 2 S2 @ 1 k1\nS2 <=> 2 S3 @ 1 k2")
    ends = []
    for n in (25, 50, 100, 200):
        g = make_grid(1, n)
        fields = Fields(
            alpha={
                "k1": coefficient_field(g, mask_from_intervals(g, [(0.1, 0.3), (0.6, 0.7)]), 1.0),
                "k2": coefficient_field(g, mask_from_intervals(g, [(0.4, 0.6)]), 1.0),
            },
            diffusion=tuple(diffusion_constant(g, 1.0) for _ in range(3)),
        )
        u0 = cosine_state(g, (2, 0.5, 1), (0.5, -0.5, 0.5))
        tr = simulate(u0, net, fields, g, SimConfig(dt=1e-3, t_end=1.0, record_every=100))
        ends.append(tr.E[-1])
    changes = np.abs(np.diff(ends))
    assert changes[1] <= 4 * changes[0]
    assert changes[2] <= 4 * changes[1]
