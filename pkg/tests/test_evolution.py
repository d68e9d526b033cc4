import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from loewnerqc.grids import circle_grid, hyperbolic_distance
from loewnerqc.herglotz import HerglotzSpec, DenjoyWolffSpec, assemble_field
from loewnerqc.evolution import (solve_forward, solve_reverse, verify_semigroup,
                                 schwarz_pick_check, derivative_at_origin)

EXP = assemble_field(HerglotzSpec.constant(1), DenjoyWolffSpec.constant(0))
CHORDAL = assemble_field(HerglotzSpec.constant(1), DenjoyWolffSpec.constant(1))
ROTATION = assemble_field(HerglotzSpec.constant(1j), DenjoyWolffSpec.constant(0))
SEEDS = np.array([0.5, 0.3 + 0.4j, -0.2j, -0.7 + 0.1j])


def riccati(z, s, t):
    return 1 + (z - 1) / (1 - (z - 1) * (t - s))


def test_forward_exponential_oracle():
    tr = solve_forward(EXP, 0.0, 1.0, SEEDS, tol=1e-10)
    assert np.abs(tr.at(1.0) - SEEDS * np.exp(-1)).max() < 1e-9
    assert np.abs(tr.deriv_at(1.0) - np.exp(-1)).max() < 1e-9


def test_forward_chordal_riccati_oracle():
    tr = solve_forward(CHORDAL, 0.0, 1.0, SEEDS, tol=1e-10)
    assert np.abs(tr.at(1.0) - riccati(SEEDS, 0, 1)).max() < 1e-9
    assert tr.at(1.0)[0] != 0.5  # seed 0.5 maps to 2/3, not the origin seed value
    tr0 = solve_forward(CHORDAL, 0.0, 1.0, np.zeros(1, complex), tol=1e-10)
    assert tr0.at(1.0)[0] == pytest.approx(0.5)


def test_forward_rotation_oracle():
    tr = solve_forward(ROTATION, 0.0, np.pi, SEEDS, tol=1e-10)
    assert np.abs(tr.at(np.pi) + SEEDS).max() < 1e-9


def test_initial_condition_exact():
    tr = solve_forward(CHORDAL, 0.5, 2.0, SEEDS, tol=1e-9)
    assert np.array_equal(tr.at(0.5), SEEDS)
    assert np.all(tr.deriv_at(0.5) == 1.0)


def test_reverse_exponential_oracle():
    tr = solve_reverse(EXP, 1.0, SEEDS, tol=1e-10, checkpoints=[0.0, 0.4])
    assert np.abs(tr.at(0.0) - SEEDS * np.exp(-1)).max() < 1e-9
    assert np.abs(tr.at(0.4) - SEEDS * np.exp(-0.6)).max() < 1e-9


def test_reverse_riccati_origin_seed():
    tr = solve_reverse(CHORDAL, 1.0, np.zeros(1, complex), tol=1e-10)
    assert tr.at(0.0)[0] == pytest.approx(0.5, abs=1e-9)


def test_reverse_empty_interval_is_identity():
    tr = solve_reverse(CHORDAL, 0.0, SEEDS)
    assert np.array_equal(tr.at(0.0), SEEDS)


def test_reverse_matches_forward_for_autonomous_field():
    # autonomous data: omega_{s,t} equals the forward flow over t - s
    fwd = solve_forward(CHORDAL, 0.0, 0.7, SEEDS, tol=1e-10)
    rev = solve_reverse(CHORDAL, 0.7, SEEDS, tol=1e-10)
    assert np.abs(rev.at(0.0) - fwd.at(0.7)).max() < 1e-8


def test_semigroup_exponential():
    rep = verify_semigroup(EXP, 0.0, 0.5, 1.0, SEEDS, tol=1e-9)
    assert rep.residual < 1e-8


def test_semigroup_degenerate_composition():
    rep = verify_semigroup(CHORDAL, 0.0, 0.0, 1.0, SEEDS, tol=1e-9)
    assert rep.residual < 1e-8
    rep = verify_semigroup(CHORDAL, 0.0, 1.0, 1.0, SEEDS, tol=1e-9)
    assert rep.residual < 1e-8


def test_semigroup_becker_64_seeds():
    fld = assemble_field(HerglotzSpec.rational([1, 0.5], [1, -0.5]),
                         DenjoyWolffSpec.constant(0))
    grid = circle_grid(tuple(np.linspace(0.1, 0.8, 8)), 8)
    rep = verify_semigroup(fld, 0.0, 1.0, 2.0, grid, tol=1e-9)
    assert rep.residual < 1e-6


def test_schwarz_pick_rotation_is_isometry():
    tr = solve_forward(ROTATION, 0.0, 2.0, SEEDS, tol=1e-10,
                       checkpoints=np.linspace(0, 2, 9))
    rep = schwarz_pick_check(tr, tol_hyp=1e-9)
    assert rep.passed
    assert abs(rep.worst_violation) < 1e-9


def test_schwarz_pick_strict_contraction():
    tr = solve_forward(EXP, 0.0, 1.0, np.array([0.1, 0.5]), tol=1e-10)
    rep = schwarz_pick_check(tr, pairs=[(0, 1)])
    assert rep.passed
    d0 = hyperbolic_distance(0.1, 0.5)
    d1 = hyperbolic_distance(0.1 * np.exp(-1), 0.5 * np.exp(-1))
    assert d1 < d0


def test_modulus_monotone_for_radial_herglotz_data():
    fld = assemble_field(HerglotzSpec.rational([1, 0.5], [1, -0.5]),
                         DenjoyWolffSpec.constant(0))
    tr = solve_forward(fld, 0.0, 2.0, SEEDS, tol=1e-10,
                       checkpoints=np.linspace(0, 2, 21))
    mods = np.abs(tr.values)
    assert np.all(np.diff(mods, axis=0) <= 1e-12)


def test_derivative_at_origin_exponential():
    tr = derivative_at_origin(EXP, 1.0)
    assert abs(tr.dphi[-1] - np.exp(-1)) < 1e-9
    assert np.abs(tr.dphi - tr.quadrature).max() < 1e-9


def test_derivative_at_origin_becker_normalized():
    # p(0,t) = 1 forces |phi'_{0,t}(0)| = e^{-t}
    fld = assemble_field(HerglotzSpec.rational([1, 0.5], [1, -0.5]),
                         DenjoyWolffSpec.constant(0))
    tr = derivative_at_origin(fld, 2.0, checkpoints=[1.0, 2.0])
    assert np.abs(np.abs(tr.dphi) - np.exp(-tr.times)).max() < 1e-8


def test_derivative_at_origin_rotation_modulus_one():
    tr = derivative_at_origin(ROTATION, np.pi, tol=1e-11)
    assert abs(abs(tr.dphi[-1]) - 1.0) < 1e-9


def test_variational_derivative_matches_finite_differences():
    fld = assemble_field(HerglotzSpec.rational([1, 0.5], [1, -0.5]),
                         DenjoyWolffSpec.constant(0.2 + 0.1j))
    h = 1e-4
    z0 = 0.4 + 0.2j
    tr = solve_forward(fld, 0.0, 1.5, np.array([z0, z0 + h, z0 - h]), tol=1e-11)
    vals = tr.at(1.5)
    fd = (vals[1] - vals[2]) / (2 * h)
    assert abs(tr.deriv_at(1.5)[0] - fd) < 1e-5


def test_step_tau_breakpoint_alignment():
    fld = assemble_field(HerglotzSpec.constant(1),
                         DenjoyWolffSpec.step([1.0], [0.0, 1.0]))
    tr = solve_forward(fld, 0.0, 2.0, SEEDS, tol=1e-11, checkpoints=[1.0, 2.0])
    mid = SEEDS * np.exp(-1)
    assert np.abs(tr.at(1.0) - mid).max() < 1e-9
    assert np.abs(tr.at(2.0) - riccati(mid, 1, 2)).max() < 1e-9


def test_boundary_guard_truncates_honestly():
    # strong repulsion from tau = 0 pushes |z| to the guard: Re p < 0 data is
    # rejected by checks but the integrator must still truncate, not wander
    p = HerglotzSpec.sampled(lambda z, t: np.full_like(np.asarray(z, complex), -2.0),
                             z_independent=True)
    fld = assemble_field(p, DenjoyWolffSpec.constant(0))
    tr = solve_forward(fld, 0.0, 4.0, np.array([0.5 + 0j]), tol=1e-9)
    assert tr.truncated[0]
    assert np.isnan(tr.at(4.0)[0].real)
    assert np.isfinite(tr.truncation_time[0])


def test_deterministic_repeat():
    a = solve_forward(CHORDAL, 0.0, 2.0, SEEDS, tol=1e-9, checkpoints=[1.0, 2.0])
    b = solve_forward(CHORDAL, 0.0, 2.0, SEEDS, tol=1e-9, checkpoints=[1.0, 2.0])
    assert np.array_equal(a.values, b.values)
    assert np.array_equal(a.derivs, b.derivs)


def test_checkpoint_validation():
    with pytest.raises(ValueError):
        solve_forward(EXP, 0.0, 1.0, SEEDS, checkpoints=[2.0])
    with pytest.raises(ValueError):
        solve_forward(EXP, 1.0, 0.5, SEEDS)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.1, 0.9), st.floats(0.0, np.pi))
def test_exponential_flow_property(r, angle):
    z = r * np.exp(1j * angle)
    tr = solve_forward(EXP, 0.0, 0.8, np.array([z]), tol=1e-10)
    assert abs(tr.at(0.8)[0] - z * np.exp(-0.8)) < 1e-8
