import numpy as np
import pytest

from loewnerqc.grids import circle_grid
from loewnerqc.herglotz import HerglotzSpec, DenjoyWolffSpec, assemble_field
from loewnerqc.evolution import solve_forward
from loewnerqc import chains

EXP = assemble_field(HerglotzSpec.constant(1), DenjoyWolffSpec.constant(0))
CHORDAL = assemble_field(HerglotzSpec.constant(1), DenjoyWolffSpec.constant(1))
ROTATION = assemble_field(HerglotzSpec.constant(1j), DenjoyWolffSpec.constant(0))
BECKER = assemble_field(HerglotzSpec.rational([1, 0.5], [1, -0.5]),
                        DenjoyWolffSpec.constant(0))
GRID = circle_grid((0.2, 0.5, 0.8), 8)


def chordal_chain(z, t):
    return 1.0 / (1.0 - z) - (1.0 + t)


def test_normalizer_exponential_trivial():
    traj = solve_forward(EXP, 0.0, 1.0, np.zeros(1, complex), tol=1e-10,
                         checkpoints=[0.5, 1.0])
    nz = chains.normalize(traj)
    assert np.abs(nz.alpha).max() == 0.0
    assert np.abs(nz.beta - 1.0).max() < 1e-12
    assert nz.psi_prime0(1.0) == pytest.approx(np.exp(-1), abs=1e-9)


def test_normalizer_chordal_alpha_half():
    traj = solve_forward(CHORDAL, 0.0, 1.0, np.zeros(1, complex), tol=1e-10,
                         checkpoints=[1.0])
    nz = chains.normalize(traj)
    i = nz._i(1.0)
    assert nz.alpha[i] == pytest.approx(0.5, abs=1e-9)
    assert abs(abs(nz.beta[i]) - 1.0) < 1e-12
    # M_t(0) = alpha and M_t^{-1}(alpha) = 0
    assert nz.m(1.0, np.zeros(1, complex))[0] == pytest.approx(nz.alpha[i])
    assert abs(nz.m_inv(1.0, nz.alpha[i:i + 1])[0]) < 1e-14


def test_normalizer_rotation_beta():
    traj = solve_forward(ROTATION, 0.0, 1.0, np.zeros(1, complex), tol=1e-11,
                         checkpoints=[1.0])
    nz = chains.normalize(traj)
    assert nz.alpha[-1] == 0.0
    assert nz.beta[-1] == pytest.approx(np.exp(-1j), abs=1e-9)


def test_chain_limit_exponential():
    res = chains.chain_limit(EXP, 0.5, GRID, tol=1e-10)
    assert res.converged
    assert np.abs(res.values - np.exp(0.5) * GRID.points).max() < 1e-8


def test_chain_limit_rotation_identity():
    res = chains.chain_limit(ROTATION, 0.7, GRID, tol=1e-10)
    assert res.converged
    assert np.abs(res.values - GRID.points).max() < 1e-8


def test_range_normalized_chain_exponential():
    fr = chains.range_normalized_chain(EXP, [0.0, 0.5, 1.0], GRID, n_theta=64)
    ref = np.exp(fr.checkpoints)[:, None] * GRID.points[None, :]
    assert np.abs(fr.values - ref).max() < 1e-8
    assert np.abs(fr.derivs - np.exp(fr.checkpoints)[:, None]).max() < 1e-8
    assert abs(fr.origin_values[0]) < 1e-10
    assert abs(fr.origin_derivs[0] - 1) < 1e-8


def test_range_normalized_chain_chordal_closed_form():
    fr = chains.range_normalized_chain(CHORDAL, [0.0, 0.5, 1.0], GRID, n_theta=64)
    ref = chordal_chain(GRID.points[None, :], fr.checkpoints[:, None])
    assert np.abs(fr.values - ref).max() < 1e-7
    dref = 1.0 / (1.0 - GRID.points[None, :]) ** 2
    assert np.abs(fr.derivs - dref).max() < 1e-5
    assert fr.converged.all()


def test_rotation_frames_never_grow():
    fr = chains.range_normalized_chain(ROTATION, [0.0, 0.5, 1.0], GRID, n_theta=64)
    ref = np.exp(1j * fr.checkpoints)[:, None] * GRID.points[None, :]
    assert np.abs(fr.values - ref).max() < 1e-8
    ok, worst = chains.frames_coincide_up_to_rotation(fr)
    assert ok and worst < 1e-9


def test_composition_mode_matches_direct_mode():
    cps = np.linspace(0.0, 0.12, 13)
    small = circle_grid((0.3, 0.6), 8)
    direct = chains.range_normalized_chain(BECKER, cps, small, n_theta=32,
                                           via_transition=False)
    comp = chains.range_normalized_chain(BECKER, cps, small, n_theta=32,
                                         via_transition=True)
    assert np.abs(direct.values - comp.values).max() < 1e-7
    assert np.abs(direct.derivs - comp.derivs).max() < 1e-6


def test_transition_identity():
    fr = chains.range_normalized_chain(BECKER, [0.0, 0.4, 0.8], GRID, n_theta=64)
    rep = chains.verify_transitions(fr, BECKER)
    assert rep.passed
    assert rep.residual < 1e-6


def test_chain_growth_with_interior_normalization():
    # f_t'(0) = 1/phi'_{0,t}(0) = e^t when p(0,.) = 1
    fr = chains.range_normalized_chain(BECKER, [0.0, 1.0], GRID, n_theta=32)
    assert abs(fr.origin_derivs[1] - np.exp(1.0)) < 1e-6


def test_beta_limit_exponential_plane():
    rep = chains.beta_limit(EXP)
    assert rep.classification == "plane"
    assert rep.beta0 <= 1e-8


def test_beta_limit_rotation_disk():
    rep = chains.beta_limit(ROTATION)
    assert rep.classification == "disk"
    assert rep.beta0 == pytest.approx(1.0, abs=1e-6)
    assert rep.radius == pytest.approx(1.0, abs=1e-6)


def test_beta_limit_chordal_plane_with_closed_form_raw():
    rep = chains.beta_limit(CHORDAL)
    assert rep.classification == "plane"
    # raw estimate at horizon t is exactly 1/(1+2t)
    assert rep.raw_last[0] == pytest.approx(1.0 / 129.0, abs=1e-9)
    assert rep.beta0 <= 1e-6


def test_decreasing_chain_exponential():
    fr = chains.decreasing_chain(EXP, [0.0, 0.5, 1.0], GRID, n_theta=64)
    ref = np.exp(-fr.checkpoints)[:, None] * GRID.points[None, :]
    assert np.abs(fr.values - ref).max() < 1e-8
    assert np.array_equal(fr.values[0], GRID.points)  # g_0 = id exactly
    rep = chains.verify_containment(fr)
    assert rep.passed and rep.checked_pairs == 2
    assert rep.lambda_diameter == pytest.approx(2 * np.exp(-1) * (1 - 1e-3), rel=1e-6)


def test_decreasing_chain_chordal_lambda_collapses():
    cps = [0.0, 2.0, 8.0, 24.0]
    fr = chains.decreasing_chain(CHORDAL, cps, GRID, n_theta=64)
    rep = chains.verify_containment(fr)
    assert rep.passed
    # g_t = 1 + (z-1)/(1-(z-1)t): hull shrinks toward the boundary point 1
    assert rep.lambda_diameter < 0.2


def test_verify_chain_pde_exponential():
    cps = np.linspace(0.0, 0.2, 21)
    fr = chains.range_normalized_chain(EXP, cps, GRID, n_theta=32)
    rep = chains.verify_chain_pde(fr, EXP)
    assert rep.rel_residual < 1e-4
    assert not rep.resolution_limited


def test_verify_chain_pde_decreasing_frames():
    cps = np.linspace(0.0, 0.2, 21)
    fr = chains.decreasing_chain(EXP, cps, GRID, n_theta=32)
    rep = chains.verify_chain_pde(fr, EXP)
    assert rep.rel_residual < 1e-4


def test_chain_pde_second_order_in_dt():
    grid = circle_grid((0.2, 0.5, 0.8), 8)
    r1 = chains.verify_chain_pde(
        chains.range_normalized_chain(BECKER, np.linspace(0, 0.12, 13), grid, n_theta=16), BECKER)
    r2 = chains.verify_chain_pde(
        chains.range_normalized_chain(BECKER, np.linspace(0, 0.12, 25), grid, n_theta=16), BECKER)
    order = np.log2(r1.rel_residual / r2.rel_residual)
    assert order > 1.9


def test_psi_normalization_identities():
    passed, worst = chains.verify_psi_normalization(
        CHORDAL, [(0.0, 0.5), (0.5, 1.0), (0.0, 1.0)])
    assert passed, worst
    passed, worst = chains.verify_psi_normalization(ROTATION, [(0.2, 0.9)])
    assert passed, worst


def test_unconverged_frames_are_flagged():
    # measurable tau with boundary limit: honest convergence flags at default tol
    tau = DenjoyWolffSpec.sampled(lambda t: t / (1 + t))
    fld = assemble_field(HerglotzSpec.constant(1), tau)
    res = chains.limit_frame(fld, 1.0, GRID.points[:4], tol=1e-9, tol_limit=1e-12)
    assert not res.converged
    assert np.isfinite(res.acc_delta)
