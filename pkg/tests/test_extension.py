import numpy as np
import pytest

from loewnerqc.grids import circle_grid
from loewnerqc.herglotz import HerglotzSpec, DenjoyWolffSpec, assemble_field
from loewnerqc import chains
from loewnerqc.extension import (build_extension, becker_extension, beltrami_formula,
                                 beltrami_fd, dilatation_report, boundary_trace,
                                 phi_tau, interior_dilatation)

ONE = HerglotzSpec.constant(1)
EXPF = assemble_field(ONE, DenjoyWolffSpec.constant(0))
GRID = circle_grid((0.3, 0.6), 8)


def _exp_frames(n_theta=96, cps=None):
    cps = np.linspace(0.0, 0.3, 13) if cps is None else cps
    ff = chains.range_normalized_chain(EXPF, cps, GRID, n_theta=n_theta)
    gf = chains.decreasing_chain(EXPF, cps, GRID, n_theta=n_theta)
    return ff, gf


def test_affine_map_gives_exact_mu():
    t = np.linspace(0.0, 0.3, 9)
    th = 2 * np.pi * np.arange(48) / 48
    src = np.exp(t)[:, None] * np.exp(1j * th)[None, :]
    dst = src + 0.3 * np.conj(src)
    mu, ok = beltrami_fd(src, dst)
    assert ok[1:-1].all()
    assert np.abs(mu[ok] - 0.3).max() < 1e-10


def test_degenerate_stencils_are_masked():
    # collinear sources: ds and conj(ds) are linearly dependent, no fit
    rows = np.linspace(0.0, 0.8, 9)
    cols = np.linspace(1.0, 2.5, 16)
    src = (rows[:, None] + cols[None, :]).astype(complex)
    dst = src + 0.1 * np.conj(src)
    mu, ok = beltrami_fd(src, dst)
    assert not ok.any()


def test_phi_tau_real_on_circle():
    zeta = np.exp(1j * np.linspace(0, 2 * np.pi, 64, endpoint=False))
    for tau in (0.0, 0.3 + 0.2j, 1.0):
        vals = phi_tau(zeta, tau)
        assert np.abs(vals.imag).max() < 1e-12


def test_beltrami_formula_sine_identity():
    # q = p: |mu| = sin|arg p| pointwise
    p = HerglotzSpec.constant(np.exp(1j * np.pi / 6))
    t = np.linspace(0, 0.2, 5)
    th = 2 * np.pi * np.arange(32) / 32
    fs = beltrami_formula(p, p, 0.0, t, th, 1.0 - 1e-3)
    assert np.abs(np.abs(fs.mu_pair[fs.valid]) - 0.5).max() < 1e-12


def test_beltrami_formula_real_data_is_conformal():
    p = HerglotzSpec.constant(2.0)
    q = HerglotzSpec.constant(0.5)
    fs = beltrami_formula(p, q, 0.0, np.array([0.0, 0.1]),
                          2 * np.pi * np.arange(16) / 16, 1.0 - 1e-3)
    # p, q real valued: numerator phi(p - q) is real minus real conj: zero only
    # when p = q; here |mu| = |p-q|/|p+q| is real-ratio, phase vanishes
    assert np.abs(fs.mu_pair[fs.valid].imag).max() < 1e-9


def test_beltrami_formula_becker_modulus():
    p = HerglotzSpec.rational([1, 0.5], [1, -0.5])
    delta = 1e-3
    fs = beltrami_formula(p, ONE, 0.0, np.array([0.0, 0.1]),
                          2 * np.pi * np.arange(64) / 64, 1.0 - delta)
    mods = np.abs(fs.mu_pair[fs.valid])
    assert np.abs(mods - 0.5 * (1 - delta)).max() < 1e-12


def test_boundary_trace_accessor():
    ff, _ = _exp_frames(n_theta=32, cps=np.array([0.0, 0.1, 0.2]))
    th, vals, ok = boundary_trace(ff, 0.1)
    assert ok.all()
    ref = np.exp(0.1) * (1 - 1e-3) * np.exp(1j * th)
    assert np.abs(vals - ref).max() < 1e-8
    th, vals, ok, mid = boundary_trace(ff, 0.1, second_radius=True)
    refm = np.exp(0.1) * (1 - 5e-4) * np.exp(1j * th)
    assert np.abs(mid - refm).max() < 1e-8


def test_conformal_welding_atlas():
    ff, gf = _exp_frames()
    atlas = build_extension(ff, gf, ONE, ONE, 0.0)
    rep = dilatation_report(atlas, 0.0)
    assert rep.passed
    assert rep.max_mu_formula < 1e-12
    assert rep.max_mu_fd < 0.01
    assert rep.sense_preserving
    assert atlas.coverage.unmasked_fraction == 1.0
    assert atlas.min_separation > atlas.sep_threshold
    assert atlas.n_collisions == 0
    # sources are reflections of interior traces: outside the closed disk
    # up to the trace-radius offset
    assert np.abs(atlas.source[atlas.valid]).min() >= 1.0 - 2e-3


def test_atlas_artifacts_render(tmp_path):
    from loewnerqc.artifacts import write_atlas_svg, write_traces_svg, write_atlas_csv
    ff, gf = _exp_frames(n_theta=32, cps=np.array([0.0, 0.1, 0.2]))
    atlas = build_extension(ff, gf, ONE, ONE, 0.0)
    svg = write_atlas_svg(atlas, tmp_path / "a.svg").read_text()
    assert svg.startswith("<svg") and svg.count("<path") >= 6
    svg2 = write_traces_svg(ff, tmp_path / "t.svg").read_text()
    assert "stroke" in svg2
    csv_text = write_atlas_csv(atlas, tmp_path / "a.csv").read_text().splitlines()
    assert csv_text[0].split(",")[:4] == ["t", "theta", "re_src", "im_src"]
    assert len(csv_text) == 1 + 3 * 32


def test_atlas_frame_mismatch_rejected():
    ff, gf = _exp_frames(n_theta=32, cps=np.array([0.0, 0.1, 0.2]))
    other = chains.decreasing_chain(EXPF, [0.0, 0.15, 0.2], GRID, n_theta=32)
    with pytest.raises(ValueError):
        build_extension(ff, other, ONE, ONE, 0.0)


def test_becker_extension_identity_continuation():
    cps = np.linspace(0.0, 0.3, 13)
    ff, _ = _exp_frames(cps=cps)
    ext = becker_extension(ff)
    ref = np.exp(cps)[:, None] * (1 - 1e-3) * np.exp(1j * ff.theta)[None, :]
    assert np.abs(ext.values - ref).max() < 1e-8
    # boundary matching gap is the distance between the two trace rings
    assert ext.continuity_mismatch == pytest.approx(5e-4, rel=1e-3)
    assert np.nanmax(np.abs(ext.mu_fd[ext.fd_valid])) < 1e-3


def test_becker_extension_horizon_error():
    ff, _ = _exp_frames(cps=np.array([0.0, 0.1, 0.2]))
    with pytest.raises(ValueError):
        becker_extension(ff, r_grid=np.array([1.0, np.exp(0.3)]))
    with pytest.raises(ValueError):
        becker_extension(ff, r_grid=np.array([0.5]))


def test_becker_scenario_dilatation_small_grid():
    k = 0.5
    p = HerglotzSpec.rational([1, k], [1, -k])
    fld = assemble_field(p, DenjoyWolffSpec.constant(0))
    cps = np.linspace(0.0, 0.32, 17)
    ff = chains.range_normalized_chain(fld, cps, GRID, n_theta=128)
    gf = chains.decreasing_chain(EXPF, cps, GRID, n_theta=128)
    atlas = build_extension(ff, gf, p, ONE, 0.0)
    rep = dilatation_report(atlas, k)
    assert rep.passed
    assert rep.max_mu_formula <= 0.5
    assert 0.45 <= rep.max_mu_fd <= 0.52
    assert rep.agreement <= 0.02


def test_dilatation_fails_for_rotation_vs_one():
    # |p - conj(q)|/|p + q| = 1 for p = i, q = 1: criterion fails for every k < 1
    p = HerglotzSpec.constant(1j)
    fs = beltrami_formula(p, ONE, 0.0, np.array([0.0]),
                          2 * np.pi * np.arange(16) / 16, 1.0 - 1e-3)
    assert np.abs(np.abs(fs.mu_pair[fs.valid]) - 1.0).max() < 1e-3


def test_interior_dilatation_conformal():
    assert interior_dilatation(EXPF, n_theta=64) < 0.01
