"""Loewner chains from evolution families.

The range-normalized chain over an evolution family is recovered through
the Mobius normalization

    phi_{s,t} = M_t o psi_{s,t} o M_s^{-1},
    M_t(z) = (beta(t) z + alpha(t)) / (1 + beta(t) conj(alpha(t)) z),

with alpha(t) = phi_{0,t}(0) and beta(t) = phi'_{0,t}(0)/|phi'_{0,t}(0)|,
followed by the scaling limit

    h_s(z) = lim_{u -> inf} psi_{s,u}(z) / psi'_{0,u}(0),
    f_t = h_t o M_t^{-1}.

The limit is evaluated on a doubling horizon schedule u = t + 2^k and
accelerated by iterated Richardson extrapolation in 1/(u - t): for
boundary Denjoy-Wolff data the raw iterates converge only like O(1/u),
far too slowly for the verification tolerances, while the accelerated
diagonal reaches them by horizon t + 64.  Raw and accelerated deltas are
both reported, never asserted exact.

Decreasing chains g_t = omega_{0,t} come from direct reverse integration
and need no limit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grids import SeedGrid, trace_ring, winding_number, nonuniform_centered
from .herglotz import VectorFieldHandle
from .evolution import TrajectorySet, solve_forward, solve_reverse

DEFAULT_T_INF = 64.0
DEFAULT_TOL_LIMIT = 1e-8
TOL_CHAIN = 1e-6
TOL_BETA = 1e-6

# Limit-bound integrations keep pure relative error control: the scaling
# limit divides quantities that decay like exp(-t).
_ATOL_FLOOR = 1e-300


class NormalizationError(RuntimeError):
    """phi'_{0,t}(0) vanished or went non-finite; univalence is broken."""


def horizon_offsets(t_inf: float = DEFAULT_T_INF) -> np.ndarray:
    """Doubling offsets 1, 2, 4, ... capped by t_inf."""
    k = int(np.floor(np.log2(t_inf) + 1e-12))
    return 2.0 ** np.arange(0, k + 1)


@dataclass
class MobiusNormalizer:
    """alpha, beta tables and the disk automorphisms M_t at stored times."""

    times: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    phi_prime0: np.ndarray

    def __post_init__(self):
        if not np.all(np.isfinite(self.phi_prime0)) or np.any(self.phi_prime0 == 0):
            raise NormalizationError("phi'_{0,t}(0) vanished or non-finite at a checkpoint")
        if abs(self.alpha[0]) > 1e-14 or abs(self.beta[0] - 1.0) > 1e-14:
            raise NormalizationError("alpha(0) != 0 or beta(0) != 1")
        if np.abs(np.abs(self.beta) - 1.0).max() > 1e-12:
            raise NormalizationError("|beta(t)| drifted from 1")

    def _i(self, t: float) -> int:
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > 1e-10 * max(1.0, abs(t)):
            raise KeyError(f"time {t} not tabulated")
        return i

    def psi_prime0(self, t: float) -> float:
        """psi'_{0,t}(0) = |phi'_{0,t}(0)| / (1 - |alpha(t)|^2), positive real."""
        i = self._i(t)
        return float(np.abs(self.phi_prime0[i]) / (1.0 - np.abs(self.alpha[i]) ** 2))

    def m(self, t: float, z):
        i = self._i(t)
        a, b = self.alpha[i], self.beta[i]
        z = np.asarray(z, dtype=complex)
        return (b * z + a) / (1.0 + b * np.conj(a) * z)

    def m_inv(self, t: float, w):
        i = self._i(t)
        a, b = self.alpha[i], self.beta[i]
        w = np.asarray(w, dtype=complex)
        return (w - a) / (b * (1.0 - np.conj(a) * w))

    def m_inv_deriv(self, t: float, w):
        i = self._i(t)
        a, b = self.alpha[i], self.beta[i]
        w = np.asarray(w, dtype=complex)
        return (1.0 - np.abs(a) ** 2) / (b * (1.0 - np.conj(a) * w) ** 2)


def normalize(traj: TrajectorySet) -> MobiusNormalizer:
    """Mobius normalization tables from a forward trajectory containing seed 0."""
    if traj.direction != "forward" or traj.start != 0.0:
        raise ValueError("normalization needs a forward trajectory starting at s = 0")
    idx = np.flatnonzero(traj.seeds == 0)
    if idx.size == 0:
        raise ValueError("trajectory does not contain the origin seed")
    j = int(idx[0])
    alpha = traj.values[:, j].copy()
    dphi = traj.derivs[:, j].copy()
    beta = dphi / np.abs(dphi)
    return MobiusNormalizer(traj.times.copy(), alpha, beta, dphi)


def _normalizer_for(field: VectorFieldHandle, times: np.ndarray, tol: float) -> MobiusNormalizer:
    times = np.unique(np.concatenate([[0.0], np.asarray(times, float)]))
    traj = solve_forward(field, 0.0, float(times[-1]), np.zeros(1, complex),
                         tol=tol, checkpoints=times, atol=_ATOL_FLOOR)
    return normalize(traj)


def verify_psi_normalization(field: VectorFieldHandle, pairs, tol: float = 1e-9,
                             tol_norm: float = 1e-9) -> tuple[bool, float]:
    """Check psi_{s,t}(0) = 0 and psi'_{s,t}(0) > 0 for the given (s, t) pairs.

    psi_{s,t} = M_t^{-1} o phi_{s,t} o M_s is rebuilt from fresh integrations;
    returns (passed, worst residual) where the residual covers both |psi(0)|
    and |Im log psi'(0)|.
    """
    pairs = list(pairs)
    times = np.unique(np.concatenate([[0.0], [s for s, _ in pairs], [t for _, t in pairs]]))
    nz = _normalizer_for(field, times, tol)
    h = 1e-5
    worst = 0.0
    for s, t in pairs:
        seeds = nz.m(float(s), np.array([0.0, h, -h], dtype=complex))
        traj = solve_forward(field, float(s), float(t), seeds, tol=tol)
        img = nz.m_inv(float(t), traj.at(float(t)))
        worst = max(worst, float(abs(img[0])))
        dpsi = (img[1] - img[2]) / (2.0 * h)
        if abs(dpsi) == 0:
            return False, np.inf
        worst = max(worst, float(abs(np.angle(dpsi))))
    return worst <= tol_norm, worst


def _polynomial_table(its: np.ndarray) -> np.ndarray:
    """Richardson (polynomial Neville at x=0) table for x_k = 2^{-k} nodes."""
    K = its.shape[0]
    tab = np.full((K, K) + its.shape[1:], np.nan, dtype=complex)
    tab[:, 0] = its
    for k in range(1, K):
        for m in range(1, k + 1):
            c = 2.0 ** m
            tab[k, m] = (c * tab[k, m - 1] - tab[k - 1, m - 1]) / (c - 1.0)
    return tab


def _rational_table(its: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Bulirsch-Stoer rational extrapolation table at x = 0.

    Column c holds the order-(c-1) rational extrapolants; T[i, 0] is the
    conventional zero column of the recursion.  Exact for iterates that are
    Mobius functions of x, which is what boundary Denjoy-Wolff data produce.
    """
    K = its.shape[0]
    T = np.full((K, K + 1) + its.shape[1:], np.nan, dtype=complex)
    T[:, 0] = 0.0
    T[:, 1] = its
    for k in range(1, K):
        for i in range(k, K):
            num = T[i, k] - T[i - 1, k]
            den_inner = T[i, k] - T[i - 1, k - 1]
            with np.errstate(divide="ignore", invalid="ignore"):
                ratio = np.where(den_inner != 0, num / den_inner, 0.0)
                factor = (xs[i - k] / xs[i]) * (1.0 - ratio) - 1.0
                upd = np.where(factor != 0, num / factor, 0.0)
            T[i, k + 1] = T[i, k] + upd
    return T


def _best_extrapolant(its: np.ndarray):
    """Per-point extrapolated limit of a doubling-horizon sequence.

    Candidates are the raw tail, the last-row polynomial extrapolants (which
    use only the finest horizons) and the last-row rational extrapolants;
    each point picks the candidate with the smallest internal error
    estimate.  Near the Denjoy-Wolff point the 1/u power series can diverge
    while the rational extrapolant stays exact, so no depth is forced
    globally.  Returns (values, per-point error estimates).
    """
    its = np.asarray(its, dtype=complex)
    K = its.shape[0]
    if K < 2:
        return its[-1], np.full(its.shape[1:], np.nan)
    cand_vals = [its[-1]]
    cand_errs = [np.abs(its[-1] - its[-2])]

    poly = _polynomial_table(its)
    for m in range(1, K):
        est = np.abs(poly[K - 1, m] - poly[K - 1, m - 1])
        if m <= K - 2:
            est = est + np.abs(poly[K - 1, m] - poly[K - 2, m])
        cand_vals.append(poly[K - 1, m])
        cand_errs.append(est)

    xs = 2.0 ** -np.arange(K)
    rat = _rational_table(its, xs)
    for c in range(2, K + 1):
        est = np.abs(rat[K - 1, c] - rat[K - 1, c - 1])
        if c <= K - 1:
            est = est + np.abs(rat[K - 1, c] - rat[K - 2, c])
        cand_vals.append(rat[K - 1, c])
        cand_errs.append(est)

    vals = np.stack(cand_vals)
    errs = np.stack(cand_errs)
    errs = np.where(np.isfinite(errs) & np.isfinite(vals), errs, np.inf)
    pick = np.argmin(errs, axis=0)
    gather = (pick,) + tuple(np.indices(pick.shape))
    return vals[gather], errs[gather]


@dataclass
class ChainLimitResult:
    """One chain frame: f_t (and d f_t/dz) at the requested points.

    ``point_delta`` is the per-point successive-estimate (or extrapolation)
    error estimate; ``point_converged`` compares it against tol_limit scaled
    by the local value.  ``converged`` aggregates over all valid points and
    ``horizon_used`` reports where the iteration stopped.
    """

    t: float
    points: np.ndarray
    values: np.ndarray
    derivs: np.ndarray
    valid: np.ndarray
    point_delta: np.ndarray
    point_converged: np.ndarray
    converged: bool
    raw_delta: float
    acc_delta: float
    horizon_used: float
    accelerated: bool


def limit_frame(field: VectorFieldHandle, t: float, points, tol: float = 1e-9,
                t_inf: float = DEFAULT_T_INF, tol_limit: float = DEFAULT_TOL_LIMIT,
                normalizer: MobiusNormalizer | None = None) -> ChainLimitResult:
    """Evaluate f_t at the given interior points through the scaling limit.

    The horizon schedule doubles its offset from t until either the raw
    iterates agree to tol_limit in sup norm (early stop, the plain limit)
    or the schedule is exhausted, in which case Richardson extrapolation
    against 1/(u - t) supplies the returned values.
    """
    pts = np.atleast_1d(np.asarray(points, dtype=complex))
    horizons = t + horizon_offsets(t_inf)
    if normalizer is None:
        normalizer = _normalizer_for(field, horizons, tol)

    vals = pts.copy()
    ders = np.ones_like(pts)
    live = np.ones(pts.shape, bool)
    its, dits = [], []
    raw_delta = np.nan
    prev_u = t
    used = float(horizons[-1])
    stopped_raw = False
    for u in horizons:
        u = float(u)
        if live.any():
            leg = solve_forward(field, prev_u, u, vals[live], tol=tol, atol=_ATOL_FLOOR)
            lv, ld = leg.at(u), leg.deriv_at(u)
            ok = leg.live() & np.isfinite(lv) & np.isfinite(ld)
            upd = np.flatnonzero(live)
            vals[upd[ok]] = lv[ok]
            ders[upd[ok]] = ld[ok] * ders[upd[ok]]
            live[upd[~ok]] = False
        prev_u = u
        sp = normalizer.psi_prime0(u)
        its.append(np.where(live, normalizer.m_inv(u, vals) / sp, np.nan + 0j))
        dits.append(np.where(live, normalizer.m_inv_deriv(u, vals) * ders / sp, np.nan + 0j))
        if len(its) >= 2 and live.any():
            d_new = float(np.abs((its[-1] - its[-2])[live]).max())
            # once psi'_{0,u}(0) decays toward machine scale the Mobius
            # renormalization cancels catastrophically and the deltas
            # re-diverge after having nearly converged; such horizons carry
            # only noise and are discarded
            if np.isfinite(raw_delta) and raw_delta < 1e-4 and d_new > 10.0 * raw_delta:
                its.pop()
                dits.pop()
                break
            raw_delta = d_new
            used = u
            d_deriv = float(np.abs((dits[-1] - dits[-2])[live]).max())
            deriv_scale = max(1.0, float(np.abs(dits[-1][live]).max()))
            if raw_delta < tol_limit and d_deriv < tol_limit * deriv_scale:
                stopped_raw = True
                break
        # with five or more horizons the extrapolants usually settle long
        # before the raw tail does; stop once they certify every live point,
        # derivatives included (they converge slower for boundary tau data)
        if len(its) >= 5 and live.any():
            v_try, ve = _best_extrapolant(np.stack(its))
            d_try, de = _best_extrapolant(np.stack(dits))
            v_ok = ve[live] <= tol_limit * np.maximum(1.0, np.abs(v_try[live]))
            d_ok = de[live] <= tol_limit * np.maximum(1.0, np.abs(d_try[live]))
            if bool(v_ok.all()) and bool(d_ok.all()):
                used = u
                break

    its = np.stack(its)
    dits = np.stack(dits)
    valid = live & np.isfinite(its[-1])
    if stopped_raw or its.shape[0] < 3:
        values = its[-1]
        derivs = dits[-1]
        pdelta = np.abs(its[-1] - its[-2]) if its.shape[0] >= 2 else np.full(pts.shape, np.nan)
        acc_delta = raw_delta
        accelerated = False
    else:
        values, pdelta = _best_extrapolant(its)
        derivs, _ = _best_extrapolant(dits)
        acc_delta = float(pdelta[valid].max()) if valid.any() else np.nan
        accelerated = True
    values = np.where(valid, values, np.nan + 0j)
    derivs = np.where(valid, derivs, np.nan + 0j)
    point_conv = valid & (pdelta <= tol_limit * np.maximum(1.0, np.abs(values)))
    converged = bool(point_conv[valid].all()) if valid.any() else False
    return ChainLimitResult(t, pts, values, derivs, valid, pdelta, point_conv,
                            converged, raw_delta, acc_delta, used, accelerated)


def chain_limit(field: VectorFieldHandle, s: float, grid, tol: float = 1e-9,
                t_inf: float = DEFAULT_T_INF,
                tol_limit: float = DEFAULT_TOL_LIMIT) -> ChainLimitResult:
    """h_s on the seed grid: the scaling limit of psi_{s,u} / psi'_{0,u}(0).

    Since h_s = f_s o M_s, the points are pushed through M_s and the frame
    limit is evaluated there.
    """
    pts = grid.points if isinstance(grid, SeedGrid) else np.atleast_1d(np.asarray(grid, complex))
    horizons = s + horizon_offsets(t_inf)
    normalizer = _normalizer_for(field, np.concatenate([[s], horizons]), tol)
    moved = normalizer.m(s, pts)
    res = limit_frame(field, s, moved, tol, t_inf, tol_limit, normalizer)
    return ChainLimitResult(s, pts, res.values, res.derivs, res.valid,
                            res.point_delta, res.point_converged, res.converged,
                            res.raw_delta, res.acc_delta, res.horizon_used, res.accelerated)


# ---------------------------------------------------------------------------
# chain frames


@dataclass
class ChainFrames:
    """Discretized chain: interior values plus near-boundary traces per time.

    ``derivs`` carries d f_t / dz from the variational equation, exact up to
    integration error (no grid differencing).  ``traces_mid`` holds a second
    ring at half the trace offset for Richardson-style boundary diagnostics.
    """

    tag: str
    checkpoints: np.ndarray
    grid: SeedGrid
    values: np.ndarray
    derivs: np.ndarray
    grid_valid: np.ndarray
    theta: np.ndarray
    trace_radius: float
    traces: np.ndarray
    trace_derivs: np.ndarray
    trace_valid: np.ndarray
    traces_mid: np.ndarray | None
    origin_values: np.ndarray
    origin_derivs: np.ndarray
    converged: np.ndarray
    raw_delta: np.ndarray
    acc_delta: np.ndarray
    warnings: list[str] = field(default_factory=list)

    @property
    def n_theta(self) -> int:
        return self.theta.size

    def row(self, t: float) -> int:
        i = int(np.argmin(np.abs(self.checkpoints - t)))
        if abs(self.checkpoints[i] - t) > 1e-10 * max(1.0, abs(t)):
            raise KeyError(f"checkpoint {t} not stored")
        return i


def _frame_points(grid: SeedGrid, n_theta: int, delta_trace: float, second: bool):
    ring = trace_ring(n_theta, delta_trace)
    blocks = [grid.points, ring]
    if second:
        blocks.append(trace_ring(n_theta, delta_trace / 2.0))
    blocks.append(np.zeros(1, complex))
    return np.concatenate(blocks), ring


def _split_frame(vals, derivs, data_ok, trace_ok, n_grid, n_theta, second):
    g = slice(0, n_grid)
    r1 = slice(n_grid, n_grid + n_theta)
    r2 = slice(n_grid + n_theta, n_grid + 2 * n_theta) if second else None
    o = -1
    return (vals[g], derivs[g], data_ok[g],
            vals[r1], derivs[r1], trace_ok[r1],
            (vals[r2] if second else None),
            vals[o], derivs[o])


def range_normalized_chain(field: VectorFieldHandle, checkpoints, grid: SeedGrid,
                           n_theta: int = 256, delta_trace: float = 1e-3,
                           tol: float = 1e-9, t_inf: float = DEFAULT_T_INF,
                           tol_limit: float = DEFAULT_TOL_LIMIT,
                           second_radius: bool = True,
                           via_transition: bool | None = None) -> ChainFrames:
    """Frames of the range-normalized chain f_t at every checkpoint.

    Two construction modes share the same limit evaluator.  The direct mode
    runs one scaling limit per checkpoint.  The composition mode pushes all
    frame points to the last checkpoint by short integrations and evaluates
    a single batched limit there, using f_s = f_T o phi_{s,T}; it is picked
    automatically for dense checkpoint grids, where it is much cheaper.
    Transition verification should run against direct-mode frames so that
    the identity is not checked against its own construction.
    """
    cps = np.unique(np.asarray(checkpoints, dtype=float))
    if via_transition is None:
        via_transition = cps.size > 12
    offsets = horizon_offsets(t_inf)
    t_last = float(cps[-1])
    if via_transition:
        all_times = t_last + offsets
    else:
        all_times = np.unique((cps[:, None] + offsets[None, :]).ravel())
    normalizer = _normalizer_for(field, all_times, tol)

    pts, _ = _frame_points(grid, n_theta, delta_trace, second_radius)
    n_grid, nt = len(grid), cps.size
    npts = pts.size
    values = np.empty((nt, n_grid), complex)
    derivs = np.empty((nt, n_grid), complex)
    gvalid = np.empty((nt, n_grid), bool)
    traces = np.empty((nt, n_theta), complex)
    tderivs = np.empty((nt, n_theta), complex)
    tvalid = np.empty((nt, n_theta), bool)
    tmid = np.empty((nt, n_theta), complex) if second_radius else None
    origin_v = np.empty(nt, complex)
    origin_d = np.empty(nt, complex)
    converged = np.empty(nt, bool)
    raw_d = np.empty(nt)
    acc_d = np.empty(nt)
    warnings: list[str] = []

    def fill_row(i, row_vals, row_ders, data_ok, conv_ok, raw, acc):
        # validity (finite, untruncated) and convergence are kept apart: the
        # grid mask records validity while trace nodes additionally require
        # per-point convergence, since atlases consume them blindly.  Frame
        # convergence is judged on the interior grid.
        (values[i], derivs[i], gvalid[i], traces[i], tderivs[i], tvalid[i],
         mid, origin_v[i], origin_d[i]) = _split_frame(
            row_vals, row_ders, data_ok, data_ok & conv_ok, n_grid, n_theta, second_radius)
        if second_radius:
            tmid[i] = mid
        converged[i] = bool((conv_ok[:n_grid] | ~data_ok[:n_grid]).all()
                            and data_ok[:n_grid].any())
        raw_d[i] = raw
        acc_d[i] = acc
        if not converged[i]:
            warnings.append(f"chain limit unconverged on the grid at t = {cps[i]} "
                            f"(delta {acc:.3g})")
        n_masked = int(np.count_nonzero(~tvalid[i]))
        if n_masked:
            warnings.append(f"{n_masked} trace node(s) masked at t = {cps[i]}")

    if via_transition:
        images = np.empty((nt, npts), complex)
        leg_ders = np.empty((nt, npts), complex)
        leg_ok = np.empty((nt, npts), bool)
        for i, t in enumerate(cps[:-1]):
            leg = solve_forward(field, float(t), t_last, pts, tol=tol, atol=_ATOL_FLOOR)
            images[i] = leg.at(t_last)
            leg_ders[i] = leg.deriv_at(t_last)
            leg_ok[i] = leg.live() & np.isfinite(images[i])
        images[-1] = pts
        leg_ders[-1] = 1.0
        leg_ok[-1] = True
        res = limit_frame(field, t_last, images.ravel(), tol, t_inf, tol_limit, normalizer)
        rv = res.values.reshape(nt, npts)
        rd = res.derivs.reshape(nt, npts) * leg_ders
        data_ok = res.valid.reshape(nt, npts) & leg_ok
        conv_ok = res.point_converged.reshape(nt, npts)
        for i in range(nt):
            fill_row(i, rv[i], rd[i], data_ok[i], conv_ok[i], res.raw_delta, res.acc_delta)
    else:
        for i, t in enumerate(cps):
            res = limit_frame(field, float(t), pts, tol, t_inf, tol_limit, normalizer)
            fill_row(i, res.values, res.derivs, res.valid, res.point_converged,
                     res.raw_delta, res.acc_delta)

    theta = 2.0 * np.pi * np.arange(n_theta) / n_theta
    frames = ChainFrames("range-normalized", cps, grid, values, derivs, gvalid,
                         theta, 1.0 - delta_trace, traces, tderivs, tvalid, tmid,
                         origin_v, origin_d, converged, raw_d, acc_d, warnings)
    # f_0 in S: f_0(0) = 0 and f_0'(0) = 1 up to the chain tolerance
    if cps[0] == 0.0:
        m0 = abs(origin_v[0])
        d0 = abs(origin_d[0] - 1.0)
        if m0 > TOL_CHAIN or d0 > TOL_CHAIN:
            frames.warnings.append(
                f"f_0 normalization residuals |f_0(0)| = {m0:.3g}, |f_0'(0)-1| = {d0:.3g}")
    return frames


def decreasing_chain(field: VectorFieldHandle, checkpoints, grid: SeedGrid,
                     n_theta: int = 256, delta_trace: float = 1e-3,
                     tol: float = 1e-9, second_radius: bool = True) -> ChainFrames:
    """Decreasing chain g_t = omega_{0,t} by reverse integration per checkpoint."""
    cps = np.unique(np.asarray(checkpoints, dtype=float))
    pts, ring = _frame_points(grid, n_theta, delta_trace, second_radius)
    n_grid, nt = len(grid), cps.size
    values = np.empty((nt, n_grid), complex)
    derivs = np.empty((nt, n_grid), complex)
    gvalid = np.empty((nt, n_grid), bool)
    traces = np.empty((nt, n_theta), complex)
    tderivs = np.empty((nt, n_theta), complex)
    tvalid = np.empty((nt, n_theta), bool)
    tmid = np.empty((nt, n_theta), complex) if second_radius else None
    origin_v = np.empty(nt, complex)
    origin_d = np.empty(nt, complex)

    for i, t in enumerate(cps):
        if t == 0.0:
            vals, dvs, ok = pts.copy(), np.ones_like(pts), np.ones(pts.shape, bool)
        else:
            traj = solve_reverse(field, float(t), pts, tol=tol, checkpoints=[0.0])
            vals, dvs = traj.at(0.0), traj.deriv_at(0.0)
            ok = traj.live() & np.isfinite(vals)
        (values[i], derivs[i], gvalid[i], traces[i], tderivs[i], tvalid[i],
         mid, origin_v[i], origin_d[i]) = _split_frame(
            vals, dvs, ok, ok, n_grid, n_theta, second_radius)
        if second_radius:
            tmid[i] = mid

    theta = 2.0 * np.pi * np.arange(n_theta) / n_theta
    ones = np.ones(nt, bool)
    return ChainFrames("decreasing", cps, grid, values, derivs, gvalid,
                       theta, 1.0 - delta_trace, traces, tderivs, tvalid, tmid,
                       origin_v, origin_d, ones, np.zeros(nt), np.zeros(nt))


# ---------------------------------------------------------------------------
# range classification


@dataclass
class RangeReport:
    """Loewner-range classification from the beta limit.

    beta0 is the reported estimate at the origin probe: the raw value once
    it stabilizes or drops under tol_beta, otherwise the Richardson limit
    of the doubling sequence clipped to [0, last raw value] (the raw
    estimates are non-increasing, so the true limit lives there).
    """

    classification: str
    beta0: float
    radius: float | None
    probes: np.ndarray
    raw_last: np.ndarray
    extrapolated: np.ndarray
    history: np.ndarray
    horizons: np.ndarray
    probe_class: list[str]
    warnings: list[str] = field(default_factory=list)


def beta_limit(field: VectorFieldHandle, probes=None, t_inf: float = DEFAULT_T_INF,
               tol: float = 1e-9, tol_beta: float = TOL_BETA,
               tol_stable: float = 1e-3) -> RangeReport:
    """Estimate beta(z) = lim |phi'_{0,t}(z)| / (1 - |phi_{0,t}(z)|^2).

    The sequence along the doubling horizons is non-increasing (Schwarz-Pick),
    so each probe is classified as zero when the raw tail or its Richardson
    limit falls under tol_beta, nonzero when the tail has stabilized, and
    inconclusive otherwise.  The plane/disk verdict requires all probes to
    agree; the theory makes beta vanish either everywhere or nowhere.
    """
    if probes is None:
        probes = np.array([0.0, 0.3, -0.25 + 0.25j, 0.4j, -0.5])
    probes = np.atleast_1d(np.asarray(probes, dtype=complex))
    if not np.any(probes == 0):
        probes = np.concatenate([[0.0], probes])
    if np.any(np.abs(probes) >= 1.0):
        raise ValueError("beta probes must be interior")

    horizons = horizon_offsets(t_inf)
    traj = solve_forward(field, 0.0, float(horizons[-1]), probes, tol=tol,
                         checkpoints=horizons, atol=_ATOL_FLOOR)
    hist = np.empty((horizons.size, probes.size))
    for k, u in enumerate(horizons):
        w, dw = traj.at(u), traj.deriv_at(u)
        hist[k] = np.abs(dw) / (1.0 - np.abs(w) ** 2)

    raw_last = hist[-1]
    best, _ = _best_extrapolant(hist.astype(complex))
    # the raw sequence is non-increasing and nonnegative, so the limit is
    # bracketed by [0, last raw value]
    extrap = np.clip(best.real, 0.0, raw_last)
    classes = []
    warnings = []
    for j in range(probes.size):
        b = hist[:, j]
        if not np.all(np.isfinite(b)):
            classes.append("inconclusive")
            warnings.append(f"non-finite beta estimates at probe {probes[j]}")
            continue
        if raw_last[j] <= tol_beta:
            classes.append("zero")
            continue
        tail = b[-4:]
        ratios = tail[1:] / np.maximum(tail[:-1], 1e-300)
        if np.all(ratios <= 0.9) and extrap[j] <= tol_beta:
            classes.append("zero")
            continue
        rel_change = abs(b[-1] - b[-2]) / max(b[-1], 1e-300)
        if rel_change <= tol_stable:
            classes.append("nonzero")
        else:
            classes.append("inconclusive")
            warnings.append(
                f"beta at probe {probes[j]} neither stabilized nor contracting "
                f"(last values {b[-3:]})")

    j0 = int(np.flatnonzero(probes == 0)[0])
    if all(c == "zero" for c in classes):
        cls = "plane"
        beta0 = float(raw_last[j0] if raw_last[j0] <= tol_beta else extrap[j0])
        radius = None
    elif all(c == "nonzero" for c in classes):
        cls = "disk"
        beta0 = float(raw_last[j0])
        radius = 1.0 / beta0
    else:
        cls = "inconclusive"
        beta0 = float(raw_last[j0])
        radius = None
        warnings.append(f"probes disagree on the zero set: {classes}")
    return RangeReport(cls, beta0, radius, probes, raw_last, extrap, hist,
                       horizons, classes, warnings)


# ---------------------------------------------------------------------------
# verification


@dataclass
class TransitionReport:
    residual: float
    per_pair: list[tuple[float, float, float]]
    passed: bool
    excluded: int


def verify_transitions(frames: ChainFrames, field: VectorFieldHandle, pairs=None,
                       tol: float = 1e-9, tol_chain: float = TOL_CHAIN,
                       t_inf: float = DEFAULT_T_INF) -> TransitionReport:
    """Check f_s = f_t o phi_{s,t} on the stored grid for checkpoint pairs.

    Both sides come from independent computations: the stored frame at s
    against a fresh limit evaluation at the integrated image points.
    """
    if frames.tag != "range-normalized":
        raise ValueError("transition identity applies to range-normalized frames")
    cps = frames.checkpoints
    if pairs is None:
        pairs = [(cps[i], cps[i + 1]) for i in range(len(cps) - 1)]
        if len(cps) > 2:
            pairs.append((cps[0], cps[-1]))
    worst = 0.0
    detail = []
    excluded = 0
    for s, t in pairs:
        i, j = frames.row(s), frames.row(t)
        traj = solve_forward(field, float(s), float(t), frames.grid.points, tol=tol)
        img = traj.at(float(t))
        ok = traj.live() & frames.grid_valid[i] & np.isfinite(img)
        excluded += int(np.count_nonzero(~ok))
        if not ok.any():
            continue
        res = limit_frame(field, float(t), img[ok], tol, t_inf)
        diff = np.abs(res.values - frames.values[i][ok])
        r = float(np.nanmax(diff))
        detail.append((float(s), float(t), r))
        worst = max(worst, r)
    return TransitionReport(worst, detail, worst <= tol_chain, excluded)


@dataclass
class PdeReport:
    rel_residual: float
    abs_residual: float
    rel_residual_griddiff: float | None
    dt: float
    n_interior: int
    resolution_limited: bool
    sup_p: float


def verify_chain_pde(frames: ChainFrames, field: VectorFieldHandle,
                     r_max: float | None = None) -> PdeReport:
    """Residual of the chain PDE at interior checkpoints.

    d f_t / dt comes from centered differences of the frames; d f_t / dz is
    the stored variational derivative.  The residual is reported relative to
    |d f/dz| * sup|p|.  A secondary residual recomputed with chord
    differences of f along each stored circle is included when the grid has
    circle structure (its angular floor usually dominates, which is why the
    variational derivative is the primary route).
    """
    cps = frames.checkpoints
    if cps.size < 3:
        raise ValueError("need >= 3 checkpoints for time differencing")
    sel = np.ones(len(frames.grid), bool)
    if r_max is not None:
        sel = np.abs(frames.grid.points) <= r_max + 1e-12
    z = frames.grid.points[sel]
    vals = frames.values[:, sel]
    dfs = frames.derivs[:, sel]

    dt_all = np.diff(cps)
    dt = float(dt_all.mean())
    lhs = nonuniform_centered(vals, cps, axis=0)

    sup_p = 0.0
    rhs = np.empty_like(vals)
    for i, t in enumerate(cps):
        tv = field.tau_at(float(t))
        pv = field.p.evaluate(z, float(t))
        sup_p = max(sup_p, float(np.abs(pv).max()))
        if frames.tag == "range-normalized":
            a = (z - tv) * (1.0 - np.conj(tv) * z)
        else:
            a = (z - tv) * (np.conj(tv) * z - 1.0)
        rhs[i] = a * dfs[i] * pv

    interior = np.arange(1, cps.size - 1)
    # keep a full step away from tau's switching times
    for b in field.discontinuities:
        interior = interior[np.abs(cps[interior] - b) > dt_all.max() + 1e-12]
    resid = np.abs(lhs[interior] - rhs[interior])
    denom = np.abs(dfs[interior]) * max(sup_p, 1e-300)
    with np.errstate(invalid="ignore"):
        rel = resid / denom
    rel_res = float(np.nanmax(rel)) if rel.size else np.nan
    abs_res = float(np.nanmax(resid)) if resid.size else np.nan

    rel_grid = None
    g = frames.grid
    if g.n_angles >= 8:
        dz_grid = np.empty_like(frames.values)
        for ci in range(len(g.radii)):
            sl = slice(ci * g.n_angles, (ci + 1) * g.n_angles)
            zc = g.points[sl]
            fc = frames.values[:, sl]
            dz_grid[:, sl] = (np.roll(fc, -1, axis=1) - np.roll(fc, 1, axis=1)) / \
                (np.roll(zc, -1) - np.roll(zc, 1))
        dzg = dz_grid[:, sel]
        rhs_g = rhs / np.where(dfs == 0, np.nan, dfs) * dzg
        with np.errstate(invalid="ignore"):
            rg = np.abs(lhs[interior] - rhs_g[interior]) / \
                (np.abs(dzg[interior]) * max(sup_p, 1e-300))
        rel_grid = float(np.nanmax(rg)) if rg.size else np.nan

    return PdeReport(rel_res, abs_res, rel_grid, dt, interior.size,
                     bool(dt > 0.05), sup_p)


@dataclass
class ContainmentReport:
    """Trace-curve nesting along the chain, by winding-number tests."""

    passed: bool
    checked_pairs: int
    violations: int
    probes_skipped: int
    lambda_diameter: float | None


def verify_containment(frames: ChainFrames, n_probe: int = 32) -> ContainmentReport:
    """Spot-check image monotonicity using trace polygons.

    For decreasing frames each later trace must wind once inside every
    earlier one; for range-normalized frames the nesting is reversed.
    Probes closer to the outer polygon than twice its local edge length are
    skipped: domains with a common boundary fixed point are internally
    tangent there and the trace offset cannot resolve which side a point
    falls on.  The diameter of the last trace hull is reported for
    decreasing chains (it collapses when the intersection set degenerates
    to a point).
    """
    nt = frames.checkpoints.size
    step = max(1, frames.n_theta // n_probe)
    violations = 0
    checked = 0
    skipped = 0
    for i in range(nt - 1):
        outer_i, inner_i = (i, i + 1) if frames.tag == "decreasing" else (i + 1, i)
        if not (frames.trace_valid[outer_i].all() and frames.trace_valid[inner_i].all()):
            continue
        poly = frames.traces[outer_i]
        probes = frames.traces[inner_i][::step]
        edge = np.abs(np.roll(poly, -1) - poly)
        local_scale = np.maximum(edge, np.roll(edge, 1))
        dist = np.abs(probes[:, None] - poly[None, :])
        nearest = np.argmin(dist, axis=1)
        clear = dist[np.arange(probes.size), nearest] > 2.0 * local_scale[nearest]
        skipped += int(np.count_nonzero(~clear))
        checked += 1
        if clear.any():
            w = winding_number(poly, probes[clear])
            if not np.all(w == 1):
                violations += 1
    lam = None
    if frames.tag == "decreasing" and frames.trace_valid[-1].all():
        tr = frames.traces[-1]
        lam = float(np.abs(tr[:, None] - tr[None, :]).max())
    return ContainmentReport(violations == 0, checked, violations, skipped, lam)


def frames_coincide_up_to_rotation(frames: ChainFrames, tol: float = 1e-9) -> tuple[bool, float]:
    """True when every frame is a rigid rotation of the first (T = 0 data)."""
    ref = frames.values[0]
    ok = frames.grid_valid.all(axis=0)
    zref = ref[ok]
    j = int(np.argmax(np.abs(zref)))
    worst = 0.0
    for i in range(1, frames.checkpoints.size):
        cur = frames.values[i][ok]
        rot = zref[j] / cur[j]
        rot /= abs(rot)
        worst = max(worst, float(np.abs(cur * rot - zref).max()))
    return worst <= tol, worst
