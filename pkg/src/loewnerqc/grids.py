"""Sample grids on the unit disk and small geometric helpers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

#: Seeds are kept strictly inside the disk by this margin.
DELTA_GUARD = 1e-6

#: Radii used by the criteria checks (suprema over the disk are sampled here).
CRITERIA_RADII = tuple(np.round(np.arange(0.10, 0.951, 0.05), 2)) + (0.99,)


@dataclass
class SeedGrid:
    """Interior sample points with labels back to their (circle, angle) construction.

    Points from :func:`circle_grid` are ordered circle-major, so points of
    circle ``i`` occupy the contiguous slice ``[i * n_angles, (i+1) * n_angles)``.
    """

    points: np.ndarray
    labels: list[tuple[int, int]] = field(default_factory=list)
    radii: tuple[float, ...] = ()
    n_angles: int = 0

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=complex)
        if np.any(np.abs(self.points) > 1.0 - DELTA_GUARD):
            bad = np.abs(self.points).max()
            raise ValueError(f"seed modulus {bad} exceeds guard {1.0 - DELTA_GUARD}")

    def __len__(self) -> int:
        return self.points.size

    def circle(self, i: int) -> np.ndarray:
        """Points of the i-th circle (requires a circle_grid construction)."""
        if self.n_angles == 0:
            raise ValueError("grid was not built from circles")
        return self.points[i * self.n_angles:(i + 1) * self.n_angles]


def circle_grid(radii=(0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8), n_angles: int = 8) -> SeedGrid:
    """Concentric-circle seed grid, circle-major ordering."""
    radii = tuple(float(r) for r in radii)
    theta = 2.0 * np.pi * np.arange(n_angles) / n_angles
    pts = np.concatenate([r * np.exp(1j * theta) for r in radii])
    labels = [(i, j) for i in range(len(radii)) for j in range(n_angles)]
    return SeedGrid(points=pts, labels=labels, radii=radii, n_angles=n_angles)


def criteria_grid(radii=CRITERIA_RADII, n_angles: int = 256) -> np.ndarray:
    """Flat complex array used by the pointwise criteria checks."""
    theta = 2.0 * np.pi * np.arange(n_angles) / n_angles
    return np.concatenate([r * np.exp(1j * theta) for r in radii])


def trace_ring(n_theta: int, delta: float) -> np.ndarray:
    """Near-boundary ring (1 - delta) e^{i theta} standing in for boundary values."""
    theta = 2.0 * np.pi * np.arange(n_theta) / n_theta
    return (1.0 - delta) * np.exp(1j * theta)


def hyperbolic_distance(z: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Poincare distance on the disk, arctanh of the pseudo-hyperbolic ratio."""
    z = np.asarray(z, dtype=complex)
    w = np.asarray(w, dtype=complex)
    rho = np.abs((z - w) / (1.0 - np.conj(z) * w))
    # clip: roundoff can push the ratio a hair past 1 near the boundary
    return np.arctanh(np.clip(rho, 0.0, 1.0 - 1e-16))


def winding_number(polygon: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Winding number of a closed polygonal curve around each query point.

    The polygon is given by its vertices in order (closure is implicit).
    Returns an integer array; points on or very near an edge get whatever
    the angle sum rounds to, callers should keep probes away from edges.
    """
    poly = np.asarray(polygon, dtype=complex)
    pts = np.atleast_1d(np.asarray(points, dtype=complex))
    a = poly[None, :] - pts[:, None]
    b = np.roll(poly, -1)[None, :] - pts[:, None]
    angles = np.angle(b / a)
    total = angles.sum(axis=1) / (2.0 * np.pi)
    return np.rint(total).astype(int)


def nonuniform_centered(values: np.ndarray, coords: np.ndarray, axis: int = 0) -> np.ndarray:
    """Second-order centered first derivative on a nonuniform 1-d grid.

    Interior points use the unequal-spacing three-point formula; the two
    boundary points use one-sided differences.
    """
    v = np.moveaxis(np.asarray(values), axis, 0)
    x = np.asarray(coords, dtype=float)
    if v.shape[0] != x.size or x.size < 3:
        raise ValueError("need >= 3 samples along the differencing axis")
    out = np.empty_like(v)
    hm = (x[1:-1] - x[:-2]).reshape((-1,) + (1,) * (v.ndim - 1))
    hp = (x[2:] - x[1:-1]).reshape((-1,) + (1,) * (v.ndim - 1))
    out[1:-1] = (hm ** 2 * v[2:] - hp ** 2 * v[:-2] + (hp ** 2 - hm ** 2) * v[1:-1]) / (
        hm * hp * (hm + hp)
    )
    out[0] = (v[1] - v[0]) / (x[1] - x[0])
    out[-1] = (v[-1] - v[-2]) / (x[-1] - x[-2])
    return np.moveaxis(out, 0, axis)


def periodic_centered(values: np.ndarray, spacing: float, axis: int = -1) -> np.ndarray:
    """Centered first derivative on a uniform periodic grid."""
    v = np.asarray(values)
    return (np.roll(v, -1, axis=axis) - np.roll(v, 1, axis=axis)) / (2.0 * spacing)
