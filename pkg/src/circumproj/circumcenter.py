"""Circumcenter of a finite point set.

The circumcenter of points x_0, ..., x_m is the unique point of their affine
hull equidistant to all of them.  Writing it as x_0 + sum_j alpha_j (x_j - x_0),
the equidistance conditions reduce to the m x m normal system

    sum_j alpha_j <x_j - x_0, x_i - x_0> = 1/2 ||x_i - x_0||^2,   i = 1..m,

whose matrix is the Gram matrix of the difference vectors.  Affinely dependent
inputs make the Gram matrix singular; the minimum-norm least-squares solution
still recovers the unique equidistant point of the hull whenever one exists.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSystem, DimensionMismatch

# Accepted least-squares misfit of the normal system, relative to 1 + ||rhs||.
SOLVE_RTOL = 1e-8


@dataclass(frozen=True, eq=False)
class CircumcenterSystem:
    """Normal system assembled from a point set.

    gram:        (m, m) Gram matrix of x_j - x_0 (symmetric PSD)
    rhs:         (m,) vector of half squared difference norms
    base_point:  x_0
    differences: (m, n) rows x_j - x_0
    """

    gram: np.ndarray
    rhs: np.ndarray
    base_point: np.ndarray
    differences: np.ndarray


def _as_points(points):
    try:
        pts = np.asarray(points, dtype=float)
    except ValueError as exc:
        raise DimensionMismatch(f"points have mismatched dimensions: {exc}") from exc
    if pts.ndim != 2 or pts.shape[0] < 1:
        raise DimensionMismatch(f"expected a nonempty sequence of points, got shape {pts.shape}")
    return pts


def gram_system(points):
    """Assemble the circumcenter normal system for a sequence of points.

    A single point yields the empty (0 x 0) system.
    """
    pts = _as_points(points)
    base = pts[0]
    diffs = pts[1:] - base
    gram = diffs @ diffs.T
    rhs = 0.5 * np.einsum("ij,ij->i", diffs, diffs)
    return CircumcenterSystem(gram=gram, rhs=rhs, base_point=base, differences=diffs)


def circumcenter(points):
    """Point of the affine hull of `points` equidistant to all of them.

    Solves the Gram normal system by minimum-norm least squares (SVD with
    the standard max-dim * eps singular value cutoff), so duplicated or
    affinely dependent inputs are handled.  With a single input point, or
    when all points coincide, the first point is returned unchanged.

    Raises DegenerateSystem when no equidistant point exists in the hull
    (e.g. three distinct collinear points).
    """
    system = gram_system(points)
    if system.gram.shape[0] == 0:
        return system.base_point.copy()
    alpha, _, _, _ = np.linalg.lstsq(system.gram, system.rhs, rcond=None)
    misfit = np.linalg.norm(system.gram @ alpha - system.rhs)
    if misfit > SOLVE_RTOL * (1.0 + np.linalg.norm(system.rhs)):
        raise DegenerateSystem(
            f"no equidistant point in the affine hull (normal-system residual {misfit:.3e})"
        )
    return system.base_point + alpha @ system.differences
