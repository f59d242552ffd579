"""Geometric diagnostics: principal angles, Friedrichs cosine, error bounds.

All angle machinery acts on direction spaces (null spaces of the constraint
matrices), so translations of the subspaces are irrelevant.  The Friedrichs
cosine is the largest principal cosine left after deflating the shared
direction subspace; it is always < 1 for subspaces with a common point, and
the constant sqrt(1 + 4 / (1 - c_F^2)) turns per-block distances into a bound
on the distance to the intersection.
"""

import json
from dataclasses import dataclass

import numpy as np

from .affine import intersection_subspace, residual

# Principal cosines >= 1 - INTERSECTION_CUTOFF mark shared directions.
INTERSECTION_CUTOFF = 1e-10


def direction_basis(subspace):
    """Orthonormal basis of the subspace's direction space, shape (n, dim)."""
    return subspace.direction_basis()


def principal_cosines(u_subspace, v_subspace):
    """All principal cosines between the two direction spaces, descending."""
    bu = u_subspace.direction_basis()
    bv = v_subspace.direction_basis()
    if bu.shape[1] == 0 or bv.shape[1] == 0:
        return np.empty(0)
    sigma = np.linalg.svd(bu.T @ bv, compute_uv=False)
    return np.clip(sigma, 0.0, 1.0)


def _checked_cosines(u_subspace, v_subspace):
    # Raises EmptyIntersection when the pair has no common point.
    intersection_subspace([u_subspace, v_subspace])
    return principal_cosines(u_subspace, v_subspace)


def _deflate(cosines):
    shared = int(np.count_nonzero(cosines >= 1.0 - INTERSECTION_CUTOFF))
    rest = cosines[shared:]
    c_f = float(rest[0]) if rest.size else 0.0
    return shared, c_f


def friedrichs_cosine(u_subspace, v_subspace):
    """Cosine of the Friedrichs angle between two intersecting subspaces.

    Largest principal cosine after removing the shared direction subspace;
    identical subspaces therefore give 0 (supremum over the zero space).
    Always in [0, 1).
    """
    _, c_f = _deflate(_checked_cosines(u_subspace, v_subspace))
    return c_f


def error_bound_constant(u_subspace, v_subspace):
    """sqrt(1 + 4 / (1 - c_F^2)): dist(x, U∩V) <= r * max(dist(x,U), dist(x,V))."""
    c_f = friedrichs_cosine(u_subspace, v_subspace)
    return float(np.sqrt(1.0 + 4.0 / (1.0 - c_f ** 2)))


@dataclass(frozen=True)
class AngleReport:
    friedrichs_cosine: float
    error_bound_constant: float
    intersection_dim: int
    principal_cosines: tuple

    def to_dict(self):
        return {
            "friedrichs_cosine": self.friedrichs_cosine,
            "error_bound_constant": self.error_bound_constant,
            "intersection_dim": self.intersection_dim,
            "principal_cosines": list(self.principal_cosines),
        }

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), **kwargs)


def angle_report(u_subspace, v_subspace):
    """Full angle diagnostics for a pair of intersecting subspaces."""
    cosines = _checked_cosines(u_subspace, v_subspace)
    shared, c_f = _deflate(cosines)
    r = float(np.sqrt(1.0 + 4.0 / (1.0 - c_f ** 2)))
    return AngleReport(
        friedrichs_cosine=c_f,
        error_bound_constant=r,
        intersection_dim=shared,
        principal_cosines=tuple(float(s) for s in cosines),
    )


def estimate_regularity(instance, samples, seed):
    """Empirical regularity constant max dist(x, S) / max_i dist(x, U_i).

    Samples standard-normal points around a feasible anchor; points already
    in the intersection (to tolerance) are skipped.  The true constant is an
    upper bound over all of space, so the sampled value only bounds it from
    below.  Always >= 1; exactly 1 for a single block.
    """
    stacked = intersection_subspace(instance.subspaces)
    n = instance.ambient_dim
    rng = np.random.default_rng(seed)
    anchor = stacked.project(np.zeros(n))
    points = anchor + rng.standard_normal((int(samples), n))
    per_block_max = residual(instance.subspaces, points)
    to_intersection = stacked.distance(points)
    keep = per_block_max > 1e-12 * (1.0 + np.linalg.norm(points, axis=-1))
    if not np.any(keep):
        return 1.0
    return float(max(1.0, np.max(to_intersection[keep] / per_block_max[keep])))
