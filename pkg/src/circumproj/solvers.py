"""Iteration operators and the solve driver.

Three operators act on the same block list:

* F-SPM: weighted average p_0 x + sum_i p_i P_i(x); Cimmino's method is the
  preset p_0 = 0, p_i = 1/m.
* CRM: circumcenter of x and its m sequentially composed reflections
  (inherently sequential; each reflection feeds the next).
* P-CRM: circumcenter of x and the m independent reflections of x, which can
  be fanned out to a thread pool.

Projection accounting: every reflection costs exactly one projection, so one
CRM/P-CRM iteration over m blocks counts m projections; one F-SPM iteration
counts one projection per positive weight p_i, i >= 1.
"""

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .affine import residual
from .circumcenter import circumcenter
from .errors import (
    DimensionMismatch,
    InsufficientData,
    InvalidWeights,
    MissingReference,
    NumericalBreakdown,
)


class Method(str, Enum):
    FSPM = "fspm"
    CIMMINO = "cimmino"
    CRM = "crm"
    PCRM = "pcrm"


class StopRule(str, Enum):
    REL_ERR_TO_KNOWN = "rel_err"
    FEASIBILITY_RESIDUAL = "feasibility"
    STEP_NORM = "step_norm"


class Status(str, Enum):
    CONVERGED = "converged"
    MAX_ITER = "max_iter"
    DIVERGED_NUMERICALLY = "diverged"


def uniform_weights(block_count):
    """All weights 1/(m+1), identity term included."""
    return np.full(block_count + 1, 1.0 / (block_count + 1))


def cimmino_weights(block_count):
    """Cimmino preset: no identity term, equal weights 1/m on the blocks."""
    w = np.full(block_count + 1, 1.0 / block_count)
    w[0] = 0.0
    return w


def validate_weights(weights, block_count):
    """Check p_0 >= 0, p_i > 0 for i >= 1, sum = 1; returns the array."""
    w = np.asarray(weights, dtype=float).ravel()
    if w.size != block_count + 1:
        raise InvalidWeights(f"expected {block_count + 1} weights, got {w.size}")
    if not np.all(np.isfinite(w)):
        raise InvalidWeights("weights must be finite")
    if w[0] < 0.0 or np.any(w[1:] <= 0.0):
        raise InvalidWeights("need p_0 >= 0 and p_i > 0 for every block")
    if abs(w.sum() - 1.0) > 1e-9 * w.size:
        raise InvalidWeights(f"weights sum to {w.sum()!r}, expected 1")
    return w


@dataclass
class SolverConfig:
    method: Method
    weights: np.ndarray | None = None
    tolerance: float = 1e-5
    max_iterations: int = 10_000
    stop_rule: StopRule = StopRule.REL_ERR_TO_KNOWN
    workers: int = 1
    record_residuals: bool = True

    def __post_init__(self):
        self.method = Method(self.method)
        self.stop_rule = StopRule(self.stop_rule)
        if not self.tolerance > 0.0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


@dataclass
class IterationTrace:
    """Per-iteration history of one solve.

    Entry k describes the iterate x_k: feasibility residual (nan when not
    recorded), distance to the known solution (nan when unknown), cumulative
    projection count spent to reach x_k, and elapsed wall-clock seconds.
    """

    iterations: list = field(default_factory=list)
    residuals: list = field(default_factory=list)
    distances: list = field(default_factory=list)
    projections: list = field(default_factory=list)
    elapsed_s: list = field(default_factory=list)
    status: Status | None = None
    wall_time_s: float = float("nan")

    def append(self, k, resid, dist, nproj, elapsed):
        self.iterations.append(k)
        self.residuals.append(resid)
        self.distances.append(dist)
        self.projections.append(nproj)
        self.elapsed_s.append(elapsed)

    @property
    def iteration_count(self):
        return self.iterations[-1] if self.iterations else 0

    @property
    def total_projections(self):
        return self.projections[-1] if self.projections else 0


@dataclass
class SolveResult:
    point: np.ndarray
    trace: IterationTrace


class _BlockKernel:
    """Batched projection kernels over a fixed tiling of the block list.

    Blocks are grouped into at most TARGET_TILES contiguous tiles at
    construction; within a tile the cached bases are zero-padded to a common
    width and stacked, so projecting one point against a whole tile is a
    pair of batched matmuls instead of a Python loop.  The tiling depends
    only on the block list, never on the worker count, and every tile is
    evaluated by its own matmul calls, so outputs are bitwise reproducible
    under any parallel schedule.
    """

    TARGET_TILES = 8

    def __init__(self, subspaces):
        subspaces = list(subspaces)
        n = subspaces[0].ambient_dim
        self.block_count = len(subspaces)
        self.ambient_dim = n
        tile_ranges = np.array_split(
            np.arange(self.block_count), min(self.block_count, self.TARGET_TILES)
        )
        self.tiles = [self._build_tile(idx, subspaces, n) for idx in tile_ranges]

    @staticmethod
    def _build_tile(idx, subspaces, n):
        parts = []
        for use_null in (True, False):
            members = [i for i in idx if subspaces[i]._use_null is use_null]
            if not members:
                continue
            bases = [
                subspaces[i].direction_basis() if use_null else subspaces[i].row_space_basis()
                for i in members
            ]
            width = max(b.shape[1] for b in bases)
            stacked = np.zeros((len(members), n, width))
            for row, basis in enumerate(bases):
                stacked[row, :, : basis.shape[1]] = basis
            anchors = np.stack([subspaces[i].anchor for i in members])
            parts.append((
                use_null,
                np.asarray(members, dtype=np.intp),
                stacked,
                np.ascontiguousarray(stacked.transpose(0, 2, 1)),
                anchors,
            ))
        return parts

    def project_tile(self, tile, x, out):
        """Write P_i(x) into out[i] for every block i of the tile."""
        for use_null, members, basis, basis_t, anchors in tile:
            coeff = np.matmul(basis_t, x)
            span = np.matmul(basis, coeff[..., None])[..., 0]
            if use_null:
                out[members] = anchors + span
            else:
                out[members] = x - span + anchors

    def project_all(self, x, out):
        for tile in self.tiles:
            self.project_tile(tile, x, out)


class _ReflectionPool:
    """Evaluates all block projections of one point, optionally in parallel.

    Tiles are chunked across at most `workers` tasks; each task writes only
    its own tiles' rows of the shared output array.
    """

    def __init__(self, subspaces, workers):
        self.kernel = _BlockKernel(subspaces)
        self.workers = max(1, min(int(workers), len(self.kernel.tiles)))
        self._pool = None
        self._chunks = None
        if self.workers > 1:
            self._chunks = [
                chunk for chunk in np.array_split(
                    np.arange(len(self.kernel.tiles)), self.workers
                ) if chunk.size
            ]
            self._pool = ThreadPoolExecutor(max_workers=self.workers - 1)
            # spawn the threads now so the first step does not pay for it
            for fut in [self._pool.submit(lambda: None)
                        for _ in range(self.workers - 1)]:
                fut.result()

    def project_into(self, x, out):
        """Fill out[i] with the projection of x onto block i."""
        if self._pool is None:
            self.kernel.project_all(x, out)
            return
        futures = [
            self._pool.submit(self._run_chunk, chunk, x, out)
            for chunk in self._chunks[1:]
        ]
        self._run_chunk(self._chunks[0], x, out)
        for fut in futures:
            fut.result()

    def _run_chunk(self, tile_indices, x, out):
        tiles = self.kernel.tiles
        for t in tile_indices:
            self.kernel.project_tile(tiles[t], x, out)

    def close(self):
        if self._pool is not None:
            self._pool.shutdown(wait=True)
            self._pool = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def _fspm_apply(x, subspaces, weights):
    y = weights[0] * x
    for w, U in zip(weights[1:], subspaces):
        y += w * U.project(x)
    return y


def fspm_step(x, subspaces, weights):
    """One weighted simultaneous-projection step p_0 x + sum_i p_i P_i(x)."""
    weights = validate_weights(weights, len(subspaces))
    return _fspm_apply(np.asarray(x, dtype=float), subspaces, weights)


def crm_step(x, subspaces):
    """Circumcenter of x and its sequentially composed reflections."""
    subspaces = list(subspaces)
    if not subspaces:
        raise ValueError("need at least one subspace")
    x = np.asarray(x, dtype=float)
    pts = np.empty((len(subspaces) + 1, x.size))
    pts[0] = x
    y = x
    for i, U in enumerate(subspaces):
        y = U.reflect(y)
        pts[i + 1] = y
    return circumcenter(pts)


def _reflections_from_projections(x, pts):
    # pts rows 1..m hold P_i(x); turn them into 2 P_i(x) - x in place.
    pts[1:] *= 2.0
    pts[1:] -= x


def pcrm_step(x, subspaces, workers=1):
    """Circumcenter of x and its m independent reflections.

    Reflections are computed concurrently when workers > 1; the output is
    bitwise identical for every worker count.
    """
    subspaces = list(subspaces)
    if not subspaces:
        raise ValueError("need at least one subspace")
    x = np.asarray(x, dtype=float)
    pts = np.empty((len(subspaces) + 1, x.size))
    pts[0] = x
    with _ReflectionPool(subspaces, workers) as pool:
        pool.project_into(x, pts[1:])
    _reflections_from_projections(x, pts)
    return circumcenter(pts)


def solve(instance, config, x0=None):
    """Iterate the configured method from x0 (default: the null vector).

    Stops when the configured rule fires (status CONVERGED) or after
    config.max_iterations steps (status MAX_ITER).  Wall time is measured
    around the iteration loop only; the trace records every iterate.

    Raises MissingReference when stop_rule is REL_ERR_TO_KNOWN but the
    instance has no known solution, and NumericalBreakdown (with the partial
    trace attached) when an iterate stops being finite.
    """
    subspaces = list(instance.subspaces)
    n = instance.ambient_dim
    m = len(subspaces)
    if x0 is None:
        x = np.zeros(n)
    else:
        x = np.array(x0, dtype=float).ravel()
        if x.shape != (n,):
            raise DimensionMismatch(f"x0 has shape {x.shape}, expected ({n},)")

    reference = instance.known_solution
    rule = config.stop_rule
    if rule is StopRule.REL_ERR_TO_KNOWN and reference is None:
        raise MissingReference("stop rule rel_err needs an instance with a known solution")
    ref_norm = float(np.linalg.norm(reference)) if reference is not None else 0.0

    method = config.method
    if method in (Method.FSPM, Method.CIMMINO):
        if config.weights is not None:
            weights = config.weights
        elif method is Method.CIMMINO:
            weights = cimmino_weights(m)
        else:
            weights = uniform_weights(m)
        weights = validate_weights(weights, m)
        per_iter = int(np.count_nonzero(weights[1:] > 0))
        pool = None
        kernel = _BlockKernel(subspaces)
        proj = np.empty((m, n))

        def step(x):
            kernel.project_all(x, proj)
            return weights[0] * x + weights[1:] @ proj
    elif method is Method.CRM:
        per_iter = m
        pool = None
        step = lambda x: crm_step(x, subspaces)
    else:
        per_iter = m
        pool = _ReflectionPool(subspaces, config.workers)
        pts = np.empty((m + 1, n))

        def step(x):
            pts[0] = x
            pool.project_into(x, pts[1:])
            _reflections_from_projections(x, pts)
            return circumcenter(pts)

    need_resid = config.record_residuals or rule is StopRule.FEASIBILITY_RESIDUAL
    tol = config.tolerance
    trace = IterationTrace()
    k = 0
    nproj = 0
    prev = None
    start = time.perf_counter()
    try:
        while True:
            if not np.all(np.isfinite(x)):
                trace.append(k, float("nan"), float("nan"), nproj, time.perf_counter() - start)
                trace.status = Status.DIVERGED_NUMERICALLY
                trace.wall_time_s = time.perf_counter() - start
                raise NumericalBreakdown(
                    f"non-finite iterate at iteration {k}", trace=trace, point=x
                )
            resid = float(residual(subspaces, x)) if need_resid else float("nan")
            dist = float(np.linalg.norm(x - reference)) if reference is not None else float("nan")
            trace.append(k, resid, dist, nproj, time.perf_counter() - start)

            if rule is StopRule.REL_ERR_TO_KNOWN:
                stop = dist <= tol * ref_norm if ref_norm > 0 else dist <= tol
            elif rule is StopRule.FEASIBILITY_RESIDUAL:
                stop = resid <= tol * (1.0 + float(np.linalg.norm(x)))
            else:
                stop = prev is not None and float(np.linalg.norm(x - prev)) <= tol
            if stop:
                trace.status = Status.CONVERGED
                break
            if k >= config.max_iterations:
                trace.status = Status.MAX_ITER
                break

            prev = x
            x = step(x)
            nproj += per_iter
            k += 1
        trace.wall_time_s = time.perf_counter() - start
    finally:
        if pool is not None:
            pool.close()
    return SolveResult(point=x, trace=trace)


def estimate_rate(trace):
    """Empirical linear rate: exp of the least-squares slope of log d_k vs k.

    Uses the trace's distance-to-known-solution column; needs at least three
    finite positive entries, otherwise raises InsufficientData.  A perfectly
    geometric decay d_k = r^k returns r; a constant sequence returns 1.0
    (non-contracting).
    """
    d = np.asarray(trace.distances, dtype=float)
    ks = np.asarray(trace.iterations, dtype=float)
    mask = np.isfinite(d) & (d > 0)
    if np.count_nonzero(mask) < 3:
        raise InsufficientData("need >= 3 iterations with positive distances to fit a rate")
    slope = np.polyfit(ks[mask], np.log(d[mask]), 1)[0]
    return float(np.exp(slope))
