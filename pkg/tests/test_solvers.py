import os

import numpy as np
import pytest

from circumproj import (
    AffineSubspace,
    InsufficientData,
    InvalidWeights,
    IterationTrace,
    Method,
    MissingReference,
    NumericalBreakdown,
    ProblemInstance,
    SolverConfig,
    Status,
    StopRule,
    build_instance,
    build_underdetermined_instance,
    cimmino_weights,
    crm_step,
    estimate_rate,
    fspm_step,
    pcrm_step,
    solve,
    uniform_weights,
    validate_weights,
)
from conftest import hyperplane_instance, random_block_instance
from oracles import kkt_project_blocks


def axes_blocks():
    U1 = AffineSubspace([[0.0, 1.0]], [0.0])  # x2 = 0, the x-axis
    U2 = AffineSubspace([[1.0, 0.0]], [0.0])  # x1 = 0, the y-axis
    return [U1, U2]


class TestWeights:
    def test_presets(self):
        np.testing.assert_allclose(uniform_weights(3), [0.25] * 4)
        np.testing.assert_allclose(cimmino_weights(4), [0.0, 0.25, 0.25, 0.25, 0.25])

    @pytest.mark.parametrize("bad", [
        [0.5, 0.5],                 # wrong length for 2 blocks
        [-0.1, 0.6, 0.5],           # negative identity weight
        [0.5, 0.0, 0.5],            # zero block weight
        [0.2, 0.2, 0.2],            # does not sum to 1
        [0.0, np.inf, -np.inf],     # non-finite
    ])
    def test_invalid(self, bad):
        with pytest.raises(InvalidWeights):
            validate_weights(bad, 2)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            SolverConfig(method="pcrm", tolerance=0.0)
        with pytest.raises(ValueError):
            SolverConfig(method="pcrm", max_iterations=0)
        with pytest.raises(ValueError):
            SolverConfig(method="pcrm", workers=0)


class TestFspmStep:
    def test_cimmino_average_of_axes(self):
        got = fspm_step(np.array([1.0, 1.0]), axes_blocks(), [0.0, 0.5, 0.5])
        np.testing.assert_allclose(got, [0.5, 0.5])

    def test_fixed_point_inside(self, rng):
        inst = random_block_instance(rng)
        s = kkt_project_blocks(inst.subspaces, rng.standard_normal(inst.ambient_dim))
        w = uniform_weights(inst.block_count)
        np.testing.assert_allclose(fspm_step(s, inst.subspaces, w), s, atol=1e-9)

    def test_uniform_matches_direct_average(self, rng):
        inst = random_block_instance(rng)
        x = rng.standard_normal(inst.ambient_dim)
        m = inst.block_count
        got = fspm_step(x, inst.subspaces, uniform_weights(m))
        direct = (x + sum(U.project(x) for U in inst.subspaces)) / (m + 1)
        np.testing.assert_allclose(got, direct, rtol=1e-12, atol=1e-12)

    def test_lands_in_reflection_hull(self, rng):
        inst = random_block_instance(rng)
        x = rng.standard_normal(inst.ambient_dim)
        w = rng.random(inst.block_count + 1) + 0.05
        w /= w.sum()
        y = fspm_step(x, inst.subspaces, w)
        D = np.stack([U.reflect(x) - x for U in inst.subspaces]).T
        coeffs, *_ = np.linalg.lstsq(D, y - x, rcond=None)
        assert np.linalg.norm(D @ coeffs - (y - x)) < 1e-9


class TestCrmStep:
    def test_axes_toy(self):
        got = crm_step(np.array([1.0, 1.0]), axes_blocks())
        np.testing.assert_allclose(got, [0.0, 0.0], atol=1e-12)

    def test_fixed_point_inside(self, rng):
        inst = random_block_instance(rng)
        s = kkt_project_blocks(inst.subspaces, rng.standard_normal(inst.ambient_dim))
        np.testing.assert_allclose(crm_step(s, inst.subspaces), s, atol=1e-9)

    def test_contraction_toward_solution(self, rng):
        for _ in range(10):
            planted = rng.standard_normal(5)
            subs = []
            for i in range(3):
                A = rng.standard_normal((1, 5))
                subs.append(AffineSubspace(A, A @ planted, label=i))
            x = rng.standard_normal(5)
            s_star = kkt_project_blocks(subs, x)
            y = crm_step(x, subs)
            assert np.linalg.norm(y - s_star) <= np.linalg.norm(x - s_star) + 1e-12


class TestPcrmStep:
    def test_axes_toy(self):
        got = pcrm_step(np.array([1.0, 1.0]), axes_blocks())
        np.testing.assert_allclose(got, [0.0, 0.0], atol=1e-12)

    def test_hyperplanes_one_step(self, rng):
        # single-row blocks: the circumcenter lands in the intersection at once
        for _ in range(10):
            n = int(rng.integers(4, 20))
            blocks = int(rng.integers(2, min(8, n)))
            inst = hyperplane_instance(rng, n, blocks)
            x = rng.standard_normal(n)
            y = pcrm_step(x, inst.subspaces)
            for U in inst.subspaces:
                assert U.distance(y) < 1e-9

    def test_dominates_fspm(self, rng):
        for _ in range(20):
            inst = random_block_instance(rng)
            x = rng.standard_normal(inst.ambient_dim)
            s_star = kkt_project_blocks(inst.subspaces, x)
            w = rng.random(inst.block_count + 1) + 0.05
            w /= w.sum()
            d_pcrm = np.linalg.norm(pcrm_step(x, inst.subspaces) - s_star)
            d_fspm = np.linalg.norm(fspm_step(x, inst.subspaces, w) - s_star)
            assert d_pcrm <= d_fspm + 1e-9

    def test_bitwise_identical_across_workers(self, rng):
        inst = random_block_instance(rng, n_range=(8, 16), block_range=(4, 8))
        x = rng.standard_normal(inst.ambient_dim)
        base = pcrm_step(x, inst.subspaces, workers=1)
        for workers in (2, 3, os.cpu_count() or 4):
            np.testing.assert_array_equal(
                pcrm_step(x, inst.subspaces, workers=workers), base
            )


class TestSolve:
    def test_singleton_instance_converges(self):
        inst = build_instance(80, 10, 0.1, 7)
        res = solve(inst, SolverConfig(method=Method.PCRM))
        assert res.trace.status is Status.CONVERGED
        rel = np.linalg.norm(res.point - inst.known_solution) / np.linalg.norm(
            inst.known_solution
        )
        assert rel <= 1e-5
        assert res.trace.iteration_count < 10_000

    def test_start_inside_converges_at_zero(self):
        inst = build_instance(40, 8, 0.0, 3)
        res = solve(inst, SolverConfig(method=Method.CRM), x0=inst.known_solution)
        assert res.trace.status is Status.CONVERGED
        assert res.trace.iteration_count == 0
        assert res.trace.total_projections == 0

    @pytest.mark.parametrize("method", [Method.PCRM, Method.CRM, Method.FSPM])
    def test_underdetermined_limit_is_oracle_projection(self, method, rng):
        inst = build_underdetermined_instance(8, [2, 2], 0.0, 11)
        x0 = rng.standard_normal(8)
        cfg = SolverConfig(
            method=method,
            tolerance=1e-9,
            max_iterations=50_000,
            stop_rule=StopRule.FEASIBILITY_RESIDUAL,
        )
        res = solve(inst, cfg, x0=x0)
        assert res.trace.status is Status.CONVERGED
        s_star = kkt_project_blocks(inst.subspaces, x0)
        assert np.linalg.norm(res.point - s_star) <= 1e-5 * (1.0 + np.linalg.norm(s_star))

    def test_missing_reference(self):
        inst = build_underdetermined_instance(6, [2, 2], 0.0, 5)
        with pytest.raises(MissingReference):
            solve(inst, SolverConfig(method=Method.PCRM, stop_rule=StopRule.REL_ERR_TO_KNOWN))

    def test_numerical_breakdown_carries_trace(self):
        inst = build_instance(20, 4, 0.0, 1)
        with pytest.raises(NumericalBreakdown) as excinfo:
            solve(inst, SolverConfig(method=Method.PCRM), x0=np.full(4, np.inf))
        assert excinfo.value.trace.status is Status.DIVERGED_NUMERICALLY

    def test_max_iterations_status(self):
        inst = build_instance(30, 6, 0.2, 2)
        cfg = SolverConfig(method=Method.CIMMINO, tolerance=1e-14, max_iterations=3)
        res = solve(inst, cfg)
        assert res.trace.status is Status.MAX_ITER
        assert res.trace.iteration_count == 3

    def test_step_norm_stop(self, rng):
        inst = build_underdetermined_instance(7, [2, 2], 0.1, 9)
        cfg = SolverConfig(
            method=Method.PCRM, tolerance=1e-10, stop_rule=StopRule.STEP_NORM
        )
        res = solve(inst, cfg, x0=rng.standard_normal(7))
        assert res.trace.status is Status.CONVERGED
        s_star = kkt_project_blocks(inst.subspaces, res.point)
        assert np.linalg.norm(res.point - s_star) < 1e-6

    def test_projection_accounting(self):
        inst = build_instance(40, 8, 0.1, 4)
        m = inst.block_count
        for method in (Method.PCRM, Method.CRM, Method.CIMMINO, Method.FSPM):
            res = solve(inst, SolverConfig(method=method, max_iterations=20,
                                           tolerance=1e-12))
            counts = np.asarray(res.trace.projections)
            np.testing.assert_array_equal(np.diff(counts), m)

    def test_distances_non_increasing(self):
        inst = build_instance(60, 12, 0.1, 6)
        for method in (Method.PCRM, Method.CRM, Method.CIMMINO):
            res = solve(inst, SolverConfig(method=method))
            d = np.asarray(res.trace.distances)
            assert np.all(d[1:] <= d[:-1] * (1.0 + 1e-12) + 1e-15)

    def test_pcrm_pythagorean_identity_each_iteration(self, rng):
        inst = random_block_instance(rng, n_range=(6, 10), block_range=(2, 4))
        x = rng.standard_normal(inst.ambient_dim)
        stacked_star = kkt_project_blocks(inst.subspaces, x)
        for _ in range(8):
            y = pcrm_step(x, inst.subspaces)
            lhs = np.linalg.norm(y - stacked_star) ** 2 + np.linalg.norm(x - y) ** 2
            rhs = np.linalg.norm(x - stacked_star) ** 2
            assert abs(lhs - rhs) <= 1e-8 * max(rhs, 1e-30)
            if np.linalg.norm(x - stacked_star) < 1e-7:
                break
            x = y

    def test_pcrm_block_distance_reduction(self, rng):
        inst = random_block_instance(rng)
        x = rng.standard_normal(inst.ambient_dim)
        y = pcrm_step(x, inst.subspaces)
        step_sq = np.linalg.norm(x - y) ** 2
        for U in inst.subspaces:
            assert U.distance(y) ** 2 + U.distance(x) ** 2 <= step_sq + 1e-8

    def test_projection_of_iterates_invariant(self, rng):
        inst = random_block_instance(rng, n_range=(6, 9), block_range=(2, 3))
        x0 = rng.standard_normal(inst.ambient_dim)
        s_star = kkt_project_blocks(inst.subspaces, x0)
        scale = 1.0 + np.linalg.norm(s_star)
        for method in (Method.PCRM, Method.FSPM):
            cfg = SolverConfig(method=method, tolerance=1e-8, max_iterations=30,
                               stop_rule=StopRule.FEASIBILITY_RESIDUAL)
            x = x0
            step = (
                (lambda z: pcrm_step(z, inst.subspaces))
                if method is Method.PCRM
                else (lambda z: fspm_step(z, inst.subspaces, uniform_weights(inst.block_count)))
            )
            for _ in range(10):
                x = step(x)
                drift = np.linalg.norm(kkt_project_blocks(inst.subspaces, x) - s_star)
                assert drift <= 1e-7 * scale

    def test_solve_deterministic_across_workers(self):
        inst = build_instance(60, 12, 0.2, 13)
        res1 = solve(inst, SolverConfig(method=Method.PCRM, workers=1))
        res4 = solve(inst, SolverConfig(method=Method.PCRM, workers=4))
        np.testing.assert_array_equal(res1.point, res4.point)
        assert res1.trace.iteration_count == res4.trace.iteration_count
        assert res1.trace.total_projections == res4.trace.total_projections


class TestEstimateRate:
    def test_geometric_sequence(self):
        trace = IterationTrace()
        for k in range(12):
            trace.append(k, np.nan, 0.5 ** k, 0, 0.0)
        assert abs(estimate_rate(trace) - 0.5) < 1e-6

    def test_constant_sequence_not_contracting(self):
        trace = IterationTrace()
        for k in range(8):
            trace.append(k, np.nan, 3.0, 0, 0.0)
        assert np.isclose(estimate_rate(trace), 1.0)

    def test_too_short(self):
        trace = IterationTrace()
        trace.append(0, np.nan, 1.0, 0, 0.0)
        trace.append(1, np.nan, 0.5, 0, 0.0)
        with pytest.raises(InsufficientData):
            estimate_rate(trace)

    def test_pcrm_at_least_as_fast_as_cimmino(self):
        inst = build_instance(50, 10, 0.1, 21)
        r_pcrm = estimate_rate(solve(inst, SolverConfig(method=Method.PCRM)).trace)
        r_cim = estimate_rate(solve(inst, SolverConfig(method=Method.CIMMINO)).trace)
        assert r_pcrm <= r_cim + 1e-6
        assert r_pcrm < 1.0
