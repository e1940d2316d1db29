import numpy as np
import pytest

from kaczmarz_accel import (
    BlockPartition,
    CapabilityError,
    DenseRowMatrix,
    LinearSystem,
    SingularityError,
    block_sweep,
    iterate,
    iteration_matrix,
    projector_oracle,
    single_step,
    spectral_diagnostics,
    sweep,
)

from conftest import kaczmarz_iterates, random_system


def two_by_two():
    a = np.array([[1.0, 0.0], [1.0, 1.0]])
    return LinearSystem(DenseRowMatrix(a), np.array([1.0, 2.0]))


def orthogonal_rows_system():
    a = np.array([[3.0, 0.0], [0.0, 2.0]])
    x = np.array([0.5, -1.5])
    return LinearSystem(DenseRowMatrix(a), a @ x, solution=x)


class TestSingleStep:
    def test_diagonal_row_sets_component(self):
        system = LinearSystem(DenseRowMatrix(np.diag([2.0, 4.0])), np.array([2.0, 4.0]))
        np.testing.assert_array_equal(single_step(system, np.zeros(2), 0), [1.0, 0.0])

    def test_hand_evaluated_step(self):
        # row 2 of [[1,0],[1,1]], b=(1,2), from p=(1,0): p + (2-1)/2 * (1,1)
        assert list(single_step(two_by_two(), np.array([1.0, 0.0]), 1)) == [1.5, 0.5]

    def test_satisfied_row_is_fixed_point(self):
        system = two_by_two()
        p = np.array([1.0, 7.0])  # row 0 already satisfied
        np.testing.assert_array_equal(single_step(system, p, 0), p)

    def test_residual_component_zeroed(self):
        system = random_system(3, 12)
        p = np.zeros(12)
        for i in range(12):
            p = single_step(system, p, i)
            gap = system.rhs[i] - system.matrix.row(i) @ p
            assert abs(gap) <= 1e-12 * np.linalg.norm(system.rhs)

    def test_index_out_of_range(self):
        with pytest.raises(IndexError):
            single_step(two_by_two(), np.zeros(2), 2)


class TestSweep:
    def test_orthogonal_rows_converge_in_one_sweep(self):
        system = orthogonal_rows_system()
        np.testing.assert_allclose(sweep(system, np.array([9.0, -4.0])), system.solution, atol=1e-14)

    def test_hand_chained_example(self):
        assert list(sweep(two_by_two(), np.zeros(2))) == [1.5, 0.5]

    def test_identity_matrix_copies_rhs(self):
        system = LinearSystem(DenseRowMatrix(np.eye(3)), np.array([4.0, 5.0, 6.0]))
        np.testing.assert_array_equal(sweep(system, np.array([9.0, 9.0, 9.0])), system.rhs)

    def test_matches_projector_form(self):
        # x_{n+1} = Q x_n + A^{-1} (I - P) b
        system = random_system(11, 7)
        oracle = projector_oracle(system)
        dense = system.matrix.to_dense()
        x0 = np.random.default_rng(2).standard_normal(7)
        expected = oracle.Q @ x0 + np.linalg.solve(dense, (np.eye(7) - oracle.P) @ system.rhs)
        np.testing.assert_allclose(sweep(system, x0), expected, atol=1e-8)

    def test_error_norm_never_increases(self):
        system = random_system(13, 9)
        x = np.zeros(9)
        for _ in range(30):
            x_next = sweep(system, x)
            assert np.linalg.norm(system.solution - x_next) <= np.linalg.norm(system.solution - x)
            x = x_next

    def test_renumbering_matches_chained_single_steps(self):
        # n sweeps == n*N single steps with cyclic index, exactly
        system = random_system(17, 6)
        x = np.zeros(6)
        p = np.zeros(6)
        for sweep_round in range(4):
            x = sweep(system, x)
        for step in range(4 * 6):
            p = single_step(system, p, step % 6)
        np.testing.assert_array_equal(x, p)


class TestBlockSweep:
    def test_singleton_blocks_equal_plain_sweep(self):
        system = random_system(19, 8)
        partition = BlockPartition((1,) * 8)
        x0 = np.random.default_rng(0).standard_normal(8)
        np.testing.assert_allclose(
            block_sweep(system, partition, x0), sweep(system, x0), atol=1e-13
        )

    def test_single_full_block_solves_exactly(self):
        system = random_system(23, 6)
        x0 = np.zeros(6)
        out = block_sweep(system, BlockPartition((6,)), x0)
        np.testing.assert_allclose(out, system.solution, atol=1e-10)

    def test_two_blocks_match_pseudoinverse_oracle(self):
        system = random_system(29, 4)
        dense = system.matrix.to_dense()
        x0 = np.random.default_rng(1).standard_normal(4)
        p = x0.copy()
        for rows in (slice(0, 2), slice(2, 4)):
            block = dense[rows]
            p = p + np.linalg.pinv(block) @ (system.rhs[rows] - block @ p)
        out = block_sweep(system, BlockPartition((2, 2)), x0)
        np.testing.assert_allclose(out, p, atol=1e-12)

    def test_rank_deficient_block_reports_index(self):
        a = np.array([[1.0, 0.0, 0.0], [1.0, 1e-17, 0.0], [0.0, 0.0, 1.0]])
        system = LinearSystem(DenseRowMatrix(a), np.ones(3))
        with pytest.raises(SingularityError, match="block 0"):
            block_sweep(system, BlockPartition((2, 1)), np.zeros(3))

    def test_partition_must_cover_order(self):
        system = random_system(31, 5)
        from kaczmarz_accel import ConfigurationError

        with pytest.raises(ConfigurationError):
            block_sweep(system, BlockPartition((2, 2)), np.zeros(5))


class TestIterate:
    def test_huge_tolerance_stops_at_start(self):
        system = random_system(37, 6)
        trace = iterate(system, np.zeros(6), 10, tol=1e6)
        assert len(trace.iterates) == 1 and trace.stop_reason == "converged"

    def test_orthogonal_rows_converge_after_one_sweep(self):
        system = orthogonal_rows_system()
        trace = iterate(system, np.zeros(2), 10, tol=1e-12)
        assert len(trace.iterates) == 2 and trace.stop_reason == "converged"

    def test_zero_max_sweeps_records_initial_point_only(self):
        system = random_system(37, 6)
        trace = iterate(system, np.zeros(6), 0)
        assert len(trace.iterates) == 1
        assert trace.error_norms is not None and len(trace.error_norms) == 1

    def test_stored_residuals_match_recomputation(self):
        system = random_system(41, 10)
        trace = iterate(system, np.zeros(10), 25)
        scale = np.linalg.norm(system.rhs)
        for x, r in zip(trace.iterates, trace.residuals):
            np.testing.assert_allclose(r, system.residual(x), atol=1e-12 * scale)

    def test_error_norms_strictly_decrease(self):
        system = random_system(43, 10)
        trace = iterate(system, np.zeros(10), 40)
        errs = trace.error_norms
        assert all(b < a for a, b in zip(errs, errs[1:]))

    def test_decay_rate_approaches_spectral_radius(self):
        from kaczmarz_accel import build_gallery, precondition_rows

        system = precondition_rows(build_gallery("parter", 120))
        trace = iterate(system, np.zeros(120), 60)
        rho = spectral_diagnostics(system).spectral_radius
        errs = np.array(trace.error_norms)
        fitted = (errs[50] / errs[20]) ** (1.0 / 30.0)
        assert abs(fitted - rho) <= 0.02 * rho

    def test_csv_export_shape(self):
        system = random_system(47, 5)
        trace = iterate(system, np.zeros(5), 3)
        lines = trace.to_csv().strip().split("\n")
        assert lines[0] == "n,err_norm,res_norm"
        assert len(lines) == len(trace.iterates) + 1


class TestProjectorOracle:
    def test_orthogonal_rows_give_zero_q(self):
        oracle = projector_oracle(orthogonal_rows_system())
        np.testing.assert_allclose(oracle.Q, 0.0, atol=1e-14)

    def test_identity_factors(self):
        system = LinearSystem(DenseRowMatrix(np.eye(3)), np.ones(3))
        oracle = projector_oracle(system)
        for i in range(3):
            expected = np.eye(3)
            expected[i, i] = 0.0
            np.testing.assert_allclose(oracle.p_factor(i), expected, atol=1e-14)
            np.testing.assert_allclose(oracle.q_factor(i), expected, atol=1e-14)

    def test_similarity_and_factor_invariants(self):
        system = random_system(53, 5)
        oracle = projector_oracle(system)
        dense = system.matrix.to_dense()
        assert np.linalg.norm(oracle.Q - np.linalg.solve(dense, oracle.P @ dense)) <= 1e-8
        for i in range(5):
            q_i = oracle.q_factor(i)
            p_i = oracle.p_factor(i)
            assert np.linalg.norm(q_i - q_i.T) <= 1e-10
            assert np.linalg.norm(q_i @ q_i - q_i) <= 1e-10
            assert np.linalg.matrix_rank(q_i) == 4
            assert np.linalg.norm(p_i @ p_i - p_i) <= 1e-10

    def test_guard(self):
        system = random_system(59, 8)
        with pytest.raises(CapabilityError):
            projector_oracle(system, max_order=4)


class TestRecursions:
    def test_per_step_residual_recursion(self):
        # rho_i = P_i rho_{i-1} inside one sweep
        system = random_system(61, 6)
        oracle = projector_oracle(system)
        p = np.random.default_rng(3).standard_normal(6)
        residual = system.residual(p)
        for i in range(6):
            p = single_step(system, p, i)
            residual = oracle.p_factor(i) @ residual
            np.testing.assert_allclose(system.residual(p), residual, atol=1e-8)

    def test_sweep_residual_recursion(self):
        system = random_system(67, 6)
        oracle = projector_oracle(system)
        x = np.random.default_rng(4).standard_normal(6)
        for _ in range(3):
            x_next = sweep(system, x)
            np.testing.assert_allclose(
                system.residual(x_next), oracle.P @ system.residual(x), atol=1e-8
            )
            x = x_next

    def test_shifted_cycle_matrices_drive_residual_subsequences(self):
        # varrho_{(n+1)N + j - 1} = Q^(j) varrho_{nN + j - 1}, with Q^(1) = P
        system = random_system(71, 5)
        oracle = projector_oracle(system)
        np.testing.assert_allclose(oracle.shifted_cycle_matrix(1), oracle.P, atol=1e-12)
        n = 5
        p = np.random.default_rng(5).standard_normal(5)
        residuals = [system.residual(p)]  # varrho at step index 0, 1, ...
        for step in range(3 * n):
            p = single_step(system, p, step % n)
            residuals.append(system.residual(p))
        for j in range(1, n + 1):
            cycle = oracle.shifted_cycle_matrix(j)
            for cycle_round in range(2):
                before = residuals[cycle_round * n + j - 1]
                after = residuals[(cycle_round + 1) * n + j - 1]
                np.testing.assert_allclose(after, cycle @ before, atol=1e-8)


class TestSpectralDiagnostics:
    def test_orthogonal_rows(self):
        diag = spectral_diagnostics(orthogonal_rows_system())
        assert diag.spectral_radius <= 1e-12

    def test_identity(self):
        system = LinearSystem(DenseRowMatrix(np.eye(4)), np.ones(4))
        diag = spectral_diagnostics(system)
        assert diag.spectral_radius <= 1e-12
        assert abs(diag.meany_constant) <= 1e-12
        assert diag.condition_number == pytest.approx(1.0)

    def test_spectral_radius_below_one_for_regular_systems(self):
        for seed in range(5):
            diag = spectral_diagnostics(random_system(100 + seed, 7))
            assert diag.spectral_radius < 1.0

    def test_iteration_matrix_matches_oracle_product(self):
        system = random_system(73, 6)
        oracle = projector_oracle(system)
        np.testing.assert_allclose(iteration_matrix(system), oracle.Q, atol=1e-12)

    def test_minimal_polynomial_degree_of_identity(self):
        system = LinearSystem(DenseRowMatrix(np.eye(4)), np.arange(1.0, 5.0), solution=np.arange(1.0, 5.0))
        # Q = 0 for the identity: minimal polynomial for any vector has degree 1
        assert spectral_diagnostics(system).minimal_poly_degree == 1

    def test_guard(self):
        system = random_system(79, 6)
        with pytest.raises(CapabilityError):
            spectral_diagnostics(system, max_order=4)


class TestIdentities:
    def test_step_orthogonality_and_pythagoras(self):
        system = random_system(83, 10)
        x = system.solution
        p = np.zeros(10)
        for step in range(3 * 10):
            i = step % 10
            p_next = single_step(system, p, i)
            scale = np.linalg.norm(system.rhs)
            assert abs(system.residual(p_next)[i]) <= 1e-10 * scale
            # (p_i - p_{i-1}, x - p_i) = 0
            move = p_next - p
            assert abs(move @ (x - p_next)) <= 1e-10 * max(np.linalg.norm(move) * np.linalg.norm(x - p_next), 1e-30)
            # || x - p_{i-1} ||^2 = || x - p_i ||^2 + || p_i - p_{i-1} ||^2
            lhs = np.linalg.norm(x - p) ** 2
            rhs = np.linalg.norm(x - p_next) ** 2 + np.linalg.norm(move) ** 2
            assert abs(lhs - rhs) <= 1e-10 * max(lhs, 1e-30)
            p = p_next

    def test_gain_identity_per_sweep(self):
        system = random_system(89, 8)
        x = system.solution
        current = np.zeros(8)
        for _ in range(5):
            p = current.copy()
            gain = 0.0
            for i in range(8):
                gap = system.residual(p)[i]
                gain += gap * gap / system.row_norms[i] ** 2
                p = single_step(system, p, i)
            lhs = np.linalg.norm(x - p) ** 2
            rhs = np.linalg.norm(x - current) ** 2 - gain
            assert abs(lhs - rhs) <= 1e-8 * max(np.linalg.norm(x - current) ** 2, 1e-30)
            current = p

    def test_conditional_contraction_bound(self):
        # when a step removes at least the average residual energy, the error
        # contracts by 1 - 1/(N kappa(A A^T))
        system = random_system(97, 8)
        x = system.solution
        dense = system.matrix.to_dense()
        kappa = np.linalg.cond(dense @ dense.T)
        factor = 1.0 - 1.0 / (8 * kappa)
        p = np.zeros(8)
        fired = 0
        for step in range(8 * 8):
            i = step % 8
            residual = system.residual(p)
            p_next = single_step(system, p, i)
            if residual[i] ** 2 >= (residual @ residual) / 8:
                fired += 1
                lhs = np.linalg.norm(x - p_next) ** 2
                rhs = factor * np.linalg.norm(x - p) ** 2
                assert lhs <= rhs * (1 + 1e-12)
            p = p_next
        assert fired > 0

    def test_meany_contraction_per_sweep(self):
        for seed in range(3):
            system = random_system(200 + seed, 12)
            dense = system.matrix.to_dense()
            sign, logdet = np.linalg.slogdet(dense)
            meany = 1.0 - np.exp(2.0 * (logdet - np.log(system.row_norms).sum()))
            x = system.solution
            current = np.zeros(12)
            for _ in range(10):
                nxt = sweep(system, current)
                lhs = np.linalg.norm(x - nxt) ** 2
                rhs = meany * np.linalg.norm(x - current) ** 2
                assert lhs <= rhs * (1 + 1e-10)
                current = nxt

    def test_gauss_seidel_equivalence(self):
        # Kaczmarz iterates are A^T times Gauss-Seidel iterates on A A^T y = b
        system = random_system(101, 9)
        dense = system.matrix.to_dense()
        gram = dense @ dense.T
        y = np.zeros(9)
        x = dense.T @ y
        for _ in range(20):
            x = sweep(system, x)
            for i in range(9):
                y[i] = (system.rhs[i] - gram[i, :i] @ y[:i] - gram[i, i + 1 :] @ y[i + 1 :]) / gram[i, i]
            np.testing.assert_allclose(x, dense.T @ y, atol=1e-10)
