import numpy as np
import pytest

from ost.core import EmbedMatrix, Marginals, SolverConfig
from ost.errors import DegenerateInputError, NumericError, SizeError, ValidationError
from ost.sinkhorn import (
    CostMatrix,
    build_cost_matrix,
    exact_ot_oracle,
    plan_entropy,
    regularized_objective,
    sinkhorn_solve,
)

TIGHT = SolverConfig(lam=0.1, max_iter=10000, thresh=1e-12)


def random_instance(rng, t=None, n=None):
    t = t or int(rng.integers(2, 7))
    n = n or int(rng.integers(2, 5))
    return CostMatrix(rng.uniform(0, 2, size=(t, n))), Marginals.uniform(t, n)


class TestCostMatrix:
    def test_identical_unit_vectors_cost_zero(self):
        v = EmbedMatrix(np.array([[1.0, 0.0]]))
        c = build_cost_matrix(v, v)
        assert c.values[0, 0] == pytest.approx(0.0, abs=1e-15)

    def test_orthogonal_vectors_cost_one(self):
        v = EmbedMatrix(np.array([[1.0, 0.0]]))
        d = EmbedMatrix(np.array([[0.0, 1.0]]))
        assert build_cost_matrix(v, d).values[0, 0] == pytest.approx(1.0)

    def test_hand_computed_cosine(self):
        # cos((0.6, 0.8), (1, 0)) = 0.6 -> cost 0.4
        v = EmbedMatrix(np.array([[0.6, 0.8]]))
        d = EmbedMatrix(np.array([[1.0, 0.0]]))
        assert build_cost_matrix(v, d).values[0, 0] == pytest.approx(0.4, abs=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ValidationError, match="dimension"):
            build_cost_matrix(EmbedMatrix(np.eye(2)), EmbedMatrix(np.eye(3)))

    def test_zero_norm_row_named(self):
        v = EmbedMatrix(np.array([[1.0, 0.0], [0.0, 0.0]]))
        with pytest.raises(DegenerateInputError, match="frame row 1"):
            build_cost_matrix(v, EmbedMatrix(np.eye(2)))

    def test_range_validated(self):
        with pytest.raises(ValidationError):
            CostMatrix(np.array([[2.5]]))


class TestSinkhornSolve:
    def test_constant_cost_gives_product_coupling(self):
        m = Marginals(np.array([0.2, 0.8]), np.array([0.3, 0.3, 0.4]))
        plan = sinkhorn_solve(CostMatrix(np.full((2, 3), 1.3)), m, TIGHT)
        assert np.allclose(plan.values, np.outer(m.mu, m.nu), atol=1e-12)

    def test_reference_2x2_closed_form(self):
        # closed form: diagonal 0.5/(1 + e^-10), off-diagonal 0.5 e^-10/(1 + e^-10)
        plan = sinkhorn_solve(
            CostMatrix(np.array([[0.0, 1.0], [1.0, 0.0]])),
            Marginals.uniform(2, 2),
            SolverConfig(lam=0.1, max_iter=10000, thresh=1e-9),
        )
        diag = 0.5 / (1.0 + np.exp(-10.0))
        off = 0.5 * np.exp(-10.0) / (1.0 + np.exp(-10.0))
        assert plan.values[0, 0] == pytest.approx(diag, abs=1e-9)
        assert plan.values[0, 0] == pytest.approx(0.4999773, abs=1e-6)
        assert plan.values[0, 1] == pytest.approx(off, abs=1e-9)
        assert plan.values[0, 1] == pytest.approx(2.27e-5, abs=1e-7)

    def test_entropy_dominated_limit(self):
        rng = np.random.default_rng(5)
        c, m = random_instance(rng, 4, 3)
        plan = sinkhorn_solve(c, m, SolverConfig(lam=1000.0, max_iter=1000, thresh=1e-12))
        assert np.abs(plan.values - np.outer(m.mu, m.nu)).max() < 1e-3

    def test_small_lambda_matches_oracle(self):
        rng = np.random.default_rng(11)
        c, m = random_instance(rng, 6, 4)
        plan = sinkhorn_solve(
            c, m, SolverConfig(lam=1e-3, max_iter=5000, thresh=1e-12), stabilized=True
        )
        _, oracle_cost = exact_ot_oracle(c, m)
        assert (plan.values * c.values).sum() - oracle_cost <= 1e-2

    def test_converged_flag_matches_final_err(self):
        rng = np.random.default_rng(2)
        c, m = random_instance(rng)
        for max_iter in (1, 3, 10000):
            plan = sinkhorn_solve(c, m, SolverConfig(lam=0.1, max_iter=max_iter, thresh=1e-9))
            assert plan.state.converged == (plan.state.final_err < 1e-9)

    def test_marginal_feasibility_when_converged(self):
        rng = np.random.default_rng(13)
        for _ in range(20):
            c, m = random_instance(rng)
            plan = sinkhorn_solve(c, m, SolverConfig(lam=0.1, max_iter=10000, thresh=1e-9))
            assert plan.state.converged
            assert np.abs(plan.values.sum(axis=1) - m.mu).max() <= 1e-6
            assert np.abs(plan.values.sum(axis=0) - m.nu).max() <= 1e-6

    def test_total_mass_is_one(self):
        rng = np.random.default_rng(17)
        c, m = random_instance(rng)
        plan = sinkhorn_solve(c, m, SolverConfig(lam=0.1, max_iter=3, thresh=1e-12))
        assert abs(plan.values.sum() - 1.0) <= 1e-9  # holds even unconverged

    def test_uniqueness_across_initializations(self):
        rng = np.random.default_rng(23)
        c, m = random_instance(rng, 5, 4)
        base = sinkhorn_solve(c, m, TIGHT)
        for _ in range(3):
            other = sinkhorn_solve(c, m, TIGHT, b_init=rng.uniform(0.01, 100.0, 4))
            assert np.abs(other.values - base.values).max() <= 1e-8

    def test_scaling_form_exact(self):
        rng = np.random.default_rng(29)
        c, m = random_instance(rng)
        plan = sinkhorn_solve(c, m, TIGHT)
        st = plan.state
        rebuilt = (st.a[:, None] * st.gibbs_kernel) * st.b[None, :]
        assert np.array_equal(rebuilt, plan.values)
        assert st.gibbs_kernel.min() > 0.0
        assert st.gibbs_kernel.max() <= 1.0

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(31)
        c, m = random_instance(rng, 5, 4)
        base = sinkhorn_solve(c, m, TIGHT)
        pr = rng.permutation(5)
        pc = rng.permutation(4)
        rowp = sinkhorn_solve(CostMatrix(c.values[pr]), m, TIGHT)
        assert np.abs(rowp.values - base.values[pr]).max() <= 1e-12
        colp = sinkhorn_solve(CostMatrix(c.values[:, pc]), m, TIGHT)
        assert np.abs(colp.values - base.values[:, pc]).max() <= 1e-12

    def test_entropy_monotone_in_lambda(self):
        rng = np.random.default_rng(37)
        c, m = random_instance(rng, 5, 3)
        lams = [0.02, 0.1, 0.5, 5.0, 1000.0]
        ents = [
            plan_entropy(
                sinkhorn_solve(c, m, SolverConfig(lam=l, max_iter=20000, thresh=1e-12)).values
            )
            for l in lams
        ]
        assert all(ents[i] <= ents[i + 1] + 1e-9 for i in range(len(ents) - 1))

    def test_underflow_raises_and_stabilized_mode_recovers(self):
        # at lambda far below the cost scale the scaling vectors leave float
        # range; the default path must error with advice, not emit NaNs
        cost = CostMatrix(np.array([
            [0.056639, 0.248567, 1.341249, 1.294379],
            [1.23077, 0.767355, 1.99442, 1.961671],
            [1.371084, 1.300919, 1.376893, 0.777843],
            [0.270193, 1.442977, 1.050709, 0.620484],
            [0.971671, 1.778976, 1.868087, 0.71559],
        ]))
        m = Marginals.uniform(5, 4)
        cfg = SolverConfig(lam=2e-4, max_iter=3000, thresh=1e-12)
        with pytest.raises(NumericError, match="stabilized"):
            sinkhorn_solve(cost, m, cfg)
        plan = sinkhorn_solve(cost, m, cfg, stabilized=True)
        assert np.all(np.isfinite(plan.values))
        assert np.abs(plan.values.sum(axis=0) - m.nu).max() <= 1e-9

    def test_1x1_returns_unit_plan(self):
        plan = sinkhorn_solve(
            CostMatrix(np.array([[0.7]])), Marginals.uniform(1, 1), SolverConfig()
        )
        assert plan.values[0, 0] == 1.0
        assert plan.state.converged

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValidationError, match="marginal lengths"):
            sinkhorn_solve(CostMatrix(np.zeros((2, 2))), Marginals.uniform(3, 2), SolverConfig())


class TestExactOracle:
    def test_antidiagonal_zero_cost(self):
        plan, cost = exact_ot_oracle(
            CostMatrix(np.array([[0.0, 1.0], [1.0, 0.0]])), Marginals.uniform(2, 2)
        )
        assert cost == pytest.approx(0.0, abs=1e-12)
        assert np.allclose(plan, np.diag([0.5, 0.5]), atol=1e-12)

    def test_single_row_problem(self):
        c = CostMatrix(np.array([[0.3, 0.9, 0.1]]))
        m = Marginals(np.array([1.0]), np.array([0.2, 0.3, 0.5]))
        plan, cost = exact_ot_oracle(c, m)
        assert np.allclose(plan, m.nu[None, :], atol=1e-12)
        assert cost == pytest.approx(float(m.nu @ c.values[0]), abs=1e-12)

    def test_optimal_over_random_feasible_plans(self):
        rng = np.random.default_rng(41)
        c, m = random_instance(rng, 3, 3)
        _, best = exact_ot_oracle(c, m)
        for _ in range(10000 // 20):  # 500 projected plans is plenty per instance
            raw = rng.uniform(0.1, 1.0, size=(3, 3))
            for _ in range(60):  # scale to the marginals
                raw *= (m.mu / raw.sum(axis=1))[:, None]
                raw *= (m.nu / raw.sum(axis=0))[None, :]
            assert (raw * c.values).sum() >= best - 1e-9

    def test_size_guard(self):
        with pytest.raises(SizeError):
            exact_ot_oracle(CostMatrix(np.zeros((9, 9))), Marginals.uniform(9, 9))


class TestRegularizedObjective:
    def test_uniform_plan_closed_form(self):
        # <P,C>=0 and the entropy term gives ln(1/4) - 1
        plan = sinkhorn_solve(CostMatrix(np.zeros((2, 2))), Marginals.uniform(2, 2), TIGHT)
        obj = regularized_objective(plan, CostMatrix(np.zeros((2, 2))), 1.0)
        assert obj == pytest.approx(np.log(0.25) - 1.0, abs=1e-9)

    def test_single_unit_entry_closed_form(self):
        plan = sinkhorn_solve(CostMatrix(np.zeros((1, 1))), Marginals.uniform(1, 1), TIGHT)
        assert regularized_objective(plan, CostMatrix(np.zeros((1, 1))), 1.0) == pytest.approx(-1.0)

    def test_solver_output_beats_product_coupling(self):
        rng = np.random.default_rng(43)
        for _ in range(10):
            c, m = random_instance(rng)
            plan = sinkhorn_solve(c, m, TIGHT)
            product = np.outer(m.mu, m.nu)
            obj_star = regularized_objective(plan, c, 0.1)
            obj_prod = float((product * c.values).sum()) - 0.1 * plan_entropy(product)
            assert obj_star <= obj_prod + 1e-12

    def test_shape_mismatch(self):
        plan = sinkhorn_solve(CostMatrix(np.zeros((2, 2))), Marginals.uniform(2, 2), TIGHT)
        with pytest.raises(ValidationError):
            regularized_objective(plan, CostMatrix(np.zeros((3, 2))), 1.0)
