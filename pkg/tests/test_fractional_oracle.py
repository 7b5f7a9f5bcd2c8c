import math

import numpy as np
import pytest

from fracsteer.errors import ContractError, DomainError, EvaluationError
from fracsteer.fractional_oracle import (TimeGrid, WeightedSamples, power_rule, rl_derivative,
                                         rl_integral, step_scalar_fode)
from fracsteer.specialfun import mittag_leffler_vec

GAMMA_075 = 1.2254167024651776451


def _samples(grid, fn, alpha=1.0):
    return WeightedSamples.from_function(grid, fn, alpha)


class TestTimeGrid:
    def test_uniform_nodes(self):
        g = TimeGrid.uniform_grid(2.0, 8)
        assert g.nodes[0] == 0.0 and g.nodes[-1] == 2.0
        assert g.steps == 8 and g.horizon == 2.0 and g.uniform
        assert g.index_of(0.5) == 2

    @pytest.mark.parametrize("nodes", [[0.0], [0.1, 0.5, 1.0], [0.0, 0.5, 0.5, 1.0],
                                       [0.0, 0.7, 0.3]])
    def test_invariants(self, nodes):
        with pytest.raises(ContractError):
            TimeGrid(np.array(nodes))

    def test_nodes_are_read_only(self):
        g = TimeGrid.uniform_grid(1.0, 4)
        with pytest.raises(ValueError):
            g.nodes[1] = 0.3

    def test_index_of_rejects_off_grid_times(self):
        with pytest.raises(ContractError):
            TimeGrid.uniform_grid(1.0, 4).index_of(0.3)

    def test_same_as(self):
        a, b = TimeGrid.uniform_grid(1.0, 4), TimeGrid.uniform_grid(1.0, 4)
        assert a.same_as(b) and not a.same_as(TimeGrid.uniform_grid(1.0, 5))


class TestWeightedSamples:
    def test_shape_and_finiteness(self, unit_grid):
        with pytest.raises(ContractError):
            WeightedSamples(unit_grid, np.ones(5), 1.0)
        bad = np.ones(unit_grid.nodes.size)
        bad[3] = math.nan
        with pytest.raises(ContractError):
            WeightedSamples(unit_grid, bad, 1.0)

    def test_weighted_representation(self, unit_grid):
        s = _samples(unit_grid, lambda t: t ** -0.25 * (1.0 + t), alpha=0.75)
        np.testing.assert_allclose(s.weighted_values, 1.0 + unit_grid.nodes, atol=1e-14)
        np.testing.assert_allclose(s.values(), unit_grid.nodes[1:] ** -0.25
                                   * (1.0 + unit_grid.nodes[1:]), rtol=1e-14)
        assert s.sup_norm() == pytest.approx(2.0)


class TestIntegral:
    def test_singular_power_maps_to_constant(self, unit_grid):
        s = WeightedSamples(unit_grid, np.ones(unit_grid.nodes.size), 0.75)
        out = rl_integral(s, 0.25)
        assert out.alpha == pytest.approx(1.0)
        np.testing.assert_allclose(out.weighted_values, GAMMA_075, rtol=0, atol=1e-13)

    def test_half_integral_of_one(self, unit_grid):
        out = rl_integral(_samples(unit_grid, lambda t: 1.0), 0.5)
        t = unit_grid.nodes[1:]
        np.testing.assert_allclose(out.values(), 2.0 * np.sqrt(t / math.pi), rtol=1e-13)

    def test_power_rule_for_identity(self, unit_grid):
        out = rl_integral(_samples(unit_grid, lambda t: t), 0.75)
        # Gamma(2) / Gamma(2.75), evaluated independently in high precision
        assert out.values()[-1] == pytest.approx(0.62175157264629560, abs=1e-13)
        assert power_rule(1.0, 0.75) == pytest.approx(0.62175157264629560, abs=1e-15)

    def test_exact_on_nonuniform_grid(self):
        t = np.concatenate([[0.0], np.sort(np.random.default_rng(3).uniform(0, 1, 40)), [1.0]])
        grid = TimeGrid(t)
        out = rl_integral(_samples(grid, lambda s: 2.0 - s), 0.4)
        exact = 2.0 * power_rule(0.0, 0.4) * t[1:] ** 0.4 - power_rule(1.0, 0.4) * t[1:] ** 1.4
        np.testing.assert_allclose(out.values(), exact, rtol=1e-12)

    @pytest.mark.parametrize("order", [0.0, 1.0, -0.2, 1.5])
    def test_order_domain(self, unit_grid, order):
        with pytest.raises(DomainError):
            rl_integral(_samples(unit_grid, lambda t: 1.0), order)

    def test_semigroup_of_integrals(self):
        grid = TimeGrid.uniform_grid(1.0, 400)
        x = _samples(grid, math.cos)
        twice = rl_integral(rl_integral(x, 0.3), 0.4)
        once = rl_integral(x, 0.7)
        assert np.max(np.abs(twice.values() - once.values())) <= 1e-6


class TestDerivative:
    def test_annihilates_singular_power(self, unit_grid):
        s = WeightedSamples(unit_grid, np.ones(unit_grid.nodes.size), 0.75)
        out = rl_derivative(s, 0.75)
        assert np.max(np.abs(out.values())) <= 1e-10

    def test_half_derivative_of_one(self):
        grid = TimeGrid.uniform_grid(1.0, 200)
        out = rl_derivative(_samples(grid, lambda t: 1.0), 0.5)
        t = grid.nodes[1:]
        np.testing.assert_allclose(out.values(), t ** -0.5 / math.sqrt(math.pi), rtol=1e-9)

    def test_power_rule(self):
        grid = TimeGrid.uniform_grid(1.0, 400)
        out = rl_derivative(_samples(grid, lambda t: t ** 1.2), 0.75)
        # Gamma(2.2) / Gamma(1.45), evaluated independently in high precision
        assert out.values()[-1] == pytest.approx(1.2440448634471189, abs=1e-4)

    def test_left_inverse_error_vanishes_under_refinement(self):
        errors = []
        for steps in (100, 200, 400):
            grid = TimeGrid.uniform_grid(1.0, steps)
            x = _samples(grid, lambda t: math.exp(-t))
            back = rl_derivative(rl_integral(x, 0.6), 0.6)
            errors.append(float(np.max(np.abs(back.values() - x.values()))))
        assert errors[0] > errors[1] > errors[2]
        assert errors[2] < 1e-3


class TestStepper:
    def test_free_evolution(self, unit_grid):
        c = 2.5
        out = step_scalar_fode(0.75, 0.0, lambda t: 0.0, c, unit_grid)
        np.testing.assert_allclose(out.weighted_values, c / GAMMA_075, rtol=1e-13)

    def test_relaxation_against_closed_form(self):
        grid = TimeGrid.uniform_grid(1.0, 2000)
        out = step_scalar_fode(0.75, 1.0, lambda t: 0.0, GAMMA_075, grid)
        # x(1) = Gamma(0.75) E_{0.75,0.75}(-1)
        expected = GAMMA_075 * 0.2322377201009614319
        assert abs(out.weighted_values[-1] - expected) <= 1e-3
        assert abs(out.weighted_values[-1] - expected) <= 1e-6

    def test_integer_order_reduction(self):
        grid = TimeGrid.uniform_grid(1.0, 400)
        x0 = 0.7
        out = step_scalar_fode(1.0, 2.0, lambda t: 1.0, x0, grid)
        t = grid.nodes
        exact = x0 * np.exp(-2 * t) + (1 - np.exp(-2 * t)) / 2
        assert np.max(np.abs(out.weighted_values - exact)) <= 1e-5

    @pytest.mark.parametrize("case", ["free", "forced"])
    def test_convergence_factor(self, case):
        lam = 1.0
        if case == "free":
            forcing, c = (lambda t: 0.0), 1.0

            def exact(t):
                return mittag_leffler_vec(0.75, 0.75, -lam * t ** 0.75)
        else:
            forcing, c = (lambda t: 1.0), 0.0

            def exact(t):
                return t * mittag_leffler_vec(0.75, 1.75, -lam * t ** 0.75)
        errors = []
        for steps in (100, 200, 400):
            grid = TimeGrid.uniform_grid(1.0, steps)
            w = step_scalar_fode(0.75, lam, forcing, c, grid).weighted_values
            errors.append(float(np.max(np.abs(w - exact(grid.nodes)))))
        assert errors[0] / errors[1] >= 1.8
        assert errors[1] / errors[2] >= 1.8

    def test_domain_and_contract(self, unit_grid):
        with pytest.raises(DomainError):
            step_scalar_fode(0.4, 1.0, lambda t: 0.0, 1.0, unit_grid)
        with pytest.raises(DomainError):
            step_scalar_fode(1.2, 1.0, lambda t: 0.0, 1.0, unit_grid)
        with pytest.raises(ContractError):
            step_scalar_fode(0.75, 1.0, lambda t: 0.0, 1.0, TimeGrid(np.array([0.0, 0.2, 1.0])))

    def test_non_finite_forcing(self, unit_grid):
        with pytest.raises(EvaluationError) as info:
            step_scalar_fode(0.75, 1.0, lambda t: math.inf if t > 0.5 else 0.0, 1.0, unit_grid)
        assert info.value.params["alpha"] == 0.75
