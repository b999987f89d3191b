import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import mgode.tableau as tb


class TestLegendre:
    def test_p0(self):
        assert tb.legendre_eval(0, 0.37) == 1.0

    def test_p1(self):
        assert tb.legendre_eval(1, -0.5) == -0.5

    def test_p2_at_one(self):
        # oracle: explicit polynomial (3x^2 - 1) / 2
        assert tb.legendre_eval(2, 1.0) == pytest.approx(1.0, abs=1e-15)

    @given(st.floats(-1.0, 1.0))
    def test_p3_matches_explicit(self, x):
        explicit = 0.5 * (5.0 * x**3 - 3.0 * x)
        assert tb.legendre_eval(3, x) == pytest.approx(explicit, abs=1e-14)

    def test_negative_order_rejected(self):
        with pytest.raises(ValueError):
            tb.legendre_eval(-1, 0.0)


class TestNodes:
    def test_lobatto_q1(self):
        assert np.array_equal(tb.lobatto_nodes(1).nodes, [0.0, 1.0])

    def test_lobatto_q2(self):
        np.testing.assert_allclose(tb.lobatto_nodes(2).nodes, [0.0, 0.5, 1.0],
                                   atol=1e-12)

    def test_lobatto_q3(self):
        # oracle: factor (5x^2 - 1)(x^2 - 1) / 2 of the defining polynomial
        expect = [0.0, (1 - 1/np.sqrt(5)) / 2, (1 + 1/np.sqrt(5)) / 2, 1.0]
        np.testing.assert_allclose(tb.lobatto_nodes(3).nodes, expect, atol=1e-12)

    def test_radau_q0(self):
        assert np.array_equal(tb.radau_nodes(0).nodes, [1.0])

    def test_radau_q1(self):
        # oracle: factor (3x - 1)(x + 1) / 2, reversed and mapped
        np.testing.assert_allclose(tb.radau_nodes(1).nodes, [1/3, 1.0],
                                   atol=1e-12)

    def test_radau_q2(self):
        expect = [(4 - np.sqrt(6)) / 10, (4 + np.sqrt(6)) / 10, 1.0]
        np.testing.assert_allclose(tb.radau_nodes(2).nodes, expect, atol=1e-12)

    @pytest.mark.parametrize("q", range(1, 13))
    def test_lobatto_defining_residual(self, q):
        nodes = tb.lobatto_nodes(q).nodes
        x = 2.0 * nodes[1:-1] - 1.0
        res = x * tb.legendre_eval(q, x) - tb.legendre_eval(q - 1, x)
        assert np.all(np.abs(res) < 1e-13)

    @pytest.mark.parametrize("q", range(0, 13))
    def test_radau_defining_residual(self, q):
        nodes = tb.radau_nodes(q).nodes
        x = 1.0 - 2.0 * nodes[:-1]
        res = tb.legendre_eval(q, x) + tb.legendre_eval(q + 1, x)
        assert np.all(np.abs(res) < 1e-13)

    @pytest.mark.parametrize("q", range(1, 13))
    def test_node_sets_well_formed(self, q):
        lob = tb.lobatto_nodes(q)
        assert lob.nodes[0] == 0.0 and lob.nodes[-1] == 1.0
        assert len(lob) == q + 1
        assert np.all(np.diff(lob.nodes) > 0)
        rad = tb.radau_nodes(q)
        assert rad.nodes[-1] == 1.0
        assert len(rad) == q + 1
        assert np.all(rad.nodes > 0.0)

    def test_order_cap(self):
        with pytest.raises(ValueError):
            tb.lobatto_nodes(tb.MAX_ORDER + 1)


class TestLagrange:
    def test_linear_hat(self):
        basis = tb.lagrange_basis([0.0, 1.0])
        assert basis.eval(0.25)[0, 0] == pytest.approx(0.75, abs=1e-15)

    def test_cardinality(self):
        nodes = tb.lobatto_nodes(5).nodes
        basis = tb.lagrange_basis(nodes)
        vals = basis.eval(nodes)
        np.testing.assert_allclose(vals, np.eye(6), atol=1e-14)

    def test_quadratic_value(self):
        # oracle: lambda_1 on {0, 1/2, 1} is 4 s (1 - s)
        basis = tb.lagrange_basis([0.0, 0.5, 1.0])
        assert basis.eval(0.25)[1, 0] == pytest.approx(0.75, abs=1e-14)

    def test_duplicate_nodes_rejected(self):
        with pytest.raises(ValueError):
            tb.lagrange_basis([0.0, 0.5, 0.5])

    def test_derivative_values(self):
        basis = tb.lagrange_basis([0.0, 0.5, 1.0])
        # lambda_1 = 4 s (1 - s), derivative 4 - 8 s
        assert basis.eval_derivative(0.25)[1, 0] == pytest.approx(2.0, abs=1e-12)


def _apply(tab, xi0, k, fvals):
    """One nodal update from the folded quadrature weights."""
    return xi0 + k * (tab.quad_weights @ fvals)


class TestMcgTableau:
    def test_trapezoid_row(self):
        # oracle: hand-solved 1x1 system with the 2-point end-point rule
        tab = tb.tableau(tb.MCG, 1)
        np.testing.assert_allclose(tab.quad_weights, [[0.5, 0.5]], atol=1e-14)

    def test_simpson_end_row(self):
        # oracle: exact integration of the 2x2 system
        tab = tb.tableau(tb.MCG, 2)
        np.testing.assert_allclose(tab.quad_weights[-1], [1/6, 4/6, 1/6],
                                   atol=1e-14)
        np.testing.assert_allclose(tab.quad_weights[0], [5/24, 1/3, -1/24],
                                   atol=1e-14)

    @pytest.mark.parametrize("q", range(1, 13))
    def test_zero_rhs_is_constant(self, q):
        tab = tb.tableau(tb.MCG, q)
        xi = _apply(tab, 0.7, 0.3, np.zeros(q + 1))
        np.testing.assert_allclose(xi, 0.7, atol=1e-13)

    @pytest.mark.parametrize("q", range(1, 13))
    def test_rows_integrate_constants(self, q):
        tab = tb.tableau(tb.MCG, q)
        xi = _apply(tab, 0.0, 1.0, np.ones(q + 1))
        np.testing.assert_allclose(xi, tab.nodes.nodes[1:], atol=1e-12)

    @pytest.mark.parametrize("q", range(1, 7))
    def test_end_row_quadrature_exactness(self, q):
        tab = tb.tableau(tb.MCG, q)
        s = tab.nodes.nodes
        for d in range(2 * q):
            approx = tab.quad_weights[-1] @ s**d
            assert approx == pytest.approx(1.0 / (d + 1), abs=1e-12)

    @given(st.integers(1, 6), st.lists(st.floats(-2, 2), min_size=1, max_size=6))
    @settings(max_examples=40, deadline=None)
    def test_end_row_exact_on_low_degree(self, q, coeffs):
        # the end value reproduces the integral for degree <= 2q - 1
        coeffs = coeffs[:2 * q]
        tab = tb.tableau(tb.MCG, q)
        s = tab.nodes.nodes
        fvals = sum(c * s**d for d, c in enumerate(coeffs))
        exact = sum(c / (d + 1) for d, c in enumerate(coeffs))
        approx = float(tab.quad_weights[-1] @ fvals)
        assert approx == pytest.approx(exact, abs=1e-12)


class TestMdgTableau:
    def test_backward_euler(self):
        # oracle: hand derivation with the single right-end node
        tab = tb.tableau(tb.MDG, 0)
        assert np.array_equal(tab.nodes.nodes, [1.0])
        np.testing.assert_allclose(tab.quad_weights, [[1.0]], atol=1e-15)
        xi = _apply(tab, np.array([2.0]), 0.5, np.array([-3.0]))
        assert xi[0] == pytest.approx(2.0 + 0.5 * -3.0, abs=1e-15)

    def test_q1_constant_forcing(self):
        # exactness on constants, against the direct weak-form solve
        tab = tb.tableau(tb.MDG, 1)
        xi = _apply(tab, 0.0, 1.0, np.ones(2))
        np.testing.assert_allclose(xi, [1/3, 1.0], atol=1e-14)

    @pytest.mark.parametrize("q", range(0, 13))
    def test_zero_rhs_is_incoming(self, q):
        tab = tb.tableau(tb.MDG, q)
        xi = _apply(tab, -1.3, 0.7, np.zeros(q + 1))
        np.testing.assert_allclose(xi, -1.3, atol=1e-13)

    @pytest.mark.parametrize("q", range(0, 13))
    def test_rows_integrate_constants(self, q):
        tab = tb.tableau(tb.MDG, q)
        xi = _apply(tab, 0.0, 1.0, np.ones(q + 1))
        np.testing.assert_allclose(xi, tab.nodes.nodes, atol=1e-12)

    @pytest.mark.parametrize("q", range(0, 7))
    def test_end_row_quadrature_exactness(self, q):
        tab = tb.tableau(tb.MDG, q)
        s = tab.nodes.nodes
        for d in range(2 * q + 1):
            approx = tab.quad_weights[-1] @ s**d
            assert approx == pytest.approx(1.0 / (d + 1), abs=1e-12)


class TestIdentities:
    @pytest.mark.parametrize("q", range(1, 13))
    def test_mcg_end_value_identity(self, q):
        tab = tb.tableau(tb.MCG, q)
        trial = tb.lagrange_basis(tab.nodes.nodes)
        test = tb.lagrange_basis(tab.test_nodes)
        xg, wg = tb.gauss_rule_01(q + 2)
        a_col0 = (test.eval(xg) * wg) @ trial.eval_derivative(xg)[0]
        np.testing.assert_allclose(tab.amat_inv @ a_col0, -np.ones(q),
                                   atol=1e-11)

    @pytest.mark.parametrize("q", range(0, 13))
    def test_mdg_incoming_identity(self, q):
        tab = tb.tableau(tb.MDG, q)
        lam0 = tb.lagrange_matrix(tab.nodes.nodes, 0.0)[:, 0]
        np.testing.assert_allclose(tab.amat_inv @ lam0, np.ones(q + 1),
                                   atol=1e-11)


class TestRules:
    def test_scheme_rule_depth0_matches_quad_weights(self):
        tab = tb.tableau(tb.MCG, 2)
        pts, W = tb.scheme_rule(tb.MCG, 2, 0)
        np.testing.assert_allclose(pts, tab.nodes.nodes, atol=0)
        np.testing.assert_allclose(W, tab.quad_weights, atol=1e-15)

    @pytest.mark.parametrize("method,q", [(tb.MCG, 2), (tb.MDG, 1)])
    def test_scheme_rule_depth_preserves_constants(self, method, q):
        tab = tb.tableau(method, q)
        _, W = tb.scheme_rule(method, q, 3)
        want = tab.nodes.nodes[1:] if method == tb.MCG else tab.nodes.nodes
        np.testing.assert_allclose(W.sum(axis=1), want, atol=1e-13)

    def test_integration_rule_weights_sum_to_one(self):
        for depth in (0, 1, 3):
            _, w = tb.integration_rule(tb.MDG, 2, depth)
            assert np.sum(w) == pytest.approx(1.0, abs=1e-13)

    def test_json_dump_shape(self):
        d = tb.tableau(tb.MCG, 1).to_json_dict()
        assert d["method"] == tb.MCG and d["q"] == 1
        assert d["nodes"] == [0.0, 1.0]
        np.testing.assert_allclose(d["quad_weights"], [[0.5, 0.5]], atol=1e-15)

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            tb.tableau("xg", 1)
