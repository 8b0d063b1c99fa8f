import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slhjb.errors import ConfigurationError, InvalidPointError
from slhjb.interpolation import (
    Grid,
    evaluate,
    interp_multilinear,
    interp_pchip,
    locate,
    multilinear,
    pchip,
    pchip_slopes,
)


class TestGrid:
    def test_nodes_follow_formula(self):
        g = Grid.uniform(-1.0, 2.0, 7)
        np.testing.assert_array_equal(g.axis(0), -1.0 + np.arange(8) * (3.0 / 7))
        assert g.shape == (8,)
        assert g.spacing[0] == 3.0 / 7

    def test_row_major_nodes(self):
        g = Grid.uniform([0, 10], [1, 12], [1, 2])
        nodes = g.nodes()
        assert nodes.shape == (6, 2)
        np.testing.assert_array_equal(nodes[1], [0, 11])
        assert g.flat_index((1, 0)) == 3

    @pytest.mark.parametrize("args", [(1, 0, 4), (0, 1, 0), ([0, 0], [1], [2, 2])])
    def test_invalid(self, args):
        with pytest.raises(ValueError):
            Grid.uniform(*args)

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            Grid.uniform(0, 1, 2, extrapolation="wrap")


class TestLocate:
    def test_node_exactness(self):
        g = Grid.uniform(0.0, 1.0, 10)
        for m in range(11):
            st_ = locate(g, g.axis(0)[m])
            assert st_.entries == (((m,), 1.0),)

    def test_midpoint(self):
        g = Grid.uniform(0.0, 1.0, 4)
        assert dict(locate(g, 0.375).entries) == pytest.approx({(1,): 0.5, (2,): 0.5})

    def test_cell_center_2d(self):
        g = Grid.uniform([0, 0], [2, 2], [2, 2])
        st_ = locate(g, [0.5, 1.5])
        assert len(st_) == 4
        assert all(w == pytest.approx(0.25) for _, w in st_)

    def test_clamp_projects(self):
        g = Grid.uniform(0.0, 1.0, 4)
        assert locate(g, 7.0).entries == (((4,), 1.0),)

    def test_other_modes_refuse_outside(self):
        g = Grid.uniform(0.0, 1.0, 4, extrapolation="linear")
        with pytest.raises(InvalidPointError):
            locate(g, 1.5)

    def test_nan(self):
        with pytest.raises(InvalidPointError):
            locate(Grid.uniform(0.0, 1.0, 4), float("nan"))

    @settings(max_examples=200, deadline=None)
    @given(st.floats(-1, 3), st.floats(-1, 3), st.integers(1, 6), st.integers(1, 6))
    def test_invariants(self, x, y, j1, j2):
        g = Grid.uniform([0, 0], [2, 1.5], [j1, j2])
        st_ = locate(g, [x, y])
        w = np.array([q for _, q in st_])
        assert np.all(w >= 0)
        assert w.sum() == pytest.approx(1.0, abs=1e-14)
        assert len(st_) <= 4


class TestMultilinear:
    def test_simple(self):
        g = Grid.uniform(0.0, 1.0, 1)
        assert interp_multilinear(g, [0.0, 1.0], 0.25) == 0.25

    def test_affine_exact(self):
        rng = np.random.default_rng(0)
        g = Grid.uniform([0, -1, 2], [1, 1, 3], [3, 4, 2])
        f = lambda p: 0.5 - p[:, 0] + 2 * p[:, 1] + 3 * p[:, 2]
        x = rng.uniform([0, -1, 2], [1, 1, 3], size=(500, 3))
        np.testing.assert_allclose(multilinear(g, f(g.nodes()), x), f(x), atol=1e-13)

    def test_node_exactness(self):
        g = Grid.uniform([0, 0], [1, 1], [5, 3])
        v = np.random.default_rng(1).normal(size=g.size)
        np.testing.assert_allclose(multilinear(g, v, g.nodes()), v, atol=1e-15)

    def test_monotone_exact_1000_trials(self):
        rng = np.random.default_rng(2)
        violations = 0
        for _ in range(1000):
            d = rng.integers(1, 3)
            J = rng.integers(1, 9, size=d)
            lo = rng.uniform(-2, 0, size=d)
            g = Grid.uniform(lo, lo + rng.uniform(0.1, 3, size=d), J)
            v1 = rng.normal(size=g.size)
            v2 = v1 + rng.exponential(size=g.size) * (rng.random(g.size) < 0.5)
            x = rng.uniform(lo - 0.5, np.array(g.upper) + 0.5, size=(20, d))
            violations += int(np.sum(multilinear(g, v1, x) > multilinear(g, v2, x)))
        assert violations == 0

    def test_bounded_by_stencil(self):
        rng = np.random.default_rng(3)
        g = Grid.uniform(0, 1, 20)
        v = rng.normal(size=21)
        x = rng.uniform(0, 1, 1000)
        out = multilinear(g, v, x)
        k = np.minimum((x * 20).astype(int), 19)
        assert np.all(out <= np.maximum(v[k], v[k + 1]) + 1e-15)
        assert np.all(out >= np.minimum(v[k], v[k + 1]) - 1e-15)

    def test_lipschitz_error_bound(self):
        rng = np.random.default_rng(4)
        g = Grid.uniform(-1.3, 2.1, 17)
        x = rng.uniform(-1.3, 2.1, 10_000)
        err = np.abs(multilinear(g, np.abs(g.axis(0)), x) - np.abs(x))
        assert err.max() <= g.spacing[0]

    def test_extrapolation_modes(self):
        g = Grid.uniform(0.0, 1.0, 2)
        v = np.array([0.0, 1.0, 4.0])
        assert interp_multilinear(g, v, 1.5) == 4.0
        assert interp_multilinear(g.with_extrapolation("linear"), v, 1.5) == pytest.approx(7.0)
        assert interp_multilinear(g.with_extrapolation("linear"), v, -0.5) == pytest.approx(-1.0)
        ga = g.with_extrapolation("payoff_asymptotic")
        assert interp_multilinear(ga, v, 1.5, asymptote=lambda x: 10 * x) == pytest.approx(15.0)
        assert interp_multilinear(ga, v, 0.75, asymptote=lambda x: 10 * x) == pytest.approx(2.5)
        with pytest.raises(ConfigurationError):
            interp_multilinear(ga, v, 1.5)


class TestPchip:
    def test_affine_exact(self):
        g = Grid.uniform(-1, 3, 9)
        x = np.linspace(-1, 3, 333)
        np.testing.assert_allclose(pchip(g, 2 - 0.5 * g.axis(0), x), 2 - 0.5 * x, atol=1e-13)

    def test_node_exactness(self):
        g = Grid.uniform(0, 1, 12)
        v = np.random.default_rng(5).normal(size=13)
        np.testing.assert_allclose(pchip(g, v, g.axis(0)), v, atol=1e-14)

    def test_two_nodes_is_linear(self):
        g = Grid.uniform(0, 1, 1)
        assert interp_pchip(g, [1.0, 3.0], 0.25) == pytest.approx(1.5)

    def test_monotone_data_monotone_interpolant(self):
        rng = np.random.default_rng(6)
        for _ in range(50):
            J = int(rng.integers(2, 30))
            g = Grid.uniform(0, 1, J)
            v = np.cumsum(rng.exponential(size=J + 1) * (rng.random(J + 1) < 0.7))
            x = np.linspace(0, 1, 2000)
            assert np.all(np.diff(pchip(g, v, x)) >= -1e-12)

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.floats(-10, 10), min_size=3, max_size=20), st.integers(0, 10**6))
    def test_cellwise_bounded_where_locally_monotone(self, vals, seed):
        v = np.array(vals)
        J = len(v) - 1
        g = Grid.uniform(0, 1, J)
        x = np.random.default_rng(seed).uniform(0, 1, 200)
        out = pchip(g, v, x)
        k = np.minimum(np.floor(x * J).astype(int), J - 1)
        lo = np.minimum(v[k], v[k + 1])
        hi = np.maximum(v[k], v[k + 1])
        assert np.all(out >= lo - 1e-9) and np.all(out <= hi + 1e-9)

    def test_third_order_on_sine(self):
        xs = np.linspace(0, np.pi / 2, 20_001)
        errs = []
        for J in (32, 64):
            g = Grid.uniform(0, np.pi / 2, J)
            errs.append(np.max(np.abs(pchip(g, np.sin(g.axis(0)), xs) - np.sin(xs))))
        # measured ratio 7.99 for 33 -> 65 nodes
        assert 7.0 < errs[0] / errs[1] < 9.0

    def test_slopes_match_local_evaluation(self):
        rng = np.random.default_rng(7)
        g = Grid.uniform(0, 2, 11)
        v = rng.normal(size=12)
        m = pchip_slopes(v, g.spacing[0])
        # derivative of the interpolant at interior nodes equals the nodal slope
        eps = 1e-7
        for i in range(1, 11):
            x = g.axis(0)[i]
            fd = (pchip(g, v, x + eps)[0] - pchip(g, v, x - eps)[0]) / (2 * eps)
            assert fd == pytest.approx(m[i], abs=1e-5)

    def test_tensorized_reproduces_product_of_1d(self):
        gx = Grid.uniform(0, 1, 6)
        gy = Grid.uniform(0, 2, 5)
        g = Grid.uniform([0, 0], [1, 2], [6, 5])
        fx = np.exp(gx.axis(0))
        fy = np.sin(gy.axis(0))
        vals = np.outer(fx, fy)
        pts = np.random.default_rng(8).uniform([0, 0], [1, 2], size=(50, 2))
        # separable data: axis-by-axis cubic is the product of the 1-D cubics
        want = pchip(gx, fx, pts[:, 0]) * pchip(gy, fy, pts[:, 1])
        np.testing.assert_allclose(pchip(g, vals, pts), want, atol=1e-13)

    def test_rejects_multidim_scalar_api(self):
        with pytest.raises(ValueError):
            interp_pchip(Grid.uniform([0, 0], [1, 1], [2, 2]), np.zeros(9), [0.5, 0.5])

    def test_evaluate_dispatch(self):
        g = Grid.uniform(0, 1, 4)
        v = g.axis(0) ** 2
        assert evaluate(g, v, 0.3, "linear")[0] == pytest.approx(multilinear(g, v, 0.3)[0])
        assert evaluate(g, v, 0.3, "pchip")[0] == pytest.approx(pchip(g, v, 0.3)[0])
        with pytest.raises(ValueError):
            evaluate(g, v, 0.3, "spline")
