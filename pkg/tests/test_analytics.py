import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from slhjb.analytics import (
    ConvergenceReport,
    ConvergenceRow,
    RefinementRule,
    StudyPlan,
    bs_call,
    convergence_order,
    fill_orders,
    run_convergence_study,
    sup_error,
)
from slhjb.errors import ConfigurationError, InvalidIntervalError
from slhjb.interpolation import Grid
from slhjb.problem import Butterfly, TimeMesh, bergman_problem
from slhjb.quadrature import rule_for
from slhjb.solver import backward_solve

LOG_DOMAIN = (0.0, math.log(1200.0))
BUTTERFLY_DOMAIN = (math.log(25.0), math.log(500.0))

# lognormal expectation integrated with mpmath at 30 digits
BS_ORACLE = [
    ((100.0, 100.0, 0.15, 0.4, 1.0), 22.721542955947984979),
    ((80.0, 100.0, 0.15, 0.4, 1.0), 10.343745588386738),
    ((70.0, 100.0, 0.15, 0.4, 1.0), 5.9216835566585302618),
    ((150.0, 100.0, 0.1, 0.2, 0.5), 54.879949521192984663),
]


def call_exact(s):
    return bs_call(s, 100.0, 0.15, 0.4, 1.0)


@pytest.fixture(scope="module")
def small_call_surface():
    p = bergman_problem()
    grid = Grid.uniform(*LOG_DOMAIN, 256, "payoff_asymptotic")
    return backward_solve(p, grid, TimeMesh(32, 1.0), rule_for(2))


class TestBlackScholes:
    @pytest.mark.parametrize("args, expected", BS_ORACLE)
    def test_against_quadrature_oracle(self, args, expected):
        assert bs_call(*args) == pytest.approx(expected, rel=1e-13)

    def test_zero_price(self):
        assert bs_call(0.0, 100.0, 0.15, 0.4, 1.0) == 0.0

    def test_deep_in_the_money(self):
        s = 1e6 * 100.0
        assert bs_call(s, 100.0, 0.15, 0.4, 1.0) == pytest.approx(s - 100.0 * math.exp(-0.15), rel=1e-6)

    def test_vectorized(self):
        s = np.array([0.0, 70.0, 100.0])
        out = bs_call(s, 100.0, 0.15, 0.4, 1.0)
        assert out.shape == (3,)
        assert out[0] == 0.0
        assert out[2] == bs_call(100.0, 100.0, 0.15, 0.4, 1.0)

    @given(st.floats(1.0, 500.0), st.floats(1.0, 500.0))
    def test_monotone_and_bounded(self, s1, s2):
        lo, hi = sorted((s1, s2))
        c_lo, c_hi = bs_call(lo, 100.0, 0.15, 0.4, 1.0), bs_call(hi, 100.0, 0.15, 0.4, 1.0)
        assert c_lo <= c_hi + 1e-12
        assert max(hi - 100.0, 0.0) - 1e-9 <= c_hi + 100.0 * (1 - math.exp(-0.15)) and c_hi <= hi


class TestSupError:
    def test_self_reference_is_zero(self, small_call_surface):
        assert sup_error(small_call_surface, small_call_surface, (70.0, 90.0)) == 0.0

    def test_matches_manual_max(self, small_call_surface):
        x = small_call_surface.grid.axis(0)
        sel = (np.exp(x) >= 70) & (np.exp(x) <= 90)
        manual = np.max(np.abs(small_call_surface.values[0][sel] - call_exact(np.exp(x[sel]))))
        assert sup_error(small_call_surface, call_exact, (70.0, 90.0)) == manual

    @pytest.mark.parametrize("interval", [(91.0, 91.01), (90.0, 70.0), (1e5, 2e5)])
    def test_empty_or_reversed_interval(self, small_call_surface, interval):
        with pytest.raises(InvalidIntervalError):
            sup_error(small_call_surface, call_exact, interval)

    def test_deterministic(self):
        def once():
            p = bergman_problem()
            grid = Grid.uniform(*LOG_DOMAIN, 128, "payoff_asymptotic")
            return sup_error(backward_solve(p, grid, TimeMesh(16, 1.0), rule_for(4)), call_exact, (70.0, 90.0))
        assert once() == once()


class TestOrders:
    @pytest.mark.parametrize("beta", [0.5, 1.0, 2.0, 3.25])
    def test_synthetic_sequence(self, beta):
        rows = [ConvergenceRow(k, 0, 0, [3.0 * 2.0 ** (-beta * k)], [None], None) for k in range(1, 7)]
        fill_orders(rows)
        assert rows[0].orders == [None]
        for r in rows[1:]:
            assert r.orders[0] == pytest.approx(beta, abs=1e-12)

    @pytest.mark.parametrize("prev, cur", [(None, 1.0), (1.0, None), (0.0, 1.0), (1.0, 0.0)])
    def test_undefined_orders(self, prev, cur):
        assert convergence_order(prev, cur) is None

    def test_gap_in_levels_has_no_order(self):
        rows = [ConvergenceRow(1, 0, 0, [1.0], [None], None), ConvergenceRow(3, 0, 0, [0.25], [None], None)]
        assert fill_orders(rows)[1].orders == [None]

    def test_table_rendering(self):
        rep = ConvergenceReport(
            rows=fill_orders([ConvergenceRow(1, 32, 256, [0.5, 0.1], [None, None], 0.123),
                              ConvergenceRow(2, 64, 1024, [0.25, None], [None, None], None)]),
            intervals=[(30, 70), (130, 170)],
        )
        assert rep.header() == ["k", "N", "J", "error_1", "order_1", "error_2", "order_2", "cpu_s"]
        assert rep.table() == [
            ["1", "32", "256", "5.000e-01", "-", "1.000e-01", "-", "0.12"],
            ["2", "64", "1024", "2.500e-01", "1.00", "nan", "-", "-"],
        ]

    def test_single_interval_header(self):
        assert ConvergenceReport(intervals=[(70, 90)]).header() == ["k", "N", "J", "error", "order", "cpu_s"]


class TestRefinementRule:
    @pytest.mark.parametrize("text, env, value", [
        ("2^4*2^k", dict(k=3), 128),
        ("2^3*2^k", dict(k=6), 512),
        ("N^2/4", dict(k=1, N=32), 256),
        ("N^2/8", dict(k=2, N=32), 128),
        ("N/16", dict(k=5, N=256), 16),
        ("16*N", dict(k=5, N=256), 4096),
        ("(k+1)*(k-1)", dict(k=4), 15),
        ("-k+10", dict(k=3), 7),
    ])
    def test_values(self, text, env, value):
        assert RefinementRule(text)(**env) == value

    @pytest.mark.parametrize("text", ["N**", "2^k + x", "import os", "N % 2", "1.5*N", "f(k)", ""])
    def test_malformed(self, text):
        with pytest.raises(ConfigurationError):
            RefinementRule(text)

    def test_non_integer_value(self):
        with pytest.raises(ConfigurationError):
            RefinementRule("N/16")(N=8)

    def test_negative_exponent(self):
        with pytest.raises(ConfigurationError):
            RefinementRule("2^(0-k)")(k=2)

    def test_undefined_name(self):
        with pytest.raises(ConfigurationError):
            RefinementRule("N^2", names=("k",))
        with pytest.raises(ConfigurationError):
            RefinementRule("N^2")(k=1)

    @given(st.integers(0, 12))
    def test_large_powers_exact(self, k):
        assert RefinementRule("(2^4*2^k)^2/4")(k=k) == (16 * 2**k) ** 2 // 4


class TestStudy:
    def _call_plan(self, **kw):
        base = dict(problem=bergman_problem(), M=2, domain=LOG_DOMAIN, k_range=(1, 3), exact=call_exact,
                    N_rule="2^3*2^k", J_rule="N^2/4")
        base.update(kw)
        return StudyPlan(**base)

    def test_rows_and_metadata(self):
        rep = run_convergence_study(self._call_plan())
        assert [(r.k, r.N, r.J) for r in rep.rows] == [(1, 16, 64), (2, 32, 256), (3, 64, 1024)]
        assert rep.rows[0].orders == [None]
        assert all(r.cpu_s is not None and r.cpu_s >= 0 for r in rep.rows)
        assert rep.metadata["M"] == 2 and rep.metadata["reference"] == "exact"
        assert rep.metadata["model"]["r_b"] == 0.15

    def test_progress_callback(self):
        seen = []
        run_convergence_study(self._call_plan(k_range=(1, 2)), progress=seen.append)
        assert [r.k for r in seen] == [1, 2]

    def test_errors_deterministic(self):
        a = run_convergence_study(self._call_plan())
        b = run_convergence_study(self._call_plan())
        assert a.errors() == b.errors()

    def test_exact_reference_required(self):
        with pytest.raises(ConfigurationError):
            run_convergence_study(self._call_plan(exact=None))

    def test_empty_interval_recorded_not_raised(self):
        rep = run_convergence_study(self._call_plan(k_range=(1, 1), intervals=[(70.0, 90.0), (90.5, 90.6)]))
        assert rep.rows[0].errors[1] is None
        assert "interval 2" in rep.rows[0].note
        assert rep.rows[0].errors[0] is not None

    def test_solver_failure_recorded(self):
        rep = run_convergence_study(self._call_plan(k_range=(1, 2), N_rule="0*k"))
        assert all(r.note.startswith("skipped") for r in rep.rows)

    def test_pchip_small_grid_skipped(self):
        p = bergman_problem(payoff=Butterfly(100.0, 300.0))
        plan = StudyPlan(problem=p, M=2, interp="pchip", domain=BUTTERFLY_DOMAIN, N_rule="2^3*2^k",
                         J_rule="N/16", k_range=(1, 2), intervals=[(130.0, 170.0)], reference="self-difference")
        rep = run_convergence_study(plan)
        assert rep.rows[0].note.startswith("skipped")
        assert rep.rows[1].note.startswith("skipped")

    @pytest.mark.parametrize("M", [2, 4])
    def test_self_difference_sandwiched_by_exact_errors(self, M):
        # coarse nodes are fine nodes, so e_{k-1} - e_k <= |V_{k-1} - V_k| <= e_{k-1} + e_k
        kw = dict(M=M, k_range=(1, 4))
        exact = run_convergence_study(self._call_plan(**kw)).errors()
        selfd = run_convergence_study(self._call_plan(reference="self-difference", **kw)).errors()
        for j in range(1, len(exact)):
            lo, hi = exact[j - 1] - exact[j], exact[j - 1] + exact[j]
            assert lo * (1 - 1e-12) <= selfd[j] <= hi * (1 + 1e-12)

    def test_self_difference_first_row_uses_extra_level(self):
        kw = dict(reference="self-difference", k_range=(2, 3))
        rep = run_convergence_study(self._call_plan(**kw))
        assert [r.k for r in rep.rows] == [2, 3]
        assert rep.rows[0].errors[0] is not None and rep.rows[0].orders == [None]

    def test_unknown_reference(self):
        with pytest.raises(ConfigurationError):
            run_convergence_study(self._call_plan(reference="oracle"))

    def test_pchip_study_runs(self):
        p = bergman_problem(payoff=Butterfly(100.0, 300.0))
        plan = StudyPlan(problem=p, M=2, interp="pchip", domain=BUTTERFLY_DOMAIN, N_rule="2^3*2^k",
                         J_rule="16*N", k_range=(1, 3), intervals=[(30.0, 70.0), (130.0, 170.0)],
                         reference="self-difference")
        rep = run_convergence_study(plan)
        assert all(r.note == "" for r in rep.rows)
        assert rep.rows[-1].errors[1] < rep.rows[0].errors[1]


def test_report_keeps_finest_surface():
    plan = StudyPlan(problem=bergman_problem(), M=2, domain=LOG_DOMAIN, k_range=(1, 2), exact=call_exact,
                     N_rule="2^3*2^k", J_rule="N^2/4")
    rep = run_convergence_study(plan)
    assert rep.finest.mesh.N == 32 and rep.finest.grid.intervals == (256,)
    assert sup_error(rep.finest, call_exact, (70.0, 90.0)) == rep.rows[-1].errors[0]
