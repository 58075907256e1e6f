import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.testing import assert_allclose
from scipy import optimize

from pld import metrics, qbounds, solver
from pld.errors import DomainError, InfeasibleError, SolverError
from pld.metrics import CodeAllocation, LinkConfig, Thresholds
from pld.solver import SolverConfig


@pytest.mark.parametrize("d, gamma, th", [(16, 5.0, 0.5), (16, 0.5, 0.1), (24, 0.16, 0.9), (16, 2.0, 1e-6)])
def test_threshold_length_matches_root_finder(d, gamma, th):
    n = solver.threshold_length(d, gamma, th)
    ref = optimize.brentq(lambda x: metrics.erasure_prob(x, d, gamma) - th, 1e-3, 1e5, xtol=1e-13)
    assert_allclose(n, ref, rtol=1e-10)


def test_threshold_length_edges():
    assert solver.threshold_length(16, 1.0, 1.0) == 0.0
    assert solver.threshold_length(16, 1.0, 0.0) == math.inf
    assert_allclose(solver.threshold_length(16, 5.0, 0.5), 16 / math.log2(6), rtol=1e-14)


def test_key_interval_upper_end_is_eve_capacity_length(surface_link):
    alloc = CodeAllocation(16, 16, 64, 20)
    lo, hi = solver.feasible_interval("key", surface_link, alloc, Thresholds(),
                                      SolverConfig(n_max=200))
    assert lo == 16.0
    assert_allclose(hi, 16 / metrics.shannon_capacity(surface_link.gamma_eve), rtol=1e-12)


def test_message_interval_lower_end(surface_link):
    alloc = CodeAllocation(16, 16, 64, 20)
    lo, hi = solver.feasible_interval("message", surface_link, alloc, Thresholds())
    bob = 16 / metrics.shannon_capacity(surface_link.gamma_bob)
    eve = 16 / metrics.shannon_capacity(surface_link.gamma_eve)
    assert bob < 16 < eve
    assert_allclose(lo, eve, rtol=1e-12)
    assert hi == 128.0


def test_interval_with_throughput_floor_is_feasible(path_link, t01):
    alloc = CodeAllocation(16, 16, 120, 26)
    lo, hi = solver.feasible_interval("key", path_link, alloc, t01)
    for n_k in (lo, hi, 0.5 * (lo + hi)):
        a = alloc.with_lengths(n_k=n_k)
        assert metrics.check_feasible(metrics.evaluate(path_link, a), a, t01).feasible


def test_interval_empty_raises(surface_link):
    with pytest.raises(InfeasibleError):
        solver.feasible_interval("key", surface_link, CodeAllocation(16, 16, 64, 20),
                                 Thresholds(throughput_min=10.0))
    with pytest.raises(DomainError):
        solver.feasible_interval("both", surface_link, CodeAllocation(16, 16, 64, 20), Thresholds())


@pytest.mark.parametrize("a, b, y, value", [(1.0, 1.0, 1.0, 1.0), (0.0, 0.3, 0.0, 0.0),
                                            (0.75, 0.25, 0.21650635094610965, 0.1875)])
def test_fp_closed_form_examples(a, b, y, value):
    y_star = solver.fp_y_closed_form(a, b)
    assert_allclose(y_star, y, rtol=1e-15, atol=1e-300)
    assert_allclose(solver.fp_transform(y_star, a, b), value, rtol=1e-15, atol=1e-300)


@given(st.floats(0, 1), st.floats(1e-6, 1), st.floats(-3, 3))
def test_fp_transform_maximized_at_closed_form(a, b, y):
    y_star = solver.fp_y_closed_form(a, b)
    best = solver.fp_transform(y_star, a, b)
    assert abs(best - a * b) <= 1e-12
    assert solver.fp_transform(y, a, b) <= best + 1e-12


def test_fp_rejects_bad_factors():
    with pytest.raises(DomainError):
        solver.fp_y_closed_form(0.5, 0.0)
    assert solver.fp_transform(1.0, 0.5, 0.0) == -math.inf


def test_golden_section_quadratic():
    x, v = solver.concave_max_1d(lambda x: -(x - 3) ** 2, 0, 10, tol=1e-8)
    assert abs(x - 3) <= 1e-7 and v <= 0


def test_golden_section_boundary():
    x, v = solver.concave_max_1d(lambda x: -abs(x - 2), 0, 1)
    assert x == 1 and v == -1


def test_golden_section_degenerate_and_errors():
    assert solver.concave_max_1d(lambda x: x, 2.0, 2.0) == (2.0, 2.0)
    with pytest.raises(SolverError):
        solver.concave_max_1d(lambda x: math.nan, 0, 1)
    with pytest.raises(DomainError):
        solver.concave_max_1d(lambda x: x, 1, 0)


def test_golden_section_terminates_on_tiny_interval():
    x, _ = solver.concave_max_1d(lambda x: -x, 1.0, 1.0 + 4e-16, tol=1e-6)
    assert x == 1.0


def _path_anchor(link, d_m=16):
    return qbounds.make_anchor(link, d_m, 16, 120.0, 26.0)


def test_fp_key_objective_matches_dense_scan(path_link, t01):
    anchor = _path_anchor(path_link)
    alloc = CodeAllocation(16, 16, 120.0, 26.0)
    lo, hi = solver.feasible_interval("key", path_link, alloc, t01)
    a, b = qbounds.surrogate_factors(120.0, 26.0, path_link, anchor)
    y = solver.fp_y_closed_form(a, b)

    def f(x):
        return solver.fp_transform(y, *qbounds.surrogate_factors(120.0, x, path_link, anchor))

    x, _ = solver.concave_max_1d(f, lo, hi, 1e-9)
    grid = np.arange(lo, hi, 1e-3)
    x_scan = grid[np.argmax([f(g) for g in grid])]
    assert abs(x - x_scan) <= 1e-2


@pytest.mark.parametrize("which", ["key", "message"])
def test_fp_inner_loop_properties(path_link, t01, which):
    anchor = _path_anchor(path_link)
    trace = solver.IterationTrace()
    if which == "key":
        x, value = solver.fp_solve_key(anchor, path_link, 120.0, 26.0, t01, trace=trace)
        a, b = qbounds.surrogate_factors(120.0, x, path_link, anchor)
        alloc = CodeAllocation(16, 16, 120.0, x)
    else:
        x, value = solver.fp_solve_msg(anchor, path_link, 26.0, 120.0, t01, trace=trace)
        a, b = qbounds.surrogate_factors(x, 26.0, path_link, anchor)
        alloc = CodeAllocation(16, 16, x, 26.0)
    vals = [r.surrogate for r in trace.layer("FP")]
    assert np.all(np.diff(vals) >= -1e-12)
    y = solver.fp_y_closed_form(a, b) if which == "key" else solver.fp_y_closed_form(b, a)
    args = (a, b) if which == "key" else (b, a)
    assert abs(solver.fp_transform(y, *args) - a * b) <= 1e-9
    assert abs(value - a * b) <= 1e-15
    # Dense scan of the surrogate over the same interval.
    lo, hi = solver.feasible_interval(which, path_link, alloc, t01)
    grid = np.linspace(lo, hi, 4001)
    if which == "key":
        scan = [np.prod(qbounds.surrogate_factors(120.0, g, path_link, anchor)) for g in grid]
    else:
        scan = [np.prod(qbounds.surrogate_factors(g, 26.0, path_link, anchor)) for g in grid]
    assert abs(x - grid[int(np.argmax(scan))]) <= 1.0
    assert value >= max(scan) - 1e-9


@pytest.mark.parametrize("d_m", [16, 24])
def test_solve_matches_oracle_on_search_path_setup(path_link, t01, d_m):
    res = solver.solve(path_link, d_m, 16, t01, oracle=True)
    ref = solver.grid_oracle(path_link, d_m, 16, t01)
    assert res.feasible and res.status == "optimal"
    assert (res.n_m_opt, res.n_k_opt) == ref.argmax
    assert res.profile.r_d == ref.r_d
    assert res.oracle_gap == 0.0


def test_solve_trace_properties(path_link, t01):
    res = solver.solve(path_link, 16, 16, t01)
    mm = [r.r_d for r in res.trace.layer("MM")]
    assert np.all(np.diff(mm) >= -1e-12)
    for rec in res.trace:
        alloc = CodeAllocation(16, 16, rec.n_m, rec.n_k)
        assert metrics.check_feasible(metrics.evaluate(path_link, alloc), alloc, t01).feasible
    best_seen = max(r.r_d for r in res.trace if float(r.n_m).is_integer() and float(r.n_k).is_integer())
    assert res.profile.r_d >= best_seen
    alloc = CodeAllocation(16, 16, res.n_m_opt, res.n_k_opt)
    assert metrics.check_feasible(res.profile, alloc, t01).feasible


def test_solve_deterministic(path_link, t01):
    a = solver.solve(path_link, 24, 16, t01)
    b = solver.solve(path_link, 24, 16, t01)
    assert a.trace.records == b.trace.records
    assert (a.n_m_opt, a.n_k_opt, a.profile) == (b.n_m_opt, b.n_k_opt, b.profile)


def test_solve_infeasible_throughput(surface_link):
    res = solver.solve(surface_link, 16, 16, Thresholds(throughput_min=10.0))
    assert not res.feasible and res.status == "infeasible" and res.profile is None


def test_solve_requires_key(surface_link, t01):
    with pytest.raises(DomainError):
        solver.solve(surface_link, 16, 0, t01)


@pytest.mark.parametrize("rounding", ["climb", "neighbors"])
@pytest.mark.parametrize("init", ["coarse_grid", "box_midpoint"])
def test_solve_config_variants(path_link, t01, rounding, init):
    res = solver.solve(path_link, 16, 16, t01, SolverConfig(rounding=rounding, init_strategy=init))
    if res.feasible:
        ref = solver.grid_oracle(path_link, 16, 16, t01)
        assert res.profile.r_d >= (1 - 1e-6) * ref.r_d
    else:
        assert init == "box_midpoint"


@pytest.mark.parametrize("kwargs", [{"tol_mm": 0.0}, {"max_bcd": 0}, {"n_min": 0},
                                    {"n_min": 50, "n_max": 40}, {"rounding": "up"},
                                    {"init_strategy": "random"}])
def test_config_validation(kwargs):
    with pytest.raises(DomainError):
        SolverConfig(**kwargs)


def test_oracle_singleton_box(surface_link):
    ref = solver.grid_oracle(surface_link, 16, 16, Thresholds(eps_eve_k_min=0.0), box=(40, 40))
    assert ref.argmax == (40, 40) and len(ref.surface) == 1


def test_oracle_surface(surface_link, t01):
    ref = solver.grid_oracle(surface_link, 16, 16, t01)
    assert len(ref.surface) == 113 ** 2 and ref.r_d > 0
    assert ref.argmax == (128, 16)
    assert_allclose(ref.r_d, 0.938684842, rtol=1e-8)
    for row in ref.surface:
        rec = dict(zip(solver.SURFACE_COLUMNS, row))
        alloc = CodeAllocation(16, 16, rec["n_m"], rec["n_k"])
        profile = metrics.evaluate(surface_link, alloc)
        assert rec["r_d"] == profile.r_d
        assert rec["feasible"] == metrics.check_feasible(profile, alloc, t01).feasible


def test_oracle_surface_curvature(surface_link, t01):
    """Concave along n_m lines; along n_k lines it bends up only where eps_eve_k does."""
    ref = solver.grid_oracle(surface_link, 16, 16, t01)
    rows = np.array([row[:9] for row in ref.surface]).reshape(113, 113, 9)
    feas = np.array([row[9] for row in ref.surface]).reshape(113, 113)
    r = rows[:, :, 7]
    second_m = r[:-2] - 2 * r[1:-1] + r[2:]
    ok_m = feas[:-2] & feas[1:-1] & feas[2:]
    assert np.all(second_m[ok_m] <= 1e-9)
    second_k = r[:, :-2] - 2 * r[:, 1:-1] + r[:, 2:]
    ok_k = feas[:, :-2] & feas[:, 1:-1] & feas[:, 2:]
    for i, j in zip(*np.nonzero(ok_k & (second_k > 1e-9))):
        n_k = j + 17
        assert metrics.erasure_prob_hess(n_k, 16, surface_link.gamma_eve) > 0


def test_oracle_empty(surface_link):
    ref = solver.grid_oracle(surface_link, 16, 16, Thresholds(throughput_min=10.0))
    assert ref.empty and ref.r_d == 0.0
    with pytest.raises(DomainError):
        solver.grid_oracle(surface_link, 16, 16, Thresholds(), box=(50, 40))


def test_baseline_scan(surface_link):
    th = Thresholds(throughput_min=0.05)
    res = solver.baseline_pls(surface_link, 16, th)
    assert res.feasible and res.n_k_opt == 0 and res.profile.r_d == 0
    relaxed = Thresholds(eps_eve_m_max=1.0, throughput_min=0.05)
    for n_m in range(16, 129):
        alloc = CodeAllocation(16, 0, n_m, 0)
        p = metrics.evaluate(surface_link, alloc)
        if metrics.check_feasible(p, alloc, relaxed).feasible:
            assert res.profile.eps_lf <= p.eps_lf


def test_baseline_leakage_rises_with_eve_gain():
    th = Thresholds(throughput_min=0.05)
    values = []
    for z_eve in range(-20, -1):
        res = solver.baseline_pls(LinkConfig.from_db(0, z_eve, 5), 16, th)
        if res.feasible:
            values.append(res.profile.eps_lf)
    assert len(values) >= 10
    assert np.all(np.diff(values) >= 0)
