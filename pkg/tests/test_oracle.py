import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import linprog

from linbreg.linop import make_dense
from linbreg.oracle import (MAX_ENUM_N, InfeasibleError, SignPattern, check_mu_limit,
                            kkt_residual, l1_min_value, monotonicity_violations,
                            oracle_bp_min_l2, oracle_regularized_bp, roundoff_floor,
                            subsequence_check)
from linbreg.solver import IterRecord, MaxItersOnly, RelResidual, SolveParams, solve


def test_one_by_one_closed_form():
    # min mu|u| + u^2/(2 delta) with a u = f forces u = f/a
    res = oracle_regularized_bp([[2.0]], [3.0], 1.0, 1.0)
    assert res.u.tolist() == [1.5]
    assert res.objective == pytest.approx(1.5 + 1.5**2 / 2)


def test_two_unknowns_hand_solution():
    # u1 + u2 = 1: by symmetry u = (1/2, 1/2) whatever mu and delta
    res = oracle_regularized_bp([[1.0, 1.0]], [1.0], 3.0, 0.5)
    np.testing.assert_allclose(res.u, [0.5, 0.5])
    assert res.pattern == SignPattern((1, 1))


def test_weighted_row_hand_solution():
    # u1 + 2 u2 = 2, mu = 0.1, delta = 1. Stationarity u + mu = lambda (1, 2) gives
    # u2 = 2 u1 + 0.1, so u = (0.36, 0.82) and lambda = 0.46
    res = oracle_regularized_bp([[1.0, 2.0]], [2.0], 0.1, 1.0)
    np.testing.assert_allclose(res.u, [0.36, 0.82], atol=1e-12)
    np.testing.assert_allclose(res.multiplier, [0.46], atol=1e-12)
    # with mu = 1 the first entry is pinned to zero and u = (0, 1)
    res = oracle_regularized_bp([[1.0, 2.0]], [2.0], 1.0, 1.0)
    np.testing.assert_allclose(res.u, [0.0, 1.0], atol=1e-12)


def _cvx_reference(A, f, mu, delta):
    from scipy.optimize import minimize
    m, n = A.shape
    cons = {"type": "eq", "fun": lambda x: A @ (x[:n] - x[n:]) - f}
    obj = lambda x: mu * x.sum() + ((x[:n] - x[n:]) ** 2).sum() / (2 * delta)
    r = minimize(obj, np.ones(2 * n) * 0.1, constraints=[cons], bounds=[(0, None)] * (2 * n),
                 method="SLSQP", options={"ftol": 1e-14, "maxiter": 2000})
    return r.x[:n] - r.x[n:]


@given(st.integers(0, 2**32 - 1), st.sampled_from([0.3, 1.0, 10.0]))
def test_oracle_satisfies_kkt_and_matches_qp(seed, mu):
    rng = np.random.default_rng(seed)
    m = int(rng.integers(1, 4))
    n = int(rng.integers(m + 1, 6))
    A = rng.standard_normal((m, n))
    f = rng.standard_normal(m)
    res = oracle_regularized_bp(A, f, mu, 0.7)
    assert res.multiplier is not None
    assert kkt_residual(A, f, res.u, mu, 0.7, res.multiplier) < 1e-8
    ref = _cvx_reference(A, f, mu, 0.7)
    assert np.linalg.norm(res.u - ref) <= 1e-4 * max(1.0, np.linalg.norm(res.u))


def test_oracle_errors():
    with pytest.raises(ValueError):
        oracle_regularized_bp([[1.0]], [1.0], 0.0, 1.0)
    with pytest.raises(InfeasibleError):
        oracle_regularized_bp([[1.0, 1.0], [1.0, 1.0]], [1.0, 2.0], 1.0, 1.0)
    with pytest.raises(ValueError):
        oracle_regularized_bp(np.ones((1, MAX_ENUM_N + 1)), [1.0], 1.0, 1.0)
    with pytest.raises(ValueError):
        oracle_regularized_bp([[1.0]], [1.0, 2.0], 1.0, 1.0)


def test_sign_pattern():
    p = SignPattern.of([0.5, 0.0, -2.0])
    assert p.pattern == (1, 0, -1)
    assert p.support.tolist() == [0, 2]
    assert p.contains([3.0, 0.0, -0.1]) and not p.contains([3.0, 0.1, -0.1])
    with pytest.raises(ValueError):
        SignPattern((2,))


def test_kkt_residual_detects_violation():
    A = np.array([[1.0, 2.0]])
    f = np.array([2.0])
    assert kkt_residual(A, f, np.array([0.36, 0.82]), 0.1, 1.0, np.array([0.46])) < 1e-12
    assert kkt_residual(A, f, np.array([0.0, 1.0]), 1.0, 1.0, np.array([1.0])) < 1e-12
    assert kkt_residual(A, f, np.array([0.4, 0.8]), 1.0, 1.0, np.array([1.4])) > 0.1


@given(st.integers(0, 2**32 - 1))
def test_l1_min_value_matches_linprog(seed):
    rng = np.random.default_rng(seed)
    m = int(rng.integers(1, 4))
    n = int(rng.integers(m + 1, 7))
    A = rng.standard_normal((m, n))
    f = rng.standard_normal(m)
    lp = linprog(np.ones(2 * n), A_eq=np.hstack([A, -A]), b_eq=f, bounds=(0, None),
                 method="highs")
    assert l1_min_value(A, f) == pytest.approx(lp.fun, rel=1e-8)


def test_bp_min_l2_picks_shortest_minimizer():
    # u1 + u2 = 1: every point of the segment has l1 norm 1; the shortest is the midpoint
    np.testing.assert_allclose(oracle_bp_min_l2([[1.0, 1.0]], [1.0]), [0.5, 0.5])
    # u1 + 2 u2 = 2: the unique l1 minimizer is (0, 1)
    np.testing.assert_allclose(oracle_bp_min_l2([[1.0, 2.0]], [2.0]), [0.0, 1.0], atol=1e-12)
    assert not np.any(oracle_bp_min_l2([[1.0, 2.0]], [0.0]))


def test_mu_limit_report():
    A = np.array([[1.0, 2.0, -1.0], [0.5, 0.0, 1.0]])
    f = np.array([1.0, 0.3])
    rep = check_mu_limit(A, f, [0.1, 1.0, 10.0, 100.0, 1e4])
    assert rep.passed
    np.testing.assert_allclose(rep.u1, [0.6, 0.2, 0.0], atol=1e-12)
    # the limit is reached at finite mu; what remains is rounding
    assert rep.final_distance < 1e-10
    assert all(b <= a + 1e-10 for a, b in zip(rep.distances, rep.distances[1:]))
    with pytest.raises(ValueError):
        check_mu_limit(A, f, [1.0, 1.0])


def test_subsequence_check_basics():
    a = [(np.array([1.0]), np.array([1.0])), (np.array([2.0]), np.array([2.0])),
         (np.array([3.0]), np.array([3.0]))]
    assert subsequence_check(a, a)
    assert subsequence_check([a[0], a[2]], a)
    assert subsequence_check([a[1], a[1]], a)
    assert not subsequence_check([a[2], a[0]], a)
    assert not subsequence_check([(np.array([2.5]), np.array([2.5]))], a)
    assert subsequence_check(iter([a[2]]), iter(a))


def test_subsequence_one_kick_trivial():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((2, 5))
    f = A @ np.array([0, 1.0, 0, 0, 0])
    p = SolveParams(mu=5.0, kick=False, max_iters=200, stopping=MaxItersOnly(),
                    record_states=True)
    plain = solve(make_dense(A), f, p)
    assert subsequence_check(plain.states, plain.states, 1e-9)


def _result(norms, du, r0=1.0):
    class R:
        residual_norm0 = r0
        history = [IterRecord(k + 1, k + 1, r, r, d, False, 1)
                   for k, (r, d) in enumerate(zip(norms, du))]
    return R()


def test_monotonicity_violations():
    r = _result([0.9, 0.9, 0.95, 0.95, 0.5], [1.0, 1.0, 1.0, 0.0, 1.0])
    assert monotonicity_violations(r) == [2, 3]
    assert monotonicity_violations(r, atol=0.06) == []
    with pytest.raises(ValueError):
        monotonicity_violations(r, atol=-1.0)
    assert roundoff_floor(np.array([3.0, 4.0]), 1.0) == pytest.approx(5 * 2.0**-52)


def test_plain_iteration_is_monotone_on_random_problem():
    rng = np.random.default_rng(3)
    A = rng.standard_normal((4, 9))
    f = A @ np.where(rng.random(9) < 0.3, rng.standard_normal(9), 0.0)
    res = solve(make_dense(A), f, SolveParams(mu=2.0, kick=False, max_iters=2000,
                                              stopping=RelResidual(1e-9)))
    assert monotonicity_violations(res, roundoff_floor(f)) == []
