"""Brute-force reference solutions for tiny dense problems.

Everything here enumerates sign patterns in {-1, 0, +1}^n and solves a small
equality-constrained least-norm problem per pattern with ``numpy.linalg``.
Nothing in this module calls the iterative solver, so its answers can be
used to certify the solver's limit points.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

MAX_ENUM_N = 12
FEAS_TOL = 1e-9
SIGN_TOL = 1e-12


class InfeasibleError(ValueError):
    """A u = f has no solution."""


@dataclass(frozen=True)
class SignPattern:
    pattern: tuple[int, ...]

    def __post_init__(self):
        if any(p not in (-1, 0, 1) for p in self.pattern):
            raise ValueError("sign pattern entries must be -1, 0 or +1")

    @classmethod
    def of(cls, u, tol: float = 0.0) -> "SignPattern":
        u = np.asarray(u)
        return cls(tuple(int(s) for s in np.where(np.abs(u) > tol, np.sign(u), 0)))

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(np.asarray(self.pattern))

    def contains(self, x) -> bool:
        """True when x lies in the set of vectors sharing this sign pattern."""
        return SignPattern.of(x) == self


@dataclass
class OracleResult:
    u: np.ndarray
    pattern: SignPattern
    objective: float
    n_candidates: int
    n_accepted: int
    multiplier: np.ndarray | None = field(default=None, repr=False)


def _check_problem(A, f):
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    f = np.atleast_1d(np.asarray(f, dtype=np.float64))
    m, n = A.shape
    if f.shape != (m,):
        raise ValueError(f"f must have shape ({m},), got {f.shape}")
    if n > MAX_ENUM_N:
        raise ValueError(f"enumeration limited to n <= {MAX_ENUM_N}, got n={n}")
    x, *_ = np.linalg.lstsq(A, f, rcond=None)
    if np.linalg.norm(A @ x - f) > FEAS_TOL * max(1.0, np.linalg.norm(f)):
        raise InfeasibleError("A u = f is inconsistent")
    return A, f


def _patterns(n: int):
    return itertools.product((-1, 0, 1), repeat=n)


def _min_norm_affine(M: np.ndarray, b: np.ndarray, scale: float):
    """Least-norm y with M y = b, or None if the system is inconsistent."""
    if M.shape[1] == 0:
        return np.zeros(0) if np.linalg.norm(b) <= FEAS_TOL * scale else None
    y, *_ = np.linalg.lstsq(M, b, rcond=1e-12)
    if np.linalg.norm(M @ y - b) > FEAS_TOL * scale:
        return None
    return y


def _dual_feasible(A, S, rhs_S, mu, scale) -> np.ndarray | None:
    """Find lambda with A_S^T lambda = rhs_S and |A_{S^c}^T lambda| <= mu."""
    m, n = A.shape
    off = np.setdiff1d(np.arange(n), S)
    AS = A[:, S]
    lam = _min_norm_affine(AS.T, rhs_S, scale) if S.size else np.zeros(m)
    if lam is None:
        return None
    if off.size == 0:
        return lam
    slack = np.abs(A[:, off].T @ lam)
    if np.all(slack <= mu * (1 + 1e-9)):
        return lam
    # lambda is only fixed modulo null(A_S^T); search that affine family
    if S.size:
        _, sv, vt = np.linalg.svd(AS.T)
        rank = int(np.sum(sv > 1e-12 * max(1.0, sv[0])))
        N = vt[rank:].T
    else:
        N = np.eye(m)
    if N.shape[1] == 0:
        return None
    B = A[:, off].T @ N
    c = A[:, off].T @ lam
    res = linprog(np.zeros(N.shape[1]),
                  A_ub=np.vstack([B, -B]),
                  b_ub=np.concatenate([mu * (1 + 1e-9) - c, mu * (1 + 1e-9) + c]),
                  bounds=[(None, None)] * N.shape[1], method="highs")
    if res.status != 0:
        return None
    return lam + N @ res.x


def oracle_regularized_bp(A, f, mu: float, delta: float) -> OracleResult:
    """Minimize mu*||u||_1 + ||u||^2 / (2 delta) subject to A u = f.

    For each sign pattern sigma with support S, the restricted problem
    ``min mu*sigma.u + ||u||^2/(2 delta)`` with ``A_S u_S = f`` and zeros off S
    has the closed-form solution ``u_S = y - delta*mu*sigma_S`` where ``y`` is
    the least-norm solution of ``A_S y = f + delta*mu*A_S sigma_S``. A pattern
    is accepted when that solution has exactly the signs sigma and a multiplier
    exists with ``|A_i^T lambda| <= mu`` off the support (the full KKT system).
    Primal-consistent candidates are also ranked by objective; the two routes
    must agree.
    """
    if mu <= 0 or delta <= 0:
        raise ValueError("mu and delta must be positive")
    A, f = _check_problem(A, f)
    m, n = A.shape
    scale = max(1.0, float(np.linalg.norm(f)))
    best = None
    n_cand = 0
    accepted = []
    for pat in _patterns(n):
        sigma = np.asarray(pat, dtype=np.float64)
        S = np.flatnonzero(sigma)
        AS = A[:, S]
        y = _min_norm_affine(AS, f + delta * mu * (AS @ sigma[S]), scale)
        if y is None:
            continue
        uS = y - delta * mu * sigma[S]
        if np.any(uS * sigma[S] <= SIGN_TOL * scale):
            continue
        n_cand += 1
        u = np.zeros(n)
        u[S] = uS
        obj = mu * np.abs(u).sum() + u @ u / (2 * delta)
        if best is None or obj < best[0]:
            best = (obj, u, pat)
        # stationarity on S: u_S / delta + mu sigma_S = A_S^T lambda
        lam = _dual_feasible(A, S, uS / delta + mu * sigma[S], mu, scale)
        if lam is not None:
            accepted.append((obj, u, pat, lam))
    if best is None:
        raise InfeasibleError("no sign pattern produced a feasible point")
    obj, u, pat = best
    lam = None
    for a_obj, a_u, a_pat, a_lam in accepted:
        if a_pat == pat:
            lam = a_lam
    return OracleResult(u=u, pattern=SignPattern(tuple(pat)), objective=float(obj),
                        n_candidates=n_cand, n_accepted=len(accepted), multiplier=lam)


def kkt_residual(A, f, u, mu: float, delta: float, lam) -> float:
    """Largest violation of the KKT conditions of the regularized problem at (u, lambda)."""
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    u = np.asarray(u, dtype=np.float64)
    g = A.T @ np.asarray(lam) - u / delta
    on = u != 0
    viol = [np.linalg.norm(A @ u - f, np.inf)]
    if np.any(on):
        viol.append(np.max(np.abs(g[on] - mu * np.sign(u[on]))))
    if np.any(~on):
        viol.append(max(0.0, float(np.max(np.abs(g[~on])) - mu)))
    return float(max(viol))


def l1_min_value(A, f) -> float:
    """Minimal ||u||_1 over A u = f, by enumerating basic solutions."""
    A, f = _check_problem(A, f)
    m, n = A.shape
    scale = max(1.0, float(np.linalg.norm(f)))
    if np.linalg.norm(f) <= FEAS_TOL:
        return 0.0
    best = np.inf
    for size in range(1, min(m, n) + 1):
        for S in itertools.combinations(range(n), size):
            AS = A[:, S]
            if np.linalg.matrix_rank(AS, tol=1e-12) < size:
                continue
            x, *_ = np.linalg.lstsq(AS, f, rcond=None)
            if np.linalg.norm(AS @ x - f) <= FEAS_TOL * scale:
                best = min(best, float(np.abs(x).sum()))
    if not np.isfinite(best):
        raise InfeasibleError("no basic feasible solution")
    return best


def oracle_bp_min_l2(A, f) -> np.ndarray:
    """Least-l2-norm point among the l1 minimizers of A u = f.

    All l1 minimizers share one weak sign pattern, so for each sigma the
    least-norm solution of ``A_S u_S = f, sigma_S . u_S = l1*`` is computed;
    sign-consistent ones lie on the optimal face and the shortest one wins.
    """
    A, f = _check_problem(A, f)
    m, n = A.shape
    l1 = l1_min_value(A, f)
    if l1 == 0.0:
        return np.zeros(n)
    scale = max(1.0, float(np.linalg.norm(f)), l1)
    best = None
    for pat in _patterns(n):
        sigma = np.asarray(pat, dtype=np.float64)
        S = np.flatnonzero(sigma)
        if S.size == 0:
            continue
        M = np.vstack([A[:, S], sigma[S]])
        uS = _min_norm_affine(M, np.append(f, l1), scale)
        if uS is None or np.any(uS * sigma[S] <= SIGN_TOL * scale):
            continue
        nrm = float(uS @ uS)
        if best is None or nrm < best[0]:
            u = np.zeros(n)
            u[S] = uS
            best = (nrm, u)
    assert best is not None, "an l1 minimizer always has a consistent sign pattern"
    return best[1]


@dataclass
class MuLimitReport:
    mus: list[float]
    u1: np.ndarray
    norms: list[float]
    distances: list[float]
    norm_bound_ok: bool
    monotone_ok: bool
    final_distance: float

    @property
    def passed(self) -> bool:
        return self.norm_bound_ok and self.monotone_ok


def check_mu_limit(A, f, mu_sequence, delta: float = 1.0, slack: float = 1e-9) -> MuLimitReport:
    """Audit ||u*_mu|| <= ||u_1|| and the approach of u*_mu to u_1 as mu grows.

    ``u_1`` is the least-l2 basis pursuit solution; ``u*_mu`` the regularized
    minimizer. Distances must be non-increasing along the increasing sequence
    (up to ``slack``).
    """
    mus = [float(x) for x in mu_sequence]
    if any(b <= a for a, b in zip(mus, mus[1:])):
        raise ValueError("mu_sequence must be strictly increasing")
    u1 = oracle_bp_min_l2(A, f)
    n1 = float(np.linalg.norm(u1))
    norms, dists = [], []
    for mu in mus:
        u = oracle_regularized_bp(A, f, mu, delta).u
        norms.append(float(np.linalg.norm(u)))
        dists.append(float(np.linalg.norm(u - u1)))
    tol = slack * max(1.0, n1)
    norm_ok = all(nm <= n1 + tol for nm in norms)
    mono_ok = all(b <= a + tol for a, b in zip(dists, dists[1:]))
    return MuLimitReport(mus, u1, norms, dists, norm_ok, mono_ok, dists[-1])


def _rel_close(a: np.ndarray, b: np.ndarray, rel_tol: float) -> bool:
    scale = max(np.linalg.norm(a), np.linalg.norm(b))
    return np.linalg.norm(a - b) <= rel_tol * scale


def subsequence_check(kicked, unkicked, rel_tol: float = 1e-9) -> bool:
    """True iff every kicked (u, v) state matches some unkicked state, in order.

    Matching indices must be non-decreasing; each match needs both u and v
    within ``rel_tol`` relative distance. Either argument may be a lazy
    iterable; both are consumed at most once.
    """
    unkicked = iter(unkicked)
    current = None
    for u, v in kicked:
        while True:
            if current is not None:
                uu, vv = current
                if _rel_close(u, uu, rel_tol) and _rel_close(v, vv, rel_tol):
                    break
            current = next(unkicked, None)
            if current is None:
                return False
    return True


def monotonicity_violations(result, atol: float = 0.0) -> list[int]:
    """Iterations where u moved but ||f - A u|| did not decrease.

    With ``atol = 0`` any non-decrease counts. A positive ``atol`` only flags
    growth larger than ``atol``; forming f - A u in floating point carries an
    absolute error of a few ulps of ||f||, so ties and last-bit increases
    below that scale are not evidence either way.
    """
    if atol < 0:
        raise ValueError("atol must be non-negative")
    bad = []
    prev = result.residual_norm0
    for rec in result.history:
        cur = rec.residual_norm
        worse = cur >= prev if atol == 0 else cur - prev > atol
        if rec.du_inf > 0 and worse:
            bad.append(rec.k)
        prev = cur
    return bad


def roundoff_floor(f, factor: float = 64.0) -> float:
    """``factor`` ulps of ||f||: the resolution at which residual norms are comparable."""
    return factor * float(np.finfo(np.float64).eps) * float(np.linalg.norm(f))
