"""Linearized Bregman iteration with kicking.

The plain step is the two-line scheme

    v <- v + A^H (f - A u)
    u <- delta * shrink(v, mu)

started from u = v = 0. When u has stopped moving, only v on the zero set
of u keeps growing, linearly, so the number of steps until the first entry
leaves [-mu, mu] is known in closed form. A kick takes all of those steps
at once; the kicked run visits a subsequence of the plain run's states.
"""

from __future__ import annotations

import enum
import json
import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Union

import numpy as np

from .linop import LinearOperator, spectral_norm_sq_estimate

logger = logging.getLogger(__name__)

DIVERGENCE_FACTOR = 1e6


class NoKickPossible(Exception):
    """No zero-set entry of v is moving, so a kick has nothing to jump over."""


class StopReason(str, enum.Enum):
    REL_RESIDUAL = "RelResidual"
    STD_RESIDUAL = "StdResidual"
    MAX_ITERS = "MaxIters"


@dataclass(frozen=True)
class RelResidual:
    """Stop once ||f - A u|| / ||f|| < tol."""

    tol: float = 1e-5

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("RelResidual tol must be positive")


@dataclass(frozen=True)
class StdResidual:
    """Stop once the population std of the residual entries drops below sigma."""

    sigma: float

    def __post_init__(self):
        if not self.sigma >= 0:
            raise ValueError("StdResidual sigma must be non-negative")


@dataclass(frozen=True)
class MaxItersOnly:
    pass


StoppingRule = Union[RelResidual, StdResidual, MaxItersOnly]


def stopping_from_dict(d: dict) -> StoppingRule:
    kind = d.get("variant", "rel_residual")
    if kind in ("rel_residual", "RelResidual"):
        return RelResidual(float(d.get("tol", 1e-5)))
    if kind in ("std_residual", "StdResidual"):
        return StdResidual(float(d["sigma"]))
    if kind in ("max_iters", "MaxItersOnly"):
        return MaxItersOnly()
    raise ValueError(f"unknown stopping variant {kind!r}")


def stopping_to_dict(rule: StoppingRule) -> dict:
    if isinstance(rule, RelResidual):
        return {"variant": "rel_residual", "tol": rule.tol}
    if isinstance(rule, StdResidual):
        return {"variant": "std_residual", "sigma": rule.sigma}
    return {"variant": "max_iters"}


@dataclass(frozen=True)
class SolveParams:
    """Solver settings.

    ``delta=None`` picks 1 for operators with orthonormal rows and
    ``1 / ||A A^T||`` (power-iteration estimate) otherwise. ``norm_sq`` lets
    the caller supply ``||A A^T||`` and skip the estimate.
    """

    mu: float = 1.0
    delta: float | None = None
    kick: bool = True
    kick_tol: float = 1e-10
    kick_patience: int = 2
    max_iters: int = 10_000
    stopping: StoppingRule = field(default_factory=RelResidual)
    norm_sq: float | None = None
    record_states: bool = False

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError("mu must be positive")
        if self.delta is not None and not self.delta > 0:
            raise ValueError("delta must be positive")
        if self.kick_tol < 0:
            raise ValueError("kick_tol must be non-negative")
        if self.kick_patience < 1:
            raise ValueError("kick_patience must be at least 1")
        if self.max_iters < 0:
            raise ValueError("max_iters must be non-negative")


@dataclass
class SolverState:
    u: np.ndarray
    v: np.ndarray
    residual: np.ndarray
    k: int = 0
    k_plain: int = 0
    stagnation_count: int = 0
    kicks: int = 0

    @classmethod
    def initial(cls, op: LinearOperator, f) -> "SolverState":
        f = np.asarray(f)
        return cls(u=np.zeros(op.n, dtype=op.dtype), v=np.zeros(op.n, dtype=op.dtype),
                   residual=f.astype(op.dtype, copy=True))

    def p(self, delta: float) -> np.ndarray:
        """Subgradient of mu*||u||_1 at u, recovered as v - u / delta."""
        return self.v - self.u / delta


class IterRecord(NamedTuple):
    k: int
    k_plain: int
    rel_residual: float
    residual_norm: float
    du_inf: float
    kicked: bool
    kick_steps: int


@dataclass
class SolveResult:
    u: np.ndarray
    iterations: int
    kicks: int
    stop_reason: StopReason
    history: list[IterRecord]
    wall_time: float
    delta: float
    mu: float
    residual_norm0: float
    states: list[tuple[np.ndarray, np.ndarray]] | None = None
    rel_err: float | None = None

    def to_dict(self, include_history: bool = True) -> dict:
        d = {
            "schema": 1,
            "iterations": self.iterations,
            "kicks": self.kicks,
            "stop_reason": self.stop_reason.value,
            "mu": self.mu,
            "delta": self.delta,
            "wall_time": self.wall_time,
        }
        if self.rel_err is not None:
            d["rel_err"] = self.rel_err
        if include_history:
            d["history"] = [{"k": h.k, "rel_residual": h.rel_residual, "du_inf": h.du_inf,
                             "kicked": h.kicked} for h in self.history]
        return d

    def to_json(self, include_history: bool = True, **kw) -> str:
        return json.dumps(self.to_dict(include_history), **kw)

    def write_history_csv(self, path) -> None:
        import csv

        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "k_plain", "rel_residual", "du_inf", "kicked", "kick_steps"])
            for h in self.history:
                w.writerow([h.k, h.k_plain, repr(h.rel_residual), repr(h.du_inf),
                            int(h.kicked), h.kick_steps])


def shrink(x, mu: float):
    """Soft thresholding: move x toward zero by mu, zeroing the band [-mu, mu]."""
    if mu < 0:
        raise ValueError("mu must be non-negative")
    x = np.asarray(x, dtype=np.float64)
    out = np.where(x > mu, x - mu, np.where(x < -mu, x + mu, 0.0))
    return out if out.ndim else float(out)


def shrink_complex(z, mu: float):
    """Shrink the modulus of z by mu, keeping its phase."""
    if mu < 0:
        raise ValueError("mu must be non-negative")
    z = np.asarray(z, dtype=np.complex128)
    mag = np.abs(z)
    scale = np.zeros_like(mag)
    keep = mag > mu
    scale[keep] = (mag[keep] - mu) / mag[keep]
    out = z * scale
    return out if out.ndim else complex(out)


def _shrink_any(v: np.ndarray, mu: float) -> np.ndarray:
    if np.iscomplexobj(v):
        return shrink_complex(v, mu)
    return shrink(v, mu)


def resolve_delta(op: LinearOperator, params: SolveParams) -> tuple[float, float]:
    """Return ``(delta, norm_sq)``; raise if delta * ||A A^T|| >= 2."""
    if params.norm_sq is not None:
        norm_sq = float(params.norm_sq)
    elif op.orthonormal_rows:
        norm_sq = 1.0
    else:
        norm_sq = spectral_norm_sq_estimate(op)
    delta = params.delta if params.delta is not None else 1.0 / norm_sq
    if not delta * norm_sq < 2.0:
        raise ValueError(f"delta={delta:g} violates delta*||AA^T|| < 2 "
                         f"(||AA^T|| ~ {norm_sq:g})")
    return float(delta), norm_sq


def should_stop(rule: StoppingRule, f, residual, k: int, max_iters: int) -> bool:
    """True when the rule (or the iteration cap) says to stop."""
    return _stop_reason(rule, f, residual, k, max_iters) is not None


def _stop_reason(rule, f, residual, k, max_iters, f_norm=None) -> StopReason | None:
    if isinstance(rule, RelResidual):
        if f_norm is None:
            f_norm = float(np.linalg.norm(f))
        if f_norm == 0.0:
            raise ValueError("RelResidual needs a nonzero right-hand side")
        if np.linalg.norm(residual) / f_norm < rule.tol:
            return StopReason.REL_RESIDUAL
    elif isinstance(rule, StdResidual):
        r = np.asarray(residual)
        std = math.sqrt(np.mean(np.abs(r - r.mean()) ** 2))
        if std < rule.sigma or not np.any(r):
            return StopReason.STD_RESIDUAL
    elif not np.any(residual):
        return StopReason.MAX_ITERS
    if k >= max_iters:
        return StopReason.MAX_ITERS
    return None


def _finite_or_raise(x: np.ndarray, k: int, what: str) -> None:
    if not np.all(np.isfinite(x)):
        raise FloatingPointError(f"non-finite {what} at iteration {k}")


def lb_step(state: SolverState, op: LinearOperator, f, params: SolveParams,
            delta: float | None = None) -> SolverState:
    """One plain iteration; returns a new state."""
    if delta is None:
        delta = params.delta if params.delta is not None else resolve_delta(op, params)[0]
    f = np.asarray(f)
    g = op.adjoint(state.residual)
    v = state.v + g
    u = delta * _shrink_any(v, params.mu)
    residual = f - op.apply(u)
    k = state.k + 1
    _finite_or_raise(v, k, "v")
    _finite_or_raise(residual, k, "residual")
    return replace(state, u=u, v=v, residual=residual, k=k, k_plain=state.k_plain + 1)


def _steps_to_boundary(v: np.ndarray, g: np.ndarray, mu: float) -> np.ndarray:
    """Steps until v + s*g first reaches the boundary of the mu-ball, per entry."""
    if np.iscomplexobj(v) or np.iscomplexobj(g):
        # smallest s >= 0 with |v + s g| = mu
        gg = np.abs(g) ** 2
        b = (np.conj(v) * g).real
        c = np.abs(v) ** 2 - mu * mu
        return (-b + np.sqrt(np.maximum(b * b - gg * c, 0.0))) / gg
    return (mu * np.sign(g) - v) / g


def compute_kick(state: SolverState, g, mu: float):
    """Length of the current stagnation and the zero/support index split.

    Returns ``(s, I0, I1)`` where ``I0`` indexes the zero entries of u.
    Raises :class:`NoKickPossible` if no zero entry has a moving v.
    """
    g = np.asarray(g)
    zero = state.u == 0
    moving = zero & (g != 0)
    if not np.any(moving):
        raise NoKickPossible("no zero-set entry of v is moving")
    s_i = _steps_to_boundary(state.v[moving], g[moving], mu)
    s = max(1, int(math.ceil(float(np.min(s_i)))))
    return s, np.flatnonzero(zero), np.flatnonzero(~zero)


def apply_kick(state: SolverState, g, s: int, I0, op: LinearOperator, f,
               params: SolveParams, delta: float) -> SolverState:
    """Advance v by s steps on the zero set at once; v on the support is frozen."""
    if s < 1:
        raise ValueError("kick length must be at least 1")
    v = state.v.copy()
    v[I0] += s * np.asarray(g)[I0]
    u = delta * _shrink_any(v, params.mu)
    residual = np.asarray(f) - op.apply(u)
    k = state.k + 1
    _finite_or_raise(v, k, "v")
    _finite_or_raise(residual, k, "residual")
    return replace(state, u=u, v=v, residual=residual, k=k, k_plain=state.k_plain + s,
                   kicks=state.kicks + 1, stagnation_count=0)


def _setup(op: LinearOperator, f, params: SolveParams):
    f = np.asarray(f)
    if f.shape != (op.m,):
        raise ValueError(f"f must have shape ({op.m},), got {f.shape}")
    if np.iscomplexobj(f) and not op.is_complex:
        raise TypeError("complex data with a real operator")
    delta, _ = resolve_delta(op, params)
    f_norm = float(np.linalg.norm(f))
    if isinstance(params.stopping, RelResidual) and f_norm == 0.0:
        raise ValueError("RelResidual needs a nonzero right-hand side")
    return f, delta, f_norm


def _run(op: LinearOperator, f, params: SolveParams, delta: float, f_norm: float):
    """Yield ``(state, record)`` per iteration, starting with ``(initial, None)``.

    Stops after the state on which the stopping rule (or the cap) fires; the
    stop reason is the generator's return value.
    """
    rule = params.stopping
    state = SolverState.initial(op, f)
    scale = f_norm if f_norm > 0 else 1.0
    yield state, None
    reason = _stop_reason(rule, f, state.residual, 0, params.max_iters, f_norm)
    while reason is None:
        prev_u = state.u
        kicked, steps = False, 1
        if params.kick and state.stagnation_count >= params.kick_patience:
            g = op.adjoint(state.residual)
            try:
                steps, I0, _ = compute_kick(state, g, params.mu)
            except NoKickPossible:
                state = lb_step(state, op, f, params, delta)
            else:
                state = apply_kick(state, g, steps, I0, op, f, params, delta)
                kicked = True
        else:
            state = lb_step(state, op, f, params, delta)

        du = state.u - prev_u
        du_inf = float(np.max(np.abs(du))) if du.size else 0.0
        ref = float(np.max(np.abs(prev_u))) if prev_u.size else 0.0
        if not kicked:
            if du_inf <= params.kick_tol * max(1.0, ref):
                state.stagnation_count += 1
            else:
                state.stagnation_count = 0

        rnorm = float(np.linalg.norm(state.residual))
        if rnorm > DIVERGENCE_FACTOR * scale:
            raise FloatingPointError(
                f"iteration diverged at k={state.k}: ||f - Au|| = {rnorm:.3g}")
        yield state, IterRecord(state.k, state.k_plain, rnorm / scale, rnorm, du_inf,
                                kicked, steps if kicked else 1)
        reason = _stop_reason(rule, f, state.residual, state.k, params.max_iters, f_norm)
    return reason


def iterate_states(op: LinearOperator, f, params: SolveParams):
    """Lazily yield the states ``solve`` would visit, initial state first.

    Memory stays flat however long the run is, which suits comparing
    trajectories state by state. Yielded states must not be mutated.
    """
    f, delta, f_norm = _setup(op, f, params)
    for state, _ in _run(op, f, params, delta, f_norm):
        yield state


def solve(op: LinearOperator, f, params: SolveParams) -> SolveResult:
    """Run the (kicked) linearized Bregman iteration from u = v = 0."""
    t0 = time.perf_counter()
    f, delta, f_norm = _setup(op, f, params)
    history: list[IterRecord] = []
    states = [] if params.record_states else None
    gen = _run(op, f, params, delta, f_norm)
    while True:
        try:
            state, rec = next(gen)
        except StopIteration as stop:
            reason = stop.value
            break
        if rec is not None:
            history.append(rec)
        if states is not None:
            states.append((state.u.copy(), state.v.copy()))

    wall = time.perf_counter() - t0
    logger.debug("solve stopped: %s after %d iterations (%d kicks)", reason.value,
                 state.k, state.kicks)
    return SolveResult(u=state.u, iterations=state.k, kicks=state.kicks, stop_reason=reason,
                       history=history, wall_time=wall, delta=delta, mu=params.mu,
                       residual_norm0=f_norm, states=states)
