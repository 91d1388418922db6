"""Seeded multi-trial experiments: noise-free efficiency, noisy recovery,
high dynamic range and sinusoids buried in noise.

Every trial seed is derived from ``(seed0, config index, trial index)``, so
results do not depend on the order or process in which trials run.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from numbers import Real
from pathlib import Path

import numpy as np
from scipy import fft

from .linop import make_dense
from .oracle import (check_mu_limit, monotonicity_violations, oracle_regularized_bp,
                     roundoff_floor, subsequence_check)
from .problems import (add_noise, fold_frequencies, gen_instance, gen_sinusoid_instance,
                       postselect_top_spikes, preset_name, sigma_for_snr, table_presets)
from .solver import (MaxItersOnly, RelResidual, SolveParams, StdResidual, iterate_states,
                     solve)

logger = logging.getLogger(__name__)

SCHEMA = 1
TRIAL_METRICS = ("iterations", "rel_err", "wall_time")
TABLE2_MU = 10.0
TABLE2_MAX_ITERS = 1000
DYNRANGE_M = 1327
SINUSOID_MU = 10.0
SINUSOID_SPIKES = 4
# residual growth below this many ulps of ||f|| is rounding, not a violation
MONOTONE_ULPS = 64.0


def trial_seed(seed0: int, config_index: int, trial: int, stream: int = 0) -> int:
    """64-bit seed for one trial, independent of scheduling."""
    ss = np.random.SeedSequence([seed0, config_index, trial, stream])
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass
class TrialRecord:
    config: str
    seed: int
    iterations: int
    rel_err: float
    wall_time: float
    stop_reason: str
    kicks: int
    snr_db: float | None = None
    k_plain: int | None = None
    monotonicity_violations: int = 0

    def __post_init__(self):
        if self.rel_err < 0:
            raise ValueError("relative error must be non-negative")


@dataclass(frozen=True)
class MetricStats:
    mean: float
    std: float
    max: float


@dataclass
class AggregateStats:
    count: int
    metrics: dict[str, MetricStats]
    config: str | None = None
    extra: dict = field(default_factory=dict)

    def __getitem__(self, metric: str) -> MetricStats:
        return self.metrics[metric]

    def to_dict(self) -> dict:
        d = {"count": self.count, "config": self.config,
             "metrics": {k: asdict(v) for k, v in self.metrics.items()}}
        d.update(self.extra)
        return d


def _stats(values) -> MetricStats:
    x = np.sort(np.asarray(values, dtype=np.float64))  # sorted: order-invariant sums
    std = float(np.std(x, ddof=1)) if x.size > 1 else 0.0
    return MetricStats(float(np.mean(x)), std, float(x[-1]))


def aggregate(records, metrics=TRIAL_METRICS) -> AggregateStats:
    """Mean, sample std (0 for one record) and max per metric.

    ``records`` may be TrialRecords or plain numbers (reported as ``value``).
    """
    records = list(records)
    if not records:
        raise ValueError("cannot aggregate zero records")
    if all(isinstance(r, Real) for r in records):
        return AggregateStats(len(records), {"value": _stats(records)})
    out = {m: _stats([getattr(r, m) for r in records]) for m in metrics}
    snrs = [r.snr_db for r in records if r.snr_db is not None and math.isfinite(r.snr_db)]
    if snrs:
        out["snr_db"] = _stats(snrs)
    configs = {r.config for r in records}
    return AggregateStats(len(records), out, configs.pop() if len(configs) == 1 else None,
                          {"max_iters_hits": sum(r.stop_reason == "MaxIters" for r in records)})


def _map(fn, tasks, workers: int):
    if workers <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, tasks))


def _violations(res, f) -> int:
    return len(monotonicity_violations(res, roundoff_floor(f, MONOTONE_ULPS)))


def _record(name, seed, inst, res, snr=None) -> TrialRecord:
    return TrialRecord(config=name, seed=seed, iterations=res.iterations,
                       rel_err=inst.rel_err(res.u), wall_time=res.wall_time,
                       stop_reason=res.stop_reason.value, kicks=res.kicks, snr_db=snr,
                       k_plain=res.history[-1].k_plain if res.history else 0,
                       monotonicity_violations=_violations(res, inst.f_obs))


def _table1_trial(task) -> TrialRecord:
    preset, seed, params = task
    kind, n, m, kappa = preset
    inst = gen_instance(kind, n, m, kappa, "uniform", seed)
    return _record(preset_name(preset), seed, inst, solve(inst.op, inst.f_obs, params))


def run_table1(presets=None, trials: int = 10, mu: float = 1.0, tol: float = 1e-5,
               seed0: int = 0, *, kick: bool = True, kick_tol: float | None = None,
               max_iters: int = 10_000, workers: int = 1):
    """Noise-free efficiency runs; returns ``(records, {config: AggregateStats})``."""
    presets = table_presets() if presets is None else list(presets)
    kw = {} if kick_tol is None else {"kick_tol": kick_tol}
    params = SolveParams(mu=mu, kick=kick, stopping=RelResidual(tol), max_iters=max_iters, **kw)
    tasks = [(tuple(p), trial_seed(seed0, ci, t), params)
             for ci, p in enumerate(presets) for t in range(trials)]
    records = _map(_table1_trial, tasks, workers)
    return records, _group(records)


def _table2_trial(task) -> TrialRecord:
    preset, seed, noise_seed, target_db, params = task
    kind, n, m, kappa = preset
    inst = gen_instance(kind, n, m, kappa, "uniform", seed)
    sigma = sigma_for_snr(inst.u_bar, m, target_db)
    inst = add_noise(inst, sigma, noise_seed)
    p = SolveParams(**{**params, "stopping": StdResidual(sigma)})
    res = solve(inst.op, inst.f_obs, p)
    return _record(preset_name(preset), seed, inst, res, inst.snr_db)


def run_table2(presets=None, trials: int = 10, target_snr_db: float = 25.0, seed0: int = 0, *,
               mu: float = TABLE2_MU, kick: bool = True, kick_tol: float | None = None,
               max_iters: int = TABLE2_MAX_ITERS, workers: int = 1):
    """Noisy recovery with std(f - A u) < sigma; sigma is backed out per instance
    from ``target_snr_db``. Returns ``(records, {config: AggregateStats})``."""
    presets = table_presets() if presets is None else list(presets)
    params = {"mu": mu, "kick": kick, "max_iters": max_iters}
    if kick_tol is not None:
        params["kick_tol"] = kick_tol
    tasks = [(tuple(p), trial_seed(seed0, ci, t), trial_seed(seed0, ci, t, 1),
              target_snr_db, params)
             for ci, p in enumerate(presets) for t in range(trials)]
    records = _map(_table2_trial, tasks, workers)
    return records, _group(records)


def _group(records) -> dict[str, AggregateStats]:
    names = list(dict.fromkeys(r.config for r in records))
    return {name: aggregate([r for r in records if r.config == name]) for name in names}


@dataclass
class DynrangeResult:
    record: TrialRecord
    u: np.ndarray = field(repr=False)
    u_bar: np.ndarray = field(repr=False)
    residual_history: list[float]
    error_history: list[float] | None

    def recovered_above(self, magnitude: float, rel_tol: float = 1e-2) -> bool:
        """True if every true entry with |u_bar_i| >= magnitude is within rel_tol."""
        big = np.abs(self.u_bar) >= magnitude
        if not np.any(big):
            return True
        err = np.abs(self.u[big] - self.u_bar[big]) / np.abs(self.u_bar[big])
        return bool(np.all(err <= rel_tol))


def run_dynrange(n: int = 4000, kappa: int = 80, mu: float = 1e10, tol: float = 1e-11,
                 sigma: float | None = None, seed: int = 0, *, m: int = DYNRANGE_M,
                 kick_tol: float | None = None, max_iters: int = 5000,
                 track_error: bool = True) -> DynrangeResult:
    """Partial-DCT recovery of a signal whose magnitudes span ten decades.

    Noise-free runs stop at relative residual ``tol``; with ``sigma`` the
    std rule is used instead. The error history needs one extra pass over the
    recorded iterates, so it can be switched off.
    """
    inst = gen_instance("dct", n, m, kappa, "dynrange", trial_seed(seed, 0, 0))
    if sigma:
        inst = add_noise(inst, sigma, trial_seed(seed, 0, 0, 1))
    stopping = StdResidual(sigma) if sigma else RelResidual(tol)
    kw = {} if kick_tol is None else {"kick_tol": kick_tol}
    res = solve(inst.op, inst.f_obs, SolveParams(mu=mu, stopping=stopping, max_iters=max_iters,
                                                 record_states=track_error, **kw))
    errs = None
    if track_error:
        nb = np.linalg.norm(inst.u_bar)
        errs = [float(np.linalg.norm(u - inst.u_bar) / nb) for u, _ in res.states[1:]]
    rec = _record(f"dynrange-{n}-{m}", seed, inst, res, inst.snr_db if sigma else None)
    return DynrangeResult(rec, res.u, inst.u_bar, [h.rel_residual for h in res.history], errs)


@dataclass
class SinusoidTrial:
    seed: int
    fraction: float
    sigma: float
    snr_db: float
    true_freqs: list[int]
    found_freqs: list[int]
    match: bool
    magnitude_err: float
    spectrum_err: float
    physical_err: float
    iterations: int
    stop_reason: str
    monotonicity_violations: int


def _sinusoid_trial(task) -> SinusoidTrial:
    n, fraction, sigma, target_db, seed, mu, max_iters = task
    if target_db is not None:
        clean = gen_sinusoid_instance(n, fraction, 0.0, seed)
        sigma = sigma_for_snr(clean.u_bar_time, n, target_db)
    inst = gen_sinusoid_instance(n, fraction, sigma, seed)
    stopping = StdResidual(sigma) if sigma > 0 else RelResidual(1e-10)
    res = solve(inst.op, inst.f_obs, SolveParams(mu=mu, stopping=stopping, max_iters=max_iters))
    x = postselect_top_spikes(res.u, SINUSOID_SPIKES)
    spec = inst.spectrum
    true = inst.true_frequencies()
    found = fold_frequencies(np.flatnonzero(x), n)
    on = np.abs(spec) > 1e-9 * np.abs(spec).max()
    mag_err = float(np.max(np.abs(np.abs(x[on]) - np.abs(spec[on])) / np.abs(spec[on])))
    u_hat = fft.ifft(x, norm="ortho")
    u_bar = inst.u_bar_time
    return SinusoidTrial(seed=seed, fraction=fraction, sigma=float(sigma), snr_db=inst.snr_db,
                         true_freqs=sorted(true), found_freqs=sorted(found), match=found == true,
                         magnitude_err=mag_err,
                         spectrum_err=float(np.linalg.norm(x - spec) / np.linalg.norm(spec)),
                         physical_err=float(np.linalg.norm(u_hat - u_bar) / np.linalg.norm(u_bar)),
                         iterations=res.iterations, stop_reason=res.stop_reason.value,
                         monotonicity_violations=_violations(res, inst.f_obs))


@dataclass
class SinusoidReport:
    trials: list[SinusoidTrial]

    @property
    def match_rate(self) -> float:
        return sum(t.match for t in self.trials) / len(self.trials)

    @property
    def matches(self) -> int:
        return sum(t.match for t in self.trials)

    def to_dict(self) -> dict:
        return {"match_rate": self.match_rate, "matches": self.matches,
                "trials": [asdict(t) for t in self.trials]}


def run_sinusoid(n: int = 2000, fraction: float = 0.4, sigma: float | None = None,
                 trials: int = 10, seed0: int = 0, *, target_snr_db: float | None = None,
                 mu: float = SINUSOID_MU, max_iters: int = 1000,
                 workers: int = 1) -> SinusoidReport:
    """Frequency recovery from ``fraction`` of the samples of a noisy two-tone signal.

    Give either ``sigma`` or ``target_snr_db`` (sigma then follows from each
    clean signal's norm).
    """
    if (sigma is None) == (target_snr_db is None):
        raise ValueError("give exactly one of sigma and target_snr_db")
    tasks = [(n, fraction, sigma, target_snr_db, trial_seed(seed0, 0, t), mu, max_iters)
             for t in range(trials)]
    return SinusoidReport(_map(_sinusoid_trial, tasks, workers))


def small_dense_instance(seed: int, max_n: int = 8, max_m: int = 5):
    """Random consistent (A, f) with Gaussian A, m <= n, and a sparse source."""
    rng = np.random.default_rng(seed)
    m = int(rng.integers(1, max_m + 1))
    n = int(rng.integers(m + 1, max_n + 1)) if m < max_n else max_n
    A = rng.standard_normal((m, n))
    u = np.zeros(n)
    support = rng.choice(n, size=int(rng.integers(1, m + 1)), replace=False)
    u[support] = rng.uniform(-1.0, 1.0, support.size)
    return A, A @ u


@dataclass
class OracleCheck:
    seed: int
    m: int
    n: int
    mu: float
    delta: float
    deviation: float
    iterations: int
    stop_reason: str
    monotonicity_violations: int


def verify_oracle(instances: int = 50, seed0: int = 0, mus=(1.0, 10.0), tol: float = 1e-10,
                  max_iters: int = 100_000,
                  kick_tol: float | None = None) -> list[OracleCheck]:
    """Solver limit versus the enumeration oracle on tiny dense problems.

    The oracle is evaluated at the solver's resolved delta, so the comparison
    isolates the iteration from the spectral-norm estimate.
    """
    kw = {} if kick_tol is None else {"kick_tol": kick_tol}
    out = []
    for i in range(instances):
        seed = trial_seed(seed0, 0, i)
        A, f = small_dense_instance(seed)
        mu = float(mus[i % len(mus)])
        res = solve(make_dense(A), f, SolveParams(mu=mu, stopping=RelResidual(tol),
                                                  max_iters=max_iters, **kw))
        ref = oracle_regularized_bp(A, f, mu, res.delta).u
        dev = float(np.linalg.norm(res.u - ref) / np.linalg.norm(ref))
        out.append(OracleCheck(seed, A.shape[0], A.shape[1], mu, res.delta, dev, res.iterations,
                               res.stop_reason.value,
                               _violations(res, f)))
    return out


@dataclass
class SubsequenceCheck:
    seed: int
    subsequence: bool
    iterations_kicked: int
    iterations_plain: int
    plain_stop_reason: str
    kicks: int

    @property
    def ratio(self) -> float:
        return self.iterations_kicked / self.iterations_plain


def verify_subsequence(instances: int = 10, seed0: int = 0, *, n: int = 200, m: int = 50,
                       kappa: int = 10, mu: float = 50.0, tol: float = 1e-8,
                       rel_tol: float = 1e-9, kick_tol: float | None = None,
                       max_iters: int = 100_000) -> list[SubsequenceCheck]:
    """Kicked against plain runs on partial-DCT problems prone to stagnation.

    States are streamed, so the plain run's length costs time, not memory.
    Both runs are capped at ``max_iters``; a kicked state beyond the plain
    cap counts as unmatched.
    """
    kw = {} if kick_tol is None else {"kick_tol": kick_tol}
    out = []
    for i in range(instances):
        seed = trial_seed(seed0, 0, i)
        inst = gen_instance("dct", n, m, kappa, "uniform", seed)
        kicked = SolveParams(mu=mu, stopping=RelResidual(tol), max_iters=max_iters, **kw)
        rk = solve(inst.op, inst.f_obs, kicked)
        # one plain stream serves both the matching and the plain iteration
        # count; it runs past its own stopping point because kicks can land there
        f_norm = float(np.linalg.norm(inst.f_obs))
        plain_stop = []

        def plain_stream():
            for st in iterate_states(inst.op, inst.f_obs,
                                     replace(kicked, kick=False, stopping=MaxItersOnly())):
                if not plain_stop and np.linalg.norm(st.residual) < tol * f_norm:
                    plain_stop.append(st.k)
                yield st.u, st.v

        stream = plain_stream()
        ok = subsequence_check(((st.u, st.v) for st in iterate_states(inst.op, inst.f_obs,
                                                                       kicked)),
                               stream, rel_tol)
        for _ in stream:
            if plain_stop:
                break
        plain_iters, reason = (plain_stop[0], "RelResidual") if plain_stop else (max_iters,
                                                                                   "MaxIters")
        out.append(SubsequenceCheck(seed, ok, rk.iterations, plain_iters, reason, rk.kicks))
    return out


def verify_mu_limit(instances: int = 20, seed0: int = 0, mus=(1.0, 3.0, 10.0, 30.0, 100.0,
                                                           1000.0)):
    """Oracle-only audit of the large-mu limit on small dense problems."""
    reports = []
    for i in range(instances):
        A, f = small_dense_instance(trial_seed(seed0, 1, i), max_n=6, max_m=3)
        reports.append(check_mu_limit(A, f, mus))
    return reports


TABLE_COLUMNS = ("config", "trials", "snr_db_mean",
                 "iter_mean", "iter_std", "iter_max",
                 "err_mean", "err_std", "err_max",
                 "time_mean", "time_std", "time_max", "max_iters_hits")


def table_rows(stats: dict[str, AggregateStats]) -> list[dict]:
    rows = []
    for name, s in stats.items():
        snr = s.metrics.get("snr_db")
        row = {"config": name, "trials": s.count, "snr_db_mean": snr.mean if snr else ""}
        for short, metric in (("iter", "iterations"), ("err", "rel_err"), ("time", "wall_time")):
            ms = s[metric]
            row.update({f"{short}_mean": ms.mean, f"{short}_std": ms.std, f"{short}_max": ms.max})
        row["max_iters_hits"] = s.extra.get("max_iters_hits", 0)
        rows.append(row)
    return rows


def write_table_csv(path, stats: dict[str, AggregateStats]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=TABLE_COLUMNS)
        w.writeheader()
        w.writerows(table_rows(stats))


def write_records_csv(path, records) -> None:
    records = list(records)
    if not records:
        raise ValueError("no records to write")
    rows = [asdict(r) for r in records]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        for row in rows:
            w.writerow({k: ";".join(map(str, v)) if isinstance(v, list) else v
                        for k, v in row.items()})


def write_json(path, payload: dict) -> None:
    Path(path).write_text(json.dumps({"schema": SCHEMA, **payload}, indent=2, sort_keys=True)
                          + "\n")


def summary_payload(experiment: str, records, stats=None, **settings) -> dict:
    payload = {"experiment": experiment, "settings": settings,
               "records": [asdict(r) for r in records]}
    if stats is not None:
        payload["aggregates"] = {k: v.to_dict() for k, v in stats.items()}
    return payload


__all__ = ["TrialRecord", "AggregateStats", "MetricStats", "aggregate", "trial_seed",
           "run_table1", "run_table2", "run_dynrange", "run_sinusoid", "DynrangeResult",
           "SinusoidTrial", "SinusoidReport", "write_table_csv", "write_records_csv",
           "write_json", "summary_payload", "table_rows", "small_dense_instance",
           "OracleCheck", "verify_oracle", "SubsequenceCheck", "verify_subsequence",
           "verify_mu_limit"]
