"""End-to-end acceptance criteria, one test per criterion.

Expensive runs are cached in module-scoped fixtures so the monotonicity
criterion can audit every run made by the criteria before it.
"""

import math

import numpy as np
import pytest

from linbreg import bench

pytestmark = pytest.mark.acceptance

TRIALS = 10
SEED0 = 0

C1_PRESET = ("dct", 4000, 2000, 200)
C1_MAX_MEAN_ITERS = 200
C1_MAX_MEAN_ERR = 5e-5

C2_PRESET = ("gaussian", 1000, 300, 50)
C2_MAX_ITERS = 2000
C2_MAX_ERR = 1e-4
C2_MIN_OK = 9

C3_PRESET = ("dct", 4000, 1327, 80)
C3_TARGET_SNR = 24.0
C3_SNR_BAND = 2.0
C3_MAX_MEAN_ERR = 0.05

C4_MAX_ITERS = 1000
C4_TOL = 1e-11

C5_N = 2000
C5_FRACTION = 0.4
C5_SNR = -5.0
C5_MIN_MATCHES = 8

C6_INSTANCES = 50
C6_MAX_DEV = 1e-6

C8_INSTANCES = 10
C8_REL_TOL = 1e-9
C8_MAX_RATIO = 0.5
C8_MIN_FAST = 8

C9_INSTANCES = 20


@pytest.fixture(scope="module")
def c1_records():
    records, _ = bench.run_table1([C1_PRESET], TRIALS, mu=1.0, tol=1e-5, seed0=SEED0)
    return records


@pytest.fixture(scope="module")
def c2_records():
    records, _ = bench.run_table1([C2_PRESET], TRIALS, mu=1.0, tol=1e-5, seed0=SEED0,
                                  max_iters=C2_MAX_ITERS)
    return records


@pytest.fixture(scope="module")
def c3_records():
    records, _ = bench.run_table2([C3_PRESET], TRIALS, target_snr_db=C3_TARGET_SNR,
                                  seed0=SEED0)
    return records


@pytest.fixture(scope="module")
def c4_result():
    return bench.run_dynrange(n=4000, kappa=80, mu=1e10, tol=C4_TOL, seed=SEED0,
                              max_iters=5000, track_error=False)


@pytest.fixture(scope="module")
def c5_report():
    return bench.run_sinusoid(C5_N, C5_FRACTION, trials=TRIALS, seed0=SEED0,
                              target_snr_db=C5_SNR)


@pytest.fixture(scope="module")
def c6_checks():
    return bench.verify_oracle(C6_INSTANCES, SEED0, mus=(1.0, 10.0), tol=1e-10,
                               max_iters=100_000)


def test_c1_table1_dct(c1_records):
    its = np.mean([r.iterations for r in c1_records])
    err = np.mean([r.rel_err for r in c1_records])
    reasons = {r.stop_reason for r in c1_records}
    print(f"C1 mean iterations {its:.1f}, mean rel err {err:.2e}, stop reasons {reasons}")
    assert reasons == {"RelResidual"}
    assert err <= C1_MAX_MEAN_ERR
    assert its <= C1_MAX_MEAN_ITERS


def test_c2_table1_gaussian(c2_records):
    ok = sum(r.stop_reason == "RelResidual" and r.rel_err <= C2_MAX_ERR for r in c2_records)
    print(f"C2 {ok}/{len(c2_records)} within {C2_MAX_ITERS} iterations and error "
          f"{C2_MAX_ERR:g}; errors {[f'{r.rel_err:.1e}' for r in c2_records]}")
    assert ok >= C2_MIN_OK


def test_c3_table2_noisy_dct(c3_records):
    snrs = [r.snr_db for r in c3_records]
    err = np.mean([r.rel_err for r in c3_records])
    print(f"C3 realized SNR {np.mean(snrs):.2f} dB (range {min(snrs):.2f}..{max(snrs):.2f}), "
          f"mean rel err {err:.4f}")
    assert all(abs(s - C3_TARGET_SNR) <= C3_SNR_BAND for s in snrs)
    assert all(r.stop_reason == "StdResidual" for r in c3_records)
    assert err <= C3_MAX_MEAN_ERR


def test_c4_dynamic_range(c4_result):
    rec = c4_result.record
    final = c4_result.residual_history[-1]
    print(f"C4 {rec.iterations} iterations, {rec.kicks} kicks, final rel residual {final:.2e}")
    assert rec.stop_reason == "RelResidual" and final < C4_TOL
    assert rec.iterations <= C4_MAX_ITERS


def test_c5_sinusoid(c5_report):
    snrs = [t.snr_db for t in c5_report.trials]
    print(f"C5 frequency sets recovered {c5_report.matches}/{len(c5_report.trials)}, "
          f"mean SNR {np.mean(snrs):.2f} dB")
    assert abs(np.mean(snrs) - C5_SNR) <= 1.0
    assert c5_report.matches >= C5_MIN_MATCHES


def test_c6_oracle_equivalence(c6_checks):
    worst = max(c.deviation for c in c6_checks)
    print(f"C6 max relative deviation {worst:.2e} over {len(c6_checks)} instances")
    assert all(c.stop_reason == "RelResidual" for c in c6_checks)
    assert worst <= C6_MAX_DEV


def test_c7_monotonicity(c1_records, c2_records, c3_records, c4_result, c5_report, c6_checks):
    counts = {
        "C1": sum(r.monotonicity_violations for r in c1_records),
        "C2": sum(r.monotonicity_violations for r in c2_records),
        "C3": sum(r.monotonicity_violations for r in c3_records),
        "C4": c4_result.record.monotonicity_violations,
        "C5": sum(t.monotonicity_violations for t in c5_report.trials),
        "C6": sum(c.monotonicity_violations for c in c6_checks),
    }
    print(f"C7 residual increases beyond {bench.MONOTONE_ULPS:g} ulps of ||f||: {counts}")
    assert sum(counts.values()) == 0


def test_c8_kicking_correctness():
    checks = bench.verify_subsequence(C8_INSTANCES, SEED0, n=200, m=50, kappa=10, mu=50.0,
                                      rel_tol=C8_REL_TOL)
    held = sum(c.subsequence for c in checks)
    fast = sum(c.ratio <= C8_MAX_RATIO for c in checks)
    print(f"C8 subsequence held {held}/{len(checks)}; kicked/plain iteration ratios "
          f"{[round(c.ratio, 2) for c in checks]} ({fast} at or below {C8_MAX_RATIO})")
    assert all(c.iterations_kicked <= c.iterations_plain for c in checks)
    assert held == len(checks)
    assert fast >= C8_MIN_FAST


def test_c9_mu_limit():
    reports = bench.verify_mu_limit(C9_INSTANCES, SEED0)
    bad = [i for i, r in enumerate(reports) if not r.passed]
    print(f"C9 mu-limit audit passed {len(reports) - len(bad)}/{len(reports)}; "
          f"largest final distance {max(r.final_distance for r in reports):.2e}")
    assert not bad
    assert all(math.isfinite(r.final_distance) for r in reports)
