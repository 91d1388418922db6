"""Seeded test-problem generators.

Covers sparse signals with uniform or high-dynamic-range entries, measurement
synthesis with optional Gaussian noise, and sparse sinusoids observed at a
random subset of times.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import fft

from .linop import (LinearOperator, make_dense_gaussian, make_partial_dct,
                    make_partial_inverse_fourier, random_rows)


class SignalMode(str, enum.Enum):
    UNIFORM = "uniform"
    DYNRANGE = "dynrange"


class MatrixKind(str, enum.Enum):
    GAUSSIAN = "gaussian"
    DCT = "dct"


DYNRANGE_MAX_EXP = 10


def _streams(seed, k: int):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(k)]


def gen_sparse_signal(n: int, kappa: int, mode: SignalMode | str = SignalMode.UNIFORM, seed=None,
                      signed: bool = True) -> np.ndarray:
    """n-vector with exactly ``kappa`` nonzeros at uniformly random positions.

    ``uniform`` entries are U(-1, 1). ``dynrange`` entries are U(0, 1) * 10**j
    with j uniform on {0, ..., 10}, times a random sign unless ``signed`` is
    False.
    """
    mode = SignalMode(mode)
    if not 0 < kappa <= n:
        raise ValueError(f"need 0 < kappa <= n, got kappa={kappa}, n={n}")
    rng = np.random.default_rng(seed)
    idx = rng.choice(n, size=kappa, replace=False)
    u = np.zeros(n)
    if mode is SignalMode.UNIFORM:
        u[idx] = rng.uniform(-1.0, 1.0, kappa)
    else:
        mag = rng.uniform(0.0, 1.0, kappa) * 10.0 ** rng.integers(0, DYNRANGE_MAX_EXP + 1, kappa)
        sign = rng.choice([-1.0, 1.0], kappa) if signed else 1.0
        u[idx] = sign * mag
    return u


def snr_db(u_bar, noise) -> float:
    """``20 log10(||u_bar|| / ||noise||)``; +inf for zero noise."""
    nn = float(np.linalg.norm(noise))
    if nn == 0.0:
        return math.inf
    return 20.0 * math.log10(float(np.linalg.norm(u_bar)) / nn)


def sigma_for_snr(u_bar, length: int, target_db: float) -> float:
    """Noise std whose expected norm over ``length`` samples gives ``target_db``."""
    return float(np.linalg.norm(u_bar)) * 10.0 ** (-target_db / 20.0) / math.sqrt(length)


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    op: LinearOperator
    u_bar: np.ndarray
    f_clean: np.ndarray
    f_obs: np.ndarray
    sigma: float
    snr_db: float
    seed: int | None
    kappa: int
    config: dict

    @property
    def noise(self) -> np.ndarray:
        return self.f_obs - self.f_clean

    def rel_err(self, u) -> float:
        return float(np.linalg.norm(u - self.u_bar) / np.linalg.norm(self.u_bar))

    def to_json(self) -> str:
        """Config and seeds only; :func:`instance_from_json` rebuilds the vectors."""
        return json.dumps(self.config, sort_keys=True)

    def dump_csv(self, path) -> None:
        m = self.op.m
        with open(path, "w") as fh:
            fh.write("i,u_bar,f_clean,f_obs\n")
            for i in range(self.op.n):
                fc = repr(float(self.f_clean[i])) if i < m else ""
                fo = repr(float(self.f_obs[i])) if i < m else ""
                fh.write(f"{i},{self.u_bar[i]!r},{fc},{fo}\n")


def gen_instance(matrix_kind: MatrixKind | str, n: int, m: int, kappa: int,
                 mode: SignalMode | str = SignalMode.UNIFORM, seed: int = 0,
                 signed: bool = True) -> ProblemInstance:
    """Noise-free instance: operator, kappa-sparse signal, f = A u_bar.

    The operator and the signal use independent streams spawned from ``seed``.
    """
    kind = MatrixKind(matrix_kind)
    mode = SignalMode(mode)
    if not 0 < m <= n:
        raise ValueError(f"need 0 < m <= n, got m={m}, n={n}")
    s_op, s_sig = np.random.SeedSequence(seed).spawn(2)
    if kind is MatrixKind.GAUSSIAN:
        op = make_dense_gaussian(m, n, s_op)
    else:
        op = make_partial_dct(n, random_rows(n, m, s_op))
    u_bar = gen_sparse_signal(n, kappa, mode, s_sig, signed=signed)
    f = op.apply(u_bar)
    config = {"matrix": kind.value, "n": n, "m": m, "kappa": kappa, "mode": mode.value,
              "seed": seed, "signed": signed, "sigma": 0.0, "noise_seed": None}
    return ProblemInstance(op, u_bar, f, f.copy(), 0.0, math.inf, seed, kappa, config)


def add_noise(instance: ProblemInstance, sigma: float, seed) -> ProblemInstance:
    """Add i.i.d. N(0, sigma^2) noise to the measurements."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if sigma == 0:
        noise = np.zeros_like(instance.f_clean)
    else:
        noise = np.random.default_rng(seed).normal(0.0, sigma, instance.f_clean.shape)
    config = dict(instance.config, sigma=float(sigma), noise_seed=seed)
    return replace(instance, f_obs=instance.f_clean + noise, sigma=float(sigma),
                   snr_db=snr_db(instance.u_bar, noise), config=config)


def add_noise_for_snr(instance: ProblemInstance, target_db: float, seed) -> ProblemInstance:
    """Noise with sigma backed out from a target SNR for this instance's u_bar."""
    return add_noise(instance, sigma_for_snr(instance.u_bar, instance.op.m, target_db), seed)


def instance_from_json(text: str) -> ProblemInstance:
    cfg = json.loads(text)
    inst = gen_instance(cfg["matrix"], cfg["n"], cfg["m"], cfg["kappa"], cfg["mode"],
                        cfg["seed"], cfg.get("signed", True))
    if cfg.get("sigma"):
        inst = add_noise(inst, cfg["sigma"], cfg["noise_seed"])
    return inst


@dataclass(frozen=True, eq=False)
class SinusoidInstance:
    n: int
    a: float
    b: float
    k1: int
    k2: int
    u_bar_time: np.ndarray
    sample_indices: np.ndarray
    f_obs: np.ndarray
    sigma: float
    snr_db: float
    seed: int | None

    @property
    def op(self) -> LinearOperator:
        return make_partial_inverse_fourier(self.n, self.sample_indices)

    @property
    def spectrum(self) -> np.ndarray:
        """Unitary DFT of the clean signal, the sparse vector the solver targets."""
        return fft.fft(self.u_bar_time, norm="ortho")

    def true_frequencies(self, rel_tol: float = 1e-9) -> frozenset[int]:
        """Folded frequencies min(k, n-k) carried by the clean signal."""
        x = np.abs(self.spectrum)
        on = np.flatnonzero(x > rel_tol * max(x.max(), 1e-300))
        return fold_frequencies(on, self.n)


def fold_frequencies(indices, n: int) -> frozenset[int]:
    return frozenset(int(min(k, n - k)) for k in indices)


def sinusoid(n: int, a: float, b: float, k1: int, k2: int) -> np.ndarray:
    t = np.arange(n)
    return a * np.sin(2 * np.pi * k1 * t / n) + b * np.cos(2 * np.pi * k2 * t / n)


def gen_sinusoid_instance(n: int, fraction: float, sigma: float, seed=None, *,
                          a: float | None = None, b: float | None = None,
                          k1: int | None = None, k2: int | None = None) -> SinusoidInstance:
    """Noisy ``a sin(2 pi k1 t/n) + b cos(2 pi k2 t/n)`` seen at floor(fraction*n) random times.

    Noise is added in the time domain before sampling. Any of a, b, k1, k2
    may be pinned; the rest are drawn (amplitudes U(-1, 1), frequencies
    uniform on {0, ..., n-1}).
    """
    if not 0 < fraction <= 1:
        raise ValueError("fraction must lie in (0, 1]")
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    r_par, r_idx, r_noise = _streams(seed, 3)
    a_, b_ = r_par.uniform(-1.0, 1.0, 2)
    k1_, k2_ = r_par.integers(0, n, 2)
    a = a_ if a is None else a
    b = b_ if b is None else b
    k1 = int(k1_ if k1 is None else k1)
    k2 = int(k2_ if k2 is None else k2)
    u = sinusoid(n, a, b, k1, k2)
    noise = r_noise.normal(0.0, sigma, n) if sigma > 0 else np.zeros(n)
    size = int(math.floor(fraction * n))
    if size < 1:
        raise ValueError("fraction * n must give at least one sample")
    idx = np.sort(r_idx.choice(n, size=size, replace=False))
    return SinusoidInstance(n, float(a), float(b), k1, k2, u, idx, (u + noise)[idx],
                            float(sigma), snr_db(u, noise), seed)


def postselect_top_spikes(x_hat, count: int) -> np.ndarray:
    """Keep the ``count`` largest-magnitude entries (ties to the lower index)."""
    x_hat = np.asarray(x_hat)
    if not 0 <= count <= x_hat.size:
        raise ValueError("count must lie in [0, len(x_hat)]")
    order = np.argsort(-np.abs(x_hat), kind="stable")
    out = np.zeros_like(x_hat)
    keep = order[:count]
    out[keep] = x_hat[keep]
    return out


# (matrix, n, m, kappa) rows of the noise-free efficiency table
TABLE1_PRESETS: tuple[tuple[str, int, int, int], ...] = (
    ("gaussian", 1000, 300, 50),
    ("gaussian", 2000, 600, 100),
    ("gaussian", 4000, 1200, 200),
    ("gaussian", 1000, 156, 20),
    ("gaussian", 2000, 312, 40),
    ("gaussian", 4000, 468, 80),
    ("dct", 4000, 2000, 200),
    ("dct", 20000, 10000, 1000),
    ("dct", 50000, 25000, 2500),
    ("dct", 4000, 1327, 80),
    ("dct", 20000, 7923, 400),
    ("dct", 50000, 21640, 1000),
)


def table_presets() -> list[tuple[str, int, int, int]]:
    return list(TABLE1_PRESETS)


def preset_name(preset) -> str:
    kind, n, m, kappa = preset
    return f"{kind}-{n}-{m}"
