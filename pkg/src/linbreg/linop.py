"""Matrix-free sensing operators.

Three realizations share one interface: a dense real matrix, a row subset
of the orthonormal DCT-II, and a row subset of the unitary inverse DFT.
Partial transforms keep only the sorted row-index set; ``apply`` runs the
full fast transform and gathers, ``adjoint`` scatters and runs the inverse.
"""

from __future__ import annotations

import enum
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import fft

logger = logging.getLogger(__name__)


class OperatorKind(str, enum.Enum):
    DENSE = "dense"
    PARTIAL_DCT = "partial_dct"
    PARTIAL_INVERSE_FOURIER = "partial_inverse_fourier"


class PowerIterationWarning(RuntimeWarning):
    """Power iteration hit ``max_iters`` before meeting its tolerance."""


def _as_row_set(n: int, rows) -> np.ndarray:
    idx = np.asarray(rows)
    if idx.ndim != 1 or idx.size == 0:
        raise ValueError("row-index set must be a non-empty 1-D sequence")
    if not np.issubdtype(idx.dtype, np.integer):
        raise TypeError(f"row indices must be integers, got dtype {idx.dtype}")
    if idx.min() < 0 or idx.max() >= n:
        raise ValueError(f"row indices must lie in [0, {n})")
    if np.unique(idx).size != idx.size:
        raise ValueError("row indices must be distinct")
    return np.sort(idx).astype(np.intp)


@dataclass(frozen=True, eq=False)
class LinearOperator:
    """An m-by-n sensing operator ``A`` with ``apply`` (Ax) and ``adjoint`` (A^H y).

    Build instances with :func:`make_dense`, :func:`make_dense_gaussian`,
    :func:`make_partial_dct` or :func:`make_partial_inverse_fourier`.
    """

    kind: OperatorKind
    m: int
    n: int
    matrix: np.ndarray | None = field(default=None, repr=False)
    rows: np.ndarray | None = field(default=None, repr=False)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.m, self.n)

    @property
    def is_complex(self) -> bool:
        return self.kind is OperatorKind.PARTIAL_INVERSE_FOURIER

    @property
    def dtype(self):
        return np.complex128 if self.is_complex else np.float64

    @property
    def orthonormal_rows(self) -> bool:
        """True when A A^H = I holds by construction."""
        return self.kind is not OperatorKind.DENSE

    def _check(self, x, size: int, what: str) -> np.ndarray:
        x = np.asarray(x)
        if x.shape != (size,):
            raise ValueError(f"{what}: expected shape ({size},), got {x.shape}")
        if np.iscomplexobj(x) and not self.is_complex:
            raise TypeError(f"{what}: complex input to a real {self.kind.value} operator")
        return x

    def apply(self, x) -> np.ndarray:
        x = self._check(x, self.n, "apply")
        if self.kind is OperatorKind.DENSE:
            return self.matrix @ x
        if self.kind is OperatorKind.PARTIAL_DCT:
            return fft.dct(x, type=2, norm="ortho")[self.rows]
        return fft.ifft(x.astype(np.complex128, copy=False), norm="ortho")[self.rows]

    def adjoint(self, y) -> np.ndarray:
        y = self._check(y, self.m, "adjoint")
        if self.kind is OperatorKind.DENSE:
            return self.matrix.T @ y
        full = np.zeros(self.n, dtype=self.dtype)
        full[self.rows] = y
        if self.kind is OperatorKind.PARTIAL_DCT:
            return fft.idct(full, type=2, norm="ortho")
        return fft.fft(full, norm="ortho")

    def to_dense(self) -> np.ndarray:
        """Materialize A column by column (small n only)."""
        if self.matrix is not None:
            return self.matrix.copy()
        eye = np.eye(self.n, dtype=self.dtype)
        return np.stack([self.apply(e) for e in eye], axis=1)

    def to_config(self) -> dict:
        """JSON-ready description; dense operators also need :meth:`save_matrix`."""
        cfg = {"kind": self.kind.value, "m": self.m, "n": self.n}
        if self.rows is not None:
            cfg["rows"] = self.rows.tolist()
        return cfg

    @classmethod
    def from_config(cls, cfg: dict, matrix_path: str | Path | None = None) -> "LinearOperator":
        kind = OperatorKind(cfg["kind"])
        if kind is OperatorKind.DENSE:
            if matrix_path is None:
                raise ValueError("dense operator config needs a matrix file")
            return make_dense(load_matrix(matrix_path))
        if kind is OperatorKind.PARTIAL_DCT:
            return make_partial_dct(int(cfg["n"]), cfg["rows"])
        return make_partial_inverse_fourier(int(cfg["n"]), cfg["rows"])

    def save_matrix(self, path: str | Path) -> None:
        """Write a dense operator to ``.npy`` (binary) or ``.csv``."""
        if self.matrix is None:
            raise ValueError("only dense operators carry a matrix")
        save_matrix(path, self.matrix)


def save_matrix(path: str | Path, matrix: np.ndarray) -> None:
    path = Path(path)
    if path.suffix == ".csv":
        np.savetxt(path, matrix, delimiter=",", fmt="%.17g")
    else:
        np.save(path, matrix)


def load_matrix(path: str | Path) -> np.ndarray:
    path = Path(path)
    if path.suffix == ".csv":
        return np.atleast_2d(np.loadtxt(path, delimiter=",", dtype=np.float64))
    return np.load(path)


def make_dense(matrix) -> LinearOperator:
    a = np.array(matrix, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError("dense operator needs a 2-D matrix")
    m, n = a.shape
    if m > n:
        raise ValueError(f"need m <= n, got {m}x{n}")
    a.setflags(write=False)
    return LinearOperator(OperatorKind.DENSE, m, n, matrix=a)


def make_dense_gaussian(m: int, n: int, seed) -> LinearOperator:
    """m-by-n matrix with i.i.d. N(0, 1) entries drawn from ``default_rng(seed)``."""
    if not 0 < m <= n:
        raise ValueError(f"need 0 < m <= n, got m={m}, n={n}")
    rng = np.random.default_rng(seed)
    return make_dense(rng.standard_normal((m, n)))


def make_partial_dct(n: int, rows) -> LinearOperator:
    idx = _as_row_set(n, rows)
    idx.setflags(write=False)
    return LinearOperator(OperatorKind.PARTIAL_DCT, idx.size, n, rows=idx)


def make_partial_inverse_fourier(n: int, rows) -> LinearOperator:
    idx = _as_row_set(n, rows)
    idx.setflags(write=False)
    return LinearOperator(OperatorKind.PARTIAL_INVERSE_FOURIER, idx.size, n, rows=idx)


def random_rows(n: int, m: int, seed) -> np.ndarray:
    """m distinct row indices drawn uniformly from [0, n)."""
    if not 0 < m <= n:
        raise ValueError(f"need 0 < m <= n, got m={m}, n={n}")
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(n, size=m, replace=False))


def spectral_norm_sq_estimate(op: LinearOperator, tol: float = 1e-4, max_iters: int = 200,
                              seed=0) -> float:
    """Estimate ||A A^H|| by power iteration on the m-by-m Gram operator.

    Returns the Rayleigh quotient ``||A^H x||^2`` of the final unit iterate,
    which never exceeds the true value. Emits :class:`PowerIterationWarning`
    if the relative change has not dropped below ``tol`` in ``max_iters``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(op.m)
    if op.is_complex:
        x = x + 1j * rng.standard_normal(op.m)
    x /= np.linalg.norm(x)
    est = 0.0
    for it in range(1, max_iters + 1):
        w = op.adjoint(x)
        new = float(np.vdot(w, w).real)
        y = op.apply(w)
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return 0.0
        x = y / ny
        if it > 1 and abs(new - est) <= tol * new:
            logger.debug("power iteration converged after %d iterations", it)
            return new
        est = new
    warnings.warn(f"power iteration did not reach tol={tol} in {max_iters} iterations",
                  PowerIterationWarning, stacklevel=2)
    return est
