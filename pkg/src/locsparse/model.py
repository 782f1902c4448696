"""Domain types, mixed matrix norms and the forward model ``W = A U B^T``.

Coefficient matrices are stored as ``M x N`` float64 arrays: one row per
pixel, one column per dictionary atom. Functions accept plain arrays or the
light wrapper types defined here.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy import linalg as sla


class ContractError(ValueError):
    """Raised when inputs violate a documented precondition."""


class Normalization(str, Enum):
    RAW = "raw"
    L2 = "l2"
    L1 = "l1"


def _values(x) -> np.ndarray:
    return np.asarray(getattr(x, "values", x), dtype=float)


@dataclass(frozen=True)
class CoefficientMatrix:
    """Nonnegative-by-convention coefficients with their image layout."""

    values: np.ndarray
    spatial_shape: tuple[int, int]
    nonnegative: bool = False

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise ContractError("coefficients must be a 2-D array")
        m1, m2 = self.spatial_shape
        if m1 * m2 != values.shape[0]:
            raise ContractError(
                f"spatial shape {self.spatial_shape} does not match {values.shape[0]} rows")
        if not np.all(np.isfinite(values)):
            raise ContractError("coefficients must be finite")
        if self.nonnegative and np.any(values < 0):
            raise ContractError("coefficients flagged nonnegative contain negative entries")
        object.__setattr__(self, "values", values)

    @property
    def shape(self):
        return self.values.shape

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def images(self) -> np.ndarray:
        """Return the coefficients as an ``(N, m1, m2)`` stack."""
        return self.values.T.reshape((-1,) + tuple(self.spatial_shape))


@dataclass(frozen=True)
class DictionaryMatrix:
    """Temporal basis ``B`` (``T x N``, atoms in columns)."""

    values: np.ndarray
    time_grid: np.ndarray
    normalization: Normalization = Normalization.RAW
    decays: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        grid = np.asarray(self.time_grid, dtype=float)
        if values.ndim != 2 or values.shape[0] != grid.shape[0]:
            raise ContractError("dictionary rows must match the time grid")
        if grid.size > 1 and np.any(np.diff(grid) <= 0):
            raise ContractError("time grid must be strictly increasing")
        if not np.all(np.isfinite(values)):
            raise ContractError("dictionary must be finite")
        norm = Normalization(self.normalization)
        if norm is Normalization.L2:
            ok = np.allclose(np.linalg.norm(values, axis=0), 1.0, rtol=0, atol=1e-12)
        elif norm is Normalization.L1:
            ok = np.allclose(np.abs(values).sum(axis=0), 1.0, rtol=0, atol=1e-12)
        else:
            ok = True
        if not ok:
            raise ContractError(f"columns are not {norm.value}-normalized")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "time_grid", grid)
        object.__setattr__(self, "normalization", norm)

    @property
    def shape(self):
        return self.values.shape

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)


class DenseOperator:
    """Spatial operator given by an explicit ``L x M`` matrix."""

    def __init__(self, matrix):
        matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
        if matrix.ndim != 2 or matrix.shape[0] < 1:
            raise ContractError("dense operator needs an L x M matrix with L >= 1")
        if not np.all(np.isfinite(matrix)):
            raise ContractError("operator matrix must be finite")
        self.matrix = matrix
        self._gram = None

    @property
    def shape(self):
        return self.matrix.shape

    @property
    def out_dim(self):
        return self.matrix.shape[0]

    @property
    def in_dim(self):
        return self.matrix.shape[1]

    def apply(self, X):
        return self.matrix @ X

    def adjoint(self, Y):
        return self.matrix.T @ Y

    def normal_solver(self, mu):
        """Return a function solving ``(A^T A + mu I) Z = R`` for ``Z``."""
        if self._gram is None:
            self._gram = self.matrix.T @ self.matrix
        factor = sla.cho_factor(self._gram + mu * np.eye(self.in_dim))
        return lambda R: sla.cho_solve(factor, R)

    def to_dense(self):
        return self.matrix.copy()


class Conv2dOperator:
    """Periodic 2-D convolution applied to every column image.

    The stencil centre sits at ``(k1 // 2, k2 // 2)``. Periodic boundaries make
    ``A^T A + mu I`` diagonal in the 2-D DFT basis.
    """

    def __init__(self, kernel, spatial_shape):
        kernel = np.asarray(kernel, dtype=float)
        m1, m2 = (int(s) for s in spatial_shape)
        if kernel.ndim != 2 or kernel.shape[0] > m1 or kernel.shape[1] > m2:
            raise ContractError("kernel must be a 2-D stencil no larger than the image")
        if not np.all(np.isfinite(kernel)):
            raise ContractError("kernel must be finite")
        self.kernel = kernel
        self.spatial_shape = (m1, m2)
        padded = np.zeros((m1, m2))
        k1, k2 = kernel.shape
        padded[:k1, :k2] = kernel
        padded = np.roll(padded, (-(k1 // 2), -(k2 // 2)), axis=(0, 1))
        self._symbol = np.fft.rfft2(padded)

    @property
    def shape(self):
        m = self.spatial_shape[0] * self.spatial_shape[1]
        return (m, m)

    @property
    def out_dim(self):
        return self.shape[0]

    @property
    def in_dim(self):
        return self.shape[1]

    def _filter(self, X, symbol):
        X = np.asarray(X, dtype=float)
        vector = X.ndim == 1
        cols = X.reshape(self.in_dim, -1)
        imgs = cols.T.reshape((-1,) + self.spatial_shape)
        out = np.fft.irfft2(np.fft.rfft2(imgs) * symbol, s=self.spatial_shape)
        out = out.reshape(out.shape[0], -1).T
        return out[:, 0] if vector else out

    def apply(self, X):
        return self._filter(X, self._symbol)

    def adjoint(self, Y):
        return self._filter(Y, np.conj(self._symbol))

    def normal_solver(self, mu):
        inv = 1.0 / (np.abs(self._symbol) ** 2 + mu)
        return lambda R: self._filter(R, inv)

    def to_dense(self):
        return self.apply(np.eye(self.in_dim))


def gaussian_kernel(size, sigma=None):
    """Normalized ``size x size`` Gaussian stencil (sigma defaults to size/4)."""
    size = int(size)
    if size < 1:
        raise ContractError("kernel size must be positive")
    sigma = size / 4.0 if sigma is None else float(sigma)
    r = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-0.5 * (r / sigma) ** 2)
    k = np.outer(g, g)
    return k / k.sum()


def norm_l1_inf(U) -> float:
    """Largest row 1-norm of ``U``."""
    U = _values(U)
    if U.size == 0:
        return 0.0
    return float(np.abs(U).sum(axis=1).max())


def norm_inf_1(P) -> float:
    """Sum over rows of the largest absolute entry (dual of :func:`norm_l1_inf`)."""
    P = _values(P)
    if P.size == 0:
        return 0.0
    return float(np.abs(P).max(axis=1).sum())


def norm_l0_inf(U, zero_tol=0.0) -> int:
    """Largest number of entries per row exceeding ``zero_tol`` in magnitude."""
    if zero_tol < 0:
        raise ContractError("zero_tol must be nonnegative")
    U = _values(U)
    if U.size == 0:
        return 0
    return int((np.abs(U) > zero_tol).sum(axis=1).max())


def as_operator(A):
    if isinstance(A, (DenseOperator, Conv2dOperator)):
        return A
    return DenseOperator(A)


def apply_forward(A, U, B) -> np.ndarray:
    """Evaluate ``A U B^T``.

    ``A`` is a :class:`DenseOperator`, :class:`Conv2dOperator` or a plain matrix.
    The spatial operator is applied to whichever side has fewer columns.
    """
    A = as_operator(A)
    U = _values(U)
    B = _values(B)
    if U.ndim != 2 or B.ndim != 2:
        raise ContractError("U and B must be 2-D")
    if U.shape[0] != A.in_dim:
        raise ContractError(f"operator expects {A.in_dim} rows, U has {U.shape[0]}")
    if U.shape[1] != B.shape[1]:
        raise ContractError(f"U has {U.shape[1]} columns, B has {B.shape[1]} atoms")
    if B.shape[1] <= B.shape[0]:
        return A.apply(U) @ B.T
    return A.apply(U @ B.T)


def add_gaussian_noise(W, sigma, seed) -> np.ndarray:
    """Return ``W`` plus i.i.d. N(0, sigma^2) noise drawn from PCG64(seed)."""
    if sigma < 0:
        raise ContractError("sigma must be nonnegative")
    W = _values(W)
    if sigma == 0:
        return W.copy()
    rng = np.random.default_rng(seed)
    return W + sigma * rng.standard_normal(W.shape)
