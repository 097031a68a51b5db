"""Dense numerics shared by every other module.

Matrices and vectors are plain float64 numpy arrays. Most routines accept a
leading batch axis so that a whole minibatch of small systems can be handled
in one call.
"""

from __future__ import annotations

import numpy as np

PIVOT_TOL = 1e-12


class ShapeError(ValueError):
    pass


class SingularMatrixError(ArithmeticError):
    """Raised when LU factorisation meets a pivot below ``PIVOT_TOL``."""

    def __init__(self, pivot_index: int, batch_index: int | None = None, pivot: float = 0.0):
        self.pivot_index = pivot_index
        self.batch_index = batch_index
        self.pivot = pivot
        where = f" (batch element {batch_index})" if batch_index is not None else ""
        super().__init__(f"singular system: pivot {pivot_index} has magnitude {abs(pivot):.3e}{where}")


def matvec(A: np.ndarray, x: np.ndarray) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    x = np.asarray(x, dtype=float)
    if A.ndim != 2 or x.ndim != 1 or A.shape[1] != x.shape[0]:
        raise ShapeError(f"cannot multiply matrix of shape {A.shape} with vector of shape {x.shape}")
    return A @ x


def lu_factor(A: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """LU factorisation with partial pivoting, batched over leading axes.

    Returns ``(lu, perm)`` where ``lu`` packs the unit lower factor below the
    diagonal and the upper factor on and above it, and ``perm[..., i]`` is the
    original row that ended up in row ``i``.
    """
    lu = np.array(A, dtype=float, copy=True)
    if lu.ndim < 2 or lu.shape[-1] != lu.shape[-2]:
        raise ShapeError(f"expected square matrix, got shape {lu.shape}")
    batch_shape = lu.shape[:-2]
    n = lu.shape[-1]
    lu = lu.reshape((-1, n, n))
    nb = lu.shape[0]
    rows = np.arange(nb)
    perm = np.tile(np.arange(n), (nb, 1))

    for k in range(n):
        p = k + np.argmax(np.abs(lu[:, k:, k]), axis=1)
        pivots = lu[rows, p, k]
        bad = np.abs(pivots) < PIVOT_TOL
        if bad.any():
            b = int(np.argmax(bad))
            raise SingularMatrixError(k, b if batch_shape else None, float(pivots[b]))
        swap = p != k
        if swap.any():
            idx = rows[swap]
            pk = p[swap]
            tmp = lu[idx, k, :].copy()
            lu[idx, k, :] = lu[idx, pk, :]
            lu[idx, pk, :] = tmp
            tmp = perm[idx, k].copy()
            perm[idx, k] = perm[idx, pk]
            perm[idx, pk] = tmp
        if k + 1 < n:
            lu[:, k + 1:, k] /= lu[:, k, k][:, None]
            lu[:, k + 1:, k + 1:] -= lu[:, k + 1:, k][:, :, None] * lu[:, k, k + 1:][:, None, :]

    return lu.reshape(batch_shape + (n, n)), perm.reshape(batch_shape + (n,))


def lu_solve(lu: np.ndarray, perm: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Solve with a factorisation from :func:`lu_factor`.

    ``B`` has shape ``(..., n)`` or ``(..., n, m)`` with the same batch shape
    as ``lu``.
    """
    n = lu.shape[-1]
    vec = B.ndim == lu.ndim - 1
    X = np.array(B, dtype=float, copy=True)
    if vec:
        X = X[..., None]
    if X.shape[-2] != n or X.shape[:-2] != lu.shape[:-2]:
        raise ShapeError(f"right-hand side of shape {B.shape} does not fit system of shape {lu.shape}")
    X = np.take_along_axis(X, perm[..., None], axis=-2)
    for i in range(1, n):
        X[..., i, :] -= np.einsum("...k,...km->...m", lu[..., i, :i], X[..., :i, :])
    for i in range(n - 1, -1, -1):
        if i + 1 < n:
            X[..., i, :] -= np.einsum("...k,...km->...m", lu[..., i, i + 1:], X[..., i + 1:, :])
        X[..., i, :] /= lu[..., i, i][..., None]
    return X[..., 0] if vec else X


def solve_linear(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Solve ``A X = B`` by LU with partial pivoting (never forms an inverse)."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.ndim < 2 or A.shape[-1] != A.shape[-2]:
        raise ShapeError(f"expected square matrix, got shape {A.shape}")
    rhs_rows = B.shape[-1] if B.ndim == A.ndim - 1 else B.shape[-2]
    if rhs_rows != A.shape[-1]:
        raise ShapeError(f"matrix of shape {A.shape} incompatible with right-hand side of shape {B.shape}")
    lu, perm = lu_factor(A)
    return lu_solve(lu, perm, B)


def sigmoid(x: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
    """Logistic function, ``out`` may alias ``x``.

    ``1 / (1 + exp(-x))`` has no cancellation; for very negative ``x`` the
    exponential overflows to inf and the result is the correctly rounded 0.
    """
    x = np.asarray(x, dtype=float)
    out = np.negative(x, out=out)
    with np.errstate(over="ignore"):
        np.exp(out, out=out)
    out += 1.0
    return np.reciprocal(out, out=out)


def sigmoid_prime_from_output(y: np.ndarray) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    return y * (1.0 - y)


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def rng_uniform(rng: np.random.Generator, lo: float, hi: float, size=None):
    if not lo < hi:
        raise ValueError(f"invalid uniform range [{lo}, {hi})")
    return rng.uniform(lo, hi, size)


def rng_normal(rng: np.random.Generator, mean: float, sd: float, size=None):
    if not sd > 0:
        raise ValueError(f"standard deviation must be positive, got {sd}")
    return rng.normal(mean, sd, size)
