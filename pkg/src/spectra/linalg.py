"""Dense symmetric linear algebra at desk scale.

The native eigensolver (Householder tridiagonalization followed by implicit
QL with Wilkinson shifts) is self-contained and deterministic. A LAPACK
backend is offered for large Monte Carlo batches.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import ConvergenceError, DomainError, ValidationError

__all__ = [
    "MATRIX_CAP",
    "EigenDecomposition",
    "as_symmetric",
    "tridiagonalize",
    "tridiagonal_ql",
    "eigh",
    "sym_sqrt",
    "toeplitz",
    "sample_covariance",
    "write_matrix_csv",
    "read_matrix_csv",
]

MATRIX_CAP = 2048
MAX_QL_ITER = 60
_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class EigenDecomposition:
    """Eigenvalues in descending order with matching orthonormal columns."""

    values: NDArray[np.float64]
    vectors: NDArray[np.float64]

    def reconstruct(self) -> NDArray[np.float64]:
        return (self.vectors * self.values) @ self.vectors.T


def as_symmetric(A: ArrayLike, cap: int = MATRIX_CAP) -> NDArray[np.float64]:
    """Copy of ``A`` with the upper triangle mirrored into the lower one."""
    A = np.array(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValidationError(f"expected a square matrix, got shape {A.shape}")
    if A.shape[0] > cap:
        raise ValidationError(f"dimension {A.shape[0]} exceeds cap {cap}")
    if not np.all(np.isfinite(A)):
        raise ValidationError("matrix has non-finite entries")
    upper = np.triu(A)
    return upper + np.triu(A, 1).T


def tridiagonalize(
    A: NDArray[np.float64],
) -> tuple[NDArray[np.float64], NDArray[np.float64], NDArray[np.float64]]:
    """Householder reduction ``A = Q T Q^T``.

    Returns the diagonal ``d``, the sub-diagonal ``e`` (length n-1) and ``Q``.
    """
    T = np.array(A, dtype=float)
    n = T.shape[0]
    Q = np.eye(n)
    for k in range(n - 2):
        x = T[k + 1 :, k]
        norm = math.sqrt(float(x @ x))
        if norm == 0.0:
            continue
        alpha = -norm if x[0] >= 0 else norm
        v = x.copy()
        v[0] -= alpha
        vnorm = math.sqrt(float(v @ v))
        if vnorm == 0.0:
            continue
        v /= vnorm
        sub = T[k + 1 :, k + 1 :]
        p = sub @ v
        w = p - (v @ p) * v
        sub -= 2.0 * (np.outer(v, w) + np.outer(w, v))
        T[k + 1 :, k] = 0.0
        T[k, k + 1 :] = 0.0
        T[k + 1, k] = T[k, k + 1] = alpha
        Qs = Q[:, k + 1 :]
        Qs -= 2.0 * np.outer(Qs @ v, v)
    d = np.diag(T).copy()
    e = np.diag(T, -1).copy()
    return d, e, Q


def tridiagonal_ql(
    d: NDArray[np.float64],
    e: NDArray[np.float64],
    Z: NDArray[np.float64] | None = None,
    max_iter: int = MAX_QL_ITER,
) -> tuple[NDArray[np.float64], NDArray[np.float64] | None]:
    """Implicit QL with Wilkinson shifts on a symmetric tridiagonal matrix.

    ``e[i]`` couples ``d[i]`` and ``d[i+1]``. When ``Z`` is given, the
    rotations are accumulated into its columns. Output is unsorted.
    """
    n = len(d)
    d = np.array(d, dtype=float)
    ee = np.zeros(n)
    ee[: n - 1] = e
    # rows of Zt are the eigenvector columns, kept contiguous for the updates
    Zt = None if Z is None else np.array(Z, dtype=float).T.copy()
    for l in range(n):
        it = 0
        while True:
            m = l
            while m < n - 1:
                dd = abs(d[m]) + abs(d[m + 1])
                if abs(ee[m]) <= _EPS * dd:
                    break
                m += 1
            if m == l:
                break
            it += 1
            if it > max_iter:
                raise ConvergenceError(
                    f"QL iteration did not converge for eigenvalue {l}",
                    residual=abs(ee[l]),
                )
            g = (d[l + 1] - d[l]) / (2.0 * ee[l])
            r = math.hypot(g, 1.0)
            g = d[m] - d[l] + ee[l] / (g + math.copysign(r, g))
            s = c = 1.0
            p = 0.0
            underflow = False
            for i in range(m - 1, l - 1, -1):
                f = s * ee[i]
                b = c * ee[i]
                r = math.hypot(f, g)
                ee[i + 1] = r
                if r == 0.0:
                    d[i + 1] -= p
                    ee[m] = 0.0
                    underflow = True
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * b
                p = s * r
                d[i + 1] = g + p
                g = c * r - b
                if Zt is not None:
                    zi = Zt[i].copy()
                    zn = Zt[i + 1]
                    Zt[i] = c * zi - s * zn
                    Zt[i + 1] = s * zi + c * zn
            if underflow:
                continue
            d[l] -= p
            ee[l] = g
            ee[m] = 0.0
    return d, (None if Zt is None else Zt.T.copy())


def _fix_signs(V: NDArray[np.float64]) -> NDArray[np.float64]:
    # make the largest-magnitude entry of each column positive
    idx = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[idx, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    return V * signs


def eigh(A: ArrayLike, backend: str = "native", cap: int = MATRIX_CAP) -> EigenDecomposition:
    """Full symmetric eigendecomposition, eigenvalues sorted descending.

    ``backend="native"`` runs the package's own solver; ``"lapack"`` defers to
    :func:`numpy.linalg.eigh`. Both use the upper triangle and the same sign
    convention for the vectors.
    """
    S = as_symmetric(A, cap)
    n = S.shape[0]
    if backend == "native":
        if n == 1:
            vals, vecs = S[0].copy(), np.ones((1, 1))
        else:
            d, e, Q = tridiagonalize(S)
            vals, vecs = tridiagonal_ql(d, e, Q)
    elif backend == "lapack":
        vals, vecs = np.linalg.eigh(S, UPLO="U")
    else:
        raise ValueError(f"unknown eigen backend {backend!r}")
    order = np.argsort(-vals, kind="stable")
    return EigenDecomposition(vals[order], _fix_signs(vecs[:, order]))


def sym_sqrt(A: ArrayLike, tol: float = 1e-10, backend: str = "native") -> NDArray[np.float64]:
    """Positive semidefinite square root ``V diag(sqrt(lambda)) V^T``."""
    dec = eigh(A, backend=backend)
    scale = max(1.0, float(np.max(np.abs(dec.values))))
    if dec.values[-1] < -tol * scale:
        raise DomainError(f"matrix is not positive semidefinite (min eigenvalue {dec.values[-1]:.3e})")
    root = np.sqrt(np.clip(dec.values, 0.0, None))
    R = (dec.vectors * root) @ dec.vectors.T
    return 0.5 * (R + R.T)


def toeplitz(rho: float, M: int) -> NDArray[np.float64]:
    """Symmetric Toeplitz matrix with entries ``rho ** |i - j|``."""
    if M < 1:
        raise ValidationError("dimension must be positive")
    if M > MATRIX_CAP:
        raise ValidationError(f"dimension {M} exceeds cap {MATRIX_CAP}")
    idx = np.arange(M)
    return float(rho) ** np.abs(idx[:, None] - idx[None, :]).astype(float)


def sample_covariance(S_half: ArrayLike | None, X: ArrayLike) -> NDArray[np.float64]:
    """``S_half X X^T S_half`` symmetrized. ``S_half=None`` means the identity."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValidationError("X must be a matrix")
    if S_half is None:
        Y = X
    else:
        S_half = np.asarray(S_half, dtype=float)
        if S_half.shape != (X.shape[0], X.shape[0]):
            raise ValidationError(
                f"S_half has shape {S_half.shape}, expected {(X.shape[0], X.shape[0])}"
            )
        Y = S_half @ X
    Q = Y @ Y.T
    return 0.5 * (Q + Q.T)


def write_matrix_csv(path: str | Path, A: ArrayLike) -> None:
    """Dense row-major CSV; the first line is ``# rows,cols``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# {A.shape[0]},{A.shape[1]}\n")
        np.savetxt(fh, A, delimiter=",", fmt="%.17g")


def read_matrix_csv(path: str | Path) -> NDArray[np.float64]:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline()
        if not header.startswith("#"):
            raise ValidationError(f"{path}: missing dimension header")
        try:
            rows, cols = (int(t) for t in header[1:].split(","))
        except ValueError as exc:
            raise ValidationError(f"{path}: bad dimension header {header.strip()!r}") from exc
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    if data.shape != (rows, cols):
        raise ValidationError(f"{path}: header says {(rows, cols)}, found {data.shape}")
    return data
