"""Dense complex linear algebra for desk-scale MIMO systems.

Everything here works on complex128 numpy arrays. Matrices are dense and
row-major; there is no sparse path because the Gram matrix and its
block-preconditioned transform are dense by construction.

Hermitian inputs are validated, not symmetrized: a matrix that is off by more
than the tolerance almost always means an upstream bug.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla
from scipy.linalg import lapack

from .errors import InvalidInputError, NotPositiveDefiniteError, NumericalFailure, SingularTriangularError

HERMITIAN_RTOL = 1e-10
DIAG_IMAG_RTOL = 1e-12


def as_cvector(x, name="vector") -> np.ndarray:
    v = np.asarray(x, dtype=np.complex128)
    if v.ndim != 1 or v.size == 0:
        raise InvalidInputError(f"{name} must be a non-empty 1-D array, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return v


def as_cmatrix(x, name="matrix", square=False) -> np.ndarray:
    m = np.asarray(x, dtype=np.complex128)
    if m.ndim != 2 or m.size == 0:
        raise InvalidInputError(f"{name} must be a non-empty 2-D array, got shape {m.shape}")
    if square and m.shape[0] != m.shape[1]:
        raise InvalidInputError(f"{name} must be square, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return m


class HermitianView:
    """Read-only wrapper certifying that a square matrix is Hermitian.

    Construction checks ``max|X - X^H| <= 1e-10 * max|X|`` and that every
    diagonal entry is real to within ``1e-12 * (|Re d| + 1)``. The stored
    array is a private read-only copy.
    """

    __slots__ = ("_data",)

    def __init__(self, data):
        if isinstance(data, HermitianView):
            self._data = data._data
            return
        arr = np.array(as_cmatrix(data, "Hermitian matrix", square=True), copy=True)
        scale = np.max(np.abs(arr))
        asym = np.max(np.abs(arr - arr.conj().T))
        if asym > HERMITIAN_RTOL * scale:
            raise InvalidInputError(f"matrix is not Hermitian: max|X - X^H| = {asym:.3e} (scale {scale:.3e})")
        d = np.diag(arr)
        if np.any(np.abs(d.imag) > DIAG_IMAG_RTOL * (np.abs(d.real) + 1.0)):
            raise InvalidInputError("Hermitian matrix has a diagonal entry with non-negligible imaginary part")
        arr.setflags(write=False)
        self._data = arr

    @property
    def data(self) -> np.ndarray:
        return self._data

    @property
    def n(self) -> int:
        return self._data.shape[0]

    @property
    def shape(self):
        return self._data.shape

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self._data
        return self._data.astype(dtype)

    def __repr__(self):
        return f"HermitianView(n={self.n})"


def as_hermitian(x) -> HermitianView:
    return x if isinstance(x, HermitianView) else HermitianView(x)


def hermitian_gram(H, ridge: float) -> HermitianView:
    """Return ``H^H H + ridge * I`` as an exactly Hermitian matrix."""
    H = as_cmatrix(H, "H")
    if not (np.isfinite(ridge) and ridge > 0):
        raise InvalidInputError(f"ridge must be a positive finite real, got {ridge!r}")
    G = H.conj().T @ H
    # mirror the upper triangle so the result is Hermitian bit-for-bit
    G = np.triu(G, 1) + np.triu(G, 1).conj().T + np.diag(np.diag(G).real + ridge)
    return HermitianView(G)


def cholesky_invert(S) -> np.ndarray:
    """Invert a Hermitian positive-definite matrix through its Cholesky factor.

    Raises NotPositiveDefiniteError carrying the zero-based index of the first
    non-positive pivot.
    """
    S = as_hermitian(S).data
    c, info = lapack.zpotrf(S, lower=True, clean=True)
    if info > 0:
        raise NotPositiveDefiniteError(info - 1)
    if info < 0:
        raise NumericalFailure(f"zpotrf rejected argument {-info}")
    inv, info = lapack.zpotri(c, lower=True)
    if info != 0:
        raise NumericalFailure(f"zpotri failed with info={info}")
    low = np.tril(inv, -1)
    return low + low.conj().T + np.diag(np.diag(inv).real)


def _tri_solve(T, rhs, lower: bool) -> np.ndarray:
    T = as_cmatrix(T, "triangular matrix", square=True)
    rhs = as_cvector(rhs, "rhs")
    if rhs.shape[0] != T.shape[0]:
        raise InvalidInputError(f"rhs length {rhs.shape[0]} does not match matrix order {T.shape[0]}")
    off = np.triu(T, 1) if lower else np.tril(T, -1)
    if np.any(off != 0):
        raise InvalidInputError(f"matrix is not {'lower' if lower else 'upper'}-triangular")
    zero = np.flatnonzero(np.diag(T) == 0)
    if zero.size:
        raise SingularTriangularError(zero[0])
    return sla.solve_triangular(T, rhs, lower=lower, check_finite=False)


def lower_tri_solve(Lo, rhs) -> np.ndarray:
    """Forward substitution ``Lo z = rhs`` for square lower-triangular ``Lo``."""
    return _tri_solve(Lo, rhs, lower=True)


def upper_tri_solve(Up, rhs) -> np.ndarray:
    """Back substitution ``Up z = rhs`` for square upper-triangular ``Up``."""
    return _tri_solve(Up, rhs, lower=False)


def extreme_eigenvalues(S) -> tuple[float, float]:
    """Smallest and largest eigenvalue of a Hermitian matrix (full eigendecomposition)."""
    S = as_hermitian(S).data
    try:
        w = np.linalg.eigvalsh(S)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"Hermitian eigensolver did not converge: {exc}") from exc
    return float(w[0]), float(w[-1])


def spectral_norm(X) -> float:
    """Largest singular value of ``X``."""
    X = as_cmatrix(X, "X")
    if not np.any(X):
        return 0.0
    try:
        return float(np.linalg.norm(X, 2))
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"SVD did not converge: {exc}") from exc


def splitting(A) -> tuple[np.ndarray, np.ndarray]:
    """Split a Hermitian matrix as ``A = D + L + L^H``.

    Returns the diagonal part ``D`` and the strictly lower-triangular part ``L``
    as full matrices.
    """
    A = as_hermitian(A).data
    return np.diag(np.diag(A)), np.tril(A, -1)
