"""Canonical Poisson structure on R^{2N} and symplectic basis utilities.

The Poisson tensor ``J = [[0, I], [-I, 0]]`` is never multiplied densely;
every application is a half swap with a sign flip along the first axis, so
it works for vectors and for column-stacked matrices alike.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DimensionError

TOL_SYMP = 1e-10
DENSE_J_LIMIT = 2000


def _half(n, what="input"):
    if n % 2:
        raise DimensionError(f"{what} has odd leading dimension {n}")
    return n // 2


def apply_poisson(x):
    """Return ``J x`` for a vector or a matrix with 2N rows."""
    x = np.asarray(x)
    n = _half(x.shape[0])
    out = np.empty_like(x, dtype=np.result_type(x, float))
    out[:n] = x[n:]
    out[n:] = -x[:n]
    return out


def apply_poisson_t(x):
    """Return ``J^T x`` (equal to ``-J x``)."""
    x = np.asarray(x)
    n = _half(x.shape[0])
    out = np.empty_like(x, dtype=np.result_type(x, float))
    out[:n] = -x[n:]
    out[n:] = x[:n]
    return out


def poisson_matrix(two_k):
    """Dense ``J_{2k}``; only meant for reduced dimensions."""
    k = _half(two_k, "J")
    if two_k > DENSE_J_LIMIT:
        raise DimensionError(f"refusing to materialise J of size {two_k}")
    J = np.zeros((two_k, two_k))
    J[:k, k:] = np.eye(k)
    J[k:, :k] = -np.eye(k)
    return J


@dataclass(frozen=True)
class PoissonStructure:
    """Implicit canonical Poisson tensor of size 2N x 2N."""

    half_dim: int

    def __post_init__(self):
        if self.half_dim < 1:
            raise DimensionError("half_dim must be positive")

    @property
    def dim(self):
        return 2 * self.half_dim

    def _check(self, x):
        if np.shape(x)[0] != self.dim:
            raise DimensionError(f"expected leading dimension {self.dim}, got {np.shape(x)[0]}")

    def apply(self, x):
        self._check(x)
        return apply_poisson(x)

    def apply_t(self, x):
        self._check(x)
        return apply_poisson_t(x)

    def dense(self):
        return poisson_matrix(self.dim)


def _check_basis(V):
    V = np.asarray(V, dtype=float)
    if V.ndim != 2:
        raise DimensionError("basis must be a matrix")
    _half(V.shape[0], "basis row count")
    _half(V.shape[1], "basis column count")
    if V.shape[1] > V.shape[0]:
        raise DimensionError("basis has more columns than rows")
    return V


def symplectic_defect(V):
    """Frobenius norm of ``V^T J_{2N} V - J_{2k}``."""
    V = _check_basis(V)
    return float(np.linalg.norm(V.T @ apply_poisson(V) - poisson_matrix(V.shape[1])))


def orthonormality_defect(V):
    V = np.asarray(V, dtype=float)
    return float(np.linalg.norm(V.T @ V - np.eye(V.shape[1])))


def symplectic_inverse_apply(V, x, tol=TOL_SYMP, check=True):
    """Apply the symplectic inverse ``V^+ = J_{2k}^T V^T J_{2N}`` to ``x``.

    ``x`` may be a vector or a matrix of column vectors.  With ``check`` the
    basis is first verified to be symplectic within ``tol``.
    """
    V = _check_basis(V)
    x = np.asarray(x, dtype=float)
    if x.shape[0] != V.shape[0]:
        raise DimensionError(f"vector length {x.shape[0]} does not match basis rows {V.shape[0]}")
    if check:
        defect = symplectic_defect(V)
        if defect > tol:
            raise ContractError(f"basis is not symplectic: defect {defect:.3e} > {tol:.1e}")
    return apply_poisson_t(V.T @ apply_poisson(x))


def symplectic_projector_apply(V, x, check=False):
    """``V V^+ x``; diagnostic helper that forms full-size vectors."""
    return V @ symplectic_inverse_apply(V, x, check=check)
