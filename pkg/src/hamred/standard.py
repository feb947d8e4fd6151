"""Explicit-basis reduction: Gram-based POD, cSVD, DEIM and SDEIM assembly.

These routines form every basis matrix explicitly and therefore cost O(N)
per call.  They are the baselines for the experiments and the oracles the
dictionary-based online phase is checked against.
"""

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as la

from .errors import (ContractError, DegenerateSpectrumError, DimensionError,
                     EmptyBasisError, SingularInterpolationError)
from .models import as_param
from .reduced import HyperReduction, ReducedSystem
from .symplectic import (TOL_SYMP, apply_poisson, apply_poisson_t, poisson_matrix,
                         symplectic_defect, symplectic_inverse_apply)

PAIR_TOL = 1e-8


def fix_phase(vec):
    """Scale each column so its largest-magnitude entry (lowest index on ties) is real positive."""
    if vec.size == 0:
        return vec
    idx = np.argmax(np.abs(vec), axis=0)
    pivot = vec[idx, np.arange(vec.shape[1])]
    mag = np.abs(pivot)
    # zero columns (padding) keep their phase
    out = vec / np.where(mag > 0, pivot / np.where(mag > 0, mag, 1.0), 1.0)
    return out if np.iscomplexobj(vec) else out.real


def sorted_eigh(G):
    """Eigen-decomposition of a symmetric or Hermitian matrix, descending.

    Eigenvectors follow the sign convention of :func:`fix_phase`.
    """
    lam, vec = np.linalg.eigh(G)
    return lam[::-1], fix_phase(vec[:, ::-1])


def right_singular(A):
    """Squared singular values (descending) and right singular vectors of ``A``.

    The pair ``(s**2, W)`` equals the eigen-decomposition of ``A^H A`` in exact
    arithmetic but keeps full accuracy for small singular values.  For
    complex ``A`` the vectors are those of ``conj(A^H A)``, i.e. of
    ``G - i GJ`` when ``A`` is the complex form ``X_q + i X_p``.
    """
    _, s, Wh = np.linalg.svd(A, full_matrices=False)
    lam = np.zeros(A.shape[1])
    lam[: s.size] = s**2
    W = Wh.T  # for complex A this is conj(W)
    if W.shape[1] < A.shape[1]:
        W = np.hstack([W, np.zeros((W.shape[0], A.shape[1] - W.shape[1]), dtype=W.dtype)])
    return lam, fix_phase(W)


def complex_form(X):
    """``X_q + i X_p`` for a real matrix with 2N rows."""
    n = X.shape[0] // 2
    return X[:n] + 1j * X[n:]


def numerical_rank(eigenvalues, n=None, squared=False):
    """Number of eigenvalues above ``n * eps_machine * lambda_max``.

    With ``squared`` the eigenvalues are squared singular values computed
    by an SVD, which resolves them down to ``(n * eps_machine)^2 * lambda_max``.
    """
    lam = np.asarray(eigenvalues)
    if lam.size == 0 or lam[0] <= 0:
        return 0
    n = lam.size if n is None else n
    tol = n * np.finfo(float).eps
    return int(np.count_nonzero(lam > (tol * tol if squared else tol) * lam[0]))


def energy_rank(eigenvalues, eps):
    """Smallest ``r`` with ``sum(lam[:r]) > (1 - eps) * sum(lam)``.

    Only positive eigenvalues take part.
    """
    if not 0 < eps < 1:
        raise ContractError("energy tolerance must lie in (0, 1)")
    lam = np.clip(np.asarray(eigenvalues, dtype=float), 0.0, None)
    total = lam.sum()
    if total <= 0:
        return 0
    partial = np.cumsum(lam)
    hit = np.flatnonzero(partial > (1 - eps) * total)
    return int(hit[0] + 1) if hit.size else lam.size


@dataclass
class PodResult:
    basis: np.ndarray
    eigenvalues: np.ndarray
    rank: int


def pod(snapshots, m, route="gram"):
    """POD basis of rank ``m``.

    ``route="gram"`` is the method of snapshots on ``X^T X``;
    ``route="svd"`` takes the left singular vectors of ``X``, which stay
    orthonormal to machine precision even for tiny singular values.
    """
    X = np.asarray(snapshots, dtype=float)
    if m <= 0:
        raise ContractError("POD rank must be positive")
    if route == "svd":
        U, sv, _ = np.linalg.svd(X, full_matrices=False)
        lam = _padded_squares(sv, X.shape[1])
    else:
        lam, phi = _gram_or_svd(X, route)
    r = numerical_rank(lam, X.shape[1], squared=route == "svd")
    if r == 0:
        raise EmptyBasisError("snapshot matrix is zero")
    if m > r:
        warnings.warn(f"POD rank {m} truncated to numerical rank {r}", stacklevel=2)
        m = r
    V = fix_phase(U[:, :m]) if route == "svd" else X @ (phi[:, :m] / np.sqrt(lam[:m]))
    return PodResult(V, lam, m)


def _padded_squares(sv, n):
    lam = np.zeros(n)
    lam[: sv.size] = sv**2
    return lam


def _gram_or_svd(X, route):
    if route == "gram":
        return sorted_eigh(X.T @ X)
    if route == "svd":
        return right_singular(X)
    raise ContractError(f"unknown route {route!r}")


def _pairing_check(lam, n_pairs, tol=PAIR_TOL):
    scale = tol * lam[0]
    for i in range(n_pairs):
        if abs(lam[2 * i] - lam[2 * i + 1]) > scale:
            raise DegenerateSpectrumError(
                f"eigenvalues {2 * i + 1} and {2 * i + 2} are not paired: {lam[2 * i]:.6e} vs {lam[2 * i + 1]:.6e}")
        if 2 * i + 2 < lam.size and abs(lam[2 * i + 1] - lam[2 * i + 2]) <= scale and lam[2 * i + 2] > scale:
            raise DegenerateSpectrumError(
                f"eigenvalue {lam[2 * i]:.6e} has multiplicity four or higher; pair selection is ambiguous")


def csvd_via_pod_of_y(snapshots, two_n):
    """Symplectic basis from a POD of ``Y = [X, J X]``, every second vector.

    Raises :class:`DegenerateSpectrumError` if the spectrum of ``Y^T Y`` is
    not cleanly paired or a pair coincides with its neighbour.
    """
    X = np.asarray(snapshots, dtype=float)
    if two_n % 2 or two_n <= 0:
        raise DimensionError("target size must be positive and even")
    if not np.any(X):
        raise EmptyBasisError("snapshot matrix is zero")
    Y = np.hstack([X, apply_poisson(X)])
    lam, phi = sorted_eigh(Y.T @ Y)
    r = numerical_rank(lam, Y.shape[1])
    n = min(two_n // 2, r // 2)
    if n < two_n // 2:
        warnings.warn(f"cSVD size {two_n} truncated to {2 * n}", stacklevel=2)
    _pairing_check(lam, n)
    cols = np.arange(0, 2 * n, 2)
    VY = Y @ (phi[:, cols] / np.sqrt(lam[cols]))
    return np.hstack([VY, apply_poisson_t(VY)])


def hermitian_pairs(G, GJ):
    """Eigenpairs of ``[[G, GJ], [-GJ, G]]``, one representative per pair.

    The block matrix is the real form of the Hermitian matrix ``G - i GJ``;
    an eigenvector ``z`` of the latter gives the real eigenvector
    ``[Re z; Im z]`` and its partner ``[-Im z; Re z]`` with the same
    eigenvalue.  Returns eigenvalues (descending, one per pair) and the
    ``2n x n`` matrix of representatives.
    """
    G = np.asarray(G, dtype=float)
    lam, z = sorted_eigh(G - 1j * np.asarray(GJ, dtype=float))
    return lam, np.vstack([z.real, z.imag])


def pair_count(lam_pairs, eps=None, k=None, n_cols=None, squared=False):
    """Number of symplectic pairs to keep from the pair spectrum."""
    avail = numerical_rank(lam_pairs, 2 * (n_cols or lam_pairs.size), squared)
    if eps is not None:
        k = min(energy_rank(lam_pairs[:avail], eps), avail)
    elif k is None:
        raise ContractError("give either eps or k")
    elif k > avail:
        warnings.warn(f"cSVD half size {k} truncated to {avail}", stacklevel=3)
        k = avail
    return k


@dataclass
class CsvdResult:
    basis: np.ndarray
    eigenvalues: np.ndarray
    half_rank: int


def complex_pairs(A):
    """:func:`hermitian_pairs` from a complex factor ``A`` with ``A^H A = G + i GJ``."""
    lam, w = right_singular(A)
    return lam, np.vstack([w.real, w.imag])


def csvd(snapshots, two_n=None, eps=None, route="gram"):
    """Orthonormal symplectic basis of size ``2k`` from ``X``.

    ``route="gram"`` uses the Hermitian pair decomposition of
    ``[X, JX]^T [X, JX]``, which agrees with :func:`csvd_via_pod_of_y` up to
    a rotation inside each pair but cannot mix pairs when eigenvalues
    cluster.  ``route="svd"`` takes the pairs ``[Re u; Im u]`` from the left
    singular vectors ``u`` of the complex form ``X_q + i X_p``.
    """
    X = np.asarray(snapshots, dtype=float)
    if route == "gram":
        JX = apply_poisson(X)
        lam, C = hermitian_pairs(X.T @ X, X.T @ JX)
    elif route == "svd":
        U, sv, _ = np.linalg.svd(complex_form(X), full_matrices=False)
        lam = _padded_squares(sv, X.shape[1])
    else:
        raise ContractError(f"unknown route {route!r}")
    k = pair_count(lam, eps=eps, k=None if two_n is None else two_n // 2, n_cols=X.shape[1],
                   squared=route == "svd")
    if k == 0:
        raise EmptyBasisError("snapshot matrix is zero")
    if route == "svd":
        Uk = fix_phase(U[:, :k])
        W = np.vstack([Uk.real, Uk.imag])
    else:
        n = X.shape[1]
        phi = C[:, :k] / np.sqrt(lam[:k])
        W = X @ phi[:n] + JX @ phi[n:]
    return CsvdResult(np.hstack([W, apply_poisson_t(W)]), lam, k)


@dataclass
class DeimResult:
    indices: np.ndarray

    def select(self, A):
        """``P^T A`` by row selection."""
        return np.asarray(A)[self.indices]

    def __len__(self):
        return self.indices.size


def deim(U, singular_tol=1e-13):
    """Greedy DEIM interpolation indices of the columns of ``U``.

    Implemented as column elimination: after step ``l`` every later column
    holds its interpolation residual with respect to the first ``l`` pivots,
    which is the residual the textbook loop recomputes from scratch.  Each
    row is updated only from its own entries and the pivot rows, so running
    on a subset of rows that contains the pivots reproduces the same values
    on that subset.
    """
    R = np.array(U, dtype=float, copy=True)
    if R.ndim != 2:
        raise DimensionError("DEIM input must be a matrix")
    n, m = R.shape
    if m > n:
        raise ContractError("DEIM needs at most as many columns as rows")
    idx = np.empty(m, dtype=np.int64)
    for l in range(m):
        col = R[:, l]
        p = int(np.argmax(np.abs(col)))
        scale = np.abs(U[:, l]).max()
        if not abs(col[p]) > singular_tol * scale:
            raise SingularInterpolationError(
                f"DEIM interpolation system is singular at column {l + 1}", column=l + 1)
        idx[l] = p
        if l + 1 < m:
            R[:, l + 1:] -= np.outer(col, R[p, l + 1:] / col[p])
    return DeimResult(idx)


@dataclass
class ReducedLinear:
    system: ReducedSystem
    x0: np.ndarray


def _check_mode(V, mode, tol=TOL_SYMP):
    if mode not in ("symplectic", "orthogonal"):
        raise ContractError(f"unknown projection mode {mode!r}")
    if mode == "symplectic":
        d = symplectic_defect(V)
        if d > tol:
            raise ContractError(f"symplectic projection needs a symplectic basis (defect {d:.2e})")


def assemble_reduced_linear(V, model, mu, mode="symplectic", tol=TOL_SYMP):
    """Galerkin-type reduced operator, initial value and forcing.

    ``symplectic``: ``A_r = J_2k V^T H V``, ``x_r0 = V^+ x0``, forcing
    ``J_2k V^T b``.  ``orthogonal``: ``A_r = V^T J H V``, ``x_r0 = V^T x0``.
    """
    V = np.asarray(V, dtype=float)
    _check_mode(V, mode, tol)
    mu = as_param(mu)
    HV = model.H(mu) @ V
    b = model.b(mu)
    x0 = model.x0(mu)
    if mode == "symplectic":
        K = V.T @ HV
        K = 0.5 * (K + K.T)
        J2k = poisson_matrix(V.shape[1])
        c = None if b is None else J2k @ (V.T @ b)
        sys = ReducedSystem(J2k @ K, c, K=K)
        return ReducedLinear(sys, symplectic_inverse_apply(V, x0, check=False))
    A = V.T @ apply_poisson(HV)
    c = None if b is None else V.T @ apply_poisson(b)
    return ReducedLinear(ReducedSystem(A, c), V.T @ x0)


def interpolation_coefficients(VtU, U_rows):
    """``V^T U (P^T U)^{-1}`` without forming the inverse."""
    try:
        lu = la.lu_factor(U_rows)
    except (la.LinAlgError, ValueError) as exc:
        raise SingularInterpolationError(f"P^T U is singular: {exc}") from exc
    piv = np.abs(np.diag(lu[0]))
    if piv.size and not piv.min() > 1e-14 * piv.max():
        raise SingularInterpolationError("P^T U is numerically singular")
    return la.lu_solve(lu, VtU.T, trans=1).T


def assemble_sdeim(V, U, deim_result, model, mu, mode="symplectic", tol=TOL_SYMP):
    """(S)DEIM reduced system with an explicit basis.

    ``symplectic``: ``dy/dt = J V^T H V y + J V^T U (P^T U)^{-1} g(y) + J V^T b``
    with ``g(y) = P^T f_nl(V y)`` evaluated row by row.  ``orthogonal``
    uses ``V^T J`` in place of ``J V^T``.
    """
    red = assemble_reduced_linear(V, model, mu, mode, tol)
    U = np.asarray(U, dtype=float)
    if U.shape[1] == 0 or model.nonlinearity is None:
        return red
    rows = deim_result.indices
    if mode == "symplectic":
        left = poisson_matrix(V.shape[1]) @ (V.T @ U)
    else:
        left = V.T @ apply_poisson(U)
    coeff = interpolation_coefficients(left, U[rows])
    nl = model.nonlinearity
    src = nl.source[rows]
    state_rows = np.where((src >= 0)[:, None], V[np.maximum(src, 0)], 0.0)
    red.system.hyper = HyperReduction(rows, state_rows, coeff, nl, as_param(mu))
    return red
