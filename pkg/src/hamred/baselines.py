"""Full-order and explicit-basis reduced runs used as baselines."""

import time
import warnings
from dataclasses import dataclass

import numpy as np

from .dictionary import offline_only
from .errors import ContractError
from .integrators import NewtonSettings, integrate
from .reduced import reduced_trajectory
from .symplectic import apply_poisson, apply_poisson_t
from .standard import (DeimResult, assemble_reduced_linear, assemble_sdeim, csvd, deim, energy_rank,
                       numerical_rank, pod)

STANDARD_METHODS = ("pod", "csvd", "pod-deim", "csvd-sdeim")


@dataclass
class StandardBasis:
    """Largest explicit basis from all dictionary snapshots; truncated on demand."""

    mode: str
    full: np.ndarray
    eigenvalues: np.ndarray
    max_size: int

    def truncate(self, size):
        if self.mode == "pod":
            return self.full[:, :size]
        half = self.full.shape[1] // 2
        k = min(size // 2, half)
        if k < size // 2:
            warnings.warn(f"cSVD size {size} truncated to {2 * k}", stacklevel=2)
        return np.hstack([self.full[:, :k], self.full[:, half:half + k]])


@offline_only
def standard_basis(X, mode, max_size=None, route="svd"):
    """POD or cSVD basis of all snapshots, computed once for a sweep."""
    if mode == "pod":
        size = max_size or X.shape[1]
        res = pod(X, size, route=route)
        return StandardBasis("pod", res.basis, res.eigenvalues, res.rank)
    if mode == "csvd":
        two_n = max_size or 2 * X.shape[1]
        res = csvd(X, two_n=two_n - two_n % 2, route=route)
        return StandardBasis("csvd", res.basis, res.eigenvalues, 2 * res.half_rank)
    raise ContractError(f"unknown basis mode {mode!r}")


@offline_only
def nonlinear_basis(F, eps):
    """DEIM basis of the nonlinearity snapshots and its indices."""
    U, s, _ = np.linalg.svd(F, full_matrices=False)
    lam = s**2
    r = numerical_rank(lam, F.shape[1], squared=True)
    m = min(energy_rank(lam[:r], eps), r) if r else 0
    U = U[:, :m]
    return U, deim(U) if m else DeimResult(np.zeros(0, dtype=np.int64))


@dataclass
class BaselineRun:
    method: str
    mu: np.ndarray
    reconstructed: np.ndarray
    basis_size: int
    hyper_size: int
    online_seconds: float


@offline_only
def run_fom(model, mu, newton=NewtonSettings()):
    tic = time.perf_counter()
    traj = integrate(model, mu, settings=newton)
    return traj, time.perf_counter() - tic


@offline_only
def run_standard(model, mu, method, V, nonlinear=None, newton=NewtonSettings()):
    """Reduced run with an explicit basis ``V`` (and ``(U, deim)`` for hyper-reduction).

    The timed part covers assembly of the reduced system and time stepping;
    the reconstruction afterwards is diagnostic.
    """
    if method not in STANDARD_METHODS:
        raise ContractError(f"unknown standard method {method!r}")
    mode = "symplectic" if method.startswith("csvd") else "orthogonal"
    tic = time.perf_counter()
    if method.endswith("deim"):
        if nonlinear is None:
            raise ContractError(f"{method} needs a nonlinearity basis")
        U, dr = nonlinear
        red = assemble_sdeim(V, U, dr, model, mu, mode=mode, tol=1e-6)
        hyper_size = len(dr)
    else:
        red = assemble_reduced_linear(V, model, mu, mode=mode, tol=1e-6)
        hyper_size = 0
    red.system.newton = newton
    if not red.system.is_linear or model.nonlinearity is None:
        traj = reduced_trajectory(red.system, red.x0, model.n_t, model.dt(mu), model.t0)
    else:
        traj = _unreduced_nonlinear(model, mu, V, red, mode)
    elapsed = time.perf_counter() - tic
    return BaselineRun(method, np.atleast_1d(mu), V @ traj, V.shape[1], hyper_size, elapsed)


class ProjectedNonlinearity:
    """``left @ f_nl(V y)`` evaluated on the full grid (no hyper-reduction)."""

    def __init__(self, left, V, nonlinearity, mu):
        self.left, self.V, self.nl, self.mu = left, V, nonlinearity, np.atleast_1d(mu)

    @property
    def size(self):
        return self.nl.active.size

    def __call__(self, y):
        return self.left @ self.nl(self.V @ y, self.mu)

    def jacobian(self, y):
        return self.left @ (self.nl.jacobian(self.V @ y, self.mu) @ self.V)


def _unreduced_nonlinear(model, mu, V, red, mode):
    left = apply_poisson(V.T) if mode == "symplectic" else apply_poisson_t(V).T
    red.system.hyper = ProjectedNonlinearity(left, V, model.nonlinearity, mu)
    return reduced_trajectory(red.system, red.x0, model.n_t, model.dt(mu), model.t0)
