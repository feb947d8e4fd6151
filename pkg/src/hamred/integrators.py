"""Implicit midpoint time stepping for full and reduced systems."""

import logging
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ContractError, HamredError, NewtonConvergenceError

log = logging.getLogger(__name__)

STAGNATION = 1e-14


@dataclass(frozen=True)
class TimeGrid:
    t0: float
    t_end: float
    n_t: int

    def __post_init__(self):
        if self.n_t < 1 or not self.t_end > self.t0:
            raise ContractError("time grid needs n_t >= 1 and t_end > t0")

    @property
    def dt(self):
        return (self.t_end - self.t0) / self.n_t

    def times(self):
        return self.t0 + self.dt * np.arange(self.n_t + 1)

    @classmethod
    def for_model(cls, model, mu):
        return cls(model.t0, model.t_end(mu), model.n_t)


@dataclass(frozen=True)
class NewtonSettings:
    tol: float = 1e-10
    max_iter: int = 25
    jacobian: str = "analytic"

    def __post_init__(self):
        if self.tol <= 0 or self.max_iter < 1:
            raise ContractError("Newton tolerance must be positive and max_iter >= 1")
        if self.jacobian not in ("analytic", "finite-difference"):
            raise ContractError(f"unknown Jacobian mode {self.jacobian!r}")


class MidpointLinearStepper:
    """Midpoint steps for ``dx/dt = A x + c`` with a fixed ``A`` and step size.

    The matrix ``I - dt/2 A`` is factorised once (sparse LU for sparse ``A``,
    dense LU otherwise) and reused for every call to :meth:`step`.
    """

    def __init__(self, A, dt):
        self.dt = float(dt)
        n = A.shape[0]
        if sp.issparse(A):
            A = sp.csc_matrix(A)
            self._rhs_op = (sp.identity(n, format="csc") + 0.5 * dt * A).tocsr()
            try:
                self._lu = spla.splu((sp.identity(n, format="csc") - 0.5 * dt * A).tocsc())
            except RuntimeError as exc:
                raise HamredError(f"midpoint matrix is singular: {exc}") from exc
            self._solve = self._lu.solve
        else:
            A = np.asarray(A, dtype=float)
            M = np.eye(n) - 0.5 * dt * A
            self._rhs_op = np.eye(n) + 0.5 * dt * A
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", la.LinAlgWarning)
                self._lu = la.lu_factor(M, check_finite=False)
            piv = np.abs(np.diag(self._lu[0]))
            ratio = piv.min() / piv.max() if n and piv.max() > 0 else float(n == 0)
            if not ratio > 1e-15:
                raise HamredError(f"midpoint matrix is singular (pivot ratio {ratio:.2e})")
            self._solve = lambda r: la.lu_solve(self._lu, r, check_finite=False)

    def step(self, x, c=None):
        r = self._rhs_op @ x
        if c is not None:
            r = r + self.dt * c
        return self._solve(r)


def midpoint_step_linear(A, c, x, dt):
    """One midpoint step of ``dx/dt = A x + c``."""
    return MidpointLinearStepper(A, dt).step(np.asarray(x, dtype=float), c)


def _fd_jacobian(rhs, x, t, h=1e-7):
    f0 = rhs(x, t)
    J = np.empty((x.size, x.size))
    for j in range(x.size):
        e = np.zeros_like(x)
        step = h * max(1.0, abs(x[j]))
        e[j] = step
        J[:, j] = (rhs(x + e, t) - f0) / step
    return J


def midpoint_step_nonlinear(rhs, rhs_jacobian, x, t, dt, settings=NewtonSettings()):
    """Newton-solved implicit midpoint step.

    Solves ``y - x - dt * rhs((x + y) / 2, t + dt / 2) = 0`` starting from
    ``y = x``.  Iteration also stops when the Newton update is at roundoff
    level of ``y``, since the residual cannot decrease further.  Returns
    ``(y, iterations)``.
    """
    x = np.asarray(x, dtype=float)
    tm = t + 0.5 * dt
    y = x.copy()
    n = x.size
    for it in range(settings.max_iter + 1):
        mid = 0.5 * (x + y)
        res = y - x - dt * rhs(mid, tm)
        rnorm = np.linalg.norm(res)
        if rnorm <= settings.tol:
            return y, it
        if it == settings.max_iter:
            break
        if settings.jacobian == "analytic":
            Jf = rhs_jacobian(mid, tm)
        else:
            Jf = _fd_jacobian(rhs, mid, tm)
        if sp.issparse(Jf):
            M = (sp.identity(n, format="csc") - 0.5 * dt * Jf).tocsc()
            delta = spla.spsolve(M, res)
        else:
            delta = np.linalg.solve(np.eye(n) - 0.5 * dt * np.asarray(Jf), res)
        y = y - delta
        if it > 0 and np.linalg.norm(delta) <= STAGNATION * max(1.0, np.linalg.norm(y)):
            log.debug("Newton stagnated at residual %.3e", rnorm)
            return y, it + 1
    raise NewtonConvergenceError(
        f"Newton did not converge in {settings.max_iter} iterations (residual {rnorm:.3e})",
        residual=rnorm,
    )


def integrate(system, mu, grid=None, settings=NewtonSettings(), x0=None):
    """Midpoint trajectory of a full model, one column per time step.

    ``system`` is an :class:`~hamred.models.AffineHamiltonianModel` (or any
    object with the same ``H``, ``b``, ``x0``, ``rhs`` and ``rhs_jacobian``
    methods).  Linear systems reuse a single factorisation.
    """
    from .symplectic import apply_poisson

    if grid is None:
        grid = TimeGrid.for_model(system, mu)
    x = system.x0(mu) if x0 is None else np.asarray(x0, dtype=float)
    traj = np.empty((x.size, grid.n_t + 1))
    traj[:, 0] = x
    times = grid.times()
    if system.is_linear:
        A = _poisson_rows(system.H(mu))
        b = system.b(mu)
        c = None if b is None else apply_poisson(b)
        stepper = MidpointLinearStepper(A, grid.dt)
        for j in range(grid.n_t):
            x = stepper.step(x, c)
            traj[:, j + 1] = x
        return traj
    rhs = lambda y, t: system.rhs(y, t, mu)
    jac = lambda y, t: system.rhs_jacobian(y, t, mu)
    total = 0
    for j in range(grid.n_t):
        try:
            x, its = midpoint_step_nonlinear(rhs, jac, x, times[j], grid.dt, settings)
        except NewtonConvergenceError as exc:
            exc.step = j
            raise NewtonConvergenceError(f"step {j}: {exc}", residual=exc.residual, step=j) from exc
        total += its
        traj[:, j + 1] = x
    log.debug("integrated %d steps with %d Newton iterations", grid.n_t, total)
    return traj


def _poisson_rows(H):
    """``J H`` for a sparse ``H`` via a row permutation."""
    H = sp.csr_matrix(H)
    n = H.shape[0] // 2
    return sp.vstack([H[n:], -H[:n]], format="csr")
