"""Reduced systems shared by the explicit and dictionary-based pipelines."""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .integrators import MidpointLinearStepper, NewtonSettings, midpoint_step_nonlinear
from .models import as_param


@dataclass
class HyperReduction:
    """Interpolated nonlinearity ``coeff @ f_rows(state_rows @ y)``.

    ``rows`` are global nonlinearity rows (the composed DEIM indices),
    ``state_rows`` the matching rows of the basis (rows of ``V`` indexed by
    the state entry each nonlinearity row reads) and ``coeff`` the reduced
    left factor, e.g. ``J_2k V^T U (P^T U)^{-1}``.
    """

    rows: np.ndarray
    state_rows: np.ndarray
    coeff: np.ndarray
    nonlinearity: object
    mu: np.ndarray

    @property
    def size(self):
        return self.rows.size

    def values(self, y):
        return self.nonlinearity.eval_rows(self.rows, self.state_rows @ y, self.mu)

    def __call__(self, y):
        return self.coeff @ self.values(y)

    def jacobian(self, y):
        d = self.nonlinearity.deriv_rows(self.rows, self.state_rows @ y, self.mu)
        return self.coeff @ (d[:, None] * self.state_rows)


@dataclass
class ReducedSystem:
    """``dy/dt = A y + c + hyper(y)`` in reduced coordinates.

    For symplectic reductions ``A = J_{2k} K`` with ``K`` the symmetric
    reduced Hamiltonian matrix; ``K`` is kept for diagnostics.
    """

    A: np.ndarray
    c: Optional[np.ndarray] = None
    hyper: Optional[HyperReduction] = None
    K: Optional[np.ndarray] = None
    newton: NewtonSettings = field(default_factory=NewtonSettings)

    @property
    def dim(self):
        return self.A.shape[0]

    @property
    def is_linear(self):
        return self.hyper is None or self.hyper.size == 0

    def rhs(self, y, t=None):
        out = self.A @ y
        if self.c is not None:
            out = out + self.c
        if not self.is_linear:
            out = out + self.hyper(y)
        return out

    def jacobian(self, y, t=None):
        if self.is_linear:
            return self.A
        return self.A + self.hyper.jacobian(y)

    def stepper(self, dt):
        """Return a callable advancing one midpoint step."""
        if self.is_linear:
            lin = MidpointLinearStepper(self.A, dt)
            return lambda y, t: lin.step(y, self.c)
        return lambda y, t: midpoint_step_nonlinear(self.rhs, self.jacobian, y, t, dt, self.newton)[0]

    def advance(self, y, n_steps, t, dt):
        """States after 1..n_steps midpoint steps, one per column."""
        step = self.stepper(dt)
        out = np.empty((y.size, n_steps))
        for j in range(n_steps):
            y = step(y, t + j * dt)
            out[:, j] = y
        return out


def reduced_trajectory(system, y0, n_t, dt, t0=0.0):
    traj = np.empty((y0.size, n_t + 1))
    traj[:, 0] = y0
    traj[:, 1:] = system.advance(np.asarray(y0, dtype=float), n_t, t0, dt)
    return traj


def param(mu):
    return as_param(mu)
