"""Parametric full-order Hamiltonian models.

A model is ``dx/dt = J (H(mu) x + f_nl(x; mu) + b(mu))`` with an affine,
sparse, symmetric ``H(mu) = sum_q theta_q(mu) H_q`` and an optional
pointwise nonlinearity in which every output component reads at most one
state entry.  Two benchmarks are provided: a 2D linear wave equation and
a homogenised 1D Sine-Gordon equation.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import ContractError, DimensionError
from .symplectic import apply_poisson


def as_param(mu):
    return np.atleast_1d(np.asarray(mu, dtype=float))


@dataclass(frozen=True)
class ParameterDomain:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo, up = as_param(self.lower), as_param(self.upper)
        if lo.shape != up.shape or np.any(lo >= up):
            raise ContractError("parameter domain needs lower < upper componentwise")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", up)

    @property
    def n_p(self):
        return self.lower.size

    def contains(self, mu, rtol=1e-12):
        mu = as_param(mu)
        span = self.upper - self.lower
        return mu.shape == self.lower.shape and bool(
            np.all(mu >= self.lower - rtol * span) and np.all(mu <= self.upper + rtol * span)
        )


@dataclass(frozen=True)
class PointwiseNonlinearity:
    """``f_nl(x; mu)_i = func(x[source[i]] + shift(i; mu))`` or 0 if ``source[i] < 0``.

    Attributes
    ----------
    func, deriv : callable
        Componentwise scalar function and its derivative.
    source : (2N,) int array
        State entry read by each output component, ``-1`` for none.
    shift : callable
        ``shift(rows, mu)`` returns the additive shift for the given output
        rows; it must cost O(len(rows)).
    antiderivative : callable, optional
        ``S`` with ``S' = func``, used by the Hamiltonian.
    """

    func: Callable
    deriv: Callable
    source: np.ndarray
    shift: Callable
    antiderivative: Optional[Callable] = None

    def __post_init__(self):
        src = np.asarray(self.source, dtype=np.int64)
        object.__setattr__(self, "source", src)
        object.__setattr__(self, "active", np.flatnonzero(src >= 0))

    def __call__(self, x, mu):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        rows = self.active
        arg = x[self.source[rows]] + _bcast(self.shift(rows, mu), x)
        out[rows] = self.func(arg)
        return out

    def jacobian(self, x, mu):
        """Sparse Jacobian with one entry per active row."""
        n = self.source.size
        rows = self.active
        vals = self.deriv(x[self.source[rows]] + self.shift(rows, mu))
        return sp.csr_matrix((vals, (rows, self.source[rows])), shape=(n, n))

    def eval_rows(self, rows, values, mu):
        """Evaluate only the requested components.

        ``values[j]`` is the state entry ``x[source[rows[j]]]``; it may be NaN
        (or anything) for rows without a source, but must be finite otherwise.
        """
        rows = np.asarray(rows, dtype=np.int64)
        values = np.asarray(values, dtype=float)
        if values.shape[0] != rows.shape[0]:
            raise DimensionError("one state value per requested row is required")
        if rows.size and (rows.min() < 0 or rows.max() >= self.source.size):
            raise ContractError("row index out of range")
        src = self.source[rows]
        need = src >= 0
        if not np.all(np.isfinite(values[need])):
            raise ContractError("missing state entry for a row that depends on the state")
        out = np.zeros(values.shape, dtype=float)
        if np.any(need):
            out[need] = self.func(values[need] + _bcast(self.shift(rows[need], mu), values[need]))
        return out

    def deriv_rows(self, rows, values, mu):
        rows = np.asarray(rows, dtype=np.int64)
        out = np.zeros(np.shape(values), dtype=float)
        need = self.source[rows] >= 0
        if np.any(need):
            out[need] = self.deriv(values[need] + _bcast(self.shift(rows[need], mu), values[need]))
        return out


def _bcast(shift, x):
    shift = np.asarray(shift, dtype=float)
    if x.ndim == 2 and shift.ndim == 1:
        return shift[:, None]
    return shift


@dataclass
class AffineHamiltonianModel:
    """Parametric Hamiltonian full-order model.

    ``initial_terms`` holds ``(sigma_r, x0_r)`` pairs so that
    ``x0(mu) = sum_r sigma_r(mu) x0_r``.  Models whose initial value is not
    affine provide ``initial_value`` instead.  ``hamiltonian_extra`` is the
    non-quadratic part of the Hamiltonian, with ``gradient_extra`` its
    gradient; both default to the pieces implied by the nonlinearity and
    forcing.
    """

    name: str
    half_dim: int
    affine_terms: Sequence
    domain: ParameterDomain
    end_time: Callable
    n_t: int
    t0: float = 0.0
    nonlinearity: Optional[PointwiseNonlinearity] = None
    forcing: Optional[Callable] = None
    initial_terms: Optional[Sequence] = None
    initial_value: Optional[Callable] = None
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        n2 = 2 * self.half_dim
        terms = []
        for theta, Hq in self.affine_terms:
            Hq = sp.csr_matrix(Hq)
            if Hq.shape != (n2, n2):
                raise DimensionError(f"affine term has shape {Hq.shape}, expected {(n2, n2)}")
            if abs(Hq - Hq.T).max() > 1e-12 * max(abs(Hq).max(), 1.0):
                raise ContractError("affine Hamiltonian terms must be symmetric")
            terms.append((theta, Hq))
        self.affine_terms = terms
        if self.initial_terms is None and self.initial_value is None:
            raise ContractError("model needs initial_terms or initial_value")
        if self.initial_terms is not None:
            self.initial_terms = [(s, np.asarray(v, dtype=float)) for s, v in self.initial_terms]

    @property
    def dim(self):
        return 2 * self.half_dim

    @property
    def is_linear(self):
        return self.nonlinearity is None

    @property
    def has_affine_initial(self):
        return self.initial_terms is not None

    def thetas(self, mu):
        mu = as_param(mu)
        return np.array([theta(mu) for theta, _ in self.affine_terms], dtype=float)

    def sigmas(self, mu):
        mu = as_param(mu)
        return np.array([s(mu) for s, _ in self.initial_terms], dtype=float)

    def H(self, mu):
        th = self.thetas(mu)
        out = sp.csr_matrix((self.dim, self.dim))
        for w, (_, Hq) in zip(th, self.affine_terms):
            if w != 0.0:
                out = out + w * Hq
        return out.tocsr()

    def x0(self, mu):
        mu = as_param(mu)
        if self.initial_terms is not None:
            out = np.zeros(self.dim)
            for s, v in self.initial_terms:
                out += s(mu) * v
            return out
        return np.asarray(self.initial_value(mu), dtype=float)

    def b(self, mu):
        if self.forcing is None:
            return None
        return np.asarray(self.forcing(as_param(mu)), dtype=float)

    def f_nl(self, x, mu):
        if self.nonlinearity is None:
            return np.zeros_like(np.asarray(x, dtype=float))
        return self.nonlinearity(x, as_param(mu))

    def t_end(self, mu):
        return float(self.end_time(as_param(mu)))

    def dt(self, mu):
        return (self.t_end(mu) - self.t0) / self.n_t

    def gradient(self, x, mu):
        """Gradient of the Hamiltonian: ``H(mu) x + f_nl(x) + b(mu)``."""
        x = np.asarray(x, dtype=float)
        self._check(x)
        g = self.H(mu) @ x
        if self.nonlinearity is not None:
            g = g + self.f_nl(x, mu)
        b = self.b(mu)
        if b is not None:
            g = g + (b[:, None] if x.ndim == 2 else b)
        return g

    def rhs(self, x, t, mu):
        return apply_poisson(self.gradient(x, mu))

    def rhs_jacobian(self, x, t, mu):
        Hm = self.H(mu)
        if self.nonlinearity is not None:
            Hm = Hm + self.nonlinearity.jacobian(np.asarray(x, dtype=float), as_param(mu))
        return sp.csr_matrix(_poisson_sparse(self.half_dim) @ Hm)

    def hamiltonian(self, x, mu):
        """Hamiltonian value; a matrix argument yields one value per column."""
        x = np.asarray(x, dtype=float)
        self._check(x)
        mu = as_param(mu)
        Hx = self.H(mu) @ x
        val = 0.5 * np.sum(x * Hx, axis=0)
        nl = self.nonlinearity
        if nl is not None:
            if nl.antiderivative is None:
                raise ContractError("nonlinearity lacks an antiderivative")
            rows = nl.active
            arg = x[nl.source[rows]] + _bcast(nl.shift(rows, mu), x[nl.source[rows]])
            val = val + np.sum(nl.antiderivative(arg), axis=0)
        b = self.b(mu)
        if b is not None:
            val = val + b @ x
        return val

    def _check(self, x):
        if np.shape(x)[0] != self.dim:
            raise DimensionError(f"state has length {np.shape(x)[0]}, model dimension is {self.dim}")


def eval_rhs(model, x, t, mu):
    x = np.asarray(x, dtype=float)
    model._check(x)
    return model.rhs(x, t, mu)


def eval_nonlinearity_rows(model, row_indices, needed_state_entries, mu):
    """Selected components of ``f_nl`` from the state entries they read.

    Rows without a nonlinearity (or models without one) return 0.
    """
    rows = np.asarray(row_indices, dtype=np.int64)
    if model.nonlinearity is None:
        return np.zeros(rows.shape)
    return model.nonlinearity.eval_rows(rows, needed_state_entries, as_param(mu))


def _poisson_sparse(n):
    eye = sp.identity(n, format="csr")
    return sp.bmat([[None, eye], [-eye, None]], format="csr")


# ---------------------------------------------------------------------------
# benchmark 1: 2D linear wave equation


def _second_difference(n, length):
    h = length / (n + 1)
    return sp.diags([-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1], format="csr") / h**2


def bump(s):
    """Cubic B-spline bump ``h(s)`` with support ``|s| <= 2``."""
    a = np.abs(s)
    return np.where(a <= 1, 1 - 1.5 * a**2 + 0.75 * a**3, np.where(a <= 2, 0.25 * (2 - a) ** 3, 0.0))


def bump_slope(s):
    """Derivative of :func:`bump`."""
    s = np.asarray(s, dtype=float)
    a = np.abs(s)
    inner = -3 * s + 2.25 * s * a
    outer = 0.25 * (-12 * np.sign(s) + 12 * s - 3 * s * a)
    return np.where(a <= 1, inner, np.where(a <= 2, outer, 0.0))


def build_wave2d(grid_nx1, grid_nx2, steps=600, length=1.0):
    """Central finite-difference 2D wave equation with wave speed ``mu``.

    Domain ``(0, L) x (0, L/5)`` with homogeneous Dirichlet boundary; the
    state is ``[u; u_t]`` on the interior grid, first index running fastest
    along the long axis.
    """
    if grid_nx1 < 2 or grid_nx2 < 2:
        raise ContractError("grid sizes must be at least 2")
    n1, n2 = int(grid_nx1), int(grid_nx2)
    N = n1 * n2
    D = sp.kron(sp.identity(n2), _second_difference(n1, length)) + sp.kron(
        _second_difference(n2, length / 5), sp.identity(n1)
    )
    zero = sp.csr_matrix((N, N))
    H_lap = sp.bmat([[D, None], [None, zero]], format="csr")
    H_mass = sp.bmat([[zero, None], [None, sp.identity(N)]], format="csr")

    xi1 = length * np.arange(1, n1 + 1) / (n1 + 1)
    xi2 = (length / 5) * np.arange(1, n2 + 1) / (n2 + 1)
    X1, _ = np.meshgrid(xi1, xi2)
    s = 50.0 * (X1.ravel() - 0.9 * length)
    x0_const = np.concatenate([bump(s), np.zeros(N)])
    x0_lin = np.concatenate([np.zeros(N), 50.0 * bump_slope(s)])

    return AffineHamiltonianModel(
        name="wave2d",
        half_dim=N,
        affine_terms=[(lambda mu: mu[0] ** 2, H_lap), (lambda mu: 1.0, H_mass)],
        domain=ParameterDomain([7.0], [10.0]),
        end_time=lambda mu: 2.0 / mu[0],
        n_t=int(steps),
        initial_terms=[(lambda mu: 1.0, x0_const), (lambda mu: mu[0], x0_lin)],
        info={"grid": (n1, n2), "xi1": xi1, "xi2": xi2, "laplacian": D.tocsr()},
    )


# ---------------------------------------------------------------------------
# benchmark 2: homogenised 1D Sine-Gordon equation

SG_LENGTH = 50.0
SG_CENTER = 10.0


def _gamma(v):
    return np.sqrt(1.0 - v**2)


def kink_profile(z, v):
    """``u0(z; v) = 4 arctan(exp((z - 10) / sqrt(1 - v^2)))``."""
    return 4.0 * np.arctan(np.exp((z - SG_CENTER) / _gamma(v)))


def kink_velocity(z, v):
    phi = np.exp((z - SG_CENTER) / _gamma(v))
    return -4.0 * v / _gamma(v) * phi / (1.0 + phi**2)


def kink_curvature(z, v):
    """Second z-derivative of :func:`kink_profile`."""
    zeta = (z - SG_CENTER) / _gamma(v)
    return 2.0 / (v**2 - 1.0) * np.tanh(zeta) / np.cosh(zeta)


def build_sine_gordon(grid_nz, steps=400):
    """Sine-Gordon equation on ``(0, 50)`` homogenised around the kink profile.

    The state is ``[u - u0; u_t]`` on the interior grid so that the boundary
    values 0 and 2 pi are carried by ``u0``.  The forcing is the curvature of
    ``u0`` moved to the gradient side, ``b = -u0_zz``.
    """
    if grid_nz < 2:
        raise ContractError("grid_nz must be at least 2")
    N = int(grid_nz)
    z = SG_LENGTH * np.arange(1, N + 1) / (N + 1)
    D = _second_difference(N, SG_LENGTH)
    H = sp.bmat([[D, None], [None, sp.identity(N)]], format="csr")
    source = np.concatenate([np.arange(N), -np.ones(N, dtype=np.int64)])

    def shift(rows, mu):
        return kink_profile(z[np.asarray(rows) % N], mu[0])

    nonlin = PointwiseNonlinearity(
        func=np.sin, deriv=np.cos, source=source, shift=shift,
        antiderivative=lambda u: 1.0 - np.cos(u),
    )

    def forcing(mu):
        return np.concatenate([-kink_curvature(z, mu[0]), np.zeros(N)])

    def initial_value(mu):
        return np.concatenate([np.zeros(N), kink_velocity(z, mu[0])])

    return AffineHamiltonianModel(
        name="sine_gordon",
        half_dim=N,
        affine_terms=[(lambda mu: 1.0, H)],
        domain=ParameterDomain([0.7], [0.9]),
        end_time=lambda mu: 30.0 / mu[0],
        n_t=int(steps),
        nonlinearity=nonlin,
        forcing=forcing,
        initial_value=initial_value,
        info={"z": z},
    )


def sine_gordon_displacement(model, x, mu):
    """Physical displacement ``u = (x_q + u0)`` including boundary nodes."""
    z = model.info["z"]
    N = model.half_dim
    q = np.asarray(x)[:N]
    u0 = kink_profile(z, as_param(mu)[0])
    interior = q + (u0[:, None] if q.ndim == 2 else u0)
    pad = [(1, 1)] + [(0, 0)] * (q.ndim - 1)
    full = np.pad(interior, pad)
    full[-1] = 2 * np.pi
    return full
