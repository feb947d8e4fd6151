"""Online phase of dictionary-based reduction.

Every basis is represented implicitly by the selected dictionary columns
``I_s`` and a small coefficient block, so that ``V = X_s Phi~`` (POD) or
``V = Y_s Z`` with ``Y_s = [X_s, J X_s]`` and ``Z = [Phi~, J Phi~]`` (cSVD).
Reduced operators are assembled from N_X-sized dictionary blocks only:

* ``Y_s^T H Y_s = [[H_X, H_XJr], [-H_XJl, -H_XJJ]]`` (restricted to ``I_s``),
* ``Y_new^T J Y_old = [[G_XJ, -G_X], [G_X, G_XJ]]`` (cross blocks),
* ``V^+ x0 = J^T Z^T [X_s^T J x0; X_s^T x0]``,
* ``V^T U = Z^T [X_s^T F_s; -X_s^T J F_s] Psi~``.
"""

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dictionary import offline_only, online_phase
from .errors import ContractError, EmptyBasisError, HamredError
from .integrators import NewtonSettings
from .models import as_param
from .reduced import HyperReduction, ReducedSystem
from .selection import compute_time_weight, select_indices
from .standard import (complex_pairs, deim, energy_rank, hermitian_pairs, interpolation_coefficients,
                       numerical_rank, pair_count, right_singular, sorted_eigh)
from .symplectic import apply_poisson, apply_poisson_t

METHODS = ("db-pod", "db-pod-deim", "db-csvd", "db-csvd-sdeim")


@dataclass
class QueryContext:
    """Per-query data computed once before the online loop.

    ``b_X = X^T b``, ``b_XJ = X^T J b`` and, for models whose initial value is
    not affine in the parameter, ``x0_X = X^T x0``, ``x0_XJ = X^T J x0``.
    These are the only O(N) products of an online query.
    """

    mu: np.ndarray
    thetas: np.ndarray
    dt: float
    t0: float
    n_t: int
    x0_X: np.ndarray
    x0_XJ: np.ndarray
    b_X: Optional[np.ndarray] = None
    b_XJ: Optional[np.ndarray] = None
    nonlinearity: object = None
    c: Optional[float] = None


@offline_only
def prepare_query(model, dictionary, mu, c=None):
    mu = as_param(mu)
    s = dictionary.state
    if model.half_dim != s.half_dim:
        raise ContractError("dictionary was built for a different model size")
    if model.has_affine_initial:
        sig = model.sigmas(mu)
        x0_X, x0_XJ = sig @ s.x0_X, sig @ s.x0_XJ
    else:
        x0 = model.x0(mu)
        x0_X, x0_XJ = s.X.T @ x0, s.X.T @ apply_poisson(x0)
    b = model.b(mu)
    b_X = b_XJ = None
    if b is not None:
        b_X, b_XJ = s.X.T @ b, s.X.T @ apply_poisson(b)
    dt = model.dt(mu)
    if c is None:
        c = compute_time_weight(s.training_parameters(), dt)
    return QueryContext(mu, model.thetas(mu), dt, model.t0, model.n_t, x0_X, x0_XJ, b_X, b_XJ,
                        model.nonlinearity, c)


@dataclass
class OnlineBasis:
    """Implicit basis: ``mode`` is ``"pod"`` or ``"csvd"``.

    ``phi`` is ``n_s x m`` (POD) or ``2 n_s x k`` (cSVD).
    """

    mode: str
    indices: np.ndarray
    phi: np.ndarray
    eigenvalues: np.ndarray

    @property
    def rank(self):
        return self.phi.shape[1]

    @property
    def size(self):
        return 2 * self.rank if self.mode == "csvd" else self.rank

    @property
    def coefficients(self):
        """Coefficients w.r.t. ``X_s`` (POD) or ``Y_s`` (cSVD)."""
        if self.mode == "pod":
            return self.phi
        return np.hstack([self.phi, apply_poisson(self.phi)])


def _sub(A, rows, cols=None):
    return A[np.ix_(rows, rows if cols is None else cols)]


def _weighted(blocks, thetas, s):
    out = np.zeros((s.size, s.size))
    for w, B in zip(thetas, blocks):
        if w != 0.0:
            out += w * _sub(B, s)
    return out


ROUTES = ("qr", "gram")


def _spectrum(G, R, s, route):
    """Eigenpairs of ``G[s, s]`` directly or from the factor columns ``R[:, s]``."""
    if route == "qr":
        return right_singular(R[:, s])
    if route == "gram":
        return sorted_eigh(_sub(G, s))
    raise ContractError(f"unknown basis route {route!r}; expected one of {ROUTES}")


def db_pod_basis(view, indices, eps=None, m=None, route="qr"):
    s = np.asarray(indices)
    lam, phi = _spectrum(view.G_X, view.R_X, s, route)
    avail = numerical_rank(lam, s.size, squared=route == "qr")
    if avail == 0:
        raise EmptyBasisError("selected snapshots are zero")
    if eps is not None:
        m = min(energy_rank(lam[:avail], eps), avail)
    elif m is None:
        raise ContractError("give either eps or m")
    m = min(int(m), avail)
    return OnlineBasis("pod", s, phi[:, :m] / np.sqrt(lam[:m]), lam)


def db_csvd_basis(view, indices, eps=None, k=None, route="qr"):
    """Symplectic pairs of the selected snapshots.

    ``route="gram"`` eigendecomposes the Hermitian matrix ``G_s - i GJ_s``
    (the complex form of the ``2 n_s`` block eigenproblem);
    ``route="qr"`` takes the same pairs from an SVD of ``R_C[:, s]``.
    """
    s = np.asarray(indices)
    if route == "qr":
        lam, C = complex_pairs(view.R_C[:, s])
    elif route == "gram":
        lam, C = hermitian_pairs(_sub(view.G_X, s), _sub(view.G_XJ, s))
    else:
        raise ContractError(f"unknown basis route {route!r}; expected one of {ROUTES}")
    k = pair_count(lam, eps=eps, k=k, n_cols=s.size, squared=route == "qr")
    if k == 0:
        raise EmptyBasisError("selected snapshots are zero")
    return OnlineBasis("csvd", s, C[:, :k] / np.sqrt(lam[:k]), lam)


def db_pod_system(view, ctx, basis):
    s, P = basis.indices, basis.phi
    A = P.T @ _weighted(view.H_XJl, ctx.thetas, s) @ P
    c = None if ctx.b_XJ is None else P.T @ ctx.b_XJ[s]
    return ReducedSystem(A, c), P.T @ ctx.x0_X[s]


def db_csvd_system(view, ctx, basis):
    s, Z = basis.indices, basis.coefficients
    M1 = np.block([[_weighted(view.H_X, ctx.thetas, s), _weighted(view.H_XJr, ctx.thetas, s)],
                   [-_weighted(view.H_XJl, ctx.thetas, s), -_weighted(view.H_XJJ, ctx.thetas, s)]])
    K = Z.T @ M1 @ Z
    K = 0.5 * (K + K.T)
    c = None
    if ctx.b_X is not None:
        c = apply_poisson(Z.T @ np.concatenate([ctx.b_X[s], -ctx.b_XJ[s]]))
    x0 = apply_poisson_t(Z.T @ np.concatenate([ctx.x0_XJ[s], ctx.x0_X[s]]))
    return ReducedSystem(apply_poisson(K), c, K=K), x0


def db_pod_online(view, ctx, indices, eps=None, m=None, route="qr"):
    basis = db_pod_basis(view, indices, eps, m, route)
    system, x0 = db_pod_system(view, ctx, basis)
    return basis, system, x0


def db_csvd_online(view, ctx, indices, eps=None, k=None, route="qr"):
    basis = db_csvd_basis(view, indices, eps, k, route)
    system, x0 = db_csvd_system(view, ctx, basis)
    return basis, system, x0


def basis_change_project(view, old, new, x_old):
    """Reduced coordinates in ``new`` of the state ``V_old x_old``.

    cSVD: ``J^T V_new^T J V_old x_old``; POD: ``V_new^T V_old x_old``.
    """
    if old.mode != new.mode:
        raise ContractError("basis change between different basis types")
    so, sn = old.indices, new.indices
    if max(so.max(), sn.max()) >= view.G_X.shape[0]:
        raise ContractError("basis indices do not belong to this dictionary")
    Gc = view.G_X[np.ix_(sn, so)]
    if old.mode == "pod":
        return new.phi.T @ (Gc @ (old.phi @ x_old))
    GJc = view.G_XJ[np.ix_(sn, so)]
    M5 = np.block([[GJc, -Gc], [Gc, GJc]])
    return apply_poisson_t(new.coefficients.T @ (M5 @ (old.coefficients @ x_old)))


@dataclass
class OnlineHyper:
    """Online (S)DEIM data: ``hyper`` plus the selection bookkeeping."""

    hyper: Optional[HyperReduction]
    psi: np.ndarray
    local_indices: np.ndarray
    eigenvalues: np.ndarray

    @property
    def size(self):
        return self.local_indices.size

    @property
    def global_indices(self):
        return np.zeros(0, dtype=np.int64) if self.hyper is None else self.hyper.rows


def _nonlinear_modes(nview, s, eps, m=None, route="qr"):
    lam, psi = _spectrum(nview.G_F, nview.R_F, s, route)
    avail = numerical_rank(lam, s.size, squared=route == "qr")
    if m is None:
        m = 0 if avail == 0 else min(energy_rank(lam[:avail], eps), avail)
    m = min(int(m), avail, nview.rho_hat.size)
    return lam, psi[:, :m] / np.sqrt(lam[:m]) if m else np.zeros((s.size, 0))


def compose_indices(nview, s, eps=None, m=None, route="qr"):
    """DEIM on the dictionary rows: returns ``(rho_hat[rho_o], rho_o, psi, U_hat, lam)``.

    ``U_hat = F_hat[:, s] psi`` holds the rows ``rho_hat`` of the nonlinear
    basis ``F_s psi``; DEIM on it picks local rows ``rho_o``.
    """
    s = np.asarray(s)
    lam, psi = _nonlinear_modes(nview, s, eps, m, route)
    if psi.shape[1] == 0:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty, psi, np.zeros((nview.rho_hat.size, 0)), lam
    U_hat = nview.F_hat[:, s] @ psi
    rho_o = deim(U_hat).indices
    return nview.rho_hat[rho_o], rho_o, psi, U_hat, lam


def _online_hyper(nview, ctx, basis, eps, m, left, state_rows_of, route):
    rows, rho_o, psi, U_hat, lam = compose_indices(nview, basis.indices, eps, m, route)
    if psi.shape[1] == 0:
        return OnlineHyper(None, psi, rho_o, lam)
    coeff = interpolation_coefficients(left(psi), U_hat[rho_o])
    hyper = HyperReduction(rows, state_rows_of(rho_o), coeff, ctx.nonlinearity, ctx.mu)
    return OnlineHyper(hyper, psi, rho_o, lam)


def db_deim_online(nview, ctx, basis, eps=None, m=None, route="qr"):
    """DEIM for a POD basis: ``V^T J U (P^T U)^{-1}`` with ``V^T J U = Phi~^T X_s^T J F_s Psi~``."""
    if basis.mode != "pod":
        raise ContractError("DB-DEIM needs a POD basis")
    s, P = basis.indices, basis.phi
    GXFJ = _sub(nview.G_XFJ, s)
    return _online_hyper(nview, ctx, basis, eps, m,
                         lambda psi: P.T @ GXFJ @ psi,
                         lambda rho_o: nview.G_PX[np.ix_(rho_o, s)] @ P, route)


def db_sdeim_online(nview, ctx, basis, eps=None, m=None, route="qr"):
    """SDEIM for a cSVD basis: ``J V^T U (P^T U)^{-1}``."""
    if basis.mode != "csvd":
        raise ContractError("DB-SDEIM needs a cSVD basis")
    s, Z = basis.indices, basis.coefficients
    stack = np.vstack([_sub(nview.G_XF, s), -_sub(nview.G_XFJ, s)])
    return _online_hyper(nview, ctx, basis, eps, m,
                         lambda psi: apply_poisson(Z.T @ (stack @ psi)),
                         lambda rho_o: np.hstack([nview.G_PX[np.ix_(rho_o, s)],
                                                  nview.G_PJX[np.ix_(rho_o, s)]]) @ Z, route)


@dataclass
class WindowRecord:
    index: int
    start_step: int
    n_steps: int
    basis: OnlineBasis
    hyper_size: int
    hyper_rows: np.ndarray
    x_start: np.ndarray
    states: np.ndarray
    seconds: float = 0.0


@dataclass
class OnlineRun:
    method: str
    mu: np.ndarray
    windows: list
    timings: dict = field(default_factory=dict)
    setup_seconds: float = 0.0

    @property
    def n_windows(self):
        return len(self.windows)

    @property
    def online_seconds(self):
        return sum(self.timings.values())

    def basis_sizes(self):
        return np.array([w.basis.size for w in self.windows])

    def step_window(self):
        """Window index of each step ``0..n_t`` (step 0 belongs to window 0)."""
        out = [0]
        for w in self.windows:
            out += [w.index] * w.n_steps
        return np.array(out)


@dataclass(frozen=True)
class OnlineSettings:
    eps_csvd: float = 1e-12
    eps_sdeim: float = 1e-12
    eps_pod: Optional[float] = None
    route: str = "qr"
    newton: NewtonSettings = NewtonSettings()

    def __post_init__(self):
        if self.route not in ROUTES:
            raise ContractError(f"unknown basis route {self.route!r}; expected one of {ROUTES}")

    @property
    def pod_eps(self):
        return self.eps_csvd if self.eps_pod is None else self.eps_pod


def run_online(model, dictionary, mu, cfg, method="db-csvd", settings=OnlineSettings(), ctx=None):
    """Windowed online simulation.

    For every window of ``m_s`` steps the ``n_s`` closest snapshots are
    selected, a basis (and hyper-reduction) is assembled, the current
    reduced state is carried over by :func:`basis_change_project` and the
    reduced system is advanced by the midpoint rule.
    """
    if method not in METHODS:
        raise ContractError(f"unknown online method {method!r}; expected one of {METHODS}")
    mode = "csvd" if "csvd" in method else "pod"
    hyper_kind = "sdeim" if method.endswith("sdeim") else "deim" if method.endswith("deim") else None
    if hyper_kind and dictionary.nonlinear is None:
        raise ContractError(f"{method} needs a nonlinearity dictionary")
    if hyper_kind is None and model.nonlinearity is not None:
        raise ContractError(f"{method} has no hyper-reduction; use {method}-{'sdeim' if mode == 'csvd' else 'deim'} "
                            "for a nonlinear model")
    t_setup = time.perf_counter()
    if ctx is None:
        ctx = prepare_query(model, dictionary, mu, cfg.c)
    setup = time.perf_counter() - t_setup
    view, nview = dictionary.online_view()
    c = cfg.c if cfg.c is not None else ctx.c
    n_t, dt, t0 = ctx.n_t, ctx.dt, ctx.t0
    timings = dict.fromkeys(("selection", "basis", "stepping", "projection"), 0.0)
    windows = []
    basis = None
    x = None
    with online_phase():
        start, w = 0, 0
        while start < n_t:
            t_w = t0 + start * dt
            tic = time.perf_counter()
            sel = select_indices(view.label_mu, view.label_t, ctx.mu, t_w, dt, cfg, c=c)
            t1 = time.perf_counter()
            try:
                if mode == "csvd":
                    new, system, x0 = db_csvd_online(view, ctx, sel.indices, eps=settings.eps_csvd,
                                                     route=settings.route)
                else:
                    new, system, x0 = db_pod_online(view, ctx, sel.indices, eps=settings.pod_eps,
                                                    route=settings.route)
                hyper = None
                if hyper_kind == "sdeim":
                    hyper = db_sdeim_online(nview, ctx, new, eps=settings.eps_sdeim, route=settings.route)
                elif hyper_kind == "deim":
                    hyper = db_deim_online(nview, ctx, new, eps=settings.eps_sdeim, route=settings.route)
                if hyper is not None:
                    system.hyper = hyper.hyper
                system.newton = settings.newton
            except HamredError as exc:
                raise type(exc)(f"window {w}: {exc}") from exc
            t2 = time.perf_counter()
            x = x0 if basis is None else basis_change_project(view, basis, new, x)
            t3 = time.perf_counter()
            n_w = min(cfg.m_s, n_t - start)
            try:
                states = system.advance(x, n_w, t_w, dt)
            except HamredError as exc:
                raise type(exc)(f"window {w}: {exc}") from exc
            t4 = time.perf_counter()
            timings["selection"] += t1 - tic
            timings["basis"] += t2 - t1
            timings["projection"] += t3 - t2
            timings["stepping"] += t4 - t3
            rows = np.zeros(0, dtype=np.int64) if hyper is None else hyper.global_indices
            windows.append(WindowRecord(w, start, n_w, new, 0 if hyper is None else hyper.size,
                                        rows, x, states, t4 - tic))
            x = states[:, -1]
            basis = new
            start += n_w
            w += 1
    return OnlineRun(method, ctx.mu, windows, timings, setup)


@offline_only
def explicit_basis(basis, state):
    """Form ``V`` from an implicit basis (diagnostic, O(N n_s))."""
    Xs = state.X[:, basis.indices]
    if basis.mode == "pod":
        return Xs @ basis.phi
    Ys = np.hstack([Xs, apply_poisson(Xs)])
    return Ys @ basis.coefficients


@offline_only
def reconstruct(basis, state, x_r):
    return explicit_basis(basis, state) @ np.asarray(x_r, dtype=float)


@offline_only
def reconstruct_run(run, state):
    """Full-state trajectory ``V_i x_r`` over all steps of an online run."""
    first = run.windows[0]
    out = np.empty((state.X.shape[0], 1 + sum(w.n_steps for w in run.windows)))
    out[:, 0] = reconstruct(first.basis, state, first.x_start)
    for w in run.windows:
        out[:, 1 + w.start_step:1 + w.start_step + w.n_steps] = explicit_basis(w.basis, state) @ w.states
    return out
