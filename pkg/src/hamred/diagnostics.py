"""Error metrics, basis-size averages and the basis-change Hamiltonian bound."""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ContractError, DimensionError
from .online import basis_change_project, explicit_basis, reconstruct_run
from .symplectic import symplectic_inverse_apply

SEGMENT_POINTS = 65


def relative_reduction_error(fom_traj, approx_traj):
    """``sqrt(sum_i |x_i - x~_i|^2) / sqrt(sum_i |x_i|^2)`` over all steps."""
    X = np.asarray(fom_traj, dtype=float)
    Y = np.asarray(approx_traj, dtype=float)
    if X.shape != Y.shape:
        raise DimensionError(f"trajectory shapes differ: {X.shape} vs {Y.shape}")
    den = np.linalg.norm(X)
    if den == 0:
        raise ContractError("reference trajectory is zero")
    return float(np.linalg.norm(X - Y) / den)


def hamiltonian_error_series(model, mu, fom_traj, approx_traj, reference=None):
    """``|H(x_i) - H(x~_i)| / |H(x_i)|`` per step.

    Without ``fom_traj`` (generalisation runs) pass ``reference``, a scalar
    Hamiltonian value used for every step.
    """
    Y = np.asarray(approx_traj, dtype=float)
    if fom_traj is not None:
        X = np.asarray(fom_traj, dtype=float)
        if X.shape != Y.shape:
            raise DimensionError(f"trajectory shapes differ: {X.shape} vs {Y.shape}")
        ref = model.hamiltonian(X, mu)
    elif reference is not None:
        ref = np.full(Y.shape[1], float(reference))
    else:
        raise ContractError("need a FOM trajectory or a reference Hamiltonian value")
    if np.any(ref == 0):
        raise ContractError("reference Hamiltonian is zero")
    return np.abs(ref - model.hamiltonian(Y, mu)) / np.abs(ref)


def average_basis_size(sizes):
    """Mean of the per-window basis sizes."""
    sizes = np.asarray(sizes, dtype=float)
    if sizes.size == 0:
        raise ContractError("basis log is empty")
    return float(sizes.mean())


def basis_change_bound(model, mu, V_old, V_new, x_r_old, x_r_new=None, points=SEGMENT_POINTS):
    """Hamiltonian jump at a basis change and its mean-value bound.

    Returns ``(bound, jump)`` with ``jump = |H(V_old x_old) - H(V_new x_new)|``
    and ``bound = max_seg |grad H|_2 * |(I - V_new V_new^+) V_old x_old|_2``,
    the maximum taken over ``points`` equispaced points of the segment
    between the two reconstructions.
    """
    xo = V_old @ x_r_old
    if x_r_new is None:
        x_r_new = symplectic_inverse_apply(V_new, xo, check=False)
    xn = V_new @ x_r_new
    jump = abs(float(model.hamiltonian(xo, mu) - model.hamiltonian(xn, mu)))
    s = np.linspace(0.0, 1.0, points)
    seg = xn[:, None] + (xo - xn)[:, None] * s
    sup = float(np.linalg.norm(model.gradient(seg, mu), axis=0).max())
    return sup * float(np.linalg.norm(xo - xn)), jump


@dataclass
class RunReport:
    method: str
    mu: np.ndarray
    times: np.ndarray
    reconstructed: np.ndarray
    basis_sizes: np.ndarray
    step_window: np.ndarray
    step_basis_size: np.ndarray
    e_rel: Optional[float] = None
    e_ham: Optional[np.ndarray] = None
    timings: dict = field(default_factory=dict)
    online_seconds: float = 0.0
    offline_seconds: float = 0.0
    hyper_sizes: Optional[np.ndarray] = None

    @property
    def n_mean(self):
        return average_basis_size(self.basis_sizes)


def online_report(model, run, state, fom_traj=None, times=None):
    """:class:`RunReport` of an online run, reconstructing every step."""
    rec = reconstruct_run(run, state)
    step_window = run.step_window()
    sizes = run.basis_sizes()
    if times is None:
        times = model.t0 + model.dt(run.mu) * np.arange(rec.shape[1])
    e_rel = e_ham = None
    if fom_traj is not None:
        e_rel = relative_reduction_error(fom_traj, rec)
        e_ham = hamiltonian_error_series(model, run.mu, fom_traj, rec)
    else:
        e_ham = hamiltonian_error_series(model, run.mu, None, rec,
                                         reference=model.hamiltonian(model.x0(run.mu), run.mu))
    return RunReport(run.method, run.mu, times, rec, sizes, step_window, sizes[step_window], e_rel, e_ham,
                     dict(run.timings), run.online_seconds,
                     hyper_sizes=np.array([w.hyper_size for w in run.windows]))


def basis_change_bounds(model, run, state):
    """``(bound, jump)`` for every basis change of an online run."""
    out = []
    view = state.online_view()
    for prev, cur in zip(run.windows[:-1], run.windows[1:]):
        V_old = explicit_basis(prev.basis, state)
        V_new = explicit_basis(cur.basis, state)
        x_old = prev.states[:, -1]
        x_new = basis_change_project(view, prev.basis, cur.basis, x_old)
        out.append(basis_change_bound(model, run.mu, V_old, V_new, x_old, x_new))
    return out
