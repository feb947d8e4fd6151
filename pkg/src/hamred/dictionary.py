"""Offline phase: labelled snapshot dictionaries and their precomputed products.

Everything here touches arrays of the full dimension 2N.  The functions are
marked offline-only and refuse to run while an online phase is active (see
:func:`online_phase`), which is how tests assert that the online loop never
performs O(N) work.
"""

import contextlib
import contextvars
import functools
import json
import logging
import os
import struct
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import (ContractError, CorruptHeader, DictionaryDimensionMismatch,
                     HamredError, NotADictionaryFile, TruncatedPayload)
from .integrators import TimeGrid, integrate
from .models import as_param
from .standard import complex_form, deim, numerical_rank
from .symplectic import apply_poisson

log = logging.getLogger(__name__)

MAGIC = b"HAMDICT1"
VERSION = 1

_ONLINE = contextvars.ContextVar("hamred_online_phase", default=False)


class OfflineOperationError(HamredError):
    """An offline-only operation was called during the online phase."""


@contextlib.contextmanager
def online_phase():
    """Mark the enclosed block as online; offline operations then raise."""
    token = _ONLINE.set(True)
    try:
        yield
    finally:
        _ONLINE.reset(token)


def in_online_phase():
    return _ONLINE.get()


def offline_only(func):
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        if _ONLINE.get():
            raise OfflineOperationError(f"{func.__name__} is offline-only and was called online")
        return func(*args, **kwargs)

    return wrapper


def worker_count(default=None):
    """Worker cap from ``HAMRED_THREADS`` (default: CPU count)."""
    raw = os.environ.get("HAMRED_THREADS")
    if raw:
        try:
            n = int(raw)
        except ValueError:
            raise ContractError(f"HAMRED_THREADS must be an integer, got {raw!r}") from None
        return max(1, n)
    return default or os.cpu_count() or 1


@dataclass
class Label:
    mu: np.ndarray
    t: float


@dataclass
class SnapshotSet:
    X: np.ndarray
    label_mu: np.ndarray
    label_t: np.ndarray
    F: Optional[np.ndarray] = None

    @property
    def size(self):
        return self.X.shape[1]

    def label(self, i):
        return Label(self.label_mu[i], float(self.label_t[i]))


SNAPSHOT_STEPS = {"leading": (0, -1), "trailing": (1, 0), "all": (0, 0)}


@offline_only
def generate_snapshots(model, training_parameters, grid=None, snapshot_steps="leading", workers=None):
    """Solve the full model for every training parameter and label the states.

    ``snapshot_steps`` picks the kept steps: ``"leading"`` keeps ``0..n_t-1``,
    ``"trailing"`` keeps ``1..n_t`` and ``"all"`` keeps ``0..n_t``.  The two
    first choices give ``n_t`` states per parameter.  Keeping step 0 puts the
    initial value in the span of the selected snapshots, without which a
    reduced run cannot start exactly.  Labels are ``(mu, t_j)``.  ``grid``
    may fix a common :class:`TimeGrid`; by default each parameter uses the
    model's own.
    """
    if snapshot_steps not in SNAPSHOT_STEPS:
        raise ContractError(f"snapshot_steps must be one of {', '.join(SNAPSHOT_STEPS)}, got {snapshot_steps!r}")
    params = [as_param(mu) for mu in training_parameters]
    if not params:
        raise ContractError("at least one training parameter is required")
    for mu in params:
        if not model.domain.contains(mu):
            raise ContractError(f"training parameter {mu} lies outside the model domain")

    def solve(mu):
        g = grid or TimeGrid.for_model(model, mu)
        try:
            traj = integrate(model, mu, g)
        except HamredError as exc:
            raise HamredError(f"full solve failed for mu={mu.tolist()}: {exc}") from exc
        lo, hi = SNAPSHOT_STEPS[snapshot_steps]
        keep = slice(lo, traj.shape[1] + hi)
        return traj[:, keep], g.times()[keep]

    n_workers = min(len(params), workers or worker_count())
    if n_workers > 1:
        with ThreadPoolExecutor(n_workers) as pool:
            results = list(pool.map(solve, params))
    else:
        results = [solve(mu) for mu in params]

    X = np.hstack([r[0] for r in results])
    label_t = np.concatenate([r[1] for r in results])
    label_mu = np.vstack([np.tile(mu, (r[0].shape[1], 1)) for mu, r in zip(params, results)])
    F = None
    if model.nonlinearity is not None:
        F = np.empty_like(X)
        for j in range(X.shape[1]):
            F[:, j] = model.f_nl(X[:, j], label_mu[j])
    return SnapshotSet(X, label_mu, label_t, F)


@dataclass
class StateDictionary:
    """Snapshots with labels and every Gram/operator product used online.

    ``H_X[q] = X^T H_q X``, ``H_XJr[q] = X^T H_q J X``,
    ``H_XJl[q] = X^T J H_q X``, ``H_XJJ[q] = X^T J H_q J X``;
    ``x0_X[r] = X^T x0_r`` and ``x0_XJ[r] = X^T J x0_r``.  ``R_X`` and
    ``R_C = R_C_re + i R_C_im`` are the triangular QR factors of ``X`` and of
    its complex form ``X_q + i X_p``; they satisfy ``R_X^T R_X = G_X`` and
    ``R_C^H R_C = G_X + i G_XJ`` and let the online phase compute bases
    from singular values instead of Gram eigenvalues.
    """

    X: np.ndarray
    label_mu: np.ndarray
    label_t: np.ndarray
    G_X: np.ndarray
    G_XJ: np.ndarray
    H_X: np.ndarray
    H_XJr: np.ndarray
    H_XJl: np.ndarray
    H_XJJ: np.ndarray
    x0_X: np.ndarray
    x0_XJ: np.ndarray
    R_X: np.ndarray
    R_C_re: np.ndarray
    R_C_im: np.ndarray

    @property
    def half_dim(self):
        return self.X.shape[0] // 2

    @property
    def size(self):
        return self.X.shape[1]

    @property
    def n_p(self):
        return self.label_mu.shape[1]

    def training_parameters(self):
        return np.unique(self.label_mu, axis=0)

    def online_view(self):
        return OnlineStateView(self.label_mu, self.label_t, self.G_X, self.G_XJ,
                               self.H_X, self.H_XJr, self.H_XJl, self.H_XJJ, self.x0_X, self.x0_XJ,
                               self.R_X, self.R_C_re + 1j * self.R_C_im)


@dataclass(frozen=True)
class OnlineStateView:
    """The N_X-sized part of a :class:`StateDictionary`; holds no 2N array."""

    label_mu: np.ndarray
    label_t: np.ndarray
    G_X: np.ndarray
    G_XJ: np.ndarray
    H_X: np.ndarray
    H_XJr: np.ndarray
    H_XJl: np.ndarray
    H_XJJ: np.ndarray
    x0_X: np.ndarray
    x0_XJ: np.ndarray
    R_X: np.ndarray
    R_C: np.ndarray

    @property
    def size(self):
        return self.G_X.shape[0]


@offline_only
def build_state_dictionary(model, X, label_mu, label_t):
    X = np.asarray(X, dtype=float)
    label_mu = np.atleast_2d(np.asarray(label_mu, dtype=float))
    if label_mu.shape[0] != X.shape[1] and label_mu.shape[1] == X.shape[1]:
        label_mu = label_mu.T
    label_t = np.asarray(label_t, dtype=float)
    if X.shape[0] != model.dim or label_mu.shape[0] != X.shape[1] or label_t.shape != (X.shape[1],):
        raise DictionaryDimensionMismatch("snapshots and labels do not match the model")
    JX = apply_poisson(X)
    G_X = X.T @ X
    G_X = 0.5 * (G_X + G_X.T)
    G_XJ = X.T @ JX
    G_XJ = 0.5 * (G_XJ - G_XJ.T)
    blocks = {k: [] for k in ("H_X", "H_XJr", "H_XJl", "H_XJJ")}
    for _, Hq in model.affine_terms:
        HX = Hq @ X
        HJX = Hq @ JX
        hx = X.T @ HX
        blocks["H_X"].append(0.5 * (hx + hx.T))
        blocks["H_XJr"].append(X.T @ HJX)
        blocks["H_XJl"].append(-(JX.T @ HX))
        hjj = -(JX.T @ HJX)
        blocks["H_XJJ"].append(0.5 * (hjj + hjj.T))
    if model.initial_terms is not None:
        x0v = np.column_stack([v for _, v in model.initial_terms])
        x0_X = (X.T @ x0v).T
        x0_XJ = (X.T @ apply_poisson(x0v)).T
    else:
        x0_X = np.zeros((0, X.shape[1]))
        x0_XJ = np.zeros((0, X.shape[1]))
    R_X = np.linalg.qr(X, mode="r")
    R_C = np.linalg.qr(complex_form(X), mode="r")
    return StateDictionary(X, label_mu, label_t, G_X, G_XJ,
                           *(np.array(blocks[k]) for k in ("H_X", "H_XJr", "H_XJl", "H_XJJ")),
                           x0_X, x0_XJ, R_X, R_C.real.copy(), R_C.imag.copy())


@dataclass
class NonlinearityDictionary:
    """Nonlinearity snapshots, their Grams and the offline DEIM index set.

    ``rho_hat`` is the index set D_P, ``F_hat = F[rho_hat]`` and
    ``G_PX``/``G_PJX`` hold the rows of ``X``/``J X`` read by the rows
    ``rho_hat`` of the nonlinearity (zero rows where a row reads nothing).
    ``R_F`` is the triangular QR factor of ``F``.
    """

    F: np.ndarray
    G_XF: np.ndarray
    G_F: np.ndarray
    G_XFJ: np.ndarray
    rho_hat: np.ndarray
    F_hat: np.ndarray
    G_PX: np.ndarray
    G_PJX: np.ndarray
    R_F: np.ndarray

    @property
    def n_rows(self):
        return self.rho_hat.size

    def online_view(self):
        return OnlineNonlinearView(self.G_XF, self.G_F, self.G_XFJ, self.rho_hat,
                                   self.F_hat, self.G_PX, self.G_PJX, self.R_F)


@dataclass(frozen=True)
class OnlineNonlinearView:
    G_XF: np.ndarray
    G_F: np.ndarray
    G_XFJ: np.ndarray
    rho_hat: np.ndarray
    F_hat: np.ndarray
    G_PX: np.ndarray
    G_PJX: np.ndarray
    R_F: np.ndarray


def _orthonormal_range(F, n_p=None):
    """Leading left singular vectors of ``F``, truncated to numerical rank."""
    U, s, _ = np.linalg.svd(F, full_matrices=False)
    r = numerical_rank(s**2, F.shape[1], squared=True)
    if n_p is None:
        n_p = r
    elif n_p > r:
        warnings.warn(f"N_P={n_p} truncated to the numerical rank {r} of F", stacklevel=3)
        n_p = r
    return U[:, :n_p]


@offline_only
def build_nonlinearity_dictionary(model, X, F, n_p=None):
    """Grams of ``F`` and the offline DEIM index dictionary of size ``n_p``.

    ``n_p`` defaults to the numerical rank of ``F``; larger requests are
    truncated to it with a warning.
    """
    X = np.asarray(X, dtype=float)
    F = np.asarray(F, dtype=float)
    if F.shape != X.shape:
        raise DictionaryDimensionMismatch("F must have the shape of X")
    JX = apply_poisson(X)
    G_F = F.T @ F
    G_F = 0.5 * (G_F + G_F.T)
    if np.any(F):
        U = _orthonormal_range(F, None if n_p is None else min(int(n_p), F.shape[1]))
        rho = deim(U).indices
    else:
        rho = np.zeros(0, dtype=np.int64)
    src = model.nonlinearity.source[rho]
    has = (src >= 0)[:, None]
    G_PX = np.where(has, X[np.maximum(src, 0)], 0.0)
    G_PJX = np.where(has, JX[np.maximum(src, 0)], 0.0)
    return NonlinearityDictionary(F, X.T @ F, G_F, X.T @ apply_poisson(F), rho, F[rho], G_PX, G_PJX,
                                  np.linalg.qr(F, mode="r"))


@dataclass
class Dictionary:
    """State and (optional) nonlinearity dictionaries plus provenance."""

    state: StateDictionary
    nonlinear: Optional[NonlinearityDictionary] = None
    meta: dict = field(default_factory=dict)

    def online_view(self):
        return self.state.online_view(), None if self.nonlinear is None else self.nonlinear.online_view()


@offline_only
def build_dictionary(model, training_parameters, n_p=None, snapshot_steps="leading", workers=None, meta=None):
    tic = time.perf_counter()
    snaps = generate_snapshots(model, training_parameters, snapshot_steps=snapshot_steps, workers=workers)
    snap_seconds = time.perf_counter() - tic
    state = build_state_dictionary(model, snaps.X, snaps.label_mu, snaps.label_t)
    nonlin = None
    if snaps.F is not None:
        nonlin = build_nonlinearity_dictionary(model, snaps.X, snaps.F, n_p)
    info = {"model": model.name, "half_dim": model.half_dim,
            "snapshot_steps": snapshot_steps,
            "snapshot_seconds": snap_seconds, "offline_seconds": time.perf_counter() - tic}
    info.update(meta or {})
    return Dictionary(state, nonlin, info)


# ---------------------------------------------------------------------------
# container format

_STATE_FIELDS = ("X", "label_mu", "label_t", "G_X", "G_XJ", "H_X", "H_XJr", "H_XJl", "H_XJJ", "x0_X", "x0_XJ",
                 "R_X", "R_C_re", "R_C_im")
_NONLIN_FIELDS = ("F", "G_XF", "G_F", "G_XFJ", "rho_hat", "F_hat", "G_PX", "G_PJX", "R_F")
_HEAD = struct.Struct("<8sIQ")


def _expected_shapes(dims):
    n2, nx, npp = 2 * dims["N"], dims["N_X"], dims["N_P"]
    q, r, p = dims["n_affine"], dims["n_initial"], dims["n_p"]
    shapes = {
        "X": (n2, nx), "label_mu": (nx, p), "label_t": (nx,), "G_X": (nx, nx), "G_XJ": (nx, nx),
        "H_X": (q, nx, nx), "H_XJr": (q, nx, nx), "H_XJl": (q, nx, nx), "H_XJJ": (q, nx, nx),
        "x0_X": (r, nx), "x0_XJ": (r, nx),
        "R_X": (min(n2, nx), nx), "R_C_re": (min(n2 // 2, nx), nx), "R_C_im": (min(n2 // 2, nx), nx),
    }
    if dims["nonlinear"]:
        shapes.update({
            "F": (n2, nx), "G_XF": (nx, nx), "G_F": (nx, nx), "G_XFJ": (nx, nx), "rho_hat": (npp,),
            "F_hat": (npp, nx), "G_PX": (npp, nx), "G_PJX": (npp, nx), "R_F": (min(n2, nx), nx),
        })
    return shapes


def save_dictionary(d, path):
    """Write ``d`` as magic, version, JSON table of contents, float64 payload."""
    s = d.state
    dims = {"N": s.half_dim, "N_X": s.size, "n_p": s.n_p, "n_affine": s.H_X.shape[0],
            "n_initial": s.x0_X.shape[0], "nonlinear": d.nonlinear is not None,
            "N_P": 0 if d.nonlinear is None else d.nonlinear.n_rows}
    arrays = [(k, getattr(s, k)) for k in _STATE_FIELDS]
    if d.nonlinear is not None:
        arrays += [(k, getattr(d.nonlinear, k)) for k in _NONLIN_FIELDS]
    toc, offset = [], 0
    for name, a in arrays:
        nbytes = int(np.prod(a.shape)) * 8
        toc.append({"name": name, "shape": list(a.shape), "offset": offset, "nbytes": nbytes})
        offset += nbytes
    header = json.dumps({"dims": dims, "meta": d.meta, "arrays": toc}, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_HEAD.pack(MAGIC, VERSION, len(header)))
        fh.write(header)
        for _, a in arrays:
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_dictionary(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEAD.size or raw[:8] != MAGIC:
        raise NotADictionaryFile(f"{path}: not a dictionary file (bad magic)")
    _, version, hlen = _HEAD.unpack_from(raw)
    if version != VERSION:
        raise CorruptHeader(f"{path}: unsupported version {version}")
    start = _HEAD.size + hlen
    if start > len(raw):
        raise TruncatedPayload(f"{path}: file ends inside the header")
    try:
        header = json.loads(raw[_HEAD.size:start].decode())
        dims, toc = header["dims"], header["arrays"]
    except (UnicodeDecodeError, ValueError, KeyError, TypeError) as exc:
        raise CorruptHeader(f"{path}: unreadable header ({exc})") from exc
    try:
        expected = _expected_shapes(dims)
    except (KeyError, TypeError) as exc:
        raise CorruptHeader(f"{path}: incomplete dimension record ({exc})") from exc
    out = {}
    for entry in toc:
        name, shape = entry.get("name"), tuple(entry.get("shape", ()))
        if name not in expected:
            raise CorruptHeader(f"{path}: unknown array {name!r}")
        if shape != expected[name]:
            raise DictionaryDimensionMismatch(
                f"{path}: array {name} has shape {shape}, dimensions imply {expected[name]}")
        nbytes = int(np.prod(shape)) * 8
        if entry.get("nbytes") != nbytes:
            raise CorruptHeader(f"{path}: byte count of {name} is inconsistent")
        lo = start + int(entry["offset"])
        if lo + nbytes > len(raw):
            raise TruncatedPayload(f"{path}: payload ends before array {name}")
        out[name] = np.frombuffer(raw, dtype="<f8", count=nbytes // 8, offset=lo).reshape(shape).copy()
    missing = set(expected) - set(out)
    if missing:
        raise CorruptHeader(f"{path}: missing arrays {sorted(missing)}")
    state = StateDictionary(**{k: out[k] for k in _STATE_FIELDS})
    nonlin = None
    if dims["nonlinear"]:
        fields = {k: out[k] for k in _NONLIN_FIELDS}
        fields["rho_hat"] = fields["rho_hat"].astype(np.int64)
        nonlin = NonlinearityDictionary(**fields)
    return Dictionary(state, nonlin, header.get("meta", {}))
