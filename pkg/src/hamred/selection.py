"""Online snapshot selection by a weighted parameter-time distance."""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ContractError, DimensionError


@dataclass(frozen=True)
class SelectionConfig:
    """Window size ``m_s``, snapshot count ``n_s`` and time weight ``c``.

    ``c=None`` computes the weight from the training parameters.
    """

    m_s: int
    n_s: int
    c: Optional[float] = None

    def __post_init__(self):
        if self.m_s < 1:
            raise ContractError("window size m_s must be at least 1")
        if self.n_s < 1:
            raise ContractError("n_s must be at least 1")
        if self.c is not None and self.c < 0:
            raise ContractError("time weight must be nonnegative")


@dataclass(frozen=True)
class SelectionResult:
    indices: np.ndarray
    distances: np.ndarray

    def __len__(self):
        return self.indices.size


def label_metric(mu_a, t_a, mu_b, t_b, c):
    """``sqrt(|mu_a - mu_b|^2 + c |t_a - t_b|^2)``."""
    mu_a, mu_b = np.atleast_1d(mu_a), np.atleast_1d(mu_b)
    if mu_a.shape != mu_b.shape:
        raise DimensionError("labels have different parameter dimensions")
    if c < 0:
        raise ContractError("time weight must be nonnegative")
    return float(np.sqrt(np.sum((mu_a - mu_b) ** 2) + c * (t_a - t_b) ** 2))


def spread_distance(parameters):
    """Largest distance from a parameter to its nearest distinct neighbour."""
    P = np.unique(np.atleast_2d(np.asarray(parameters, dtype=float).reshape(len(parameters), -1)), axis=0)
    if P.shape[0] < 2:
        raise ContractError("the time weight needs at least two distinct training parameters; set c explicitly")
    D = np.sqrt(((P[:, None, :] - P[None, :, :]) ** 2).sum(axis=-1))
    np.fill_diagonal(D, np.inf)
    return float(D.min(axis=1).max())


def compute_time_weight(training_parameters, dt):
    """``c = d_max^2 / dt^2`` with ``d_max`` from :func:`spread_distance`."""
    if not dt > 0:
        raise ContractError("dt must be positive")
    return spread_distance(training_parameters) ** 2 / dt**2


def label_distances(label_mu, label_t, mu, t, dt, m_s, c):
    """Distance of every label to the window ``(mu, t + l dt)``, ``l = 0..m_s``."""
    label_mu = np.asarray(label_mu, dtype=float).reshape(len(label_t), -1)
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    if label_mu.shape[1] != mu.size:
        raise DimensionError("query parameter dimension does not match the labels")
    dmu = np.sum((label_mu - mu) ** 2, axis=1)
    # the nearest window time is the clamp of each label time onto [t, t + m_s dt]
    l = np.clip(np.rint((np.asarray(label_t) - t) / dt), 0, m_s)
    dtime = np.asarray(label_t) - (t + l * dt)
    return np.sqrt(dmu + c * dtime**2)


def select_indices(label_mu, label_t, mu, t, dt, cfg, c=None):
    """The ``n_s`` dictionary columns closest to the upcoming window.

    Returns the indices sorted ascending; ties prefer the lower index.
    """
    n_x = len(label_t)
    if cfg.n_s > n_x:
        raise ContractError(f"n_s={cfg.n_s} exceeds the dictionary size {n_x}")
    c = cfg.c if c is None else c
    if c is None:
        raise ContractError("time weight c is not set")
    d = label_distances(label_mu, label_t, mu, t, dt, cfg.m_s, c)
    order = np.argsort(d, kind="stable")[: cfg.n_s]
    idx = np.sort(order)
    return SelectionResult(idx, d[idx])
