"""Static SVG line charts written next to the CSV output."""

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "hamred"

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _series_label(row):
    if row["m_s"] in (None, ""):
        return row["method"]
    return f"{row['method']} m_s={row['m_s']}"


def _grouped(rows, x_key):
    groups = {}
    for r in rows:
        if r["status"] != "ok" or r["e_rel"] is None or r[x_key] is None:
            continue
        groups.setdefault(_series_label(r), []).append((r[x_key], r["e_rel"]))
    return {k: sorted(v) for k, v in groups.items()}


def _scatter(groups, xlabel, path, logx=False):
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for label, pts in groups.items():
        x, y = np.array(pts).T
        ax.plot(x, np.maximum(y, 1e-17), marker="o", ms=3, lw=0.8, label=label)
    ax.set_yscale("log")
    if logx:
        ax.set_xscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel("relative reduction error")
    ax.grid(True, which="both", alpha=0.3)
    if groups:
        ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, metadata={"Date": None})
    plt.close(fig)


def plot_error_vs_size(rows, path):
    """``e_rel`` against the average basis size, one series per method and window size."""
    _scatter(_grouped(rows, "n_mean"), "average basis size", path)


def plot_error_vs_runtime(rows, path):
    """``e_rel`` against the online runtime."""
    groups = {k: [p for p in v if p[0] > 0] for k, v in _grouped(rows, "online_s").items()}
    _scatter({k: v for k, v in groups.items() if v}, "online time [s]", path, logx=True)


def plot_hamiltonian(series, path):
    """Relative Hamiltonian error per step; ``series`` maps labels to ``(steps, values)``."""
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for label, (steps, values) in series.items():
        ax.plot(steps, np.maximum(values, 1e-17), lw=0.9, label=label)
    ax.set_yscale("log")
    ax.set_xlabel("time step")
    ax.set_ylabel("relative Hamiltonian error")
    ax.grid(True, which="both", alpha=0.3)
    if series:
        ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, metadata={"Date": None})
    plt.close(fig)
