"""Invariant suites run by ``hamred check`` and reused by the acceptance tests."""

import gc
import statistics
import time
from dataclasses import dataclass

import numpy as np

from .diagnostics import basis_change_bounds
from .dictionary import build_dictionary, build_nonlinearity_dictionary, load_dictionary
from .errors import HamredError
from .integrators import MidpointLinearStepper, midpoint_step_nonlinear
from .models import build_sine_gordon, build_wave2d
from .online import (OnlineSettings, basis_change_project, compose_indices, db_csvd_online, db_deim_online,
                     db_pod_online, db_sdeim_online, explicit_basis, prepare_query, run_online)
from .selection import SelectionConfig
from .standard import assemble_reduced_linear, assemble_sdeim, csvd, deim, pod
from .symplectic import symplectic_defect, symplectic_inverse_apply

SCALES = {
    "tiny": {"wave": (10, 2, 40), "sine_gordon": (20, 40), "instances": 5, "timing": None},
    "default": {"wave": (40, 5, 120), "sine_gordon": (200, 160), "instances": 25,
                "timing": ((50, 10), (100, 20))},
}
WAVE_TRAINING = (7.0, 8.5, 10.0)
SG_TRAINING = (0.7, 0.75, 0.8, 0.85, 0.9)
ORACLE_TOL = 1e-6


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0


def _rel(a, b):
    den = np.linalg.norm(b)
    return float(np.linalg.norm(a - b) / (den if den > 0 else 1.0))


# ---------------------------------------------------------------------------
# oracle equivalence against explicit-basis pipelines

def _explicit_pipeline(model, X, F, mu, s, mode, size, n_hyper):
    """Standard basis and reduced system from the explicit snapshot columns ``X[:, s]``."""
    if mode == "csvd":
        V = csvd(X[:, s], two_n=size, route="svd").basis
    else:
        V = pod(X[:, s], size, route="svd").basis
    form = "symplectic" if mode == "csvd" else "orthogonal"
    if n_hyper:
        U = np.linalg.svd(F[:, s], full_matrices=False)[0][:, :n_hyper]
        red = assemble_sdeim(V, U, deim(U), model, mu, mode=form, tol=1e-6)
        return V, red, deim(U).indices
    return V, assemble_reduced_linear(V, model, mu, mode=form, tol=1e-6), None


def _lift(V, mode):
    """Map from full space to reduced coordinates of ``V``."""
    if mode == "csvd":
        return lambda x: symplectic_inverse_apply(V, x, check=False)
    return lambda x: V.T @ x


def oracle_instance(model, dictionary, mu, s, s_next, mode, hyper=False, eps=1e-8, rng=None):
    """Relative discrepancies between the dictionary-based and the explicit pipeline.

    Compares the full-space reduced operator ``V A V^+``, the forcing ``V c``,
    the initial value ``V x_r0``, the basis change ``V_new x_new`` and (with
    ``hyper``) the right-hand side ``V f_r(y)`` at snapshot-derived states.
    Returns a dict of relative errors plus ``index_match`` for the DEIM rows.
    """
    rng = rng or np.random.default_rng(0)
    mu = np.atleast_1d(mu)
    state = dictionary.state
    view, nview = dictionary.online_view()
    ctx = prepare_query(model, dictionary, mu, c=1.0)
    online = db_csvd_online if mode == "csvd" else db_pod_online
    extra = db_sdeim_online if mode == "csvd" else db_deim_online
    basis, system, x0 = online(view, ctx, s, eps=eps)
    n_hyper = 0
    if hyper:
        h = extra(nview, ctx, basis, eps=eps)
        system.hyper = h.hyper
        n_hyper = h.size
    V = explicit_basis(basis, state)
    F = None if dictionary.nonlinear is None else dictionary.nonlinear.F
    Vs, red, rows = _explicit_pipeline(model, state.X, F, mu, s, mode, basis.size, n_hyper)
    lift, lift_s = _lift(V, mode), _lift(Vs, mode)

    eye = np.eye(model.dim)
    out = {"operator": _rel(V @ system.A @ lift(eye), Vs @ red.system.A @ lift_s(eye)),
           "initial_value": _rel(V @ x0, Vs @ red.x0)}
    if system.c is not None or red.system.c is not None:
        out["forcing"] = _rel(V @ system.c, Vs @ red.system.c)

    nxt, _, _ = online(view, ctx, s_next, eps=eps)
    Vn = explicit_basis(nxt, state)
    Vns = _explicit_pipeline(model, state.X, F, mu, s_next, mode, nxt.size, 0)[0]
    y = lift(state.X[:, rng.choice(s)])
    x_new = basis_change_project(view, basis, nxt, y)
    ref = Vns @ _lift(Vns, mode)(Vs @ lift_s(V @ y))
    out["basis_change"] = _rel(Vn @ x_new, ref)

    if hyper:
        cols = rng.choice(s, size=min(3, s.size), replace=False)
        errs = []
        for j in cols:
            y = lift(state.X[:, j])
            ys = lift_s(V @ y)
            errs.append(_rel(V @ system.rhs(y), Vs @ red.system.rhs(ys)))
        out["rhs"] = max(errs)
        out["index_match"] = float(np.array_equal(np.sort(h.global_indices), np.sort(rows)))
    return out


def oracle_suite(model, dictionary, n_instances, modes, seed=0, n_s_range=(8, 40)):
    """Largest discrepancy per quantity over random ``(I_s, mu)`` instances."""
    rng = np.random.default_rng(seed)
    n_x = dictionary.state.size
    worst, count = {}, 0
    for _ in range(n_instances):
        for mode, hyper in modes:
            mu = model.domain.lower + rng.random(model.domain.n_p) * (model.domain.upper - model.domain.lower)
            lo, hi = n_s_range[0], min(n_s_range[1], n_x)
            s = np.sort(rng.choice(n_x, size=rng.integers(lo, hi + 1), replace=False))
            s2 = np.sort(rng.choice(n_x, size=rng.integers(lo, hi + 1), replace=False))
            res = oracle_instance(model, dictionary, mu, s, s2, mode, hyper, rng=rng)
            count += 1
            for k, v in res.items():
                key = f"{mode}{'+hyper' if hyper else ''}:{k}"
                if k == "index_match":
                    worst[key] = min(worst.get(key, 1.0), v)
                else:
                    worst[key] = max(worst.get(key, 0.0), v)
    return worst, count


def oracle_passed(worst, tol=ORACLE_TOL):
    return all((v == 1.0) if k.endswith("index_match") else v <= tol for k, v in worst.items())


# ---------------------------------------------------------------------------
# nonlinearity index composition

def composed_index_instances(n_instances, seed=0, n=60, n_x=40):
    """Instances where the direct DEIM rows lie in the dictionary row set.

    Each instance builds nonlinearity snapshots ``F`` of ``n`` rows that
    vanish outside a random row set, so the offline DEIM rows ``D_P`` cover
    every row a direct DEIM can pick.  Returns a list of
    ``(direct_rows, composed_rows)``.
    """
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n_instances):
        n_p = int(rng.integers(n_x // 2, n_x))
        support = np.sort(rng.choice(n, size=n_p, replace=False))
        F = np.zeros((n, n_x))
        F[support] = rng.standard_normal((n_p, n_x)) * np.logspace(0, -4, n_x)
        X = rng.standard_normal((n, n_x))
        nd = build_nonlinearity_dictionary(_RowModel(n), X, F, n_p=n_p)
        s = np.sort(rng.choice(n_x, size=int(rng.integers(5, n_x)), replace=False))
        m = int(rng.integers(1, min(s.size, n_p) + 1))
        U_s = np.linalg.svd(F[:, s], full_matrices=False)[0][:, :m]
        composed = compose_indices(nd.online_view(), s, m=m)[0]
        out.append((deim(U_s).indices, composed))
    return out


class _RowModel:
    """Minimal model whose nonlinearity row ``i`` reads state entry ``i``."""

    def __init__(self, n):
        self.nonlinearity = type("Rows", (), {"source": np.arange(n)})()


# ---------------------------------------------------------------------------
# integrator checks

def harmonic_energy_drift(steps=1000, dt=0.1):
    """Largest relative energy change of the midpoint rule on ``q'' = -q``."""
    A = np.array([[0.0, 1.0], [-1.0, 0.0]])
    st = MidpointLinearStepper(A, dt)
    x = np.array([1.0, 0.3])
    e0 = x @ x
    worst = 0.0
    for _ in range(steps):
        x = st.step(x)
        worst = max(worst, abs(x @ x - e0) / e0)
    return worst


def midpoint_symmetry_error(dt=0.05, seed=0):
    """``|Phi_{-dt}(Phi_dt(x)) - x|`` for a pendulum chain."""
    rng = np.random.default_rng(seed)
    n = 4

    def rhs(x, t):
        return np.concatenate([x[n:], -np.sin(x[:n])])

    def jac(x, t):
        return np.block([[np.zeros((n, n)), np.eye(n)], [-np.diag(np.cos(x[:n])), np.zeros((n, n))]])

    x = rng.standard_normal(2 * n)
    y, _ = midpoint_step_nonlinear(rhs, jac, x, 0.0, dt)
    z, _ = midpoint_step_nonlinear(rhs, jac, y, dt, -dt)
    return float(np.linalg.norm(z - x) / np.linalg.norm(x))


# ---------------------------------------------------------------------------
# timing

def window_seconds(model, dictionary, mu, cfg, method="db-csvd", repetitions=5, settings=OnlineSettings()):
    """Median over repetitions of the mean online time per window (setup excluded)."""
    ctx = prepare_query(model, dictionary, mu, cfg.c)
    out = []
    for _ in range(repetitions):
        run = run_online(model, dictionary, mu, cfg, method, settings, ctx=ctx)
        out.append(run.online_seconds / run.n_windows)
    return statistics.median(out)


def timing_dictionary(grid, n_x=300, training=WAVE_TRAINING):
    """Wave dictionary with ``n_x`` snapshots on the given grid."""
    steps = n_x // len(training)
    model = build_wave2d(*grid, steps=steps)
    return model, build_dictionary(model, training)


def n_independence(grids, repetitions=5, n_s=60, m_s=20, mu=8.5, runs_per_repetition=3):
    """Per-window online times on several grids and their relative spread.

    One repetition averages the per-window time over
    ``runs_per_repetition`` runs.  Repetitions on the different grids are
    interleaved after one warm-up run each, so drifts of the machine speed
    affect all sizes alike.  Returns the median over repetitions for every
    grid and ``(max - min) / min``.
    """
    cfg = SelectionConfig(m_s, n_s)
    setups = []
    for grid in grids:
        model, d = timing_dictionary(grid)
        ctx = prepare_query(model, d, mu, cfg.c)
        run_online(model, d, mu, cfg, "db-csvd", ctx=ctx)
        setups.append((model, d, ctx))
    samples = [[] for _ in grids]
    gc.collect()
    gc.disable()
    try:
        for _ in range(repetitions):
            for i, (model, d, ctx) in enumerate(setups):
                runs = [run_online(model, d, mu, cfg, "db-csvd", ctx=ctx) for _ in range(runs_per_repetition)]
                samples[i].append(sum(r.online_seconds for r in runs) / sum(r.n_windows for r in runs))
    finally:
        gc.enable()
    times = [statistics.median(x) for x in samples]
    return times, (max(times) - min(times)) / min(times)


# ---------------------------------------------------------------------------
# dictionary file consistency

def dictionary_consistency(path):
    """Relative mismatch of stored products against products recomputed from ``X``."""
    d = load_dictionary(path)
    s = d.state
    X = s.X
    n = X.shape[0] // 2
    JX = np.vstack([X[n:], -X[:n]])
    err = max(_rel(s.G_X, X.T @ X), _rel(s.G_XJ, X.T @ JX))
    if d.nonlinear is not None:
        F = d.nonlinear.F
        err = max(err, _rel(d.nonlinear.G_F, F.T @ F), _rel(d.nonlinear.G_XF, X.T @ F))
    return err


# ---------------------------------------------------------------------------
# suites

def _wave(scale):
    nx1, nx2, steps = SCALES[scale]["wave"]
    model = build_wave2d(nx1, nx2, steps=steps)
    return model, build_dictionary(model, WAVE_TRAINING)


def _sine_gordon(scale):
    nz, steps = SCALES[scale]["sine_gordon"]
    model = build_sine_gordon(nz, steps=steps)
    return model, build_dictionary(model, SG_TRAINING)


def _run_checks(scale, dictionary_path=None):
    cache = {}

    def wave():
        if "wave" not in cache:
            cache["wave"] = _wave(scale)
        return cache["wave"]

    def sg():
        if "sg" not in cache:
            cache["sg"] = _sine_gordon(scale)
        return cache["sg"]

    n_inst = SCALES[scale]["instances"]

    def integrator_energy():
        v = harmonic_energy_drift()
        return v <= 1e-12, f"relative energy drift {v:.2e}"

    def integrator_symmetry():
        v = midpoint_symmetry_error()
        return v <= 1e-10, f"round trip error {v:.2e}"

    def oracle_wave():
        worst, count = oracle_suite(*wave(), n_inst, [("csvd", False), ("pod", False)])
        return oracle_passed(worst), f"{count} instances, worst {max(worst.values()):.2e}"

    def oracle_sine_gordon():
        worst, count = oracle_suite(*sg(), n_inst, [("csvd", True), ("pod", True)])
        bad = [k for k, v in worst.items() if k.endswith("index_match") and v != 1.0]
        worst_rel = max(v for k, v in worst.items() if not k.endswith("index_match"))
        return oracle_passed(worst), f"{count} instances, worst {worst_rel:.2e}" + (
            f", index mismatch in {bad}" if bad else "")

    def index_composition():
        inst = composed_index_instances(12)
        ok = sum(np.array_equal(a, b) for a, b in inst)
        return ok == len(inst), f"{ok}/{len(inst)} instances equal"

    def online_symplecticity():
        model, d = wave()
        n_x = d.state.size
        run = run_online(model, d, 8.5, SelectionConfig(max(1, model.n_t // 4), max(4, n_x // 3)), "db-csvd")
        v = max(symplectic_defect(explicit_basis(w.basis, d.state)) for w in run.windows)
        return v <= 1e-8, f"{run.n_windows} bases, largest defect {v:.2e}"

    def hamiltonian_bound():
        model, d = wave()
        n_x = d.state.size
        ratios = []
        for n_s in (max(4, n_x // 8), max(4, n_x // 4)):
            run = run_online(model, d, 8.2, SelectionConfig(max(1, model.n_t // 6), n_s), "db-csvd")
            ratios += [j / b if b > 0 else (0.0 if j == 0 else np.inf)
                       for b, j in basis_change_bounds(model, run, d.state)]
        v = max(ratios) if ratios else 0.0
        return v <= 1.0, f"{len(ratios)} basis changes, largest jump/bound {v:.3f}"

    checks = [integrator_energy, integrator_symmetry, oracle_wave, oracle_sine_gordon, index_composition,
              online_symplecticity, hamiltonian_bound]

    if SCALES[scale]["timing"] is not None:
        def online_n_independence():
            (a, b), rel = n_independence(SCALES[scale]["timing"], repetitions=5)
            return rel < 0.2, f"per-window {a * 1e3:.2f} ms vs {b * 1e3:.2f} ms ({100 * rel:.1f}% apart)"
        checks.append(online_n_independence)

    if dictionary_path is not None:
        def dictionary_file():
            v = dictionary_consistency(dictionary_path)
            return v <= 1e-10, f"stored products match recomputation to {v:.2e}"
        checks.append(dictionary_file)

    for fn in checks:
        tic = time.perf_counter()
        try:
            passed, detail = fn()
        except (HamredError, ArithmeticError, ValueError, OSError) as exc:
            passed, detail = False, f"{type(exc).__name__}: {exc}"
        yield CheckResult(fn.__name__, bool(passed), detail, time.perf_counter() - tic)


def run_checks(scale="default", dictionary_path=None, report=None):
    """Run the suites; ``report`` is called with each :class:`CheckResult` as it finishes."""
    if scale not in SCALES:
        raise ValueError(f"unknown scale {scale!r}; expected one of {tuple(SCALES)}")
    out = []
    for res in _run_checks(scale, dictionary_path):
        out.append(res)
        if report is not None:
            report(res)
    return out
