"""Offline builds, single runs and parameter sweeps writing CSV results."""

import csv
import dataclasses
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .baselines import STANDARD_METHODS, nonlinear_basis, run_fom, run_standard, standard_basis
from .diagnostics import hamiltonian_error_series, online_report, relative_reduction_error
from .dictionary import build_dictionary, load_dictionary, save_dictionary, worker_count
from .errors import ContractError, HamredError
from .online import run_online
from .selection import SelectionConfig
from .standard import DeimResult

log = logging.getLogger(__name__)

HEADER = ("method", "mu", "m_s", "n_s", "eps_csvd", "eps_sdeim", "n_mean", "e_rel", "online_s", "offline_s",
          "seed", "status")
STEP_HEADER = ("step", "t", "e_ham_rel", "window_index", "basis_size")


class OutputExistsError(HamredError):
    """Refusing to overwrite an existing output without ``force``."""


class MissingDictionaryError(HamredError):
    """No dictionary file for the configuration."""


def fmt(value):
    """17 significant digits for reals, plain text otherwise, empty for ``None``."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    if isinstance(value, (tuple, list, np.ndarray)):
        return ";".join(fmt(float(v)) for v in np.ravel(value))
    return str(value)


def _refuse(path, force):
    if os.path.exists(path) and not force:
        raise OutputExistsError(f"{path} exists; pass --force to overwrite")


# ---------------------------------------------------------------------------
# offline stage

def _meta(cfg):
    return {"model": cfg.model, "grid": list(cfg.grid), "steps": cfg.steps,
            "training": cfg.training.tolist(), "snapshot_steps": cfg.snapshot_steps,
            "n_p_cap": cfg.n_p}


def build_offline(cfg, path=None, force=False):
    """Build and save the dictionary of ``cfg``; returns ``(dictionary, path)``."""
    path = path or cfg.dictionary
    _refuse(path, force)
    model = cfg.build_model()
    d = build_dictionary(model, cfg.training, n_p=cfg.n_p, snapshot_steps=cfg.snapshot_steps,
                         meta=_meta(cfg))
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    save_dictionary(d, path)
    return d, path


def open_dictionary(cfg, path=None):
    path = path or cfg.dictionary
    if not os.path.exists(path):
        raise MissingDictionaryError(
            f"no dictionary at {path}; build it first with `hamred offline --config {cfg.source or '<config>'}`")
    d = load_dictionary(path)
    want = _meta(cfg)
    for key in ("model", "grid", "steps"):
        if d.meta.get(key) != want[key]:
            raise MissingDictionaryError(
                f"{path} was built for {key}={d.meta.get(key)!r} but the config asks for {want[key]!r}; "
                f"rebuild it with `hamred offline --force`")
    return d


# ---------------------------------------------------------------------------
# runs

@dataclass(frozen=True)
class RunSpec:
    """One row of a sweep; ``n_s`` is the basis size for the standard methods."""

    method: str
    mu: tuple
    m_s: Optional[int] = None
    n_s: Optional[int] = None


@dataclass
class RunResult:
    spec: RunSpec
    n_mean: Optional[float] = None
    e_rel: Optional[float] = None
    online_s: Optional[float] = None
    offline_s: Optional[float] = None
    status: str = "ok"
    steps: Optional[dict] = field(default=None, repr=False)


def sweep_specs(cfg):
    """Every (method, mu, m_s, n_s) combination in output order."""
    out = []
    for method in cfg.methods:
        for mu in cfg.test:
            mu = tuple(float(v) for v in mu)
            if method == "fom":
                out.append(RunSpec(method, mu))
            elif method in STANDARD_METHODS:
                out += [RunSpec(method, mu, None, n) for n in cfg.basis_sizes]
            else:
                out += [RunSpec(method, mu, m, n) for m in cfg.m_s for n in cfg.n_s]
    return out


class Workbench:
    """Shared read-only state of a sweep: model, dictionary, FOM solutions, standard bases."""

    def __init__(self, cfg, dictionary):
        self.cfg = cfg
        self.model = cfg.build_model()
        self.dictionary = dictionary
        self.fom = {}
        self.bases = {}
        self.nonlinear = None
        self.basis_seconds = {}

    def prepare(self, specs, workers=1):
        """Full solves for every test parameter and the standard bases the requested runs need."""
        mus = sorted({s.mu for s in specs})
        todo = [mu for mu in mus if mu not in self.fom]

        def solve(mu):
            try:
                return mu, run_fom(self.model, np.array(mu), self.cfg.newton)
            except HamredError as exc:
                return mu, exc

        if workers > 1 and len(todo) > 1:
            with ThreadPoolExecutor(min(workers, len(todo))) as pool:
                done = list(pool.map(solve, todo))
        else:
            done = [solve(mu) for mu in todo]
        self.fom.update(done)
        X = self.dictionary.state.X
        needed = {s.method for s in specs if s.method in STANDARD_METHODS}
        for mode in ("pod", "csvd"):
            if any(m.startswith(mode) for m in needed) and mode not in self.bases:
                tic = time.perf_counter()
                largest = max(self.cfg.basis_sizes)
                self.bases[mode] = standard_basis(X, mode, max_size=min(largest, 2 * X.shape[1]))
                self.basis_seconds[mode] = time.perf_counter() - tic
        nonlinear_model = self.model.nonlinearity is not None
        if nonlinear_model and any(m.endswith("deim") for m in needed) and self.nonlinear is None:
            if self.dictionary.nonlinear is None:
                raise ContractError("the dictionary has no nonlinearity snapshots")
            tic = time.perf_counter()
            self.nonlinear = nonlinear_basis(self.dictionary.nonlinear.F, self.cfg.eps_sdeim)
            self.basis_seconds["nonlinear"] = time.perf_counter() - tic

    def _fom(self, mu):
        res = self.fom[mu]
        if isinstance(res, Exception):
            raise HamredError(f"full solve failed: {res}")
        return res

    def _step_table(self, mu, e_ham, windows, sizes):
        t = self.model.t0 + self.model.dt(np.array(mu)) * np.arange(e_ham.size)
        return {"t": t, "e_ham": e_ham, "window": windows, "size": sizes}

    def execute(self, spec):
        """Run ``spec``; failures become a status string instead of an exception."""
        try:
            return self._execute(spec)
        except (HamredError, np.linalg.LinAlgError, FloatingPointError) as exc:
            log.warning("%s mu=%s m_s=%s n_s=%s failed: %s", spec.method, spec.mu, spec.m_s, spec.n_s, exc)
            return RunResult(spec, status=f"failed: {type(exc).__name__}: {exc}")

    def _execute(self, spec):
        cfg, model = self.cfg, self.model
        mu = np.array(spec.mu)
        fom, fom_seconds = self._fom(spec.mu)
        meta = self.dictionary.meta
        if spec.method == "fom":
            n = fom.shape[1]
            steps = self._step_table(spec.mu, np.zeros(n), np.zeros(n, dtype=int),
                                     np.full(n, model.dim, dtype=int))
            return RunResult(spec, float(model.dim), 0.0, fom_seconds, 0.0, steps=steps)
        if spec.method in STANDARD_METHODS:
            mode = "csvd" if spec.method.startswith("csvd") else "pod"
            V = self.bases[mode].truncate(spec.n_s)
            nonlinear = None
            if spec.method.endswith("deim"):
                nonlinear = self.nonlinear or (np.zeros((model.dim, 0)), DeimResult(np.zeros(0, dtype=np.int64)))
            run = run_standard(model, mu, spec.method, V, nonlinear, cfg.newton)
            e_ham = hamiltonian_error_series(model, mu, fom, run.reconstructed)
            n = e_ham.size
            steps = self._step_table(spec.mu, e_ham, np.zeros(n, dtype=int), np.full(n, run.basis_size))
            offline = meta.get("snapshot_seconds", 0.0) + self.basis_seconds[mode] + (
                self.basis_seconds.get("nonlinear", 0.0) if nonlinear else 0.0)
            return RunResult(spec, float(run.basis_size), relative_reduction_error(fom, run.reconstructed),
                             run.online_seconds, offline, steps=steps)
        sel = SelectionConfig(spec.m_s, spec.n_s, cfg.c)
        run = run_online(model, self.dictionary, mu, sel, spec.method, cfg.settings)
        rep = online_report(model, run, self.dictionary.state, fom)
        steps = self._step_table(spec.mu, rep.e_ham, rep.step_window, rep.step_basis_size)
        return RunResult(spec, rep.n_mean, rep.e_rel, run.online_seconds, meta.get("offline_seconds", 0.0),
                         steps=steps)


def run_specs(bench, specs, workers=None):
    """Execute ``specs`` in a worker pool; results keep the order of ``specs``."""
    workers = workers or worker_count()
    bench.prepare(specs, workers)
    if workers > 1 and len(specs) > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(bench.execute, specs))
    return [bench.execute(s) for s in specs]


# ---------------------------------------------------------------------------
# output

def result_row(cfg, res):
    s = res.spec
    timing = (lambda v: v) if cfg.timings else (lambda v: None if v is None else 0.0)
    return {"method": s.method, "mu": s.mu, "m_s": s.m_s, "n_s": s.n_s, "eps_csvd": cfg.eps_csvd,
            "eps_sdeim": cfg.eps_sdeim, "n_mean": res.n_mean, "e_rel": res.e_rel,
            "online_s": timing(res.online_s), "offline_s": timing(res.offline_s), "seed": cfg.seed,
            "status": res.status}


def mean_rows(rows):
    """Average over the test parameters for every (method, m_s, n_s)."""
    groups = {}
    for r in rows:
        groups.setdefault((r["method"], r["m_s"], r["n_s"]), []).append(r)
    out = []
    for (method, m_s, n_s), members in groups.items():
        ok = [r for r in members if r["status"] == "ok"]
        avg = (lambda k: float(np.mean([r[k] for r in ok]))) if ok else (lambda k: None)
        status = "ok" if len(ok) == len(members) else f"partial {len(ok)}/{len(members)}"
        first = members[0]
        out.append({**first, "mu": "mean", "n_mean": avg("n_mean"), "e_rel": avg("e_rel"),
                    "online_s": avg("online_s"), "offline_s": avg("offline_s"), "status": status})
    return out


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(r[k]) for k in header])


def write_steps(path, steps):
    rows = [{"step": i, "t": steps["t"][i], "e_ham_rel": steps["e_ham"][i], "window_index": steps["window"][i],
             "basis_size": steps["size"][i]} for i in range(steps["t"].size)]
    write_csv(path, STEP_HEADER, rows)


def step_file_name(spec):
    parts = [spec.method, "mu" + fmt(spec.mu)]
    if spec.m_s is not None:
        parts.append(f"ms{spec.m_s}")
    if spec.n_s is not None:
        parts.append(f"ns{spec.n_s}")
    return "_".join(parts).replace(";", "-") + ".csv"


def _figures(out_dir, rows, results):
    from . import plotting

    plotting.plot_error_vs_size(rows, os.path.join(out_dir, "error_vs_size.svg"))
    plotting.plot_error_vs_runtime(rows, os.path.join(out_dir, "error_vs_runtime.svg"))
    first_mu = results[0].spec.mu if results else None
    best = {}
    for res in results:
        if res.spec.mu != first_mu or res.steps is None or res.spec.method == "fom":
            continue
        cur = best.get(res.spec.method)
        if cur is None or res.e_rel < cur.e_rel:
            best[res.spec.method] = res
    series = {}
    for m, res in best.items():
        s = res.spec
        label = m + ("" if s.m_s is None else f" m_s={s.m_s}") + ("" if s.n_s is None else f" n={s.n_s}")
        series[label] = (np.arange(res.steps["e_ham"].size), res.steps["e_ham"])
    plotting.plot_hamiltonian(series, os.path.join(out_dir, "hamiltonian_error.svg"))


def write_outputs(cfg, out_dir, results, force=False, step_dir="steps"):
    """``results.csv``, ``results_mean.csv``, per-step files and figures; returns the result rows."""
    main = os.path.join(out_dir, "results.csv")
    _refuse(main, force)
    os.makedirs(out_dir, exist_ok=True)
    rows = [result_row(cfg, r) for r in results]
    write_csv(main, HEADER, rows)
    means = mean_rows(rows)
    write_csv(os.path.join(out_dir, "results_mean.csv"), HEADER, means)
    sd = os.path.join(out_dir, step_dir)
    os.makedirs(sd, exist_ok=True)
    for res in results:
        if res.steps is not None:
            write_steps(os.path.join(sd, step_file_name(res.spec)), res.steps)
    if cfg.figures:
        _figures(out_dir, means, results)
    return rows


def experiment(cfg, dictionary=None, out_dir=None, force=False, workers=None):
    """The full sweep of ``cfg``."""
    out_dir = out_dir or cfg.out_dir
    _refuse(os.path.join(out_dir, "results.csv"), force)
    d = dictionary if dictionary is not None else open_dictionary(cfg)
    specs = sweep_specs(cfg)
    results = run_specs(Workbench(cfg, d), specs, workers)
    return write_outputs(cfg, out_dir, results, force)


def single_run(cfg, spec, dictionary=None, out_dir=None, force=False):
    """One run; writes ``results.csv`` and ``steps.csv`` in ``out_dir``."""
    out_dir = out_dir or cfg.out_dir
    main = os.path.join(out_dir, "results.csv")
    _refuse(main, force)
    d = dictionary if dictionary is not None else open_dictionary(cfg)
    bench = Workbench(cfg, d)
    if spec.method in STANDARD_METHODS:
        cfg = dataclasses.replace(cfg, basis_sizes=(spec.n_s,))
        bench.cfg = cfg
    res = run_specs(bench, [spec], workers=1)[0]
    os.makedirs(out_dir, exist_ok=True)
    rows = [result_row(cfg, res)]
    write_csv(main, HEADER, rows)
    if res.steps is not None:
        write_steps(os.path.join(out_dir, "steps.csv"), res.steps)
        if cfg.figures:
            from . import plotting

            plotting.plot_hamiltonian({spec.method: (np.arange(res.steps["e_ham"].size), res.steps["e_ham"])},
                                      os.path.join(out_dir, "hamiltonian_error.svg"))
    return rows[0], res
