"""Experiment configuration read from an INI file.

Schema (keys in brackets are optional)::

    [model]
    name = wave2d | sine_gordon
    grid = 200, 10            # wave2d: nx1, nx2; sine_gordon: nz
    steps = 600

    [training]
    mu = 7, 8.5, 10           # one parameter per entry; components joined by ';'
    [snapshot_steps = leading]  # leading: 0..n_t-1, trailing: 1..n_t, all: 0..n_t
    [n_p = ...]               # cap on the nonlinearity dictionary rows

    [test]
    mu = 8.5                  # explicit list, or
    count = 10                # uniform draws from the parameter box
    seed = 42                 # mandatory with count

    [methods]
    list = fom, csvd, db-csvd
    [basis_sizes = 64, 128]   # sizes for the standard methods pod, csvd, ...

    [sweep]
    m_s = 60, 90, 120, 150
    n_s = 50, 100, 150
    [c = ...]                 # time weight; default from the training parameters

    [eps]
    [csvd = 1e-12]
    [sdeim = 1e-12]
    [pod = ...]               # defaults to csvd
    [route = qr]

    [output]
    dir = results
    [dictionary = dictionary.hd]
    [timings = true]          # false writes zeros so CSVs are byte-identical
    [figures = true]

    [tolerances]
    [newton = 1e-10]
    [newton_max_iter = 25]

Relative paths are resolved against the directory of the config file.
"""

import configparser
import dataclasses
import os
import re
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .baselines import STANDARD_METHODS
from .errors import HamredError
from .dictionary import SNAPSHOT_STEPS
from .integrators import NewtonSettings
from .models import build_sine_gordon, build_wave2d
from .online import METHODS, ROUTES, OnlineSettings
from .rng import uniform_parameters

ALL_METHODS = ("fom",) + STANDARD_METHODS + METHODS
MODELS = ("wave2d", "sine_gordon")
SCHEMA = {
    "model": ("name", "grid", "steps"),
    "training": ("mu", "snapshot_steps", "n_p"),
    "test": ("mu", "count", "seed"),
    "methods": ("list", "basis_sizes"),
    "sweep": ("m_s", "n_s", "c"),
    "eps": ("csvd", "sdeim", "pod", "route"),
    "output": ("dir", "dictionary", "timings", "figures"),
    "tolerances": ("newton", "newton_max_iter"),
}


class ConfigError(HamredError, ValueError):
    """Invalid configuration; names the offending field and its line."""

    def __init__(self, msg, field=None, line=None, path=None):
        where = ""
        if field:
            where = f"[{field}]"
            if line:
                where += f" (line {line})"
            where += ": "
        prefix = f"{path}: " if path else ""
        super().__init__(prefix + where + msg)
        self.field, self.line, self.path = field, line, path


@dataclass
class ExperimentConfig:
    model: str
    grid: tuple
    steps: int
    training: np.ndarray
    test: np.ndarray
    methods: tuple
    m_s: tuple
    n_s: tuple
    basis_sizes: tuple = ()
    seed: Optional[int] = None
    test_count: Optional[int] = None
    snapshot_steps: str = "leading"
    n_p: Optional[int] = None
    c: Optional[float] = None
    eps_csvd: float = 1e-12
    eps_sdeim: float = 1e-12
    eps_pod: Optional[float] = None
    route: str = "qr"
    out_dir: str = "results"
    dictionary: str = "dictionary.hd"
    timings: bool = True
    figures: bool = True
    newton_tol: float = 1e-10
    newton_max_iter: int = 25
    source: Optional[str] = None
    lines: dict = field(default_factory=dict, repr=False)

    def build_model(self):
        if self.model == "wave2d":
            return build_wave2d(*self.grid, steps=self.steps)
        return build_sine_gordon(*self.grid, steps=self.steps)

    def with_seed(self, seed):
        """Copy with the random test parameters redrawn from ``seed``."""
        if self.test_count is None:
            raise ConfigError("a seed only applies to random test parameters (test.count)", "test.seed")
        if not 0 <= seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer", "test.seed")
        test = uniform_parameters(self.build_model().domain, self.test_count, seed)
        return dataclasses.replace(self, seed=seed, test=test)

    @property
    def settings(self):
        return OnlineSettings(self.eps_csvd, self.eps_sdeim, self.eps_pod, self.route, self.newton)

    @property
    def newton(self):
        return NewtonSettings(tol=self.newton_tol, max_iter=self.newton_max_iter)


def _line_numbers(text):
    """``(section, key) -> line`` for every key and section header."""
    out, section = {}, None
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        m = re.match(r"^\[([^\]]+)\]", line)
        if m:
            section = m.group(1).strip()
            out[(section, None)] = no
            continue
        m = re.match(r"^([^=:#;\s][^=:]*?)\s*[=:]", line)
        if m and section is not None:
            out[(section, m.group(1).strip().lower())] = no
    return out


class _Reader:
    def __init__(self, parser, lines, path):
        self.p, self.lines, self.path = parser, lines, path

    def fail(self, msg, section, key=None):
        name = f"{section}.{key}" if key else section
        return ConfigError(msg, name, self.lines.get((section, key)), self.path)

    def raw(self, section, key, default=None, required=False):
        if not self.p.has_section(section):
            if required:
                raise self.fail("missing section", section)
            return default
        if not self.p.has_option(section, key):
            if required:
                raise self.fail("missing key", section, key)
            return default
        return self.p.get(section, key).strip()

    def _convert(self, section, key, text, kind):
        try:
            return kind(text)
        except (TypeError, ValueError):
            raise self.fail(f"cannot read {text!r} as {kind.__name__}", section, key) from None

    def scalar(self, section, key, kind, default=None, required=False):
        text = self.raw(section, key, required=required)
        if text is None or text == "":
            if required:
                raise self.fail("empty value", section, key)
            return default
        return self._convert(section, key, text, kind)

    def items(self, section, key, kind, required=False):
        text = self.raw(section, key, required=required)
        if text is None:
            return ()
        parts = [t.strip() for t in text.split(",") if t.strip()]
        return tuple(self._convert(section, key, t, kind) for t in parts)

    def boolean(self, section, key, default):
        text = self.raw(section, key)
        if text is None:
            return default
        try:
            return self.p.getboolean(section, key)
        except ValueError:
            raise self.fail(f"cannot read {text!r} as a boolean", section, key) from None

    def params(self, section, key, required=False):
        text = self.raw(section, key, required=required)
        if text is None:
            return None
        rows = []
        for part in [t.strip() for t in text.split(",") if t.strip()]:
            rows.append([self._convert(section, key, c.strip(), float) for c in part.split(";")])
        if not rows:
            raise self.fail("empty parameter list", section, key)
        if len({len(r) for r in rows}) != 1:
            raise self.fail("parameters have different numbers of components", section, key)
        return np.array(rows)


def _positive(reader, values, section, key):
    for v in values:
        if v < 1:
            raise reader.fail(f"values must be positive, got {v}", section, key)
    return values


def parse_config(text, path=None):
    """Parse and validate config ``text``; ``path`` only labels errors and anchors relative paths."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        parser.read_string(text, source=path or "<config>")
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        raise ConfigError(f"syntax error: {exc.message if hasattr(exc, 'message') else exc}",
                          "syntax", line, path) from None
    r = _Reader(parser, _line_numbers(text), path)
    for section in parser.sections():
        if section not in SCHEMA:
            raise r.fail(f"unknown section; expected one of {', '.join(SCHEMA)}", section)
        for key in parser.options(section):
            if key not in SCHEMA[section]:
                raise r.fail(f"unknown key; [{section}] takes {', '.join(SCHEMA[section])}", section, key)

    name = r.raw("model", "name", required=True)
    if name not in MODELS:
        raise r.fail(f"unknown model {name!r}; expected one of {MODELS}", "model", "name")
    grid = _positive(r, r.items("model", "grid", int, required=True), "model", "grid")
    want = 2 if name == "wave2d" else 1
    if len(grid) != want:
        raise r.fail(f"{name} needs {want} grid size(s), got {len(grid)}", "model", "grid")
    if min(grid) < 2:
        raise r.fail("grid sizes must be at least 2", "model", "grid")
    steps = r.scalar("model", "steps", int, default=600 if name == "wave2d" else 400)
    if steps < 1:
        raise r.fail("steps must be positive", "model", "steps")

    probe = build_wave2d(2, 2, 1) if name == "wave2d" else build_sine_gordon(2, 1)
    domain = probe.domain

    def inside(P, section, key):
        if P.shape[1] != domain.n_p:
            raise r.fail(f"parameters need {domain.n_p} component(s)", section, key)
        for mu in P:
            if not domain.contains(mu):
                raise r.fail(f"parameter {mu.tolist()} outside the domain "
                             f"[{domain.lower.tolist()}, {domain.upper.tolist()}]", section, key)
        return P

    training = inside(r.params("training", "mu", required=True), "training", "mu")
    snapshot_steps = r.scalar("training", "snapshot_steps", str, default="leading")
    if snapshot_steps not in SNAPSHOT_STEPS:
        raise r.fail(f"snapshot_steps must be one of {', '.join(SNAPSHOT_STEPS)}", "training", "snapshot_steps")
    n_p = r.scalar("training", "n_p", int)
    if n_p is not None and n_p < 1:
        raise r.fail("n_p must be positive", "training", "n_p")

    seed = r.scalar("test", "seed", int)
    if seed is not None and not 0 <= seed < 2**64:
        raise r.fail("seed must be a 64-bit unsigned integer", "test", "seed")
    explicit = r.params("test", "mu")
    count = r.scalar("test", "count", int)
    if explicit is not None and count is not None:
        raise r.fail("give either mu or count, not both", "test")
    if count is not None:
        if count < 1:
            raise r.fail("count must be positive", "test", "count")
        if seed is None:
            raise r.fail("seed is mandatory with random test parameters", "test", "seed")
        test = uniform_parameters(domain, count, seed)
    elif explicit is not None:
        test = inside(explicit, "test", "mu")
    else:
        raise r.fail("give test parameters as mu or count + seed", "test")

    methods = r.items("methods", "list", str, required=True)
    if not methods:
        raise r.fail("method list is empty", "methods", "list")
    for m in methods:
        if m not in ALL_METHODS:
            raise r.fail(f"unknown method {m!r}; expected one of {ALL_METHODS}", "methods", "list")
    if len(set(methods)) != len(methods):
        raise r.fail("duplicate methods", "methods", "list")
    sizes = _positive(r, r.items("methods", "basis_sizes", int), "methods", "basis_sizes")
    if any(m in STANDARD_METHODS for m in methods) and not sizes:
        raise r.fail("standard methods need basis_sizes", "methods", "basis_sizes")

    db = any(m in METHODS for m in methods)
    m_s = _positive(r, r.items("sweep", "m_s", int, required=db), "sweep", "m_s")
    n_s = _positive(r, r.items("sweep", "n_s", int, required=db), "sweep", "n_s")
    if db and not (m_s and n_s):
        raise r.fail("the sweep needs m_s and n_s values", "sweep")
    c = r.scalar("sweep", "c", float)
    if c is not None and c < 0:
        raise r.fail("time weight must be nonnegative", "sweep", "c")

    eps = {}
    for key, default in (("csvd", 1e-12), ("sdeim", 1e-12), ("pod", None)):
        v = r.scalar("eps", key, float, default=default)
        if v is not None and not 0 < v < 1:
            raise r.fail("tolerance must lie in (0, 1)", "eps", key)
        eps[key] = v
    route = r.raw("eps", "route", default="qr")
    if route not in ROUTES:
        raise r.fail(f"unknown route {route!r}; expected one of {ROUTES}", "eps", "route")

    base = os.path.dirname(os.path.abspath(path)) if path else os.getcwd()
    out_dir = os.path.join(base, r.raw("output", "dir", default="results"))
    dictionary = os.path.join(base, r.raw("output", "dictionary", default="dictionary.hd"))

    newton_tol = r.scalar("tolerances", "newton", float, default=1e-10)
    if not newton_tol > 0:
        raise r.fail("Newton tolerance must be positive", "tolerances", "newton")
    newton_iter = r.scalar("tolerances", "newton_max_iter", int, default=25)
    if newton_iter < 1:
        raise r.fail("Newton iteration cap must be positive", "tolerances", "newton_max_iter")

    return ExperimentConfig(
        model=name, grid=tuple(grid), steps=steps, training=training, test=test, methods=tuple(methods),
        m_s=tuple(m_s), n_s=tuple(n_s), basis_sizes=tuple(sizes), seed=seed, test_count=count,
        snapshot_steps=snapshot_steps,
        n_p=n_p, c=c, eps_csvd=eps["csvd"], eps_sdeim=eps["sdeim"], eps_pod=eps["pod"], route=route,
        out_dir=out_dir, dictionary=dictionary, timings=r.boolean("output", "timings", True),
        figures=r.boolean("output", "figures", True), newton_tol=newton_tol, newton_max_iter=newton_iter,
        source=path, lines=r.lines,
    )


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", path=path) from None
    return parse_config(text, path)
