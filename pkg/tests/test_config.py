import numpy as np
import pytest

from hamred.config import ConfigError, load_config, parse_config

BASE = """\
[model]
name = wave2d
grid = 20, 2
steps = 60

[training]
mu = 7, 8.5, 10

[test]
mu = 8.5

[methods]
list = fom, csvd, db-csvd
basis_sizes = 8, 16

[sweep]
m_s = 20, 60
n_s = 20, 40
"""


def edit(old, new, text=BASE):
    assert old in text
    return text.replace(old, new)


def error_of(text):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    return info.value


def test_base_config(tmp_path):
    cfg = parse_config(BASE, str(tmp_path / "exp.ini"))
    assert cfg.model == "wave2d" and cfg.grid == (20, 2) and cfg.steps == 60
    np.testing.assert_array_equal(cfg.training[:, 0], [7.0, 8.5, 10.0])
    assert cfg.methods == ("fom", "csvd", "db-csvd")
    assert cfg.m_s == (20, 60) and cfg.n_s == (20, 40) and cfg.basis_sizes == (8, 16)
    assert cfg.snapshot_steps == "leading"
    assert cfg.eps_csvd == 1e-12 and cfg.route == "qr"
    assert cfg.out_dir == str(tmp_path / "results")
    assert cfg.build_model().dim == 80


def test_shipped_configs_load():
    for name in ("tiny", "wave", "sine_gordon"):
        cfg = load_config(f"configs/{name}.ini")
        assert cfg.methods


def test_wave_config_trains_on_three_parameters():
    cfg = load_config("configs/wave.ini")
    assert cfg.training.shape == (3, 1) and cfg.steps == 600 and cfg.grid == (200, 10)


@pytest.mark.parametrize("old, new, field, line", [
    ("name = wave2d", "name = heat", "model.name", 2),
    ("grid = 20, 2", "grid = 20", "model.grid", 3),
    ("grid = 20, 2", "grid = 20, x", "model.grid", 3),
    ("steps = 60", "steps = 0", "model.steps", 4),
    ("mu = 7, 8.5, 10", "mu = 7, 12", "training.mu", 7),
    ("list = fom, csvd, db-csvd", "list = fom, magic", "methods.list", 13),
    ("m_s = 20, 60", "m_s = 0", "sweep.m_s", 17),
    ("m_s = 20, 60", "m_s = 20, 60\nsnapshot_steps = all", "sweep.snapshot_steps", 18),
    ("[sweep]", "[swep]", "swep", 16),
])
def test_invalid_field_is_named_with_its_line(old, new, field, line):
    err = error_of(edit(old, new))
    assert err.field == field
    assert err.line == line
    assert f"[{field}] (line {line})" in str(err)


def test_empty_method_list():
    err = error_of(edit("list = fom, csvd, db-csvd", "list ="))
    assert err.field == "methods.list"
    assert "empty" in str(err)


def test_seed_is_mandatory_with_random_draws():
    err = error_of(edit("mu = 8.5", "count = 4"))
    assert err.field == "test.seed"
    cfg = parse_config(edit("mu = 8.5", "count = 4\nseed = 42"))
    assert cfg.test.shape == (4, 1) and cfg.seed == 42


def test_seed_override_redraws():
    cfg = parse_config(edit("mu = 8.5", "count = 4\nseed = 42"))
    other = cfg.with_seed(43)
    assert other.seed == 43 and not np.array_equal(other.test, cfg.test)
    np.testing.assert_array_equal(cfg.with_seed(42).test, cfg.test)
    with pytest.raises(ConfigError):
        parse_config(BASE).with_seed(1)


def test_explicit_and_random_test_parameters_conflict():
    err = error_of(edit("mu = 8.5", "mu = 8.5\ncount = 3\nseed = 1"))
    assert err.field == "test"


def test_standard_methods_need_basis_sizes():
    err = error_of(edit("basis_sizes = 8, 16\n", ""))
    assert err.field == "methods.basis_sizes"


def test_snapshot_steps_values():
    cfg = parse_config(edit("mu = 7, 8.5, 10", "mu = 7, 8.5, 10\nsnapshot_steps = all"))
    assert cfg.snapshot_steps == "all"
    err = error_of(edit("mu = 7, 8.5, 10", "mu = 7, 8.5, 10\nsnapshot_steps = odd"))
    assert err.field == "training.snapshot_steps"


@pytest.mark.parametrize("text, field", [
    ("[eps]\ncsvd = 2\n", "eps.csvd"),
    ("[eps]\nroute = fast\n", "eps.route"),
    ("[tolerances]\nnewton = 0\n", "tolerances.newton"),
    ("[output]\ntimings = maybe\n", "output.timings"),
])
def test_optional_sections_are_validated(text, field):
    assert error_of(BASE + "\n" + text).field == field


def test_syntax_error_reports_line():
    err = error_of("[model]\nname wave2d\n")
    assert err.field == "syntax"


def test_missing_section():
    err = error_of(BASE.split("[methods]")[0])
    assert err.field == "methods"


def test_sine_gordon_grid_takes_one_size():
    text = edit("name = wave2d", "name = sine_gordon")
    assert error_of(text).field == "model.grid"


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(str(tmp_path / "nope.ini"))
