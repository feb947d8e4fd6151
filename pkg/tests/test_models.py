import numpy as np
import pytest
import scipy.sparse as sp

from hamred.errors import ContractError, DimensionError
from hamred.models import (ParameterDomain, bump, bump_slope, build_sine_gordon, build_wave2d, eval_nonlinearity_rows,
                           eval_rhs, kink_profile, sine_gordon_displacement)
from hamred.symplectic import apply_poisson


def fd_gradient(model, x, mu, h=1e-6):
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (model.hamiltonian(x + e, mu) - model.hamiltonian(x - e, mu)) / (2 * h)
    return g


def test_bump_at_origin():
    assert bump(0.0) == 1.0
    assert bump_slope(0.0) == 0.0


def test_bump_support_and_slope(rng):
    assert bump(2.0) == 0.0 and bump(-3.0) == 0.0
    s = rng.uniform(-2.5, 2.5, 20)
    h = 1e-6
    np.testing.assert_allclose(bump_slope(s), (bump(s + h) - bump(s - h)) / (2 * h), atol=1e-6)


def test_wave_dimension():
    assert build_wave2d(200, 10).dim == 4000


def test_wave_full_grid_dimension():
    assert build_wave2d(2000, 20).dim == 80000


def test_wave_zero_state():
    model = build_wave2d(6, 3)
    x = np.zeros(model.dim)
    assert model.hamiltonian(x, 8.5) == 0.0
    np.testing.assert_array_equal(eval_rhs(model, x, 0.0, 8.5), 0.0)


def test_wave_affine_structure(rng):
    model = build_wave2d(6, 3)
    x = rng.standard_normal(model.dim)
    (th1, H1), (th2, H2) = model.affine_terms
    assert th1(np.array([8.5])) == pytest.approx(8.5**2)
    expected = apply_poisson(8.5**2 * (H1 @ x) + H2 @ x)
    np.testing.assert_allclose(eval_rhs(model, x, 0.0, 8.5), expected, rtol=1e-13)


def test_wave_hamiltonian_positive_definite():
    model = build_wave2d(10, 4)
    for mu in (7.0, 10.0):
        H = model.H(mu).toarray()
        assert np.linalg.eigvalsh(H).min() > 0


def test_wave_initial_value_is_affine():
    model = build_wave2d(12, 3)
    a, b = model.x0(7.0), model.x0(9.0)
    np.testing.assert_allclose(model.x0(8.0), 0.5 * (a + b), atol=1e-14)
    assert model.t_end(8.0) == pytest.approx(0.25)


@pytest.mark.parametrize("build, mu", [(lambda: build_wave2d(5, 3), 8.0), (lambda: build_sine_gordon(12), 0.8)])
def test_rhs_is_poisson_times_gradient(build, mu, rng):
    model = build()
    for _ in range(5):
        x = 0.3 * rng.standard_normal(model.dim)
        g = fd_gradient(model, x, mu)
        np.testing.assert_allclose(model.gradient(x, mu), g, rtol=1e-6, atol=1e-6 * np.linalg.norm(g))
        np.testing.assert_allclose(eval_rhs(model, x, 0.0, mu), apply_poisson(model.gradient(x, mu)))


def test_sine_gordon_rhs_against_fd_gradient_n50(rng):
    model = build_sine_gordon(50)
    x = 0.5 * rng.standard_normal(model.dim)
    g = fd_gradient(model, x, 0.75)
    rhs = eval_rhs(model, x, 0.0, 0.75)
    assert np.linalg.norm(rhs - apply_poisson(g)) <= 1e-6 * np.linalg.norm(rhs)


def test_rhs_jacobian_against_finite_differences(rng):
    model = build_sine_gordon(10)
    x = rng.standard_normal(model.dim)
    J = model.rhs_jacobian(x, 0.0, 0.8)
    assert sp.issparse(J)
    h = 1e-7
    fd = np.column_stack([(model.rhs(x + h * e, 0.0, 0.8) - model.rhs(x - h * e, 0.0, 0.8)) / (2 * h)
                          for e in np.eye(model.dim)])
    np.testing.assert_allclose(J.toarray(), fd, atol=1e-6)


def test_kink_profile_centre():
    for v in (0.7, 0.8, 0.9):
        assert kink_profile(10.0, v) == pytest.approx(np.pi, rel=1e-15)


def test_sine_gordon_dimension_and_zero_p_block(rng):
    assert build_sine_gordon(5000).dim == 10000
    model = build_sine_gordon(20)
    f = model.f_nl(rng.standard_normal(model.dim), 0.8)
    np.testing.assert_array_equal(f[20:], 0.0)


def test_sine_gordon_boundary_values(rng):
    model = build_sine_gordon(20)
    u = sine_gordon_displacement(model, rng.standard_normal((model.dim, 3)), 0.8)
    np.testing.assert_array_equal(u[0], 0.0)
    np.testing.assert_array_equal(u[-1], 2 * np.pi)


def test_nonlinearity_rows_match_full_evaluation(rng):
    model = build_sine_gordon(20)
    N = model.half_dim
    x = rng.standard_normal(model.dim)
    rows = np.arange(model.dim)
    values = np.where(rows < N, x[rows % N], np.nan)
    np.testing.assert_allclose(eval_nonlinearity_rows(model, rows, values, 0.8), model.f_nl(x, 0.8), rtol=1e-15)
    z = model.info["z"]
    assert eval_nonlinearity_rows(model, [4], [0.3], 0.8)[0] == pytest.approx(np.sin(0.3 + kink_profile(z[4], 0.8)))


def test_nonlinearity_row_in_p_block_is_zero():
    model = build_sine_gordon(20)
    # the 1-based row N+3 is index N+2
    assert eval_nonlinearity_rows(model, [20 + 2], [np.nan], 0.8)[0] == 0.0


def test_nonlinearity_rows_need_state_values():
    model = build_sine_gordon(20)
    with pytest.raises(ContractError):
        eval_nonlinearity_rows(model, [3], [np.nan], 0.8)
    with pytest.raises(DimensionError):
        eval_nonlinearity_rows(model, [3, 4], [0.1], 0.8)


def test_linear_model_has_no_nonlinearity_rows():
    model = build_wave2d(4, 2)
    np.testing.assert_array_equal(eval_nonlinearity_rows(model, [0, 5], [1.0, 2.0], 8.0), 0.0)


def test_rhs_dimension_mismatch():
    with pytest.raises(DimensionError):
        eval_rhs(build_wave2d(4, 2), np.ones(5), 0.0, 8.0)


def test_domain_contains():
    dom = ParameterDomain([7.0], [10.0])
    assert dom.contains(8.5) and not dom.contains(10.5)
    with pytest.raises(ContractError):
        ParameterDomain([1.0], [1.0])


def test_grid_size_validation():
    with pytest.raises(ContractError):
        build_wave2d(1, 4)
    with pytest.raises(ContractError):
        build_sine_gordon(1)
