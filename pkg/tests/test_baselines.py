import warnings

import numpy as np
import pytest

from hamred.baselines import nonlinear_basis, run_fom, run_standard, standard_basis
from hamred.errors import ContractError
from hamred.integrators import integrate
from hamred.models import build_sine_gordon, build_wave2d
from hamred.standard import deim
from hamred.symplectic import symplectic_defect


@pytest.fixture(scope="module")
def wave_snapshots():
    model = build_wave2d(20, 2, steps=40)
    X = np.hstack([integrate(model, mu) for mu in (7.0, 10.0)])
    return model, X


def test_csvd_truncation_keeps_pairs(wave_snapshots):
    _, X = wave_snapshots
    b = standard_basis(X, "csvd", max_size=20)
    V = b.truncate(8)
    assert V.shape[1] == 8
    np.testing.assert_array_equal(V[:, :4], b.full[:, :4])
    np.testing.assert_array_equal(V[:, 4:], b.full[:, 10:14])
    assert symplectic_defect(V) <= 1e-10


def test_csvd_truncation_beyond_available_size_warns(wave_snapshots):
    _, X = wave_snapshots
    b = standard_basis(X, "csvd", max_size=20)
    with pytest.warns(UserWarning, match="truncated to 20"):
        V = b.truncate(30)
    assert V.shape[1] == 20
    assert symplectic_defect(V) <= 1e-10


def test_pod_truncation(wave_snapshots):
    _, X = wave_snapshots
    b = standard_basis(X, "pod", max_size=12)
    np.testing.assert_array_equal(b.truncate(5), b.full[:, :5])


def test_unknown_modes(wave_snapshots):
    model, X = wave_snapshots
    with pytest.raises(ContractError):
        standard_basis(X, "dmd")
    with pytest.raises(ContractError):
        run_standard(model, 8.0, "dmd", np.eye(model.dim)[:, :4])
    with pytest.raises(ContractError, match="nonlinearity basis"):
        run_standard(model, 8.0, "csvd-sdeim", np.eye(model.dim)[:, :4])


def test_full_csvd_basis_reproduces_the_fom(wave_snapshots):
    model, _ = wave_snapshots
    fom, _ = run_fom(model, 8.0)
    # the complex snapshot matrix of this trajectory has numerical rank 20
    b = standard_basis(fom, "csvd", max_size=40, route="svd")
    run = run_standard(model, 8.0, "csvd", b.full)
    assert np.linalg.norm(run.reconstructed - fom) <= 1e-8 * np.linalg.norm(fom)
    assert run.basis_size == b.full.shape[1] and run.hyper_size == 0


@pytest.fixture(scope="module")
def sine_gordon_run():
    model = build_sine_gordon(60, steps=60)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        fom, _ = run_fom(model, 0.8)
    return model, fom


def test_nonlinear_basis_indices_are_distinct(sine_gordon_run):
    model, fom = sine_gordon_run
    F = np.column_stack([model.f_nl(x, 0.8) for x in fom.T])
    U, dr = nonlinear_basis(F, 1e-10)
    assert U.shape[1] == len(dr) >= 1
    assert len(set(dr.indices.tolist())) == len(dr)
    np.testing.assert_allclose(U.T @ U, np.eye(U.shape[1]), atol=1e-10)


def test_sdeim_with_all_nonlinear_rows_matches_projected_run(sine_gordon_run):
    model, fom = sine_gordon_run
    V = standard_basis(fom, "csvd", max_size=40).full
    ref = run_standard(model, 0.8, "csvd", V)
    # a DEIM basis spanning the whole q block makes interpolation exact
    N = model.half_dim
    U = np.vstack([np.eye(N), np.zeros((N, N))])
    run = run_standard(model, 0.8, "csvd-sdeim", V, (U, deim(U)))
    assert run.hyper_size == N
    assert np.linalg.norm(run.reconstructed - ref.reconstructed) <= 1e-8 * np.linalg.norm(ref.reconstructed)
