import numpy as np
import pytest

from bcscast.codec import (MeasurementSet, generate_sampling_matrix,
                           pseudo_inverse_init, sample_block, sample_frame)
from bcscast.errors import ConfigError, RateError
from bcscast.frames import Frame


def test_matrix_rows_orthonormal():
    phi = generate_sampling_matrix(8, seed=7)
    gram = phi.rows @ phi.rows.T
    assert np.max(np.abs(gram - np.eye(64))) < 1e-10


def test_matrix_deterministic_per_seed():
    a = generate_sampling_matrix(8, seed=7)
    b = generate_sampling_matrix(8, seed=7)
    assert np.array_equal(a.rows, b.rows)


def test_matrix_changes_with_seed():
    a = generate_sampling_matrix(8, seed=7)
    b = generate_sampling_matrix(8, seed=8)
    assert np.max(np.abs(a.rows - b.rows)) > 1e-3


def test_operator_is_prefix():
    # Dropping the rate must not change the rows that remain: a budget cut
    # only truncates, so already-sent samples stay valid.
    phi = generate_sampling_matrix(8, seed=3)
    for m in (1, 10, 37, 64):
        assert np.array_equal(phi.operator(m), phi.rows[:m])


def test_operator_rejects_bad_rates():
    phi = generate_sampling_matrix(8, seed=3)
    with pytest.raises(RateError):
        phi.operator(0)
    with pytest.raises(RateError):
        phi.operator(65)


def test_small_block_size_supported():
    phi = generate_sampling_matrix(2, seed=5)
    gram = phi.rows @ phi.rows.T
    assert np.max(np.abs(gram - np.eye(4))) < 1e-10


def test_block_size_one_rejected():
    with pytest.raises(ConfigError):
        generate_sampling_matrix(1, seed=0)


def test_sample_block_matches_manual_product():
    phi = generate_sampling_matrix(8, seed=7)
    rng = np.random.default_rng(0)
    x = rng.standard_normal(64)
    y = sample_block(x, 20, phi)
    assert np.allclose(y, phi.rows[:20] @ x, atol=1e-12)


def test_full_rate_back_projection_inverts():
    # At m == n the orthonormal operator is square, so transpose inversion
    # is exact up to float rounding.
    phi = generate_sampling_matrix(8, seed=7)
    rng = np.random.default_rng(1)
    x = rng.standard_normal(64) * 255
    y = sample_block(x, 64, phi)
    back = pseudo_inverse_init(y, 64, phi)
    assert np.max(np.abs(back - x)) < 1e-9


def test_partial_back_projection_is_projection():
    # Phi^T Phi is idempotent for orthonormal rows: projecting twice equals
    # projecting once.
    phi = generate_sampling_matrix(8, seed=7)
    rng = np.random.default_rng(2)
    x = rng.standard_normal(64)
    m = 17
    once = pseudo_inverse_init(sample_block(x, m, phi), m, phi)
    twice = pseudo_inverse_init(sample_block(once, m, phi), m, phi)
    assert np.allclose(once, twice, atol=1e-12)


def test_sample_frame_per_block_rates():
    phi = generate_sampling_matrix(8, seed=7)
    rng = np.random.default_rng(3)
    plane = rng.uniform(0, 255, size=(16, 16))
    rates = [10, 20, 30, 64]
    ms = sample_frame(Frame(plane), rates, phi, kind="I", frame_index=0)
    assert ms.block_count == 4
    assert [len(s) for s in ms.samples] == rates
    # Block 0 of a 16x16 plane is the top-left 8x8 tile in column-major order.
    x0 = plane[:8, :8].reshape(-1, order="F")
    assert np.allclose(ms.samples[0], phi.rows[:10] @ x0, atol=1e-12)


def test_sample_frame_rate_count_mismatch():
    phi = generate_sampling_matrix(8, seed=7)
    plane = np.zeros((16, 16))
    with pytest.raises(ConfigError):
        sample_frame(Frame(plane), [10, 20], phi, kind="I", frame_index=0)


def test_measurement_set_validates_kind():
    with pytest.raises(ConfigError):
        MeasurementSet(samples=[np.zeros(3)], counts=[3], kind="B", frame_index=0)


def test_row_indices_default_prefix():
    ms = MeasurementSet(samples=[np.zeros(5)], counts=[5], kind="I", frame_index=0)
    assert np.array_equal(ms.row_indices(0), np.arange(5))


def test_row_indices_explicit_holes():
    rows = [np.array([0, 2, 4])]
    ms = MeasurementSet(samples=[np.zeros(3)], counts=[3], kind="P",
                        frame_index=1, rows=rows)
    assert np.array_equal(ms.row_indices(0), [0, 2, 4])
