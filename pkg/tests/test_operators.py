import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from osmosis_adi.grid_image import Image
from osmosis_adi.operators import (
    DriftField,
    apply_operator,
    assemble,
    assemble_directional,
    canonical_drift,
    export_coo,
    full_sparse,
    mask_drift,
)


def random_v(rng, n_y, n_x):
    return rng.uniform(0.05, 1.0, (n_y, n_x))


def test_constant_reference_has_zero_drift():
    d = canonical_drift(np.full((4, 3), 0.7))
    assert not d.d1.any() and not d.d2.any()


def test_drift_midpoint_value():
    d = canonical_drift(np.array([[1.0, 3.0]]))
    assert d.d1[0, 1] == 1.0
    assert d.d1[0, 0] == d.d1[0, 2] == 0.0
    assert d.d2.shape == (2, 2) and not d.d2.any()


def test_drift_from_image_channel_and_errors():
    img = Image(np.stack([np.ones((2, 2)), np.array([[1.0, 3.0], [1.0, 1.0]]), np.ones((2, 2))]))
    assert canonical_drift(img, channel=1).d1[0, 1] == 1.0
    with pytest.raises(ValueError):
        canonical_drift(np.array([[1.0, 0.0]]))


def test_drift_bounded_by_two_over_h(rng):
    for h in (1.0, 0.5):
        d = canonical_drift(random_v(rng, 6, 7), h)
        assert np.abs(d.d1).max() < 2 / h and np.abs(d.d2).max() < 2 / h


def test_zero_drift_row_block_is_neumann_laplacian():
    a1 = assemble_directional(DriftField.zeros(3, 2), "x")
    for b in range(2):
        np.testing.assert_array_equal(a1.lower[b, 1:], [1, 1])
        np.testing.assert_array_equal(a1.diag[b], [-1, -2, -1])
        np.testing.assert_array_equal(a1.upper[b, :-1], [1, 1])


def test_degenerate_direction_is_zero():
    a1, a2 = assemble(canonical_drift(np.array([[0.2], [0.9], [0.4]])))
    assert a1.diag.shape == (3, 1) and not a1.diag.any()
    assert a2.diag.shape == (1, 3) and a2.diag.any()


def test_bad_direction():
    with pytest.raises(ValueError):
        assemble_directional(DriftField.zeros(2, 2), "z")


def test_random_4x5_column_sums_and_signs(rng):
    a1, a2 = assemble(canonical_drift(random_v(rng, 5, 4)))
    for op in (a1, a2):
        assert np.abs(op.column_sums()).max() <= 1e-14
        assert op.lower.min() >= 0 and op.upper.min() >= 0


@pytest.mark.parametrize("shape", [(3, 3), (4, 5), (1, 4), (5, 1)])
def test_matches_dense_stencil(rng, stencil, shape):
    n_y, n_x = shape
    d = canonical_drift(random_v(rng, n_y, n_x), h=0.7)
    A = stencil(d.d1, d.d2, h=0.7)
    np.testing.assert_allclose(full_sparse(*assemble(d)).toarray(), A, atol=1e-13)
    u = rng.standard_normal(n_x * n_y)
    np.testing.assert_allclose(apply_operator(assemble(d), u), A @ u, atol=1e-12)


def test_stencil_with_arbitrary_drift(rng, stencil):
    # drift not derived from an image, still inside |d| <= 2/h
    d = DriftField(rng.uniform(-1.5, 1.5, (4, 6)), rng.uniform(-1.5, 1.5, (5, 5)))
    A = stencil(d.d1, d.d2)
    np.testing.assert_allclose(full_sparse(*assemble(d)).toarray(), A, atol=1e-14)
    np.testing.assert_allclose(A.sum(axis=0), 0, atol=1e-14)


def test_reference_is_steady_state(rng):
    v = random_v(rng, 7, 6)
    res = apply_operator(assemble(canonical_drift(v)), v.ravel())
    assert np.abs(res).max() < 1e-12 * np.abs(v).max()


def test_constant_in_kernel_without_drift():
    a = assemble(DriftField.zeros(4, 3))
    assert np.abs(apply_operator(a, np.full(12, 3.0))).max() == 0


def test_length_mismatch():
    a1, _ = assemble(DriftField.zeros(3, 3))
    with pytest.raises(ValueError):
        apply_operator(a1, np.ones(8))


def test_mask_drift(rng):
    d = canonical_drift(random_v(rng, 4, 5))
    m1, m2 = np.zeros(d.d1.shape, bool), np.zeros(d.d2.shape, bool)
    same = mask_drift(d, m1, m2)
    np.testing.assert_array_equal(same.d1, d.d1)
    np.testing.assert_array_equal(same.d2, d.d2)
    zero = mask_drift(d, ~m1, ~m2)
    assert not zero.d1.any() and not zero.d2.any()
    np.testing.assert_array_equal(
        full_sparse(*assemble(zero)).toarray(),
        full_sparse(*assemble(DriftField.zeros(5, 4))).toarray(),
    )
    m1[2, 3] = True
    one = mask_drift(d, m1, m2)
    assert one.d1[2, 3] == 0
    diff = one.d1 != d.d1
    assert diff.sum() == 1 and diff[2, 3]
    np.testing.assert_array_equal(one.d2, d.d2)
    with pytest.raises(ValueError):
        mask_drift(d, m1[:, :-1], m2)


def test_export_coo(tmp_path, rng):
    a = assemble(canonical_drift(random_v(rng, 3, 2)))
    p = tmp_path / "a.csv"
    export_coo(a, p)
    rows = np.loadtxt(p, delimiter=",", skiprows=1)
    dense = np.zeros((6, 6))
    dense[rows[:, 0].astype(int), rows[:, 1].astype(int)] = rows[:, 2]
    np.testing.assert_array_equal(dense, full_sparse(*a).toarray())


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 7), st.integers(1, 7), st.integers(0, 2**32 - 1), st.floats(0.25, 4.0))
def test_structural_invariants_property(n_x, n_y, seed, h):
    v = np.random.default_rng(seed).uniform(1e-3, 1.0, (n_y, n_x))
    a1, a2 = assemble(canonical_drift(v, h))
    scale = 4 / h**2
    for op in (a1, a2):
        assert np.abs(op.column_sums()).max() <= 1e-14 * scale
        assert op.lower.min() >= 0 and op.upper.min() >= 0
    A = full_sparse(a1, a2)
    assert np.abs(np.asarray(A.sum(axis=0))).max() <= 1e-14 * scale
    assert np.abs(A @ v.ravel()).max() <= 1e-12 * scale * v.max()
