import numpy as np
import pytest

from autodiff import Tape, Tensor, ops
from errors import OperatorError, ShapeMismatchError
from operators import (Downsample, GaussianBlur, KSpaceMask, MatrixOperator, Measurement, add_noise, apply,
                       baseline_reconstruction, make_mask, make_operator, null_space_component, null_space_witness)
from operators.fourier import dft2, idft2, naive_dft2
from oracle.checks import adjoint_error


SHAPE = (32, 32)

OPERATORS = {
    "downsample_x2": lambda seed: Downsample(2, SHAPE),
    "downsample_x4": lambda seed: Downsample(4, SHAPE),
    "downsample_x8": lambda seed: Downsample(8, SHAPE),
    "blur": lambda seed: GaussianBlur(1.5, SHAPE),
    "kspace": lambda seed: KSpaceMask(make_mask(32, 32, 4.0, 0.08, seed)),
    "matrix": lambda seed: MatrixOperator(np.random.default_rng(seed).standard_normal((5, 12))),
}


@pytest.mark.parametrize("name", sorted(OPERATORS))
def test_dot_product_adjointness(name, rng):
    for seed in range(50):
        assert adjoint_error(OPERATORS[name](seed), rng) < 1e-10


@pytest.mark.parametrize("name", sorted(OPERATORS))
def test_tensor_gradient_is_the_adjoint(name, rng):
    op = OPERATORS[name](0)
    m = rng.standard_normal(op.output_shape)
    with Tape() as tape:
        x = Tensor(rng.standard_normal(op.input_shape), requires_grad=True)
        loss = ops.sum_(ops.mul(op.apply_tensor(x), Tensor(m)))
        (grad,) = tape.gradient(loss, [x])
    np.testing.assert_allclose(grad, op.adjoint_data(m), atol=1e-12)


def test_dft_matches_naive_and_is_unitary(rng):
    x = rng.standard_normal((8, 8))
    assert np.max(np.abs(dft2(x) - naive_dft2(x))) < 1e-9
    assert np.linalg.norm(dft2(x)) == pytest.approx(np.linalg.norm(x), rel=1e-12)
    np.testing.assert_allclose(idft2(dft2(x)).real, x, atol=1e-12)


def test_downsample_block_mean():
    x = np.arange(16, dtype=float).reshape(4, 4)
    np.testing.assert_allclose(Downsample(2, (4, 4)).forward(x), [[2.5, 4.5], [10.5, 12.5]])


def test_downsample_factor_must_divide():
    with pytest.raises(OperatorError):
        Downsample(3, (32, 32))


def test_blur_keeps_constants():
    op = GaussianBlur(2.0, (20, 24))
    np.testing.assert_allclose(op.forward(np.full((20, 24), 0.3)), 0.3, atol=1e-12)


def test_blur_radius_must_fit():
    with pytest.raises(OperatorError):
        GaussianBlur(10.0, (16, 16))


def test_kspace_mask_must_be_binary():
    with pytest.raises(OperatorError):
        KSpaceMask(np.full((8, 8), 0.5))


def test_make_mask_layout():
    mask = make_mask(16, 64, 4.0, 0.08, seed=3)
    assert mask.shape == (16, 64)
    # column mask broadcast over rows, DC column always kept
    assert (mask == mask[0]).all()
    assert mask[0, 0] == 1.0
    assert np.isin(mask, (0.0, 1.0)).all()
    np.testing.assert_array_equal(mask, make_mask(16, 64, 4.0, 0.08, seed=3))
    np.testing.assert_array_equal(make_mask(8, 8, 1.0, 0.5, seed=0), np.ones((8, 8)))


def test_make_mask_expected_fraction():
    fractions = [make_mask(4, 256, 4.0, 0.04, seed=s)[0].mean() for s in range(20)]
    assert np.mean(fractions) == pytest.approx(0.25, abs=0.03)


def test_make_mask_eightfold_budget():
    masks = [make_mask(1, 64, 8.0, 0.04, seed=s)[0] for s in range(1000)]
    # ceil(0.04 * 64) = 3 centre columns around DC, in unshifted layout
    assert all(mask[[62, 63, 0]].all() for mask in masks)
    fraction = np.mean([mask.mean() for mask in masks])
    assert 0.08 <= fraction <= 0.17
    assert fraction == pytest.approx(1 / 8, abs=0.01)


def test_make_mask_center_band_covering_the_width():
    np.testing.assert_array_equal(make_mask(4, 1, 4.0, 0.25, seed=0), np.ones((4, 1)))


@pytest.mark.parametrize("acceleration, center_fraction", [(0.5, 0.0), (8.0, 0.2)])
def test_make_mask_rejects_bad_budgets(acceleration, center_fraction):
    with pytest.raises(OperatorError):
        make_mask(8, 32, acceleration, center_fraction, seed=0)


def test_apply_checks_shapes():
    with pytest.raises(ShapeMismatchError):
        apply(Downsample(2, (8, 8)), np.zeros((6, 8)))


def test_add_noise_is_seeded():
    m = apply(Downsample(2, (8, 8)), np.ones((8, 8)))
    np.testing.assert_array_equal(add_noise(m, 0.0, seed=1).data, m.data)
    np.testing.assert_array_equal(add_noise(m, 0.1, seed=1).data, add_noise(m, 0.1, seed=1).data)
    assert not np.array_equal(add_noise(m, 0.1, seed=1).data, add_noise(m, 0.1, seed=2).data)
    assert add_noise(m, 0.1, seed=1).noise_sigma == 0.1
    with pytest.raises(OperatorError):
        add_noise(m, -1.0, seed=0)


def test_kspace_measurement_is_complex(rng):
    op = KSpaceMask(make_mask(8, 8, 2.0, 0.25, seed=0))
    m = apply(op, rng.standard_normal((8, 8)))
    assert m.kind == "complex" and m.shape == (2, 8, 8)


def test_upsampled_baseline_is_consistent(rng):
    op = Downsample(4, (16, 16))
    y = apply(op, rng.uniform(size=(16, 16)))
    np.testing.assert_allclose(op.forward(baseline_reconstruction(op, y).pixels), y.data, atol=1e-14)


@pytest.mark.parametrize("op", [Downsample(4, (16, 16)), MatrixOperator(np.random.default_rng(0).standard_normal((3, 8)))])
def test_null_space_component_is_invisible(op, rng):
    x = rng.standard_normal(op.input_shape)
    null = null_space_component(op, x)
    assert np.max(np.abs(op.forward(null))) < 1e-12
    witness = null_space_witness(op, seed=1)
    assert np.linalg.norm(witness) == pytest.approx(1.0)
    assert np.max(np.abs(op.forward(witness))) < 1e-12


def test_null_space_needs_closed_form():
    with pytest.raises(OperatorError):
        null_space_component(GaussianBlur(1.0, (16, 16)), np.zeros((16, 16)))


def test_make_operator_tasks():
    assert isinstance(make_operator("sr", (16, 16), factor=2), Downsample)
    assert isinstance(make_operator("blur", (16, 16), blur_sigma=1.0), GaussianBlur)
    assert isinstance(make_operator("kspace", (16, 16), acceleration=4.0, center_fraction=0.1), KSpaceMask)
    with pytest.raises(OperatorError):
        make_operator("denoise", (16, 16))


def test_measurement_shape():
    assert Measurement(np.zeros((2, 4, 4)), kind="complex").shape == (2, 4, 4)


@pytest.mark.parametrize("name", sorted(OPERATORS))
def test_operators_are_linear(name, rng):
    op = OPERATORS[name](0)
    x, z = rng.standard_normal(op.input_shape), rng.standard_normal(op.input_shape)
    np.testing.assert_allclose(op.forward(2.5 * x - 0.7 * z), 2.5 * op.forward(x) - 0.7 * op.forward(z), atol=1e-10)


def test_add_noise_has_the_requested_std():
    m = apply(Downsample(2, (128, 128)), np.zeros((128, 128)))
    noisy = add_noise(m, 0.05, seed=9)
    assert np.std(noisy.data - m.data) == pytest.approx(0.05, rel=0.05)


def test_add_noise_perturbs_real_and_imaginary_planes_independently(rng):
    m = apply(KSpaceMask(make_mask(32, 32, 2.0, 0.25, seed=0)), rng.standard_normal((32, 32)))
    noise = add_noise(m, 0.1, seed=4).data - m.data
    assert np.all(noise[0] != 0.0) and np.all(noise[1] != 0.0)
    assert abs(np.corrcoef(noise[0].ravel(), noise[1].ravel())[0, 1]) < 0.1
