import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dynsamp import (
    DimensionError,
    SamplingMask,
    add_noise,
    apply_adjoint,
    apply_forward,
    make_coil_maps,
    make_operator,
    make_phantom,
    simulate_measurements,
)
from dynsamp.forward_model import CoilSensitivities, MeasurementSet, SensingOperator

from oracles import dft_loop


def _cplx(rng, shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


# --- forward model, worked examples -----------------------------------------

def test_zero_image_gives_zero_measurements():
    y = apply_forward(np.zeros(4, dtype=complex), make_operator(4))
    assert np.array_equal(y.values, np.zeros((1, 4)))


def test_impulse_spreads_evenly():
    y = apply_forward(np.array([1, 0, 0, 0], dtype=complex), make_operator(4))
    np.testing.assert_allclose(y.values[0], [0.5, 0.5, 0.5, 0.5], atol=1e-15)


def test_phase_ramp_matches_loop_dft():
    x = np.array([1, 1j, -1, -1j])
    y = apply_forward(x, make_operator(4)).values[0]
    np.testing.assert_allclose(y, dft_loop(list(x)), atol=1e-14)
    np.testing.assert_allclose(y, [0, 2, 0, 0], atol=1e-14)


@pytest.mark.parametrize("n", [1, 5, 8, 17])
def test_full_single_coil_matches_loop_dft(rng, n):
    x = _cplx(rng, n)
    y = apply_forward(x, make_operator(n)).values[0]
    np.testing.assert_allclose(y, dft_loop(list(x)), atol=1e-12)


def test_2d_uses_unshifted_layout(rng):
    x = _cplx(rng, (3, 5))
    y = apply_forward(x, make_operator((3, 5))).values[0]
    ref = np.array([[sum(x[a, b] * np.exp(-2j * np.pi * (k * a / 3 + m * b / 5)) for a in range(3) for b in range(5))
                     for m in range(5)] for k in range(3)]) / np.sqrt(15)
    np.testing.assert_allclose(y, ref, atol=1e-12)
    # DC at flat index 0
    assert np.isclose(y.ravel()[0], x.sum() / np.sqrt(15))


def test_adjoint_of_zero_is_zero():
    op = make_operator((4, 4), coils=make_coil_maps(3, (4, 4), "gaussian_lobes"))
    assert np.array_equal(apply_adjoint(np.zeros((3, 4, 4), complex), op), np.zeros((4, 4)))


# --- forward model, invariants ----------------------------------------------

@pytest.mark.parametrize("shape,coils,profile,frac", [
    ((16,), 1, "uniform", 0.5),
    ((16,), 3, "gaussian_lobes", 0.3),
    ((8, 8), 1, "uniform", 0.2),
    ((8, 6), 4, "gaussian_lobes", 0.6),
])
def test_adjoint_identity(rng, shape, coils, profile, frac):
    mask = SamplingMask.from_array(rng.random(shape) < frac)
    op = make_operator(shape, mask, make_coil_maps(coils, shape, profile))
    x = _cplx(rng, shape)
    y = _cplx(rng, (coils, *shape))
    lhs = np.vdot(apply_forward(x, op).values, y)
    rhs = np.vdot(x, apply_adjoint(y, op))
    assert abs(lhs - rhs) / max(abs(lhs), abs(rhs)) < 1e-10


@pytest.mark.parametrize("shape,coils,profile", [((16,), 1, "uniform"), ((8, 8), 4, "gaussian_lobes"),
                                                 ((8, 8), 2, "uniform")])
def test_full_mask_unit_sos_gives_identity_normal(rng, shape, coils, profile):
    op = make_operator(shape, coils=make_coil_maps(coils, shape, profile))
    x = _cplx(rng, shape)
    np.testing.assert_allclose(op.normal(x), x, atol=1e-12)


def test_unmeasured_locations_are_exactly_zero(rng):
    mask = SamplingMask((8, 8), (0, 5, 17, 63))
    op = make_operator((8, 8), mask, make_coil_maps(2, (8, 8), "gaussian_lobes"))
    y = apply_forward(_cplx(rng, (8, 8)), op).values
    assert np.all(y[:, ~mask.to_array()] == 0)
    y_noisy = add_noise(apply_forward(_cplx(rng, (8, 8)), op), 0.3, 1).values
    assert np.all(y_noisy[:, ~mask.to_array()] == 0)


@settings(max_examples=30, deadline=None)
@given(a=st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False),
       b=st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False),
       seed=st.integers(0, 2**16))
def test_forward_is_linear(a, b, seed):
    r = np.random.default_rng(seed)
    op = make_operator((6, 5), SamplingMask.from_array(r.random((6, 5)) < 0.5), make_coil_maps(2, (6, 5), "gaussian_lobes"))
    x1, x2 = _cplx(r, (6, 5)), _cplx(r, (6, 5))
    lhs = op.forward(a * x1 + b * x2)
    rhs = a * op.forward(x1) + b * op.forward(x2)
    np.testing.assert_allclose(lhs, rhs, atol=1e-10 * (1 + abs(a) + abs(b)))


def test_batched_forward_matches_single(rng):
    op = make_operator((8, 8), SamplingMask((8, 8), (0, 3, 9)), make_coil_maps(3, (8, 8), "gaussian_lobes"))
    xs = _cplx(rng, (4, 8, 8))
    batch = op.forward(xs)
    assert batch.shape == (4, 3, 8, 8)
    for i in range(4):
        np.testing.assert_allclose(batch[i], op.forward(xs[i]), atol=0)
        np.testing.assert_allclose(op.adjoint(batch)[i], op.adjoint(batch[i]), atol=0)


def test_shape_mismatch_raises():
    op = make_operator((8, 8))
    with pytest.raises(DimensionError):
        apply_forward(np.zeros((8, 7)), op)
    with pytest.raises(DimensionError):
        apply_adjoint(np.zeros((2, 8, 8)), op)
    with pytest.raises(DimensionError):
        SensingOperator(SamplingMask((4,)), make_coil_maps(1, (5,)), 0.0)
    with pytest.raises(DimensionError):
        MeasurementSet(op, np.zeros((8, 8)))


def test_only_1d_and_2d_grids():
    with pytest.raises(DimensionError):
        make_operator((2, 2, 2))


# --- noise --------------------------------------------------------------------

def test_zero_sigma_is_identity(rng):
    y = apply_forward(_cplx(rng, 8), make_operator(8))
    assert np.array_equal(add_noise(y, 0.0, 3).values, y.values)


def test_noise_is_deterministic_per_seed(rng):
    y = apply_forward(_cplx(rng, 8), make_operator(8))
    a, b, c = add_noise(y, 0.1, 5), add_noise(y, 0.1, 5), add_noise(y, 0.1, 6)
    assert np.array_equal(a.values, b.values)
    assert not np.array_equal(a.values, c.values)


def test_noise_std_monte_carlo():
    n = 100_000
    op = make_operator(n, noise_sigma=0.3)
    y = apply_forward(np.zeros(n, complex), op)
    e = add_noise(y, 0.3, 11).values.ravel()
    assert abs(np.sqrt(np.mean(np.abs(e) ** 2)) - 0.3) / 0.3 < 0.02
    # circular: real and imaginary parts each carry half the variance
    assert abs(e.real.std() - 0.3 / np.sqrt(2)) / (0.3 / np.sqrt(2)) < 0.02
    assert abs(e.imag.std() - 0.3 / np.sqrt(2)) / (0.3 / np.sqrt(2)) < 0.02
    assert abs(np.mean(e.real * e.imag)) < 0.02 * 0.045


def test_negative_sigma_rejected():
    y = apply_forward(np.zeros(4, complex), make_operator(4))
    with pytest.raises(ValueError):
        add_noise(y, -1.0, 0)


def test_simulate_uses_operator_sigma():
    op = make_operator(16, noise_sigma=0.2)
    x = make_phantom("smooth_bumps", 16)
    y = simulate_measurements(x, op, 4)
    expected = add_noise(apply_forward(x, op), 0.2, 4)
    assert np.array_equal(y.values, expected.values)


# --- masks ----------------------------------------------------------------------

def test_mask_invariants():
    m = SamplingMask((4, 4), (3, 0))
    assert m.count == 2 and m.to_array().sum() == 2
    assert m.extend([5]).acquired == (3, 0, 5)
    with pytest.raises(ValueError):
        m.extend([0])
    with pytest.raises(ValueError):
        SamplingMask((4,), (1, 1))
    with pytest.raises(IndexError):
        SamplingMask((4,), (4,))


def test_line_mask_requires_whole_columns():
    SamplingMask((3, 4), (1, 5, 9), "line")
    with pytest.raises(ValueError):
        SamplingMask((3, 4), (1, 5), "line")
    m = SamplingMask((3, 4), (2, 6, 10, 0, 4, 8), "line")
    assert m.acquired_columns() == [2, 0]


# --- phantoms ----------------------------------------------------------------

def test_piecewise_constant_has_plateaus():
    x = make_phantom("piecewise_constant_1d", 32)
    mag = np.abs(x)
    assert mag.min() >= 0 and mag.max() <= 1 + 1e-12
    runs = np.flatnonzero(np.diff(np.round(mag, 12)) != 0)
    assert len(runs) + 1 >= 3
    assert np.array_equal(x, make_phantom("piecewise_constant_1d", 32))


def test_shepp_logan_range_and_background():
    x = make_phantom("shepp_logan_like", (64, 64))
    mag = np.abs(x)
    assert np.isclose(mag.max(), 1.0) and mag.min() >= 0
    assert mag[0, 0] == 0 and mag[-1, -1] == 0 and mag[0, -1] == 0
    assert np.array_equal(x, make_phantom("shepp_logan_like", (64, 64)))


@pytest.mark.parametrize("kind,shape", [("shepp_logan_like", (32, 32)), ("smooth_bumps", (32, 32)),
                                        ("smooth_bumps", (48,)), ("piecewise_constant_1d", (48,))])
def test_phantoms_complex_with_unit_peak(kind, shape):
    x = make_phantom(kind, shape)
    assert x.shape == shape and np.iscomplexobj(x)
    assert np.isclose(np.abs(x).max(), 1.0)
    assert np.ptp(np.angle(x[np.abs(x) > 0.05])) > 0


@pytest.mark.parametrize("kind,shape", [("nope", (8, 8)), ("shepp_logan_like", (8,)), ("piecewise_constant_1d", (8, 8))])
def test_bad_phantom_rejected(kind, shape):
    with pytest.raises(ValueError):
        make_phantom(kind, shape)


# --- coil maps ---------------------------------------------------------------

def test_single_uniform_coil_is_all_ones():
    c = make_coil_maps(1, (8, 8), "uniform")
    assert np.array_equal(c.maps, np.ones((1, 8, 8)))


@pytest.mark.parametrize("shape", [(32, 32), (40,)])
def test_gaussian_lobes_unit_sum_of_squares(shape):
    c = make_coil_maps(4, shape, "gaussian_lobes")
    np.testing.assert_allclose(np.sum(np.abs(c.maps) ** 2, axis=0), 1.0, atol=1e-12)
    peaks = {int(np.argmax(np.abs(m))) for m in c.maps}
    assert len(peaks) == 4


def test_bad_coils_rejected():
    with pytest.raises(ValueError):
        make_coil_maps(0, (8, 8))
    with pytest.raises(ValueError):
        make_coil_maps(2, (8, 8), "helmet")
    with pytest.raises(ValueError):
        CoilSensitivities(np.zeros((1, 4, 4)))
