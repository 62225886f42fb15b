import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dynsamp import EmpiricalScore, RoughnessScore, apply_T, eval_score, fit_empirical_score, score_roughness
from dynsamp.forward_model import DimensionError
from dynsamp.priors import (
    apply_TH,
    load_empirical_score,
    make_score,
    save_empirical_score,
    synthetic_training_set,
)

from oracles import fd_gradient, rel_err, roughness_sq_loop


def _cplx(rng, shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


# --- roughness ------------------------------------------------------------------

def test_T_of_impulse():
    np.testing.assert_array_equal(apply_T(np.array([0.0, 1, 0, 0]))[0], [1, -1, 0, 0])


@pytest.mark.parametrize("shape", [(8,), (4, 6)])
def test_constant_image_has_zero_score(shape):
    x = np.full(shape, 2.5 - 1j)
    assert np.all(score_roughness(x, 3.0) == 0)
    assert np.all(apply_T(x) == 0)


@pytest.mark.parametrize("shape", [(9,), (5, 7)])
def test_roughness_energy_matches_loop(rng, shape):
    x = _cplx(rng, shape)
    assert np.isclose(np.sum(np.abs(apply_T(x)) ** 2), roughness_sq_loop(x), rtol=1e-12)
    assert np.isclose(RoughnessScore(2.0).log_density(x), -roughness_sq_loop(x), rtol=1e-12)


@pytest.mark.parametrize("shape", [(9,), (5, 7)])
def test_TH_is_adjoint(rng, shape):
    x = _cplx(rng, shape)
    d = _cplx(rng, (len(shape), *shape))
    assert np.isclose(np.vdot(apply_T(x), d), np.vdot(x, apply_TH(d)), rtol=1e-12)


def test_score_linear_in_lambda(rng):
    x = _cplx(rng, (6, 6))
    np.testing.assert_allclose(score_roughness(x, 2.0), 2 * score_roughness(x, 1.0), rtol=0, atol=1e-14)


@pytest.mark.parametrize("shape,lam", [((8,), 1.0), ((4, 5), 3.0)])
def test_roughness_score_matches_finite_differences(rng, shape, lam):
    x = _cplx(rng, shape)
    s = RoughnessScore(lam)
    fd = fd_gradient(s.log_density, x)
    assert rel_err(s(x), fd) < 1e-5
    assert rel_err(score_roughness(x, lam), fd) < 1e-5


def test_roughness_batch_matches_single(rng):
    s = RoughnessScore(1.5)
    xs = _cplx(rng, (3, 5, 4))
    np.testing.assert_allclose(s.batch(xs, 2), np.stack([s(x) for x in xs]), atol=1e-13)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**16), c=st.floats(-5, 5).filter(lambda v: abs(v) > 1e-3))
def test_roughness_properties(seed, c):
    r = np.random.default_rng(seed)
    x = _cplx(r, (5, 6))
    # T'T positive semidefinite and the score linear (scale equivariance)
    assert np.vdot(x, -score_roughness(x, 1.0)).real >= -1e-12
    np.testing.assert_allclose(score_roughness(c * x, 1.0), c * score_roughness(x, 1.0), atol=1e-10)


# --- empirical -------------------------------------------------------------------

def test_single_patch_score_is_linear_pull():
    mu = np.array([1 + 1j, 0, 2j])
    x = np.array([0.5, 1, 1 - 1j])
    s = fit_empirical_score([mu], 0.7)
    np.testing.assert_allclose(s(x), (mu - x) / 0.49, atol=1e-14)


def test_symmetric_midpoint_score_is_zero():
    a, b = np.array([1.0, -2j]), np.array([3.0, 2j])
    s = fit_empirical_score([a, b], 1.3)
    np.testing.assert_allclose(s((a + b) / 2), 0, atol=1e-14)


@pytest.mark.parametrize("h", [0.5, 1.0, 2.0])
def test_empirical_score_matches_finite_differences(rng, h):
    patches = _cplx(rng, (3, 4))
    s = fit_empirical_score(list(patches), h)
    for _ in range(3):
        x = patches.mean(axis=0) + 0.5 * _cplx(rng, 4)
        assert rel_err(s(x), fd_gradient(s.log_density, x)) < 1e-5


def test_empirical_weights_are_softmax(rng):
    patches = _cplx(rng, (5, 3))
    s = fit_empirical_score(list(patches), 0.9)
    x = _cplx(rng, 3)
    d = np.array([np.sum(np.abs(x - p) ** 2) for p in patches])
    w = np.exp(-d / (2 * 0.81))
    np.testing.assert_allclose(s.weights(x), w / w.sum(), rtol=1e-12)


def test_far_point_does_not_overflow():
    s = fit_empirical_score([np.zeros(2), np.ones(2)], 0.01)
    out = s(np.array([1e4, -1e4 + 3j]))
    assert np.all(np.isfinite(out))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**16), h=st.floats(0.2, 3.0))
def test_empirical_score_pulls_toward_data(seed, h):
    r = np.random.default_rng(seed)
    patches = _cplx(r, (4, 3))
    s = fit_empirical_score(list(patches), h)
    x = _cplx(r, 3) * 10
    mean = np.tensordot(s.weights(x), patches, axes=1)
    assert np.vdot(s(x), mean - x).real >= 0


# --- dispatch and errors ------------------------------------------------------------

def test_eval_score_checks_shape_and_finiteness(rng):
    s = make_score("roughness", (4, 4), lam=1.0)
    assert eval_score(s, np.zeros((4, 4))).shape == (4, 4)
    with pytest.raises(DimensionError):
        eval_score(s, np.zeros((4, 5)))
    with pytest.raises(ValueError):
        eval_score(s, np.full((4, 4), np.nan))
    e = fit_empirical_score([np.zeros(3)], 1.0)
    with pytest.raises(DimensionError):
        eval_score(e, np.zeros(4))


def test_bad_priors_rejected():
    with pytest.raises(ValueError):
        RoughnessScore(0.0)
    with pytest.raises(ValueError):
        score_roughness(np.zeros(3), -1)
    with pytest.raises(ValueError):
        fit_empirical_score([], 1.0)
    with pytest.raises(DimensionError):
        fit_empirical_score([np.zeros(3), np.zeros(4)], 1.0)
    with pytest.raises(ValueError):
        fit_empirical_score([np.zeros(3)], 0.0)
    with pytest.raises(ValueError):
        make_score("wavelet")


def test_training_set_and_serialization(tmp_path):
    data = synthetic_training_set("smooth_bumps", (16,), 6, seed=3)
    assert len(data) == 6 and all(d.shape == (16,) for d in data)
    assert all(np.array_equal(a, b) for a, b in zip(data, synthetic_training_set("smooth_bumps", (16,), 6, seed=3)))
    s = fit_empirical_score(data, 0.8)
    save_empirical_score(tmp_path / "prior", s)
    back = load_empirical_score(tmp_path / "prior")
    assert isinstance(back, EmpiricalScore) and back.bandwidth == 0.8 and back.num_patches == 6
    np.testing.assert_allclose(back.patches, s.patches, atol=1e-6)
