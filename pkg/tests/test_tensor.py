import math
import warnings

import numpy as np
import pytest

from klslab import tensor
from klslab.errors import DimensionError, PairSumCapError, PreconditionError
from klslab.measures import AtomicMeasure, construct_density, moments_and_whiten, sample_atomic


def _cloud(rng, n=50, d=4, skew=True):
    x = rng.standard_normal((n, d))
    if skew:
        x = x + 0.5 * x**2
    return AtomicMeasure(x, rng.dirichlet(np.ones(n)))


def _psd(rng, d):
    X = rng.standard_normal((d, d))
    return X @ X.T


def _symmetric_cloud(rng, n=30, d=3):
    x = rng.standard_normal((n, d))
    return AtomicMeasure.uniform(np.vstack([x, -x]))


def test_two_point_symmetric_is_zero():
    m = AtomicMeasure.uniform(np.array([[1.0], [-1.0]]))
    one = np.ones((1, 1))
    assert tensor.three_tensor(m, one, one, one) == 0.0
    assert tensor.three_tensor(m, one, one, one, method="pairs") == 0.0


def test_identity_args_match_cubed_gram_and_nonnegative(rng):
    m = _cloud(rng, 40, 3)
    _, _, white = moments_and_whiten(m)
    z = white.points - white.mean()
    brute = float(white.weights @ (z @ z.T) ** 3 @ white.weights)
    I = np.eye(3)
    val = tensor.three_tensor(white, I, I, I)
    assert val == pytest.approx(brute, rel=1e-10)
    assert val >= 0


def test_factored_matches_pairs(rng):
    m = _cloud(rng, 50, 4)
    A, B, C = (_psd(rng, 4) for _ in range(3))
    f = tensor.three_tensor(m, A, B, C)
    p = tensor.three_tensor(m, A, B, C, method="pairs")
    assert f == pytest.approx(p, rel=1e-8)


def test_factored_matches_pairs_nonsymmetric(rng):
    m = _cloud(rng, 30, 3)
    A, B, C = (rng.standard_normal((3, 3)) for _ in range(3))
    f = tensor.three_tensor(m, A, B, C)
    p = tensor.three_tensor(m, A, B, C, method="pairs")
    assert f == pytest.approx(p, rel=1e-8, abs=1e-10)


def test_slot_symmetry_and_linearity(rng):
    m = _cloud(rng, 40, 3)
    A, B, C, A2 = (_psd(rng, 3) for _ in range(4))
    ref = tensor.three_tensor(m, A, B, C)
    for perm in ((B, A, C), (C, B, A), (A, C, B), (B, C, A)):
        assert tensor.three_tensor(m, *perm) == pytest.approx(ref, rel=1e-10)
    lin = tensor.three_tensor(m, A + A2, B, C)
    assert lin == pytest.approx(ref + tensor.three_tensor(m, A2, B, C), rel=1e-10)


def test_dimension_mismatch_and_pair_cap(rng):
    m = _cloud(rng, 10, 3)
    with pytest.raises(DimensionError):
        tensor.three_tensor(m, np.eye(2), np.eye(3), np.eye(3))
    with pytest.raises(PairSumCapError):
        tensor.three_tensor(m, np.eye(3), np.eye(3), np.eye(3), method="pairs", pair_cap=5)


def test_delta_matrix_symmetric_cloud_is_zero(rng):
    m = _symmetric_cloud(rng)
    _, _, white = moments_and_whiten(m)
    D = tensor.delta_matrix(white, np.array([1.0, 0, 0])).delta
    assert np.max(np.abs(D)) < 1e-12


def test_delta_matrix_two_atoms():
    m = AtomicMeasure(np.array([[-1.0], [2.0]]), np.array([2 / 3, 1 / 3]))
    with pytest.warns(UserWarning, match="isotropic"):
        dm = tensor.delta_matrix(m, np.array([1.0]))
    assert dm.delta[0, 0] == pytest.approx(2.0, rel=1e-14)


def test_delta_matrix_recompute_and_normalize(rng):
    m = _cloud(rng, 200, 3)
    _, _, white = moments_and_whiten(m)
    v = np.array([0.0, 0.6, 0.8])
    D1 = tensor.delta_matrix(white, v).delta
    D2 = tensor.delta_matrix(white, v).delta
    assert np.array_equal(D1, D2)
    x, w = white.points, white.weights
    ref = sum(w[i] * (x[i] @ v) * np.outer(x[i], x[i]) for i in range(white.n))
    np.testing.assert_allclose(D1, ref, atol=1e-12)
    with pytest.warns(UserWarning, match="normalizing"):
        dm = tensor.delta_matrix(white, 2 * v)
    np.testing.assert_allclose(dm.v, v)


@pytest.mark.parametrize("delta", [0.0, 1.0])
def test_trace_inequality_endpoints_equal(rng, delta):
    G, F = _psd(rng, 5), _psd(rng, 5) - 3 * np.eye(5)
    res = tensor.check_trace_inequality(G, F, delta)
    assert res.passed
    assert res.lhs == pytest.approx(res.rhs, rel=1e-12)


def test_trace_inequality_identity_and_errors(rng):
    F = _psd(rng, 4) - np.eye(4)
    res = tensor.check_trace_inequality(np.eye(4), F, 0.3)
    assert res.lhs == pytest.approx(np.trace(F @ F)) and res.rhs == pytest.approx(np.trace(F @ F))
    with pytest.raises(PreconditionError):
        tensor.check_trace_inequality(-np.eye(4), F, 0.3)
    with pytest.raises(PreconditionError):
        tensor.check_trace_inequality(np.eye(4), F, 1.5)


def test_trace_inequality_random_batch():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        G = _psd(rng, 8) * rng.uniform(0.01, 10)
        F = rng.standard_normal((8, 8))
        assert tensor.check_trace_inequality(G, F + F.T, rng.uniform()).passed


def test_swap_equality_cases(rng):
    m = _cloud(rng, 25, 3)
    A, B, C = (_psd(rng, 3) for _ in range(3))
    r0 = tensor.check_tensor_swap(m, A, B, C, 0.0)
    assert r0.passed and r0.lhs == pytest.approx(r0.rhs, rel=1e-9)
    rI = tensor.check_tensor_swap(m, np.eye(3), B, C, 0.4)
    assert rI.passed and rI.lhs == pytest.approx(rI.rhs, rel=1e-9)
    with pytest.raises(PreconditionError):
        tensor.check_tensor_swap(m, -A, B, C, 0.4)


def test_moment_inequality_gaussian():
    g = construct_density("gaussian", mean=[0.0], cov=[[1.0]])
    res = tensor.check_moment_inequality(g, 4, 2)
    assert res.mode == "quadrature"
    assert res.lhs == pytest.approx(3 ** 0.25, rel=1e-8)
    assert res.rhs == pytest.approx(4.0, rel=1e-8)
    assert res.passed


def test_moment_inequality_equal_orders_and_exponential():
    e = construct_density("product-exponential", rates=[1.0])
    same = tensor.check_moment_inequality(e, 2, 2)
    assert same.passed and same.rhs == pytest.approx(2 * same.lhs)
    # centered exponential: E|X-1|^2 = 1
    assert same.lhs == pytest.approx(1.0, rel=1e-8)
    assert tensor.check_moment_inequality(e, 6, 2).passed
    with pytest.raises(PreconditionError):
        tensor.check_moment_inequality(e, 1, 2)


def test_moment_inequality_sample_mode(rng):
    res = tensor.check_moment_inequality(rng.standard_normal(20000), 4, 2)
    assert res.mode == "samples" and res.passed


def test_vector_bound_gaussian_and_symmetric(rng):
    g = construct_density("gaussian", mean=np.zeros(3), cov=np.eye(3))
    atoms = sample_atomic(g, 10_000, seed=1)
    rec = tensor.check_tensor_vector_bound(atoms, np.eye(3), np.eye(3))
    assert rec.rhs == pytest.approx(48.0, rel=0.05)
    assert rec.status == "pass" and rec.lhs < 1.0
    sym_rec = tensor.check_tensor_vector_bound(_symmetric_cloud(rng), np.eye(3), np.eye(3))
    assert sym_rec.lhs < 1e-12
    with pytest.raises(PreconditionError):
        tensor.check_tensor_vector_bound(atoms, -np.eye(3), np.eye(3))


def test_vector_bound_exponential_seeds():
    e = construct_density("product-exponential", rates=[1.0, 1.0])
    for s in range(50):
        rec = tensor.check_tensor_vector_bound(sample_atomic(e, 1000, seed=s), np.eye(2), np.eye(2))
        assert rec.lhs > 0 and rec.status == "pass"


def test_isoperimetric_gaussian():
    g = construct_density("gaussian", mean=np.zeros(4), cov=np.eye(4))
    atoms = sample_atomic(g, 10_000, seed=2)
    rec = tensor.check_tensor_isoperimetric(atoms, 3, 4.0, 0.5)
    assert rec.status == "pass"
    expected = 128 * 16 * math.log(4) * 4 ** (2 / 3) * 4 ** (4 / 3)
    assert rec.rhs == pytest.approx(expected, rel=0.05)
    assert rec.details["direct"] == pytest.approx(rec.lhs, rel=1e-6, abs=1e-12)
    with pytest.raises(PreconditionError):
        tensor.check_tensor_isoperimetric(atoms, 0.5, 4.0, 0.5)


def test_isoperimetric_box_seeds():
    b = construct_density("uniform-box", low=[-1.0], high=[1.0], d=3)
    flagged = sum(tensor.check_tensor_isoperimetric(sample_atomic(b, 1000, seed=s), 3).status != "pass"
                  for s in range(50))
    assert flagged == 0


def test_strong_logconcave_gaussian():
    g = construct_density("gaussian", mean=np.zeros(3), cov=0.5 * np.eye(3))
    atoms = sample_atomic(g, 10_000, seed=3)
    rec = tensor.check_tensor_strong_logconcave(atoms, 2.0, 3)
    assert rec.rhs == pytest.approx(2 * 3 * 0.125, rel=0.1)
    assert rec.status == "pass"
    with pytest.raises(PreconditionError):
        tensor.check_tensor_strong_logconcave(atoms, 2.0, 2)


def test_strong_logconcave_tilted_exponential_seeds():
    e = construct_density("product-exponential", rates=[1.0, 1.0])
    for s in range(50):
        a = sample_atomic(e, 1000, seed=s)
        x = a.points - 1.0
        tilted = AtomicMeasure.from_log_weights(a.points, -0.5 * np.sum(x * x, axis=1))
        assert tensor.check_tensor_strong_logconcave(tilted, 1.0, 3).status == "pass"


def test_trace_delta_bounds(rng):
    g = construct_density("gaussian", mean=np.zeros(4), cov=np.eye(4))
    _, _, white = moments_and_whiten(sample_atomic(g, 5000, seed=4))
    rec = tensor.check_trace_delta_bounds(white, np.eye(4), "projection")
    assert rec.rhs == pytest.approx(16 * 16 * 4.0)
    assert rec.status == "pass"
    rec2 = tensor.check_trace_delta_bounds(white, np.eye(4), "psd")
    assert rec2.rhs == pytest.approx(128 * 16 * math.log(4) * 4.0)
    with pytest.raises(PreconditionError):
        tensor.check_trace_delta_bounds(white, 2 * np.eye(4), "projection")
    _, _, ws = moments_and_whiten(_symmetric_cloud(rng, 40, 4))
    assert tensor.check_trace_delta_bounds(ws, np.eye(4), "projection").lhs < 1e-20


def test_trace_delta_psd_skewed_seeds():
    e = construct_density("product-exponential", rates=[1.0, 2.0, 0.5])
    for s in range(50):
        _, _, white = moments_and_whiten(sample_atomic(e, 1000, seed=s))
        assert tensor.check_trace_delta_bounds(white, np.eye(3), "psd").status == "pass"
