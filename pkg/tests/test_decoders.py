import numpy as np
import pytest

from latentprox.decoders import (decode, decode_batch, encode, encoder_for,
                                 estimate_lipschitz, linear_decoder,
                                 mlp_decoder, random_linear_decoder,
                                 random_mlp_decoder, vjp)
from latentprox.errors import NumericError, ParameterError, ShapeError

W_EX = np.array([[2.0, 0.0], [0.0, 3.0], [1.0, 1.0]])


def test_identity_decode():
    dec = linear_decoder(np.eye(2))
    assert np.array_equal(decode(dec, np.array([1.0, 2.0])), [1.0, 2.0])


def test_linear_decode_by_hand():
    dec = linear_decoder(W_EX)
    assert np.allclose(decode(dec, np.array([1.0, 1.0])), [2.0, 3.0, 2.0])


def test_vjp_by_hand():
    dec = linear_decoder(W_EX)
    assert np.allclose(vjp(dec, np.zeros(2), np.array([1.0, 1.0, 1.0])),
                       [3.0, 4.0])


def test_vjp_zero_covector():
    for dec in (linear_decoder(W_EX),
                random_mlp_decoder(2, 4, hidden=8, seed=0)):
        out = vjp(dec, np.array([0.3, -0.2]), np.zeros(dec.ambient_dim))
        assert np.array_equal(out, np.zeros(2))


def test_decode_errors():
    dec = linear_decoder(W_EX)
    with pytest.raises(ShapeError):
        decode(dec, np.zeros(3))
    with pytest.raises(NumericError):
        decode(dec, np.array([np.nan, 0.0]))
    with pytest.raises(ParameterError):
        linear_decoder(np.zeros((2, 3)))  # ambient < latent


def test_mlp_vjp_matches_finite_differences():
    dec = random_mlp_decoder(3, 5, hidden=16, seed=2)
    rng = np.random.default_rng(5)
    z = rng.standard_normal(3)
    h = 1e-6
    for _ in range(20):
        u = rng.standard_normal(3)
        u /= np.linalg.norm(u)
        v = rng.standard_normal(5)
        jvp = (decode(dec, z + h * u) - decode(dec, z - h * u)) / (2 * h)
        # adjoint identity: v . (J u) == (J^T v) . u
        lhs = float(v @ jvp)
        rhs = float(vjp(dec, z, v) @ u)
        assert abs(lhs - rhs) <= 1e-4 * max(abs(lhs), 1.0)


def test_mlp_lipschitz_probe():
    dec = random_mlp_decoder(2, 3, hidden=8, seed=1)
    ell = estimate_lipschitz(dec, probes=64, rng=np.random.default_rng(0))
    rng = np.random.default_rng(10)
    z = rng.standard_normal(2)
    h = 1e-3
    for i in range(2):
        e = np.zeros(2)
        e[i] = h
        diff = np.linalg.norm(decode(dec, z + e) - decode(dec, z))
        assert diff <= ell * h + 1e-6


def test_lipschitz_diagonal_by_hand():
    dec = linear_decoder(np.diag([2.0, 3.0]))
    ell = estimate_lipschitz(dec, 1, np.random.default_rng(0))
    assert abs(ell - 3.0) < 1e-9


def test_lipschitz_identity():
    dec = linear_decoder(np.eye(3))
    assert abs(estimate_lipschitz(dec, 1, np.random.default_rng(0)) - 1.0) < 1e-9


def test_lipschitz_matches_eigen_oracle():
    rng = np.random.default_rng(3)
    W = rng.standard_normal((3, 2))
    dec = linear_decoder(W)
    ell = estimate_lipschitz(dec, 1, np.random.default_rng(1))
    oracle = np.sqrt(np.linalg.eigvalsh(W.T @ W).max())
    assert abs(ell - oracle) < 1e-8


def test_lipschitz_bound_cached_and_audited():
    dec = random_mlp_decoder(2, 4, hidden=12, seed=4)
    ell = estimate_lipschitz(dec, probes=128, rng=np.random.default_rng(2))
    assert dec.lipschitz_bound == ell
    assert dec.lipschitz_probes == 128
    # audit: local Jacobian norms at random points never exceed the bound
    rng = np.random.default_rng(17)
    for _ in range(10_000):
        z = rng.standard_normal(2)
        J = np.stack([vjp(dec, z, e) for e in np.eye(4)])  # rows J^T e = J rows
        sigma = np.linalg.svd(J, compute_uv=False).max()
        assert sigma <= ell + 1e-9


def test_encode_identity_pair():
    dec = linear_decoder(np.eye(2))
    enc = encoder_for(dec)
    assert np.allclose(encode(enc, np.array([1.0, 2.0])), [1.0, 2.0])


def test_encode_exact_preimage():
    dec = linear_decoder(W_EX, bias=np.array([0.1, -0.2, 0.3]))
    enc = encoder_for(dec)
    z_star = np.array([0.4, -1.2])
    x = decode(dec, z_star)
    assert np.allclose(encode(enc, x), z_star, atol=1e-9)


def test_encode_off_range_is_orthogonal_projection():
    # oracle: normal equations (W^T W) z = W^T (x - b) solved independently
    dec = linear_decoder(W_EX, bias=np.array([1.0, 0.0, -1.0]))
    enc = encoder_for(dec)
    x = np.array([5.0, -2.0, 0.7])
    z = encode(enc, x)
    z_oracle = np.linalg.solve(W_EX.T @ W_EX, W_EX.T @ (x - dec.bias))
    assert np.allclose(z, z_oracle, atol=1e-9)
    # decode(encode(x)) equals the projection of x onto the affine range
    proj = dec.bias + W_EX @ z_oracle
    assert np.allclose(decode(dec, z), proj, atol=1e-9)


def test_linear_roundtrip_identity_on_latent():
    dec = random_linear_decoder(3, 6, seed=9, scale=1.3)
    enc = encoder_for(dec)
    rng = np.random.default_rng(0)
    for _ in range(50):
        z = rng.standard_normal(3)
        assert np.allclose(encode(enc, decode(dec, z)), z, atol=1e-9)


def test_mlp_encoder_least_squares_fit():
    dec = random_mlp_decoder(2, 5, hidden=16, seed=6)
    enc = encoder_for(dec, samples=1024, rng=np.random.default_rng(3))
    rng = np.random.default_rng(8)
    Z = rng.standard_normal((200, 2))
    X = decode_batch(dec, Z)
    pred = X @ enc.matrix.T + enc.offset
    resid = np.linalg.norm(pred - Z) / np.linalg.norm(Z)
    assert resid < 0.5  # affine fit of a smooth map; sanity, not exactness


def test_encode_shape_error():
    enc = encoder_for(linear_decoder(W_EX))
    with pytest.raises(ShapeError):
        encode(enc, np.zeros(2))


def test_mlp_decoder_layers_validated():
    with pytest.raises(ParameterError):
        mlp_decoder([(np.zeros((4, 3)), np.zeros(4)),
                     (np.zeros((2, 4)), np.zeros(2))])  # ambient 2 < latent 3
    from latentprox.decoders import DecoderMap
    with pytest.raises(ShapeError):
        DecoderMap(kind="smooth_mlp", latent_dim=3, ambient_dim=5,
                   layers=[(np.zeros((4, 2)), np.zeros(4)),
                           (np.zeros((5, 4)), np.zeros(5))])


def test_local_jacobian_norms_diagnostic():
    from latentprox.decoders import local_jacobian_norms
    dec = random_mlp_decoder(2, 4, hidden=8, seed=3)
    ell = estimate_lipschitz(dec, probes=64, rng=np.random.default_rng(0))
    norms = local_jacobian_norms(dec, 64, np.random.default_rng(1))
    assert norms.shape == (64,)
    assert np.all(norms <= ell + 1e-9)
    lin = linear_decoder(np.diag([2.0, 3.0]))
    assert np.allclose(local_jacobian_norms(lin, 4, np.random.default_rng(0)),
                       3.0)
