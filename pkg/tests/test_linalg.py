import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mccf.linalg import (
    FactorModel,
    IMPUTE_STRATEGIES,
    TuckerModel,
    hosvd,
    impute_missing,
    mode_product,
    mode_refold,
    mode_unfold,
    pca,
    pca_project,
    pca_reconstruct,
    ssvd,
    truncated_svd,
    tucker_reconstruct,
)

NAN = np.nan


def random_orthonormal(rng, m, k):
    q, _ = np.linalg.qr(rng.standard_normal((m, k)))
    return q


def make_low_rank(seed, m, n, sigmas):
    rng = np.random.default_rng(seed)
    u = random_orthonormal(rng, m, len(sigmas))
    v = random_orthonormal(rng, n, len(sigmas))
    return (u * np.asarray(sigmas)) @ v.T


def oracle_singular_values(a):
    """Singular values from a dense symmetric eigensolver (no SVD call)."""
    evals = np.linalg.eigvalsh(a @ a.T) if a.shape[0] <= a.shape[1] \
        else np.linalg.eigvalsh(a.T @ a)
    return np.sqrt(np.clip(evals, 0.0, None))[::-1]


def test_ssvd_recovers_exact_low_rank():
    a = make_low_rank(0, 20, 15, [5.0, 3.0, 1.0])
    model = ssvd(a, 3, oversample=5, power_iters=2, seed=1)
    assert np.allclose(model.sigma, [5.0, 3.0, 1.0], rtol=1e-10)
    assert np.allclose(model.reconstruct(), a, atol=1e-10)


def test_ssvd_factors_orthonormal():
    rng = np.random.default_rng(3)
    a = rng.standard_normal((25, 10))
    model = ssvd(a, 6, oversample=4, power_iters=2, seed=0)
    assert np.allclose(model.u.T @ model.u, np.eye(6), atol=1e-10)
    assert np.allclose(model.v.T @ model.v, np.eye(6), atol=1e-10)
    assert np.all(np.diff(model.sigma) <= 1e-12)
    assert np.all(model.sigma >= 0)


def test_ssvd_matches_dense_oracle_on_decaying_spectrum():
    sigmas = 10.0 * 0.8 ** np.arange(20)
    for seed in range(5):
        a = make_low_rank(seed, 30, 20, sigmas)
        model = ssvd(a, 5, oversample=10, power_iters=2, seed=seed)
        oracle = oracle_singular_values(a)[:5]
        assert np.all(np.abs(model.sigma - oracle) / oracle <= 1e-6)


def test_ssvd_rank_validation():
    a = np.ones((4, 3))
    with pytest.raises(ValueError):
        ssvd(a, 0)
    with pytest.raises(ValueError):
        ssvd(a, 4)
    with pytest.raises(ValueError):
        ssvd(a, 3, oversample=1)
    with pytest.raises(ValueError):
        ssvd(a, 2, oversample=-1)


def test_ssvd_zero_matrix():
    model = ssvd(np.zeros((6, 4)), 3, seed=0)
    assert np.all(model.sigma == 0.0)
    assert np.allclose(model.v.T @ model.v, np.eye(3), atol=1e-12)


def test_ssvd_seed_determinism():
    rng = np.random.default_rng(9)
    a = rng.standard_normal((12, 8))
    m1 = ssvd(a, 4, oversample=2, power_iters=1, seed=5)
    m2 = ssvd(a, 4, oversample=2, power_iters=1, seed=5)
    assert np.array_equal(m1.u, m2.u)
    assert np.array_equal(m1.sigma, m2.sigma)
    assert np.array_equal(m1.v, m2.v)


def test_truncated_svd_full_rank_is_exact():
    rng = np.random.default_rng(2)
    a = rng.standard_normal((7, 5))
    model = truncated_svd(a, 5, seed=0)
    assert np.allclose(model.reconstruct(), a, atol=1e-9)


def test_near_optimal_reconstruction():
    rng = np.random.default_rng(11)
    a = rng.standard_normal((30, 20))
    sv = oracle_singular_values(a)
    optimum = float(np.sqrt((sv[5:] ** 2).sum()))
    model = truncated_svd(a, 5, seed=0)
    err = float(np.linalg.norm(a - model.reconstruct()))
    assert err <= 1.1 * optimum


def test_item_vectors_scaling():
    model = FactorModel(np.eye(3, 2), np.array([2.0, 0.5]),
                        np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]]))
    vecs = model.item_vectors()
    assert np.allclose(vecs, [[2.0, 0.0], [0.0, 0.5], [2.0, 0.0]])


def test_pca_matches_dense_eigensolver():
    rng = np.random.default_rng(4)
    x = rng.standard_normal((40, 6)) * np.array([3.0, 2.0, 1.5, 1.0, 0.5, 0.1])
    model = pca(x, 6)
    cov = np.cov(x, rowvar=False)
    evals = np.sort(np.linalg.eigvalsh(cov))[::-1]
    assert np.allclose(model.mean, x.mean(axis=0))
    assert np.allclose(model.eigenvalues, evals, atol=1e-10)
    assert np.allclose(model.components.T @ model.components, np.eye(6),
                       atol=1e-12)
    # each component is an eigenvector of the covariance
    for c, lam in zip(model.components.T, model.eigenvalues):
        assert np.allclose(cov @ c, lam * c, atol=1e-10)


def test_pca_projection_variance():
    rng = np.random.default_rng(6)
    x = rng.standard_normal((200, 4)) @ np.diag([4.0, 2.0, 1.0, 0.3])
    model = pca(x, 4)
    scores = pca_project(model, x)
    assert np.allclose(np.var(scores, axis=0, ddof=1), model.eigenvalues,
                       atol=1e-10)


def test_pca_full_rank_roundtrip():
    rng = np.random.default_rng(7)
    x = rng.standard_normal((25, 5))
    model = pca(x, 5)
    assert np.allclose(pca_reconstruct(model, pca_project(model, x)), x,
                       atol=1e-10)


def test_pca_validation():
    x = np.random.default_rng(0).standard_normal((10, 3))
    with pytest.raises(ValueError):
        pca(x, 0)
    with pytest.raises(ValueError):
        pca(x, 4)
    with pytest.raises(ValueError):
        pca(x[:1], 1)
    model = pca(x, 2)
    with pytest.raises(ValueError):
        pca_project(model, np.zeros((4, 5)))
    with pytest.raises(ValueError):
        pca_reconstruct(model, np.zeros((4, 3)))


def test_mode_unfold_layout():
    t = np.arange(24.0).reshape(2, 3, 4)
    m1 = mode_unfold(t, 1)
    assert m1.shape == (2, 12)
    for a in range(2):
        for b in range(3):
            for c in range(4):
                # next mode (cyclically) varies fastest in the columns
                assert m1[a, c * 3 + b] == t[a, b, c]
                assert mode_unfold(t, 2)[b, a * 4 + c] == t[a, b, c]
                assert mode_unfold(t, 3)[c, b * 2 + a] == t[a, b, c]


dims_strategy = st.tuples(st.integers(1, 5), st.integers(1, 5),
                          st.integers(1, 5))


@settings(deadline=None, max_examples=40)
@given(dims_strategy, st.integers(1, 3), st.integers(0, 2 ** 31))
def test_unfold_refold_bijection(dims, mode, seed):
    t = np.random.default_rng(seed).standard_normal(dims)
    m = mode_unfold(t, mode)
    assert np.array_equal(mode_refold(m, mode, dims), t)
    assert np.array_equal(mode_unfold(mode_refold(m, mode, dims), mode), m)


def test_mode_product_einsum_oracle():
    rng = np.random.default_rng(12)
    t = rng.standard_normal((3, 4, 5))
    specs = {1: ("ia,ajk->ijk", 3), 2: ("ja,iak->ijk", 4),
             3: ("ka,ija->ijk", 5)}
    for mode, (pattern, size) in specs.items():
        m = rng.standard_normal((6, size))
        assert np.allclose(mode_product(t, m, mode),
                           np.einsum(pattern, m, t), atol=1e-12)
    with pytest.raises(ValueError):
        mode_product(t, np.zeros((2, 99)), 1)


@settings(deadline=None, max_examples=30)
@given(st.integers(0, 2 ** 31))
def test_mode_products_commute(seed):
    rng = np.random.default_rng(seed)
    t = rng.standard_normal((3, 4, 2))
    m1 = rng.standard_normal((2, 3))
    m2 = rng.standard_normal((5, 4))
    ab = mode_product(mode_product(t, m1, 1), m2, 2)
    ba = mode_product(mode_product(t, m2, 2), m1, 1)
    assert np.allclose(ab, ba, atol=1e-12)


def oracle_hosvd_error(t, ranks):
    """Reconstruction error of the classic HOSVD with dense eigensolvers."""
    factors = []
    for mode in (1, 2, 3):
        unfolding = mode_unfold(t, mode)
        evals, vecs = np.linalg.eigh(unfolding @ unfolding.T)
        factors.append(vecs[:, np.argsort(evals)[::-1][:ranks[mode - 1]]])
    core = t
    for mode, u in zip((1, 2, 3), factors):
        core = mode_product(core, u.T, mode)
    recon = core
    for mode, u in zip((1, 2, 3), factors):
        recon = mode_product(recon, u, mode)
    return float(np.linalg.norm(t - recon))


def test_hosvd_full_rank_exact():
    rng = np.random.default_rng(21)
    t = rng.standard_normal((4, 5, 3))
    model = hosvd(t, (4, 5, 3), seed=0)
    assert model.core.shape == (4, 5, 3)
    for u in model.factors:
        assert np.allclose(u.T @ u, np.eye(u.shape[1]), atol=1e-10)
    assert np.linalg.norm(tucker_reconstruct(model) - t) <= \
        1e-8 * np.linalg.norm(t)


def test_hosvd_truncated_tracks_oracle():
    rng = np.random.default_rng(22)
    t = rng.standard_normal((6, 7, 4))
    ranks = (3, 4, 2)
    model = hosvd(t, ranks, seed=5)
    err = float(np.linalg.norm(t - tucker_reconstruct(model)))
    assert err <= oracle_hosvd_error(t, ranks) + 1e-6


def test_hosvd_rank_above_unfolding_columns():
    # mode-1 size (6) exceeds the product of the other mode sizes (4), so
    # the factor needs completed columns; reconstruction stays exact
    rng = np.random.default_rng(23)
    t = rng.standard_normal((6, 2, 2))
    model = hosvd(t, (6, 2, 2), seed=0)
    u1 = model.factors[0]
    assert u1.shape == (6, 6)
    assert np.allclose(u1.T @ u1, np.eye(6), atol=1e-10)
    assert np.allclose(tucker_reconstruct(model), t, atol=1e-9)


def test_hosvd_validation():
    t = np.zeros((3, 3, 3))
    with pytest.raises(ValueError):
        hosvd(np.zeros((3, 3)), (1, 1, 1))
    with pytest.raises(ValueError):
        hosvd(t, (0, 1, 1))
    with pytest.raises(ValueError):
        hosvd(t, (4, 1, 1))
    with pytest.raises(ValueError, match="budget"):
        hosvd(t, (1, 1, 1), cell_budget=10)


def test_hosvd_determinism():
    rng = np.random.default_rng(24)
    t = rng.standard_normal((5, 6, 3))
    m1 = hosvd(t, (2, 3, 2), seed=7)
    m2 = hosvd(t, (2, 3, 2), seed=7)
    assert np.array_equal(m1.core, m2.core)
    for a, b in zip(m1.factors, m2.factors):
        assert np.array_equal(a, b)


def test_tucker_reconstruct_einsum_oracle():
    rng = np.random.default_rng(25)
    model = TuckerModel(
        rng.standard_normal((2, 3, 2)),
        (rng.standard_normal((4, 2)), rng.standard_normal((5, 3)),
         rng.standard_normal((3, 2))),
    )
    expect = np.einsum("abc,ia,jb,kc->ijk", model.core, *model.factors)
    assert np.allclose(tucker_reconstruct(model), expect, atol=1e-12)


def test_tucker_mode_weights():
    core = np.zeros((2, 2, 2))
    core[0, 0, 0] = 3.0
    core[1, 1, 1] = 4.0
    model = TuckerModel(core, (np.eye(2), np.eye(2), np.eye(2)))
    assert np.allclose(model.mode_weights(2), [3.0, 4.0])
    assert np.allclose(model.item_vectors(), [[3.0, 0.0], [0.0, 4.0]])


IMPUTE_CASE = np.array([
    [1.0, NAN, 3.0],
    [NAN, 2.0, 5.0],
    [4.0, NAN, NAN],
])


def test_impute_strategies():
    filled = impute_missing(IMPUTE_CASE, "item_mean")
    assert filled[1, 0] == 2.5
    assert filled[0, 1] == 2.0
    assert filled[2, 2] == 4.0
    filled = impute_missing(IMPUTE_CASE, "user_mean")
    assert filled[0, 1] == 2.0
    assert filled[1, 0] == 3.5
    assert filled[2, 1] == 4.0 and filled[2, 2] == 4.0
    filled = impute_missing(IMPUTE_CASE, "global_mean")
    assert filled[0, 1] == 3.0
    filled = impute_missing(IMPUTE_CASE, "zero")
    assert filled[0, 1] == 0.0
    for s in IMPUTE_STRATEGIES:
        out = impute_missing(IMPUTE_CASE, s)
        observed = ~np.isnan(IMPUTE_CASE)
        assert np.array_equal(out[observed], IMPUTE_CASE[observed])
        assert not np.isnan(out).any()


def test_impute_empty_column_falls_back():
    a = np.array([[1.0, NAN], [3.0, NAN]])
    assert impute_missing(a, "item_mean")[0, 1] == 2.0


def test_impute_errors():
    with pytest.raises(ValueError):
        impute_missing(IMPUTE_CASE, "median")
    with pytest.raises(ValueError):
        impute_missing(np.full((2, 2), NAN), "item_mean")
    assert np.all(impute_missing(np.full((2, 2), NAN), "zero") == 0.0)
