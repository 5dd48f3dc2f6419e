import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import dataset_from_dense, random_dataset
from mccf.core import CriteriaTensor, Dataset, RatingScale, overall_slice
from mccf.engine import (
    AggregationWeights,
    McConfig,
    ModelFormatError,
    NeighborhoodSpec,
    aggregate_overall,
    batch_predict,
    build_mc_model,
    fit_aggregation,
    load_model,
    mc_recommend_top_n,
    model_summary,
    predict_criteria,
    predict_matrix,
    predict_overall,
    predict_single,
    recommend_top_n,
    save_model,
)
from mccf.similarity import SimilarityStore, item_similarity_matrix
from mccf.synth import SyntheticTensorSpec, generate_tensor

NAN = np.nan


def brute_predict(d, store, uid, iid, spec):
    """Independent loop implementation of the neighborhood formula."""
    if not (d.has_user(uid) and d.has_item(iid)):
        return None
    u, i = d.user_index(uid), d.item_index(iid)
    thr = 0.0 if spec.min_similarity is None else spec.min_similarity
    cands = []
    items, vals = d.items_of(u)
    for j, r in zip(items.tolist(), vals.tolist()):
        s = store.sim(i, int(j))
        if s is not None and s > thr:
            cands.append((s, int(j), r))
    cands.sort(key=lambda t: (-t[0], t[1]))
    if spec.max_neighbors is not None:
        cands = cands[:spec.max_neighbors]
    den = sum(abs(s) for s, _, _ in cands)
    if den < 1e-12:
        return None
    val = sum(s * r for s, _, r in cands) / den
    return d.scale.clamp(val)


SPECS = [
    NeighborhoodSpec(),
    NeighborhoodSpec(max_neighbors=1),
    NeighborhoodSpec(max_neighbors=3),
    NeighborhoodSpec(min_similarity=0.4),
    NeighborhoodSpec(max_neighbors=2, min_similarity=-1.0),
]


@pytest.mark.parametrize("spec", SPECS, ids=[str(s) for s in SPECS])
def test_predictions_match_brute_force(spec):
    d = random_dataset(31, n_users=15, n_items=8)
    store = item_similarity_matrix(d, "pearson")
    for uid in d.user_ids:
        for iid in d.item_ids:
            expect = brute_predict(d, store, uid, iid, spec)
            got = predict_single(uid, iid, d, store, spec)
            if expect is None:
                assert got is None
            else:
                assert got.value == pytest.approx(expect, abs=1e-10)
                assert got.user_id == uid and got.item_id == iid
                assert got.support >= 1


def test_predict_matrix_matches_per_pair():
    d = random_dataset(32, n_users=12, n_items=7)
    store = item_similarity_matrix(d, "euclidean")
    pm = predict_matrix(d, store)
    spec = NeighborhoodSpec()
    for u, uid in enumerate(d.user_ids):
        for i, iid in enumerate(d.item_ids):
            got = predict_single(uid, iid, d, store, spec)
            if got is None:
                assert np.isnan(pm[u, i])
            else:
                assert pm[u, i] == pytest.approx(got.value, abs=1e-10)
    with pytest.raises(ValueError):
        predict_matrix(d, store, NeighborhoodSpec(max_neighbors=5))


def test_batch_predict_both_paths():
    d = random_dataset(33, n_users=10, n_items=6)
    store = item_similarity_matrix(d, "tanimoto")
    users = np.array([0, 3, 7, 9])
    items = np.array([1, 5, 0, 2])
    for spec in (NeighborhoodSpec(), NeighborhoodSpec(max_neighbors=2)):
        out = batch_predict(d, store, users, items, spec)
        for n, (u, i) in enumerate(zip(users, items)):
            expect = brute_predict(d, store, d.user_id(u), d.item_id(i), spec)
            if expect is None:
                assert np.isnan(out[n])
            else:
                assert out[n] == pytest.approx(expect, abs=1e-10)


def test_unknown_ids_are_no_prediction():
    d = random_dataset(34)
    store = item_similarity_matrix(d, "pearson")
    assert predict_single("ghost", d.item_ids[0], d, store) is None
    assert predict_single(d.user_ids[0], "ghost", d, store) is None


def test_negative_only_similarities_give_none():
    # the only defined similarity is negative; default spec excludes it
    d = dataset_from_dense(np.array([
        [5.0, 1.0, NAN],
        [1.0, 5.0, NAN],
        [4.0, 2.0, 3.0],
    ]))
    store = item_similarity_matrix(d, "pearson")
    assert store.sim(0, 1) == pytest.approx(-1.0)
    assert predict_single("u0", "i2", d, store) is None
    # an explicit threshold below -1 admits them, weighted by |sim|
    got = predict_single("u2", "i2", d, store, NeighborhoodSpec(min_similarity=-1.5))
    assert got is None or got.value >= 1.0    # i2 has no defined sims at all


@settings(deadline=None, max_examples=30)
@given(st.integers(0, 10 ** 6))
def test_predictions_stay_in_scale(seed):
    d = random_dataset(seed, n_users=10, n_items=6)
    store = item_similarity_matrix(d, "euclidean")
    pm = predict_matrix(d, store)
    finite = pm[~np.isnan(pm)]
    assert np.all(finite >= 1.0) and np.all(finite <= 5.0)


def test_neighbor_tie_breaks_prefer_lower_index():
    # i3's similarity to i0/i1/i2 is identical; ratings differ per item
    store = SimilarityStore("euclidean", _tie_matrix(), ("i0", "i1", "i2", "i3"))
    d = dataset_from_dense(np.array([
        [5.0, 3.0, 1.0, NAN],
    ]))
    got = predict_single("u0", "i3", d, store, NeighborhoodSpec(max_neighbors=1))
    assert got.value == 5.0    # ties keep the lowest item index


def _tie_matrix():
    values = np.full((4, 4), NAN)
    for i in range(3):
        values[i, 3] = values[3, i] = 0.5
    return values


def test_recommend_excludes_rated_and_orders():
    d = dataset_from_dense(np.array([
        [5.0, NAN, NAN, NAN],
        [4.0, 5.0, 3.0, 5.0],
    ]))
    store = SimilarityStore("euclidean", _tie_matrix_full(), d.item_ids)
    top = recommend_top_n(d, store, "u0", 4)
    items = [item for item, _ in top]
    assert "i0" not in items
    values = [v for _, v in top]
    assert values == sorted(values, reverse=True)
    # equal predicted values fall back to ascending item index
    tied = [item for item, v in top if v == max(values)]
    assert tied == sorted(tied)
    assert recommend_top_n(d, store, "ghost", 3) == []
    with pytest.raises(ValueError):
        recommend_top_n(d, store, "u0", 0)


def _tie_matrix_full():
    values = np.full((4, 4), 0.5)
    np.fill_diagonal(values, NAN)
    return values


def test_neighborhood_spec_validation():
    with pytest.raises(ValueError):
        NeighborhoodSpec(max_neighbors=0)
    NeighborhoodSpec(max_neighbors=None)


def test_aggregation_weights_validation():
    with pytest.raises(ValueError):
        AggregationWeights(float("nan"), (1.0,))
    with pytest.raises(ValueError):
        AggregationWeights(0.0, (float("inf"),))
    w = AggregationWeights(0.5, (0.25, 0.75))
    assert w.k == 2


def linear_tensor(seed, w0, weights, n_users=40, n_items=12):
    """Tensor whose overall is an exact linear map of its criteria."""
    rng = np.random.default_rng(seed)
    k = len(weights)
    crit = rng.uniform(2.0, 4.0, (n_users, n_items, k))
    overall = w0 + crit @ np.asarray(weights)
    assert overall.min() >= 1.0 and overall.max() <= 5.0
    from mccf.core import CriteriaRecord
    records = [
        CriteriaRecord(f"u{u}", f"i{i}", tuple(crit[u, i]), float(overall[u, i]))
        for u in range(n_users) for i in range(n_items)
    ]
    return CriteriaTensor.from_records(records, k, RatingScale.one_to_five())


def test_fit_aggregation_recovers_linear_map():
    t = linear_tensor(40, 0.2, (0.5, 0.3, 0.4))
    w = fit_aggregation(t)
    assert not w.fallback
    assert w.intercept == pytest.approx(0.2, abs=1e-5)
    assert np.allclose(w.weights, (0.5, 0.3, 0.4), atol=1e-5)


def test_fit_aggregation_fallback_when_underdetermined():
    from mccf.core import CriteriaRecord
    records = [
        CriteriaRecord("u0", "i0", (3.0, 2.0, 4.0), 3.0),
        CriteriaRecord("u0", "i1", (1.0, 2.0, 3.0), 2.0),
    ]
    w = fit_aggregation(CriteriaTensor.from_records(records, 3,
                                                    RatingScale.one_to_five()))
    assert w.fallback
    assert w.intercept == 0.0
    assert w.weights == (pytest.approx(1 / 3),) * 3


def test_aggregate_overall_clamps_and_validates():
    w = AggregationWeights(0.0, (2.0,))
    scale = RatingScale.one_to_five()
    assert aggregate_overall(w, [4.0], scale) == 5.0
    assert aggregate_overall(w, [0.4], scale) == 1.0
    with pytest.raises(ValueError):
        aggregate_overall(w, [1.0, 2.0], scale)


def test_mc_config_validation():
    with pytest.raises(ValueError):
        McConfig(sim_space="projected")
    with pytest.raises(ValueError):
        McConfig(sim_space="reconstructed", sim_kind="latent_cosine")
    with pytest.raises(ValueError):
        McConfig(sim_space="reconstructed", sim_kind="dice")
    assert McConfig().sim_space == "latent"


def small_tensor(seed=50):
    return generate_tensor(SyntheticTensorSpec(
        n_users=20, n_items=12, n_groups=3, n_criteria=2, noise_std=0.2,
        seed=seed))


def test_build_mc_model_store_layout():
    t = small_tensor()
    latent = build_mc_model(t, (2, 3, 3), McConfig(sim_space="latent", seed=1))
    assert len(latent.item_similarities) == 1
    assert latent.store_for(1) is latent.store_for(2)
    recon = build_mc_model(t, (2, 3, 3),
                           McConfig(sim_space="reconstructed",
                                    sim_kind="euclidean", seed=1))
    assert len(recon.item_similarities) == t.k
    assert recon.store_for(1) is not recon.store_for(2)
    with pytest.raises(IndexError):
        recon.store_for(0)
    with pytest.raises(IndexError):
        recon.store_for(3)


def test_denoised_preserves_observed_cells():
    t = small_tensor(51)
    model = build_mc_model(t, (2, 3, 3), McConfig(seed=3))
    from mccf.linalg import impute_missing
    dense = t.to_dense()
    mask = t.to_mask()
    for s in range(t.k + 1):
        imputed = impute_missing(dense[:, :, s], "item_mean")
        assert np.array_equal(model.denoised[:, :, s][mask], imputed[mask])


def test_predict_criteria_shape_and_bounds():
    t = small_tensor(52)
    model = build_mc_model(t, (2, 3, 3), McConfig(seed=4))
    preds = predict_criteria(model, t.user_ids[0], t.item_ids[3])
    assert preds.shape == (t.k,)
    assert np.all(preds >= 1.0) and np.all(preds <= 5.0)
    assert predict_criteria(model, "ghost", t.item_ids[0]) is None
    assert predict_overall(model, "ghost", t.item_ids[0]) is None
    value = predict_overall(model, t.user_ids[0], t.item_ids[3])
    assert 1.0 <= value <= 5.0


def test_predict_overall_is_aggregated_criteria():
    t = small_tensor(53)
    model = build_mc_model(t, (2, 3, 3), McConfig(seed=5))
    uid, iid = t.user_ids[2], t.item_ids[1]
    crits = predict_criteria(model, uid, iid)
    assert predict_overall(model, uid, iid) == pytest.approx(
        aggregate_overall(model.aggregation, crits, t.scale), abs=1e-12)


def test_unreachable_neighborhood_falls_back_to_reconstruction():
    t = small_tensor(54)
    # sims are capped at 1, so a threshold above 1 empties every neighborhood
    config = McConfig(seed=6, neighborhood=NeighborhoodSpec(min_similarity=2.0))
    model = build_mc_model(t, (2, 3, 3), config)
    u, i = 0, 0
    preds = predict_criteria(model, t.user_id(u), t.item_id(i))
    for c in range(1, t.k + 1):
        expect = t.scale.clamp(float(model.denoised[u, i, c]))
        assert preds[c - 1] == pytest.approx(expect, abs=1e-12)


def test_mc_recommend_excludes_training_cells():
    t = small_tensor(55)
    model = build_mc_model(t, (2, 3, 3), McConfig(seed=7))
    uid = t.user_ids[0]
    rated = {t.item_id(i) for i in t.cells_of(0)[0].tolist()}
    top = mc_recommend_top_n(model, uid, 5)
    assert all(item not in rated for item, _ in top)
    values = [v for _, v in top]
    assert values == sorted(values, reverse=True)
    assert mc_recommend_top_n(model, "ghost", 5) == []


def test_model_summary_fields():
    t = small_tensor(56)
    model = build_mc_model(t, (2, 3, 3), McConfig(seed=8))
    text = model_summary(model)
    for key in ("ranks=", "pca_option=", "sim_space=", "users=", "items=",
                "criteria=", "intercept=", "weights="):
        assert key in text


def test_save_load_roundtrip(tmp_path):
    t = small_tensor(57)
    for config in (McConfig(seed=9),
                   McConfig(sim_space="reconstructed", sim_kind="pearson",
                            pca_option=True, seed=9,
                            neighborhood=NeighborhoodSpec(max_neighbors=4))):
        model = build_mc_model(t, (2, 3, 3), config)
        p = tmp_path / "model.txt"
        save_model(model, p)
        back = load_model(p)
        assert model_summary(back) == model_summary(model)
        for uid in t.user_ids[:4]:
            for iid in t.item_ids[:4]:
                a = predict_overall(model, uid, iid)
                b = predict_overall(back, uid, iid)
                assert (a is None and b is None) or a == b


def test_load_rejects_corrupt_file(tmp_path):
    t = small_tensor(58)
    model = build_mc_model(t, (2, 3, 3), McConfig(seed=10))
    p = tmp_path / "model.txt"
    save_model(model, p)
    lines = p.read_text().splitlines()
    (tmp_path / "bad_magic.txt").write_text(
        "\n".join(["not-a-model 1"] + lines[1:]))
    with pytest.raises(ModelFormatError):
        load_model(tmp_path / "bad_magic.txt")
    (tmp_path / "truncated.txt").write_text("\n".join(lines[:5]))
    with pytest.raises(ModelFormatError):
        load_model(tmp_path / "truncated.txt")


def test_degenerate_single_criterion_matches_plain_cf():
    from mccf.synth import duplicate_overall_tensor
    d = random_dataset(59, n_users=15, n_items=10, fill=0.8)
    t = duplicate_overall_tensor(d)
    ranks = (t.n_users, t.n_items, 2)
    model = build_mc_model(t, ranks, McConfig(sim_space="reconstructed",
                                              sim_kind="euclidean", seed=0))
    store = item_similarity_matrix(overall_slice(t), "euclidean")
    spec = NeighborhoodSpec()
    for uid in t.user_ids:
        for iid in t.item_ids:
            mc = predict_overall(model, uid, iid)
            plain = predict_single(uid, iid, overall_slice(t), store, spec)
            if plain is None:
                continue
            assert mc == pytest.approx(plain.value, abs=1e-6)
