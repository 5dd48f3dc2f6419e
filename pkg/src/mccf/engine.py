"""Item-based neighborhood prediction and the multi-criteria pipeline.

Single-rating path: a Dataset plus a SimilarityStore predict held-out
ratings as similarity-weighted means over the target user's rated items.

Multi-criteria path (McModel): the rating tensor is imputed, factored with
a Tucker/HOSVD model (optionally mean-centered first), and per-criterion
item similarities are computed from the reconstructed slices restricted to
the observed-cell structure (or from shared latent item factors).  Criterion
predictions use the neighborhood formula over *observed* ratings; the
reconstructed tensor only fills in cells the neighborhood cannot reach.
A linear aggregation fitted on training cells maps criterion predictions
to the overall rating.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import (
    CriteriaRecord,
    CriteriaTensor,
    Dataset,
    RatingScale,
    criteria_slice,
)
from .linalg import TuckerModel, hosvd, impute_missing, tucker_reconstruct
from .similarity import (
    SIMILARITY_KINDS,
    SimilarityStore,
    item_similarity_matrix,
)

# Below this total neighbor weight a weighted mean is numerically
# meaningless and the engine reports no-prediction instead.
DENOM_EPS = 1e-12


@dataclass(frozen=True)
class NeighborhoodSpec:
    """Neighbor filter: size cap and similarity threshold.

    min_similarity=None keeps strictly positive similarities only (negative
    and zero weights are excluded); an explicit threshold keeps sims
    strictly above it, so e.g. -1.0 admits negative-similarity neighbors,
    which then enter the prediction with |sim| in the denominator.
    """

    max_neighbors: int | None = None
    min_similarity: float | None = None

    def __post_init__(self) -> None:
        if self.max_neighbors is not None and self.max_neighbors < 1:
            raise ValueError("max_neighbors must be >= 1 when bounded")


@dataclass(frozen=True)
class Prediction:
    user_id: str
    item_id: str
    value: float
    support: int


def _keep_mask(sims: np.ndarray, spec: NeighborhoodSpec) -> np.ndarray:
    threshold = 0.0 if spec.min_similarity is None else spec.min_similarity
    return ~np.isnan(sims) & (sims > threshold)


def _predict_idx(d: Dataset, sims: SimilarityStore, u: int, i: int,
                 spec: NeighborhoodSpec) -> tuple[float, int] | None:
    """(clamped value, support) for internal indices, or None."""
    rated, values = d.items_of(u)
    row = sims.values[i, rated]
    keep = _keep_mask(row, spec)
    if not keep.any():
        return None
    weights = row[keep]
    ratings = values[keep]
    if spec.max_neighbors is not None and weights.size > spec.max_neighbors:
        # stable sort on descending sim; rated is ascending-index, so ties
        # resolve to the lower item index
        order = np.argsort(-weights, kind="stable")[:spec.max_neighbors]
        weights = weights[order]
        ratings = ratings[order]
    denom = float(np.abs(weights).sum())
    if denom < DENOM_EPS:
        return None
    value = float(weights @ ratings) / denom
    return d.scale.clamp(value), int(weights.size)


def predict_single(user_id: str, item_id: str, d: Dataset,
                   sims: SimilarityStore,
                   spec: NeighborhoodSpec = NeighborhoodSpec()) -> Prediction | None:
    """Weighted-mean prediction; None when no usable neighborhood exists.

    Unknown users/items are a no-prediction (they count against coverage),
    not an error.
    """
    if not (d.has_user(user_id) and d.has_item(item_id)):
        return None
    got = _predict_idx(d, sims, d.user_index(user_id), d.item_index(item_id), spec)
    if got is None:
        return None
    return Prediction(user_id, item_id, got[0], got[1])


def predict_matrix(d: Dataset, sims: SimilarityStore,
                   spec: NeighborhoodSpec = NeighborhoodSpec()) -> np.ndarray:
    """All (user, item) predictions at once; NaN marks no-prediction.

    Only valid for unbounded neighborhoods, where the weighted sums reduce
    to two matrix products over the full similarity matrix.
    """
    if spec.max_neighbors is not None:
        raise ValueError("predict_matrix requires an unbounded neighborhood")
    s = np.where(_keep_mask(sims.values, spec), sims.values, 0.0)
    b = d.to_mask().astype(np.float64)
    r = np.nan_to_num(d.to_dense(missing=np.nan), nan=0.0)
    num = (r * b) @ s
    den = b @ np.abs(s)
    out = np.full_like(num, np.nan)
    good = den >= DENOM_EPS
    out[good] = num[good] / den[good]
    return np.clip(out, d.scale.min_value, d.scale.max_value)


def batch_predict(d: Dataset, sims: SimilarityStore,
                  users: np.ndarray, items: np.ndarray,
                  spec: NeighborhoodSpec = NeighborhoodSpec()) -> np.ndarray:
    """Predictions for parallel index arrays; NaN marks no-prediction."""
    users = np.asarray(users, dtype=np.int64)
    items = np.asarray(items, dtype=np.int64)
    if spec.max_neighbors is None:
        return predict_matrix(d, sims, spec)[users, items]
    out = np.full(users.shape, np.nan)
    for n, (u, i) in enumerate(zip(users, items)):
        got = _predict_idx(d, sims, int(u), int(i), spec)
        if got is not None:
            out[n] = got[0]
    return out


def recommend_top_n(d: Dataset, sims: SimilarityStore, user_id: str, n: int,
                    spec: NeighborhoodSpec = NeighborhoodSpec()) -> list[tuple[str, float]]:
    """Top-n unrated items by predicted rating.

    Sort is by value descending with ties broken by ascending internal item
    index; items without a prediction are left out; unknown user -> [].
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not d.has_user(user_id):
        return []
    u = d.user_index(user_id)
    rated = set(d.items_of(u)[0].tolist())
    scored: list[tuple[float, int]] = []
    for i in range(d.n_items):
        if i in rated:
            continue
        got = _predict_idx(d, sims, u, i, spec)
        if got is not None:
            scored.append((got[0], i))
    scored.sort(key=lambda t: (-t[0], t[1]))
    return [(d.item_id(i), v) for v, i in scored[:n]]


# ---- multi-criteria pipeline -----------------------------------------------


@dataclass(frozen=True)
class AggregationWeights:
    """Linear map criteria -> overall: w0 + sum(w_c * pred_c).

    fallback is set when the fit was underdetermined and equal weights
    (0, 1/k each) were substituted.
    """

    intercept: float
    weights: tuple[float, ...]
    fallback: bool = False

    def __post_init__(self) -> None:
        if not np.isfinite(self.intercept) or not np.all(np.isfinite(self.weights)):
            raise ValueError("aggregation weights must be finite")

    @property
    def k(self) -> int:
        return len(self.weights)


_RIDGE = 1e-6


def fit_aggregation(train: CriteriaTensor) -> AggregationWeights:
    """Least-squares fit of the overall on (1, criteria) over training cells.

    Normal equations with ridge damping on the Gram diagonal keep exactly
    collinear criteria solvable; fewer cells than parameters falls back to
    equal weights.
    """
    k = train.k
    cells = train.cell_matrix()
    if len(cells) < k + 1:
        return AggregationWeights(0.0, (1.0 / k,) * k, fallback=True)
    y = cells[:, 0]
    x = np.column_stack([np.ones(len(cells)), cells[:, 1:]])
    gram = x.T @ x + _RIDGE * np.eye(k + 1)
    w = np.linalg.solve(gram, x.T @ y)
    if not np.all(np.isfinite(w)):
        return AggregationWeights(0.0, (1.0 / k,) * k, fallback=True)
    return AggregationWeights(float(w[0]), tuple(float(v) for v in w[1:]))


def aggregate_overall(weights: AggregationWeights, criteria_preds,
                      scale: RatingScale) -> float:
    preds = np.asarray(criteria_preds, dtype=np.float64)
    if preds.shape != (weights.k,):
        raise ValueError(f"expected {weights.k} criterion predictions, "
                         f"got shape {preds.shape}")
    return scale.clamp(float(weights.intercept + np.dot(weights.weights, preds)))


SIM_SPACES = ("reconstructed", "latent")


@dataclass(frozen=True)
class McConfig:
    """Pipeline knobs for build_mc_model."""

    pca_option: bool = False
    sim_space: str = "latent"
    sim_kind: str = "euclidean"
    impute_strategy: str = "item_mean"
    neighborhood: NeighborhoodSpec = field(default_factory=NeighborhoodSpec)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.sim_space not in SIM_SPACES:
            raise ValueError(f"unknown sim_space {self.sim_space!r}")
        if self.sim_space == "reconstructed":
            if self.sim_kind not in SIMILARITY_KINDS or self.sim_kind == "latent_cosine":
                raise ValueError(
                    f"sim_kind {self.sim_kind!r} not usable in reconstructed space"
                )


class McModel:
    """Immutable multi-criteria model; safe for concurrent prediction."""

    def __init__(self, tensor: CriteriaTensor, ranks: tuple[int, int, int],
                 config: McConfig, tucker: TuckerModel,
                 slice_means: np.ndarray | None, denoised: np.ndarray,
                 stores: tuple[SimilarityStore, ...],
                 criteria_data: tuple[Dataset, ...],
                 aggregation: AggregationWeights):
        self.tensor = tensor
        self.ranks = ranks
        self.config = config
        self.tucker = tucker
        self.slice_means = slice_means
        self.denoised = denoised
        self.item_similarities = stores
        self.criteria_data = criteria_data
        self.aggregation = aggregation
        self.scale = tensor.scale
        self.denoised.setflags(write=False)

    @property
    def k(self) -> int:
        return self.tensor.k

    def store_for(self, c: int) -> SimilarityStore:
        """Similarity store for criterion c in 1..k (shared in latent mode)."""
        if not 1 <= c <= self.k:
            raise IndexError(f"criterion index {c} out of range 1..{self.k}")
        if len(self.item_similarities) == 1:
            return self.item_similarities[0]
        return self.item_similarities[c - 1]


def _reconstructed_slice_dataset(template: Dataset, values: np.ndarray) -> Dataset:
    """Template's observed structure with reconstructed values, clamped
    into scale since a truncated reconstruction may overshoot the bounds."""
    clamped = np.clip(values, template.scale.min_value, template.scale.max_value)
    return template.with_dense_values(clamped)


def build_mc_model(t: CriteriaTensor, ranks: tuple[int, int, int],
                   config: McConfig = McConfig()) -> McModel:
    """Impute -> (center) -> HOSVD -> reconstruct -> similarities -> weights."""
    dense = t.to_dense(missing=np.nan)
    mask = t.to_mask()

    imputed = np.empty_like(dense)
    for s in range(t.k + 1):
        imputed[:, :, s] = impute_missing(dense[:, :, s], config.impute_strategy)

    if config.pca_option:
        # center the user mode: each (item, slice) column loses its mean
        # over users, mirroring covariance-based factor extraction; the
        # means return after reconstruction
        slice_means = imputed.mean(axis=0)
        work = imputed - slice_means[None, :, :]
    else:
        slice_means = None
        work = imputed

    tucker = hosvd(work, ranks, seed=config.seed)
    recon = tucker_reconstruct(tucker)
    if slice_means is not None:
        recon = recon + slice_means[None, :, :]

    denoised = np.where(mask[:, :, None], imputed, recon)

    criteria_data = tuple(criteria_slice(t, c) for c in range(1, t.k + 1))
    if config.sim_space == "latent":
        stores = (item_similarity_matrix(criteria_data[0], "latent_cosine",
                                         model=tucker),)
    else:
        stores = tuple(
            item_similarity_matrix(
                _reconstructed_slice_dataset(criteria_data[c - 1], recon[:, :, c]),
                config.sim_kind,
            )
            for c in range(1, t.k + 1)
        )

    return McModel(t, tuple(int(r) for r in ranks), config, tucker,
                   slice_means, denoised, stores, criteria_data,
                   fit_aggregation(t))


def predict_criteria(model: McModel, user_id: str, item_id: str) -> np.ndarray | None:
    """Per-criterion predictions (clamped); None for unknown user/item.

    Criteria whose neighborhood yields nothing take the reconstructed-tensor
    value, so indexed pairs always get a full vector.
    """
    t = model.tensor
    if not (t.has_user(user_id) and t.has_item(item_id)):
        return None
    u = t.user_index(user_id)
    i = t.item_index(item_id)
    out = np.empty(model.k)
    for c in range(1, model.k + 1):
        d = model.criteria_data[c - 1]
        got = _predict_idx(d, model.store_for(c), u, i, model.config.neighborhood)
        value = got[0] if got is not None else float(model.denoised[u, i, c])
        out[c - 1] = model.scale.clamp(value)
    return out


def predict_overall(model: McModel, user_id: str, item_id: str) -> float | None:
    preds = predict_criteria(model, user_id, item_id)
    if preds is None:
        return None
    return aggregate_overall(model.aggregation, preds, model.scale)


def mc_recommend_top_n(model: McModel, user_id: str, n: int) -> list[tuple[str, float]]:
    """Top-n items the user has no training cell for, by predicted overall."""
    if n < 1:
        raise ValueError("n must be >= 1")
    t = model.tensor
    if not t.has_user(user_id):
        return []
    u = t.user_index(user_id)
    rated = set(t.cells_of(u)[0].tolist())
    scored: list[tuple[float, int]] = []
    for i in range(t.n_items):
        if i in rated:
            continue
        value = predict_overall(model, user_id, t.item_id(i))
        if value is not None:
            scored.append((value, i))
    scored.sort(key=lambda s: (-s[0], s[1]))
    return [(t.item_id(i), v) for v, i in scored[:n]]


def model_summary(model: McModel) -> str:
    """Human-readable report of the fitted model."""
    w = model.aggregation
    lines = [
        f"ranks={model.ranks[0]},{model.ranks[1]},{model.ranks[2]}",
        f"pca_option={'on' if model.config.pca_option else 'off'}",
        f"sim_space={model.config.sim_space}",
        f"sim_kind={model.config.sim_kind if model.config.sim_space == 'reconstructed' else 'latent_cosine'}",
        f"users={model.tensor.n_users}",
        f"items={model.tensor.n_items}",
        f"criteria={model.k}",
        f"cells={model.tensor.n_cells}",
        f"intercept={w.intercept:.6f}",
        "weights=" + ",".join(f"{v:.6f}" for v in w.weights),
        f"weights_fallback={'yes' if w.fallback else 'no'}",
        "similarity_pairs=" + ",".join(
            str(s.defined_count()) for s in model.item_similarities),
    ]
    return "\n".join(lines)


# ---- persistence ------------------------------------------------------------

_MODEL_MAGIC = "mccf-model"
_SCHEMA_VERSION = 1


def _write_matrix(fh, tag: str, m: np.ndarray) -> None:
    fh.write(f"{tag} {' '.join(str(d) for d in m.shape)}\n")
    for row in m.reshape(m.shape[0], -1):
        fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def save_model(model: McModel, path) -> None:
    """Versioned structured-text dump: header, factor matrices row-major,
    similarity triples, then the raw training cells."""
    cfg = model.config
    spec = cfg.neighborhood
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{_MODEL_MAGIC} {_SCHEMA_VERSION}\n")
        scale = model.scale
        labels = " ".join(scale.grade_labels) if scale.grade_labels else "-"
        fh.write(f"scale {repr(scale.min_value)} {repr(scale.max_value)} "
                 f"{scale.levels} {labels}\n")
        fh.write(f"ranks {model.ranks[0]} {model.ranks[1]} {model.ranks[2]}\n")
        fh.write(f"pca {'on' if cfg.pca_option else 'off'}\n")
        fh.write(f"sim-space {cfg.sim_space}\n")
        fh.write(f"sim-kind {cfg.sim_kind}\n")
        fh.write(f"impute {cfg.impute_strategy}\n")
        fh.write(f"seed {cfg.seed}\n")
        fh.write("neighborhood "
                 f"{spec.max_neighbors if spec.max_neighbors is not None else '-'} "
                 f"{repr(spec.min_similarity) if spec.min_similarity is not None else '-'}\n")
        w = model.aggregation
        fh.write("weights " + " ".join(
            [repr(w.intercept)] + [repr(v) for v in w.weights]
            + ["1" if w.fallback else "0"]) + "\n")
        fh.write(f"users {model.tensor.n_users}\n")
        for uid in model.tensor.user_ids:
            fh.write(uid + "\n")
        fh.write(f"items {model.tensor.n_items}\n")
        for iid in model.tensor.item_ids:
            fh.write(iid + "\n")
        for mode, factor in zip((1, 2, 3), model.tucker.factors):
            _write_matrix(fh, f"factor {mode}", factor)
        core = model.tucker.core
        fh.write(f"core {core.shape[0]} {core.shape[1]} {core.shape[2]}\n")
        for row in core.reshape(core.shape[0], -1):
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")
        if model.slice_means is not None:
            _write_matrix(fh, "means", model.slice_means)
        for idx, store in enumerate(model.item_similarities):
            triples = list(store.iter_defined())
            fh.write(f"store {idx} {store.kind} {len(triples)}\n")
            for i, j, v in triples:
                fh.write(f"{i} {j} {repr(v)}\n")
        fh.write(f"cells {model.tensor.n_cells} {model.k}\n")
        cells = model.tensor.cell_matrix()
        for row_idx, rec in enumerate(model.tensor.iter_records()):
            u = model.tensor.user_index(rec.user_id)
            i = model.tensor.item_index(rec.item_id)
            fh.write(f"{u} {i} " + " ".join(repr(float(v)) for v in cells[row_idx]) + "\n")


class ModelFormatError(ValueError):
    pass


def _expect(line: str, tag: str) -> list[str]:
    parts = line.split()
    if not parts or parts[0] != tag:
        raise ModelFormatError(f"expected {tag!r} line, got {line!r}")
    return parts[1:]


def load_model(path) -> McModel:
    """Rebuild a model from save_model output (same schema version only)."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    pos = 0

    def take() -> str:
        nonlocal pos
        if pos >= len(lines):
            raise ModelFormatError("unexpected end of model file")
        line = lines[pos]
        pos += 1
        return line

    head = take().split()
    if head[:1] != [_MODEL_MAGIC] or len(head) != 2:
        raise ModelFormatError("not a model file")
    if int(head[1]) != _SCHEMA_VERSION:
        raise ModelFormatError(f"unsupported schema version {head[1]}")

    sparts = _expect(take(), "scale")
    labels = None if sparts[3] == "-" else tuple(sparts[3:])
    scale = RatingScale(float(sparts[0]), float(sparts[1]), int(sparts[2]), labels)
    ranks = tuple(int(v) for v in _expect(take(), "ranks"))
    pca = _expect(take(), "pca")[0] == "on"
    sim_space = _expect(take(), "sim-space")[0]
    sim_kind = _expect(take(), "sim-kind")[0]
    impute = _expect(take(), "impute")[0]
    seed = int(_expect(take(), "seed")[0])
    mn, ms = _expect(take(), "neighborhood")
    neighborhood = NeighborhoodSpec(
        None if mn == "-" else int(mn),
        None if ms == "-" else float(ms),
    )
    wparts = _expect(take(), "weights")
    aggregation = AggregationWeights(
        float(wparts[0]),
        tuple(float(v) for v in wparts[1:-1]),
        fallback=wparts[-1] == "1",
    )
    config = McConfig(pca_option=pca, sim_space=sim_space, sim_kind=sim_kind,
                      impute_strategy=impute, neighborhood=neighborhood,
                      seed=seed)

    n_users = int(_expect(take(), "users")[0])
    user_ids = [take() for _ in range(n_users)]
    n_items = int(_expect(take(), "items")[0])
    item_ids = [take() for _ in range(n_items)]

    def read_matrix(tag: str, extra: str | None = None) -> np.ndarray:
        parts = _expect(take(), tag)
        if extra is not None:
            if parts[0] != extra:
                raise ModelFormatError(f"expected {tag} {extra}, got {parts}")
            parts = parts[1:]
        shape = tuple(int(v) for v in parts)
        rows = [np.array(take().split(), dtype=np.float64) for _ in range(shape[0])]
        return np.vstack(rows).reshape(shape)

    factors = tuple(read_matrix("factor", extra=str(mode)) for mode in (1, 2, 3))
    core = read_matrix("core")
    tucker = TuckerModel(core, factors)
    slice_means = read_matrix("means") if pca else None

    k = len(aggregation.weights)
    stores = []
    n_stores = 1 if sim_space == "latent" else k
    for idx in range(n_stores):
        sidx, skind, count = _expect(take(), "store")
        if int(sidx) != idx:
            raise ModelFormatError(f"store {sidx} out of order")
        values = np.full((n_items, n_items), np.nan)
        for _ in range(int(count)):
            i, j, v = take().split()
            values[int(i), int(j)] = float(v)
            values[int(j), int(i)] = float(v)
        stores.append(SimilarityStore(skind, values, tuple(item_ids)))

    n_cells, k_file = (int(v) for v in _expect(take(), "cells"))
    if k_file != k:
        raise ModelFormatError("criteria count mismatch")
    records = []
    for _ in range(n_cells):
        parts = take().split()
        u, i = int(parts[0]), int(parts[1])
        vals = [float(v) for v in parts[2:]]
        records.append(CriteriaRecord(user_ids[u], item_ids[i],
                                      tuple(vals[1:]), vals[0]))
    tensor = CriteriaTensor.from_records(records, k, scale)
    if tensor.user_ids != tuple(user_ids) or tensor.item_ids != tuple(item_ids):
        raise ModelFormatError("id maps changed across save/load")

    dense = tensor.to_dense(missing=np.nan)
    mask = tensor.to_mask()
    imputed = np.empty_like(dense)
    for s in range(k + 1):
        imputed[:, :, s] = impute_missing(dense[:, :, s], impute)
    recon = tucker_reconstruct(tucker)
    if slice_means is not None:
        recon = recon + slice_means[None, :, :]
    denoised = np.where(mask[:, :, None], imputed, recon)
    criteria_data = tuple(criteria_slice(tensor, c) for c in range(1, k + 1))
    return McModel(tensor, tuple(ranks), config, tucker, slice_means,
                   denoised, tuple(stores), criteria_data, aggregation)
