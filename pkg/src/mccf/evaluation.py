"""Error and decision-support metrics plus the benchmark harness.

Metric conventions:
- mae uses |p - r| (the signed mean, reported separately as ``bias``, would
  cancel over- and under-predictions and is not comparable to published
  numbers).
- precision/recall are macro-averaged over users whose test set contains at
  least one interesting item; the reported f1 is the harmonic mean of the
  two averages.
- Test pairs the engine cannot predict are excluded from mae/rmse and
  counted in no_prediction_count; prediction coverage = predicted/attempted.

The harness splits with the keyed-hash splitter from ingest (no second
source of randomness), so a (fraction, seed) pair fully determines the
partition and every report is bitwise reproducible.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import (
    CriteriaRecord,
    CriteriaTensor,
    Dataset,
    RatingRecord,
    RatingScale,
)
from .engine import (
    McConfig,
    NeighborhoodSpec,
    _predict_idx,
    aggregate_overall,
    build_mc_model,
    mc_recommend_top_n,
    predict_criteria,
    predict_matrix,
    recommend_top_n,
)
from .ingest import MOVIELENS_SCALE, SplitSpec, parse_movielens, split_train_test
from .linalg import impute_missing, truncated_svd
from .similarity import item_similarity_matrix

# CLI-facing measure names -> similarity-module kinds
SIM_NAME_MAP = {
    "pearson": "pearson",
    "euclidean": "euclidean",
    "loglikelihood": "loglikelihood",
    "tanimoto": "tanimoto",
    "adjusted-cosine": "adjusted_cosine",
    "latent": "latent_cosine",
}


def _pair_array(pairs) -> np.ndarray:
    arr = np.asarray(list(pairs) if not isinstance(pairs, np.ndarray) else pairs,
                     dtype=np.float64)
    if arr.size == 0:
        raise ValueError("need at least one (prediction, truth) pair")
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError(f"expected (n, 2) pairs, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("pairs must be finite")
    return arr


def mae(pairs) -> float:
    arr = _pair_array(pairs)
    return float(np.abs(arr[:, 0] - arr[:, 1]).mean())


def bias(pairs) -> float:
    """Mean signed error (prediction minus truth); 0 for unbiased errors."""
    arr = _pair_array(pairs)
    return float((arr[:, 0] - arr[:, 1]).mean())


def rmse(pairs) -> float:
    arr = _pair_array(pairs)
    diff = arr[:, 0] - arr[:, 1]
    return float(math.sqrt((diff * diff).mean()))


def precision_recall_f1(recommended, interesting) -> tuple[float, float, float]:
    """Set-overlap metrics; empty sets give 0 rather than an error.

    f1 uses the count form 2|∩| / (|rec| + |good|), which equals the
    harmonic mean of precision and recall but avoids its rounding (one
    integer division instead of three chained ones).
    """
    rec = set(recommended)
    good = set(interesting)
    hits = len(rec & good)
    p = hits / len(rec) if rec else 0.0
    r = hits / len(good) if good else 0.0
    denom = len(rec) + len(good)
    f1 = 2.0 * hits / denom if denom else 0.0
    return p, r, f1


def coverage(attempted: int, made: int, catalog,
             recommendable) -> tuple[float, float]:
    """(prediction coverage, catalog coverage)."""
    if attempted == 0:
        raise ValueError("no prediction attempts")
    if made > attempted:
        raise ValueError(f"made {made} predictions out of {attempted} attempts")
    cat = set(catalog)
    reachable = set(recommendable) & cat
    catalog_cov = len(reachable) / len(cat) if cat else 0.0
    return made / attempted, catalog_cov


@dataclass(frozen=True)
class RelevanceSpec:
    """Ratings at or above the threshold mark a test item as interesting."""

    threshold: float

    @classmethod
    def default_for(cls, scale: RatingScale) -> "RelevanceSpec":
        # top third of the scale: 4 on 1-5, 9 on the 13-level ladder
        return cls(float(math.ceil(scale.max_value - scale.span / 3.0)))

    def check(self, scale: RatingScale) -> "RelevanceSpec":
        if not scale.contains(self.threshold):
            raise ValueError(
                f"relevance threshold {self.threshold} outside scale "
                f"[{scale.min_value}, {scale.max_value}]"
            )
        return self


@dataclass(frozen=True)
class EvalReport:
    """One benchmark run: error metrics, decision metrics, coverage, and
    the configuration that produced them."""

    sim: str
    train_fraction: float
    seed: int
    ranks: tuple[int, int, int] | None
    mae: float
    bias: float
    rmse: float
    precision: float
    recall: float
    f1: float
    prediction_coverage: float
    catalog_coverage: float
    pair_count: int
    no_prediction_count: int
    criteria_mae: tuple[float, ...] = ()

    CSV_FIELDS = (
        "sim", "train_fraction", "seed", "ranks", "mae", "bias", "rmse",
        "precision", "recall", "f1", "prediction_coverage",
        "catalog_coverage", "pair_count", "no_prediction_count",
        "criteria_mae",
    )

    def _ranks_str(self) -> str:
        if self.ranks is None:
            return "-"
        return ",".join(str(r) for r in self.ranks)

    def to_text(self) -> str:
        """key=value lines, one metric per line."""
        lines = [
            f"sim={self.sim}",
            f"train_fraction={self.train_fraction}",
            f"seed={self.seed}",
            f"ranks={self._ranks_str()}",
            f"mae={self.mae:.6f}",
            f"bias={self.bias:.6f}",
            f"rmse={self.rmse:.6f}",
            f"precision={self.precision:.6f}",
            f"recall={self.recall:.6f}",
            f"f1={self.f1:.6f}",
            f"prediction_coverage={self.prediction_coverage:.6f}",
            f"catalog_coverage={self.catalog_coverage:.6f}",
            f"pair_count={self.pair_count}",
            f"no_prediction_count={self.no_prediction_count}",
        ]
        if self.criteria_mae:
            lines.append("criteria_mae="
                         + ";".join(f"{v:.6f}" for v in self.criteria_mae))
        return "\n".join(lines)

    @classmethod
    def csv_header(cls) -> str:
        return ",".join(cls.CSV_FIELDS)

    def to_csv_row(self) -> str:
        cells = [
            self.sim,
            f"{self.train_fraction:.4f}",
            str(self.seed),
            self._ranks_str().replace(",", ";"),
            f"{self.mae:.4f}",
            f"{self.bias:.4f}",
            f"{self.rmse:.4f}",
            f"{self.precision:.4f}",
            f"{self.recall:.4f}",
            f"{self.f1:.4f}",
            f"{self.prediction_coverage:.4f}",
            f"{self.catalog_coverage:.4f}",
            str(self.pair_count),
            str(self.no_prediction_count),
            ";".join(f"{v:.4f}" for v in self.criteria_mae),
        ]
        return ",".join(cells)


@dataclass(frozen=True)
class BenchmarkConfig:
    """Single-criterion benchmark: measure, split, and protocol knobs."""

    sim: str
    train_fraction: float
    seed: int
    top_n: int = 10
    relevance_threshold: float | None = None
    threads: int = 1
    latent_rank: int = 8
    neighborhood: NeighborhoodSpec = field(default_factory=NeighborhoodSpec)

    def __post_init__(self) -> None:
        if self.sim not in SIM_NAME_MAP:
            raise ValueError(f"unknown similarity {self.sim!r}; "
                             f"choose from {sorted(SIM_NAME_MAP)}")
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must be in (0, 1)")
        if self.top_n < 1:
            raise ValueError("top_n must be >= 1")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        if self.latent_rank < 1:
            raise ValueError("latent_rank must be >= 1")


def _split_records(records, fraction: float, seed: int):
    train_recs, test_recs = split_train_test(records, SplitSpec(fraction, seed))
    if not train_recs:
        raise ValueError("training split is empty; raise the train fraction")
    if not test_recs:
        raise ValueError("test split is empty; lower the train fraction")
    return train_recs, test_recs


def _build_store(train: Dataset, config: BenchmarkConfig):
    kind = SIM_NAME_MAP[config.sim]
    if kind != "latent_cosine":
        return item_similarity_matrix(train, kind)
    rank = min(config.latent_rank, train.n_users, train.n_items)
    imputed = impute_missing(train.to_dense(missing=np.nan), "item_mean")
    model = truncated_svd(imputed, rank, seed=config.seed)
    return item_similarity_matrix(train, "latent_cosine", model=model)


def _chunked(seq: Sequence, n_chunks: int) -> list[Sequence]:
    size = max(1, math.ceil(len(seq) / n_chunks))
    return [seq[i:i + size] for i in range(0, len(seq), size)]


def _matrix_top_n(pm: np.ndarray, train: Dataset, u: int, n: int) -> list[int]:
    """Top-n unrated item indices from a precomputed prediction matrix;
    value descending, index ascending on ties (the engine's rule)."""
    row = pm[u].copy()
    row[train.items_of(u)[0]] = np.nan
    cand = np.nonzero(~np.isnan(row))[0]
    if cand.size == 0:
        return []
    order = np.lexsort((cand, -row[cand]))
    return cand[order[:n]].tolist()


def _decision_metrics(recommendations: dict[str, list[str]],
                      interesting: dict[str, set[str]],
                      catalog, attempted: int, made: int):
    """Macro-averaged precision/recall (+f1 of the averages) and coverage."""
    precisions: list[float] = []
    recalls: list[float] = []
    recommended_union: set[str] = set()
    for uid, top in recommendations.items():
        recommended_union.update(top)
    for uid, good in interesting.items():
        if not good:
            continue
        p, r, _ = precision_recall_f1(recommendations.get(uid, []), good)
        precisions.append(p)
        recalls.append(r)
    precision = float(np.mean(precisions)) if precisions else 0.0
    recall = float(np.mean(recalls)) if recalls else 0.0
    f1 = 0.0 if precision + recall == 0 else \
        2.0 * precision * recall / (precision + recall)
    pred_cov, cat_cov = coverage(attempted, made, catalog, recommended_union)
    return precision, recall, f1, pred_cov, cat_cov


def run_benchmark(source, config: BenchmarkConfig,
                  scale: RatingScale = MOVIELENS_SCALE) -> EvalReport:
    """Split -> similarity store on train -> predict every test pair -> metrics.

    ``source`` is a ratings file path or an in-memory record sequence.
    """
    if isinstance(source, (str, Path)):
        records = parse_movielens(source)
    else:
        records = list(source)
    train_recs, test_recs = _split_records(records, config.train_fraction,
                                           config.seed)
    train = Dataset.from_records(train_recs, scale)
    sims = _build_store(train, config)
    threshold = RelevanceSpec(config.relevance_threshold).check(scale) \
        if config.relevance_threshold is not None \
        else RelevanceSpec.default_for(scale)
    spec = config.neighborhood

    known: list[tuple[int, int, float]] = []
    unknown = 0
    for rec in test_recs:
        if train.has_user(rec.user_id) and train.has_item(rec.item_id):
            known.append((train.user_index(rec.user_id),
                          train.item_index(rec.item_id), rec.overall))
        else:
            unknown += 1

    pm = predict_matrix(train, sims, spec) if spec.max_neighbors is None else None

    if pm is not None:
        preds = pm[[k[0] for k in known], [k[1] for k in known]] \
            if known else np.empty(0)
    else:
        def _chunk_predict(chunk):
            out = np.full(len(chunk), np.nan)
            for n, (u, i, _) in enumerate(chunk):
                got = _predict_idx(train, sims, u, i, spec)
                if got is not None:
                    out[n] = got[0]
            return out

        chunks = _chunked(known, config.threads)
        if config.threads > 1 and len(chunks) > 1:
            with ThreadPoolExecutor(max_workers=config.threads) as pool:
                parts = list(pool.map(_chunk_predict, chunks))
        else:
            parts = [_chunk_predict(c) for c in chunks]
        preds = np.concatenate(parts) if parts else np.empty(0)

    truths = np.asarray([k[2] for k in known], dtype=np.float64)
    made = ~np.isnan(preds)
    pair_count = int(made.sum())
    no_prediction = unknown + int((~made).sum())
    if pair_count:
        pairs = np.column_stack([preds[made], truths[made]])
        mae_v, bias_v, rmse_v = mae(pairs), bias(pairs), rmse(pairs)
    else:
        mae_v = bias_v = rmse_v = float("nan")

    # decision-support stage: per-user top-N against interesting test items
    interesting: dict[str, set[str]] = {}
    test_users: list[str] = []
    seen: set[str] = set()
    for rec in test_recs:
        if rec.user_id not in seen:
            seen.add(rec.user_id)
            test_users.append(rec.user_id)
        if rec.overall >= threshold.threshold:
            interesting.setdefault(rec.user_id, set()).add(rec.item_id)

    eval_users = [u for u in test_users if train.has_user(u)]

    def _user_top(uid: str) -> tuple[str, list[str]]:
        if pm is not None:
            idx = _matrix_top_n(pm, train, train.user_index(uid), config.top_n)
            return uid, [train.item_id(i) for i in idx]
        top = recommend_top_n(train, sims, uid, config.top_n, spec)
        return uid, [item for item, _ in top]

    if config.threads > 1 and len(eval_users) > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            rec_items = dict(pool.map(_user_top, eval_users))
    else:
        rec_items = dict(_user_top(u) for u in eval_users)

    precision, recall, f1, pred_cov, cat_cov = _decision_metrics(
        rec_items, interesting, train.item_ids, len(test_recs), pair_count)

    report_ranks = (config.latent_rank,) if config.sim == "latent" else None
    return EvalReport(
        sim=config.sim, train_fraction=config.train_fraction,
        seed=config.seed, ranks=report_ranks,
        mae=mae_v, bias=bias_v, rmse=rmse_v,
        precision=precision, recall=recall, f1=f1,
        prediction_coverage=pred_cov, catalog_coverage=cat_cov,
        pair_count=pair_count, no_prediction_count=no_prediction,
    )


def run_sweep(source, sims: Sequence[str], fractions: Sequence[float],
              seed: int, scale: RatingScale = MOVIELENS_SCALE,
              top_n: int = 10, threads: int = 1,
              relevance_threshold: float | None = None) -> list[EvalReport]:
    """Benchmark grid: one report per (measure, fraction), fixed seed."""
    if isinstance(source, (str, Path)):
        records = parse_movielens(source)
    else:
        records = list(source)
    reports = []
    for fraction in fractions:
        for sim in sims:
            config = BenchmarkConfig(
                sim=sim, train_fraction=fraction, seed=seed, top_n=top_n,
                threads=threads, relevance_threshold=relevance_threshold)
            reports.append(run_benchmark(records, config, scale))
    return reports


@dataclass(frozen=True)
class McBenchmarkConfig:
    """Multi-criteria benchmark: factorization ranks plus protocol knobs."""

    ranks: tuple[int, int, int]
    train_fraction: float
    seed: int
    pca_option: bool = False
    sim_space: str = "latent"
    sim: str = "euclidean"
    top_n: int = 10
    relevance_threshold: float | None = None
    threads: int = 1
    impute_strategy: str = "item_mean"
    neighborhood: NeighborhoodSpec = field(default_factory=NeighborhoodSpec)

    def __post_init__(self) -> None:
        if len(self.ranks) != 3 or any(r < 1 for r in self.ranks):
            raise ValueError("ranks must be three positive integers")
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must be in (0, 1)")
        if self.top_n < 1:
            raise ValueError("top_n must be >= 1")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")

    def engine_config(self) -> McConfig:
        sim_kind = SIM_NAME_MAP.get(self.sim, self.sim)
        if self.sim_space == "latent":
            sim_kind = "euclidean"  # unused placeholder; latent store rules
        return McConfig(pca_option=self.pca_option, sim_space=self.sim_space,
                        sim_kind=sim_kind, impute_strategy=self.impute_strategy,
                        neighborhood=self.neighborhood, seed=self.seed)


def run_mc_benchmark(source, config: McBenchmarkConfig,
                     k: int | None = None,
                     scale: RatingScale | None = None) -> EvalReport:
    """Multi-criteria protocol: split cells -> build McModel on the train
    tensor -> predict each held-out overall (plus per-criterion MAE).

    ``source`` is a CriteriaTensor or a CriteriaRecord sequence (with k and
    scale given).
    """
    if isinstance(source, CriteriaTensor):
        records = list(source.iter_records())
        k = source.k
        scale = source.scale
    else:
        records = list(source)
        if k is None or scale is None:
            raise ValueError("record input needs explicit k and scale")
    train_recs, test_recs = _split_records(records, config.train_fraction,
                                           config.seed)
    train = CriteriaTensor.from_records(train_recs, k, scale)
    caps = (train.n_users, train.n_items, k + 1)
    if any(r > cap for r, cap in zip(config.ranks, caps)):
        raise ValueError(f"ranks {config.ranks} exceed tensor dims {caps}")
    model = build_mc_model(train, config.ranks, config.engine_config())
    threshold = RelevanceSpec(config.relevance_threshold).check(scale) \
        if config.relevance_threshold is not None \
        else RelevanceSpec.default_for(scale)

    overall_pairs: list[tuple[float, float]] = []
    crit_pairs: list[list[tuple[float, float]]] = [[] for _ in range(k)]
    no_prediction = 0

    def _predict_record(rec: CriteriaRecord):
        crits = predict_criteria(model, rec.user_id, rec.item_id)
        if crits is None:
            return None
        return crits, aggregate_overall(model.aggregation, crits, scale)

    chunks = _chunked(test_recs, config.threads)

    def _chunk_run(chunk):
        return [_predict_record(rec) for rec in chunk]

    if config.threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            parts = list(pool.map(_chunk_run, chunks))
    else:
        parts = [_chunk_run(c) for c in chunks]

    for chunk, results in zip(chunks, parts):
        for rec, got in zip(chunk, results):
            if got is None:
                no_prediction += 1
                continue
            crits, overall = got
            overall_pairs.append((overall, rec.overall))
            for c in range(k):
                crit_pairs[c].append((crits[c], rec.criteria[c]))

    if overall_pairs:
        mae_v, bias_v, rmse_v = mae(overall_pairs), bias(overall_pairs), \
            rmse(overall_pairs)
        criteria_mae = tuple(mae(p) for p in crit_pairs)
    else:
        mae_v = bias_v = rmse_v = float("nan")
        criteria_mae = (float("nan"),) * k

    interesting: dict[str, set[str]] = {}
    test_users: list[str] = []
    seen: set[str] = set()
    for rec in test_recs:
        if rec.user_id not in seen:
            seen.add(rec.user_id)
            test_users.append(rec.user_id)
        if rec.overall >= threshold.threshold:
            interesting.setdefault(rec.user_id, set()).add(rec.item_id)
    eval_users = [u for u in test_users if train.has_user(u)]

    def _user_top(uid: str) -> tuple[str, list[str]]:
        return uid, [item for item, _ in
                     mc_recommend_top_n(model, uid, config.top_n)]

    if config.threads > 1 and len(eval_users) > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            rec_items = dict(pool.map(_user_top, eval_users))
    else:
        rec_items = dict(_user_top(u) for u in eval_users)

    precision, recall, f1, pred_cov, cat_cov = _decision_metrics(
        rec_items, interesting, train.item_ids, len(test_recs),
        len(overall_pairs))

    return EvalReport(
        sim="latent" if config.sim_space == "latent" else config.sim,
        train_fraction=config.train_fraction, seed=config.seed,
        ranks=tuple(config.ranks),
        mae=mae_v, bias=bias_v, rmse=rmse_v,
        precision=precision, recall=recall, f1=f1,
        prediction_coverage=pred_cov, catalog_coverage=cat_cov,
        pair_count=len(overall_pairs), no_prediction_count=no_prediction,
        criteria_mae=criteria_mae,
    )


def global_mean_baseline(source, fraction: float, seed: int) -> float:
    """MAE of always predicting the training mean, same split as the harness."""
    if isinstance(source, CriteriaTensor):
        records = list(source.iter_records())
    else:
        records = list(source)
    train_recs, test_recs = _split_records(records, fraction, seed)
    mean = float(np.mean([r.overall for r in train_recs]))
    return float(np.mean([abs(mean - r.overall) for r in test_recs]))
