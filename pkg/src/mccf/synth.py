"""Synthetic multi-criteria rating generators for experiments and tests.

The generated tensor has planted structure: items fall into groups whose
criterion ratings are affine in a per-user taste factor, and the overall
rating is the mean of the criteria.  Same-group items carry identical
rating columns, the multilinear ranks are small and known, and the
criteria -> overall map is exactly linear, so a factorization-based
recommender should recover the noiseless data almost perfectly while a
global-mean predictor cannot.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import CriteriaRecord, CriteriaTensor, Dataset, RatingScale


@dataclass(frozen=True)
class SyntheticTensorSpec:
    """Shape and noise knobs for the planted-structure generator.

    noise_std is the per-cell Gaussian sigma applied to every slice
    (criteria and overall); 0 keeps the exact planted values.
    """

    n_users: int = 60
    n_items: int = 24
    n_groups: int = 4
    n_criteria: int = 3
    noise_std: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_users < 2 or self.n_items < 2:
            raise ValueError("need at least 2 users and 2 items")
        if not 1 <= self.n_groups <= self.n_items:
            raise ValueError("n_groups must be in 1..n_items")
        if self.n_criteria < 1:
            raise ValueError("n_criteria must be positive")
        if self.noise_std < 0:
            raise ValueError("noise_std must be non-negative")

    @property
    def ranks(self) -> tuple[int, int, int]:
        """Multilinear ranks sufficient to represent the noiseless tensor."""
        return (2, self.n_groups, min(self.n_criteria + 1, 2 * self.n_groups))


SYNTH_SCALE = RatingScale.one_to_five()


def item_group(item_idx: int, spec: SyntheticTensorSpec) -> int:
    return item_idx % spec.n_groups


def generate_tensor(spec: SyntheticTensorSpec) -> CriteriaTensor:
    """Fully observed tensor of shape (n_users, n_items, n_criteria + 1).

    Cell (u, i, c) = base[g(i), c] + gain[g(i), c] * taste[u] with taste
    in [0, 1]; overall = mean over criteria.  Noiseless values lie inside
    [1.5, 5.0] by construction; with noise, values are clamped to the
    1-5 scale.
    """
    rng = np.random.default_rng(spec.seed)
    taste = rng.uniform(0.0, 1.0, size=spec.n_users)
    base = rng.uniform(1.5, 3.5, size=(spec.n_groups, spec.n_criteria))
    gain = rng.uniform(0.0, 1.5, size=(spec.n_groups, spec.n_criteria))

    groups = np.arange(spec.n_items) % spec.n_groups
    # crit[u, i, c] affine in taste[u]; identical columns within a group
    crit = base[groups][None, :, :] + taste[:, None, None] * gain[groups][None, :, :]
    overall = crit.mean(axis=2)
    full = np.concatenate([overall[:, :, None], crit], axis=2)

    if spec.noise_std > 0:
        full = full + rng.normal(0.0, spec.noise_std, size=full.shape)
        full = np.clip(full, SYNTH_SCALE.min_value, SYNTH_SCALE.max_value)

    records = [
        CriteriaRecord(
            f"u{u + 1}", f"i{i + 1}",
            tuple(float(x) for x in full[u, i, 1:]),
            float(full[u, i, 0]),
        )
        for u in range(spec.n_users)
        for i in range(spec.n_items)
    ]
    return CriteriaTensor.from_records(records, spec.n_criteria, SYNTH_SCALE)


def duplicate_overall_tensor(d: Dataset) -> CriteriaTensor:
    """Degenerate k=1 tensor whose single criterion repeats the overall.

    The multi-criteria pipeline run on this tensor has exactly the same
    information as the plain single-rating dataset, which makes it a
    consistency probe: predictions should agree with the plain engine.
    """
    records = [
        CriteriaRecord(rec.user_id, rec.item_id, (rec.overall,), rec.overall)
        for rec in d.iter_records()
    ]
    return CriteriaTensor.from_records(records, 1, d.scale)


def global_mean_mae(train_overall: list[float], test_overall: list[float]) -> float:
    """MAE of the predict-the-training-mean baseline."""
    if not train_overall or not test_overall:
        raise ValueError("need non-empty train and test overall ratings")
    mean = float(np.mean(train_overall))
    return float(np.mean(np.abs(np.asarray(test_overall) - mean)))
