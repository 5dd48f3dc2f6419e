"""Domain types for rating data.

A rating event is either a single overall rating (RatingRecord) or an
overall rating plus k per-criterion ratings (CriteriaRecord).  Datasets and
tensors store these sparsely with dense integer indices assigned to the
external user/item ids in first-appearance order, so every build from the
same record sequence is reproducible without sorting.

All container types are immutable after construction; concurrent readers
are safe.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np


class ParseError(ValueError):
    """Malformed input data; carries the 1-based line number when known."""

    def __init__(self, message: str, line_no: int | None = None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


# Worst-to-best ladder for the 13-level letter scale.  Only the endpoints
# (F=1, A+=13) are fixed by convention; the interior follows the standard
# US grade ladder, the unique 13-rung completion.
LETTER_GRADES_13 = (
    "F", "D-", "D", "D+", "C-", "C", "C+", "B-", "B", "B+", "A-", "A", "A+",
)


@dataclass(frozen=True)
class RatingScale:
    """Bounds and grade labels of a rating domain."""

    min_value: float
    max_value: float
    levels: int
    grade_labels: tuple[str, ...] | None = None

    def __post_init__(self):
        if not self.min_value < self.max_value:
            raise ValueError(
                f"min_value must be < max_value, got [{self.min_value}, {self.max_value}]"
            )
        if self.levels < 2:
            raise ValueError(f"need at least 2 levels, got {self.levels}")
        if self.grade_labels is not None:
            if len(self.grade_labels) != self.levels:
                raise ValueError(
                    f"{len(self.grade_labels)} grade labels for {self.levels} levels"
                )
            if self.levels != int(self.max_value - self.min_value + 1):
                raise ValueError("labelled scales must have unit-spaced levels")

    @classmethod
    def one_to_five(cls) -> "RatingScale":
        return cls(1.0, 5.0, 5)

    @classmethod
    def letter_13(cls) -> "RatingScale":
        return cls(1.0, 13.0, 13, LETTER_GRADES_13)

    def contains(self, value: float) -> bool:
        return self.min_value <= value <= self.max_value

    def clamp(self, value: float) -> float:
        return min(max(value, self.min_value), self.max_value)

    @property
    def span(self) -> float:
        return self.max_value - self.min_value


@dataclass(frozen=True)
class RatingRecord:
    """One (user, item, overall) event; timestamp optional."""

    user_id: str
    item_id: str
    overall: float
    timestamp: int | None = None


@dataclass(frozen=True)
class CriteriaRecord:
    """One rating event carrying k criterion ratings plus the overall."""

    user_id: str
    item_id: str
    criteria: tuple[float, ...]
    overall: float


class _IndexMap:
    """Bijection external id <-> dense index, first-appearance order."""

    __slots__ = ("ids", "pos")

    def __init__(self, ids: Sequence[str]):
        self.ids = tuple(ids)
        self.pos = {x: i for i, x in enumerate(self.ids)}
        if len(self.pos) != len(self.ids):
            raise ValueError("duplicate external id in index")

    def __len__(self) -> int:
        return len(self.ids)


def _index_records(records, scale: RatingScale):
    """Assign dense indices and deduplicate (keep-last) in one pass.

    Returns (user_map, item_map, cell_order, cell_dict, duplicates) where
    cell_dict maps (u, i) -> record and cell_order preserves first
    appearance of each cell.
    """
    users: dict[str, int] = {}
    items: dict[str, int] = {}
    cells: dict[tuple[int, int], object] = {}
    order: list[tuple[int, int]] = []
    duplicates = 0
    for rec in records:
        u = users.setdefault(rec.user_id, len(users))
        i = items.setdefault(rec.item_id, len(items))
        key = (u, i)
        if key in cells:
            duplicates += 1
        else:
            order.append(key)
        cells[key] = rec
    umap = _IndexMap(list(users))
    imap = _IndexMap(list(items))
    return umap, imap, order, cells, duplicates


class Dataset:
    """Sparse user x item matrix of overall ratings.

    Ratings are stored twice, in user-major and item-major layouts, so both
    per-user and per-item traversal are O(degree).  Values are float64 even
    for discrete scales because predictions are continuous.
    """

    def __init__(self, user_map: _IndexMap, item_map: _IndexMap,
                 u_idx: np.ndarray, i_idx: np.ndarray, values: np.ndarray,
                 scale: RatingScale, duplicates: int = 0):
        self._users = user_map
        self._items = item_map
        self.scale = scale
        self.duplicates = duplicates

        values = np.asarray(values, dtype=np.float64)
        if values.size and not (np.all(values >= scale.min_value)
                                and np.all(values <= scale.max_value)):
            raise ValueError("rating outside scale bounds")

        m, n = len(user_map), len(item_map)
        # user-major (CSR-like)
        order_u = np.lexsort((i_idx, u_idx))
        self._u_items = i_idx[order_u]
        self._u_vals = values[order_u]
        self._u_ptr = np.zeros(m + 1, dtype=np.int64)
        np.add.at(self._u_ptr, u_idx + 1, 1)
        np.cumsum(self._u_ptr, out=self._u_ptr)
        # item-major (CSC-like)
        order_i = np.lexsort((u_idx, i_idx))
        self._i_users = u_idx[order_i]
        self._i_vals = values[order_i]
        self._i_ptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(self._i_ptr, i_idx + 1, 1)
        np.cumsum(self._i_ptr, out=self._i_ptr)

        for arr in (self._u_items, self._u_vals, self._u_ptr,
                    self._i_users, self._i_vals, self._i_ptr):
            arr.setflags(write=False)

    @classmethod
    def from_records(cls, records: Iterable[RatingRecord],
                     scale: RatingScale) -> "Dataset":
        umap, imap, order, cells, dups = _index_records(records, scale)
        u_idx = np.fromiter((u for u, _ in order), dtype=np.int64, count=len(order))
        i_idx = np.fromiter((i for _, i in order), dtype=np.int64, count=len(order))
        vals = np.fromiter((cells[key].overall for key in order),
                           dtype=np.float64, count=len(order))
        return cls(umap, imap, u_idx, i_idx, vals, scale, dups)

    def with_dense_values(self, dense: np.ndarray) -> "Dataset":
        """Same observed cells and index maps, values taken from a dense
        users x items array.  Keeps similarity/prediction indices aligned
        when ratings are swapped for reconstructed ones."""
        dense = np.asarray(dense, dtype=np.float64)
        if dense.shape != (self.n_users, self.n_items):
            raise ValueError(
                f"expected shape {(self.n_users, self.n_items)}, got {dense.shape}"
            )
        u_idx = np.repeat(np.arange(self.n_users, dtype=np.int64),
                          np.diff(self._u_ptr))
        i_idx = self._u_items
        return Dataset(self._users, self._items, u_idx, i_idx,
                       dense[u_idx, i_idx], self.scale, self.duplicates)

    # ---- index bookkeeping -------------------------------------------------

    @property
    def n_users(self) -> int:
        return len(self._users)

    @property
    def n_items(self) -> int:
        return len(self._items)

    @property
    def n_ratings(self) -> int:
        return len(self._u_vals)

    def user_index(self, user_id: str) -> int:
        return self._users.pos[user_id]

    def item_index(self, item_id: str) -> int:
        return self._items.pos[item_id]

    def has_user(self, user_id: str) -> bool:
        return user_id in self._users.pos

    def has_item(self, item_id: str) -> bool:
        return item_id in self._items.pos

    def user_id(self, u: int) -> str:
        return self._users.ids[u]

    def item_id(self, i: int) -> str:
        return self._items.ids[i]

    @property
    def user_ids(self) -> tuple[str, ...]:
        return self._users.ids

    @property
    def item_ids(self) -> tuple[str, ...]:
        return self._items.ids

    # ---- traversal ---------------------------------------------------------

    def items_of(self, u: int) -> tuple[np.ndarray, np.ndarray]:
        """(item indices, ratings) for one user, ascending item index."""
        lo, hi = self._u_ptr[u], self._u_ptr[u + 1]
        return self._u_items[lo:hi], self._u_vals[lo:hi]

    def users_of(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        """(user indices, ratings) for one item, ascending user index."""
        lo, hi = self._i_ptr[i], self._i_ptr[i + 1]
        return self._i_users[lo:hi], self._i_vals[lo:hi]

    def rating(self, u: int, i: int) -> float | None:
        items, vals = self.items_of(u)
        pos = np.searchsorted(items, i)
        if pos < len(items) and items[pos] == i:
            return float(vals[pos])
        return None

    def iter_records(self) -> Iterator[RatingRecord]:
        for u in range(self.n_users):
            items, vals = self.items_of(u)
            uid = self.user_id(u)
            for i, v in zip(items, vals):
                yield RatingRecord(uid, self.item_id(int(i)), float(v))

    # ---- dense views -------------------------------------------------------

    def to_dense(self, missing: float = np.nan) -> np.ndarray:
        out = np.full((self.n_users, self.n_items), missing, dtype=np.float64)
        for u in range(self.n_users):
            items, vals = self.items_of(u)
            out[u, items] = vals
        return out

    def to_mask(self) -> np.ndarray:
        """Boolean user x item matrix of observed cells."""
        out = np.zeros((self.n_users, self.n_items), dtype=bool)
        for u in range(self.n_users):
            out[u, self.items_of(u)[0]] = True
        return out

    def user_means(self) -> np.ndarray:
        """Per-user mean over all items the user rated."""
        sums = np.add.reduceat(self._u_vals, self._u_ptr[:-1]) \
            if self.n_ratings else np.zeros(self.n_users)
        counts = np.diff(self._u_ptr)
        means = np.zeros(self.n_users)
        np.divide(sums, counts, out=means, where=counts > 0)
        return means


@dataclass(frozen=True)
class DatasetStats:
    users: int
    items: int
    ratings: int
    density: float


def dataset_stats(d: Dataset) -> DatasetStats:
    """Counts of distinct users/items/cells and fill density (0 when empty)."""
    cells = d.n_users * d.n_items
    density = d.n_ratings / cells if cells else 0.0
    return DatasetStats(d.n_users, d.n_items, d.n_ratings, density)


class CriteriaTensor:
    """Sparse user x item x (k+1) rating tensor.

    Slice 0 holds the overall rating, slices 1..k the criteria.  Every
    stored cell carries all k+1 values; partial cells are rejected at
    construction (the source data gives no semantics for them).
    """

    def __init__(self, user_map: _IndexMap, item_map: _IndexMap, k: int,
                 u_idx: np.ndarray, i_idx: np.ndarray, values: np.ndarray,
                 scale: RatingScale, duplicates: int = 0):
        if values.ndim != 2 or values.shape[1] != k + 1:
            raise ValueError(f"cell values must be (cells, {k + 1})")
        values = np.asarray(values, dtype=np.float64)
        if values.size and not (np.all(values >= scale.min_value)
                                and np.all(values <= scale.max_value)):
            raise ValueError("rating outside scale bounds")
        self._users = user_map
        self._items = item_map
        self.k = k
        self.scale = scale
        self.duplicates = duplicates

        order = np.lexsort((i_idx, u_idx))
        self._u_idx = u_idx[order]
        self._i_idx = i_idx[order]
        self._values = values[order]
        self._u_ptr = np.zeros(len(user_map) + 1, dtype=np.int64)
        np.add.at(self._u_ptr, u_idx + 1, 1)
        np.cumsum(self._u_ptr, out=self._u_ptr)
        for arr in (self._u_idx, self._i_idx, self._values, self._u_ptr):
            arr.setflags(write=False)

    @classmethod
    def from_records(cls, records: Iterable[CriteriaRecord], k: int,
                     scale: RatingScale) -> "CriteriaTensor":
        records = list(records)
        for rec in records:
            if len(rec.criteria) != k:
                raise ValueError(
                    f"record for ({rec.user_id}, {rec.item_id}) has "
                    f"{len(rec.criteria)} criteria, expected {k}"
                )
        umap, imap, order, cells, dups = _index_records(records, scale)
        u_idx = np.fromiter((u for u, _ in order), dtype=np.int64, count=len(order))
        i_idx = np.fromiter((i for _, i in order), dtype=np.int64, count=len(order))
        vals = np.empty((len(order), k + 1), dtype=np.float64)
        for row, key in enumerate(order):
            rec = cells[key]
            vals[row, 0] = rec.overall
            vals[row, 1:] = rec.criteria
        return cls(umap, imap, k, u_idx, i_idx, vals, scale, dups)

    @property
    def n_users(self) -> int:
        return len(self._users)

    @property
    def n_items(self) -> int:
        return len(self._items)

    @property
    def n_cells(self) -> int:
        return len(self._values)

    @property
    def user_ids(self) -> tuple[str, ...]:
        return self._users.ids

    @property
    def item_ids(self) -> tuple[str, ...]:
        return self._items.ids

    def user_index(self, user_id: str) -> int:
        return self._users.pos[user_id]

    def item_index(self, item_id: str) -> int:
        return self._items.pos[item_id]

    def has_user(self, user_id: str) -> bool:
        return user_id in self._users.pos

    def has_item(self, item_id: str) -> bool:
        return item_id in self._items.pos

    def user_id(self, u: int) -> str:
        return self._users.ids[u]

    def item_id(self, i: int) -> str:
        return self._items.ids[i]

    def cells_of(self, u: int) -> tuple[np.ndarray, np.ndarray]:
        """(item indices, (cells x k+1) values) for one user."""
        lo, hi = self._u_ptr[u], self._u_ptr[u + 1]
        return self._i_idx[lo:hi], self._values[lo:hi]

    def cell(self, u: int, i: int) -> np.ndarray | None:
        items, vals = self.cells_of(u)
        pos = np.searchsorted(items, i)
        if pos < len(items) and items[pos] == i:
            return vals[pos]
        return None

    def iter_records(self) -> Iterator[CriteriaRecord]:
        for row in range(self.n_cells):
            yield CriteriaRecord(
                self._users.ids[self._u_idx[row]],
                self._items.ids[self._i_idx[row]],
                tuple(self._values[row, 1:]),
                float(self._values[row, 0]),
            )

    def cell_matrix(self) -> np.ndarray:
        """Copy of all cell values, one row per cell: [overall, c1..ck]."""
        return self._values.copy()

    def _slice_dataset(self, s: int) -> Dataset:
        return Dataset(self._users, self._items,
                       self._u_idx.copy(), self._i_idx.copy(),
                       self._values[:, s].copy(), self.scale)

    def to_dense(self, missing: float = np.nan) -> np.ndarray:
        out = np.full((self.n_users, self.n_items, self.k + 1), missing)
        out[self._u_idx, self._i_idx] = self._values
        return out

    def to_mask(self) -> np.ndarray:
        out = np.zeros((self.n_users, self.n_items), dtype=bool)
        out[self._u_idx, self._i_idx] = True
        return out


def overall_slice(t: CriteriaTensor) -> Dataset:
    """Slice 0 of every cell as a Dataset with identical index maps."""
    return t._slice_dataset(0)


def criteria_slice(t: CriteriaTensor, c: int) -> Dataset:
    """Slice c (1..k) of every cell; slice 0 is the overall, not a criterion."""
    if not 1 <= c <= t.k:
        raise IndexError(f"criterion index {c} out of range 1..{t.k}")
    return t._slice_dataset(c)
