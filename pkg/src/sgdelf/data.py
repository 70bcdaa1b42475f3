"""Sparse rating corpora: parsing, indexing, splitting, and persistence.

A rating corpus is UTF-8 text with one rating per line::

    <user> <item> <rating> [<timestamp>]

User and item identifiers are arbitrary tokens and receive dense 0-based
indices in order of first appearance; the optional fourth field is
ignored.  Blank lines and lines starting with ``#`` are skipped.  A
repeated (user, item) pair is a hard error rather than a silent
overwrite, since last-wins semantics would quietly corrupt benchmark
results.
"""

from __future__ import annotations

import math
from typing import Iterable, Iterator, NamedTuple

import numpy as np

from .errors import DataError

#: Recognised delimiter names.  ``ws`` splits on any whitespace run.
DELIMITERS = {"tab": "\t", "comma": ",", "ws": None, "colons": "::"}

_MATRIX_MAGIC = "HIDS1"


class RatingTriple(NamedTuple):
    """One known entry: dense user index, dense item index, rating value."""

    user: int
    item: int
    value: float


class SparseRatingMatrix:
    """Immutable set of known ratings with row and column position indexes.

    Ratings are stored as three aligned arrays (``users``, ``items``,
    ``values``) in insertion order.  ``row_index[u]`` and ``col_index[i]``
    hold the storage positions of user ``u``'s and item ``i``'s ratings,
    so the row (or column) position sets partition ``range(len(self))``
    exactly.  Instances are never mutated after construction and are safe
    to read from any number of threads.
    """

    def __init__(self, num_users: int, num_items: int, users, items, values,
                 user_ids: list[str] | None = None,
                 item_ids: list[str] | None = None):
        self.num_users = int(num_users)
        self.num_items = int(num_items)
        self.users = np.asarray(users, dtype=np.int64)
        self.items = np.asarray(items, dtype=np.int64)
        self.values = np.asarray(values, dtype=np.float64)
        if self.num_users < 0 or self.num_items < 0:
            raise DataError("negative matrix dimensions")
        n = len(self.values)
        if len(self.users) != n or len(self.items) != n:
            raise DataError("users, items and values must have equal length")
        if n:
            if self.users.min() < 0 or self.users.max() >= self.num_users:
                raise DataError("user index out of range")
            if self.items.min() < 0 or self.items.max() >= self.num_items:
                raise DataError("item index out of range")
            if not np.all(np.isfinite(self.values)):
                raise DataError("non-finite rating value")
            codes = self.users * self.num_items + self.items
            if len(np.unique(codes)) != n:
                raise DataError("duplicate (user, item) pair")

        self.user_ids = list(user_ids) if user_ids is not None else \
            [str(u) for u in range(self.num_users)]
        self.item_ids = list(item_ids) if item_ids is not None else \
            [str(i) for i in range(self.num_items)]
        if len(self.user_ids) != self.num_users or len(self.item_ids) != self.num_items:
            raise DataError("id map length does not match matrix dimensions")
        self.user_index = {t: k for k, t in enumerate(self.user_ids)}
        self.item_index = {t: k for k, t in enumerate(self.item_ids)}
        if len(self.user_index) != self.num_users or len(self.item_index) != self.num_items:
            raise DataError("duplicate identifier in id map")

        self.row_index = _group_positions(self.users, self.num_users)
        self.col_index = _group_positions(self.items, self.num_items)

    def __len__(self) -> int:
        return len(self.values)

    def __repr__(self) -> str:
        return (f"SparseRatingMatrix(num_users={self.num_users}, "
                f"num_items={self.num_items}, ratings={len(self)})")

    def triples(self) -> Iterator[RatingTriple]:
        """Iterate over all known entries in storage order."""
        for u, i, v in zip(self.users, self.items, self.values):
            yield RatingTriple(int(u), int(i), float(v))

    def row_ratings(self, u: int) -> list[tuple[int, float]]:
        """All (item, value) pairs of user ``u`` in storage order."""
        if not 0 <= u < self.num_users:
            raise IndexError(f"user index {u} out of range")
        pos = self.row_index[u]
        return list(zip(self.items[pos].tolist(), self.values[pos].tolist()))

    def col_ratings(self, i: int) -> list[tuple[int, float]]:
        """All (user, value) pairs of item ``i`` in storage order."""
        if not 0 <= i < self.num_items:
            raise IndexError(f"item index {i} out of range")
        pos = self.col_index[i]
        return list(zip(self.users[pos].tolist(), self.values[pos].tolist()))


def _group_positions(indices: np.ndarray, count: int) -> list[np.ndarray]:
    """Storage positions grouped by index value, preserving storage order."""
    order = np.argsort(indices, kind="stable")
    counts = np.bincount(indices, minlength=count) if len(indices) else \
        np.zeros(count, dtype=np.int64)
    return np.split(order, np.cumsum(counts)[:-1]) if count else []


def parse_ratings(lines: Iterable[str], delimiter: str = "ws") -> SparseRatingMatrix:
    """Parse a rating corpus from an iterable of text lines.

    Raises :class:`DataError` with the offending line number for malformed
    lines, non-finite ratings, and duplicate (user, item) pairs.
    """
    if delimiter not in DELIMITERS:
        raise ValueError(f"unknown delimiter {delimiter!r}; expected one of "
                         f"{sorted(DELIMITERS)}")
    sep = DELIMITERS[delimiter]
    users: list[int] = []
    items: list[int] = []
    values: list[float] = []
    user_ids: list[str] = []
    item_ids: list[str] = []
    user_index: dict[str, int] = {}
    item_index: dict[str, int] = {}
    seen: set[tuple[int, int]] = set()
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = [f.strip() for f in (line.split() if sep is None else line.split(sep))]
        if len(fields) not in (3, 4) or any(not f for f in fields[:3]):
            raise DataError(f"line {lineno}: expected 'user item rating "
                            f"[timestamp]', got {line!r}")
        try:
            value = float(fields[2])
        except ValueError:
            raise DataError(f"line {lineno}: unreadable rating {fields[2]!r}") from None
        if not math.isfinite(value):
            raise DataError(f"line {lineno}: non-finite rating {fields[2]!r}")
        u = user_index.setdefault(fields[0], len(user_ids))
        if u == len(user_ids):
            user_ids.append(fields[0])
        i = item_index.setdefault(fields[1], len(item_ids))
        if i == len(item_ids):
            item_ids.append(fields[1])
        if (u, i) in seen:
            raise DataError(f"line {lineno}: duplicate rating for user "
                            f"{fields[0]!r}, item {fields[1]!r}")
        seen.add((u, i))
        users.append(u)
        items.append(i)
        values.append(value)
    return SparseRatingMatrix(len(user_ids), len(item_ids), users, items,
                              values, user_ids, item_ids)


def load_ratings(path, delimiter: str = "ws") -> SparseRatingMatrix:
    """Read and parse a rating corpus from ``path``."""
    with open(path, "r", encoding="utf-8") as fh:
        return parse_ratings(fh, delimiter)


def density_ratio(num_ratings: int, num_users: int, num_items: int) -> float:
    """Fraction of known cells; 0.0 for a degenerate 0-sized matrix."""
    cells = num_users * num_items
    return num_ratings / cells if cells else 0.0


def density(m: SparseRatingMatrix) -> float:
    """Fraction of cells of ``m`` that are known."""
    return density_ratio(len(m), m.num_users, m.num_items)


def split(m: SparseRatingMatrix, train_fraction: float, seed: int
          ) -> tuple[SparseRatingMatrix, SparseRatingMatrix]:
    """Partition the known entries into train and test matrices.

    Storage positions are shuffled with a generator seeded by ``seed`` and
    the first ``floor(train_fraction * len(m))`` become the training half.
    Both halves keep the full dimensions and id maps, and each half keeps
    its entries in the original storage order.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must be in (0, 1), got {train_fraction}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(m))
    k = math.floor(train_fraction * len(m))
    parts = []
    for pos in (np.sort(perm[:k]), np.sort(perm[k:])):
        parts.append(SparseRatingMatrix(
            m.num_users, m.num_items,
            m.users[pos], m.items[pos], m.values[pos],
            m.user_ids, m.item_ids))
    return parts[0], parts[1]


def save_matrix(m: SparseRatingMatrix, path) -> None:
    """Write ``m`` in the canonical text format.

    Layout: a header line ``HIDS1 <num_users> <num_items> <num_ratings>``,
    one ``U<TAB><token>`` line per user and ``I<TAB><token>`` line per item
    (dense index implied by position), then one ``<u> <i> <value>`` line
    per rating.  Values carry 17 significant digits so the round trip is
    exact.
    """
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{_MATRIX_MAGIC} {m.num_users} {m.num_items} {len(m)}\n")
        for token in m.user_ids:
            fh.write(f"U\t{token}\n")
        for token in m.item_ids:
            fh.write(f"I\t{token}\n")
        for u, i, v in zip(m.users, m.items, m.values):
            fh.write(f"{u} {i} {v:.17g}\n")


def load_matrix(path) -> SparseRatingMatrix:
    """Read a matrix written by :func:`save_matrix`."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 4 or header[0] != _MATRIX_MAGIC:
            raise DataError(f"{path}: not a {_MATRIX_MAGIC} matrix file")
        try:
            num_users, num_items, n = (int(x) for x in header[1:])
        except ValueError:
            raise DataError(f"{path}: unreadable header counts") from None
        user_ids = [_read_id_line(fh, "U", path) for _ in range(num_users)]
        item_ids = [_read_id_line(fh, "I", path) for _ in range(num_items)]
        users = np.empty(n, dtype=np.int64)
        items = np.empty(n, dtype=np.int64)
        values = np.empty(n, dtype=np.float64)
        for k in range(n):
            fields = fh.readline().split()
            if len(fields) != 3:
                raise DataError(f"{path}: truncated or malformed triple section")
            users[k], items[k], values[k] = int(fields[0]), int(fields[1]), float(fields[2])
    return SparseRatingMatrix(num_users, num_items, users, items, values,
                              user_ids, item_ids)


def _read_id_line(fh, tag: str, path) -> str:
    line = fh.readline().rstrip("\n")
    if not line.startswith(tag + "\t"):
        raise DataError(f"{path}: malformed id-map line {line!r}")
    return line[2:]


def make_synthetic(num_users: int, num_items: int, rank: int, density: float,
                   noise: float, seed: int) -> SparseRatingMatrix:
    """Random low-rank rating matrix with Gaussian observation noise.

    Ground-truth factors are positive uniforms scaled so ratings land
    around 1.0, which keeps small positive factor initialisations in a
    sensible basin.
    """
    rng = np.random.default_rng(seed)
    gp = rng.uniform(0.5, 1.5, size=(num_users, rank)) / math.sqrt(rank)
    gq = rng.uniform(0.5, 1.5, size=(num_items, rank)) / math.sqrt(rank)
    n = int(round(density * num_users * num_items))
    cells = rng.choice(num_users * num_items, size=n, replace=False)
    users = cells // num_items
    items = cells % num_items
    values = np.einsum("ij,ij->i", gp[users], gq[items])
    if noise:
        values = values + rng.normal(0.0, noise, size=n)
    return SparseRatingMatrix(num_users, num_items, users, items, values)
