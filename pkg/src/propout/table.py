"""The K-column proportion table (calls ``n`` over depth ``d`` per column)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Iterable, Sequence

import numpy as np

from .errors import InputError


@dataclass(frozen=True, eq=False)
class ProportionTable:
    """Columns ``(id, n, d)`` of a 2 x K table, stored as parallel arrays.

    The second row of the contingency table, ``d - n``, is never stored.
    ``meta`` optionally carries one source record per column (for example
    the parsed variant row) and is opaque to the algorithms.
    """

    ids: tuple[str, ...]
    n: np.ndarray
    d: np.ndarray
    meta: tuple[Any, ...] | None = None

    def __post_init__(self):
        ids = tuple(str(i) for i in self.ids)
        n = np.array(self.n, dtype=np.int64)
        d = np.array(self.d, dtype=np.int64)
        if n.ndim != 1 or n.shape != d.shape or len(ids) != n.size:
            raise InputError("ids, n and d must be one-dimensional and of equal length")
        if len(set(ids)) != len(ids):
            seen = set()
            dup = next(i for i in ids if i in seen or seen.add(i))
            raise InputError(f"duplicate column id {dup!r}")
        if n.size and (d.min() < 1 or n.min() < 0 or (n > d).any()):
            bad = int(np.flatnonzero((d < 1) | (n < 0) | (n > d))[0])
            raise InputError(
                f"column {ids[bad]!r}: need 0 <= n <= d and d >= 1, got n={n[bad]}, d={d[bad]}"
            )
        if self.meta is not None and len(self.meta) != len(ids):
            raise InputError("meta must have one entry per column")
        n.flags.writeable = False
        d.flags.writeable = False
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "d", d)
        if self.meta is not None:
            object.__setattr__(self, "meta", tuple(self.meta))

    @classmethod
    def from_counts(cls, n: Sequence[int], d: Sequence[int], ids: Iterable[str] | None = None):
        """Build a table, numbering columns ``"1".."K"`` when ids are omitted."""
        if ids is None:
            ids = [str(i + 1) for i in range(len(n))]
        return cls(tuple(ids), n, d)

    def __len__(self):
        return len(self.ids)

    @property
    def k(self) -> int:
        return len(self.ids)

    @property
    def proportions(self) -> np.ndarray:
        return self.n / self.d

    def contingency(self) -> np.ndarray:
        """The 2 x K table: calls in the first row, non-calls in the second."""
        return np.vstack([self.n, self.d - self.n])

    def take(self, order: Sequence[int]) -> "ProportionTable":
        order = list(order)
        meta = None if self.meta is None else [self.meta[i] for i in order]
        return ProportionTable(tuple(self.ids[i] for i in order), self.n[order], self.d[order], meta)

    def __eq__(self, other):
        if not isinstance(other, ProportionTable):
            return NotImplemented
        return (
            self.ids == other.ids
            and np.array_equal(self.n, other.n)
            and np.array_equal(self.d, other.d)
            and self.meta == other.meta
        )

    __hash__ = None

    def __repr__(self):
        return f"ProportionTable(K={self.k}, calls={int(self.n.sum())}, depth={int(self.d.sum())})"
